use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ivsel(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ivsel"))
        .args(args)
        .current_dir(dir)
        .env_remove("IVSEL_SEED")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn small_config(dir: &Path, replications: usize) -> String {
    let text = ivsel_core::sim::bundled::text("table1_baseline")
        .unwrap()
        .replace("n = 10000", "n = 500")
        .replace("replications = 1000", &format!("replications = {replications}"));
    let p = dir.join("small.toml");
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn simulate_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 4);
    for (out, par) in [("a", "1"), ("b", "2")] {
        let o = ivsel(&["simulate", &cfg, "--out", out, "--methods", "cca,heckman,oracle", "--parallelism", par], dir.path());
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let a = fs::read(dir.path().join("a/table1_baseline.csv")).unwrap();
    let b = fs::read(dir.path().join("b/table1_baseline.csv")).unwrap();
    assert_eq!(a, b);
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("a/table1_baseline.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["command"], "simulate");
    assert_eq!(m["base_seed"], 2021);
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn seed_variable_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 3);
    let run = |out: &str, seed: Option<&str>| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_ivsel"));
        c.args(["simulate", &cfg, "--out", out, "--methods", "cca", "--format", "json"]).current_dir(dir.path());
        match seed {
            Some(s) => c.env("IVSEL_SEED", s),
            None => c.env_remove("IVSEL_SEED"),
        };
        let o = c.output().unwrap();
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let read = |f: &str| -> serde_json::Value {
            serde_json::from_str(&fs::read_to_string(dir.path().join(out).join(f)).unwrap()).unwrap()
        };
        (read("table1_baseline.json"), read("table1_baseline.manifest.json"))
    };
    let (r0, m0) = run("s0", None);
    let (r1, m1) = run("s1", Some("77"));
    assert_eq!(r0["schema_version"], 1);
    assert_eq!(m1["base_seed"], 77);
    assert_ne!(m0["config_hash"], m1["config_hash"]);
    assert_ne!(r0["studies"][0]["methods"][0]["mean"], r1["studies"][0]["methods"][0]["mean"]);
}

#[test]
fn exit_code_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let zero = small_config(d, 0);
    fs::write(d.join("bad.toml"), "kind = \"regression\"\nn = 100\nreplications = 5\nbogus = 1\n").unwrap();
    fs::write(d.join("data.csv"), "x,y,z\n1,2,0.5\n2,NA,1.5\n3,4,-1\n4,5,0\n5,7,2\n6,6,1\n").unwrap();
    fs::write(d.join("zero_bx.csv"), "variant,bx,sx,by,sy\nv1,0,0.1,0.2,0.05\n").unwrap();
    fs::write(d.join("file"), "").unwrap();
    let cases: &[(&[&str], i32)] = &[
        (&["simulate", &zero], 2),
        (&["simulate", "bad.toml"], 2),
        (&["simulate", "no_such_scenario"], 2),
        (&["fit", "data.csv", "--outcome", "y", "--covariates", "x"], 0),
        (&["fit", "data.csv", "--outcome", "y", "--covariates", "w"], 2),
        (&["fit", "data.csv", "--outcome", "y", "--covariates", "x", "--adjuster", "heckman"], 2),
        (&["fit", "data.csv", "--outcome", "y", "--covariates", "x", "--adjuster", "nope"], 2),
        (&["fit", "data.csv", "--outcome", "y", "--covariates", "x", "--adjuster", "oracle"], 2),
        (&["mr", "--mode", "ivw", "zero_bx.csv"], 3),
        (&["mr", "--mode", "wald", "data.csv"], 2),
        (&["simulate", "table1_baseline", "--replications", "1", "--n", "50", "--out", "file/sub"], 3),
        (&["scenarios"], 0),
        (&["frobnicate"], 2),
        (&["--help"], 0),
    ];
    for (args, want) in cases {
        let o = ivsel(args, d);
        assert_eq!(code(&o), *want, "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn config_errors_name_field_and_line() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "kind = \"regression\"\nn = 100\nreplications = 5\nbogus = 1\n").unwrap();
    let o = ivsel(&["simulate", "bad.toml"], dir.path());
    let e = stderr(&o);
    assert!(e.contains("line 4") && e.contains("bogus"), "{e}");
    let zero = small_config(dir.path(), 0);
    let e = stderr(&ivsel(&["simulate", &zero], dir.path()));
    assert!(e.contains("replications"), "{e}");
}

#[test]
fn missing_column_lists_available() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("d.csv"), "age,bmi,smoke\n1,2,3\n").unwrap();
    let o = ivsel(&["fit", "d.csv", "--outcome", "smoke", "--covariates", "weight"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("age, bmi, smoke"), "{}", stderr(&o));
}

#[test]
fn ivw_single_variant() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("s.csv"), "variant,bx,sx,by,sy\nv1,1,0.1,0.2,0.05\n").unwrap();
    let o = ivsel(&["mr", "--mode", "ivw", "s.csv", "--out", "e.json"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("e.json")).unwrap()).unwrap();
    assert_eq!(v["schema_version"], 1);
    let e = &v["estimates"][0];
    assert!((e["theta_hat"].as_f64().unwrap() - 0.2).abs() < 1e-12);
    assert!((e["se"].as_f64().unwrap() - 0.05).abs() < 1e-12);
    assert!(dir.path().join("e.manifest.json").exists());
}

#[test]
fn tsls_equals_wald_with_one_variant() {
    let dir = tempfile::tempdir().unwrap();
    let o = ivsel(&["generate", "table3_y_r_one_sample", "--n", "3000", "--complete", "--out", "m.csv"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let theta = |mode: &str| -> Vec<f64> {
        let out = format!("{mode}.json");
        let o = ivsel(
            &["mr", "--mode", mode, "m.csv", "--variants", "g", "--selection-instrument", "z", "--adjuster", "cca,ipw", "--out", &out],
            dir.path(),
        );
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join(&out)).unwrap()).unwrap();
        v["estimates"].as_array().unwrap().iter().map(|e| e["theta_hat"].as_f64().unwrap()).collect()
    };
    let (w, t) = (theta("wald"), theta("tsls"));
    for (a, b) in w.iter().zip(&t) {
        assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }
    let svg = fs::read_to_string(dir.path().join("tsls.svg")).unwrap();
    assert_eq!(svg.matches(r#"class="point""#).count(), 2);
}

#[test]
fn cca_and_ipw_agree_on_complete_data() {
    let dir = tempfile::tempdir().unwrap();
    let o = ivsel(&["generate", "table1_baseline", "--n", "500", "--complete", "--out", "c.csv"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let est = |adj: &str| -> Vec<f64> {
        let o = ivsel(
            &["fit", "c.csv", "--outcome", "y", "--covariates", "x", "--selection-instrument", "z", "--adjuster", adj],
            dir.path(),
        );
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        v["estimates"].as_array().unwrap().iter().map(|e| e.as_f64().unwrap()).collect()
    };
    let (c, i) = (est("cca"), est("ipw"));
    for (a, b) in c.iter().zip(&i) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn two_sample_generate_writes_both_samples() {
    let dir = tempfile::tempdir().unwrap();
    let o = ivsel(&["generate", "table3_x_r_two_sample", "--n", "200", "--out", "t.csv"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let x = fs::read_to_string(dir.path().join("t_exposure.csv")).unwrap();
    let y = fs::read_to_string(dir.path().join("t_outcome.csv")).unwrap();
    assert!(x.lines().next().unwrap().split(',').any(|c| c == "x"));
    assert!(y.lines().next().unwrap().split(',').any(|c| c == "y"));
    assert!(x.contains("NA") && !y.contains("NA"));
}
