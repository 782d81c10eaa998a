mod common;

use ivsel_core::sim::{applicable_methods, bundled, run_study, with_parameter};
use ivsel_core::Adjuster;

#[test]
fn mar_scenario_leaves_cca_and_ipw_unbiased() {
    let mut cfg = common::scenario("table1_no_yr_mar", 2000);
    cfg.replications = 200;
    let r = run_study(&cfg, &[Adjuster::Cca, Adjuster::Ipw], 1).unwrap();
    for m in &r.methods {
        let (mean, sd) = (m.mean.unwrap(), m.emp_sd.unwrap());
        let mc = sd / (m.n_converged as f64).sqrt();
        assert!((mean - 0.1).abs() < 3.0 * mc, "{:?}: mean {mean}, MC SE {mc}", m.method);
    }
}

#[test]
fn mnar_baseline_biases_cca_only() {
    let mut cfg = common::scenario("table1_baseline", 3000);
    cfg.replications = 150;
    let r = run_study(&cfg, &[Adjuster::Cca, Adjuster::Heckman], 1).unwrap();
    let mc = |a: Adjuster| {
        let m = r.method(a).unwrap();
        ((m.mean.unwrap() - 0.1).abs(), m.emp_sd.unwrap() / (m.n_converged as f64).sqrt())
    };
    let (cca_bias, cca_mc) = mc(Adjuster::Cca);
    let (h_bias, h_mc) = mc(Adjuster::Heckman);
    assert!(cca_bias > 5.0 * cca_mc, "{cca_bias} vs {cca_mc}");
    assert!(h_bias < 3.0 * h_mc, "{h_bias} vs {h_mc}");
}

#[test]
fn seed_changes_results_but_parallelism_does_not() {
    let mut cfg = common::scenario("table1_binary_outcome", 600);
    cfg.replications = 5;
    let a = run_study(&cfg, &[], 1).unwrap();
    let b = run_study(&cfg, &[], 4).unwrap();
    assert!(a.same_results(&b));
    cfg.base_seed += 1;
    let c = run_study(&cfg, &[], 1).unwrap();
    assert!(!a.same_results(&c));
}

#[test]
fn every_bundled_scenario_runs_one_small_replication() {
    for name in bundled::names() {
        let mut cfg = bundled::load(name).unwrap();
        if let Some(sw) = cfg.sweep.take() {
            cfg = with_parameter(&cfg, &sw.parameter, sw.values[0]).unwrap();
        }
        cfg.n = cfg.n.min(800);
        cfg.replications = 1;
        if let Some(mr) = cfg.mr.as_mut() {
            mr.bootstrap = 3;
        }
        let methods = applicable_methods(&cfg);
        let r = run_study(&cfg, &methods, 1).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(r.methods.len(), methods.len(), "{name}");
        let oracle = r.method(Adjuster::Oracle).unwrap();
        assert_eq!(oracle.n_converged, 1, "{name}: oracle fit failed");
    }
}
