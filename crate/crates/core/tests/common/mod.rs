//! Deterministic property checks shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

use ivsel_core::glm::{fit_cca, fit_logistic, fit_ols, fit_poisson, RegressionSpec, SelectionSpec};
use ivsel_core::heckman::{heckman_loglik, heckman_mle, heckman_mle_with, HeckmanOptions, HeckmanParams};
use ivsel_core::mr::{ivw, tsls, wald_estimate, wald_ratio, MrColumns, VariantStats};
use ivsel_core::numkit::{expit, inverse_mills, numerical_gradient};
use ivsel_core::sim::{bundled, draw_regression, generate_mr, run_study, MrData, ScenarioConfig};
use ivsel_core::ttw::{
    implied_selection_probability, logistic_observed_logit, poisson_observed_log_mean, ttw_linear, ttw_logistic,
    ttw_loglik, ttw_poisson, TtwMode,
};
use ivsel_core::{Adjuster, Dataset, ModelKind, RngStream, SummaryStats};

pub type Check = Result<(), String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Check {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e2s(e: ivsel_core::Error) -> String {
    e.to_string()
}

pub fn scenario(name: &str, n: usize) -> ScenarioConfig {
    let mut cfg = bundled::load(name).expect("bundled scenario");
    cfg.n = n;
    cfg
}

/// Observed data of replication `seed` of a bundled regression scenario.
pub fn regression_draw(name: &str, n: usize, seed: u64) -> Dataset {
    let cfg = scenario(name, n);
    draw_regression(&cfg, &mut RngStream::new(seed, 0)).expect("draw").observed
}

/// Complete one-sample single-variant MR data.
pub fn mr_complete(n: usize, seed: u64) -> Dataset {
    let cfg = scenario("table3_y_r_one_sample", n);
    match generate_mr(&cfg, &mut RngStream::new(seed, 0)).expect("draw") {
        MrData::OneSample(d) => d.complete,
        MrData::TwoSample { .. } => unreachable!("one-sample scenario"),
    }
}

pub fn mr_columns() -> MrColumns {
    MrColumns { exposure: "x".into(), outcome: "y".into(), variants: vec!["g".into()], instruments: vec!["z".into()] }
}

/// tsls = wald = ivw point estimates with one variant, to 1e-10.
pub fn just_identified_identity() -> Check {
    let d = mr_complete(2000, 11);
    let cols = mr_columns();
    let w = wald_estimate(&d, &d, &cols, "g", Adjuster::Cca).map_err(e2s)?;
    let t = tsls(&d, &cols, Adjuster::Cca, 0, &RngStream::new(1, 0)).map_err(e2s)?;
    let x = fit_ols(&d, &RegressionSpec::new("x", &["g"]), None).map_err(e2s)?;
    let y = fit_ols(&d, &RegressionSpec::new("y", &["g"]), None).map_err(e2s)?;
    let (bx, sx) = x.get("g").map_err(e2s)?;
    let (by, sy) = y.get("g").map_err(e2s)?;
    let i = ivw(&SummaryStats::from_variants(vec![VariantStats { variant: "g".into(), bx, sx, by, sy }]))
        .map_err(e2s)?;
    let tol = 1e-10 * (1.0 + w.theta_hat.abs());
    ensure((w.theta_hat - t.theta_hat).abs() < tol && (w.theta_hat - i.theta_hat).abs() < tol, || {
        format!("wald {} tsls {} ivw {}", w.theta_hat, t.theta_hat, i.theta_hat)
    })
}

/// Heckman with ρ fixed at 0 reproduces the complete-case outcome coefficients to 1e-6.
pub fn heckman_rho_zero_is_cca() -> Check {
    let d = regression_draw("table1_baseline", 3000, 5);
    let spec = SelectionSpec::new("y", &["x"], &["z"]);
    let opts = HeckmanOptions { fix_rho: Some(0.0), ..Default::default() };
    let h = heckman_mle_with(&d, &spec, &opts).map_err(e2s)?;
    let c = fit_cca(&d, &spec.regression(), ModelKind::Linear).map_err(e2s)?;
    for (j, name) in c.names.iter().enumerate() {
        let hb = h.result.coefficient(name).ok_or_else(|| format!("no `{name}` in Heckman fit"))?;
        ensure((hb - c.estimates[j]).abs() < 1e-6, || format!("{name}: heckman {hb} vs cca {}", c.estimates[j]))?;
    }
    Ok(())
}

/// ν ≡ 1 leaves the Poisson mean at exp(xβ) whatever π is; ω = 0 does the same for the logistic model.
pub fn ttw_collapse_on(xb: f64, pi: f64) -> Check {
    let m = poisson_observed_log_mean(xb, 1.0, pi);
    let l = logistic_observed_logit(xb, 0.0, pi);
    ensure((m - xb).abs() <= 1e-12 * (1.0 + xb.abs()) && (l - xb).abs() <= 1e-12 * (1.0 + xb.abs()), || {
        format!("xb {xb}, pi {pi}: poisson {m}, logistic {l}")
    })
}

pub fn ttw_collapse() -> Check {
    for i in 0..=40 {
        for j in 1..20 {
            ttw_collapse_on(-5.0 + 0.25 * i as f64, j as f64 / 20.0)?;
        }
    }
    Ok(())
}

/// π = λ when the log-odds ratio ω is zero.
pub fn pi_equals_lambda_on(xb: f64, lambda: f64) -> Check {
    let pi = implied_selection_probability(xb, 0.0, lambda);
    ensure((pi - lambda).abs() <= 1e-14, || format!("xb {xb}, lambda {lambda}: pi {pi}"))
}

pub fn pi_equals_lambda() -> Check {
    for i in 0..=40 {
        for j in 1..20 {
            pi_equals_lambda_on(-8.0 + 0.4 * i as f64, j as f64 / 20.0)?;
        }
    }
    Ok(())
}

/// λ(x) = φ(x)/(1 − Φ(x)) is increasing and convex, with 0 < λ' < 1.
pub fn inverse_mills_shape() -> Check {
    let h = 0.01;
    let grid: Vec<f64> = (0..=3000).map(|i| -15.0 + i as f64 * h).collect();
    let v: Vec<f64> = grid.iter().map(|&x| inverse_mills(x)).collect();
    for i in 1..v.len() - 1 {
        let d1 = (v[i + 1] - v[i - 1]) / (2.0 * h);
        let d2 = v[i + 1] - 2.0 * v[i] + v[i - 1];
        ensure(v[i + 1] > v[i] && d2 > -1e-12 && d1 > 0.0 && d1 < 1.0, || {
            format!("x = {}: λ = {}, λ' = {d1}, Δ² = {d2}", grid[i], v[i])
        })?;
    }
    ensure(v.iter().zip(&grid).all(|(l, &x)| *l > x.max(0.0)), || "λ(x) ≤ max(x, 0) somewhere".into())
}

pub fn ivw_estimate(v: &[(f64, f64, f64, f64)]) -> Result<(f64, f64), String> {
    let stats = SummaryStats::from_variants(
        v.iter()
            .enumerate()
            .map(|(i, &(bx, sx, by, sy))| VariantStats { variant: format!("v{i}"), bx, sx, by, sy })
            .collect(),
    );
    ivw(&stats).map(|e| (e.theta_hat, e.se)).map_err(e2s)
}

/// IVW is unchanged by reordering variants and by flipping a variant's allele coding,
/// and scales linearly with the outcome associations.
pub fn ivw_invariances_on(v: &[(f64, f64, f64, f64)]) -> Check {
    let (t, s) = ivw_estimate(v)?;
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()));
    let mut rev = v.to_vec();
    rev.reverse();
    let (tr, sr) = ivw_estimate(&rev)?;
    ensure(close(t, tr) && close(s, sr), || format!("reorder: {t},{s} vs {tr},{sr}"))?;
    let flipped: Vec<_> =
        v.iter().enumerate().map(|(i, &(bx, sx, by, sy))| if i % 2 == 0 { (-bx, sx, -by, sy) } else { (bx, sx, by, sy) }).collect();
    let (tf, sf) = ivw_estimate(&flipped)?;
    ensure(close(t, tf) && close(s, sf), || format!("allele flip: {t},{s} vs {tf},{sf}"))?;
    let scaled: Vec<_> = v.iter().map(|&(bx, sx, by, sy)| (bx, sx, 3.0 * by, 3.0 * sy)).collect();
    let (ts, ss) = ivw_estimate(&scaled)?;
    ensure(close(3.0 * t, ts) && close(3.0 * s, ss), || format!("outcome scaling: {t},{s} vs {ts},{ss}"))
}

pub fn ivw_invariances() -> Check {
    let mut s = RngStream::new(3, 3);
    for _ in 0..200 {
        let k = 1 + s.index(12);
        let v: Vec<_> = (0..k)
            .map(|_| (0.05 + s.uniform01(), 0.01 + 0.1 * s.uniform01(), s.normal(), 0.01 + 0.1 * s.uniform01()))
            .collect();
        ivw_invariances_on(&v)?;
    }
    Ok(())
}

pub fn wald_se_bound_on(bx: f64, sx: f64, by: f64, sy: f64) -> Check {
    let e = wald_ratio(bx, sx, by, sy).map_err(e2s)?;
    ensure(e.se >= sy / bx.abs() * (1.0 - 1e-15), || format!("se {} < sy/|bx| = {}", e.se, sy / bx.abs()))
}

pub fn wald_se_bound() -> Check {
    let mut s = RngStream::new(4, 4);
    for _ in 0..1000 {
        let bx = (0.01 + s.uniform01()) * if s.uniform01() < 0.5 { -1.0 } else { 1.0 };
        wald_se_bound_on(bx, 0.2 * s.uniform01(), s.normal(), 0.001 + 0.2 * s.uniform01())?;
    }
    Ok(())
}

fn score_check(label: &str, ll: f64, grad: &[f64]) -> Check {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    ensure(norm < 1e-5 * (1.0 + ll.abs()), || format!("{label}: |score| = {norm:.3e}, loglik {ll:.3}"))
}

fn glm_loglik(d: &Dataset, beta: &[f64], logistic: bool) -> f64 {
    let (x, y, r) = (d.column("x").unwrap(), d.column("y").unwrap(), d.selected());
    (0..d.n())
        .filter(|&i| r[i])
        .map(|i| {
            let eta = beta[0] + beta[1] * x[i];
            if logistic {
                let p = expit(eta);
                y[i] * p.ln() + (1.0 - y[i]) * (1.0 - p).ln()
            } else {
                y[i] * eta - eta.exp()
            }
        })
        .sum()
}

/// Finite-difference score at every converged optimum is below 1e-5·(1 + |loglik|).
pub fn score_norms() -> Check {
    let spec = SelectionSpec::new("y", &["x"], &["z"]);
    let reg = spec.regression();
    let lin = regression_draw("table1_baseline", 3000, 21);
    let bin = regression_draw("table1_binary_outcome", 3000, 22);
    let cnt = regression_draw("table1_discrete_outcome", 3000, 23);

    let h = heckman_mle(&lin, &spec).map_err(e2s)?;
    if h.converged {
        let e = &h.estimates;
        let params = |t: &[f64]| HeckmanParams { beta: t[0..2].to_vec(), gamma: t[2..5].to_vec(), sigma1: t[5], rho: t[6] };
        let ll = heckman_loglik(&lin, &spec, &params(e)).map_err(e2s)?;
        let g = numerical_gradient(|t| heckman_loglik(&lin, &spec, &params(t)).unwrap_or(f64::NAN), e);
        score_check("heckman", ll, &g)?;
    }
    let ttw_fits = [
        ("ttw linear", &lin, ttw_linear(&lin, &spec, TtwMode::Full)),
        ("ttw logistic", &bin, ttw_logistic(&bin, &spec)),
        ("ttw poisson", &cnt, ttw_poisson(&cnt, &spec)),
    ];
    for (label, d, fit) in ttw_fits {
        let fit = fit.map_err(e2s)?;
        if !fit.converged {
            continue;
        }
        let ll = ttw_loglik(d, &spec, fit.method, &fit.estimates).map_err(e2s)?;
        let g = numerical_gradient(|t| ttw_loglik(d, &spec, fit.method, t).unwrap_or(f64::NAN), &fit.estimates);
        score_check(label, ll, &g)?;
    }
    for (label, d, logistic) in [("logistic", &bin, true), ("poisson", &cnt, false)] {
        let fit = if logistic {
            fit_logistic(d, &reg, Some(d.selected()), None)
        } else {
            fit_poisson(d, &reg, Some(d.selected()), None)
        }
        .map_err(e2s)?;
        if fit.converged {
            let ll = glm_loglik(d, &fit.estimates, logistic);
            let g = numerical_gradient(|b| glm_loglik(d, b, logistic), &fit.estimates);
            score_check(label, ll, &g)?;
        }
    }
    Ok(())
}

/// Same seed gives bit-identical reports, whatever the worker count.
pub fn bit_identical_reruns() -> Check {
    let mut cfg = scenario("table1_baseline", 400);
    cfg.replications = 6;
    let a = run_study(&cfg, &[], 1).map_err(e2s)?;
    let b = run_study(&cfg, &[], 1).map_err(e2s)?;
    let c = run_study(&cfg, &[], 3).map_err(e2s)?;
    ensure(a.same_results(&b) && a.same_results(&c), || "reports differ between identical runs".into())?;
    let mut mr = scenario("table4_tsls_y_r", 400);
    mr.replications = 2;
    mr.mr.as_mut().unwrap().bootstrap = 5;
    let a = run_study(&mr, &[Adjuster::Heckman], 1).map_err(e2s)?;
    let b = run_study(&mr, &[Adjuster::Heckman], 2).map_err(e2s)?;
    ensure(a.same_results(&b), || "bootstrap MR reports differ".into())
}

pub fn all() -> Vec<(&'static str, Check)> {
    vec![
        ("just-identified tsls = wald = ivw", just_identified_identity()),
        ("heckman rho = 0 equals cca", heckman_rho_zero_is_cca()),
        ("ttw nu = 1 / omega = 0 collapse", ttw_collapse()),
        ("inverse mills monotone and convex", inverse_mills_shape()),
        ("ivw invariances", ivw_invariances()),
        ("wald se >= sy/|bx|", wald_se_bound()),
        ("pi = lambda at omega = 0", pi_equals_lambda()),
        ("score norm at converged optima", score_norms()),
        ("bit-identical reruns", bit_identical_reruns()),
    ]
}
