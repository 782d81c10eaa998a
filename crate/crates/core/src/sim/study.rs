//! Replication engine and metric aggregation.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::glm::{
    fit_cca, fit_ipw, fit_logistic, fit_ols, fit_poisson, FitResult, ModelKind, RegressionSpec, SelectionSpec,
};
use crate::heckman::{heckman_binary_mle, heckman_two_step};
use crate::mr::{
    ivw, selection_adjusted_summary_stats, tsls, wald_estimate, Adjuster, CausalEstimate, MrColumns,
};
use crate::numkit::{RngStream, Z_975};
use crate::ttw::{ttw_linear, ttw_logistic, ttw_poisson, TtwMode};

use super::config::{MrEstimatorChoice, OutcomeFamily, ScenarioConfig, ScenarioKind};
use super::generate::{calibrate_alpha_r, draw_regression, generate_mr, variant_names, Draw, MrData};

/// Share of excluded replications above which a method's row is flagged.
const EXCLUSION_FLAG: f64 = 0.05;

/// Outcome of one method on one replication.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Replicate {
    Ok { estimate: f64, se: f64 },
    NotConverged,
    Failed,
}

/// Aggregated performance of one method.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: Adjuster,
    pub mean: Option<f64>,
    pub median: Option<f64>,
    /// Absent with fewer than two usable replications.
    pub emp_sd: Option<f64>,
    pub mean_se: Option<f64>,
    pub median_se: Option<f64>,
    pub coverage: Option<f64>,
    /// Power, or Type I error when the true value is zero.
    pub rejection_rate: Option<f64>,
    pub n_converged: usize,
    pub n_not_converged: usize,
    pub n_failed: usize,
    /// More than 5% of replications were excluded.
    pub flagged: bool,
    #[serde(skip)]
    pub replicates: Vec<Replicate>,
}

impl MethodSummary {
    fn aggregate(method: Adjuster, replicates: Vec<Replicate>, truth: f64) -> Self {
        let ok: Vec<(f64, f64)> = replicates
            .iter()
            .filter_map(|r| match *r {
                Replicate::Ok { estimate, se } => Some((estimate, se)),
                _ => None,
            })
            .collect();
        let n_not_converged = replicates.iter().filter(|r| **r == Replicate::NotConverged).count();
        let n_failed = replicates.iter().filter(|r| **r == Replicate::Failed).count();
        let m = ok.len();
        let est: Vec<f64> = ok.iter().map(|p| p.0).collect();
        let se: Vec<f64> = ok.iter().map(|p| p.1).collect();
        let frac = |pred: &dyn Fn(&(f64, f64)) -> bool| {
            (m > 0).then(|| ok.iter().filter(|p| pred(p)).count() as f64 / m as f64)
        };
        Self {
            method,
            mean: mean(&est),
            median: median(&est),
            emp_sd: sample_sd(&est),
            mean_se: mean(&se),
            median_se: median(&se),
            coverage: frac(&|&(e, s)| (e - truth).abs() <= Z_975 * s),
            rejection_rate: frac(&|&(e, s)| e.abs() > Z_975 * s),
            n_converged: m,
            n_not_converged,
            n_failed,
            flagged: (n_not_converged + n_failed) as f64 > EXCLUSION_FLAG * replicates.len() as f64,
            replicates,
        }
    }

    pub fn n_excluded(&self) -> usize {
        self.n_not_converged + self.n_failed
    }
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn median(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let k = s.len() / 2;
    Some(if s.len() % 2 == 1 { s[k] } else { 0.5 * (s[k - 1] + s[k]) })
}

fn sample_sd(v: &[f64]) -> Option<f64> {
    if v.len() < 2 {
        return None;
    }
    let m = mean(v)?;
    Some((v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt())
}

/// Results of a Monte-Carlo study.
#[derive(Debug, Clone, Serialize)]
pub struct SimulationReport {
    pub scenario: ScenarioConfig,
    /// Selection intercept used (given or calibrated).
    pub alpha_r: f64,
    pub truth: f64,
    pub replications: usize,
    pub methods: Vec<MethodSummary>,
    pub wall_clock_seconds: f64,
}

impl SimulationReport {
    pub fn method(&self, m: Adjuster) -> Option<&MethodSummary> {
        self.methods.iter().find(|s| s.method == m)
    }

    /// Equality of everything except timing.
    pub fn same_results(&self, other: &Self) -> bool {
        self.scenario == other.scenario
            && self.alpha_r.to_bits() == other.alpha_r.to_bits()
            && self.replications == other.replications
            && self.methods == other.methods
    }
}

/// Methods the scenario supports, in canonical order.
pub fn applicable_methods(cfg: &ScenarioConfig) -> Vec<Adjuster> {
    Adjuster::ALL
        .into_iter()
        .filter(|&m| !(m == Adjuster::Heckman && cfg.outcome_family == OutcomeFamily::Poisson))
        .collect()
}

fn check_methods(cfg: &ScenarioConfig, methods: &[Adjuster]) -> Result<()> {
    let ok = applicable_methods(cfg);
    if let Some(m) = methods.iter().find(|m| !ok.contains(m)) {
        return Err(Error::Config(format!(
            "`methods`: {} is not available for a {:?} outcome",
            m.as_str(),
            cfg.outcome_family
        )));
    }
    Ok(())
}

fn regression_fit(cfg: &ScenarioConfig, draw: &Draw, method: Adjuster) -> Result<FitResult> {
    let spec = RegressionSpec::new("y", &["x"]);
    let sel = SelectionSpec::new("y", &["x"], &["z"]);
    let ipw_covs = ["x".to_string()];
    let obs = &draw.observed;
    let kind = match cfg.outcome_family {
        OutcomeFamily::Linear => ModelKind::Linear,
        OutcomeFamily::Logistic => ModelKind::Logistic,
        OutcomeFamily::Poisson => ModelKind::Poisson,
    };
    match (method, cfg.outcome_family) {
        (Adjuster::Cca, _) => fit_cca(obs, &spec, kind),
        (Adjuster::Ipw, _) => fit_ipw(obs, &spec, kind, &ipw_covs),
        (Adjuster::Oracle, OutcomeFamily::Linear) => fit_ols(&draw.complete, &spec, None),
        (Adjuster::Oracle, OutcomeFamily::Logistic) => fit_logistic(&draw.complete, &spec, None, None),
        (Adjuster::Oracle, OutcomeFamily::Poisson) => fit_poisson(&draw.complete, &spec, None, None),
        (Adjuster::Heckman, OutcomeFamily::Linear) => heckman_two_step(obs, &sel),
        (Adjuster::Heckman, OutcomeFamily::Logistic) => heckman_binary_mle(obs, &sel),
        (Adjuster::Heckman, OutcomeFamily::Poisson) => {
            Err(Error::Config("Heckman selection model has no Poisson form".into()))
        }
        (Adjuster::Ttw, OutcomeFamily::Linear) => ttw_linear(obs, &sel, TtwMode::Partial),
        (Adjuster::Ttw, OutcomeFamily::Logistic) => ttw_logistic(obs, &sel),
        (Adjuster::Ttw, OutcomeFamily::Poisson) => ttw_poisson(obs, &sel),
    }
}

fn mr_fit(cfg: &ScenarioConfig, data: &MrData, method: Adjuster, stream: &RngStream) -> Result<CausalEstimate> {
    let mr = cfg.mr.as_ref().expect("validated MR config");
    let cols = MrColumns {
        exposure: "x".into(),
        outcome: "y".into(),
        variants: variant_names(mr.k),
        instruments: vec!["z".into()],
    };
    let (dx, dy) = match data {
        MrData::OneSample(d) => (d, d),
        MrData::TwoSample { exposure, outcome } => (exposure, outcome),
    };
    fn pick(d: &Draw, oracle: bool) -> &crate::data::Dataset {
        if oracle {
            &d.complete
        } else {
            &d.observed
        }
    }
    let oracle = method == Adjuster::Oracle;
    let (x, y) = (pick(dx, oracle), pick(dy, oracle));
    // One-sample designs pass the same dataset for both associations.
    let y = if std::ptr::eq(dx, dy) { x } else { y };
    match mr.estimator() {
        MrEstimatorChoice::Wald => wald_estimate(x, y, &cols, &cols.variants[0], method),
        MrEstimatorChoice::Tsls => {
            let m = if method == Adjuster::Oracle { 0 } else { mr.bootstrap };
            tsls(x, &cols, method, m, stream)
        }
        MrEstimatorChoice::Summary => ivw(&selection_adjusted_summary_stats(x, y, &cols, method)?),
    }
}

fn classify(est: f64, se: f64, converged: bool) -> Replicate {
    if converged && est.is_finite() && se.is_finite() && se > 0.0 {
        Replicate::Ok { estimate: est, se }
    } else {
        Replicate::NotConverged
    }
}

fn run_replication(cfg: &ScenarioConfig, methods: &[Adjuster], r: usize) -> Vec<Replicate> {
    let stream = RngStream::new(cfg.base_seed, r as u64);
    let mut data_stream = stream.substream(0);
    let method_stream = |m: Adjuster| {
        let slot = Adjuster::ALL.iter().position(|&a| a == m).unwrap_or(0);
        stream.substream(1 + slot as u64)
    };
    if cfg.kind == ScenarioKind::Regression {
        let Ok(draw) = draw_regression(cfg, &mut data_stream) else {
            return vec![Replicate::Failed; methods.len()];
        };
        methods
            .iter()
            .map(|&m| match regression_fit(cfg, &draw, m) {
                Ok(fit) => match fit.get("x") {
                    Ok((b, se)) => classify(b, se, fit.converged),
                    Err(_) => Replicate::Failed,
                },
                Err(_) => Replicate::Failed,
            })
            .collect()
    } else {
        let Ok(data) = generate_mr(cfg, &mut data_stream) else {
            return vec![Replicate::Failed; methods.len()];
        };
        methods
            .iter()
            .map(|&m| match mr_fit(cfg, &data, m, &method_stream(m)) {
                Ok(e) => classify(e.theta_hat, e.se, e.converged && e.se_reliable),
                Err(_) => Replicate::Failed,
            })
            .collect()
    }
}

/// Config with α_R fixed (calibrating if necessary), so replications skip calibration.
pub fn resolve(cfg: &ScenarioConfig) -> Result<ScenarioConfig> {
    cfg.validate()?;
    let mut out = cfg.clone();
    if let Some(t) = cfg.target_observed_fraction {
        out.selection.alpha_r = Some(calibrate_alpha_r(cfg, t)?);
        out.target_observed_fraction = None;
    }
    Ok(out)
}

/// Runs every replication of `cfg` on `parallelism` worker threads.
///
/// Replication r draws from stream (base_seed, r); results are reduced in index order,
/// so the report does not depend on `parallelism`. Methods default to the config's list,
/// then to all applicable methods.
pub fn run_study(cfg: &ScenarioConfig, methods: &[Adjuster], parallelism: usize) -> Result<SimulationReport> {
    let start = Instant::now();
    let methods: Vec<Adjuster> = if !methods.is_empty() {
        methods.to_vec()
    } else if !cfg.methods.is_empty() {
        cfg.methods.clone()
    } else {
        applicable_methods(cfg)
    };
    check_methods(cfg, &methods)?;
    let resolved = resolve(cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::Config(format!("`parallelism`: {e}")))?;
    let rows: Vec<Vec<Replicate>> = pool.install(|| {
        (0..cfg.replications).into_par_iter().map(|r| run_replication(&resolved, &methods, r)).collect()
    });
    let truth = cfg.truth();
    let summaries = methods
        .iter()
        .enumerate()
        .map(|(j, &m)| MethodSummary::aggregate(m, rows.iter().map(|row| row[j]).collect(), truth))
        .collect();
    Ok(SimulationReport {
        scenario: cfg.clone(),
        alpha_r: resolved.selection.alpha_r.unwrap_or(f64::NAN),
        truth,
        replications: cfg.replications,
        methods: summaries,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::bundled;

    fn small(name: &str, reps: usize, n: usize) -> ScenarioConfig {
        let mut c = bundled::load(name).unwrap();
        c.replications = reps;
        c.n = n;
        c
    }

    #[test]
    fn aggregation_of_known_values() {
        let reps = vec![
            Replicate::Ok { estimate: 0.1, se: 0.05 },
            Replicate::Ok { estimate: 0.3, se: 0.05 },
            Replicate::NotConverged,
            Replicate::Failed,
        ];
        let s = MethodSummary::aggregate(Adjuster::Cca, reps, 0.1);
        assert_eq!((s.n_converged, s.n_not_converged, s.n_failed), (2, 1, 1));
        assert!((s.mean.unwrap() - 0.2).abs() < 1e-15);
        assert!((s.median.unwrap() - 0.2).abs() < 1e-15);
        assert!((s.emp_sd.unwrap() - 0.02f64.sqrt()).abs() < 1e-15);
        assert_eq!(s.coverage, Some(0.5));
        assert_eq!(s.rejection_rate, Some(1.0));
        assert!(s.flagged);
    }

    #[test]
    fn single_replication_has_no_sd() {
        let r = run_study(&small("table1_baseline", 1, 1000), &[Adjuster::Oracle], 1).unwrap();
        let m = &r.methods[0];
        assert_eq!(m.emp_sd, None);
        assert_eq!(m.n_converged, 1);
        assert_eq!(m.mean, m.median);
    }

    #[test]
    fn parallelism_does_not_change_results() {
        let cfg = small("table1_baseline", 6, 800);
        let a = run_study(&cfg, &[], 1).unwrap();
        let b = run_study(&cfg, &[], 3).unwrap();
        assert!(a.same_results(&b));
        for m in &a.methods {
            assert_eq!(m.n_converged + m.n_excluded(), 6);
        }
    }

    #[test]
    fn heckman_rejected_for_poisson() {
        let cfg = small("table1_discrete_outcome", 2, 500);
        assert!(matches!(run_study(&cfg, &[Adjuster::Heckman], 1), Err(Error::Config(_))));
        assert!(!applicable_methods(&cfg).contains(&Adjuster::Heckman));
    }
}
