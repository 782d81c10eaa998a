//! Baseline regression fits: OLS, logistic, probit and Poisson, plus the
//! complete-case and inverse-probability-weighted estimators built on them.

mod irls;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use irls::{irls, Family, GlmFit};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numkit::{least_squares, Z_975};

/// Outcome model family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Linear,
    Logistic,
    Poisson,
}

/// Estimator identifier carried by every [`FitResult`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ols,
    Logistic,
    Probit,
    Poisson,
    Cca,
    Ipw,
    HeckmanTwoStep,
    HeckmanMle,
    HeckmanBinary,
    TtwLinear,
    TtwLogistic,
    TtwPoisson,
}

/// Outcome and covariates of a regression; an intercept is added unless disabled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionSpec {
    pub outcome: String,
    pub covariates: Vec<String>,
    #[serde(default = "default_true")]
    pub intercept: bool,
}

fn default_true() -> bool {
    true
}

impl RegressionSpec {
    pub fn new(outcome: impl Into<String>, covariates: &[&str]) -> Self {
        Self {
            outcome: outcome.into(),
            covariates: covariates.iter().map(|s| s.to_string()).collect(),
            intercept: true,
        }
    }
}

/// Outcome equation plus selection instruments for the selection-adjusted estimators.
///
/// The selection model uses `covariates` followed by `instruments`; instruments must not
/// appear among the outcome covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionSpec {
    pub outcome: String,
    pub covariates: Vec<String>,
    pub instruments: Vec<String>,
}

impl SelectionSpec {
    pub fn new(outcome: impl Into<String>, covariates: &[&str], instruments: &[&str]) -> Self {
        Self {
            outcome: outcome.into(),
            covariates: covariates.iter().map(|s| s.to_string()).collect(),
            instruments: instruments.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn selection_covariates(&self) -> Vec<String> {
        self.covariates.iter().chain(&self.instruments).cloned().collect()
    }

    pub fn regression(&self) -> RegressionSpec {
        RegressionSpec { outcome: self.outcome.clone(), covariates: self.covariates.clone(), intercept: true }
    }

    /// Checks column presence, the exclusion restriction and that instruments are fully observed.
    pub fn validate(&self, data: &Dataset) -> Result<()> {
        if self.instruments.is_empty() {
            return Err(Error::Config(
                "selection model needs at least one instrument excluded from the outcome equation".into(),
            ));
        }
        if let Some(z) = self.instruments.iter().find(|z| self.covariates.contains(z)) {
            return Err(Error::Collinearity(format!(
                "instrument `{z}` also appears among the outcome covariates"
            )));
        }
        data.column(&self.outcome)?;
        for c in self.covariates.iter().chain(&self.instruments) {
            if data.column(c)?.iter().any(|v| v.is_nan()) {
                return Err(Error::InvalidData(format!("selection covariate `{c}` has missing values")));
            }
        }
        Ok(())
    }
}

/// Estimates, standard errors and diagnostics from any estimator.
#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub method: Method,
    pub names: Vec<String>,
    pub estimates: Vec<f64>,
    pub std_errors: Vec<f64>,
    #[serde(skip)]
    pub covariance: Option<DMatrix<f64>>,
    pub loglik: Option<f64>,
    pub converged: bool,
    pub n_used: usize,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

impl FitResult {
    /// Builds a result whose standard errors are the square roots of the covariance diagonal.
    pub fn from_covariance(
        method: Method,
        names: Vec<String>,
        estimates: Vec<f64>,
        covariance: DMatrix<f64>,
        n_used: usize,
    ) -> Self {
        let std_errors = (0..estimates.len())
            .map(|j| {
                let v = covariance[(j, j)];
                if v >= 0.0 {
                    v.sqrt()
                } else {
                    f64::NAN
                }
            })
            .collect();
        Self {
            method,
            names,
            estimates,
            std_errors,
            covariance: Some(covariance),
            loglik: None,
            converged: true,
            n_used,
            iterations: 0,
            warnings: Vec::new(),
        }
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.index(name).map(|i| self.estimates[i])
    }

    pub fn std_error(&self, name: &str) -> Option<f64> {
        self.index(name).map(|i| self.std_errors[i])
    }

    /// estimate ± 1.959964·SE
    pub fn ci95(&self, name: &str) -> Option<(f64, f64)> {
        let i = self.index(name)?;
        let (b, s) = (self.estimates[i], self.std_errors[i]);
        Some((b - Z_975 * s, b + Z_975 * s))
    }

    /// Estimate and SE for `name`, or an error naming the available coefficients.
    pub fn get(&self, name: &str) -> Result<(f64, f64)> {
        self.index(name)
            .map(|i| (self.estimates[i], self.std_errors[i]))
            .ok_or_else(|| Error::MissingColumn { name: name.into(), available: self.names.clone() })
    }
}

fn rename_singular(err: Error, names: &[String]) -> Error {
    match err {
        Error::SingularDesign { column } => {
            let named = column
                .trim_start_matches('#')
                .parse::<usize>()
                .ok()
                .and_then(|j| names.get(j).cloned())
                .unwrap_or(column);
            Error::SingularDesign { column: named }
        }
        other => other,
    }
}

/// OLS with classical standard errors. `subset` restricts rows (all rows when `None`).
pub fn fit_ols(data: &Dataset, spec: &RegressionSpec, subset: Option<&[bool]>) -> Result<FitResult> {
    fit_linear(data, spec, subset, None, Method::Ols)
}

fn fit_linear(
    data: &Dataset,
    spec: &RegressionSpec,
    subset: Option<&[bool]>,
    weights: Option<&[f64]>,
    method: Method,
) -> Result<FitResult> {
    let (x, names) = data.design(&spec.covariates, spec.intercept, subset)?;
    let y = data.response(&spec.outcome, subset)?;
    let fit = least_squares(&x, &y, weights).map_err(|e| rename_singular(e, &names))?;
    let n = y.len();
    let cov = if weights.is_some() { fit.cov_sandwich } else { fit.cov_classical };
    let mut out = FitResult::from_covariance(method, names, fit.coef.iter().copied().collect(), cov, n);
    if weights.is_none() {
        let s2 = fit.weighted_rss / n as f64;
        out.loglik = Some(-0.5 * n as f64 * ((2.0 * std::f64::consts::PI * s2).ln() + 1.0));
    }
    Ok(out)
}

fn fit_irls(
    data: &Dataset,
    spec: &RegressionSpec,
    subset: Option<&[bool]>,
    weights: Option<&[f64]>,
    family: Family,
    method: Method,
) -> Result<FitResult> {
    let (x, names) = data.design(&spec.covariates, spec.intercept, subset)?;
    let y = data.response(&spec.outcome, subset)?;
    let fit = irls(&x, &y, weights, family, &names)?;
    let cov = fit.cov_sandwich.clone().unwrap_or(fit.cov_fisher);
    let mut out =
        FitResult::from_covariance(method, names, fit.coef.iter().copied().collect(), cov, y.len());
    out.loglik = Some(fit.loglik);
    out.converged = fit.converged;
    out.iterations = fit.iterations;
    if !fit.converged {
        out.warnings.push("IRLS did not converge".into());
    }
    Ok(out)
}

/// Logistic regression; with weights the covariance is the sandwich estimator.
pub fn fit_logistic(
    data: &Dataset,
    spec: &RegressionSpec,
    subset: Option<&[bool]>,
    weights: Option<&[f64]>,
) -> Result<FitResult> {
    fit_irls(data, spec, subset, weights, Family::Logistic, Method::Logistic)
}

/// Poisson log-linear regression; with weights the covariance is the sandwich estimator.
pub fn fit_poisson(
    data: &Dataset,
    spec: &RegressionSpec,
    subset: Option<&[bool]>,
    weights: Option<&[f64]>,
) -> Result<FitResult> {
    fit_irls(data, spec, subset, weights, Family::Poisson, Method::Poisson)
}

pub fn fit_probit(data: &Dataset, spec: &RegressionSpec, subset: Option<&[bool]>) -> Result<FitResult> {
    fit_irls(data, spec, subset, None, Family::Probit, Method::Probit)
}

fn fit_kind(
    data: &Dataset,
    spec: &RegressionSpec,
    kind: ModelKind,
    subset: Option<&[bool]>,
    weights: Option<&[f64]>,
    method: Method,
) -> Result<FitResult> {
    match kind {
        ModelKind::Linear => fit_linear(data, spec, subset, weights, method),
        ModelKind::Logistic => fit_irls(data, spec, subset, weights, Family::Logistic, method),
        ModelKind::Poisson => fit_irls(data, spec, subset, weights, Family::Poisson, method),
    }
}

/// Complete-case analysis: the matching fit restricted to selected rows.
pub fn fit_cca(data: &Dataset, spec: &RegressionSpec, kind: ModelKind) -> Result<FitResult> {
    let p = spec.covariates.len() + usize::from(spec.intercept);
    let have = data.n_selected();
    if have < p + 2 {
        return Err(Error::TooFewObservations { have, need: p + 2 });
    }
    fit_kind(data, spec, kind, Some(data.selected()), None, Method::Cca)
}

/// Fitted selection probabilities from a logistic model of R on `covariates`.
pub fn selection_propensity(data: &Dataset, covariates: &[String]) -> Result<Vec<f64>> {
    let (x, names) = data.design(covariates, true, None)?;
    let r = nalgebra::DVector::from_vec(data.selection_vector());
    let fit = irls(&x, &r, None, Family::Logistic, &names)?;
    Ok(fit.fitted.iter().copied().collect())
}

/// Inverse-probability-weighted fit on selected rows with HC0 sandwich SEs.
pub fn fit_ipw(
    data: &Dataset,
    spec: &RegressionSpec,
    kind: ModelKind,
    weight_covariates: &[String],
) -> Result<FitResult> {
    let mask = data.selected();
    let n_sel = data.n_selected();
    let p = spec.covariates.len() + usize::from(spec.intercept);
    if n_sel < p + 2 {
        return Err(Error::TooFewObservations { have: n_sel, need: p + 2 });
    }
    let weights: Vec<f64> = if n_sel == data.n() {
        vec![1.0; n_sel]
    } else {
        let pi = selection_propensity(data, weight_covariates)?;
        let sel: Vec<f64> = pi.iter().zip(mask).filter(|(_, &m)| m).map(|(&p, _)| p).collect();
        let min_prob = sel.iter().copied().fold(f64::INFINITY, f64::min);
        if min_prob < 1e-6 {
            return Err(Error::UnstableWeights { min_prob });
        }
        sel.iter().map(|p| 1.0 / p).collect()
    };
    fit_kind(data, spec, kind, Some(mask), Some(&weights), Method::Ipw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::RngStream;

    fn linear_data(n: usize, seed: u64) -> Dataset {
        let mut s = RngStream::new(seed, 0);
        let x = s.sample_normal(n);
        let y: Vec<f64> = x.iter().map(|v| 1.0 + 0.5 * v + s.normal()).collect();
        Dataset::complete(vec![("x".into(), x), ("y".into(), y)]).unwrap()
    }

    #[test]
    fn noiseless_ols() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 1.0 + 0.1 * v).collect();
        let d = Dataset::complete(vec![("x".into(), x), ("y".into(), y)]).unwrap();
        let f = fit_ols(&d, &RegressionSpec::new("y", &["x"]), None).unwrap();
        assert!((f.estimates[0] - 1.0).abs() < 1e-12 && (f.estimates[1] - 0.1).abs() < 1e-12);
        assert_eq!(f.names, vec!["(intercept)", "x"]);
    }

    #[test]
    fn exact_poisson_mean_structure() {
        let x: Vec<f64> = (0..40).map(|i| i as f64 * 0.25 - 5.0).collect();
        let y: Vec<f64> = x.iter().map(|v| (1.0 + 0.1 * v).exp()).collect();
        let d = Dataset::complete(vec![("x".into(), x), ("y".into(), y)]).unwrap();
        let f = fit_poisson(&d, &RegressionSpec::new("y", &["x"]), None, None).unwrap();
        assert!((f.estimates[0] - 1.0).abs() < 1e-8 && (f.estimates[1] - 0.1).abs() < 1e-8);
    }

    #[test]
    fn null_logistic() {
        let mut s = RngStream::new(5, 1);
        let n = 20_000;
        let x = s.sample_normal(n);
        let y: Vec<f64> = (0..n).map(|_| s.bernoulli(0.5)).collect();
        let d = Dataset::complete(vec![("x".into(), x), ("y".into(), y)]).unwrap();
        let f = fit_logistic(&d, &RegressionSpec::new("y", &["x"]), None, None).unwrap();
        assert!(f.converged);
        assert!(f.estimates[1].abs() < 3.0 * f.std_errors[1]);
    }

    #[test]
    fn separation_detected() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 - 9.5).collect();
        let y: Vec<f64> = x.iter().map(|&v| f64::from(v > 0.0)).collect();
        let d = Dataset::complete(vec![("x".into(), x), ("y".into(), y)]).unwrap();
        let err = fit_logistic(&d, &RegressionSpec::new("y", &["x"]), None, None).unwrap_err();
        assert!(matches!(err, Error::Separation { .. }), "{err:?}");
    }

    #[test]
    fn cca_and_ipw_on_complete_data_match_full_fit() {
        let d = linear_data(200, 3);
        let spec = RegressionSpec::new("y", &["x"]);
        let full = fit_ols(&d, &spec, None).unwrap();
        let cca = fit_cca(&d, &spec, ModelKind::Linear).unwrap();
        let ipw = fit_ipw(&d, &spec, ModelKind::Linear, &["x".into()]).unwrap();
        for j in 0..2 {
            assert_eq!(full.estimates[j], cca.estimates[j]);
            assert!((ipw.estimates[j] - cca.estimates[j]).abs() < 1e-10);
        }
    }

    #[test]
    fn singular_design_names_column() {
        let d = linear_data(30, 9);
        let x2: Vec<f64> = d.column("x").unwrap().iter().map(|v| 2.0 * v).collect();
        let d = d.with_column("x2", x2).unwrap();
        let err = fit_ols(&d, &RegressionSpec::new("y", &["x", "x2"]), None).unwrap_err();
        assert_eq!(err, Error::SingularDesign { column: "x2".into() });
    }
}
