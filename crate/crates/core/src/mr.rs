//! Mendelian-randomization estimators with selection adjustment: Wald ratio,
//! two-stage least squares (closed form or bootstrap) and inverse-variance weighting.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::glm::{fit_cca, fit_ipw, fit_ols, selection_propensity, FitResult, ModelKind, RegressionSpec, SelectionSpec};
use crate::heckman::{heckman_mle_with, HeckmanOptions};
use crate::numkit::{least_squares, RngStream, Z_975};
use crate::ttw::{ttw_linear, TtwMode};

/// Method used to estimate a genetic association in the presence of missing data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Adjuster {
    Cca,
    Ipw,
    Heckman,
    Ttw,
    Oracle,
}

impl Adjuster {
    pub const ALL: [Adjuster; 5] =
        [Adjuster::Cca, Adjuster::Ipw, Adjuster::Heckman, Adjuster::Ttw, Adjuster::Oracle];

    pub fn as_str(self) -> &'static str {
        match self {
            Adjuster::Cca => "cca",
            Adjuster::Ipw => "ipw",
            Adjuster::Heckman => "heckman",
            Adjuster::Ttw => "ttw",
            Adjuster::Oracle => "oracle",
        }
    }
}

impl std::str::FromStr for Adjuster {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Adjuster::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown adjuster `{s}` (expected cca, ipw, heckman, ttw or oracle)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MrEstimator {
    WaldRatio,
    Tsls,
    Ivw,
}

/// Column roles in an MR dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MrColumns {
    pub exposure: String,
    pub outcome: String,
    pub variants: Vec<String>,
    /// Instruments for selection (Z).
    pub instruments: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variable {
    Exposure,
    Outcome,
}

impl MrColumns {
    fn name(&self, v: Variable) -> &str {
        match v {
            Variable::Exposure => &self.exposure,
            Variable::Outcome => &self.outcome,
        }
    }
}

/// A genetic association estimate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Association {
    pub b: f64,
    pub se: f64,
    pub converged: bool,
    pub warnings: Vec<String>,
}

/// Causal effect estimate with its 95% interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CausalEstimate {
    pub theta_hat: f64,
    pub se: f64,
    pub ci95: (f64, f64),
    pub estimator: MrEstimator,
    pub adjuster: Option<Adjuster>,
    pub n_bootstrap: Option<usize>,
    pub converged: bool,
    pub se_reliable: bool,
    pub warnings: Vec<String>,
}

impl CausalEstimate {
    pub fn new(estimator: MrEstimator, theta_hat: f64, se: f64) -> Self {
        Self {
            theta_hat,
            se,
            ci95: (theta_hat - Z_975 * se, theta_hat + Z_975 * se),
            estimator,
            adjuster: None,
            n_bootstrap: None,
            converged: true,
            se_reliable: true,
            warnings: Vec::new(),
        }
    }

    /// Short label such as `tsls:heckman`.
    pub fn label(&self) -> String {
        let e = match self.estimator {
            MrEstimator::WaldRatio => "wald",
            MrEstimator::Tsls => "tsls",
            MrEstimator::Ivw => "ivw",
        };
        match self.adjuster {
            Some(a) => format!("{e}:{}", a.as_str()),
            None => e.to_string(),
        }
    }
}

/// Wald ratio by/bx with the second-order standard error.
pub fn wald_ratio(bx: f64, sx: f64, by: f64, sy: f64) -> Result<CausalEstimate> {
    if [bx, sx, by, sy].iter().any(|v| !v.is_finite()) || sx < 0.0 || sy < 0.0 {
        return Err(Error::Domain("Wald ratio inputs must be finite with non-negative SEs".into()));
    }
    if bx == 0.0 {
        return Err(Error::DivisionByZero("variant-exposure association is zero".into()));
    }
    let theta = by / bx;
    let se = (sy * sy / (bx * bx) + by * by * sx * sx / bx.powi(4)).sqrt();
    let mut out = CausalEstimate::new(MrEstimator::WaldRatio, theta, se);
    if bx.abs() < 2.0 * sx {
        out.warnings.push(format!(
            "weak denominator: |bx| = {:.4} is below twice its SE {:.4}",
            bx.abs(),
            sx
        ));
    }
    Ok(out)
}

/// Per-variant summary statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantStats {
    pub variant: String,
    pub bx: f64,
    pub sx: f64,
    pub by: f64,
    pub sy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryStats {
    pub variants: Vec<VariantStats>,
    pub exposure_adjuster: Option<Adjuster>,
    pub outcome_adjuster: Option<Adjuster>,
    pub converged: bool,
    pub warnings: Vec<String>,
}

impl SummaryStats {
    pub fn from_variants(variants: Vec<VariantStats>) -> Self {
        Self { variants, exposure_adjuster: None, outcome_adjuster: None, converged: true, warnings: Vec::new() }
    }

    /// Reads the `variant,bx,sx,by,sy` CSV format.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| Error::InvalidData(e.to_string()))?.clone();
        let expected = ["variant", "bx", "sx", "by", "sy"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(Error::InvalidData(format!(
                "summary statistics header must be `{}`, found `{}`",
                expected.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut variants = Vec::new();
        for (line, row) in rdr.deserialize::<VariantStats>().enumerate() {
            let v = row.map_err(|e| Error::InvalidData(format!("row {}: {e}", line + 2)))?;
            variants.push(v);
        }
        if variants.is_empty() {
            return Err(Error::InvalidData("summary statistics file has no variants".into()));
        }
        Ok(Self::from_variants(variants))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for v in &self.variants {
            w.serialize(v).map_err(|e| Error::InvalidData(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::InvalidData(e.to_string()))
    }
}

/// Inverse-variance weighted estimate with the first-order standard error.
pub fn ivw(stats: &SummaryStats) -> Result<CausalEstimate> {
    if stats.variants.is_empty() {
        return Err(Error::Domain("IVW needs at least one variant".into()));
    }
    if let Some(v) = stats.variants.iter().find(|v| v.sy == 0.0) {
        return Err(Error::DivisionByZero(format!("variant `{}` has zero outcome SE", v.variant)));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for v in &stats.variants {
        let w = 1.0 / (v.sy * v.sy);
        num += v.bx * v.by * w;
        den += v.bx * v.bx * w;
    }
    if den == 0.0 {
        return Err(Error::DivisionByZero("all variant-exposure associations are zero".into()));
    }
    let mut out = CausalEstimate::new(MrEstimator::Ivw, num / den, 1.0 / den.sqrt());
    out.converged = stats.converged;
    out.warnings = stats.warnings.clone();
    Ok(out)
}

/// Warm-start state for repeated Heckman fits on resampled data.
#[derive(Debug, Clone, Default)]
struct Warm {
    start: Vec<f64>,
    inverse_hessian: Option<DMatrix<f64>>,
}

/// Fits target ~ regressors under `adjuster`; OLS on all rows when the target is fully observed.
fn adjusted_fit(
    data: &Dataset,
    target: &str,
    regressors: &[String],
    instruments: &[String],
    ipw_covariates: &[String],
    adjuster: Adjuster,
    warm: Option<&Warm>,
    with_covariance: bool,
) -> Result<(FitResult, Option<Warm>)> {
    let spec = RegressionSpec { outcome: target.to_string(), covariates: regressors.to_vec(), intercept: true };
    if !data.has_missing(target) {
        return Ok((fit_ols(data, &spec, None)?, None));
    }
    let sel = SelectionSpec {
        outcome: target.to_string(),
        covariates: regressors.to_vec(),
        instruments: instruments.to_vec(),
    };
    match adjuster {
        Adjuster::Oracle => Err(Error::Config(format!(
            "oracle adjuster requires fully observed data, but `{target}` has missing values"
        ))),
        Adjuster::Cca => Ok((fit_cca(data, &spec, ModelKind::Linear)?, None)),
        Adjuster::Ipw => Ok((fit_ipw(data, &spec, ModelKind::Linear, ipw_covariates)?, None)),
        Adjuster::Heckman | Adjuster::Ttw if instruments.is_empty() => Err(Error::Config(format!(
            "{} adjustment requires an instrument for selection",
            adjuster.as_str()
        ))),
        Adjuster::Heckman => {
            let opts = HeckmanOptions {
                compute_covariance: with_covariance,
                start: warm.map(|w| w.start.clone()),
                initial_inverse_hessian: warm.and_then(|w| w.inverse_hessian.clone()),
                ..Default::default()
            };
            let fit = heckman_mle_with(data, &sel, &opts)?;
            let state = Warm { start: fit.unconstrained.clone(), inverse_hessian: fit.inverse_hessian.clone() };
            Ok((fit.result, Some(state)))
        }
        Adjuster::Ttw => Ok((ttw_linear(data, &sel, TtwMode::Partial)?, None)),
    }
}

/// IPW weight covariates: the regressors plus whichever analysis variable is fully observed.
fn ipw_covariates(data: &Dataset, cols: &MrColumns, regressors: &[String], target: &str) -> Vec<String> {
    let mut out = regressors.to_vec();
    for other in [&cols.exposure, &cols.outcome] {
        if other != target && data.column(other).is_ok() && !data.has_missing(other) && !out.contains(other) {
            out.push(other.clone());
        }
    }
    out
}

/// Association of the exposure or outcome with one variant (intercept + variant).
pub fn adjusted_association(
    data: &Dataset,
    cols: &MrColumns,
    variable: Variable,
    variant: &str,
    adjuster: Adjuster,
) -> Result<Association> {
    adjusted_association_joint(data, cols, variable, variant, &[], adjuster)
}

/// As [`adjusted_association`], additionally conditioning on correlated variants.
pub fn adjusted_association_joint(
    data: &Dataset,
    cols: &MrColumns,
    variable: Variable,
    variant: &str,
    conditioning: &[String],
    adjuster: Adjuster,
) -> Result<Association> {
    let target = cols.name(variable);
    if data.column(variant)?.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidData(format!("variant `{variant}` has missing values")));
    }
    let mut regressors = vec![variant.to_string()];
    regressors.extend(conditioning.iter().cloned());
    let ipw = ipw_covariates(data, cols, &regressors, target);
    let (fit, _) = adjusted_fit(data, target, &regressors, &cols.instruments, &ipw, adjuster, None, true)?;
    let (b, se) = fit.get(variant)?;
    Ok(Association { b, se, converged: fit.converged && se.is_finite(), warnings: fit.warnings })
}

/// Wald ratio from adjusted associations; pass the same dataset twice for one-sample designs.
pub fn wald_estimate(
    data_x: &Dataset,
    data_y: &Dataset,
    cols: &MrColumns,
    variant: &str,
    adjuster: Adjuster,
) -> Result<CausalEstimate> {
    let ax = adjusted_association(data_x, cols, Variable::Exposure, variant, adjuster)?;
    let ay = adjusted_association(data_y, cols, Variable::Outcome, variant, adjuster)?;
    let mut est = wald_ratio(ax.b, ax.se, ay.b, ay.se)?;
    est.adjuster = Some(adjuster);
    est.converged = ax.converged && ay.converged;
    est.warnings.extend(ax.warnings);
    est.warnings.extend(ay.warnings);
    Ok(est)
}

/// Per-variant adjusted associations for the exposure (from `data_x`) and outcome (from `data_y`).
pub fn selection_adjusted_summary_stats(
    data_x: &Dataset,
    data_y: &Dataset,
    cols: &MrColumns,
    adjuster: Adjuster,
) -> Result<SummaryStats> {
    if cols.variants.is_empty() {
        return Err(Error::Config("at least one variant is required".into()));
    }
    for v in &cols.variants {
        if data_x.column(v).is_err() || data_y.column(v).is_err() {
            return Err(Error::InvalidData(format!("variant `{v}` is not present in both samples")));
        }
    }
    let mut out = SummaryStats::from_variants(Vec::with_capacity(cols.variants.len()));
    out.exposure_adjuster = Some(adjuster);
    out.outcome_adjuster = Some(adjuster);
    if std::ptr::eq(data_x, data_y) {
        out.warnings.push(
            "exposure and outcome associations come from the same sample; IVW may be biased by sample overlap".into(),
        );
    }
    for v in &cols.variants {
        let ax = adjusted_association(data_x, cols, Variable::Exposure, v, adjuster)?;
        let ay = adjusted_association(data_y, cols, Variable::Outcome, v, adjuster)?;
        out.converged &= ax.converged && ay.converged;
        out.variants.push(VariantStats { variant: v.clone(), bx: ax.b, sx: ax.se, by: ay.b, sy: ay.se });
    }
    Ok(out)
}

/// Closed-form (optionally weighted) 2SLS over `rows` with the classical IV standard error.
fn tsls_closed_form(
    data: &Dataset,
    cols: &MrColumns,
    rows: Option<&[bool]>,
    weights: Option<&[f64]>,
) -> Result<(f64, f64)> {
    let (g, _) = data.design(&cols.variants, true, rows)?;
    let x = data.response(&cols.exposure, rows)?;
    let y = data.response(&cols.outcome, rows)?;
    let n = x.len();
    let first = least_squares(&g, &x, weights).map_err(|e| match e {
        Error::SingularDesign { column } => Error::SingularDesign {
            column: format!("first stage {column}"),
        },
        other => other,
    })?;
    let xhat = &g * &first.coef;
    let mut dhat = DMatrix::from_element(n, 2, 1.0);
    dhat.set_column(1, &xhat);
    let second = least_squares(&dhat, &y, weights)?;
    let theta = second.coef[1];
    let wsum: f64 = (0..n)
        .map(|i| {
            let e = y[i] - second.coef[0] - theta * x[i];
            weights.map_or(1.0, |w| w[i]) * e * e
        })
        .sum();
    let sigma2 = wsum / (n as f64 - 2.0);
    let se = (sigma2 * second.bread[(1, 1)]).sqrt();
    Ok((theta, se))
}

/// Two-stage point estimate with Heckman/TTW adjustment of whichever stage has missing data.
fn tsls_adjusted_point(
    data: &Dataset,
    cols: &MrColumns,
    adjuster: Adjuster,
    warm: &[Option<Warm>; 2],
    with_covariance: bool,
) -> Result<(f64, bool, [Option<Warm>; 2])> {
    let ipw1 = ipw_covariates(data, cols, &cols.variants, &cols.exposure);
    let (first, w1) = adjusted_fit(
        data,
        &cols.exposure,
        &cols.variants,
        &cols.instruments,
        &ipw1,
        adjuster,
        warm[0].as_ref(),
        with_covariance,
    )?;
    let (g, _) = data.design(&cols.variants, true, None)?;
    let coef = DVector::from_iterator(first.estimates.len().min(g.ncols()), first.estimates.iter().copied().take(g.ncols()));
    let xhat: Vec<f64> = (&g * coef).iter().copied().collect();
    const XHAT: &str = "__fitted_exposure";
    let augmented = data.with_column(XHAT, xhat)?;
    let regressors = vec![XHAT.to_string()];
    let ipw2 = ipw_covariates(&augmented, cols, &regressors, &cols.outcome);
    let (second, w2) = adjusted_fit(
        &augmented,
        &cols.outcome,
        &regressors,
        &cols.instruments,
        &ipw2,
        adjuster,
        warm[1].as_ref(),
        with_covariance,
    )?;
    let theta = second.coefficient(XHAT).expect("fitted exposure coefficient");
    Ok((theta, first.converged && second.converged && theta.is_finite(), [w1, w2]))
}

/// Share of failed bootstrap replicates above which the SE is flagged unreliable.
const BOOTSTRAP_FAILURE_LIMIT: f64 = 0.2;

/// Selection-adjusted 2SLS on one-sample individual data.
///
/// CCA, IPW and oracle use closed-form 2SLS; Heckman and TTW adjust the stage whose
/// variable is missing and take the SE from `n_bootstrap` resamples drawn from `stream`.
pub fn tsls(
    data: &Dataset,
    cols: &MrColumns,
    adjuster: Adjuster,
    n_bootstrap: usize,
    stream: &RngStream,
) -> Result<CausalEstimate> {
    if cols.variants.is_empty() {
        return Err(Error::Config("2SLS needs at least one variant".into()));
    }
    let any_missing = data.has_missing(&cols.exposure) || data.has_missing(&cols.outcome);
    let mut est = match adjuster {
        Adjuster::Oracle | Adjuster::Cca | Adjuster::Ipw if !any_missing => {
            let (theta, se) = tsls_closed_form(data, cols, None, None)?;
            CausalEstimate::new(MrEstimator::Tsls, theta, se)
        }
        Adjuster::Oracle => {
            return Err(Error::Config("oracle adjuster requires fully observed data".into()));
        }
        Adjuster::Cca => {
            let (theta, se) = tsls_closed_form(data, cols, Some(data.selected()), None)?;
            CausalEstimate::new(MrEstimator::Tsls, theta, se)
        }
        Adjuster::Ipw => {
            let mut covs = cols.variants.clone();
            for v in [&cols.exposure, &cols.outcome] {
                if data.column(v).is_ok() && !data.has_missing(v) {
                    covs.push(v.clone());
                }
            }
            let pi = selection_propensity(data, &covs)?;
            let w: Vec<f64> = pi.iter().zip(data.selected()).filter(|(_, &r)| r).map(|(p, _)| *p).collect();
            let min_prob = w.iter().copied().fold(f64::INFINITY, f64::min);
            if min_prob < 1e-6 {
                return Err(Error::UnstableWeights { min_prob });
            }
            let w: Vec<f64> = w.iter().map(|p| 1.0 / p).collect();
            let (theta, se) = tsls_closed_form(data, cols, Some(data.selected()), Some(&w))?;
            CausalEstimate::new(MrEstimator::Tsls, theta, se)
        }
        Adjuster::Heckman | Adjuster::Ttw => {
            let (theta, converged, warm) = tsls_adjusted_point(data, cols, adjuster, &[None, None], true)?;
            let n = data.n();
            let mut draws = Vec::with_capacity(n_bootstrap);
            let mut failures = 0usize;
            for j in 0..n_bootstrap {
                let mut sub = stream.substream(j as u64);
                let rows: Vec<usize> = (0..n).map(|_| sub.index(n)).collect();
                let resampled = data.take_rows(&rows);
                match tsls_adjusted_point(&resampled, cols, adjuster, &warm, false) {
                    Ok((t, true, _)) => draws.push(t),
                    _ => failures += 1,
                }
            }
            let se = if draws.len() >= 2 {
                let m = draws.iter().sum::<f64>() / draws.len() as f64;
                (draws.iter().map(|t| (t - m).powi(2)).sum::<f64>() / (draws.len() - 1) as f64).sqrt()
            } else {
                f64::NAN
            };
            let mut e = CausalEstimate::new(MrEstimator::Tsls, theta, se);
            e.n_bootstrap = Some(n_bootstrap);
            e.converged = converged;
            if n_bootstrap == 0 || failures as f64 > BOOTSTRAP_FAILURE_LIMIT * n_bootstrap as f64 {
                e.se_reliable = false;
                e.warnings.push(format!(
                    "bootstrap SE unreliable: {failures} of {n_bootstrap} replicates failed"
                ));
            }
            e
        }
    };
    est.adjuster = Some(adjuster);
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wald_ratio_formula() {
        let a = wald_ratio(1.0, 0.0, 0.2, 0.05).unwrap();
        assert!((a.theta_hat - 0.2).abs() < 1e-15 && (a.se - 0.05).abs() < 1e-15);
        let b = wald_ratio(1.0, 0.1, 0.2, 0.05).unwrap();
        assert!((b.se - 0.0029f64.sqrt()).abs() < 1e-12);
        assert_eq!(wald_ratio(2.0, 0.3, 0.0, 0.1).unwrap().theta_hat, 0.0);
        assert!(matches!(wald_ratio(0.0, 0.1, 0.2, 0.05), Err(Error::DivisionByZero(_))));
        assert!(!wald_ratio(0.1, 0.2, 0.2, 0.05).unwrap().warnings.is_empty());
    }

    #[test]
    fn ivw_formula() {
        let one = SummaryStats::from_variants(vec![VariantStats {
            variant: "v1".into(),
            bx: 1.0,
            sx: 0.1,
            by: 0.2,
            sy: 0.05,
        }]);
        let e = ivw(&one).unwrap();
        assert!((e.theta_hat - 0.2).abs() < 1e-15 && (e.se - 0.05).abs() < 1e-15);
        let mut two = one.clone();
        two.variants.push(two.variants[0].clone());
        let e2 = ivw(&two).unwrap();
        assert!((e2.theta_hat - 0.2).abs() < 1e-15);
        assert!((e2.se - 0.05 / 2f64.sqrt()).abs() < 1e-15);
        let mut zero = one;
        zero.variants[0].sy = 0.0;
        assert!(ivw(&zero).is_err());
    }

    #[test]
    fn summary_csv_roundtrip() {
        let text = "variant,bx,sx,by,sy\nv1,1,0.1,0.2,0.05\n";
        let s = SummaryStats::read_csv(text.as_bytes()).unwrap();
        assert_eq!(s.variants.len(), 1);
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert_eq!(SummaryStats::read_csv(buf.as_slice()).unwrap().variants, s.variants);
        assert!(SummaryStats::read_csv("a,b\n1,2\n".as_bytes()).is_err());
    }
}
