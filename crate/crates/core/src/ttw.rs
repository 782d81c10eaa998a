//! Homogeneous-selection-bias likelihoods (TTW) for linear, logistic and Poisson outcomes.
//!
//! The selection bias between observed and unobserved units (mean difference,
//! log-odds ratio or rate ratio) is a function of X only, so an instrument Z that
//! moves the selection probability identifies it.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use libm::lgamma as ln_gamma;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::glm::{irls, Family, FitResult, Method, SelectionSpec};
use crate::numkit::special::LN_SQRT_2PI;
use crate::numkit::{
    expit, least_squares, log1pexp, minimize, normal_cdf, normal_pdf, spd_inverse,
    MinimizeSettings, WithGradient,
};

const LINEAR_PREDICTOR_CAP: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TtwMode {
    /// Propensity fitted first, then the outcome factor with π̂ plugged in.
    #[default]
    Partial,
    /// All parameters maximized jointly.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropensityLink {
    #[default]
    Logit,
    Probit,
}

impl PropensityLink {
    /// (π, dπ/dη)
    #[inline]
    fn prob(self, eta: f64) -> (f64, f64) {
        match self {
            PropensityLink::Logit => {
                let p = expit(eta);
                (p, p * (1.0 - p))
            }
            PropensityLink::Probit => (normal_cdf(eta), normal_pdf(eta)),
        }
    }

    fn family(self) -> Family {
        match self {
            PropensityLink::Logit => Family::Logistic,
            PropensityLink::Probit => Family::Probit,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TtwOptions {
    pub mode: TtwMode,
    pub link: PropensityLink,
}

/// Observed-unit log-odds xβ + ω − log(e^ω λ + 1 − λ), where λ = P(R=1 | X, Z, Y=0).
pub fn logistic_observed_logit(xb: f64, omega: f64, lambda: f64) -> f64 {
    xb + omega - (lambda * omega.exp_m1()).ln_1p()
}

/// Selection probability implied by the logistic model:
/// π = (1 − p)λ + p·λe^ω / (λe^ω + 1 − λ), with p = expit(xβ).
pub fn implied_selection_probability(xb: f64, omega: f64, lambda: f64) -> f64 {
    let p = expit(xb);
    let le = lambda * omega.exp();
    (1.0 - p) * lambda + p * le / (le + 1.0 - lambda)
}

/// Observed-unit log mean xβ + log ν − log(νπ + 1 − π).
pub fn poisson_observed_log_mean(xb: f64, nu: f64, pi: f64) -> f64 {
    xb + nu.ln() - (pi * (nu - 1.0)).ln_1p()
}

/// Design blocks shared by the TTW likelihoods.
struct TtwData {
    p: usize,
    q: usize,
    /// Outcome design (with intercept) for every row, row-major.
    x: Vec<f64>,
    /// Propensity design over (covariates, instruments), row-major.
    w: Vec<f64>,
    y: Vec<f64>,
    r: Vec<bool>,
    x_names: Vec<String>,
    w_names: Vec<String>,
}

impl TtwData {
    fn new(data: &Dataset, spec: &SelectionSpec) -> Result<Self> {
        spec.validate(data)?;
        let (x, x_names) = data.design(&spec.covariates, true, None)?;
        let (w, w_names) = data.design(&spec.selection_covariates(), true, None)?;
        Ok(Self {
            p: x.ncols(),
            q: w.ncols(),
            x: row_major(&x),
            w: row_major(&w),
            y: data.column(&spec.outcome)?.to_vec(),
            r: data.selected().to_vec(),
            x_names,
            w_names,
        })
    }

    fn n(&self) -> usize {
        self.r.len()
    }

    fn xrow(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    fn wrow(&self, i: usize) -> &[f64] {
        &self.w[i * self.q..(i + 1) * self.q]
    }

    fn propensity(&self, link: PropensityLink) -> Result<Vec<f64>> {
        let n = self.n();
        let w = DMatrix::from_row_slice(n, self.q, &self.w);
        let r = DVector::from_iterator(n, self.r.iter().map(|&b| f64::from(u8::from(b))));
        let fit = irls(&w, &r, None, link.family(), &self.w_names)?;
        if !fit.converged {
            return Err(Error::Estimation("propensity model did not converge".into()));
        }
        Ok(fit.coef.iter().copied().collect())
    }

    fn labelled(&self, prefix: &str, names: &[String]) -> Vec<String> {
        names.iter().map(|s| format!("{prefix}:{s}")).collect()
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let (n, p) = m.shape();
    (0..n).flat_map(|i| (0..p).map(move |j| m[(i, j)])).collect()
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_fully_observed(data: &Dataset) -> Result<()> {
    if data.n_selected() == data.n() {
        return Err(Error::Estimation(
            "no unselected units: the selection-bias function is not identified".into(),
        ));
    }
    Ok(())
}

/// Linear-outcome TTW estimator (partial mode by default).
pub fn ttw_linear(data: &Dataset, spec: &SelectionSpec, mode: TtwMode) -> Result<FitResult> {
    ttw_linear_with(data, spec, &TtwOptions { mode, ..Default::default() })
}

pub fn ttw_linear_with(data: &Dataset, spec: &SelectionSpec, opts: &TtwOptions) -> Result<FitResult> {
    check_fully_observed(data)?;
    let td = TtwData::new(data, spec)?;
    let (p, n) = (td.p, td.n());
    let alpha = td.propensity(opts.link)?;
    let pi: Vec<f64> = (0..n).map(|i| opts.link.prob(dot(td.wrow(i), &alpha)).0).collect();

    // Stage 2: the outcome factor is Gaussian with mean D(β, η), D = [x, (1 − π̂)x].
    let rows: Vec<usize> = (0..n).filter(|&i| td.r[i]).collect();
    let n1 = rows.len();
    let mut d = DMatrix::zeros(n1, 2 * p);
    let mut yv = DVector::zeros(n1);
    for (k, &i) in rows.iter().enumerate() {
        let xi = td.xrow(i);
        for j in 0..p {
            d[(k, j)] = xi[j];
            d[(k, p + j)] = (1.0 - pi[i]) * xi[j];
        }
        yv[k] = td.y[i];
    }
    let mut warnings = Vec::new();
    let mean_c = rows.iter().map(|&i| 1.0 - pi[i]).sum::<f64>() / n1 as f64;
    let sd_c = (rows.iter().map(|&i| (1.0 - pi[i] - mean_c).powi(2)).sum::<f64>() / n1 as f64).sqrt();
    if sd_c < 1e-3 {
        warnings.push(format!(
            "1 - propensity is nearly constant (sd {sd_c:.2e}); selection bias and intercept are confounded"
        ));
    }
    let ls = least_squares(&d, &yv, None).map_err(|e| match e {
        Error::SingularDesign { column } => Error::SingularDesign {
            column: format!("delta design {column} (selection-bias function not identified)"),
        },
        other => other,
    })?;
    let sigma2 = ls.weighted_rss / n1 as f64;
    let partial: Vec<f64> = ls.coef.iter().copied().collect();

    let mut names = td.x_names.clone();
    names.extend(td.labelled("delta", &td.x_names));
    names.push("sigma2".into());

    if opts.mode == TtwMode::Partial {
        let mut cov = DMatrix::zeros(2 * p + 1, 2 * p + 1);
        cov.view_mut((0, 0), (2 * p, 2 * p)).copy_from(&(&ls.bread * sigma2));
        cov[(2 * p, 2 * p)] = 2.0 * sigma2 * sigma2 / n1 as f64;
        let mut est = partial.clone();
        est.push(sigma2);
        let mut out = FitResult::from_covariance(Method::TtwLinear, names, est, cov, n);
        let ll_y = -0.5 * n1 as f64 * ((2.0 * std::f64::consts::PI * sigma2).ln() + 1.0);
        out.loglik = Some(ll_y + bernoulli_loglik(&td.r, &pi));
        out.warnings = warnings;
        return Ok(out);
    }

    // Full likelihood over (β, η, ln σ, α), started at the partial solution.
    let link = opts.link;
    let f = |t: &[f64], grad: Option<&mut [f64]>| linear_full_nll(&td, link, t, grad);
    let mut start = partial;
    start.push(0.5 * sigma2.ln());
    start.extend(&alpha);
    let objective = WithGradient {
        value: |t: &[f64]| f(t, None),
        value_and_gradient: |t: &[f64], g: &mut [f64]| f(t, Some(g)),
    };
    let opt = minimize(&objective, &start, &MinimizeSettings::default())?;
    let t = &opt.argmin;
    let dim = t.len();
    let s2 = (2.0 * t[2 * p]).exp();
    let mut est = t.clone();
    est[2 * p] = s2;
    names.extend(td.labelled("propensity", &td.w_names));
    let mut converged = opt.converged;
    if let Some(m) = &opt.message {
        warnings.push(m.clone());
    }
    let cov = match opt.hessian.as_ref().and_then(spd_inverse) {
        Some(inv) => {
            let mut jac = DMatrix::<f64>::identity(dim, dim);
            jac[(2 * p, 2 * p)] = 2.0 * s2;
            &jac * inv * jac.transpose()
        }
        None => {
            converged = false;
            warnings.push("Hessian is not positive definite at the optimum".into());
            DMatrix::from_element(dim, dim, f64::NAN)
        }
    };
    let mut out = FitResult::from_covariance(Method::TtwLinear, names, est, cov, n);
    out.loglik = Some(-opt.objective_value);
    out.converged = converged;
    out.iterations = opt.iterations;
    out.warnings = warnings;
    Ok(out)
}

/// Negative joint log-likelihood of the linear model in (β, η, ln σ, α).
fn linear_full_nll(td: &TtwData, link: PropensityLink, t: &[f64], grad: Option<&mut [f64]>) -> f64 {
    let (p, q) = (td.p, td.q);
    let beta = &t[..p];
    let eta = &t[p..2 * p];
    let log_sigma = t[2 * p];
    let a = &t[2 * p + 1..];
    let s2 = (2.0 * log_sigma).exp();
    let want = grad.is_some();
    let mut g = vec![0.0; t.len()];
    let mut ll = 0.0;
    for i in 0..td.n() {
        let xi = td.xrow(i);
        let wi = td.wrow(i);
        let (pi_i, dpi) = link.prob(dot(wi, a));
        let pi_i = pi_i.clamp(1e-300, 1.0 - 1e-16);
        let mut dpi_coef;
        if td.r[i] {
            let xe = dot(xi, eta);
            let e = td.y[i] - dot(xi, beta) - (1.0 - pi_i) * xe;
            ll += -0.5 * e * e / s2 - log_sigma - LN_SQRT_2PI + pi_i.ln();
            if want {
                let es = e / s2;
                for j in 0..p {
                    g[j] += es * xi[j];
                    g[p + j] += es * (1.0 - pi_i) * xi[j];
                }
                g[2 * p] += e * es - 1.0;
            }
            dpi_coef = -e / s2 * xe + 1.0 / pi_i;
        } else {
            ll += (1.0 - pi_i).ln();
            dpi_coef = -1.0 / (1.0 - pi_i);
        }
        if want {
            dpi_coef *= dpi;
            for k in 0..q {
                g[2 * p + 1 + k] += dpi_coef * wi[k];
            }
        }
    }
    if let Some(out) = grad {
        for (o, v) in out.iter_mut().zip(&g) {
            *o = -v;
        }
    }
    -ll
}

fn logistic_nll(td: &TtwData, t: &[f64], free_eta: bool) -> f64 {
    let p = td.p;
    let eta_len = if free_eta { p } else { 0 };
    let beta = &t[..p];
    let eta = &t[p..p + eta_len];
    let a = &t[p + eta_len..];
    let mut ll = 0.0;
    for i in 0..td.n() {
        let xi = td.xrow(i);
        let xb = dot(xi, beta);
        let omega = if free_eta { dot(xi, eta) } else { 0.0 };
        let wa = dot(td.wrow(i), a);
        // π = (1 − p)λ + p·expit(ω + logit λ)
        let py = expit(xb);
        let pi = ((1.0 - py) * expit(wa) + py * expit(omega + wa)).clamp(1e-300, 1.0 - 1e-16);
        if td.r[i] {
            let lin = xb + omega - log1pexp(omega + wa) + log1pexp(wa);
            ll += td.y[i] * lin - log1pexp(lin) + pi.ln();
        } else {
            ll += (1.0 - pi).ln();
        }
    }
    -ll
}

/// Returns the negative log-likelihood and whether the mean cap was hit.
fn poisson_nll(td: &TtwData, lgy: &[f64], t: &[f64]) -> (f64, bool) {
    let p = td.p;
    let beta = &t[..p];
    let eta = &t[p..2 * p];
    let a = &t[2 * p..];
    let mut ll = 0.0;
    let mut hit = false;
    for i in 0..td.n() {
        let xi = td.xrow(i);
        let pi = expit(dot(td.wrow(i), a)).clamp(1e-300, 1.0 - 1e-16);
        if td.r[i] {
            let xe = dot(xi, eta);
            let mut lmu = dot(xi, beta) + xe - (pi * xe.exp_m1()).ln_1p();
            if lmu > LINEAR_PREDICTOR_CAP {
                lmu = LINEAR_PREDICTOR_CAP;
                hit = true;
            }
            ll += td.y[i] * lmu - lmu.exp() - lgy[i] + pi.ln();
        } else {
            ll += (1.0 - pi).ln();
        }
    }
    (-ll, hit)
}

fn log_factorials(y: &[f64]) -> Vec<f64> {
    y.iter().map(|&v| if v.is_nan() { 0.0 } else { ln_gamma(v + 1.0) }).collect()
}

/// Log-likelihood of a joint TTW model at estimates laid out as in the matching
/// [`FitResult`]: linear full mode (β, η, σ², α), logistic (β, ω, α_λ), Poisson (β, log ν, α).
pub fn ttw_loglik(data: &Dataset, spec: &SelectionSpec, method: Method, estimates: &[f64]) -> Result<f64> {
    let td = TtwData::new(data, spec)?;
    let (p, q) = (td.p, td.q);
    let need = match method {
        Method::TtwLinear => 2 * p + 1 + q,
        Method::TtwLogistic | Method::TtwPoisson => 2 * p + q,
        _ => return Err(Error::Config(format!("{method:?} is not a TTW likelihood"))),
    };
    if estimates.len() != need {
        return Err(Error::InvalidData(format!("expected {need} parameters, got {}", estimates.len())));
    }
    Ok(-match method {
        Method::TtwLinear => {
            let mut t = estimates.to_vec();
            if !(t[2 * p] > 0.0) {
                return Err(Error::Domain("sigma2 must be positive".into()));
            }
            t[2 * p] = 0.5 * t[2 * p].ln();
            linear_full_nll(&td, PropensityLink::Logit, &t, None)
        }
        Method::TtwLogistic => logistic_nll(&td, estimates, true),
        _ => poisson_nll(&td, &log_factorials(&td.y), estimates).0,
    })
}

fn bernoulli_loglik(r: &[bool], pi: &[f64]) -> f64 {
    r.iter()
        .zip(pi)
        .map(|(&ri, &p)| if ri { p.ln() } else { (1.0 - p).ln() })
        .sum()
}

/// Options for the logistic-outcome estimator.
#[derive(Debug, Clone, Copy, Default)]
pub struct TtwLogisticOptions {
    /// Constrains the log-odds-ratio function ω(X) to zero.
    pub fix_omega_zero: bool,
}

/// Binary-outcome TTW estimator (joint maximization only).
pub fn ttw_logistic(data: &Dataset, spec: &SelectionSpec) -> Result<FitResult> {
    ttw_logistic_with(data, spec, &TtwLogisticOptions::default())
}

pub fn ttw_logistic_with(
    data: &Dataset,
    spec: &SelectionSpec,
    opts: &TtwLogisticOptions,
) -> Result<FitResult> {
    check_fully_observed(data)?;
    let td = TtwData::new(data, spec)?;
    if td.y.iter().any(|v| !v.is_nan() && *v != 0.0 && *v != 1.0) {
        return Err(Error::InvalidData(format!("outcome `{}` is not binary", spec.outcome)));
    }
    let (p, q, n) = (td.p, td.q, td.n());
    let free_eta = !opts.fix_omega_zero;
    let eta_len = if free_eta { p } else { 0 };
    let nll = |t: &[f64]| logistic_nll(&td, t, free_eta);
    let sel = data.selected();
    let (xs, xn) = data.design(&spec.covariates, true, Some(sel))?;
    let ys = data.response(&spec.outcome, Some(sel))?;
    let start_beta = irls(&xs, &ys, None, Family::Logistic, &xn)?.coef;
    let alpha = td.propensity(PropensityLink::Logit)?;
    let mut start: Vec<f64> = start_beta.iter().copied().collect();
    start.extend(std::iter::repeat(0.0).take(eta_len));
    start.extend(&alpha);

    let mut names = td.x_names.clone();
    if free_eta {
        names.extend(td.labelled("omega", &td.x_names));
    }
    names.extend(td.labelled("lambda", &td.w_names));
    finish_numeric(&nll, &start, names, Method::TtwLogistic, n, q)
}

/// Count-outcome TTW estimator (joint maximization only).
pub fn ttw_poisson(data: &Dataset, spec: &SelectionSpec) -> Result<FitResult> {
    check_fully_observed(data)?;
    let td = TtwData::new(data, spec)?;
    if td.y.iter().any(|v| !v.is_nan() && *v < 0.0) {
        return Err(Error::InvalidData(format!("outcome `{}` has negative counts", spec.outcome)));
    }
    let (p, q, n) = (td.p, td.q, td.n());
    let lgy = log_factorials(&td.y);
    let capped = std::cell::Cell::new(false);
    let nll = |t: &[f64]| {
        let (v, hit) = poisson_nll(&td, &lgy, t);
        capped.set(hit);
        v
    };
    let sel = data.selected();
    let (xs, xn) = data.design(&spec.covariates, true, Some(sel))?;
    let ys = data.response(&spec.outcome, Some(sel))?;
    let start_beta = irls(&xs, &ys, None, Family::Poisson, &xn)?.coef;
    let alpha = td.propensity(PropensityLink::Logit)?;
    let mut start: Vec<f64> = start_beta.iter().copied().collect();
    start.extend(std::iter::repeat(0.0).take(p));
    start.extend(&alpha);
    let mut names = td.x_names.clone();
    names.extend(td.labelled("log_nu", &td.x_names));
    names.extend(td.labelled("propensity", &td.w_names));
    let out = finish_numeric(&nll, &start, names, Method::TtwPoisson, n, q)?;
    let at_opt = out.estimates.clone();
    nll(&at_opt);
    if capped.get() {
        return Err(Error::Estimation(format!(
            "observed-mean linear predictor reached the cap {LINEAR_PREDICTOR_CAP} at the optimum"
        )));
    }
    Ok(out)
}

/// Minimizes a finite-difference objective and packages a FitResult with Hessian SEs.
fn finish_numeric(
    nll: &dyn Fn(&[f64]) -> f64,
    start: &[f64],
    names: Vec<String>,
    method: Method,
    n: usize,
    _q: usize,
) -> Result<FitResult> {
    let opt = minimize(&|t: &[f64]| nll(t), start, &MinimizeSettings::default())?;
    let dim = start.len();
    let mut converged = opt.converged;
    let mut warnings: Vec<String> = opt.message.iter().cloned().collect();
    let cov = match opt.hessian.as_ref().and_then(spd_inverse) {
        Some(inv) => inv,
        None => {
            converged = false;
            warnings.push("Hessian is not positive definite at the optimum".into());
            DMatrix::from_element(dim, dim, f64::NAN)
        }
    };
    let mut out = FitResult::from_covariance(method, names, opt.argmin.clone(), cov, n);
    out.loglik = Some(-opt.objective_value);
    out.converged = converged;
    out.iterations = opt.iterations;
    out.warnings = warnings;
    Ok(out)
}
