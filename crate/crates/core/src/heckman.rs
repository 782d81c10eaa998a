//! Heckman sample-selection models: two-step, full-information ML, and the
//! bivariate-probit selection model for binary outcomes.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::glm::{fit_ols, irls, Family, FitResult, Method, SelectionSpec};
use crate::numkit::special::{INV_SQRT_2PI, LN_SQRT_2PI};
use crate::numkit::{
    bivariate_normal_cdf, inverse_mills, least_squares, log_cdf_and_hazard, minimize, normal_cdf,
    normal_pdf, spd_inverse, MinimizeSettings, WithGradient,
};

const RHO_START_BOUND: f64 = 0.95;
const ATANH_RHO_BOUNDARY: f64 = 5.0;

/// Natural-scale parameters of the continuous selection model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeckmanParams {
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub sigma1: f64,
    pub rho: f64,
}

impl HeckmanParams {
    /// Unconstrained vector (β, γ, ln σ₁, atanh ρ).
    pub fn to_unconstrained(&self) -> Vec<f64> {
        let mut t = self.beta.clone();
        t.extend(&self.gamma);
        t.push(self.sigma1.ln());
        t.push(self.rho.atanh());
        t
    }
}

/// Options for [`heckman_mle_with`].
#[derive(Debug, Clone)]
pub struct HeckmanOptions {
    /// Holds ρ fixed at this value instead of estimating it.
    pub fix_rho: Option<f64>,
    pub compute_covariance: bool,
    /// Unconstrained start (β, γ, ln σ₁[, atanh ρ]); two-step estimates when absent.
    pub start: Option<Vec<f64>>,
    pub initial_inverse_hessian: Option<DMatrix<f64>>,
}

impl Default for HeckmanOptions {
    fn default() -> Self {
        Self { fix_rho: None, compute_covariance: true, start: None, initial_inverse_hessian: None }
    }
}

/// Full MLE output, including the unconstrained optimum for warm starts.
#[derive(Debug, Clone)]
pub struct HeckmanFit {
    pub result: FitResult,
    pub params: HeckmanParams,
    pub unconstrained: Vec<f64>,
    /// Inverse Hessian of the negative log-likelihood in unconstrained coordinates.
    pub inverse_hessian: Option<DMatrix<f64>>,
}

/// Row-major copies of the selected and unselected design blocks.
struct Blocks {
    p: usize,
    q: usize,
    x_sel: Vec<f64>,
    xt_sel: Vec<f64>,
    y_sel: Vec<f64>,
    xt_unsel: Vec<f64>,
    outcome_names: Vec<String>,
    selection_names: Vec<String>,
}

impl Blocks {
    fn new(data: &Dataset, spec: &SelectionSpec) -> Result<Self> {
        let sel = data.selected();
        let unsel: Vec<bool> = sel.iter().map(|r| !r).collect();
        let (x, outcome_names) = data.design(&spec.covariates, true, Some(sel))?;
        let (xt, selection_names) = data.design(&spec.selection_covariates(), true, Some(sel))?;
        let (xt0, _) = data.design(&spec.selection_covariates(), true, Some(&unsel))?;
        let y = data.response(&spec.outcome, Some(sel))?;
        Ok(Self {
            p: x.ncols(),
            q: xt.ncols(),
            x_sel: row_major(&x),
            xt_sel: row_major(&xt),
            y_sel: y.iter().copied().collect(),
            xt_unsel: row_major(&xt0),
            outcome_names,
            selection_names,
        })
    }

    fn n_sel(&self) -> usize {
        self.y_sel.len()
    }

    fn n_unsel(&self) -> usize {
        self.xt_unsel.len() / self.q
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let (n, p) = m.shape();
    let mut out = Vec::with_capacity(n * p);
    for i in 0..n {
        for j in 0..p {
            out.push(m[(i, j)]);
        }
    }
    out
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Negative log-likelihood and its gradient in (β, γ, ln σ₁, atanh ρ).
/// With `rho_fixed`, the last coordinate is dropped and ρ held at that value.
fn neg_loglik(b: &Blocks, theta: &[f64], rho_fixed: Option<f64>, grad: Option<&mut [f64]>) -> f64 {
    let (p, q) = (b.p, b.q);
    let beta = &theta[..p];
    let gamma = &theta[p..p + q];
    let log_sigma = theta[p + q];
    let sigma = log_sigma.exp();
    let rho = rho_fixed.unwrap_or_else(|| theta[p + q + 1].tanh());
    let s = (1.0 - rho * rho).sqrt();
    let mut ll = 0.0;
    let want_grad = grad.is_some();
    let mut g = vec![0.0; theta.len()];

    for i in 0..b.n_sel() {
        let xi = &b.x_sel[i * p..(i + 1) * p];
        let wi = &b.xt_sel[i * q..(i + 1) * q];
        let u = (b.y_sel[i] - dot(xi, beta)) / sigma;
        let a = dot(wi, gamma);
        let v = (a + rho * u) / s;
        let (log_phi_v, m) = log_cdf_and_hazard(v);
        ll += -0.5 * u * u - LN_SQRT_2PI - log_sigma + log_phi_v;
        if want_grad {
            let db = u / sigma - m * rho / (s * sigma);
            for (gj, xj) in g[..p].iter_mut().zip(xi) {
                *gj += db * xj;
            }
            let dg = m / s;
            for (gj, wj) in g[p..p + q].iter_mut().zip(wi) {
                *gj += dg * wj;
            }
            g[p + q] += u * u - 1.0 - m * rho * u / s;
            if rho_fixed.is_none() {
                g[p + q + 1] += m * (u + rho * a) / s;
            }
        }
    }
    for i in 0..b.n_unsel() {
        let wi = &b.xt_unsel[i * q..(i + 1) * q];
        let a = dot(wi, gamma);
        let (log_phi, h) = log_cdf_and_hazard(-a);
        ll += log_phi;
        if want_grad {
            for (gj, wj) in g[p..p + q].iter_mut().zip(wi) {
                *gj -= h * wj;
            }
        }
    }
    if let Some(out) = grad {
        for (o, gi) in out.iter_mut().zip(&g) {
            *o = -gi;
        }
    }
    -ll
}

/// Log-likelihood of the continuous selection model at natural-scale parameters.
pub fn heckman_loglik(data: &Dataset, spec: &SelectionSpec, params: &HeckmanParams) -> Result<f64> {
    spec.validate(data)?;
    let b = Blocks::new(data, spec)?;
    if params.beta.len() != b.p || params.gamma.len() != b.q {
        return Err(Error::InvalidData("parameter dimensions do not match the design".into()));
    }
    Ok(-neg_loglik(&b, &params.to_unconstrained(), None, None))
}

/// Probit selection equation plus Mills-augmented OLS.
pub fn heckman_two_step(data: &Dataset, spec: &SelectionSpec) -> Result<FitResult> {
    two_step_inner(data, spec).map(|(fit, _)| fit)
}

fn all_selected_fallback(data: &Dataset, spec: &SelectionSpec, method: Method) -> Result<FitResult> {
    let mut fit = fit_ols(data, &spec.regression(), None)?;
    fit.method = method;
    fit.warnings.push(
        "no unselected units: selection equation not identified, returning OLS estimates".into(),
    );
    Ok(fit)
}

fn two_step_inner(data: &Dataset, spec: &SelectionSpec) -> Result<(FitResult, Option<HeckmanParams>)> {
    spec.validate(data)?;
    if data.n_selected() == data.n() {
        return Ok((all_selected_fallback(data, spec, Method::HeckmanTwoStep)?, None));
    }
    let (xt_all, sel_names) = data.design(&spec.selection_covariates(), true, None)?;
    let r = DVector::from_vec(data.selection_vector());
    let probit = irls(&xt_all, &r, None, Family::Probit, &sel_names)
        .map_err(|e| Error::Estimation(format!("selection probit failed: {e}")))?;
    if !probit.converged {
        return Err(Error::Estimation("selection probit did not converge".into()));
    }
    let gamma = probit.coef.clone();

    let sel = data.selected();
    let (x, mut names) = data.design(&spec.covariates, true, Some(sel))?;
    let (xt, _) = data.design(&spec.selection_covariates(), true, Some(sel))?;
    let y = data.response(&spec.outcome, Some(sel))?;
    let n1 = y.len();
    let p = x.ncols();
    let a = &xt * &gamma;
    let lambda: Vec<f64> = a.iter().map(|&ai| inverse_mills(-ai)).collect();
    let aug = x.clone().insert_column(p, 0.0);
    let mut aug = aug;
    for i in 0..n1 {
        aug[(i, p)] = lambda[i];
    }
    names.push("mills".into());
    let ls = least_squares(&aug, &y, None).map_err(|e| match e {
        Error::SingularDesign { .. } => Error::SingularDesign { column: "mills".into() },
        other => other,
    })?;
    let beta_lambda = ls.coef[p];
    let delta_mean: f64 =
        lambda.iter().zip(a.iter()).map(|(l, ai)| l * (l + ai)).sum::<f64>() / n1 as f64;
    let sigma2 = ls.weighted_rss / n1 as f64 + beta_lambda * beta_lambda * delta_mean;
    let sigma1 = sigma2.max(1e-12).sqrt();
    let rho = (beta_lambda / sigma1).clamp(-RHO_START_BOUND, RHO_START_BOUND);
    let cov = two_step_covariance(&aug, &xt, &lambda, &a, &ls.bread, &probit.cov_fisher, sigma2, beta_lambda / sigma1);

    let fit = FitResult::from_covariance(
        Method::HeckmanTwoStep,
        names,
        ls.coef.iter().copied().collect(),
        cov,
        n1,
    );
    let params = HeckmanParams {
        beta: ls.coef.rows(0, p).iter().copied().collect(),
        gamma: gamma.iter().copied().collect(),
        sigma1,
        rho,
    };
    Ok((fit, Some(params)))
}

/// Second-stage covariance corrected for heteroskedasticity and the estimated probit index:
/// σ²(X*ᵀX*)⁻¹ [X*ᵀ(I − ρ²Δ)X* + ρ² X*ᵀΔW V_γ WᵀΔX*] (X*ᵀX*)⁻¹, Δ = diag(λ(λ + wᵀγ)).
#[allow(clippy::too_many_arguments)]
fn two_step_covariance(
    xs: &DMatrix<f64>,
    w: &DMatrix<f64>,
    lambda: &[f64],
    index: &DVector<f64>,
    bread: &DMatrix<f64>,
    cov_gamma: &DMatrix<f64>,
    sigma2: f64,
    rho: f64,
) -> DMatrix<f64> {
    let rho2 = rho.clamp(-1.0, 1.0).powi(2);
    let (k, q) = (xs.ncols(), w.ncols());
    let mut meat = DMatrix::<f64>::zeros(k, k);
    let mut cross = DMatrix::<f64>::zeros(k, q);
    for i in 0..xs.nrows() {
        let d = lambda[i] * (lambda[i] + index[i]);
        let xi = xs.row(i).transpose();
        meat += (1.0 - rho2 * d) * &xi * xi.transpose();
        cross += d * &xi * w.row(i);
    }
    meat += rho2 * &cross * cov_gamma * cross.transpose();
    sigma2 * bread * meat * bread
}

/// Maximum-likelihood fit of the continuous selection model.
pub fn heckman_mle(data: &Dataset, spec: &SelectionSpec) -> Result<FitResult> {
    heckman_mle_with(data, spec, &HeckmanOptions::default()).map(|f| f.result)
}

pub fn heckman_mle_with(data: &Dataset, spec: &SelectionSpec, opts: &HeckmanOptions) -> Result<HeckmanFit> {
    spec.validate(data)?;
    if data.n_selected() == data.n() {
        let result = all_selected_fallback(data, spec, Method::HeckmanMle)?;
        let n = result.n_used as f64;
        let ls_rss: f64 = {
            let (x, _) = data.design(&spec.covariates, true, None)?;
            let y = data.response(&spec.outcome, None)?;
            least_squares(&x, &y, None)?.weighted_rss
        };
        let params = HeckmanParams {
            beta: result.estimates.clone(),
            gamma: Vec::new(),
            sigma1: (ls_rss / n).sqrt(),
            rho: 0.0,
        };
        return Ok(HeckmanFit { result, unconstrained: Vec::new(), params, inverse_hessian: None });
    }
    let blocks = Blocks::new(data, spec)?;
    let (p, q) = (blocks.p, blocks.q);
    let fixed = opts.fix_rho;
    if let Some(r) = fixed {
        if !(r.abs() < 1.0) {
            return Err(Error::Domain(format!("fixed rho must lie in (-1, 1), got {r}")));
        }
    }
    let dim = p + q + 1 + usize::from(fixed.is_none());

    let start = match &opts.start {
        Some(s) if s.len() == dim => s.clone(),
        Some(_) => return Err(Error::InvalidData("start vector has the wrong length".into())),
        None => {
            let (_, params) = two_step_inner(data, spec)?;
            let params = params.expect("two-step parameters exist when some units are unselected");
            let mut t = params.to_unconstrained();
            if fixed.is_some() {
                t.pop();
            }
            t
        }
    };

    let objective = WithGradient {
        value: |t: &[f64]| neg_loglik(&blocks, t, fixed, None),
        value_and_gradient: |t: &[f64], g: &mut [f64]| neg_loglik(&blocks, t, fixed, Some(g)),
    };
    let settings = MinimizeSettings {
        compute_hessian: opts.compute_covariance,
        initial_inverse_hessian: opts.initial_inverse_hessian.clone(),
        ..Default::default()
    };
    let opt = minimize(&objective, &start, &settings)?;
    let t = &opt.argmin;
    let sigma1 = t[p + q].exp();
    let rho = fixed.unwrap_or_else(|| t[p + q + 1].tanh());
    let params = HeckmanParams {
        beta: t[..p].to_vec(),
        gamma: t[p..p + q].to_vec(),
        sigma1,
        rho,
    };

    let mut names = blocks.outcome_names.clone();
    names.extend(blocks.selection_names.iter().map(|s| format!("selection:{s}")));
    names.push("sigma".into());
    if fixed.is_none() {
        names.push("rho".into());
    }
    let mut estimates: Vec<f64> = t[..p + q].to_vec();
    estimates.push(sigma1);
    if fixed.is_none() {
        estimates.push(rho);
    }

    let mut warnings = Vec::new();
    let mut converged = opt.converged;
    if let Some(m) = &opt.message {
        warnings.push(m.clone());
    }
    let mut inverse_hessian = None;
    let covariance = match &opt.hessian {
        Some(h) => match spd_inverse(h) {
            Some(inv) => {
                let mut jac = DMatrix::<f64>::identity(dim, dim);
                jac[(p + q, p + q)] = sigma1;
                if fixed.is_none() {
                    jac[(p + q + 1, p + q + 1)] = 1.0 - rho * rho;
                }
                let cov = &jac * &inv * jac.transpose();
                inverse_hessian = Some(inv);
                cov
            }
            None => {
                converged = false;
                warnings.push("Hessian is not positive definite at the optimum".into());
                DMatrix::from_element(dim, dim, f64::NAN)
            }
        },
        None => DMatrix::from_element(dim, dim, f64::NAN),
    };
    if fixed.is_none() && t[p + q + 1].abs() > ATANH_RHO_BOUNDARY {
        warnings.push(format!("rho estimate {rho:.6} is at the boundary of (-1, 1)"));
    }

    let mut result =
        FitResult::from_covariance(Method::HeckmanMle, names, estimates, covariance, data.n());
    if !opts.compute_covariance {
        result.covariance = None;
    }
    result.loglik = Some(-opt.objective_value);
    result.converged = converged;
    result.iterations = opt.iterations;
    result.warnings = warnings;
    Ok(HeckmanFit { result, params, unconstrained: opt.argmin, inverse_hessian })
}

/// Standard bivariate normal density.
#[inline]
fn bvn_pdf(h: f64, k: f64, rho: f64) -> f64 {
    let s2 = 1.0 - rho * rho;
    (-(h * h - 2.0 * rho * h * k + k * k) / (2.0 * s2)).exp() * INV_SQRT_2PI * INV_SQRT_2PI / s2.sqrt()
}

fn binary_neg_loglik(b: &Blocks, theta: &[f64], grad: Option<&mut [f64]>) -> f64 {
    let (p, q) = (b.p, b.q);
    let beta = &theta[..p];
    let gamma = &theta[p..p + q];
    let tau = theta[p + q];
    let rho = tau.tanh();
    let s = (1.0 - rho * rho).sqrt();
    let want = grad.is_some();
    let mut g = vec![0.0; theta.len()];
    let mut ll = 0.0;
    for i in 0..b.n_sel() {
        let xi = &b.x_sel[i * p..(i + 1) * p];
        let wi = &b.xt_sel[i * q..(i + 1) * q];
        let xb = dot(xi, beta);
        let a = dot(wi, gamma);
        let sign = if b.y_sel[i] > 0.5 { 1.0 } else { -1.0 };
        let prob = bivariate_normal_cdf(sign * xb, a, sign * rho).max(1e-300);
        ll += prob.ln();
        if want {
            let d_xb = sign * normal_pdf(xb) * normal_cdf((a - rho * xb) / s) / prob;
            let d_a = normal_pdf(a) * normal_cdf(sign * (xb - rho * a) / s) / prob;
            let d_rho = sign * bvn_pdf(xb, a, rho) / prob;
            for (gj, xj) in g[..p].iter_mut().zip(xi) {
                *gj += d_xb * xj;
            }
            for (gj, wj) in g[p..p + q].iter_mut().zip(wi) {
                *gj += d_a * wj;
            }
            g[p + q] += d_rho * (1.0 - rho * rho);
        }
    }
    for i in 0..b.n_unsel() {
        let wi = &b.xt_unsel[i * q..(i + 1) * q];
        let a = dot(wi, gamma);
        let (log_phi, h) = log_cdf_and_hazard(-a);
        ll += log_phi;
        if want {
            for (gj, wj) in g[p..p + q].iter_mut().zip(wi) {
                *gj -= h * wj;
            }
        }
    }
    if let Some(out) = grad {
        for (o, gi) in out.iter_mut().zip(&g) {
            *o = -gi;
        }
    }
    -ll
}

/// Bivariate-probit selection model for a binary outcome. Coefficients are on the probit scale.
pub fn heckman_binary_mle(data: &Dataset, spec: &SelectionSpec) -> Result<FitResult> {
    spec.validate(data)?;
    let y = data.column(&spec.outcome)?;
    if y.iter().any(|v| !v.is_nan() && *v != 0.0 && *v != 1.0) {
        return Err(Error::InvalidData(format!("outcome `{}` is not binary", spec.outcome)));
    }
    if data.n_selected() == data.n() {
        let mut fit = crate::glm::fit_probit(data, &spec.regression(), None)?;
        fit.method = Method::HeckmanBinary;
        fit.warnings.push(
            "no unselected units: selection equation not identified, returning probit estimates".into(),
        );
        return Ok(fit);
    }
    let blocks = Blocks::new(data, spec)?;
    let (p, q) = (blocks.p, blocks.q);
    let sel = data.selected();
    let (x, xn) = data.design(&spec.covariates, true, Some(sel))?;
    let yv = data.response(&spec.outcome, Some(sel))?;
    let outcome_probit = irls(&x, &yv, None, Family::Probit, &xn)?;
    let (xt_all, sn) = data.design(&spec.selection_covariates(), true, None)?;
    let r = DVector::from_vec(data.selection_vector());
    let selection_probit = irls(&xt_all, &r, None, Family::Probit, &sn)?;
    let mut start: Vec<f64> = outcome_probit.coef.iter().copied().collect();
    start.extend(selection_probit.coef.iter());
    start.push(0.0);

    let objective = WithGradient {
        value: |t: &[f64]| binary_neg_loglik(&blocks, t, None),
        value_and_gradient: |t: &[f64], g: &mut [f64]| binary_neg_loglik(&blocks, t, Some(g)),
    };
    let opt = minimize(&objective, &start, &MinimizeSettings::default())?;
    let t = &opt.argmin;
    let rho = t[p + q].tanh();
    let dim = p + q + 1;
    let mut names = blocks.outcome_names.clone();
    names.extend(blocks.selection_names.iter().map(|s| format!("selection:{s}")));
    names.push("rho".into());
    let mut estimates = t[..p + q].to_vec();
    estimates.push(rho);
    let mut converged = opt.converged;
    let mut warnings: Vec<String> = opt.message.iter().cloned().collect();
    let covariance = match opt.hessian.as_ref().and_then(spd_inverse) {
        Some(inv) => {
            let mut jac = DMatrix::<f64>::identity(dim, dim);
            jac[(p + q, p + q)] = 1.0 - rho * rho;
            &jac * inv * jac.transpose()
        }
        None => {
            converged = false;
            warnings.push("Hessian is not positive definite at the optimum".into());
            DMatrix::from_element(dim, dim, f64::NAN)
        }
    };
    if t[p + q].abs() > ATANH_RHO_BOUNDARY {
        warnings.push(format!("rho estimate {rho:.6} is at the boundary of (-1, 1)"));
    }
    let mut result = FitResult::from_covariance(Method::HeckmanBinary, names, estimates, covariance, data.n());
    result.loglik = Some(-opt.objective_value);
    result.converged = converged;
    result.iterations = opt.iterations;
    result.warnings = warnings;
    Ok(result)
}
