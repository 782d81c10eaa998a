//! Iteratively reweighted least squares for binary and count responses.

use nalgebra::{DMatrix, DVector};
use libm::lgamma as ln_gamma;

use crate::error::{Error, Result};
use crate::numkit::{
    expit, least_squares, log1pexp, log_normal_cdf, normal_cdf, normal_pdf, normal_quantile,
};

const MAX_ITER: usize = 100;
const DEVIANCE_TOL: f64 = 1e-10;
const SEPARATION_BOUND: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Logistic,
    Probit,
    Poisson,
}

impl Family {
    #[inline]
    fn mean(self, eta: f64) -> f64 {
        match self {
            Family::Logistic => expit(eta),
            Family::Probit => normal_cdf(eta),
            Family::Poisson => eta.min(700.0).exp(),
        }
    }

    /// dμ/dη
    #[inline]
    fn mean_derivative(self, eta: f64, mu: f64) -> f64 {
        match self {
            Family::Logistic => mu * (1.0 - mu),
            Family::Probit => normal_pdf(eta),
            Family::Poisson => mu,
        }
    }

    #[inline]
    fn variance(self, mu: f64) -> f64 {
        match self {
            Family::Logistic | Family::Probit => mu * (1.0 - mu),
            Family::Poisson => mu,
        }
    }

    #[inline]
    fn loglik(self, y: f64, eta: f64) -> f64 {
        match self {
            Family::Logistic => y * eta - log1pexp(eta),
            Family::Probit => y * log_normal_cdf(eta) + (1.0 - y) * log_normal_cdf(-eta),
            Family::Poisson => {
                let eta = eta.min(700.0);
                y * eta - eta.exp() - ln_gamma(y + 1.0)
            }
        }
    }

    fn start(self, y: f64) -> f64 {
        match self {
            Family::Logistic => {
                let m = (y + 0.5) / 2.0;
                (m / (1.0 - m)).ln()
            }
            Family::Probit => normal_quantile((y + 0.5) / 2.0).unwrap_or(0.0),
            Family::Poisson => (y + 0.1).ln(),
        }
    }

    fn validate(self, y: &DVector<f64>) -> Result<()> {
        let ok = match self {
            Family::Logistic | Family::Probit => y.iter().all(|&v| v == 0.0 || v == 1.0),
            Family::Poisson => y.iter().all(|&v| v >= 0.0 && v.is_finite()),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidData(format!(
                "response is not valid for the {self:?} family"
            )))
        }
    }
}

#[derive(Debug, Clone)]
pub struct GlmFit {
    pub coef: DVector<f64>,
    /// Inverse Fisher information (XᵀWX)⁻¹.
    pub cov_fisher: DMatrix<f64>,
    /// Sandwich covariance, computed when prior weights are supplied.
    pub cov_sandwich: Option<DMatrix<f64>>,
    pub loglik: f64,
    pub fitted: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn weighted_loglik(family: Family, y: &DVector<f64>, eta: &DVector<f64>, prior: Option<&[f64]>) -> f64 {
    (0..y.len())
        .map(|i| prior.map_or(1.0, |w| w[i]) * family.loglik(y[i], eta[i]))
        .sum()
}

/// Fits a GLM by IRLS. Column names are used for error messages only.
pub fn irls(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    prior: Option<&[f64]>,
    family: Family,
    names: &[String],
) -> Result<GlmFit> {
    let (n, p) = x.shape();
    family.validate(y)?;
    if n <= p {
        return Err(Error::TooFewObservations { have: n, need: p + 1 });
    }
    let name_of = |j: usize| names.get(j).cloned().unwrap_or_else(|| format!("#{j}"));

    // Start from a least-squares fit of the linearized start values.
    let z0 = DVector::from_iterator(n, y.iter().map(|&v| family.start(v)));
    let mut coef = least_squares(x, &z0, prior)
        .map_err(|e| match e {
            Error::SingularDesign { column } => Error::SingularDesign {
                column: column
                    .trim_start_matches('#')
                    .parse::<usize>()
                    .map(name_of)
                    .unwrap_or(column),
            },
            other => other,
        })?
        .coef;
    let mut eta = x * &coef;
    let mut ll = weighted_loglik(family, y, &eta, prior);
    let mut converged = false;
    let mut iterations = 0;
    let mut xtwx = DMatrix::zeros(p, p);

    while iterations < MAX_ITER {
        iterations += 1;
        let mut xtwz = DVector::zeros(p);
        xtwx.fill(0.0);
        for i in 0..n {
            let mu = family.mean(eta[i]);
            let d = family.mean_derivative(eta[i], mu).max(1e-300);
            let v = family.variance(mu).max(1e-300);
            let w = prior.map_or(1.0, |pw| pw[i]) * d * d / v;
            let z = eta[i] + (y[i] - mu) / d;
            let row = x.row(i);
            for j in 0..p {
                let wj = w * row[j];
                xtwz[j] += wj * z;
                for k in 0..=j {
                    xtwx[(j, k)] += wj * row[k];
                }
            }
        }
        for j in 0..p {
            for k in 0..j {
                xtwx[(k, j)] = xtwx[(j, k)];
            }
        }
        let chol = xtwx.clone().cholesky().ok_or_else(|| Error::SingularDesign {
            column: name_of(p.saturating_sub(1)),
        })?;
        let target = chol.solve(&xtwz);

        let mut step = &target - &coef;
        let mut accepted = false;
        for _ in 0..30 {
            let trial = &coef + &step;
            let trial_eta = x * &trial;
            let trial_ll = weighted_loglik(family, y, &trial_eta, prior);
            if trial_ll.is_finite() && trial_ll >= ll - 1e-12 * ll.abs() {
                let change = (trial_ll - ll).abs() / (ll.abs() + 0.1);
                coef = trial;
                eta = trial_eta;
                ll = trial_ll;
                accepted = true;
                if change < DEVIANCE_TOL {
                    converged = true;
                }
                break;
            }
            step *= 0.5;
        }
        if family != Family::Poisson {
            if let Some(j) = (0..p).find(|&j| coef[j].abs() > SEPARATION_BOUND && step[j].abs() > 1e-6) {
                return Err(Error::Separation { column: name_of(j) });
            }
        }
        if converged || !accepted {
            break;
        }
    }

    // Final information matrix at the converged coefficients.
    let mut info = DMatrix::zeros(p, p);
    let mut meat = DMatrix::zeros(p, p);
    let mut fitted = DVector::zeros(n);
    for i in 0..n {
        let mu = family.mean(eta[i]);
        fitted[i] = mu;
        let d = family.mean_derivative(eta[i], mu).max(1e-300);
        let v = family.variance(mu).max(1e-300);
        let pw = prior.map_or(1.0, |w| w[i]);
        let w = pw * d * d / v;
        let s = pw * (y[i] - mu) * d / v;
        let row = x.row(i);
        for j in 0..p {
            for k in 0..=j {
                info[(j, k)] += w * row[j] * row[k];
                meat[(j, k)] += s * s * row[j] * row[k];
            }
        }
    }
    for j in 0..p {
        for k in 0..j {
            info[(k, j)] = info[(j, k)];
            meat[(k, j)] = meat[(j, k)];
        }
    }
    let cov_fisher = info
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Estimation("Fisher information is not positive definite".into()))?;
    let cov_sandwich = prior.map(|_| &cov_fisher * meat * &cov_fisher);
    Ok(GlmFit { coef, cov_fisher, cov_sandwich, loglik: ll, fitted, iterations, converged })
}
