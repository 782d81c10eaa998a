//! BFGS minimizer with backtracking line search and finite-difference derivatives.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Tolerances and switches for [`minimize`].
#[derive(Debug, Clone)]
pub struct MinimizeSettings {
    /// Converged when ‖g‖ ≤ gradient_tolerance · (1 + |f|).
    pub gradient_tolerance: f64,
    /// Relative step size treated as stagnation.
    pub step_tolerance: f64,
    pub max_iterations: usize,
    pub compute_hessian: bool,
    /// Starting inverse-Hessian approximation; identity when absent.
    pub initial_inverse_hessian: Option<DMatrix<f64>>,
}

impl Default for MinimizeSettings {
    fn default() -> Self {
        Self {
            gradient_tolerance: 1e-6,
            step_tolerance: 1e-9,
            max_iterations: 500,
            compute_hessian: true,
            initial_inverse_hessian: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimResult {
    pub argmin: Vec<f64>,
    pub objective_value: f64,
    /// Symmetrized numerical Hessian at the argmin, if requested.
    pub hessian: Option<DMatrix<f64>>,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub message: Option<String>,
}

/// Objective function for [`minimize`]. The default gradient is a central difference.
pub trait Objective {
    fn value(&self, x: &[f64]) -> f64;

    /// Writes ∇f(x) into `grad` and returns f(x).
    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        central_gradient(|y| self.value(y), x, grad);
        self.value(x)
    }

    fn has_analytic_gradient(&self) -> bool {
        false
    }
}

impl<F: Fn(&[f64]) -> f64> Objective for F {
    fn value(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

/// Pairs a value function with an analytic value-and-gradient function.
pub struct WithGradient<F, G> {
    pub value: F,
    pub value_and_gradient: G,
}

impl<F, G> Objective for WithGradient<F, G>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64], &mut [f64]) -> f64,
{
    fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        (self.value_and_gradient)(x, grad)
    }

    fn has_analytic_gradient(&self) -> bool {
        true
    }
}

#[inline]
fn gradient_step(x: f64) -> f64 {
    f64::EPSILON.cbrt() * x.abs().max(1.0)
}

#[inline]
fn hessian_step(x: f64) -> f64 {
    f64::EPSILON.powf(0.25) * x.abs().max(1.0)
}

fn central_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], grad: &mut [f64]) {
    let mut work = x.to_vec();
    for i in 0..x.len() {
        let h = gradient_step(x[i]);
        work[i] = x[i] + h;
        let up = f(&work);
        work[i] = x[i] - h;
        let down = f(&work);
        work[i] = x[i];
        grad[i] = (up - down) / (2.0 * h);
    }
}

/// Central-difference gradient with step cbrt(eps)·max(1, |xᵢ|).
pub fn numerical_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    central_gradient(f, x, &mut g);
    g
}

/// Central second-difference Hessian with step eps^(1/4)·max(1, |xᵢ|), symmetrized.
pub fn numerical_hessian(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> DMatrix<f64> {
    let n = x.len();
    let f0 = f(x);
    let h: Vec<f64> = x.iter().map(|&v| hessian_step(v)).collect();
    let mut w = x.to_vec();
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        w[i] = x[i] + h[i];
        let up = f(&w);
        w[i] = x[i] - h[i];
        let down = f(&w);
        w[i] = x[i];
        out[(i, i)] = (up - 2.0 * f0 + down) / (h[i] * h[i]);
        for j in 0..i {
            let mut corner = |si: f64, sj: f64| {
                w[i] = x[i] + si * h[i];
                w[j] = x[j] + sj * h[j];
                let v = f(&w);
                w[i] = x[i];
                w[j] = x[j];
                v
            };
            let v = (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0) + corner(-1.0, -1.0))
                / (4.0 * h[i] * h[j]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

/// Hessian from central differences of an analytic gradient, symmetrized.
fn hessian_from_gradient<O: Objective + ?Sized>(obj: &O, x: &[f64]) -> DMatrix<f64> {
    let n = x.len();
    let mut w = x.to_vec();
    let mut gp = vec![0.0; n];
    let mut gm = vec![0.0; n];
    let mut out = DMatrix::zeros(n, n);
    for j in 0..n {
        let h = gradient_step(x[j]);
        w[j] = x[j] + h;
        obj.value_and_gradient(&w, &mut gp);
        w[j] = x[j] - h;
        obj.value_and_gradient(&w, &mut gm);
        w[j] = x[j];
        for i in 0..n {
            out[(i, j)] = (gp[i] - gm[i]) / (2.0 * h);
        }
    }
    (&out + out.transpose()) * 0.5
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Point {
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
}

fn evaluate<O: Objective + ?Sized>(obj: &O, x: Vec<f64>) -> Point {
    let mut g = vec![0.0; x.len()];
    let f = obj.value_and_gradient(&x, &mut g);
    Point { x, f, g }
}

fn finite(p: &Point) -> bool {
    p.f.is_finite() && p.g.iter().all(|v| v.is_finite())
}

/// Minimizes `objective` from `start` by BFGS.
pub fn minimize<O: Objective + ?Sized>(
    objective: &O,
    start: &[f64],
    settings: &MinimizeSettings,
) -> Result<OptimResult> {
    let n = start.len();
    let mut cur = evaluate(objective, start.to_vec());
    if !finite(&cur) {
        return Err(Error::Domain(
            "objective or gradient is not finite at the starting point".into(),
        ));
    }
    let identity = DMatrix::<f64>::identity(n, n);
    let custom_start = settings
        .initial_inverse_hessian
        .as_ref()
        .filter(|m| m.nrows() == n && m.ncols() == n)
        .cloned();
    let mut hinv = custom_start.clone().unwrap_or_else(|| identity.clone());
    let mut scaled = custom_start.is_some();
    let mut restarted = false;
    let mut converged = false;
    let mut message = None;
    let mut iterations = 0;
    let analytic = objective.has_analytic_gradient();

    loop {
        let gnorm = norm(&cur.g);
        if gnorm <= settings.gradient_tolerance * (1.0 + cur.f.abs()) {
            converged = true;
            break;
        }
        if iterations >= settings.max_iterations {
            message = Some(format!("iteration cap {} reached", settings.max_iterations));
            break;
        }
        iterations += 1;

        let mut d: Vec<f64> = (0..n)
            .map(|i| -(0..n).map(|j| hinv[(i, j)] * cur.g[j]).sum::<f64>())
            .collect();
        let mut slope = dot(&cur.g, &d);
        if !(slope < 0.0) {
            hinv.copy_from(&identity);
            scaled = false;
            d = cur.g.iter().map(|v| -v).collect();
            slope = -gnorm * gnorm;
        }
        let mut alpha = if scaled { 1.0 } else { (1.0 / norm(&d)).min(1.0) };

        let mut accepted = None;
        for _ in 0..60 {
            let xt: Vec<f64> = cur.x.iter().zip(&d).map(|(x, s)| x + alpha * s).collect();
            let (ft, trial) = if analytic {
                let p = evaluate(objective, xt.clone());
                (p.f, Some(p))
            } else {
                (objective.value(&xt), None)
            };
            if ft.is_finite() && ft <= cur.f + 1e-4 * alpha * slope {
                let p = match trial {
                    Some(p) if finite(&p) => p,
                    Some(_) => {
                        alpha *= 0.1;
                        continue;
                    }
                    None => evaluate(objective, xt),
                };
                accepted = Some(p);
                break;
            }
            alpha = if ft.is_finite() {
                let q = -slope * alpha * alpha / (2.0 * (ft - cur.f - slope * alpha));
                q.clamp(0.1 * alpha, 0.5 * alpha)
            } else {
                0.1 * alpha
            };
        }

        let stalled = match &accepted {
            None => true,
            Some(p) => cur
                .x
                .iter()
                .zip(&p.x)
                .all(|(a, b)| (a - b).abs() <= settings.step_tolerance * (1.0 + a.abs())),
        };

        if let Some(next) = accepted {
            let s: Vec<f64> = next.x.iter().zip(&cur.x).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = next.g.iter().zip(&cur.g).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &y);
            if sy > 1e-12 * norm(&s) * norm(&y) {
                if !scaled {
                    hinv = &identity * (sy / dot(&y, &y));
                    scaled = true;
                }
                bfgs_update(&mut hinv, &s, &y, sy);
            }
            cur = next;
        }

        if stalled {
            let gnorm = norm(&cur.g);
            if gnorm <= settings.gradient_tolerance * (1.0 + cur.f.abs()) {
                converged = true;
                break;
            }
            if hinv != identity && !restarted && message.is_none() {
                hinv.copy_from(&identity);
                scaled = false;
                message = Some("line search failed; inverse Hessian reset".into());
                continue;
            }
            if restarted {
                message = Some("stagnated after restart".into());
                break;
            }
            restarted = true;
            let perturbed: Vec<f64> = cur
                .x
                .iter()
                .enumerate()
                .map(|(i, &v)| v + if i % 2 == 0 { 1e-3 } else { -1e-3 } * (1.0 + v.abs()))
                .collect();
            let p = evaluate(objective, perturbed);
            if finite(&p) {
                cur = p;
            }
            hinv.copy_from(&identity);
            scaled = false;
            message = Some("restarted from perturbed point after stagnation".into());
        }
    }

    let hessian = if settings.compute_hessian {
        Some(if analytic {
            hessian_from_gradient(objective, &cur.x)
        } else {
            numerical_hessian(|v| objective.value(v), &cur.x)
        })
    } else {
        None
    };
    let gradient_norm = norm(&cur.g);
    if converged {
        message = None;
    }
    Ok(OptimResult {
        argmin: cur.x,
        objective_value: cur.f,
        hessian,
        converged,
        iterations,
        gradient_norm,
        message,
    })
}

fn bfgs_update(hinv: &mut DMatrix<f64>, s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| hinv[(i, j)] * y[j]).sum()).collect();
    let yhy = dot(y, &hy);
    let scale = (1.0 + rho * yhy) * rho;
    for i in 0..n {
        for j in 0..n {
            hinv[(i, j)] += scale * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}
