//! Normal-distribution special functions.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::OnceLock;

use libm::erfc;

use crate::error::{Error, Result};

/// 1/√(2π)
pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
/// ln √(2π)
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
/// Two-sided 95% normal critical value.
pub const Z_975: f64 = 1.959_963_984_540_054;

/// Beyond this point the Mills ratio is evaluated by continued fraction.
const TAIL_SWITCH: f64 = 5.0;
const CF_TERMS: usize = 120;

pub fn normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail 1 − Φ(x), accurate for large positive x.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x * FRAC_1_SQRT_2)
}

/// Mills ratio R(t) = (1 − Φ(t)) / φ(t) for t > 0 by backward continued fraction.
fn mills_ratio_cf(t: f64) -> f64 {
    let mut acc = t;
    for k in (1..=CF_TERMS).rev() {
        acc = t + k as f64 / acc;
    }
    1.0 / acc
}

/// Inverse Mills ratio φ(x) / (1 − Φ(x)).
pub fn inverse_mills(x: f64) -> f64 {
    if x > TAIL_SWITCH {
        1.0 / mills_ratio_cf(x)
    } else {
        normal_pdf(x) / normal_sf(x)
    }
}

/// ln Φ(x), finite for every finite x.
pub fn log_normal_cdf(x: f64) -> f64 {
    if x < -TAIL_SWITCH {
        -0.5 * x * x - LN_SQRT_2PI + mills_ratio_cf(-x).ln()
    } else if x > 0.0 {
        (-normal_sf(x)).ln_1p()
    } else {
        normal_cdf(x).ln()
    }
}

/// Returns (ln Φ(v), φ(v)/Φ(v)) sharing one evaluation.
#[inline]
pub fn log_cdf_and_hazard(v: f64) -> (f64, f64) {
    if v < -TAIL_SWITCH {
        let r = mills_ratio_cf(-v);
        (-0.5 * v * v - LN_SQRT_2PI + r.ln(), 1.0 / r)
    } else {
        let c = normal_cdf(v);
        (c.ln(), normal_pdf(v) / c)
    }
}

const ACKLAM_A: [f64; 6] = [
    -3.969_683_028_665_376e1,
    2.209_460_984_245_205e2,
    -2.759_285_104_469_687e2,
    1.383_577_518_672_69e2,
    -3.066_479_806_614_716e1,
    2.506_628_277_459_239,
];
const ACKLAM_B: [f64; 5] = [
    -5.447_609_879_822_406e1,
    1.615_858_368_580_409e2,
    -1.556_989_798_598_866e2,
    6.680_131_188_771_972e1,
    -1.328_068_155_288_572e1,
];
const ACKLAM_C: [f64; 6] = [
    -7.784_894_002_430_293e-3,
    -3.223_964_580_411_365e-1,
    -2.400_758_277_161_838,
    -2.549_732_539_343_734,
    4.374_664_141_464_968,
    2.938_163_982_698_783,
];
const ACKLAM_D: [f64; 4] = [
    7.784_695_709_041_462e-3,
    3.224_671_290_700_398e-1,
    2.445_134_137_142_996,
    3.754_408_661_907_416,
];
const ACKLAM_LOW: f64 = 0.024_25;

/// Rational approximation to Φ⁻¹(p), |error| < 1.15e-9. Caller guarantees 0 < p < 1.
#[inline]
pub(crate) fn acklam(p: f64) -> f64 {
    let (a, b, c, d) = (ACKLAM_A, ACKLAM_B, ACKLAM_C, ACKLAM_D);
    if p < ACKLAM_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5])
            / ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    } else if p <= 1.0 - ACKLAM_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q
            / (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5])
            / ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    }
}

/// Φ⁻¹(p) refined by one Halley step to near machine precision.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!(
            "normal quantile requires 0 < p < 1, got {p}"
        )));
    }
    // Refine in the lower tail where Φ is computed without cancellation.
    let (tail, sign) = if p > 0.5 { (1.0 - p, -1.0) } else { (p, 1.0) };
    let mut x = acklam(tail);
    let e = normal_cdf(x) - tail;
    let u = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
    x -= u / (1.0 + 0.5 * x * u);
    Ok(sign * x)
}

struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    fn new(n: usize) -> Self {
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut pp;
            loop {
                let (mut p1, mut p2) = (1.0, 0.0);
                for j in 1..=n {
                    let p3 = p2;
                    p2 = p1;
                    p1 = ((2.0 * j as f64 - 1.0) * z * p2 - (j as f64 - 1.0) * p3) / j as f64;
                }
                pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() < 1e-15 {
                    break;
                }
            }
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            let w = 2.0 / ((1.0 - z * z) * pp * pp);
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    fn integrate(&self, lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        let s: f64 = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mid + half * x))
            .sum();
        half * s
    }
}

fn gauss_legendre(n: usize) -> &'static GaussLegendre {
    static GL33: OnceLock<GaussLegendre> = OnceLock::new();
    static GL65: OnceLock<GaussLegendre> = OnceLock::new();
    match n {
        33 => GL33.get_or_init(|| GaussLegendre::new(33)),
        _ => GL65.get_or_init(|| GaussLegendre::new(65)),
    }
}

/// P(X ≤ h, Y ≤ k) for a standard bivariate normal with correlation ρ.
///
/// Uses Φ₂ = Φ(h)Φ(k) + (1/2π)∫₀^{asin ρ} exp(−(h²+k²−2hk sin t)/(2cos²t)) dt
/// with 33 Gauss–Legendre nodes, 65 when |ρ| > 0.9.
pub fn bivariate_normal_cdf(h: f64, k: f64, rho: f64) -> f64 {
    if rho >= 1.0 {
        return normal_cdf(h.min(k));
    }
    if rho <= -1.0 {
        return (normal_cdf(h) - normal_cdf(-k)).max(0.0);
    }
    let base = normal_cdf(h) * normal_cdf(k);
    if rho == 0.0 {
        return base;
    }
    let rule = gauss_legendre(if rho.abs() > 0.9 { 65 } else { 33 });
    let hk = h * k;
    let hh_kk = h * h + k * k;
    let integral = rule.integrate(0.0, rho.asin(), |t| {
        let (s, c) = t.sin_cos();
        (-(hh_kk - 2.0 * hk * s) / (2.0 * c * c)).exp()
    });
    let upper = normal_cdf(h).min(normal_cdf(k));
    (base + integral / (2.0 * PI)).clamp(0.0, upper)
}
