//! Dense weighted least squares via Householder QR.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative threshold on |R_jj| / ‖x_j‖ below which column j is declared dependent.
const RANK_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct LeastSquaresFit {
    pub coef: DVector<f64>,
    /// σ̂²(XᵀWX)⁻¹ with σ̂² = Σwᵢeᵢ² / (n − p).
    pub cov_classical: DMatrix<f64>,
    /// HC0: (XᵀWX)⁻¹ XᵀW diag(e²) WX (XᵀWX)⁻¹.
    pub cov_sandwich: DMatrix<f64>,
    /// Unweighted residuals y − Xβ̂.
    pub residuals: DVector<f64>,
    /// (XᵀWX)⁻¹
    pub bread: DMatrix<f64>,
    /// Σwᵢeᵢ²
    pub weighted_rss: f64,
}

/// Weighted least squares. Rank deficiency reports the first dependent column by index.
pub fn least_squares(
    design: &DMatrix<f64>,
    response: &DVector<f64>,
    weights: Option<&[f64]>,
) -> Result<LeastSquaresFit> {
    let (n, p) = design.shape();
    if response.len() != n {
        return Err(Error::InvalidData(format!(
            "response has {} rows, design has {n}",
            response.len()
        )));
    }
    if n <= p {
        return Err(Error::TooFewObservations { have: n, need: p + 1 });
    }
    if let Some(w) = weights {
        if w.len() != n || w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidData("weights must be finite, non-negative, one per row".into()));
        }
    }
    let sqrt_w: Option<Vec<f64>> = weights.map(|w| w.iter().map(|v| v.sqrt()).collect());
    let mut a = design.clone();
    let mut b = response.clone();
    if let Some(sw) = &sqrt_w {
        for i in 0..n {
            a.row_mut(i).scale_mut(sw[i]);
            b[i] *= sw[i];
        }
    }
    let col_norms: Vec<f64> = (0..p).map(|j| a.column(j).norm()).collect();

    let qr = a.qr();
    let r = qr.r();
    for j in 0..p {
        if !(r[(j, j)].abs() > RANK_TOL * col_norms[j].max(f64::MIN_POSITIVE)) {
            return Err(Error::SingularDesign { column: format!("#{j}") });
        }
    }
    qr.q_tr_mul(&mut b);
    let qtb = b.rows(0, p).into_owned();
    let coef = r
        .solve_upper_triangular(&qtb)
        .ok_or_else(|| Error::SingularDesign { column: "#?".into() })?;
    let rinv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or_else(|| Error::SingularDesign { column: "#?".into() })?;
    let bread = &rinv * rinv.transpose();

    let residuals = response - design * &coef;
    let w_at = |i: usize| weights.map_or(1.0, |w| w[i]);
    let weighted_rss: f64 = (0..n).map(|i| w_at(i) * residuals[i] * residuals[i]).sum();
    let sigma2 = weighted_rss / (n - p) as f64;
    let cov_classical = &bread * sigma2;

    let mut meat = DMatrix::zeros(p, p);
    for i in 0..n {
        let s = w_at(i) * residuals[i];
        let s2 = s * s;
        if s2 == 0.0 {
            continue;
        }
        let row = design.row(i);
        for j in 0..p {
            let rj = row[j] * s2;
            for k in 0..=j {
                meat[(j, k)] += rj * row[k];
            }
        }
    }
    for j in 0..p {
        for k in 0..j {
            meat[(k, j)] = meat[(j, k)];
        }
    }
    let cov_sandwich = &bread * meat * &bread;

    Ok(LeastSquaresFit { coef, cov_classical, cov_sandwich, residuals, bread, weighted_rss })
}

/// Inverse of a symmetric positive-definite matrix by Cholesky; `None` if not PD.
pub fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    m.clone().cholesky().map(|c| c.inverse())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0]);
        let y = DVector::from_vec(vec![1.0, 3.0, 5.0]);
        let fit = least_squares(&x, &y, None).unwrap();
        assert!((fit.coef[0] - 1.0).abs() < 1e-14 && (fit.coef[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn equal_weights_leave_hc0_unchanged() {
        let x = DMatrix::from_fn(20, 2, |i, j| if j == 0 { 1.0 } else { (i as f64).sin() * 3.0 });
        let y = DVector::from_fn(20, |i, _| (i as f64 * 0.7).cos() + 0.5 * i as f64);
        let plain = least_squares(&x, &y, None).unwrap();
        let weighted = least_squares(&x, &y, Some(&[3.0; 20])).unwrap();
        assert!((plain.cov_sandwich - weighted.cov_sandwich).abs().max() < 1e-12);
        assert!((plain.coef - weighted.coef).abs().max() < 1e-12);
    }

    #[test]
    fn dependent_column_is_named() {
        let x = DMatrix::from_fn(10, 3, |i, j| match j {
            0 => 1.0,
            1 => i as f64,
            _ => 2.0 * i as f64 + 1.0,
        });
        let y = DVector::from_fn(10, |i, _| i as f64);
        match least_squares(&x, &y, None) {
            Err(Error::SingularDesign { column }) => assert_eq!(column, "#2"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
