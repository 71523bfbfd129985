//! Robustness and gain measures of a placement.

use num_complex::Complex64;

use crate::eigstructure::EigStructure;
use crate::error::{Error, Result};
use crate::linalg::{
    fro_norm, lu_inverse_with_cond, schur_triangular, singular_values, to_complex, CMat,
    ToleranceConfig,
};
use crate::placement::PlacementResult;
use crate::system::System;

/// `||X||_F ||X^-1||_F`.
pub fn kappa_fro(x: &CMat, tol: &ToleranceConfig) -> Result<f64> {
    let (inv, _) = lu_inverse_with_cond(x, tol.singular_cond_limit)?;
    let k = fro_norm(x) * fro_norm(&inv);
    if k > tol.singular_cond_limit {
        return Err(Error::Singular { cond: k });
    }
    Ok(k)
}

/// `||X||_2 ||X^-1||_2`, the ratio of extreme singular values.
pub fn kappa_2(x: &CMat, tol: &ToleranceConfig) -> Result<f64> {
    if !x.is_square() {
        return Err(Error::Dimension(
            "condition number needs a square matrix".into(),
        ));
    }
    let s = singular_values(x);
    let (max, min) = (s[0], s[s.len() - 1]);
    let k = max / min;
    if !(min > 0.0) || !k.is_finite() || k > tol.singular_cond_limit {
        return Err(Error::Singular { cond: k });
    }
    Ok(k)
}

/// Frobenius norm of the strictly upper triangular part of a Schur form of `a`.
pub fn departure_from_normality(a: &CMat) -> Result<f64> {
    let (_, t) = schur_triangular(a)?;
    let n = t.nrows();
    let mut sum = 0.0;
    for j in 0..n {
        for i in 0..j {
            sum += t[(i, j)].norm_sqr();
        }
    }
    Ok(sum.sqrt())
}

/// `sqrt(||a||_F^2 - sum |lambda_i|^2)` for a known spectrum.
pub fn departure_from_normality_by_trace(a: &CMat, eigenvalues: &[Complex64]) -> f64 {
    let s: f64 = eigenvalues.iter().map(|z| z.norm_sqr()).sum();
    (a.norm_squared() - s).max(0.0).sqrt()
}

/// Checks the Jordan-aware eigenvalue perturbation bound.
///
/// With `A = X Lambda X^-1` assembled from `spec`, every eigenvalue `mu` of
/// `A + H` must have some requested `lambda` with
/// `|lambda - mu|^l / (1 + |lambda - mu|)^(l-1) <= kappa_2(X) ||H||_2`,
/// `l` being the largest mini-block order of `lambda`. The right side carries
/// an allowance for the rounding made while forming `A` and its eigenvalues.
pub fn sensitivity_bound_check(
    x: &CMat,
    h: &CMat,
    spec: &EigStructure,
    tol: &ToleranceConfig,
) -> Result<bool> {
    let n = spec.order();
    if x.shape() != (n, n) || h.shape() != (n, n) {
        return Err(Error::Dimension(format!("X and H must be {n}x{n}")));
    }
    let (x_inv, _) = lu_inverse_with_cond(x, tol.singular_cond_limit)?;
    let a = x * spec.jordan_matrix() * &x_inv;
    let perturbed = &a + h;
    let (_, t) = schur_triangular(&perturbed)?;
    let k2 = kappa_2(x, tol)?;
    let h2 = singular_values(h).first().copied().unwrap_or(0.0);
    let rounding = 16.0
        * n as f64
        * f64::EPSILON
        * (fro_norm(&perturbed) + k2 * fro_norm(&spec.jordan_matrix()));
    let rhs = k2 * (h2 + rounding);
    let holds = (0..n).all(|i| {
        let mu = t[(i, i)];
        spec.groups().iter().any(|g| {
            let l = g.blocks[0] as i32;
            let d = (g.value - mu).norm();
            d.powi(l) / (1.0 + d).powi(l - 1) <= rhs
        })
    });
    Ok(holds)
}

/// Report-ready metrics of one placement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub kappa_fro_v: f64,
    pub kappa_2_v: f64,
    pub kappa_fro_x: f64,
    pub delta_fro: f64,
    pub gain_fro: f64,
}

impl Metrics {
    pub fn of(sys: &System, placement: &PlacementResult, tol: &ToleranceConfig) -> Result<Self> {
        let v = to_complex(&placement.v);
        let acl = to_complex(&sys.closed_loop(&placement.f));
        Ok(Self {
            kappa_fro_v: placement.v.norm() * placement.v_inv.norm(),
            kappa_2_v: kappa_2(&v, tol)?,
            kappa_fro_x: kappa_fro(&placement.x, tol)?,
            delta_fro: departure_from_normality(&acl)?,
            gain_fro: placement.gain(),
        })
    }
}
