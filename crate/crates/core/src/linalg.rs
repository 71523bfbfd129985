//! Dense real/complex matrix primitives used by the placement path.
//!
//! Everything here works on [`CMat`]. Matrices whose imaginary parts are all
//! exactly zero are routed through real-arithmetic factorizations so that real
//! inputs produce bases and inverses with identically zero imaginary parts.

use nalgebra::{DMatrix, Schur};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type RMat = DMatrix<f64>;

/// Numerical thresholds shared by the whole crate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToleranceConfig {
    /// Multiplier on `max(rows, cols) * eps * sigma_max` for rank decisions.
    pub rank_tol_factor: f64,
    /// Relative residual accepted for the closed-loop equation.
    pub residual_tol: f64,
    /// Condition estimates above this are treated as singular.
    pub singular_cond_limit: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self {
            rank_tol_factor: 1.0,
            residual_tol: 1e-8,
            singular_cond_limit: 1e12,
        }
    }
}

impl ToleranceConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("rank_tol_factor", self.rank_tol_factor),
            ("residual_tol", self.residual_tol),
            ("singular_cond_limit", self.singular_cond_limit),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Tolerance(format!(
                    "{name} must be finite and > 0, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Singular-value cutoff for an `rows x cols` matrix with largest singular value `smax`.
    pub fn rank_threshold(&self, rows: usize, cols: usize, smax: f64) -> f64 {
        self.rank_tol_factor * rows.max(cols) as f64 * f64::EPSILON * smax
    }
}

pub fn to_complex(m: &RMat) -> CMat {
    m.map(|x| Complex64::new(x, 0.0))
}

pub fn real_part(m: &CMat) -> RMat {
    m.map(|z| z.re)
}

pub fn imag_part(m: &CMat) -> RMat {
    m.map(|z| z.im)
}

pub fn is_real(m: &CMat) -> bool {
    m.iter().all(|z| z.im == 0.0)
}

pub fn max_abs_imag(m: &CMat) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.im.abs()))
}

pub fn fro_norm(m: &CMat) -> f64 {
    m.norm()
}

pub fn two_norm(m: &CMat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    if is_real(m) {
        let s = real_part(m).svd(false, false).singular_values;
        s.iter().fold(0.0, |a: f64, &b| a.max(b))
    } else {
        let s = m.clone().svd(false, false).singular_values;
        s.iter().fold(0.0, |a: f64, &b| a.max(b))
    }
}

/// Singular values in nonincreasing order.
pub fn singular_values(m: &CMat) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let s = if is_real(m) {
        real_part(m).svd(false, false).singular_values
    } else {
        m.clone().svd(false, false).singular_values
    };
    let mut s: Vec<f64> = s.iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    s
}

pub fn numerical_rank(m: &CMat, tol: &ToleranceConfig) -> usize {
    let s = singular_values(m);
    let smax = s.first().copied().unwrap_or(0.0);
    let thr = tol.rank_threshold(m.nrows(), m.ncols(), smax);
    s.iter().filter(|&&x| x > thr).count()
}

/// Full right-singular basis `V` (cols x cols) and singular values, sorted.
fn full_right_svd(m: &CMat) -> (CMat, Vec<f64>) {
    let (r, c) = m.shape();
    if is_real(m) {
        let mut a = real_part(m);
        if r < c {
            a = a.resize_vertically(c, 0.0);
        }
        let svd = a.svd(false, true);
        let v = svd.v_t.expect("requested V").transpose();
        (
            to_complex(&v),
            svd.singular_values.iter().copied().collect(),
        )
    } else {
        let mut a = m.clone();
        if r < c {
            a = a.resize_vertically(c, Complex64::new(0.0, 0.0));
        }
        let svd = a.svd(false, true);
        let v = svd.v_t.expect("requested V").adjoint();
        (v, svd.singular_values.iter().copied().collect())
    }
}

/// Orthonormal basis of the kernel of `m`, one column per null direction.
///
/// An injective `m` yields a matrix with zero columns.
pub fn kernel_basis(m: &CMat, tol: &ToleranceConfig) -> CMat {
    let (r, c) = m.shape();
    let (v, s) = full_right_svd(m);
    let smax = s.first().copied().unwrap_or(0.0);
    let thr = tol.rank_threshold(r, c, smax);
    let rank = s.iter().filter(|&&x| x > thr).count();
    v.columns(rank, c - rank).into_owned()
}

/// The `d` right singular vectors of `m` belonging to its smallest singular values.
pub fn smallest_right_singular_vectors(m: &CMat, d: usize) -> CMat {
    let c = m.ncols();
    let (v, _) = full_right_svd(m);
    v.columns(c - d.min(c), d.min(c)).into_owned()
}

/// Moore-Penrose pseudoinverse with singular values below the rank threshold truncated.
pub fn pseudo_inverse(m: &CMat, tol: &ToleranceConfig) -> CMat {
    let (r, c) = m.shape();
    if is_real(m) {
        let svd = real_part(m).svd(true, true);
        let u = svd.u.as_ref().expect("requested U");
        let vt = svd.v_t.as_ref().expect("requested V");
        let smax = svd.singular_values.iter().fold(0.0, |a: f64, &b| a.max(b));
        let thr = tol.rank_threshold(r, c, smax);
        let mut out = RMat::zeros(c, r);
        for (k, &s) in svd.singular_values.iter().enumerate() {
            if s > thr {
                out += (vt.row(k).transpose() * u.column(k).transpose()) / s;
            }
        }
        to_complex(&out)
    } else {
        let svd = m.clone().svd(true, true);
        let u = svd.u.as_ref().expect("requested U");
        let vt = svd.v_t.as_ref().expect("requested V");
        let smax = svd.singular_values.iter().fold(0.0, |a: f64, &b| a.max(b));
        let thr = tol.rank_threshold(r, c, smax);
        let mut out = CMat::zeros(c, r);
        for (k, &s) in svd.singular_values.iter().enumerate() {
            if s > thr {
                out += (vt.row(k).adjoint() * u.column(k).adjoint()).unscale(s);
            }
        }
        out
    }
}

/// Complex Schur form `a = u * t * u^H` with `t` upper triangular.
///
/// The QR iteration can stall just above the deflation threshold on clustered
/// spectra, so the threshold is relaxed step by step (up to about `1e-9`
/// relative) with a bounded iteration count at each step.
pub fn schur_triangular(a: &CMat) -> Result<(CMat, CMat)> {
    if !a.is_square() {
        return Err(Error::Dimension("Schur form needs a square matrix".into()));
    }
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::SchurNoConvergence);
    }
    let max_iter = 100 * a.nrows().max(1);
    let schur = (0..8)
        .map(|k| f64::EPSILON * 16f64.powi(k))
        .find_map(|eps| Schur::try_new(a.clone(), eps, max_iter))
        .ok_or(Error::SchurNoConvergence)?;
    let (u, mut t) = schur.unpack();
    let n = t.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            t[(i, j)] = Complex64::new(0.0, 0.0);
        }
    }
    Ok((u, t))
}

/// Inverse of a square matrix through LU, with the 1-norm condition number.
pub(crate) fn lu_inverse_with_cond(a: &CMat, limit: f64) -> Result<(CMat, f64)> {
    let n = a.nrows();
    let inv = a.clone().lu().try_inverse().ok_or(Error::Singular {
        cond: f64::INFINITY,
    })?;
    let cond = one_norm(a) * one_norm(&inv);
    if !cond.is_finite() || cond > limit || n == 0 {
        return Err(Error::Singular { cond });
    }
    Ok((inv, cond))
}

pub(crate) fn one_norm(a: &CMat) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}
