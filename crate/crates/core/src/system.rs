use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{numerical_rank, to_complex, CMat, RMat, ToleranceConfig};

/// A real LTI pair `(A, B)` with `A` n x n and `B` n x m of full column rank.
#[derive(Debug, Clone, PartialEq)]
pub struct System {
    a: RMat,
    b: RMat,
}

impl System {
    pub fn new(a: RMat, b: RMat) -> Result<Self> {
        if !a.is_square() || a.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "A must be square and non-empty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != a.nrows() || b.ncols() == 0 {
            return Err(Error::Dimension(format!(
                "B must be {}xm with m >= 1, got {}x{}",
                a.nrows(),
                b.nrows(),
                b.ncols()
            )));
        }
        if a.iter().chain(b.iter()).any(|x| !x.is_finite()) {
            return Err(Error::Dimension("A and B must have finite entries".into()));
        }
        let rank = numerical_rank(&to_complex(&b), &ToleranceConfig::default());
        if rank < b.ncols() {
            return Err(Error::InputRankDeficient { rank, m: b.ncols() });
        }
        Ok(Self { a, b })
    }

    pub fn from_rows(n: usize, m: usize, a: &[f64], b: &[f64]) -> Result<Self> {
        if a.len() != n * n || b.len() != n * m {
            return Err(Error::Dimension(format!(
                "expected {} entries for A and {} for B, got {} and {}",
                n * n,
                n * m,
                a.len(),
                b.len()
            )));
        }
        Self::new(RMat::from_row_slice(n, n, a), RMat::from_row_slice(n, m, b))
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn a(&self) -> &RMat {
        &self.a
    }

    pub fn b(&self) -> &RMat {
        &self.b
    }

    /// The pencil `[A - lambda I, B]`.
    pub fn pencil(&self, lambda: Complex64) -> CMat {
        let (n, m) = (self.n(), self.m());
        let mut s = CMat::zeros(n, n + m);
        for i in 0..n {
            for j in 0..n {
                s[(i, j)] = Complex64::new(self.a[(i, j)], 0.0);
            }
            s[(i, i)] -= lambda;
            for j in 0..m {
                s[(i, n + j)] = Complex64::new(self.b[(i, j)], 0.0);
            }
        }
        s
    }

    /// `A + B F` for a real m x n feedback.
    pub fn closed_loop(&self, f: &RMat) -> RMat {
        &self.a + &self.b * f
    }
}
