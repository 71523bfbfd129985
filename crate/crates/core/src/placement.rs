//! Parametric eigenstructure assignment.
//!
//! For each requested eigenvalue the pencil `S(lambda) = [A - lambda I, B]`
//! supplies an orthonormal kernel basis `N` and a pseudoinverse `M`. A
//! compatible parameter matrix `K` then generates Jordan chains
//!
//! ```text
//! h(1) = N K(:, 1)
//! h(l) = M * top(h(l - 1)) + N K(:, l)
//! ```
//!
//! whose top `n` rows satisfy `(A - lambda I) v(l) + B w(l) = v(l - 1)`. The
//! chain matrix is made real pairwise (real and imaginary parts of each
//! conjugate block), split into `V` (top n rows) and `W` (bottom m rows), and
//! the feedback is `F = W V^-1`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::eigstructure::EigStructure;
use crate::error::{Error, Result};
use crate::linalg::{
    fro_norm, is_real, kernel_basis, max_abs_imag, pseudo_inverse, real_part,
    smallest_right_singular_vectors, to_complex, CMat, RMat, ToleranceConfig,
};
use crate::system::System;

/// Imaginary residue tolerated (relative to the chain norm) before a real
/// quantity is declared not real.
pub const REALNESS_TOL: f64 = 1e-12;

/// Block-diagonal compatible parameter: block `i` is `m x m_i` for the i-th eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterMatrix {
    blocks: Vec<CMat>,
}

impl ParameterMatrix {
    pub fn new(blocks: Vec<CMat>) -> Self {
        Self { blocks }
    }

    pub fn blocks(&self) -> &[CMat] {
        &self.blocks
    }

    /// Number of free real coordinates, `m * n`.
    pub fn dim(spec: &EigStructure, m: usize) -> usize {
        m * spec.order()
    }

    /// Builds `K` from its free real coordinates.
    ///
    /// Layout, per eigenvalue in structure order: a real eigenvalue contributes
    /// its `m x m_i` block column-major; the leading member of a conjugate pair
    /// contributes the real parts and then the imaginary parts of its block;
    /// the trailing member contributes nothing (it is the conjugate).
    pub fn from_coords(spec: &EigStructure, m: usize, coords: &[f64]) -> Result<Self> {
        let want = Self::dim(spec, m);
        if coords.len() != want {
            return Err(Error::IncompatibleParameter(format!(
                "expected {want} real coordinates, got {}",
                coords.len()
            )));
        }
        let mut blocks: Vec<CMat> = Vec::with_capacity(spec.len());
        let mut pos = 0;
        for (i, g) in spec.groups().iter().enumerate() {
            let mi = g.multiplicity();
            let len = m * mi;
            if spec.is_pair_follower(i) {
                let prev = blocks[i - 1].map(|z| z.conj());
                blocks.push(prev);
            } else if spec.is_pair_leader(i) {
                let re = &coords[pos..pos + len];
                let im = &coords[pos + len..pos + 2 * len];
                pos += 2 * len;
                blocks.push(CMat::from_fn(m, mi, |r, c| {
                    Complex64::new(re[c * m + r], im[c * m + r])
                }));
            } else {
                let re = &coords[pos..pos + len];
                pos += len;
                blocks.push(CMat::from_fn(m, mi, |r, c| {
                    Complex64::new(re[c * m + r], 0.0)
                }));
            }
        }
        Ok(Self { blocks })
    }

    pub fn to_coords(&self, spec: &EigStructure) -> Vec<f64> {
        let mut out = Vec::new();
        for (i, k) in self.blocks.iter().enumerate() {
            if spec.is_pair_follower(i) {
                continue;
            }
            out.extend(k.iter().map(|z| z.re));
            if spec.is_pair_leader(i) {
                out.extend(k.iter().map(|z| z.im));
            }
        }
        out
    }

    /// Standard normal draw on every free coordinate.
    pub fn random<R: Rng + ?Sized>(spec: &EigStructure, m: usize, rng: &mut R) -> Self {
        let coords: Vec<f64> = (0..Self::dim(spec, m))
            .map(|_| rng.sample(StandardNormal))
            .collect();
        Self::from_coords(spec, m, &coords).expect("coordinate count matches by construction")
    }

    pub fn check_compatible(&self, spec: &EigStructure, m: usize) -> Result<()> {
        if self.blocks.len() != spec.len() {
            return Err(Error::IncompatibleParameter(format!(
                "{} blocks for {} eigenvalues",
                self.blocks.len(),
                spec.len()
            )));
        }
        for (i, (k, g)) in self.blocks.iter().zip(spec.groups()).enumerate() {
            if k.shape() != (m, g.multiplicity()) {
                return Err(Error::IncompatibleParameter(format!(
                    "block {i} is {}x{}, expected {m}x{}",
                    k.nrows(),
                    k.ncols(),
                    g.multiplicity()
                )));
            }
            if spec.is_pair_follower(i) {
                let lead = &self.blocks[i - 1];
                if k.iter().zip(lead.iter()).any(|(a, b)| *a != b.conj()) {
                    return Err(Error::IncompatibleParameter(format!(
                        "block {i} is not the conjugate of block {}",
                        i - 1
                    )));
                }
            } else if !spec.is_pair_leader(i) && !is_real(k) {
                return Err(Error::IncompatibleParameter(format!(
                    "block {i} belongs to a real eigenvalue but is complex"
                )));
            }
        }
        Ok(())
    }
}

/// Kernel basis and pseudoinverse of the pencil at one eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub struct PencilData {
    pub lambda: Complex64,
    /// `(n+m) x m`, orthonormal columns spanning `ker S(lambda)`.
    pub kernel: CMat,
    /// `(n+m) x n`, Moore-Penrose pseudoinverse of `S(lambda)`.
    pub pinv: CMat,
}

impl PencilData {
    fn conj(&self) -> Self {
        Self {
            lambda: self.lambda.conj(),
            kernel: self.kernel.map(|z| z.conj()),
            pinv: self.pinv.map(|z| z.conj()),
        }
    }
}

pub fn build_pencil(sys: &System, lambda: Complex64, tol: &ToleranceConfig) -> Result<PencilData> {
    let s = sys.pencil(lambda);
    let kernel = kernel_basis(&s, tol);
    if kernel.ncols() != sys.m() {
        return Err(Error::NotReachableAt {
            lambda,
            dim: kernel.ncols(),
            m: sys.m(),
        });
    }
    let pinv = pseudo_inverse(&s, tol);
    Ok(PencilData {
        lambda,
        kernel,
        pinv,
    })
}

/// Jordan chains, `chains[i][k]` being the `(n+m) x p_{i,k}` chain of mini-block k of eigenvalue i.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSet {
    chains: Vec<Vec<CMat>>,
}

impl ChainSet {
    pub fn new(chains: Vec<Vec<CMat>>) -> Self {
        Self { chains }
    }

    pub fn chains(&self) -> &[Vec<CMat>] {
        &self.chains
    }

    /// Splits an assembled `(n+m) x n` chain matrix according to `spec`.
    pub fn from_assembled(spec: &EigStructure, h: &CMat) -> Result<Self> {
        if h.ncols() != spec.order() {
            return Err(Error::Dimension(format!(
                "chain matrix has {} columns, structure needs {}",
                h.ncols(),
                spec.order()
            )));
        }
        let mut col = 0;
        let chains = spec
            .groups()
            .iter()
            .map(|g| {
                g.blocks
                    .iter()
                    .map(|&p| {
                        let c = h.columns(col, p).into_owned();
                        col += p;
                        c
                    })
                    .collect()
            })
            .collect();
        Ok(Self { chains })
    }

    /// `H_K`, the chains side by side.
    pub fn assembled(&self) -> CMat {
        let cols: Vec<&CMat> = self.chains.iter().flatten().collect();
        let rows = cols.first().map_or(0, |c| c.nrows());
        let n: usize = cols.iter().map(|c| c.ncols()).sum();
        let mut h = CMat::zeros(rows, n);
        let mut at = 0;
        for c in cols {
            h.columns_mut(at, c.ncols()).copy_from(c);
            at += c.ncols();
        }
        h
    }

    fn check_shape(&self, spec: &EigStructure, rows: usize) -> Result<()> {
        let ok = self.chains.len() == spec.len()
            && self.chains.iter().zip(spec.groups()).all(|(cs, g)| {
                cs.len() == g.blocks.len()
                    && cs
                        .iter()
                        .zip(&g.blocks)
                        .all(|(c, &p)| c.shape() == (rows, p))
            });
        if ok {
            Ok(())
        } else {
            Err(Error::Dimension(
                "chain set does not match the eigenstructure".into(),
            ))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlacementResult {
    /// Real n x n matrix built from the chains.
    pub v: RMat,
    /// Real m x n input part of the chains.
    pub w: RMat,
    /// Complex Jordan-chain matrix with `(A + B F) X = X Lambda`.
    pub x: CMat,
    /// Real m x n feedback `W V^-1`.
    pub f: RMat,
    pub v_inv: RMat,
    /// `||(A + B F) X - X Lambda||_F`.
    pub residual: f64,
    /// 1-norm condition number of `V`.
    pub cond_v: f64,
}

impl PlacementResult {
    pub fn gain(&self) -> f64 {
        self.f.norm()
    }

    pub fn residual_ok(&self, sys: &System, tol: &ToleranceConfig) -> bool {
        self.residual <= residual_bound(sys, &self.f, tol)
    }
}

/// `residual_tol * (1 + ||A|| + ||B|| ||F||)`, Frobenius norms.
pub fn residual_bound(sys: &System, f: &RMat, tol: &ToleranceConfig) -> f64 {
    tol.residual_tol * (1.0 + sys.a().norm() + sys.b().norm() * f.norm())
}

/// `||(A + B F) X - X Lambda||_F` with `Lambda` the Jordan matrix of `spec`.
pub fn residual(sys: &System, f: &RMat, x: &CMat, spec: &EigStructure) -> f64 {
    let acl = to_complex(&sys.closed_loop(f));
    fro_norm(&(acl * x - x * spec.jordan_matrix()))
}

/// Precomputed pencil data for one `(system, structure)` pair.
///
/// Pencils depend only on the eigenvalues, so repeated placements with
/// different parameters reuse them.
#[derive(Debug, Clone)]
pub struct Placer {
    sys: System,
    spec: EigStructure,
    tol: ToleranceConfig,
    pencils: Vec<PencilData>,
}

impl Placer {
    pub fn new(sys: &System, spec: &EigStructure, tol: &ToleranceConfig) -> Result<Self> {
        tol.validate()?;
        spec.validate_for(sys.n(), sys.m())?;
        let mut pencils: Vec<PencilData> = Vec::with_capacity(spec.len());
        for (i, g) in spec.groups().iter().enumerate() {
            let p = if spec.is_pair_follower(i) {
                pencils[i - 1].conj()
            } else {
                build_pencil(sys, g.value, tol)?
            };
            pencils.push(p);
        }
        Ok(Self {
            sys: sys.clone(),
            spec: spec.clone(),
            tol: *tol,
            pencils,
        })
    }

    pub fn system(&self) -> &System {
        &self.sys
    }

    pub fn spec(&self) -> &EigStructure {
        &self.spec
    }

    pub fn tol(&self) -> &ToleranceConfig {
        &self.tol
    }

    pub fn pencils(&self) -> &[PencilData] {
        &self.pencils
    }

    /// Number of free real parameters.
    pub fn dim(&self) -> usize {
        ParameterMatrix::dim(&self.spec, self.sys.m())
    }

    pub fn build_chains(&self, k: &ParameterMatrix) -> Result<ChainSet> {
        let (n, m) = (self.sys.n(), self.sys.m());
        k.check_compatible(&self.spec, m)?;
        let mut chains: Vec<Vec<CMat>> = Vec::with_capacity(self.spec.len());
        for (i, g) in self.spec.groups().iter().enumerate() {
            if self.spec.is_pair_follower(i) {
                let lead: Vec<CMat> = chains[i - 1].iter().map(|c| c.map(|z| z.conj())).collect();
                chains.push(lead);
                continue;
            }
            let pencil = &self.pencils[i];
            let ki = &k.blocks[i];
            let mut col = 0;
            let mut group = Vec::with_capacity(g.blocks.len());
            for &p in &g.blocks {
                let mut h = CMat::zeros(n + m, p);
                for l in 0..p {
                    let mut hl = &pencil.kernel * ki.column(col + l);
                    if l > 0 {
                        hl += &pencil.pinv * h.view((0, l - 1), (n, 1));
                    }
                    h.set_column(l, &hl);
                }
                col += p;
                group.push(h);
            }
            chains.push(group);
        }
        Ok(ChainSet { chains })
    }

    pub fn place(&self, k: &ParameterMatrix) -> Result<PlacementResult> {
        let chains = self.build_chains(k)?;
        self.place_chains(&chains)
    }

    /// Feedback from an already built chain set.
    pub fn place_chains(&self, chains: &ChainSet) -> Result<PlacementResult> {
        let n = self.sys.n();
        let h = chains.assembled();
        let (v, w) = realify(&h, &self.spec)?;
        let x = h.rows(0, n).into_owned();

        // F V = W  <=>  V^T F^T = W^T
        let lu = v.transpose().lu();
        let vt_inv = lu.try_inverse().ok_or(Error::SingularV {
            cond: f64::INFINITY,
        })?;
        let cond_v = real_one_norm(&v) * real_inf_norm(&vt_inv);
        if !cond_v.is_finite() || cond_v > self.tol.singular_cond_limit {
            return Err(Error::SingularV { cond: cond_v });
        }
        let f = lu
            .solve(&w.transpose())
            .ok_or(Error::SingularV { cond: cond_v })?
            .transpose();
        let res = residual(&self.sys, &f, &x, &self.spec);
        Ok(PlacementResult {
            v,
            w,
            x,
            f,
            v_inv: vt_inv.transpose(),
            residual: res,
            cond_v,
        })
    }

    /// Recovers the parameter matrix that generates `chains`.
    pub fn recover(&self, chains: &ChainSet) -> Result<ParameterMatrix> {
        let (n, m) = (self.sys.n(), self.sys.m());
        chains.check_shape(&self.spec, n + m)?;
        let h_norm = fro_norm(&chains.assembled());
        let mut worst: f64 = 0.0;
        let mut limit: f64 = 0.0;
        let mut blocks: Vec<CMat> = Vec::with_capacity(self.spec.len());
        for (i, g) in self.spec.groups().iter().enumerate() {
            if self.spec.is_pair_follower(i) {
                let mut asym: f64 = 0.0;
                for (a, b) in chains.chains[i].iter().zip(&chains.chains[i - 1]) {
                    asym = asym.max(fro_norm(&(a - b.map(|z| z.conj()))));
                }
                if asym > REALNESS_TOL * h_norm.max(f64::MIN_POSITIVE) {
                    return Err(Error::ConjugateSymmetry { residue: asym });
                }
                let lead = blocks[i - 1].map(|z| z.conj());
                blocks.push(lead);
                continue;
            }
            let pencil = &self.pencils[i];
            let s = self.sys.pencil(g.value);
            let s_norm = fro_norm(&s);
            limit = limit.max(self.tol.residual_tol * (1.0 + s_norm) * h_norm.max(1.0));
            let mut ki = CMat::zeros(m, g.multiplicity());
            let mut col = 0;
            for h in &chains.chains[i] {
                for l in 0..h.ncols() {
                    let hl = h.column(l);
                    let mut rel = &s * hl;
                    let mut free = hl.into_owned();
                    if l > 0 {
                        let prev = h.view((0, l - 1), (n, 1));
                        rel -= prev;
                        free -= &pencil.pinv * prev;
                    }
                    worst = worst.max(rel.norm());
                    ki.set_column(col + l, &(pencil.kernel.adjoint() * free));
                }
                col += h.ncols();
            }
            if !self.spec.is_pair_leader(i) {
                let residue = max_abs_imag(&ki);
                if residue > REALNESS_TOL * ki.norm().max(1.0) {
                    return Err(Error::ConjugateSymmetry { residue });
                }
                ki = to_complex(&real_part(&ki));
            }
            blocks.push(ki);
        }
        if worst > limit {
            return Err(Error::InvalidChains {
                residual: worst,
                limit,
            });
        }
        Ok(ParameterMatrix { blocks })
    }

    /// Closed-loop eigenvectors `[x; F x]` of a non-defective feedback.
    ///
    /// Only structures whose mini-blocks all have order one are supported;
    /// extracting Jordan chains from a defective matrix is ill-posed.
    pub fn chains_from_feedback(&self, f: &RMat) -> Result<ChainSet> {
        let (n, m) = (self.sys.n(), self.sys.m());
        if f.shape() != (m, n) {
            return Err(Error::Dimension(format!(
                "F must be {m}x{n}, got {}x{}",
                f.nrows(),
                f.ncols()
            )));
        }
        if self.spec.max_block_order() > 1 {
            return Err(Error::Unsupported(
                "eigenvector recovery from a feedback needs a non-defective structure".into(),
            ));
        }
        let acl = to_complex(&self.sys.closed_loop(f));
        let fc = to_complex(f);
        let mut chains: Vec<Vec<CMat>> = Vec::with_capacity(self.spec.len());
        for (i, g) in self.spec.groups().iter().enumerate() {
            if self.spec.is_pair_follower(i) {
                let lead = chains[i - 1].iter().map(|c| c.map(|z| z.conj())).collect();
                chains.push(lead);
                continue;
            }
            let shifted = &acl - CMat::identity(n, n) * g.value;
            let xs = smallest_right_singular_vectors(&shifted, g.multiplicity());
            let ws = &fc * &xs;
            let group = (0..g.multiplicity())
                .map(|c| {
                    let mut h = CMat::zeros(n + m, 1);
                    h.view_mut((0, 0), (n, 1)).copy_from(&xs.column(c));
                    h.view_mut((n, 0), (m, 1)).copy_from(&ws.column(c));
                    h
                })
                .collect();
            chains.push(group);
        }
        Ok(ChainSet { chains })
    }
}

/// Real form of a conformably ordered chain matrix, split into `(V, W)`.
///
/// Each conjugate pair of column blocks `(H_i, H_{i+1})` becomes
/// `((H_i + H_{i+1}) / 2, (H_i - H_{i+1}) / 2j)`; real blocks pass through.
pub fn realify(h: &CMat, spec: &EigStructure) -> Result<(RMat, RMat)> {
    let n = spec.order();
    if h.ncols() != n || h.nrows() < n {
        return Err(Error::Dimension(format!(
            "chain matrix is {}x{}, structure needs {} columns",
            h.nrows(),
            h.ncols(),
            n
        )));
    }
    let m = h.nrows() - n;
    let offsets = spec.column_offsets();
    let mut out = h.clone();
    let half = Complex64::new(0.5, 0.0);
    let minus_half_j = Complex64::new(0.0, -0.5);
    for (i, g) in spec.groups().iter().enumerate() {
        if !spec.is_pair_leader(i) {
            continue;
        }
        let w = g.multiplicity();
        let hi = h.columns(offsets[i], w);
        let hj = h.columns(offsets[i + 1], w);
        out.columns_mut(offsets[i], w)
            .copy_from(&((hi + hj) * half));
        out.columns_mut(offsets[i + 1], w)
            .copy_from(&((hi - hj) * minus_half_j));
    }
    let residue = max_abs_imag(&out);
    if residue > REALNESS_TOL * fro_norm(h).max(f64::MIN_POSITIVE) {
        return Err(Error::ConjugateSymmetry { residue });
    }
    let re = real_part(&out);
    Ok((re.rows(0, n).into_owned(), re.rows(n, m).into_owned()))
}

pub fn build_chains(
    sys: &System,
    spec: &EigStructure,
    k: &ParameterMatrix,
    tol: &ToleranceConfig,
) -> Result<ChainSet> {
    Placer::new(sys, spec, tol)?.build_chains(k)
}

pub fn place(
    sys: &System,
    spec: &EigStructure,
    k: &ParameterMatrix,
    tol: &ToleranceConfig,
) -> Result<PlacementResult> {
    Placer::new(sys, spec, tol)?.place(k)
}

pub fn recover_parameters(
    sys: &System,
    spec: &EigStructure,
    chains: &ChainSet,
    tol: &ToleranceConfig,
) -> Result<ParameterMatrix> {
    Placer::new(sys, spec, tol)?.recover(chains)
}

/// Places with random parameters, redrawing while `V_K` comes out singular.
pub fn place_random<R: Rng + ?Sized>(
    placer: &Placer,
    rng: &mut R,
    max_draws: usize,
) -> Result<(ParameterMatrix, PlacementResult)> {
    let m = placer.system().m();
    let mut last = Error::SingularV {
        cond: f64::INFINITY,
    };
    for _ in 0..max_draws.max(1) {
        let k = ParameterMatrix::random(placer.spec(), m, rng);
        match placer.place(&k) {
            Ok(r) => return Ok((k, r)),
            Err(e @ Error::SingularV { .. }) => last = e,
            Err(e) => return Err(e),
        }
    }
    Err(last)
}

fn real_one_norm(a: &RMat) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn real_inf_norm(a: &DMatrix<f64>) -> f64 {
    a.row_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}
