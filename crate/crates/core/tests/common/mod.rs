#![allow(dead_code)]

use eigenplace::{
    check_admissible, controllability_indices, CMat, Complex64, EigStructure, EigenGroup, RMat,
    System, ToleranceConfig,
};
use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut impl Rng, r: usize, c: usize) -> RMat {
    RMat::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

/// Gaussian pair, redrawn until reachable with full-rank B.
pub fn random_system(rng: &mut impl Rng, n: usize, m: usize) -> System {
    let tol = ToleranceConfig::default();
    loop {
        if let Ok(sys) = System::new(gaussian(rng, n, n), gaussian(rng, n, m)) {
            if controllability_indices(&sys, &tol).is_ok() {
                return sys;
            }
        }
    }
}

/// Pair with prescribed controllability indices: a Brunovsky form hidden by
/// a random state change, input change and feedback.
pub fn system_with_indices(rng: &mut impl Rng, c: &[usize]) -> System {
    let n: usize = c.iter().sum();
    let m = c.len();
    let mut a0 = RMat::zeros(n, n);
    let mut b0 = RMat::zeros(n, m);
    let mut off = 0;
    for (j, &cj) in c.iter().enumerate() {
        for i in 0..cj - 1 {
            a0[(off + i, off + i + 1)] = 1.0;
        }
        b0[(off + cj - 1, j)] = 1.0;
        off += cj;
    }
    loop {
        let t = RMat::identity(n, n) + gaussian(rng, n, n) * 0.3;
        let r = RMat::identity(m, m) + gaussian(rng, m, m) * 0.3;
        let g = gaussian(rng, m, n);
        let Some(t_inv) = t.clone().try_inverse() else {
            continue;
        };
        if r.clone().try_inverse().is_none() {
            continue;
        }
        let a = &t * (&a0 + &b0 * &g) * &t_inv;
        let b = &t * &b0 * &r;
        if let Ok(sys) = System::new(a, b) {
            return sys;
        }
    }
}

fn separated(v: Complex64, taken: &[Complex64], gap: f64) -> bool {
    taken
        .iter()
        .all(|t| (t - v).norm() >= gap && (t.conj() - v).norm() >= gap)
}

/// Random block orders (each at most 4) summing to `mult`, at most `m` blocks.
fn partition(rng: &mut impl Rng, mult: usize, m: usize) -> Option<Vec<usize>> {
    let mut left = mult;
    let mut blocks = Vec::new();
    while left > 0 {
        let p = rng.random_range(1..=left.min(4));
        blocks.push(p);
        left -= p;
    }
    (blocks.len() <= m).then_some(blocks)
}

/// Random structure of order `n` for `m` inputs: real eigenvalues and conjugate
/// pairs, repeated and defective, pairwise at least 0.5 apart. Not checked
/// against any particular system.
pub fn random_structure(rng: &mut impl Rng, n: usize, m: usize) -> EigStructure {
    'outer: loop {
        let mut groups = Vec::new();
        let mut taken: Vec<Complex64> = Vec::new();
        let mut remaining = n;
        while remaining > 0 {
            let pair = remaining >= 2 && rng.random_bool(0.4);
            let max_mult = if pair { remaining / 2 } else { remaining };
            let mult = rng.random_range(1..=max_mult.min(6));
            let Some(blocks) = partition(rng, mult, m) else {
                continue 'outer;
            };
            let mut value = None;
            for _ in 0..100 {
                let v = if pair {
                    Complex64::new(rng.random_range(-4.0..4.0), rng.random_range(0.5..4.0))
                } else {
                    Complex64::new(rng.random_range(-4.0..4.0), 0.0)
                };
                if separated(v, &taken, 0.5) {
                    value = Some(v);
                    break;
                }
            }
            let Some(v) = value else { continue 'outer };
            taken.push(v);
            groups.push(EigenGroup::new(v, blocks));
            remaining -= if pair { 2 * mult } else { mult };
        }
        if let Ok(s) = EigStructure::with_conjugates(groups) {
            return s;
        }
    }
}

/// `n` distinct simple eigenvalues, conjugate pairs included, at least 0.5 apart.
pub fn random_simple_structure(rng: &mut impl Rng, n: usize) -> EigStructure {
    loop {
        let mut groups = Vec::new();
        let mut taken: Vec<Complex64> = Vec::new();
        let mut remaining = n;
        let mut stuck = false;
        while remaining > 0 && !stuck {
            let pair = remaining >= 2 && rng.random_bool(0.4);
            stuck = true;
            for _ in 0..100 {
                let v = if pair {
                    Complex64::new(rng.random_range(-4.0..4.0), rng.random_range(0.5..4.0))
                } else {
                    Complex64::new(rng.random_range(-4.0..4.0), 0.0)
                };
                if separated(v, &taken, 0.5) {
                    taken.push(v);
                    groups.push(EigenGroup::simple(v));
                    remaining -= if pair { 2 } else { 1 };
                    stuck = false;
                    break;
                }
            }
        }
        if !stuck {
            if let Ok(s) = EigStructure::with_conjugates(groups) {
                return s;
            }
        }
    }
}

/// Random structure that is admissible for `sys`.
pub fn random_admissible_structure(rng: &mut impl Rng, sys: &System) -> EigStructure {
    let tol = ToleranceConfig::default();
    loop {
        let s = random_structure(rng, sys.n(), sys.m());
        if check_admissible(&s, sys, &tol).is_ok_and(|r| r.satisfied) {
            return s;
        }
    }
}

/// True when two random parameter matrices give the same feedback, i.e. the
/// structure leaves no freedom in `F`.
pub fn feedback_is_unique(sys: &System, spec: &EigStructure, rng: &mut impl Rng) -> bool {
    let placer =
        eigenplace::Placer::new(sys, spec, &ToleranceConfig::default()).expect("admissible");
    let f1 = eigenplace::placement::place_random(&placer, rng, 10)
        .expect("placement")
        .1
        .f;
    let f2 = eigenplace::placement::place_random(&placer, rng, 10)
        .expect("placement")
        .1
        .f;
    (&f1 - &f2).norm() <= 1e-8 * f1.norm().max(1.0)
}

/// A reachable system of random size (n <= 8, m <= 4) with an admissible structure.
pub fn random_instance(rng: &mut impl Rng) -> (System, EigStructure) {
    let n = rng.random_range(1..=8);
    let m = rng.random_range(1..=n.min(4));
    let sys = random_system(rng, n, m);
    let spec = random_admissible_structure(rng, &sys);
    (sys, spec)
}

fn rank(m: &RMat) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let tol = m.nrows().max(m.ncols()) as f64 * f64::EPSILON * smax * 1e3;
    sv.iter().filter(|&&s| s > tol).count()
}

/// Controllability indices by greedy column selection on `[B, AB, A^2 B, ...]`.
pub fn krylov_indices(sys: &System) -> Vec<usize> {
    let (n, m) = (sys.n(), sys.m());
    let mut kept: Vec<nalgebra::DVector<f64>> = Vec::new();
    let mut count = vec![0usize; m];
    let mut alive = vec![true; m];
    let mut power = sys.b().clone();
    for _ in 0..n {
        for j in 0..m {
            if !alive[j] {
                continue;
            }
            let col = power.column(j).into_owned();
            let mut trial = kept.clone();
            trial.push(col.clone());
            let mat = RMat::from_columns(&trial);
            if rank(&mat) == trial.len() {
                kept.push(col);
                count[j] += 1;
            } else {
                alive[j] = false;
            }
        }
        power = sys.a() * power;
    }
    count.sort_unstable_by(|a, b| b.cmp(a));
    count
}

/// Single-input gain from Ackermann's formula, sign chosen for `A + B F`.
pub fn ackermann(sys: &System, spectrum: &[Complex64]) -> RMat {
    let n = sys.n();
    assert_eq!(sys.m(), 1);
    let a = sys.a().map(|x| Complex64::new(x, 0.0));
    let mut p = CMat::identity(n, n);
    for &l in spectrum {
        p = &p * (&a - CMat::identity(n, n) * l);
    }
    let p = p.map(|z| z.re);
    let mut ctrb = RMat::zeros(n, n);
    let mut col = sys.b().column(0).into_owned();
    for k in 0..n {
        ctrb.set_column(k, &col);
        col = sys.a() * col;
    }
    let mut en = RMat::zeros(1, n);
    en[(0, n - 1)] = 1.0;
    let row = en * ctrb.try_inverse().expect("reachable") * p;
    -row
}

/// Eigenvalues through the real Schur form, relaxing deflation until it converges.
pub fn closed_loop_eigenvalues(acl: &RMat) -> Vec<Complex64> {
    let max_iter = 100 * acl.nrows().max(1);
    for k in 0..8 {
        if let Some(s) = acl
            .clone()
            .try_schur(f64::EPSILON * 16f64.powi(k), max_iter)
        {
            return s.complex_eigenvalues().iter().copied().collect();
        }
    }
    panic!("real Schur iteration did not converge");
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SpectrumErrors {
    /// Largest `|mean of cluster - lambda| / (1 + |lambda|)`.
    pub centroid: f64,
    /// Largest member error over groups whose blocks are all of order 1.
    pub semisimple: f64,
    /// Largest member error over all groups.
    pub member: f64,
    /// Largest `(member error)^p` with `p` the largest block order of the group;
    /// a Jordan block of order `p` spreads its eigenvalues like `eps^(1/p)`.
    pub jordan_scaled: f64,
}

/// Assigns every computed eigenvalue to the nearest requested one and checks
/// the cluster sizes against the multiplicities.
pub fn match_spectrum(acl: &RMat, spec: &EigStructure) -> Result<SpectrumErrors, String> {
    let computed = closed_loop_eigenvalues(acl);
    let groups = spec.groups();
    let mut clusters: Vec<Vec<Complex64>> = vec![Vec::new(); groups.len()];
    for mu in computed {
        let (i, _) = groups
            .iter()
            .enumerate()
            .map(|(i, g)| (i, (g.value - mu).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("nonempty");
        clusters[i].push(mu);
    }
    let mut e = SpectrumErrors::default();
    for (g, c) in groups.iter().zip(&clusters) {
        if c.len() != g.multiplicity() {
            return Err(format!(
                "{} computed eigenvalues near {}, expected {}",
                c.len(),
                g.value,
                g.multiplicity()
            ));
        }
        let scale = 1.0 + g.value.norm();
        let mean: Complex64 = c.iter().sum::<Complex64>() / c.len() as f64;
        e.centroid = e.centroid.max((mean - g.value).norm() / scale);
        let worst = c
            .iter()
            .map(|mu| (mu - g.value).norm() / scale)
            .fold(0.0, f64::max);
        e.member = e.member.max(worst);
        e.jordan_scaled = e.jordan_scaled.max(worst.powi(g.blocks[0] as i32));
        if g.blocks[0] == 1 {
            e.semisimple = e.semisimple.max(worst);
        }
    }
    Ok(e)
}

fn singular_values_c(m: &CMat) -> Vec<f64> {
    let mut s: Vec<f64> = m
        .clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Decisive gap of a rank test: the ratio between the last singular value
/// counted as nonzero and the first counted as zero, minimized over all tests.
#[derive(Debug, Clone, Copy)]
pub struct RankMargins {
    pub min_gap: f64,
}

/// Numerical rank by the largest gap between consecutive singular values
/// (sorted descending, relative to `scale`); values at or below `floor` can
/// never count as nonzero.
fn gap_rank(sv: &[f64], floor: f64) -> (usize, f64) {
    const TINY: f64 = 1e-18;
    let mut best = (0, f64::INFINITY);
    let mut best_ratio = 0.0;
    for k in 1..=sv.len() {
        if sv[k - 1] <= floor {
            break;
        }
        let next = sv.get(k).copied().unwrap_or(0.0).max(TINY);
        let ratio = sv[k - 1] / next;
        if ratio > best_ratio {
            best_ratio = ratio;
            best = (k, ratio);
        }
    }
    best
}

/// Checks `dim ker (A - lambda I)^q = sum_k min(p_k, q)` for `q = 1..=p_max + 1`.
///
/// Kernels are grown one power at a time (`ker_q = {x : (A - lambda I) x in ker_(q-1)}`),
/// so every rank decision is made on an unpowered matrix, scaled by
/// `max(||A - lambda I||_2, ||A||_F, |lambda|, 1)`. Ranks come from the largest
/// singular value gap above `floor`.
pub fn check_jordan_ranks(
    acl: &RMat,
    spec: &EigStructure,
    floor: f64,
) -> Result<RankMargins, String> {
    let n = acl.nrows();
    let a = acl.map(|x| Complex64::new(x, 0.0));
    let mut margins = RankMargins {
        min_gap: f64::INFINITY,
    };
    for g in spec.groups() {
        let shifted = &a - CMat::identity(n, n) * g.value;
        let scale = singular_values_c(&shifted)[0]
            .max(acl.norm())
            .max(g.value.norm())
            .max(1.0);
        let mut kernel = CMat::zeros(n, 0);
        for q in 1..=g.blocks[0] + 1 {
            let proj = CMat::identity(n, n) - &kernel * kernel.adjoint();
            let c = proj * &shifted;
            let svd = c.svd(false, true);
            let v_t = svd.v_t.expect("requested");
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
            let sv: Vec<f64> = order
                .iter()
                .map(|&i| svd.singular_values[i] / scale)
                .collect();
            let (rank, gap) = gap_rank(&sv, floor);
            let expected = g.blocks.iter().map(|&p| p.min(q)).sum::<usize>();
            if n - rank != expected {
                return Err(format!("dim ker (A - {}I)^{q} is {}, expected {expected}; relative singular values {sv:?}", g.value, n - rank));
            }
            if rank > 0 {
                margins.min_gap = margins.min_gap.min(gap);
            }
            let cols: Vec<_> = order[rank..]
                .iter()
                .map(|&i| v_t.row(i).adjoint())
                .collect();
            kernel = CMat::from_columns(&cols);
        }
    }
    Ok(margins)
}

pub fn real_to_c(m: &DMatrix<f64>) -> CMat {
    m.map(|x| Complex64::new(x, 0.0))
}
