//! Requested closed-loop Jordan structures and their admissibility.
//!
//! An [`EigStructure`] lists distinct eigenvalues, each with the orders of its
//! Jordan mini-blocks. It is always kept conjugate-conformably ordered: the
//! `2 * sigma` complex eigenvalues come first as adjacent pairs
//! `(lambda, conj(lambda))` with positive imaginary part leading, and real
//! eigenvalues follow in the order they were supplied.

use std::cmp::Ordering;
use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{CMat, RMat, ToleranceConfig};
use crate::system::System;

/// One distinct eigenvalue and the orders of its Jordan mini-blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenGroup {
    pub value: Complex64,
    /// Mini-block orders, stored nonincreasing.
    pub blocks: Vec<usize>,
}

impl EigenGroup {
    pub fn new(value: Complex64, mut blocks: Vec<usize>) -> Self {
        blocks.sort_unstable_by(|a, b| b.cmp(a));
        Self { value, blocks }
    }

    pub fn simple(value: Complex64) -> Self {
        Self::new(value, vec![1])
    }

    pub fn real(value: f64, blocks: Vec<usize>) -> Self {
        Self::new(Complex64::new(value, 0.0), blocks)
    }

    pub fn multiplicity(&self) -> usize {
        self.blocks.iter().sum()
    }

    pub fn is_complex(&self) -> bool {
        self.value.im != 0.0
    }

    fn conjugate(&self) -> Self {
        Self {
            value: self.value.conj(),
            blocks: self.blocks.clone(),
        }
    }
}

fn same_bits(a: Complex64, b: Complex64) -> bool {
    a.re.to_bits() == b.re.to_bits() && a.im.to_bits() == b.im.to_bits()
}

fn is_conjugate_of(a: Complex64, b: Complex64) -> bool {
    a.re.to_bits() == b.re.to_bits() && a.im.to_bits() == (-b.im).to_bits()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigStructure {
    groups: Vec<EigenGroup>,
    sigma: usize,
}

impl EigStructure {
    /// Validates and conformably orders `raw`.
    pub fn new(raw: Vec<EigenGroup>) -> Result<Self> {
        Ok(Self::normalize_ordering(raw)?.0)
    }

    /// One simple eigenvalue per entry.
    pub fn simple(values: &[Complex64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| EigenGroup::simple(v)).collect())
    }

    /// Adds the conjugate of every complex eigenvalue that is listed without one.
    pub fn with_conjugates(raw: Vec<EigenGroup>) -> Result<Self> {
        let mut groups = raw.clone();
        for g in raw.iter().filter(|g| g.is_complex()) {
            if !raw.iter().any(|h| is_conjugate_of(h.value, g.value)) {
                groups.push(g.conjugate());
            }
        }
        Self::new(groups)
    }

    /// Returns the ordered structure and `perm` with `perm[raw_index] = ordered_index`.
    pub fn normalize_ordering(raw: Vec<EigenGroup>) -> Result<(Self, Vec<usize>)> {
        if raw.is_empty() {
            return Err(Error::Dimension("eigenstructure has no eigenvalues".into()));
        }
        let raw: Vec<EigenGroup> = raw
            .into_iter()
            .map(|g| {
                // fold -0.0 imaginary parts onto the real axis
                let value = if g.value.im == 0.0 {
                    Complex64::new(g.value.re, 0.0)
                } else {
                    g.value
                };
                EigenGroup::new(value, g.blocks)
            })
            .collect();
        for g in &raw {
            if !(g.value.re.is_finite() && g.value.im.is_finite()) {
                return Err(Error::InvalidBlocks(g.value));
            }
            if g.blocks.is_empty() || g.blocks.contains(&0) {
                return Err(Error::InvalidBlocks(g.value));
            }
        }
        for (i, g) in raw.iter().enumerate() {
            if raw[..i].iter().any(|h| same_bits(h.value, g.value)) {
                return Err(Error::DuplicateEigenvalue(g.value));
            }
        }

        let mut leaders: Vec<(usize, usize)> = Vec::new();
        let mut reals: Vec<usize> = Vec::new();
        for (i, g) in raw.iter().enumerate() {
            if !g.is_complex() {
                reals.push(i);
                continue;
            }
            let j = raw
                .iter()
                .position(|h| is_conjugate_of(h.value, g.value))
                .ok_or(Error::UnmatchedConjugate(g.value))?;
            if raw[j].blocks != g.blocks {
                return Err(Error::ConjugateBlockMismatch(g.value));
            }
            if g.value.im > 0.0 {
                leaders.push((i, j));
            }
        }
        leaders.sort_by(|&(a, _), &(b, _)| {
            let (za, zb) = (raw[a].value, raw[b].value);
            zb.im
                .total_cmp(&za.im)
                .then(za.re.total_cmp(&zb.re))
                .then(Ordering::Equal)
        });

        let mut order = Vec::with_capacity(raw.len());
        for &(i, j) in &leaders {
            order.push(i);
            order.push(j);
        }
        order.extend(reals);

        let mut perm = vec![0; raw.len()];
        for (pos, &i) in order.iter().enumerate() {
            perm[i] = pos;
        }
        let groups = order.iter().map(|&i| raw[i].clone()).collect();
        Ok((
            Self {
                groups,
                sigma: leaders.len(),
            },
            perm,
        ))
    }

    pub fn groups(&self) -> &[EigenGroup] {
        &self.groups
    }

    /// Number of complex conjugate pairs.
    pub fn sigma(&self) -> usize {
        self.sigma
    }

    /// Number of distinct eigenvalues.
    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// Total algebraic multiplicity, i.e. the state dimension this structure fits.
    pub fn order(&self) -> usize {
        self.groups.iter().map(EigenGroup::multiplicity).sum()
    }

    pub fn multiplicities(&self) -> Vec<usize> {
        self.groups.iter().map(EigenGroup::multiplicity).collect()
    }

    pub fn max_block_order(&self) -> usize {
        self.groups
            .iter()
            .flat_map(|g| g.blocks.iter().copied())
            .max()
            .unwrap_or(0)
    }

    /// Whether group `i` (0-based) is the first member of a conjugate pair.
    pub fn is_pair_leader(&self, i: usize) -> bool {
        i < 2 * self.sigma && i.is_multiple_of(2)
    }

    /// Whether group `i` (0-based) is the second member of a conjugate pair.
    pub fn is_pair_follower(&self, i: usize) -> bool {
        i < 2 * self.sigma && i % 2 == 1
    }

    /// Column offset of each group inside an n-column chain matrix.
    pub fn column_offsets(&self) -> Vec<usize> {
        let mut off = 0;
        self.groups
            .iter()
            .map(|g| {
                let o = off;
                off += g.multiplicity();
                o
            })
            .collect()
    }

    /// Every eigenvalue repeated by its multiplicity, in structure order.
    pub fn spectrum(&self) -> Vec<Complex64> {
        self.groups
            .iter()
            .flat_map(|g| std::iter::repeat_n(g.value, g.multiplicity()))
            .collect()
    }

    /// The complex Jordan matrix with unit superdiagonal inside each mini-block.
    pub fn jordan_matrix(&self) -> CMat {
        let n = self.order();
        let mut j = CMat::zeros(n, n);
        let mut pos = 0;
        for g in &self.groups {
            for &p in &g.blocks {
                for l in 0..p {
                    j[(pos + l, pos + l)] = g.value;
                    if l + 1 < p {
                        j[(pos + l, pos + l + 1)] = Complex64::new(1.0, 0.0);
                    }
                }
                pos += p;
            }
        }
        j
    }

    /// Checks the structure fits a system with `n` states and `m` inputs.
    pub fn validate_for(&self, n: usize, m: usize) -> Result<()> {
        let got = self.order();
        if got != n {
            return Err(Error::MultiplicitySum { got, n });
        }
        for g in &self.groups {
            if g.blocks.len() > m {
                return Err(Error::TooManyBlocks {
                    lambda: g.value,
                    blocks: g.blocks.len(),
                    m,
                });
            }
        }
        Ok(())
    }

    /// Degrees of the m largest invariant polynomials, nonincreasing.
    ///
    /// `d_q` sums the q-th largest mini-block order of every eigenvalue.
    pub fn invariant_degrees(&self, m: usize) -> Result<Vec<usize>> {
        let mut d = vec![0; m];
        for g in &self.groups {
            if g.blocks.len() > m {
                return Err(Error::TooManyBlocks {
                    lambda: g.value,
                    blocks: g.blocks.len(),
                    m,
                });
            }
            for (q, &p) in g.blocks.iter().enumerate() {
                d[q] += p;
            }
        }
        Ok(d)
    }
}

impl fmt::Display for EigStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .groups
            .iter()
            .map(|g| format!("{}{:+}j{:?}", g.value.re, g.value.im, g.blocks))
            .collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

/// Controllability indices of `(A, B)`, nonincreasing and summing to n.
///
/// Computed from the orthogonal staircase reduction of the pair: the step
/// ranks `r_1 >= r_2 >= ...` count how many Krylov directions `A^k B` are new
/// at each power, and the indices are the conjugate partition of those ranks.
pub fn controllability_indices(sys: &System, tol: &ToleranceConfig) -> Result<Vec<usize>> {
    let (n, m) = (sys.n(), sys.m());
    let mut ab = RMat::zeros(n, n + m);
    ab.columns_mut(0, n).copy_from(sys.a());
    ab.columns_mut(n, m).copy_from(sys.b());
    let thr = tol.rank_tol_factor * (n * (n + m)) as f64 * f64::EPSILON * ab.norm();

    let mut a_rem = sys.a().clone();
    let mut z = sys.b().clone();
    let mut steps = Vec::new();
    while a_rem.nrows() > 0 {
        let nr = a_rem.nrows();
        let padded = if z.ncols() < nr {
            z.clone().resize_horizontally(nr, 0.0)
        } else {
            z.clone()
        };
        let svd = padded.svd(true, false);
        let u = svd.u.expect("requested U");
        let r = svd.singular_values.iter().filter(|&&s| s > thr).count();
        if r == 0 {
            break;
        }
        steps.push(r);
        if r == nr {
            break;
        }
        let t = u.transpose() * &a_rem * &u;
        z = t.view((r, 0), (nr - r, r)).into_owned();
        a_rem = t.view((r, r), (nr - r, nr - r)).into_owned();
    }
    let reached: usize = steps.iter().sum();
    if reached < n {
        return Err(Error::NotReachable { rank: reached, n });
    }
    Ok((1..=m)
        .map(|j| steps.iter().filter(|&&r| r >= j).count())
        .collect())
}

/// Outcome of comparing requested invariant-factor degrees to the controllability indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdmissibilityReport {
    pub controllability_indices: Vec<usize>,
    pub invariant_degrees: Vec<usize>,
    pub satisfied: bool,
    /// First k (1-based) whose partial-sum condition fails.
    pub failing_index: Option<usize>,
}

/// Rosenbrock test: partial sums of the invariant degrees must dominate the
/// partial sums of the controllability indices, with equality over all m.
pub fn check_admissible(
    spec: &EigStructure,
    sys: &System,
    tol: &ToleranceConfig,
) -> Result<AdmissibilityReport> {
    spec.validate_for(sys.n(), sys.m())?;
    let d = spec.invariant_degrees(sys.m())?;
    let c = controllability_indices(sys, tol)?;
    let m = sys.m();
    let mut failing = None;
    let (mut sd, mut sc) = (0, 0);
    for k in 0..m {
        sd += d[k];
        sc += c[k];
        let ok = if k + 1 == m { sd == sc } else { sd >= sc };
        if !ok {
            failing = Some(k + 1);
            break;
        }
    }
    Ok(AdmissibilityReport {
        controllability_indices: c,
        invariant_degrees: d,
        satisfied: failing.is_none(),
        failing_index: failing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn z(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn orders_pairs_first() {
        let raw = [z(7., 0.), z(2., 2.), z(0., 10.), z(2., -2.), z(0., -10.)];
        let (s, perm) =
            EigStructure::normalize_ordering(raw.iter().map(|&v| EigenGroup::simple(v)).collect())
                .unwrap();
        let got: Vec<Complex64> = s.groups().iter().map(|g| g.value).collect();
        assert_eq!(
            got,
            vec![z(0., 10.), z(0., -10.), z(2., 2.), z(2., -2.), z(7., 0.)]
        );
        assert_eq!(s.sigma(), 2);
        assert_eq!(perm, vec![4, 2, 0, 3, 1]);
    }

    #[test]
    fn reals_keep_input_order() {
        let (s, perm) = EigStructure::normalize_ordering(vec![
            EigenGroup::real(-1.0, vec![1]),
            EigenGroup::real(-2.0, vec![1]),
            EigenGroup::real(-3.0, vec![1]),
        ])
        .unwrap();
        assert_eq!(s.sigma(), 0);
        assert_eq!(perm, vec![0, 1, 2]);
        assert_eq!(s.groups()[2].value, z(-3., 0.));
    }

    #[test]
    fn ordering_is_idempotent() {
        let raw = vec![
            EigenGroup::new(z(1., -3.), vec![1, 2]),
            EigenGroup::real(4.0, vec![3]),
            EigenGroup::new(z(1., 3.), vec![2, 1]),
            EigenGroup::new(z(-1., 0.5), vec![1]),
            EigenGroup::new(z(-1., -0.5), vec![1]),
        ];
        let once = EigStructure::new(raw).unwrap();
        let (twice, perm) = EigStructure::normalize_ordering(once.groups().to_vec()).unwrap();
        assert_eq!(once, twice);
        assert_eq!(perm, (0..5).collect::<Vec<_>>());
        assert_eq!(once.groups()[0].blocks, vec![2, 1]);
    }

    #[test]
    fn unmatched_conjugate_is_rejected() {
        let r = EigStructure::simple(&[z(1., 1.)]);
        assert_eq!(r, Err(Error::UnmatchedConjugate(z(1., 1.))));
        let r = EigStructure::new(vec![
            EigenGroup::new(z(1., 1.), vec![2]),
            EigenGroup::new(z(1., -1.), vec![1, 1]),
        ]);
        assert!(matches!(r, Err(Error::ConjugateBlockMismatch(_))));
    }

    #[test]
    fn duplicates_and_empty_blocks_are_rejected() {
        assert!(matches!(
            EigStructure::simple(&[z(1., 0.), z(1., 0.)]),
            Err(Error::DuplicateEigenvalue(_))
        ));
        assert!(matches!(
            EigStructure::new(vec![EigenGroup::real(0.0, vec![])]),
            Err(Error::InvalidBlocks(_))
        ));
    }

    #[test]
    fn conjugates_are_completed() {
        let s = EigStructure::with_conjugates(vec![
            EigenGroup::real(-1.0, vec![1]),
            EigenGroup::new(z(1., 1.), vec![1]),
        ])
        .unwrap();
        assert_eq!(s.sigma(), 1);
        assert_eq!(s.order(), 3);
        assert_eq!(s.groups()[1].value, z(1., -1.));
    }

    #[test]
    fn jordan_matrix_layout() {
        let s = EigStructure::new(vec![
            EigenGroup::real(2.0, vec![1, 2]),
            EigenGroup::real(-1.0, vec![1]),
        ])
        .unwrap();
        let j = s.jordan_matrix();
        assert_eq!(j.shape(), (4, 4));
        assert_eq!(j[(0, 1)], z(1., 0.));
        assert_eq!(j[(1, 2)], z(0., 0.));
        assert_eq!(j[(3, 3)], z(-1., 0.));
    }

    fn double_integrator() -> System {
        System::from_rows(2, 1, &[0., 1., 0., 0.], &[0., 1.]).unwrap()
    }

    #[test]
    fn indices_of_simple_cases() {
        let tol = ToleranceConfig::default();
        assert_eq!(
            controllability_indices(&double_integrator(), &tol).unwrap(),
            vec![2]
        );
        let eye = System::new(RMat::from_element(3, 3, 0.5), RMat::identity(3, 3)).unwrap();
        assert_eq!(controllability_indices(&eye, &tol).unwrap(), vec![1, 1, 1]);
    }

    #[test]
    fn unreachable_pair() {
        let sys = System::from_rows(2, 1, &[1., 0., 0., 2.], &[1., 0.]).unwrap();
        assert_eq!(
            controllability_indices(&sys, &ToleranceConfig::default()),
            Err(Error::NotReachable { rank: 1, n: 2 })
        );
    }

    #[test]
    fn admissibility_examples() {
        let tol = ToleranceConfig::default();
        let spec = EigStructure::new(vec![EigenGroup::real(0.0, vec![2, 1])]).unwrap();
        let single =
            System::from_rows(3, 1, &[0., 1., 0., 0., 0., 1., 0., 0., 0.], &[0., 0., 1.]).unwrap();
        assert!(matches!(
            check_admissible(&spec, &single, &tol),
            Err(Error::TooManyBlocks { .. })
        ));

        // chains x1 <- x2 <- u1 and x3 <- u2
        let sys = System::from_rows(
            3,
            2,
            &[0., 1., 0., 0., 0., 0., 0., 0., 0.],
            &[0., 0., 1., 0., 0., 1.],
        )
        .unwrap();
        let rep = check_admissible(&spec, &sys, &tol).unwrap();
        assert_eq!(rep.controllability_indices, vec![2, 1]);
        assert_eq!(rep.invariant_degrees, vec![2, 1]);
        assert!(rep.satisfied);

        let split = EigStructure::new(vec![
            EigenGroup::real(0.0, vec![1, 1]),
            EigenGroup::real(1.0, vec![1]),
        ])
        .unwrap();
        let rep = check_admissible(&split, &sys, &tol).unwrap();
        assert_eq!(rep.invariant_degrees, vec![2, 1]);
        assert!(rep.satisfied);

        // chains of length 3 and 1: two order-2 blocks cannot be assigned
        let long = System::from_rows(
            4,
            2,
            &[
                0., 1., 0., 0., 0., 0., 1., 0., 0., 0., 0., 0., 0., 0., 0., 0.,
            ],
            &[0., 0., 0., 0., 1., 0., 0., 1.],
        )
        .unwrap();
        let pairs = EigStructure::new(vec![EigenGroup::real(0.0, vec![2, 2])]).unwrap();
        let rep = check_admissible(&pairs, &long, &tol).unwrap();
        assert_eq!(rep.controllability_indices, vec![3, 1]);
        assert!(!rep.satisfied);
        assert_eq!(rep.failing_index, Some(1));

        let sum = EigStructure::new(vec![EigenGroup::real(0.0, vec![1])]).unwrap();
        assert!(matches!(
            check_admissible(&sum, &sys, &tol),
            Err(Error::MultiplicitySum { got: 1, n: 3 })
        ));
    }
}
