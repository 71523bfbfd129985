use num_complex::Complex64;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("input matrix B does not have full column rank (rank {rank} < {m})")]
    InputRankDeficient { rank: usize, m: usize },

    #[error("pair not reachable (reachability rank {rank} < {n})")]
    NotReachable { rank: usize, n: usize },

    #[error(
        "pair not reachable at lambda = {lambda}: pencil kernel has dimension {dim}, expected {m}"
    )]
    NotReachableAt {
        lambda: Complex64,
        dim: usize,
        m: usize,
    },

    #[error("eigenvalue {0} has no matching conjugate")]
    UnmatchedConjugate(Complex64),

    #[error("eigenvalue {0} listed more than once")]
    DuplicateEigenvalue(Complex64),

    #[error("conjugate eigenvalues {0} and its conjugate request different block orders")]
    ConjugateBlockMismatch(Complex64),

    #[error("eigenvalue {0} has an empty or zero block order list")]
    InvalidBlocks(Complex64),

    #[error("multiplicities sum to {got}, expected n = {n}")]
    MultiplicitySum { got: usize, n: usize },

    #[error("eigenvalue {lambda} requests {blocks} mini-blocks but only {m} inputs are available")]
    TooManyBlocks {
        lambda: Complex64,
        blocks: usize,
        m: usize,
    },

    #[error("structure is not assignable: invariant degrees {degrees:?} fail against controllability indices {indices:?}")]
    Inadmissible {
        degrees: Vec<usize>,
        indices: Vec<usize>,
    },

    #[error("parameter matrix is not compatible with the eigenstructure: {0}")]
    IncompatibleParameter(String),

    #[error("parameter matrix yields singular V_K (condition estimate {cond:.3e})")]
    SingularV { cond: f64 },

    #[error("matrix is numerically singular (condition estimate {cond:.3e})")]
    Singular { cond: f64 },

    #[error("not a valid chain set: chain relation residual {residual:.3e} exceeds {limit:.3e}")]
    InvalidChains { residual: f64, limit: f64 },

    #[error("conjugate symmetry violated: imaginary residue {residue:.3e}")]
    ConjugateSymmetry { residue: f64 },

    #[error("Schur iteration did not converge")]
    SchurNoConvergence,

    #[error("invalid tolerance configuration: {0}")]
    Tolerance(String),

    #[error("invalid options: {0}")]
    Options(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("every restart hit a singular V_K after {attempts} initial draws")]
    NoInitialPoint { attempts: usize },
}
