use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid quadratic form: {0}")]
    InvalidForm(String),

    #[error("translations {i} and {j} differ by an integer vector")]
    CoincidentCosets { i: usize, j: usize },

    #[error("invalid tangent vector: {0}")]
    InvalidTangent(String),

    #[error("perturbation too large: {0}")]
    PerturbationTooLarge(String),

    #[error("invalid transform: {0}")]
    InvalidTransform(String),

    #[error("shell is empty")]
    EmptyShell,

    #[error("shell is not antipodally symmetric")]
    NotAntipodal,

    #[error("design strength t = {0} is unsupported (t must be even and positive)")]
    UnsupportedParity(u32),

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("energy sum diverges: inverse power s = {s} must exceed d/2 = {half_dim}")]
    DivergentSum { s: f64, half_dim: f64 },

    #[error("required cutoff needs more than {budget} points")]
    CutoffOverflow { budget: usize },

    #[error("window too small: only {points} point(s) within radius")]
    WindowTooSmall { points: usize },

    #[error("periodic set is not a lattice (k = {k}, i = {i} has no matching coset)")]
    NotALattice { k: usize, i: usize },

    #[error("design hypothesis failed at squared norm {alpha} for t = {t} (residual {residual:e})")]
    DesignHypothesisFailed { alpha: f64, t: u32, residual: f64 },

    #[error("precondition failed: {0}")]
    PreconditionFailed(String),

    #[error("internal inconsistency: {0}")]
    InternalInconsistency(String),

    #[error("line search stalled at iteration {iteration}")]
    LineSearchStalled { iteration: usize },

    #[error("unknown lattice id {0:?}")]
    UnknownLattice(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("integer overflow in exact arithmetic")]
    Overflow,
}
