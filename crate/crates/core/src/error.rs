use alloc::string::String;

/// Everything that can go wrong inside the lab core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("unknown task id `{0}` (expected T1, T2 or T3)")]
    UnknownTask(String),

    #[error("non-finite state at step {step}")]
    NonFiniteState { step: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("regressors are rank deficient (rank {rank} of {cols}); increase data or λ")]
    RankDeficient { rank: usize, cols: usize },

    #[error("not enough snapshot pairs: need {need}, have {have}")]
    InsufficientData { need: usize, have: usize },

    #[error("trajectories disagree on dt ({first} vs {other})")]
    InconsistentStep { first: f64, other: f64 },

    #[error("matrix logarithm undefined: {0}")]
    NoLogarithm(&'static str),

    #[error("optimizer did not converge: {0}")]
    NoConvergence(&'static str),

    #[error("no admissible proxy location in the grid")]
    EmptyAdmissibleSet,

    #[error("degenerate element {index}")]
    DegenerateElement { index: usize },

    #[error("reduced stiffness matrix is singular; add constraints")]
    SingularSystem,

    #[error("reference force has zero norm")]
    ZeroReference,

    #[error("empty input: {0}")]
    Empty(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}
