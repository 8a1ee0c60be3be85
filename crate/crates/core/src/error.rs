use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("axis {axis} out of range for rank {rank}")]
    AxisOutOfRange { axis: usize, rank: usize },

    #[error("invalid permutation {0:?}")]
    InvalidPermutation(Vec<usize>),

    #[error("numerical routine failed to converge: {0}")]
    ConvergenceFailure(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("constraint violation in {tensor}: defect {defect:.3e} exceeds {tolerance:.1e}")]
    ConstraintViolation {
        tensor: String,
        defect: f64,
        tolerance: f64,
    },

    #[error("channel {label} is not mixing (second eigenvalue modulus {second_modulus:.12})")]
    NotMixing { label: String, second_modulus: f64 },

    #[error("site {site} out of range: {reason}")]
    SiteOutOfRange { site: i64, reason: String },

    #[error("profile signal below floor {floor:.1e} across the fit window")]
    SignalBelowFloor { floor: f64 },

    #[error("state needs {needed} amplitudes, budget is {budget}")]
    BudgetExceeded { needed: u128, budget: u128 },

    #[error("operator supports overlap: [{a}, {}] and [{b}, {}]", a + 2, b + 2)]
    OverlappingSupports { a: usize, b: usize },

    #[error("optimization stalled: {0}")]
    StalledDescent(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn mismatch(msg: impl Into<String>) -> Error {
    Error::DimensionMismatch(msg.into())
}
