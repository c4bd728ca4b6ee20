use thiserror::Error;

/// Errors surfaced by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {what} (expected {expected}, got {actual})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("enumeration cap exceeded: {count} discount paths per country (cap {cap})")]
    EnumerationCap { count: u128, cap: u128 },

    #[error("master LP too large: {rows} rows (cap {cap})")]
    MasterTooLarge { rows: usize, cap: usize },

    #[error("oracle cap exceeded: {size} (cap {cap})")]
    OracleCap { size: u128, cap: u128 },

    #[error("empty cut pool")]
    EmptyPool,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid cut detected: relaxed primal bound {mu} exceeds dual bound {dual}")]
    InvalidCut { mu: f64, dual: f64 },

    #[error("primal selection hit its {0} limit")]
    PrimalLimit(&'static str),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Whether the error stems from numerical trouble rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_) | Error::InvalidCut { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
