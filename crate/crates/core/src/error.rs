use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Argument outside the function's domain, e.g. a negative spot.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    Input(String),

    /// A closed-form formula was queried outside the region where it applies.
    #[error("region error: {0}")]
    Region(String),

    /// Two adjacent pieces disagree at their shared breakpoint by more than
    /// the representation tolerance. Pricing operations never produce this
    /// from valid inputs, so seeing it means an internal invariant broke.
    #[error("continuity violated at x = {x}: left piece gives {left}, right piece gives {right}")]
    Continuity { x: f64, left: f64, right: f64 },

    #[error("not representable: {0}")]
    Unsupported(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True when the error signals a broken internal invariant rather than bad
    /// user input.
    pub fn is_internal(&self) -> bool {
        matches!(self, Error::Continuity { .. })
    }
}
