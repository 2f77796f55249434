use thiserror::Error;

/// Errors shared across the laboratory.
///
/// The CLI maps these to exit codes: invalid input → 2, precision
/// exhaustion → 3; property violations are reported, not raised.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("cyclotomic level {found} out of range 1..={max}")]
    LevelOutOfRange { found: u32, max: u32 },

    #[error("operands belong to different rings or charts")]
    ContextMismatch,

    #[error("not divisible")]
    NotDivisible,

    #[error("precision exhausted: {0}")]
    PrecisionExhausted(String),

    #[error("not small: {0}")]
    NotSmall(String),

    #[error("endomorphisms do not commute")]
    NonCommuting,

    #[error("degree mismatch: {0}")]
    DegreeMismatch(String),

    #[error("product leaves the representable fractional-index set")]
    UnrepresentableProduct,

    #[error("differential vector is not symmetric: {0}")]
    Asymmetric(String),

    #[error("malformed input: {0}")]
    Malformed(String),
}

pub type Result<T> = std::result::Result<T, Error>;
