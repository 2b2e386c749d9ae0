use thiserror::Error;

/// Errors raised by models, drivers and diagnostics.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EmError {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// A mixture component lost its mass or its dispersion collapsed.
    #[error("degenerate component {component}: {reason}")]
    Degenerate { component: usize, reason: String },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("data error: {0}")]
    Data(String),
}

pub type Result<T, E = EmError> = std::result::Result<T, E>;
