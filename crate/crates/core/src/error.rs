use thiserror::Error;

/// Library-wide error type.
///
/// `schema`-class errors mean a caller passed structurally invalid input;
/// `numerical`-class errors mean a guard tripped during an otherwise valid
/// computation. The CLI maps these classes to distinct exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("grid does not resolve the requested band: {0}")]
    UnderResolved(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("eigensolver failed to converge: {0}")]
    EigenFailure(String),

    #[error("blow-up guard tripped: {0}")]
    BlowUp(String),

    #[error("divergence guard tripped: {0}")]
    Divergence(String),
}

impl Error {
    /// True for guard trips that occur during valid computations
    /// (as opposed to malformed input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_) | Error::EigenFailure(_) | Error::BlowUp(_) | Error::Divergence(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
