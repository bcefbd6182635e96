use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Invalid parameter set (sampler, encoding, split fraction, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A hypothesis of a lemma or theorem does not hold for the given parameters.
    #[error("precondition violated: {condition} ({detail})")]
    Precondition { condition: String, detail: String },

    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },
}

impl Error {
    pub(crate) fn precondition(condition: &str, detail: impl Into<String>) -> Self {
        Error::Precondition {
            condition: condition.to_string(),
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
