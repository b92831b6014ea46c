use thiserror::Error;

/// Failures surfaced by the solver and its optimization harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("conditioning error in {context}: {detail}")]
    Conditioning { context: String, detail: String },

    #[error("eigensolver failed for layer {layer}")]
    Eigen { layer: usize },

    #[error("state error: {0}")]
    State(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn conditioning(context: impl Into<String>, detail: impl std::fmt::Display) -> Self {
        Error::Conditioning {
            context: context.into(),
            detail: detail.to_string(),
        }
    }
}
