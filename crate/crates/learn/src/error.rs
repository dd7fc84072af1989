use thiserror::Error;

/// Errors from model fitting, attribution, and evaluation.
#[derive(Debug, Error)]
pub enum LearnError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid training data: {0}")]
    BadData(String),

    #[error("single-class target: {0}")]
    SingleClass(String),

    #[error("invalid parameters: {0}")]
    BadParams(String),

    #[error("fold plan: {0}")]
    FoldPlan(String),

    #[error("training-row leak detected: {0}")]
    Leak(String),

    #[error("model serialization: {0}")]
    Serialization(String),

    #[error(transparent)]
    Core(#[from] ad_core::CoreError),
}
