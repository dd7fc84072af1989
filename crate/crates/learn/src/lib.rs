//! Learning layer: from-scratch CART ensembles with node structure exposed
//! for exact TreeSHAP, shadow-feature (Boruta-style) selection, the
//! 9-weak-learner ensemble, and leave-one-subject-out evaluation.

pub mod data;
pub mod ensemble;
pub mod eval;
pub mod shap;
pub mod trees;

mod error;

pub use error::LearnError;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, LearnError>;
