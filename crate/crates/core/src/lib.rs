//! Data model, signal conditioning, and feature extraction for multimodal
//! wearable recordings, plus objective blood-pressure-derived labeling and a
//! scripted synthetic cohort generator.
//!
//! The crate is organized around a small set of immutable types:
//! [`series::SampleSeries`] (one uniformly sampled channel with an explicit
//! gap mask), [`series::SensorRecording`] (all channels of one subject on a
//! shared session clock), and [`series::BPReferenceSeries`] (sparse cuff
//! measurements). Labels are produced by thresholding a shape-preserving
//! interpolation of systolic pressure ([`labeling`]), features by sliding
//! windows over conditioned signals ([`window`], [`dsp`], [`features`]).
//! [`synth`] generates cohorts with known ground truth so the whole pipeline
//! is testable end to end without clinical data.

pub mod dsp;
pub mod features;
pub mod ingest;
pub mod labeling;
pub mod pchip;
pub mod seed;
pub mod series;
pub mod synth;
pub mod window;

mod error;

pub use error::CoreError;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, CoreError>;
