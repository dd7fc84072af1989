use thiserror::Error;

/// Errors produced by the data model, DSP, labeling, and ingestion layers.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid series: {0}")]
    InvalidSeries(String),

    #[error("channel unusable: {0}")]
    UnusableChannel(String),

    #[error("recording has no common time span across channels")]
    DisjointSpans,

    #[error("duplicate channel for (modality, device): {0}")]
    DuplicateChannel(String),

    #[error("invalid window spec: {0}")]
    InvalidWindowSpec(String),

    #[error("labeling: {0}")]
    Labeling(String),

    #[error("interpolation query {query} outside knot range [{lo}, {hi}]")]
    OutOfRange { query: f64, lo: f64, hi: f64 },

    #[error("interpolation needs >= 2 strictly increasing knots: {0}")]
    BadKnots(String),

    #[error("filter design: {0}")]
    FilterDesign(String),

    #[error("signal too short: {0}")]
    TooShort(String),

    #[error("feature extraction: {0}")]
    Feature(String),

    #[error("synthesis script invalid: {0}")]
    BadScript(String),

    #[error("parse error in {path} line {line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CoreError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        CoreError::Io {
            path: path.into(),
            source,
        }
    }
}
