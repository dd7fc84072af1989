//! Modality-specific signal conditioning and beat detection.
//!
//! Everything here is a pure function: identical input bits give identical
//! output bits, and per-channel parallelism is safe.

pub mod ecg;
pub mod eda;
pub mod filters;
pub mod ppg;
pub mod wavelet;

pub use ecg::{christov_rpeaks, remove_outlier_beats};
pub use eda::scl_scr_split;
pub use filters::{butter_bandpass, ecg_baseline_remove, irls_baseline, median_filter, SosFilter};
pub use ppg::{ppg_segment_beats, sqi_filter, SqiThresholds};
pub use wavelet::{wavelet_denoise, Wavelet};

use serde::{Deserialize, Serialize};

/// One detected beat.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Beat {
    /// R-peak (ECG) or systolic-peak (PPG) time, seconds.
    pub peak_t: f64,
    /// Sample index of the peak in the source series.
    pub peak_idx: usize,
    /// Beat onset (PPG foot); ECG beats leave this unset.
    pub onset_t: Option<f64>,
    pub onset_idx: Option<usize>,
    /// Quality flag; invalid beats are kept for bookkeeping but excluded from
    /// feature extraction.
    pub valid: bool,
}

/// Ordered beat annotations for one channel.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct BeatAnnotations {
    pub beats: Vec<Beat>,
    pub rate_hz: f64,
}

impl BeatAnnotations {
    pub fn len(&self) -> usize {
        self.beats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beats.is_empty()
    }

    pub fn valid_beats(&self) -> impl Iterator<Item = &Beat> {
        self.beats.iter().filter(|b| b.valid)
    }

    /// Valid beats with `lo <= peak_t < hi`.
    pub fn in_window(&self, lo: f64, hi: f64) -> Vec<&Beat> {
        self.beats
            .iter()
            .filter(|b| b.valid && b.peak_t >= lo && b.peak_t < hi)
            .collect()
    }

    /// Debug export: one `t_s,flag` row per beat.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t_s,flag\n");
        for b in &self.beats {
            s.push_str(&format!(
                "{:.6},{}\n",
                b.peak_t,
                if b.valid { 1 } else { 0 }
            ));
        }
        s
    }
}

/// Inter-beat intervals (seconds) between consecutive valid beats, filtered
/// to the physiological range [0.25 s, 3 s].
pub fn inter_beat_intervals(ann: &BeatAnnotations) -> Vec<f64> {
    let times: Vec<f64> = ann.valid_beats().map(|b| b.peak_t).collect();
    times
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|d| (0.25..=3.0).contains(d))
        .collect()
}
