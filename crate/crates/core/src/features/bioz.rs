//! Bioimpedance features: tonic statistics, phasic SCR descriptors, band
//! powers, and spectral shape.

use crate::features::spectral::{band_power, magnitude_spectrum, periodogram, spectral_shape};
use crate::features::stats;

pub const BIOZ_FEATURE_NAMES: [&str; 20] = [
    "scl_mean",
    "scl_std",
    "scl_min",
    "scl_max",
    "scl_d1_mean",
    "scr_peak_count",
    "scr_amp_mean",
    "scr_rise_mean_s",
    "scr_area",
    "bp_0.0_0.1",
    "bp_0.1_0.2",
    "bp_0.2_0.3",
    "bp_0.3_0.4",
    "bp_0.4_0.5",
    "spec_mag_area",
    "spec_freq_mean",
    "spec_freq_std",
    "spec_range",
    "spec_skew",
    "spec_kurt",
];

/// Minimum SCR prominence (signal units) for a peak to count.
pub const SCR_MIN_AMP: f64 = 0.01;

/// One detected skin-conductance response.
#[derive(Debug, Clone, Copy)]
pub struct ScrEvent {
    pub onset_idx: usize,
    pub peak_idx: usize,
    pub amplitude: f64,
}

/// Find SCR events: local maxima of the phasic signal whose rise from the
/// preceding local minimum exceeds [`SCR_MIN_AMP`].
pub fn scr_events(scr: &[f64]) -> Vec<ScrEvent> {
    let n = scr.len();
    let mut events = Vec::new();
    if n < 3 {
        return events;
    }
    let mut trough = 0usize;
    let mut i = 1;
    while i + 1 < n {
        // keep the latest minimum so flat stretches don't inflate rise times
        if scr[i] <= scr[trough] {
            trough = i;
        }
        if scr[i] > scr[i - 1] && scr[i] >= scr[i + 1] {
            let amp = scr[i] - scr[trough];
            if amp > SCR_MIN_AMP && scr[i] > SCR_MIN_AMP {
                events.push(ScrEvent {
                    onset_idx: trough,
                    peak_idx: i,
                    amplitude: amp,
                });
                trough = i;
            }
        }
        i += 1;
    }
    events
}

/// Window-level BioZ features from the tonic/phasic pair.
pub fn bioz_features(scl: &[f64], scr: &[f64], rate_hz: f64) -> Vec<Option<f64>> {
    let mut out = vec![None; BIOZ_FEATURE_NAMES.len()];
    if scl.len() < 4 {
        return out;
    }
    out[0] = stats::mean(scl);
    out[1] = stats::std_dev(scl);
    out[2] = scl.iter().cloned().reduce(f64::min);
    out[3] = scl.iter().cloned().reduce(f64::max);
    let d1: Vec<f64> = scl.windows(2).map(|w| (w[1] - w[0]) * rate_hz).collect();
    out[4] = stats::mean(&d1);

    let events = scr_events(scr);
    out[5] = Some(events.len() as f64);
    if !events.is_empty() {
        let amps: Vec<f64> = events.iter().map(|e| e.amplitude).collect();
        out[6] = stats::mean(&amps);
        let rises: Vec<f64> = events
            .iter()
            .map(|e| (e.peak_idx - e.onset_idx) as f64 / rate_hz)
            .collect();
        out[7] = stats::mean(&rises);
    } else {
        out[6] = Some(0.0);
        out[7] = Some(0.0);
    }
    let dt = 1.0 / rate_hz;
    out[8] = Some(scr.iter().map(|v| v.max(0.0)).sum::<f64>() * dt);

    let (f, p) = periodogram(scr, rate_hz);
    if !f.is_empty() {
        for (k, (lo, hi)) in [(0.0, 0.1), (0.1, 0.2), (0.2, 0.3), (0.3, 0.4), (0.4, 0.5)]
            .into_iter()
            .enumerate()
        {
            out[9 + k] = Some(band_power(&f, &p, lo, hi));
        }
    }
    let (fm, m) = magnitude_spectrum(scr, rate_hz);
    if let Some(shape) = spectral_shape(&fm, &m) {
        out[14] = Some(shape.magnitude_area);
        out[15] = Some(shape.freq_mean);
        out[16] = Some(shape.freq_std);
        out[17] = Some(shape.range);
        out[18] = Some(shape.skew);
        out[19] = Some(shape.kurt);
    }
    out
}
