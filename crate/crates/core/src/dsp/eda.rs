//! Bioimpedance decomposition into tonic (SCL) and phasic (SCR) components.

use crate::dsp::filters::{median_filter_slice, median_width};
use crate::series::SampleSeries;

/// Split BioZ into tonic and phasic parts with a 4 s sliding median:
/// `scl = median_4s(x)`, `scr = x - scl`, so `scl + scr == x` exactly.
pub fn scl_scr_split(x: &SampleSeries) -> (SampleSeries, SampleSeries) {
    let w = median_width(4.0, x.rate_hz).min(x.len().max(1));
    let scl_vals = median_filter_slice(x.raw_values(), w);
    let scr_vals: Vec<f64> = x
        .raw_values()
        .iter()
        .zip(&scl_vals)
        .map(|(v, s)| v - s)
        .collect();
    let mut scl = x.with_samples(scl_vals, x.validity().to_vec());
    scl.channel_id = format!("{}:scl", x.channel_id);
    let mut scr = x.with_samples(scr_vals, x.validity().to_vec());
    scr.channel_id = format!("{}:scr", x.channel_id);
    (scl, scr)
}
