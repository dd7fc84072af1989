//! PPG pulse-template, statistical, and spectral features.

use crate::dsp::wavelet::{median, Wavelet};
use crate::dsp::BeatAnnotations;
use crate::features::spectral::{
    magnitude_spectrum, peak_frequency, spectral_shape,
};
use crate::features::stats;
use crate::series::SampleSeries;

/// Per-beat pulse-wave measurements. Amplitudes are relative to the pulse
/// foot after unit-systolic normalization; times in ms.
#[derive(Debug, Clone, Copy)]
pub struct PulseFiducials {
    pub ct_ms: f64,
    pub ri: f64,
    pub ai: f64,
    pub lasi: f64,
    pub npv: f64,
    pub sw: [f64; 3],
    pub dw: [f64; 3],
    pub dw_sw: [f64; 3],
    pub sys_slope: f64,
    pub dia_slope: f64,
    pub sys_area: f64,
    pub dia_area: f64,
    pub pulse_area: f64,
}

pub const PPG_FIDUCIAL_NAMES: [&str; 19] = [
    "ct_ms",
    "ri",
    "ai",
    "lasi",
    "npv",
    "sw25_ms",
    "sw50_ms",
    "sw75_ms",
    "dw25_ms",
    "dw50_ms",
    "dw75_ms",
    "dwsw25",
    "dwsw50",
    "dwsw75",
    "sys_slope",
    "dia_slope",
    "sys_area",
    "dia_area",
    "pulse_area",
];

pub const PPG_STAT_NAMES: [&str; 8] = [
    "mean", "variance", "mad", "rms", "skewness", "kurtosis", "sampen", "perfusion",
];

pub const PPG_SPECTRAL_NAMES: [&str; 7] = [
    "f1_hz",
    "h1_amp",
    "h2_amp",
    "h3_amp",
    "spec_skew",
    "spec_energy",
    "wavelet_entropy",
];

/// Crossing time of `level` on the rising edge (foot..peak) and falling edge
/// (peak..end), linearly interpolated; sample indices as f64.
fn crossings(seg: &[f64], peak: usize, level: f64) -> (Option<f64>, Option<f64>) {
    let mut rise = None;
    for i in (1..=peak).rev() {
        if seg[i - 1] <= level && seg[i] >= level {
            let frac = (level - seg[i - 1]) / (seg[i] - seg[i - 1]).max(1e-12);
            rise = Some((i - 1) as f64 + frac);
            break;
        }
    }
    let mut fall = None;
    for i in peak..seg.len() - 1 {
        if seg[i] >= level && seg[i + 1] <= level {
            let frac = (seg[i] - level) / (seg[i] - seg[i + 1]).max(1e-12);
            fall = Some(i as f64 + frac);
            break;
        }
    }
    (rise, fall)
}

/// Measure one beat from `foot_idx` to `end_idx` (exclusive) of the filtered
/// signal. `raw_dc` is the mean of the unfiltered signal over the beat
/// (perfusion/NPV denominator).
pub fn pulse_fiducials(
    x: &[f64],
    foot_idx: usize,
    peak_idx: usize,
    end_idx: usize,
    rate_hz: f64,
    raw_dc: f64,
) -> Option<PulseFiducials> {
    if peak_idx <= foot_idx + 1 || end_idx <= peak_idx + 2 || end_idx > x.len() {
        return None;
    }
    let ms = 1000.0 / rate_hz;
    let foot_v = x[foot_idx];
    let a_sys = x[peak_idx] - foot_v;
    if a_sys <= 0.0 {
        return None;
    }
    // unit-systolic normalization
    let seg: Vec<f64> = x[foot_idx..end_idx].iter().map(|v| (v - foot_v) / a_sys).collect();
    let peak = peak_idx - foot_idx;

    let ct_ms = peak as f64 * ms;

    // diastolic lobe: local max after the systolic peak
    let mut dia_peak = None;
    let mut i = peak + 2;
    while i + 1 < seg.len() {
        if seg[i] >= seg[i - 1] && seg[i] > seg[i + 1] && seg[i] > 0.02 {
            dia_peak = Some(i);
            break;
        }
        i += 1;
    }
    // inflection (dicrotic notch): minimum between systolic and diastolic
    let notch = dia_peak.map(|d| {
        let rel = seg[peak + 1..d]
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(k, _)| k)
            .unwrap_or(0);
        peak + 1 + rel
    });

    let ri = dia_peak.map(|d| seg[d]).unwrap_or(f64::NAN);
    let ai = if ri.is_finite() { 1.0 - ri } else { f64::NAN };
    let lasi = notch
        .map(|nn| {
            let dt = (nn - peak) as f64 / rate_hz;
            if dt > 1e-3 {
                1.0 / dt
            } else {
                f64::NAN
            }
        })
        .unwrap_or(f64::NAN);
    let npv = if raw_dc.abs() > 1e-9 {
        a_sys / raw_dc.abs()
    } else {
        f64::NAN
    };

    let mut sw = [f64::NAN; 3];
    let mut dw = [f64::NAN; 3];
    let mut dw_sw = [f64::NAN; 3];
    for (k, frac) in [0.25, 0.50, 0.75].into_iter().enumerate() {
        let (rise, fall) = crossings(&seg, peak, frac);
        if let (Some(r), Some(f)) = (rise, fall) {
            sw[k] = (peak as f64 - r) * ms;
            dw[k] = (f - peak as f64) * ms;
            if sw[k] > 1e-9 {
                dw_sw[k] = dw[k] / sw[k];
            }
        }
    }

    let sys_slope = 1.0 / (ct_ms / 1000.0); // unit amplitude per second
    let dia_slope = notch
        .map(|nn| (seg[nn] - 1.0) / ((nn - peak) as f64 / rate_hz))
        .unwrap_or(f64::NAN);
    let dt = 1.0 / rate_hz;
    let sys_area: f64 = seg[..=peak].iter().sum::<f64>() * dt;
    let dia_area: f64 = seg[peak..].iter().sum::<f64>() * dt;
    let pulse_area = sys_area + dia_area;

    Some(PulseFiducials {
        ct_ms,
        ri,
        ai,
        lasi,
        npv,
        sw,
        dw,
        dw_sw,
        sys_slope,
        dia_slope,
        sys_area,
        dia_area,
        pulse_area,
    })
}

/// Median per-beat fiducials over valid beats in `[lo, hi)`.
pub fn ppg_fiducial_features(
    filtered: &SampleSeries,
    raw: &SampleSeries,
    ann: &BeatAnnotations,
    lo: f64,
    hi: f64,
) -> Option<Vec<Option<f64>>> {
    let beats = ann.in_window(lo, hi);
    if beats.len() < 2 {
        return None;
    }
    let x = filtered.raw_values();
    let rv = raw.raw_values();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); PPG_FIDUCIAL_NAMES.len()];
    for pair in beats.windows(2) {
        let b = pair[0];
        let next = pair[1];
        let (Some(foot), Some(next_foot)) = (b.onset_idx, next.onset_idx) else {
            continue;
        };
        let end = next_foot.min(x.len());
        let raw_dc = if end > foot {
            rv[foot..end].iter().sum::<f64>() / (end - foot) as f64
        } else {
            0.0
        };
        if let Some(f) = pulse_fiducials(x, foot, b.peak_idx, end, filtered.rate_hz, raw_dc) {
            let vals = [
                f.ct_ms, f.ri, f.ai, f.lasi, f.npv, f.sw[0], f.sw[1], f.sw[2], f.dw[0], f.dw[1],
                f.dw[2], f.dw_sw[0], f.dw_sw[1], f.dw_sw[2], f.sys_slope, f.dia_slope, f.sys_area,
                f.dia_area, f.pulse_area,
            ];
            for (k, v) in vals.into_iter().enumerate() {
                if v.is_finite() {
                    cols[k].push(v);
                }
            }
        }
    }
    if cols[0].len() < 1 {
        return None;
    }
    Some(
        cols.iter()
            .map(|c| if c.is_empty() { None } else { Some(median(c)) })
            .collect(),
    )
}

/// Window statistics over the filtered signal (gaps excluded); perfusion uses
/// the raw signal's DC level.
pub fn ppg_stat_features(
    filtered: &[f64],
    raw: &[f64],
    rate_hz: f64,
) -> Vec<Option<f64>> {
    let mut out = vec![None; PPG_STAT_NAMES.len()];
    if filtered.len() < 8 {
        return out;
    }
    out[0] = stats::mean(filtered);
    out[1] = stats::variance(filtered);
    out[2] = Some(stats::mad(filtered));
    out[3] = stats::rms(filtered);
    out[4] = stats::skewness(filtered);
    out[5] = stats::kurtosis(filtered);
    // sample entropy on an ~8 Hz decimated copy to keep O(n^2) in check
    let factor = (rate_hz / 8.0).round().max(1.0) as usize;
    let dec = stats::decimate(filtered, factor);
    let sd = stats::std_dev(&dec).unwrap_or(0.0);
    if sd > 0.0 {
        out[6] = stats::sample_entropy(&dec, 2, 0.2 * sd);
    }
    let ac = match (stats::percentile(filtered, 95.0), stats::percentile(filtered, 5.0)) {
        (Some(hi), Some(lo)) => hi - lo,
        _ => 0.0,
    };
    let dc = stats::mean(raw).unwrap_or(0.0);
    if dc.abs() > 1e-9 {
        out[7] = Some(100.0 * ac / dc.abs());
    }
    out
}

/// Spectral features of the filtered window.
pub fn ppg_spectral_features(filtered: &[f64], rate_hz: f64) -> Vec<Option<f64>> {
    let mut out = vec![None; PPG_SPECTRAL_NAMES.len()];
    if filtered.len() < 64 {
        return out;
    }
    let (f, m) = magnitude_spectrum(filtered, rate_hz);
    if let Some((f1, h1)) = peak_frequency(&f, &m, 0.5, 3.0) {
        out[0] = Some(f1);
        out[1] = Some(h1);
        let df = f[1] - f[0];
        for (k, slot) in [2.0, 3.0].into_iter().zip([2usize, 3usize]) {
            let target = k * f1;
            let bin = (target / df).round() as usize;
            if bin < m.len() {
                out[slot] = Some(m[bin]);
            }
        }
    }
    if let Some(shape) = spectral_shape(&f, &m) {
        out[4] = Some(shape.skew);
    }
    out[5] = Some(m.iter().map(|v| v * v).sum::<f64>());
    if filtered.len() >= 16 {
        out[6] = crate::dsp::wavelet::wavelet_energy_entropy(filtered, &Wavelet::db3(), 4).ok();
    }
    out
}
