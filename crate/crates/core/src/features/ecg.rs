//! ECG beat-template features: fiducial durations and amplitudes, db3
//! approximation coefficients, Hermite expansion, and uniform local binary
//! patterns over the QRS region.

use crate::dsp::ecg::{beat_waveform, median_template};
use crate::dsp::wavelet::{median, Wavelet};
use crate::dsp::BeatAnnotations;
use crate::features::stats;
use crate::series::SampleSeries;

/// Per-beat fiducial measurements (times in ms, amplitudes in signal units).
#[derive(Debug, Clone, Copy)]
pub struct BeatFiducials {
    pub qrs_width_ms: f64,
    pub qs_dur_ms: f64,
    pub pq_amp: f64,
    pub qr_amp: f64,
    pub rs_amp: f64,
    pub qr_rs_ratio: f64,
    pub r_amp: f64,
    pub p_amp: f64,
}

/// Beat window relative to the R peak.
pub const BEAT_PRE_S: f64 = 0.25;
pub const BEAT_POST_S: f64 = 0.40;

/// Parabolic refinement of an extremum at index `i` (sub-sample offset).
fn refine(x: &[f64], i: usize) -> f64 {
    if i == 0 || i + 1 >= x.len() {
        return i as f64;
    }
    let (a, b, c) = (x[i - 1], x[i], x[i + 1]);
    let denom = a - 2.0 * b + c;
    if denom.abs() < 1e-15 {
        return i as f64;
    }
    i as f64 + (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
}

fn argmin(x: &[f64]) -> usize {
    x.iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap_or(0)
}

fn argmax(x: &[f64]) -> usize {
    x.iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// Measure fiducials on one beat waveform (R peak at `pre` samples).
pub fn beat_fiducials(wave: &[f64], rate_hz: f64) -> Option<BeatFiducials> {
    let pre = (BEAT_PRE_S * rate_hz).round() as usize;
    if wave.len() < pre + 2 {
        return None;
    }
    let ms = 1000.0 / rate_hz;
    // isoelectric reference: median of the earliest 60 ms
    let iso_n = ((0.06 * rate_hz) as usize).max(1).min(pre);
    let iso = median(&wave[..iso_n]);

    let r_idx = pre;
    let search = (0.08 * rate_hz).round() as usize;
    // Q: trough just before R
    let q_lo = r_idx.saturating_sub(search);
    let q_rel = argmin(&wave[q_lo..r_idx]);
    let q_idx = q_lo + q_rel;
    // S: trough just after R
    let s_hi = (r_idx + 1 + (0.1 * rate_hz).round() as usize).min(wave.len());
    let s_rel = argmin(&wave[r_idx + 1..s_hi]);
    let s_idx = r_idx + 1 + s_rel;
    // P: local max in the window 250..100 ms before R
    let p_lo = r_idx.saturating_sub((0.25 * rate_hz).round() as usize);
    let p_hi = r_idx.saturating_sub((0.10 * rate_hz).round() as usize);
    let p_idx = if p_hi > p_lo {
        p_lo + argmax(&wave[p_lo..p_hi])
    } else {
        p_lo
    };

    let q_pos = refine(wave, q_idx);
    let s_pos = refine(wave, s_idx);
    let qs_dur_ms = (s_pos - q_pos) * ms;

    // QRS on/offset: scan outward from Q/S until within 5% of R amplitude of
    // the isoelectric line
    let r_amp = wave[r_idx] - iso;
    let thresh = 0.05 * r_amp.abs();
    let mut onset = q_idx;
    while onset > 0 && (wave[onset] - iso).abs() > thresh {
        onset -= 1;
    }
    let mut offset = s_idx;
    while offset + 1 < wave.len() && (wave[offset] - iso).abs() > thresh {
        offset += 1;
    }
    let qrs_width_ms = (refine(wave, offset) - refine(wave, onset)) * ms;

    let q_amp = wave[q_idx] - iso;
    let p_amp = wave[p_idx] - iso;
    let qr = wave[r_idx] - wave[q_idx];
    let rs = wave[r_idx] - wave[s_idx];
    Some(BeatFiducials {
        qrs_width_ms,
        qs_dur_ms,
        pq_amp: p_amp - q_amp,
        qr_amp: qr,
        rs_amp: rs,
        qr_rs_ratio: if rs.abs() > 1e-12 { qr / rs } else { 0.0 },
        r_amp,
        p_amp,
    })
}

/// Resample a waveform to `n` points by linear interpolation.
pub fn resample_to(wave: &[f64], n: usize) -> Vec<f64> {
    let m = wave.len();
    if m == 0 || n == 0 {
        return Vec::new();
    }
    (0..n)
        .map(|i| {
            let pos = i as f64 * (m - 1) as f64 / (n - 1).max(1) as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(m - 1);
            let frac = pos - lo as f64;
            wave[lo] * (1.0 - frac) + wave[hi] * frac
        })
        .collect()
}

/// Level-3 db3 approximation coefficients of the (128-sample-resampled)
/// median beat: 16 coefficients.
pub fn db3_approx_coeffs(beat: &[f64]) -> Vec<f64> {
    let resampled = resample_to(beat, 128);
    let w = Wavelet::db3();
    w.decompose(&resampled, 3)
        .expect("128 samples, 3 levels")
        .approx
}

/// Physicists' Hermite polynomial H_n(u), iterative.
fn hermite_poly(n: usize, u: f64) -> f64 {
    match n {
        0 => 1.0,
        1 => 2.0 * u,
        _ => {
            let mut h0 = 1.0;
            let mut h1 = 2.0 * u;
            for k in 2..=n {
                let h2 = 2.0 * u * h1 - 2.0 * (k as f64 - 1.0) * h0;
                h0 = h1;
                h1 = h2;
            }
            h1
        }
    }
}

/// Orthonormal Hermite function psi_n(u); norm sqrt(2^n n! sqrt(pi))
/// computed in logs to stay stable.
fn hermite_fn(n: usize, u: f64) -> f64 {
    let mut log_fac = 0.0;
    for k in 1..=n {
        log_fac += (k as f64).ln();
    }
    let norm = ((n as f64) * std::f64::consts::LN_2 + log_fac).exp().sqrt()
        * std::f64::consts::PI.powf(0.25);
    hermite_poly(n, u) * (-u * u / 2.0).exp() / norm
}

/// Least-squares Hermite expansion (orders 0..=5) of the beat around its R
/// peak; the width is fitted by scanning a sigma grid. Returns (coeffs, best
/// sigma in ms).
pub fn hermite_expansion(beat: &[f64], rate_hz: f64) -> (Vec<f64>, f64) {
    const ORDER: usize = 6;
    let pre = (BEAT_PRE_S * rate_hz).round() as usize;
    let n = beat.len();
    let times: Vec<f64> = (0..n).map(|i| (i as f64 - pre as f64) / rate_hz).collect();
    let mut best: Option<(f64, Vec<f64>, f64)> = None;
    for sigma_ms in [20.0, 30.0, 40.0, 55.0, 70.0, 90.0, 120.0] {
        let sigma = sigma_ms / 1000.0;
        // design matrix
        let mut ata = [[0.0f64; ORDER]; ORDER];
        let mut atb = [0.0f64; ORDER];
        for (i, t) in times.iter().enumerate() {
            let u = t / sigma;
            let mut row = [0.0; ORDER];
            for (k, r) in row.iter_mut().enumerate() {
                *r = hermite_fn(k, u);
            }
            for a in 0..ORDER {
                for b in 0..ORDER {
                    ata[a][b] += row[a] * row[b];
                }
                atb[a] += row[a] * beat[i];
            }
        }
        if let Some(coef) = solve6(&mut ata, &mut atb) {
            // residual
            let mut sse = 0.0;
            for (i, t) in times.iter().enumerate() {
                let u = t / sigma;
                let mut fit = 0.0;
                for (k, c) in coef.iter().enumerate() {
                    fit += c * hermite_fn(k, u);
                }
                sse += (fit - beat[i]).powi(2);
            }
            if best.as_ref().map_or(true, |(s, _, _)| sse < *s) {
                best = Some((sse, coef.to_vec(), sigma_ms));
            }
        }
    }
    match best {
        Some((_, coef, sigma_ms)) => (coef, sigma_ms),
        None => (vec![0.0; ORDER], 0.0),
    }
}

/// Gaussian elimination with partial pivoting for the 6x6 normal equations.
fn solve6(a: &mut [[f64; 6]; 6], b: &mut [f64; 6]) -> Option<[f64; 6]> {
    let n = 6;
    for col in 0..n {
        let piv = (col..n).max_by(|i, j| a[*i][col].abs().partial_cmp(&a[*j][col].abs()).unwrap())?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 6];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

/// Number of uniform-LBP histogram bins (58 uniform 8-bit patterns + 1 rest).
pub const ULBP_BINS: usize = 59;

fn is_uniform(code: u8) -> bool {
    let transitions = (code ^ code.rotate_left(1)).count_ones();
    transitions <= 2
}

/// Map uniform codes to 0..57 (ascending code order), everything else to 58.
fn ulbp_bin(code: u8) -> usize {
    // built once: uniform codes in ascending order
    static MAP: std::sync::OnceLock<[usize; 256]> = std::sync::OnceLock::new();
    let map = MAP.get_or_init(|| {
        let mut m = [58usize; 256];
        let mut next = 0;
        for c in 0..=255u8 {
            if is_uniform(c) {
                m[c as usize] = next;
                next += 1;
            }
        }
        debug_assert_eq!(next, 58);
        m
    });
    map[code as usize]
}

/// 59-bin uniform-LBP histogram over the QRS region of the median beat
/// (8 neighbors at offsets +-1..+-4 samples). Raw counts: the histogram mass
/// equals the number of evaluated points.
pub fn ulbp_histogram(beat: &[f64], rate_hz: f64) -> Vec<f64> {
    let pre = (BEAT_PRE_S * rate_hz).round() as usize;
    let half = (0.06 * rate_hz).round() as usize;
    let lo = pre.saturating_sub(half).max(4);
    let hi = (pre + half).min(beat.len().saturating_sub(4));
    let mut hist = vec![0.0; ULBP_BINS];
    if lo >= hi {
        return hist;
    }
    for i in lo..hi {
        let c = beat[i];
        let mut code = 0u8;
        for (bit, off) in [-4i64, -3, -2, -1, 1, 2, 3, 4].iter().enumerate() {
            let j = (i as i64 + off) as usize;
            if beat[j] >= c {
                code |= 1 << bit;
            }
        }
        hist[ulbp_bin(code)] += 1.0;
    }
    hist
}

pub const ECG_FIDUCIAL_NAMES: [&str; 8] = [
    "qrs_width_ms",
    "qs_dur_ms",
    "pq_amp",
    "qr_amp",
    "rs_amp",
    "qr_rs_ratio",
    "r_amp",
    "p_amp",
];

/// Full ECG feature-name list (fiducials, morphology, HRV appended by the
/// registry builder).
pub fn ecg_morph_names() -> Vec<String> {
    let mut names = Vec::new();
    for i in 0..16 {
        names.push(format!("db3_a3_{i:02}"));
    }
    for i in 0..6 {
        names.push(format!("hermite_c{i}"));
    }
    names.push("hermite_width_ms".into());
    for i in 0..ULBP_BINS {
        names.push(format!("ulbp_{i:02}"));
    }
    names
}

/// Window-level ECG template features: per-beat fiducial medians plus
/// median-beat morphology. Returns (fiducials 8, morphology 16+7+59) or None
/// when fewer than 2 usable beats fall in the window.
pub fn ecg_window_features(
    ecg: &SampleSeries,
    ann: &BeatAnnotations,
    lo: f64,
    hi: f64,
) -> Option<(Vec<Option<f64>>, Vec<Option<f64>>)> {
    let rate = ecg.rate_hz;
    let pre = (BEAT_PRE_S * rate).round() as usize;
    let post = (BEAT_POST_S * rate).round() as usize;
    let beats = ann.in_window(lo, hi);
    if beats.len() < 2 {
        return None;
    }
    let raw = ecg.raw_values();
    let waves: Vec<Vec<f64>> = beats
        .iter()
        .filter_map(|b| beat_waveform(raw, b.peak_idx, pre, post))
        .collect();
    if waves.len() < 2 {
        return None;
    }

    let mut fid_cols: Vec<Vec<f64>> = vec![Vec::new(); ECG_FIDUCIAL_NAMES.len()];
    for w in &waves {
        if let Some(f) = beat_fiducials(w, rate) {
            for (k, v) in [
                f.qrs_width_ms,
                f.qs_dur_ms,
                f.pq_amp,
                f.qr_amp,
                f.rs_amp,
                f.qr_rs_ratio,
                f.r_amp,
                f.p_amp,
            ]
            .into_iter()
            .enumerate()
            {
                fid_cols[k].push(v);
            }
        }
    }
    let fiducials: Vec<Option<f64>> = fid_cols
        .iter()
        .map(|c| if c.is_empty() { None } else { Some(median(c)) })
        .collect();

    let template = median_template(&waves);
    let mut morph = Vec::with_capacity(16 + 7 + ULB_TOTAL);
    for v in db3_approx_coeffs(&template) {
        morph.push(Some(v));
    }
    let (coeffs, width) = hermite_expansion(&template, rate);
    for c in coeffs {
        morph.push(Some(c));
    }
    morph.push(Some(width));
    for v in ulbp_histogram(&template, rate) {
        morph.push(Some(v));
    }
    Some((fiducials, morph))
}

const ULB_TOTAL: usize = ULBP_BINS;

/// Expanding mean heart rate (bpm) from session start to `t_end`, computed
/// from beat times.
pub fn cumulative_mean_hr(ann: &BeatAnnotations, t_end: f64) -> Option<f64> {
    let times: Vec<f64> = ann
        .valid_beats()
        .map(|b| b.peak_t)
        .filter(|t| *t <= t_end)
        .collect();
    if times.len() < 2 {
        return None;
    }
    let rates: Vec<f64> = times
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|d| (0.25..=3.0).contains(d))
        .map(|d| 60.0 / d)
        .collect();
    stats::mean(&rates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::ecg_template;

    fn template_beat(qrs_w: f64, rate: f64) -> Vec<f64> {
        let pre = (BEAT_PRE_S * rate).round() as usize;
        let post = (BEAT_POST_S * rate).round() as usize;
        (0..=pre + post)
            .map(|i| ecg_template((i as f64 - pre as f64) / rate, 1.0, qrs_w))
            .collect()
    }

    #[test]
    fn qs_duration_tracks_template_width() {
        let rate = 128.0;
        let narrow = beat_fiducials(&template_beat(0.09, rate), rate).unwrap();
        let wide = beat_fiducials(&template_beat(0.11, rate), rate).unwrap();
        let delta = wide.qs_dur_ms - narrow.qs_dur_ms;
        assert!(
            (delta - 20.0).abs() <= 4.0,
            "QS widened by {delta:.1} ms, expected 20 +- 4"
        );
        let delta_qrs = wide.qrs_width_ms - narrow.qrs_width_ms;
        assert!(
            (delta_qrs - 20.0).abs() <= 8.0,
            "QRS width widened by {delta_qrs:.1} ms"
        );
    }

    #[test]
    fn fiducial_amplitudes_have_expected_signs() {
        let f = beat_fiducials(&template_beat(0.09, 128.0), 128.0).unwrap();
        assert!(f.r_amp > 0.9 && f.r_amp < 1.1);
        assert!(f.qr_amp > 1.0); // R above Q trough
        assert!(f.rs_amp > 1.0);
        assert!(f.p_amp > 0.05 && f.p_amp < 0.2);
    }

    #[test]
    fn ulbp_mass_equals_evaluated_points() {
        let rate = 128.0;
        let beat = template_beat(0.09, rate);
        let hist = ulbp_histogram(&beat, rate);
        let pre = (BEAT_PRE_S * rate).round() as usize;
        let half = (0.06 * rate).round() as usize;
        let expected = (pre + half).min(beat.len() - 4) - (pre - half).max(4);
        let mass: f64 = hist.iter().sum();
        assert_eq!(mass as usize, expected);
    }

    #[test]
    fn ulbp_has_59_bins_and_uniform_count_is_58() {
        let mut uniform = 0;
        for c in 0..=255u8 {
            if is_uniform(c) {
                uniform += 1;
            }
        }
        assert_eq!(uniform, 58);
        assert_eq!(ULBP_BINS, 59);
    }

    #[test]
    fn hermite_reconstructs_gaussianish_beat() {
        let rate = 128.0;
        let beat = template_beat(0.09, rate);
        let (coeffs, width) = hermite_expansion(&beat, rate);
        assert!(width > 0.0);
        assert!(coeffs[0].abs() > 0.01, "c0 {}", coeffs[0]);
        // even symmetry of the R wave: c0 dominates c1
        assert!(coeffs[0].abs() > coeffs[1].abs());
    }

    #[test]
    fn db3_coeffs_have_fixed_length() {
        let beat = template_beat(0.09, 128.0);
        assert_eq!(db3_approx_coeffs(&beat).len(), 16);
    }

    #[test]
    fn repeated_identical_beats_zero_variance() {
        // identical template repeated: per-beat fiducials identical, so the
        // window median equals the single-beat value
        let rate = 128.0;
        let beat = template_beat(0.09, rate);
        let a = beat_fiducials(&beat, rate).unwrap();
        let b = beat_fiducials(&beat, rate).unwrap();
        assert_eq!(a.qs_dur_ms, b.qs_dur_ms);
        assert_eq!(a.r_amp, b.r_amp);
    }
}
