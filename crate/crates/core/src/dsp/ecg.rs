//! R-peak detection and beat quality gating for ECG.
//!
//! Detection follows Christov's adaptive-threshold scheme: a "complex lead"
//! (smoothed absolute derivative) is compared against the sum of a
//! steep-slope threshold M, an integrating threshold F, and a beat-expectation
//! term R. Since this pipeline is offline, the signal front is padded with a
//! time-reversed copy so the threshold warm-up happens in the pad and the
//! first real beats are not missed.

use crate::dsp::wavelet::{mad, median};
use crate::dsp::{Beat, BeatAnnotations};
use crate::series::SampleSeries;
use crate::{CoreError, Result};

/// Moving average with a centered window of `w` samples (w odd preferred).
fn moving_average(x: &[f64], w: usize) -> Vec<f64> {
    if w <= 1 || x.is_empty() {
        return x.to_vec();
    }
    let half = w / 2;
    let n = x.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for v in x {
        prefix.push(prefix.last().unwrap() + v);
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// Smoothed absolute derivative ("complex lead").
fn complex_lead(x: &[f64], rate_hz: f64) -> Vec<f64> {
    let w_line = ((rate_hz / 50.0).round() as usize).max(1);
    let w_28ms = ((0.028 * rate_hz).round() as usize).max(1);
    let w_40ms = ((0.040 * rate_hz).round() as usize).max(1);
    let s = moving_average(&moving_average(x, w_line), w_28ms);
    let mut d = vec![0.0; s.len()];
    for i in 1..s.len().saturating_sub(1) {
        d[i] = (s[i + 1] - s[i - 1]).abs() * 0.5;
    }
    moving_average(&d, w_40ms)
}

struct Thresholds {
    rate: f64,
    // steep-slope term
    mm: [f64; 5],
    m_current: f64,
    m_decrement: f64,
    since_qrs: usize,
    in_refractory: bool,
    refractory_max: f64,
    // integrating term
    f_term: f64,
    // expectation term
    rr_buf: Vec<f64>,
}

impl Thresholds {
    fn new(rate: f64, init_m: f64) -> Thresholds {
        let m = 0.6 * init_m;
        Thresholds {
            rate,
            mm: [m; 5],
            m_current: m,
            m_decrement: 0.4 * m / rate, // reach 60% after 1 s of decrease
            since_qrs: 0,
            in_refractory: false,
            refractory_max: 0.0,
            f_term: 0.0,
            rr_buf: Vec::new(),
        }
    }

    fn m_avg(&self) -> f64 {
        self.mm.iter().sum::<f64>() / 5.0
    }

    fn expected_rr(&self) -> f64 {
        if self.rr_buf.is_empty() {
            return 0.8;
        }
        self.rr_buf.iter().sum::<f64>() / self.rr_buf.len() as f64
    }

    fn on_detection(&mut self, last_rr: Option<f64>) {
        self.in_refractory = true;
        self.refractory_max = 0.0;
        self.since_qrs = 0;
        if let Some(rr) = last_rr {
            if (0.25..=3.0).contains(&rr) {
                self.rr_buf.push(rr);
                if self.rr_buf.len() > 5 {
                    self.rr_buf.remove(0);
                }
            }
        }
    }

    fn step(&mut self, y: f64) {
        self.since_qrs += 1;
        let refractory_samples = (0.2 * self.rate) as usize;
        if self.in_refractory {
            self.refractory_max = self.refractory_max.max(y);
            if self.since_qrs >= refractory_samples {
                // refresh the steep-slope buffer from the refractory peak
                let mut new_m = 0.6 * self.refractory_max;
                let last = self.mm[4];
                if new_m > 1.5 * last {
                    new_m = 1.1 * last;
                }
                self.mm.rotate_left(1);
                self.mm[4] = new_m;
                let mav = self.m_avg();
                self.m_current = mav;
                self.m_decrement = 0.4 * mav / self.rate;
                self.in_refractory = false;
            }
            return;
        }
        // linear decrease until 1.2 s after the beat, then constant
        if self.since_qrs <= (1.2 * self.rate) as usize {
            self.m_current -= self.m_decrement;
        }
    }

    fn total(&self) -> f64 {
        let mut t = self.m_current + self.f_term;
        // beat expectation lowers the threshold once 2/3 of the usual RR passed
        let elapsed = self.since_qrs as f64 / self.rate;
        let rr = self.expected_rr();
        if elapsed > 2.0 * rr / 3.0 {
            t -= (elapsed - 2.0 * rr / 3.0) * self.m_decrement * self.rate / 1.4;
        }
        t.max(0.0)
    }
}

/// Detect R peaks with adaptive thresholds; refractory period 200 ms.
///
/// Expects a conditioned ECG (band-limited, baseline removed) at >= 100 Hz.
/// Returns empty annotations when nothing crosses threshold.
pub fn christov_rpeaks(x: &SampleSeries) -> Result<BeatAnnotations> {
    if x.rate_hz < 100.0 {
        return Err(CoreError::FilterDesign(format!(
            "R-peak detection expects >= 100 Hz, got {}",
            x.rate_hz
        )));
    }
    let rate = x.rate_hz;
    let raw = x.raw_values();
    let n = raw.len();
    if n < (rate as usize) {
        return Ok(BeatAnnotations {
            beats: Vec::new(),
            rate_hz: rate,
        });
    }

    // Front pad with a time-reversed copy so warm-up happens in the pad.
    let pad = ((6.0 * rate) as usize).min(n);
    let mut ext = Vec::with_capacity(pad + n);
    ext.extend(raw[..pad].iter().rev());
    ext.extend_from_slice(raw);
    let y = complex_lead(&ext, rate);

    let init_max = y[..((5.0 * rate) as usize).min(y.len())]
        .iter()
        .fold(0.0f64, |m, v| m.max(*v));
    let mut th = Thresholds::new(rate, init_max);
    // F warm-up: mean of the first 350 ms
    let w350 = (0.35 * rate) as usize;
    th.f_term = y[..w350.min(y.len())].iter().sum::<f64>() / w350.max(1) as f64;

    let w50 = ((0.05 * rate) as usize).max(1);
    let mut detections: Vec<usize> = Vec::new();
    let mut last_peak_t: Option<f64> = None;

    for i in 0..y.len() {
        // integrating threshold: compare fresh 50 ms max against the 50 ms
        // slice 300 ms back
        if i >= w350 {
            let max_new = y[i + 1 - w50..=i].iter().fold(0.0f64, |m, v| m.max(*v));
            let old_lo = i - w350;
            let max_old = y[old_lo..old_lo + w50]
                .iter()
                .fold(0.0f64, |m, v| m.max(*v));
            th.f_term += (max_new - max_old) / 150.0;
            if th.f_term < 0.0 {
                th.f_term = 0.0;
            }
        }
        let crossing = !th.in_refractory && y[i] > th.total() && y[i] > 0.0;
        th.step(y[i]);
        if crossing {
            // refine: strongest absolute deflection within +-120 ms
            let w = (0.12 * rate) as usize;
            let lo = i.saturating_sub(w);
            let hi = (i + w + 1).min(ext.len());
            let peak = (lo..hi)
                .max_by(|a, b| ext[*a].abs().partial_cmp(&ext[*b].abs()).unwrap())
                .unwrap();
            if peak >= pad {
                let idx = peak - pad;
                let t = x.time_at(idx);
                let rr = last_peak_t.map(|p| t - p);
                if rr.map_or(true, |d| d >= 0.2) {
                    detections.push(idx);
                    th.on_detection(rr);
                    last_peak_t = Some(t);
                } else {
                    th.on_detection(None);
                }
            } else {
                th.on_detection(None);
            }
        }
    }

    detections.dedup();
    let beats = detections
        .into_iter()
        .map(|idx| Beat {
            peak_t: x.time_at(idx),
            peak_idx: idx,
            onset_t: None,
            onset_idx: None,
            valid: true,
        })
        .collect();
    Ok(BeatAnnotations {
        beats,
        rate_hz: rate,
    })
}

/// Extract a fixed-size beat waveform around a peak; None when it would
/// cross the signal edge.
pub fn beat_waveform(x: &[f64], peak_idx: usize, pre: usize, post: usize) -> Option<Vec<f64>> {
    if peak_idx < pre || peak_idx + post >= x.len() {
        return None;
    }
    Some(x[peak_idx - pre..=peak_idx + post].to_vec())
}

/// Per-sample median template across beats.
pub fn median_template(beats: &[Vec<f64>]) -> Vec<f64> {
    if beats.is_empty() {
        return Vec::new();
    }
    let len = beats[0].len();
    (0..len)
        .map(|i| {
            let col: Vec<f64> = beats.iter().map(|b| b[i]).collect();
            median(&col)
        })
        .collect()
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    if n < 2 {
        return 0.0;
    }
    let ma = a[..n].iter().sum::<f64>() / n as f64;
    let mb = b[..n].iter().sum::<f64>() / n as f64;
    let mut num = 0.0;
    let mut da = 0.0;
    let mut db = 0.0;
    for i in 0..n {
        num += (a[i] - ma) * (b[i] - mb);
        da += (a[i] - ma).powi(2);
        db += (b[i] - mb).powi(2);
    }
    if da <= 0.0 || db <= 0.0 {
        return 0.0;
    }
    num / (da * db).sqrt()
}

/// Drop beats whose R amplitude deviates more than 3 MAD from the median or
/// whose correlation with the median beat template is below 0.5. Fewer than
/// 5 beats pass through unchanged.
pub fn remove_outlier_beats(x: &SampleSeries, ann: &BeatAnnotations) -> BeatAnnotations {
    let mut out = ann.clone();
    let valid_idx: Vec<usize> = out
        .beats
        .iter()
        .enumerate()
        .filter(|(_, b)| b.valid)
        .map(|(i, _)| i)
        .collect();
    if valid_idx.len() < 5 {
        return out;
    }
    let raw = x.raw_values();
    let pre = (0.25 * x.rate_hz) as usize;
    let post = (0.4 * x.rate_hz) as usize;

    let amps: Vec<f64> = valid_idx
        .iter()
        .map(|i| raw[out.beats[*i].peak_idx])
        .collect();
    let med_amp = median(&amps);
    let amp_mad = mad(&amps).max(1e-12 * med_amp.abs()).max(1e-12);

    let waves: Vec<Option<Vec<f64>>> = valid_idx
        .iter()
        .map(|i| beat_waveform(raw, out.beats[*i].peak_idx, pre, post))
        .collect();
    let full: Vec<Vec<f64>> = waves.iter().flatten().cloned().collect();
    let template = median_template(&full);

    for (k, i) in valid_idx.iter().enumerate() {
        let amp_bad = (amps[k] - med_amp).abs() > 3.0 * amp_mad;
        let corr_bad = match &waves[k] {
            Some(w) => pearson(w, &template) < 0.5,
            None => false, // edge beats keep their flag
        };
        if amp_bad || corr_bad {
            out.beats[*i].valid = false;
        }
    }

    // enforce the 0.25 s minimum spacing, dropping the weaker beat
    let mut last_kept: Option<usize> = None;
    for i in 0..out.beats.len() {
        if !out.beats[i].valid {
            continue;
        }
        if let Some(j) = last_kept {
            if out.beats[i].peak_t - out.beats[j].peak_t < 0.25 {
                let (wi, wj) = (raw[out.beats[i].peak_idx].abs(), raw[out.beats[j].peak_idx].abs());
                if wi >= wj {
                    out.beats[j].valid = false;
                    last_kept = Some(i);
                } else {
                    out.beats[i].valid = false;
                }
                continue;
            }
        }
        last_kept = Some(i);
    }
    out
}
