//! PPG heartbeat segmentation and signal-quality gating.
//!
//! Beats are found on the first derivative of the conditioned pulse wave: an
//! exponentially decaying envelope of the upstroke slope sets an adaptive
//! threshold, each super-threshold upstroke yields one beat, and the pulse
//! foot / systolic peak are located around the maximum-slope point. The
//! threshold is proportional to the envelope, so beat times are invariant to
//! amplitude scaling.

use serde::{Deserialize, Serialize};

use crate::dsp::wavelet::{mad, median};
use crate::dsp::{Beat, BeatAnnotations};
use crate::series::SampleSeries;

/// Per-subject quality bounds for beat gating.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SqiThresholds {
    pub skew: (f64, f64),
    pub kurt: (f64, f64),
    pub snr_min_db: f64,
}

impl SqiThresholds {
    pub fn is_consistent(&self) -> bool {
        self.skew.0 < self.skew.1 && self.kurt.0 < self.kurt.1
    }

    /// Wide-open thresholds (gating disabled).
    pub fn permissive() -> SqiThresholds {
        SqiThresholds {
            skew: (f64::NEG_INFINITY, f64::INFINITY),
            kurt: (f64::NEG_INFINITY, f64::INFINITY),
            snr_min_db: f64::NEG_INFINITY,
        }
    }
}

/// Median inter-peak period of the detected beats (seconds).
pub fn median_period(ann: &BeatAnnotations) -> Option<f64> {
    let times: Vec<f64> = ann.valid_beats().map(|b| b.peak_t).collect();
    if times.len() < 2 {
        return None;
    }
    let diffs: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    Some(median(&diffs))
}

/// Detect the median upstroke polarity; true when the fastest slope around
/// each candidate beat is negative-going (sensor reflection).
pub fn is_inverted(x: &[f64]) -> bool {
    let mut pos = 0.0f64;
    let mut neg = 0.0f64;
    for w in x.windows(2) {
        let d = w[1] - w[0];
        if d > 0.0 {
            pos = pos.max(d);
        } else {
            neg = neg.max(-d);
        }
    }
    neg > pos * 1.25
}

/// Segment heartbeats from a conditioned PPG channel.
///
/// Returns per-beat onsets (pulse feet) and systolic peaks. Empty output is
/// valid (flat signal has no beats).
pub fn ppg_segment_beats(x: &SampleSeries) -> BeatAnnotations {
    let rate = x.rate_hz;
    let v = x.raw_values();
    let n = v.len();
    let mut ann = BeatAnnotations {
        beats: Vec::new(),
        rate_hz: rate,
    };
    if n < (rate * 2.0) as usize {
        return ann;
    }

    // first derivative
    let mut d = vec![0.0; n];
    for i in 1..n {
        d[i] = v[i] - v[i - 1];
    }

    // adaptive threshold: decaying max envelope of the positive slope
    let decay = (-1.0 / (2.0 * rate)).exp(); // ~2 s time constant
    let mut env = vec![0.0; n];
    let mut e = 0.0f64;
    for i in 0..n {
        e = (e * decay).max(d[i].max(0.0));
        env[i] = e;
    }
    // warm-up: run the envelope backwards over the first 2 s so early beats
    // see a sane threshold
    let warm = ((2.0 * rate) as usize).min(n);
    let mut e2 = 0.0f64;
    for i in (0..warm).rev() {
        e2 = (e2 * decay).max(d[i].max(0.0));
        env[i] = env[i].max(e2);
    }

    let refractory = (0.3 * rate) as usize;
    let search = (0.35 * rate) as usize;
    let mut i = 1;
    let mut last_peak: Option<usize> = None;
    while i < n {
        if d[i] > 0.45 * env[i] && env[i] > 0.0 {
            // upstroke: find the maximum-slope point of this run
            let mut j = i;
            let mut best = i;
            while j < n && d[j] > 0.25 * env[j] {
                if d[j] > d[best] {
                    best = j;
                }
                j += 1;
            }
            // systolic peak: first local max after the steep point
            let mut peak = best;
            let hi = (best + search).min(n - 1);
            for k in best..hi {
                if v[k + 1] < v[k] {
                    peak = k;
                    break;
                }
                peak = k + 1;
            }
            // foot: local min before the steep point
            let lo = best.saturating_sub(search);
            let mut foot = best;
            for k in (lo..best).rev() {
                if v[k] <= v[foot] {
                    foot = k;
                } else if v[foot] < v[k] && foot + ((0.02 * rate) as usize) < k {
                    break;
                }
            }
            let ok = match last_peak {
                Some(p) => peak > p && peak - p >= refractory,
                None => true,
            };
            if ok && peak > foot {
                ann.beats.push(Beat {
                    peak_t: x.time_at(peak),
                    peak_idx: peak,
                    onset_t: Some(x.time_at(foot)),
                    onset_idx: Some(foot),
                    valid: true,
                });
                last_peak = Some(peak);
            }
            i = j.max(i + 1);
        } else {
            i += 1;
        }
    }
    ann
}

/// Per-beat quality statistics over one beat segment.
#[derive(Debug, Clone, Copy)]
pub struct BeatQuality {
    pub skew: f64,
    pub kurt: f64,
    pub snr_db: f64,
}

/// Skewness / kurtosis / SNR of the samples spanning one beat. SNR is the
/// power in 0.5-8 Hz against the power outside it, from a Hann periodogram.
pub fn beat_quality(seg: &[f64], rate: f64) -> BeatQuality {
    let n = seg.len();
    let mean = seg.iter().sum::<f64>() / n as f64;
    let mut m2 = 0.0;
    let mut m3 = 0.0;
    let mut m4 = 0.0;
    for v in seg {
        let d = v - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= n as f64;
    m3 /= n as f64;
    m4 /= n as f64;
    let sd = m2.sqrt();
    let skew = if sd > 0.0 { m3 / (sd * sd * sd) } else { 0.0 };
    let kurt = if m2 > 0.0 { m4 / (m2 * m2) } else { 0.0 };

    // band/out-of-band power via a direct DFT on the (short) segment
    let mut band = 0.0;
    let mut rest = 0.0;
    let half = n / 2;
    for k in 1..=half {
        let f = k as f64 * rate / n as f64;
        let mut re = 0.0;
        let mut im = 0.0;
        for (i, v) in seg.iter().enumerate() {
            let w = 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / n as f64).cos();
            let ang = std::f64::consts::TAU * k as f64 * i as f64 / n as f64;
            re += w * (v - mean) * ang.cos();
            im -= w * (v - mean) * ang.sin();
        }
        let p = re * re + im * im;
        if (0.5..=8.0).contains(&f) {
            band += p;
        } else {
            rest += p;
        }
    }
    let snr_db = 10.0 * (band / rest.max(1e-12)).log10();
    BeatQuality { skew, kurt, snr_db }
}

fn beat_segment<'a>(x: &'a SampleSeries, ann: &BeatAnnotations, k: usize) -> Option<&'a [f64]> {
    let b = ann.beats.get(k)?;
    let start = b.onset_idx.unwrap_or(b.peak_idx.saturating_sub((0.25 * x.rate_hz) as usize));
    let period = median_period(ann).unwrap_or(0.8);
    let end = (start + (period * x.rate_hz) as usize).min(x.len());
    if end <= start + 4 {
        return None;
    }
    Some(&x.raw_values()[start..end])
}

/// Derive subject-specific SQI bounds from the first `calib_s` seconds:
/// median +- 3 MAD for skewness and kurtosis, 10th percentile for SNR.
pub fn sqi_thresholds_from_calibration(
    x: &SampleSeries,
    ann: &BeatAnnotations,
    calib_s: f64,
) -> Option<SqiThresholds> {
    let calib_end = x.start_time + calib_s;
    let mut skews = Vec::new();
    let mut kurts = Vec::new();
    let mut snrs = Vec::new();
    for (k, b) in ann.beats.iter().enumerate() {
        if !b.valid || b.peak_t > calib_end {
            continue;
        }
        if let Some(seg) = beat_segment(x, ann, k) {
            let q = beat_quality(seg, x.rate_hz);
            skews.push(q.skew);
            kurts.push(q.kurt);
            snrs.push(q.snr_db);
        }
    }
    if skews.len() < 4 {
        return None;
    }
    let med_s = median(&skews);
    let mad_s = mad(&skews).max(0.2);
    let med_k = median(&kurts);
    let mad_k = mad(&kurts).max(0.3);
    snrs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let p10 = snrs[(snrs.len() as f64 * 0.1) as usize];
    Some(SqiThresholds {
        skew: (med_s - 3.0 * mad_s, med_s + 3.0 * mad_s),
        kurt: (med_k - 3.0 * mad_k, med_k + 3.0 * mad_k),
        snr_min_db: p10 - 3.0,
    })
}

/// Flag beats whose windowed skewness/kurtosis/SNR fall outside the bounds.
pub fn sqi_filter(
    ann: &BeatAnnotations,
    x: &SampleSeries,
    thresholds: &SqiThresholds,
) -> BeatAnnotations {
    let mut out = ann.clone();
    for k in 0..out.beats.len() {
        if !out.beats[k].valid {
            continue;
        }
        let Some(seg) = beat_segment(x, &out, k) else {
            continue;
        };
        let q = beat_quality(seg, x.rate_hz);
        let ok = q.skew >= thresholds.skew.0
            && q.skew <= thresholds.skew.1
            && q.kurt >= thresholds.kurt.0
            && q.kurt <= thresholds.kurt.1
            && q.snr_db >= thresholds.snr_min_db;
        if !ok {
            out.beats[k].valid = false;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::{Device, Modality};
    use crate::synth::ppg_beat;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn clean_ppg(bpm: f64, secs: f64, rate: f64) -> (SampleSeries, Vec<f64>) {
        let period = 60.0 / bpm;
        let mut feet = Vec::new();
        let mut t = 0.3;
        while t < secs - 1.2 * period {
            feet.push(t);
            t += period;
        }
        let n = (secs * rate) as usize;
        let mut v = vec![0.0; n];
        for f in &feet {
            let lo = ((f * rate).floor()) as usize;
            let hi = (((f + 1.6 * period) * rate).ceil() as usize).min(n);
            for i in lo..hi {
                v[i] += ppg_beat(i as f64 / rate - f, period, 0.4);
            }
        }
        let s =
            SampleSeries::from_values("p", Modality::Ppg, Device::Wristband, 0.0, rate, v).unwrap();
        (s, feet)
    }

    #[test]
    fn counts_beats_at_72_bpm() {
        let (ppg, feet) = clean_ppg(72.0, 60.0, 128.0);
        let ann = ppg_segment_beats(&ppg);
        let n = ann.valid_beats().count() as i64;
        assert!(
            (n - feet.len() as i64).abs() <= 2,
            "{n} beats vs {} scripted",
            feet.len()
        );
    }

    #[test]
    fn flat_signal_no_beats() {
        let s = SampleSeries::from_values(
            "p",
            Modality::Ppg,
            Device::Wristband,
            0.0,
            128.0,
            vec![1.0; 128 * 10],
        )
        .unwrap();
        assert_eq!(ppg_segment_beats(&s).len(), 0);
    }

    #[test]
    fn amplitude_scaling_keeps_beat_times() {
        let (ppg, _) = clean_ppg(64.0, 40.0, 128.0);
        let scaled = ppg.with_samples(
            ppg.raw_values().iter().map(|v| v * 10.0).collect(),
            ppg.validity().to_vec(),
        );
        let a = ppg_segment_beats(&ppg);
        let b = ppg_segment_beats(&scaled);
        let ta: Vec<usize> = a.valid_beats().map(|x| x.peak_idx).collect();
        let tb: Vec<usize> = b.valid_beats().map(|x| x.peak_idx).collect();
        assert_eq!(ta, tb);
    }

    #[test]
    fn feet_near_scripted_onsets() {
        let (ppg, feet) = clean_ppg(72.0, 60.0, 128.0);
        let ann = ppg_segment_beats(&ppg);
        let onsets: Vec<f64> = ann.valid_beats().filter_map(|b| b.onset_t).collect();
        let mut matched = 0;
        for f in &feet {
            if onsets.iter().any(|o| (o - f).abs() < 0.08) {
                matched += 1;
            }
        }
        assert!(
            matched as f64 / feet.len() as f64 > 0.9,
            "{matched}/{} feet matched",
            feet.len()
        );
    }

    #[test]
    fn sqi_keeps_clean_flags_noise() {
        let rate = 128.0;
        let (mut ppg, _) = clean_ppg(66.0, 120.0, rate);
        // replace 80..100 s with white noise
        let mut v = ppg.raw_values().to_vec();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let lo = (80.0 * rate) as usize;
        let hi = (100.0 * rate) as usize;
        for x in v[lo..hi].iter_mut() {
            *x = rng.gen_range(-0.8..0.8);
        }
        ppg = ppg.with_samples(v, ppg.validity().to_vec());

        let ann = ppg_segment_beats(&ppg);
        let th = sqi_thresholds_from_calibration(&ppg, &ann, 60.0).expect("calibration beats");
        assert!(th.is_consistent());
        let gated = sqi_filter(&ann, &ppg, &th);

        let clean_total = gated
            .beats
            .iter()
            .filter(|b| b.peak_t < 75.0)
            .count()
            .max(1);
        let clean_kept = gated
            .beats
            .iter()
            .filter(|b| b.peak_t < 75.0 && b.valid)
            .count();
        assert!(
            clean_kept as f64 / clean_total as f64 >= 0.9,
            "clean retention {clean_kept}/{clean_total}"
        );

        let noise_beats: Vec<&Beat> = gated
            .beats
            .iter()
            .filter(|b| b.peak_t >= 81.0 && b.peak_t < 99.0)
            .collect();
        if !noise_beats.is_empty() {
            let invalid = noise_beats.iter().filter(|b| !b.valid).count();
            assert!(
                invalid as f64 / noise_beats.len() as f64 >= 0.7,
                "only {invalid}/{} noise beats flagged",
                noise_beats.len()
            );
        }
    }

    #[test]
    fn sqi_empty_input_empty_output() {
        let s = SampleSeries::from_values(
            "p",
            Modality::Ppg,
            Device::Wristband,
            0.0,
            128.0,
            vec![0.0; 256],
        )
        .unwrap();
        let ann = BeatAnnotations {
            beats: Vec::new(),
            rate_hz: 128.0,
        };
        let out = sqi_filter(&ann, &s, &SqiThresholds::permissive());
        assert!(out.is_empty());
    }

    #[test]
    fn inversion_detector() {
        let (ppg, _) = clean_ppg(70.0, 30.0, 128.0);
        assert!(!is_inverted(ppg.raw_values()));
        let flipped: Vec<f64> = ppg.raw_values().iter().map(|v| -v).collect();
        assert!(is_inverted(&flipped));
    }
}
