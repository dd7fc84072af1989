//! Ground-truth labels from sparse cuff pressure.
//!
//! The dysreflexia criterion is a sustained rise of systolic pressure at
//! least `delta_mmhg` above baseline, where baseline is the mean of the first
//! `n_baseline` cuff readings. The sparse readings are made continuous with a
//! shape-preserving cubic interpolant; windows are labeled by majority vote
//! over the interpolated per-second labels they cover. No extrapolation:
//! windows reaching outside the cuff support stay unlabeled.

use serde::{Deserialize, Serialize};

use crate::pchip::Pchip;
use crate::series::BPReferenceSeries;
use crate::window::Window;
use crate::{CoreError, Result};

/// Labeling parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LabelingConfig {
    /// Threshold rise above baseline (mmHg).
    pub delta_mmhg: f64,
    /// Number of initial SBP readings averaged into the baseline.
    pub n_baseline: usize,
    /// Grid rate for interpolated labels (Hz).
    pub label_rate_hz: f64,
    /// Window-center-to-cuff distance for the selection proximity mask (s).
    pub proximity_s: f64,
    /// Fraction of in-window label samples that must be positive.
    pub window_rule: f64,
}

impl Default for LabelingConfig {
    fn default() -> Self {
        LabelingConfig {
            delta_mmhg: 20.0,
            n_baseline: 3,
            label_rate_hz: 1.0,
            proximity_s: 120.0,
            window_rule: 0.5,
        }
    }
}

impl LabelingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_mmhg > 0.0) {
            return Err(CoreError::Labeling("delta_mmhg must be > 0".into()));
        }
        if self.n_baseline < 1 {
            return Err(CoreError::Labeling("n_baseline must be >= 1".into()));
        }
        if !(self.window_rule > 0.0 && self.window_rule <= 1.0) {
            return Err(CoreError::Labeling("window_rule must be in (0, 1]".into()));
        }
        if !(self.label_rate_hz > 0.0) {
            return Err(CoreError::Labeling("label_rate_hz must be > 0".into()));
        }
        Ok(())
    }
}

/// Per-window classification outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WindowLabel {
    Ad,
    Normal,
    /// Window reaches outside the interpolated label support.
    Unlabeled,
}

impl WindowLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            WindowLabel::Ad => "AD",
            WindowLabel::Normal => "Normal",
            WindowLabel::Unlabeled => "Unlabeled",
        }
    }
}

/// Continuous interpolated labels on a uniform grid.
///
/// Defined only within `[first, last]` cuff timestamp.
#[derive(Debug, Clone)]
pub struct LabelSeries {
    pub t_start: f64,
    pub rate_hz: f64,
    pub sbp_interp: Vec<f64>,
    pub is_ad: Vec<bool>,
    pub baseline: f64,
    pub threshold: f64,
}

impl LabelSeries {
    pub fn t_end(&self) -> f64 {
        self.t_start + (self.sbp_interp.len().saturating_sub(1)) as f64 / self.rate_hz
    }
}

/// Arithmetic mean of the first `n_baseline` SBP readings.
pub fn compute_baseline(bp: &BPReferenceSeries, cfg: &LabelingConfig) -> Result<f64> {
    if bp.len() < cfg.n_baseline {
        return Err(CoreError::Labeling(format!(
            "need >= {} SBP readings for the baseline, have {}",
            cfg.n_baseline,
            bp.len()
        )));
    }
    Ok(bp.sbp[..cfg.n_baseline].iter().sum::<f64>() / cfg.n_baseline as f64)
}

/// Interpolate the sparse SBP onto the label grid and threshold it.
pub fn build_label_series(bp: &BPReferenceSeries, cfg: &LabelingConfig) -> Result<LabelSeries> {
    cfg.validate()?;
    if bp.len() < 2 {
        return Err(CoreError::Labeling(
            "need >= 2 cuff readings to interpolate".into(),
        ));
    }
    let baseline = compute_baseline(bp, cfg)?;
    let threshold = baseline + cfg.delta_mmhg;
    let interp = Pchip::new(bp.timestamps.clone(), bp.sbp.clone())?;
    let t0 = interp.t_first();
    let t1 = interp.t_last();
    let dt = 1.0 / cfg.label_rate_hz;
    let n = ((t1 - t0) / dt + 1e-9).floor() as usize + 1;
    let sbp_interp = interp.eval_grid(t0, dt, n)?;
    let is_ad = sbp_interp.iter().map(|v| *v >= threshold).collect();
    Ok(LabelSeries {
        t_start: t0,
        rate_hz: cfg.label_rate_hz,
        sbp_interp,
        is_ad,
        baseline,
        threshold,
    })
}

/// Labeled window with reporting metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabeledWindow {
    pub subject_id: String,
    pub window_start_s: f64,
    pub window_end_s: f64,
    pub label: WindowLabel,
    /// Mean interpolated SBP over the window (None when unlabeled).
    pub sbp_interp_mean: Option<f64>,
    pub baseline: f64,
}

/// Label windows by majority vote over in-window label samples.
///
/// A window is AD iff at least `window_rule` of the label-grid samples inside
/// `[start, end)` are above threshold; it is unlabeled iff any part of it
/// lies outside the label support.
pub fn label_windows(
    bp: &BPReferenceSeries,
    windows: &[Window<'_>],
    cfg: &LabelingConfig,
) -> Result<Vec<LabeledWindow>> {
    let series = build_label_series(bp, cfg)?;
    Ok(windows
        .iter()
        .map(|w| label_one(&series, w, cfg))
        .collect())
}

fn label_one(series: &LabelSeries, w: &Window<'_>, cfg: &LabelingConfig) -> LabeledWindow {
    let dt = 1.0 / series.rate_hz;
    let support = w.start_s >= series.t_start - 1e-9 && w.end_s <= series.t_end() + dt - 1e-9;
    let mut label = WindowLabel::Unlabeled;
    let mut mean = None;
    if support {
        // label-grid indices with start <= t < end
        let lo = ((w.start_s - series.t_start) * series.rate_hz - 1e-9).ceil().max(0.0) as usize;
        let hi = (((w.end_s - series.t_start) * series.rate_hz) - 1e-9).ceil() as usize;
        let hi = hi.min(series.sbp_interp.len());
        if lo < hi {
            let slice = &series.is_ad[lo..hi];
            let n_ad = slice.iter().filter(|b| **b).count();
            let frac = n_ad as f64 / slice.len() as f64;
            label = if frac >= cfg.window_rule {
                WindowLabel::Ad
            } else {
                WindowLabel::Normal
            };
            mean = Some(series.sbp_interp[lo..hi].iter().sum::<f64>() / (hi - lo) as f64);
        }
    }
    LabeledWindow {
        subject_id: w.subject_id().to_string(),
        window_start_s: w.start_s,
        window_end_s: w.end_s,
        label,
        sbp_interp_mean: mean,
        baseline: series.baseline,
    }
}

/// True iff the window center is within `proximity_s` (inclusive) of any
/// cuff timestamp.
pub fn proximity_mask(bp: &BPReferenceSeries, windows: &[Window<'_>], cfg: &LabelingConfig) -> Vec<bool> {
    windows
        .iter()
        .map(|w| {
            let c = w.center();
            bp.timestamps
                .iter()
                .any(|t| (c - t).abs() <= cfg.proximity_s + 1e-9)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::{Device, Modality, SampleSeries, SensorRecording};
    use crate::window::{window_iter, WindowSpec};

    fn bp(ts: Vec<f64>, sbp: Vec<f64>) -> BPReferenceSeries {
        let dbp = sbp.iter().map(|s| s * 0.6).collect();
        BPReferenceSeries::new(ts, sbp, dbp, None).unwrap()
    }

    fn rec_of_len(t: f64) -> SensorRecording {
        let s = SampleSeries::from_values(
            "c",
            Modality::Hr,
            Device::EcgPatch,
            0.0,
            1.0,
            vec![0.0; t as usize],
        )
        .unwrap();
        SensorRecording::new("s", vec![s]).unwrap()
    }

    #[test]
    fn baseline_is_mean_of_first_three() {
        let cfg = LabelingConfig::default();
        let b = bp(vec![0.0, 150.0, 300.0, 450.0], vec![118.0, 122.0, 120.0, 160.0]);
        assert_eq!(compute_baseline(&b, &cfg).unwrap(), 120.0);
        let c = bp(vec![0.0, 150.0, 300.0], vec![130.0, 130.0, 130.0]);
        assert_eq!(compute_baseline(&c, &cfg).unwrap(), 130.0);
    }

    #[test]
    fn baseline_needs_enough_entries() {
        let cfg = LabelingConfig::default();
        let b = bp(vec![0.0, 150.0], vec![118.0, 122.0]);
        assert!(compute_baseline(&b, &cfg).is_err());
    }

    #[test]
    fn windows_above_threshold_are_ad() {
        let cfg = LabelingConfig::default();
        // baseline 120, threshold 140; plateau at 150 from t=300..600
        let b = bp(
            vec![0.0, 150.0, 300.0, 450.0, 600.0, 750.0],
            vec![120.0, 120.0, 150.0, 150.0, 150.0, 120.0],
        );
        let rec = rec_of_len(750.0);
        let spec = WindowSpec::new(60.0, 10.0).unwrap();
        let windows: Vec<_> = window_iter(&rec, &spec).collect();
        let labels = label_windows(&b, &windows, &cfg).unwrap();
        // window fully inside the plateau
        let mid = labels
            .iter()
            .find(|l| l.window_start_s == 350.0)
            .unwrap();
        assert_eq!(mid.label, WindowLabel::Ad);
        // window fully inside the initial flat region
        let lo = labels.iter().find(|l| l.window_start_s == 30.0).unwrap();
        assert_eq!(lo.label, WindowLabel::Normal);
    }

    #[test]
    fn window_outside_support_is_unlabeled() {
        let cfg = LabelingConfig::default();
        let b = bp(vec![100.0, 300.0, 500.0], vec![120.0, 121.0, 119.0]);
        let rec = rec_of_len(700.0);
        let spec = WindowSpec::new(60.0, 10.0).unwrap();
        let windows: Vec<_> = window_iter(&rec, &spec).collect();
        let labels = label_windows(&b, &windows, &cfg).unwrap();
        assert_eq!(labels[0].label, WindowLabel::Unlabeled); // [0, 60) < first cuff at 100
        let last = labels.last().unwrap();
        assert_eq!(last.label, WindowLabel::Unlabeled); // beyond last cuff at 500
        assert!(labels.iter().any(|l| l.label != WindowLabel::Unlabeled));
    }

    #[test]
    fn proximity_boundary_is_inclusive() {
        let cfg = LabelingConfig::default();
        let b = bp(vec![0.0, 300.0, 600.0], vec![120.0, 120.0, 120.0]);
        let rec = rec_of_len(1000.0);
        let spec = WindowSpec::new(60.0, 10.0).unwrap();
        let windows: Vec<_> = window_iter(&rec, &spec).collect();
        let mask = proximity_mask(&b, &windows, &cfg);
        for (w, m) in windows.iter().zip(&mask) {
            let c = w.center();
            let d = [0.0f64, 300.0, 600.0]
                .iter()
                .map(|t| (c - t).abs())
                .fold(f64::INFINITY, f64::min);
            assert_eq!(*m, d <= 120.0 + 1e-9, "center {c} dist {d}");
        }
        // window centered at 690: 90 s from the 600 s cuff -> true
        let w690 = windows.iter().position(|w| (w.center() - 690.0).abs() < 1e-9).unwrap();
        assert!(mask[w690]);
        // window centered at 750: 150 s away -> false
        let w750 = windows.iter().position(|w| (w.center() - 750.0).abs() < 1e-9).unwrap();
        assert!(!mask[w750]);
        // exact 120 s boundary -> inclusive
        let w720 = windows.iter().position(|w| (w.center() - 720.0).abs() < 1e-9).unwrap();
        assert!(mask[w720]);
    }

    #[test]
    fn raising_delta_never_creates_ad() {
        let mut cfg = LabelingConfig::default();
        let b = bp(
            vec![0.0, 150.0, 300.0, 450.0, 600.0],
            vec![120.0, 125.0, 148.0, 131.0, 120.0],
        );
        let rec = rec_of_len(600.0);
        let spec = WindowSpec::new(60.0, 10.0).unwrap();
        let windows: Vec<_> = window_iter(&rec, &spec).collect();
        let base = label_windows(&b, &windows, &cfg).unwrap();
        for delta in [25.0, 30.0, 40.0] {
            cfg.delta_mmhg = delta;
            let raised = label_windows(&b, &windows, &cfg).unwrap();
            for (lo, hi) in base.iter().zip(&raised) {
                if lo.label == WindowLabel::Normal {
                    assert_ne!(hi.label, WindowLabel::Ad);
                }
            }
        }
    }
}
