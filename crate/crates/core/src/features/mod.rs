//! Per-window, per-modality feature extraction into a feature matrix with a
//! stable registry.
//!
//! The registry is a fixed function of the canonical channel map (Table-1
//! style: ECG/HR/RR on the chest patch, PPG/BioZ/HR/RR/Temp on the
//! wristband, Temp on the torso patch), frozen before any row is extracted,
//! so two runs over identical input produce bit-identical matrices. Subjects
//! missing a channel simply get masked cells for that channel's columns.

pub mod bioz;
pub mod ecg;
pub mod hrv;
pub mod ppg;
pub mod spectral;
pub mod stats;
pub mod trend;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsp::{self, BeatAnnotations};
use crate::labeling::{self, LabelingConfig, WindowLabel};
use crate::series::{
    resample_linear, BPReferenceSeries, Device, Modality, SampleSeries, SensorRecording,
};
use crate::window::{window_iter, WindowSpec};
use crate::{CoreError, Result};

use hrv::{HrvSpectralConfig, HRV_FEATURE_NAMES};

/// Extraction parameters (all config-exposed).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractionConfig {
    /// "Resting" reference = mean over the first this-many seconds.
    pub resting_window_s: f64,
    /// Minimum valid-sample fraction for a waveform window to produce rows.
    pub min_valid_fraction: f64,
    pub hrv: HrvSpectralConfig,
    pub ppg_band: (f64, f64),
    pub butter_order: usize,
    /// IRLS smoothness at 128 Hz; scaled by (rate/128)^2.
    pub irls_smoothness_base: f64,
    pub irls_asymmetry: f64,
    pub irls_max_iter: usize,
    pub wavelet_levels: usize,
    pub sqi_calibration_s: f64,
    /// Interior gaps up to this long are bridged before filtering.
    pub max_bridged_gap_s: f64,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig {
            resting_window_s: 120.0,
            min_valid_fraction: 0.7,
            hrv: HrvSpectralConfig::default(),
            ppg_band: (0.25, 10.0),
            butter_order: 4,
            irls_smoothness_base: 1e7,
            irls_asymmetry: 0.01,
            irls_max_iter: 20,
            wavelet_levels: 4,
            sqi_calibration_s: 60.0,
            max_bridged_gap_s: 0.5,
        }
    }
}

/// Feature kinds attached to a canonical channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupKind {
    Ecg,
    Hr,
    Ppg,
    BioZ,
    Trend,
}

/// The canonical channel map the registry is built from.
pub fn canonical_channels() -> Vec<(Modality, Device, GroupKind)> {
    vec![
        (Modality::Ecg, Device::EcgPatch, GroupKind::Ecg),
        (Modality::Hr, Device::EcgPatch, GroupKind::Hr),
        (Modality::Rr, Device::EcgPatch, GroupKind::Trend),
        (Modality::Ppg, Device::Wristband, GroupKind::Ppg),
        (Modality::BioZ, Device::Wristband, GroupKind::BioZ),
        (Modality::Hr, Device::Wristband, GroupKind::Hr),
        (Modality::Rr, Device::Wristband, GroupKind::Trend),
        (Modality::Temp, Device::Wristband, GroupKind::Trend),
        (Modality::Temp, Device::TempPatch, GroupKind::Trend),
    ]
}

fn device_token(d: Device) -> &'static str {
    match d {
        Device::EcgPatch => "ecg_patch",
        Device::Wristband => "wristband",
        Device::TempPatch => "temp_patch",
        Device::Cuff => "cuff",
    }
}

fn group_feature_names(kind: GroupKind) -> Vec<String> {
    match kind {
        GroupKind::Ecg => {
            let mut names: Vec<String> = ecg::ECG_FIDUCIAL_NAMES
                .iter()
                .map(|s| s.to_string())
                .collect();
            names.extend(ecg::ecg_morph_names());
            names.extend(HRV_FEATURE_NAMES.iter().map(|s| s.to_string()));
            names
        }
        GroupKind::Hr => HRV_FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        GroupKind::Ppg => {
            let mut names: Vec<String> = ppg::PPG_FIDUCIAL_NAMES
                .iter()
                .map(|s| s.to_string())
                .collect();
            names.extend(ppg::PPG_STAT_NAMES.iter().map(|s| s.to_string()));
            names.extend(ppg::PPG_SPECTRAL_NAMES.iter().map(|s| s.to_string()));
            names
        }
        GroupKind::BioZ => bioz::BIOZ_FEATURE_NAMES
            .iter()
            .map(|s| s.to_string())
            .collect(),
        GroupKind::Trend => trend::TREND_FEATURE_NAMES
            .iter()
            .map(|s| s.to_string())
            .collect(),
    }
}

/// One registry column.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureDef {
    pub name: String,
    pub modality: Modality,
    pub device: Device,
    pub description: String,
}

/// Slice of registry columns produced by one channel.
#[derive(Debug, Clone, Copy)]
pub struct GroupSlot {
    pub modality: Modality,
    pub device: Device,
    pub kind: GroupKind,
    pub start: usize,
    pub len: usize,
}

/// Ordered, stable feature registry.
#[derive(Debug, Clone)]
pub struct FeatureRegistry {
    defs: Vec<FeatureDef>,
    slots: Vec<GroupSlot>,
}

impl FeatureRegistry {
    /// The canonical registry; identical across runs by construction.
    pub fn standard() -> FeatureRegistry {
        let mut defs = Vec::new();
        let mut slots = Vec::new();
        for (modality, device, kind) in canonical_channels() {
            let names = group_feature_names(kind);
            let start = defs.len();
            for n in &names {
                defs.push(FeatureDef {
                    name: format!(
                        "{}.{}.{}",
                        modality.as_str().to_lowercase(),
                        device_token(device),
                        n
                    ),
                    modality,
                    device,
                    description: format!("{n} from {modality} on {device}"),
                });
            }
            slots.push(GroupSlot {
                modality,
                device,
                kind,
                start,
                len: names.len(),
            });
        }
        debug_assert_eq!(
            defs.len(),
            defs.iter()
                .map(|d| &d.name)
                .collect::<std::collections::BTreeSet<_>>()
                .len(),
            "registry names must be unique"
        );
        FeatureRegistry { defs, slots }
    }

    pub fn len(&self) -> usize {
        self.defs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.defs.is_empty()
    }

    pub fn defs(&self) -> &[FeatureDef] {
        &self.defs
    }

    pub fn slots(&self) -> &[GroupSlot] {
        &self.slots
    }

    pub fn names(&self) -> Vec<&str> {
        self.defs.iter().map(|d| d.name.as_str()).collect()
    }

    pub fn columns_for_modality(&self, m: Modality) -> Vec<usize> {
        self.defs
            .iter()
            .enumerate()
            .filter(|(_, d)| d.modality == m)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn columns_for_device(&self, d: Device) -> Vec<usize> {
        self.defs
            .iter()
            .enumerate()
            .filter(|(_, def)| def.device == d)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Row metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RowMeta {
    pub subject_id: String,
    pub window_start_s: f64,
    pub window_end_s: f64,
    pub label: WindowLabel,
    /// Window center within the labeling proximity of a cuff reading.
    pub bp_proximal: bool,
}

/// Labeled windows by rows, registry features by columns; missing cells are
/// explicitly masked.
#[derive(Debug, Clone)]
pub struct WindowedFeatureMatrix {
    pub registry: FeatureRegistry,
    pub rows: Vec<RowMeta>,
    data: Vec<f64>,
    mask: Vec<bool>,
}

impl WindowedFeatureMatrix {
    fn new(registry: FeatureRegistry) -> Self {
        WindowedFeatureMatrix {
            registry,
            rows: Vec::new(),
            data: Vec::new(),
            mask: Vec::new(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.registry.len()
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let idx = row * self.n_cols() + col;
        if self.mask[idx] {
            Some(self.data[idx])
        } else {
            None
        }
    }

    fn push_row(&mut self, meta: RowMeta, values: Vec<Option<f64>>) {
        debug_assert_eq!(values.len(), self.n_cols());
        self.rows.push(meta);
        for v in values {
            match v {
                Some(x) if x.is_finite() => {
                    self.data.push(x);
                    self.mask.push(true);
                }
                _ => {
                    self.data.push(0.0);
                    self.mask.push(false);
                }
            }
        }
    }

    pub fn subject_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .rows
            .iter()
            .map(|r| r.subject_id.clone())
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        ids.sort();
        ids
    }

    /// Row indices per class label.
    pub fn label_counts(&self) -> (usize, usize) {
        let ad = self
            .rows
            .iter()
            .filter(|r| r.label == WindowLabel::Ad)
            .count();
        (ad, self.rows.len() - ad)
    }

    /// CSV export: registry columns then metadata columns. `meta_comment`
    /// lines are prefixed with '#'.
    pub fn to_csv<W: std::io::Write>(&self, mut w: W, meta_comment: &[String]) -> Result<()> {
        let io_err = |e: std::io::Error| CoreError::io("feature matrix csv", e);
        for line in meta_comment {
            writeln!(w, "# {line}").map_err(io_err)?;
        }
        let names = self.registry.names().join(",");
        writeln!(w, "{names},subject_id,window_start_s,label,bp_proximal").map_err(io_err)?;
        for (i, r) in self.rows.iter().enumerate() {
            let mut line = String::with_capacity(self.n_cols() * 8 + 48);
            for c in 0..self.n_cols() {
                if let Some(v) = self.get(i, c) {
                    line.push_str(&format!("{v}"));
                }
                line.push(',');
            }
            line.push_str(&format!(
                "{},{},{},{}",
                r.subject_id,
                r.window_start_s,
                r.label.as_str(),
                if r.bp_proximal { 1 } else { 0 }
            ));
            writeln!(w, "{line}").map_err(io_err)?;
        }
        Ok(())
    }

    /// Load a matrix written by [`Self::to_csv`]; the header must match the
    /// standard registry.
    pub fn from_csv(text: &str) -> Result<WindowedFeatureMatrix> {
        let registry = FeatureRegistry::standard();
        let mut out = WindowedFeatureMatrix::new(registry);
        let expected_meta = ["subject_id", "window_start_s", "label", "bp_proximal"];
        let mut header_seen = false;
        for (lineno, line) in text.lines().enumerate() {
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            if !header_seen {
                let cols: Vec<&str> = line.split(',').collect();
                let want: Vec<String> = out
                    .registry
                    .names()
                    .iter()
                    .map(|s| s.to_string())
                    .chain(expected_meta.iter().map(|s| s.to_string()))
                    .collect();
                if cols.len() != want.len() || cols.iter().zip(&want).any(|(a, b)| a != b) {
                    return Err(CoreError::Schema(
                        "feature csv header does not match the standard registry".into(),
                    ));
                }
                header_seen = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let n = out.n_cols();
            if fields.len() != n + expected_meta.len() {
                return Err(CoreError::Parse {
                    path: "features.csv".into(),
                    line: lineno + 1,
                    msg: format!("expected {} fields, got {}", n + 4, fields.len()),
                });
            }
            let mut values = Vec::with_capacity(n);
            for f in &fields[..n] {
                if f.is_empty() {
                    values.push(None);
                } else {
                    let v: f64 = f.parse().map_err(|_| CoreError::Parse {
                        path: "features.csv".into(),
                        line: lineno + 1,
                        msg: format!("bad cell '{f}'"),
                    })?;
                    values.push(Some(v));
                }
            }
            let label = match fields[n + 2] {
                "AD" => WindowLabel::Ad,
                "Normal" => WindowLabel::Normal,
                "Unlabeled" => WindowLabel::Unlabeled,
                other => {
                    return Err(CoreError::Parse {
                        path: "features.csv".into(),
                        line: lineno + 1,
                        msg: format!("bad label '{other}'"),
                    })
                }
            };
            let start: f64 = fields[n + 1].parse().map_err(|_| CoreError::Parse {
                path: "features.csv".into(),
                line: lineno + 1,
                msg: "bad window_start_s".into(),
            })?;
            out.push_row(
                RowMeta {
                    subject_id: fields[n].to_string(),
                    window_start_s: start,
                    window_end_s: f64::NAN,
                    label,
                    bp_proximal: fields[n + 3] == "1",
                },
                values,
            );
        }
        if !header_seen {
            return Err(CoreError::Schema("feature csv has no header".into()));
        }
        Ok(out)
    }
}

/// One subject's input to extraction.
#[derive(Debug, Clone)]
pub struct SubjectData {
    pub recording: SensorRecording,
    pub bp: BPReferenceSeries,
}

/// Bridge interior gaps linearly (any length; validity kept separately so
/// downstream can still reject windows over long dropouts). Leading/trailing
/// gaps are held at the first/last valid value.
fn fill_gaps(x: &SampleSeries) -> Option<SampleSeries> {
    let pts: Vec<(usize, f64)> = (0..x.len())
        .filter_map(|i| x.value(i).map(|v| (i, v)))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let mut filled = x.raw_values().to_vec();
    for i in 0..pts[0].0 {
        filled[i] = pts[0].1;
    }
    for w in pts.windows(2) {
        let (i0, v0) = w[0];
        let (i1, v1) = w[1];
        for i in i0 + 1..i1 {
            let frac = (i - i0) as f64 / (i1 - i0) as f64;
            filled[i] = v0 + (v1 - v0) * frac;
        }
    }
    for i in pts.last().unwrap().0 + 1..filled.len() {
        filled[i] = pts.last().unwrap().1;
    }
    Some(x.with_samples(filled, x.validity().to_vec()))
}

/// Conditioned waveform channel plus its beats.
#[derive(Debug, Clone)]
pub struct PreparedWaveform {
    pub signal: SampleSeries,
    pub raw: SampleSeries,
    pub beats: BeatAnnotations,
}

/// Pseudo-NN pulse-rate channel (resting-normalized).
#[derive(Debug, Clone)]
pub struct PreparedRate {
    /// NN_ms = 1000 * resting / hr: resting maps to 1000 ms.
    pub nn_ms: SampleSeries,
    /// Prefix mean of the pseudo heart rate for expanding cumulative means.
    cum_sum: Vec<f64>,
    cum_n: Vec<usize>,
}

impl PreparedRate {
    /// Expanding mean pseudo-bpm from session start through `t_end`.
    pub fn cumulative_mean(&self, t_end: f64) -> Option<f64> {
        let hi = self.nn_ms.sample_range(self.nn_ms.start_time, t_end).end;
        if hi == 0 || self.cum_n[hi] == 0 {
            return None;
        }
        Some(self.cum_sum[hi] / self.cum_n[hi] as f64)
    }
}

/// All conditioned channels of one subject.
#[derive(Debug, Clone)]
pub struct PreparedSubject {
    pub subject_id: String,
    pub ecg: Option<PreparedWaveform>,
    pub ppg: Option<PreparedWaveform>,
    pub bioz: Option<(SampleSeries, SampleSeries)>,
    pub hr: BTreeMap<Device, PreparedRate>,
    pub rr: BTreeMap<Device, SampleSeries>,
    pub temp: BTreeMap<Device, SampleSeries>,
}

fn resting_mean(x: &SampleSeries, resting_s: f64) -> Option<f64> {
    let r = x.sample_range(x.start_time, x.start_time + resting_s);
    let vals: Vec<f64> = r.filter_map(|i| x.value(i)).collect();
    stats::mean(&vals)
}

/// Run the full conditioning pipeline for one subject.
pub fn prepare_subject(rec: &SensorRecording, cfg: &ExtractionConfig) -> PreparedSubject {
    let mut prepared = PreparedSubject {
        subject_id: rec.subject_id.clone(),
        ecg: None,
        ppg: None,
        bioz: None,
        hr: BTreeMap::new(),
        rr: BTreeMap::new(),
        temp: BTreeMap::new(),
    };

    if let Some(raw) = rec.channel(Modality::Ecg, Device::EcgPatch) {
        if let Some(filled) = fill_gaps(raw) {
            let denoised = dsp::wavelet_denoise(
                filled.raw_values(),
                &dsp::Wavelet::bior4_4(),
                cfg.wavelet_levels,
            )
            .map(|v| filled.with_samples(v, filled.validity().to_vec()))
            .unwrap_or_else(|_| filled.clone());
            if let Ok(clean) = dsp::ecg_baseline_remove(&denoised) {
                if let Ok(mut beats) = dsp::christov_rpeaks(&clean) {
                    for b in beats.beats.iter_mut() {
                        if !raw.validity()[b.peak_idx] {
                            b.valid = false;
                        }
                    }
                    let beats = dsp::remove_outlier_beats(&clean, &beats);
                    prepared.ecg = Some(PreparedWaveform {
                        signal: clean,
                        raw: raw.clone(),
                        beats,
                    });
                }
            }
        }
    }

    if let Some(raw) = rec.channel(Modality::Ppg, Device::Wristband) {
        if let Some(mut filled) = fill_gaps(raw) {
            if dsp::ppg::is_inverted(filled.raw_values()) {
                let negated: Vec<f64> = filled.raw_values().iter().map(|v| -v).collect();
                filled = filled.with_samples(negated, filled.validity().to_vec());
            }
            if let Ok(banded) =
                dsp::butter_bandpass(&filled, cfg.butter_order, cfg.ppg_band.0, cfg.ppg_band.1)
            {
                let lam = cfg.irls_smoothness_base * (banded.rate_hz / 128.0).powi(2);
                let (baseline, _converged) = dsp::irls_baseline(
                    banded.raw_values(),
                    lam,
                    cfg.irls_asymmetry,
                    cfg.irls_max_iter,
                );
                let corrected: Vec<f64> = banded
                    .raw_values()
                    .iter()
                    .zip(&baseline)
                    .map(|(v, b)| v - b)
                    .collect();
                let filtered = banded.with_samples(corrected, banded.validity().to_vec());
                let mut beats = dsp::ppg_segment_beats(&filtered);
                for b in beats.beats.iter_mut() {
                    if !raw.validity()[b.peak_idx] {
                        b.valid = false;
                    }
                }
                let beats = match dsp::ppg::sqi_thresholds_from_calibration(
                    &filtered,
                    &beats,
                    cfg.sqi_calibration_s,
                ) {
                    Some(th) if th.is_consistent() => dsp::sqi_filter(&beats, &filtered, &th),
                    _ => beats,
                };
                prepared.ppg = Some(PreparedWaveform {
                    signal: filtered,
                    raw: raw.clone(),
                    beats,
                });
            }
        }
    }

    if let Some(raw) = rec.channel(Modality::BioZ, Device::Wristband) {
        if let Some(filled) = fill_gaps(raw) {
            prepared.bioz = Some(dsp::scl_scr_split(&filled));
        }
    }

    for device in [Device::EcgPatch, Device::Wristband] {
        if let Some(raw) = rec.channel(Modality::Hr, device) {
            if let Ok(resampled) = resample_linear(raw, 1.0) {
                if let Some(resting) = resting_mean(&resampled, cfg.resting_window_s) {
                    if resting > 1.0 {
                        let mut nn_vals = Vec::with_capacity(resampled.len());
                        let mut valid = Vec::with_capacity(resampled.len());
                        let mut cum_sum = vec![0.0];
                        let mut cum_n = vec![0usize];
                        for i in 0..resampled.len() {
                            match resampled.value(i) {
                                Some(hr) if hr > 20.0 => {
                                    let pseudo_bpm = 60.0 * hr / resting;
                                    nn_vals.push(60_000.0 / pseudo_bpm);
                                    valid.push(true);
                                    cum_sum.push(cum_sum[i] + pseudo_bpm);
                                    cum_n.push(cum_n[i] + 1);
                                }
                                _ => {
                                    nn_vals.push(0.0);
                                    valid.push(false);
                                    cum_sum.push(cum_sum[i]);
                                    cum_n.push(cum_n[i]);
                                }
                            }
                        }
                        prepared.hr.insert(
                            device,
                            PreparedRate {
                                nn_ms: resampled.with_samples(nn_vals, valid),
                                cum_sum,
                                cum_n,
                            },
                        );
                    }
                }
            }
        }
        if let Some(raw) = rec.channel(Modality::Rr, device) {
            if let Some(resting) = resting_mean(raw, cfg.resting_window_s) {
                if resting.abs() > 1e-9 {
                    let vals: Vec<f64> = raw.raw_values().iter().map(|v| v / resting).collect();
                    prepared
                        .rr
                        .insert(device, raw.with_samples(vals, raw.validity().to_vec()));
                }
            }
        }
    }

    for device in [Device::Wristband, Device::TempPatch] {
        if let Some(raw) = rec.channel(Modality::Temp, device) {
            prepared.temp.insert(device, raw.clone());
        }
    }

    prepared
}

fn valid_fraction(x: &SampleSeries, lo: f64, hi: f64) -> f64 {
    let r = x.sample_range(lo, hi);
    if r.is_empty() {
        return 0.0;
    }
    let ok = x.validity()[r.clone()].iter().filter(|v| **v).count();
    ok as f64 / r.len() as f64
}

fn ecg_group_values(
    prep: &PreparedWaveform,
    lo: f64,
    hi: f64,
    cfg: &ExtractionConfig,
    group_len: usize,
) -> Vec<Option<f64>> {
    let mut out = vec![None; group_len];
    if valid_fraction(&prep.raw, lo, hi) < cfg.min_valid_fraction {
        return out;
    }
    if let Some((fid, morph)) = ecg::ecg_window_features(&prep.signal, &prep.beats, lo, hi) {
        for (k, v) in fid.into_iter().chain(morph).enumerate() {
            out[k] = v;
        }
    }
    // HRV block from R-R intervals
    let beats: Vec<f64> = prep
        .beats
        .in_window(lo, hi)
        .iter()
        .map(|b| b.peak_t)
        .collect();
    let mut nn = Vec::new();
    let mut nn_t = Vec::new();
    for w in beats.windows(2) {
        let d = w[1] - w[0];
        if (0.25..=3.0).contains(&d) {
            nn.push(d * 1000.0);
            nn_t.push(w[1]);
        }
    }
    let cum = ecg::cumulative_mean_hr(&prep.beats, hi);
    let hrv_vals = hrv::hrv_features(&nn, &nn_t, cum, &cfg.hrv);
    let offset = group_len - HRV_FEATURE_NAMES.len();
    for (k, v) in hrv_vals.into_iter().enumerate() {
        out[offset + k] = v;
    }
    out
}

fn hr_group_values(rate: &PreparedRate, lo: f64, hi: f64, cfg: &ExtractionConfig) -> Vec<Option<f64>> {
    let r = rate.nn_ms.sample_range(lo, hi);
    let mut nn = Vec::new();
    let mut nn_t = Vec::new();
    for i in r {
        if let Some(v) = rate.nn_ms.value(i) {
            nn.push(v);
            nn_t.push(rate.nn_ms.time_at(i));
        }
    }
    hrv::hrv_features(&nn, &nn_t, rate.cumulative_mean(hi), &cfg.hrv)
}

fn ppg_group_values(
    prep: &PreparedWaveform,
    lo: f64,
    hi: f64,
    cfg: &ExtractionConfig,
    group_len: usize,
) -> Vec<Option<f64>> {
    let mut out = vec![None; group_len];
    if valid_fraction(&prep.raw, lo, hi) < cfg.min_valid_fraction {
        return out;
    }
    let n_fid = ppg::PPG_FIDUCIAL_NAMES.len();
    if let Some(fid) = ppg::ppg_fiducial_features(&prep.signal, &prep.raw, &prep.beats, lo, hi) {
        for (k, v) in fid.into_iter().enumerate() {
            out[k] = v;
        }
        let r = prep.signal.sample_range(lo, hi);
        let filt = &prep.signal.raw_values()[r.clone()];
        let raw = &prep.raw.raw_values()[r];
        for (k, v) in ppg::ppg_stat_features(filt, raw, prep.signal.rate_hz)
            .into_iter()
            .enumerate()
        {
            out[n_fid + k] = v;
        }
        for (k, v) in ppg::ppg_spectral_features(filt, prep.signal.rate_hz)
            .into_iter()
            .enumerate()
        {
            out[n_fid + ppg::PPG_STAT_NAMES.len() + k] = v;
        }
    }
    out
}

fn bioz_group_values(
    scl: &SampleSeries,
    scr: &SampleSeries,
    lo: f64,
    hi: f64,
    cfg: &ExtractionConfig,
) -> Vec<Option<f64>> {
    if valid_fraction(scl, lo, hi) < cfg.min_valid_fraction {
        return vec![None; bioz::BIOZ_FEATURE_NAMES.len()];
    }
    let r = scl.sample_range(lo, hi);
    bioz::bioz_features(
        &scl.raw_values()[r.clone()],
        &scr.raw_values()[r],
        scl.rate_hz,
    )
}

/// Extract all rows for one subject (windows in time order; unlabeled
/// windows advance the trend state but produce no row).
pub fn extract_subject_rows(
    subject: &SubjectData,
    spec: &WindowSpec,
    label_cfg: &LabelingConfig,
    cfg: &ExtractionConfig,
    registry: &FeatureRegistry,
) -> Result<Vec<(RowMeta, Vec<Option<f64>>)>> {
    let rec = &subject.recording;
    let windows: Vec<_> = window_iter(rec, spec).collect();
    if windows.is_empty() {
        return Ok(Vec::new());
    }
    let labels = labeling::label_windows(&subject.bp, &windows, label_cfg)?;
    let proximal = labeling::proximity_mask(&subject.bp, &windows, label_cfg);
    let prepared = prepare_subject(rec, cfg);

    let mut trend_states: BTreeMap<(Modality, Device), trend::TrendState> = BTreeMap::new();
    let mut rows = Vec::new();
    for ((w, lw), prox) in windows.iter().zip(&labels).zip(&proximal) {
        let mut values: Vec<Option<f64>> = vec![None; registry.len()];
        for slot in registry.slots() {
            let out: Vec<Option<f64>> = match slot.kind {
                GroupKind::Ecg => match &prepared.ecg {
                    Some(p) => ecg_group_values(p, w.start_s, w.end_s, cfg, slot.len),
                    None => vec![None; slot.len],
                },
                GroupKind::Ppg => match &prepared.ppg {
                    Some(p) => ppg_group_values(p, w.start_s, w.end_s, cfg, slot.len),
                    None => vec![None; slot.len],
                },
                GroupKind::BioZ => match &prepared.bioz {
                    Some((scl, scr)) => bioz_group_values(scl, scr, w.start_s, w.end_s, cfg),
                    None => vec![None; slot.len],
                },
                GroupKind::Hr => match prepared.hr.get(&slot.device) {
                    Some(p) => hr_group_values(p, w.start_s, w.end_s, cfg),
                    None => vec![None; slot.len],
                },
                GroupKind::Trend => {
                    let channel = match slot.modality {
                        Modality::Rr => prepared.rr.get(&slot.device),
                        Modality::Temp => prepared.temp.get(&slot.device),
                        _ => None,
                    };
                    match channel {
                        Some(ch) => {
                            let state = trend_states
                                .entry((slot.modality, slot.device))
                                .or_default();
                            trend::trend_features(ch, w.start_s, w.end_s, state)
                        }
                        None => vec![None; slot.len],
                    }
                }
            };
            values[slot.start..slot.start + slot.len].clone_from_slice(&out);
        }
        if lw.label != WindowLabel::Unlabeled {
            rows.push((
                RowMeta {
                    subject_id: rec.subject_id.clone(),
                    window_start_s: w.start_s,
                    window_end_s: w.end_s,
                    label: lw.label,
                    bp_proximal: *prox,
                },
                values,
            ));
        }
    }
    Ok(rows)
}

/// Build the full matrix over a cohort. Subjects are processed in parallel;
/// rows are ordered by (subject_id, window start). Errors if no labeled
/// window exists anywhere.
pub fn build_matrix(
    subjects: &[SubjectData],
    spec: &WindowSpec,
    label_cfg: &LabelingConfig,
    cfg: &ExtractionConfig,
) -> Result<WindowedFeatureMatrix> {
    let registry = FeatureRegistry::standard();
    let mut per_subject: Vec<Vec<(RowMeta, Vec<Option<f64>>)>> = subjects
        .par_iter()
        .map(|s| extract_subject_rows(s, spec, label_cfg, cfg, &registry))
        .collect::<Result<Vec<_>>>()?;
    per_subject.sort_by(|a, b| {
        let ka = a.first().map(|(m, _)| m.subject_id.clone()).unwrap_or_default();
        let kb = b.first().map(|(m, _)| m.subject_id.clone()).unwrap_or_default();
        ka.cmp(&kb)
    });
    let mut matrix = WindowedFeatureMatrix::new(registry);
    for rows in per_subject {
        for (meta, values) in rows {
            matrix.push_row(meta, values);
        }
    }
    if matrix.n_rows() == 0 {
        return Err(CoreError::Feature(
            "no labeled windows: check BP coverage and window spec".into(),
        ));
    }
    Ok(matrix)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_is_stable_and_unique() {
        let a = FeatureRegistry::standard();
        let b = FeatureRegistry::standard();
        assert_eq!(a.names(), b.names());
        assert!(a.len() >= 120, "registry has {} features", a.len());
        let set: std::collections::BTreeSet<_> = a.names().into_iter().collect();
        assert_eq!(set.len(), a.len());
    }

    #[test]
    fn registry_scopes_cover_all_columns() {
        let r = FeatureRegistry::standard();
        let by_mod: usize = [
            Modality::Ecg,
            Modality::Ppg,
            Modality::BioZ,
            Modality::Temp,
            Modality::Hr,
            Modality::Rr,
        ]
        .iter()
        .map(|m| r.columns_for_modality(*m).len())
        .sum();
        assert_eq!(by_mod, r.len());
        let by_dev: usize = [Device::EcgPatch, Device::Wristband, Device::TempPatch]
            .iter()
            .map(|d| r.columns_for_device(*d).len())
            .sum();
        assert_eq!(by_dev, r.len());
    }
}
