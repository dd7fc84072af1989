//! Channel, recording, and cuff-reference types shared by every stage.
//!
//! All timestamps are 64-bit seconds-with-fraction. After
//! [`SensorRecording::align_to_session`] they are relative to session start;
//! before alignment they may be absolute (device clock plus ingest offset).
//! Missing samples are carried as an explicit validity mask, never as a magic
//! value inside the data array.

use serde::{Deserialize, Serialize};

use crate::{CoreError, Result};

/// Signal modality of a channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Modality {
    #[serde(rename = "PPG")]
    Ppg,
    #[serde(rename = "ECG")]
    Ecg,
    #[serde(rename = "BioZ")]
    BioZ,
    #[serde(rename = "Temp")]
    Temp,
    #[serde(rename = "HR")]
    Hr,
    #[serde(rename = "RR")]
    Rr,
    #[serde(rename = "SBP")]
    Sbp,
    #[serde(rename = "DBP")]
    Dbp,
}

impl Modality {
    pub fn as_str(&self) -> &'static str {
        match self {
            Modality::Ppg => "PPG",
            Modality::Ecg => "ECG",
            Modality::BioZ => "BioZ",
            Modality::Temp => "Temp",
            Modality::Hr => "HR",
            Modality::Rr => "RR",
            Modality::Sbp => "SBP",
            Modality::Dbp => "DBP",
        }
    }

    pub fn parse(s: &str) -> Option<Modality> {
        match s {
            "PPG" => Some(Modality::Ppg),
            "ECG" => Some(Modality::Ecg),
            "BioZ" => Some(Modality::BioZ),
            "Temp" => Some(Modality::Temp),
            "HR" => Some(Modality::Hr),
            "RR" => Some(Modality::Rr),
            "SBP" => Some(Modality::Sbp),
            "DBP" => Some(Modality::Dbp),
            _ => None,
        }
    }
}

impl std::fmt::Display for Modality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Recording device a channel originates from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Device {
    #[serde(rename = "ECG-patch")]
    EcgPatch,
    #[serde(rename = "Wristband")]
    Wristband,
    #[serde(rename = "Temp-patch")]
    TempPatch,
    #[serde(rename = "Cuff")]
    Cuff,
}

impl Device {
    pub fn as_str(&self) -> &'static str {
        match self {
            Device::EcgPatch => "ECG-patch",
            Device::Wristband => "Wristband",
            Device::TempPatch => "Temp-patch",
            Device::Cuff => "Cuff",
        }
    }

    pub fn parse(s: &str) -> Option<Device> {
        match s {
            "ECG-patch" => Some(Device::EcgPatch),
            "Wristband" => Some(Device::Wristband),
            "Temp-patch" => Some(Device::TempPatch),
            "Cuff" => Some(Device::Cuff),
            _ => None,
        }
    }
}

impl std::fmt::Display for Device {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One uniformly sampled channel with an explicit per-sample validity mask.
///
/// Sample `i` sits at `start_time + i / rate_hz`. The nominal span of the
/// channel is the half-open interval `[start_time, start_time + len/rate_hz)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSeries {
    pub channel_id: String,
    pub modality: Modality,
    pub device: Device,
    pub start_time: f64,
    pub rate_hz: f64,
    values: Vec<f64>,
    valid: Vec<bool>,
}

impl SampleSeries {
    /// Build a series from optional samples (None = gap).
    pub fn new(
        channel_id: impl Into<String>,
        modality: Modality,
        device: Device,
        start_time: f64,
        rate_hz: f64,
        samples: Vec<Option<f64>>,
    ) -> Result<Self> {
        if !(rate_hz > 0.0) || !rate_hz.is_finite() {
            return Err(CoreError::InvalidSeries(format!(
                "rate_hz must be positive and finite, got {rate_hz}"
            )));
        }
        if !start_time.is_finite() {
            return Err(CoreError::InvalidSeries("non-finite start_time".into()));
        }
        let mut values = Vec::with_capacity(samples.len());
        let mut valid = Vec::with_capacity(samples.len());
        for s in samples {
            match s {
                Some(v) if v.is_finite() => {
                    values.push(v);
                    valid.push(true);
                }
                Some(v) => {
                    return Err(CoreError::InvalidSeries(format!("non-finite sample {v}")));
                }
                None => {
                    values.push(0.0);
                    valid.push(false);
                }
            }
        }
        Ok(SampleSeries {
            channel_id: channel_id.into(),
            modality,
            device,
            start_time,
            rate_hz,
            values,
            valid,
        })
    }

    /// Build a fully valid series from raw values.
    pub fn from_values(
        channel_id: impl Into<String>,
        modality: Modality,
        device: Device,
        start_time: f64,
        rate_hz: f64,
        values: Vec<f64>,
    ) -> Result<Self> {
        let samples = values.into_iter().map(Some).collect();
        Self::new(channel_id, modality, device, start_time, rate_hz, samples)
    }

    /// Same grid and metadata, different payload. Lengths must match.
    pub fn with_samples(&self, values: Vec<f64>, valid: Vec<bool>) -> Self {
        assert_eq!(values.len(), valid.len());
        SampleSeries {
            channel_id: self.channel_id.clone(),
            modality: self.modality,
            device: self.device,
            start_time: self.start_time,
            rate_hz: self.rate_hz,
            values,
            valid,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Timestamp of sample `i`.
    pub fn time_at(&self, i: usize) -> f64 {
        self.start_time + i as f64 / self.rate_hz
    }

    /// End of the nominal span (half-open).
    pub fn span_end(&self) -> f64 {
        self.start_time + self.values.len() as f64 / self.rate_hz
    }

    /// Value of sample `i`, or None at a gap.
    pub fn value(&self, i: usize) -> Option<f64> {
        if self.valid[i] {
            Some(self.values[i])
        } else {
            None
        }
    }

    /// Raw payload including gap placeholders; pair with [`Self::validity`].
    pub fn raw_values(&self) -> &[f64] {
        &self.values
    }

    pub fn validity(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    pub fn is_all_gap(&self) -> bool {
        self.valid_count() == 0
    }

    /// Iterate `(t, value)` over valid samples only.
    pub fn iter_valid(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.values
            .iter()
            .zip(self.valid.iter())
            .enumerate()
            .filter(|(_, (_, ok))| **ok)
            .map(|(i, (v, _))| (self.time_at(i), *v))
    }

    /// Index range of samples with `t0 <= t < t1` (half-open).
    pub fn sample_range(&self, t0: f64, t1: f64) -> std::ops::Range<usize> {
        let lo = self.index_at_or_after(t0);
        let hi = self.index_at_or_after(t1);
        lo..hi.max(lo)
    }

    /// First index whose timestamp is >= t (== len if none).
    fn index_at_or_after(&self, t: f64) -> usize {
        let raw = (t - self.start_time) * self.rate_hz;
        if raw <= 0.0 {
            return 0;
        }
        // Nudge against float fuzz so a sample nominally at t is included.
        let idx = (raw - 1e-9).ceil() as usize;
        idx.min(self.values.len())
    }

    /// Clip to `[t0, t1)`, dropping samples outside.
    pub fn clipped(&self, t0: f64, t1: f64) -> SampleSeries {
        let r = self.sample_range(t0, t1);
        SampleSeries {
            channel_id: self.channel_id.clone(),
            modality: self.modality,
            device: self.device,
            start_time: self.time_at(r.start),
            rate_hz: self.rate_hz,
            values: self.values[r.clone()].to_vec(),
            valid: self.valid[r].to_vec(),
        }
    }

    /// Shift the time origin by `-offset` (the new clock reads `t - offset`).
    pub fn rebased(&self, offset: f64) -> SampleSeries {
        let mut s = self.clone();
        s.start_time -= offset;
        s
    }

    /// Fraction of valid samples within `[t0, t1)`, in percent. A channel with
    /// no sample slots in the range counts as 0%.
    pub fn completeness_pct(&self, t0: f64, t1: f64) -> f64 {
        let r = self.sample_range(t0, t1);
        if r.is_empty() {
            return 0.0;
        }
        let valid = self.valid[r.clone()].iter().filter(|v| **v).count();
        100.0 * valid as f64 / r.len() as f64
    }
}

/// Resample onto a uniform grid at `rate_hz` spanning the same time range.
///
/// Interior gaps are bridged linearly; leading/trailing gaps stay gaps. The
/// grid starts at the series start time, so on an already-uniform gap-free
/// series resampling at the native rate is the identity.
pub fn resample_linear(s: &SampleSeries, rate_hz: f64) -> Result<SampleSeries> {
    if !(rate_hz > 0.0) || !rate_hz.is_finite() {
        return Err(CoreError::InvalidSeries(format!(
            "resample rate must be positive, got {rate_hz}"
        )));
    }
    let pts: Vec<(f64, f64)> = s.iter_valid().collect();
    if pts.len() < 2 {
        return Err(CoreError::UnusableChannel(format!(
            "{}: {} valid samples, need >= 2 to resample",
            s.channel_id,
            pts.len()
        )));
    }
    let t_start = s.start_time;
    let t_end = s.span_end();
    let n = ((t_end - t_start) * rate_hz - 1e-9).ceil().max(1.0) as usize;
    let (first_t, _) = pts[0];
    let (last_t, _) = *pts.last().unwrap();
    let mut values = Vec::with_capacity(n);
    let mut valid = Vec::with_capacity(n);
    let mut seg = 0usize;
    for i in 0..n {
        let t = t_start + i as f64 / rate_hz;
        if t < first_t - 1e-9 || t > last_t + 1e-9 {
            values.push(0.0);
            valid.push(false);
            continue;
        }
        while seg + 2 < pts.len() && pts[seg + 1].0 < t {
            seg += 1;
        }
        let (t0, v0) = pts[seg];
        let (t1, v1) = pts[seg + 1];
        let v = if t <= t0 {
            v0
        } else if t >= t1 {
            v1
        } else {
            v0 + (v1 - v0) * (t - t0) / (t1 - t0)
        };
        values.push(v);
        valid.push(true);
    }
    Ok(SampleSeries {
        channel_id: s.channel_id.clone(),
        modality: s.modality,
        device: s.device,
        start_time: t_start,
        rate_hz,
        values,
        valid,
    })
}

/// One subject's synchronized multi-device recording.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SensorRecording {
    pub subject_id: String,
    channels: Vec<SampleSeries>,
    /// `[t0, t1)` covered by every (non-empty) channel.
    pub session_span: (f64, f64),
}

impl SensorRecording {
    /// Assemble a recording. Enforces at most one channel per
    /// (modality, device) pair; the session span is the intersection of the
    /// non-empty channel spans (empty/all-gap channels carry no time info).
    pub fn new(subject_id: impl Into<String>, channels: Vec<SampleSeries>) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        for c in &channels {
            if !seen.insert((c.modality, c.device)) {
                return Err(CoreError::DuplicateChannel(format!(
                    "{} @ {}",
                    c.modality, c.device
                )));
            }
        }
        let mut t0 = f64::NEG_INFINITY;
        let mut t1 = f64::INFINITY;
        let mut any = false;
        for c in &channels {
            if c.is_empty() {
                continue;
            }
            any = true;
            t0 = t0.max(c.start_time);
            t1 = t1.min(c.span_end());
        }
        if !any {
            t0 = 0.0;
            t1 = 0.0;
        }
        if t1 < t0 {
            return Err(CoreError::DisjointSpans);
        }
        Ok(SensorRecording {
            subject_id: subject_id.into(),
            channels,
            session_span: (t0, t1),
        })
    }

    pub fn channels(&self) -> &[SampleSeries] {
        &self.channels
    }

    pub fn channel(&self, modality: Modality, device: Device) -> Option<&SampleSeries> {
        self.channels
            .iter()
            .find(|c| c.modality == modality && c.device == device)
    }

    /// Session length in seconds.
    pub fn session_len(&self) -> f64 {
        self.session_span.1 - self.session_span.0
    }

    /// Re-express every channel on a session-relative clock starting at 0 and
    /// clip all channels to the common span.
    pub fn align_to_session(&self) -> Result<SensorRecording> {
        let (t0, t1) = self.session_span;
        if t1 <= t0 {
            return Err(CoreError::DisjointSpans);
        }
        let channels = self
            .channels
            .iter()
            .map(|c| c.clipped(t0, t1).rebased(t0))
            .collect();
        SensorRecording::new(self.subject_id.clone(), channels)
    }
}

/// Sparse cuff measurements: the source of ground-truth labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BPReferenceSeries {
    pub timestamps: Vec<f64>,
    pub sbp: Vec<f64>,
    pub dbp: Vec<f64>,
    pub hr: Option<Vec<f64>>,
}

impl BPReferenceSeries {
    pub fn new(
        timestamps: Vec<f64>,
        sbp: Vec<f64>,
        dbp: Vec<f64>,
        hr: Option<Vec<f64>>,
    ) -> Result<Self> {
        if timestamps.len() != sbp.len() || timestamps.len() != dbp.len() {
            return Err(CoreError::InvalidSeries(
                "BP reference columns must have equal length".into(),
            ));
        }
        if let Some(h) = &hr {
            if h.len() != timestamps.len() {
                return Err(CoreError::InvalidSeries(
                    "BP reference HR column length mismatch".into(),
                ));
            }
        }
        if timestamps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CoreError::InvalidSeries(
                "BP reference timestamps must be strictly increasing".into(),
            ));
        }
        Ok(BPReferenceSeries {
            timestamps,
            sbp,
            dbp,
            hr,
        })
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    /// Shift timestamps onto a new origin.
    pub fn rebased(&self, offset: f64) -> BPReferenceSeries {
        BPReferenceSeries {
            timestamps: self.timestamps.iter().map(|t| t - offset).collect(),
            sbp: self.sbp.clone(),
            dbp: self.dbp.clone(),
            hr: self.hr.clone(),
        }
    }
}
