//! Sliding-window engine.
//!
//! Windows are half-open `[start, end)`: a sample exactly at `end` belongs to
//! the next window, so step == duration partitions the session.

use serde::{Deserialize, Serialize};

use crate::series::{Device, Modality, SampleSeries, SensorRecording};
use crate::{CoreError, Result};

/// Sliding-window configuration (seconds).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub duration_s: f64,
    pub step_s: f64,
}

impl WindowSpec {
    pub fn new(duration_s: f64, step_s: f64) -> Result<Self> {
        if !(step_s > 0.0) || !(duration_s >= step_s) {
            return Err(CoreError::InvalidWindowSpec(format!(
                "need duration_s >= step_s > 0, got ({duration_s}, {step_s})"
            )));
        }
        Ok(WindowSpec { duration_s, step_s })
    }

    /// Number of windows fitting a span of length `t`:
    /// `floor((t - duration) / step) + 1`, or 0 when `t < duration`.
    pub fn count_for(&self, t: f64) -> usize {
        if t + 1e-9 < self.duration_s {
            return 0;
        }
        (((t - self.duration_s) / self.step_s) + 1e-9).floor() as usize + 1
    }
}

impl std::fmt::Display for WindowSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}s,{}s)", self.duration_s, self.step_s)
    }
}

/// One window of a recording; slices channels lazily.
#[derive(Debug, Clone, Copy)]
pub struct Window<'a> {
    rec: &'a SensorRecording,
    pub start_s: f64,
    pub end_s: f64,
}

impl<'a> Window<'a> {
    pub fn subject_id(&self) -> &str {
        &self.rec.subject_id
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.start_s + self.end_s)
    }

    /// Sample slice of a channel within this window, with the index range it
    /// occupies in the underlying series.
    pub fn channel_slice(
        &self,
        modality: Modality,
        device: Device,
    ) -> Option<(&'a SampleSeries, std::ops::Range<usize>)> {
        let c = self.rec.channel(modality, device)?;
        let r = c.sample_range(self.start_s, self.end_s);
        Some((c, r))
    }
}

/// Iterate windows over the session span, ordered by start time.
///
/// A session shorter than one window yields an empty sequence. The result
/// depends only on the session span, not on channel order.
pub fn window_iter<'a>(
    rec: &'a SensorRecording,
    spec: &WindowSpec,
) -> impl ExactSizeIterator<Item = Window<'a>> + 'a {
    let (t0, _) = rec.session_span;
    let n = spec.count_for(rec.session_len());
    let duration = spec.duration_s;
    let step = spec.step_s;
    (0..n).map(move |k| {
        let start = t0 + k as f64 * step;
        Window {
            rec,
            start_s: start,
            end_s: start + duration,
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::{Device, Modality, SampleSeries};
    use proptest::prelude::*;

    fn rec_of_len(t: f64) -> SensorRecording {
        let n = (t * 4.0).round() as usize;
        let s = SampleSeries::from_values(
            "c",
            Modality::Ecg,
            Device::EcgPatch,
            0.0,
            4.0,
            vec![0.0; n],
        )
        .unwrap();
        SensorRecording::new("s", vec![s]).unwrap()
    }

    #[test]
    fn count_examples() {
        let spec = WindowSpec::new(60.0, 10.0).unwrap();
        assert_eq!(window_iter(&rec_of_len(120.0), &spec).len(), 7);
        assert_eq!(window_iter(&rec_of_len(60.0), &spec).len(), 1);
        assert_eq!(window_iter(&rec_of_len(59.0), &spec).len(), 0);
    }

    #[test]
    fn windows_ordered_and_sized() {
        let spec = WindowSpec::new(30.0, 10.0).unwrap();
        let rec = rec_of_len(95.0);
        let mut prev = f64::NEG_INFINITY;
        for w in window_iter(&rec, &spec) {
            assert!(w.start_s > prev);
            assert!((w.end_s - w.start_s - 30.0).abs() < 1e-12);
            assert!(w.end_s <= rec.session_span.1 + 1e-9);
            prev = w.start_s;
        }
    }

    #[test]
    fn rejects_step_above_duration() {
        assert!(WindowSpec::new(5.0, 10.0).is_err());
        assert!(WindowSpec::new(10.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn count_matches_closed_form(
            t in 1.0f64..4000.0,
            dur_i in 1u32..120,
            step_i in 1u32..120,
        ) {
            let duration = dur_i as f64;
            let step = step_i.min(dur_i) as f64;
            let spec = WindowSpec::new(duration, step).unwrap();
            let rec = rec_of_len((t * 4.0).round() / 4.0);
            let t_eff = rec.session_len();
            let expect = if t_eff < duration {
                0
            } else {
                ((t_eff - duration) / step + 1e-9).floor() as usize + 1
            };
            prop_assert_eq!(window_iter(&rec, &spec).len(), expect);
        }
    }
}
