//! Slow-channel trend features (Temp, RR): mean absolute value plus 1st-3rd
//! finite differences over 1/2/3-minute lookbacks from the window end, with
//! last-valid propagation when a lookback is not available.

use crate::series::SampleSeries;

pub const TREND_FEATURE_NAMES: [&str; 10] = [
    "mean_abs",
    "d1_1min",
    "d1_2min",
    "d1_3min",
    "d2_1min",
    "d2_2min",
    "d2_3min",
    "d3_1min",
    "d3_2min",
    "d3_3min",
];

/// Per-subject propagation state: the last fully valid feature vector.
#[derive(Debug, Default, Clone)]
pub struct TrendState {
    last: Vec<Option<f64>>,
}

/// Nearest valid sample value at time `t` within half a sample period.
fn value_at(x: &SampleSeries, t: f64) -> Option<f64> {
    if x.is_empty() {
        return None;
    }
    let idx = ((t - x.start_time) * x.rate_hz).round();
    if idx < 0.0 || idx as usize >= x.len() {
        return None;
    }
    let idx = idx as usize;
    let dt = (x.time_at(idx) - t).abs();
    if dt > 0.5 / x.rate_hz + 1e-9 {
        return None;
    }
    x.value(idx)
}

/// Trend features for the window `[lo, hi)`. Missing ingredients fall back
/// to the previous window's value for that feature (per-channel state).
pub fn trend_features(
    x: &SampleSeries,
    lo: f64,
    hi: f64,
    state: &mut TrendState,
) -> Vec<Option<f64>> {
    if state.last.is_empty() {
        state.last = vec![None; TREND_FEATURE_NAMES.len()];
    }
    let mut out = vec![None; TREND_FEATURE_NAMES.len()];

    // mean absolute value over in-window valid samples
    let r = x.sample_range(lo, hi);
    let vals: Vec<f64> = r
        .clone()
        .filter_map(|i| x.value(i))
        .map(|v| v.abs())
        .collect();
    if !vals.is_empty() {
        out[0] = Some(vals.iter().sum::<f64>() / vals.len() as f64);
    }

    let t_end = hi;
    for (k, lag_min) in [1.0, 2.0, 3.0].into_iter().enumerate() {
        let lag = lag_min * 60.0;
        let p0 = value_at(x, t_end);
        let p1 = value_at(x, t_end - lag);
        let p2 = value_at(x, t_end - 2.0 * lag);
        let p3 = value_at(x, t_end - 3.0 * lag);
        if let (Some(a), Some(b)) = (p0, p1) {
            out[1 + k] = Some((a - b) / lag_min);
        }
        if let (Some(a), Some(b), Some(c)) = (p0, p1, p2) {
            out[4 + k] = Some((a - 2.0 * b + c) / (lag_min * lag_min));
        }
        if let (Some(a), Some(b), Some(c), Some(d)) = (p0, p1, p2, p3) {
            out[7 + k] = Some((a - 3.0 * b + 3.0 * c - d) / (lag_min * lag_min * lag_min));
        }
    }

    // propagate the last valid value per feature
    for (slot, prev) in out.iter_mut().zip(state.last.iter()) {
        if slot.is_none() {
            *slot = *prev;
        }
    }
    state.last.clone_from(&out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::{Device, Modality};

    fn temp_series(values: Vec<Option<f64>>) -> SampleSeries {
        SampleSeries::new("t", Modality::Temp, Device::TempPatch, 0.0, 1.0 / 60.0, values)
            .unwrap()
    }

    #[test]
    fn linear_ramp_derivatives() {
        // 0.1 degC per minute ramp sampled every minute
        let vals: Vec<Option<f64>> = (0..30).map(|i| Some(36.0 + 0.1 * i as f64)).collect();
        let x = temp_series(vals);
        let mut st = TrendState::default();
        let out = trend_features(&x, 1080.0, 1140.0, &mut st); // window ending at 19 min
        assert!((out[1].unwrap() - 0.1).abs() < 1e-9, "d1(1min) {:?}", out[1]);
        assert!((out[2].unwrap() - 0.1).abs() < 1e-9, "d1(2min)");
        assert!(out[4].unwrap().abs() < 1e-9, "d2 on a ramp");
        assert!(out[7].unwrap().abs() < 1e-9, "d3 on a ramp");
    }

    #[test]
    fn constant_signal_zero_derivatives() {
        let vals: Vec<Option<f64>> = (0..30).map(|_| Some(36.5)).collect();
        let x = temp_series(vals);
        let mut st = TrendState::default();
        let out = trend_features(&x, 600.0, 660.0, &mut st);
        for k in 1..10 {
            assert!(out[k].unwrap().abs() < 1e-12);
        }
        assert!((out[0].unwrap() - 36.5).abs() < 1e-12);
    }

    #[test]
    fn gap_propagates_previous_features() {
        let mut vals: Vec<Option<f64>> = (0..30).map(|i| Some(36.0 + 0.1 * i as f64)).collect();
        // kill the samples around the second window's end
        for slot in vals.iter_mut().take(22).skip(18) {
            *slot = None;
        }
        let x = temp_series(vals);
        let mut st = TrendState::default();
        let first = trend_features(&x, 540.0, 600.0, &mut st); // end 10 min, intact
        let second = trend_features(&x, 1140.0, 1200.0, &mut st); // end 20 min, gap
        assert_eq!(second[1], first[1], "propagated d1");
        assert_eq!(second[4], first[4], "propagated d2");
    }

    #[test]
    fn missing_everything_stays_missing() {
        let vals: Vec<Option<f64>> = (0..10).map(|_| None).collect();
        let x = temp_series(vals);
        let mut st = TrendState::default();
        let out = trend_features(&x, 0.0, 60.0, &mut st);
        assert!(out.iter().all(|v| v.is_none()));
    }
}
