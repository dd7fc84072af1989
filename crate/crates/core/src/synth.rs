//! Scripted multimodal cohort generator.
//!
//! Each subject is described by a [`SubjectScript`]: a session length, a cuff
//! schedule, a baseline systolic pressure, and a list of episodes during
//! which SBP rises, heart rate drops, skin conductance rises, and temperature
//! drifts. The generator realizes the episode in a continuous SBP trajectory
//! first and only then samples the sparse cuff series from it, so label noise
//! from sparse sampling is reproduced faithfully. Ground truth (per-second
//! AD flags, exact beat times) is returned alongside the signals; detection
//! metrics downstream are always computed against this truth, never against
//! the cuff samples alone.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::seed;
use crate::series::{BPReferenceSeries, Device, Modality, SampleSeries, SensorRecording};
use crate::{CoreError, Result};

/// ECG beat template: sum of Gaussians for P/Q/R/S/T.
///
/// `dt` is time from the R peak, `qrs_w` the nominal Q-to-S trough distance
/// in seconds; component widths stay fixed so widening `qrs_w` moves the
/// Q/S troughs (and the measured QRS on/offsets) by exactly that amount.
/// Closed-form fiducials make detector and morphology tests exact: R at
/// dt=0, Q at -qrs_w/2, S at +qrs_w/2, P at -0.18, T at +0.28.
pub fn ecg_template(dt: f64, amp: f64, qrs_w: f64) -> f64 {
    ecg_template_shaped(dt, amp, qrs_w, 1.0)
}

/// Template with an adjustable T-wave gain (episode morphology modulation).
pub fn ecg_template_shaped(dt: f64, amp: f64, qrs_w: f64, t_gain: f64) -> f64 {
    let g = |mu: f64, sigma: f64| (-((dt - mu) * (dt - mu)) / (2.0 * sigma * sigma)).exp();
    amp * (g(0.0, 0.015)
        - 0.15 * g(-qrs_w / 2.0, 0.011)
        - 0.20 * g(qrs_w / 2.0, 0.011)
        + 0.12 * g(-0.18, 0.025)
        + 0.30 * t_gain * g(0.28, 0.060))
}

/// PPG beat as two log-normal lobes with unit systolic amplitude.
///
/// `dt` is time from the pulse foot; the systolic crest sits at
/// `0.22 * period` and the diastolic lobe peaks at `ri` times the systolic
/// amplitude near `0.55 * period`, so crest time scales with the beat period
/// and the reflection index is `ri` by construction.
pub fn ppg_beat(dt: f64, period: f64, ri: f64) -> f64 {
    if dt <= 0.0 || dt >= 1.6 * period {
        return 0.0;
    }
    let lobe = |mu: f64, sigma: f64| {
        let l = (dt / mu).ln();
        (-l * l / (2.0 * sigma * sigma)).exp()
    };
    lobe(0.22 * period, 0.30) + ri * lobe(0.55 * period, 0.22)
}

/// One scripted episode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Episode {
    pub onset_s: f64,
    pub duration_s: f64,
    pub sbp_rise_mmhg: f64,
    /// Heart-rate change during the episode; negative by default (rate drops).
    pub hr_change_bpm: f64,
    pub scl_rise: f64,
    pub temp_drift_c: f64,
}

/// Per-channel additive white-noise sigmas plus baseline-wander amplitude.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseLevels {
    pub ecg: f64,
    pub ppg: f64,
    pub bioz: f64,
    pub temp: f64,
    pub hr: f64,
    pub rr: f64,
    pub cuff_mmhg: f64,
    /// 0.3 Hz baseline wander amplitude on ECG/PPG.
    pub wander: f64,
    /// Slow SBP wander amplitude (mmHg).
    pub sbp_wander_mmhg: f64,
    /// Beat-to-beat timing jitter (seconds).
    pub rr_jitter_s: f64,
}

impl Default for NoiseLevels {
    fn default() -> Self {
        NoiseLevels {
            ecg: 0.02,
            ppg: 0.02,
            bioz: 0.01,
            temp: 0.02,
            hr: 0.6,
            rr: 0.4,
            cuff_mmhg: 1.0,
            wander: 0.12,
            sbp_wander_mmhg: 1.5,
            rr_jitter_s: 0.012,
        }
    }
}

/// Everything needed to synthesize one subject deterministically.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubjectScript {
    pub subject_id: String,
    pub session_minutes: f64,
    /// Cuff measurement spacing; the paper's protocol is 2-3 minutes.
    pub bp_interval_s: f64,
    pub baseline_sbp: f64,
    pub resting_hr: f64,
    pub episodes: Vec<Episode>,
    /// Episode envelope rise/fall time.
    pub ramp_s: f64,
    pub noise: NoiseLevels,
    /// Channels omitted from the recording entirely.
    pub missing_channels: Vec<(Modality, Device)>,
    /// Gap segments `(modality, device, t0, t1)`.
    pub dropouts: Vec<(Modality, Device, f64, f64)>,
    /// Move the nearest cuff sample into each episode plateau (used by the
    /// short-episode window-sweep cohorts where the schedule could miss an
    /// episode entirely).
    pub align_cuff_to_episodes: bool,
    pub seed: u64,
}

impl SubjectScript {
    pub fn base(subject_id: impl Into<String>, seed: u64) -> SubjectScript {
        SubjectScript {
            subject_id: subject_id.into(),
            session_minutes: 21.0,
            bp_interval_s: 150.0,
            baseline_sbp: 118.0,
            resting_hr: 72.0,
            episodes: Vec::new(),
            ramp_s: 20.0,
            noise: NoiseLevels::default(),
            missing_channels: Vec::new(),
            dropouts: Vec::new(),
            align_cuff_to_episodes: false,
            seed,
        }
    }

    pub fn session_len_s(&self) -> f64 {
        self.session_minutes * 60.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.session_minutes > 1.0) {
            return Err(CoreError::BadScript("session too short".into()));
        }
        if !(self.bp_interval_s > 0.0) {
            return Err(CoreError::BadScript("bp_interval_s must be > 0".into()));
        }
        let t_end = self.session_len_s();
        for e in &self.episodes {
            if !(e.sbp_rise_mmhg > 0.0) {
                return Err(CoreError::BadScript("sbp_rise must be > 0".into()));
            }
            if e.onset_s < 0.0 || e.onset_s + e.duration_s > t_end {
                return Err(CoreError::BadScript(format!(
                    "episode [{}, {}] outside session [0, {t_end}]",
                    e.onset_s,
                    e.onset_s + e.duration_s
                )));
            }
        }
        Ok(())
    }

    /// Raised-cosine episode envelope at time `t` (0 outside episodes).
    pub fn episode_env(&self, t: f64) -> f64 {
        let mut env: f64 = 0.0;
        for e in &self.episodes {
            let ramp = self.ramp_s.min(e.duration_s / 2.0);
            let local = if t < e.onset_s || t > e.onset_s + e.duration_s {
                0.0
            } else if t < e.onset_s + ramp {
                let u = (t - e.onset_s) / ramp;
                0.5 * (1.0 - (std::f64::consts::PI * u).cos())
            } else if t > e.onset_s + e.duration_s - ramp {
                let u = (e.onset_s + e.duration_s - t) / ramp;
                0.5 * (1.0 - (std::f64::consts::PI * u).cos())
            } else {
                1.0
            };
            env = env.max(local);
        }
        env
    }

    fn episode_weighted(&self, t: f64, pick: impl Fn(&Episode) -> f64) -> f64 {
        let mut total = 0.0;
        for e in &self.episodes {
            let ramp = self.ramp_s.min(e.duration_s / 2.0);
            let local = if t < e.onset_s || t > e.onset_s + e.duration_s {
                0.0
            } else if t < e.onset_s + ramp {
                let u = (t - e.onset_s) / ramp;
                0.5 * (1.0 - (std::f64::consts::PI * u).cos())
            } else if t > e.onset_s + e.duration_s - ramp {
                let u = (e.onset_s + e.duration_s - t) / ramp;
                0.5 * (1.0 - (std::f64::consts::PI * u).cos())
            } else {
                1.0
            };
            total += local * pick(e);
        }
        total
    }
}

/// Ground truth at 1 Hz on the session clock.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthSeries {
    pub rate_hz: f64,
    /// Continuous SBP sampled each second.
    pub sbp_cont: Vec<f64>,
    /// AD flag: continuous SBP at/above scripted baseline + 20 mmHg.
    pub flags: Vec<bool>,
}

impl TruthSeries {
    pub fn ad_seconds(&self) -> usize {
        self.flags.iter().filter(|f| **f).count()
    }
}

/// One synthesized subject.
#[derive(Debug, Clone)]
pub struct GeneratedSubject {
    pub recording: SensorRecording,
    pub bp: BPReferenceSeries,
    pub truth: TruthSeries,
    /// Exact scripted R-peak times.
    pub r_times: Vec<f64>,
    /// Exact scripted PPG pulse-foot times.
    pub foot_times: Vec<f64>,
}

/// Threshold above scripted baseline that defines truth AD flags (mmHg).
pub const TRUTH_DELTA_MMHG: f64 = 20.0;

struct SlowWander {
    amp: f64,
    freq: f64,
    phase: f64,
}

impl SlowWander {
    fn new(rng: &mut ChaCha8Rng, amp: f64, period_range: (f64, f64)) -> SlowWander {
        SlowWander {
            amp,
            freq: 1.0 / rng.gen_range(period_range.0..period_range.1),
            phase: rng.gen_range(0.0..std::f64::consts::TAU),
        }
    }

    fn at(&self, t: f64) -> f64 {
        self.amp * (std::f64::consts::TAU * self.freq * t + self.phase).sin()
    }
}

/// Generate one subject from a script.
pub fn gen_subject(script: &SubjectScript) -> Result<GeneratedSubject> {
    script.validate()?;
    let t_end = script.session_len_s();
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(script.seed, "subject"));
    let normal = Normal::new(0.0, 1.0).expect("unit normal");

    let sbp_wander = SlowWander::new(&mut rng, script.noise.sbp_wander_mmhg, (300.0, 600.0));
    let hr_wander = SlowWander::new(&mut rng, 1.2, (200.0, 400.0));

    let sbp_cont = |t: f64| {
        script.baseline_sbp
            + sbp_wander.at(t)
            + script.episode_weighted(t, |e| e.sbp_rise_mmhg)
    };
    let hr_traj = |t: f64| {
        (script.resting_hr + hr_wander.at(t) + script.episode_weighted(t, |e| e.hr_change_bpm))
            .max(35.0)
    };

    // truth at 1 Hz
    let n_truth = t_end.floor() as usize;
    let mut flags = Vec::with_capacity(n_truth);
    let mut cont = Vec::with_capacity(n_truth);
    for i in 0..n_truth {
        let v = sbp_cont(i as f64);
        cont.push(v);
        flags.push(v >= script.baseline_sbp + TRUTH_DELTA_MMHG);
    }
    let truth = TruthSeries {
        rate_hz: 1.0,
        sbp_cont: cont,
        flags,
    };

    // cuff schedule
    let mut cuff_rng = ChaCha8Rng::seed_from_u64(seed::derive(script.seed, "cuff"));
    let mut cuff_t = Vec::new();
    let mut t = 40.0 + cuff_rng.gen_range(0.0..20.0);
    while t < t_end - 10.0 {
        cuff_t.push(t);
        t += script.bp_interval_s + cuff_rng.gen_range(-8.0..8.0);
    }
    if script.align_cuff_to_episodes {
        for e in &script.episodes {
            let center = e.onset_s + e.duration_s / 2.0;
            let covered = cuff_t
                .iter()
                .any(|c| *c >= e.onset_s + script.ramp_s && *c <= e.onset_s + e.duration_s - script.ramp_s);
            if !covered {
                if let Some(nearest) = cuff_t
                    .iter()
                    .enumerate()
                    .min_by(|a, b| (a.1 - center).abs().partial_cmp(&(b.1 - center).abs()).unwrap())
                    .map(|(i, _)| i)
                {
                    cuff_t[nearest] = center;
                }
            }
        }
        cuff_t.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cuff_t.dedup_by(|a, b| (*a - *b).abs() < 5.0);
    }
    if cuff_t.len() < 3 {
        return Err(CoreError::BadScript(format!(
            "cuff schedule yields only {} samples",
            cuff_t.len()
        )));
    }
    let sbp_vals: Vec<f64> = cuff_t
        .iter()
        .map(|t| sbp_cont(*t) + script.noise.cuff_mmhg * normal.sample(&mut cuff_rng))
        .collect();
    let dbp_vals: Vec<f64> = sbp_vals.iter().map(|s| 0.55 * s + 12.0).collect();
    let hr_vals: Vec<f64> = cuff_t.iter().map(|t| hr_traj(*t)).collect();
    let bp = BPReferenceSeries::new(cuff_t, sbp_vals, dbp_vals, Some(hr_vals))?;

    // beat schedule (integrate and fire over the HR trajectory)
    let mut beat_rng = ChaCha8Rng::seed_from_u64(seed::derive(script.seed, "beats"));
    let mut r_times = Vec::new();
    let mut tb = 0.4 + beat_rng.gen_range(0.0..0.3);
    while tb < t_end - 0.5 {
        r_times.push(tb);
        let period = 60.0 / hr_traj(tb);
        tb += period + script.noise.rr_jitter_s * normal.sample(&mut beat_rng);
    }
    let ptt = 0.25;
    let foot_times: Vec<f64> = r_times.iter().map(|r| r + ptt).collect();

    let mut channels = Vec::new();
    let missing = |m: Modality, d: Device| script.missing_channels.contains(&(m, d));
    let gap_spans = |m: Modality, d: Device| -> Vec<(f64, f64)> {
        script
            .dropouts
            .iter()
            .filter(|(dm, dd, _, _)| *dm == m && *dd == d)
            .map(|(_, _, a, b)| (*a, *b))
            .collect()
    };

    // ECG @ patch, 128 Hz
    if !missing(Modality::Ecg, Device::EcgPatch) {
        let rate = 128.0;
        let n = (t_end * rate) as usize;
        let mut ch_rng = ChaCha8Rng::seed_from_u64(seed::derive(script.seed, "ecg"));
        let wander = SlowWander::new(&mut ch_rng, script.noise.wander, (3.0, 3.5));
        let mut v = vec![0.0; n];
        for r in &r_times {
            // episode morphology: wider QRS, taller T, slightly lower R --
            // a subject-independent signature the morphology features can
            // pick up alongside the rate change
            let env = script.episode_env(*r);
            let amp = 1.0 - 0.12 * env;
            let qrs_w = 0.09 * (1.0 + 0.20 * env);
            let t_gain = 1.0 + 0.6 * env;
            let lo = (((r - 0.45) * rate).floor().max(0.0)) as usize;
            let hi = (((r + 0.55) * rate).ceil() as usize).min(n);
            for (i, x) in v.iter_mut().enumerate().take(hi).skip(lo) {
                *x += ecg_template_shaped(i as f64 / rate - r, amp, qrs_w, t_gain);
            }
        }
        for (i, x) in v.iter_mut().enumerate() {
            *x += wander.at(i as f64 / rate) + script.noise.ecg * normal.sample(&mut ch_rng);
        }
        channels.push(make_channel(
            script, Modality::Ecg, Device::EcgPatch, rate, v,
            &gap_spans(Modality::Ecg, Device::EcgPatch),
        )?);
    }

    // PPG @ wristband, 128 Hz
    if !missing(Modality::Ppg, Device::Wristband) {
        let rate = 128.0;
        let n = (t_end * rate) as usize;
        let mut ch_rng = ChaCha8Rng::seed_from_u64(seed::derive(script.seed, "ppg"));
        let wander = SlowWander::new(&mut ch_rng, script.noise.wander * 0.8, (3.0, 4.0));
        let mut v = vec![0.0; n];
        for (k, foot) in foot_times.iter().enumerate() {
            let period = if k + 1 < foot_times.len() {
                foot_times[k + 1] - foot
            } else {
                60.0 / hr_traj(*foot)
            };
            let amp = 1.0 - 0.25 * script.episode_env(*foot);
            let lo = ((foot * rate).floor().max(0.0)) as usize;
            let hi = (((foot + 1.6 * period) * rate).ceil() as usize).min(n);
            for (i, x) in v.iter_mut().enumerate().take(hi).skip(lo) {
                *x += amp * ppg_beat(i as f64 / rate - foot, period, 0.40);
            }
        }
        for (i, x) in v.iter_mut().enumerate() {
            *x += wander.at(i as f64 / rate) + script.noise.ppg * normal.sample(&mut ch_rng);
        }
        channels.push(make_channel(
            script, Modality::Ppg, Device::Wristband, rate, v,
            &gap_spans(Modality::Ppg, Device::Wristband),
        )?);
    }

    // BioZ @ wristband, 32 Hz: tonic level + scripted bursts
    if !missing(Modality::BioZ, Device::Wristband) {
        let rate = 32.0;
        let n = (t_end * rate) as usize;
        let mut ch_rng = ChaCha8Rng::seed_from_u64(seed::derive(script.seed, "bioz"));
        let slow = SlowWander::new(&mut ch_rng, 0.25, (400.0, 700.0));
        // SCR events: sparse at rest, denser inside episodes
        let mut events: Vec<(f64, f64)> = Vec::new();
        let mut te = ch_rng.gen_range(5.0..40.0);
        while te < t_end - 5.0 {
            let in_ep = script.episode_env(te) > 0.5;
            let amp = if in_ep {
                ch_rng.gen_range(0.15..0.5)
            } else {
                ch_rng.gen_range(0.04..0.2)
            };
            events.push((te, amp));
            let gap = if in_ep {
                ch_rng.gen_range(8.0..20.0)
            } else {
                ch_rng.gen_range(25.0..60.0)
            };
            te += gap;
        }
        let mut v = vec![0.0; n];
        for (i, x) in v.iter_mut().enumerate() {
            let t = i as f64 / rate;
            let mut s = 5.0 + slow.at(t) + script.episode_weighted(t, |e| e.scl_rise);
            for (t0, amp) in &events {
                let dt = t - t0;
                if dt > 0.0 && dt < 20.0 {
                    // bi-exponential SCR normalized to unit peak
                    s += amp * ((-dt / 3.0).exp() - (-dt / 0.7).exp()) / 0.492_33;
                }
            }
            *x = s + script.noise.bioz * normal.sample(&mut ch_rng);
        }
        channels.push(make_channel(
            script, Modality::BioZ, Device::Wristband, rate, v,
            &gap_spans(Modality::BioZ, Device::Wristband),
        )?);
    }

    // Temperature: wristband skin temp and patch core temp at 1/60 Hz
    for (device, base, gain, sigma_extra) in [
        (Device::Wristband, 33.4, 0.6, 1.5),
        (Device::TempPatch, 36.9, 1.0, 1.0),
    ] {
        if missing(Modality::Temp, device) {
            continue;
        }
        let rate = 1.0 / 60.0;
        let n = (t_end / 60.0) as usize;
        let mut ch_rng =
            ChaCha8Rng::seed_from_u64(seed::derive_indexed(script.seed, "temp", device as u64));
        let slow = SlowWander::new(&mut ch_rng, 0.08, (900.0, 1500.0));
        let mut v = vec![0.0; n.max(2)];
        for (i, x) in v.iter_mut().enumerate() {
            let t = i as f64 * 60.0;
            // temperature responds slowly: smooth the envelope by lagging it
            let env = script.episode_weighted(t - 30.0, |e| e.temp_drift_c);
            *x = base
                + slow.at(t)
                + gain * env
                + script.noise.temp * sigma_extra * normal.sample(&mut ch_rng);
        }
        channels.push(make_channel(
            script, Modality::Temp, device, rate, v,
            &gap_spans(Modality::Temp, device),
        )?);
    }

    // HR channels at 1 Hz (patch: ECG-derived, clean; wristband: PPG-derived)
    for (device, sigma_scale) in [(Device::EcgPatch, 1.0), (Device::Wristband, 3.0)] {
        if missing(Modality::Hr, device) {
            continue;
        }
        let n = t_end as usize;
        let mut ch_rng =
            ChaCha8Rng::seed_from_u64(seed::derive_indexed(script.seed, "hr", device as u64));
        let v: Vec<f64> = (0..n)
            .map(|i| {
                hr_traj(i as f64) + script.noise.hr * sigma_scale * normal.sample(&mut ch_rng)
            })
            .collect();
        channels.push(make_channel(
            script, Modality::Hr, device, 1.0, v,
            &gap_spans(Modality::Hr, device),
        )?);
    }

    // RR channels at 1 Hz
    for device in [Device::EcgPatch, Device::Wristband] {
        if missing(Modality::Rr, device) {
            continue;
        }
        let n = t_end as usize;
        let mut ch_rng =
            ChaCha8Rng::seed_from_u64(seed::derive_indexed(script.seed, "rr", device as u64));
        let slow = SlowWander::new(&mut ch_rng, 0.6, (300.0, 500.0));
        let v: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64;
                14.0 + slow.at(t)
                    + 2.5 * script.episode_env(t)
                    + script.noise.rr * normal.sample(&mut ch_rng)
            })
            .collect();
        channels.push(make_channel(
            script, Modality::Rr, device, 1.0, v,
            &gap_spans(Modality::Rr, device),
        )?);
    }

    let recording = SensorRecording::new(script.subject_id.clone(), channels)?;
    Ok(GeneratedSubject {
        recording,
        bp,
        truth,
        r_times,
        foot_times,
    })
}

fn make_channel(
    script: &SubjectScript,
    modality: Modality,
    device: Device,
    rate: f64,
    values: Vec<f64>,
    gaps: &[(f64, f64)],
) -> Result<SampleSeries> {
    let samples = values
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            let t = i as f64 / rate;
            if gaps.iter().any(|(a, b)| t >= *a && t < *b) {
                None
            } else {
                Some(v)
            }
        })
        .collect();
    SampleSeries::new(
        format!("{}-{}@{}", script.subject_id, modality, device),
        modality,
        device,
        0.0,
        rate,
        samples,
    )
}

/// Cohort-level generation parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohortConfig {
    pub n_subjects: usize,
    /// Fraction of subjects scripted with episodes.
    pub ad_fraction: f64,
    pub session_minutes: (f64, f64),
    pub bp_interval_s: (f64, f64),
    pub episode_duration_s: (f64, f64),
    pub sbp_rise_mmhg: (f64, f64),
    pub hr_change_bpm: (f64, f64),
    pub seed: u64,
    /// Mark a couple of subjects with a missing channel / dropout to exercise
    /// abstention paths.
    pub with_missing_channels: bool,
    pub align_cuff_to_episodes: bool,
}

impl Default for CohortConfig {
    fn default() -> Self {
        CohortConfig {
            n_subjects: 17,
            ad_fraction: 0.41,
            session_minutes: (18.0, 25.0),
            bp_interval_s: (120.0, 170.0),
            episode_duration_s: (280.0, 420.0),
            sbp_rise_mmhg: (27.0, 35.0),
            hr_change_bpm: (-14.0, -8.0),
            seed: 42,
            with_missing_channels: true,
            align_cuff_to_episodes: false,
        }
    }
}

/// Build the per-subject scripts for a cohort. `round(n * ad_fraction)`
/// subjects carry episodes; the rest are clean.
pub fn cohort_scripts(cfg: &CohortConfig) -> Result<Vec<SubjectScript>> {
    if cfg.n_subjects < 2 {
        return Err(CoreError::BadScript("cohort needs >= 2 subjects".into()));
    }
    let n_ad = (cfg.n_subjects as f64 * cfg.ad_fraction).round() as usize;
    let mut scripts = Vec::with_capacity(cfg.n_subjects);
    for i in 0..cfg.n_subjects {
        let sid = format!("s{:02}", i + 1);
        let sseed = seed::derive_indexed(cfg.seed, "cohort-subject", i as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(sseed);
        let mut script = SubjectScript::base(&sid, sseed);
        script.session_minutes = rng.gen_range(cfg.session_minutes.0..=cfg.session_minutes.1);
        script.bp_interval_s = rng.gen_range(cfg.bp_interval_s.0..=cfg.bp_interval_s.1);
        script.baseline_sbp = rng.gen_range(108.0..128.0);
        script.resting_hr = rng.gen_range(62.0..82.0);
        script.align_cuff_to_episodes = cfg.align_cuff_to_episodes;

        // Episodic subjects are interleaved so LOSO folds mix both kinds.
        let episodic = i % 2 == 0 && i / 2 < n_ad;
        if episodic {
            let t_end = script.session_len_s();
            // keep at least n_baseline cuff samples before onset and some
            // margin after the episode
            let min_onset = 3.0 * script.bp_interval_s + 60.0;
            let latest_end = t_end - 45.0;
            if latest_end - min_onset >= 120.0 {
                let dur = rng
                    .gen_range(cfg.episode_duration_s.0..=cfg.episode_duration_s.1)
                    .min(latest_end - min_onset - 1.0);
                let max_onset = latest_end - dur;
                let onset = if max_onset > min_onset + 1.0 {
                    rng.gen_range(min_onset..max_onset)
                } else {
                    min_onset
                };
                script.episodes.push(Episode {
                    onset_s: onset,
                    duration_s: dur,
                    sbp_rise_mmhg: rng.gen_range(cfg.sbp_rise_mmhg.0..=cfg.sbp_rise_mmhg.1),
                    hr_change_bpm: rng.gen_range(cfg.hr_change_bpm.0..=cfg.hr_change_bpm.1),
                    scl_rise: rng.gen_range(0.8..2.0),
                    temp_drift_c: rng.gen_range(0.25..0.5),
                });
            }
        }
        if cfg.with_missing_channels {
            match i {
                3 => script
                    .missing_channels
                    .push((Modality::Temp, Device::TempPatch)),
                5 => script
                    .missing_channels
                    .push((Modality::Temp, Device::Wristband)),
                8 => {
                    let t_end = script.session_len_s();
                    script.dropouts.push((
                        Modality::Ppg,
                        Device::Wristband,
                        t_end * 0.3,
                        t_end * 0.3 + 45.0,
                    ));
                }
                _ => {}
            }
        }
        scripts.push(script);
    }
    Ok(scripts)
}

/// Materialize a whole cohort.
pub fn gen_cohort(cfg: &CohortConfig) -> Result<Vec<(SubjectScript, GeneratedSubject)>> {
    use rayon::prelude::*;
    let scripts = cohort_scripts(cfg)?;
    scripts
        .into_par_iter()
        .map(|s| gen_subject(&s).map(|g| (s, g)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_episode_script_has_no_truth_flags() {
        let script = SubjectScript::base("s01", 7);
        let g = gen_subject(&script).unwrap();
        assert_eq!(g.truth.ad_seconds(), 0);
        assert!(g.bp.len() >= 3);
        assert!(!g.r_times.is_empty());
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let mut script = SubjectScript::base("s01", 99);
        script.episodes.push(Episode {
            onset_s: 500.0,
            duration_s: 300.0,
            sbp_rise_mmhg: 30.0,
            hr_change_bpm: -10.0,
            scl_rise: 1.0,
            temp_drift_c: 0.3,
        });
        let a = gen_subject(&script).unwrap();
        let b = gen_subject(&script).unwrap();
        assert_eq!(a.r_times, b.r_times);
        assert_eq!(a.bp, b.bp);
        for (ca, cb) in a.recording.channels().iter().zip(b.recording.channels()) {
            assert_eq!(ca.raw_values(), cb.raw_values());
            assert_eq!(ca.validity(), cb.validity());
        }
    }

    #[test]
    fn episode_is_realized_in_truth() {
        let mut script = SubjectScript::base("s01", 3);
        script.episodes.push(Episode {
            onset_s: 500.0,
            duration_s: 300.0,
            sbp_rise_mmhg: 30.0,
            hr_change_bpm: -10.0,
            scl_rise: 1.0,
            temp_drift_c: 0.3,
        });
        let g = gen_subject(&script).unwrap();
        let ad = g.truth.ad_seconds();
        // with 20 s ramps and +30 rise the flagged span is roughly
        // duration - 2 * ramp * (crossing fraction)
        assert!(ad > 200 && ad < 300, "AD seconds {ad}");
        // flags concentrated inside the scripted window
        for (i, f) in g.truth.flags.iter().enumerate() {
            if *f {
                assert!(i >= 495 && i <= 805, "flag at {i}");
            }
        }
    }

    #[test]
    fn rejects_episode_outside_session() {
        let mut script = SubjectScript::base("s01", 3);
        script.episodes.push(Episode {
            onset_s: 1200.0,
            duration_s: 300.0,
            sbp_rise_mmhg: 30.0,
            hr_change_bpm: -10.0,
            scl_rise: 1.0,
            temp_drift_c: 0.3,
        });
        assert!(gen_subject(&script).is_err());
    }

    #[test]
    fn cohort_counts_episodic_subjects() {
        let cfg = CohortConfig {
            n_subjects: 17,
            ad_fraction: 0.41,
            ..CohortConfig::default()
        };
        let scripts = cohort_scripts(&cfg).unwrap();
        assert_eq!(scripts.len(), 17);
        let episodic = scripts.iter().filter(|s| !s.episodes.is_empty()).count();
        assert_eq!(episodic, 7);

        let clean = cohort_scripts(&CohortConfig {
            ad_fraction: 0.0,
            ..cfg
        })
        .unwrap();
        assert!(clean.iter().all(|s| s.episodes.is_empty()));
    }

    #[test]
    fn hr_drops_during_episode() {
        let mut script = SubjectScript::base("s01", 11);
        script.episodes.push(Episode {
            onset_s: 500.0,
            duration_s: 300.0,
            sbp_rise_mmhg: 30.0,
            hr_change_bpm: -12.0,
            scl_rise: 1.0,
            temp_drift_c: 0.3,
        });
        let g = gen_subject(&script).unwrap();
        let hr = g
            .recording
            .channel(Modality::Hr, Device::EcgPatch)
            .unwrap();
        let mean_in: f64 = (550..750).map(|i| hr.value(i).unwrap()).sum::<f64>() / 200.0;
        let mean_out: f64 = (100..300).map(|i| hr.value(i).unwrap()).sum::<f64>() / 200.0;
        assert!(
            mean_out - mean_in > 8.0,
            "HR drop {:.1} bpm",
            mean_out - mean_in
        );
    }
}
