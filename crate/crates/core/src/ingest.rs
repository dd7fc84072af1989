//! File-based ingestion: per-channel CSV files described by a JSON manifest,
//! a cuff BP log, and the per-subject completeness report.
//!
//! Channel CSV schema: header `t_s,value`, one row per sample slot, empty
//! value field = gap. Writing a recording and re-loading it reproduces the
//! exact values and gap masks.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::series::{BPReferenceSeries, Device, Modality, SampleSeries, SensorRecording};
use crate::{CoreError, Result};

/// One channel entry in a subject manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelEntry {
    pub path: String,
    pub modality: String,
    pub device: String,
    pub rate_hz: f64,
    #[serde(default)]
    pub clock_offset_s: f64,
}

/// Per-subject manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubjectManifest {
    pub subject_id: String,
    pub channels: Vec<ChannelEntry>,
    pub bp_path: String,
    /// Manual exclusion (e.g. motion-degraded recordings); carried into the
    /// completeness report.
    #[serde(default)]
    pub manual_exclude: bool,
    #[serde(default)]
    pub exclude_reason: Option<String>,
}

/// Nominal per-(modality, device) sampling rates; deviations beyond 5% of
/// these are reported as warnings.
pub fn nominal_rate(modality: Modality, device: Device) -> Option<f64> {
    match (modality, device) {
        (Modality::Ppg, Device::Wristband) => Some(128.0),
        (Modality::Temp, Device::Wristband) => Some(1.0 / 60.0),
        (Modality::Rr, Device::Wristband) => Some(1.0),
        (Modality::BioZ, Device::Wristband) => Some(32.0),
        (Modality::Hr, Device::Wristband) => Some(1.0),
        (Modality::Ecg, Device::EcgPatch) => Some(128.0),
        (Modality::Hr, Device::EcgPatch) => Some(1.0),
        (Modality::Rr, Device::EcgPatch) => Some(1.0),
        (Modality::Temp, Device::TempPatch) => Some(1.0 / 60.0),
        _ => None,
    }
}

/// Result of loading one subject.
#[derive(Debug)]
pub struct LoadedSubject {
    pub recording: SensorRecording,
    pub bp: BPReferenceSeries,
    pub manifest: SubjectManifest,
    pub warnings: Vec<String>,
}

fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CoreError::io(path.display().to_string(), e))
}

/// Parse one channel CSV into a series on the grid implied by the manifest
/// rate. Rows must be grid-aligned; empty values and missing rows are gaps.
fn load_channel(dir: &Path, entry: &ChannelEntry) -> Result<(SampleSeries, Vec<String>)> {
    let modality = Modality::parse(&entry.modality)
        .ok_or_else(|| CoreError::Schema(format!("unknown modality '{}'", entry.modality)))?;
    let device = Device::parse(&entry.device)
        .ok_or_else(|| CoreError::Schema(format!("unknown device '{}'", entry.device)))?;
    if !(entry.rate_hz > 0.0) {
        return Err(CoreError::Schema(format!(
            "{}: rate_hz must be positive",
            entry.path
        )));
    }
    let path = dir.join(&entry.path);
    let text = read_to_string(&path)?;
    let mut rows: Vec<(f64, Option<f64>)> = Vec::new();
    let mut warnings = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 {
            if line.trim() != "t_s,value" {
                return Err(CoreError::Parse {
                    path: entry.path.clone(),
                    line: 1,
                    msg: format!("expected header 't_s,value', got '{line}'"),
                });
            }
            continue;
        }
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.splitn(2, ',');
        let t_str = parts.next().unwrap_or("");
        let v_str = parts.next().ok_or_else(|| CoreError::Parse {
            path: entry.path.clone(),
            line: lineno + 1,
            msg: "missing value column".into(),
        })?;
        let t: f64 = t_str.trim().parse().map_err(|_| CoreError::Parse {
            path: entry.path.clone(),
            line: lineno + 1,
            msg: format!("bad timestamp '{t_str}'"),
        })?;
        let v = if v_str.trim().is_empty() {
            None
        } else {
            Some(v_str.trim().parse::<f64>().map_err(|_| CoreError::Parse {
                path: entry.path.clone(),
                line: lineno + 1,
                msg: format!("bad value '{v_str}'"),
            })?)
        };
        rows.push((t, v));
    }

    if rows.is_empty() {
        // empty channel file: all-gap, zero-length series at the offset
        let s = SampleSeries::new(
            entry.path.clone(),
            modality,
            device,
            entry.clock_offset_s,
            entry.rate_hz,
            Vec::new(),
        )?;
        warnings.push(format!("{}: empty channel file (all-gap)", entry.path));
        return Ok((s, warnings));
    }

    let t0 = rows[0].0;
    let dt = 1.0 / entry.rate_hz;
    let last_t = rows.last().unwrap().0;
    let n = ((last_t - t0) / dt).round() as usize + 1;
    let mut samples: Vec<Option<f64>> = vec![None; n];
    for (i, (t, v)) in rows.iter().enumerate() {
        let slot = ((t - t0) / dt).round();
        let err = ((t - t0) - slot * dt).abs();
        if err > dt * 0.25 {
            return Err(CoreError::Parse {
                path: entry.path.clone(),
                line: i + 2,
                msg: format!("timestamp {t} off the {} Hz grid", entry.rate_hz),
            });
        }
        let slot = slot as usize;
        if slot < n {
            samples[slot] = *v;
        }
    }

    // observed-rate sanity check over provided rows
    if rows.len() >= 2 {
        let span = last_t - t0;
        if span > 0.0 {
            let observed = (rows.len() - 1) as f64 / span;
            let nominal = nominal_rate(modality, device).unwrap_or(entry.rate_hz);
            if (observed - nominal).abs() > 0.05 * nominal {
                warnings.push(format!(
                    "{}: observed rate {observed:.4} Hz deviates >5% from nominal {nominal:.4} Hz",
                    entry.path
                ));
            }
        }
    }

    let series = SampleSeries::new(
        entry.path.clone(),
        modality,
        device,
        t0 + entry.clock_offset_s,
        entry.rate_hz,
        samples,
    )?;
    Ok((series, warnings))
}

fn load_bp(dir: &Path, rel: &str) -> Result<BPReferenceSeries> {
    let path = dir.join(rel);
    let text = read_to_string(&path)?;
    let mut t = Vec::new();
    let mut sbp = Vec::new();
    let mut dbp = Vec::new();
    let mut hr = Vec::new();
    let mut have_hr = false;
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 {
            let h = line.trim();
            if h != "t_s,sbp,dbp,hr" && h != "t_s,sbp,dbp" {
                return Err(CoreError::Parse {
                    path: rel.into(),
                    line: 1,
                    msg: format!("expected header 't_s,sbp,dbp[,hr]', got '{h}'"),
                });
            }
            have_hr = h.ends_with(",hr");
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let want = if have_hr { 4 } else { 3 };
        if fields.len() != want {
            return Err(CoreError::Parse {
                path: rel.into(),
                line: lineno + 1,
                msg: format!("expected {want} fields, got {}", fields.len()),
            });
        }
        let parse = |s: &str, what: &str| -> Result<f64> {
            s.trim().parse().map_err(|_| CoreError::Parse {
                path: rel.into(),
                line: lineno + 1,
                msg: format!("bad {what} '{s}'"),
            })
        };
        t.push(parse(fields[0], "t_s")?);
        sbp.push(parse(fields[1], "sbp")?);
        dbp.push(parse(fields[2], "dbp")?);
        if have_hr {
            hr.push(parse(fields[3], "hr")?);
        }
    }
    BPReferenceSeries::new(t, sbp, dbp, if have_hr { Some(hr) } else { None })
}

/// Load a subject from its manifest path. Channels are validated against the
/// nominal rate map; the recording is aligned to the session clock.
pub fn load_recording(manifest_path: &Path) -> Result<LoadedSubject> {
    let text = read_to_string(manifest_path)?;
    let manifest: SubjectManifest = serde_json::from_str(&text)
        .map_err(|e| CoreError::Schema(format!("{}: {e}", manifest_path.display())))?;
    if manifest.channels.is_empty() {
        return Err(CoreError::Schema(format!(
            "{}: manifest lists no channels",
            manifest_path.display()
        )));
    }
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let mut channels = Vec::new();
    let mut warnings = Vec::new();
    for entry in &manifest.channels {
        let (series, mut w) = load_channel(dir, entry)?;
        warnings.append(&mut w);
        channels.push(series);
    }
    let recording = SensorRecording::new(manifest.subject_id.clone(), channels)?;
    let aligned = recording.align_to_session()?;
    let bp = load_bp(dir, &manifest.bp_path)?.rebased(recording.session_span.0);
    Ok(LoadedSubject {
        recording: aligned,
        bp,
        manifest,
        warnings,
    })
}

/// Write a recording + BP series in the ingest schema; returns the manifest
/// path. Used by the generator stage and by round-trip tests.
pub fn write_recording(
    dir: &Path,
    rec: &SensorRecording,
    bp: &BPReferenceSeries,
    manual_exclude: bool,
) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| CoreError::io(dir.display().to_string(), e))?;
    let mut entries = Vec::new();
    for c in rec.channels() {
        let fname = format!(
            "{}_{}.csv",
            c.modality.as_str().to_lowercase(),
            c.device.as_str().to_lowercase().replace('-', "_")
        );
        let path = dir.join(&fname);
        let mut f = std::fs::File::create(&path)
            .map_err(|e| CoreError::io(path.display().to_string(), e))?;
        let mut buf = String::with_capacity(c.len() * 16 + 16);
        buf.push_str("t_s,value\n");
        for i in 0..c.len() {
            match c.value(i) {
                Some(v) => buf.push_str(&format!("{:.6},{v}\n", c.time_at(i) - c.start_time)),
                None => buf.push_str(&format!("{:.6},\n", c.time_at(i) - c.start_time)),
            }
        }
        f.write_all(buf.as_bytes())
            .map_err(|e| CoreError::io(path.display().to_string(), e))?;
        entries.push(ChannelEntry {
            path: fname,
            modality: c.modality.as_str().into(),
            device: c.device.as_str().into(),
            rate_hz: c.rate_hz,
            clock_offset_s: c.start_time,
        });
    }
    let bp_path = "bp.csv".to_string();
    {
        let path = dir.join(&bp_path);
        let mut buf = String::from("t_s,sbp,dbp,hr\n");
        let hr = bp.hr.clone().unwrap_or_else(|| vec![f64::NAN; bp.len()]);
        for i in 0..bp.len() {
            buf.push_str(&format!(
                "{:.6},{},{},{}\n",
                bp.timestamps[i], bp.sbp[i], bp.dbp[i], hr[i]
            ));
        }
        std::fs::write(&path, buf).map_err(|e| CoreError::io(path.display().to_string(), e))?;
    }
    let manifest = SubjectManifest {
        subject_id: rec.subject_id.clone(),
        channels: entries,
        bp_path,
        manual_exclude,
        exclude_reason: if manual_exclude {
            Some("manual exclude".into())
        } else {
            None
        },
    };
    let mpath = dir.join("manifest.json");
    std::fs::write(&mpath, serde_json::to_string_pretty(&manifest).unwrap())
        .map_err(|e| CoreError::io(mpath.display().to_string(), e))?;
    Ok(mpath)
}

/// Exclusion thresholds (config-overridable).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompletenessConfig {
    /// Minimum ECG/PPG completeness percentage.
    pub min_signal_pct: f64,
    /// Minimum number of cuff references.
    pub min_bp_count: usize,
}

impl Default for CompletenessConfig {
    fn default() -> Self {
        CompletenessConfig {
            min_signal_pct: 50.0,
            min_bp_count: 4,
        }
    }
}

/// Per-channel completeness plus exclusion flags for one subject.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompletenessReport {
    pub subject_id: String,
    /// `(modality, device) -> percent valid` over the session span.
    pub channel_pct: BTreeMap<String, f64>,
    pub bp_count: usize,
    pub excluded: bool,
    pub reasons: Vec<String>,
}

/// Compute completeness and exclusion flags for one subject.
pub fn completeness_report(
    rec: &SensorRecording,
    bp: &BPReferenceSeries,
    manual_exclude: bool,
    cfg: &CompletenessConfig,
) -> CompletenessReport {
    let (t0, t1) = rec.session_span;
    let mut channel_pct = BTreeMap::new();
    for c in rec.channels() {
        channel_pct.insert(
            format!("{}@{}", c.modality, c.device),
            c.completeness_pct(t0, t1),
        );
    }
    let mut reasons = Vec::new();
    for (modality, device, name) in [
        (Modality::Ecg, Device::EcgPatch, "ECG"),
        (Modality::Ppg, Device::Wristband, "PPG"),
    ] {
        match rec.channel(modality, device) {
            None => reasons.push(format!("missing {name}")),
            Some(c) => {
                let pct = c.completeness_pct(t0, t1);
                if pct < cfg.min_signal_pct {
                    reasons.push(format!("insufficient {name} ({pct:.1}% valid)"));
                }
            }
        }
    }
    if bp.len() < cfg.min_bp_count {
        reasons.push(format!(
            "insufficient reference BP ({} < {})",
            bp.len(),
            cfg.min_bp_count
        ));
    }
    if manual_exclude {
        reasons.push("manual exclude".into());
    }
    CompletenessReport {
        subject_id: rec.subject_id.clone(),
        channel_pct,
        bp_count: bp.len(),
        excluded: !reasons.is_empty(),
        reasons,
    }
}

/// Render reports as CSV (one row per subject x channel).
pub fn completeness_csv(reports: &[CompletenessReport]) -> String {
    let mut out = String::from("subject_id,channel,completeness_pct,bp_count,excluded,reasons\n");
    for r in reports {
        for (chan, pct) in &r.channel_pct {
            out.push_str(&format!(
                "{},{},{:.2},{},{},\"{}\"\n",
                r.subject_id,
                chan,
                pct,
                r.bp_count,
                r.excluded,
                r.reasons.join("; ")
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{gen_subject, SubjectScript};

    #[test]
    fn round_trip_preserves_values_and_gaps() {
        let mut script = SubjectScript::base("s01", 21);
        script.session_minutes = 3.0;
        script.bp_interval_s = 40.0;
        script.dropouts.push((
            Modality::Ppg,
            Device::Wristband,
            60.0,
            75.0,
        ));
        let g = gen_subject(&script).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let mpath = write_recording(dir.path(), &g.recording, &g.bp, false).unwrap();
        let loaded = load_recording(&mpath).unwrap();
        assert_eq!(loaded.recording.channels().len(), g.recording.channels().len());
        for c in g.recording.channels() {
            let lc = loaded
                .recording
                .channel(c.modality, c.device)
                .expect("channel survives round trip");
            assert_eq!(lc.len(), c.len(), "{}", c.channel_id);
            assert_eq!(lc.validity(), c.validity(), "{}", c.channel_id);
            for i in 0..c.len() {
                match (c.value(i), lc.value(i)) {
                    (Some(a), Some(b)) => assert!((a - b).abs() < 1e-9),
                    (None, None) => {}
                    other => panic!("gap mask diverged at {i}: {other:?}"),
                }
            }
        }
        assert_eq!(loaded.bp.len(), g.bp.len());
    }

    #[test]
    fn duplicate_channel_is_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.csv"), "t_s,value\n0.0,1.0\n1.0,2.0\n").unwrap();
        let manifest = SubjectManifest {
            subject_id: "x".into(),
            channels: vec![
                ChannelEntry {
                    path: "a.csv".into(),
                    modality: "HR".into(),
                    device: "ECG-patch".into(),
                    rate_hz: 1.0,
                    clock_offset_s: 0.0,
                },
                ChannelEntry {
                    path: "a.csv".into(),
                    modality: "HR".into(),
                    device: "ECG-patch".into(),
                    rate_hz: 1.0,
                    clock_offset_s: 0.0,
                },
            ],
            bp_path: "bp.csv".into(),
            manual_exclude: false,
            exclude_reason: None,
        };
        let mpath = dir.path().join("manifest.json");
        std::fs::write(&mpath, serde_json::to_string(&manifest).unwrap()).unwrap();
        std::fs::write(
            dir.path().join("bp.csv"),
            "t_s,sbp,dbp\n0,120,80\n120,122,81\n240,121,80\n",
        )
        .unwrap();
        assert!(matches!(
            load_recording(&mpath),
            Err(CoreError::DuplicateChannel(_))
        ));
    }

    #[test]
    fn unknown_modality_is_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.csv"), "t_s,value\n0.0,1.0\n").unwrap();
        let manifest = serde_json::json!({
            "subject_id": "x",
            "channels": [{"path": "a.csv", "modality": "EMG", "device": "Wristband", "rate_hz": 1.0}],
            "bp_path": "bp.csv"
        });
        let mpath = dir.path().join("manifest.json");
        std::fs::write(&mpath, manifest.to_string()).unwrap();
        assert!(matches!(
            load_recording(&mpath),
            Err(CoreError::Schema(_))
        ));
    }

    #[test]
    fn malformed_csv_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("a.csv"),
            "t_s,value\n0.0,1.0\n1.0,banana\n2.0,2.0\n",
        )
        .unwrap();
        std::fs::write(
            dir.path().join("bp.csv"),
            "t_s,sbp,dbp\n0,120,80\n120,122,81\n240,121,80\n",
        )
        .unwrap();
        let manifest = serde_json::json!({
            "subject_id": "x",
            "channels": [{"path": "a.csv", "modality": "HR", "device": "ECG-patch", "rate_hz": 1.0}],
            "bp_path": "bp.csv"
        });
        let mpath = dir.path().join("manifest.json");
        std::fs::write(&mpath, manifest.to_string()).unwrap();
        match load_recording(&mpath) {
            Err(CoreError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn completeness_flags_and_reasons() {
        let mut script = SubjectScript::base("s01", 5);
        script.session_minutes = 4.0;
        script.bp_interval_s = 40.0;
        let g = gen_subject(&script).unwrap();
        let cfg = CompletenessConfig::default();
        let full = completeness_report(&g.recording, &g.bp, false, &cfg);
        assert!(!full.excluded, "reasons: {:?}", full.reasons);
        assert!(full
            .channel_pct
            .values()
            .all(|p| (*p - 100.0).abs() < 1e-9));

        // drop PPG entirely
        let mut script2 = script.clone();
        script2.missing_channels.push((Modality::Ppg, Device::Wristband));
        let g2 = gen_subject(&script2).unwrap();
        let r2 = completeness_report(&g2.recording, &g2.bp, false, &cfg);
        assert!(r2.excluded);
        assert!(r2.reasons.iter().any(|r| r.contains("missing PPG")));

        // too few BP references
        let bp3 = BPReferenceSeries::new(
            vec![10.0, 150.0, 290.0],
            vec![120.0, 121.0, 119.0],
            vec![80.0, 81.0, 79.0],
            None,
        )
        .unwrap();
        let r3 = completeness_report(&g.recording, &bp3, false, &cfg);
        assert!(r3.excluded);
        assert!(r3
            .reasons
            .iter()
            .any(|r| r.contains("insufficient reference BP")));
    }
}
