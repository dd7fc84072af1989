//! Cross-module integration: scripted generation -> labeling -> extraction.

use ad_core::features::{build_matrix, ExtractionConfig, SubjectData};
use ad_core::labeling::{build_label_series, LabelingConfig, WindowLabel};
use ad_core::series::{Device, Modality};
use ad_core::synth::{gen_subject, Episode, SubjectScript, TRUTH_DELTA_MMHG};
use ad_core::window::WindowSpec;

fn episodic_script(seed: u64, rise: f64, duration: f64, interval: f64) -> SubjectScript {
    let mut script = SubjectScript::base(format!("s{seed:02}"), seed);
    script.bp_interval_s = interval;
    script.episodes.push(Episode {
        onset_s: 560.0,
        duration_s: duration,
        sbp_rise_mmhg: rise,
        hr_change_bpm: -10.0,
        scl_rise: 1.2,
        temp_drift_c: 0.3,
    });
    script
}

/// Jaccard overlap between interpolated AD labels and scripted truth on the
/// shared 1 Hz grid.
fn label_truth_jaccard(script: &SubjectScript) -> f64 {
    let g = gen_subject(script).unwrap();
    let cfg = LabelingConfig::default();
    let series = build_label_series(&g.bp, &cfg).unwrap();
    let mut inter = 0usize;
    let mut union = 0usize;
    for (i, truth) in g.truth.flags.iter().enumerate() {
        let t = i as f64;
        let labeled = if t >= series.t_start && t <= series.t_end() {
            let idx = ((t - series.t_start) * series.rate_hz).round() as usize;
            series.is_ad.get(idx).copied().unwrap_or(false)
        } else {
            false
        };
        if *truth && labeled {
            inter += 1;
        }
        if *truth || labeled {
            union += 1;
        }
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

#[test]
fn labeling_recovers_scripted_episode_span() {
    // one +30 mmHg episode of 300 s, cuff every ~150 s
    let j = label_truth_jaccard(&episodic_script(11, 30.0, 300.0, 150.0));
    assert!(j >= 0.7, "Jaccard {j:.3}");
}

#[test]
fn labeling_jaccard_across_seeds() {
    let mut total = 0.0;
    let n = 6;
    for seed in 0..n {
        let j = label_truth_jaccard(&episodic_script(100 + seed, 30.0, 280.0, 140.0));
        total += j;
        assert!(j >= 0.55, "seed {seed}: Jaccard {j:.3}");
    }
    let mean = total / n as f64;
    assert!(mean >= 0.7, "mean Jaccard {mean:.3}");
}

#[test]
fn truth_delta_matches_labeling_default() {
    assert_eq!(TRUTH_DELTA_MMHG, LabelingConfig::default().delta_mmhg);
}

#[test]
fn matrix_rows_match_window_formula() {
    let mut scripts = vec![episodic_script(31, 30.0, 300.0, 150.0)];
    scripts.push(SubjectScript::base("s99", 32));
    let subjects: Vec<SubjectData> = scripts
        .iter()
        .map(|s| {
            let g = gen_subject(s).unwrap();
            SubjectData {
                recording: g.recording,
                bp: g.bp,
            }
        })
        .collect();
    let spec = WindowSpec::new(60.0, 10.0).unwrap();
    let label_cfg = LabelingConfig::default();
    let matrix = build_matrix(&subjects, &spec, &label_cfg, &ExtractionConfig::default()).unwrap();

    // every row is labeled; count <= total window count; rows ordered
    let mut expected_max = 0usize;
    for s in &subjects {
        expected_max += spec.count_for(s.recording.session_len());
    }
    assert!(matrix.n_rows() > 0 && matrix.n_rows() <= expected_max);
    let (ad, normal) = matrix.label_counts();
    assert!(ad > 0, "episodic subject produced no AD windows");
    assert!(normal > ad);
    for pair in matrix.rows.windows(2) {
        assert!(
            (pair[0].subject_id.as_str(), pair[0].window_start_s)
                <= (pair[1].subject_id.as_str(), pair[1].window_start_s)
        );
    }
}

#[test]
fn ad_row_fraction_tracks_scripted_truth() {
    let script = episodic_script(77, 30.0, 320.0, 140.0);
    let g = gen_subject(&script).unwrap();
    let truth_frac = g.truth.ad_seconds() as f64 / g.truth.flags.len() as f64;
    let subjects = vec![SubjectData {
        recording: g.recording,
        bp: g.bp,
    }];
    let spec = WindowSpec::new(60.0, 10.0).unwrap();
    let matrix = build_matrix(
        &subjects,
        &spec,
        &LabelingConfig::default(),
        &ExtractionConfig::default(),
    )
    .unwrap();
    let (ad, normal) = matrix.label_counts();
    let row_frac = ad as f64 / (ad + normal) as f64;
    // labeled-window fraction tracks the scripted AD fraction; window
    // dilution and cuff-edge error allow a few percentage points
    assert!(
        (row_frac - truth_frac).abs() <= 0.06,
        "row AD fraction {row_frac:.3} vs truth {truth_frac:.3}"
    );
}

#[test]
fn missing_channel_masks_its_columns() {
    let mut script = episodic_script(41, 30.0, 300.0, 150.0);
    script
        .missing_channels
        .push((Modality::Temp, Device::TempPatch));
    let g = gen_subject(&script).unwrap();
    let subjects = vec![SubjectData {
        recording: g.recording,
        bp: g.bp,
    }];
    let spec = WindowSpec::new(60.0, 10.0).unwrap();
    let matrix = build_matrix(
        &subjects,
        &spec,
        &LabelingConfig::default(),
        &ExtractionConfig::default(),
    )
    .unwrap();
    let temp_patch_cols: Vec<usize> = matrix
        .registry
        .defs()
        .iter()
        .enumerate()
        .filter(|(_, d)| d.device == Device::TempPatch)
        .map(|(i, _)| i)
        .collect();
    assert!(!temp_patch_cols.is_empty());
    for r in 0..matrix.n_rows() {
        for c in &temp_patch_cols {
            assert!(matrix.get(r, *c).is_none());
        }
    }
    // but ECG columns are populated for most rows
    let ecg_cols = matrix.registry.columns_for_modality(Modality::Ecg);
    let filled = (0..matrix.n_rows())
        .filter(|r| ecg_cols.iter().any(|c| matrix.get(*r, *c).is_some()))
        .count();
    assert!(filled as f64 >= 0.9 * matrix.n_rows() as f64);
}

#[test]
fn extraction_is_deterministic() {
    let script = episodic_script(53, 30.0, 280.0, 150.0);
    let build = || {
        let g = gen_subject(&script).unwrap();
        let subjects = vec![SubjectData {
            recording: g.recording,
            bp: g.bp,
        }];
        build_matrix(
            &subjects,
            &WindowSpec::new(60.0, 10.0).unwrap(),
            &LabelingConfig::default(),
            &ExtractionConfig::default(),
        )
        .unwrap()
    };
    let a = build();
    let b = build();
    assert_eq!(a.n_rows(), b.n_rows());
    for r in 0..a.n_rows() {
        for c in 0..a.n_cols() {
            assert_eq!(a.get(r, c), b.get(r, c), "cell ({r},{c}) diverged");
        }
    }
}

#[test]
fn matrix_csv_round_trip() {
    let script = episodic_script(67, 30.0, 280.0, 150.0);
    let g = gen_subject(&script).unwrap();
    let subjects = vec![SubjectData {
        recording: g.recording,
        bp: g.bp,
    }];
    let matrix = build_matrix(
        &subjects,
        &WindowSpec::new(60.0, 10.0).unwrap(),
        &LabelingConfig::default(),
        &ExtractionConfig::default(),
    )
    .unwrap();
    let mut buf = Vec::new();
    matrix.to_csv(&mut buf, &["meta test".into()]).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let loaded = ad_core::features::WindowedFeatureMatrix::from_csv(&text).unwrap();
    assert_eq!(loaded.n_rows(), matrix.n_rows());
    for r in 0..matrix.n_rows() {
        assert_eq!(loaded.rows[r].subject_id, matrix.rows[r].subject_id);
        assert_eq!(loaded.rows[r].label, matrix.rows[r].label);
        for c in 0..matrix.n_cols() {
            match (matrix.get(r, c), loaded.get(r, c)) {
                (Some(a), Some(b)) => {
                    assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "({r},{c}): {a} vs {b}")
                }
                (None, None) => {}
                other => panic!("mask diverged at ({r},{c}): {other:?}"),
            }
        }
    }
}

#[test]
fn window_labels_follow_sbp_plateau() {
    let script = episodic_script(91, 30.0, 300.0, 120.0);
    let g = gen_subject(&script).unwrap();
    let spec = WindowSpec::new(60.0, 10.0).unwrap();
    let windows: Vec<_> = ad_core::window::window_iter(&g.recording, &spec).collect();
    let labels =
        ad_core::labeling::label_windows(&g.bp, &windows, &LabelingConfig::default()).unwrap();
    // windows fully inside the scripted plateau must be AD
    let plateau = labels
        .iter()
        .filter(|l| l.window_start_s >= 620.0 && l.window_end_s <= 800.0)
        .collect::<Vec<_>>();
    assert!(!plateau.is_empty());
    for l in plateau {
        assert_eq!(l.label, WindowLabel::Ad, "window at {}", l.window_start_s);
    }
}
