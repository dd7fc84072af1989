//! Diagnostic: inspect selection sizes, learner outputs, and per-learner F1
//! on a small synthetic cohort. Dev tool, not part of the test suite.

use ad_core::features::{build_matrix, ExtractionConfig, SubjectData};
use ad_core::labeling::LabelingConfig;
use ad_core::synth::{gen_cohort, CohortConfig};
use ad_core::window::WindowSpec;
use ad_learn::ensemble::MetaKind;
use ad_learn::eval::{run_experiment, AggregatorChoice, ExperimentConfig, SelectionMode};
use ad_learn::trees::ForestParams;

fn main() {
    let cfg = CohortConfig {
        n_subjects: 6,
        ad_fraction: 0.5,
        session_minutes: (14.0, 16.0),
        bp_interval_s: (100.0, 130.0),
        episode_duration_s: (240.0, 300.0),
        seed: 99,
        with_missing_channels: false,
        align_cuff_to_episodes: true,
        ..CohortConfig::default()
    };
    let cohort = gen_cohort(&cfg).unwrap();
    for (s, g) in &cohort {
        println!(
            "{}: session {:.0}s, episodes {:?}, truth AD {}s, bp {}",
            s.subject_id,
            s.session_len_s(),
            s.episodes
                .iter()
                .map(|e| (e.onset_s.round(), e.duration_s.round()))
                .collect::<Vec<_>>(),
            g.truth.ad_seconds(),
            g.bp.len()
        );
    }
    let subjects: Vec<SubjectData> = cohort
        .into_iter()
        .map(|(_, g)| SubjectData {
            recording: g.recording,
            bp: g.bp,
        })
        .collect();
    let matrix = build_matrix(
        &subjects,
        &WindowSpec::new(60.0, 10.0).unwrap(),
        &LabelingConfig::default(),
        &ExtractionConfig::default(),
    )
    .unwrap();
    let (ad, normal) = matrix.label_counts();
    println!("matrix: {} rows ({ad} AD / {normal} normal), {} cols", matrix.n_rows(), matrix.n_cols());

    // per-column fill rate for a few scopes
    for m in [
        ad_core::series::Modality::Hr,
        ad_core::series::Modality::Ecg,
        ad_core::series::Modality::Ppg,
        ad_core::series::Modality::Temp,
    ] {
        let cols = matrix.registry.columns_for_modality(m);
        let mut filled = 0usize;
        for r in 0..matrix.n_rows() {
            for c in &cols {
                if matrix.get(r, *c).is_some() {
                    filled += 1;
                }
            }
        }
        println!(
            "{m}: {} cols, fill rate {:.2}%",
            cols.len(),
            100.0 * filled as f64 / (cols.len() * matrix.n_rows()) as f64
        );
    }

    let ecfg = ExperimentConfig {
        n_seeds: 1,
        forest: ForestParams {
            n_trees: 60,
            ..ForestParams::default()
        },
        aggregator: AggregatorChoice::Stacked {
            meta: MetaKind::NearestCentroid,
        },
        ..ExperimentConfig::new(7)
    };
    let (cache, report) = run_experiment(&matrix, &ecfg).unwrap();
    for (fold_idx, sel) in cache.per_fold_selection.iter().enumerate() {
        let sizes: Vec<String> = sel.iter().map(|(k, v)| format!("{k}={}", v.len())).collect();
        println!("fold {fold_idx}: {}", sizes.join(" "));
        if fold_idx >= 2 {
            break;
        }
    }
    // per-learner pooled F1 from cache
    let n_learners = cache.learner_ids.len();
    for li in 0..n_learners {
        let mut t = Vec::new();
        let mut p = Vec::new();
        let mut abstain = 0usize;
        for fold in &cache.seed_runs[0].folds {
            for (ri, probs) in fold.probs_test.iter().enumerate() {
                match probs[li] {
                    Some(prob) => {
                        t.push(fold.y_test[ri]);
                        p.push(u8::from(prob >= 0.5));
                    }
                    None => abstain += 1,
                }
            }
        }
        let f1 = ad_learn::eval::metrics::macro_f1(&t, &p).ok();
        println!(
            "learner {}: f1 {:?}, abstained {abstain}",
            cache.learner_ids[li], f1
        );
    }
    println!("summary: {:?}", report.summary);
    let _ = SelectionMode::AllScopeColumns;

    // inspect one fold's OOF distribution and test probabilities
    let fold = &cache.seed_runs[0].folds[0];
    let mut ad_mean = vec![0.0; n_learners];
    let mut n_ad = 0.0f64;
    let mut nm_mean = vec![0.0; n_learners];
    let mut n_nm = 0.0f64;
    for (probs, y) in fold.oof_probs.iter().zip(&fold.oof_y) {
        let (acc, n) = if *y == 1 {
            (&mut ad_mean, &mut n_ad)
        } else {
            (&mut nm_mean, &mut n_nm)
        };
        for (a, p) in acc.iter_mut().zip(probs) {
            *a += p;
        }
        *n += 1.0;
    }
    for v in ad_mean.iter_mut() {
        *v /= n_ad.max(1.0);
    }
    for v in nm_mean.iter_mut() {
        *v /= n_nm.max(1.0);
    }
    println!("fold0 oof AD centroid:     {ad_mean:.2?} (n={n_ad})");
    println!("fold0 oof Normal centroid: {nm_mean:.2?} (n={n_nm})");
    for (ri, probs) in fold.probs_test.iter().enumerate().step_by(9) {
        let filled: Vec<f64> = probs.iter().map(|p| p.unwrap_or(0.5)).collect();
        println!("test row {ri} y={} probs {filled:.2?}", fold.y_test[ri]);
    }

    // what did selection accept for the ECG scope, and do the ECG HRV
    // features separate the classes at all?
    let ecg_cols = matrix
        .registry
        .columns_for_modality(ad_core::series::Modality::Ecg);
    let sel_ecg = &cache.per_fold_selection[0]["mod:ECG"];
    println!(
        "fold0 ECG accepted: {:?}",
        sel_ecg
            .iter()
            .map(|c| matrix.registry.defs()[*c].name.clone())
            .collect::<Vec<_>>()
    );
    for name in ["ecg.ecg_patch.nn_mean_ms", "ecg.ecg_patch.hr_mean"] {
        let col = ecg_cols
            .iter()
            .copied()
            .find(|c| matrix.registry.defs()[*c].name == name)
            .unwrap();
        let mut ad_vals = Vec::new();
        let mut nm_vals = Vec::new();
        let mut missing = 0usize;
        for r in 0..matrix.n_rows() {
            match matrix.get(r, col) {
                Some(v) => {
                    if matrix.rows[r].label == ad_core::labeling::WindowLabel::Ad {
                        ad_vals.push(v);
                    } else {
                        nm_vals.push(v);
                    }
                }
                None => missing += 1,
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
        println!(
            "{name}: AD mean {:.2} (n={}), Normal mean {:.2} (n={}), missing {missing}",
            mean(&ad_vals),
            ad_vals.len(),
            mean(&nm_vals),
            nm_vals.len()
        );
    }

    // replicate fold 0's inner OOF training by hand for learner mod:HR
    use ad_learn::ensemble::{learner_scopes, train_weak_learner};
    let test_subject = &fold.test_subject;
    let train_rows: Vec<usize> = (0..matrix.n_rows())
        .filter(|r| &matrix.rows[*r].subject_id != test_subject)
        .collect();
    let train_subjects: Vec<String> = {
        let mut s: Vec<String> = train_rows
            .iter()
            .map(|r| matrix.rows[*r].subject_id.clone())
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        s.sort();
        s
    };
    println!("fold0 test={test_subject} train_subjects={train_subjects:?}");
    let hr_scope = learner_scopes()[4];
    let sel = &cache.per_fold_selection[0][&hr_scope.id()];
    println!("HR selection: {} cols", sel.len());
    for held in &train_subjects {
        let inner_train: Vec<usize> = train_rows
            .iter()
            .copied()
            .filter(|r| &matrix.rows[*r].subject_id != held)
            .collect();
        let inner_val: Vec<usize> = train_rows
            .iter()
            .copied()
            .filter(|r| &matrix.rows[*r].subject_id == held)
            .collect();
        let n_ad_train = inner_train
            .iter()
            .filter(|r| matrix.rows[**r].label == ad_core::labeling::WindowLabel::Ad)
            .count();
        let learner =
            train_weak_learner(&matrix, &inner_train, hr_scope, sel, &ecfg.forest, 12345)
                .unwrap();
        let mut preds = Vec::new();
        for r in inner_val.iter().take(6) {
            preds.push(learner.predict_row(&matrix, *r));
        }
        let ad_val: Vec<Option<f64>> = inner_val
            .iter()
            .filter(|r| matrix.rows[**r].label == ad_core::labeling::WindowLabel::Ad)
            .take(5)
            .map(|r| learner.predict_row(&matrix, *r))
            .collect();
        println!(
            "inner val={held}: train AD rows {n_ad_train}, single_class={}, val preds {preds:.2?}, val AD preds {ad_val:.2?}",
            learner.model.single_class
        );
    }
}
