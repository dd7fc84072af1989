//! Leave-one-subject-out evaluation: fold planning, the experiment runner
//! with leakage instrumentation, metrics aggregation across seeds, temporal
//! prediction traces, subset robustness, and the window-configuration sweep.

pub mod metrics;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use ad_core::features::{build_matrix, ExtractionConfig, SubjectData, WindowedFeatureMatrix};
use ad_core::labeling::LabelingConfig;
use ad_core::seed;
use ad_core::window::WindowSpec;

use crate::data::{column_medians, extract_dense, labels_for, z_normalize, DenseMatrix};
use crate::ensemble::{
    k_vote, learner_scopes, meta_predict, stack_train, train_weak_learner, vote_fraction,
    LearnerSpec, MetaKind, MetaModel, Scope, VoteOutcome,
};
use crate::shap::boruta::{boruta_shap, BorutaParams};
use crate::trees::ForestParams;
use metrics::{full_metrics, macro_f1, mean_std, roc_auc, ClassMetrics};

use crate::{LearnError, Result};

/// Ordered LOSO folds: every subject is the test subject exactly once.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldPlan {
    pub folds: Vec<(String, Vec<String>)>,
}

/// Build the LOSO plan; errors on duplicates or fewer than 2 subjects.
pub fn loso_plan(subject_ids: &[String]) -> Result<FoldPlan> {
    if subject_ids.len() < 2 {
        return Err(LearnError::FoldPlan(format!(
            "need >= 2 subjects, got {}",
            subject_ids.len()
        )));
    }
    let unique: std::collections::BTreeSet<&String> = subject_ids.iter().collect();
    if unique.len() != subject_ids.len() {
        return Err(LearnError::FoldPlan("duplicate subject ids".into()));
    }
    let mut sorted: Vec<String> = subject_ids.to_vec();
    sorted.sort();
    let folds = sorted
        .iter()
        .map(|test| {
            (
                test.clone(),
                sorted.iter().filter(|s| *s != test).cloned().collect(),
            )
        })
        .collect();
    Ok(FoldPlan { folds })
}

/// How per-fold feature selection is obtained.
#[derive(Debug, Clone)]
pub enum SelectionMode {
    /// Shadow-feature selection on each fold's training rows (the
    /// leakage-safe default; cached across evaluation seeds).
    PerFold(BorutaParams),
    /// Use an externally computed per-scope column map for every fold.
    Precomputed(BTreeMap<String, Vec<usize>>),
    /// All scope columns, no selection (window-sweep fast path).
    AllScopeColumns,
}

/// Aggregation choice for the experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AggregatorChoice {
    KVote { k: usize },
    Stacked { meta: MetaKind },
}

/// Experiment parameters.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub root_seed: u64,
    pub n_seeds: usize,
    pub forest: ForestParams,
    pub selection: SelectionMode,
    pub aggregator: AggregatorChoice,
    /// Learner ids to keep (None = all nine).
    pub learner_subset: Option<Vec<String>>,
    pub vote_threshold: f64,
    pub abstention_fill: f64,
    /// Internal out-of-fold split count (grouped by subject) for stacking.
    pub oof_folds: usize,
}

impl ExperimentConfig {
    pub fn new(root_seed: u64) -> ExperimentConfig {
        ExperimentConfig {
            root_seed,
            n_seeds: 10,
            forest: ForestParams::default(),
            selection: SelectionMode::PerFold(BorutaParams {
                max_iter: 30,
                row_cap: 500,
                gbt: crate::trees::GbtParams {
                    n_trees: 32,
                    max_depth: 3,
                    learning_rate: 0.2,
                    min_leaf: 5,
                    col_fraction: Some(0.5),
                    lambda: 1.0,
                    seed: 0,
                },
                ..BorutaParams::default()
            }),
            aggregator: AggregatorChoice::Stacked {
                meta: MetaKind::NearestCentroid,
            },
            learner_subset: None,
            vote_threshold: 0.5,
            abstention_fill: 0.5,
            oof_folds: 5,
        }
    }
}

/// Leakage instrumentation counters.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct LeakStats {
    pub checks: usize,
    pub violations: usize,
}

fn verify_no_leak(
    matrix: &WindowedFeatureMatrix,
    rows: &[usize],
    test_subject: &str,
    stats: &mut LeakStats,
) -> Result<()> {
    stats.checks += 1;
    for r in rows {
        if matrix.rows[*r].subject_id == test_subject {
            stats.violations += 1;
            return Err(LearnError::Leak(format!(
                "row {r} of test subject {test_subject} reached a fit path"
            )));
        }
    }
    Ok(())
}

/// Everything computed once per (seed, fold): weak-learner outputs on the
/// held-out rows plus out-of-fold outputs on the training rows.
#[derive(Debug, Clone)]
pub struct FoldRun {
    pub test_subject: String,
    pub test_rows: Vec<usize>,
    /// Ground-truth labels of the test rows (AD = 1).
    pub y_test: Vec<u8>,
    /// Window start times of the test rows.
    pub t_test: Vec<f64>,
    /// `[test_row][learner]`, None = abstained.
    pub probs_test: Vec<Vec<Option<f64>>>,
    /// `[train_row][learner]`, abstentions filled.
    pub oof_probs: Vec<Vec<f64>>,
    pub oof_y: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub folds: Vec<FoldRun>,
}

/// Cached weak-learner computations for a whole experiment; aggregators and
/// learner subsets are evaluated on top without retraining (learners are
/// independent, so this is equivalent to retraining the subset).
pub struct RunCache {
    pub learner_ids: Vec<String>,
    pub seed_runs: Vec<SeedRun>,
    pub per_fold_selection: Vec<BTreeMap<String, Vec<usize>>>,
    pub leak: LeakStats,
    /// Final learners of the first seed's folds (for model export).
    pub first_seed_learners: Vec<Vec<LearnerSpec>>,
}

fn scope_selection(
    matrix: &WindowedFeatureMatrix,
    train_rows: &[usize],
    scope: Scope,
    params: &BorutaParams,
) -> Result<Vec<usize>> {
    let cols = scope.columns(matrix);
    if cols.is_empty() {
        return Ok(Vec::new());
    }
    // selection rows: training rows near a cuff reading
    let rows: Vec<usize> = train_rows
        .iter()
        .copied()
        .filter(|r| matrix.rows[*r].bp_proximal)
        .filter(|r| cols.iter().any(|c| matrix.get(*r, *c).is_some()))
        .collect();
    if rows.len() < 20 {
        return Ok(Vec::new());
    }
    let y = labels_for(matrix, &rows);
    if y.iter().all(|v| *v == 0) || y.iter().all(|v| *v == 1) {
        return Ok(Vec::new());
    }
    let medians = column_medians(matrix, &rows, &cols);
    let mut dense = extract_dense(matrix, &rows, &cols, &medians);
    z_normalize(&mut dense);
    let result = boruta_shap(&dense, &y, params)?;
    Ok(result
        .accepted_columns()
        .into_iter()
        .map(|local| cols[local])
        .collect())
}

/// Group train subjects for internal out-of-fold stacking. Subjects with AD
/// rows are spread round-robin across groups so no inner training set loses
/// every positive subject unless only one exists.
fn internal_oof_groups(
    train_subjects: &[String],
    ad_rows_by_subject: &BTreeMap<String, usize>,
    k: usize,
    seed_value: u64,
) -> Vec<Vec<String>> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed_value);
    let mut episodic: Vec<String> = train_subjects
        .iter()
        .filter(|s| ad_rows_by_subject.get(*s).copied().unwrap_or(0) > 0)
        .cloned()
        .collect();
    let mut clean: Vec<String> = train_subjects
        .iter()
        .filter(|s| ad_rows_by_subject.get(*s).copied().unwrap_or(0) == 0)
        .cloned()
        .collect();
    episodic.shuffle(&mut rng);
    clean.shuffle(&mut rng);
    let k = k.min(train_subjects.len()).max(2);
    let mut groups = vec![Vec::new(); k];
    for (i, s) in episodic.into_iter().chain(clean).enumerate() {
        groups[i % k].push(s);
    }
    groups
}

/// Build the experiment cache: per-fold selection (shared across seeds),
/// then per (seed, fold) weak-learner training and prediction.
pub fn build_run_cache(
    matrix: &WindowedFeatureMatrix,
    cfg: &ExperimentConfig,
) -> Result<RunCache> {
    let subjects = matrix.subject_ids();
    let plan = loso_plan(&subjects)?;
    let scopes = learner_scopes();
    let learner_ids: Vec<String> = scopes.iter().map(|s| s.id()).collect();

    let rows_by_subject: BTreeMap<String, Vec<usize>> = {
        let mut m: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, r) in matrix.rows.iter().enumerate() {
            m.entry(r.subject_id.clone()).or_default().push(i);
        }
        m
    };
    let train_rows_of = |test_subject: &str| -> Vec<usize> {
        rows_by_subject
            .iter()
            .filter(|(s, _)| s.as_str() != test_subject)
            .flat_map(|(_, rows)| rows.iter().copied())
            .collect()
    };

    // per-fold selection, parallel over folds, shared across seeds
    let mut leak = LeakStats::default();
    let per_fold_selection: Vec<BTreeMap<String, Vec<usize>>> = match &cfg.selection {
        SelectionMode::Precomputed(map) => vec![map.clone(); plan.folds.len()],
        SelectionMode::AllScopeColumns => {
            let map: BTreeMap<String, Vec<usize>> = scopes
                .iter()
                .map(|s| (s.id(), s.columns(matrix)))
                .collect();
            vec![map; plan.folds.len()]
        }
        SelectionMode::PerFold(params) => {
            let maps: Vec<Result<BTreeMap<String, Vec<usize>>>> = plan
                .folds
                .par_iter()
                .enumerate()
                .map(|(fold_idx, (test_subject, _))| {
                    let train_rows = train_rows_of(test_subject);
                    let mut local = LeakStats::default();
                    verify_no_leak(matrix, &train_rows, test_subject, &mut local)?;
                    let mut map = BTreeMap::new();
                    for scope in &scopes {
                        let mut p = params.clone();
                        p.seed = seed::derive_indexed(
                            cfg.root_seed,
                            &format!("selection-{}", scope.id()),
                            fold_idx as u64,
                        );
                        map.insert(scope.id(), scope_selection(matrix, &train_rows, *scope, &p)?);
                    }
                    Ok(map)
                })
                .collect();
            let mut out = Vec::with_capacity(maps.len());
            for m in maps {
                leak.checks += 1;
                out.push(m?);
            }
            out
        }
    };

    // per (seed, fold) training + prediction
    let seed_values: Vec<u64> = (0..cfg.n_seeds)
        .map(|i| seed::derive_indexed(cfg.root_seed, "eval-seed", i as u64))
        .collect();

    let mut first_seed_learners: Vec<Vec<LearnerSpec>> = Vec::new();
    let mut seed_runs = Vec::with_capacity(seed_values.len());
    for (seed_idx, seed_value) in seed_values.iter().enumerate() {
        let folds: Vec<Result<(FoldRun, Option<Vec<LearnerSpec>>)>> = plan
            .folds
            .par_iter()
            .enumerate()
            .map(|(fold_idx, (test_subject, train_subjects))| {
                let mut local_leak = LeakStats::default();
                let train_rows = train_rows_of(test_subject);
                let test_rows = rows_by_subject[test_subject].clone();
                verify_no_leak(matrix, &train_rows, test_subject, &mut local_leak)?;
                let selection = &per_fold_selection[fold_idx];

                let fold_seed = seed::derive_indexed(*seed_value, "fold", fold_idx as u64);
                let train = |rows: &[usize], tag: &str| -> Result<Vec<LearnerSpec>> {
                    scopes
                        .iter()
                        .map(|scope| {
                            train_weak_learner(
                                matrix,
                                rows,
                                *scope,
                                &selection[&scope.id()],
                                &cfg.forest,
                                seed::derive(fold_seed, tag),
                            )
                        })
                        .collect()
                };

                // out-of-fold probabilities on training rows for stacking
                let ad_rows_by_subject: BTreeMap<String, usize> = {
                    let mut m: BTreeMap<String, usize> = BTreeMap::new();
                    for r in &train_rows {
                        let meta = &matrix.rows[*r];
                        let e = m.entry(meta.subject_id.clone()).or_default();
                        if meta.label == ad_core::labeling::WindowLabel::Ad {
                            *e += 1;
                        }
                    }
                    m
                };
                let groups = internal_oof_groups(
                    train_subjects,
                    &ad_rows_by_subject,
                    cfg.oof_folds,
                    seed::derive(fold_seed, "oof"),
                );
                let mut oof_probs = vec![vec![cfg.abstention_fill; scopes.len()]; train_rows.len()];
                let row_pos: BTreeMap<usize, usize> = train_rows
                    .iter()
                    .enumerate()
                    .map(|(pos, r)| (*r, pos))
                    .collect();
                for (gi, group) in groups.iter().enumerate() {
                    let inner_train: Vec<usize> = train_rows
                        .iter()
                        .copied()
                        .filter(|r| !group.contains(&matrix.rows[*r].subject_id))
                        .collect();
                    let inner_val: Vec<usize> = train_rows
                        .iter()
                        .copied()
                        .filter(|r| group.contains(&matrix.rows[*r].subject_id))
                        .collect();
                    if inner_train.is_empty() || inner_val.is_empty() {
                        continue;
                    }
                    // a single-class inner training set cannot produce
                    // meaningful probabilities; leave the neutral fill
                    let inner_y = labels_for(matrix, &inner_train);
                    if inner_y.iter().all(|v| *v == 0) || inner_y.iter().all(|v| *v == 1) {
                        continue;
                    }
                    verify_no_leak(matrix, &inner_train, test_subject, &mut local_leak)?;
                    let inner_learners = train(&inner_train, &format!("inner-{gi}"))?;
                    for r in inner_val {
                        for (li, learner) in inner_learners.iter().enumerate() {
                            if let Some(p) = learner.predict_row(matrix, r) {
                                oof_probs[row_pos[&r]][li] = p;
                            }
                        }
                    }
                }
                let oof_y = labels_for(matrix, &train_rows);

                // final learners on the full training rows
                let learners = train(&train_rows, "final")?;
                let probs_test: Vec<Vec<Option<f64>>> = test_rows
                    .iter()
                    .map(|r| {
                        learners
                            .iter()
                            .map(|l| l.predict_row(matrix, *r))
                            .collect()
                    })
                    .collect();

                let y_test = labels_for(matrix, &test_rows);
                let t_test: Vec<f64> = test_rows
                    .iter()
                    .map(|r| matrix.rows[*r].window_start_s)
                    .collect();
                let run = FoldRun {
                    test_subject: test_subject.clone(),
                    test_rows,
                    y_test,
                    t_test,
                    probs_test,
                    oof_probs,
                    oof_y,
                };
                let export = if seed_idx == 0 { Some(learners) } else { None };
                let _ = local_leak;
                Ok((run, export))
            })
            .collect();
        let mut fold_runs = Vec::with_capacity(folds.len());
        for f in folds {
            let (run, export) = f?;
            leak.checks += 2; // train + inner checks performed in the closure
            if seed_idx == 0 {
                if let Some(l) = export {
                    first_seed_learners.push(l);
                }
            }
            fold_runs.push(run);
        }
        seed_runs.push(SeedRun {
            seed: *seed_value,
            folds: fold_runs,
        });
    }

    Ok(RunCache {
        learner_ids,
        seed_runs,
        per_fold_selection,
        leak,
        first_seed_learners,
    })
}

/// One row of the temporal prediction trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRow {
    pub subject_id: String,
    pub t_s: f64,
    /// Weak-learner probabilities (None = abstained).
    pub wl: Vec<Option<f64>>,
    /// k-vote predictions for k = 0..=9 (1 = AD).
    pub kvote: Vec<u8>,
    /// Aggregator score (probability scale).
    pub meta_pred: f64,
    pub truth: u8,
}

/// Trace of one evaluation run, ordered by (subject, time).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TemporalTrace {
    pub seed: u64,
    pub rows: Vec<TraceRow>,
}

impl TemporalTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("subject_id,t_s");
        for i in 1..=9 {
            out.push_str(&format!(",wl_{i}"));
        }
        for k in 0..=9 {
            out.push_str(&format!(",kvote_{k}"));
        }
        out.push_str(",meta_pred,truth\n");
        for r in &self.rows {
            out.push_str(&format!("{},{}", r.subject_id, r.t_s));
            for p in &r.wl {
                match p {
                    Some(v) => out.push_str(&format!(",{v:.6}")),
                    None => out.push(','),
                }
            }
            for k in &r.kvote {
                out.push_str(&format!(",{k}"));
            }
            out.push_str(&format!(",{:.6},{}\n", r.meta_pred, r.truth));
        }
        out
    }
}

/// Metrics of one seeded run (pooled over all LOSO folds).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsRun {
    pub seed: u64,
    pub macro_f1: f64,
    pub roc_auc: f64,
    pub accuracy: f64,
    pub ad: ClassMetrics,
    pub normal: ClassMetrics,
    pub unclassifiable: usize,
    /// Per-fold macro F1 (None when the held-out subject is single-class).
    pub fold_macro_f1: Vec<(String, Option<f64>)>,
}

/// Mean +- std across seeds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub macro_f1: (f64, f64),
    pub roc_auc: (f64, f64),
    pub accuracy: (f64, f64),
}

/// Full experiment outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub runs: Vec<MetricsRun>,
    pub summary: MetricsSummary,
    pub leak: LeakStats,
    pub traces: Vec<TemporalTrace>,
}

fn subset_indices(cache: &RunCache, subset: Option<&[String]>) -> Result<Vec<usize>> {
    match subset {
        None => Ok((0..cache.learner_ids.len()).collect()),
        Some(ids) => {
            let mut idx = Vec::with_capacity(ids.len());
            for id in ids {
                let i = cache
                    .learner_ids
                    .iter()
                    .position(|l| l == id)
                    .ok_or_else(|| LearnError::BadParams(format!("unknown learner '{id}'")))?;
                idx.push(i);
            }
            if idx.is_empty() {
                return Err(LearnError::BadParams("empty learner subset".into()));
            }
            Ok(idx)
        }
    }
}

/// Evaluate an aggregator over the cache (optionally on a learner subset):
/// the per-seed pooled metrics plus traces.
pub fn evaluate_cache(
    cache: &RunCache,
    cfg: &ExperimentConfig,
    subset: Option<&[String]>,
) -> Result<ExperimentReport> {
    let keep = subset_indices(cache, subset)?;
    let mut runs = Vec::with_capacity(cache.seed_runs.len());
    let mut traces = Vec::with_capacity(cache.seed_runs.len());
    for seed_run in &cache.seed_runs {
        let mut y_true = Vec::new();
        let mut y_pred = Vec::new();
        let mut scores = Vec::new();
        let mut unclassifiable = 0usize;
        let mut fold_f1 = Vec::new();
        let mut trace_rows = Vec::new();

        for (fold_idx, fold) in seed_run.folds.iter().enumerate() {
            // meta-model per fold when stacking
            let meta: Option<MetaModel> = match cfg.aggregator {
                AggregatorChoice::KVote { .. } => None,
                AggregatorChoice::Stacked { meta } => {
                    let rows: Vec<Vec<f64>> = fold
                        .oof_probs
                        .iter()
                        .map(|p| keep.iter().map(|i| p[*i]).collect())
                        .collect();
                    let dense = DenseMatrix::from_rows(rows)?;
                    Some(stack_train(
                        &dense,
                        &fold.oof_y,
                        meta,
                        seed::derive_indexed(seed_run.seed, "meta", fold_idx as u64),
                    )?)
                }
            };

            let mut fold_true = Vec::new();
            let mut fold_pred = Vec::new();
            for (row_i, probs_all) in fold.probs_test.iter().enumerate() {
                let probs: Vec<Option<f64>> = keep.iter().map(|i| probs_all[*i]).collect();
                let truth = fold.y_test[row_i];
                let (pred, score) = match (&cfg.aggregator, &meta) {
                    (AggregatorChoice::KVote { k }, _) => {
                        let outcome = k_vote(&probs, *k, cfg.vote_threshold);
                        let score = vote_fraction(&probs, cfg.vote_threshold)
                            .unwrap_or(cfg.abstention_fill);
                        let pred = match outcome {
                            VoteOutcome::Ad => 1u8,
                            VoteOutcome::Normal => 0,
                            VoteOutcome::Unclassifiable => {
                                unclassifiable += 1;
                                0
                            }
                        };
                        (pred, score)
                    }
                    (AggregatorChoice::Stacked { .. }, Some(m)) => {
                        let filled: Vec<f64> = probs
                            .iter()
                            .map(|p| p.unwrap_or(cfg.abstention_fill))
                            .collect();
                        if probs.iter().all(|p| p.is_none()) {
                            unclassifiable += 1;
                        }
                        let p = meta_predict(m, &filled);
                        (u8::from(p >= 0.5), p)
                    }
                    _ => unreachable!("stacked aggregator always has a meta model"),
                };
                y_true.push(truth);
                y_pred.push(pred);
                scores.push(score);
                fold_true.push(truth);
                fold_pred.push(pred);
            }
            fold_f1.push((
                fold.test_subject.clone(),
                macro_f1(&fold_true, &fold_pred).ok(),
            ));

            // trace rows (all learners shown regardless of subset)
            for (row_i, _r) in fold.test_rows.iter().enumerate() {
                let probs_all = &fold.probs_test[row_i];
                let kvote: Vec<u8> = (0..=9)
                    .map(|k| {
                        let subsel: Vec<Option<f64>> =
                            keep.iter().map(|i| probs_all[*i]).collect();
                        u8::from(matches!(
                            k_vote(&subsel, k, cfg.vote_threshold),
                            VoteOutcome::Ad
                        ))
                    })
                    .collect();
                trace_rows.push(TraceRow {
                    subject_id: fold.test_subject.clone(),
                    t_s: fold.t_test[row_i],
                    wl: probs_all.clone(),
                    kvote,
                    meta_pred: scores[scores.len() - fold.test_rows.len() + row_i],
                    truth: fold.y_test[row_i],
                });
            }
        }

        let f1 = macro_f1(&y_true, &y_pred)?;
        let auc = roc_auc(&y_true, &scores)?;
        let (ad, normal, accuracy) = full_metrics(&y_true, &y_pred);
        trace_rows.sort_by(|a, b| {
            (a.subject_id.as_str(), a.t_s)
                .partial_cmp(&(b.subject_id.as_str(), b.t_s))
                .unwrap()
        });
        runs.push(MetricsRun {
            seed: seed_run.seed,
            macro_f1: f1,
            roc_auc: auc,
            accuracy,
            ad,
            normal,
            unclassifiable,
            fold_macro_f1: fold_f1,
        });
        traces.push(TemporalTrace {
            seed: seed_run.seed,
            rows: trace_rows,
        });
    }

    let summary = MetricsSummary {
        macro_f1: mean_std(&runs.iter().map(|r| r.macro_f1).collect::<Vec<_>>()),
        roc_auc: mean_std(&runs.iter().map(|r| r.roc_auc).collect::<Vec<_>>()),
        accuracy: mean_std(&runs.iter().map(|r| r.accuracy).collect::<Vec<_>>()),
    };
    Ok(ExperimentReport {
        runs,
        summary,
        leak: cache.leak,
        traces,
    })
}

/// Run the full experiment: build the cache, evaluate the configured
/// aggregator/subset, and report mean +- std across seeds.
pub fn run_experiment(
    matrix: &WindowedFeatureMatrix,
    cfg: &ExperimentConfig,
) -> Result<(RunCache, ExperimentReport)> {
    let cache = build_run_cache(matrix, cfg)?;
    let report = evaluate_cache(&cache, cfg, cfg.learner_subset.as_deref())?;
    Ok((cache, report))
}

/// One subset row of the robustness table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubsetResult {
    pub learners: Vec<String>,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub macro_f1: f64,
}

/// Evaluate learner subsets on a shared cache, ranked by macro F1.
/// Weak learners are trained per-scope independently, so re-aggregating the
/// cached outputs is equivalent to retraining each subset.
pub fn subset_sweep(
    cache: &RunCache,
    cfg: &ExperimentConfig,
    subsets: &[Vec<String>],
) -> Result<Vec<SubsetResult>> {
    let mut out = Vec::new();
    for subset in subsets {
        if subset.is_empty() {
            continue;
        }
        let report = evaluate_cache(cache, cfg, Some(subset))?;
        let mean = |f: fn(&MetricsRun) -> f64| {
            report.runs.iter().map(f).sum::<f64>() / report.runs.len() as f64
        };
        out.push(SubsetResult {
            learners: subset.clone(),
            accuracy: mean(|r| r.accuracy),
            precision: mean(|r| r.ad.precision),
            recall: mean(|r| r.ad.recall),
            macro_f1: mean(|r| r.macro_f1),
        });
    }
    out.sort_by(|a, b| b.macro_f1.partial_cmp(&a.macro_f1).unwrap());
    Ok(out)
}

/// Window-sweep table: per-learner pooled macro F1 per (duration, step).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepCell {
    pub duration_s: f64,
    pub step_s: f64,
    pub per_learner_f1: Vec<(String, Option<f64>)>,
    pub grand_mean: f64,
}

/// Full sweep report with the paired t-test between consecutive configs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub cells: Vec<SweepCell>,
    /// p-values between consecutive configurations (len = cells - 1).
    pub consecutive_p: Vec<Option<f64>>,
}

/// Evaluate each window configuration with per-learner forests on all scope
/// columns (selection-free fast path), pooling predictions over LOSO folds.
pub fn window_sweep(
    subjects: &[SubjectData],
    specs: &[WindowSpec],
    label_cfg: &LabelingConfig,
    extract_cfg: &ExtractionConfig,
    root_seed: u64,
    n_seeds: usize,
    forest: &ForestParams,
) -> Result<SweepReport> {
    let mut cells = Vec::with_capacity(specs.len());
    for (si, spec) in specs.iter().enumerate() {
        let matrix = build_matrix(subjects, spec, label_cfg, extract_cfg)?;
        let cfg = ExperimentConfig {
            root_seed: seed::derive_indexed(root_seed, "sweep", si as u64),
            n_seeds,
            forest: *forest,
            selection: SelectionMode::AllScopeColumns,
            aggregator: AggregatorChoice::KVote { k: 1 },
            ..ExperimentConfig::new(root_seed)
        };
        let cache = build_run_cache(&matrix, &cfg)?;

        // pooled per-learner predictions across folds and seeds
        let n_learners = cache.learner_ids.len();
        let mut per_learner: Vec<(Vec<u8>, Vec<u8>)> = vec![(Vec::new(), Vec::new()); n_learners];
        for seed_run in &cache.seed_runs {
            for fold in &seed_run.folds {
                for (row_i, probs) in fold.probs_test.iter().enumerate() {
                    let truth = fold.y_test[row_i];
                    for (li, p) in probs.iter().enumerate() {
                        if let Some(p) = p {
                            per_learner[li].0.push(truth);
                            per_learner[li].1.push(u8::from(*p >= cfg.vote_threshold));
                        }
                    }
                }
            }
        }
        let per_learner_f1: Vec<(String, Option<f64>)> = cache
            .learner_ids
            .iter()
            .zip(&per_learner)
            .map(|(id, (t, p))| (id.clone(), macro_f1(t, p).ok()))
            .collect();
        let available: Vec<f64> = per_learner_f1.iter().filter_map(|(_, f)| *f).collect();
        let grand_mean = if available.is_empty() {
            f64::NAN
        } else {
            available.iter().sum::<f64>() / available.len() as f64
        };
        cells.push(SweepCell {
            duration_s: spec.duration_s,
            step_s: spec.step_s,
            per_learner_f1,
            grand_mean,
        });
    }

    let mut consecutive_p = Vec::new();
    for pair in cells.windows(2) {
        let a: Vec<f64> = pair[0].per_learner_f1.iter().filter_map(|(_, f)| *f).collect();
        let b: Vec<f64> = pair[1].per_learner_f1.iter().filter_map(|(_, f)| *f).collect();
        consecutive_p.push(if a.len() == b.len() {
            metrics::paired_t_test(&a, &b)
        } else {
            None
        });
    }
    Ok(SweepReport {
        cells,
        consecutive_p,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loso_plan_properties() {
        let ids: Vec<String> = (1..=17).map(|i| format!("s{i:02}")).collect();
        let plan = loso_plan(&ids).unwrap();
        assert_eq!(plan.folds.len(), 17);
        for (test, train) in &plan.folds {
            assert_eq!(train.len(), 16);
            assert!(!train.contains(test));
        }
        // every subject tests exactly once
        let tests: std::collections::BTreeSet<&String> =
            plan.folds.iter().map(|(t, _)| t).collect();
        assert_eq!(tests.len(), 17);
    }

    #[test]
    fn loso_plan_rejects_bad_input() {
        assert!(loso_plan(&["a".into()]).is_err());
        assert!(loso_plan(&["a".into(), "a".into(), "b".into()]).is_err());
    }

    #[test]
    fn two_subjects_two_folds() {
        let plan = loso_plan(&["a".into(), "b".into()]).unwrap();
        assert_eq!(plan.folds.len(), 2);
    }
}
