//! The 9-weak-learner ensemble: robust scaling, class rebalancing by
//! undersampling, per-scope forests, k-threshold voting, and stacked
//! meta-learners over the weak-learner probability vector.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use ad_core::features::WindowedFeatureMatrix;
use ad_core::seed;
use ad_core::series::{Device, Modality};

use crate::data::{column_medians, extract_dense, labels_for, DenseMatrix};
use crate::trees::{fit_forest, ForestParams, TreeEnsembleModel};
use crate::{LearnError, Result};

/// What one weak learner sees: one modality or one device.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scope {
    Modality(Modality),
    Device(Device),
}

impl Scope {
    pub fn id(&self) -> String {
        match self {
            Scope::Modality(m) => format!("mod:{m}"),
            Scope::Device(d) => format!("dev:{d}"),
        }
    }

    pub fn columns(&self, matrix: &WindowedFeatureMatrix) -> Vec<usize> {
        match self {
            Scope::Modality(m) => matrix.registry.columns_for_modality(*m),
            Scope::Device(d) => matrix.registry.columns_for_device(*d),
        }
    }
}

/// The full configuration: 6 modality learners + 3 device learners.
pub fn learner_scopes() -> Vec<Scope> {
    vec![
        Scope::Modality(Modality::Ecg),
        Scope::Modality(Modality::Ppg),
        Scope::Modality(Modality::BioZ),
        Scope::Modality(Modality::Temp),
        Scope::Modality(Modality::Hr),
        Scope::Modality(Modality::Rr),
        Scope::Device(Device::EcgPatch),
        Scope::Device(Device::Wristband),
        Scope::Device(Device::TempPatch),
    ]
}

/// Per-column (median, IQR) scaling; zero-IQR columns pass through centered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustScaler {
    pub medians: Vec<f64>,
    pub iqrs: Vec<f64>,
}

impl RobustScaler {
    /// Fit on training rows only.
    pub fn fit(x: &DenseMatrix) -> RobustScaler {
        use ad_core::features::stats::percentile;
        let mut medians = Vec::with_capacity(x.n_cols());
        let mut iqrs = Vec::with_capacity(x.n_cols());
        for c in 0..x.n_cols() {
            let col = x.column(c);
            medians.push(percentile(&col, 50.0).unwrap_or(0.0));
            let iqr = percentile(&col, 75.0).unwrap_or(0.0) - percentile(&col, 25.0).unwrap_or(0.0);
            iqrs.push(iqr);
        }
        RobustScaler { medians, iqrs }
    }

    pub fn apply(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            *v -= self.medians[i];
            if self.iqrs[i] > 0.0 {
                *v /= self.iqrs[i];
            }
        }
    }

    pub fn transform(&self, x: &DenseMatrix) -> DenseMatrix {
        let mut out = x.clone();
        for r in 0..out.n_rows() {
            for c in 0..out.n_cols() {
                let mut v = out.get(r, c) - self.medians[c];
                if self.iqrs[c] > 0.0 {
                    v /= self.iqrs[c];
                }
                out.set(r, c, v);
            }
        }
        out
    }
}

/// Balance classes 1:1 by sampling the majority class down to the minority
/// count (without replacement, seed-stable). Returns selected indices into
/// `labels`, sorted. Errors when only one class is present.
pub fn undersample(labels: &[u8], seed: u64) -> Result<Vec<usize>> {
    let pos: Vec<usize> = (0..labels.len()).filter(|i| labels[*i] == 1).collect();
    let neg: Vec<usize> = (0..labels.len()).filter(|i| labels[*i] == 0).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(LearnError::SingleClass(
            "undersampling needs both classes".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (minority, mut majority) = if pos.len() <= neg.len() {
        (pos, neg)
    } else {
        (neg, pos)
    };
    majority.shuffle(&mut rng);
    majority.truncate(minority.len());
    let mut selected = minority;
    selected.extend(majority);
    selected.sort_unstable();
    Ok(selected)
}

/// One trained weak learner.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LearnerSpec {
    pub id: String,
    pub scope: Scope,
    /// Global column indices (BorutaSHAP-selected within the scope).
    pub columns: Vec<usize>,
    /// Training-median imputation values, parallel to `columns`.
    pub imputer: Vec<f64>,
    pub scaler: RobustScaler,
    pub model: TreeEnsembleModel,
    /// True when the learner can never predict (no usable features).
    pub abstaining: bool,
}

impl LearnerSpec {
    fn permanently_abstaining(id: String, scope: Scope) -> LearnerSpec {
        LearnerSpec {
            id,
            scope,
            columns: Vec::new(),
            imputer: Vec::new(),
            scaler: RobustScaler {
                medians: Vec::new(),
                iqrs: Vec::new(),
            },
            model: TreeEnsembleModel {
                schema_version: 1,
                trees: Vec::new(),
                kind: crate::trees::EnsembleKind::ForestAverage,
                base_score: 0.5,
                feature_count: 0,
                single_class: true,
            },
            abstaining: true,
        }
    }

    /// Probability for one matrix row; None = abstain (no usable features or
    /// every scope cell missing).
    pub fn predict_row(&self, matrix: &WindowedFeatureMatrix, row: usize) -> Option<f64> {
        if self.abstaining || self.columns.is_empty() {
            return None;
        }
        let mut any = false;
        let mut x = Vec::with_capacity(self.columns.len());
        for (k, c) in self.columns.iter().enumerate() {
            match matrix.get(row, *c) {
                Some(v) => {
                    any = true;
                    x.push(v);
                }
                None => x.push(self.imputer[k]),
            }
        }
        if !any {
            return None;
        }
        self.scaler.apply(&mut x);
        self.model.predict_proba(&x).ok()
    }
}

/// Train one scope's learner: filter columns, median-impute, robust-scale,
/// undersample, and fit the forest. Scopes with no usable columns produce a
/// permanently abstaining learner.
pub fn train_weak_learner(
    matrix: &WindowedFeatureMatrix,
    train_rows: &[usize],
    scope: Scope,
    selected_columns: &[usize],
    forest: &ForestParams,
    seed_value: u64,
) -> Result<LearnerSpec> {
    let id = scope.id();
    if selected_columns.is_empty() {
        return Ok(LearnerSpec::permanently_abstaining(id, scope));
    }
    // rows with at least one present scope cell
    let rows: Vec<usize> = train_rows
        .iter()
        .copied()
        .filter(|r| selected_columns.iter().any(|c| matrix.get(*r, *c).is_some()))
        .collect();
    if rows.len() < 8 {
        return Ok(LearnerSpec::permanently_abstaining(id, scope));
    }
    let imputer = column_medians(matrix, &rows, selected_columns);
    let labels = labels_for(matrix, &rows);

    let balanced_local: Vec<usize> = match undersample(&labels, seed::derive(seed_value, &id)) {
        Ok(sel) => sel,
        // single-class training data: constant model, flagged by fit_forest
        Err(_) => (0..rows.len()).collect(),
    };
    let balanced_rows: Vec<usize> = balanced_local.iter().map(|i| rows[*i]).collect();
    let dense = extract_dense(matrix, &balanced_rows, selected_columns, &imputer);
    let scaler = RobustScaler::fit(&dense);
    let scaled = scaler.transform(&dense);
    let y: Vec<u8> = balanced_local.iter().map(|i| labels[*i]).collect();
    let mut params = *forest;
    params.seed = seed::derive(seed_value, &format!("forest-{id}"));
    let model = fit_forest(&scaled, &y, &params)?;
    Ok(LearnerSpec {
        id,
        scope,
        columns: selected_columns.to_vec(),
        imputer,
        scaler,
        model,
        abstaining: false,
    })
}

/// k-threshold vote outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VoteOutcome {
    Ad,
    Normal,
    /// Every learner abstained.
    Unclassifiable,
}

/// AD iff at least `k` non-abstaining learners emit probability >= threshold.
pub fn k_vote(probs: &[Option<f64>], k: usize, threshold: f64) -> VoteOutcome {
    let mut voters = 0usize;
    let mut ad_votes = 0usize;
    for p in probs.iter().flatten() {
        voters += 1;
        if *p >= threshold {
            ad_votes += 1;
        }
    }
    if voters == 0 {
        return VoteOutcome::Unclassifiable;
    }
    if ad_votes >= k {
        VoteOutcome::Ad
    } else {
        VoteOutcome::Normal
    }
}

/// Fraction of non-abstaining learners voting AD (continuous k-vote score).
pub fn vote_fraction(probs: &[Option<f64>], threshold: f64) -> Option<f64> {
    let mut voters = 0usize;
    let mut ad = 0usize;
    for p in probs.iter().flatten() {
        voters += 1;
        if *p >= threshold {
            ad += 1;
        }
    }
    if voters == 0 {
        None
    } else {
        Some(ad as f64 / voters as f64)
    }
}

/// Stacked meta-learner kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetaKind {
    NearestCentroid,
    Logistic,
    Forest,
    Dummy,
}

/// A fitted meta-model over the weak-learner probability vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetaModel {
    NearestCentroid {
        centroid_normal: Vec<f64>,
        centroid_ad: Vec<f64>,
    },
    Logistic {
        weights: Vec<f64>,
        bias: f64,
    },
    Forest {
        model: TreeEnsembleModel,
    },
    Dummy {
        majority_ad: bool,
    },
}

/// Train a meta-model on (out-of-fold) weak-learner probabilities.
/// Abstentions must already be filled with 0.5. Single-class targets fall
/// back to the majority (Dummy) model.
pub fn stack_train(
    probs: &DenseMatrix,
    y: &[u8],
    kind: MetaKind,
    seed_value: u64,
) -> Result<MetaModel> {
    if probs.n_rows() != y.len() {
        return Err(LearnError::Dimension("meta-training rows vs labels".into()));
    }
    let n_pos = y.iter().filter(|v| **v == 1).count();
    if n_pos == 0 || n_pos == y.len() {
        return Ok(MetaModel::Dummy {
            majority_ad: n_pos * 2 > y.len(),
        });
    }
    match kind {
        MetaKind::Dummy => Ok(MetaModel::Dummy {
            majority_ad: n_pos * 2 > y.len(),
        }),
        MetaKind::NearestCentroid => {
            let d = probs.n_cols();
            let mut c0 = vec![0.0; d];
            let mut c1 = vec![0.0; d];
            let mut n0 = 0.0;
            let mut n1 = 0.0;
            for r in 0..probs.n_rows() {
                let target = if y[r] == 1 {
                    (&mut c1, &mut n1)
                } else {
                    (&mut c0, &mut n0)
                };
                for (acc, v) in target.0.iter_mut().zip(probs.row(r)) {
                    *acc += v;
                }
                *target.1 += 1.0;
            }
            for v in c0.iter_mut() {
                *v /= n0;
            }
            for v in c1.iter_mut() {
                *v /= n1;
            }
            Ok(MetaModel::NearestCentroid {
                centroid_normal: c0,
                centroid_ad: c1,
            })
        }
        MetaKind::Logistic => {
            // batch gradient descent with L2, deterministic zero init
            let d = probs.n_cols();
            let mut w = vec![0.0; d];
            let mut b = 0.0;
            let lr = 0.5;
            let l2 = 1e-3;
            let n = probs.n_rows() as f64;
            for _ in 0..400 {
                let mut gw = vec![0.0; d];
                let mut gb = 0.0;
                for r in 0..probs.n_rows() {
                    let z: f64 =
                        w.iter().zip(probs.row(r)).map(|(wi, xi)| wi * xi).sum::<f64>() + b;
                    let p = crate::trees::sigmoid(z);
                    let err = p - y[r] as f64;
                    for (g, xi) in gw.iter_mut().zip(probs.row(r)) {
                        *g += err * xi;
                    }
                    gb += err;
                }
                for (wi, g) in w.iter_mut().zip(&gw) {
                    *wi -= lr * (g / n + l2 * *wi);
                }
                b -= lr * gb / n;
            }
            Ok(MetaModel::Logistic { weights: w, bias: b })
        }
        MetaKind::Forest => {
            let params = ForestParams {
                n_trees: 50,
                max_depth: 4,
                min_leaf: 5,
                col_fraction: None,
                seed: seed_value,
            };
            let model = fit_forest(probs, y, &params)?;
            Ok(MetaModel::Forest { model })
        }
    }
}

/// Meta probability of AD for one weak-learner probability vector
/// (abstentions filled with 0.5 by the caller).
pub fn meta_predict(meta: &MetaModel, probs: &[f64]) -> f64 {
    match meta {
        MetaModel::NearestCentroid {
            centroid_normal,
            centroid_ad,
        } => {
            let d0: f64 = centroid_normal
                .iter()
                .zip(probs)
                .map(|(c, p)| (c - p) * (c - p))
                .sum::<f64>()
                .sqrt();
            let d1: f64 = centroid_ad
                .iter()
                .zip(probs)
                .map(|(c, p)| (c - p) * (c - p))
                .sum::<f64>()
                .sqrt();
            // class-posterior proxy: softmax over negative distances
            let e0 = (-d0).exp();
            let e1 = (-d1).exp();
            e1 / (e0 + e1)
        }
        MetaModel::Logistic { weights, bias } => {
            let z: f64 = weights.iter().zip(probs).map(|(w, p)| w * p).sum::<f64>() + bias;
            crate::trees::sigmoid(z)
        }
        MetaModel::Forest { model } => model.predict_proba(probs).unwrap_or(0.5),
        MetaModel::Dummy { majority_ad } => {
            if *majority_ad {
                1.0
            } else {
                0.0
            }
        }
    }
}

/// Serialized ensemble bundle: the 9 learners plus the aggregation strategy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub schema_version: u32,
    pub learners: Vec<LearnerSpec>,
    pub aggregator: AggregatorSpec,
    /// Value substituted for abstentions in stacked input.
    pub abstention_fill: f64,
    /// Probability threshold for a learner's AD vote.
    pub vote_threshold: f64,
}

/// Aggregation strategy.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AggregatorSpec {
    KVote { k: usize },
    Stacked { meta: MetaModel, meta_kind: MetaKind },
}
