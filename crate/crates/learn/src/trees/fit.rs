//! Forest bagging and logistic gradient boosting on top of the CART builder.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use ad_core::seed;

use crate::data::DenseMatrix;
use crate::trees::cart::{CartBuilder, CartParams, ColSample, RowStat};
use crate::trees::{sigmoid, EnsembleKind, Tree, TreeEnsembleModel};
use crate::{LearnError, Result};

/// Random-forest hyperparameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Fraction of columns per split; None = sqrt(d).
    pub col_fraction: Option<f64>,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 200,
            max_depth: 8,
            min_leaf: 5,
            col_fraction: None,
            seed: 0,
        }
    }
}

/// Gradient-boosting hyperparameters (logistic loss).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbtParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_leaf: usize,
    pub col_fraction: Option<f64>,
    pub lambda: f64,
    pub seed: u64,
}

impl Default for GbtParams {
    fn default() -> Self {
        GbtParams {
            n_trees: 100,
            max_depth: 4,
            learning_rate: 0.1,
            min_leaf: 5,
            col_fraction: None,
            lambda: 1.0,
            seed: 0,
        }
    }
}

fn check_xy(x: &DenseMatrix, y: &[u8]) -> Result<()> {
    if x.n_rows() != y.len() {
        return Err(LearnError::Dimension(format!(
            "{} rows vs {} labels",
            x.n_rows(),
            y.len()
        )));
    }
    if x.n_rows() == 0 {
        return Err(LearnError::BadData("empty training set".into()));
    }
    Ok(())
}

fn col_sample(frac: Option<f64>) -> ColSample {
    match frac {
        None => ColSample::Sqrt,
        Some(f) if f >= 1.0 => ColSample::All,
        Some(f) => ColSample::Fraction(f),
    }
}

/// Bootstrap-bagged CART forest; prediction is the mean per-tree leaf class
/// fraction. Single-class targets yield a constant model (flagged).
pub fn fit_forest(x: &DenseMatrix, y: &[u8], params: &ForestParams) -> Result<TreeEnsembleModel> {
    check_xy(x, y)?;
    let n = x.n_rows();
    let positive = y.iter().filter(|v| **v == 1).count();
    let single_class = positive == 0 || positive == n;
    if single_class {
        let value = positive as f64 / n as f64;
        return Ok(TreeEnsembleModel {
            schema_version: 1,
            trees: vec![Tree::leaf(value, n as f64)],
            kind: EnsembleKind::ForestAverage,
            base_score: value,
            feature_count: x.n_cols(),
            single_class: true,
        });
    }

    let cart = CartParams {
        max_depth: params.max_depth,
        min_leaf: params.min_leaf,
        col_sample: col_sample(params.col_fraction),
        cols_per_split: true,
        lambda: 0.0,
    };
    let trees: Vec<Tree> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng =
                ChaCha8Rng::seed_from_u64(seed::derive_indexed(params.seed, "forest-tree", t as u64));
            // bootstrap multiset as per-row weights
            let mut weight = vec![0.0f64; n];
            for _ in 0..n {
                weight[rng.gen_range(0..n)] += 1.0;
            }
            let mut rows: Vec<RowStat> = (0..n)
                .filter(|r| weight[*r] > 0.0)
                .map(|r| RowStat {
                    row: r,
                    weight: weight[r],
                    grad: y[r] as f64,
                    hess: 1.0,
                })
                .collect();
            CartBuilder::new(x, cart, &mut rng).grow(&mut rows, &mut rng)
        })
        .collect();

    Ok(TreeEnsembleModel {
        schema_version: 1,
        trees,
        kind: EnsembleKind::ForestAverage,
        base_score: positive as f64 / n as f64,
        feature_count: x.n_cols(),
        single_class: false,
    })
}

/// Logistic-loss gradient boosting: raw margin = base_score + sum of trees,
/// each tree a Newton step on the current residuals.
pub fn fit_gbt(x: &DenseMatrix, y: &[u8], params: &GbtParams) -> Result<TreeEnsembleModel> {
    check_xy(x, y)?;
    let n = x.n_rows();
    let positive = y.iter().filter(|v| **v == 1).count();
    let p0 = (positive as f64 / n as f64).clamp(1e-6, 1.0 - 1e-6);
    let base_score = (p0 / (1.0 - p0)).ln();
    let single_class = positive == 0 || positive == n;

    let mut model = TreeEnsembleModel {
        schema_version: 1,
        trees: Vec::with_capacity(params.n_trees),
        kind: EnsembleKind::BoostedSum,
        base_score,
        feature_count: x.n_cols(),
        single_class,
    };
    if single_class || params.n_trees == 0 || params.learning_rate == 0.0 {
        return Ok(model);
    }

    let cart = CartParams {
        max_depth: params.max_depth,
        min_leaf: params.min_leaf,
        col_sample: col_sample(params.col_fraction),
        cols_per_split: false,
        lambda: params.lambda,
    };
    // columns are static across boosting rounds: presort once
    let presorted: Vec<Vec<u32>> = (0..x.n_cols())
        .into_par_iter()
        .map(|c| {
            let mut idx: Vec<u32> = (0..n as u32).collect();
            idx.sort_by(|a, b| {
                x.get(*a as usize, c)
                    .partial_cmp(&x.get(*b as usize, c))
                    .unwrap()
            });
            idx
        })
        .collect();
    let mut margin = vec![base_score; n];
    for t in 0..params.n_trees {
        let mut rng =
            ChaCha8Rng::seed_from_u64(seed::derive_indexed(params.seed, "gbt-tree", t as u64));
        let mut rows: Vec<RowStat> = (0..n)
            .map(|r| {
                let p = sigmoid(margin[r]);
                RowStat {
                    row: r,
                    weight: 1.0,
                    grad: y[r] as f64 - p,
                    hess: (p * (1.0 - p)).max(1e-9),
                }
            })
            .collect();
        let mut tree = CartBuilder::new(x, cart, &mut rng)
            .with_presorted(&presorted)
            .grow(&mut rows, &mut rng);
        // scale leaf values by the learning rate
        for node in tree.nodes.iter_mut() {
            if let crate::trees::Node::Leaf { value, .. } = node {
                *value *= params.learning_rate;
            }
        }
        for r in 0..n {
            margin[r] += tree.predict_raw(x.row(r));
        }
        model.trees.push(tree);
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn separable() -> (DenseMatrix, Vec<u8>) {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..40 {
            let v = i as f64 / 40.0;
            rows.push(vec![v, (i % 7) as f64]);
            y.push(u8::from(v >= 0.5));
        }
        (DenseMatrix::from_rows(rows).unwrap(), y)
    }

    #[test]
    fn forest_fits_separable_data() {
        let (x, y) = separable();
        let params = ForestParams {
            n_trees: 30,
            seed: 1,
            min_leaf: 1,
            ..ForestParams::default()
        };
        let model = fit_forest(&x, &y, &params).unwrap();
        let acc = (0..x.n_rows())
            .filter(|r| {
                let p = model.predict_proba(x.row(*r)).unwrap();
                u8::from(p >= 0.5) == y[*r]
            })
            .count() as f64
            / x.n_rows() as f64;
        assert_eq!(acc, 1.0, "training accuracy {acc}");
        for t in &model.trees {
            assert!(t.covers_consistent());
        }
    }

    #[test]
    fn forest_all_zero_targets_is_constant() {
        let (x, _) = separable();
        let y = vec![0u8; x.n_rows()];
        let model = fit_forest(&x, &y, &ForestParams::default()).unwrap();
        assert!(model.single_class);
        assert_eq!(model.predict_proba(x.row(3)).unwrap(), 0.0);
    }

    #[test]
    fn forest_fixed_seed_is_identical() {
        let (x, y) = separable();
        let params = ForestParams {
            n_trees: 10,
            seed: 42,
            ..ForestParams::default()
        };
        let a = fit_forest(&x, &y, &params).unwrap();
        let b = fit_forest(&x, &y, &params).unwrap();
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn forest_prediction_is_mean_of_trees() {
        let (x, y) = separable();
        let params = ForestParams {
            n_trees: 12,
            seed: 3,
            ..ForestParams::default()
        };
        let model = fit_forest(&x, &y, &params).unwrap();
        let sample = x.row(5);
        let mean = model
            .trees
            .iter()
            .map(|t| t.predict_raw(sample))
            .sum::<f64>()
            / model.trees.len() as f64;
        assert!((model.raw_output(sample).unwrap() - mean).abs() < 1e-12);
    }

    #[test]
    fn gbt_solves_xor_at_depth_2() {
        let x = DenseMatrix::from_rows(vec![
            vec![0.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
            vec![1.0, 1.0],
        ])
        .unwrap();
        let y = vec![0u8, 1, 1, 0];
        let params = GbtParams {
            n_trees: 60,
            max_depth: 2,
            learning_rate: 0.3,
            min_leaf: 1,
            col_fraction: Some(1.0),
            lambda: 0.0,
            seed: 5,
        };
        let model = fit_gbt(&x, &y, &params).unwrap();
        for r in 0..4 {
            let p = model.predict_proba(x.row(r)).unwrap();
            assert_eq!(u8::from(p >= 0.5), y[r], "row {r}: p={p}");
        }
    }

    #[test]
    fn gbt_zero_trees_predicts_base_rate() {
        let (x, y) = separable();
        let params = GbtParams {
            n_trees: 0,
            ..GbtParams::default()
        };
        let model = fit_gbt(&x, &y, &params).unwrap();
        let p = model.predict_proba(x.row(0)).unwrap();
        let base = y.iter().filter(|v| **v == 1).count() as f64 / y.len() as f64;
        assert!((p - base).abs() < 1e-9);
    }

    #[test]
    fn gbt_zero_learning_rate_is_base_only() {
        let (x, y) = separable();
        let params = GbtParams {
            learning_rate: 0.0,
            ..GbtParams::default()
        };
        let model = fit_gbt(&x, &y, &params).unwrap();
        assert!(model.trees.is_empty());
        let p = model.predict_proba(x.row(7)).unwrap();
        let base = y.iter().filter(|v| **v == 1).count() as f64 / y.len() as f64;
        assert!((p - base).abs() < 1e-9);
    }

    #[test]
    fn monotone_data_monotone_probability() {
        let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64]).collect();
        let y: Vec<u8> = (0..30).map(|i| u8::from(i >= 15)).collect();
        let x = DenseMatrix::from_rows(rows).unwrap();
        let model = fit_forest(
            &x,
            &y,
            &ForestParams {
                n_trees: 50,
                min_leaf: 2,
                seed: 9,
                ..ForestParams::default()
            },
        )
        .unwrap();
        let mut prev = -1.0;
        for i in 0..30 {
            let p = model.predict_proba(&[i as f64]).unwrap();
            assert!(p >= prev - 1e-9, "prob dropped at {i}: {p} < {prev}");
            prev = p;
        }
    }
}
