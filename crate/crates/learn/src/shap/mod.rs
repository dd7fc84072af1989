//! Exact path-dependent TreeSHAP, attribution standardization, global
//! rankings, and grouped z-scores.
//!
//! The fast path is the polynomial-time recursion of Lundberg et al.; the
//! [`brute`] module holds the exponential subset-enumeration oracle the fast
//! path is verified against.

pub mod boruta;
pub mod brute;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::DenseMatrix;
use crate::trees::{Node, Tree, TreeEnsembleModel};
use crate::{LearnError, Result};

/// Per-sample attribution plus the model's expected raw output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShapMatrix {
    /// `phi[sample][feature]`.
    pub phi: Vec<Vec<f64>>,
    pub expected_value: f64,
}

#[derive(Clone, Copy, Default)]
struct PathItem {
    feature: i64,
    zero_fraction: f64,
    one_fraction: f64,
    pweight: f64,
}

/// Exact Shapley values of one sample w.r.t. the model's raw output.
pub fn tree_shap(model: &TreeEnsembleModel, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != model.feature_count {
        return Err(LearnError::Dimension(format!(
            "expected {} features, got {}",
            model.feature_count,
            x.len()
        )));
    }
    let mut phi = vec![0.0; model.feature_count];
    for tree in &model.trees {
        let tree_phi = single_tree_shap(tree, x, model.feature_count);
        for (acc, v) in phi.iter_mut().zip(&tree_phi) {
            *acc += v;
        }
    }
    if model.kind == crate::trees::EnsembleKind::ForestAverage && !model.trees.is_empty() {
        let k = model.trees.len() as f64;
        for v in phi.iter_mut() {
            *v /= k;
        }
    }
    Ok(phi)
}

fn single_tree_shap(tree: &Tree, x: &[f64], n_features: usize) -> Vec<f64> {
    let mut phi = vec![0.0; n_features];
    let depth = tree.max_depth() + 2;
    let mut path = vec![PathItem::default(); depth * (depth + 1) / 2];
    recurse(tree, x, &mut phi, 0, &mut path, 0, 1.0, 1.0, -1);
    phi
}

#[allow(clippy::too_many_arguments)]
fn recurse(
    tree: &Tree,
    x: &[f64],
    phi: &mut [f64],
    node: usize,
    unique_path: &mut [PathItem],
    unique_depth: usize,
    parent_zero_fraction: f64,
    parent_one_fraction: f64,
    parent_feature: i64,
) {
    extend_path(
        unique_path,
        unique_depth,
        parent_zero_fraction,
        parent_one_fraction,
        parent_feature,
    );
    match &tree.nodes[node] {
        Node::Leaf { value, .. } => {
            for i in 1..=unique_depth {
                let w = unwound_path_sum(unique_path, unique_depth, i);
                let item = &unique_path[i];
                phi[item.feature as usize] +=
                    w * (item.one_fraction - item.zero_fraction) * value;
            }
        }
        Node::Split {
            feature,
            threshold,
            left,
            right,
            cover,
        } => {
            let (hot, cold) = if x[*feature] < *threshold {
                (*left as usize, *right as usize)
            } else {
                (*right as usize, *left as usize)
            };
            let hot_zero = tree.nodes[hot].cover() / cover;
            let cold_zero = tree.nodes[cold].cover() / cover;
            let mut incoming_zero = 1.0;
            let mut incoming_one = 1.0;
            let mut depth = unique_depth;
            // a repeated feature on the path is unwound and its fractions folded in
            if let Some(k) = (1..=unique_depth).find(|i| unique_path[*i].feature == *feature as i64)
            {
                incoming_zero = unique_path[k].zero_fraction;
                incoming_one = unique_path[k].one_fraction;
                unwind_path(unique_path, depth, k);
                depth -= 1;
            }
            let (parent_path, child_path) = unique_path.split_at_mut(depth + 1);
            child_path[..parent_path.len()].copy_from_slice(parent_path);
            recurse(
                tree,
                x,
                phi,
                hot,
                child_path,
                depth + 1,
                hot_zero * incoming_zero,
                incoming_one,
                *feature as i64,
            );
            child_path[..parent_path.len()].copy_from_slice(parent_path);
            recurse(
                tree,
                x,
                phi,
                cold,
                child_path,
                depth + 1,
                cold_zero * incoming_zero,
                0.0,
                *feature as i64,
            );
        }
    }
}

fn extend_path(
    path: &mut [PathItem],
    unique_depth: usize,
    zero_fraction: f64,
    one_fraction: f64,
    feature: i64,
) {
    path[unique_depth] = PathItem {
        feature,
        zero_fraction,
        one_fraction,
        pweight: if unique_depth == 0 { 1.0 } else { 0.0 },
    };
    for i in (0..unique_depth).rev() {
        path[i + 1].pweight +=
            one_fraction * path[i].pweight * (i + 1) as f64 / (unique_depth + 1) as f64;
        path[i].pweight =
            zero_fraction * path[i].pweight * (unique_depth - i) as f64 / (unique_depth + 1) as f64;
    }
}

fn unwind_path(path: &mut [PathItem], unique_depth: usize, index: usize) {
    let one_fraction = path[index].one_fraction;
    let zero_fraction = path[index].zero_fraction;
    let mut next_one = path[unique_depth].pweight;
    for i in (0..unique_depth).rev() {
        if one_fraction != 0.0 {
            let tmp = path[i].pweight;
            path[i].pweight = next_one * (unique_depth + 1) as f64 / ((i + 1) as f64 * one_fraction);
            next_one = tmp
                - path[i].pweight * zero_fraction * (unique_depth - i) as f64
                    / (unique_depth + 1) as f64;
        } else {
            path[i].pweight = path[i].pweight * (unique_depth + 1) as f64
                / (zero_fraction * (unique_depth - i) as f64);
        }
    }
    for i in index..unique_depth {
        path[i].feature = path[i + 1].feature;
        path[i].zero_fraction = path[i + 1].zero_fraction;
        path[i].one_fraction = path[i + 1].one_fraction;
    }
}

fn unwound_path_sum(path: &[PathItem], unique_depth: usize, index: usize) -> f64 {
    let one_fraction = path[index].one_fraction;
    let zero_fraction = path[index].zero_fraction;
    let mut next_one = path[unique_depth].pweight;
    let mut total = 0.0;
    if one_fraction != 0.0 {
        for i in (0..unique_depth).rev() {
            let tmp = next_one / ((i + 1) as f64 * one_fraction);
            total += tmp;
            next_one = path[i].pweight - tmp * zero_fraction * (unique_depth - i) as f64;
        }
    } else {
        for i in (0..unique_depth).rev() {
            total += path[i].pweight / (zero_fraction * (unique_depth - i) as f64);
        }
    }
    total * (unique_depth + 1) as f64
}

/// Attribution for every row of `x` (row-parallel).
pub fn shap_matrix(model: &TreeEnsembleModel, x: &DenseMatrix) -> Result<ShapMatrix> {
    let phi: Vec<Vec<f64>> = (0..x.n_rows())
        .into_par_iter()
        .map(|r| tree_shap(model, x.row(r)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ShapMatrix {
        phi,
        expected_value: model.expected_raw(),
    })
}

/// Verify local accuracy of an attribution row against the model output.
pub fn local_accuracy_gap(model: &TreeEnsembleModel, x: &[f64], phi: &[f64]) -> f64 {
    let f = model.raw_output_unchecked(x);
    let sum: f64 = phi.iter().sum::<f64>() + model.expected_raw();
    (sum - f).abs() / f.abs().max(1.0)
}

/// Standardized attribution: per-feature mean, sample std (N-1), and
/// z-scores. Features constant in attribution are masked.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StandardizedShap {
    pub phi_bar: Vec<f64>,
    pub s: Vec<f64>,
    /// `z[sample][feature]`; masked columns carry zeros.
    pub z: Vec<Vec<f64>>,
    pub masked: Vec<bool>,
}

/// The three-step standardization: mean, sample standard deviation, z-score.
pub fn standardize(shap: &ShapMatrix) -> Result<StandardizedShap> {
    let n = shap.phi.len();
    if n < 2 {
        return Err(LearnError::BadData(format!(
            "standardization needs >= 2 samples, got {n}"
        )));
    }
    let d = shap.phi[0].len();
    let mut phi_bar = vec![0.0; d];
    for row in &shap.phi {
        for (acc, v) in phi_bar.iter_mut().zip(row) {
            *acc += v;
        }
    }
    for v in phi_bar.iter_mut() {
        *v /= n as f64;
    }
    let mut s = vec![0.0; d];
    for row in &shap.phi {
        for (j, v) in row.iter().enumerate() {
            s[j] += (v - phi_bar[j]).powi(2);
        }
    }
    let mut masked = vec![false; d];
    for (j, v) in s.iter_mut().enumerate() {
        *v = (*v / (n as f64 - 1.0)).sqrt();
        if *v <= 0.0 {
            masked[j] = true;
        }
    }
    let z = shap
        .phi
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .map(|(j, v)| {
                    if masked[j] {
                        0.0
                    } else {
                        (v - phi_bar[j]) / s[j]
                    }
                })
                .collect()
        })
        .collect();
    Ok(StandardizedShap {
        phi_bar,
        s,
        z,
        masked,
    })
}

/// One globally ranked feature.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankedFeature {
    pub feature: usize,
    pub mean_abs: f64,
    /// z-score of the mean-|phi| across features.
    pub z: f64,
}

/// Mean |phi| per feature; z-scored across features for reporting.
pub fn mean_abs_importance(shap: &ShapMatrix) -> Vec<f64> {
    if shap.phi.is_empty() {
        return Vec::new();
    }
    let d = shap.phi[0].len();
    let mut imp = vec![0.0; d];
    for row in &shap.phi {
        for (acc, v) in imp.iter_mut().zip(row) {
            *acc += v.abs();
        }
    }
    for v in imp.iter_mut() {
        *v /= shap.phi.len() as f64;
    }
    imp
}

fn zscores_across(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    if n < 2.0 {
        return vec![0.0; values.len()];
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let std = var.sqrt();
    values
        .iter()
        .map(|v| if std > 0.0 { (v - mean) / std } else { 0.0 })
        .collect()
}

/// Descending mean-|phi| ranking; ties break to the lower feature index.
pub fn global_rank(shap: &ShapMatrix) -> Vec<RankedFeature> {
    let imp = mean_abs_importance(shap);
    let z = zscores_across(&imp);
    let mut ranked: Vec<RankedFeature> = imp
        .into_iter()
        .zip(z)
        .enumerate()
        .map(|(feature, (mean_abs, z))| RankedFeature {
            feature,
            mean_abs,
            z,
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.mean_abs
            .partial_cmp(&a.mean_abs)
            .unwrap()
            .then(a.feature.cmp(&b.feature))
    });
    ranked
}

/// Global vs within-group z-scores of the mean-|phi| importances.
/// Singleton groups get a masked local score.
pub fn grouped_zscores(shap: &ShapMatrix, groups: &[usize]) -> Vec<(f64, Option<f64>)> {
    let imp = mean_abs_importance(shap);
    assert_eq!(imp.len(), groups.len());
    let global = zscores_across(&imp);
    let mut by_group: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for (j, g) in groups.iter().enumerate() {
        by_group.entry(*g).or_default().push(j);
    }
    let mut local = vec![None; imp.len()];
    for members in by_group.values() {
        if members.len() < 2 {
            continue;
        }
        let vals: Vec<f64> = members.iter().map(|j| imp[*j]).collect();
        let z = zscores_across(&vals);
        for (j, zv) in members.iter().zip(z) {
            local[*j] = Some(zv);
        }
    }
    global.into_iter().zip(local).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trees::EnsembleKind;

    fn model_of(trees: Vec<Tree>, kind: EnsembleKind, d: usize) -> TreeEnsembleModel {
        TreeEnsembleModel {
            schema_version: 1,
            trees,
            kind,
            base_score: 0.0,
            feature_count: d,
            single_class: false,
        }
    }

    #[test]
    fn single_leaf_tree_zero_phi() {
        let model = model_of(
            vec![Tree::leaf(0.7, 10.0)],
            EnsembleKind::ForestAverage,
            3,
        );
        let phi = tree_shap(&model, &[1.0, 2.0, 3.0]).unwrap();
        assert!(phi.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn stump_attributes_only_to_split_feature() {
        let tree = Tree {
            nodes: vec![
                Node::Split {
                    feature: 0,
                    threshold: 0.5,
                    left: 1,
                    right: 2,
                    cover: 10.0,
                },
                Node::Leaf {
                    value: 0.0,
                    cover: 4.0,
                },
                Node::Leaf {
                    value: 1.0,
                    cover: 6.0,
                },
            ],
        };
        let model = model_of(vec![tree], EnsembleKind::ForestAverage, 3);
        let phi = tree_shap(&model, &[0.9, 5.0, -2.0]).unwrap();
        assert!(phi[1].abs() < 1e-12 && phi[2].abs() < 1e-12);
        // E[f] = 0.6; f(x) = 1.0; phi_0 = 0.4
        assert!((phi[0] - 0.4).abs() < 1e-12, "phi {phi:?}");
    }

    #[test]
    fn local_accuracy_on_two_feature_tree() {
        // depth-2 tree using features 0 and 1
        let tree = Tree {
            nodes: vec![
                Node::Split {
                    feature: 0,
                    threshold: 0.0,
                    left: 1,
                    right: 2,
                    cover: 8.0,
                },
                Node::Split {
                    feature: 1,
                    threshold: 0.0,
                    left: 3,
                    right: 4,
                    cover: 5.0,
                },
                Node::Leaf {
                    value: 3.0,
                    cover: 3.0,
                },
                Node::Leaf {
                    value: -1.0,
                    cover: 2.0,
                },
                Node::Leaf {
                    value: 1.0,
                    cover: 3.0,
                },
            ],
        };
        let model = model_of(vec![tree], EnsembleKind::BoostedSum, 2);
        for x in [[-1.0, -1.0], [-1.0, 1.0], [1.0, 0.0], [0.5, -3.0]] {
            let phi = tree_shap(&model, &x).unwrap();
            assert!(
                local_accuracy_gap(&model, &x, &phi) < 1e-12,
                "gap at {x:?}"
            );
        }
    }

    #[test]
    fn symmetric_duplicate_features_share_phi() {
        // two identical splits on features 0 and 1 in either order, evenly
        // covered: phi_0 == phi_1 by symmetry
        let tree = |first: usize, second: usize| Tree {
            nodes: vec![
                Node::Split {
                    feature: first,
                    threshold: 0.5,
                    left: 1,
                    right: 2,
                    cover: 8.0,
                },
                Node::Split {
                    feature: second,
                    threshold: 0.5,
                    left: 3,
                    right: 4,
                    cover: 4.0,
                },
                Node::Split {
                    feature: second,
                    threshold: 0.5,
                    left: 5,
                    right: 6,
                    cover: 4.0,
                },
                Node::Leaf {
                    value: 0.0,
                    cover: 2.0,
                },
                Node::Leaf {
                    value: 0.0,
                    cover: 2.0,
                },
                Node::Leaf {
                    value: 0.0,
                    cover: 2.0,
                },
                Node::Leaf {
                    value: 1.0,
                    cover: 2.0,
                },
            ],
        };
        let model = model_of(
            vec![tree(0, 1), tree(1, 0)],
            EnsembleKind::BoostedSum,
            2,
        );
        let phi = tree_shap(&model, &[1.0, 1.0]).unwrap();
        assert!(
            (phi[0] - phi[1]).abs() < 1e-12,
            "asymmetric phi {phi:?}"
        );
    }

    #[test]
    fn standardize_hand_example() {
        let shap = ShapMatrix {
            phi: vec![vec![1.0, 5.0], vec![2.0, 5.0], vec![3.0, 5.0]],
            expected_value: 0.0,
        };
        let st = standardize(&shap).unwrap();
        assert!((st.phi_bar[0] - 2.0).abs() < 1e-12);
        assert!((st.s[0] - 1.0).abs() < 1e-12);
        let col0: Vec<f64> = st.z.iter().map(|r| r[0]).collect();
        assert_eq!(col0, vec![-1.0, 0.0, 1.0]);
        assert!(st.masked[1], "constant column must be masked");
    }

    #[test]
    fn standardize_needs_two_samples() {
        let shap = ShapMatrix {
            phi: vec![vec![1.0]],
            expected_value: 0.0,
        };
        assert!(standardize(&shap).is_err());
    }

    #[test]
    fn z_columns_have_zero_mean_unit_std() {
        let shap = ShapMatrix {
            phi: (0..20)
                .map(|i| vec![i as f64, (i * i) as f64 % 7.0])
                .collect(),
            expected_value: 0.0,
        };
        let st = standardize(&shap).unwrap();
        for j in 0..2 {
            let col: Vec<f64> = st.z.iter().map(|r| r[j]).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let var =
                col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (col.len() - 1) as f64;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rank_places_zero_feature_last() {
        let shap = ShapMatrix {
            phi: vec![vec![1.0, 0.0, -2.0], vec![-1.5, 0.0, 2.0]],
            expected_value: 0.0,
        };
        let ranked = global_rank(&shap);
        assert_eq!(ranked.last().unwrap().feature, 1);
        assert_eq!(ranked[0].feature, 2);
    }

    #[test]
    fn duplicate_columns_rank_adjacent() {
        let shap = ShapMatrix {
            phi: vec![vec![1.0, 1.0, 0.2], vec![-1.0, -1.0, 0.1]],
            expected_value: 0.0,
        };
        let ranked = global_rank(&shap);
        assert_eq!(ranked[0].feature, 0);
        assert_eq!(ranked[1].feature, 1);
    }

    #[test]
    fn grouped_zscores_single_group_matches_global() {
        let shap = ShapMatrix {
            phi: vec![vec![1.0, 3.0, -2.0], vec![-1.0, 2.0, 2.5]],
            expected_value: 0.0,
        };
        let out = grouped_zscores(&shap, &[0, 0, 0]);
        for (g, l) in &out {
            assert!((g - l.unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn grouped_zscores_singleton_masked() {
        let shap = ShapMatrix {
            phi: vec![vec![1.0, 3.0, -2.0], vec![-1.0, 2.0, 2.5]],
            expected_value: 0.0,
        };
        let out = grouped_zscores(&shap, &[0, 0, 7]);
        assert!(out[2].1.is_none());
        assert!(out[0].1.is_some());
    }
}
