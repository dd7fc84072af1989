//! Exponential brute-force Shapley oracle.
//!
//! Enumerates all 2^d feature subsets, valuing each by the tree-path-
//! dependent expectation (splits on out-of-coalition features average their
//! children by cover). Used only to verify the polynomial-time path; keep
//! `d` small.

use crate::trees::{EnsembleKind, Node, Tree, TreeEnsembleModel};
use crate::{LearnError, Result};

/// Path-dependent value of one tree under coalition `subset` (bit i set =
/// feature i known).
pub fn subset_value_tree(tree: &Tree, x: &[f64], subset: u64) -> f64 {
    fn walk(tree: &Tree, node: usize, x: &[f64], subset: u64) -> f64 {
        match &tree.nodes[node] {
            Node::Leaf { value, .. } => *value,
            Node::Split {
                feature,
                threshold,
                left,
                right,
                cover,
            } => {
                if subset & (1u64 << feature) != 0 {
                    let next = if x[*feature] < *threshold {
                        *left
                    } else {
                        *right
                    };
                    walk(tree, next as usize, x, subset)
                } else {
                    let l = *left as usize;
                    let r = *right as usize;
                    (tree.nodes[l].cover() * walk(tree, l, x, subset)
                        + tree.nodes[r].cover() * walk(tree, r, x, subset))
                        / cover
                }
            }
        }
    }
    walk(tree, 0, x, subset)
}

/// Model-level coalition value on the raw-output scale.
pub fn subset_value(model: &TreeEnsembleModel, x: &[f64], subset: u64) -> f64 {
    match model.kind {
        EnsembleKind::ForestAverage => {
            if model.trees.is_empty() {
                model.base_score
            } else {
                model
                    .trees
                    .iter()
                    .map(|t| subset_value_tree(t, x, subset))
                    .sum::<f64>()
                    / model.trees.len() as f64
            }
        }
        EnsembleKind::BoostedSum => {
            model.base_score
                + model
                    .trees
                    .iter()
                    .map(|t| subset_value_tree(t, x, subset))
                    .sum::<f64>()
        }
    }
}

/// Exact Shapley values by full subset enumeration; O(2^d) model walks.
pub fn brute_force_shap(model: &TreeEnsembleModel, x: &[f64]) -> Result<Vec<f64>> {
    let d = model.feature_count;
    if d > 20 {
        return Err(LearnError::BadParams(format!(
            "brute-force oracle limited to 20 features, got {d}"
        )));
    }
    if x.len() != d {
        return Err(LearnError::Dimension(format!(
            "expected {d} features, got {}",
            x.len()
        )));
    }
    let mut factorial = vec![1.0f64; d + 1];
    for k in 1..=d {
        factorial[k] = factorial[k - 1] * k as f64;
    }
    // cache subset values
    let n_subsets = 1u64 << d;
    let mut value = vec![0.0f64; n_subsets as usize];
    for s in 0..n_subsets {
        value[s as usize] = subset_value(model, x, s);
    }
    let mut phi = vec![0.0; d];
    for i in 0..d {
        let bit = 1u64 << i;
        let mut acc = 0.0;
        for s in 0..n_subsets {
            if s & bit != 0 {
                continue;
            }
            let k = s.count_ones() as usize;
            let w = factorial[k] * factorial[d - k - 1] / factorial[d];
            acc += w * (value[(s | bit) as usize] - value[s as usize]);
        }
        phi[i] = acc;
    }
    Ok(phi)
}
