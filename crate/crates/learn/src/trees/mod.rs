//! Decision-tree ensembles (bagged forests and gradient-boosted trees) with
//! the node structure exposed so attribution can walk covers exactly.

mod cart;
mod fit;

pub use cart::{CartParams, ColSample};
pub use fit::{fit_forest, fit_gbt, ForestParams, GbtParams};

use serde::{Deserialize, Serialize};

use crate::{LearnError, Result};

/// One tree node. Internal nodes always have both children; `cover` is the
/// training weight that reached the node, and parents satisfy
/// `cover == cover(left) + cover(right)` exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: f64,
        cover: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: u32,
        right: u32,
        cover: f64,
    },
}

impl Node {
    pub fn cover(&self) -> f64 {
        match self {
            Node::Leaf { cover, .. } | Node::Split { cover, .. } => *cover,
        }
    }
}

/// One tree as a node array; the root is node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(value: f64, cover: f64) -> Tree {
        Tree {
            nodes: vec![Node::Leaf { value, cover }],
        }
    }

    /// Raw output for a sample: the value of the leaf its features select.
    pub fn predict_raw(&self, x: &[f64]) -> f64 {
        let mut idx = 0usize;
        loop {
            match &self.nodes[idx] {
                Node::Leaf { value, .. } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    idx = if x[*feature] < *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }

    /// Cover-weighted expectation of the leaf values.
    pub fn expectation(&self) -> f64 {
        self.expectation_at(0)
    }

    fn expectation_at(&self, idx: usize) -> f64 {
        match &self.nodes[idx] {
            Node::Leaf { value, .. } => *value,
            Node::Split {
                left, right, cover, ..
            } => {
                let l = *left as usize;
                let r = *right as usize;
                (self.nodes[l].cover() * self.expectation_at(l)
                    + self.nodes[r].cover() * self.expectation_at(r))
                    / cover
            }
        }
    }

    pub fn max_depth(&self) -> usize {
        self.depth_at(0)
    }

    fn depth_at(&self, idx: usize) -> usize {
        match &self.nodes[idx] {
            Node::Leaf { .. } => 1,
            Node::Split { left, right, .. } => {
                1 + self
                    .depth_at(*left as usize)
                    .max(self.depth_at(*right as usize))
            }
        }
    }

    /// Verify the cover bookkeeping: parent = left + right everywhere.
    pub fn covers_consistent(&self) -> bool {
        self.nodes.iter().all(|n| match n {
            Node::Leaf { .. } => true,
            Node::Split {
                left, right, cover, ..
            } => {
                let sum =
                    self.nodes[*left as usize].cover() + self.nodes[*right as usize].cover();
                (sum - cover).abs() <= 1e-9 * cover.max(1.0)
            }
        })
    }
}

/// How per-tree outputs combine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    /// Prediction = mean of per-tree leaf values (leaf = class fraction).
    ForestAverage,
    /// Prediction = sigmoid(base_score + sum of tree outputs).
    BoostedSum,
}

/// A fitted tree ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsembleModel {
    pub schema_version: u32,
    pub trees: Vec<Tree>,
    pub kind: EnsembleKind,
    pub base_score: f64,
    pub feature_count: usize,
    /// Set when the training targets were single-class.
    pub single_class: bool,
}

impl TreeEnsembleModel {
    /// Raw (margin-scale) output: forest mean or boosted sum + base.
    pub fn raw_output(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.feature_count {
            return Err(LearnError::Dimension(format!(
                "expected {} features, got {}",
                self.feature_count,
                x.len()
            )));
        }
        Ok(self.raw_output_unchecked(x))
    }

    pub(crate) fn raw_output_unchecked(&self, x: &[f64]) -> f64 {
        match self.kind {
            EnsembleKind::ForestAverage => {
                if self.trees.is_empty() {
                    return self.base_score;
                }
                self.trees.iter().map(|t| t.predict_raw(x)).sum::<f64>()
                    / self.trees.len() as f64
            }
            EnsembleKind::BoostedSum => {
                self.base_score + self.trees.iter().map(|t| t.predict_raw(x)).sum::<f64>()
            }
        }
    }

    /// Probability of class 1.
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        let raw = self.raw_output(x)?;
        Ok(match self.kind {
            EnsembleKind::ForestAverage => raw.clamp(0.0, 1.0),
            EnsembleKind::BoostedSum => sigmoid(raw),
        })
    }

    /// Expectation of the raw output over the training distribution
    /// (cover-weighted), the TreeSHAP base value.
    pub fn expected_raw(&self) -> f64 {
        match self.kind {
            EnsembleKind::ForestAverage => {
                if self.trees.is_empty() {
                    self.base_score
                } else {
                    self.trees.iter().map(|t| t.expectation()).sum::<f64>()
                        / self.trees.len() as f64
                }
            }
            EnsembleKind::BoostedSum => {
                self.base_score + self.trees.iter().map(|t| t.expectation()).sum::<f64>()
            }
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<TreeEnsembleModel> {
        let model: TreeEnsembleModel =
            serde_json::from_str(s).map_err(|e| LearnError::Serialization(e.to_string()))?;
        for t in &model.trees {
            for n in &t.nodes {
                if let Node::Split { feature, .. } = n {
                    if *feature >= model.feature_count {
                        return Err(LearnError::Serialization(format!(
                            "node references feature {feature} >= feature_count {}",
                            model.feature_count
                        )));
                    }
                }
            }
        }
        Ok(model)
    }
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}
