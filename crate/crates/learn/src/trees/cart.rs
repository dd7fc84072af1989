//! CART builder shared by the forest and the booster.
//!
//! Splits minimize the weighted sum of squared errors of the target. On 0/1
//! class targets this ranks splits identically to Gini impurity decrease
//! (for binary y, node SSE = n * p(1-p) = n/2 * Gini). Ties break to the
//! lowest feature index, then the lowest threshold, by scanning features in
//! ascending order and only accepting strictly better gains.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::data::DenseMatrix;
use crate::trees::{Node, Tree};

/// Column-subsampling strategy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ColSample {
    All,
    /// round(sqrt(d)) candidates.
    Sqrt,
    Fraction(f64),
}

impl ColSample {
    pub fn count(&self, d: usize) -> usize {
        match self {
            ColSample::All => d,
            ColSample::Sqrt => ((d as f64).sqrt().round() as usize).clamp(1, d),
            ColSample::Fraction(f) => ((d as f64 * f).round() as usize).clamp(1, d),
        }
    }
}

/// Growth parameters for one tree.
#[derive(Debug, Clone, Copy)]
pub struct CartParams {
    pub max_depth: usize,
    pub min_leaf: usize,
    pub col_sample: ColSample,
    /// When set, resample the candidate columns at every split (forest
    /// style); otherwise one subset per tree (boosting style).
    pub cols_per_split: bool,
    /// L2 regularization on leaf values (used with hessians).
    pub lambda: f64,
}

/// One training row: target plus optional hessian (1 when absent) and an
/// integer weight (bootstrap multiplicity).
#[derive(Debug, Clone, Copy)]
pub struct RowStat {
    pub row: usize,
    pub weight: f64,
    pub grad: f64,
    pub hess: f64,
}

pub struct CartBuilder<'a> {
    pub x: &'a DenseMatrix,
    pub params: CartParams,
    nodes: Vec<Node>,
    tree_cols: Vec<usize>,
    /// Per-column row indices sorted by value (shared across trees of one
    /// boosted fit); enables O(n) split scans without per-node sorting.
    presorted: Option<&'a [Vec<u32>]>,
    /// Node-membership stamps, indexed by row id.
    stamp: Vec<u32>,
    grad_of: Vec<f64>,
    weight_of: Vec<f64>,
}

impl<'a> CartBuilder<'a> {
    pub fn new(x: &'a DenseMatrix, params: CartParams, rng: &mut ChaCha8Rng) -> CartBuilder<'a> {
        let d = x.n_cols();
        let tree_cols = if params.cols_per_split {
            (0..d).collect()
        } else {
            let mut all: Vec<usize> = (0..d).collect();
            all.shuffle(rng);
            let mut chosen: Vec<usize> = all[..params.col_sample.count(d)].to_vec();
            chosen.sort_unstable();
            chosen
        };
        CartBuilder {
            x,
            params,
            nodes: Vec::new(),
            tree_cols,
            presorted: None,
            stamp: Vec::new(),
            grad_of: Vec::new(),
            weight_of: Vec::new(),
        }
    }

    /// Use presorted column order for split search (boosting path).
    pub fn with_presorted(mut self, presorted: &'a [Vec<u32>]) -> CartBuilder<'a> {
        self.presorted = Some(presorted);
        self.stamp = vec![u32::MAX; self.x.n_rows()];
        self.grad_of = vec![0.0; self.x.n_rows()];
        self.weight_of = vec![0.0; self.x.n_rows()];
        self
    }

    /// Grow a tree over the given rows; leaf value = sum(w*g) / (sum(w*h) + lambda).
    pub fn grow(mut self, rows: &mut [RowStat], rng: &mut ChaCha8Rng) -> Tree {
        if rows.is_empty() {
            return Tree::leaf(0.0, 0.0);
        }
        self.build_node(rows, 0, rng);
        Tree { nodes: self.nodes }
    }

    fn leaf_value(&self, rows: &[RowStat]) -> f64 {
        let g: f64 = rows.iter().map(|r| r.weight * r.grad).sum();
        let h: f64 = rows.iter().map(|r| r.weight * r.hess).sum();
        if h + self.params.lambda > 0.0 {
            g / (h + self.params.lambda)
        } else {
            0.0
        }
    }

    fn build_node(&mut self, rows: &mut [RowStat], depth: usize, rng: &mut ChaCha8Rng) -> u32 {
        let cover: f64 = rows.iter().map(|r| r.weight).sum();
        let id = self.nodes.len() as u32;
        let total_w: f64 = cover;
        let sum: f64 = rows.iter().map(|r| r.weight * r.grad).sum();
        let sumsq: f64 = rows.iter().map(|r| r.weight * r.grad * r.grad).sum();
        let sse = sumsq - sum * sum / total_w;

        let can_split = depth < self.params.max_depth
            && total_w >= 2.0 * self.params.min_leaf as f64
            && sse > 1e-12;
        let split = if can_split {
            self.best_split(rows, rng)
        } else {
            None
        };

        match split {
            None => {
                let v = self.leaf_value(rows);
                self.nodes.push(Node::Leaf { value: v, cover });
                id
            }
            Some((feature, threshold)) => {
                self.nodes.push(Node::Split {
                    feature,
                    threshold,
                    left: 0,
                    right: 0,
                    cover,
                });
                // partition in place
                let mut lo = 0usize;
                let mut hi = rows.len();
                while lo < hi {
                    if self.x.get(rows[lo].row, feature) < threshold {
                        lo += 1;
                    } else {
                        hi -= 1;
                        rows.swap(lo, hi);
                    }
                }
                let (left_rows, right_rows) = rows.split_at_mut(lo);
                let left_id = self.build_node(left_rows, depth + 1, rng);
                let right_id = self.build_node(right_rows, depth + 1, rng);
                if let Node::Split { left, right, .. } = &mut self.nodes[id as usize] {
                    *left = left_id;
                    *right = right_id;
                }
                id
            }
        }
    }

    fn candidate_cols(&self, rng: &mut ChaCha8Rng) -> Vec<usize> {
        if !self.params.cols_per_split {
            return self.tree_cols.clone();
        }
        let d = self.x.n_cols();
        let k = self.params.col_sample.count(d);
        if k >= d {
            return (0..d).collect();
        }
        // Floyd's sampling keeps per-split cost at O(k)
        let mut chosen = std::collections::BTreeSet::new();
        for j in d - k..d {
            let t = rng.gen_range(0..=j);
            if !chosen.insert(t) {
                chosen.insert(j);
            }
        }
        chosen.into_iter().collect()
    }

    fn best_split(&mut self, rows: &[RowStat], rng: &mut ChaCha8Rng) -> Option<(usize, f64)> {
        let total_w: f64 = rows.iter().map(|r| r.weight).sum();
        let total_sum: f64 = rows.iter().map(|r| r.weight * r.grad).sum();
        let total_sumsq: f64 = rows.iter().map(|r| r.weight * r.grad * r.grad).sum();
        let parent_sse = total_sumsq - total_sum * total_sum / total_w;
        let min_w = self.params.min_leaf as f64;
        let node_id = self.nodes.len() as u32;

        let mut best: Option<(f64, usize, f64)> = None; // (gain, feature, threshold)
        let mut consider = |best: &mut Option<(f64, usize, f64)>,
                            feature: usize,
                            v: f64,
                            next_v: f64,
                            w_left: f64,
                            sum_left: f64,
                            sumsq_left: f64| {
            let w_right = total_w - w_left;
            if w_left < min_w || w_right < min_w {
                return;
            }
            let sum_right = total_sum - sum_left;
            let sumsq_right = total_sumsq - sumsq_left;
            let sse_l = sumsq_left - sum_left * sum_left / w_left;
            let sse_r = sumsq_right - sum_right * sum_right / w_right;
            let gain = parent_sse - sse_l - sse_r;
            // zero-gain splits are allowed on impure nodes (XOR-style
            // interactions need them); ties keep the earliest candidate
            if gain > best.as_ref().map_or(-1e-9, |b| b.0 + 1e-12) {
                *best = Some((gain, feature, 0.5 * (v + next_v)));
            }
        };

        if self.presorted.is_some() {
            // stamp node membership, then scan each column in sorted order
            for r in rows {
                self.stamp[r.row] = node_id;
                self.grad_of[r.row] = r.grad;
                self.weight_of[r.row] = r.weight;
            }
            let presorted = self.presorted.unwrap();
            for &feature in &self.candidate_cols(rng) {
                let order = &presorted[feature];
                let mut w_left = 0.0;
                let mut sum_left = 0.0;
                let mut sumsq_left = 0.0;
                let mut prev: Option<f64> = None;
                for &ri in order {
                    let ri = ri as usize;
                    if self.stamp[ri] != node_id {
                        continue;
                    }
                    let v = self.x.get(ri, feature);
                    if let Some(pv) = prev {
                        if v > pv {
                            consider(&mut best, feature, pv, v, w_left, sum_left, sumsq_left);
                        }
                    }
                    let w = self.weight_of[ri];
                    let g = self.grad_of[ri];
                    w_left += w;
                    sum_left += w * g;
                    sumsq_left += w * g * g;
                    prev = Some(v);
                }
            }
        } else {
            let mut scratch: Vec<(f64, f64, f64)> = Vec::with_capacity(rows.len());
            for &feature in &self.candidate_cols(rng) {
                scratch.clear();
                scratch.extend(
                    rows.iter()
                        .map(|r| (self.x.get(r.row, feature), r.weight * r.grad, r.weight)),
                );
                scratch.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
                let mut w_left = 0.0;
                let mut sum_left = 0.0;
                let mut sumsq_left = 0.0;
                for i in 0..scratch.len() - 1 {
                    let (v, wg, w) = scratch[i];
                    w_left += w;
                    sum_left += wg;
                    sumsq_left += wg * wg / w.max(1e-300); // wg = w*g -> w*g^2
                    let next_v = scratch[i + 1].0;
                    if next_v <= v {
                        continue;
                    }
                    consider(&mut best, feature, v, next_v, w_left, sum_left, sumsq_left);
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}
