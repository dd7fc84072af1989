//! Shadow-feature all-relevant selection.
//!
//! Each iteration appends a freshly permuted shadow copy of every column,
//! fits the gradient-boosted selection model, and scores a "hit" for every
//! real feature whose mean |phi| beats the best shadow. Features are
//! accepted or rejected by a two-sided binomial test (p = 0.5) with
//! Bonferroni correction; whatever is still tentative when the iteration
//! budget runs out is treated as rejected.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

use ad_core::seed;

use crate::data::DenseMatrix;
use crate::shap::{mean_abs_importance, shap_matrix};
use crate::trees::{fit_gbt, GbtParams};
use crate::{LearnError, Result};

/// Selection parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BorutaParams {
    pub max_iter: usize,
    pub alpha: f64,
    /// Earliest iteration at which decisions are tested.
    pub min_iter: usize,
    /// Row subsample cap per iteration (0 = use all rows).
    pub row_cap: usize,
    pub gbt: GbtParams,
    pub seed: u64,
}

impl Default for BorutaParams {
    fn default() -> Self {
        BorutaParams {
            max_iter: 500,
            alpha: 0.05,
            min_iter: 5,
            row_cap: 0,
            // column subsampling per tree tames multicollinearity; half the
            // columns keeps wide scopes covered by every tree (sqrt(d) is
            // too thin once shadows double the width)
            gbt: GbtParams {
                n_trees: 48,
                max_depth: 3,
                learning_rate: 0.2,
                min_leaf: 5,
                col_fraction: Some(0.5),
                lambda: 1.0,
                seed: 0,
            },
            seed: 0,
        }
    }
}

/// Per-feature outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Accepted,
    Rejected,
    /// Still tentative at the iteration cap, therefore rejected.
    TentativeRejected,
}

impl Decision {
    pub fn is_accepted(&self) -> bool {
        matches!(self, Decision::Accepted)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Decision::Accepted => "Accepted",
            Decision::Rejected => "Rejected",
            Decision::TentativeRejected => "TentativeRejected",
        }
    }
}

/// Selection outcome: exhaustive decisions plus diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionResult {
    pub decisions: Vec<Decision>,
    pub hits: Vec<u32>,
    pub iterations: u32,
    /// Mean |phi| per real feature, averaged over iterations run.
    pub mean_importance: Vec<f64>,
}

impl SelectionResult {
    pub fn accepted_columns(&self) -> Vec<usize> {
        self.decisions
            .iter()
            .enumerate()
            .filter(|(_, d)| d.is_accepted())
            .map(|(i, _)| i)
            .collect()
    }
}

fn two_sided_binomial_p(hits: u64, n: u64) -> f64 {
    let b = Binomial::new(0.5, n).expect("valid binomial");
    let p_lo = b.cdf(hits);
    let p_hi = 1.0 - if hits == 0 { 0.0 } else { b.cdf(hits - 1) };
    (2.0 * p_lo.min(p_hi)).min(1.0)
}

/// Run the shadow-feature loop. `x` must be complete (imputed) and should be
/// z-normalized; `y` binary.
pub fn boruta_shap(x: &DenseMatrix, y: &[u8], params: &BorutaParams) -> Result<SelectionResult> {
    let n = x.n_rows();
    let d = x.n_cols();
    if n != y.len() {
        return Err(LearnError::Dimension(format!(
            "{n} rows vs {} labels",
            y.len()
        )));
    }
    if d == 0 || n < 4 {
        return Err(LearnError::BadData("selection needs rows and columns".into()));
    }

    let mut decisions: Vec<Option<Decision>> = vec![None; d];
    // constant columns can never beat a shadow; reject them up front
    for j in 0..d {
        let col = x.column(j);
        let first = col[0];
        if col.iter().all(|v| (*v - first).abs() < 1e-12) {
            decisions[j] = Some(Decision::Rejected);
        }
    }

    let mut hits = vec![0u32; d];
    let mut importance_acc = vec![0.0f64; d];
    let mut iterations = 0u32;

    for iter in 1..=params.max_iter {
        if decisions.iter().all(|d| d.is_some()) {
            break;
        }
        iterations = iter as u32;
        let iter_seed = seed::derive_indexed(params.seed, "boruta-iter", iter as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(iter_seed);

        // row subsample (stratified is unnecessary: undersampling upstream)
        let rows: Vec<usize> = if params.row_cap > 0 && n > params.row_cap {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            let mut take = idx[..params.row_cap].to_vec();
            take.sort_unstable();
            take
        } else {
            (0..n).collect()
        };

        // shadows: independent permutation per column
        let mut aug = DenseMatrix::zeros(rows.len(), 2 * d);
        for (ri, r) in rows.iter().enumerate() {
            for j in 0..d {
                aug.set(ri, j, x.get(*r, j));
            }
        }
        for j in 0..d {
            let mut perm: Vec<usize> = (0..rows.len()).collect();
            perm.shuffle(&mut rng);
            for (ri, p) in perm.iter().enumerate() {
                aug.set(ri, d + j, x.get(rows[*p], j));
            }
        }
        let y_sub: Vec<u8> = rows.iter().map(|r| y[*r]).collect();

        let mut gbt = params.gbt;
        gbt.seed = seed::derive_indexed(iter_seed, "boruta-gbt", 0);
        let model = fit_gbt(&aug, &y_sub, &gbt)?;
        let shap = shap_matrix(&model, &aug)?;
        let imp = mean_abs_importance(&shap);
        let shadow_max = imp[d..].iter().cloned().fold(0.0f64, f64::max);
        for j in 0..d {
            importance_acc[j] += imp[j];
            if decisions[j].is_none() && imp[j] > shadow_max {
                hits[j] += 1;
            }
        }

        if iter >= params.min_iter {
            let threshold = params.alpha / d as f64;
            for j in 0..d {
                if decisions[j].is_some() {
                    continue;
                }
                let p = two_sided_binomial_p(hits[j] as u64, iter as u64);
                if p < threshold {
                    decisions[j] = Some(if (hits[j] as f64) > iter as f64 / 2.0 {
                        Decision::Accepted
                    } else {
                        Decision::Rejected
                    });
                }
            }
        }
    }

    let decisions = decisions
        .into_iter()
        .map(|d| d.unwrap_or(Decision::TentativeRejected))
        .collect();
    let mean_importance = importance_acc
        .iter()
        .map(|v| v / iterations.max(1) as f64)
        .collect();
    Ok(SelectionResult {
        decisions,
        hits,
        iterations,
        mean_importance,
    })
}
