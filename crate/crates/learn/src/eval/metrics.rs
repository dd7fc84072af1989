//! Classification metrics: macro F1 and rank-based ROC-AUC.

use serde::{Deserialize, Serialize};

use crate::{LearnError, Result};

/// Per-class precision/recall/F1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn class_metrics(y_true: &[u8], y_pred: &[u8], class: u8) -> ClassMetrics {
    let mut tp = 0.0;
    let mut fp = 0.0;
    let mut fn_ = 0.0;
    for (t, p) in y_true.iter().zip(y_pred) {
        match (*t == class, *p == class) {
            (true, true) => tp += 1.0,
            (false, true) => fp += 1.0,
            (true, false) => fn_ += 1.0,
            _ => {}
        }
    }
    let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    ClassMetrics {
        precision,
        recall,
        f1,
    }
}

/// Unweighted mean of the two per-class F1 scores. A class with zero
/// predicted positives contributes F1 = 0. Errors when `y_true` is
/// single-class (the fold should be skipped with a warning instead).
pub fn macro_f1(y_true: &[u8], y_pred: &[u8]) -> Result<f64> {
    if y_true.len() != y_pred.len() || y_true.is_empty() {
        return Err(LearnError::Dimension("macro_f1 input lengths".into()));
    }
    let pos = y_true.iter().filter(|v| **v == 1).count();
    if pos == 0 || pos == y_true.len() {
        return Err(LearnError::SingleClass(
            "macro F1 needs both classes in y_true".into(),
        ));
    }
    let ad = class_metrics(y_true, y_pred, 1);
    let normal = class_metrics(y_true, y_pred, 0);
    Ok(0.5 * (ad.f1 + normal.f1))
}

/// Both per-class metric blocks plus accuracy.
pub fn full_metrics(y_true: &[u8], y_pred: &[u8]) -> (ClassMetrics, ClassMetrics, f64) {
    let ad = class_metrics(y_true, y_pred, 1);
    let normal = class_metrics(y_true, y_pred, 0);
    let correct = y_true
        .iter()
        .zip(y_pred)
        .filter(|(t, p)| t == p)
        .count() as f64;
    (ad, normal, correct / y_true.len().max(1) as f64)
}

/// ROC-AUC via the Mann-Whitney U statistic on average ranks; ties get half
/// credit. Errors when either class is absent.
pub fn roc_auc(y_true: &[u8], scores: &[f64]) -> Result<f64> {
    if y_true.len() != scores.len() || y_true.is_empty() {
        return Err(LearnError::Dimension("roc_auc input lengths".into()));
    }
    let n_pos = y_true.iter().filter(|v| **v == 1).count();
    let n_neg = y_true.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(LearnError::SingleClass(
            "ROC-AUC needs both classes".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|a, b| scores[*a].partial_cmp(&scores[*b]).unwrap());
    // average ranks over tie groups (1-based)
    let mut rank = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            rank[order[k]] = avg;
        }
        i = j + 1;
    }
    let rank_sum_pos: f64 = y_true
        .iter()
        .zip(&rank)
        .filter(|(t, _)| **t == 1)
        .map(|(_, r)| r)
        .sum();
    let u = rank_sum_pos - (n_pos as f64) * (n_pos as f64 + 1.0) / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Mean and sample standard deviation of a metric across runs.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
        / (values.len() - 1) as f64;
    (mean, var.sqrt())
}

/// Two-sided paired t-test p-value (Student t with n-1 df).
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Option<f64> {
    use statrs::distribution::{ContinuousCDF, StudentsT};
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let (mean, sd) = mean_std(&diffs);
    if sd <= 0.0 {
        return Some(if mean == 0.0 { 1.0 } else { 0.0 });
    }
    let n = diffs.len() as f64;
    let t = mean / (sd / n.sqrt());
    let dist = StudentsT::new(0.0, 1.0, n - 1.0).ok()?;
    Some(2.0 * (1.0 - dist.cdf(t.abs())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn perfect_predictions_score_one() {
        let y = vec![0u8, 1, 0, 1, 1, 0];
        assert_eq!(macro_f1(&y, &y).unwrap(), 1.0);
        let scores: Vec<f64> = y.iter().map(|v| *v as f64).collect();
        assert_eq!(roc_auc(&y, &scores).unwrap(), 1.0);
    }

    #[test]
    fn inverted_predictions_score_zero() {
        let y = vec![0u8, 1, 0, 1];
        let inv: Vec<u8> = y.iter().map(|v| 1 - v).collect();
        assert_eq!(macro_f1(&y, &inv).unwrap(), 0.0);
    }

    #[test]
    fn always_majority_on_paper_counts() {
        // 210 AD / 3486 normal, always predicting normal:
        // F1(normal) = 2 * 0.9432 / 1.9432, F1(AD) = 0
        let mut y = vec![1u8; 210];
        y.extend(vec![0u8; 3486]);
        let pred = vec![0u8; 3696];
        let f1 = macro_f1(&y, &pred).unwrap();
        let frac: f64 = 3486.0 / 3696.0;
        let expect = 0.5 * (2.0 * frac / (frac + 1.0));
        assert!((f1 - expect).abs() < 1e-12);
        assert!((f1 - 0.485).abs() < 0.001, "macro F1 {f1:.4}");
    }

    #[test]
    fn single_class_truth_is_error() {
        assert!(macro_f1(&[1, 1, 1], &[1, 1, 0]).is_err());
        assert!(roc_auc(&[0, 0], &[0.1, 0.2]).is_err());
    }

    #[test]
    fn constant_scores_auc_half() {
        let y = vec![0u8, 1, 0, 1, 1];
        let s = vec![0.7; 5];
        assert!((roc_auc(&y, &s).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn random_scores_auc_near_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 10_000;
        let y: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2) as u8).collect();
        let s: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let auc = roc_auc(&y, &s).unwrap();
        assert!((auc - 0.5).abs() < 0.02, "auc {auc}");
    }

    /// Brute-force confusion-matrix macro F1.
    fn macro_f1_oracle(y_true: &[u8], y_pred: &[u8]) -> f64 {
        let mut f1s = Vec::new();
        for class in [1u8, 0] {
            let tp = y_true
                .iter()
                .zip(y_pred)
                .filter(|(t, p)| **t == class && **p == class)
                .count() as f64;
            let fp = y_true
                .iter()
                .zip(y_pred)
                .filter(|(t, p)| **t != class && **p == class)
                .count() as f64;
            let fn_ = y_true
                .iter()
                .zip(y_pred)
                .filter(|(t, p)| **t == class && **p != class)
                .count() as f64;
            let f1 = if 2.0 * tp + fp + fn_ > 0.0 {
                2.0 * tp / (2.0 * tp + fp + fn_)
            } else {
                0.0
            };
            f1s.push(f1);
        }
        (f1s[0] + f1s[1]) / 2.0
    }

    /// O(n^2) pairwise ROC-AUC oracle.
    fn roc_auc_oracle(y_true: &[u8], scores: &[f64]) -> f64 {
        let mut wins = 0.0;
        let mut total = 0.0;
        for i in 0..y_true.len() {
            for j in 0..y_true.len() {
                if y_true[i] == 1 && y_true[j] == 0 {
                    total += 1.0;
                    if scores[i] > scores[j] {
                        wins += 1.0;
                    } else if scores[i] == scores[j] {
                        wins += 0.5;
                    }
                }
            }
        }
        wins / total
    }

    #[test]
    fn metrics_match_brute_force_oracles() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for trial in 0..1000 {
            let n = rng.gen_range(4..=50);
            let mut y: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2) as u8).collect();
            // force both classes
            y[0] = 0;
            y[1] = 1;
            let pred: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2) as u8).collect();
            // quantized scores produce plenty of ties
            let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..5) as f64 / 4.0).collect();
            let f1 = macro_f1(&y, &pred).unwrap();
            assert!(
                (f1 - macro_f1_oracle(&y, &pred)).abs() < 1e-12,
                "trial {trial}"
            );
            let auc = roc_auc(&y, &scores).unwrap();
            assert!(
                (auc - roc_auc_oracle(&y, &scores)).abs() < 1e-12,
                "trial {trial}: {auc} vs oracle"
            );
        }
    }

    #[test]
    fn paired_t_test_detects_shift() {
        let a: Vec<f64> = (0..9).map(|i| 0.70 + 0.01 * (i % 3) as f64).collect();
        let b: Vec<f64> = a.iter().map(|v| v - 0.05).collect();
        let p = paired_t_test(&a, &b).unwrap();
        assert!(p < 0.05, "p={p}");
        let p_same = paired_t_test(&a, &a).unwrap();
        assert!(p_same > 0.9);
    }
}
