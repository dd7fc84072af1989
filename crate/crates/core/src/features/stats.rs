//! Descriptive statistics shared by the feature extractors.

/// Arithmetic mean; None for empty input.
pub fn mean(x: &[f64]) -> Option<f64> {
    if x.is_empty() {
        None
    } else {
        Some(x.iter().sum::<f64>() / x.len() as f64)
    }
}

/// Sample variance (N-1); None for fewer than 2 points.
pub fn variance(x: &[f64]) -> Option<f64> {
    if x.len() < 2 {
        return None;
    }
    let m = mean(x)?;
    Some(x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64)
}

pub fn std_dev(x: &[f64]) -> Option<f64> {
    variance(x).map(f64::sqrt)
}

pub fn rms(x: &[f64]) -> Option<f64> {
    if x.is_empty() {
        return None;
    }
    Some((x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt())
}

/// Skewness from population moments (m3 / m2^1.5); 0 on a flat signal.
pub fn skewness(x: &[f64]) -> Option<f64> {
    if x.len() < 3 {
        return None;
    }
    let m = mean(x)?;
    let n = x.len() as f64;
    let m2 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    let m3 = x.iter().map(|v| (v - m).powi(3)).sum::<f64>() / n;
    if m2 <= 0.0 {
        return Some(0.0);
    }
    Some(m3 / m2.powf(1.5))
}

/// Kurtosis (non-excess, m4 / m2^2); 0 on a flat signal.
pub fn kurtosis(x: &[f64]) -> Option<f64> {
    if x.len() < 4 {
        return None;
    }
    let m = mean(x)?;
    let n = x.len() as f64;
    let m2 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    let m4 = x.iter().map(|v| (v - m).powi(4)).sum::<f64>() / n;
    if m2 <= 0.0 {
        return Some(0.0);
    }
    Some(m4 / (m2 * m2))
}

pub use crate::dsp::wavelet::{mad, median};

/// Linear-interpolation percentile, `q` in [0, 100].
pub fn percentile(x: &[f64], q: f64) -> Option<f64> {
    if x.is_empty() {
        return None;
    }
    let mut v = x.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = q / 100.0 * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        Some(v[lo])
    } else {
        let frac = pos - lo as f64;
        Some(v[lo] * (1.0 - frac) + v[hi] * frac)
    }
}

/// Sample entropy with embedding `m`, tolerance `r` (absolute), Chebyshev
/// distance, self-matches excluded. None when undefined (too short or no
/// matches).
pub fn sample_entropy(x: &[f64], m: usize, r: f64) -> Option<f64> {
    let n = x.len();
    if n < m + 2 || r <= 0.0 {
        return None;
    }
    let count = |dim: usize| -> u64 {
        let mut c = 0u64;
        let limit = n - dim;
        for i in 0..limit {
            for j in i + 1..limit {
                let mut ok = true;
                for k in 0..dim {
                    if (x[i + k] - x[j + k]).abs() > r {
                        ok = false;
                        break;
                    }
                }
                if ok {
                    c += 1;
                }
            }
        }
        c
    };
    let b = count(m);
    let a = count(m + 1);
    if a == 0 || b == 0 {
        return None;
    }
    Some(-((a as f64) / (b as f64)).ln())
}

/// Decimate by an integer factor (plain subsampling).
pub fn decimate(x: &[f64], factor: usize) -> Vec<f64> {
    if factor <= 1 {
        return x.to_vec();
    }
    x.iter().step_by(factor).copied().collect()
}
