//! FFT-based spectral estimation: Hann periodogram, Welch averaging, band
//! powers, and magnitude-spectrum shape statistics.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// One-sided power spectral density with a Hann window (density scaling).
/// Returns (frequencies, psd).
pub fn periodogram(x: &[f64], rate_hz: f64) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    if n < 4 {
        return (Vec::new(), Vec::new());
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let mut window_power = 0.0;
    let mut buf: Vec<Complex<f64>> = (0..n)
        .map(|i| {
            let w = 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / n as f64).cos();
            window_power += w * w;
            Complex::new((x[i] - mean) * w, 0.0)
        })
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    let half = n / 2;
    let scale = 1.0 / (rate_hz * window_power);
    let mut freqs = Vec::with_capacity(half + 1);
    let mut psd = Vec::with_capacity(half + 1);
    for (k, f) in (0..=half).map(|k| (k, k as f64 * rate_hz / n as f64)) {
        let mut p = buf[k].norm_sqr() * scale;
        if k != 0 && !(n % 2 == 0 && k == half) {
            p *= 2.0; // fold negative frequencies
        }
        freqs.push(f);
        psd.push(p);
    }
    (freqs, psd)
}

/// Welch PSD: Hann segments of `seg_len` with 50% overlap, averaged.
/// Falls back to a single segment when the input is shorter than `seg_len`.
pub fn welch(x: &[f64], rate_hz: f64, seg_len: usize) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let seg = seg_len.min(n).max(8);
    let step = (seg / 2).max(1);
    let mut acc: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut count = 0.0;
    let mut start = 0;
    while start + seg <= n {
        let (f, p) = periodogram(&x[start..start + seg], rate_hz);
        match &mut acc {
            None => acc = Some((f, p)),
            Some((_, ap)) => {
                for (a, b) in ap.iter_mut().zip(&p) {
                    *a += b;
                }
            }
        }
        count += 1.0;
        start += step;
    }
    match acc {
        Some((f, mut p)) => {
            for v in p.iter_mut() {
                *v /= count;
            }
            (f, p)
        }
        None => periodogram(x, rate_hz),
    }
}

/// Integrated power over `lo <= f < hi` (rectangular rule).
pub fn band_power(freqs: &[f64], psd: &[f64], lo: f64, hi: f64) -> f64 {
    if freqs.len() < 2 {
        return 0.0;
    }
    let df = freqs[1] - freqs[0];
    freqs
        .iter()
        .zip(psd)
        .filter(|(f, _)| **f >= lo && **f < hi)
        .map(|(_, p)| p * df)
        .sum()
}

/// Peak frequency within `[lo, hi]` with parabolic sub-bin interpolation.
/// Returns (frequency, magnitude) of the peak.
pub fn peak_frequency(freqs: &[f64], mag: &[f64], lo: f64, hi: f64) -> Option<(f64, f64)> {
    let idx: Vec<usize> = freqs
        .iter()
        .enumerate()
        .filter(|(_, f)| **f >= lo && **f <= hi)
        .map(|(i, _)| i)
        .collect();
    if idx.is_empty() {
        return None;
    }
    let k = *idx
        .iter()
        .max_by(|a, b| mag[**a].partial_cmp(&mag[**b]).unwrap())?;
    if k == 0 || k + 1 >= mag.len() {
        return Some((freqs[k], mag[k]));
    }
    let (a, b, c) = (mag[k - 1], mag[k], mag[k + 1]);
    let denom = a - 2.0 * b + c;
    let delta = if denom.abs() > 1e-12 {
        (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    let df = freqs[1] - freqs[0];
    Some((freqs[k] + delta * df, b - 0.25 * (a - c) * delta))
}

/// Shape statistics of a magnitude spectrum treated as a distribution over
/// frequency.
#[derive(Debug, Clone, Copy)]
pub struct SpectralShape {
    pub magnitude_area: f64,
    pub freq_mean: f64,
    pub freq_std: f64,
    /// Frequency span holding the central 90% of the magnitude mass.
    pub range: f64,
    pub skew: f64,
    pub kurt: f64,
}

pub fn spectral_shape(freqs: &[f64], mag: &[f64]) -> Option<SpectralShape> {
    if freqs.len() < 3 {
        return None;
    }
    let total: f64 = mag.iter().sum();
    if total <= 0.0 {
        return None;
    }
    let df = freqs[1] - freqs[0];
    let mean = freqs.iter().zip(mag).map(|(f, m)| f * m).sum::<f64>() / total;
    let m2 = freqs
        .iter()
        .zip(mag)
        .map(|(f, m)| (f - mean).powi(2) * m)
        .sum::<f64>()
        / total;
    let m3 = freqs
        .iter()
        .zip(mag)
        .map(|(f, m)| (f - mean).powi(3) * m)
        .sum::<f64>()
        / total;
    let m4 = freqs
        .iter()
        .zip(mag)
        .map(|(f, m)| (f - mean).powi(4) * m)
        .sum::<f64>()
        / total;
    let std = m2.sqrt();
    let mut cum = 0.0;
    let mut f_lo = freqs[0];
    let mut f_hi = *freqs.last().unwrap();
    let mut seen_lo = false;
    for (f, m) in freqs.iter().zip(mag) {
        cum += m / total;
        if !seen_lo && cum >= 0.05 {
            f_lo = *f;
            seen_lo = true;
        }
        if cum >= 0.95 {
            f_hi = *f;
            break;
        }
    }
    Some(SpectralShape {
        magnitude_area: total * df,
        freq_mean: mean,
        freq_std: std,
        range: (f_hi - f_lo).max(0.0),
        skew: if std > 0.0 { m3 / std.powi(3) } else { 0.0 },
        kurt: if m2 > 0.0 { m4 / (m2 * m2) } else { 0.0 },
    })
}

/// Magnitude spectrum (Hann window, one-sided).
pub fn magnitude_spectrum(x: &[f64], rate_hz: f64) -> (Vec<f64>, Vec<f64>) {
    let (f, p) = periodogram(x, rate_hz);
    let m = p.iter().map(|v| v.sqrt()).collect();
    (f, m)
}
