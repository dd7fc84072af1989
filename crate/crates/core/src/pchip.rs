//! Shape-preserving piecewise-cubic Hermite interpolation.
//!
//! Node slopes follow the Fritsch–Carlson limiting rule (weighted harmonic
//! mean on the interior, one-sided secant formula with clamping at the ends),
//! which keeps the interpolant monotone wherever the data are monotone and
//! prevents overshoot past adjacent knot values. Queries outside the knot
//! range are an error; the interpolant is undefined there.

use crate::{CoreError, Result};

/// Monotone cubic interpolant over strictly increasing knots.
#[derive(Debug, Clone)]
pub struct Pchip {
    t: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl Pchip {
    pub fn new(t: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = t.len();
        if n < 2 || y.len() != n {
            return Err(CoreError::BadKnots(format!(
                "got {} t / {} y values",
                n,
                y.len()
            )));
        }
        if t.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(CoreError::BadKnots("non-finite knot".into()));
        }

        let mut h = Vec::with_capacity(n - 1);
        let mut delta = Vec::with_capacity(n - 1);
        for k in 0..n - 1 {
            let hk = t[k + 1] - t[k];
            if hk <= 0.0 {
                return Err(CoreError::BadKnots("t must be strictly increasing".into()));
            }
            h.push(hk);
            delta.push((y[k + 1] - y[k]) / hk);
        }

        let mut d = vec![0.0; n];
        for k in 1..n - 1 {
            let s1 = delta[k - 1];
            let s2 = delta[k];
            if s1 == 0.0 || s2 == 0.0 || s1.signum() != s2.signum() {
                d[k] = 0.0;
            } else {
                // Brodlie-weighted harmonic mean keeps |d| within the
                // Fritsch-Carlson monotonicity region.
                let w1 = 2.0 * h[k] + h[k - 1];
                let w2 = h[k] + 2.0 * h[k - 1];
                d[k] = (w1 + w2) / (w1 / s1 + w2 / s2);
            }
        }
        d[0] = edge_slope(h[0], delta[0], h.get(1).copied(), delta.get(1).copied());
        d[n - 1] = edge_slope(
            h[n - 2],
            delta[n - 2],
            if n >= 3 { Some(h[n - 3]) } else { None },
            if n >= 3 { Some(delta[n - 3]) } else { None },
        );

        Ok(Pchip { t, y, d })
    }

    pub fn t_first(&self) -> f64 {
        self.t[0]
    }

    pub fn t_last(&self) -> f64 {
        *self.t.last().unwrap()
    }

    /// Evaluate at `q`; exact at knots, error outside `[t_first, t_last]`.
    pub fn eval(&self, q: f64) -> Result<f64> {
        let n = self.t.len();
        if q < self.t[0] || q > self.t[n - 1] {
            return Err(CoreError::OutOfRange {
                query: q,
                lo: self.t[0],
                hi: self.t[n - 1],
            });
        }
        let k = match self.t.binary_search_by(|v| v.partial_cmp(&q).unwrap()) {
            Ok(i) => i.min(n - 2),
            Err(i) => i - 1,
        };
        let hk = self.t[k + 1] - self.t[k];
        let s = (q - self.t[k]) / hk;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        Ok(h00 * self.y[k] + h10 * hk * self.d[k] + h01 * self.y[k + 1] + h11 * hk * self.d[k + 1])
    }

    /// Evaluate on a uniform grid `start, start+dt, ...` of `n` points.
    pub fn eval_grid(&self, start: f64, dt: f64, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|i| self.eval(start + i as f64 * dt)).collect()
    }
}

/// One-sided three-point slope estimate with Fritsch-Carlson clamps.
fn edge_slope(h0: f64, s0: f64, h1: Option<f64>, s1: Option<f64>) -> f64 {
    let (h1, s1) = match (h1, s1) {
        (Some(h1), Some(s1)) => (h1, s1),
        _ => return s0, // two knots: the secant
    };
    let mut d = ((2.0 * h0 + h1) * s0 - h0 * s1) / (h0 + h1);
    if d.signum() != s0.signum() || s0 == 0.0 {
        d = 0.0;
    } else if s0.signum() != s1.signum() && d.abs() > 3.0 * s0.abs() {
        d = 3.0 * s0;
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_at_knots() {
        let p = Pchip::new(vec![0.0, 1.5, 4.0], vec![120.0, 125.0, 150.0]).unwrap();
        assert_eq!(p.eval(0.0).unwrap(), 120.0);
        assert_eq!(p.eval(1.5).unwrap(), 125.0);
        assert_eq!(p.eval(4.0).unwrap(), 150.0);
    }

    #[test]
    fn constant_data_stays_constant() {
        let p = Pchip::new(vec![0.0, 180.0, 360.0], vec![120.0, 120.0, 120.0]).unwrap();
        for i in 0..=360 {
            assert!((p.eval(i as f64).unwrap() - 120.0).abs() < 1e-12);
        }
    }

    #[test]
    fn no_overshoot_on_monotone_knots() {
        let p = Pchip::new(vec![0.0, 180.0, 360.0], vec![120.0, 125.0, 150.0]).unwrap();
        let mut q = 0.0;
        while q <= 360.0 {
            let v = p.eval(q).unwrap();
            assert!((120.0..=150.0).contains(&v), "overshoot at {q}: {v}");
            q += 0.1;
        }
    }

    #[test]
    fn rejects_out_of_range() {
        let p = Pchip::new(vec![0.0, 1.0], vec![0.0, 1.0]).unwrap();
        assert!(matches!(p.eval(-0.1), Err(CoreError::OutOfRange { .. })));
        assert!(matches!(p.eval(1.1), Err(CoreError::OutOfRange { .. })));
    }

    #[test]
    fn rejects_bad_knots() {
        assert!(Pchip::new(vec![0.0], vec![1.0]).is_err());
        assert!(Pchip::new(vec![0.0, 0.0], vec![1.0, 2.0]).is_err());
        assert!(Pchip::new(vec![0.0, f64::NAN], vec![1.0, 2.0]).is_err());
    }

    // Reference values from scipy 1.15.3 PchipInterpolator (numpy 2.2.6):
    //   rng = np.random.default_rng(20250809)
    //   x = np.cumsum(rng.uniform(30.0, 200.0, size=9))
    //   y = 100.0 + rng.normal(0.0, 18.0, size=9).cumsum()
    //   q = np.linspace(x[0], x[-1], num=13)
    //   PchipInterpolator(x, y, extrapolate=False)(q)
    const KNOT_T: [f64; 9] = [
        156.49778786071596,
        266.04297915497136,
        366.25051743537614,
        453.5116338372617,
        614.4373486724519,
        737.381213548803,
        917.394785854139,
        1041.5666620270288,
        1100.378598203938,
    ];
    const KNOT_Y: [f64; 9] = [
        69.5813684120792,
        66.9816665464493,
        65.89568509118098,
        93.25229082093247,
        102.2295083034947,
        80.45677359620586,
        72.59461678368197,
        117.25558703688331,
        122.23215527141137,
    ];
    const QUERY_T: [f64; 13] = [
        156.49778786071596,
        235.15452205598444,
        313.811256251253,
        392.46799044652147,
        471.12472464178995,
        549.7814588370584,
        628.438193032327,
        707.0949272275955,
        785.7516614228639,
        864.4083956181325,
        943.065129813401,
        1021.7218640086694,
        1100.378598203938,
    ];
    const EXPECTED: [f64; 13] = [
        69.5813684120792,
        67.53031579819074,
        66.28303921597201,
        71.25954993530023,
        94.9725425221302,
        100.62763500264394,
        101.54963323804984,
        85.0225433758689,
        77.17477013922948,
        73.43556105994351,
        76.99445669924945,
        112.41058887843246,
        122.23215527141137,
    ];

    #[test]
    fn matches_scipy_fixture() {
        let p = Pchip::new(KNOT_T.to_vec(), KNOT_Y.to_vec()).unwrap();
        for (q, e) in QUERY_T.iter().zip(EXPECTED) {
            let v = p.eval(*q).unwrap();
            assert!((v - e).abs() < 1e-9, "at {q}: {v} vs {e}");
        }
    }
}
