//! Autoregressive model with AIC order selection.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArParams {
    pub order: usize,
    /// `coefficients[i]` multiplies lag `i + 1`.
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub aic: f64,
    /// The least-squares system was singular and a small ridge penalty was used.
    pub ridge_fallback: bool,
    /// Last `order` training values, oldest first.
    pub history: Vec<f64>,
}

impl ArParams {
    /// Recursive multi-step forecast.
    pub fn forecast(&self, h: usize) -> Vec<f64> {
        let mut buf = self.history.clone();
        let mut out = Vec::with_capacity(h);
        for _ in 0..h {
            let n = buf.len();
            let next = self.intercept
                + self
                    .coefficients
                    .iter()
                    .enumerate()
                    .map(|(i, c)| c * buf[n - 1 - i])
                    .sum::<f64>();
            buf.push(next);
            out.push(next);
        }
        out
    }
}

/// Fits AR(p) for every `p` in `1..=max_p` by least squares on a common
/// sample and keeps the order minimising `n ln(SSE/n) + 2(p + 1)`.
pub fn ar_fit(x: &[f64], max_p: usize) -> Result<ArParams> {
    if max_p == 0 {
        return Err(Error::InvalidArgument("max order must be positive".into()));
    }
    if x.len() <= 2 * max_p + 2 {
        return Err(Error::InsufficientData(format!(
            "AR search up to order {max_p} needs more than {} rows, got {}",
            2 * max_p + 2,
            x.len()
        )));
    }
    let n_eff = x.len() - max_p;
    let y = DMatrix::from_fn(n_eff, 1, |r, _| x[max_p + r]);
    let mut best: Option<ArParams> = None;
    for p in 1..=max_p {
        let design = DMatrix::from_fn(n_eff, p, |r, i| x[max_p + r - 1 - i]);
        let sol = linalg::ridge(&design, &y, 0.0)?;
        let fitted = sol.predict(&design);
        let sse: f64 = fitted
            .iter()
            .zip(y.iter())
            .map(|(f, t)| (f - t).powi(2))
            .sum();
        let nf = n_eff as f64;
        let aic = nf * (sse / nf).max(f64::MIN_POSITIVE).ln() + 2.0 * (p as f64 + 1.0);
        if best.as_ref().map_or(true, |b| aic < b.aic) {
            best = Some(ArParams {
                order: p,
                coefficients: sol.coef.column(0).iter().copied().collect(),
                intercept: sol.intercept[0],
                aic,
                ridge_fallback: sol.ridge_fallback,
                history: x[x.len() - p..].to_vec(),
            });
        }
    }
    best.ok_or_else(|| Error::InsufficientData("no AR order could be fitted".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn ar1(n: usize, phi: f64, sd: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, sd).unwrap();
        let mut x = vec![1.0];
        for _ in 1..n {
            let prev = *x.last().unwrap();
            x.push(phi * prev + noise.sample(&mut rng));
        }
        x
    }

    #[test]
    fn recovers_ar1_coefficient() {
        let x = ar1(500, 0.8, 0.01, 7);
        let p = ar_fit(&x, 5).unwrap();
        assert!((p.coefficients[0] - 0.8).abs() < 0.05, "{:?}", p);
    }

    #[test]
    fn constant_series_forecasts_constant() {
        let p = ar_fit(&[4.0; 40], 3).unwrap();
        assert!(p.ridge_fallback);
        assert!(p.forecast(10).iter().all(|v| (v - 4.0).abs() < 1e-6));
    }

    #[test]
    fn too_short() {
        assert!(ar_fit(&[1.0, 2.0, 3.0, 4.0, 5.0], 5).is_err());
    }

    #[test]
    fn deterministic_bits() {
        let x = ar1(300, 0.5, 1.0, 3);
        let a = ar_fit(&x, 6).unwrap();
        let b = ar_fit(&x, 6).unwrap();
        assert_eq!(a, b);
    }
}
