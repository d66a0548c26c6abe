//! Multi-target trend regressor: a low-degree polynomial of time per series.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Polynomial `c0 + c1 s + c2 s²` in scaled time `s = t / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendModel {
    pub degree: usize,
    pub coefficients: Vec<f64>,
    pub scale: f64,
    pub n_train: usize,
}

impl TrendModel {
    pub fn value_at(&self, t: f64) -> f64 {
        let s = t / self.scale;
        self.coefficients
            .iter()
            .enumerate()
            .map(|(k, c)| c * s.powi(k as i32))
            .sum()
    }

    pub fn forecast(&self, h: usize) -> Vec<f64> {
        (0..h)
            .map(|k| self.value_at((self.n_train + k) as f64))
            .collect()
    }
}

fn fit_degree(y: &[f64], degree: usize, scale: f64) -> Result<TrendModel> {
    let n = y.len();
    let design = DMatrix::from_fn(n, degree, |t, k| (t as f64 / scale).powi(k as i32 + 1));
    let target = DMatrix::from_column_slice(n, 1, y);
    let sol = linalg::ridge(&design, &target, 0.0)?;
    let mut coefficients = vec![sol.intercept[0]];
    coefficients.extend(sol.coef.column(0).iter());
    Ok(TrendModel {
        degree,
        coefficients,
        scale,
        n_train: n,
    })
}

/// Chooses degree 1 or 2 by squared error on the last 10% of `y` (fitting on
/// the rest), then refits the chosen degree on all of `y`.
pub fn trend_fit(y: &[f64]) -> Result<TrendModel> {
    let n = y.len();
    if n < 4 {
        return Err(Error::InsufficientData(format!(
            "trend regressor needs at least 4 rows, got {n}"
        )));
    }
    let scale = n as f64;
    let n_hold = ((n as f64 * 0.1).ceil() as usize).max(1);
    let n_fit = n - n_hold;
    let holdout_sse = |degree: usize| -> Result<f64> {
        let m = fit_degree(&y[..n_fit], degree, scale)?;
        Ok((n_fit..n)
            .map(|t| (m.value_at(t as f64) - y[t]).powi(2))
            .sum())
    };
    let sse1 = holdout_sse(1)?;
    // Degree 2 needs 3 points to be determined.
    let degree = if n_fit >= 3 {
        let sse2 = holdout_sse(2)?;
        let energy: f64 = y[n_fit..].iter().map(|v| v * v).sum();
        if sse2 + 1e-12 * energy < sse1 {
            2
        } else {
            1
        }
    } else {
        1
    };
    fit_degree(y, degree, scale)
}
