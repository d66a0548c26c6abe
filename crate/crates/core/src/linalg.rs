//! Least-squares helpers on top of nalgebra.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Penalty used when the normal equations are singular.
pub(crate) const SINGULAR_RIDGE: f64 = 1e-6;

/// Linear model `y = intercept + x · coef`, one column of `coef` per target.
#[derive(Debug, Clone)]
pub(crate) struct LinearSolution {
    pub coef: DMatrix<f64>,
    pub intercept: Vec<f64>,
    /// The unpenalised system was singular and `SINGULAR_RIDGE` was applied.
    pub ridge_fallback: bool,
}

impl LinearSolution {
    pub fn predict(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = x * &self.coef;
        for mut row in out.row_iter_mut() {
            for (k, v) in row.iter_mut().enumerate() {
                *v += self.intercept[k];
            }
        }
        out
    }
}

/// Ridge regression with an unpenalised intercept.
///
/// Solves `(XcᵀXc + λI) β = Xcᵀyc` on column-centred data. With `lambda == 0`
/// this is ordinary least squares; a singular or badly conditioned system is
/// retried with [`SINGULAR_RIDGE`].
pub(crate) fn ridge(x: &DMatrix<f64>, y: &DMatrix<f64>, lambda: f64) -> Result<LinearSolution> {
    let (n, p) = x.shape();
    if n == 0 || p == 0 {
        return Err(Error::InsufficientData(format!(
            "regression design is {n}x{p}"
        )));
    }
    if y.nrows() != n {
        return Err(Error::ShapeMismatch(format!(
            "{} targets for {n} samples",
            y.nrows()
        )));
    }
    let x_mean: Vec<f64> = x.column_iter().map(|c| c.mean()).collect();
    let y_mean: Vec<f64> = y.column_iter().map(|c| c.mean()).collect();
    let mut xc = x.clone();
    for (j, mut c) in xc.column_iter_mut().enumerate() {
        c.add_scalar_mut(-x_mean[j]);
    }
    let mut yc = y.clone();
    for (k, mut c) in yc.column_iter_mut().enumerate() {
        c.add_scalar_mut(-y_mean[k]);
    }
    let gram = xc.tr_mul(&xc);
    let rhs = xc.tr_mul(&yc);

    let (coef, ridge_fallback) = match solve_spd(&gram, &rhs, lambda) {
        Some(c) => (c, false),
        None => {
            let c = solve_spd(&gram, &rhs, lambda.max(0.0) + SINGULAR_RIDGE)
                .or_else(|| solve_spd(&gram, &rhs, 1e-6 * (1.0 + gram.diagonal().max())))
                .ok_or_else(|| Error::InsufficientData("singular regression design".into()))?;
            (c, true)
        }
    };
    let intercept = (0..y.ncols())
        .map(|k| {
            y_mean[k]
                - x_mean
                    .iter()
                    .zip(coef.column(k).iter())
                    .map(|(m, b)| m * b)
                    .sum::<f64>()
        })
        .collect();
    Ok(LinearSolution {
        coef,
        intercept,
        ridge_fallback,
    })
}

fn solve_spd(gram: &DMatrix<f64>, rhs: &DMatrix<f64>, lambda: f64) -> Option<DMatrix<f64>> {
    let mut a = gram.clone();
    for i in 0..a.nrows() {
        a[(i, i)] += lambda;
    }
    let chol = a.cholesky()?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = (diag.min(), diag.max());
    // diag(L)² spans the eigenvalue range; 1e-7 here is a condition number near 1e14.
    if !(lo > 0.0) || !(hi.is_finite()) || lo < 1e-7 * hi {
        return None;
    }
    let sol = chol.solve(rhs);
    sol.iter().all(|v| v.is_finite()).then_some(sol)
}
