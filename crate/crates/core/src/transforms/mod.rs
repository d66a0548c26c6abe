//! Data transformations and their inverses.
//!
//! Stateless transformers (log, Box-Cox, Fisher) map values one at a time
//! and never look at sequence position. Difference is stateful: it keeps the
//! first and last input rows so both the full series and a forecast that
//! continues it can be inverted. The flatten family lives in [`window`].
//!
//! A [`TransformChain`] is inverted by applying each step's inverse in the
//! reverse order of application.

mod window;

pub use window::{Conditioning, Flattener, WindowScale, WindowedDataset};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::TimeSeriesFrame;

/// Box-Cox λ grid, −2 to 2 in steps of 0.5.
pub const BOX_COX_GRID: [f64; 9] = [-2.0, -1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0];

/// Fisher inputs are rescaled into `[-FISHER_BOUND, FISHER_BOUND]` before `atanh`.
pub const FISHER_BOUND: f64 = 0.999;

/// Every transformer kind, including the window-producing flatten family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransformKind {
    Log,
    BoxCox,
    Fisher,
    Difference,
    Flatten,
    LocalizedFlatten,
    NormalizedFlatten,
}

impl TransformKind {
    pub fn is_stateful(self) -> bool {
        !matches!(self, Self::Log | Self::BoxCox | Self::Fisher)
    }
}

/// A series-to-series transformer with its fitted state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transformer {
    Log,
    BoxCox {
        lambdas: Option<Vec<f64>>,
    },
    Fisher {
        /// Per-column `(min, max)` of the fitted data.
        ranges: Option<Vec<(f64, f64)>>,
    },
    Difference {
        state: Option<DifferenceState>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifferenceState {
    pub anchors: Vec<f64>,
    pub anchor_timestamp: Option<i64>,
    pub last: Vec<f64>,
}

impl Transformer {
    pub fn log() -> Self {
        Self::Log
    }

    pub fn box_cox() -> Self {
        Self::BoxCox { lambdas: None }
    }

    pub fn fisher() -> Self {
        Self::Fisher { ranges: None }
    }

    pub fn difference() -> Self {
        Self::Difference { state: None }
    }

    pub fn kind(&self) -> TransformKind {
        match self {
            Self::Log => TransformKind::Log,
            Self::BoxCox { .. } => TransformKind::BoxCox,
            Self::Fisher { .. } => TransformKind::Fisher,
            Self::Difference { .. } => TransformKind::Difference,
        }
    }

    pub fn is_fitted(&self) -> bool {
        match self {
            Self::Log => true,
            Self::BoxCox { lambdas } => lambdas.is_some(),
            Self::Fisher { ranges } => ranges.is_some(),
            Self::Difference { state } => state.is_some(),
        }
    }

    /// Fits the transformer's state on `frame` and transforms it.
    pub fn fit_transform(&mut self, frame: &TimeSeriesFrame) -> Result<TimeSeriesFrame> {
        match self {
            Self::Log => {}
            Self::BoxCox { lambdas } => {
                require_positive(frame, "box-cox")?;
                *lambdas = Some(frame.columns().iter().map(|c| fit_box_cox(c)).collect());
            }
            Self::Fisher { ranges } => {
                *ranges = Some(
                    frame
                        .columns()
                        .iter()
                        .map(|c| {
                            let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
                            let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                            (lo, hi)
                        })
                        .collect(),
                );
            }
            Self::Difference { state } => {
                if frame.n_rows() < 2 {
                    return Err(Error::InsufficientData(
                        "difference needs at least 2 rows".into(),
                    ));
                }
                *state = Some(DifferenceState {
                    anchors: frame.row(0),
                    anchor_timestamp: frame.timestamps().map(|t| t[0]),
                    last: frame.last_row(),
                });
            }
        }
        self.transform(frame)
    }

    /// Applies the fitted transformer.
    pub fn transform(&self, frame: &TimeSeriesFrame) -> Result<TimeSeriesFrame> {
        match self {
            Self::Log => {
                require_positive(frame, "log")?;
                map_columns(frame, |_, v| v.ln())
            }
            Self::BoxCox { lambdas } => {
                let l = lambdas.as_ref().ok_or(Error::NotFitted("box-cox"))?;
                require_positive(frame, "box-cox")?;
                map_columns(frame, |j, v| box_cox(v, l[j]))
            }
            Self::Fisher { ranges } => {
                let r = ranges.as_ref().ok_or(Error::NotFitted("fisher"))?;
                map_columns(frame, |j, v| fisher(v, r[j]))
            }
            Self::Difference { .. } => {
                let n = frame.n_rows();
                if n < 2 {
                    return Err(Error::InsufficientData(
                        "difference needs at least 2 rows".into(),
                    ));
                }
                let cols = frame
                    .columns()
                    .iter()
                    .map(|c| c.windows(2).map(|w| w[1] - w[0]).collect())
                    .collect();
                match frame.timestamps() {
                    Some(ts) => TimeSeriesFrame::with_timestamps(
                        ts[1..].to_vec(),
                        cols,
                        frame.names().to_vec(),
                    ),
                    None => TimeSeriesFrame::new(cols, frame.names().to_vec()),
                }
            }
        }
    }

    /// Inverts a transformed copy of the fitted frame.
    pub fn inverse(&self, frame: &TimeSeriesFrame) -> Result<TimeSeriesFrame> {
        match self {
            Self::Difference { state } => {
                let s = state.as_ref().ok_or(Error::NotFitted("difference"))?;
                check_width(frame.n_cols(), s.anchors.len())?;
                let cols: Vec<Vec<f64>> = frame
                    .columns()
                    .iter()
                    .zip(&s.anchors)
                    .map(|(c, &a)| integrate(a, c.iter().copied(), true))
                    .collect();
                match (frame.timestamps(), s.anchor_timestamp) {
                    (Some(ts), Some(t0)) => {
                        let mut t = vec![t0];
                        t.extend_from_slice(ts);
                        TimeSeriesFrame::with_timestamps(t, cols, frame.names().to_vec())
                    }
                    _ => TimeSeriesFrame::new(cols, frame.names().to_vec()),
                }
            }
            _ => {
                let inv = self.inverse_values(&frame_to_matrix(frame))?;
                frame.with_columns(matrix_to_columns(&inv))
            }
        }
    }

    /// Inverts forecast rows (`h × d`) that continue the fitted data.
    pub fn inverse_forecast(&self, values: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match self {
            Self::Difference { state } => {
                let s = state.as_ref().ok_or(Error::NotFitted("difference"))?;
                check_width(values.ncols(), s.last.len())?;
                let mut out = values.clone();
                for (j, mut col) in out.column_iter_mut().enumerate() {
                    let restored = integrate(s.last[j], col.iter().copied(), false);
                    col.iter_mut().zip(restored).for_each(|(v, r)| *v = r);
                }
                Ok(out)
            }
            _ => self.inverse_values(values),
        }
    }

    fn inverse_values(&self, values: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut out = values.clone();
        match self {
            Self::Log => out.apply(|v| *v = v.exp()),
            Self::BoxCox { lambdas } => {
                let l = lambdas.as_ref().ok_or(Error::NotFitted("box-cox"))?;
                check_width(values.ncols(), l.len())?;
                for (j, mut col) in out.column_iter_mut().enumerate() {
                    col.apply(|v| *v = inverse_box_cox(*v, l[j]));
                }
            }
            Self::Fisher { ranges } => {
                let r = ranges.as_ref().ok_or(Error::NotFitted("fisher"))?;
                check_width(values.ncols(), r.len())?;
                for (j, mut col) in out.column_iter_mut().enumerate() {
                    col.apply(|v| *v = inverse_fisher(*v, r[j]));
                }
            }
            Self::Difference { .. } => unreachable!("handled by callers"),
        }
        Ok(out)
    }
}

fn check_width(got: usize, fitted: usize) -> Result<()> {
    if got != fitted {
        return Err(Error::ShapeMismatch(format!(
            "transformer fitted on {fitted} columns, given {got}"
        )));
    }
    Ok(())
}

/// Running sum starting at `start`; `include_start` prepends it.
fn integrate(start: f64, diffs: impl Iterator<Item = f64>, include_start: bool) -> Vec<f64> {
    let mut acc = start;
    let mut out = Vec::new();
    if include_start {
        out.push(start);
    }
    for d in diffs {
        acc += d;
        out.push(acc);
    }
    out
}

fn require_positive(frame: &TimeSeriesFrame, what: &str) -> Result<()> {
    for (j, c) in frame.columns().iter().enumerate() {
        if let Some(v) = c.iter().find(|v| !(**v > 0.0)) {
            return Err(Error::Domain(format!(
                "{what} requires positive values; column `{}` contains {v}",
                frame.names()[j]
            )));
        }
    }
    Ok(())
}

fn map_columns(frame: &TimeSeriesFrame, f: impl Fn(usize, f64) -> f64) -> Result<TimeSeriesFrame> {
    let cols = frame
        .columns()
        .iter()
        .enumerate()
        .map(|(j, c)| c.iter().map(|&v| f(j, v)).collect())
        .collect();
    frame.with_columns(cols)
}

pub(crate) fn frame_to_matrix(frame: &TimeSeriesFrame) -> DMatrix<f64> {
    DMatrix::from_fn(frame.n_rows(), frame.n_cols(), |i, j| frame.column(j)[i])
}

pub(crate) fn matrix_to_columns(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.column_iter().map(|c| c.iter().copied().collect()).collect()
}

pub fn box_cox(x: f64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        x.ln()
    } else {
        (x.powf(lambda) - 1.0) / lambda
    }
}

pub fn inverse_box_cox(y: f64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        y.exp()
    } else {
        // Forecasts can leave the image of the forward map; clamp to its closure.
        (lambda * y + 1.0).max(0.0).powf(1.0 / lambda)
    }
}

/// λ on [`BOX_COX_GRID`] maximising the Box-Cox profile log-likelihood.
pub fn fit_box_cox(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let log_sum: f64 = x.iter().map(|v| v.ln()).sum();
    let mut best = (1.0, f64::NEG_INFINITY);
    for &lambda in &BOX_COX_GRID {
        let y: Vec<f64> = x.iter().map(|&v| box_cox(v, lambda)).collect();
        let mean = y.iter().sum::<f64>() / n;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        if !(var > 0.0) || !var.is_finite() {
            continue;
        }
        let llf = -0.5 * n * var.ln() + (lambda - 1.0) * log_sum;
        if llf > best.1 {
            best = (lambda, llf);
        }
    }
    best.0
}

fn fisher(x: f64, (lo, hi): (f64, f64)) -> f64 {
    let u = if hi > lo {
        (-FISHER_BOUND + 2.0 * FISHER_BOUND * (x - lo) / (hi - lo)).clamp(-FISHER_BOUND, FISHER_BOUND)
    } else {
        0.0
    };
    u.atanh()
}

fn inverse_fisher(z: f64, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        lo + (z.tanh() + FISHER_BOUND) * (hi - lo) / (2.0 * FISHER_BOUND)
    } else {
        lo
    }
}

/// Ordered list of transformers; inverted in reverse order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TransformChain {
    pub steps: Vec<Transformer>,
}

impl TransformChain {
    pub fn new(steps: Vec<Transformer>) -> Self {
        Self { steps }
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn fit_transform(&mut self, frame: &TimeSeriesFrame) -> Result<TimeSeriesFrame> {
        let mut cur = frame.clone();
        for step in &mut self.steps {
            cur = step.fit_transform(&cur)?;
        }
        Ok(cur)
    }

    pub fn transform(&self, frame: &TimeSeriesFrame) -> Result<TimeSeriesFrame> {
        let mut cur = frame.clone();
        for step in &self.steps {
            cur = step.transform(&cur)?;
        }
        Ok(cur)
    }

    pub fn inverse(&self, frame: &TimeSeriesFrame) -> Result<TimeSeriesFrame> {
        let mut cur = frame.clone();
        for step in self.steps.iter().rev() {
            cur = step.inverse(&cur)?;
        }
        Ok(cur)
    }

    pub fn inverse_forecast(&self, values: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut cur = values.clone();
        for step in self.steps.iter().rev() {
            cur = step.inverse_forecast(&cur)?;
        }
        Ok(cur)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    fn series(v: &[f64]) -> TimeSeriesFrame {
        TimeSeriesFrame::from_series(v.to_vec()).unwrap()
    }

    #[test]
    fn log_values() {
        let out = Transformer::log().transform(&series(&[1.0, E, E * E])).unwrap();
        for (a, b) in out.column(0).iter().zip([0.0, 1.0, 2.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        let inv = TransformChain::new(vec![Transformer::log()])
            .inverse(&series(&[0.0, 1.0]))
            .unwrap();
        assert_eq!(inv.column(0), &[1.0, E]);
    }

    #[test]
    fn log_rejects_nonpositive() {
        let err = Transformer::log().transform(&series(&[1.0, 0.0])).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
        let err = Transformer::box_cox()
            .fit_transform(&series(&[1.0, -2.0]))
            .unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn difference_values_and_anchor() {
        let mut t = Transformer::difference();
        let out = t.fit_transform(&series(&[5.0, 7.0, 4.0])).unwrap();
        assert_eq!(out.column(0), &[2.0, -3.0]);
        match &t {
            Transformer::Difference { state: Some(s) } => {
                assert_eq!(s.anchors, vec![5.0]);
                assert_eq!(s.last, vec![4.0]);
            }
            _ => unreachable!(),
        }
        assert_eq!(t.inverse(&out).unwrap().column(0), &[5.0, 7.0, 4.0]);
        let f = t
            .inverse_forecast(&DMatrix::from_column_slice(2, 1, &[1.0, 1.0]))
            .unwrap();
        assert_eq!(f.as_slice(), &[5.0, 6.0]);
    }

    #[test]
    fn log_difference_round_trip() {
        let x = series(&[1.0, E, E * E]);
        let mut chain = TransformChain::new(vec![Transformer::log(), Transformer::difference()]);
        let fwd = chain.fit_transform(&x).unwrap();
        assert!(fwd.column(0).iter().all(|d| (d - 1.0).abs() < 1e-12));
        let back = chain.inverse(&fwd).unwrap();
        for (a, b) in back.column(0).iter().zip(x.column(0)) {
            assert!((a - b).abs() < 1e-9);
        }
        assert_eq!(back.timestamps(), x.timestamps());
    }

    #[test]
    fn unfitted_inverse_is_error() {
        let err = Transformer::box_cox()
            .inverse(&series(&[1.0]))
            .unwrap_err();
        assert!(matches!(err, Error::NotFitted(_)));
        let err = Transformer::difference()
            .inverse_forecast(&DMatrix::zeros(1, 1))
            .unwrap_err();
        assert!(matches!(err, Error::NotFitted(_)));
    }

    #[test]
    fn box_cox_picks_log_for_exponential_growth() {
        let x: Vec<f64> = (0..200).map(|t| (0.03 * t as f64).exp()).collect();
        assert_eq!(fit_box_cox(&x), 0.0);
    }

    #[test]
    fn fisher_stays_finite_and_inverts() {
        let x = series(&[3.0, 1.0, 2.0, 5.0]);
        let mut t = Transformer::fisher();
        let z = t.fit_transform(&x).unwrap();
        assert!(z.column(0).iter().all(|v| v.is_finite()));
        let back = t.inverse(&z).unwrap();
        for (a, b) in back.column(0).iter().zip(x.column(0)) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn statefulness_flags() {
        assert!(!TransformKind::Log.is_stateful());
        assert!(!TransformKind::BoxCox.is_stateful());
        assert!(!TransformKind::Fisher.is_stateful());
        assert!(TransformKind::Difference.is_stateful());
        assert!(TransformKind::LocalizedFlatten.is_stateful());
    }
}
