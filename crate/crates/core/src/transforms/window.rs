//! Flatten family: sliding windows into a supervised dataset.
//!
//! A window of `lookback` rows becomes one feature row of `lookback * d`
//! values (series-major: all lags of series 0, then series 1, ...). The
//! targets are the next `horizon` rows, laid out the same way, so one fit
//! predicts every step directly.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::TransformKind;
use crate::error::{Error, Result};
use crate::frame::TimeSeriesFrame;

const STDEV_FLOOR: f64 = 1e-9;

/// Per-window conditioning applied to features and targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conditioning {
    /// Plain lag matrix.
    Raw,
    /// Each series' last window value is subtracted.
    Localized,
    /// Each series is z-scored by the window's own mean and standard deviation.
    Normalized,
}

/// Offset and scale of one window, per series; `original = offset + scale * conditioned`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowScale {
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
}

impl WindowScale {
    pub fn restore(&self, series: usize, v: f64) -> f64 {
        self.offset[series] + self.scale[series] * v
    }

    fn condition(&self, series: usize, v: f64) -> f64 {
        (v - self.offset[series]) / self.scale[series]
    }
}

#[derive(Debug, Clone)]
pub struct WindowedDataset {
    /// `windows × (lookback * d)`
    pub x: DMatrix<f64>,
    /// `windows × (horizon * d)`
    pub y: DMatrix<f64>,
    pub scales: Vec<WindowScale>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flattener {
    pub conditioning: Conditioning,
    pub lookback: usize,
    pub horizon: usize,
}

impl Flattener {
    pub fn new(conditioning: Conditioning, lookback: usize, horizon: usize) -> Self {
        Self {
            conditioning,
            lookback,
            horizon,
        }
    }

    pub fn kind(&self) -> TransformKind {
        match self.conditioning {
            Conditioning::Raw => TransformKind::Flatten,
            Conditioning::Localized => TransformKind::LocalizedFlatten,
            Conditioning::Normalized => TransformKind::NormalizedFlatten,
        }
    }

    /// Windows produced from `n` rows: `n - lookback - horizon + 1`.
    pub fn n_windows(&self, n: usize) -> usize {
        (n + 1).saturating_sub(self.lookback + self.horizon)
    }

    pub fn transform(&self, frame: &TimeSeriesFrame) -> Result<WindowedDataset> {
        self.transform_columns(frame.columns())
    }

    pub fn transform_columns(&self, columns: &[Vec<f64>]) -> Result<WindowedDataset> {
        let lw = self.lookback;
        let h = self.horizon;
        if lw == 0 || h == 0 {
            return Err(Error::InvalidArgument(
                "look-back and horizon must be positive".into(),
            ));
        }
        let n = columns.first().map_or(0, Vec::len);
        if lw >= n {
            return Err(Error::InsufficientData(format!(
                "look-back {lw} needs more than {n} rows"
            )));
        }
        let m = self.n_windows(n);
        if m == 0 {
            return Err(Error::InsufficientData(format!(
                "{n} rows give no window for look-back {lw} and horizon {h}"
            )));
        }
        let d = columns.len();
        let mut x = DMatrix::zeros(m, lw * d);
        let mut y = DMatrix::zeros(m, h * d);
        let mut scales = Vec::with_capacity(m);
        for r in 0..m {
            let scale = self.scale_of(columns.iter().map(|c| &c[r..r + lw]));
            for (j, c) in columns.iter().enumerate() {
                for i in 0..lw {
                    x[(r, j * lw + i)] = scale.condition(j, c[r + i]);
                }
                for k in 0..h {
                    y[(r, j * h + k)] = scale.condition(j, c[r + lw + k]);
                }
            }
            scales.push(scale);
        }
        Ok(WindowedDataset { x, y, scales })
    }

    /// Feature row for the window made of the final `lookback` rows of `columns`.
    pub fn features(&self, columns: &[Vec<f64>]) -> Result<(Vec<f64>, WindowScale)> {
        let lw = self.lookback;
        let n = columns.first().map_or(0, Vec::len);
        if n < lw {
            return Err(Error::InsufficientData(format!(
                "{n} rows for a look-back of {lw}"
            )));
        }
        let scale = self.scale_of(columns.iter().map(|c| &c[n - lw..]));
        let mut row = Vec::with_capacity(lw * columns.len());
        for (j, c) in columns.iter().enumerate() {
            row.extend(c[n - lw..].iter().map(|&v| scale.condition(j, v)));
        }
        Ok((row, scale))
    }

    /// Maps one predicted target row back to window scale, as `horizon × d`.
    pub fn inverse_prediction(&self, pred: &[f64], scale: &WindowScale) -> DMatrix<f64> {
        let h = self.horizon;
        let d = scale.offset.len();
        DMatrix::from_fn(h, d, |k, j| scale.restore(j, pred[j * h + k]))
    }

    fn scale_of<'a>(&self, windows: impl Iterator<Item = &'a [f64]>) -> WindowScale {
        let (offset, scale) = windows
            .map(|w| match self.conditioning {
                Conditioning::Raw => (0.0, 1.0),
                Conditioning::Localized => (w[w.len() - 1], 1.0),
                Conditioning::Normalized => {
                    let n = w.len() as f64;
                    let mean = w.iter().sum::<f64>() / n;
                    let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                    (mean, var.sqrt().max(STDEV_FLOOR))
                }
            })
            .unzip();
        WindowScale { offset, scale }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn flatten_enumerates_windows() {
        let f = Flattener::new(Conditioning::Raw, 2, 1);
        let ds = f.transform_columns(&[vec![1.0, 2.0, 3.0, 4.0]]).unwrap();
        assert_eq!(ds.x, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 3.0]));
        assert_eq!(ds.y, DMatrix::from_row_slice(2, 1, &[3.0, 4.0]));
    }

    #[test]
    fn flatten_multiseries_layout() {
        let f = Flattener::new(Conditioning::Raw, 2, 2);
        let ds = f
            .transform_columns(&[vec![1.0, 2.0, 3.0, 4.0, 5.0], vec![10.0, 20.0, 30.0, 40.0, 50.0]])
            .unwrap();
        assert_eq!(ds.x.shape(), (2, 4));
        assert_eq!(ds.x.row(1).iter().copied().collect::<Vec<_>>(), vec![2.0, 3.0, 20.0, 30.0]);
        assert_eq!(ds.y.row(0).iter().copied().collect::<Vec<_>>(), vec![3.0, 4.0, 30.0, 40.0]);
    }

    #[test]
    fn lookback_too_long() {
        let f = Flattener::new(Conditioning::Raw, 4, 1);
        assert!(f.transform_columns(&[vec![1.0, 2.0, 3.0, 4.0]]).is_err());
        let f = Flattener::new(Conditioning::Raw, 3, 2);
        assert!(f.transform_columns(&[vec![1.0, 2.0, 3.0, 4.0]]).is_err());
    }

    #[test]
    fn localized_inverse_adds_last_value() {
        let f = Flattener::new(Conditioning::Localized, 3, 1);
        let (row, scale) = f.features(&[vec![7.0, 8.0, 10.0]]).unwrap();
        assert_eq!(row, vec![-3.0, -2.0, 0.0]);
        let out = f.inverse_prediction(&[0.5], &scale);
        assert_eq!(out[(0, 0)], 10.5);
    }

    #[test]
    fn normalized_constant_window_uses_floor() {
        let f = Flattener::new(Conditioning::Normalized, 3, 1);
        let ds = f.transform_columns(&[vec![2.0; 6]]).unwrap();
        assert!(ds.x.iter().all(|v| *v == 0.0));
        assert_eq!(ds.scales[0].scale[0], STDEV_FLOOR);
    }

    proptest! {
        #[test]
        fn window_count(n in 2usize..80, lw in 1usize..20, h in 1usize..6) {
            let cols = vec![(0..n).map(|i| i as f64).collect::<Vec<_>>()];
            let f = Flattener::new(Conditioning::Raw, lw, h);
            match f.transform_columns(&cols) {
                Ok(ds) => {
                    prop_assert_eq!(ds.x.nrows(), n - lw - h + 1);
                    prop_assert_eq!(ds.y.nrows(), n - lw - h + 1);
                }
                Err(_) => prop_assert!(lw >= n || n < lw + h),
            }
        }

        #[test]
        fn localized_windows_end_in_zero(
            vals in proptest::collection::vec(-100.0f64..100.0, 10..50), lw in 1usize..8
        ) {
            let f = Flattener::new(Conditioning::Localized, lw, 1);
            let ds = f.transform_columns(&[vals]).unwrap();
            for r in 0..ds.x.nrows() {
                prop_assert_eq!(ds.x[(r, lw - 1)], 0.0);
            }
        }

        #[test]
        fn conditioning_inverts(
            vals in proptest::collection::vec(-100.0f64..100.0, 10..50),
            cond in prop_oneof![Just(Conditioning::Raw), Just(Conditioning::Localized), Just(Conditioning::Normalized)]
        ) {
            let f = Flattener::new(cond, 4, 2);
            let ds = f.transform_columns(std::slice::from_ref(&vals)).unwrap();
            for r in 0..ds.y.nrows() {
                let pred: Vec<f64> = ds.y.row(r).iter().copied().collect();
                let back = f.inverse_prediction(&pred, &ds.scales[r]);
                for k in 0..2 {
                    prop_assert!((back[(k, 0)] - vals[r + 4 + k]).abs() < 1e-9);
                }
            }
        }
    }
}
