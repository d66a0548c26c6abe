//! The estimator zoo.
//!
//! Every estimator follows the same contract: `fit` on a frame, then
//! `predict(h)` returns an `h × d` array, one column per input series.
//! Univariate models (Holt-Winters, AR, trend) are fitted per column.

pub mod ar;
pub mod holt_winters;
pub mod trees;
pub mod trend;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use ar::{ar_fit, ArParams};
pub use holt_winters::{holt_winters_fit, HoltWintersParams, SeasonalMode};
pub use trees::{TreeEnsemble, TreeEnsembleConfig};
pub use trend::{trend_fit, TrendModel};

use crate::error::{Error, Result};
use crate::frame::TimeSeriesFrame;
use crate::linalg;
use crate::transforms::Flattener;

/// Ridge penalty of the window regressor.
pub const RIDGE_PENALTY: f64 = 1e-3;

/// Last training row repeated `h` times.
pub fn zero_model_predict(train: &TimeSeriesFrame, h: usize) -> Result<DMatrix<f64>> {
    if h == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let last = train.last_row();
    Ok(DMatrix::from_fn(h, last.len(), |_, j| last[j]))
}

/// Learner behind a window model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "learner", rename_all = "snake_case")]
pub enum Learner {
    Ridge,
    TreeEnsemble { seed: u64 },
}

/// Linear model with one coefficient column per target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    /// `coef[k]` holds the weights of target `k`.
    pub coef: Vec<Vec<f64>>,
    pub intercept: Vec<f64>,
}

impl RidgeModel {
    pub fn predict_row(&self, row: &[f64]) -> Vec<f64> {
        self.coef
            .iter()
            .zip(&self.intercept)
            .map(|(w, b)| b + w.iter().zip(row).map(|(a, x)| a * x).sum::<f64>())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "learner", rename_all = "snake_case")]
pub enum FittedLearner {
    Ridge(RidgeModel),
    TreeEnsemble(TreeEnsemble),
}

impl FittedLearner {
    pub fn predict_row(&self, row: &[f64]) -> Vec<f64> {
        match self {
            Self::Ridge(m) => m.predict_row(row),
            Self::TreeEnsemble(m) => m.predict_row(row),
        }
    }
}

/// Fits a window regressor on a supervised dataset.
pub fn window_regressor_fit(x: &DMatrix<f64>, y: &DMatrix<f64>, learner: Learner) -> Result<FittedLearner> {
    if x.ncols() == 0 {
        return Err(Error::InvalidArgument("window regressor needs at least one feature".into()));
    }
    match learner {
        Learner::Ridge => {
            let sol = linalg::ridge(x, y, RIDGE_PENALTY)?;
            Ok(FittedLearner::Ridge(RidgeModel {
                coef: sol
                    .coef
                    .column_iter()
                    .map(|c| c.iter().copied().collect())
                    .collect(),
                intercept: sol.intercept,
            }))
        }
        Learner::TreeEnsemble { seed } => {
            let cfg = TreeEnsembleConfig {
                seed,
                ..Default::default()
            };
            Ok(FittedLearner::TreeEnsemble(TreeEnsemble::fit(x, y, &cfg)?))
        }
    }
}

/// Fitted window model: flattener, learner and the most recent window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowModel {
    pub flattener: Flattener,
    pub learner: FittedLearner,
    /// Last `lookback` training rows per series.
    pub history: Vec<Vec<f64>>,
}

impl WindowModel {
    /// Direct forecast up to the trained horizon; longer horizons feed
    /// predictions back in as history, one trained block at a time.
    pub fn predict(&self, h: usize) -> Result<DMatrix<f64>> {
        let d = self.history.len();
        let mut hist = self.history.clone();
        let mut out = DMatrix::zeros(h, d);
        let mut filled = 0;
        while filled < h {
            let (row, scale) = self.flattener.features(&hist)?;
            let pred = self.learner.predict_row(&row);
            let block = self.flattener.inverse_prediction(&pred, &scale);
            let take = block.nrows().min(h - filled);
            for k in 0..take {
                for j in 0..d {
                    out[(filled + k, j)] = block[(k, j)];
                    hist[j].push(block[(k, j)]);
                }
            }
            filled += take;
        }
        Ok(out)
    }
}

/// Unfitted estimator configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EstimatorSpec {
    Zero,
    HoltWinters { mode: SeasonalMode, season_length: usize },
    Ar { max_order: usize },
    Trend,
    Window { flattener: Flattener, learner: Learner },
}

/// Fitted estimator state; the persisted form of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedEstimator {
    Zero { last: Vec<f64> },
    HoltWinters { models: Vec<HoltWintersParams> },
    Ar { models: Vec<ArParams> },
    Trend { models: Vec<TrendModel> },
    Window(WindowModel),
}

impl FittedEstimator {
    pub fn predict(&self, h: usize) -> Result<DMatrix<f64>> {
        if h == 0 {
            return Err(Error::InvalidArgument("horizon must be at least 1".into()));
        }
        let per_column = |cols: Vec<Vec<f64>>| DMatrix::from_fn(h, cols.len(), |i, j| cols[j][i]);
        Ok(match self {
            Self::Zero { last } => DMatrix::from_fn(h, last.len(), |_, j| last[j]),
            Self::HoltWinters { models } => per_column(models.iter().map(|m| m.forecast(h)).collect()),
            Self::Ar { models } => per_column(models.iter().map(|m| m.forecast(h)).collect()),
            Self::Trend { models } => per_column(models.iter().map(|m| m.forecast(h)).collect()),
            Self::Window(w) => w.predict(h)?,
        })
    }

    /// Whether a fit had to fall back to a regularised solve.
    pub fn diagnostics(&self) -> Vec<String> {
        match self {
            Self::Ar { models } => models
                .iter()
                .enumerate()
                .filter(|(_, m)| m.ridge_fallback)
                .map(|(j, _)| format!("column {j}: singular AR design, ridge fallback"))
                .collect(),
            _ => Vec::new(),
        }
    }
}

/// Estimator with its fitted state and the horizon it was built for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimator {
    pub spec: EstimatorSpec,
    pub horizon: usize,
    pub fitted: Option<FittedEstimator>,
}

impl Estimator {
    pub fn new(spec: EstimatorSpec, horizon: usize) -> Self {
        Self {
            spec,
            horizon,
            fitted: None,
        }
    }

    pub fn is_fitted(&self) -> bool {
        self.fitted.is_some()
    }

    pub fn lookback(&self) -> Option<usize> {
        match &self.spec {
            EstimatorSpec::Window { flattener, .. } => Some(flattener.lookback),
            _ => None,
        }
    }

    pub fn fit(&mut self, train: &TimeSeriesFrame) -> Result<()> {
        let cols = train.columns();
        let fitted = match &self.spec {
            EstimatorSpec::Zero => FittedEstimator::Zero {
                last: train.last_row(),
            },
            EstimatorSpec::HoltWinters {
                mode,
                season_length,
            } => FittedEstimator::HoltWinters {
                models: cols
                    .iter()
                    .map(|c| holt_winters_fit(c, *season_length, *mode))
                    .collect::<Result<_>>()?,
            },
            EstimatorSpec::Ar { max_order } => {
                // Shrink the search to what the data supports.
                let cap = (train.n_rows().saturating_sub(3)) / 2;
                let p = (*max_order).min(cap);
                if p == 0 {
                    return Err(Error::InsufficientData(format!(
                        "{} rows are too few for an AR model",
                        train.n_rows()
                    )));
                }
                FittedEstimator::Ar {
                    models: cols.iter().map(|c| ar_fit(c, p)).collect::<Result<_>>()?,
                }
            }
            EstimatorSpec::Trend => FittedEstimator::Trend {
                models: cols.iter().map(|c| trend_fit(c)).collect::<Result<_>>()?,
            },
            EstimatorSpec::Window { flattener, learner } => {
                let ds = flattener.transform(train)?;
                if ds.x.nrows() < flattener.lookback + 1 {
                    return Err(Error::InsufficientData(format!(
                        "{} windows for look-back {}; need at least {}",
                        ds.x.nrows(),
                        flattener.lookback,
                        flattener.lookback + 1
                    )));
                }
                let learner = window_regressor_fit(&ds.x, &ds.y, *learner)?;
                let n = train.n_rows();
                let history = cols
                    .iter()
                    .map(|c| c[n - flattener.lookback..].to_vec())
                    .collect();
                FittedEstimator::Window(WindowModel {
                    flattener: *flattener,
                    learner,
                    history,
                })
            }
        };
        self.fitted = Some(fitted);
        Ok(())
    }

    pub fn predict(&self, h: usize) -> Result<DMatrix<f64>> {
        self.fitted
            .as_ref()
            .ok_or(Error::NotFitted("estimator"))?
            .predict(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transforms::Conditioning;

    #[test]
    fn zero_model_repeats_last_row() {
        let f = TimeSeriesFrame::from_series(vec![1.0, 2.0, 3.0]).unwrap();
        let p = zero_model_predict(&f, 2).unwrap();
        assert_eq!(p, DMatrix::from_row_slice(2, 1, &[3.0, 3.0]));
        let g = TimeSeriesFrame::from_columns(vec![vec![1.0, 2.0], vec![4.0, 5.0]]).unwrap();
        assert_eq!(zero_model_predict(&g, 1).unwrap(), DMatrix::from_row_slice(1, 2, &[2.0, 5.0]));
        assert!(zero_model_predict(&f, 0).is_err());
    }

    #[test]
    fn predict_before_fit_fails() {
        let e = Estimator::new(EstimatorSpec::Trend, 3);
        assert!(matches!(e.predict(3), Err(Error::NotFitted(_))));
    }

    #[test]
    fn ridge_recovers_exact_slope() {
        let x = DMatrix::from_fn(50, 1, |i, _| i as f64 + 1.0);
        let y = x.map(|v| 2.0 * v);
        match window_regressor_fit(&x, &y, Learner::Ridge).unwrap() {
            FittedLearner::Ridge(m) => assert!((m.coef[0][0] - 2.0).abs() < 1e-6),
            _ => unreachable!(),
        }
    }

    #[test]
    fn window_model_recursive_extension_on_line() {
        let line: Vec<f64> = (0..60).map(|t| 2.0 * t as f64 + 1.0).collect();
        let f = TimeSeriesFrame::from_series(line).unwrap();
        let mut e = Estimator::new(
            EstimatorSpec::Window {
                flattener: Flattener::new(Conditioning::Localized, 4, 3),
                learner: Learner::Ridge,
            },
            3,
        );
        e.fit(&f).unwrap();
        let p = e.predict(10).unwrap();
        assert_eq!(p.shape(), (10, 1));
        for k in 0..10 {
            let truth = 2.0 * (60 + k) as f64 + 1.0;
            assert!((p[(k, 0)] - truth).abs() < 1e-6, "{k}: {}", p[(k, 0)]);
        }
    }

    #[test]
    fn per_column_statistical_models() {
        let a: Vec<f64> = (0..40).map(|t| 10.0 + (t % 4) as f64).collect();
        let b: Vec<f64> = (0..40).map(|t| 50.0 - (t % 4) as f64).collect();
        let f = TimeSeriesFrame::from_columns(vec![a, b]).unwrap();
        for spec in [
            EstimatorSpec::HoltWinters {
                mode: SeasonalMode::Additive,
                season_length: 4,
            },
            EstimatorSpec::Ar { max_order: 5 },
            EstimatorSpec::Trend,
        ] {
            let mut e = Estimator::new(spec, 6);
            e.fit(&f).unwrap();
            let p = e.predict(6).unwrap();
            assert_eq!(p.shape(), (6, 2));
            assert!(p.iter().all(|v| v.is_finite()));
        }
    }
}
