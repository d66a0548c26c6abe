//! Pipelines: a transform chain feeding an estimator, fitted and scored as
//! one unit, plus the fixed catalog that selection ranks.

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecasters::{Estimator, EstimatorSpec, Learner, SeasonalMode};
use crate::frame::{QualityReport, TimeSeriesFrame};
use crate::lookback::LookbackRecommendation;
use crate::metrics::{mae, smape, SMAPE_MAX};
use crate::transforms::{frame_to_matrix, Conditioning, Flattener, TransformChain, Transformer};

/// Look-back used when discovery produced nothing.
pub const DEFAULT_LOOKBACK: usize = 8;

/// Upper bound on the AR order search.
pub const MAX_AR_ORDER: usize = 24;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pipeline {
    pub name: String,
    pub chain: TransformChain,
    pub estimator: Estimator,
    pub lookback: Option<usize>,
    #[serde(skip)]
    pub train_time: Duration,
    #[serde(skip)]
    pub score_time: Duration,
}

impl Pipeline {
    pub fn new(name: impl Into<String>, chain: TransformChain, estimator: Estimator) -> Self {
        let lookback = estimator.lookback();
        Self {
            name: name.into(),
            chain,
            estimator,
            lookback,
            train_time: Duration::ZERO,
            score_time: Duration::ZERO,
        }
    }

    pub fn horizon(&self) -> usize {
        self.estimator.horizon
    }

    pub fn is_fitted(&self) -> bool {
        self.estimator.is_fitted()
    }

    /// Fresh copy with no fitted state.
    pub fn unfitted(&self) -> Self {
        let mut p = self.clone();
        p.estimator.fitted = None;
        p.chain = TransformChain::new(
            p.chain
                .steps
                .iter()
                .map(|s| match s {
                    Transformer::Log => Transformer::log(),
                    Transformer::BoxCox { .. } => Transformer::box_cox(),
                    Transformer::Fisher { .. } => Transformer::fisher(),
                    Transformer::Difference { .. } => Transformer::difference(),
                })
                .collect(),
        );
        p.train_time = Duration::ZERO;
        p.score_time = Duration::ZERO;
        p
    }

    pub fn fit(&mut self, frame: &TimeSeriesFrame) -> Result<()> {
        let start = Instant::now();
        let transformed = self.chain.fit_transform(frame)?;
        let res = self.estimator.fit(&transformed);
        self.train_time = start.elapsed();
        res
    }

    /// `h × d` forecast in the original data scale.
    pub fn predict(&self, h: usize) -> Result<DMatrix<f64>> {
        let raw = self.estimator.predict(h)?;
        self.chain.inverse_forecast(&raw)
    }

    pub fn to_json(&self) -> Result<String> {
        if !self.is_fitted() {
            return Err(Error::NotFitted("pipeline"));
        }
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(s)?;
        if !p.is_fitted() {
            return Err(Error::NotFitted("pipeline"));
        }
        Ok(p)
    }
}

/// Result of one fit-predict-score round.
#[derive(Debug, Clone, PartialEq)]
pub struct Score {
    pub smape: f64,
    pub mae: Option<f64>,
    pub failure: Option<String>,
}

impl Score {
    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }

    fn sentinel(reason: String) -> Self {
        Self {
            smape: SMAPE_MAX,
            mae: None,
            failure: Some(reason),
        }
    }
}

/// Fits `p` on `train` and scores its forecast against the first
/// `min(h, test rows)` rows of `test`. Errors never escape: a pipeline that
/// cannot be fitted or predicted scores the worst SMAPE.
pub fn fit_predict_score(p: &mut Pipeline, train: &TimeSeriesFrame, test: &TimeSeriesFrame) -> Score {
    p.score_time = Duration::ZERO;
    if let Err(e) = p.fit(train) {
        return Score::sentinel(e.to_string());
    }
    let start = Instant::now();
    let h = p.horizon().min(test.n_rows());
    let result = (|| {
        let truth = frame_to_matrix(&test.slice(0, h)?);
        let forecast = p.predict(h)?;
        Ok::<_, Error>((smape(&truth, &forecast)?, mae(&truth, &forecast)?))
    })();
    p.score_time = start.elapsed();
    match result {
        Ok((s, m)) => Score {
            smape: s,
            mae: m.is_finite().then_some(m),
            failure: None,
        },
        Err(e) => Score::sentinel(e.to_string()),
    }
}

/// Catalog names in evaluation order.
pub const CATALOG_NAMES: [&str; 10] = [
    "ZeroModel",
    "HW-Additive",
    "HW-Multiplicative",
    "ARLite",
    "MT2R",
    "WindowRidge",
    "WindowTreeEnsemble",
    "FlattenRidge-log",
    "DifferenceFlattenTree-log",
    "LocalizedFlattenRidge",
];

/// The pre-composed pipelines, in a fixed order.
///
/// Pipelines that need strictly positive data (multiplicative Holt-Winters
/// and the log chains) are left out when any column has a value `<= 0`.
/// Window models and the Holt-Winters season use the top-ranked look-back.
pub fn catalog(quality: &QualityReport, lookbacks: &LookbackRecommendation, h: usize, seed: u64) -> Vec<Pipeline> {
    let lw = lookbacks.top().unwrap_or(DEFAULT_LOOKBACK).max(1);
    let positive = quality.log_allowed();
    let window = |c: Conditioning| Flattener::new(c, lw, h);
    let est = |spec: EstimatorSpec| Estimator::new(spec, h);
    let none = TransformChain::default;
    let log = || TransformChain::new(vec![Transformer::log()]);
    let mut out = vec![
        Pipeline::new("ZeroModel", none(), est(EstimatorSpec::Zero)),
        Pipeline::new(
            "HW-Additive",
            none(),
            est(EstimatorSpec::HoltWinters {
                mode: SeasonalMode::Additive,
                season_length: lw,
            }),
        ),
    ];
    if positive {
        out.push(Pipeline::new(
            "HW-Multiplicative",
            none(),
            est(EstimatorSpec::HoltWinters {
                mode: SeasonalMode::Multiplicative,
                season_length: lw,
            }),
        ));
    }
    out.push(Pipeline::new(
        "ARLite",
        none(),
        est(EstimatorSpec::Ar {
            max_order: lw.min(MAX_AR_ORDER),
        }),
    ));
    out.push(Pipeline::new("MT2R", none(), est(EstimatorSpec::Trend)));
    out.push(Pipeline::new(
        "WindowRidge",
        none(),
        est(EstimatorSpec::Window {
            flattener: window(Conditioning::Raw),
            learner: Learner::Ridge,
        }),
    ));
    out.push(Pipeline::new(
        "WindowTreeEnsemble",
        none(),
        est(EstimatorSpec::Window {
            flattener: window(Conditioning::Raw),
            learner: Learner::TreeEnsemble { seed },
        }),
    ));
    if positive {
        out.push(Pipeline::new(
            "FlattenRidge-log",
            log(),
            est(EstimatorSpec::Window {
                flattener: window(Conditioning::Raw),
                learner: Learner::Ridge,
            }),
        ));
        out.push(Pipeline::new(
            "DifferenceFlattenTree-log",
            TransformChain::new(vec![Transformer::log(), Transformer::difference()]),
            est(EstimatorSpec::Window {
                flattener: window(Conditioning::Raw),
                learner: Learner::TreeEnsemble { seed },
            }),
        ));
    }
    out.push(Pipeline::new(
        "LocalizedFlattenRidge",
        none(),
        est(EstimatorSpec::Window {
            flattener: window(Conditioning::Localized),
            learner: Learner::Ridge,
        }),
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::quality_check;

    fn quality(values: Vec<f64>) -> (TimeSeriesFrame, QualityReport) {
        quality_check(&TimeSeriesFrame::from_series(values).unwrap()).unwrap()
    }

    fn names(ps: &[Pipeline]) -> Vec<&str> {
        ps.iter().map(|p| p.name.as_str()).collect()
    }

    #[test]
    fn catalog_sizes() {
        let (_, q) = quality((1..50).map(f64::from).collect());
        let lw = LookbackRecommendation::manual(12);
        assert_eq!(names(&catalog(&q, &lw, 12, 0)), CATALOG_NAMES.to_vec());

        let (_, q) = quality((-5..45).map(f64::from).collect());
        let c = catalog(&q, &lw, 12, 0);
        assert_eq!(c.len(), 7);
        assert!(!names(&c).iter().any(|n| n.contains("log") || n.contains("Multiplicative")));
    }

    #[test]
    fn catalog_is_deterministic_and_uses_default_lookback() {
        let (_, q) = quality((1..50).map(f64::from).collect());
        let empty = LookbackRecommendation {
            candidates: Vec::new(),
            provenance: Vec::new(),
            influence_ranks: Vec::new(),
        };
        let a = catalog(&q, &empty, 6, 3);
        assert_eq!(a, catalog(&q, &empty, 6, 3));
        let windows: Vec<usize> = a.iter().filter_map(|p| p.lookback).collect();
        assert_eq!(windows.len(), 5);
        assert!(windows.iter().all(|&l| l == DEFAULT_LOOKBACK));
    }

    #[test]
    fn zero_model_on_constant_scores_zero() {
        let f = TimeSeriesFrame::from_series(vec![3.0; 40]).unwrap();
        let (tr, te) = (f.slice(0, 30).unwrap(), f.slice(30, 40).unwrap());
        let mut p = Pipeline::new("ZeroModel", TransformChain::default(), Estimator::new(EstimatorSpec::Zero, 5));
        let s = fit_predict_score(&mut p, &tr, &te);
        assert_eq!(s.smape, 0.0);
        assert!(!s.failed());
    }

    #[test]
    fn failing_fit_scores_sentinel() {
        let f = TimeSeriesFrame::from_series(vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let (tr, te) = (f.slice(0, 3).unwrap(), f.slice(3, 5).unwrap());
        let mut p = Pipeline::new("MT2R", TransformChain::default(), Estimator::new(EstimatorSpec::Trend, 2));
        let s = fit_predict_score(&mut p, &tr, &te);
        assert_eq!(s.smape, SMAPE_MAX);
        assert!(s.failed());
    }

    #[test]
    fn log_chain_predicts_in_original_units() {
        let values: Vec<f64> = (0..200)
            .map(|t| 1000.0 + 50.0 * (t as f64 * std::f64::consts::TAU / 12.0).sin() + t as f64)
            .collect();
        let (f, q) = quality(values);
        let cat = catalog(&q, &LookbackRecommendation::manual(12), 12, 0);
        for mut p in cat.into_iter().filter(|p| p.name.contains("log")) {
            p.fit(&f).unwrap();
            let pred = p.predict(12).unwrap();
            assert!(pred.iter().all(|v| *v > 500.0 && *v < 2000.0), "{}: {pred}", p.name);
        }
    }

    #[test]
    fn json_round_trip_predicts_identically() {
        let values: Vec<f64> = (0..120).map(|t| 10.0 + (t as f64 * 0.5).sin()).collect();
        let (f, q) = quality(values);
        for mut p in catalog(&q, &LookbackRecommendation::manual(8), 6, 1) {
            p.fit(&f).unwrap();
            let back = Pipeline::from_json(&p.to_json().unwrap()).unwrap();
            assert_eq!(back.predict(9).unwrap(), p.predict(9).unwrap(), "{}", p.name);
        }
        let unfitted = Pipeline::new("ZeroModel", TransformChain::default(), Estimator::new(EstimatorSpec::Zero, 1));
        assert!(unfitted.to_json().is_err());
    }
}
