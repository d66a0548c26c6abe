//! End-to-end fitting: quality check, zero-model baseline, look-back
//! discovery, catalog, T-Daub selection, holdout scoring and the final refit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{quality_check, temporal_split, train_rows, QualityReport, TimeSeriesFrame};
use crate::lookback::{discover, LookbackConfig, LookbackRecommendation, MultivariatePolicy};
use crate::metrics::EvalReport;
use crate::pipeline::{catalog, fit_predict_score, Pipeline};
use crate::tdaub::{exhaustive, select, ProgressSink, TDaubConfig};
use crate::forecasters::{Estimator, EstimatorSpec};
use crate::transforms::{frame_to_matrix, TransformChain};

/// User-facing run settings; unset selection parameters scale with the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub horizon: usize,
    /// Share of rows held back for the final holdout score.
    pub holdout: f64,
    pub max_look_back: Option<usize>,
    /// Fixed look-back; skips discovery.
    pub lookback: Option<usize>,
    pub min_allocation: Option<usize>,
    pub allocation: Option<usize>,
    pub cutoff: Option<usize>,
    pub geo: Option<f64>,
    pub run_to_completion: Option<usize>,
    pub test_fraction: Option<f64>,
    pub multivariate_policy: MultivariatePolicy,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            horizon: 12,
            holdout: 0.2,
            max_look_back: None,
            lookback: None,
            min_allocation: None,
            allocation: None,
            cutoff: None,
            geo: None,
            run_to_completion: None,
            test_fraction: None,
            multivariate_policy: MultivariatePolicy::Cap,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be at least 1".into()));
        }
        if !(self.holdout > 0.0 && self.holdout < 1.0) {
            return Err(Error::InvalidArgument(format!("holdout fraction {} outside (0, 1)", self.holdout)));
        }
        if self.lookback == Some(0) {
            return Err(Error::InvalidArgument("look-back must be positive".into()));
        }
        Ok(())
    }

    /// T-Daub settings for a training set of `n` rows.
    pub fn tdaub(&self, n: usize) -> TDaubConfig {
        let test_fraction = self.test_fraction.unwrap_or(0.2);
        let l = train_rows(n, 1.0 - test_fraction);
        let base = TDaubConfig::for_length(l);
        let min = self.min_allocation.unwrap_or(base.min_allocation_size);
        let allocation = self.allocation.unwrap_or(min);
        TDaubConfig {
            min_allocation_size: min,
            allocation_size: allocation,
            fixed_allocation_cutoff: self.cutoff.unwrap_or(5 * allocation).max(min),
            geo_increment_size: self.geo.unwrap_or(base.geo_increment_size),
            run_to_completion: self.run_to_completion.unwrap_or(base.run_to_completion),
            test_fraction,
        }
    }

    pub fn lookback_config(&self) -> LookbackConfig {
        LookbackConfig {
            max_look_back: self.max_look_back,
            multivariate_policy: self.multivariate_policy,
            seed: self.seed,
            ..LookbackConfig::default()
        }
    }
}

/// Everything a fit produces.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    /// Winner refitted on every row, ready to forecast past the data.
    pub model: Pipeline,
    /// Winner as fitted on the training split only.
    pub selected: Pipeline,
    pub report: EvalReport,
    pub quality: QualityReport,
    pub lookbacks: LookbackRecommendation,
    pub train: TimeSeriesFrame,
    pub holdout: TimeSeriesFrame,
}

/// Cleans `frame`, splits it, and builds the pipeline catalog for the training part.
pub fn prepare(frame: &TimeSeriesFrame, cfg: &RunConfig) -> Result<(TimeSeriesFrame, TimeSeriesFrame, QualityReport, LookbackRecommendation, Vec<Pipeline>)> {
    cfg.validate()?;
    let (clean, quality) = quality_check(frame)?;
    let split = temporal_split(&clean, 1.0 - cfg.holdout)?;
    let lookbacks = match cfg.lookback {
        Some(lw) => LookbackRecommendation::manual(lw),
        None => discover(&split.train, &cfg.lookback_config()),
    };
    let pipelines = catalog(&quality, &lookbacks, cfg.horizon, cfg.seed);
    Ok((split.train, split.holdout, quality, lookbacks, pipelines))
}

/// Runs the whole flow on `frame`.
pub fn fit(frame: &TimeSeriesFrame, cfg: &RunConfig, sink: &dyn ProgressSink) -> Result<FitOutcome> {
    let (train, holdout, quality, lookbacks, pipelines) = prepare(frame, cfg)?;
    log::info!(
        "{} training rows, {} holdout rows, look-backs {:?}, {} pipelines",
        train.n_rows(),
        holdout.n_rows(),
        lookbacks.candidates,
        pipelines.len()
    );

    let mut zero = Pipeline::new("ZeroModel", TransformChain::default(), Estimator::new(EstimatorSpec::Zero, cfg.horizon));
    let zero_score = fit_predict_score(&mut zero, &train, &holdout);

    let tcfg = cfg.tdaub(train.n_rows());
    let selection = select(&pipelines, &train, &tcfg, sink)?;
    let mut report = selection.report;
    report.lookbacks = lookbacks.candidates.clone();
    report.zero_model_smape = Some(zero_score.smape);

    let h = cfg.horizon.min(holdout.n_rows());
    let truth = frame_to_matrix(&holdout.slice(0, h)?);
    for w in &selection.winners {
        if let Ok(pred) = w.predict(h) {
            let entry = report.pipeline_mut(&w.name).expect("winner is in the report");
            entry.smape = crate::metrics::smape(&truth, &pred).ok();
            entry.mae = crate::metrics::mae(&truth, &pred).ok();
        }
    }

    let selected = selection.winners[0].clone();
    let full = train.concat(&holdout)?;
    let mut model = selected.unfitted();
    if let Err(e) = model.fit(&full) {
        log::warn!("refit of {} on all rows failed ({e}); keeping the training-split fit", selected.name);
        model = selected.clone();
    }
    Ok(FitOutcome {
        model,
        selected,
        report,
        quality,
        lookbacks,
        train,
        holdout,
    })
}

/// Holdout SMAPE of every catalog pipeline trained on the full training split.
pub fn exhaustive_scores(frame: &TimeSeriesFrame, cfg: &RunConfig) -> Result<Vec<(String, f64)>> {
    let (train, holdout, _, _, pipelines) = prepare(frame, cfg)?;
    let scores = exhaustive(&pipelines, &train, &holdout);
    Ok(pipelines
        .iter()
        .zip(scores)
        .map(|(p, s)| (p.name.clone(), s.smape))
        .collect())
}
