//! Forecast error measures, ranking, and the evaluation report.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Worst attainable SMAPE, also used as the score of a failed pipeline.
pub const SMAPE_MAX: f64 = 200.0;

/// Current `report.json` schema version.
pub const REPORT_SCHEMA: u32 = 1;

fn check_shapes(actual: &DMatrix<f64>, forecast: &DMatrix<f64>) -> Result<()> {
    if actual.shape() != forecast.shape() {
        return Err(Error::ShapeMismatch(format!(
            "actual is {:?}, forecast is {:?}",
            actual.shape(),
            forecast.shape()
        )));
    }
    if actual.is_empty() {
        return Err(Error::ShapeMismatch("empty arrays".into()));
    }
    Ok(())
}

/// Symmetric mean absolute percentage error, bounded in `[0, 200]`.
///
/// Mean over all elements of `200 |f - a| / (|a| + |f|)`; a term whose
/// denominator is zero contributes 0.
pub fn smape(actual: &DMatrix<f64>, forecast: &DMatrix<f64>) -> Result<f64> {
    check_shapes(actual, forecast)?;
    let total: f64 = actual
        .iter()
        .zip(forecast.iter())
        .map(|(&a, &f)| smape_term(a, f))
        .sum();
    Ok(total / actual.len() as f64)
}

fn smape_term(a: f64, f: f64) -> f64 {
    let denom = a.abs() + f.abs();
    if denom == 0.0 {
        0.0
    } else if !denom.is_finite() || !f.is_finite() {
        SMAPE_MAX
    } else {
        // |f - a| <= |a| + |f| exactly, but the quotient can round above 200.
        (SMAPE_MAX * (f - a).abs() / denom).min(SMAPE_MAX)
    }
}

/// Mean absolute error over all elements.
pub fn mae(actual: &DMatrix<f64>, forecast: &DMatrix<f64>) -> Result<f64> {
    check_shapes(actual, forecast)?;
    let total: f64 = actual
        .iter()
        .zip(forecast.iter())
        .map(|(a, f)| (f - a).abs())
        .sum();
    Ok(total / actual.len() as f64)
}

/// Ordinal ranks `1..=n`, smallest score first, ties broken by input order.
/// NaN sorts last.
pub fn rank_scores(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (nan_last(scores[a]), nan_last(scores[b]));
        x.total_cmp(&y).then(a.cmp(&b))
    });
    let mut ranks = vec![0; scores.len()];
    for (r, &i) in order.iter().enumerate() {
        ranks[i] = r + 1;
    }
    ranks
}

fn nan_last(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Where an allocation record came from in the selection run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Fixed,
    Acceleration,
    Final,
    Bypass,
}

/// One training-and-scoring event during selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationRecord {
    pub pipeline: String,
    pub phase: Phase,
    pub rows: usize,
    pub smape: f64,
    pub failed: bool,
    /// The training slice ended at the final row of the selection training set.
    pub is_suffix: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub name: String,
    pub rank: usize,
    /// Score used for the final ranking: the full-data score for finalists,
    /// the extrapolated learning-curve score otherwise.
    pub selection_score: f64,
    pub extrapolated_score: f64,
    pub finalist: bool,
    /// SMAPE on the reserved holdout, when evaluated.
    pub smape: Option<f64>,
    pub mae: Option<f64>,
    pub train_seconds: f64,
    pub score_seconds: f64,
    pub failure: Option<String>,
}

/// Outcome of a selection run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema: u32,
    pub horizon: usize,
    pub lookbacks: Vec<usize>,
    /// Selection skipped the allocation ladder because the data was too short.
    pub bypassed: bool,
    pub winner: String,
    pub zero_model_smape: Option<f64>,
    pub rows_trained: usize,
    pub pipelines: Vec<PipelineReport>,
    pub allocations: Vec<AllocationRecord>,
}

impl EvalReport {
    pub fn pipeline(&self, name: &str) -> Option<&PipelineReport> {
        self.pipelines.iter().find(|p| p.name == name)
    }

    pub fn pipeline_mut(&mut self, name: &str) -> Option<&mut PipelineReport> {
        self.pipelines.iter_mut().find(|p| p.name == name)
    }

    /// Copy with all wall-clock fields zeroed, for reproducibility checks.
    pub fn without_timings(&self) -> Self {
        let mut r = self.clone();
        for p in &mut r.pipelines {
            p.train_seconds = 0.0;
            p.score_seconds = 0.0;
        }
        r
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// One row per pipeline, ordered by rank.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "pipeline",
            "rank",
            "selection_score",
            "extrapolated_score",
            "finalist",
            "smape",
            "mae",
            "train_seconds",
            "score_seconds",
            "failed",
        ])?;
        let mut rows: Vec<&PipelineReport> = self.pipelines.iter().collect();
        rows.sort_by_key(|p| p.rank);
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for p in rows {
            w.write_record([
                p.name.clone(),
                p.rank.to_string(),
                p.selection_score.to_string(),
                p.extrapolated_score.to_string(),
                p.finalist.to_string(),
                opt(p.smape),
                opt(p.mae),
                format!("{:.6}", p.train_seconds),
                format!("{:.6}", p.score_seconds),
                p.failure.is_some().to_string(),
            ])?;
        }
        w.flush().map_err(|source| Error::Io {
            path: "<csv writer>".into(),
            source,
        })?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn col(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(v.len(), 1, v)
    }

    #[test]
    fn smape_examples() {
        assert_eq!(smape(&col(&[3.0, 4.0]), &col(&[3.0, 4.0])).unwrap(), 0.0);
        assert_eq!(smape(&col(&[100.0]), &col(&[0.0])).unwrap(), 200.0);
        let v = smape(&col(&[100.0]), &col(&[50.0])).unwrap();
        assert!((v - 200.0 * 50.0 / 150.0).abs() < 1e-12);
        assert!((v - 66.67).abs() < 0.01);
        assert_eq!(smape(&col(&[0.0]), &col(&[0.0])).unwrap(), 0.0);
    }

    #[test]
    fn smape_shape_mismatch() {
        let a = DMatrix::zeros(2, 1);
        let f = DMatrix::zeros(1, 2);
        assert!(matches!(smape(&a, &f), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn mae_simple() {
        assert_eq!(mae(&col(&[1.0, 2.0]), &col(&[2.0, 4.0])).unwrap(), 1.5);
    }

    #[test]
    fn rank_examples() {
        assert_eq!(rank_scores(&[3.0, 1.0, 2.0]), vec![3, 1, 2]);
        assert_eq!(rank_scores(&[5.0, 5.0, 5.0]), vec![1, 2, 3]);
        assert_eq!(rank_scores(&[2.7, 4.62, 6.29]), vec![1, 2, 3]);
        assert_eq!(rank_scores(&[f64::NAN, 1.0]), vec![2, 1]);
    }

    proptest! {
        #[test]
        fn smape_symmetric_bounded(
            pairs in proptest::collection::vec((-1e6f64..1e6, -1e6f64..1e6), 1..20)
        ) {
            let a = col(&pairs.iter().map(|p| p.0).collect::<Vec<_>>());
            let f = col(&pairs.iter().map(|p| p.1).collect::<Vec<_>>());
            let s = smape(&a, &f).unwrap();
            prop_assert!((0.0..=200.0).contains(&s));
            prop_assert!((s - smape(&f, &a).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn smape_scale_invariant(a in 1e-3f64..1e3, f in -1e3f64..1e3, c in 1e-3f64..1e3) {
            let s1 = smape(&col(&[a]), &col(&[f])).unwrap();
            let s2 = smape(&col(&[c * a]), &col(&[c * f])).unwrap();
            prop_assert!((s1 - s2).abs() < 1e-9);
        }

        #[test]
        fn ranks_are_permutation(scores in proptest::collection::vec(-10.0f64..10.0, 1..30)) {
            let mut r = rank_scores(&scores);
            r.sort_unstable();
            prop_assert_eq!(r, (1..=scores.len()).collect::<Vec<_>>());
        }
    }
}
