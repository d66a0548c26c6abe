//! T-Daub: pipeline ranking by growing data allocations.
//!
//! The training set `T` is split in time order into `T1` (fitting) and `T2`
//! (scoring). Every pipeline is first trained on a ladder of small suffixes
//! of `T1`, most recent rows first, and a straight line through its
//! (allocation, SMAPE) points is extrapolated to the full length of `T1`.
//! The current leader then receives geometrically growing allocations of
//! its own, with a re-rank after each one, until the leader has been trained
//! on all of `T1`. The top `run_to_completion` pipelines are
//! finally trained on all of `T1`, ranked on those scores, and the winners
//! retrained on the whole of `T`.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{temporal_split, TimeSeriesFrame};
use crate::metrics::{AllocationRecord, EvalReport, Phase, PipelineReport, REPORT_SCHEMA, SMAPE_MAX};
use crate::par;
use crate::pipeline::{fit_predict_score, Pipeline, Score};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TDaubConfig {
    pub min_allocation_size: usize,
    pub allocation_size: usize,
    pub fixed_allocation_cutoff: usize,
    pub geo_increment_size: f64,
    pub run_to_completion: usize,
    /// Share of the training set held back as `T2`.
    pub test_fraction: f64,
}

impl TDaubConfig {
    /// Defaults scaled to a `T1` of `l` rows: five fixed allocations of
    /// `max(ceil(l / 20), 10)` rows each.
    pub fn for_length(l: usize) -> Self {
        let min = l.div_ceil(20).max(10);
        Self {
            min_allocation_size: min,
            allocation_size: min,
            fixed_allocation_cutoff: 5 * min,
            geo_increment_size: 2.0,
            run_to_completion: 1,
            test_fraction: 0.2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.min_allocation_size == 0 || self.allocation_size == 0 {
            return bad("allocation sizes must be positive");
        }
        if self.fixed_allocation_cutoff < self.min_allocation_size {
            return bad("fixed allocation cutoff must be at least the minimum allocation");
        }
        if !(self.geo_increment_size > 1.0) || !self.geo_increment_size.is_finite() {
            return bad("geometric increment must be a finite number above 1");
        }
        if self.run_to_completion == 0 {
            return bad("run_to_completion must be positive");
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad("test fraction must lie in (0, 1)");
        }
        Ok(())
    }
}

/// Fixed-phase allocation lengths, or `None` when `l <= min_allocation_size`
/// and selection should train every pipeline on all of `T1` instead.
pub fn plan_fixed_allocations(cfg: &TDaubConfig, l: usize) -> Option<Vec<usize>> {
    let min = cfg.min_allocation_size;
    if min == 0 || l <= min {
        return None;
    }
    let runs = (cfg.fixed_allocation_cutoff / min).max(1);
    let mut plan: Vec<usize> = (1..=runs).map(|i| (min * i).min(l)).collect();
    plan.dedup();
    Some(plan)
}

/// `int(last * geo / allocation_size) * allocation_size`.
pub fn next_allocation(last: usize, geo: f64, allocation_size: usize) -> usize {
    ((last as f64 * geo / allocation_size as f64).trunc() as usize) * allocation_size
}

/// Allocations a pipeline receives after `start` if it keeps the lead; the
/// last one is clamped to `l`.
pub fn acceleration_lengths(cfg: &TDaubConfig, start: usize, l: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut cur = start.min(l);
    while cur < l {
        let step = next_allocation(cur, cfg.geo_increment_size, cfg.allocation_size).max(1);
        cur = (cur + step).min(l);
        out.push(cur);
    }
    out
}

/// Least-squares line through `(allocation, score)` evaluated at `l` and
/// clamped to `[0, 200]`. Failed rounds are ignored while at least one real
/// score exists; with fewer than two distinct allocations the last score is
/// returned.
pub fn extrapolate(allocations: &[usize], scores: &[f64], failed: &[bool], l: usize) -> f64 {
    let real: Vec<usize> = (0..scores.len()).filter(|&i| !failed[i]).collect();
    let idx: Vec<usize> = if real.is_empty() {
        (0..scores.len()).collect()
    } else {
        real
    };
    let Some(&last) = idx.last() else {
        return SMAPE_MAX;
    };
    let n = idx.len() as f64;
    let mx = idx.iter().map(|&i| allocations[i] as f64).sum::<f64>() / n;
    let my = idx.iter().map(|&i| scores[i]).sum::<f64>() / n;
    let sxx: f64 = idx.iter().map(|&i| (allocations[i] as f64 - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return scores[last].clamp(0.0, SMAPE_MAX);
    }
    let sxy: f64 = idx
        .iter()
        .map(|&i| (allocations[i] as f64 - mx) * (scores[i] - my))
        .sum();
    let v = my + sxy / sxx * (l as f64 - mx);
    if v.is_finite() {
        v.clamp(0.0, SMAPE_MAX)
    } else {
        scores[last].clamp(0.0, SMAPE_MAX)
    }
}

/// Learning curve of one pipeline; `extrapolated` is its score estimate at
/// the full length of `T1`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Curve {
    pub allocations: Vec<usize>,
    pub scores: Vec<f64>,
    pub failed: Vec<bool>,
    pub extrapolated: f64,
}

impl Curve {
    /// Largest allocation trained so far.
    pub fn current(&self) -> usize {
        self.allocations.iter().copied().max().unwrap_or(0)
    }

    /// Adds a round; a score observed at the full length `l` replaces the
    /// extrapolation.
    fn push(&mut self, rows: usize, score: &Score, l: usize) {
        self.allocations.push(rows);
        self.scores.push(score.smape);
        self.failed.push(score.failed());
        self.extrapolated = if rows >= l {
            score.smape
        } else {
            extrapolate(&self.allocations, &self.scores, &self.failed, l)
        };
    }
}

/// Per-pipeline learning curves against a target length `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scoreboard {
    pub l: usize,
    pub curves: Vec<Curve>,
}

impl Scoreboard {
    pub fn new(n: usize, l: usize) -> Self {
        Self {
            l,
            curves: vec![Curve::default(); n],
        }
    }

    /// Pipeline indices by extrapolated score, catalog order breaking ties.
    pub fn ranking(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.curves.len()).collect();
        order.sort_by(|&a, &b| {
            self.curves[a]
                .extrapolated
                .total_cmp(&self.curves[b].extrapolated)
                .then(a.cmp(&b))
        });
        order
    }
}

/// One training round, reported as it happens.
#[derive(Debug, Clone, PartialEq)]
pub struct ProgressEvent {
    pub pipeline: String,
    pub phase: Phase,
    pub rows: usize,
    pub smape: f64,
    pub failed: bool,
    pub elapsed: Duration,
}

pub trait ProgressSink: Sync {
    fn event(&self, event: &ProgressEvent);
}

/// Discards progress events.
pub struct NoProgress;

impl ProgressSink for NoProgress {
    fn event(&self, _: &ProgressEvent) {}
}

/// Winners retrained on the full training set, best first, and the report.
#[derive(Debug, Clone)]
pub struct Selection {
    pub winners: Vec<Pipeline>,
    pub report: EvalReport,
}

struct Round {
    record: AllocationRecord,
    score: Score,
    train: Duration,
    score_time: Duration,
}

/// Trains a fresh copy of `p` on the last `rows` rows of `t1`, scores on `t2`.
fn round(p: &Pipeline, t1: &TimeSeriesFrame, t2: &TimeSeriesFrame, rows: usize, phase: Phase, started: Instant, sink: &dyn ProgressSink) -> Round {
    let l = t1.n_rows();
    let rows = rows.min(l);
    let slice = t1.suffix(rows).expect("rows clamped to the frame");
    // Instrumentation: the slice must end at the final row of T1.
    let is_suffix = slice.n_rows() == rows && slice.last_row() == t1.last_row() && slice == t1.slice(l - rows, l).expect("in range");
    debug_assert!(is_suffix, "training slice is not a suffix of T1");
    let mut fresh = p.unfitted();
    let score = fit_predict_score(&mut fresh, &slice, t2);
    let record = AllocationRecord {
        pipeline: p.name.clone(),
        phase,
        rows,
        smape: score.smape,
        failed: score.failed(),
        is_suffix,
    };
    sink.event(&ProgressEvent {
        pipeline: p.name.clone(),
        phase,
        rows,
        smape: score.smape,
        failed: score.failed(),
        elapsed: started.elapsed(),
    });
    if let Some(f) = &score.failure {
        log::debug!("{} failed on {rows} rows: {f}", p.name);
    }
    Round {
        record,
        score,
        train: fresh.train_time,
        score_time: fresh.score_time,
    }
}

#[derive(Default, Clone)]
struct Tally {
    train: Duration,
    score: Duration,
    failure: Option<String>,
}

/// Ranks `pipelines` on `train` and retrains the winners on all of it.
pub fn select(pipelines: &[Pipeline], train: &TimeSeriesFrame, cfg: &TDaubConfig, sink: &dyn ProgressSink) -> Result<Selection> {
    cfg.validate()?;
    if pipelines.is_empty() {
        return Err(Error::InvalidArgument("no pipelines to select from".into()));
    }
    let split = temporal_split(train, 1.0 - cfg.test_fraction)?;
    let (t1, t2) = (&split.train, &split.holdout);
    let l = t1.n_rows();
    let np = pipelines.len();
    let started = Instant::now();
    let mut board = Scoreboard::new(np, l);
    let mut tally = vec![Tally::default(); np];
    let mut records = Vec::new();
    let mut absorb = |board: &mut Scoreboard, records: &mut Vec<AllocationRecord>, j: usize, r: Round| {
        board.curves[j].push(r.record.rows, &r.score, l);
        tally[j].train += r.train;
        tally[j].score += r.score_time;
        tally[j].failure = r.score.failure.clone();
        records.push(r.record);
    };

    let plan = plan_fixed_allocations(cfg, l);
    let bypassed = plan.is_none();
    // Final-phase scores on all of T1, keyed by pipeline.
    let mut full: Vec<Option<Score>> = vec![None; np];

    match plan {
        None => {
            let rounds = par::map(pipelines, |p| round(p, t1, t2, l, Phase::Bypass, started, sink));
            for (j, r) in rounds.into_iter().enumerate() {
                full[j] = Some(r.score.clone());
                absorb(&mut board, &mut records, j, r);
            }
        }
        Some(plan) => {
            // Fixed phase: every (allocation, pipeline) pair is independent.
            let jobs: Vec<(usize, usize)> = plan
                .iter()
                .flat_map(|&a| (0..np).map(move |j| (a, j)))
                .collect();
            let rounds = par::map(&jobs, |&(a, j)| round(&pipelines[j], t1, t2, a, Phase::Fixed, started, sink));
            for (&(_, j), r) in jobs.iter().zip(rounds) {
                if r.record.rows == l {
                    full[j] = Some(r.score.clone());
                }
                absorb(&mut board, &mut records, j, r);
            }
            // Acceleration: the current leader grows its own allocation
            // geometrically until its curve reaches the full length.
            loop {
                let top = board.ranking()[0];
                let cur = board.curves[top].current();
                if cur >= l {
                    break;
                }
                let rows = (cur + next_allocation(cur, cfg.geo_increment_size, cfg.allocation_size).max(1)).min(l);
                let r = round(&pipelines[top], t1, t2, rows, Phase::Acceleration, started, sink);
                if rows == l {
                    full[top] = Some(r.score.clone());
                }
                absorb(&mut board, &mut records, top, r);
            }
        }
    }

    // Final scoring on all of T1, extending past failed finalists. A bypass
    // run already has every full-data score, so every pipeline is a finalist.
    let ranking = board.ranking();
    let quota = if bypassed { np } else { cfg.run_to_completion };
    let mut finalists: Vec<usize> = Vec::new();
    let mut successes = 0;
    for &j in &ranking {
        if successes >= quota {
            break;
        }
        let score = match &full[j] {
            Some(s) => s.clone(),
            None => {
                let r = round(&pipelines[j], t1, t2, l, Phase::Final, started, sink);
                let s = r.score.clone();
                tally[j].train += r.train;
                tally[j].score += r.score_time;
                tally[j].failure = s.failure.clone();
                records.push(r.record);
                full[j] = Some(s.clone());
                s
            }
        };
        finalists.push(j);
        if !score.failed() {
            successes += 1;
        }
    }
    if successes == 0 {
        return Err(Error::NoViablePipeline);
    }
    let full_score = |j: usize| full[j].as_ref().map_or(SMAPE_MAX, |s| s.smape);
    let mut final_order = finalists.clone();
    final_order.sort_by(|&a, &b| {
        let fa = full[a].as_ref().map_or(true, |s| s.failed());
        let fb = full[b].as_ref().map_or(true, |s| s.failed());
        fa.cmp(&fb)
            .then(full_score(a).total_cmp(&full_score(b)))
            .then(a.cmp(&b))
    });
    final_order.extend(ranking.iter().filter(|j| !finalists.contains(j)));

    // Retrain successful finalists on the whole training set.
    let winners_idx: Vec<usize> = final_order
        .iter()
        .copied()
        .filter(|&j| finalists.contains(&j) && full[j].as_ref().is_some_and(|s| !s.failed()))
        .collect();
    let refits = par::map(&winners_idx, |&j| {
        let mut p = pipelines[j].unfitted();
        p.fit(train).map(|_| p)
    });
    let mut winners = Vec::new();
    for (j, r) in winners_idx.iter().zip(refits) {
        match r {
            Ok(p) => winners.push(p),
            Err(e) => log::warn!("{} failed to refit on the full training set: {e}", pipelines[*j].name),
        }
    }
    if winners.is_empty() {
        return Err(Error::NoViablePipeline);
    }

    let rank_of = |j: usize| final_order.iter().position(|&k| k == j).expect("all ranked") + 1;
    let reports: Vec<PipelineReport> = (0..np)
        .map(|j| {
            let finalist = finalists.contains(&j);
            PipelineReport {
                name: pipelines[j].name.clone(),
                rank: rank_of(j),
                selection_score: if finalist {
                    full_score(j)
                } else {
                    board.curves[j].extrapolated
                },
                extrapolated_score: board.curves[j].extrapolated,
                finalist,
                smape: None,
                mae: None,
                train_seconds: tally[j].train.as_secs_f64(),
                score_seconds: tally[j].score.as_secs_f64(),
                failure: tally[j].failure.clone(),
            }
        })
        .collect();
    let rows_trained = records.iter().map(|r| r.rows).sum();
    let report = EvalReport {
        schema: REPORT_SCHEMA,
        horizon: pipelines[0].horizon(),
        lookbacks: Vec::new(),
        bypassed,
        winner: winners[0].name.clone(),
        zero_model_smape: None,
        rows_trained,
        pipelines: reports,
        allocations: records,
    };
    Ok(Selection { winners, report })
}

/// Trains every pipeline on all of `train` and scores it on `holdout`.
pub fn exhaustive(pipelines: &[Pipeline], train: &TimeSeriesFrame, holdout: &TimeSeriesFrame) -> Vec<Score> {
    par::map(pipelines, |p| {
        let mut fresh = p.unfitted();
        fit_predict_score(&mut fresh, train, holdout)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecasters::{Estimator, EstimatorSpec};
    use crate::transforms::TransformChain;

    fn cfg(min: usize, alloc: usize, cutoff: usize, geo: f64) -> TDaubConfig {
        TDaubConfig {
            min_allocation_size: min,
            allocation_size: alloc,
            fixed_allocation_cutoff: cutoff,
            geo_increment_size: geo,
            run_to_completion: 1,
            test_fraction: 0.2,
        }
    }

    #[test]
    fn plans() {
        let c = cfg(100, 100, 500, 2.0);
        assert_eq!(plan_fixed_allocations(&c, 10_000), Some(vec![100, 200, 300, 400, 500]));
        assert_eq!(plan_fixed_allocations(&c, 350), Some(vec![100, 200, 300, 350]));
        assert_eq!(plan_fixed_allocations(&c, 80), None);
        assert_eq!(plan_fixed_allocations(&c, 100), None);
    }

    #[test]
    fn next_allocation_formula() {
        assert_eq!(next_allocation(500, 2.0, 100), 1000);
        assert_eq!(next_allocation(500, 1.5, 100), 700);
        let c = cfg(100, 100, 500, 2.0);
        assert_eq!(acceleration_lengths(&c, 500, 10_000), vec![1500, 4500, 10_000]);
        assert!(acceleration_lengths(&c, 500, 500).is_empty());
    }

    #[test]
    fn extrapolation_cases() {
        let alloc = [100, 200, 300, 400, 500];
        let ok = [false; 5];
        // A: 11 - s/100, reaches 4 at 700.
        let a = extrapolate(&alloc, &[10.0, 9.0, 8.0, 7.0, 6.0], &ok, 700);
        let b = extrapolate(&alloc, &[5.0; 5], &ok, 700);
        assert!((a - 4.0).abs() < 1e-9 && b == 5.0);
        assert_eq!(extrapolate(&[50], &[12.5], &[false], 1000), 12.5);
        assert_eq!(extrapolate(&alloc, &[10.0, 9.0, 8.0, 7.0, 6.0], &ok, 100_000), 0.0);
        // Failures are skipped when real scores exist.
        let s = extrapolate(&alloc, &[200.0, 200.0, 8.0, 8.0, 8.0], &[true, true, false, false, false], 900);
        assert_eq!(s, 8.0);
    }

    #[test]
    fn identical_scores_keep_catalog_order() {
        let mut b = Scoreboard::new(3, 100);
        for c in &mut b.curves {
            c.extrapolated = 5.0;
        }
        assert_eq!(b.ranking(), vec![0, 1, 2]);
    }

    fn zoo(h: usize) -> Vec<Pipeline> {
        vec![
            Pipeline::new("ZeroModel", TransformChain::default(), Estimator::new(EstimatorSpec::Zero, h)),
            Pipeline::new("MT2R", TransformChain::default(), Estimator::new(EstimatorSpec::Trend, h)),
            Pipeline::new("ARLite", TransformChain::default(), Estimator::new(EstimatorSpec::Ar { max_order: 4 }, h)),
        ]
    }

    #[test]
    fn selects_trend_on_a_line_with_suffix_slices() {
        let f = TimeSeriesFrame::from_series((0..400).map(|t| 5.0 + 0.5 * t as f64).collect()).unwrap();
        let l = crate::frame::train_rows(400, 0.8);
        let sel = select(&zoo(6), &f, &TDaubConfig::for_length(l), &NoProgress).unwrap();
        // Trend and AR both extrapolate a line exactly.
        assert!(["MT2R", "ARLite"].contains(&sel.report.winner.as_str()));
        assert!(sel.report.pipeline(&sel.report.winner).unwrap().selection_score < 1e-6);
        assert!(sel.report.allocations.iter().all(|r| r.is_suffix));
        assert!(sel.winners[0].is_fitted());
        assert!(sel.report.rows_trained > 0);
        let mut ranks: Vec<usize> = sel.report.pipelines.iter().map(|p| p.rank).collect();
        ranks.sort_unstable();
        assert_eq!(ranks, vec![1, 2, 3]);
    }

    #[test]
    fn short_data_bypasses_the_ladder() {
        let f = TimeSeriesFrame::from_series((0..50).map(|t| 1.0 + t as f64).collect()).unwrap();
        let c = TDaubConfig {
            min_allocation_size: 100,
            fixed_allocation_cutoff: 500,
            ..TDaubConfig::for_length(40)
        };
        let sel = select(&zoo(3), &f, &c, &NoProgress).unwrap();
        assert!(sel.report.bypassed);
        assert!(sel.report.allocations.iter().all(|r| r.phase == Phase::Bypass && r.rows == 40));
        assert!(sel.report.pipelines.iter().all(|p| p.finalist));
        assert_eq!(sel.winners.len(), 3);
    }

    #[test]
    fn all_failing_is_an_error() {
        let f = TimeSeriesFrame::from_series(vec![1.0; 30]).unwrap();
        let bad = vec![Pipeline::new(
            "HW",
            TransformChain::default(),
            Estimator::new(
                EstimatorSpec::HoltWinters {
                    mode: crate::forecasters::SeasonalMode::Additive,
                    season_length: 50,
                },
                3,
            ),
        )];
        assert!(matches!(
            select(&bad, &f, &TDaubConfig::for_length(24), &NoProgress),
            Err(Error::NoViablePipeline)
        ));
    }
}
