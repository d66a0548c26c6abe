//! Look-back window discovery.
//!
//! Candidates come from two places: the timestamp clock (seasonal periods
//! implied by the sampling frequency) and the values themselves (average
//! zero-crossing spacing, and the periodogram peak over a recent window for
//! each seasonal period). Candidates are sanity-filtered and then ordered by
//! an influence rank computed on randomly sampled windows.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecasters::{TreeEnsemble, TreeEnsembleConfig};
use crate::frame::TimeSeriesFrame;
use crate::metrics::rank_scores;
use crate::par;

const MINUTE: i64 = 60;
const HOUR: i64 = 3_600;
const DAY: i64 = 86_400;
const WEEK: i64 = 7 * DAY;
const MONTH: i64 = 30 * DAY;
const YEAR: i64 = 31_557_600; // 365.25 days

/// Sampling interval of a series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frequency {
    Second,
    Minute,
    Hour,
    Day,
    Week,
    Month,
    Year,
    /// Median spacing in seconds that matched no canonical unit.
    Other(i64),
}

impl Frequency {
    pub fn seconds(self) -> i64 {
        match self {
            Self::Second => 1,
            Self::Minute => MINUTE,
            Self::Hour => HOUR,
            Self::Day => DAY,
            Self::Week => WEEK,
            Self::Month => MONTH,
            Self::Year => YEAR,
            Self::Other(s) => s,
        }
    }
}

const CANONICAL: [Frequency; 7] = [
    Frequency::Second,
    Frequency::Minute,
    Frequency::Hour,
    Frequency::Day,
    Frequency::Week,
    Frequency::Month,
    Frequency::Year,
];

/// Median timestamp spacing snapped to the nearest canonical unit within 5%.
pub fn infer_frequency(timestamps: &[i64]) -> Result<Frequency> {
    if timestamps.len() < 3 {
        return Err(Error::InsufficientData(
            "frequency inference needs at least 3 timestamps".into(),
        ));
    }
    let mut deltas: Vec<i64> = timestamps.windows(2).map(|w| w[1] - w[0]).collect();
    deltas.sort_unstable();
    let m = deltas.len();
    let median = if m % 2 == 1 {
        deltas[m / 2] as f64
    } else {
        (deltas[m / 2 - 1] + deltas[m / 2]) as f64 / 2.0
    };
    let snapped = CANONICAL
        .iter()
        .map(|f| (*f, (median / f.seconds() as f64 - 1.0).abs()))
        .filter(|(_, rel)| *rel <= 0.05)
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(f, _)| f);
    Ok(snapped.unwrap_or(Frequency::Other(median.round() as i64)))
}

/// Seasonal periods implied by a sampling frequency (365.25 rounds to 365).
pub fn seasonal_periods(freq: Frequency) -> Vec<usize> {
    match freq {
        Frequency::Second => vec![60, 3_600, 86_400, 604_800, 2_592_000, 31_557_600],
        Frequency::Minute => vec![60, 1_440, 10_080, 43_200, 525_960],
        Frequency::Hour => vec![24, 168, 720, 8_766],
        Frequency::Day => vec![7, 30, 365],
        Frequency::Week => vec![4, 52],
        Frequency::Month => vec![12],
        Frequency::Year | Frequency::Other(_) => Vec::new(),
    }
}

fn demean(x: &[f64]) -> Vec<f64> {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| v - mean).collect()
}

/// Rounded mean spacing of zero crossings of the mean-adjusted series;
/// 0 when there are fewer than two crossings.
///
/// An exact zero takes the sign of the next nonzero value.
pub fn zero_crossing_lookback(x: &[f64]) -> usize {
    if x.len() < 4 {
        return 0;
    }
    let centred = demean(x);
    let mut signs = vec![0i8; centred.len()];
    let mut next = 0i8;
    for i in (0..centred.len()).rev() {
        let v = centred[i];
        if v > 0.0 {
            next = 1;
        } else if v < 0.0 {
            next = -1;
        }
        signs[i] = next;
    }
    let crossings: Vec<usize> = (1..signs.len())
        .filter(|&i| signs[i] != 0 && signs[i - 1] != 0 && signs[i] != signs[i - 1])
        .collect();
    if crossings.len() < 2 {
        return 0;
    }
    let span = (crossings[crossings.len() - 1] - crossings[0]) as f64;
    (span / (crossings.len() - 1) as f64).round() as usize
}

/// Periodogram `|DFT_k|² / n` of `x` for `k = 0..=n/2`.
pub fn periodogram(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf[..=n / 2]
        .iter()
        .map(|c| c.norm_sqr() / n as f64)
        .collect()
}

/// Dominant period of the most recent `min(n, 8 * season)` samples; 0 when
/// the series is constant or shorter than two seasons.
pub fn spectral_lookback(x: &[f64], season: usize) -> usize {
    if season == 0 || x.len() < 2 * season {
        return 0;
    }
    let w = x.len().min(season.saturating_mul(8));
    let recent = demean(&x[x.len() - w..]);
    let power = periodogram(&recent);
    let energy: f64 = power.iter().sum();
    let mut order: Vec<usize> = (0..power.len()).collect();
    order.sort_by(|&a, &b| power[b].total_cmp(&power[a]).then(a.cmp(&b)));
    let k = if order[0] == 0 { order.get(1).copied() } else { Some(order[0]) };
    match k {
        Some(k) if k > 0 && power[k] > 1e-12 * energy.max(f64::MIN_POSITIVE) && power[k] > 0.0 => {
            (w as f64 / k as f64).round() as usize
        }
        _ => 0,
    }
}

/// Where a look-back candidate came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    TimeIndex,
    ZeroCrossing,
    Spectral,
    Default,
}

/// How multivariate look-backs that exceed the budget are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MultivariatePolicy {
    /// Cap to `max(1, max_look_back / num_series)`.
    Cap,
    /// Drop the value.
    Ignore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookbackConfig {
    pub max_look_back: Option<usize>,
    pub default_lookback: usize,
    pub influence_sample_count: usize,
    pub multivariate_policy: MultivariatePolicy,
    pub seed: u64,
}

impl Default for LookbackConfig {
    fn default() -> Self {
        Self {
            max_look_back: None,
            default_lookback: 8,
            influence_sample_count: 800,
            multivariate_policy: MultivariatePolicy::Cap,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookbackRecommendation {
    /// Best first.
    pub candidates: Vec<usize>,
    pub provenance: Vec<Provenance>,
    pub influence_ranks: Vec<f64>,
}

impl LookbackRecommendation {
    pub fn top(&self) -> Option<usize> {
        self.candidates.first().copied()
    }

    /// A single user-chosen value; discovery is skipped.
    pub fn manual(lw: usize) -> Self {
        Self {
            candidates: vec![lw],
            provenance: vec![Provenance::Default],
            influence_ranks: vec![1.0],
        }
    }

    fn default_only(lw: usize) -> Self {
        Self::manual(lw)
    }
}

/// Sampled `(X, y)` for one look-back: rows are windows, `y` the next value.
fn sample_windows(x: &[f64], lw: usize, count: usize, seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
    let avail = x.len() - lw;
    let m = count.min(avail);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts = sample(&mut rng, avail, m).into_vec();
    starts.sort_unstable();
    let xs = DMatrix::from_fn(m, lw, |r, i| x[starts[r] + i]);
    let ys = DMatrix::from_fn(m, 1, |r, _| x[starts[r] + lw]);
    (xs, ys)
}

/// Largest univariate F-statistic over the lags of `x` against `y`.
fn max_lag_f(x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    let n = x.nrows();
    if n < 3 {
        return 0.0;
    }
    let yc: Vec<f64> = demean(y.column(0).as_slice());
    let syy: f64 = yc.iter().map(|v| v * v).sum();
    if syy <= 0.0 {
        return 0.0;
    }
    x.column_iter()
        .map(|c| {
            let xc = demean(c.as_slice());
            let sxx: f64 = xc.iter().map(|v| v * v).sum();
            if sxx <= 0.0 {
                return 0.0;
            }
            let sxy: f64 = xc.iter().zip(&yc).map(|(a, b)| a * b).sum();
            // Exact fits all saturate to the same value.
            let r2 = (sxy * sxy / (sxx * syy)).min(1.0 - 1e-12);
            r2 / (1.0 - r2) * (n - 2) as f64
        })
        .fold(0.0, f64::max)
}

/// Test MAE of a small tree ensemble trained on the first 80% of windows.
/// Every lag is considered at each split.
fn tree_mae(x: &DMatrix<f64>, y: &DMatrix<f64>, seed: u64) -> f64 {
    let n = x.nrows();
    let n_train = ((n as f64) * 0.8).round() as usize;
    if n_train < 2 || n_train >= n {
        return f64::INFINITY;
    }
    let cfg = TreeEnsembleConfig {
        n_trees: 10,
        max_depth: 3,
        min_samples_leaf: 1,
        max_features: Some(x.ncols()),
        seed,
    };
    let xt = x.rows(0, n_train).into_owned();
    let yt = y.rows(0, n_train).into_owned();
    let Ok(model) = TreeEnsemble::fit(&xt, &yt, &cfg) else {
        return f64::INFINITY;
    };
    let test = n - n_train;
    let mae = (n_train..n)
        .map(|r| {
            let row: Vec<f64> = x.row(r).iter().copied().collect();
            (model.predict_row(&row)[0] - y[(r, 0)]).abs()
        })
        .sum::<f64>()
        / test as f64;
    // Rounding-level errors count as exact so they tie.
    let spread = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if mae <= 1e-9 * spread {
        0.0
    } else {
        mae
    }
}

/// Orders look-back candidates by their average rank over two influence
/// measures (largest per-lag F-statistic, and small-tree-ensemble test MAE)
/// computed on up to `sample_count` randomly drawn windows. Ties go to the
/// smaller look-back. Candidates without room for a target are dropped.
pub fn influence_rank(x: &[f64], candidates: &[usize], sample_count: usize, seed: u64) -> Vec<(usize, f64)> {
    let mut cands: Vec<usize> = candidates
        .iter()
        .copied()
        .filter(|&lw| lw >= 1 && lw < x.len())
        .collect();
    cands.sort_unstable();
    cands.dedup();
    if cands.len() <= 1 {
        return cands.into_iter().map(|lw| (lw, 1.0)).collect();
    }
    let measures: Vec<(f64, f64)> = par::map(&cands, |&lw| {
        let (xs, ys) = sample_windows(x, lw, sample_count, seed);
        (max_lag_f(&xs, &ys), tree_mae(&xs, &ys, seed))
    });
    let f_rank = rank_scores(&measures.iter().map(|m| -m.0).collect::<Vec<_>>());
    let mae_rank = rank_scores(&measures.iter().map(|m| m.1).collect::<Vec<_>>());
    let mut ranked: Vec<(usize, f64)> = cands
        .iter()
        .enumerate()
        .map(|(i, &lw)| (lw, (f_rank[i] + mae_rank[i]) as f64 / 2.0))
        .collect();
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    ranked
}

/// Raw candidates for one series before filtering.
pub fn raw_candidates(x: &[f64], timestamps: Option<&[i64]>) -> Vec<(usize, Provenance)> {
    let seasons = timestamps
        .and_then(|ts| infer_frequency(ts).ok())
        .map(seasonal_periods)
        .unwrap_or_default();
    let mut out: Vec<(usize, Provenance)> =
        seasons.iter().map(|&s| (s, Provenance::TimeIndex)).collect();
    out.push((zero_crossing_lookback(x), Provenance::ZeroCrossing));
    out.extend(
        seasons
            .iter()
            .map(|&s| (spectral_lookback(x, s), Provenance::Spectral)),
    );
    out
}

fn discover_series(x: &[f64], timestamps: Option<&[i64]>, cfg: &LookbackConfig) -> LookbackRecommendation {
    let n = x.len();
    let mut kept: Vec<(usize, Provenance)> = Vec::new();
    for (v, prov) in raw_candidates(x, timestamps) {
        let too_long = v >= n || cfg.max_look_back.is_some_and(|m| v > m);
        if v < 2 || too_long || kept.iter().any(|(k, _)| *k == v) {
            continue;
        }
        kept.push((v, prov));
    }
    if kept.is_empty() {
        return LookbackRecommendation::default_only(cfg.default_lookback);
    }
    let values: Vec<usize> = kept.iter().map(|k| k.0).collect();
    let ranked = influence_rank(x, &values, cfg.influence_sample_count, cfg.seed);
    LookbackRecommendation {
        candidates: ranked.iter().map(|r| r.0).collect(),
        provenance: ranked
            .iter()
            .map(|r| kept.iter().find(|k| k.0 == r.0).map_or(Provenance::Default, |k| k.1))
            .collect(),
        influence_ranks: ranked.iter().map(|r| r.1).collect(),
    }
}

/// Recommends look-back windows for a frame.
///
/// Univariate frames get every surviving candidate, best first. For several
/// series, each series contributes its top candidate; those are processed in
/// decreasing order and, when `lw * num_series` exceeds `max_look_back`,
/// capped (or dropped, per [`MultivariatePolicy`]).
pub fn discover(frame: &TimeSeriesFrame, cfg: &LookbackConfig) -> LookbackRecommendation {
    let ts = frame.timestamps();
    if frame.n_cols() == 1 {
        return discover_series(frame.column(0), ts, cfg);
    }
    let per_series = par::map(frame.columns(), |c| discover_series(c, ts, cfg));
    let d = frame.n_cols();
    let mut lwset: Vec<(usize, Provenance, f64)> = per_series
        .iter()
        .filter_map(|r| Some((r.top()?, r.provenance[0], r.influence_ranks[0])))
        .collect();
    lwset.sort_by_key(|e| std::cmp::Reverse(e.0));
    let mut out = LookbackRecommendation {
        candidates: Vec::new(),
        provenance: Vec::new(),
        influence_ranks: Vec::new(),
    };
    for (lw, prov, rank) in lwset {
        let value = match cfg.max_look_back {
            Some(max) if lw * d > max => match cfg.multivariate_policy {
                MultivariatePolicy::Cap => (max / d).max(1),
                MultivariatePolicy::Ignore => continue,
            },
            _ => lw,
        };
        if !out.candidates.contains(&value) {
            out.candidates.push(value);
            out.provenance.push(prov);
            out.influence_ranks.push(rank);
        }
    }
    if out.candidates.is_empty() {
        return LookbackRecommendation::default_only(cfg.default_lookback);
    }
    out
}
