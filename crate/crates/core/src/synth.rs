//! Synthetic signal families for controlled experiments.
//!
//! All generators are closed-form functions of the step `t`; randomness
//! (noise, outlier positions) comes from a seeded ChaCha stream, so a `SignalSpec`
//! produces the same values on every platform.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::frame::TimeSeriesFrame;

/// Outliers are only placed in this leading share of the series.
pub const OUTLIER_REGION: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    Linear,
    Constant,
    LinearNoise,
    Exponential,
    InverseExponential,
    Sine,
    Cosine,
    SineCosineOutliers,
    Square,
    TrendedWave,
    Log,
    LogVariance,
    DualSeason,
    CosineGrowingAmplitude,
}

impl SignalKind {
    pub const ALL: [SignalKind; 14] = [
        Self::Linear,
        Self::Constant,
        Self::LinearNoise,
        Self::Exponential,
        Self::InverseExponential,
        Self::Sine,
        Self::Cosine,
        Self::SineCosineOutliers,
        Self::Square,
        Self::TrendedWave,
        Self::Log,
        Self::LogVariance,
        Self::DualSeason,
        Self::CosineGrowingAmplitude,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Linear => "linear",
            Self::Constant => "constant",
            Self::LinearNoise => "linear_noise",
            Self::Exponential => "exponential",
            Self::InverseExponential => "inverse_exponential",
            Self::Sine => "sine",
            Self::Cosine => "cosine",
            Self::SineCosineOutliers => "sine_cosine_outliers",
            Self::Square => "square",
            Self::TrendedWave => "trended_wave",
            Self::Log => "log",
            Self::LogVariance => "log_variance",
            Self::DualSeason => "dual_season",
            Self::CosineGrowingAmplitude => "cosine_growing_amplitude",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    pub kind: SignalKind,
    pub length: usize,
    pub periods: Vec<usize>,
    pub noise_sd: f64,
    pub outlier_rate: f64,
    pub outlier_magnitude: f64,
    pub seed: u64,
}

impl SignalSpec {
    /// Defaults for `kind`: 2000 steps, period 25 (24 and 168 for the dual
    /// season), 1% outliers of 5x amplitude, noise as fits the family.
    pub fn new(kind: SignalKind) -> Self {
        let periods = match kind {
            SignalKind::DualSeason => vec![24, 168],
            _ => vec![25],
        };
        let noise_sd = match kind {
            SignalKind::LinearNoise => 1.0,
            SignalKind::LogVariance => 0.01,
            _ => 0.0,
        };
        let outlier_rate = if kind == SignalKind::SineCosineOutliers { 0.01 } else { 0.0 };
        Self {
            kind,
            length: 2000,
            periods,
            noise_sd,
            outlier_rate,
            outlier_magnitude: 5.0,
            seed: 0,
        }
    }

    pub fn with_length(mut self, length: usize) -> Self {
        self.length = length;
        self
    }

    pub fn with_periods(mut self, periods: Vec<usize>) -> Self {
        self.periods = periods;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_noise(mut self, sd: f64) -> Self {
        self.noise_sd = sd;
        self
    }

    pub fn with_outliers(mut self, rate: f64, magnitude: f64) -> Self {
        self.outlier_rate = rate;
        self.outlier_magnitude = magnitude;
        self
    }

    fn period(&self, i: usize) -> f64 {
        self.periods.get(i).or(self.periods.first()).copied().unwrap_or(25) as f64
    }
}

/// Number of outliers [`generate`] injects for `spec`.
pub fn outlier_count(spec: &SignalSpec) -> usize {
    let region = (spec.length as f64 * OUTLIER_REGION) as usize;
    ((spec.outlier_rate * spec.length as f64).round() as usize).min(region)
}

/// Values of `spec` with outlier positions, without building a frame.
pub fn generate_values(spec: &SignalSpec) -> Result<(Vec<f64>, Vec<usize>)> {
    if spec.length == 0 {
        return Err(Error::InvalidArgument("signal length must be positive".into()));
    }
    if spec.periods.contains(&0) {
        return Err(Error::InvalidArgument("signal periods must be positive".into()));
    }
    if !(spec.noise_sd >= 0.0) || !(0.0..=1.0).contains(&spec.outlier_rate) {
        return Err(Error::InvalidArgument("noise sd and outlier rate must be non-negative, rate at most 1".into()));
    }
    let n = spec.length as f64;
    let p1 = spec.period(0);
    let p2 = spec.period(1);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut noise = |scale: f64| {
        if spec.noise_sd > 0.0 {
            normal.sample(&mut rng) * spec.noise_sd * scale
        } else {
            0.0
        }
    };
    let wave = |t: f64, p: f64| (TAU * t / p).sin();
    let mut values: Vec<f64> = (0..spec.length)
        .map(|i| {
            let t = i as f64;
            match spec.kind {
                SignalKind::Linear => 1.0 + 0.05 * t,
                SignalKind::Constant => 5.0,
                SignalKind::LinearNoise => 10.0 + 0.05 * t + noise(1.0),
                SignalKind::Exponential => (3.0 * t / n).exp(),
                SignalKind::InverseExponential => 1.0 + 10.0 * (-3.0 * t / n).exp(),
                SignalKind::Sine => wave(t, p1),
                SignalKind::Cosine => (TAU * t / p1).cos(),
                SignalKind::SineCosineOutliers => wave(t, p1) + (TAU * t / p1).cos(),
                SignalKind::Square => {
                    let p = spec.periods.first().copied().unwrap_or(25);
                    if 2 * (i % p) < p {
                        1.0
                    } else {
                        -1.0
                    }
                }
                SignalKind::TrendedWave => 0.01 * t + wave(t, p1),
                SignalKind::Log => (1.0 + t).ln(),
                SignalKind::LogVariance => {
                    let base = (1.0 + t).ln();
                    base + noise(base)
                }
                SignalKind::DualSeason => wave(t, p1) + 0.5 * wave(t, p2),
                SignalKind::CosineGrowingAmplitude => (1.0 + t / n) * (TAU * t / p1).cos(),
            }
        })
        .collect();

    let mut positions = Vec::new();
    let count = outlier_count(spec);
    if count > 0 {
        let region = (spec.length as f64 * OUTLIER_REGION) as usize;
        let amplitude = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        positions = sample(&mut rng, region, count).into_vec();
        positions.sort_unstable();
        for &i in &positions {
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            values[i] += sign * spec.outlier_magnitude * amplitude;
        }
    }
    Ok((values, positions))
}

/// Generates one single-column frame named after the signal family.
pub fn generate(spec: &SignalSpec) -> Result<TimeSeriesFrame> {
    let (values, _) = generate_values(spec)?;
    let ts = (0..values.len() as i64).collect();
    TimeSeriesFrame::with_timestamps(ts, vec![values], vec![spec.kind.name().to_string()])
}

/// The 21-series corpus: every family at its defaults plus seven variants.
pub fn corpus(seed: u64) -> Vec<(String, SignalSpec)> {
    use SignalKind::*;
    let mut out: Vec<(String, SignalSpec)> = SignalKind::ALL
        .iter()
        .map(|&k| (k.name().to_string(), SignalSpec::new(k).with_seed(seed)))
        .collect();
    let variants = [
        ("sine_long", SignalSpec::new(Sine).with_periods(vec![100])),
        ("cosine_short", SignalSpec::new(Cosine).with_periods(vec![13])),
        ("linear_noise_high", SignalSpec::new(LinearNoise).with_noise(5.0)),
        ("square_long", SignalSpec::new(Square).with_periods(vec![50])),
        ("trended_wave_long", SignalSpec::new(TrendedWave).with_periods(vec![60])),
        ("dual_season_fast", SignalSpec::new(DualSeason).with_periods(vec![12, 100])),
        (
            "cosine_outliers_strong",
            SignalSpec::new(SineCosineOutliers).with_outliers(0.02, 8.0),
        ),
    ];
    out.extend(
        variants
            .into_iter()
            .map(|(name, s)| (name.to_string(), s.with_seed(seed))),
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lookback::{periodogram, spectral_lookback};
    use proptest::prelude::*;

    #[test]
    fn constant_is_constant() {
        let f = generate(&SignalSpec::new(SignalKind::Constant)).unwrap();
        assert_eq!(f.n_rows(), 2000);
        assert!(f.column(0).iter().all(|&v| v == 5.0));
    }

    #[test]
    fn corpus_shape() {
        let c = corpus(0);
        assert_eq!(c.len(), 21);
        let mut names: Vec<&str> = c.iter().map(|(n, _)| n.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), 21);
        for (_, s) in &c {
            assert_eq!(generate(s).unwrap().n_rows(), 2000);
        }
    }

    #[test]
    fn dual_season_peaks() {
        let (v, _) = generate_values(&SignalSpec::new(SignalKind::DualSeason)).unwrap();
        assert_eq!(spectral_lookback(&v, 24), 24);
        // Over the 168-season window both periods stand out as the two largest peaks.
        let w = 8 * 168;
        let power = periodogram(&v[v.len() - w..]);
        let mut order: Vec<usize> = (1..power.len()).collect();
        order.sort_by(|&a, &b| power[b].total_cmp(&power[a]));
        let mut top: Vec<usize> = order[..2].iter().map(|&k| w / k).collect();
        top.sort_unstable();
        assert_eq!(top, vec![24, 168]);
    }

    #[test]
    fn formulas() {
        let (v, _) = generate_values(&SignalSpec::new(SignalKind::CosineGrowingAmplitude).with_length(100).with_periods(vec![10])).unwrap();
        assert!((v[50] - 1.5 * (TAU * 5.0).cos()).abs() < 1e-12);
        let (v, _) = generate_values(&SignalSpec::new(SignalKind::Log).with_length(10)).unwrap();
        assert!((v[9] - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn zero_period_rejected() {
        assert!(generate(&SignalSpec::new(SignalKind::Sine).with_periods(vec![0])).is_err());
    }

    proptest! {
        #[test]
        fn deterministic_and_sized(seed in any::<u64>(), len in 1usize..600, k in 0usize..14) {
            let spec = SignalSpec::new(SignalKind::ALL[k]).with_length(len).with_seed(seed);
            let a = generate_values(&spec).unwrap();
            prop_assert_eq!(a.0.len(), len);
            prop_assert_eq!(a, generate_values(&spec).unwrap());
        }

        #[test]
        fn outlier_count_near_rate(seed in any::<u64>(), rate in 0.0f64..0.05, len in 50usize..3000) {
            let spec = SignalSpec::new(SignalKind::SineCosineOutliers)
                .with_length(len)
                .with_outliers(rate, 5.0)
                .with_seed(seed);
            let (_, pos) = generate_values(&spec).unwrap();
            prop_assert!((pos.len() as f64 - rate * len as f64).abs() <= 2.0);
            prop_assert!(pos.iter().all(|&i| (i as f64) < len as f64 * OUTLIER_REGION));
        }
    }
}
