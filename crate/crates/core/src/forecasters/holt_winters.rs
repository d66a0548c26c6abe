//! Triple exponential smoothing (Holt-Winters), additive and multiplicative.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smoothing parameter grid shared by α, β and γ.
pub const SMOOTHING_GRID: [f64; 20] = [
    0.01, 0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45, 0.50, 0.55, 0.60, 0.65, 0.70,
    0.75, 0.80, 0.85, 0.90, 0.95,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeasonalMode {
    Additive,
    Multiplicative,
}

/// Fitted Holt-Winters model for one series.
///
/// `seasonal` holds the last `season_length` seasonal states in time order,
/// so step `k` ahead (1-based) uses `seasonal[(k - 1) % m]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoltWintersParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub season_length: usize,
    pub mode: SeasonalMode,
    pub level: f64,
    pub trend: f64,
    pub seasonal: Vec<f64>,
    /// In-sample one-step-ahead squared error.
    pub sse: f64,
}

impl HoltWintersParams {
    pub fn forecast(&self, h: usize) -> Vec<f64> {
        let m = self.season_length;
        (1..=h)
            .map(|k| {
                let base = self.level + k as f64 * self.trend;
                let s = self.seasonal[(k - 1) % m];
                match self.mode {
                    SeasonalMode::Additive => base + s,
                    SeasonalMode::Multiplicative => base * s,
                }
            })
            .collect()
    }
}

struct State {
    level: f64,
    trend: f64,
    /// Ring buffer indexed by `t % m`.
    seasonal: Vec<f64>,
}

/// Initial state at time `m - 1`.
///
/// Level and trend come from the first two season means; the seasonal
/// indices are the first season's deviations (or ratios) from that linear
/// level, which is centred on the middle of the first season.
fn initial_state(x: &[f64], m: usize, mode: SeasonalMode) -> State {
    let mf = m as f64;
    let mean1 = x[..m].iter().sum::<f64>() / mf;
    let mean2 = x[m..2 * m].iter().sum::<f64>() / mf;
    let trend = (mean2 - mean1) / mf;
    let centre = (mf - 1.0) / 2.0;
    let seasonal = (0..m)
        .map(|i| {
            let base = mean1 + trend * (i as f64 - centre);
            match mode {
                SeasonalMode::Additive => x[i] - base,
                SeasonalMode::Multiplicative => x[i] / base,
            }
        })
        .collect();
    State {
        level: mean1 + trend * (mf - 1.0 - centre),
        trend,
        seasonal,
    }
}

/// Runs the recursions over `x[m..]`, returning the one-step SSE and the final state.
fn run(x: &[f64], m: usize, mode: SeasonalMode, a: f64, b: f64, g: f64, init: &State) -> (f64, State) {
    let mut level = init.level;
    let mut trend = init.trend;
    let mut seasonal = init.seasonal.clone();
    let mut sse = 0.0;
    for (t, &obs) in x.iter().enumerate().skip(m) {
        let slot = t % m;
        let s = seasonal[slot];
        let prev = level;
        match mode {
            SeasonalMode::Additive => {
                let e = obs - (level + trend + s);
                sse += e * e;
                level = a * (obs - s) + (1.0 - a) * (level + trend);
                trend = b * (level - prev) + (1.0 - b) * trend;
                seasonal[slot] = g * (obs - level) + (1.0 - g) * s;
            }
            SeasonalMode::Multiplicative => {
                let e = obs - (level + trend) * s;
                sse += e * e;
                level = a * obs / s + (1.0 - a) * (level + trend);
                trend = b * (level - prev) + (1.0 - b) * trend;
                seasonal[slot] = g * obs / level + (1.0 - g) * s;
            }
        }
        if !sse.is_finite() {
            return (f64::INFINITY, State { level, trend, seasonal });
        }
    }
    (sse, State { level, trend, seasonal })
}

/// Fits Holt-Winters by grid search over [`SMOOTHING_GRID`]³, minimising the
/// in-sample one-step-ahead squared error. Ties keep the first grid point.
pub fn holt_winters_fit(x: &[f64], m: usize, mode: SeasonalMode) -> Result<HoltWintersParams> {
    if m == 0 {
        return Err(Error::InvalidArgument("season length must be positive".into()));
    }
    if x.len() < 2 * m {
        return Err(Error::InsufficientData(format!(
            "Holt-Winters with season {m} needs {} rows, got {}",
            2 * m,
            x.len()
        )));
    }
    if mode == SeasonalMode::Multiplicative {
        if let Some(v) = x.iter().find(|v| !(**v > 0.0)) {
            return Err(Error::Domain(format!(
                "multiplicative Holt-Winters requires positive data, found {v}"
            )));
        }
    }
    let init = initial_state(x, m, mode);
    let mut best: Option<(f64, [f64; 3])> = None;
    for &a in &SMOOTHING_GRID {
        for &b in &SMOOTHING_GRID {
            for &g in &SMOOTHING_GRID {
                let (sse, _) = run(x, m, mode, a, b, g, &init);
                if sse.is_finite() && best.map_or(true, |(s, _)| sse < s) {
                    best = Some((sse, [a, b, g]));
                }
            }
        }
    }
    let (sse, [alpha, beta, gamma]) = best.ok_or_else(|| {
        Error::InsufficientData("Holt-Winters recursions diverged for every parameter".into())
    })?;
    let (_, state) = run(x, m, mode, alpha, beta, gamma, &init);
    // Reorder the ring buffer so index 0 is the season slot of time n.
    let n = x.len();
    let seasonal = (0..m).map(|k| state.seasonal[(n + k) % m]).collect();
    Ok(HoltWintersParams {
        alpha,
        beta,
        gamma,
        season_length: m,
        mode,
        level: state.level,
        trend: state.trend,
        seasonal,
        sse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn generator(t: usize) -> f64 {
        const SEASON: [f64; 4] = [1.0, -1.0, 2.0, -2.0];
        10.0 + 0.5 * t as f64 + SEASON[t % 4]
    }

    #[test]
    fn additive_continues_generator() {
        let x: Vec<f64> = (0..48).map(generator).collect();
        let p = holt_winters_fit(&x, 4, SeasonalMode::Additive).unwrap();
        let f = p.forecast(4);
        for (k, v) in f.iter().enumerate() {
            assert!((v - generator(48 + k)).abs() < 1e-3, "step {k}: {v}");
        }
    }

    #[test]
    fn noiseless_in_sample_error_is_tiny() {
        let x: Vec<f64> = (0..48).map(generator).collect();
        let p = holt_winters_fit(&x, 4, SeasonalMode::Additive).unwrap();
        assert!(p.sse <= 1e-4 * 48.0 * 4.0);

        let y: Vec<f64> = (0..120)
            .map(|t| (50.0 + t as f64) * (1.0 + 0.2 * (std::f64::consts::TAU * t as f64 / 12.0).sin()))
            .collect();
        let p = holt_winters_fit(&y, 12, SeasonalMode::Multiplicative).unwrap();
        let f = p.forecast(12);
        for (k, v) in f.iter().enumerate() {
            let t = (120 + k) as f64;
            let truth = (50.0 + t) * (1.0 + 0.2 * (std::f64::consts::TAU * t / 12.0).sin());
            assert!((v - truth).abs() / truth < 0.01);
        }
    }

    #[test]
    fn constant_series_is_fixed_point() {
        let x = vec![5.0; 30];
        for mode in [SeasonalMode::Additive, SeasonalMode::Multiplicative] {
            let p = holt_winters_fit(&x, 3, mode).unwrap();
            assert!(p.forecast(7).iter().all(|v| (v - 5.0).abs() < 1e-12));
        }
    }

    #[test]
    fn multiplicative_rejects_zero() {
        let mut x = vec![3.0; 20];
        x[5] = 0.0;
        let err = holt_winters_fit(&x, 4, SeasonalMode::Multiplicative).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn too_short() {
        assert!(holt_winters_fit(&[1.0; 7], 4, SeasonalMode::Additive).is_err());
    }
}
