//! Zero-configuration time-series forecasting.
//!
//! A catalog of forecasting pipelines (transform chain plus estimator) is
//! ranked by T-Daub, which trains every pipeline on growing suffixes of the
//! training data and extrapolates learning curves instead of fitting each one
//! on everything. Look-back windows for the window-based models are found
//! from the timestamp frequency, zero crossings and the periodogram.
//!
//! ```no_run
//! use tsforge::{engine, frame, tdaub::NoProgress};
//!
//! let data = frame::load_csv("AirPassengers.csv", Some("Month"))?;
//! let out = engine::fit(&data, &engine::RunConfig::default(), &NoProgress)?;
//! println!("{} -> {}", out.report.winner, out.model.predict(12)?);
//! # Ok::<(), tsforge::Error>(())
//! ```

// `!(x > 0.0)` is used deliberately so NaN takes the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod engine;
pub mod error;
pub mod forecasters;
pub mod frame;
mod linalg;
pub mod lookback;
pub mod metrics;
pub mod par;
pub mod pipeline;
pub mod synth;
pub mod tdaub;
pub mod transforms;

pub use error::{Error, Result};
pub use frame::TimeSeriesFrame;
pub use metrics::EvalReport;
pub use pipeline::Pipeline;
