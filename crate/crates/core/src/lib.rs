//! Real-time monitoring of bivariate time-between-events (TBE) data.
//!
//! The pipeline converts an asynchronous stream of bivariate event times into
//! a labeled, in-control i.i.d. Exp(1) stream, runs a bank of eight adaptive
//! CUSUM statistics with Bayesian shift estimation over it, aggregates them
//! through a probability integral transform into a single charting statistic
//! `Q_t`, and signals when `Q_t` crosses a Monte-Carlo-calibrated threshold.
//!
//! Modules follow the pipeline order:
//! - [`distributions`]: samplers and conditional CDFs for the three bivariate
//!   lifetime families (MOBE, MOBW, Gumbel), plus their closed-form
//!   out-of-control laws.
//! - [`transform`]: the decorrelating transform and streaming relabeling.
//! - [`acusum`]: the eight-branch adaptive CUSUM bank.
//! - [`aggregate`]: stationary empirical CDF tables, PIT, and `Q_t`.
//! - [`baseline`]: a Shewhart-style single-observation comparator.
//! - [`calibrate`]: Monte Carlo run-length estimation and threshold search.

pub mod acusum;
pub mod aggregate;
pub mod baseline;
pub mod calibrate;
pub mod distributions;
mod error;
pub mod rng;
pub mod transform;

pub use error::{Error, Result};
