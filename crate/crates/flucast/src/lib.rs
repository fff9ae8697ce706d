//! Probabilistic influenza-like-illness (ILI) forecasting.
//!
//! The crate trains feed-forward and LSTM forecasters on daily ILI rates and
//! web-search query frequencies, with four uncertainty treatments per
//! architecture: deterministic point forecasts, heteroscedastic data
//! uncertainty, variational last-layer model uncertainty, and their
//! combination. Naïve, historical-average and Gaussian-process baselines,
//! a probabilistic evaluation suite (CRPS, NLL, calibration curves,
//! seed-level significance tests) and an experiment harness round out the
//! toolkit. Everything runs end to end on the bundled synthetic epidemic
//! generator or on user-supplied CSV data.

pub mod bayes;
pub mod data;
pub mod error;
pub mod forecast;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod nn;
pub mod tape;
pub mod training;

pub use error::{Error, Result};
pub use linalg::Matrix;
