//! Forecaster assembly: the eight neural variants (feed-forward and LSTM,
//! each with point, data-, model- or combined-uncertainty heads), K-sample
//! probabilistic prediction, and the naïve / historical-average /
//! Gaussian-process baselines.

mod baselines;
mod gp;
mod model;
mod predict;

pub use baselines::{historical_average, naive_forecast, HistoricalBaseline, NaiveBaseline};
pub use gp::{gp_forecast, GpBaseline, GpConfig, GpFit};
pub use model::{BatchInputs, Checkpoint, NnModel, TrainForward, CHECKPOINT_VERSION};
pub use predict::combine_uncertainty;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Network family or baseline kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Ff,
    Lstm,
    Naive,
    Historical,
    Gp,
}

/// How a neural model treats uncertainty: `-v` point forecasts, `-d`
/// heteroscedastic data uncertainty, `-m` variational model uncertainty,
/// `-c` both combined.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UncertaintyMode {
    Point,
    Data,
    Model,
    Combined,
}

impl UncertaintyMode {
    pub fn suffix(self) -> &'static str {
        match self {
            UncertaintyMode::Point => "v",
            UncertaintyMode::Data => "d",
            UncertaintyMode::Model => "m",
            UncertaintyMode::Combined => "c",
        }
    }

    /// Whether predictions carry a standard deviation.
    pub fn probabilistic(self) -> bool {
        self != UncertaintyMode::Point
    }

    /// Whether the final layer's weights are stochastic.
    pub fn stochastic(self) -> bool {
        matches!(self, UncertaintyMode::Model | UncertaintyMode::Combined)
    }
}

/// Which model to build and with what hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForecasterSpec {
    pub architecture: Architecture,
    pub uncertainty: UncertaintyMode,
    /// `false` for the `-nq` variants that drop the query rows.
    pub use_queries: bool,
    /// Hidden width of the feed-forward trunk.
    pub ff_hidden: usize,
    /// LSTM cell size.
    pub lstm_hidden: usize,
    /// Width of the dense layer after the LSTM.
    pub lstm_dense: usize,
    /// Posterior samples drawn per prediction (K).
    pub sample_count: usize,
    /// Forecast horizon in days (γ).
    pub horizon: usize,
    /// Sharpening factor of the data-uncertainty softplus (ρ).
    pub data_sharpness: f64,
    /// Sharpening factor of the posterior-std softplus (ρ_q).
    pub posterior_sharpness: f64,
    /// Fixed prior standard deviation over final-layer weights (σ_p).
    pub prior_std: f64,
    /// Fixed output standard deviation for model-uncertainty likelihoods (σ).
    pub output_std: f64,
}

impl ForecasterSpec {
    pub fn new(architecture: Architecture, uncertainty: UncertaintyMode) -> Self {
        ForecasterSpec {
            architecture,
            uncertainty,
            use_queries: true,
            ff_hidden: 25,
            lstm_hidden: 32,
            lstm_dense: 16,
            sample_count: 100,
            horizon: 14,
            data_sharpness: 0.25,
            posterior_sharpness: 10.0,
            prior_std: 0.5,
            output_std: 5.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_count < 1 {
            return Err(Error::Config("sample count K must be at least 1".into()));
        }
        if self.horizon == 0 {
            return Err(Error::Config("forecast horizon must be positive".into()));
        }
        if self.is_network() {
            if !(self.data_sharpness > 0.0) || !(self.posterior_sharpness > 0.0) {
                return Err(Error::Config("sharpening factors must be positive".into()));
            }
            if !(self.prior_std > 0.0) || !(self.output_std > 0.0) {
                return Err(Error::Config(
                    "prior and output standard deviations must be positive".into(),
                ));
            }
            if self.ff_hidden == 0 || self.lstm_hidden == 0 || self.lstm_dense == 0 {
                return Err(Error::Config("layer widths must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn is_network(&self) -> bool {
        matches!(self.architecture, Architecture::Ff | Architecture::Lstm)
    }

    /// Canonical id such as `ff-c`, `lstm-m`, `ff-c-nq`, `naive`.
    pub fn id(&self) -> String {
        match self.architecture {
            Architecture::Naive => "naive".to_string(),
            Architecture::Historical => "hist".to_string(),
            Architecture::Gp => "gp".to_string(),
            Architecture::Ff | Architecture::Lstm => {
                let arch = if self.architecture == Architecture::Ff {
                    "ff"
                } else {
                    "lstm"
                };
                let mut id = format!("{arch}-{}", self.uncertainty.suffix());
                if !self.use_queries {
                    id.push_str("-nq");
                }
                id
            }
        }
    }

    /// Parses ids like `ff-v`, `lstm-c-nq`, `naive`, `hist`, `gp`.
    pub fn parse(text: &str) -> Result<Self> {
        let lower = text.trim().to_ascii_lowercase();
        match lower.as_str() {
            "naive" => return Ok(Self::new(Architecture::Naive, UncertaintyMode::Point)),
            "hist" | "historical" => {
                return Ok(Self::new(Architecture::Historical, UncertaintyMode::Data))
            }
            "gp" => return Ok(Self::new(Architecture::Gp, UncertaintyMode::Data)),
            _ => {}
        }
        let mut parts = lower.split('-');
        let architecture = match parts.next() {
            Some("ff") => Architecture::Ff,
            Some("lstm") => Architecture::Lstm,
            other => {
                return Err(Error::Config(format!(
                    "unknown model architecture '{}' in '{text}'",
                    other.unwrap_or("")
                )))
            }
        };
        let uncertainty = match parts.next() {
            Some("v") => UncertaintyMode::Point,
            Some("d") => UncertaintyMode::Data,
            Some("m") => UncertaintyMode::Model,
            Some("c") => UncertaintyMode::Combined,
            other => {
                return Err(Error::Config(format!(
                    "unknown uncertainty mode '{}' in '{text}'",
                    other.unwrap_or("")
                )))
            }
        };
        let use_queries = match parts.next() {
            None => true,
            Some("nq") => false,
            Some(other) => {
                return Err(Error::Config(format!(
                    "unexpected model suffix '{other}' in '{text}'"
                )))
            }
        };
        if parts.next().is_some() {
            return Err(Error::Config(format!("malformed model id '{text}'")));
        }
        let mut spec = Self::new(architecture, uncertainty);
        spec.use_queries = use_queries;
        Ok(spec)
    }
}

impl std::fmt::Display for ForecasterSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.id())
    }
}

/// Per-time-point predictive mean and (for probabilistic models) standard
/// deviation, keyed by target date.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbabilisticForecast {
    pub dates: Vec<NaiveDate>,
    pub mean: Vec<f64>,
    pub std: Option<Vec<f64>>,
}

impl ProbabilisticForecast {
    pub fn new(dates: Vec<NaiveDate>, mean: Vec<f64>, std: Option<Vec<f64>>) -> Result<Self> {
        if mean.len() != dates.len() {
            return Err(Error::InvalidInput(format!(
                "forecast has {} dates but {} means",
                dates.len(),
                mean.len()
            )));
        }
        if let Some(std) = &std {
            if std.len() != dates.len() {
                return Err(Error::InvalidInput(format!(
                    "forecast has {} dates but {} stds",
                    dates.len(),
                    std.len()
                )));
            }
            if std.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
                return Err(Error::InvalidInput(
                    "forecast stds must be positive and finite".into(),
                ));
            }
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidInput("forecast means must be finite".into()));
        }
        Ok(ProbabilisticForecast { dates, mean, std })
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn is_probabilistic(&self) -> bool {
        self.std.is_some()
    }
}

/// Floor applied to degenerate standard deviations before scoring, so a
/// zero-variance forecast keeps a finite negative log-likelihood.
pub const STD_FLOOR: f64 = 1e-6;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_ids_round_trip() {
        for id in [
            "ff-v", "ff-d", "ff-m", "ff-c", "lstm-v", "lstm-d", "lstm-m", "lstm-c", "ff-c-nq",
            "lstm-c-nq", "naive", "hist", "gp",
        ] {
            let spec = ForecasterSpec::parse(id).unwrap();
            assert_eq!(spec.id(), id);
        }
    }

    #[test]
    fn malformed_ids_are_rejected() {
        for id in ["", "ff", "ff-x", "gru-v", "ff-v-nq-extra", "lstm-"] {
            assert!(ForecasterSpec::parse(id).is_err(), "id '{id}' parsed");
        }
    }

    #[test]
    fn spec_validation_catches_bad_values() {
        let mut spec = ForecasterSpec::new(Architecture::Ff, UncertaintyMode::Combined);
        spec.sample_count = 0;
        assert!(spec.validate().is_err());
        let mut spec = ForecasterSpec::new(Architecture::Ff, UncertaintyMode::Combined);
        spec.prior_std = 0.0;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn forecast_invariants_enforced() {
        let d = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        assert!(ProbabilisticForecast::new(vec![d], vec![1.0], Some(vec![0.0])).is_err());
        assert!(ProbabilisticForecast::new(vec![d], vec![1.0, 2.0], None).is_err());
        assert!(ProbabilisticForecast::new(vec![d], vec![1.0], Some(vec![0.5])).is_ok());
    }
}
