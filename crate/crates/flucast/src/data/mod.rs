//! Dataset mechanics: series types, weekly→daily interpolation, query
//! smoothing and normalization, correlation-based query selection,
//! rolling-window supervised set construction, the synthetic epidemic
//! generator, and CSV ingestion/emission.

mod csvio;
mod pipeline;
mod series;
mod synth;

pub use csvio::{load_daily, load_panel, load_weekly, save_daily, save_panel, save_weekly};
pub use pipeline::{
    build_windows, flatten_column_major, harmonic_smooth, minmax_normalize, pearson,
    select_queries, weekly_to_daily, DateRange, MinMax,
};
pub use series::{DailySeries, QueryPanel, WeeklySeries};
pub use synth::{synthesize, QuerySpec, SyntheticConfig};

use crate::linalg::Matrix;
use chrono::NaiveDate;

/// One supervised pair: the input matrix for origin day `t`, the target ILI
/// rate observed `horizon` days later, and `t` itself.
#[derive(Clone, Debug)]
pub struct WindowSample {
    pub input: Matrix,
    pub target: f64,
    pub origin: NaiveDate,
}

/// Supervised windows plus the framing they were built with.
#[derive(Clone, Debug)]
pub struct WindowedDataset {
    pub samples: Vec<WindowSample>,
    /// Historical days per signal (ℓ in the problem framing).
    pub window_len: usize,
    /// Reporting delay applied to the ILI row (δ).
    pub delay: usize,
    /// Forecast horizon (γ).
    pub horizon: usize,
    /// Number of query rows (the input is (query_count + 1) x window_len).
    pub query_count: usize,
    /// Query identifiers in input-row order.
    pub query_ids: Vec<String>,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Target date of a sample: origin + horizon.
    pub fn target_date(&self, sample: &WindowSample) -> NaiveDate {
        sample.origin + chrono::Days::new(self.horizon as u64)
    }

    /// Latest date any query row of a sample references.
    pub fn latest_query_date(&self, sample: &WindowSample) -> NaiveDate {
        sample.origin
    }

    /// Latest date the ILI row of a sample references.
    pub fn latest_ili_date(&self, sample: &WindowSample) -> NaiveDate {
        sample.origin - chrono::Days::new(self.delay as u64)
    }

    /// Input rows (query_count + 1) and columns (window_len).
    pub fn input_shape(&self) -> (usize, usize) {
        (self.query_count + 1, self.window_len)
    }
}
