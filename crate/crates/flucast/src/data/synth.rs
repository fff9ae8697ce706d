//! Seed-deterministic synthetic epidemic data.
//!
//! Each season gets one Gaussian-bump flu peak whose timing and intensity
//! jitter from season to season — some winters peak late, some peak hard —
//! on top of a constant baseline with daily observation noise. Signal
//! queries are lagged, noisily scaled transforms of the underlying epidemic
//! curve; distractor queries are slow mean-reverting noise with no relation
//! to it.

use chrono::{Datelike, Days, NaiveDate};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::series::{DailySeries, QueryPanel, WeeklySeries};
use crate::error::{Error, Result};

/// One synthetic query signal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuerySpec {
    /// How many days the query leads the ILI signal.
    pub lead_days: i64,
    /// Standard deviation of the per-day response noise.
    pub noise: f64,
    /// Distractors ignore the epidemic entirely.
    pub distractor: bool,
}

/// Configuration of the synthetic generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    /// Calendar years of data (≥ 5 so four test seasons keep enough
    /// training history).
    pub years: u32,
    /// First calendar year; data starts on January 1 of this year.
    pub start_year: i32,
    /// Mean day-of-year of the seasonal peak (can exceed 31 to push peaks
    /// into February and beyond).
    pub peak_day_of_year: f64,
    /// Standard deviation of the peak timing jitter in days.
    pub peak_day_jitter: f64,
    /// Median peak height above baseline, in ILI rate per 100,000.
    pub peak_intensity: f64,
    /// Log-normal sigma of the intensity jitter.
    pub peak_intensity_jitter: f64,
    /// Gaussian bump width (standard deviation) in days.
    pub peak_width_days: f64,
    /// Off-season ILI rate per 100,000.
    pub baseline_rate: f64,
    /// Standard deviation of daily observation noise on the ILI rate.
    pub observation_noise: f64,
    /// Query signals to generate.
    pub queries: Vec<QuerySpec>,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        let mut queries = Vec::new();
        for i in 0..6 {
            queries.push(QuerySpec {
                lead_days: i as i64,
                noise: 0.06 + 0.03 * i as f64,
                distractor: false,
            });
        }
        for _ in 0..4 {
            queries.push(QuerySpec {
                lead_days: 0,
                noise: 0.15,
                distractor: true,
            });
        }
        SyntheticConfig {
            years: 7,
            start_year: 2012,
            peak_day_of_year: 15.0,
            peak_day_jitter: 18.0,
            peak_intensity: 20.0,
            peak_intensity_jitter: 0.3,
            peak_width_days: 16.0,
            baseline_rate: 3.0,
            observation_noise: 0.4,
            queries,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.years < 5 {
            return Err(Error::Config(format!(
                "synthetic data needs at least 5 years (rolling 4-season evaluation plus training history), got {}",
                self.years
            )));
        }
        if !(self.peak_intensity > 0.0)
            || !(self.peak_width_days > 0.0)
            || self.baseline_rate < 0.0
            || self.observation_noise < 0.0
            || self.peak_day_jitter < 0.0
            || self.peak_intensity_jitter < 0.0
        {
            return Err(Error::Config(
                "synthetic peak/baseline/noise parameters must be non-negative (widths positive)"
                    .into(),
            ));
        }
        if self.queries.iter().any(|q| q.noise < 0.0) {
            return Err(Error::Config("query noise must be non-negative".into()));
        }
        Ok(())
    }

    pub fn start_date(&self) -> NaiveDate {
        NaiveDate::from_ymd_opt(self.start_year, 1, 1).expect("valid start year")
    }

    pub fn end_date(&self) -> NaiveDate {
        NaiveDate::from_ymd_opt(self.start_year + self.years as i32 - 1, 12, 30)
            .expect("valid end year")
    }
}

/// The noiseless epidemic curve over `[start - margin, end + margin]`.
struct Underlying {
    start: NaiveDate,
    values: Vec<f64>,
}

impl Underlying {
    fn get(&self, date: NaiveDate) -> f64 {
        let idx = (date - self.start).num_days();
        self.values[idx as usize]
    }
}

const MARGIN_DAYS: u64 = 40;

fn build_underlying(config: &SyntheticConfig, rng: &mut ChaCha8Rng) -> Underlying {
    let start = config.start_date() - Days::new(MARGIN_DAYS);
    let end = config.end_date() + Days::new(MARGIN_DAYS);
    let n = (end - start).num_days() as usize + 1;

    // One peak per winter, including the winter after the last year so
    // December of the final year ramps up realistically.
    let mut peaks = Vec::new();
    for year in config.start_year..=config.start_year + config.years as i32 {
        let timing_noise: f64 = rng.sample(StandardNormal);
        let intensity_noise: f64 = rng.sample(StandardNormal);
        let base = NaiveDate::from_ymd_opt(year, 1, 1).expect("valid year");
        let peak_offset = config.peak_day_of_year + config.peak_day_jitter * timing_noise;
        let intensity =
            config.peak_intensity * (config.peak_intensity_jitter * intensity_noise).exp();
        peaks.push((base, peak_offset, intensity));
    }

    let mut values = vec![config.baseline_rate; n];
    let width2 = 2.0 * config.peak_width_days * config.peak_width_days;
    for (i, v) in values.iter_mut().enumerate() {
        let date = start + Days::new(i as u64);
        for &(base, offset, intensity) in &peaks {
            let days_from_base = (date - base).num_days() as f64;
            let dist = days_from_base - (offset - 1.0);
            // Skip far-away peaks; a 16-day bump is negligible past ~8 sigma.
            if dist.abs() < 8.0 * config.peak_width_days {
                *v += intensity * (-dist * dist / width2).exp();
            }
        }
    }
    Underlying { start, values }
}

/// Generates a weekly ILI series and a daily query panel.
///
/// Weekly values are means of the noisy daily rate over weeks ending on
/// Sundays; the panel covers the full configured span. The output is a pure
/// function of the configuration.
pub fn synthesize(config: &SyntheticConfig) -> Result<(WeeklySeries, QueryPanel)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let underlying = build_underlying(config, &mut rng);

    let start = config.start_date();
    let end = config.end_date();
    let n_days = (end - start).num_days() as usize + 1;

    // Observed daily ILI: underlying plus observation noise, floored at 0.
    let observed: Vec<f64> = (0..n_days)
        .map(|i| {
            let date = start + Days::new(i as u64);
            let noise: f64 = rng.sample(StandardNormal);
            (underlying.get(date) + config.observation_noise * noise).max(0.0)
        })
        .collect();

    // Weekly means over weeks ending on Sundays.
    let mut first_sunday = start + Days::new(6);
    while first_sunday.weekday() != chrono::Weekday::Sun {
        first_sunday = first_sunday + Days::new(1);
    }
    let mut week_dates = Vec::new();
    let mut week_values = Vec::new();
    let mut week_end = first_sunday;
    while week_end <= end {
        let end_idx = (week_end - start).num_days() as usize;
        let window = &observed[end_idx - 6..=end_idx];
        week_dates.push(week_end);
        week_values.push(window.iter().sum::<f64>() / 7.0);
        week_end = week_end + Days::new(7);
    }
    let weekly = WeeklySeries::new(week_dates, week_values)?;

    // Queries over the full daily span.
    let mut ids = Vec::new();
    let mut series = Vec::new();
    for (qi, spec) in config.queries.iter().enumerate() {
        let values: Vec<f64> = if spec.distractor {
            // Slow mean-reverting walk: persistent, but unrelated to flu.
            let level: f64 = rng.gen_range(2.0..8.0);
            let persistence = 0.97;
            let mut state = 0.0;
            (0..n_days)
                .map(|_| {
                    let shock: f64 = rng.sample(StandardNormal);
                    state = persistence * state + spec.noise * 10.0 * shock;
                    (level + state).max(0.0)
                })
                .collect()
        } else {
            let scale: f64 = rng.gen_range(0.6..1.4);
            let offset: f64 = rng.gen_range(0.5..3.0);
            (0..n_days)
                .map(|i| {
                    let date = start + Days::new(i as u64) + Days::new(spec.lead_days as u64);
                    let shock: f64 = rng.sample(StandardNormal);
                    (scale * underlying.get(date) + offset
                        + spec.noise * config.peak_intensity * shock)
                        .max(0.0)
                })
                .collect()
        };
        let kind = if spec.distractor { "distractor" } else { "signal" };
        ids.push(format!("q{qi:02}_{kind}"));
        series.push(DailySeries::new(start, values)?);
    }
    let panel = QueryPanel::new(ids, series)?;
    Ok((weekly, panel))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::pipeline::{harmonic_smooth, pearson, weekly_to_daily, DateRange};

    #[test]
    fn same_seed_reproduces_dataset() {
        let config = SyntheticConfig::default();
        let (w1, p1) = synthesize(&config).unwrap();
        let (w2, p2) = synthesize(&config).unwrap();
        assert_eq!(w1, w2);
        assert_eq!(p1, p2);
    }

    #[test]
    fn different_seed_changes_dataset() {
        let config = SyntheticConfig::default();
        let other = SyntheticConfig {
            seed: 1,
            ..config.clone()
        };
        let (w1, _) = synthesize(&config).unwrap();
        let (w2, _) = synthesize(&other).unwrap();
        assert_ne!(w1, w2);
    }

    #[test]
    fn ili_rates_are_nonnegative() {
        let (weekly, _) = synthesize(&SyntheticConfig::default()).unwrap();
        assert!(weekly.values().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn rejects_too_few_years() {
        let config = SyntheticConfig {
            years: 4,
            ..SyntheticConfig::default()
        };
        assert!(matches!(synthesize(&config), Err(Error::Config(_))));
    }

    #[test]
    fn signal_query_correlates_with_ili() {
        let config = SyntheticConfig::default();
        let (weekly, panel) = synthesize(&config).unwrap();
        let ili = weekly_to_daily(&weekly).unwrap();
        let q = panel.get("q00_signal").unwrap();
        let period = DateRange::new(ili.start(), ili.end()).unwrap();
        let a = q
            .range(period.start, period.end, "test")
            .unwrap()
            .to_vec();
        let b = ili
            .range(period.start, period.end, "test")
            .unwrap()
            .to_vec();
        let r = pearson(&a, &b).unwrap();
        assert!(r > 0.8, "lag-0 low-noise signal query correlation {r}");
    }

    #[test]
    fn distractor_query_does_not_correlate() {
        let config = SyntheticConfig::default();
        let (weekly, panel) = synthesize(&config).unwrap();
        let ili = weekly_to_daily(&weekly).unwrap();
        let q = panel.get("q06_distractor").unwrap();
        let a = q.range(ili.start(), ili.end(), "test").unwrap().to_vec();
        let b = ili.values().to_vec();
        let r = pearson(&a, &b).unwrap();
        assert!(r.abs() < 0.3, "distractor correlation {r}");
    }

    #[test]
    fn seasonal_peaks_fall_near_configured_timing() {
        let config = SyntheticConfig::default();
        let (weekly, _) = synthesize(&config).unwrap();
        let daily = weekly_to_daily(&weekly).unwrap();
        let smoothed = harmonic_smooth(&daily, 7).unwrap();
        // check each interior season: argmax of smoothed ILI within
        // mean ± 4·jitter plus interpolation slack
        let slack = 4.0 * config.peak_day_jitter + 10.0;
        for year in config.start_year + 1..config.start_year + config.years as i32 {
            let season_start = NaiveDate::from_ymd_opt(year - 1, 8, 23).unwrap();
            let season_end = NaiveDate::from_ymd_opt(year, 8, 22).unwrap().min(daily.end());
            let window = smoothed.slice(season_start, season_end, "test").unwrap();
            let (mut best_idx, mut best) = (0usize, f64::NEG_INFINITY);
            for (i, &v) in window.values().iter().enumerate() {
                if v > best {
                    best = v;
                    best_idx = i;
                }
            }
            let peak_date = season_start + Days::new(best_idx as u64);
            let expected = NaiveDate::from_ymd_opt(year, 1, 1).unwrap()
                + Days::new(config.peak_day_of_year as u64);
            let off = (peak_date - expected).num_days().abs() as f64;
            assert!(
                off <= slack,
                "season {year} peak {peak_date} is {off} days from {expected}"
            );
        }
    }
}
