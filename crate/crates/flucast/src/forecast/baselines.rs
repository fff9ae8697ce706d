//! Persistence and historical-average baselines.

use chrono::{Datelike, Days, NaiveDate};

use super::{ProbabilisticForecast, STD_FLOOR};
use crate::data::{DailySeries, DateRange};
use crate::error::{Error, Result};

/// Persistence forecast: the most recently available ILI value, i.e. the
/// rate observed `delay` days before the forecast origin. The horizon only
/// shifts the date the forecast is attributed to, never the value.
pub fn naive_forecast(
    ili: &DailySeries,
    origin: NaiveDate,
    horizon: usize,
    delay: usize,
) -> Result<ProbabilisticForecast> {
    let value = ili.require(origin - Days::new(delay as u64), "naive forecast history")?;
    ProbabilisticForecast::new(vec![origin + Days::new(horizon as u64)], vec![value], None)
}

/// Persistence model over whole test periods.
#[derive(Clone, Copy, Debug)]
pub struct NaiveBaseline {
    pub delay: usize,
}

impl NaiveBaseline {
    /// Point forecasts for every target date in `targets`.
    pub fn forecast(
        &self,
        ili: &DailySeries,
        targets: DateRange,
        horizon: usize,
    ) -> Result<ProbabilisticForecast> {
        let mut dates = Vec::with_capacity(targets.days());
        let mut means = Vec::with_capacity(targets.days());
        for target in targets.iter() {
            let origin = target - Days::new(horizon as u64);
            let value = ili.require(origin - Days::new(self.delay as u64), "naive history")?;
            dates.push(target);
            means.push(value);
        }
        ProbabilisticForecast::new(dates, means, None)
    }
}

/// Mean and population standard deviation of the ILI rate on the same
/// calendar day in all prior years of `history`. February 29 falls back to
/// February 28 in non-leap years. Needs at least two prior years; the std
/// is floored for scoring so constant histories stay scoreable.
pub fn historical_average(history: &DailySeries, target: NaiveDate) -> Result<(f64, f64)> {
    let mut values = Vec::new();
    for year in history.start().year()..target.year() {
        let date = same_calendar_day(year, target);
        if let Some(v) = history.get(date) {
            values.push(v);
        }
    }
    if values.len() < 2 {
        return Err(Error::InsufficientHistory(format!(
            "historical average for {target} needs at least 2 prior years, found {}",
            values.len()
        )));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok((mean, var.sqrt().max(STD_FLOOR)))
}

fn same_calendar_day(year: i32, target: NaiveDate) -> NaiveDate {
    NaiveDate::from_ymd_opt(year, target.month(), target.day()).unwrap_or_else(|| {
        // Feb 29 in a non-leap prior year
        NaiveDate::from_ymd_opt(year, 2, 28).expect("feb 28 always exists")
    })
}

/// Historical-average model over whole test periods.
#[derive(Clone, Copy, Debug)]
pub struct HistoricalBaseline;

impl HistoricalBaseline {
    /// Probabilistic forecasts for every target date in `targets`, using
    /// only `history` (data up to the season start).
    pub fn forecast(
        &self,
        history: &DailySeries,
        targets: DateRange,
    ) -> Result<ProbabilisticForecast> {
        let mut dates = Vec::with_capacity(targets.days());
        let mut means = Vec::with_capacity(targets.days());
        let mut stds = Vec::with_capacity(targets.days());
        for target in targets.iter() {
            let (mean, std) = historical_average(history, target)?;
            dates.push(target);
            means.push(mean);
            stds.push(std);
        }
        ProbabilisticForecast::new(dates, means, Some(stds))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    #[test]
    fn naive_echoes_delayed_value_regardless_of_horizon() {
        let start = d(2020, 1, 1);
        let ili = DailySeries::new(start, (0..60).map(|i| i as f64).collect()).unwrap();
        let origin = d(2020, 2, 1); // day index 31
        for horizon in [7usize, 14, 21] {
            let f = naive_forecast(&ili, origin, horizon, 7).unwrap();
            assert_eq!(f.mean, vec![24.0]); // value at origin - 7
            assert_eq!(f.dates, vec![origin + Days::new(horizon as u64)]);
            assert!(f.std.is_none());
        }
    }

    #[test]
    fn naive_constant_series_has_zero_error() {
        let ili = DailySeries::new(d(2020, 1, 1), vec![5.5; 40]).unwrap();
        let f = naive_forecast(&ili, d(2020, 2, 1), 7, 7).unwrap();
        assert_eq!(f.mean, vec![5.5]);
    }

    #[test]
    fn naive_missing_history_is_a_data_gap() {
        let ili = DailySeries::new(d(2020, 1, 10), vec![1.0; 10]).unwrap();
        assert!(matches!(
            naive_forecast(&ili, d(2020, 1, 12), 7, 7),
            Err(Error::DataGap { .. })
        ));
    }

    fn three_year_history(values: [f64; 3]) -> DailySeries {
        // Daily data 2017-01-01 .. 2019-12-31 with distinguished values on
        // March 5 of each year.
        let start = d(2017, 1, 1);
        let days = (d(2019, 12, 31) - start).num_days() as usize + 1;
        let mut data = vec![0.5; days];
        for (i, (y, v)) in [(2017, values[0]), (2018, values[1]), (2019, values[2])]
            .into_iter()
            .enumerate()
        {
            let _ = i;
            let idx = (d(y, 3, 5) - start).num_days() as usize;
            data[idx] = v;
        }
        DailySeries::new(start, data).unwrap()
    }

    #[test]
    fn historical_average_population_statistics() {
        let history = three_year_history([1.0, 2.0, 3.0]);
        let (mean, std) = historical_average(&history, d(2020, 3, 5)).unwrap();
        assert!((mean - 2.0).abs() < 1e-12);
        assert!((std - (2.0 / 3.0_f64).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn historical_average_floors_degenerate_std() {
        let history = three_year_history([2.0, 2.0, 2.0]);
        let (mean, std) = historical_average(&history, d(2020, 3, 5)).unwrap();
        assert_eq!(mean, 2.0);
        assert_eq!(std, STD_FLOOR);
    }

    #[test]
    fn historical_average_needs_two_prior_years() {
        let history =
            DailySeries::new(d(2019, 1, 1), vec![1.0; 730]).unwrap();
        assert!(matches!(
            historical_average(&history, d(2020, 6, 1)),
            Err(Error::InsufficientHistory(_))
        ));
    }

    #[test]
    fn feb_29_uses_feb_28_in_non_leap_years() {
        // History spans 2017-2019 (no leap years); target is Feb 29 2020.
        let start = d(2017, 1, 1);
        let days = (d(2019, 12, 31) - start).num_days() as usize + 1;
        let mut data = vec![0.0; days];
        for y in [2017, 2018, 2019] {
            let idx = (d(y, 2, 28) - start).num_days() as usize;
            data[idx] = y as f64 - 2016.0; // 1, 2, 3
        }
        let history = DailySeries::new(start, data).unwrap();
        let (mean, _) = historical_average(&history, d(2020, 2, 29)).unwrap();
        assert!((mean - 2.0).abs() < 1e-12);
    }

    #[test]
    fn baselines_are_deterministic() {
        let history = three_year_history([1.0, 4.0, 4.0]);
        let targets = DateRange::new(d(2020, 3, 1), d(2020, 3, 10)).unwrap();
        let a = HistoricalBaseline.forecast(&history, targets).unwrap();
        let b = HistoricalBaseline.forecast(&history, targets).unwrap();
        assert_eq!(a, b);
        let naive = NaiveBaseline { delay: 7 };
        let x = naive.forecast(&history, targets, 14).unwrap();
        let y = naive.forecast(&history, targets, 14).unwrap();
        assert_eq!(x, y);
    }
}
