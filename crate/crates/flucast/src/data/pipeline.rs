//! Transformations from raw series to supervised windows.

use chrono::{Datelike, Days, NaiveDate, Weekday};

use super::series::{DailySeries, QueryPanel, WeeklySeries};
use super::{WindowSample, WindowedDataset};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Inclusive date range.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if end < start {
            return Err(Error::InvalidInput(format!(
                "date range ends ({end}) before it starts ({start})"
            )));
        }
        Ok(DateRange { start, end })
    }

    pub fn days(&self) -> usize {
        (self.end - self.start).num_days() as usize + 1
    }

    pub fn iter(&self) -> impl Iterator<Item = NaiveDate> {
        let start = self.start;
        (0..self.days() as u64).map(move |i| start + Days::new(i))
    }

    pub fn contains(&self, d: NaiveDate) -> bool {
        d >= self.start && d <= self.end
    }
}

/// The Thursday of the week ending on `week_end` (the Thursday at most six
/// days before it).
fn anchor_thursday(week_end: NaiveDate) -> NaiveDate {
    let mut d = week_end;
    while d.weekday() != Weekday::Thu {
        d = d - Days::new(1);
    }
    d
}

/// Converts a weekly series to daily values by anchoring each weekly value
/// to that week's Thursday and interpolating linearly between anchors.
/// Edges extend flat so the output covers the full weekly span
/// (first week start through last week end).
pub fn weekly_to_daily(weekly: &WeeklySeries) -> Result<DailySeries> {
    if weekly.len() < 2 {
        return Err(Error::InsufficientData(
            "weekly to daily interpolation needs at least 2 weeks".into(),
        ));
    }
    let anchors: Vec<NaiveDate> = weekly.dates().iter().map(|&d| anchor_thursday(d)).collect();
    let values = weekly.values();

    let span_start = (weekly.dates()[0] - Days::new(6)).min(anchors[0]);
    let span_end = (*weekly.dates().last().unwrap()).max(*anchors.last().unwrap());

    let mut out = Vec::with_capacity((span_end - span_start).num_days() as usize + 1);
    let mut seg = 0usize; // index of the anchor at or after the current day
    let mut day = span_start;
    while day <= span_end {
        let v = if day <= anchors[0] {
            values[0]
        } else if day >= *anchors.last().unwrap() {
            *values.last().unwrap()
        } else {
            while anchors[seg + 1] < day {
                seg += 1;
            }
            let left = anchors[seg];
            let right = anchors[seg + 1];
            if day == left {
                values[seg]
            } else {
                let frac = (day - left).num_days() as f64 / (right - left).num_days() as f64;
                values[seg] + frac * (values[seg + 1] - values[seg])
            }
        };
        out.push(v);
        day = day + Days::new(1);
    }
    DailySeries::new(span_start, out)
}

/// Weights each of the past `window` days by 1/(lag+1), normalized to sum
/// to one. The first `window - 1` days use the truncated weights available
/// to them, renormalized.
pub fn harmonic_smooth(series: &DailySeries, window: usize) -> Result<DailySeries> {
    if window == 0 {
        return Err(Error::InvalidParameter("smoothing window must be > 0".into()));
    }
    if series.len() < window {
        return Err(Error::InsufficientData(format!(
            "harmonic smoothing needs at least {window} days, got {}",
            series.len()
        )));
    }
    let values = series.values();
    let mut out = Vec::with_capacity(values.len());
    for t in 0..values.len() {
        let avail = (t + 1).min(window);
        let mut num = 0.0;
        let mut den = 0.0;
        for lag in 0..avail {
            let w = 1.0 / (lag as f64 + 1.0);
            num += w * values[t - lag];
            den += w;
        }
        out.push(num / den);
    }
    DailySeries::new(series.start(), out)
}

/// Min and max fitted on a training period.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MinMax {
    pub min: f64,
    pub max: f64,
}

impl MinMax {
    pub fn apply(&self, v: f64) -> f64 {
        (v - self.min) / (self.max - self.min)
    }
}

/// Scales a series by the min/max observed over `fit_range` only; values
/// outside the training period may fall outside [0, 1]. A constant training
/// segment yields a constant-series error so callers can drop the query.
pub fn minmax_normalize(
    series: &DailySeries,
    fit_range: DateRange,
) -> Result<(DailySeries, MinMax)> {
    let fit = series.range(fit_range.start, fit_range.end, "min-max fit")?;
    let min = fit.iter().copied().fold(f64::INFINITY, f64::min);
    let max = fit.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == min {
        return Err(Error::ConstantSeries(format!(
            "series is constant ({min}) over the fit period"
        )));
    }
    let mm = MinMax { min, max };
    Ok((series.map_values(|v| mm.apply(v)), mm))
}

/// Pearson correlation of two equal-length slices. `None` when either side
/// has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len(), "pearson needs equal lengths");
    let n = a.len() as f64;
    if a.is_empty() {
        return None;
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return None;
    }
    Some(cov / (va * vb).sqrt())
}

/// Keeps queries whose Pearson correlation with the ILI series over the
/// training period is at least `threshold`, ordered by descending
/// correlation. Queries with undefined correlation are dropped. An empty
/// selection is allowed (and logged).
pub fn select_queries(
    panel: &QueryPanel,
    ili: &DailySeries,
    train_period: DateRange,
    threshold: f64,
) -> Result<QueryPanel> {
    let ili_window = ili.range(train_period.start, train_period.end, "query selection")?;
    let mut scored: Vec<(usize, f64)> = Vec::new();
    for (idx, (id, series)) in panel.iter().enumerate() {
        let q = series.range(train_period.start, train_period.end, "query selection")?;
        match pearson(q, ili_window) {
            Some(r) if r >= threshold => scored.push((idx, r)),
            Some(_) => {}
            None => log::warn!("query '{id}' is constant over the training period; dropped"),
        }
    }
    // Descending correlation; stable on ties so reselection is idempotent.
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    if scored.is_empty() {
        log::warn!(
            "no queries passed the correlation threshold {threshold} over {}..{}",
            train_period.start,
            train_period.end
        );
    }
    let keep: Vec<String> = scored
        .iter()
        .map(|&(idx, _)| panel.ids()[idx].clone())
        .collect();
    panel.subset(&keep)
}

/// Builds one supervised sample per origin day `t` in `period`:
/// the input matrix stacks each query over the `window_len` days ending at
/// `t` and the ILI rate over the `window_len` days ending at `t - delay`;
/// the target is the ILI rate at `t + horizon`.
pub fn build_windows(
    ili: &DailySeries,
    panel: &QueryPanel,
    window_len: usize,
    delay: usize,
    horizon: usize,
    period: DateRange,
) -> Result<WindowedDataset> {
    if window_len == 0 {
        return Err(Error::InvalidParameter("window length must be > 0".into()));
    }
    let m = panel.len();
    let mut samples = Vec::with_capacity(period.days());
    for origin in period.iter() {
        let query_from = origin - Days::new(window_len as u64 - 1);
        let ili_to = origin - Days::new(delay as u64);
        let ili_from = ili_to - Days::new(window_len as u64 - 1);
        let target_date = origin + Days::new(horizon as u64);

        let mut input = Matrix::zeros(m + 1, window_len);
        for (row, (_, series)) in panel.iter().enumerate() {
            let vals = series.range(query_from, origin, "query window")?;
            input.row_mut(row).copy_from_slice(vals);
        }
        input
            .row_mut(m)
            .copy_from_slice(ili.range(ili_from, ili_to, "ILI window")?);
        let target = ili.require(target_date, "window target")?;

        samples.push(WindowSample {
            input,
            target,
            origin,
        });
    }
    Ok(WindowedDataset {
        samples,
        window_len,
        delay,
        horizon,
        query_count: m,
        query_ids: panel.ids().to_vec(),
    })
}

/// Concatenates the columns of a matrix in order.
pub fn flatten_column_major(x: &Matrix) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    for c in 0..x.cols() {
        for r in 0..x.rows() {
            out.push(x.get(r, c));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    fn weekly(dates: Vec<NaiveDate>, values: Vec<f64>) -> WeeklySeries {
        WeeklySeries::new(dates, values).unwrap()
    }

    #[test]
    fn weekly_to_daily_constant_stays_constant() {
        // Sundays as week-ending dates
        let w = weekly(
            vec![d(2020, 1, 5), d(2020, 1, 12), d(2020, 1, 19)],
            vec![4.0; 3],
        );
        let daily = weekly_to_daily(&w).unwrap();
        assert!(daily.values().iter().all(|&v| v == 4.0));
        // contiguous with no gaps is implied by the type; check the span
        assert_eq!(daily.start(), d(2019, 12, 30));
        assert_eq!(daily.end(), d(2020, 1, 19));
    }

    #[test]
    fn weekly_to_daily_interpolates_between_thursdays() {
        // Two week-ending Sundays anchor Thursdays Jan 2 and Jan 9 2020.
        let w = weekly(vec![d(2020, 1, 5), d(2020, 1, 12)], vec![7.0, 14.0]);
        let daily = weekly_to_daily(&w).unwrap();
        assert_eq!(daily.get(d(2020, 1, 2)), Some(7.0)); // Thursday anchor exact
        assert_eq!(daily.get(d(2020, 1, 9)), Some(14.0));
        assert_eq!(daily.get(d(2020, 1, 3)), Some(8.0)); // Friday
        assert_eq!(daily.get(d(2020, 1, 4)), Some(9.0));
        assert_eq!(daily.get(d(2020, 1, 8)), Some(13.0)); // Wednesday
        // flat extension before the first anchor
        assert_eq!(daily.get(d(2019, 12, 30)), Some(7.0));
        // flat extension after the last anchor
        assert_eq!(daily.get(d(2020, 1, 12)), Some(14.0));
    }

    #[test]
    fn weekly_to_daily_exact_on_every_thursday() {
        let dates: Vec<NaiveDate> = (0..10).map(|i| d(2020, 1, 5) + Days::new(7 * i)).collect();
        let values: Vec<f64> = (0..10).map(|i| (i as f64) * 1.7 + 0.3).collect();
        let w = weekly(dates.clone(), values.clone());
        let daily = weekly_to_daily(&w).unwrap();
        for (date, v) in dates.iter().zip(values) {
            assert_eq!(daily.get(anchor_thursday(*date)), Some(v));
        }
    }

    #[test]
    fn weekly_to_daily_needs_two_weeks() {
        let w = weekly(vec![d(2020, 1, 5)], vec![1.0]);
        assert!(matches!(
            weekly_to_daily(&w),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn harmonic_smooth_preserves_constants() {
        let s = DailySeries::new(d(2020, 1, 1), vec![3.0; 20]).unwrap();
        let sm = harmonic_smooth(&s, 7).unwrap();
        for &v in sm.values() {
            assert!((v - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn harmonic_smooth_impulse_weights() {
        let mut values = vec![0.0; 20];
        values[10] = 1.0;
        let s = DailySeries::new(d(2020, 1, 1), values).unwrap();
        let sm = harmonic_smooth(&s, 7).unwrap();
        let h7: f64 = (1..=7).map(|k| 1.0 / k as f64).sum();
        assert!((sm.values()[10] - 1.0 / h7).abs() < 1e-12);
        assert!((sm.values()[13] - (1.0 / 4.0) / h7).abs() < 1e-12);
        // beyond the window the impulse no longer contributes
        assert_eq!(sm.values()[17], 0.0);
    }

    #[test]
    fn harmonic_smooth_is_linear() {
        let mut r_values = vec![0.0; 30];
        let mut s_values = vec![0.0; 30];
        for i in 0..30 {
            r_values[i] = (i as f64 * 0.7).sin() * 3.0;
            s_values[i] = (i as f64 * 1.3).cos() + 0.5;
        }
        let r = DailySeries::new(d(2020, 1, 1), r_values.clone()).unwrap();
        let s = DailySeries::new(d(2020, 1, 1), s_values.clone()).unwrap();
        let combo = DailySeries::new(
            d(2020, 1, 1),
            r_values
                .iter()
                .zip(&s_values)
                .map(|(&a, &b)| 2.0 * a - 0.5 * b)
                .collect(),
        )
        .unwrap();
        let lhs = harmonic_smooth(&combo, 7).unwrap();
        let sr = harmonic_smooth(&r, 7).unwrap();
        let ss = harmonic_smooth(&s, 7).unwrap();
        for i in 0..30 {
            let rhs = 2.0 * sr.values()[i] - 0.5 * ss.values()[i];
            assert!((lhs.values()[i] - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn minmax_uses_training_stats_only() {
        let values: Vec<f64> = (0..=10).map(|i| i as f64).collect();
        let mut all = values.clone();
        all.push(12.0); // test-period value beyond the training max
        let s = DailySeries::new(d(2020, 1, 1), all).unwrap();
        let fit = DateRange::new(d(2020, 1, 1), d(2020, 1, 11)).unwrap();
        let (normalized, mm) = minmax_normalize(&s, fit).unwrap();
        assert_eq!(mm.min, 0.0);
        assert_eq!(mm.max, 10.0);
        assert_eq!(normalized.get(d(2020, 1, 6)), Some(0.5));
        assert_eq!(normalized.get(d(2020, 1, 12)), Some(1.2));
    }

    #[test]
    fn minmax_rejects_constant_training_segment() {
        let s = DailySeries::new(d(2020, 1, 1), vec![2.0; 10]).unwrap();
        let fit = DateRange::new(d(2020, 1, 1), d(2020, 1, 10)).unwrap();
        assert!(matches!(
            minmax_normalize(&s, fit),
            Err(Error::ConstantSeries(_))
        ));
    }

    fn ramp_series(start: NaiveDate, n: usize, f: impl Fn(usize) -> f64) -> DailySeries {
        DailySeries::new(start, (0..n).map(f).collect()).unwrap()
    }

    #[test]
    fn select_queries_keeps_ili_copy_and_drops_noise() {
        let start = d(2018, 1, 1);
        let n = 730;
        let ili = ramp_series(start, n, |i| ((i as f64) * 0.017).sin().powi(2) * 10.0 + 1.0);
        let copy = ili.clone();
        // deterministic pseudo-noise, uncorrelated with the ILI signal
        let noise = ramp_series(start, n, |i| ((i as f64 * 12.9898).sin() * 43758.54).fract());
        let panel = QueryPanel::new(vec!["copy".into(), "noise".into()], vec![copy, noise]).unwrap();
        let period = DateRange::new(start, d(2019, 12, 31)).unwrap();
        let selected = select_queries(&panel, &ili, period, 0.3).unwrap();
        assert_eq!(selected.ids(), &["copy".to_string()]);
    }

    #[test]
    fn select_queries_is_idempotent() {
        let start = d(2018, 1, 1);
        let n = 400;
        let ili = ramp_series(start, n, |i| (i as f64 * 0.05).sin() + 2.0);
        let q1 = ramp_series(start, n, |i| (i as f64 * 0.05).sin() * 0.8 + 1.0);
        let q2 = ramp_series(start, n, |i| (i as f64 * 0.05 + 0.3).sin() * 0.5 + 1.0);
        let panel = QueryPanel::new(vec!["a".into(), "b".into()], vec![q1, q2]).unwrap();
        let period = DateRange::new(start, d(2019, 1, 1)).unwrap();
        let once = select_queries(&panel, &ili, period, 0.2).unwrap();
        let twice = select_queries(&once, &ili, period, 0.2).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn build_windows_layout_matches_convention() {
        // window 3, delay 2, horizon 1, one query: day-index valued series
        // so the entries identify their dates.
        let start = d(2020, 1, 1);
        let ili = ramp_series(start, 40, |i| i as f64);
        let q = ramp_series(start, 40, |i| 100.0 + i as f64);
        let panel = QueryPanel::new(vec!["q".into()], vec![q]).unwrap();
        let origin = d(2020, 1, 11); // day index 10
        let period = DateRange::new(origin, origin).unwrap();
        let ds = build_windows(&ili, &panel, 3, 2, 1, period).unwrap();
        assert_eq!(ds.len(), 1);
        let sample = &ds.samples[0];
        assert_eq!(sample.input.shape(), (2, 3));
        // query row: days 8, 9, 10
        assert_eq!(sample.input.row(0), &[108.0, 109.0, 110.0]);
        // ILI row: days 6, 7, 8
        assert_eq!(sample.input.row(1), &[6.0, 7.0, 8.0]);
        // target: day 11
        assert_eq!(sample.target, 11.0);
        assert_eq!(ds.target_date(sample), d(2020, 1, 12));
    }

    #[test]
    fn build_windows_one_sample_per_day_and_no_leakage() {
        let start = d(2020, 1, 1);
        let ili = ramp_series(start, 120, |i| (i as f64 * 0.2).sin() + 2.0);
        let q = ramp_series(start, 120, |i| (i as f64 * 0.2).cos() + 2.0);
        let panel = QueryPanel::new(vec!["q".into()], vec![q]).unwrap();
        let period = DateRange::new(d(2020, 2, 15), d(2020, 3, 15)).unwrap();
        let ds = build_windows(&ili, &panel, 28, 7, 14, period).unwrap();
        assert_eq!(ds.len(), period.days());
        for sample in &ds.samples {
            assert!(ds.latest_query_date(sample) <= sample.origin);
            assert!(ds.latest_ili_date(sample) <= sample.origin - Days::new(7));
            assert_eq!(ds.target_date(sample), sample.origin + Days::new(14));
        }
    }

    #[test]
    fn build_windows_reports_missing_dates() {
        let start = d(2020, 1, 1);
        let ili = ramp_series(start, 30, |i| i as f64);
        let panel = QueryPanel::empty();
        let period = DateRange::new(d(2020, 1, 5), d(2020, 1, 40 - 14)).unwrap();
        let err = build_windows(&ili, &panel, 3, 2, 14, period).unwrap_err();
        assert!(matches!(err, Error::DataGap { .. }), "got {err:?}");
    }

    #[test]
    fn flatten_is_column_major() {
        let m = Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(flatten_column_major(&m), vec![1.0, 3.0, 2.0, 4.0]);
        let col = Matrix::col_vector(vec![5.0, 6.0]);
        assert_eq!(flatten_column_major(&col), vec![5.0, 6.0]);
    }

    #[test]
    fn flatten_round_trips_with_known_shape() {
        let m = Matrix::from_vec(3, 4, (0..12).map(|i| i as f64).collect()).unwrap();
        let flat = flatten_column_major(&m);
        let mut rebuilt = Matrix::zeros(3, 4);
        for c in 0..4 {
            for r in 0..3 {
                rebuilt.set(r, c, flat[c * 3 + r]);
            }
        }
        assert_eq!(rebuilt, m);
    }
}
