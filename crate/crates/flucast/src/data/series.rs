//! Date-indexed series types.

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weekly observations keyed by week-ending date, strictly 7 days apart.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeeklySeries {
    dates: Vec<NaiveDate>,
    values: Vec<f64>,
}

impl WeeklySeries {
    pub fn new(dates: Vec<NaiveDate>, values: Vec<f64>) -> Result<Self> {
        if dates.len() != values.len() {
            return Err(Error::InvalidInput(format!(
                "weekly series has {} dates but {} values",
                dates.len(),
                values.len()
            )));
        }
        if dates.is_empty() {
            return Err(Error::InvalidInput("weekly series is empty".into()));
        }
        for pair in dates.windows(2) {
            let gap = (pair[1] - pair[0]).num_days();
            if gap != 7 {
                return Err(Error::InvalidInput(format!(
                    "weekly dates must be 7 days apart: {} then {}",
                    pair[0], pair[1]
                )));
            }
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidInput(
                "weekly values must be finite and non-negative".into(),
            ));
        }
        Ok(WeeklySeries { dates, values })
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (NaiveDate, f64)> + '_ {
        self.dates.iter().copied().zip(self.values.iter().copied())
    }
}

/// Consecutive calendar days with one finite value each.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DailySeries {
    start: NaiveDate,
    values: Vec<f64>,
}

impl DailySeries {
    pub fn new(start: NaiveDate, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("daily series is empty".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "daily series values must be finite".into(),
            ));
        }
        Ok(DailySeries { start, values })
    }

    pub fn start(&self) -> NaiveDate {
        self.start
    }

    pub fn end(&self) -> NaiveDate {
        self.start + Days::new(self.values.len() as u64 - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn covers(&self, date: NaiveDate) -> bool {
        date >= self.start && date <= self.end()
    }

    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        if !self.covers(date) {
            return None;
        }
        Some((date - self.start).num_days() as usize)
    }

    pub fn get(&self, date: NaiveDate) -> Option<f64> {
        self.index_of(date).map(|i| self.values[i])
    }

    /// Value at `date` or a data-gap error naming the missing date.
    pub fn require(&self, date: NaiveDate, context: &str) -> Result<f64> {
        self.get(date).ok_or_else(|| Error::DataGap {
            date,
            context: Some(context.to_string()),
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = (NaiveDate, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(move |(i, &v)| (self.start + Days::new(i as u64), v))
    }

    /// Contiguous values for `[from, to]` or a data-gap error.
    pub fn range(&self, from: NaiveDate, to: NaiveDate, context: &str) -> Result<&[f64]> {
        if to < from {
            return Err(Error::InvalidInput(format!(
                "empty date range {from}..{to}"
            )));
        }
        let i = self.index_of(from).ok_or(Error::DataGap {
            date: from,
            context: Some(context.to_string()),
        })?;
        let j = self.index_of(to).ok_or(Error::DataGap {
            date: to,
            context: Some(context.to_string()),
        })?;
        Ok(&self.values[i..=j])
    }

    /// New series restricted to `[from, to]`.
    pub fn slice(&self, from: NaiveDate, to: NaiveDate, context: &str) -> Result<DailySeries> {
        Ok(DailySeries {
            start: from,
            values: self.range(from, to, context)?.to_vec(),
        })
    }

    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> DailySeries {
        DailySeries {
            start: self.start,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// A set of daily query-frequency series sharing one date range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryPanel {
    ids: Vec<String>,
    series: Vec<DailySeries>,
}

impl QueryPanel {
    pub fn new(ids: Vec<String>, series: Vec<DailySeries>) -> Result<Self> {
        if ids.len() != series.len() {
            return Err(Error::InvalidInput(format!(
                "panel has {} ids but {} series",
                ids.len(),
                series.len()
            )));
        }
        if let Some(first) = series.first() {
            let (start, end) = (first.start(), first.end());
            for (id, s) in ids.iter().zip(&series) {
                if s.start() != start || s.end() != end {
                    return Err(Error::InvalidInput(format!(
                        "query '{id}' covers {}..{} but the panel covers {start}..{end}",
                        s.start(),
                        s.end()
                    )));
                }
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for id in &ids {
            if !seen.insert(id.clone()) {
                return Err(Error::InvalidInput(format!("duplicate query id '{id}'")));
            }
        }
        Ok(QueryPanel { ids, series })
    }

    /// Panel with no queries covering a nominal range (the no-queries model
    /// variants use this).
    pub fn empty() -> QueryPanel {
        QueryPanel {
            ids: Vec::new(),
            series: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn series(&self) -> &[DailySeries] {
        &self.series
    }

    pub fn get(&self, id: &str) -> Option<&DailySeries> {
        self.ids
            .iter()
            .position(|i| i == id)
            .map(|i| &self.series[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &DailySeries)> {
        self.ids.iter().zip(self.series.iter())
    }

    /// Keeps the listed ids, in the listed order.
    pub fn subset(&self, keep: &[String]) -> Result<QueryPanel> {
        let mut ids = Vec::with_capacity(keep.len());
        let mut series = Vec::with_capacity(keep.len());
        for id in keep {
            let s = self
                .get(id)
                .ok_or_else(|| Error::InvalidInput(format!("unknown query id '{id}'")))?;
            ids.push(id.clone());
            series.push(s.clone());
        }
        QueryPanel::new(ids, series)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    #[test]
    fn weekly_series_requires_seven_day_spacing() {
        let ok = WeeklySeries::new(vec![d(2020, 1, 5), d(2020, 1, 12)], vec![1.0, 2.0]);
        assert!(ok.is_ok());
        let bad = WeeklySeries::new(vec![d(2020, 1, 5), d(2020, 1, 11)], vec![1.0, 2.0]);
        assert!(bad.is_err());
    }

    #[test]
    fn daily_series_lookup() {
        let s = DailySeries::new(d(2020, 3, 1), vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.end(), d(2020, 3, 3));
        assert_eq!(s.get(d(2020, 3, 2)), Some(2.0));
        assert_eq!(s.get(d(2020, 2, 29)), None);
        assert!(matches!(
            s.require(d(2020, 3, 4), "test"),
            Err(Error::DataGap { .. })
        ));
    }

    #[test]
    fn panel_rejects_mismatched_ranges() {
        let a = DailySeries::new(d(2020, 1, 1), vec![0.0; 10]).unwrap();
        let b = DailySeries::new(d(2020, 1, 2), vec![0.0; 10]).unwrap();
        assert!(QueryPanel::new(vec!["a".into(), "b".into()], vec![a, b]).is_err());
    }

    #[test]
    fn panel_rejects_duplicate_ids() {
        let a = DailySeries::new(d(2020, 1, 1), vec![0.0; 5]).unwrap();
        assert!(QueryPanel::new(vec!["a".into(), "a".into()], vec![a.clone(), a]).is_err());
    }
}
