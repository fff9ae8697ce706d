//! CSV ingestion and emission.
//!
//! Schemas (UTF-8, LF line endings, ISO-8601 dates, dot-decimal numbers):
//! - weekly ILI: header `date,ili_rate`, one row per week-ending date;
//! - daily series: header `date,value`, consecutive dates;
//! - query panel: header `date,<id_1>,...,<id_m>`, consecutive dates.
//!
//! Values round-trip losslessly at 64-bit precision: writing uses Rust's
//! shortest-roundtrip float formatting.

use std::fmt::Write as _;
use std::path::Path;

use chrono::NaiveDate;

use super::series::{DailySeries, QueryPanel, WeeklySeries};
use crate::error::{Error, Result};

fn parse_date(field: &str, line: usize) -> Result<NaiveDate> {
    field.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("invalid ISO date '{field}'"),
    })
}

fn parse_value(field: &str, line: usize) -> Result<f64> {
    field.trim().parse().map_err(|_| Error::Parse {
        line,
        msg: format!("invalid number '{field}'"),
    })
}

fn read_rows(path: &Path, expected_header: Option<&str>) -> Result<(String, Vec<(usize, String)>)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty file".into(),
    })?;
    if let Some(expected) = expected_header {
        if header.trim() != expected {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected header '{expected}', got '{header}'"),
            });
        }
    }
    let rows = lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.to_string()))
        .collect();
    Ok((header.to_string(), rows))
}

/// Loads a weekly ILI series (`date,ili_rate`).
pub fn load_weekly(path: impl AsRef<Path>) -> Result<WeeklySeries> {
    let (_, rows) = read_rows(path.as_ref(), Some("date,ili_rate"))?;
    let mut dates = Vec::with_capacity(rows.len());
    let mut values = Vec::with_capacity(rows.len());
    for (line, row) in rows {
        let mut parts = row.split(',');
        let date = parse_date(parts.next().unwrap_or(""), line)?;
        let value = parse_value(parts.next().unwrap_or(""), line)?;
        if parts.next().is_some() {
            return Err(Error::Parse {
                line,
                msg: "expected exactly 2 fields".into(),
            });
        }
        if dates.last() == Some(&date) {
            return Err(Error::Parse {
                line,
                msg: format!("duplicate date {date}"),
            });
        }
        dates.push(date);
        values.push(value);
    }
    WeeklySeries::new(dates, values)
}

pub fn save_weekly(series: &WeeklySeries, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::from("date,ili_rate\n");
    for (date, value) in series.iter() {
        writeln!(out, "{date},{value}").expect("string write");
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Loads a daily series (`date,value`), rejecting gaps and duplicates.
pub fn load_daily(path: impl AsRef<Path>) -> Result<DailySeries> {
    let (_, rows) = read_rows(path.as_ref(), Some("date,value"))?;
    let mut start = None;
    let mut values = Vec::with_capacity(rows.len());
    for (line, row) in rows {
        let mut parts = row.split(',');
        let date = parse_date(parts.next().unwrap_or(""), line)?;
        let value = parse_value(parts.next().unwrap_or(""), line)?;
        match start {
            None => start = Some(date),
            Some(s) => {
                let expected = s + chrono::Days::new(values.len() as u64);
                if date != expected {
                    return Err(Error::DataGap {
                        date: expected,
                        context: Some(format!("line {line} holds {date} instead")),
                    });
                }
            }
        }
        values.push(value);
    }
    DailySeries::new(start.ok_or(Error::Parse {
        line: 1,
        msg: "no data rows".into(),
    })?, values)
}

pub fn save_daily(series: &DailySeries, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::from("date,value\n");
    for (date, value) in series.iter() {
        writeln!(out, "{date},{value}").expect("string write");
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Loads a daily query panel (`date,<id_1>,...,<id_m>`).
pub fn load_panel(path: impl AsRef<Path>) -> Result<QueryPanel> {
    let (header, rows) = read_rows(path.as_ref(), None)?;
    let mut fields = header.trim().split(',');
    if fields.next() != Some("date") {
        return Err(Error::Parse {
            line: 1,
            msg: "panel header must start with 'date'".into(),
        });
    }
    let ids: Vec<String> = fields.map(str::to_string).collect();
    if ids.is_empty() {
        return Err(Error::Parse {
            line: 1,
            msg: "panel has no query columns".into(),
        });
    }
    let mut start = None;
    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(rows.len()); ids.len()];
    let mut count = 0usize;
    for (line, row) in rows {
        let mut parts = row.split(',');
        let date = parse_date(parts.next().unwrap_or(""), line)?;
        match start {
            None => start = Some(date),
            Some(s) => {
                let expected = s + chrono::Days::new(count as u64);
                if date != expected {
                    return Err(Error::DataGap {
                        date: expected,
                        context: Some(format!("line {line} holds {date} instead")),
                    });
                }
            }
        }
        for column in columns.iter_mut() {
            let field = parts.next().ok_or(Error::Parse {
                line,
                msg: format!("expected {} query fields", ids.len()),
            })?;
            column.push(parse_value(field, line)?);
        }
        if parts.next().is_some() {
            return Err(Error::Parse {
                line,
                msg: format!("expected {} query fields", ids.len()),
            });
        }
        count += 1;
    }
    let start = start.ok_or(Error::Parse {
        line: 1,
        msg: "no data rows".into(),
    })?;
    let series = columns
        .into_iter()
        .map(|values| DailySeries::new(start, values))
        .collect::<Result<Vec<_>>>()?;
    QueryPanel::new(ids, series)
}

pub fn save_panel(panel: &QueryPanel, path: impl AsRef<Path>) -> Result<()> {
    if panel.is_empty() {
        return Err(Error::InvalidInput("cannot save an empty panel".into()));
    }
    let mut out = String::from("date");
    for id in panel.ids() {
        if id.contains(',') || id.contains('\n') {
            return Err(Error::InvalidInput(format!(
                "query id '{id}' contains a delimiter"
            )));
        }
        out.push(',');
        out.push_str(id);
    }
    out.push('\n');
    let first = &panel.series()[0];
    for (i, (date, _)) in first.iter().enumerate() {
        write!(out, "{date}").expect("string write");
        for series in panel.series() {
            write!(out, ",{}", series.values()[i]).expect("string write");
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}
