//! Time-series frame: the 2D table every other module consumes.
//!
//! Columns are series and rows are samples. Timestamps, when present, are
//! integer seconds since the epoch (or a plain index) and strictly increase.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lookback::{infer_frequency, Frequency};

/// Timestamped 2D numeric table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesFrame {
    timestamps: Option<Vec<i64>>,
    columns: Vec<Vec<f64>>,
    names: Vec<String>,
}

impl TimeSeriesFrame {
    /// Builds a frame from column vectors.
    pub fn new(columns: Vec<Vec<f64>>, names: Vec<String>) -> Result<Self> {
        Self::build(None, columns, names)
    }

    /// Builds a frame with an explicit timestamp per row.
    pub fn with_timestamps(
        timestamps: Vec<i64>,
        columns: Vec<Vec<f64>>,
        names: Vec<String>,
    ) -> Result<Self> {
        Self::build(Some(timestamps), columns, names)
    }

    /// Single-column frame named `value` with index timestamps.
    pub fn from_series(values: Vec<f64>) -> Result<Self> {
        let ts = (0..values.len() as i64).collect();
        Self::build(Some(ts), vec![values], vec!["value".to_string()])
    }

    /// Multi-column frame with generated names `x0, x1, ...` and index timestamps.
    pub fn from_columns(columns: Vec<Vec<f64>>) -> Result<Self> {
        let n = columns.first().map_or(0, Vec::len);
        let names = (0..columns.len()).map(|i| format!("x{i}")).collect();
        Self::build(Some((0..n as i64).collect()), columns, names)
    }

    fn build(
        timestamps: Option<Vec<i64>>,
        columns: Vec<Vec<f64>>,
        names: Vec<String>,
    ) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::InvalidFrame("frame has no columns".into()));
        }
        if names.len() != columns.len() {
            return Err(Error::InvalidFrame(format!(
                "{} names for {} columns",
                names.len(),
                columns.len()
            )));
        }
        let n = columns[0].len();
        if n == 0 {
            return Err(Error::InvalidFrame("frame has no rows".into()));
        }
        if let Some((i, c)) = columns.iter().enumerate().find(|(_, c)| c.len() != n) {
            return Err(Error::InvalidFrame(format!(
                "column {} has {} rows, expected {n}",
                names[i],
                c.len()
            )));
        }
        if let Some(ts) = &timestamps {
            if ts.len() != n {
                return Err(Error::InvalidFrame(format!(
                    "{} timestamps for {n} rows",
                    ts.len()
                )));
            }
            check_monotone(ts)?;
        }
        Ok(Self {
            timestamps,
            columns,
            names,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.columns[0].len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn timestamps(&self) -> Option<&[i64]> {
        self.timestamps.as_deref()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    pub fn last_row(&self) -> Vec<f64> {
        self.row(self.n_rows() - 1)
    }

    /// Rows `start..end` as a new frame.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        let n = self.n_rows();
        if start >= end || end > n {
            return Err(Error::InvalidArgument(format!(
                "row range {start}..{end} invalid for {n} rows"
            )));
        }
        Ok(Self {
            timestamps: self.timestamps.as_ref().map(|t| t[start..end].to_vec()),
            columns: self
                .columns
                .iter()
                .map(|c| c[start..end].to_vec())
                .collect(),
            names: self.names.clone(),
        })
    }

    /// The most recent `k` rows.
    pub fn suffix(&self, k: usize) -> Result<Self> {
        let n = self.n_rows();
        if k == 0 || k > n {
            return Err(Error::InvalidArgument(format!(
                "suffix length {k} outside 1..={n}"
            )));
        }
        self.slice(n - k, n)
    }

    /// Appends the rows of `other` below `self`.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if other.n_cols() != self.n_cols() {
            return Err(Error::ShapeMismatch(format!(
                "cannot concatenate {} columns onto {}",
                other.n_cols(),
                self.n_cols()
            )));
        }
        let timestamps = match (&self.timestamps, &other.timestamps) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).copied().collect()),
            _ => None,
        };
        let columns = self
            .columns
            .iter()
            .zip(&other.columns)
            .map(|(a, b)| a.iter().chain(b).copied().collect())
            .collect();
        Self::build(timestamps, columns, self.names.clone())
    }

    /// Replaces the values while keeping names and timestamps.
    pub(crate) fn with_columns(&self, columns: Vec<Vec<f64>>) -> Result<Self> {
        Self::build(self.timestamps.clone(), columns, self.names.clone())
    }
}

fn check_monotone(ts: &[i64]) -> Result<()> {
    for (i, w) in ts.windows(2).enumerate() {
        if w[1] <= w[0] {
            return Err(Error::NonMonotoneTimestamps {
                row: i + 1,
                prev: w[0],
                next: w[1],
            });
        }
    }
    Ok(())
}

/// Parses a timestamp cell as integer seconds, or an ISO-8601 date/datetime.
pub fn parse_timestamp(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(v) = s.parse::<i64>() {
        return Some(v);
    }
    if let Ok(v) = s.parse::<f64>() {
        if v.is_finite() && v.fract() == 0.0 {
            return Some(v as i64);
        }
    }
    if let Ok(dt) = chrono::DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%d %H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt.and_utc().timestamp());
        }
    }
    for fmt in ["%Y-%m-%d", "%Y/%m/%d"] {
        if let Ok(d) = NaiveDate::parse_from_str(s, fmt) {
            return Some(d.and_hms_opt(0, 0, 0)?.and_utc().timestamp());
        }
    }
    // Year-month, e.g. "1949-01".
    NaiveDate::parse_from_str(&format!("{s}-01"), "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|dt| dt.and_utc().timestamp())
}

fn parse_value(s: &str) -> f64 {
    s.trim().parse::<f64>().unwrap_or(f64::NAN)
}

/// Loads a headed CSV file.
///
/// Every column other than the timestamp column that holds at least one
/// numeric cell becomes a series; unparseable cells become NaN and are left
/// for [`quality_check`] to repair. Without a timestamp column the rows are
/// indexed `0, 1, 2, ...`.
pub fn load_csv(path: impl AsRef<Path>, timestamp_column: Option<&str>) -> Result<TimeSeriesFrame> {
    let path = path.as_ref();
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
    parse_csv(&text, timestamp_column)
}

/// [`load_csv`] over in-memory text.
pub fn parse_csv(text: &str, timestamp_column: Option<&str>) -> Result<TimeSeriesFrame> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let ts_idx = match timestamp_column {
        Some(name) => Some(
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::MissingTimestampColumn(name.to_string()))?,
        ),
        None => None,
    };

    let mut raw: Vec<Vec<String>> = vec![Vec::new(); header.len()];
    for record in reader.records() {
        let record = record?;
        for (j, cell) in record.iter().enumerate().take(header.len()) {
            raw[j].push(cell.to_string());
        }
        for col in raw.iter_mut().skip(record.len()) {
            col.push(String::new());
        }
    }
    let n = raw.first().map_or(0, Vec::len);
    if n == 0 {
        return Err(Error::InvalidFrame("csv has no data rows".into()));
    }

    let timestamps = match ts_idx {
        Some(j) => raw[j]
            .iter()
            .enumerate()
            .map(|(row, v)| {
                parse_timestamp(v).ok_or_else(|| Error::BadTimestamp {
                    row,
                    value: v.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?,
        None => (0..n as i64).collect(),
    };
    check_monotone(&timestamps)?;

    let mut columns = Vec::new();
    let mut names = Vec::new();
    for (j, cells) in raw.iter().enumerate() {
        if Some(j) == ts_idx {
            continue;
        }
        let values: Vec<f64> = cells.iter().map(|c| parse_value(c)).collect();
        let any_numeric = values.iter().any(|v| !v.is_nan());
        let any_text = cells.iter().any(|c| !c.is_empty());
        if !any_numeric && any_text {
            log::warn!("dropping non-numeric column `{}`", header[j]);
            continue;
        }
        columns.push(values);
        names.push(header[j].clone());
    }
    if columns.is_empty() {
        return Err(Error::NoNumericColumns);
    }
    TimeSeriesFrame::with_timestamps(timestamps, columns, names)
}

/// Writes a frame as CSV with a leading `timestamp` column when timestamps exist.
pub fn write_csv<W: std::io::Write>(frame: &TimeSeriesFrame, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = Vec::new();
    if frame.timestamps().is_some() {
        header.push("timestamp");
    }
    header.extend(frame.names().iter().map(String::as_str));
    w.write_record(&header)?;
    for i in 0..frame.n_rows() {
        let mut rec: Vec<String> = Vec::with_capacity(header.len());
        if let Some(ts) = frame.timestamps() {
            rec.push(ts[i].to_string());
        }
        rec.extend(frame.columns().iter().map(|c| c[i].to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: "<csv writer>".into(),
        source,
    })?;
    Ok(())
}

/// How a missing cell was filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RepairMethod {
    Interpolated,
    NearestValid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Repair {
    pub row: usize,
    pub column: usize,
    pub method: RepairMethod,
}

/// Findings of [`quality_check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub missing_count: Vec<usize>,
    pub has_negative: Vec<bool>,
    /// Column contains a zero or a negative value; log and Box-Cox are disabled.
    pub has_nonpositive: Vec<bool>,
    /// Column contained infinite cells (treated as missing).
    pub has_nonnumeric: Vec<bool>,
    pub inferred_frequency: Option<Frequency>,
    pub repairs_applied: Vec<Repair>,
}

impl QualityReport {
    /// Whether log/Box-Cox transforms may be applied to every column.
    pub fn log_allowed(&self) -> bool {
        !self.has_nonpositive.iter().any(|&b| b)
    }

    pub fn any_negative(&self) -> bool {
        self.has_negative.iter().any(|&b| b)
    }
}

/// Repairs non-finite cells and flags columns that rule out log transforms.
///
/// Interior gaps are linearly interpolated between the nearest valid
/// neighbours; leading and trailing gaps copy the nearest valid value.
pub fn quality_check(frame: &TimeSeriesFrame) -> Result<(TimeSeriesFrame, QualityReport)> {
    let d = frame.n_cols();
    let mut columns = Vec::with_capacity(d);
    let mut report = QualityReport {
        missing_count: Vec::with_capacity(d),
        has_negative: Vec::with_capacity(d),
        has_nonpositive: Vec::with_capacity(d),
        has_nonnumeric: Vec::with_capacity(d),
        inferred_frequency: frame
            .timestamps()
            .and_then(|ts| infer_frequency(ts).ok()),
        repairs_applied: Vec::new(),
    };
    for (j, col) in frame.columns().iter().enumerate() {
        let missing = col.iter().filter(|v| !v.is_finite()).count();
        if missing == col.len() {
            return Err(Error::NonNumericColumn(frame.names()[j].clone()));
        }
        let (repaired, repairs) = fill_gaps(col, j);
        report.missing_count.push(missing);
        report
            .has_nonnumeric
            .push(col.iter().any(|v| v.is_infinite()));
        report.has_negative.push(repaired.iter().any(|&v| v < 0.0));
        report.has_nonpositive.push(repaired.iter().any(|&v| v <= 0.0));
        report.repairs_applied.extend(repairs);
        columns.push(repaired);
    }
    Ok((frame.with_columns(columns)?, report))
}

fn fill_gaps(col: &[f64], column: usize) -> (Vec<f64>, Vec<Repair>) {
    let valid: Vec<usize> = (0..col.len()).filter(|&i| col[i].is_finite()).collect();
    let mut out = col.to_vec();
    let mut repairs = Vec::new();
    let mut next = 0; // index into `valid` of the first valid row >= i
    for i in 0..col.len() {
        while next < valid.len() && valid[next] < i {
            next += 1;
        }
        if col[i].is_finite() {
            continue;
        }
        let after = valid.get(next).copied();
        let before = next.checked_sub(1).map(|k| valid[k]);
        let (value, method) = match (before, after) {
            (Some(b), Some(a)) => {
                let w = (i - b) as f64 / (a - b) as f64;
                (col[b] + w * (col[a] - col[b]), RepairMethod::Interpolated)
            }
            (Some(b), None) => (col[b], RepairMethod::NearestValid),
            (None, Some(a)) => (col[a], RepairMethod::NearestValid),
            (None, None) => unreachable!("caller rejects all-missing columns"),
        };
        out[i] = value;
        repairs.push(Repair {
            row: i,
            column,
            method,
        });
    }
    (out, repairs)
}

/// Train rows followed by holdout rows, in time order.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalSplit {
    pub train: TimeSeriesFrame,
    pub holdout: TimeSeriesFrame,
    pub fraction: f64,
}

/// Number of train rows for `fraction` of `n`: `ceil(fraction * n)`.
pub fn train_rows(n: usize, fraction: f64) -> usize {
    // Tolerance keeps products like 0.7 * 10 = 7.000000000000001 at 7.
    ((fraction * n as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Splits `frame` in time order into `ceil(fraction * n)` train rows and the rest.
pub fn temporal_split(frame: &TimeSeriesFrame, fraction: f64) -> Result<TemporalSplit> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "split fraction {fraction} outside (0, 1)"
        )));
    }
    let n = frame.n_rows();
    let k = train_rows(n, fraction);
    if k < 2 {
        return Err(Error::InsufficientData(format!(
            "split of {n} rows at {fraction} leaves {k} training rows"
        )));
    }
    if k >= n {
        return Err(Error::InsufficientData(format!(
            "split of {n} rows at {fraction} leaves an empty holdout"
        )));
    }
    Ok(TemporalSplit {
        train: frame.slice(0, k)?,
        holdout: frame.slice(k, n)?,
        fraction,
    })
}
