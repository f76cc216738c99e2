//! Daily series ingestion and preprocessing.
//!
//! Raw values are stored as `f64` with `NaN` marking a missing observation.
//! Gaps in the date sequence are materialized as `NaN` rows on load so that
//! [`impute_missing`] can fill them alongside explicit `NA` cells.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Date format accepted in the date column.
pub const DATE_FORMAT: &str = "%Y-%m-%d";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed CSV at row {row}: {message}")]
    Csv { row: usize, message: String },
    #[error("column `{0}` not found in header")]
    MissingColumn(String),
    #[error("row {row}: cannot parse date `{value}` (expected YYYY-MM-DD)")]
    UnparsableDate { row: usize, value: String },
    #[error("row {row}: duplicate date {date}")]
    DuplicateDate { row: usize, date: NaiveDate },
    #[error("row {row}, column `{column}`: non-numeric value `{value}`")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("no data rows")]
    Empty,
    #[error("first or last value of the series is missing; cannot impute at the edge")]
    EdgeMissing,
    #[error("every value of the series is missing")]
    AllMissing,
    #[error("split ratio {0} must lie strictly between 0 and 1")]
    InvalidRatio(f64),
    #[error("split of {len} rows at ratio {ratio} leaves an empty side")]
    EmptySplit { len: usize, ratio: f64 },
    #[error("series of length {len} is too short for lookback {lookback} + horizon {horizon}")]
    TooShort {
        len: usize,
        lookback: usize,
        horizon: usize,
    },
    #[error("lookback and horizon must be positive")]
    ZeroWindow,
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("ragged matrix: row {row} has {found} columns, expected {expected}")]
    Ragged {
        row: usize,
        found: usize,
        expected: usize,
    },
}

pub type Result<T> = std::result::Result<T, DataError>;

/// Maps CSV columns onto dataset variables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub region_id: String,
    pub date_column: String,
    /// Pairs of (CSV column, variable name), in output order.
    pub variables: Vec<(String, String)>,
}

impl CsvSchema {
    /// Schema where each listed column keeps its own name as variable name.
    pub fn new(region_id: &str, date_column: &str, columns: &[&str]) -> Self {
        CsvSchema {
            region_id: region_id.to_string(),
            date_column: date_column.to_string(),
            variables: columns
                .iter()
                .map(|c| (c.to_string(), c.to_string()))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesDataset {
    pub region_id: String,
    pub dates: Vec<NaiveDate>,
    pub variables: BTreeMap<String, Vec<f64>>,
}

impl TimeSeriesDataset {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn variable(&self, name: &str) -> Result<&[f64]> {
        self.variables
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| DataError::UnknownVariable(name.to_string()))
    }

    /// Number of missing (`NaN`) cells across all variables.
    pub fn missing_count(&self) -> usize {
        self.variables
            .values()
            .map(|v| v.iter().filter(|x| x.is_nan()).count())
            .sum()
    }

    /// Number of dates that were absent from the source and inserted as gaps.
    pub fn gap_rows(&self) -> usize {
        (0..self.len())
            .filter(|&i| self.variables.values().all(|v| v[i].is_nan()))
            .count()
    }

    /// Imputes every variable, returning a dataset with no missing values.
    pub fn imputed(&self) -> Result<TimeSeriesDataset> {
        let mut variables = BTreeMap::new();
        for (name, series) in &self.variables {
            variables.insert(name.clone(), impute_missing(series)?);
        }
        Ok(TimeSeriesDataset {
            region_id: self.region_id.clone(),
            dates: self.dates.clone(),
            variables,
        })
    }

    /// Rows `[start, end)` as a new dataset.
    pub fn slice(&self, start: usize, end: usize) -> TimeSeriesDataset {
        TimeSeriesDataset {
            region_id: self.region_id.clone(),
            dates: self.dates[start..end].to_vec(),
            variables: self
                .variables
                .iter()
                .map(|(k, v)| (k.clone(), v[start..end].to_vec()))
                .collect(),
        }
    }
}

fn is_missing_cell(cell: &str) -> bool {
    let cell = cell.trim();
    cell.is_empty() || cell == "NA"
}

/// Loads a daily series from a CSV file.
///
/// Row numbers in errors are 1-based file lines (the header is line 1).
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<TimeSeriesDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_csv(file, schema)
}

/// Same as [`load_csv`] over any reader.
pub fn read_csv<R: std::io::Read>(reader: R, schema: &CsvSchema) -> Result<TimeSeriesDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| DataError::Csv {
            row: 1,
            message: e.to_string(),
        })?
        .clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };
    let date_idx = find(&schema.date_column)?;
    let var_idx = schema
        .variables
        .iter()
        .map(|(col, _)| find(col))
        .collect::<Result<Vec<_>>>()?;

    let mut rows: Vec<(NaiveDate, Vec<f64>)> = Vec::new();
    let mut seen = HashSet::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| DataError::Csv {
            row,
            message: e.to_string(),
        })?;
        let raw_date = record.get(date_idx).unwrap_or("");
        let date = NaiveDate::parse_from_str(raw_date, DATE_FORMAT).map_err(|_| {
            DataError::UnparsableDate {
                row,
                value: raw_date.to_string(),
            }
        })?;
        if !seen.insert(date) {
            return Err(DataError::DuplicateDate { row, date });
        }
        let mut values = Vec::with_capacity(var_idx.len());
        for (&idx, (col, _)) in var_idx.iter().zip(&schema.variables) {
            let cell = record.get(idx).unwrap_or("");
            if is_missing_cell(cell) {
                values.push(f64::NAN);
                continue;
            }
            let value: f64 = cell.parse().map_err(|_| DataError::NonNumeric {
                row,
                column: col.clone(),
                value: cell.to_string(),
            })?;
            if !value.is_finite() {
                return Err(DataError::NonNumeric {
                    row,
                    column: col.clone(),
                    value: cell.to_string(),
                });
            }
            values.push(value);
        }
        rows.push((date, values));
    }
    if rows.is_empty() {
        return Err(DataError::Empty);
    }
    rows.sort_by_key(|(d, _)| *d);

    let first = rows[0].0;
    let last = rows[rows.len() - 1].0;
    let span = (last - first).num_days() as usize + 1;
    let mut dates = Vec::with_capacity(span);
    let mut columns = vec![vec![f64::NAN; span]; schema.variables.len()];
    for day in 0..span {
        dates.push(first + Days::new(day as u64));
    }
    for (date, values) in rows {
        let offset = (date - first).num_days() as usize;
        for (column, v) in columns.iter_mut().zip(values) {
            column[offset] = v;
        }
    }
    let variables = schema
        .variables
        .iter()
        .map(|(_, name)| name.clone())
        .zip(columns)
        .collect();
    Ok(TimeSeriesDataset {
        region_id: schema.region_id.clone(),
        dates,
        variables,
    })
}

/// Fills missing (`NaN`) entries with the mean of the nearest present value
/// on either side. Every entry of a run of missing values receives the same
/// mean of the run's two endpoints.
pub fn impute_missing(series: &[f64]) -> Result<Vec<f64>> {
    if series.iter().all(|x| x.is_nan()) {
        return Err(DataError::AllMissing);
    }
    if series[0].is_nan() || series[series.len() - 1].is_nan() {
        return Err(DataError::EdgeMissing);
    }
    let mut out = series.to_vec();
    let mut i = 0;
    while i < out.len() {
        if !out[i].is_nan() {
            i += 1;
            continue;
        }
        let start = i;
        while out[i].is_nan() {
            i += 1;
        }
        let fill = (series[start - 1] + series[i]) / 2.0;
        out[start..i].iter_mut().for_each(|x| *x = fill);
    }
    Ok(out)
}

/// Min/max constants of a single variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingParams {
    pub min: f64,
    pub max: f64,
}

impl ScalingParams {
    pub fn fit(series: &[f64]) -> ScalingParams {
        let min = series.iter().copied().fold(f64::INFINITY, f64::min);
        let max = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        ScalingParams { min, max }
    }

    /// Constant series: every value maps to zero.
    pub fn is_degenerate(&self) -> bool {
        self.max == self.min
    }

    pub fn scale_value(&self, x: f64) -> f64 {
        if self.is_degenerate() {
            0.0
        } else {
            (x - self.min) / (self.max - self.min)
        }
    }

    pub fn inverse_value(&self, s: f64) -> f64 {
        if self.is_degenerate() {
            self.min
        } else {
            self.min + s * (self.max - self.min)
        }
    }

    pub fn scale(&self, series: &[f64]) -> Vec<f64> {
        series.iter().map(|&x| self.scale_value(x)).collect()
    }
}

/// Scales `series` into `[0, 1]` using its own minimum and maximum.
pub fn minmax_scale(series: &[f64]) -> (Vec<f64>, ScalingParams) {
    let params = ScalingParams::fit(series);
    (params.scale(series), params)
}

pub fn inverse_scale(scaled: &[f64], params: &ScalingParams) -> Vec<f64> {
    scaled.iter().map(|&s| params.inverse_value(s)).collect()
}

/// Index at which a chronological split puts the first test row.
pub fn split_index(len: usize, ratio: f64) -> Result<usize> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(DataError::InvalidRatio(ratio));
    }
    let at = (ratio * len as f64).floor() as usize;
    if at == 0 || at >= len {
        return Err(DataError::EmptySplit { len, ratio });
    }
    Ok(at)
}

/// Chronological split: the first `floor(ratio * len)` rows train, the rest test.
pub fn train_test_split(
    dataset: &TimeSeriesDataset,
    ratio: f64,
) -> Result<(TimeSeriesDataset, TimeSeriesDataset)> {
    let at = split_index(dataset.len(), ratio)?;
    Ok((dataset.slice(0, at), dataset.slice(at, dataset.len())))
}

/// Supervised samples cut from a `(time, features)` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedSamples {
    /// Each input is `lookback` rows of `n_features` values.
    pub inputs: Vec<Vec<Vec<f64>>>,
    /// Each target is `horizon` rows of `n_targets` values, flattened row-major.
    pub targets: Vec<Vec<f64>>,
    pub lookback: usize,
    pub horizon: usize,
    pub n_targets: usize,
}

impl WindowedSamples {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Samples `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> WindowedSamples {
        WindowedSamples {
            inputs: self.inputs[start..end].to_vec(),
            targets: self.targets[start..end].to_vec(),
            lookback: self.lookback,
            horizon: self.horizon,
            n_targets: self.n_targets,
        }
    }
}

/// Sliding windows with every column used as a target.
pub fn make_windows(series: &[Vec<f64>], lookback: usize, horizon: usize) -> Result<WindowedSamples> {
    let width = series.first().map_or(0, Vec::len);
    let all: Vec<usize> = (0..width).collect();
    make_windows_for(series, lookback, horizon, &all)
}

/// Sliding windows whose targets are the listed columns.
///
/// Sample `i` reads rows `[i, i + lookback)` and predicts rows
/// `[i + lookback, i + lookback + horizon)`.
pub fn make_windows_for(
    series: &[Vec<f64>],
    lookback: usize,
    horizon: usize,
    target_columns: &[usize],
) -> Result<WindowedSamples> {
    if lookback == 0 || horizon == 0 {
        return Err(DataError::ZeroWindow);
    }
    let len = series.len();
    if len < lookback + horizon {
        return Err(DataError::TooShort {
            len,
            lookback,
            horizon,
        });
    }
    let width = series[0].len();
    for (row, r) in series.iter().enumerate() {
        if r.len() != width {
            return Err(DataError::Ragged {
                row,
                found: r.len(),
                expected: width,
            });
        }
    }
    let count = len - lookback - horizon + 1;
    let mut inputs = Vec::with_capacity(count);
    let mut targets = Vec::with_capacity(count);
    for i in 0..count {
        inputs.push(series[i..i + lookback].to_vec());
        let target = series[i + lookback..i + lookback + horizon]
            .iter()
            .flat_map(|row| target_columns.iter().map(move |&c| row[c]))
            .collect();
        targets.push(target);
    }
    Ok(WindowedSamples {
        inputs,
        targets,
        lookback,
        horizon,
        n_targets: target_columns.len(),
    })
}

/// A univariate series as a single-column matrix.
pub fn as_column(series: &[f64]) -> Vec<Vec<f64>> {
    series.iter().map(|&x| vec![x]).collect()
}
