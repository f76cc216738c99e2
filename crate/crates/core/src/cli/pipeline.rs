//! Per-variable pipeline stages shared by the commands and the test suites.
//! One network is tuned and trained per variable.

use serde::{Deserialize, Serialize};

use crate::evaluation::{persistence_forecast, MetricReport};
use crate::neuralnet::{iterative_forecast, NetError, Network, NetworkConfig, Tensor, TrainingConfig};
use crate::timeseries::{as_column, make_windows, split_index, DataError, ScalingParams};
use crate::tuning::{
    fit_assignment, tune, ForecastObjective, HashSurrogate, HyperparamAssignment, HyperparamSpace, TuneError,
    TuneOptions, TuningResult,
};

use super::config::Surrogate;

/// One imputed variable with train-only scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSeries {
    pub name: String,
    pub raw: Vec<f64>,
    pub scaled: Vec<f64>,
    pub scaling: ScalingParams,
    /// Rows `[0, split)` train, `[split, len)` test.
    pub split: usize,
}

impl PreparedSeries {
    /// Fits the scaling on the first `floor(ratio * len)` rows and applies it everywhere.
    pub fn new(name: &str, imputed: &[f64], split_ratio: f64) -> Result<PreparedSeries, DataError> {
        let split = split_index(imputed.len(), split_ratio)?;
        let scaling = ScalingParams::fit(&imputed[..split]);
        Ok(PreparedSeries {
            name: name.to_string(),
            raw: imputed.to_vec(),
            scaled: scaling.scale(imputed),
            scaling,
            split,
        })
    }

    /// Rebuilds from an already-scaled series, as stored by `ingest`.
    pub fn from_scaled(name: &str, scaled: Vec<f64>, scaling: ScalingParams, split: usize) -> PreparedSeries {
        PreparedSeries {
            name: name.to_string(),
            raw: scaled.iter().map(|&s| scaling.inverse_value(s)).collect(),
            scaled,
            scaling,
            split,
        }
    }

    pub fn train_scaled(&self) -> &[f64] {
        &self.scaled[..self.split]
    }
}

/// Tunes the architecture on the training rows. With a surrogate the loss
/// is a seeded hash of the cell and no network is trained.
pub fn tune_series(
    series: &PreparedSeries,
    base: &NetworkConfig,
    fitness_training: &TrainingConfig,
    space: &HyperparamSpace,
    options: &TuneOptions,
    surrogate: Option<Surrogate>,
) -> Result<TuningResult, TuneError> {
    match surrogate {
        Some(Surrogate::Hash) => tune(&HashSurrogate { seed: options.params.seed }, space, options),
        None => {
            let objective = ForecastObjective::from_series(
                &as_column(series.train_scaled()),
                base,
                fitness_training,
                options.params.seed,
            )?;
            tune(&objective, space, options)
        }
    }
}

/// Trains the final network for `assignment` on every training window.
pub fn train_series(
    series: &PreparedSeries,
    base: &NetworkConfig,
    training: &TrainingConfig,
    assignment: &HyperparamAssignment,
    seed: u64,
) -> Result<Network, TuneError> {
    let samples = make_windows(&as_column(series.train_scaled()), base.lookback, base.horizon)?;
    fit_assignment(assignment, base, training, seed, &samples)
}

/// One-step-ahead predictions over the test rows, each from the true
/// preceding `lookback` values, beside the persistence baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkForward {
    /// Row index of each prediction.
    pub rows: Vec<usize>,
    pub actual: Vec<f64>,
    pub model: Vec<f64>,
    pub persistence: Vec<f64>,
}

pub fn walk_forward(net: &Network, series: &PreparedSeries) -> Result<WalkForward, NetError> {
    let lookback = net.config.lookback;
    let start = series.split.max(lookback);
    let mut out = WalkForward {
        rows: Vec::new(),
        actual: Vec::new(),
        model: Vec::new(),
        persistence: Vec::new(),
    };
    for t in start..series.scaled.len() {
        let window = &series.scaled[t - lookback..t];
        let y = net.forward(&Tensor::column(window)?)?;
        out.rows.push(t);
        out.actual.push(series.scaled[t]);
        out.model.push(y[0]);
        out.persistence
            .push(persistence_forecast(window, 1).expect("window is non-empty")[0]);
    }
    if out.rows.is_empty() {
        return Err(NetError::Config(format!(
            "no test rows after the first {lookback} observations"
        )));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitsReport {
    pub scaled: MetricReport,
    pub original: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub variable: String,
    pub model: UnitsReport,
    pub persistence: UnitsReport,
}

pub fn evaluation_report(series: &PreparedSeries, wf: &WalkForward) -> EvaluationReport {
    let units = |pred: &[f64]| {
        let inv = |v: &[f64]| v.iter().map(|&s| series.scaling.inverse_value(s)).collect::<Vec<_>>();
        UnitsReport {
            scaled: MetricReport::compute(pred, &wf.actual).expect("equal non-empty lengths"),
            original: MetricReport::compute(&inv(pred), &inv(&wf.actual)).expect("equal non-empty lengths"),
        }
    };
    EvaluationReport {
        variable: series.name.clone(),
        model: units(&wf.model),
        persistence: units(&wf.persistence),
    }
}

/// Iterative forecast of `steps` days past the end of the series, in original units.
pub fn forecast_series(net: &Network, series: &PreparedSeries, steps: usize) -> Result<Vec<f64>, NetError> {
    let history = Tensor::column(&series.scaled)?;
    iterative_forecast(net, &history, steps, &series.scaling)
}
