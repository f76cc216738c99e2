use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::metaheuristics::{Algorithm, OptimizerParams};
use crate::neuralnet::{Activation, NetworkConfig, OptimizerKind, TrainingConfig};
use crate::tuning::{Dimension, HyperparamAssignment, HyperparamSpace, TuneOptions};

use super::CliError;

/// Everything a pipeline run depends on. Loaded from JSON; command-line
/// flags are applied on top.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    #[serde(default = "default_lookback")]
    pub lookback: usize,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_split")]
    pub split_ratio: f64,
    #[serde(default)]
    pub network: NetworkParams,
    #[serde(default)]
    pub tuning: TuningSettings,
    #[serde(default)]
    pub training: TrainingSettings,
    #[serde(default = "default_steps")]
    pub forecast_steps: usize,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub path: PathBuf,
    #[serde(default)]
    pub region: String,
    #[serde(default = "default_date_column")]
    pub date_column: String,
    pub variables: Vec<String>,
}

/// Architecture used when no tuning report is available.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkParams {
    pub n_filters: usize,
    pub kernel_size: usize,
    pub pool_size: usize,
    pub lstm_units: usize,
    pub repeat_steps: usize,
    pub conv_activation: Activation,
}

impl Default for NetworkParams {
    fn default() -> Self {
        let d = NetworkConfig::default();
        NetworkParams {
            n_filters: d.n_filters,
            kernel_size: d.kernel_size,
            pool_size: d.pool_size,
            lstm_units: d.lstm_units,
            repeat_steps: d.repeat_steps,
            conv_activation: d.conv_activation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Surrogate {
    Hash,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TuningSettings {
    pub algorithm: Algorithm,
    pub population_size: usize,
    pub max_iterations: usize,
    pub budget: Option<usize>,
    pub fitness_epochs: usize,
    pub extended_space: bool,
    pub surrogate: Option<Surrogate>,
    pub workers: Option<usize>,
}

impl Default for TuningSettings {
    fn default() -> Self {
        let p = OptimizerParams::default();
        TuningSettings {
            algorithm: Algorithm::RsGwoWoa,
            population_size: p.population_size,
            max_iterations: p.max_iterations,
            budget: None,
            fitness_epochs: 20,
            extended_space: false,
            surrogate: None,
            workers: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
}

impl Default for TrainingSettings {
    fn default() -> Self {
        let t = TrainingConfig::default();
        TrainingSettings {
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            optimizer: t.optimizer,
        }
    }
}

fn default_lookback() -> usize {
    7
}

fn default_horizon() -> usize {
    1
}

fn default_split() -> f64 {
    0.8
}

fn default_steps() -> usize {
    7
}

fn default_output() -> PathBuf {
    PathBuf::from("runs")
}

fn default_date_column() -> String {
    "date".into()
}

impl RunConfig {
    /// Parses a config file. Relative data and output paths are taken
    /// relative to the file's directory.
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if let Some(dir) = path.parent() {
            if cfg.data.path.is_relative() {
                cfg.data.path = dir.join(&cfg.data.path);
            }
            if cfg.output_dir.is_relative() {
                cfg.output_dir = dir.join(&cfg.output_dir);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.data.variables.is_empty() {
            return bad("data.variables is empty".into());
        }
        if !self.data.path.is_file() {
            return bad(format!("data file {} does not exist", self.data.path.display()));
        }
        if self.lookback == 0 || self.horizon == 0 {
            return bad("lookback and horizon must be at least 1".into());
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return bad(format!("split_ratio {} must lie strictly between 0 and 1", self.split_ratio));
        }
        if self.forecast_steps == 0 {
            return bad("forecast_steps must be at least 1".into());
        }
        if self.tuning.fitness_epochs == 0 {
            return bad("tuning.fitness_epochs must be at least 1".into());
        }
        self.optimizer_params()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.final_training(0)
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    /// Canonical JSON with `output_dir` blanked; the basis of the run stamp.
    pub fn canonical_json(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        serde_json::to_string_pretty(&c).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical_json().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Hash of the fields that determine the prepared dataset: data source,
    /// windowing, split and seed. Later stages may change other fields and
    /// still share the run directory.
    pub fn data_hash(&self) -> String {
        let key = serde_json::json!({
            "data": self.data,
            "lookback": self.lookback,
            "horizon": self.horizon,
            "split_ratio": self.split_ratio,
            "seed": self.seed,
        });
        let text = serde_json::to_string(&key).expect("key serializes");
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// `output_dir/run-<first 12 hex digits of the data hash>`.
    pub fn run_dir(&self) -> PathBuf {
        self.output_dir.join(format!("run-{}", &self.data_hash()[..12]))
    }

    pub fn base_network(&self) -> NetworkConfig {
        NetworkConfig {
            lookback: self.lookback,
            n_features: 1,
            horizon: self.horizon,
            n_filters: self.network.n_filters,
            kernel_size: self.network.kernel_size,
            pool_size: self.network.pool_size,
            lstm_units: self.network.lstm_units,
            repeat_steps: self.network.repeat_steps,
            conv_activation: self.network.conv_activation,
            seed: self.seed,
        }
    }

    pub fn final_training(&self, seed: u64) -> TrainingConfig {
        TrainingConfig {
            epochs: self.training.epochs,
            batch_size: self.training.batch_size,
            learning_rate: self.training.learning_rate,
            optimizer: self.training.optimizer,
            seed,
            ..TrainingConfig::default()
        }
    }

    pub fn fitness_training(&self) -> TrainingConfig {
        TrainingConfig {
            epochs: self.tuning.fitness_epochs,
            ..self.final_training(self.seed)
        }
    }

    pub fn optimizer_params(&self) -> OptimizerParams {
        OptimizerParams {
            population_size: self.tuning.population_size,
            max_iterations: self.tuning.max_iterations,
            seed: self.seed,
            ..OptimizerParams::default()
        }
    }

    pub fn tune_options(&self) -> TuneOptions {
        TuneOptions {
            algorithm: self.tuning.algorithm,
            params: self.optimizer_params(),
            workers: self.tuning.workers,
            budget: self.tuning.budget,
        }
    }

    pub fn space(&self) -> HyperparamSpace {
        if self.tuning.extended_space {
            HyperparamSpace::extended()
        } else {
            HyperparamSpace::default()
        }
    }

    /// The configured architecture as a single-cell assignment.
    pub fn explicit_assignment(&self) -> HyperparamAssignment {
        let n = &self.network;
        let space = HyperparamSpace::new(vec![
            Dimension::new("n_filters", &[n.n_filters as f64]),
            Dimension::new("kernel_size", &[n.kernel_size as f64]),
            Dimension::new("pool_size", &[n.pool_size as f64]),
            Dimension::new("lstm_units", &[n.lstm_units as f64]),
        ])
        .expect("single-candidate space is valid");
        space.cell(&[0, 0, 0, 0]).expect("cell exists")
    }
}
