//! Command-line front end. Every pipeline command reads a JSON [`RunConfig`]
//! (flags override it) and works in `output_dir/run-<data hash>`, whose
//! `manifest.json` lists the SHA-256 of every artifact written there and the
//! hash of the full configuration last used.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 configuration error, 3 data
//! error, 4 numerical divergence.

pub mod config;
pub mod pipeline;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{Days, NaiveDate};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::evaluation::{compare_methods, EvalError, ScoreMatrix};
use crate::metaheuristics::benchmarks::Benchmark;
use crate::metaheuristics::{optimize, Algorithm, OptimError, OptimizerParams};
use crate::neuralnet::{NetError, Network};
use crate::timeseries::{load_csv, read_csv, CsvSchema, DataError, ScalingParams, DATE_FORMAT};
use crate::tuning::{HyperparamAssignment, TuneError, TuningResult};

pub use config::{RunConfig, Surrogate};
use pipeline::{evaluation_report, forecast_series, train_series, tune_series, walk_forward, PreparedSeries};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical divergence: {0}")]
    Diverged(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Diverged(_) => 4,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<NetError> for CliError {
    fn from(e: NetError) -> Self {
        match e {
            NetError::Diverged { .. } => CliError::Diverged(e.to_string()),
            NetError::Serialization(_) => CliError::Data(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<TuneError> for CliError {
    fn from(e: TuneError) -> Self {
        match e {
            TuneError::Optim(OptimError::DegenerateObjective) => {
                CliError::Diverged("every evaluated configuration was infeasible or diverged".into())
            }
            TuneError::Net(n) => n.into(),
            TuneError::Data(d) => d.into(),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<OptimError> for CliError {
    fn from(e: OptimError) -> Self {
        match e {
            OptimError::DegenerateObjective => CliError::Diverged(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::UnsupportedK { .. } | EvalError::UnsupportedAlpha(_) => CliError::Config(e.to_string()),
            EvalError::Io(io) => CliError::Data(io.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "epiforecast", version, about = "CNN-LSTM forecasting with metaheuristic hyperparameter tuning")]
pub struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true, env = "EPIFORECAST_CONFIG")]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags that replace the corresponding config fields.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    #[arg(long, global = true)]
    pub lookback: Option<usize>,
    #[arg(long, global = true)]
    pub horizon: Option<usize>,
    #[arg(long, global = true)]
    pub split_ratio: Option<f64>,
    /// rs-gwo-woa, gwo, woa or ga.
    #[arg(long, global = true)]
    pub algorithm: Option<Algorithm>,
    #[arg(long, global = true)]
    pub population: Option<usize>,
    #[arg(long, global = true)]
    pub iterations: Option<usize>,
    /// Cap on distinct grid cells evaluated while tuning.
    #[arg(long, global = true)]
    pub budget: Option<usize>,
    #[arg(long, global = true)]
    pub fitness_epochs: Option<usize>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long, global = true)]
    pub learning_rate: Option<f64>,
    /// Replace training with a seeded hash of the grid cell (`hash`).
    #[arg(long, global = true, value_parser = parse_surrogate)]
    pub surrogate: Option<Surrogate>,
    /// Also tune learning rate and epoch count.
    #[arg(long, global = true)]
    pub extended_space: bool,
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true)]
    pub steps: Option<usize>,
}

fn parse_surrogate(s: &str) -> std::result::Result<Surrogate, String> {
    match s {
        "hash" => Ok(Surrogate::Hash),
        other => Err(format!("unknown surrogate `{other}` (expected `hash`)")),
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load, impute, split and scale the data.
    Ingest,
    /// Search the hyperparameter grid for each variable.
    Tune,
    /// Train the final network for each variable.
    Train,
    /// Forecast past the end of the data.
    Forecast,
    /// One-step-ahead test metrics against the persistence baseline.
    Evaluate,
    /// Friedman test and Nemenyi critical difference over a score matrix.
    Compare {
        /// CSV with a test-name column followed by one column per method.
        #[arg(long)]
        scores: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Use this q instead of the tabulated value.
        #[arg(long)]
        q: Option<f64>,
        /// Directory for comparison.json and cd_diagram.csv.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run an optimizer on a benchmark function.
    BenchOpt {
        /// sphere, rastrigin, rosenbrock or ackley.
        #[arg(long, default_value = "sphere")]
        function: Benchmark,
        #[arg(long, default_value_t = 5)]
        dim: usize,
        /// Write the best-so-far trace as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Compare { scores, alpha, q, out } => cmd_compare(scores, *alpha, *q, out),
        Command::BenchOpt { function, dim, trace } => cmd_bench(*function, *dim, trace.as_deref(), &cli.overrides),
        pipeline_cmd => {
            let cfg = resolve_config(cli.config.as_deref(), &cli.overrides)?;
            match pipeline_cmd {
                Command::Ingest => cmd_ingest(&cfg),
                Command::Tune => cmd_tune(&cfg),
                Command::Train => cmd_train(&cfg),
                Command::Forecast => cmd_forecast(&cfg),
                Command::Evaluate => cmd_evaluate(&cfg),
                Command::Compare { .. } | Command::BenchOpt { .. } => unreachable!("handled above"),
            }
        }
    }
}

/// Loads the config file and applies the flag overrides, then validates.
pub fn resolve_config(path: Option<&Path>, o: &Overrides) -> Result<RunConfig> {
    let path = path.ok_or_else(|| {
        CliError::Config("no configuration: pass --config or set EPIFORECAST_CONFIG".into())
    })?;
    let mut cfg = RunConfig::load(path)?;
    macro_rules! set {
        ($flag:expr => $field:expr) => {
            if let Some(v) = $flag.clone() {
                $field = v;
            }
        };
    }
    set!(o.seed => cfg.seed);
    set!(o.output_dir => cfg.output_dir);
    set!(o.data => cfg.data.path);
    set!(o.lookback => cfg.lookback);
    set!(o.horizon => cfg.horizon);
    set!(o.split_ratio => cfg.split_ratio);
    set!(o.algorithm => cfg.tuning.algorithm);
    set!(o.population => cfg.tuning.population_size);
    set!(o.iterations => cfg.tuning.max_iterations);
    set!(o.fitness_epochs => cfg.tuning.fitness_epochs);
    set!(o.epochs => cfg.training.epochs);
    set!(o.learning_rate => cfg.training.learning_rate);
    set!(o.steps => cfg.forecast_steps);
    if o.budget.is_some() {
        cfg.tuning.budget = o.budget;
    }
    if o.surrogate.is_some() {
        cfg.tuning.surrogate = o.surrogate;
    }
    if o.workers.is_some() {
        cfg.tuning.workers = o.workers;
    }
    if o.extended_space {
        cfg.tuning.extended_space = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    /// Artifact file name to SHA-256 hex digest.
    pub artifacts: BTreeMap<String, String>,
}

pub const MANIFEST_FORMAT: &str = "epiforecast-manifest/1";

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// The run directory of one configuration.
pub struct RunDir {
    pub path: PathBuf,
    config_hash: String,
    seed: u64,
}

impl RunDir {
    pub fn open(cfg: &RunConfig) -> Result<RunDir> {
        let path = cfg.run_dir();
        fs::create_dir_all(&path).map_err(|e| io_err(&path, e))?;
        let dir = RunDir {
            path,
            config_hash: cfg.hash(),
            seed: cfg.seed,
        };
        dir.write("config.json", cfg.canonical_json().as_bytes())?;
        Ok(dir)
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    /// Writes an artifact and records its digest in the manifest.
    pub fn write(&self, name: &str, bytes: &[u8]) -> Result<()> {
        let p = self.file(name);
        fs::write(&p, bytes).map_err(|e| io_err(&p, e))?;
        let mp = self.file("manifest.json");
        let mut manifest = match fs::read_to_string(&mp) {
            Ok(text) => serde_json::from_str::<Manifest>(&text).ok(),
            Err(_) => None,
        }
        .unwrap_or_else(|| Manifest {
            format: MANIFEST_FORMAT.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_hash: self.config_hash.clone(),
            seed: self.seed,
            artifacts: BTreeMap::new(),
        });
        manifest.config_hash = self.config_hash.clone();
        manifest.seed = self.seed;
        manifest.artifacts.insert(name.to_string(), sha256_hex(bytes));
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        fs::write(&mp, text).map_err(|e| io_err(&mp, e))
    }

    pub fn read(&self, name: &str, hint: &str) -> Result<String> {
        let p = self.file(name);
        fs::read_to_string(&p).map_err(|_| CliError::Data(format!("{} not found; {hint}", p.display())))
    }
}

/// File-name-safe form of a variable name.
pub fn slug(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Preprocessing {
    region: String,
    rows: usize,
    gap_rows: usize,
    imputed: usize,
    split_index: usize,
    first_date: NaiveDate,
    last_date: NaiveDate,
    scaling: BTreeMap<String, ScalingParams>,
}

fn schema(cfg: &RunConfig) -> CsvSchema {
    let vars: Vec<&str> = cfg.data.variables.iter().map(String::as_str).collect();
    CsvSchema::new(&cfg.data.region, &cfg.data.date_column, &vars)
}

fn fmt_csv_float(v: f64) -> String {
    format!("{v}")
}

fn cmd_ingest(cfg: &RunConfig) -> Result<()> {
    let raw = load_csv(&cfg.data.path, &schema(cfg))?;
    let gaps = raw.gap_rows();
    let missing = raw.missing_count();
    let clean = raw.imputed()?;
    let mut prepared = Vec::new();
    for v in &cfg.data.variables {
        prepared.push(PreparedSeries::new(v, clean.variable(v)?, cfg.split_ratio)?);
    }
    let run = RunDir::open(cfg)?;

    let mut csv = format!("date,{}\n", cfg.data.variables.join(","));
    for (i, d) in clean.dates.iter().enumerate() {
        csv.push_str(&d.format(DATE_FORMAT).to_string());
        for p in &prepared {
            csv.push(',');
            csv.push_str(&fmt_csv_float(p.scaled[i]));
        }
        csv.push('\n');
    }
    run.write("dataset.csv", csv.as_bytes())?;
    let pre = Preprocessing {
        region: clean.region_id.clone(),
        rows: clean.len(),
        gap_rows: gaps,
        imputed: missing,
        split_index: prepared[0].split,
        first_date: clean.dates[0],
        last_date: *clean.dates.last().expect("dataset is non-empty"),
        scaling: prepared.iter().map(|p| (p.name.clone(), p.scaling)).collect(),
    };
    run.write("preprocessing.json", json(&pre).as_bytes())?;
    println!("rows: {}", clean.len());
    println!("gaps: {gaps}");
    println!("imputed: {missing}");
    println!("train rows: {}", pre.split_index);
    println!("run: {}", run.path.display());
    Ok(())
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("value serializes") + "\n"
}

struct Ingested {
    dates: Vec<NaiveDate>,
    series: Vec<PreparedSeries>,
}

fn load_ingested(cfg: &RunConfig, run: &RunDir) -> Result<Ingested> {
    const HINT: &str = "run `ingest` with the same configuration first";
    let pre: Preprocessing = serde_json::from_str(&run.read("preprocessing.json", HINT)?)
        .map_err(|e| CliError::Data(format!("preprocessing.json: {e}")))?;
    let text = run.read("dataset.csv", HINT)?;
    let vars: Vec<&str> = cfg.data.variables.iter().map(String::as_str).collect();
    let ds = read_csv(text.as_bytes(), &CsvSchema::new(&pre.region, "date", &vars))?;
    let mut series = Vec::new();
    for v in &cfg.data.variables {
        let scaling = *pre
            .scaling
            .get(v)
            .ok_or_else(|| CliError::Data(format!("no scaling recorded for `{v}`")))?;
        series.push(PreparedSeries::from_scaled(v, ds.variable(v)?.to_vec(), scaling, pre.split_index));
    }
    Ok(Ingested { dates: ds.dates, series })
}

fn cmd_tune(cfg: &RunConfig) -> Result<()> {
    let run = RunDir::open(cfg)?;
    let data = load_ingested(cfg, &run)?;
    let space = cfg.space();
    for s in &data.series {
        let result = tune_series(
            s,
            &cfg.base_network(),
            &cfg.fitness_training(),
            &space,
            &cfg.tune_options(),
            cfg.tuning.surrogate,
        )?;
        let name = slug(&s.name);
        run.write(&format!("tuning-{name}.json"), json(&result).as_bytes())?;
        let mut trace = Vec::new();
        result.trace.write_csv(&mut trace).map_err(|e| CliError::Io(e.to_string()))?;
        run.write(&format!("trace-{name}.csv"), &trace)?;
        println!(
            "{}: {} {} (loss {}, {} cells evaluated)",
            s.name,
            result.algorithm,
            result.best,
            result.best_loss,
            result.cache_misses
        );
    }
    println!("run: {}", run.path.display());
    Ok(())
}

fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let run = RunDir::open(cfg)?;
    let data = load_ingested(cfg, &run)?;
    for s in &data.series {
        let name = slug(&s.name);
        let assignment: HyperparamAssignment = match fs::read_to_string(run.file(&format!("tuning-{name}.json"))) {
            Ok(text) => {
                serde_json::from_str::<TuningResult>(&text)
                    .map_err(|e| CliError::Data(format!("tuning-{name}.json: {e}")))?
                    .best
            }
            Err(_) => cfg.explicit_assignment(),
        };
        let net = train_series(s, &cfg.base_network(), &cfg.final_training(cfg.seed), &assignment, cfg.seed)?;
        run.write(&format!("model-{name}.json"), net.to_json()?.as_bytes())?;
        println!(
            "{}: trained {} for {} epochs, final loss {}",
            s.name,
            assignment,
            net.loss_history.len(),
            net.loss_history.last().copied().unwrap_or(f64::NAN)
        );
    }
    println!("run: {}", run.path.display());
    Ok(())
}

fn load_model(run: &RunDir, variable: &str) -> Result<Network> {
    let name = format!("model-{}.json", slug(variable));
    let text = run.read(&name, "run `train` with the same configuration first")?;
    Network::from_json(&text).map_err(|e| CliError::Data(format!("{name}: {e}")))
}

fn cmd_forecast(cfg: &RunConfig) -> Result<()> {
    let run = RunDir::open(cfg)?;
    let data = load_ingested(cfg, &run)?;
    let last = *data.dates.last().expect("dataset is non-empty");
    for s in &data.series {
        let net = load_model(&run, &s.name)?;
        let values = forecast_series(&net, s, cfg.forecast_steps)?;
        let mut csv = String::from("date,predicted\n");
        for (i, v) in values.iter().enumerate() {
            let d = last + Days::new(i as u64 + 1);
            csv.push_str(&format!("{},{}\n", d.format(DATE_FORMAT), fmt_csv_float(*v)));
        }
        run.write(&format!("forecast-{}.csv", slug(&s.name)), csv.as_bytes())?;
        println!("{}: {} steps from {}", s.name, values.len(), last + Days::new(1));
    }
    println!("run: {}", run.path.display());
    Ok(())
}

fn cmd_evaluate(cfg: &RunConfig) -> Result<()> {
    let run = RunDir::open(cfg)?;
    let data = load_ingested(cfg, &run)?;
    for s in &data.series {
        let net = load_model(&run, &s.name)?;
        let wf = walk_forward(&net, s)?;
        let report = evaluation_report(s, &wf);
        let name = slug(&s.name);
        run.write(&format!("evaluation-{name}.json"), json(&report).as_bytes())?;
        let mut csv = String::from("date,actual,model,persistence\n");
        for (i, &row) in wf.rows.iter().enumerate() {
            let inv = |v: f64| fmt_csv_float(s.scaling.inverse_value(v));
            csv.push_str(&format!(
                "{},{},{},{}\n",
                data.dates[row].format(DATE_FORMAT),
                inv(wf.actual[i]),
                inv(wf.model[i]),
                inv(wf.persistence[i])
            ));
        }
        run.write(&format!("predictions-{name}.csv"), csv.as_bytes())?;
        println!(
            "{}: test MSE (scaled) model {} persistence {} over {} days",
            s.name, report.model.scaled.mse, report.persistence.scaled.mse, report.model.scaled.n
        );
    }
    println!("run: {}", run.path.display());
    Ok(())
}

fn cmd_compare(scores: &Path, alpha: f64, q: Option<f64>, out: &Path) -> Result<()> {
    let matrix = ScoreMatrix::load(scores)?;
    let result = compare_methods(&matrix, alpha, q)?;
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let jp = out.join("comparison.json");
    fs::write(&jp, json(&result)).map_err(|e| io_err(&jp, e))?;
    let mut csv = Vec::new();
    result.write_cd_csv(&mut csv).map_err(|e| CliError::Io(e.to_string()))?;
    let cp = out.join("cd_diagram.csv");
    fs::write(&cp, csv).map_err(|e| io_err(&cp, e))?;
    let f = &result.friedman;
    println!(
        "friedman: {} (critical {} at alpha {}, df {}) -> {}",
        f.statistic,
        f.critical_value,
        f.alpha,
        f.degrees_of_freedom,
        if f.rejected { "reject" } else { "retain" }
    );
    println!("critical difference: {} (q = {})", result.critical_difference, result.q);
    for (m, r) in result.methods.iter().zip(&result.average_ranks) {
        println!("  {m}: {r}");
    }
    Ok(())
}

fn cmd_bench(function: Benchmark, dim: usize, trace: Option<&Path>, o: &Overrides) -> Result<()> {
    if dim == 0 {
        return Err(CliError::Config("--dim must be at least 1".into()));
    }
    let defaults = OptimizerParams::default();
    let params = OptimizerParams {
        population_size: o.population.unwrap_or(defaults.population_size),
        max_iterations: o.iterations.unwrap_or(defaults.max_iterations),
        seed: o.seed.unwrap_or(0),
        ..defaults
    };
    let algorithm = o.algorithm.unwrap_or(Algorithm::RsGwoWoa);
    let f = |x: &[f64]| function.evaluate(x);
    let result = optimize(algorithm, &f, &function.default_bounds(dim), &params)?;
    if let Some(path) = trace {
        let mut buf = Vec::new();
        result.trace.write_csv(&mut buf).map_err(|e| CliError::Io(e.to_string()))?;
        fs::write(path, buf).map_err(|e| io_err(path, e))?;
    }
    println!("{algorithm} on {} (d={dim}, seed {})", function.name(), params.seed);
    println!("best fitness: {}", result.best_fitness);
    println!("best position: {:?}", result.best_position);
    println!("evaluations: {}", result.trace.evaluations);
    Ok(())
}
