//! Hyperparameter search: a discrete grid encoded as the unit box, a
//! validation-loss fitness for the CNN-LSTM, and a caching driver that runs
//! any optimizer from [`crate::metaheuristics`] over it.

use std::collections::HashMap;
use std::fmt;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::metaheuristics::{
    clamp_to_bounds, optimize, Algorithm, Objective, OptimError, OptimizationTrace, OptimizerParams, SearchBounds,
};
use crate::neuralnet::{evaluate_loss, train, NetError, Network, NetworkConfig, TrainingConfig};
use crate::timeseries::{make_windows, split_index, DataError, WindowedSamples};

#[derive(Debug, Error)]
pub enum TuneError {
    #[error("position has {found} entries, the space has {expected} dimensions")]
    Dimension { expected: usize, found: usize },
    #[error("invalid hyperparameter space: {0}")]
    Space(String),
    #[error("unknown hyperparameter `{0}`")]
    UnknownParameter(String),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Net(#[from] NetError),
}

pub type Result<T> = std::result::Result<T, TuneError>;

/// Names understood by [`apply_assignment`].
pub const NETWORK_PARAMETERS: [&str; 6] = [
    "n_filters",
    "kernel_size",
    "pool_size",
    "lstm_units",
    "learning_rate",
    "epochs",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    pub candidates: Vec<f64>,
}

impl Dimension {
    pub fn new(name: &str, candidates: &[f64]) -> Dimension {
        Dimension {
            name: name.to_string(),
            candidates: candidates.to_vec(),
        }
    }
}

/// Ordered discrete grids searched through the box `[0, 1]^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperparamSpace {
    dimensions: Vec<Dimension>,
}

impl Default for HyperparamSpace {
    fn default() -> Self {
        HyperparamSpace {
            dimensions: vec![
                Dimension::new("n_filters", &[32.0, 64.0]),
                Dimension::new("kernel_size", &[3.0, 4.0, 5.0, 6.0, 7.0, 8.0]),
                Dimension::new("pool_size", &[2.0, 3.0, 4.0]),
                Dimension::new("lstm_units", &[10.0, 15.0, 20.0, 25.0]),
            ],
        }
    }
}

impl HyperparamSpace {
    pub fn new(dimensions: Vec<Dimension>) -> Result<HyperparamSpace> {
        if dimensions.is_empty() {
            return Err(TuneError::Space("no dimensions".into()));
        }
        for (i, d) in dimensions.iter().enumerate() {
            if d.candidates.is_empty() {
                return Err(TuneError::Space(format!("dimension `{}` has no candidates", d.name)));
            }
            if d.candidates.iter().any(|c| !c.is_finite()) {
                return Err(TuneError::Space(format!("dimension `{}` has a non-finite candidate", d.name)));
            }
            if dimensions[..i].iter().any(|o| o.name == d.name) {
                return Err(TuneError::Space(format!("dimension `{}` appears twice", d.name)));
            }
        }
        Ok(HyperparamSpace { dimensions })
    }

    /// The architecture grid plus learning rate and epoch count.
    pub fn extended() -> HyperparamSpace {
        let mut dims = HyperparamSpace::default().dimensions;
        dims.push(Dimension::new("learning_rate", &[1e-2, 1e-3, 1e-4]));
        dims.push(Dimension::new("epochs", &[50.0, 100.0]));
        HyperparamSpace { dimensions: dims }
    }

    pub fn dimensions(&self) -> &[Dimension] {
        &self.dimensions
    }

    pub fn dim(&self) -> usize {
        self.dimensions.len()
    }

    /// Number of grid cells.
    pub fn cells(&self) -> usize {
        self.dimensions.iter().map(|d| d.candidates.len()).product()
    }

    pub fn bounds(&self) -> SearchBounds {
        SearchBounds::unit(self.dim())
    }

    /// Maps a position to grid indices: `min(floor(p n), n - 1)` after
    /// clamping each entry into `[0, 1]`.
    pub fn decode(&self, position: &[f64]) -> Result<HyperparamAssignment> {
        if position.len() != self.dim() {
            return Err(TuneError::Dimension {
                expected: self.dim(),
                found: position.len(),
            });
        }
        let position = clamp_to_bounds(position, &self.bounds());
        let indices = position
            .iter()
            .zip(&self.dimensions)
            .map(|(p, d)| {
                let n = d.candidates.len();
                ((p * n as f64).floor() as usize).min(n - 1)
            })
            .collect();
        Ok(self.assignment(indices, position))
    }

    /// The cell at `indices`, with the centre of that cell as its position.
    pub fn cell(&self, indices: &[usize]) -> Result<HyperparamAssignment> {
        if indices.len() != self.dim() {
            return Err(TuneError::Dimension {
                expected: self.dim(),
                found: indices.len(),
            });
        }
        if let Some((i, d)) = indices
            .iter()
            .zip(&self.dimensions)
            .find(|(i, d)| **i >= d.candidates.len())
        {
            return Err(TuneError::Space(format!("index {i} out of range for `{}`", d.name)));
        }
        let position = indices
            .iter()
            .zip(&self.dimensions)
            .map(|(&i, d)| (i as f64 + 0.5) / d.candidates.len() as f64)
            .collect();
        Ok(self.assignment(indices.to_vec(), position))
    }

    /// Every cell, last dimension varying fastest.
    pub fn enumerate(&self) -> Vec<HyperparamAssignment> {
        let mut out = Vec::with_capacity(self.cells());
        let mut idx = vec![0usize; self.dim()];
        loop {
            out.push(self.cell(&idx).expect("indices in range"));
            let mut d = self.dim();
            loop {
                if d == 0 {
                    return out;
                }
                d -= 1;
                idx[d] += 1;
                if idx[d] < self.dimensions[d].candidates.len() {
                    break;
                }
                idx[d] = 0;
            }
        }
    }

    fn assignment(&self, indices: Vec<usize>, position: Vec<f64>) -> HyperparamAssignment {
        let values = indices
            .iter()
            .zip(&self.dimensions)
            .map(|(&i, d)| (d.name.clone(), d.candidates[i]))
            .collect();
        HyperparamAssignment {
            values,
            indices,
            position,
        }
    }
}

/// A grid cell together with the continuous position that decoded to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperparamAssignment {
    pub values: Vec<(String, f64)>,
    pub indices: Vec<usize>,
    pub position: Vec<f64>,
}

impl HyperparamAssignment {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    /// Stable text form, e.g. `n_filters=32,kernel_size=3`.
    pub fn canonical(&self) -> String {
        self.values
            .iter()
            .map(|(n, v)| format!("{n}={v}"))
            .collect::<Vec<_>>()
            .join(",")
    }

    /// First eight bytes of the SHA-256 of the canonical form.
    pub fn stable_hash(&self) -> u64 {
        hash_u64(self.canonical().as_bytes())
    }
}

impl fmt::Display for HyperparamAssignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}

fn hash_u64(bytes: &[u8]) -> u64 {
    let digest = Sha256::digest(bytes);
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Training seed for an assignment: the global seed XOR its stable hash.
pub fn derive_seed(global_seed: u64, assignment: &HyperparamAssignment) -> u64 {
    global_seed ^ assignment.stable_hash()
}

/// Loss of one grid cell; lower is better, `+inf` marks infeasible cells.
pub trait AssignmentObjective: Sync {
    fn loss(&self, assignment: &HyperparamAssignment) -> f64;

    /// Cheap pre-check. Cells reported infeasible score `+inf` without being
    /// charged to an evaluation budget.
    fn feasible(&self, _assignment: &HyperparamAssignment) -> bool {
        true
    }
}

impl<F> AssignmentObjective for F
where
    F: Fn(&HyperparamAssignment) -> f64 + Sync,
{
    fn loss(&self, assignment: &HyperparamAssignment) -> f64 {
        self(assignment)
    }
}

/// Pseudo-random loss in `[0, 1)` keyed on `(seed, assignment)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashSurrogate {
    pub seed: u64,
}

impl AssignmentObjective for HashSurrogate {
    fn loss(&self, assignment: &HyperparamAssignment) -> f64 {
        let mut bytes = self.seed.to_le_bytes().to_vec();
        bytes.extend_from_slice(assignment.canonical().as_bytes());
        (hash_u64(&bytes) >> 11) as f64 / (1u64 << 53) as f64
    }
}

/// Overrides the tuned fields of `base` and `training` with `assignment`.
pub fn apply_assignment(
    assignment: &HyperparamAssignment,
    base: &NetworkConfig,
    training: &TrainingConfig,
) -> Result<(NetworkConfig, TrainingConfig)> {
    let mut net = base.clone();
    let mut tr = training.clone();
    for (name, v) in &assignment.values {
        let count = || -> Result<usize> {
            if *v >= 0.0 && v.fract() == 0.0 {
                Ok(*v as usize)
            } else {
                Err(TuneError::Space(format!("`{name}` needs a whole number, got {v}")))
            }
        };
        match name.as_str() {
            "n_filters" => net.n_filters = count()?,
            "kernel_size" => net.kernel_size = count()?,
            "pool_size" => net.pool_size = count()?,
            "lstm_units" => net.lstm_units = count()?,
            "learning_rate" => tr.learning_rate = *v,
            "epochs" => tr.epochs = count()?,
            other => return Err(TuneError::UnknownParameter(other.to_string())),
        }
    }
    Ok((net, tr))
}

/// Checks that every dimension of `space` maps onto a network field.
pub fn check_network_space(space: &HyperparamSpace) -> Result<()> {
    match space
        .dimensions()
        .iter()
        .find(|d| !NETWORK_PARAMETERS.contains(&d.name.as_str()))
    {
        Some(d) => Err(TuneError::UnknownParameter(d.name.clone())),
        None => Ok(()),
    }
}

/// Builds and trains the network for `assignment`, seeding both the weight
/// initialisation and the shuffle from [`derive_seed`].
pub fn fit_assignment(
    assignment: &HyperparamAssignment,
    base: &NetworkConfig,
    training: &TrainingConfig,
    global_seed: u64,
    samples: &WindowedSamples,
) -> Result<Network> {
    let (mut net_cfg, mut train_cfg) = apply_assignment(assignment, base, training)?;
    let seed = derive_seed(global_seed, assignment);
    net_cfg.seed = seed;
    train_cfg.seed = seed;
    let mut net = Network::new(net_cfg)?;
    train(&mut net, samples, &train_cfg)?;
    Ok(net)
}

/// Splits a training matrix into inner training and validation windows.
///
/// The first `floor(ratio * len)` rows form the inner training part. Training
/// windows lie entirely inside it; validation windows have their whole target
/// in the remaining rows and may read inputs from before the split.
pub fn inner_split(
    series: &[Vec<f64>],
    lookback: usize,
    horizon: usize,
    ratio: f64,
) -> Result<(WindowedSamples, WindowedSamples)> {
    let at = split_index(series.len(), ratio)?;
    let all = make_windows(series, lookback, horizon)?;
    // sample i targets rows [i + lookback, i + lookback + horizon)
    let train_end = (at + 1).saturating_sub(lookback + horizon);
    let val_start = at.saturating_sub(lookback);
    if train_end == 0 || val_start >= all.len() {
        return Err(DataError::TooShort {
            len: series.len(),
            lookback,
            horizon,
        }
        .into());
    }
    Ok((all.slice(0, train_end), all.slice(val_start, all.len())))
}

/// Validation MSE of a CNN-LSTM trained with the assignment.
#[derive(Debug, Clone)]
pub struct ForecastObjective {
    pub base: NetworkConfig,
    pub training: TrainingConfig,
    pub global_seed: u64,
    pub train: WindowedSamples,
    pub validation: WindowedSamples,
}

impl ForecastObjective {
    /// Uses the last 20% of `series` (already scaled, training rows only)
    /// for validation.
    pub fn from_series(
        series: &[Vec<f64>],
        base: &NetworkConfig,
        training: &TrainingConfig,
        global_seed: u64,
    ) -> Result<ForecastObjective> {
        let (train, validation) = inner_split(series, base.lookback, base.horizon, 0.8)?;
        Ok(ForecastObjective {
            base: base.clone(),
            training: training.clone(),
            global_seed,
            train,
            validation,
        })
    }
}

impl AssignmentObjective for ForecastObjective {
    fn loss(&self, assignment: &HyperparamAssignment) -> f64 {
        let fitted = fit_assignment(assignment, &self.base, &self.training, self.global_seed, &self.train)
            .and_then(|net| Ok(evaluate_loss(&net, &self.validation)?));
        match fitted {
            Ok(loss) if loss.is_finite() => loss,
            _ => f64::INFINITY,
        }
    }

    fn feasible(&self, assignment: &HyperparamAssignment) -> bool {
        apply_assignment(assignment, &self.base, &self.training)
            .is_ok_and(|(net, tr)| net.validate().is_ok() && tr.validate().is_ok())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub assignment: HyperparamAssignment,
    /// `null` in JSON for an infeasible or diverged cell.
    #[serde(with = "crate::metaheuristics::fitness_serde")]
    pub loss: f64,
    #[serde(skip)]
    pub wall_time: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningResult {
    pub algorithm: Algorithm,
    pub best: HyperparamAssignment,
    pub best_loss: f64,
    pub trace: OptimizationTrace,
    /// One record per distinct cell, in evaluation order.
    pub log: Vec<EvaluationRecord>,
    pub cache_hits: usize,
    pub cache_misses: usize,
    /// Distinct feasible cells evaluated; the quantity a budget caps.
    pub budget_used: usize,
    /// Uncached cells scored `+inf` because the budget was spent.
    pub over_budget: usize,
    /// Optimizer runs performed; more than one only under a budget.
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneOptions {
    pub algorithm: Algorithm,
    pub params: OptimizerParams,
    /// Threads for fitness evaluation; `None` uses the global pool.
    pub workers: Option<usize>,
    /// Cap on distinct feasible cells evaluated. When set, the optimizer is rerun
    /// with successive seeds until the cap is reached or every cell has been
    /// evaluated; `None` means a single run with no cap.
    pub budget: Option<usize>,
}

impl Default for TuneOptions {
    fn default() -> Self {
        TuneOptions {
            algorithm: Algorithm::RsGwoWoa,
            params: OptimizerParams::default(),
            workers: None,
            budget: None,
        }
    }
}

/// Upper limit on optimizer reruns under a budget.
pub const MAX_RUNS: usize = 10_000;

#[derive(Default)]
struct CacheState {
    losses: HashMap<Vec<usize>, f64>,
    log: Vec<EvaluationRecord>,
    hits: usize,
    misses: usize,
    charged: usize,
    over_budget: usize,
}

/// Decodes positions and memoises losses by grid cell.
struct CachedObjective<'a, A: AssignmentObjective + ?Sized> {
    space: &'a HyperparamSpace,
    inner: &'a A,
    budget: usize,
    state: Mutex<CacheState>,
}

impl<A: AssignmentObjective + ?Sized> Objective for CachedObjective<'_, A> {
    fn evaluate(&self, position: &[f64]) -> f64 {
        self.evaluate_batch(&[position.to_vec()])[0]
    }

    fn evaluate_batch(&self, positions: &[Vec<f64>]) -> Vec<f64> {
        let decoded: Vec<HyperparamAssignment> = positions
            .iter()
            .map(|p| self.space.decode(p).expect("optimizer keeps the box dimension"))
            .collect();
        // distinct uncached cells in order of first appearance; feasible ones
        // only while the budget has room
        let fresh: Vec<(&HyperparamAssignment, bool)> = {
            let state = self.state.lock().expect("cache lock");
            let mut room = self.budget.saturating_sub(state.charged);
            let mut seen: Vec<(&HyperparamAssignment, bool)> = Vec::new();
            for a in &decoded {
                if state.losses.contains_key(&a.indices) || seen.iter().any(|(s, _)| s.indices == a.indices) {
                    continue;
                }
                if !self.inner.feasible(a) {
                    seen.push((a, false));
                } else if room > 0 {
                    room -= 1;
                    seen.push((a, true));
                }
            }
            seen
        };
        let computed: Vec<(f64, Duration)> = fresh
            .par_iter()
            .map(|&(a, feasible)| {
                if !feasible {
                    return (f64::INFINITY, Duration::ZERO);
                }
                let start = Instant::now();
                let loss = self.inner.loss(a);
                (loss, start.elapsed())
            })
            .collect();

        let mut state = self.state.lock().expect("cache lock");
        for ((a, _), (loss, wall_time)) in fresh.iter().zip(computed) {
            let loss = if loss.is_nan() { f64::INFINITY } else { loss };
            state.losses.insert(a.indices.clone(), loss);
            state.log.push(EvaluationRecord {
                assignment: (*a).clone(),
                loss,
                wall_time,
            });
        }
        state.misses += fresh.len();
        state.charged += fresh.iter().filter(|(_, feasible)| *feasible).count();
        // the first occurrence of each fresh cell is its miss, the rest are hits
        let mut pending: Vec<&[usize]> = fresh.iter().map(|(a, _)| &a.indices[..]).collect();
        let mut out = Vec::with_capacity(decoded.len());
        for a in &decoded {
            match state.losses.get(&a.indices) {
                Some(&l) => {
                    if let Some(k) = pending.iter().position(|p| *p == &a.indices[..]) {
                        pending.swap_remove(k);
                    } else {
                        state.hits += 1;
                    }
                    out.push(l);
                }
                None => {
                    state.over_budget += 1;
                    out.push(f64::INFINITY);
                }
            }
        }
        out
    }
}

/// Runs the chosen optimizer over `space` with `objective` as fitness.
pub fn tune<A: AssignmentObjective + ?Sized>(
    objective: &A,
    space: &HyperparamSpace,
    options: &TuneOptions,
) -> Result<TuningResult> {
    if options.budget == Some(0) {
        return Err(TuneError::Space("evaluation budget must be at least 1".into()));
    }
    let cached = CachedObjective {
        space,
        inner: objective,
        budget: options.budget.unwrap_or(usize::MAX),
        state: Mutex::new(CacheState::default()),
    };
    let bounds = space.bounds();
    let search = || -> Result<(Vec<f64>, OptimizationTrace, usize)> {
        let mut best: Option<(Vec<f64>, f64)> = None;
        let mut trace = OptimizationTrace::default();
        let mut runs = 0;
        loop {
            let params = OptimizerParams {
                seed: options.params.seed.wrapping_add(runs as u64),
                ..options.params.clone()
            };
            let outcome = optimize(options.algorithm, &cached, &bounds, &params);
            runs += 1;
            // a rerun that sees only infeasible cells is not fatal once a best exists
            match outcome {
                Ok(r) => {
                    let floor = best.as_ref().map_or(f64::INFINITY, |b| b.1);
                    trace
                        .best_fitness_per_iteration
                        .extend(r.trace.best_fitness_per_iteration.iter().map(|f| f.min(floor)));
                    trace.evaluations += r.trace.evaluations;
                    trace.gwo_iterations += r.trace.gwo_iterations;
                    trace.woa_iterations += r.trace.woa_iterations;
                    if r.best_fitness < floor {
                        best = Some((r.best_position, r.best_fitness));
                    }
                }
                Err(OptimError::DegenerateObjective) if options.budget.is_some() => {}
                Err(e) => return Err(e.into()),
            }
            let state = cached.state.lock().expect("cache lock");
            let done = match options.budget {
                None => true,
                Some(b) => state.charged >= b || state.losses.len() >= space.cells() || runs >= MAX_RUNS,
            };
            if done {
                break;
            }
        }
        let (position, _) = best.ok_or(OptimError::DegenerateObjective)?;
        trace.best_position = position.clone();
        Ok((position, trace, runs))
    };
    let (position, trace, runs) = match options.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| TuneError::Space(format!("cannot start {n} workers: {e}")))?
            .install(search),
        None => search(),
    }?;
    let state = cached.state.into_inner().expect("cache lock");
    let best = space.decode(&position)?;
    Ok(TuningResult {
        algorithm: options.algorithm,
        best_loss: state.losses[&best.indices],
        best,
        trace,
        log: state.log,
        cache_hits: state.hits,
        cache_misses: state.misses,
        budget_used: state.charged,
        over_budget: state.over_budget,
        runs,
    })
}
