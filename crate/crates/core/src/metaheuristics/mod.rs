//! Population-based minimizers over a box: grey wolf (GWO), whale (WOA),
//! the random-switching hybrid of the two, and a generational GA.
//!
//! All randomness comes from one seeded stream owned by the driver. Fitness
//! evaluations of a population are dispatched as a batch after every random
//! draw of the iteration has been made, so a parallel [`Objective`] cannot
//! perturb the stream.

pub mod benchmarks;
mod ga;
mod swarm;

use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ga::{ga_optimize, tournament_select, uniform_crossover, uniform_mutation, GeneticAlgorithm};
pub use swarm::{
    gwo, gwo_move, gwo_step, rs_gwo_woa, woa, woa_move, woa_step, Branch, GwoDraws, SwarmMode, SwarmOptimizer,
    WoaDraws,
};

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("invalid bounds: {0}")]
    Bounds(String),
    #[error("invalid optimizer parameters: {0}")]
    Params(String),
    #[error("population of {0} is too small (GWO needs at least 4 agents)")]
    PopulationTooSmall(usize),
    #[error("dimension mismatch: expected {expected}, got {found}")]
    Dimension { expected: usize, found: usize },
    #[error("every evaluation returned a non-finite fitness")]
    DegenerateObjective,
}

pub type Result<T> = std::result::Result<T, OptimError>;

/// Minimization target. Implemented for any `Fn(&[f64]) -> f64 + Sync`.
pub trait Objective: Sync {
    fn evaluate(&self, position: &[f64]) -> f64;

    /// Evaluates a batch; results are returned in input order.
    fn evaluate_batch(&self, positions: &[Vec<f64>]) -> Vec<f64> {
        positions.par_iter().map(|p| self.evaluate(p)).collect()
    }
}

impl<F> Objective for F
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    fn evaluate(&self, position: &[f64]) -> f64 {
        self(position)
    }
}

/// NaN fitness is treated as the worst possible value.
pub(crate) fn sanitize(f: f64) -> f64 {
    if f.is_nan() {
        f64::INFINITY
    } else {
        f
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchBounds {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl SearchBounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<SearchBounds> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(OptimError::Bounds(format!(
                "lower has {} entries, upper has {}",
                lower.len(),
                upper.len()
            )));
        }
        if let Some(d) = (0..lower.len()).find(|&d| !(lower[d] < upper[d]) || !lower[d].is_finite() || !upper[d].is_finite()) {
            return Err(OptimError::Bounds(format!(
                "dimension {d}: lower {} must be below upper {}",
                lower[d], upper[d]
            )));
        }
        Ok(SearchBounds { lower, upper })
    }

    /// The same interval on every dimension.
    pub fn uniform(dim: usize, lower: f64, upper: f64) -> Result<SearchBounds> {
        SearchBounds::new(vec![lower; dim], vec![upper; dim])
    }

    /// The unit hypercube `[0, 1]^dim`.
    pub fn unit(dim: usize) -> SearchBounds {
        SearchBounds::uniform(dim, 0.0, 1.0).expect("unit box is valid")
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, position: &[f64]) -> bool {
        position.len() == self.dim()
            && position
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (lo, hi))| *lo <= *x && *x <= *hi)
    }

    pub(crate) fn sample(&self, rng: &mut impl rand::Rng) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&lo, &hi)| lo + rng.random::<f64>() * (hi - lo))
            .collect()
    }
}

/// Elementwise clamp into the closed box.
pub fn clamp_to_bounds(position: &[f64], bounds: &SearchBounds) -> Vec<f64> {
    let mut p = position.to_vec();
    clamp_in_place(&mut p, bounds);
    p
}

pub(crate) fn clamp_in_place(position: &mut [f64], bounds: &SearchBounds) {
    for (x, (lo, hi)) in position.iter_mut().zip(bounds.lower.iter().zip(&bounds.upper)) {
        // NaN positions collapse to the lower bound
        *x = if x.is_nan() { *lo } else { x.clamp(*lo, *hi) };
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub position: Vec<f64>,
    pub fitness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerParams {
    pub population_size: usize,
    pub max_iterations: usize,
    pub seed: u64,
    /// Logarithmic spiral shape constant of the whale update.
    pub spiral_b: f64,
    pub ga_crossover_rate: f64,
    pub ga_mutation_rate: f64,
}

impl Default for OptimizerParams {
    fn default() -> Self {
        OptimizerParams {
            population_size: 30,
            max_iterations: 200,
            seed: 0,
            spiral_b: 1.0,
            ga_crossover_rate: 0.25,
            ga_mutation_rate: 0.25,
        }
    }
}

impl OptimizerParams {
    pub fn validate(&self) -> Result<()> {
        if self.population_size < 4 {
            return Err(OptimError::PopulationTooSmall(self.population_size));
        }
        if self.max_iterations == 0 {
            return Err(OptimError::Params("max_iterations must be at least 1".into()));
        }
        for (name, r) in [
            ("ga_crossover_rate", self.ga_crossover_rate),
            ("ga_mutation_rate", self.ga_mutation_rate),
        ] {
            if !(0.0..=1.0).contains(&r) {
                return Err(OptimError::Params(format!("{name} {r} outside [0, 1]")));
            }
        }
        if !self.spiral_b.is_finite() {
            return Err(OptimError::Params("spiral_b must be finite".into()));
        }
        Ok(())
    }
}

/// Serde adapters for fitness values: JSON has no infinity, so a
/// non-finite value is written as `null` and `null` reads back as `+inf`.
pub mod fitness_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    fn encode(v: f64) -> Option<f64> {
        v.is_finite().then_some(v)
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        encode(*v).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }

    pub mod vec {
        use super::*;

        pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
            s.collect_seq(v.iter().map(|&x| encode(x)))
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            Ok(Vec::<Option<f64>>::deserialize(d)?
                .into_iter()
                .map(|x| x.unwrap_or(f64::INFINITY))
                .collect())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OptimizationTrace {
    /// Best fitness seen so far, recorded after each iteration.
    #[serde(with = "fitness_serde::vec")]
    pub best_fitness_per_iteration: Vec<f64>,
    pub best_position: Vec<f64>,
    pub evaluations: usize,
    pub gwo_iterations: usize,
    pub woa_iterations: usize,
}

impl OptimizationTrace {
    /// Writes `iteration,best_fitness` rows, iterations counted from 1.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "iteration,best_fitness")?;
        for (i, f) in self.best_fitness_per_iteration.iter().enumerate() {
            writeln!(out, "{},{}", i + 1, f)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub best_position: Vec<f64>,
    #[serde(with = "fitness_serde")]
    pub best_fitness: f64,
    pub trace: OptimizationTrace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "rs-gwo-woa")]
    RsGwoWoa,
    #[serde(rename = "gwo")]
    Gwo,
    #[serde(rename = "woa")]
    Woa,
    #[serde(rename = "ga")]
    Ga,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::RsGwoWoa => "rs-gwo-woa",
            Algorithm::Gwo => "gwo",
            Algorithm::Woa => "woa",
            Algorithm::Ga => "ga",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "rs-gwo-woa" | "gwo-woa" => Ok(Algorithm::RsGwoWoa),
            "gwo" => Ok(Algorithm::Gwo),
            "woa" => Ok(Algorithm::Woa),
            "ga" => Ok(Algorithm::Ga),
            other => Err(format!("unknown algorithm `{other}`")),
        }
    }
}

/// Runs `algorithm` from a random initial population.
pub fn optimize<O: Objective + ?Sized>(
    algorithm: Algorithm,
    objective: &O,
    bounds: &SearchBounds,
    params: &OptimizerParams,
) -> Result<OptimizationResult> {
    match algorithm {
        Algorithm::RsGwoWoa => rs_gwo_woa(objective, bounds, params),
        Algorithm::Gwo => gwo(objective, bounds, params),
        Algorithm::Woa => woa(objective, bounds, params),
        Algorithm::Ga => ga_optimize(objective, bounds, params),
    }
}
