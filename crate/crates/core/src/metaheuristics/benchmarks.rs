//! Standard continuous test functions, all with global minimum 0.
//!
//! | name         | definition                                                        | default box        | minimizer |
//! |--------------|-------------------------------------------------------------------|--------------------|-----------|
//! | `sphere`     | `sum x_i^2`                                                       | `[-5.12, 5.12]^d`  | origin    |
//! | `rastrigin`  | `10 d + sum (x_i^2 - 10 cos(2 pi x_i))`                           | `[-5.12, 5.12]^d`  | origin    |
//! | `rosenbrock` | `sum_{i<d} 100 (x_{i+1} - x_i^2)^2 + (1 - x_i)^2`                 | `[-5, 10]^d`       | all ones  |
//! | `ackley`     | `-20 exp(-0.2 sqrt(mean x^2)) - exp(mean cos(2 pi x)) + 20 + e`   | `[-32.768, 32.768]^d` | origin |

use std::f64::consts::{E, PI};
use std::str::FromStr;

use super::SearchBounds;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Benchmark {
    Sphere,
    Rastrigin,
    Rosenbrock,
    Ackley,
}

impl Benchmark {
    pub const ALL: [Benchmark; 4] = [
        Benchmark::Sphere,
        Benchmark::Rastrigin,
        Benchmark::Rosenbrock,
        Benchmark::Ackley,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Benchmark::Sphere => "sphere",
            Benchmark::Rastrigin => "rastrigin",
            Benchmark::Rosenbrock => "rosenbrock",
            Benchmark::Ackley => "ackley",
        }
    }

    pub fn evaluate(self, x: &[f64]) -> f64 {
        match self {
            Benchmark::Sphere => sphere(x),
            Benchmark::Rastrigin => rastrigin(x),
            Benchmark::Rosenbrock => rosenbrock(x),
            Benchmark::Ackley => ackley(x),
        }
    }

    pub fn default_bounds(self, dim: usize) -> SearchBounds {
        let (lo, hi) = match self {
            Benchmark::Sphere | Benchmark::Rastrigin => (-5.12, 5.12),
            Benchmark::Rosenbrock => (-5.0, 10.0),
            Benchmark::Ackley => (-32.768, 32.768),
        };
        SearchBounds::uniform(dim, lo, hi).expect("benchmark box is valid")
    }

    pub fn minimizer(self, dim: usize) -> Vec<f64> {
        match self {
            Benchmark::Rosenbrock => vec![1.0; dim],
            _ => vec![0.0; dim],
        }
    }
}

impl FromStr for Benchmark {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Benchmark::ALL
            .into_iter()
            .find(|b| b.name() == s.to_ascii_lowercase())
            .ok_or_else(|| format!("unknown benchmark `{s}` (expected sphere, rastrigin, rosenbrock or ackley)"))
    }
}

pub fn sphere(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub fn rastrigin(x: &[f64]) -> f64 {
    10.0 * x.len() as f64 + x.iter().map(|v| v * v - 10.0 * (2.0 * PI * v).cos()).sum::<f64>()
}

pub fn rosenbrock(x: &[f64]) -> f64 {
    x.windows(2)
        .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
        .sum()
}

pub fn ackley(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let sq = x.iter().map(|v| v * v).sum::<f64>() / n;
    let cs = x.iter().map(|v| (2.0 * PI * v).cos()).sum::<f64>() / n;
    -20.0 * (-0.2 * sq.sqrt()).exp() - cs.exp() + 20.0 + E
}
