//! Independent reference implementations shared by the integration suites.
//! None of these call into the code paths they are used to check.

#![allow(dead_code)]

use epiforecast::neuralnet::{LstmState, LstmWeights, Network, NetworkConfig, Tensor, Weights};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Relative-error floor: gradients both smaller than this are compared absolutely.
pub const GRAD_FLOOR: f64 = 1e-6;

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(GRAD_FLOOR)
}

pub fn tiny_config(seed: u64) -> NetworkConfig {
    NetworkConfig {
        lookback: 6,
        n_features: 1,
        horizon: 1,
        n_filters: 2,
        kernel_size: 3,
        pool_size: 2,
        lstm_units: 4,
        repeat_steps: 3,
        seed,
        ..NetworkConfig::default()
    }
}

/// A seeded tiny network with non-zero biases plus a random input/target pair.
pub fn tiny_instance(seed: u64) -> (Network, Tensor, Vec<f64>) {
    let cfg = tiny_config(seed);
    let mut net = Network::new(cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    for block in [
        &mut net.weights.conv_b,
        &mut net.weights.lstm.forget_b,
        &mut net.weights.lstm.input_b,
        &mut net.weights.lstm.candidate_b,
        &mut net.weights.lstm.output_b,
        &mut net.weights.dense_b,
    ] {
        block.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
    }
    let input: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..1.0)).collect();
    let target = vec![rng.random_range(0.0..1.0)];
    (net, Tensor::column(&input).unwrap(), target)
}

fn mse(net: &Network, input: &Tensor, target: &[f64]) -> f64 {
    let y = net.forward(input).unwrap();
    y.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64
}

/// Central finite differences of the MSE with respect to every parameter.
pub fn finite_difference_gradients(net: &Network, input: &Tensor, target: &[f64], eps: f64) -> Weights {
    let mut grad = net.weights.zeros_like();
    let mut probe = net.clone();
    let block_lengths: Vec<usize> = net.weights.blocks().iter().map(|b| b.len()).collect();
    for (b, &len) in block_lengths.iter().enumerate() {
        for i in 0..len {
            let orig = probe.weights.blocks()[b][i];
            probe.weights.blocks_mut()[b][i] = orig + eps;
            let up = mse(&probe, input, target);
            probe.weights.blocks_mut()[b][i] = orig - eps;
            let down = mse(&probe, input, target);
            probe.weights.blocks_mut()[b][i] = orig;
            grad.blocks_mut()[b][i] = (up - down) / (2.0 * eps);
        }
    }
    grad
}

/// Largest relative error between two gradient sets.
pub fn max_relative_error(a: &Weights, b: &Weights) -> f64 {
    a.blocks()
        .iter()
        .zip(b.blocks().iter())
        .flat_map(|(x, y)| x.iter().zip(y.iter()).map(|(p, q)| relative_error(*p, *q)))
        .fold(0.0, f64::max)
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// The LSTM cell written as per-element loops over each gate.
pub fn lstm_scalar_oracle(x: &[f64], prev: &LstmState, w: &LstmWeights) -> (Vec<f64>, Vec<f64>) {
    let units = w.units;
    let width = units + x.len();
    let concat = |k: usize| if k < units { prev.hidden[k] } else { x[k - units] };
    let mut cell = vec![0.0; units];
    let mut hidden = vec![0.0; units];
    for u in 0..units {
        let mut f = w.forget_b[u];
        let mut i = w.input_b[u];
        let mut g = w.candidate_b[u];
        let mut o = w.output_b[u];
        for k in 0..width {
            let z = concat(k);
            f += w.forget_w[u * width + k] * z;
            i += w.input_w[u * width + k] * z;
            g += w.candidate_w[u * width + k] * z;
            o += w.output_w[u * width + k] * z;
        }
        let f = logistic(f);
        let i = logistic(i);
        let g = g.tanh();
        let o = logistic(o);
        cell[u] = f * prev.cell[u] + i * g;
        hidden[u] = o * cell[u].tanh();
    }
    (cell, hidden)
}

pub fn random_lstm(rng: &mut ChaCha8Rng, units: usize, input_dim: usize) -> (LstmWeights, LstmState, Vec<f64>) {
    let mut w = LstmWeights::zeros(units, input_dim);
    for m in [
        &mut w.forget_w,
        &mut w.forget_b,
        &mut w.input_w,
        &mut w.input_b,
        &mut w.candidate_w,
        &mut w.candidate_b,
        &mut w.output_w,
        &mut w.output_b,
    ] {
        m.iter_mut().for_each(|v| *v = rng.random_range(-2.0..2.0));
    }
    let state = LstmState {
        cell: (0..units).map(|_| rng.random_range(-3.0..3.0)).collect(),
        hidden: (0..units).map(|_| rng.random_range(-1.0..1.0)).collect(),
    };
    let x = (0..input_dim).map(|_| rng.random_range(-5.0..5.0)).collect();
    (w, state, x)
}

/// Friedman chi-square summed term by term from raw scores, ranking each
/// row by pairwise comparison counts.
pub fn friedman_brute_force(scores: &[Vec<f64>]) -> f64 {
    let n = scores.len() as f64;
    let k = scores[0].len();
    let mut rank_sums = vec![0.0; k];
    for row in scores {
        for (j, &v) in row.iter().enumerate() {
            let below = row.iter().filter(|&&o| o < v).count() as f64;
            let ties = row.iter().filter(|&&o| o == v).count() as f64;
            rank_sums[j] += below + (ties + 1.0) / 2.0;
        }
    }
    let kf = k as f64;
    let mut sum_sq = 0.0;
    for r in &rank_sums {
        sum_sq += r * r;
    }
    12.0 / (n * kf * (kf + 1.0)) * sum_sq - 3.0 * n * (kf + 1.0)
}

pub fn sphere(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub fn rastrigin(x: &[f64]) -> f64 {
    10.0 * x.len() as f64
        + x.iter()
            .map(|v| v * v - 10.0 * (2.0 * std::f64::consts::PI * v).cos())
            .sum::<f64>()
}

/// Logistic growth curve of 500 days with Gaussian noise of 1% of its range.
pub fn noisy_logistic(seed: u64) -> Vec<f64> {
    use rand_distr::{Distribution, Normal};
    let capacity = 10_000.0;
    let clean: Vec<f64> = (0..500)
        .map(|t| capacity / (1.0 + (-(t as f64 - 250.0) / 30.0).exp()))
        .collect();
    let range = clean.iter().cloned().fold(f64::MIN, f64::max) - clean.iter().cloned().fold(f64::MAX, f64::min);
    let noise = Normal::new(0.0, 0.01 * range).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    clean.iter().map(|c| c + noise.sample(&mut rng)).collect()
}

/// `q_alpha / sqrt(2)` for the range of `k` independent standard normals,
/// from `P(range <= w) = k * int phi(z) (Phi(z + w) - Phi(z))^(k-1) dz`
/// integrated numerically and inverted by bisection.
pub fn nemenyi_q_oracle(k: usize, alpha: f64) -> f64 {
    use statrs::distribution::{Continuous, ContinuousCDF, Normal};
    let std = Normal::new(0.0, 1.0).unwrap();
    let range_cdf = |w: f64| {
        let h = 1e-3;
        let mut acc = 0.0;
        let mut z = -9.0;
        while z < 9.0 {
            let f = |z: f64| std.pdf(z) * (std.cdf(z + w) - std.cdf(z)).powi(k as i32 - 1);
            acc += h * (f(z) + 4.0 * f(z + h / 2.0) + f(z + h)) / 6.0;
            z += h;
        }
        k as f64 * acc
    };
    let (mut lo, mut hi) = (0.0, 10.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if range_cdf(mid) < 1.0 - alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi) / std::f64::consts::SQRT_2
}

pub fn chi2_quantile_oracle(df: usize, alpha: f64) -> f64 {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    ChiSquared::new(df as f64).unwrap().inverse_cdf(1.0 - alpha)
}
