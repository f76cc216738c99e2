mod common;

use common::*;
use epiforecast::neuralnet::{
    conv1d_forward, lstm_cell_forward, maxpool1d_forward, Activation, Network, NetworkConfig, Tensor,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn analytic_gradients_match_finite_differences() {
    for seed in 0..50 {
        let (net, x, y) = tiny_instance(seed);
        let (_, analytic) = net.gradients(&x, &y).unwrap();
        let numeric = finite_difference_gradients(&net, &x, &y, 1e-5);
        let err = max_relative_error(&analytic, &numeric);
        assert!(err < 1e-4, "seed {seed}: max relative error {err:e}");
    }
}

#[test]
fn tanh_conv_and_multi_output_gradients() {
    for seed in 0..10 {
        let cfg = NetworkConfig {
            lookback: 8,
            n_features: 2,
            horizon: 3,
            n_filters: 3,
            kernel_size: 2,
            pool_size: 3,
            lstm_units: 5,
            repeat_steps: 4,
            conv_activation: Activation::Tanh,
            seed,
        };
        let net = Network::new(cfg).unwrap();
        let rows: Vec<Vec<f64>> = (0..8)
            .map(|i| vec![(i as f64 * 0.7 + seed as f64).sin(), (i as f64 * 0.3).cos()])
            .collect();
        let x = Tensor::from_rows(&rows).unwrap();
        let y = [0.2, -0.1, 0.5];
        let (_, analytic) = net.gradients(&x, &y).unwrap();
        let numeric = finite_difference_gradients(&net, &x, &y, 1e-5);
        let err = max_relative_error(&analytic, &numeric);
        assert!(err < 1e-4, "seed {seed}: max relative error {err:e}");
    }
}

#[test]
fn lstm_matches_scalar_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for draw in 0..1000 {
        let units = 1 + draw % 5;
        let input_dim = 1 + draw % 7;
        let (w, state, x) = random_lstm(&mut rng, units, input_dim);
        let (d, next) = lstm_cell_forward(&x, &state, &w).unwrap();
        let (cell, hidden) = lstm_scalar_oracle(&x, &state, &w);
        for u in 0..units {
            assert!((next.cell[u] - cell[u]).abs() <= 1e-12);
            assert!((d[u] - hidden[u]).abs() <= 1e-12);
            assert!(d[u].abs() < 1.0);
        }
    }
}

/// Layer-by-layer composition written against the public layer functions
/// plus a hand-rolled dense head.
fn composed_forward(net: &Network, x: &Tensor) -> Vec<f64> {
    let c = &net.config;
    let w = &net.weights;
    let conv = conv1d_forward(x, &w.conv_w, &w.conv_b, c.kernel_size, c.conv_activation).unwrap();
    let pooled = maxpool1d_forward(&conv, c.pool_size).unwrap();
    let flat = pooled.data().to_vec();
    let mut state = epiforecast::neuralnet::LstmState::zeros(c.lstm_units);
    let mut d = Vec::new();
    for _ in 0..c.repeat_steps {
        let (out, next) = lstm_cell_forward(&flat, &state, &w.lstm).unwrap();
        d = out;
        state = next;
    }
    (0..c.horizon)
        .map(|h| {
            let mut acc = w.dense_b[h];
            for u in 0..c.lstm_units {
                acc += w.dense_w[h * c.lstm_units + u] * d[u];
            }
            acc
        })
        .collect()
}

#[test]
fn forward_matches_layer_composition() {
    let samples = [
        [0.1, 0.5, 0.2, 0.9, 0.4, 0.3],
        [1.0, 0.0, 1.0, 0.0, 1.0, 0.0],
        [0.3, 0.3, 0.3, 0.3, 0.3, 0.31],
    ];
    for seed in [1, 2, 3] {
        let (net, _, _) = tiny_instance(seed);
        for s in &samples {
            let x = Tensor::column(s).unwrap();
            let a = net.forward(&x).unwrap();
            let b = composed_forward(&net, &x);
            assert!((a[0] - b[0]).abs() <= 1e-12);
        }
    }
}

#[test]
fn lstm_outputs_stay_bounded_for_extreme_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let (w, state, mut x) = random_lstm(&mut rng, 3, 4);
        x.iter_mut().for_each(|v| *v *= 1e3);
        let (d, next) = lstm_cell_forward(&x, &state, &w).unwrap();
        assert!(d.iter().all(|v| v.abs() <= 1.0 && v.is_finite()));
        assert!(next.cell.iter().all(|v| v.is_finite()));
    }
}
