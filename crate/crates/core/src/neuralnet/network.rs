//! The CNN-LSTM forecaster: conv -> max-pool -> flatten -> repeat -> LSTM -> dense.
//!
//! Weight layout (row-major):
//!
//! | block        | shape                                  |
//! |--------------|----------------------------------------|
//! | `conv_w`     | `(n_filters, kernel_size, n_features)` |
//! | `conv_b`     | `(n_filters)`                          |
//! | LSTM gate W  | `(lstm_units, lstm_units + flat_len)`  |
//! | LSTM gate b  | `(lstm_units)`                         |
//! | `dense_w`    | `(horizon, lstm_units)`                |
//! | `dense_b`    | `(horizon)`                            |
//!
//! where `flat_len = floor((lookback - kernel_size + 1) / pool_size) * n_filters`.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::layers::{conv1d_preactivation, conv_output_size, maxpool1d_with_argmax, Activation};
use super::lstm::{self, LstmState, LstmWeights, StepCache};
use super::{NetError, Result, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub lookback: usize,
    pub n_features: usize,
    pub horizon: usize,
    pub n_filters: usize,
    pub kernel_size: usize,
    pub pool_size: usize,
    pub lstm_units: usize,
    pub repeat_steps: usize,
    pub conv_activation: Activation,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            lookback: 7,
            n_features: 1,
            horizon: 1,
            n_filters: 32,
            kernel_size: 3,
            pool_size: 2,
            lstm_units: 10,
            repeat_steps: 3,
            conv_activation: Activation::Relu,
            seed: 0,
        }
    }
}

impl NetworkConfig {
    /// Checks the shape algebra and returns the flattened feature length.
    pub fn validate(&self) -> Result<usize> {
        let positive = [
            ("lookback", self.lookback),
            ("n_features", self.n_features),
            ("horizon", self.horizon),
            ("n_filters", self.n_filters),
            ("kernel_size", self.kernel_size),
            ("pool_size", self.pool_size),
            ("lstm_units", self.lstm_units),
            ("repeat_steps", self.repeat_steps),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(NetError::Config(format!("{name} must be positive")));
        }
        if self.kernel_size > self.lookback {
            return Err(NetError::Config(format!(
                "kernel size {} exceeds lookback {}",
                self.kernel_size, self.lookback
            )));
        }
        let conv_len = conv_output_size(self.lookback, self.kernel_size, 0, 1)?;
        let pooled = conv_len / self.pool_size;
        if pooled == 0 {
            return Err(NetError::Config(format!(
                "pool size {} leaves no output from a convolution of length {}",
                self.pool_size, conv_len
            )));
        }
        Ok(pooled * self.n_filters)
    }

    pub fn flat_len(&self) -> Result<usize> {
        self.validate()
    }
}

/// Every trainable parameter. Also used to hold gradients of the same shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub conv_w: Vec<f64>,
    pub conv_b: Vec<f64>,
    pub lstm: LstmWeights,
    pub dense_w: Vec<f64>,
    pub dense_b: Vec<f64>,
}

pub const BLOCK_NAMES: [&str; 12] = [
    "conv_w",
    "conv_b",
    "lstm.forget_w",
    "lstm.forget_b",
    "lstm.input_w",
    "lstm.input_b",
    "lstm.candidate_w",
    "lstm.candidate_b",
    "lstm.output_w",
    "lstm.output_b",
    "dense_w",
    "dense_b",
];

impl Weights {
    pub fn zeros(config: &NetworkConfig) -> Result<Weights> {
        let flat = config.validate()?;
        Ok(Weights {
            conv_w: vec![0.0; config.n_filters * config.kernel_size * config.n_features],
            conv_b: vec![0.0; config.n_filters],
            lstm: LstmWeights::zeros(config.lstm_units, flat),
            dense_w: vec![0.0; config.horizon * config.lstm_units],
            dense_b: vec![0.0; config.horizon],
        })
    }

    /// Glorot-uniform conv/dense kernels, `±sqrt(1/units)` LSTM kernels, zero biases.
    pub fn init(config: &NetworkConfig) -> Result<Weights> {
        let mut w = Weights::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let k = config.kernel_size;
        let conv_limit = (6.0 / (k * config.n_features + k * config.n_filters) as f64).sqrt();
        let lstm_limit = (1.0 / config.lstm_units as f64).sqrt();
        let dense_limit = (6.0 / (config.lstm_units + config.horizon) as f64).sqrt();
        let mut fill = |v: &mut Vec<f64>, limit: f64| {
            v.iter_mut().for_each(|x| *x = rng.random_range(-limit..limit));
        };
        fill(&mut w.conv_w, conv_limit);
        fill(&mut w.lstm.forget_w, lstm_limit);
        fill(&mut w.lstm.input_w, lstm_limit);
        fill(&mut w.lstm.candidate_w, lstm_limit);
        fill(&mut w.lstm.output_w, lstm_limit);
        fill(&mut w.dense_w, dense_limit);
        Ok(w)
    }

    pub fn zeros_like(&self) -> Weights {
        let mut z = self.clone();
        z.blocks_mut().into_iter().for_each(|b| b.iter_mut().for_each(|x| *x = 0.0));
        z
    }

    /// Parameter blocks in [`BLOCK_NAMES`] order.
    pub fn blocks(&self) -> [&Vec<f64>; 12] {
        let l = &self.lstm;
        [
            &self.conv_w,
            &self.conv_b,
            &l.forget_w,
            &l.forget_b,
            &l.input_w,
            &l.input_b,
            &l.candidate_w,
            &l.candidate_b,
            &l.output_w,
            &l.output_b,
            &self.dense_w,
            &self.dense_b,
        ]
    }

    pub fn blocks_mut(&mut self) -> [&mut Vec<f64>; 12] {
        let l = &mut self.lstm;
        [
            &mut self.conv_w,
            &mut self.conv_b,
            &mut l.forget_w,
            &mut l.forget_b,
            &mut l.input_w,
            &mut l.input_b,
            &mut l.candidate_w,
            &mut l.candidate_b,
            &mut l.output_w,
            &mut l.output_b,
            &mut self.dense_w,
            &mut self.dense_b,
        ]
    }

    pub fn len(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|x| x.is_finite()))
    }
}

#[derive(Debug)]
struct ForwardCache {
    conv_pre: Vec<f64>,
    conv_out: Vec<f64>,
    argmax: Vec<usize>,
    steps: Vec<StepCache>,
    hidden: Vec<f64>,
    output: Vec<f64>,
}

/// A CNN-LSTM with its configuration, parameters and training history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub config: NetworkConfig,
    pub weights: Weights,
    pub loss_history: Vec<f64>,
}

/// Alias used where the network is known to have been through [`super::train`].
pub type TrainedNetwork = Network;

impl Network {
    /// Freshly initialized network seeded by `config.seed`.
    pub fn new(config: NetworkConfig) -> Result<Network> {
        let weights = Weights::init(&config)?;
        Ok(Network {
            config,
            weights,
            loss_history: Vec::new(),
        })
    }

    pub fn with_weights(config: NetworkConfig, weights: Weights) -> Result<Network> {
        let expected = Weights::zeros(&config)?;
        let shapes_match = expected
            .blocks()
            .iter()
            .zip(weights.blocks().iter())
            .all(|(a, b)| a.len() == b.len())
            && expected.lstm.units == weights.lstm.units
            && expected.lstm.input_dim == weights.lstm.input_dim;
        if !shapes_match {
            return Err(NetError::Shape("weights do not match the configuration".into()));
        }
        Ok(Network {
            config,
            weights,
            loss_history: Vec::new(),
        })
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        let c = &self.config;
        if input.shape() != [c.lookback, c.n_features] {
            return Err(NetError::Shape(format!(
                "input shape {:?}, network expects [{}, {}]",
                input.shape(),
                c.lookback,
                c.n_features
            )));
        }
        Ok(())
    }

    pub fn forward(&self, input: &Tensor) -> Result<Vec<f64>> {
        self.check_input(input)?;
        Ok(self.forward_cached(input)?.output)
    }

    fn forward_cached(&self, input: &Tensor) -> Result<ForwardCache> {
        let c = &self.config;
        let w = &self.weights;
        let pre = conv1d_preactivation(input, &w.conv_w, &w.conv_b, c.kernel_size)?;
        let conv_shape = pre.shape().to_vec();
        let conv_pre = pre.into_data();
        let conv_out: Vec<f64> = conv_pre.iter().map(|&x| c.conv_activation.apply(x)).collect();
        let activated = Tensor::new(conv_shape, conv_out)?;
        let (pooled, argmax) = maxpool1d_with_argmax(&activated, c.pool_size)?;
        let flat = pooled.into_data();

        let mut state = LstmState::zeros(c.lstm_units);
        let mut steps = Vec::with_capacity(c.repeat_steps);
        for _ in 0..c.repeat_steps {
            let (next, cache) = lstm::step(&flat, &state, &w.lstm);
            steps.push(cache);
            state = next;
        }
        let hidden = state.hidden;
        let output = (0..c.horizon)
            .map(|h| {
                let row = &w.dense_w[h * c.lstm_units..(h + 1) * c.lstm_units];
                w.dense_b[h] + row.iter().zip(&hidden).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        Ok(ForwardCache {
            conv_pre,
            conv_out: activated.into_data(),
            argmax,
            steps,
            hidden,
            output,
        })
    }

    /// MSE loss of one sample and the gradient of that loss for every parameter.
    pub fn gradients(&self, input: &Tensor, target: &[f64]) -> Result<(f64, Weights)> {
        self.check_input(input)?;
        let c = &self.config;
        if target.len() != c.horizon {
            return Err(NetError::Shape(format!(
                "target has {} values, horizon is {}",
                target.len(),
                c.horizon
            )));
        }
        let w = &self.weights;
        let cache = self.forward_cached(input)?;
        let mut grad = w.zeros_like();

        let n = c.horizon as f64;
        let d_out: Vec<f64> = cache
            .output
            .iter()
            .zip(target)
            .map(|(y, t)| 2.0 * (y - t) / n)
            .collect();
        let loss = cache
            .output
            .iter()
            .zip(target)
            .map(|(y, t)| (y - t) * (y - t))
            .sum::<f64>()
            / n;

        // dense head
        let units = c.lstm_units;
        let mut d_hidden = vec![0.0; units];
        for (h, &d) in d_out.iter().enumerate() {
            grad.dense_b[h] += d;
            for u in 0..units {
                grad.dense_w[h * units + u] += d * cache.hidden[u];
                d_hidden[u] += d * w.dense_w[h * units + u];
            }
        }

        // backprop through time; every step saw the same flattened input
        let mut d_cell = vec![0.0; units];
        let mut d_flat = vec![0.0; w.lstm.input_dim];
        for step in cache.steps.iter().rev() {
            let (dh_prev, dc_prev, dx) = lstm::step_backward(step, &w.lstm, &d_hidden, &d_cell, &mut grad.lstm);
            d_hidden = dh_prev;
            d_cell = dc_prev;
            d_flat.iter_mut().zip(&dx).for_each(|(a, b)| *a += b);
        }

        // unpool: route each pooled gradient to its argmax, then through the activation
        let mut d_conv = vec![0.0; cache.conv_out.len()];
        for (&src, &d) in cache.argmax.iter().zip(&d_flat) {
            d_conv[src] += d;
        }
        let filters = c.n_filters;
        let channels = c.n_features;
        let k = c.kernel_size;
        let x = input.data();
        for (idx, d) in d_conv.iter_mut().enumerate() {
            *d *= c.conv_activation.derivative(cache.conv_pre[idx], cache.conv_out[idx]);
        }
        let conv_len = cache.conv_out.len() / filters;
        for i in 0..conv_len {
            let window = &x[i * channels..(i + k) * channels];
            for f in 0..filters {
                let d = d_conv[i * filters + f];
                if d == 0.0 {
                    continue;
                }
                grad.conv_b[f] += d;
                let gw = &mut grad.conv_w[f * k * channels..(f + 1) * k * channels];
                gw.iter_mut().zip(window).for_each(|(g, xv)| *g += d * xv);
            }
        }
        Ok((loss, grad))
    }

    /// SHA-256 over the configuration and the bit patterns of every weight.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.config).expect("config serializes"));
        for block in self.weights.blocks() {
            for x in block {
                h.update(x.to_bits().to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(&ModelFile {
            format: MODEL_FORMAT.to_string(),
            network: self.clone(),
        })
        .map_err(|e| NetError::Serialization(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Network> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| NetError::Serialization(e.to_string()))?;
        if file.format != MODEL_FORMAT {
            return Err(NetError::Serialization(format!(
                "unsupported model format `{}`",
                file.format
            )));
        }
        let Network {
            config,
            weights,
            loss_history,
        } = file.network;
        let mut net = Network::with_weights(config, weights)?;
        net.loss_history = loss_history;
        Ok(net)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| NetError::Serialization(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Network> {
        let text = std::fs::read_to_string(path).map_err(|e| NetError::Serialization(e.to_string()))?;
        Network::from_json(&text)
    }
}

/// Model files store every weight as a shortest round-trip decimal, which
/// parses back to the identical `f64`.
pub const MODEL_FORMAT: &str = "epiforecast-cnn-lstm/1";

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    network: Network,
}

pub fn network_forward(input: &Tensor, net: &Network) -> Result<Vec<f64>> {
    net.forward(input)
}

pub fn compute_gradients(net: &Network, input: &Tensor, target: &[f64]) -> Result<Weights> {
    net.gradients(input, target).map(|(_, g)| g)
}
