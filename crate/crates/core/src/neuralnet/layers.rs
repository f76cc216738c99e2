//! Convolution, pooling and activation primitives over `(time, channels)` tensors.

use serde::{Deserialize, Serialize};

use super::{NetError, Result, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the pre-activation `x` and output `y`.
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "identity" | "linear" => Ok(Activation::Identity),
            other => Err(format!("unknown activation `{other}`")),
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Output length of a convolution: `floor((W - F + 2P) / S) + 1`.
pub fn conv_output_size(input_len: usize, kernel: usize, padding: usize, stride: usize) -> Result<usize> {
    if stride == 0 {
        return Err(NetError::Shape("stride must be at least 1".into()));
    }
    let padded = input_len + 2 * padding;
    if kernel == 0 || kernel > padded {
        return Err(NetError::Shape(format!(
            "kernel {kernel} does not fit padded input of length {padded}"
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

/// Valid, stride-1 convolution over time with kernels spanning all input channels.
///
/// `weights` is laid out `[filter][tap][channel]`; returns the activated
/// output of shape `(L - K + 1, n_filters)`.
pub fn conv1d_forward(
    input: &Tensor,
    weights: &[f64],
    bias: &[f64],
    kernel: usize,
    activation: Activation,
) -> Result<Tensor> {
    let pre = conv1d_preactivation(input, weights, bias, kernel)?;
    let shape = pre.shape().to_vec();
    let data = pre.into_data().into_iter().map(|x| activation.apply(x)).collect();
    Tensor::new(shape, data)
}

pub(crate) fn conv1d_preactivation(
    input: &Tensor,
    weights: &[f64],
    bias: &[f64],
    kernel: usize,
) -> Result<Tensor> {
    let (len, channels) = (input.rows(), input.cols());
    let filters = bias.len();
    if filters == 0 || weights.len() != filters * kernel * channels {
        return Err(NetError::Shape(format!(
            "conv weights hold {} values, expected {} filters x {} taps x {} channels",
            weights.len(),
            filters,
            kernel,
            channels
        )));
    }
    let out_len = conv_output_size(len, kernel, 0, 1)?;
    let x = input.data();
    let mut out = vec![0.0; out_len * filters];
    for i in 0..out_len {
        // the window rows [i, i + kernel) are contiguous in row-major order
        let window = &x[i * channels..(i + kernel) * channels];
        for f in 0..filters {
            let w = &weights[f * kernel * channels..(f + 1) * kernel * channels];
            let acc: f64 = w.iter().zip(window).map(|(a, b)| a * b).sum();
            out[i * filters + f] = acc + bias[f];
        }
    }
    Tensor::new(vec![out_len, filters], out)
}

/// Non-overlapping max pooling with stride `pool`; a trailing remainder
/// shorter than `pool` is dropped.
pub fn maxpool1d_forward(input: &Tensor, pool: usize) -> Result<Tensor> {
    maxpool1d_with_argmax(input, pool).map(|(t, _)| t)
}

/// Pooling that also reports, per output cell, the flat input index of the maximum.
pub(crate) fn maxpool1d_with_argmax(input: &Tensor, pool: usize) -> Result<(Tensor, Vec<usize>)> {
    if pool == 0 {
        return Err(NetError::Shape("pool size must be at least 1".into()));
    }
    let (len, channels) = (input.rows(), input.cols());
    let out_len = len / pool;
    if out_len == 0 {
        return Err(NetError::Shape(format!(
            "pool size {pool} exceeds input length {len}"
        )));
    }
    let x = input.data();
    let mut out = vec![0.0; out_len * channels];
    let mut argmax = vec![0; out_len * channels];
    for i in 0..out_len {
        for c in 0..channels {
            let mut best = i * pool * channels + c;
            for r in i * pool + 1..(i + 1) * pool {
                let idx = r * channels + c;
                if x[idx] > x[best] {
                    best = idx;
                }
            }
            out[i * channels + c] = x[best];
            argmax[i * channels + c] = best;
        }
    }
    Ok((Tensor::new(vec![out_len, channels], out)?, argmax))
}
