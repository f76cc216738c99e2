//! LSTM cell with gates computed on the concatenation `[d_{t-1}, x_t]`.

use serde::{Deserialize, Serialize};

use super::layers::sigmoid;
use super::{NetError, Result};

/// Cell state `c` and hidden output `d` carried between steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmState {
    pub cell: Vec<f64>,
    pub hidden: Vec<f64>,
}

impl LstmState {
    pub fn zeros(units: usize) -> LstmState {
        LstmState {
            cell: vec![0.0; units],
            hidden: vec![0.0; units],
        }
    }
}

/// Gate weights, each `(units, units + input_dim)` row-major, with the
/// recurrent block occupying the first `units` columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmWeights {
    pub units: usize,
    pub input_dim: usize,
    pub forget_w: Vec<f64>,
    pub forget_b: Vec<f64>,
    pub input_w: Vec<f64>,
    pub input_b: Vec<f64>,
    pub candidate_w: Vec<f64>,
    pub candidate_b: Vec<f64>,
    pub output_w: Vec<f64>,
    pub output_b: Vec<f64>,
}

impl LstmWeights {
    pub fn zeros(units: usize, input_dim: usize) -> LstmWeights {
        let w = vec![0.0; units * (units + input_dim)];
        let b = vec![0.0; units];
        LstmWeights {
            units,
            input_dim,
            forget_w: w.clone(),
            forget_b: b.clone(),
            input_w: w.clone(),
            input_b: b.clone(),
            candidate_w: w.clone(),
            candidate_b: b.clone(),
            output_w: w,
            output_b: b,
        }
    }

    pub fn width(&self) -> usize {
        self.units + self.input_dim
    }

    fn check(&self) -> Result<()> {
        let w = self.units * self.width();
        let ok = [&self.forget_w, &self.input_w, &self.candidate_w, &self.output_w]
            .iter()
            .all(|m| m.len() == w)
            && [&self.forget_b, &self.input_b, &self.candidate_b, &self.output_b]
                .iter()
                .all(|b| b.len() == self.units);
        if ok {
            Ok(())
        } else {
            Err(NetError::Shape(format!(
                "LSTM weights inconsistent with {} units x {} inputs",
                self.units, self.input_dim
            )))
        }
    }
}

/// Intermediate values of one step, kept for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct StepCache {
    pub z: Vec<f64>,
    pub forget: Vec<f64>,
    pub input: Vec<f64>,
    pub candidate: Vec<f64>,
    pub output: Vec<f64>,
    pub cell_prev: Vec<f64>,
    pub cell_tanh: Vec<f64>,
}

fn affine(w: &[f64], b: &[f64], z: &[f64]) -> Vec<f64> {
    let width = z.len();
    b.iter()
        .enumerate()
        .map(|(u, &bias)| {
            let row = &w[u * width..(u + 1) * width];
            bias + row.iter().zip(z).map(|(a, x)| a * x).sum::<f64>()
        })
        .collect()
}

pub(crate) fn step(x: &[f64], prev: &LstmState, w: &LstmWeights) -> (LstmState, StepCache) {
    let mut z = Vec::with_capacity(w.width());
    z.extend_from_slice(&prev.hidden);
    z.extend_from_slice(x);

    let forget: Vec<f64> = affine(&w.forget_w, &w.forget_b, &z).into_iter().map(sigmoid).collect();
    let input: Vec<f64> = affine(&w.input_w, &w.input_b, &z).into_iter().map(sigmoid).collect();
    let candidate: Vec<f64> = affine(&w.candidate_w, &w.candidate_b, &z)
        .into_iter()
        .map(f64::tanh)
        .collect();
    let output: Vec<f64> = affine(&w.output_w, &w.output_b, &z).into_iter().map(sigmoid).collect();

    let cell: Vec<f64> = (0..w.units)
        .map(|u| forget[u] * prev.cell[u] + input[u] * candidate[u])
        .collect();
    let cell_tanh: Vec<f64> = cell.iter().map(|c| c.tanh()).collect();
    let hidden = output.iter().zip(&cell_tanh).map(|(o, t)| o * t).collect();

    let cache = StepCache {
        z,
        forget,
        input,
        candidate,
        output,
        cell_prev: prev.cell.clone(),
        cell_tanh,
    };
    (LstmState { cell, hidden }, cache)
}

/// One LSTM update. Returns the output `d_t` and the next state `(C_t, d_t)`.
pub fn lstm_cell_forward(x: &[f64], prev: &LstmState, w: &LstmWeights) -> Result<(Vec<f64>, LstmState)> {
    w.check()?;
    if x.len() != w.input_dim || prev.cell.len() != w.units || prev.hidden.len() != w.units {
        return Err(NetError::Shape(format!(
            "LSTM step got input {} / state {}+{}, expected {} / {}",
            x.len(),
            prev.cell.len(),
            prev.hidden.len(),
            w.input_dim,
            w.units
        )));
    }
    let (next, _) = step(x, prev, w);
    Ok((next.hidden.clone(), next))
}

/// Accumulates gradients of one step into `grad`.
///
/// `d_hidden` and `d_cell` are the loss gradients flowing into this step's
/// outputs; returns the gradients for the previous hidden state, previous
/// cell state, and this step's input.
pub(crate) fn step_backward(
    cache: &StepCache,
    w: &LstmWeights,
    d_hidden: &[f64],
    d_cell: &[f64],
    grad: &mut LstmWeights,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let units = w.units;
    let width = w.width();
    let mut dz = vec![0.0; width];
    let mut d_cell_prev = vec![0.0; units];

    let gates: [(&[f64], &mut Vec<f64>, &mut Vec<f64>); 4] = [
        (&w.forget_w, &mut grad.forget_w, &mut grad.forget_b),
        (&w.input_w, &mut grad.input_w, &mut grad.input_b),
        (&w.candidate_w, &mut grad.candidate_w, &mut grad.candidate_b),
        (&w.output_w, &mut grad.output_w, &mut grad.output_b),
    ];
    let mut pre = [vec![0.0; units], vec![0.0; units], vec![0.0; units], vec![0.0; units]];
    for u in 0..units {
        let (f, i, g, o) = (cache.forget[u], cache.input[u], cache.candidate[u], cache.output[u]);
        let t = cache.cell_tanh[u];
        let dc = d_cell[u] + d_hidden[u] * o * (1.0 - t * t);
        pre[0][u] = dc * cache.cell_prev[u] * f * (1.0 - f);
        pre[1][u] = dc * g * i * (1.0 - i);
        pre[2][u] = dc * i * (1.0 - g * g);
        pre[3][u] = d_hidden[u] * t * o * (1.0 - o);
        d_cell_prev[u] = dc * f;
    }
    for ((weights, gw, gb), da) in gates.into_iter().zip(&pre) {
        for u in 0..units {
            let d = da[u];
            if d == 0.0 {
                continue;
            }
            gb[u] += d;
            let row = u * width;
            for k in 0..width {
                gw[row + k] += d * cache.z[k];
                dz[k] += d * weights[row + k];
            }
        }
    }
    let dx = dz.split_off(units);
    (dz, d_cell_prev, dx)
}
