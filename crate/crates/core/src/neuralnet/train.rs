use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::Weights;
use super::{NetError, Network, Result, Tensor};
use crate::timeseries::WindowedSamples;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    #[default]
    Mse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub loss: LossKind,
    /// Seeds the per-epoch sample shuffle.
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            epochs: 100,
            batch_size: 1,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            loss: LossKind::Mse,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(NetError::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(NetError::Config("batch size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(NetError::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPSILON: f64 = 1e-8;

enum Stepper {
    Sgd,
    Adam { m: Weights, v: Weights, t: i32 },
}

impl Stepper {
    fn new(kind: OptimizerKind, like: &Weights) -> Stepper {
        match kind {
            OptimizerKind::Sgd => Stepper::Sgd,
            OptimizerKind::Adam => Stepper::Adam {
                m: like.zeros_like(),
                v: like.zeros_like(),
                t: 0,
            },
        }
    }

    fn apply(&mut self, weights: &mut Weights, grad: &Weights, lr: f64) {
        match self {
            Stepper::Sgd => {
                for (w, g) in weights.blocks_mut().into_iter().zip(grad.blocks()) {
                    w.iter_mut().zip(g).for_each(|(w, g)| *w -= lr * g);
                }
            }
            Stepper::Adam { m, v, t } => {
                *t += 1;
                let c1 = 1.0 - BETA1.powi(*t);
                let c2 = 1.0 - BETA2.powi(*t);
                let params = weights.blocks_mut().into_iter().zip(grad.blocks());
                let moments = m.blocks_mut().into_iter().zip(v.blocks_mut());
                for ((w, g), (m, v)) in params.zip(moments) {
                    for i in 0..w.len() {
                        m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
                        v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
                        let m_hat = m[i] / c1;
                        let v_hat = v[i] / c2;
                        w[i] -= lr * m_hat / (v_hat.sqrt() + EPSILON);
                    }
                }
            }
        }
    }
}

/// Trains `net` in place on `samples`, appending one mean-MSE entry per epoch
/// to its loss history. Samples are visited in a seeded shuffled order each
/// epoch; the reported epoch loss is measured before each update.
pub fn train(net: &mut Network, samples: &WindowedSamples, cfg: &TrainingConfig) -> Result<()> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(NetError::Config("no training samples".into()));
    }
    let inputs = samples
        .inputs
        .iter()
        .map(|rows| Tensor::from_rows(rows))
        .collect::<Result<Vec<_>>>()?;
    let mut stepper = Stepper::new(cfg.optimizer, &net.weights);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut acc: Option<Weights> = None;
            for &i in batch {
                let (loss, g) = net.gradients(&inputs[i], &samples.targets[i])?;
                total += loss;
                match acc.as_mut() {
                    None => acc = Some(g),
                    Some(a) => {
                        for (a, g) in a.blocks_mut().into_iter().zip(g.blocks()) {
                            a.iter_mut().zip(g).for_each(|(a, g)| *a += g);
                        }
                    }
                }
            }
            let mut grad = acc.expect("chunks are non-empty");
            if batch.len() > 1 {
                let scale = 1.0 / batch.len() as f64;
                grad.blocks_mut()
                    .into_iter()
                    .for_each(|b| b.iter_mut().for_each(|x| *x *= scale));
            }
            stepper.apply(&mut net.weights, &grad, cfg.learning_rate);
        }
        let mean = total / samples.len() as f64;
        if !mean.is_finite() || !net.weights.is_finite() {
            return Err(NetError::Diverged { epoch });
        }
        net.loss_history.push(mean);
    }
    Ok(())
}

/// Mean MSE of `net` over `samples` without updating anything.
pub fn evaluate_loss(net: &Network, samples: &WindowedSamples) -> Result<f64> {
    if samples.is_empty() {
        return Err(NetError::Config("no samples to evaluate".into()));
    }
    let mut total = 0.0;
    for (rows, target) in samples.inputs.iter().zip(&samples.targets) {
        let y = net.forward(&Tensor::from_rows(rows)?)?;
        if y.len() != target.len() {
            return Err(NetError::Shape("target length differs from network horizon".into()));
        }
        total += y.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64;
    }
    Ok(total / samples.len() as f64)
}
