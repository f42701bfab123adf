use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{sequence_nll, sequence_nll_grad};
use super::params::ModelParams;
use super::tape::Grads;
use super::{KernelError, ModelConfig, TrainingExample};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MuSchedule {
    /// μ = 0 until validation loss stops improving for `patience` epochs,
    /// then μ = 1.
    Plateau,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Learning rate after the plateau switch; `None` keeps `learning_rate`.
    pub copy_learning_rate: Option<f64>,
    pub patience: usize,
    /// Upper bound on μ = 0 epochs under [`MuSchedule::Plateau`].
    pub max_pretrain_epochs: usize,
    pub schedule: MuSchedule,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip: Option<f64>,
    /// Stop early once the mean training loss falls below this value.
    pub target_loss: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 70,
            batch_size: 16,
            learning_rate: 0.01,
            copy_learning_rate: Some(0.005),
            patience: 3,
            max_pretrain_epochs: 20,
            schedule: MuSchedule::Plateau,
            clip: Some(5.0),
            target_loss: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mu: f64,
    pub train_loss: f64,
    pub validation_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters with the lowest validation loss once μ reached its final
    /// value.
    pub params: ModelParams,
    pub history: Vec<EpochLog>,
    /// First epoch trained with μ = 1 under the plateau schedule.
    pub switched_at: Option<usize>,
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    pub fn new(params: &ModelParams, learning_rate: f64) -> Adam {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.data.len()]).collect();
        Adam { learning_rate, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: zeros.clone(), v: zeros, t: 0 }
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &Grads) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (k, tensor) in params.tensors_mut().iter_mut().enumerate() {
            for (i, x) in tensor.data.iter_mut().enumerate() {
                let g = grads.0[k][i];
                let m = &mut self.m[k][i];
                let v = &mut self.v[k][i];
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                *x -= self.learning_rate * (*m / c1) / ((*v / c2).sqrt() + self.eps);
            }
        }
    }
}

/// Mean loss over a dataset, computed in parallel and summed in order.
fn mean_loss(data: &[TrainingExample], params: &ModelParams, mu: f64) -> Result<f64, KernelError> {
    let losses: Vec<f64> = data.par_iter().map(|ex| sequence_nll(ex, params, mu)).collect::<Result<_, _>>()?;
    Ok(losses.iter().sum::<f64>() / data.len() as f64)
}

/// Mean loss and gradient of a batch. Per-example gradients run in parallel
/// and are reduced in index order, so results do not depend on threads.
fn batch_grad(batch: &[&TrainingExample], params: &ModelParams, mu: f64) -> Result<(f64, Grads), KernelError> {
    let parts: Vec<(f64, Grads)> =
        batch.par_iter().map(|ex| sequence_nll_grad(ex, params, mu)).collect::<Result<_, _>>()?;
    let mut total = Grads::zeros_like(params);
    let mut loss = 0.0;
    for (l, g) in &parts {
        loss += l;
        total.add_assign(g);
    }
    let n = batch.len() as f64;
    total.scale(1.0 / n);
    Ok((loss / n, total))
}

fn clip(grads: &mut Grads, max_norm: f64) {
    let norm = grads.0.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
}

/// Trains from a seeded initialization with mini-batch Adam.
///
/// Under the plateau schedule the copy loss is off (μ = 0) until the
/// validation loss fails to improve for `patience` epochs, then on (μ = 1).
/// Without a validation set the training loss drives both the schedule and
/// the choice of returned parameters.
pub fn train(
    train: &[TrainingExample],
    validation: &[TrainingExample],
    model: &ModelConfig,
    config: &TrainConfig,
) -> Result<TrainOutcome, KernelError> {
    if train.is_empty() {
        return Err(KernelError::EmptyDataset);
    }
    if config.batch_size == 0 {
        return Err(KernelError::Config("batch size must be at least 1".into()));
    }
    for ex in train.iter().chain(validation) {
        ex.check(model)?;
    }
    let mut params = ModelParams::init(model)?;
    let mut adam = Adam::new(&params, config.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed ^ 0x5eed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let held_out = if validation.is_empty() { train } else { validation };

    let (mut mu, mut switched_at) = match config.schedule {
        MuSchedule::Plateau => (0.0, None),
        MuSchedule::Fixed(mu) => (mu, None),
    };
    let mut best: Option<(f64, ModelParams)> = None;
    let mut stale = 0;
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&TrainingExample> = chunk.iter().map(|&i| &train[i]).collect();
            let (loss, mut grads) = batch_grad(&batch, &params, mu)?;
            if let Some(max_norm) = config.clip {
                clip(&mut grads, max_norm);
            }
            adam.step(&mut params, &grads);
            epoch_loss += loss * batch.len() as f64;
        }
        if !params.is_finite() {
            return Err(KernelError::NonFinite);
        }
        let train_loss = epoch_loss / train.len() as f64;
        let validation_loss = mean_loss(held_out, &params, mu)?;
        history.push(EpochLog { epoch, mu, train_loss, validation_loss });

        if best.as_ref().is_none_or(|(b, _)| validation_loss < *b - 1e-9) {
            best = Some((validation_loss, params.clone()));
            stale = 0;
        } else {
            stale += 1;
        }
        if config.target_loss.is_some_and(|t| train_loss < t) && (mu != 0.0 || switched_at.is_some()) {
            break;
        }
        let pretraining = config.schedule == MuSchedule::Plateau && switched_at.is_none();
        if pretraining && (stale >= config.patience || epoch + 1 >= config.max_pretrain_epochs) {
            mu = 1.0;
            switched_at = Some(epoch + 1);
            // The loss changes meaning with μ; best-so-far and moments restart.
            best = None;
            adam = Adam::new(&params, config.copy_learning_rate.unwrap_or(config.learning_rate));
            stale = 0;
        }
    }
    let params = best.map_or(params, |(_, p)| p);
    Ok(TrainOutcome { params, history, switched_at })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheck {
    pub max_rel_err: f64,
    /// Tensor name and flat index of the worst entry.
    pub worst: (String, usize),
    pub checked: usize,
}

/// Compares the analytic gradient with five-point central differences
/// `(-L(θ+2ε) + 8L(θ+ε) - 8L(θ-ε) + L(θ-2ε)) / 12ε` for every parameter
/// entry. The relative error of an entry is `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn grad_check(params: &ModelParams, ex: &TrainingExample, eps: f64, mu: f64) -> Result<GradCheck, KernelError> {
    if eps.is_nan() || eps <= 0.0 {
        return Err(KernelError::ZeroStep);
    }
    let (_, analytic) = sequence_nll_grad(ex, params, mu)?;
    let entries: Vec<(usize, usize)> =
        params.tensors().iter().enumerate().flat_map(|(k, t)| (0..t.data.len()).map(move |i| (k, i))).collect();
    let errors: Vec<f64> = entries
        .par_iter()
        .map(|&(k, i)| {
            let mut p = params.clone();
            let x = p.tensors()[k].data[i];
            let mut at = |step: f64| {
                p.tensors_mut()[k].data[i] = x + step;
                sequence_nll(ex, &p, mu)
            };
            let numeric = (8.0 * (at(eps)? - at(-eps)?) - (at(2.0 * eps)? - at(-2.0 * eps)?)) / (12.0 * eps);
            let a = analytic.0[k][i];
            Ok((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6))
        })
        .collect::<Result<_, KernelError>>()?;
    let (worst_at, max_rel_err) =
        errors.iter().copied().enumerate().fold((0, 0.0), |acc, (j, e)| if e > acc.1 { (j, e) } else { acc });
    let (k, i) = entries[worst_at];
    Ok(GradCheck { max_rel_err, worst: (params.tensors()[k].name.clone(), i), checked: entries.len() })
}
