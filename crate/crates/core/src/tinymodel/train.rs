//! Minibatch training with AdamW, cosine learning-rate decay and gradient
//! accumulation. Each minibatch is split into a fixed number of shards whose
//! gradients are computed in parallel and summed in shard order, so a run is
//! reproducible for a given seed and shard count.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tensor::ParamSet;
use crate::error::{Error, Result};

/// A model whose loss on one example can be differentiated.
pub trait Trainable: Sync {
    type Example: Sync;

    fn params(&self) -> &ParamSet;
    fn params_mut(&mut self) -> &mut ParamSet;

    /// Add `scale · ∂loss/∂θ` into `grads` and return the loss.
    fn accumulate(&self, ex: &Self::Example, scale: f64, grads: &mut ParamSet) -> Result<f64>;

    fn loss(&self, ex: &Self::Example) -> Result<f64> {
        let mut scratch = self.params().zeros_like();
        self.accumulate(ex, 0.0, &mut scratch)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Peak learning rate, decayed to zero by a cosine schedule.
    pub lr: f64,
    pub batch_size: usize,
    /// Minibatches whose gradients are summed before one optimizer step.
    pub grad_accum: usize,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    /// Parallel shards per minibatch.
    pub shards: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            lr: 3e-3,
            batch_size: 8,
            grad_accum: 1,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 13,
            shards: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean per-example loss seen during each epoch.
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
}

/// Learning rate at optimizer step `step` of `total`.
pub fn cosine_lr(peak: f64, step: usize, total: usize) -> f64 {
    if total == 0 {
        return peak;
    }
    let frac = (step as f64 / total as f64).min(1.0);
    0.5 * peak * (1.0 + (std::f64::consts::PI * frac).cos())
}

#[derive(Debug, Clone)]
pub struct AdamW {
    m: ParamSet,
    v: ParamSet,
    t: i32,
}

impl AdamW {
    pub fn new(params: &ParamSet) -> Self {
        AdamW {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &ParamSet, lr: f64, cfg: &TrainConfig) {
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t);
        let bc2 = 1.0 - cfg.beta2.powi(self.t);
        for (((p, g), m), v) in params
            .tensors
            .iter_mut()
            .zip(&grads.tensors)
            .zip(&mut self.m.tensors)
            .zip(&mut self.v.tensors)
        {
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = cfg.beta1 * m.data[i] + (1.0 - cfg.beta1) * gi;
                v.data[i] = cfg.beta2 * v.data[i] + (1.0 - cfg.beta2) * gi * gi;
                let mhat = m.data[i] / bc1;
                let vhat = v.data[i] / bc2;
                p.data[i] -= lr * (mhat / (vhat.sqrt() + cfg.eps) + cfg.weight_decay * p.data[i]);
            }
        }
    }
}

/// Sum of `scale · ∂loss/∂θ` over `batch` and the summed loss.
pub fn batch_gradient<M: Trainable>(model: &M, batch: &[&M::Example], scale: f64, shards: usize) -> Result<(ParamSet, f64)> {
    let shard_len = batch.len().div_ceil(shards.max(1)).max(1);
    let parts: Vec<(ParamSet, f64)> = batch
        .par_chunks(shard_len)
        .map(|chunk| {
            let mut g = model.params().zeros_like();
            let mut loss = 0.0;
            for ex in chunk {
                loss += model.accumulate(ex, scale, &mut g)?;
            }
            Ok((g, loss))
        })
        .collect::<Result<_>>()?;
    let mut iter = parts.into_iter();
    let (mut total, mut loss) = iter.next().unwrap_or_else(|| (model.params().zeros_like(), 0.0));
    for (g, l) in iter {
        total.add_scaled(&g, 1.0);
        loss += l;
    }
    Ok((total, loss))
}

/// Mean loss over `data` without updating parameters.
pub fn mean_loss<M: Trainable>(model: &M, data: &[M::Example]) -> Result<f64> {
    let losses: Vec<f64> = data.par_iter().map(|ex| model.loss(ex)).collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len().max(1) as f64)
}

pub fn train<M: Trainable>(
    model: &mut M,
    data: &[M::Example],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<TrainReport> {
    if data.is_empty() {
        return Err(Error::EmptyCorpus("no training examples".into()));
    }
    if cfg.batch_size == 0 || cfg.grad_accum == 0 || !(cfg.lr > 0.0) {
        return Err(Error::InvalidArgument("batch_size, grad_accum and lr must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let batches_per_epoch = data.len().div_ceil(cfg.batch_size);
    let steps_per_epoch = batches_per_epoch.div_ceil(cfg.grad_accum);
    let total_steps = steps_per_epoch * cfg.epochs;
    let mut opt = AdamW::new(model.params());
    let mut step = 0;
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for group in order.chunks(cfg.batch_size * cfg.grad_accum) {
            let scale = 1.0 / group.len() as f64;
            let mut grads = model.params().zeros_like();
            for micro in group.chunks(cfg.batch_size) {
                let batch: Vec<&M::Example> = micro.iter().map(|&i| &data[i]).collect();
                let (g, loss) = batch_gradient(model, &batch, scale, cfg.shards)?;
                grads.add_scaled(&g, 1.0);
                epoch_loss += loss;
            }
            let lr = cosine_lr(cfg.lr, step, total_steps);
            if !epoch_loss.is_finite() || !grads.is_finite() {
                return Err(Error::Divergence(format!(
                    "non-finite loss or gradient at epoch {epoch}, step {step} (lr {lr:.3e}); lower the learning rate"
                )));
            }
            opt.step(model.params_mut(), &grads, lr, cfg);
            step += 1;
        }
        if !model.params().is_finite() {
            return Err(Error::Divergence(format!(
                "parameters became non-finite after epoch {epoch}; lower the learning rate"
            )));
        }
        let mean = epoch_loss / data.len() as f64;
        log::info!("epoch {epoch}: mean loss {mean:.6}");
        on_epoch(epoch, mean);
        epoch_losses.push(mean);
    }
    Ok(TrainReport {
        epoch_losses,
        steps: step,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_endpoints() {
        assert_eq!(cosine_lr(1.0, 0, 10), 1.0);
        assert!((cosine_lr(1.0, 5, 10) - 0.5).abs() < 1e-15);
        assert!(cosine_lr(1.0, 10, 10).abs() < 1e-15);
    }
}
