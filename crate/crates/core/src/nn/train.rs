use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::network::{zeros_like, NetInput, Network, ParamSet};
use super::optim::{apply_max_norm, AdamConfig, AdamState};
use super::scalar::Scalar;
use crate::rng::{derive_seed, stream};
use crate::{Error, Result};

/// Gradient accumulation granularity. Chunk partial sums are reduced in
/// chunk order, so results do not depend on the thread count.
const GRAD_CHUNK: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation-accuracy improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            batch_size: 64,
            max_epochs: 100,
            patience: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.adam.lr > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.adam.beta1) || !(0.0..1.0).contains(&self.adam.beta2) {
            return Err(Error::invalid("Adam betas must lie in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub input: &'a NetInput<f32>,
    /// 0 = normal, 1 = abnormal.
    pub target: f32,
}

/// Binary cross-entropy evaluated from the logit, stable for large |z|.
pub fn bce_from_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

/// Mean BCE over the batch, Adam update, then max-norm projection.
/// `step_seed` drives the dropout masks.
pub fn train_step(
    net: &mut Network<f32>,
    opt: &mut AdamState,
    batch: &[Sample<'_>],
    cfg: &TrainConfig,
    step_seed: u64,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let shared = &*net;
    let partials: Vec<Result<(ParamSet<f32>, f64)>> = batch
        .par_chunks(GRAD_CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut grads = zeros_like(shared.params());
            let mut loss = 0.0;
            for (j, s) in chunk.iter().enumerate() {
                let mut rng = stream(step_seed, &[(c * GRAD_CHUNK + j) as u64]);
                let (p, cache) = shared.forward(s.input, Some(&mut rng))?;
                loss += bce_from_logit(cache.logit().to_f64(), s.target as f64);
                shared.backward_logit_into(&cache, p - s.target, &mut grads)?;
            }
            Ok((grads, loss))
        })
        .collect();

    let mut total: ParamSet<f64> = zeros_like(shared.params());
    let mut loss = 0.0;
    for part in partials {
        let (g, l) = part?;
        loss += l;
        for (acc, g) in total.iter_mut().flatten().zip(g.iter().flatten()) {
            for (a, &v) in acc.kernel.data.iter_mut().zip(&g.kernel.data) {
                *a += v as f64;
            }
            for (a, &v) in acc.bias.data.iter_mut().zip(&g.bias.data) {
                *a += v as f64;
            }
        }
    }
    let n = batch.len() as f64;
    loss /= n;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("non-finite training loss {loss}")));
    }
    for p in total.iter_mut().flatten() {
        p.kernel
            .data
            .iter_mut()
            .chain(p.bias.data.iter_mut())
            .for_each(|v| *v /= n);
    }
    let spec = net.spec().clone();
    let params = net.params_mut();
    opt.update(&cfg.adam, params, &total)?;
    apply_max_norm(&spec, params);
    Ok(loss)
}

/// Eval-mode probabilities, order-preserving.
pub fn predict_batch<T: Scalar>(net: &Network<T>, inputs: &[NetInput<T>]) -> Result<Vec<f64>> {
    inputs.par_iter().map(|x| net.predict(x).map(T::to_f64)).collect()
}

/// Same as [`predict_batch`] over borrowed inputs.
pub fn predict_refs<T: Scalar>(net: &Network<T>, inputs: &[&NetInput<T>]) -> Result<Vec<f64>> {
    inputs.par_iter().map(|x| net.predict(x).map(T::to_f64)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub epochs: Vec<EpochMetrics>,
    /// Epoch whose weights were kept (1-based), 0 if none improved.
    pub best_epoch: usize,
    pub best_val_acc: f64,
}

impl FitReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_acc\n");
        for e in &self.epochs {
            s.push_str(&format!("{},{:.6},{:.6}\n", e.epoch, e.train_loss, e.val_acc));
        }
        s
    }
}

/// Window-level accuracy at threshold 0.5.
pub fn accuracy(net: &Network<f32>, samples: &[Sample<'_>]) -> Result<f64> {
    if samples.is_empty() {
        return Ok(f64::NAN);
    }
    let inputs: Vec<&NetInput<f32>> = samples.iter().map(|s| s.input).collect();
    let probs = predict_refs(net, &inputs)?;
    let hits = probs
        .iter()
        .zip(samples)
        .filter(|(&p, s)| (p >= 0.5) == (s.target >= 0.5))
        .count();
    Ok(hits as f64 / samples.len() as f64)
}

/// Mini-batch training with early stopping on validation accuracy. The
/// best-scoring weights are restored on return. Without validation data
/// all `max_epochs` run and the final weights are kept.
pub fn fit(
    net: &mut Network<f32>,
    train: &[Sample<'_>],
    val: &[Sample<'_>],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<FitReport> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::invalid("no training samples"));
    }
    let mut opt = AdamState::new(net.params());
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut report = FitReport {
        epochs: Vec::new(),
        best_epoch: 0,
        best_val_acc: f64::NEG_INFINITY,
    };
    let mut best = None;
    let mut stale = 0;
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut stream(cfg.seed, &[0xE90C, epoch as u64]));
        let mut loss_sum = 0.0;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<Sample<'_>> = idx.iter().map(|&i| train[i]).collect();
            let seed = derive_seed(cfg.seed, &[epoch as u64, b as u64]);
            loss_sum += train_step(net, &mut opt, &batch, cfg, seed)? * batch.len() as f64;
        }
        let m = EpochMetrics {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            val_acc: accuracy(net, val)?,
        };
        log::debug!("epoch {epoch}: loss {:.4} val_acc {:.4}", m.train_loss, m.val_acc);
        on_epoch(&m);
        report.epochs.push(m);
        if val.is_empty() {
            continue;
        }
        if m.val_acc > report.best_val_acc {
            report.best_val_acc = m.val_acc;
            report.best_epoch = epoch;
            best = Some(net.params().clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    if let Some(b) = best {
        *net.params_mut() = b;
    } else {
        report.best_epoch = report.epochs.len();
        report.best_val_acc = f64::NAN;
    }
    Ok(report)
}
