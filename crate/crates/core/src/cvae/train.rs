//! Mini-batch Adam training on clutter-only data.

use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{CvaeModel, LatentNoise, LossParts};
use crate::clx::ComplexVector;
use crate::cvnn::{adam_step, AdamConfig, AdamState, ComplexTensor, Mode};
use crate::error::{invalid, Error, Result};
use crate::rng::{domain, Streams};

/// Number of clutter samples in a standard training dataset.
pub const DEFAULT_DATASET_SIZE: usize = 15_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Total number of epochs; a resumed run continues up to this count.
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// KL weight.
    pub beta: f64,
    /// Latent dimension.
    pub q: usize,
    pub seed: u64,
    pub train_fraction: f64,
    pub val_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::reconstruction()
    }
}

impl TrainConfig {
    /// Settings of the reconstruction-score model: `q = 12`, `β = 100`.
    pub fn reconstruction() -> Self {
        Self {
            epochs: 50,
            lr: 1e-3,
            batch_size: 128,
            beta: 1e2,
            q: 12,
            seed: 0,
            train_fraction: 2.0 / 3.0,
            val_fraction: 1.0 / 3.0,
        }
    }

    /// Settings of the latent-score models: `q = 32`, `β = 1e-3`.
    pub fn latent() -> Self {
        Self { beta: 1e-3, q: 32, ..Self::reconstruction() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(invalid(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.batch_size < 2 {
            return Err(invalid("batch size must be at least 2 (batch normalization)"));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(invalid(format!("beta must be finite and non-negative, got {}", self.beta)));
        }
        if self.q == 0 {
            return Err(invalid("latent dimension must be positive"));
        }
        let fr = [self.train_fraction, self.val_fraction];
        if fr.iter().any(|f| !(*f > 0.0 && *f < 1.0)) || (fr[0] + fr[1] - 1.0).abs() > 1e-9 {
            return Err(invalid("split fractions must lie in (0, 1) and sum to 1"));
        }
        Ok(())
    }

    /// Number of training samples for a dataset of `n`; the rest validate.
    pub fn train_count(&self, n: usize) -> usize {
        ((n as f64 * self.train_fraction).round() as usize).clamp(1, n.saturating_sub(1).max(1))
    }
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based epoch number.
    pub epoch: usize,
    pub train_loss: f64,
    /// Validation ELBO (running statistics, fixed latent noise).
    pub val_loss: f64,
    /// Validation KL term, before the β weight.
    pub kl_term: f64,
    /// Validation reconstruction term.
    pub rec_term: f64,
}

pub fn write_log_csv<W: Write>(mut w: W, log: &[EpochRecord]) -> Result<()> {
    writeln!(w, "epoch,train_loss,val_loss,kl_term,rec_term")?;
    for r in log {
        writeln!(w, "{},{:.10e},{:.10e},{:.10e},{:.10e}", r.epoch, r.train_loss, r.val_loss, r.kl_term, r.rec_term)?;
    }
    Ok(())
}

fn stack(data: &[ComplexVector], idx: &[usize]) -> Result<ComplexTensor> {
    let rows: Vec<&[crate::clx::C64]> = idx.iter().map(|&i| data[i].as_slice()).collect();
    ComplexTensor::from_samples(&rows)
}

/// Trains epochs `start_epoch..cfg.epochs` on `data` (split into training
/// and validation parts by `cfg`) and returns one log row per epoch.
/// Shuffling and latent noise depend only on the seed and the epoch
/// index, so a run resumed from a checkpoint sees the same batches.
/// A trailing batch of one sample is skipped. Adam moments start fresh
/// on every call.
pub fn train(model: &mut CvaeModel, data: &[ComplexVector], cfg: &TrainConfig, start_epoch: usize) -> Result<Vec<EpochRecord>> {
    cfg.validate()?;
    if cfg.q != model.q() {
        return Err(invalid(format!("config latent dimension {} differs from the model's {}", cfg.q, model.q())));
    }
    if data.len() < 3 {
        return Err(invalid("training needs at least 3 samples (2 to train, 1 to validate)"));
    }
    if let Some(bad) = data.iter().find(|x| x.len() != model.m()) {
        return Err(Error::DimensionMismatch { expected: model.m(), found: bad.len() });
    }
    model.set_beta(cfg.beta);
    let n_train = cfg.train_count(data.len()).max(2);
    let val_idx: Vec<usize> = (n_train..data.len()).collect();
    let streams = Streams::new(cfg.seed);
    let adam = AdamConfig { lr: cfg.lr, ..AdamConfig::default() };
    let mut states: Vec<AdamState> = model.layers().map(|l| AdamState::new(l.params().len())).collect();
    let mut log = Vec::new();

    for epoch in start_epoch..cfg.epochs {
        let mut order: Vec<usize> = (0..n_train).collect();
        order.shuffle(&mut streams.child(domain("cvae/shuffle"), epoch as u64));
        let mut noise_rng = streams.child(domain("cvae/noise"), epoch as u64);
        let mut total = 0.0;
        let mut seen = 0usize;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            if idx.len() < 2 {
                continue;
            }
            let xs = stack(data, idx)?;
            let noise = LatentNoise::draw(idx.len(), model.q(), &mut noise_rng);
            model.zero_grad();
            let parts = model
                .elbo_backward(&xs, &noise)
                .map_err(|e| annotate(e, epoch + 1, b))?;
            for (layer, state) in model.layers_mut().zip(states.iter_mut()) {
                let grads = layer.grads().to_vec();
                adam_step(layer.params_mut(), &grads, state, &adam).map_err(|e| annotate(e, epoch + 1, b))?;
            }
            total += parts.loss * idx.len() as f64;
            seen += idx.len();
        }
        let val = evaluate(model, data, &val_idx, cfg, &streams)?;
        let rec = EpochRecord {
            epoch: epoch + 1,
            train_loss: total / seen as f64,
            val_loss: val.loss,
            kl_term: val.kl,
            rec_term: val.rec,
        };
        log::info!(
            "epoch {:>3}: train {:.5} val {:.5} (rec {:.5}, kl {:.5})",
            rec.epoch,
            rec.train_loss,
            rec.val_loss,
            rec.rec_term,
            rec.kl_term
        );
        log.push(rec);
    }
    Ok(log)
}

fn annotate(e: Error, epoch: usize, batch: usize) -> Error {
    match e {
        Error::Divergence(msg) => Error::Divergence(format!("epoch {epoch}, batch {batch}: {msg}")),
        other => other,
    }
}

/// Validation ELBO with the same latent noise at every epoch.
fn evaluate(model: &mut CvaeModel, data: &[ComplexVector], idx: &[usize], cfg: &TrainConfig, streams: &Streams) -> Result<LossParts> {
    let mut rng = streams.child(domain("cvae/val-noise"), 0);
    let mut acc = LossParts::default();
    for chunk in idx.chunks(cfg.batch_size) {
        let xs = stack(data, chunk)?;
        let noise = LatentNoise::draw(chunk.len(), model.q(), &mut rng);
        let p = model.elbo_loss(&xs, &noise, Mode::Eval)?;
        let w = chunk.len() as f64;
        acc.loss += p.loss * w;
        acc.rec += p.rec * w;
        acc.kl += p.kl * w;
    }
    let n = idx.len() as f64;
    Ok(LossParts { loss: acc.loss / n, rec: acc.rec / n, kl: acc.kl / n })
}
