//! Adam with cosine-annealed learning rate, mini-batches of whole graphs,
//! and best-validation checkpoint selection.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use super::features::{encode_sample, Batch, EncodedSample, NormStats};
use super::model::batch_loss;
use super::params::{ModelConfig, ModelParams};
use super::tape::Tape;
use crate::dataset::Sample;
use crate::error::{Error, Result};
use crate::rng::PortableRng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr0: f64,
    pub lr_min: f64,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub eval_every: usize,
    /// Graphs per optimizer step.
    pub batch_size: usize,
    pub seed: u64,
    /// Weight of the loss on intermediate passes; 0 supervises the final pass only.
    pub aux_weight: f64,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 1e-3,
            lr_min: 1e-6,
            epochs: 500,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            eval_every: 100,
            batch_size: 16,
            seed: 0,
            aux_weight: 0.0,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidParameter("epochs must be positive".into()));
        }
        if !(self.lr_min >= 0.0 && self.lr_min <= self.lr0 && self.lr0.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "learning rates must satisfy 0 <= lr_min <= lr0 (got {} and {})",
                self.lr_min, self.lr0
            )));
        }
        if self.eval_every == 0 || self.batch_size == 0 {
            return Err(Error::InvalidParameter(
                "eval_every and batch_size must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidParameter(
                "Adam betas must lie in [0, 1)".into(),
            ));
        }
        self.model.validate()
    }

    /// `lr_min + (lr0 - lr_min) (1 + cos(pi t / T)) / 2` with `T = epochs`.
    pub fn learning_rate(&self, t: usize) -> f64 {
        cosine_lr(self.lr0, self.lr_min, t, self.epochs)
    }
}

pub fn cosine_lr(lr0: f64, lr_min: f64, t: usize, total: usize) -> f64 {
    let frac = t.min(total) as f64 / total.max(1) as f64;
    lr_min + 0.5 * (lr0 - lr_min) * (1.0 + (std::f64::consts::PI * frac).cos())
}

pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl Adam {
    pub fn new(params: &ModelParams, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn update(&mut self, params: &mut ModelParams, grads: &[Option<Array2<f64>>], lr: f64) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        for (k, g) in grads.iter().enumerate() {
            let Some(g) = g else {
                // Unused slots still decay their moments.
                self.m[k].mapv_inplace(|m| b1 * m);
                self.v[k].mapv_inplace(|v| b2 * v);
                Zip::from(&mut params.tensors[k])
                    .and(&self.m[k])
                    .and(&self.v[k])
                    .for_each(|p, &m, &v| {
                        *p -= lr * (m / c1) / ((v / c2).sqrt() + eps);
                    });
                continue;
            };
            Zip::from(&mut params.tensors[k])
                .and(&mut self.m[k])
                .and(&mut self.v[k])
                .and(g)
                .for_each(|p, m, v, &g| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                });
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub rows: Vec<HistoryRow>,
    pub best_epoch: Option<usize>,
}

impl History {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,lr,train_loss,val_loss\n");
        for r in &self.rows {
            let val = r.val_loss.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{}", r.epoch, r.lr, r.train_loss, val);
        }
        out
    }

    pub fn validation_curve(&self) -> Vec<(usize, f64)> {
        self.rows
            .iter()
            .filter_map(|r| r.val_loss.map(|v| (r.epoch, v)))
            .collect()
    }

    pub fn first_train_loss(&self) -> Option<f64> {
        self.rows.first().map(|r| r.train_loss)
    }
}

/// Mean loss over `samples` with the final-pass objective.
pub fn mean_loss(
    params: &ModelParams,
    samples: &[EncodedSample],
    batch_size: usize,
) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for chunk in samples.chunks(batch_size.max(1)) {
        let refs: Vec<&EncodedSample> = chunk.iter().collect();
        let batch = Batch::from_samples(&refs);
        let mut tape = Tape::new();
        let l = batch_loss(&mut tape, params, &batch, 0.0)?;
        total += tape.scalar(l) * chunk.len() as f64;
        count += chunk.len();
    }
    Ok(total / count.max(1) as f64)
}

pub struct TrainOutcome {
    pub params: ModelParams,
    pub stats: NormStats,
    pub history: History,
}

/// Trains on `train` and selects the parameters with the lowest validation
/// loss among the periodic evaluations.
pub fn train(train: &[Sample], val: &[Sample], config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::InvalidParameter(
            "training and validation sets must be non-empty".into(),
        ));
    }
    let stats = NormStats::from_samples(train)?;
    let train_enc: Vec<EncodedSample> = train
        .iter()
        .map(|s| encode_sample(s, &stats))
        .collect::<Result<_>>()?;
    let val_enc: Vec<EncodedSample> = val
        .iter()
        .map(|s| encode_sample(s, &stats))
        .collect::<Result<_>>()?;
    let (params, history) = fit(&train_enc, &val_enc, config)?;
    Ok(TrainOutcome {
        params,
        stats,
        history,
    })
}

/// Training loop over already-encoded samples.
pub fn fit(
    train: &[EncodedSample],
    val: &[EncodedSample],
    config: &TrainConfig,
) -> Result<(ModelParams, History)> {
    config.validate()?;
    let mut params = ModelParams::init(
        &config.model,
        PortableRng::with_stream(config.seed, 0).next_u64(),
    )?;
    let mut order_rng = PortableRng::with_stream(config.seed, 1);
    let mut adam = Adam::new(&params, config.beta1, config.beta2, config.adam_eps);
    let mut history = History::default();
    let mut best: Option<(f64, ModelParams)> = None;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 0..config.epochs {
        let lr = config.learning_rate(epoch);
        order_rng.shuffle(&mut order);
        let mut total = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let refs: Vec<&EncodedSample> = chunk.iter().map(|&i| &train[i]).collect();
            let batch = Batch::from_samples(&refs);
            let mut tape = Tape::new();
            let loss = batch_loss(&mut tape, &params, &batch, config.aux_weight)?;
            let value = tape.scalar(loss);
            if !value.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    detail: format!("loss {value} on batch {b} at learning rate {lr:e}"),
                });
            }
            total += value * chunk.len() as f64;
            let grads = tape.backward(loss, params.tensors.len());
            adam.update(&mut params, &grads, lr);
        }
        if !params.is_finite() {
            return Err(Error::Divergence {
                epoch,
                detail: "non-finite parameter after update".into(),
            });
        }
        let train_loss = total / train.len().max(1) as f64;
        let evaluate = (epoch + 1) % config.eval_every == 0 || epoch + 1 == config.epochs;
        let val_loss = if evaluate && !val.is_empty() {
            let v = mean_loss(&params, val, config.batch_size)?;
            if !v.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    detail: format!("validation loss {v}"),
                });
            }
            log::info!("epoch {} train {train_loss:.5} val {v:.5}", epoch + 1);
            if best.as_ref().is_none_or(|(b, _)| v < *b) {
                best = Some((v, params.clone()));
                history.best_epoch = Some(epoch + 1);
            }
            Some(v)
        } else {
            None
        };
        history.rows.push(HistoryRow {
            epoch: epoch + 1,
            lr,
            train_loss,
            val_loss,
        });
    }
    let params = best.map(|(_, p)| p).unwrap_or(params);
    Ok((params, history))
}

/// Everything needed to reuse a trained model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
    pub train_config: TrainConfig,
    pub stats: Option<NormStats>,
    pub params: ModelParams,
}

pub const CHECKPOINT_VERSION: u32 = 1;

impl Checkpoint {
    pub fn new(train_config: TrainConfig, stats: NormStats, params: ModelParams) -> Self {
        Self {
            format_version: CHECKPOINT_VERSION,
            provenance: None,
            train_config,
            stats: Some(stats),
            params,
        }
    }

    pub fn stats(&self) -> Result<&NormStats> {
        self.stats
            .as_ref()
            .ok_or_else(|| Error::Format("checkpoint has no normalization statistics".into()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string(self)? + "\n")?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let ck: Self = serde_json::from_str(&text)?;
        if ck.format_version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint version {}",
                ck.format_version
            )));
        }
        Ok(ck)
    }
}
