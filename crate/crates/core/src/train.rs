//! Mini-batch training on z-scored windows with MSE loss and Adam.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Sample, WindowedDataset};
use crate::error::{Error, Result};
use crate::forecaster::{ModelConfig, ModelParams};
use crate::optim::Adam;
use crate::tape::{Gradients, Tape};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub patience: usize,
    pub seed: u64,
    /// Fixed seeded subset of the training split used every epoch.
    pub max_train_samples: Option<usize>,
    pub max_val_samples: Option<usize>,
    /// Rescales the batch gradient when its global norm exceeds this.
    pub clip_norm: Option<f64>,
    /// Samples per worker tape. Results do not depend on the thread count,
    /// but do depend on this value through summation order.
    pub chunk_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 200,
            patience: 20,
            seed: 0,
            max_train_samples: None,
            max_val_samples: None,
            clip_norm: None,
            chunk_size: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss (training
    /// loss when there is no validation set).
    pub params: ModelParams,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
}

const STREAM_INIT: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;
const STREAM_SUBSET: u64 = 3;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Seeded initial parameters, as `train` would draw them.
pub fn init_params(config: ModelConfig, seed: u64) -> Result<ModelParams> {
    ModelParams::init(config, &mut stream(seed, STREAM_INIT))
}

/// Summed MSE and summed gradients over `samples`, recorded on one tape.
fn chunk_gradients(params: &ModelParams, samples: &[&Sample]) -> Result<(f64, Gradients)> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let mut losses = Vec::with_capacity(samples.len());
    for s in samples {
        let pred = bound.record_forward(&mut tape, &s.window)?;
        losses.push(tape.mean_squared_error(pred, s.target.as_slice())?);
    }
    let total = tape.sum(&losses)?;
    Ok((tape.scalar(total), tape.backward(total)?))
}

/// Mean MSE and mean gradient over a batch, computed in fixed-size chunks
/// in parallel and merged in chunk order.
pub fn batch_gradients(params: &ModelParams, samples: &[&Sample], chunk_size: usize) -> Result<(f64, Gradients)> {
    if samples.is_empty() {
        return Err(Error::Dataset("empty batch".into()));
    }
    let parts: Vec<(f64, Gradients)> = samples
        .par_chunks(chunk_size.max(1))
        .map(|chunk| chunk_gradients(params, chunk))
        .collect::<Result<_>>()?;
    let mut loss = 0.0;
    let mut grads = Gradients::default();
    for (l, g) in parts {
        loss += l;
        grads.merge(g);
    }
    let scale = 1.0 / samples.len() as f64;
    grads.scale(scale);
    Ok((loss * scale, grads))
}

/// Mean MSE over samples on normalized targets.
pub fn dataset_loss(params: &ModelParams, samples: &[&Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Ok(f64::NAN);
    }
    let losses: Vec<f64> = samples
        .par_iter()
        .map(|s| {
            let pred = crate::forecaster::forward(params, &s.window)?;
            Ok(pred
                .as_slice()
                .iter()
                .zip(s.target.as_slice())
                .map(|(p, t)| (p - t) * (p - t))
                .sum::<f64>()
                / s.target.len() as f64)
        })
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

fn subset<'a>(data: &'a WindowedDataset, cap: Option<usize>, seed: u64, salt: u64) -> Vec<&'a Sample> {
    let mut refs: Vec<&Sample> = data.samples.iter().collect();
    if let Some(cap) = cap {
        if cap < refs.len() {
            let mut rng = stream(seed ^ salt, STREAM_SUBSET);
            refs.shuffle(&mut rng);
            refs.truncate(cap);
            refs.sort_by_key(|s| s.start);
        }
    }
    refs
}

pub fn train(config: ModelConfig, train: &WindowedDataset, val: &WindowedDataset, tc: &TrainConfig) -> Result<TrainOutcome> {
    train_from(init_params(config, tc.seed)?, train, val, tc)
}

/// Trains starting from `params`.
pub fn train_from(
    mut params: ModelParams,
    train: &WindowedDataset,
    val: &WindowedDataset,
    tc: &TrainConfig,
) -> Result<TrainOutcome> {
    if train.is_empty() {
        return Err(Error::Dataset("training split is empty".into()));
    }
    if train.corridors() != params.config.corridors {
        return Err(Error::Dataset(format!(
            "model expects {} corridors, data has {}",
            params.config.corridors,
            train.corridors()
        )));
    }
    if tc.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let mut train_set = subset(train, tc.max_train_samples, tc.seed, 0x7472);
    let val_set = subset(val, tc.max_val_samples, tc.seed, 0x7661);
    let mut shuffle_rng = stream(tc.seed, STREAM_SHUFFLE);
    let mut adam = Adam::new(tc.learning_rate);
    let mut history = Vec::with_capacity(tc.epochs);
    let mut best = (f64::INFINITY, 0, params.clone());
    let mut last_finite: Option<f64> = None;

    for epoch in 1..=tc.epochs {
        train_set.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for batch in train_set.chunks(tc.batch_size) {
            let (loss, mut grads) = batch_gradients(&params, batch, tc.chunk_size)?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    lr: tc.learning_rate,
                    last_finite_loss: last_finite,
                });
            }
            last_finite = Some(loss);
            if let Some(max) = tc.clip_norm {
                let norm = grads.global_norm();
                if norm > max {
                    grads.scale(max / norm);
                }
            }
            adam.step(&mut params, &grads);
            total += loss * batch.len() as f64;
        }
        let train_loss = total / train_set.len() as f64;
        let val_loss = if val_set.is_empty() {
            None
        } else {
            let v = dataset_loss(&params, &val_set)?;
            if !v.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    lr: tc.learning_rate,
                    last_finite_loss: last_finite,
                });
            }
            Some(v)
        };
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        // Selection uses the loss after this epoch's updates.
        let score = match val_loss {
            Some(v) => v,
            None => dataset_loss(&params, &train_set)?,
        };
        if score < best.0 {
            best = (score, epoch, params.clone());
        } else if tc.patience > 0 && epoch - best.1 >= tc.patience {
            break;
        }
    }
    let (_, best_epoch, best_params) = best;
    Ok(TrainOutcome {
        params: if best_epoch == 0 { params } else { best_params },
        history,
        best_epoch,
    })
}
