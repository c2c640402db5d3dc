use std::fmt::Write as _;

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cerberus::{total_loss, total_loss_and_grads, CerberusConfig, CerberusParams, CycleBundle};
use crate::error::{Error, Result};
use crate::featurize::Normalizer;
use crate::neural::{AdamConfig, AdamState, Parameters};

/// Losses above this abort training.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Fixed, seeded shuffling. Without it batches are shuffled from OS entropy.
    pub deterministic: bool,
    pub seed: u64,
    /// Stop after this many epochs without a validation improvement; 0 disables.
    pub patience: usize,
    pub validation_fraction: f64,
    pub model: CerberusConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 32,
            adam: AdamConfig::default(),
            deterministic: true,
            seed: 0,
            patience: 0,
            validation_fraction: 0.1,
            model: CerberusConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Usage("epochs and batch_size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Usage(format!(
                "validation fraction {} outside [0, 1)",
                self.validation_fraction
            )));
        }
        let a = &self.adam;
        if !(a.lr >= 0.0 && (0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.epsilon > 0.0) {
            return Err(Error::Usage(format!("invalid optimizer settings {a:?}")));
        }
        self.model.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_loss: f64,
    /// `None` without a validation set.
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Parameters after the epoch with the lowest validation loss (training
    /// loss when there is no validation set).
    pub params: CerberusParams,
    pub best_epoch: usize,
    pub history: Vec<EpochLoss>,
}

impl TrainOutcome {
    /// `epoch,train_loss,val_loss`; an empty field for a missing validation loss.
    pub fn loss_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss\n");
        for e in &self.history {
            let _ = write!(out, "{},{},", e.epoch, e.train_loss);
            if let Some(v) = e.val_loss {
                let _ = write!(out, "{v}");
            }
            out.push('\n');
        }
        out
    }
}

fn guard(epoch: usize, loss: f64) -> Result<()> {
    if loss.is_finite() && loss <= DIVERGENCE_LIMIT {
        Ok(())
    } else {
        Err(Error::Divergence { epoch, loss })
    }
}

/// Initializes a model from `config.seed` and trains it.
pub fn train(
    train_set: &[CycleBundle],
    val_set: &[CycleBundle],
    normalizer: Normalizer,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    let init = CerberusParams::init(config.model.clone(), normalizer, config.seed)?;
    train_from(init, train_set, val_set, config)
}

/// Mini-batch Adam on the fused loss, starting from `params`.
pub fn train_from(
    mut params: CerberusParams,
    train_set: &[CycleBundle],
    val_set: &[CycleBundle],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::Data("empty training set".into()));
    }
    let mut adam = AdamState::new(config.adam);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut shuffler = if config.deterministic {
        ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_5eed)
    } else {
        ChaCha8Rng::from_os_rng()
    };
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, CerberusParams)> = None;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffler);
        let mut weighted = 0.0;
        let mut batch = Vec::with_capacity(config.batch_size);
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| train_set[i].clone()));
            let (loss, grads) = total_loss_and_grads(&params, &batch)?;
            guard(epoch, loss)?;
            weighted += loss * batch.len() as f64;
            adam.step(&mut params.tensors_mut(), &grads)?;
        }
        let train_loss = weighted / train_set.len() as f64;
        let val_loss = if val_set.is_empty() {
            None
        } else {
            let v = total_loss(&params, val_set)?;
            guard(epoch, v)?;
            Some(v)
        };
        info!(
            "epoch {epoch}: train {train_loss:.6e} val {}",
            val_loss.map_or("-".to_string(), |v| format!("{v:.6e}"))
        );
        history.push(EpochLoss {
            epoch,
            train_loss,
            val_loss,
        });
        let score = val_loss.unwrap_or(train_loss);
        if best.as_ref().is_none_or(|(b, _, _)| score < *b) {
            best = Some((score, epoch, params.clone()));
        }
        let best_epoch = best.as_ref().map_or(epoch, |b| b.1);
        if config.patience > 0 && epoch - best_epoch >= config.patience {
            info!("no validation improvement for {} epochs, stopping", config.patience);
            break;
        }
    }
    let (_, best_epoch, params) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        params,
        best_epoch,
        history,
    })
}
