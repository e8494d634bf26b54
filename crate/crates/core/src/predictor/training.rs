use std::fmt::Write as _;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ModelError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    pub beta: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: 0.1,
            epochs: 50,
            batch_size: 32,
            seed: 7,
            patience: 5,
            beta: 0.4,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_string()));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return bad("beta must be non-negative");
        }
        Ok(())
    }
}

/// A model trainable by mini-batch gradient descent on per-example gradients.
pub trait Trainable: Clone + Send + Sync {
    type Example: Sync;
    type Gradient: Send;

    fn example_gradient(&self, ex: &Self::Example) -> Result<(f64, Self::Gradient)>;
    fn zero_gradient(&self) -> Self::Gradient;
    fn accumulate(total: &mut Self::Gradient, g: &Self::Gradient);
    /// `params -= step * g`.
    fn apply(&mut self, g: &Self::Gradient, step: f64);
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation: f64,
    pub best_validation: f64,
    pub checkpoint: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
    pub stopped_early: bool,
}

impl TrainingLog {
    pub fn best_epoch(&self) -> Option<usize> {
        self.epochs.iter().filter(|e| e.checkpoint).map(|e| e.epoch).next_back()
    }

    pub fn best_validation(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.best_validation)
    }

    /// One line per epoch; floats use shortest round-trip formatting.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.epochs {
            writeln!(
                out,
                "epoch={} train_loss={:?} val_micro_f1={:?} best_val={:?} checkpoint={}",
                e.epoch, e.train_loss, e.validation, e.best_validation, e.checkpoint
            )
            .unwrap();
        }
        if self.stopped_early {
            out.push_str("stopped_early=true\n");
        }
        out
    }
}

/// Mini-batch gradient descent with seeded shuffling and early stopping.
///
/// `validate` scores a model (higher is better); the best-scoring model is
/// returned. Per-example gradients are computed in parallel and summed in
/// example order, so results do not depend on the thread count.
pub fn fit<M, F>(initial: M, examples: &[M::Example], config: &TrainingConfig, mut validate: F) -> Result<(M, TrainingLog)>
where
    M: Trainable,
    F: FnMut(&M) -> Result<f64>,
{
    config.validate()?;
    let mut model = initial;
    let mut best = model.clone();
    let mut log = TrainingLog::default();
    let mut best_val = f64::NEG_INFINITY;
    let mut since_best = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let grads: Vec<Result<(f64, M::Gradient)>> = batch
                .par_iter()
                .map(|&i| model.example_gradient(&examples[i]))
                .collect();
            let mut total = model.zero_gradient();
            for g in grads {
                let (loss, g) = g?;
                if !loss.is_finite() {
                    return Err(ModelError::DivergedLoss { epoch });
                }
                loss_sum += loss;
                M::accumulate(&mut total, &g);
            }
            model.apply(&total, config.learning_rate / batch.len() as f64);
        }
        let train_loss = if examples.is_empty() {
            0.0
        } else {
            loss_sum / examples.len() as f64
        };
        let val = validate(&model)?;
        let improved = val > best_val;
        if improved {
            best_val = val;
            best = model.clone();
            since_best = 0;
        } else {
            since_best += 1;
        }
        debug!("epoch {epoch}: loss {train_loss:.6} val {val:.4}");
        log.epochs.push(EpochRecord {
            epoch,
            train_loss,
            validation: val,
            best_validation: best_val,
            checkpoint: improved,
        });
        if since_best >= config.patience && epoch < config.epochs {
            info!("early stop after epoch {epoch}");
            log.stopped_early = true;
            break;
        }
    }
    Ok((best, log))
}
