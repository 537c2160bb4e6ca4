use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::network::Network;
use super::Target;
use crate::error::{Error, Result};
use crate::features::SparseVec;
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Clipped to the training-set size.
    pub batch_size: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub max_epochs: usize,
    pub dropout: f64,
    pub hidden: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
            batch_size: 512,
            patience: 10,
            max_epochs: 200,
            dropout: 0.5,
            hidden: 200,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} not in [0, 1)", self.dropout)));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch_size and max_epochs must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub x: SparseVec,
    pub target: Target,
}

/// Adam with bias correction folded into the step size.
#[derive(Clone, Debug)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(model: &Network, cfg: &TrainConfig) -> Self {
        let shapes: Vec<Vec<f64>> = model.params().iter().map(|p| vec![0.0; p.len()]).collect();
        Adam {
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.epsilon,
            t: 0,
            m: shapes.clone(),
            v: shapes,
        }
    }

    pub fn step(&mut self, model: &mut Network, grad: &Network) {
        self.t += 1;
        let lr_t = self.lr * (1.0 - self.beta2.powi(self.t)).sqrt() / (1.0 - self.beta1.powi(self.t));
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        for (((p, g), m), v) in model
            .params_mut()
            .into_iter()
            .zip(grad.params())
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                p[i] -= lr_t * m[i] / (v[i].sqrt() + eps);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_score: f64,
}

/// Mini-batch training with early stopping.
///
/// `validate` scores the model after every epoch (higher is better). The
/// parameters of the best-scoring epoch are restored; ties keep the earlier
/// epoch. Training stops once `patience` consecutive epochs fail to improve.
pub fn train(
    model: &mut Network,
    data: &[Example],
    cfg: &TrainConfig,
    mut validate: impl FnMut(&Network) -> f64,
) -> Result<TrainOutcome> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    cfg.validate()?;
    for ex in data {
        if ex.x.dim != model.config.input_dim {
            return Err(Error::DimensionMismatch {
                expected: model.config.input_dim,
                found: ex.x.dim,
            });
        }
    }
    let mut shuffle_rng = rng::stream(cfg.seed, "shuffle", 0);
    let mut dropout_rng = rng::stream(cfg.seed, "dropout", 0);
    let batch_size = cfg.batch_size.min(data.len());
    let mut adam = Adam::new(model, cfg);
    let mut grad = model.zeros_like();
    let mut order: Vec<usize> = (0..data.len()).collect();

    let mut history = Vec::new();
    let mut best: Option<(usize, f64, Network)> = None;
    let mut stale = 0;
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(batch_size) {
            for p in grad.params_mut() {
                p.fill(0.0);
            }
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let ex = &data[i];
                let trace = model.trace(&ex.x, Some(&mut dropout_rng));
                epoch_loss += model.backward(&ex.x, &ex.target, &trace, scale, &mut grad);
            }
            adam.step(model, &grad);
        }
        let val_score = validate(model);
        history.push(EpochRecord {
            epoch,
            train_loss: epoch_loss / data.len() as f64,
            val_score,
        });
        match &best {
            Some((_, score, _)) if val_score <= *score => stale += 1,
            _ => {
                best = Some((epoch, val_score, model.clone()));
                stale = 0;
            }
        }
        if stale >= cfg.patience {
            break;
        }
    }
    let (best_epoch, best_score, params) = best.expect("at least one epoch");
    *model = params;
    Ok(TrainOutcome {
        history,
        best_epoch,
        best_score,
    })
}
