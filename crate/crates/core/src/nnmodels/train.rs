use serde::{Deserialize, Serialize};

use crate::autodiff::{adam_step, AdamConfig, AdamState, Graph};
use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::rng;

use super::{Mode, ModelConfig, TrainedModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Capped at the number of training rows.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 256,
            learning_rate: 1e-3,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "train.epochs and train.batch_size must be at least 1".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "train.learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Mini-batch Adam on mean binary cross-entropy. Rows are reshuffled every
/// epoch from the `batch.<kind>` stream; weights come from `init.<kind>` and
/// dropout masks from `dropout.<kind>`, all derived from `train_cfg.seed`.
pub fn train(
    config: &ModelConfig,
    train_cfg: &TrainConfig,
    data: &Dataset,
) -> Result<TrainedModel> {
    train_cfg.validate()?;
    let (neg, pos) = data.class_counts();
    if neg == 0 || pos == 0 {
        return Err(Error::Usage(format!(
            "training data must contain both classes (got {neg} negative, {pos} positive)"
        )));
    }
    let kind = config.kind();
    let mut model = TrainedModel::init(config.clone(), data.n_features(), train_cfg.seed)?;
    model.train_config = *train_cfg;
    let mut batch_rng = rng::stream(train_cfg.seed, &format!("batch.{}", kind.name()));
    let mut dropout_rng = rng::stream(train_cfg.seed, &format!("dropout.{}", kind.name()));
    let adam_cfg = AdamConfig::with_lr(train_cfg.learning_rate);
    let mut adam = AdamState::new(&model.params);

    let n = data.n_rows();
    let batch = train_cfg.batch_size.min(n);
    let y = data.labels_f64();
    let mut curve = Vec::with_capacity(train_cfg.epochs);
    for epoch in 0..train_cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        rng::shuffle(&mut batch_rng, &mut order);
        let mut total = 0.0;
        for rows in order.chunks(batch) {
            let xb = data.x.select_rows(rows);
            let yb: Vec<f64> = rows.iter().map(|&r| y[r]).collect();
            let mut g = Graph::new();
            let xn = g.constant(xb);
            let fwd = model.forward(&mut g, xn, &mut Mode::Train(&mut dropout_rng))?;
            let bce = g.binary_cross_entropy(fwd.prob, &yb)?;
            let loss = g.scale(bce, 1.0 / rows.len() as f64);
            let value = g.value(loss).item();
            let diverged = || Error::Divergence {
                model: kind.name().to_string(),
                epoch: epoch + 1,
            };
            if !value.is_finite() {
                return Err(diverged());
            }
            g.backward(loss)?;
            model.params.accumulate_grads(&g);
            adam_step(&mut model.params, &mut adam, &adam_cfg);
            if !model.params.iter().all(|p| p.value.all_finite()) {
                return Err(diverged());
            }
            if let Some(stats) = model.running_stats.as_mut() {
                stats.update(&fwd.batch_stats);
            }
            total += value * rows.len() as f64;
        }
        curve.push(total / n as f64);
    }
    model.training_loss_curve = curve;
    Ok(model)
}
