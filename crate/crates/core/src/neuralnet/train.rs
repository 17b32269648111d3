use ndarray::Array2;
use rand::seq::SliceRandom;

use super::{adam_step, bce_loss, evaluate_loss, AdamState, LabeledSet, MlpModel, Mode, Standardizer};
use crate::error::{invalid, AmbcError, Result};
use crate::rng_from_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub lr_decay_factor: f64,
    pub seed: u64,
    /// Fit the input standardizer on the training set before the first epoch.
    pub fit_standardizer: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 256,
            max_epochs: 50,
            patience: 5,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            lr_decay_factor: 0.5,
            seed: 0,
            fit_standardizer: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(invalid("batch_size, max_epochs and patience must all be >= 1"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid("learning_rate must be finite and non-negative"));
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor < 1.0) {
            return Err(invalid("lr_decay_factor must be in (0,1)"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.adam_epsilon > 0.0) {
            return Err(invalid("Adam betas must be in [0,1) and epsilon positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean train-mode loss per epoch.
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Learning rate in effect during each epoch.
    pub learning_rates: Vec<f64>,
    /// Zero-based epoch of the restored checkpoint.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

impl TrainReport {
    pub fn epochs(&self) -> usize {
        self.val_loss.len()
    }
}

/// Mini-batch Adam with early stopping.
///
/// Each epoch shuffles the training rows, runs one pass of mini-batches and
/// scores the validation set. The best-scoring parameters are kept and
/// restored into `model` on return. An epoch without improvement bumps the
/// patience counter and, unless that ends training, halves (by
/// `lr_decay_factor`) the learning rate.
pub fn train(model: &mut MlpModel, train_set: &LabeledSet, val_set: &LabeledSet, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(invalid("training and validation sets must be non-empty"));
    }
    let dim = model.config.input_dim;
    if train_set.inputs.ncols() != dim || val_set.inputs.ncols() != dim {
        return Err(invalid(format!("dataset width does not match model input {dim}")));
    }
    if cfg.fit_standardizer {
        model.standardizer = Standardizer::fit(train_set.inputs.view())?;
    }

    let mut rng = rng_from_seed(cfg.seed);
    let mut adam = AdamState::new(model, cfg.beta1, cfg.beta2, cfg.adam_epsilon);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut batch = Array2::<f64>::zeros((cfg.batch_size, dim));
    let mut labels = Vec::with_capacity(cfg.batch_size);

    let mut lr = cfg.learning_rate;
    let mut best = model.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut waited = 0;
    let mut report = TrainReport {
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        learning_rates: Vec::new(),
        best_epoch: 0,
        best_val_loss: f64::INFINITY,
        stopped_early: false,
    };

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            if chunk.len() != batch.nrows() {
                batch = Array2::zeros((chunk.len(), dim));
            }
            labels.clear();
            for (row, &i) in chunk.iter().enumerate() {
                batch.row_mut(row).assign(&train_set.inputs.row(i));
                labels.push(train_set.labels[i]);
            }
            let pass = model.forward(batch.view(), Mode::Train).map_err(|e| match e {
                AmbcError::Training(msg) => AmbcError::Training(format!("epoch {epoch}, batch {b}: {msg}")),
                other => other,
            })?;
            epoch_loss += bce_loss(pass.predictions.view(), &labels)? * chunk.len() as f64;
            let grads = model.backward(&pass, &labels)?;
            model.update_running_stats(&pass);
            adam_step(model, &grads, &mut adam, lr)?;
        }

        let val = evaluate_loss(model, val_set)?;
        if !val.is_finite() {
            return Err(AmbcError::Training(format!("validation loss is {val} at epoch {epoch}")));
        }
        report.train_loss.push(epoch_loss / train_set.len() as f64);
        report.val_loss.push(val);
        report.learning_rates.push(lr);

        if val < best_val {
            best_val = val;
            best_epoch = epoch;
            best = model.clone();
            waited = 0;
        } else {
            waited += 1;
            if waited >= cfg.patience {
                report.stopped_early = true;
                break;
            }
            lr *= cfg.lr_decay_factor;
        }
    }

    *model = best;
    report.best_epoch = best_epoch;
    report.best_val_loss = best_val;
    Ok(report)
}
