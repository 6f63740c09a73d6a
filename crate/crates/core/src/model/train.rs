use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{Standardizer, TrnnModel};
use crate::error::{Result, TrnnError};
use crate::optimizer::{minibatch_iterate, OptimizerConfig, OptimizerState};
use crate::tensor::DenseTensor;

/// A model that the generic mini-batch loop can fit.
pub trait Trainable {
    /// Training loss on `(x, y)`.
    fn loss(&self, x: &DenseTensor, y: &DenseTensor) -> Result<f64>;
    /// Loss and per-parameter gradients, in [`Trainable::params_mut`] order.
    fn loss_and_grads(&self, x: &DenseTensor, y: &DenseTensor) -> Result<(f64, Vec<DenseTensor>)>;
    fn params_mut(&mut self) -> Vec<&mut DenseTensor>;
}

/// Learning-rate schedule hook. Only a constant rate and reduce-on-plateau
/// are provided.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Multiply the rate by `factor` whenever the full-data loss fails to
    /// improve by a relative `threshold` for `patience` epochs, never going
    /// below `min_lr`.
    Plateau {
        factor: f64,
        patience: usize,
        threshold: f64,
        min_lr: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub optimizer: OptimizerConfig,
    /// Clamped to the number of training samples.
    pub batch_size: usize,
    pub max_epochs: usize,
    /// When set, also stop after about this many samples have been seen,
    /// i.e. after `ceil(budget / N)` epochs.
    pub sample_budget: Option<usize>,
    /// Relative improvement of the best loss below which an epoch counts as
    /// stalled.
    pub tol: f64,
    /// Consecutive stalled epochs before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Standardize inputs and outputs per entry before fitting.
    pub standardize: bool,
    pub lr_schedule: LrSchedule,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerConfig::default(),
            batch_size: 32,
            max_epochs: 500,
            sample_budget: None,
            tol: 1e-8,
            patience: 20,
            seed: 0,
            standardize: true,
            lr_schedule: LrSchedule::Constant,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        let bad = |m: &str| Err(TrnnError::InvalidConfig(m.into()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.tol >= 0.0 && self.tol.is_finite()) {
            return bad("tol must be non-negative");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        if self.sample_budget == Some(0) {
            return bad("sample_budget must be at least 1");
        }
        if let LrSchedule::Plateau {
            factor,
            patience,
            threshold,
            min_lr,
        } = self.lr_schedule
        {
            if !(factor > 0.0 && factor < 1.0) || patience == 0 || threshold < 0.0 || min_lr < 0.0 {
                return bad("plateau schedule needs 0 < factor < 1, patience ≥ 1, threshold ≥ 0, min_lr ≥ 0");
            }
        }
        Ok(())
    }
}

/// Outcome of one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Full-data training loss; entry 0 is before any update, entry `e`
    /// after epoch `e`.
    pub losses: Vec<f64>,
    pub epochs_run: usize,
    pub stopped_early: bool,
    pub seconds: f64,
    pub validation_rmse: Option<f64>,
}

impl TrainReport {
    pub fn initial_loss(&self) -> f64 {
        self.losses[0]
    }

    pub fn final_loss(&self) -> f64 {
        *self.losses.last().expect("at least the initial loss")
    }
}

/// Generic mini-batch loop: shuffle, forward/backward per batch, update,
/// then record the full-data loss. Data must already be in training units.
pub fn fit_loop<M: Trainable>(
    model: &mut M,
    x: &DenseTensor,
    y: &DenseTensor,
    config: &TrainConfig,
) -> Result<TrainReport> {
    config.validate()?;
    let n = x.num_samples();
    if y.num_samples() != n {
        return Err(TrnnError::ShapeMismatch {
            expected: vec![n],
            found: vec![y.num_samples()],
        });
    }
    let start = Instant::now();
    let batch = config.batch_size.min(n);
    let mut state = OptimizerState::new(config.optimizer.clone())?;
    let mut epochs = minibatch_iterate(n, batch, config.seed)?;

    let full_batch = batch == n;
    // full batch: the gradient at the end of one epoch drives the next
    let mut carried = None;
    let initial = if full_batch {
        let (loss, grads) = model.loss_and_grads(x, y)?;
        carried = Some(grads);
        loss
    } else {
        model.loss(x, y)?
    };
    if !initial.is_finite() {
        return Err(TrnnError::Divergence {
            epoch: 0,
            loss: initial,
        });
    }
    let mut losses = vec![initial];
    let mut best = initial;
    let mut stalled = 0;
    let mut plateau_best = initial;
    let mut plateau_stalled = 0;
    let mut stopped_early = false;

    let max_epochs = match config.sample_budget {
        Some(b) => config.max_epochs.min(b.div_ceil(n)),
        None => config.max_epochs,
    };
    for epoch in 1..=max_epochs {
        let order = epochs.next().expect("endless epochs");
        let loss = if let Some(grads) = carried.take() {
            state.apply(&mut model.params_mut(), &grads)?;
            let (loss, grads) = model.loss_and_grads(x, y)?;
            carried = Some(grads);
            loss
        } else {
            for idx in &order {
                let xb = x.select_samples(idx)?;
                let yb = y.select_samples(idx)?;
                let grads = model.loss_and_grads(&xb, &yb)?.1;
                state.apply(&mut model.params_mut(), &grads)?;
            }
            model.loss(x, y)?
        };
        if !loss.is_finite() {
            return Err(TrnnError::Divergence { epoch, loss });
        }
        losses.push(loss);

        let improvement = if best > 0.0 { (best - loss) / best } else { 0.0 };
        if improvement >= config.tol {
            stalled = 0;
        } else {
            stalled += 1;
        }
        best = best.min(loss);

        if let LrSchedule::Plateau {
            factor,
            patience,
            threshold,
            min_lr,
        } = config.lr_schedule
        {
            let gain = if plateau_best > 0.0 {
                (plateau_best - loss) / plateau_best
            } else {
                0.0
            };
            if gain >= threshold {
                plateau_best = loss;
                plateau_stalled = 0;
            } else {
                plateau_stalled += 1;
                if plateau_stalled >= patience {
                    state.learning_rate = (state.learning_rate * factor).max(min_lr);
                    plateau_stalled = 0;
                    plateau_best = plateau_best.min(loss);
                }
            }
        }

        if stalled >= config.patience || loss == 0.0 {
            stopped_early = epoch < max_epochs;
            break;
        }
    }
    Ok(TrainReport {
        epochs_run: losses.len() - 1,
        losses,
        stopped_early,
        seconds: start.elapsed().as_secs_f64(),
        validation_rmse: None,
    })
}

/// Fits `model` to `(x, y)`. With `config.standardize` the per-entry
/// statistics of the training data are stored in the model and every
/// reported loss is in standardized units.
pub fn train(
    model: &mut TrnnModel,
    x: &DenseTensor,
    y: &DenseTensor,
    config: &TrainConfig,
) -> Result<TrainReport> {
    model.check_input(x)?;
    if y.sample_shape() != model.spec().output_shape.as_slice() {
        return Err(TrnnError::ShapeMismatch {
            expected: model.spec().output_shape.clone(),
            found: y.sample_shape().to_vec(),
        });
    }
    config.validate()?;
    let (xs, ys) = if config.standardize {
        let sx = Standardizer::fit(x);
        let sy = Standardizer::fit(y);
        let xs = sx.transform(x)?;
        let ys = sy.transform(y)?;
        model.set_scalers(Some(sx), Some(sy))?;
        (xs, ys)
    } else {
        model.set_scalers(None, None)?;
        (x.clone(), y.clone())
    };
    fit_loop(model, &xs, &ys, config)
}
