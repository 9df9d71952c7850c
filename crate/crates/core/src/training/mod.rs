//! Optimization and evaluation.
//!
//! [`train`] runs seeded minibatch AdamW over the multi-scene objective with a
//! cosine learning-rate schedule; [`evaluate`] turns predictions into the
//! per-scene median-error report.

mod eval;
mod optim;
mod run;

use thiserror::Error;

use crate::data::{DataError, JitterFactors};
use crate::loss::LossError;
use crate::model::ModelError;

pub use eval::{evaluate, GroundTruthEcho, MetricsReport, PosePredictor, Prediction, SceneMetrics};
pub use run::{fit_image, total_steps, train, NoHooks, StepRecord, TrainHooks, TrainOutcome, LOG_HEADER};
pub use optim::{adamw_step, cosine_lr, AdamW, OptimizerState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("invalid training config `{key}`: {reason}")]
    InvalidConfig { key: &'static str, reason: String },
    #[error("step {step} outside schedule of {total_steps} steps")]
    Schedule { step: usize, total_steps: usize },
    #[error("optimizer: {0}")]
    Optimizer(String),
    #[error("training diverged at step {step}: {detail}")]
    Divergence { step: usize, detail: String },
    #[error("sample {index} has scene {scene}, catalog has {scenes}")]
    UnknownScene { index: usize, scene: usize, scenes: usize },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("{0}")]
    Hook(String),
    #[error("predictor: {0}")]
    Predictor(String),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Training hyperparameters. The defaults are the published recipe.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr0: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Overrides the model's dropout rate for the run.
    pub dropout: f64,
    pub seed: u64,
    /// Evaluate on the training set every this many steps; 0 disables.
    pub eval_every: usize,
    /// Hand a checkpoint to the hooks every this many steps; 0 disables.
    pub checkpoint_every: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub jitter: JitterFactors,
    /// Random crops to the model size when true, centre crops otherwise.
    pub random_crop: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 4.5e-5,
            weight_decay: 4e-5,
            batch_size: 64,
            epochs: 280,
            dropout: 0.5,
            seed: 0,
            eval_every: 0,
            checkpoint_every: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            jitter: JitterFactors::default(),
            random_crop: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |key, reason: &str| Err(TrainError::InvalidConfig { key, reason: reason.to_string() });
        if !(self.lr0.is_finite() && self.lr0 > 0.0) {
            return bad("lr0", "must be positive");
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad("weight_decay", "must be non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be at least 1");
        }
        if self.epochs == 0 {
            return bad("epochs", "must be at least 1");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout", "must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return bad("beta1", "must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return bad("beta2", "must lie in [0, 1)");
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return bad("eps", "must be positive");
        }
        let j = &self.jitter;
        for (key, v) in [
            ("jitter_brightness", j.brightness),
            ("jitter_contrast", j.contrast),
            ("jitter_saturation", j.saturation),
            ("jitter_hue", j.hue),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(key, "must be non-negative");
            }
        }
        if j.hue > 0.5 {
            return bad("jitter_hue", "must be at most 0.5");
        }
        Ok(())
    }

    pub fn optimizer(&self) -> AdamW {
        AdamW {
            weight_decay: self.weight_decay,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}
