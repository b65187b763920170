//! Stage-1 supervised contrastive training of the teacher and Stage-2
//! teacher-initialized self-distillation of the student/target pair.

mod log;
mod monitor;
mod optim;
mod stage1;
mod stage2;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dataset::AugmentationParams;
use crate::error::{Error, Result};

pub use self::log::{EpochRecord, StepRecord, TrainingLog};
pub use monitor::{covariance_spectrum, effective_rank, mean_pairwise_cosine};
pub use optim::{clip_global_norm, optimizer_step, AdamState, BETA1, BETA2, EPSILON};
pub use stage1::{train_stage1, Stage1Output};
pub use stage2::{train_stage2, CollapseStats, Stage2Output};

/// Linear warmup from 0 to `base_lr`, then half-cosine decay to 0 at
/// `total_steps`.
pub fn lr_schedule(step: u64, warmup_steps: u64, total_steps: u64, base_lr: f64) -> Result<f64> {
    if step > total_steps || warmup_steps >= total_steps {
        return Err(Error::InvalidArgument(format!(
            "schedule needs step <= total and warmup < total; got step={step}, warmup={warmup_steps}, total={total_steps}"
        )));
    }
    if step < warmup_steps {
        return Ok(base_lr * step as f64 / warmup_steps as f64);
    }
    let progress = (step - warmup_steps) as f64 / (total_steps - warmup_steps) as f64;
    Ok(base_lr * 0.5 * (1.0 + (PI * progress).cos()))
}

/// Warmup measured in epochs converted to steps, capped so that at least
/// one post-warmup step remains.
fn warmup_steps(warmup_epochs: usize, steps_per_epoch: u64, total: u64) -> u64 {
    (warmup_epochs as u64 * steps_per_epoch).min(total.saturating_sub(1))
}

fn outside(name: &str, value: f64, lo: f64, hi: f64, out: &mut Vec<String>) {
    if !(lo..=hi).contains(&value) {
        out.push(format!("{name}={value} is outside the recommended range [{lo}, {hi}]"));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Stage1Config {
    pub batch_size: usize,
    pub base_lr: f64,
    pub weight_decay: f64,
    pub warmup_epochs: usize,
    /// Global-norm clip; 0 disables.
    pub grad_clip: f64,
    pub temperature: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Defaults to one pass over the training glyphs.
    pub steps_per_epoch: Option<usize>,
    /// Fraction of character classes held out for validation.
    pub validation_fraction: f64,
    pub validation_episodes: usize,
    /// Validate every this many epochs (and after the last one).
    pub validation_every: usize,
    pub augmentation: AugmentationParams,
}

impl Default for Stage1Config {
    fn default() -> Self {
        Self {
            batch_size: 256,
            base_lr: 1e-4,
            weight_decay: 1e-6,
            warmup_epochs: 10,
            grad_clip: 1.0,
            temperature: 0.1,
            epochs: 150,
            seed: 0,
            steps_per_epoch: None,
            validation_fraction: 0.1,
            validation_episodes: 100,
            validation_every: 10,
            augmentation: AugmentationParams::default(),
        }
    }
}

impl Stage1Config {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("stage-1 epochs must be >= 1".into()));
        }
        if self.batch_size < 4 {
            return Err(Error::InvalidArgument("batch_size must be >= 4".into()));
        }
        if !(self.temperature > 0.0) || !(self.base_lr >= 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidArgument(
                "temperature must be positive; lr and weight decay non-negative".into(),
            ));
        }
        if !(self.grad_clip >= 0.0) {
            return Err(Error::InvalidArgument("grad_clip must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::InvalidArgument("validation_fraction must lie in [0,1)".into()));
        }
        if self.steps_per_epoch == Some(0) || self.validation_every == 0 {
            return Err(Error::InvalidArgument(
                "steps_per_epoch and validation_every must be positive".into(),
            ));
        }
        self.augmentation.validate()
    }

    /// Settings that run but fall outside the usual search space.
    pub fn range_warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if ![128, 256, 512].contains(&self.batch_size) {
            w.push(format!("batch_size={} is not one of 128/256/512", self.batch_size));
        }
        outside("base_lr", self.base_lr, 3e-5, 3e-4, &mut w);
        outside("weight_decay", self.weight_decay, 1e-7, 1e-4, &mut w);
        outside("warmup_epochs", self.warmup_epochs as f64, 5.0, 60.0, &mut w);
        outside("grad_clip", self.grad_clip, 0.0, 2.0, &mut w);
        outside("temperature", self.temperature, 0.05, 0.3, &mut w);
        outside("epochs", self.epochs as f64, 50.0, 300.0, &mut w);
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    Teacher,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Stage2Config {
    /// Constant EMA decay κ.
    pub ema_decay: f64,
    pub predictor_hidden: usize,
    /// Classes (view pairs) per step.
    pub batch_size: usize,
    pub base_lr: f64,
    pub predictor_lr_multiplier: f64,
    pub weight_decay: f64,
    pub warmup_epochs: usize,
    pub grad_clip: f64,
    pub epochs: usize,
    pub init_mode: InitMode,
    pub seed: u64,
    /// Defaults to one pass over the classes.
    pub steps_per_epoch: Option<usize>,
    pub augmentation: AugmentationParams,
    /// Glyphs in the fixed collapse-monitor probe.
    pub probe_size: usize,
    /// Probe every this many steps (and after the last one); 0 disables.
    pub probe_every: usize,
}

impl Default for Stage2Config {
    fn default() -> Self {
        Self {
            ema_decay: 0.996,
            predictor_hidden: 512,
            batch_size: 256,
            base_lr: 1e-4,
            predictor_lr_multiplier: 2.0,
            weight_decay: 1e-6,
            warmup_epochs: 10,
            grad_clip: 1.0,
            epochs: 300,
            init_mode: InitMode::Teacher,
            seed: 0,
            steps_per_epoch: None,
            augmentation: AugmentationParams::default(),
            probe_size: 256,
            probe_every: 50,
        }
    }
}

impl Stage2Config {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.ema_decay) {
            return Err(Error::InvalidArgument(format!(
                "ema_decay {} outside [0,1]",
                self.ema_decay
            )));
        }
        if self.predictor_hidden == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument(
                "predictor_hidden and batch_size must be positive".into(),
            ));
        }
        if !(self.base_lr >= 0.0)
            || !(self.weight_decay >= 0.0)
            || !(self.grad_clip >= 0.0)
            || !(self.predictor_lr_multiplier >= 0.0)
        {
            return Err(Error::InvalidArgument(
                "lr, multiplier, weight decay and grad_clip must be non-negative".into(),
            ));
        }
        if self.steps_per_epoch == Some(0) {
            return Err(Error::InvalidArgument("steps_per_epoch must be positive".into()));
        }
        self.augmentation.validate()
    }

    pub fn range_warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        outside("ema_decay", self.ema_decay, 0.95, 0.9995, &mut w);
        if ![256, 512, 1024].contains(&self.predictor_hidden) {
            w.push(format!(
                "predictor_hidden={} is not one of 256/512/1024",
                self.predictor_hidden
            ));
        }
        outside("predictor_lr_multiplier", self.predictor_lr_multiplier, 1.0, 4.0, &mut w);
        w
    }
}
