//! SGD-momentum training with BMUF worker synchronization, curriculum
//! orchestration, checkpoints and fine-tuning.

mod checkpoint;
mod optim;
mod run;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::AugmentPolicy;

pub use checkpoint::{log_from_jsonl, log_to_jsonl, Checkpoint, LogEntry, CHECKPOINT_SCHEMA_VERSION};
pub use optim::{bmuf_sync, global_norm, sgd_momentum_step};
pub use run::{batch_gradients, finetune, prepare_finetune, train, BatchResult, TrainOutcome, Trainer, SAMPLER_STREAM};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Mono,
    Joint,
    JointLangEmb,
    MultiHead,
    Finetune,
}

impl Mode {
    pub const ALL: [Mode; 5] = [
        Mode::Mono,
        Mode::Joint,
        Mode::JointLangEmb,
        Mode::MultiHead,
        Mode::Finetune,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Mono => "mono",
            Mode::Joint => "joint",
            Mode::JointLangEmb => "joint_lang_emb",
            Mode::MultiHead => "multi_head",
            Mode::Finetune => "finetune",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown mode '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    pub mode: Mode,
    pub lr: f64,
    pub momentum: f64,
    /// Global-norm gradient clip; 0 disables clipping.
    pub grad_clip: f64,
    pub workers: usize,
    /// BMUF block length τ in local steps.
    pub sync_period: usize,
    pub block_momentum: f64,
    pub block_lr: f64,
    pub epochs: usize,
    /// Overrides `epochs` with an exact iteration budget.
    pub max_iterations: Option<usize>,
    /// Dev evaluation period in iterations; 0 evaluates once per epoch.
    pub eval_every: usize,
    /// Dev utterances decoded per language at each evaluation.
    pub dev_limit: Option<usize>,
    /// Ignored for multi-head and single-language runs.
    pub curriculum: bool,
    pub max_stage_iterations: usize,
    pub cer_gate: f64,
    /// Iterations between CER measurements of the most recently added language.
    pub gate_every: usize,
    pub gate_dev_size: usize,
    pub lr_decay: f64,
    /// Evaluations without a new best score before the learning rate decays.
    pub plateau_evals: usize,
    /// Stop once every language's dev CER is at or below this value.
    pub target_dev_cer: Option<f64>,
    /// `None` never augments. With a curriculum the policy switches on when
    /// the last language joins; without one it follows `enabled`.
    pub augment: Option<AugmentPolicy>,
    /// Gives every worker the stream of worker 0 (used to test BMUF symmetry).
    pub identical_worker_streams: bool,
    pub log_every: usize,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Joint,
            lr: 0.05,
            momentum: 0.9,
            grad_clip: 5.0,
            workers: 1,
            sync_period: 1,
            block_momentum: 0.0,
            block_lr: 1.0,
            epochs: 30,
            max_iterations: None,
            eval_every: 0,
            dev_limit: None,
            curriculum: true,
            max_stage_iterations: 2000,
            cer_gate: 0.5,
            gate_every: 50,
            gate_dev_size: 50,
            lr_decay: 0.5,
            plateau_evals: 3,
            target_dev_cer: None,
            augment: Some(AugmentPolicy::default()),
            identical_worker_streams: false,
            log_every: 10,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("trainer.{m}")));
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return bad("lr must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must be in [0, 1)");
        }
        if !(self.grad_clip >= 0.0) {
            return bad("grad_clip must be non-negative");
        }
        if self.workers == 0 {
            return bad("workers must be at least 1");
        }
        if self.sync_period == 0 {
            return bad("sync_period must be at least 1");
        }
        if !(0.0..1.0).contains(&self.block_momentum) {
            return bad("block_momentum must be in [0, 1)");
        }
        if !(self.block_lr > 0.0) || !self.block_lr.is_finite() {
            return bad("block_lr must be positive");
        }
        if self.epochs == 0 && self.max_iterations.is_none() {
            return bad("epochs must be positive");
        }
        if self.max_iterations == Some(0) {
            return bad("max_iterations must be positive");
        }
        if self.max_stage_iterations == 0 || self.gate_every == 0 || self.gate_dev_size == 0 {
            return bad("max_stage_iterations, gate_every and gate_dev_size must be positive");
        }
        if !(0.0..=1.0).contains(&self.cer_gate) {
            return bad("cer_gate must be in [0, 1]");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad("lr_decay must be in (0, 1]");
        }
        if self.plateau_evals == 0 || self.log_every == 0 {
            return bad("plateau_evals and log_every must be positive");
        }
        if let Some(p) = &self.augment {
            p.validate()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;
