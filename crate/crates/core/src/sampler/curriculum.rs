use serde::{Deserialize, Serialize};

use crate::corpus::CorpusStats;
use crate::error::{Error, Result};

/// Languages in descending training size; ties keep the input order.
pub fn curriculum_order(stats: &CorpusStats) -> Vec<String> {
    let mut langs: Vec<(usize, usize, &str)> = stats
        .languages
        .iter()
        .enumerate()
        .map(|(i, l)| (l.n, i, l.lang.as_str()))
        .collect();
    langs.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    langs.into_iter().map(|(_, _, l)| l.to_string()).collect()
}

/// Incremental language activation. A new language joins when the most
/// recently added one has a CER below `cer_gate`, or after
/// `max_stage_iterations` calls regardless. SpecAugment switches on with the
/// last activation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurriculumState {
    pub order: Vec<String>,
    pub active_count: usize,
    pub stage_iteration: usize,
    pub max_stage_iterations: usize,
    pub cer_gate: f64,
    pub complete: bool,
    pub augment_enabled: bool,
}

impl CurriculumState {
    pub fn new(order: Vec<String>, max_stage_iterations: usize, cer_gate: f64) -> Result<Self> {
        if order.is_empty() {
            return Err(Error::Sampler("curriculum needs at least one language".into()));
        }
        if max_stage_iterations == 0 {
            return Err(Error::Sampler("max_stage_iterations must be positive".into()));
        }
        let done = order.len() == 1;
        Ok(Self {
            order,
            active_count: 1,
            stage_iteration: 0,
            max_stage_iterations,
            cer_gate,
            complete: done,
            augment_enabled: done,
        })
    }

    pub fn active(&self) -> &[String] {
        &self.order[..self.active_count]
    }

    pub fn last_added(&self) -> &str {
        &self.order[self.active_count - 1]
    }

    /// Advances one iteration. Returns the language activated by this call,
    /// if any.
    pub fn curriculum_step(&mut self, last_added_cer: Option<f64>) -> Result<Option<String>> {
        if self.complete {
            return Err(Error::CurriculumComplete);
        }
        self.stage_iteration += 1;
        let gate_open = last_added_cer.is_some_and(|c| c < self.cer_gate);
        if !gate_open && self.stage_iteration < self.max_stage_iterations {
            return Ok(None);
        }
        self.active_count += 1;
        self.stage_iteration = 0;
        if self.active_count == self.order.len() {
            self.complete = true;
            self.augment_enabled = true;
        }
        Ok(Some(self.last_added().to_string()))
    }
}
