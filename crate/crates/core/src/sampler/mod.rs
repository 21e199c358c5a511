//! Language-balanced batch sampling, the curriculum schedule and SpecAugment.

mod augment;
mod curriculum;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusStats, MultilingualCorpus, Split};
use crate::error::{Error, Result};

pub use augment::{spec_augment, spec_augment_masked, AugmentPolicy, Mask};
pub use curriculum::{curriculum_order, CurriculumState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub beta: f64,
    pub batch_size: usize,
    pub rng_seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            beta: 0.5,
            batch_size: 8,
            rng_seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::Config(format!(
                "sampler.beta must be in [0, 1], got {}",
                self.beta
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("sampler.batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// `s_i ∝ n_max + beta (n_i - n_max)` over the languages in `stats`, which
/// should already be restricted to the active set; `n_max` is taken over
/// that same set.
pub fn language_train_weights(stats: &CorpusStats, beta: f64) -> Result<Vec<f64>> {
    if stats.is_empty() {
        return Err(Error::Sampler("no active languages".into()));
    }
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::Sampler(format!("beta must be in [0, 1], got {beta}")));
    }
    if stats.n_max == 0 {
        return Err(Error::Sampler("every active language is empty".into()));
    }
    let n_max = stats.n_max as f64;
    let raw: Vec<f64> = stats
        .languages
        .iter()
        .map(|l| n_max + beta * (l.n as f64 - n_max))
        .collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|r| r / total).collect())
}

/// A batch of `(language, index into that language's training split)`.
pub type Batch = Vec<(String, usize)>;

/// Draws batches language-first by weight, then walks a shuffled
/// permutation of each language's utterances so nothing repeats before the
/// language's pool is exhausted.
#[derive(Clone, Debug, Default)]
pub struct BatchSampler {
    cycles: std::collections::BTreeMap<String, (Vec<usize>, usize)>,
}

impl BatchSampler {
    pub fn new() -> Self {
        Self::default()
    }

    fn draw<R: Rng + ?Sized>(&mut self, lang: &str, pool: usize, rng: &mut R) -> usize {
        let (perm, pos) = self.cycles.entry(lang.to_string()).or_insert_with(|| (Vec::new(), 0));
        if *pos >= perm.len() || perm.len() != pool {
            *perm = (0..pool).collect();
            perm.shuffle(rng);
            *pos = 0;
        }
        *pos += 1;
        perm[*pos - 1]
    }

    pub fn next_batch<R: Rng + ?Sized>(
        &mut self,
        corpus: &MultilingualCorpus,
        langs: &[String],
        weights: &[f64],
        batch_size: usize,
        rng: &mut R,
    ) -> Result<Batch> {
        if batch_size == 0 {
            return Err(Error::Sampler("batch size must be positive".into()));
        }
        if langs.is_empty() || langs.len() != weights.len() {
            return Err(Error::Sampler(format!(
                "{} weights for {} languages",
                weights.len(),
                langs.len()
            )));
        }
        let sizes: Vec<usize> = langs.iter().map(|l| corpus.utterances(Split::Train, l).len()).collect();
        if let Some(i) = (0..langs.len()).find(|&i| sizes[i] == 0 && weights[i] > 0.0) {
            return Err(Error::Sampler(format!("{} has no training utterances", langs[i])));
        }
        let dist = WeightedIndex::new(weights).map_err(|e| Error::Sampler(format!("bad weights: {e}")))?;
        Ok((0..batch_size)
            .map(|_| {
                let k = dist.sample(rng);
                (langs[k].clone(), self.draw(&langs[k], sizes[k], rng))
            })
            .collect())
    }
}
