//! Temperature-sampled sentence draws for vocabulary learning.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{learn_subwords, Vocabulary};
use crate::corpus::{CorpusStats, MultilingualCorpus, Split};
use crate::error::{Error, Result};
use crate::util::rng_for;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VocabConfig {
    pub alpha: f64,
    pub target_size: usize,
    pub sentence_budget: usize,
}

impl Default for VocabConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            target_size: 10_000,
            sentence_budget: 1_000_000,
        }
    }
}

impl VocabConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!(
                "vocab.alpha must be in [0, 1], got {}",
                self.alpha
            )));
        }
        if self.target_size == 0 || self.sentence_budget == 0 {
            return Err(Error::Config(
                "vocab.target_size and vocab.sentence_budget must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// `s_i = p_i^alpha / sum_j p_j^alpha`, in the order of `stats.languages`.
pub fn language_vocab_weights(stats: &CorpusStats, alpha: f64) -> Result<Vec<f64>> {
    if stats.is_empty() {
        return Err(Error::Tokenizer("no languages to weight".into()));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Tokenizer(format!("alpha must be in [0, 1], got {alpha}")));
    }
    // 0^0 would give empty languages mass at alpha = 0
    let raw: Vec<f64> = stats
        .languages
        .iter()
        .map(|l| if l.n == 0 { 0.0 } else { l.p.powf(alpha) })
        .collect();
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        return Err(Error::Tokenizer("every language is empty".into()));
    }
    Ok(raw.into_iter().map(|r| r / total).collect())
}

/// `budget` independent draws: a language by `weights` (ordered as
/// `corpus.languages`), then one of its training transcripts uniformly.
pub fn sample_sentences<'a, R: Rng + ?Sized>(
    corpus: &'a MultilingualCorpus,
    weights: &[f64],
    budget: usize,
    rng: &mut R,
) -> Result<Vec<&'a str>> {
    if budget == 0 {
        return Err(Error::Tokenizer("sentence budget must be positive".into()));
    }
    if weights.len() != corpus.languages.len() {
        return Err(Error::Tokenizer(format!(
            "{} weights for {} languages",
            weights.len(),
            corpus.languages.len()
        )));
    }
    let pools: Vec<&[crate::corpus::Utterance]> = corpus
        .languages
        .iter()
        .map(|l| corpus.utterances(Split::Train, &l.lang_id))
        .collect();
    for (pool, (w, spec)) in pools.iter().zip(weights.iter().zip(&corpus.languages)) {
        if *w > 0.0 && pool.is_empty() {
            return Err(Error::Tokenizer(format!(
                "{} has weight {w} but no sentences",
                spec.lang_id
            )));
        }
    }
    let dist = WeightedIndex::new(weights).map_err(|e| Error::Tokenizer(format!("bad weights: {e}")))?;
    Ok((0..budget)
        .map(|_| {
            let pool = pools[dist.sample(rng)];
            pool[rng.random_range(0..pool.len())].transcript.as_str()
        })
        .collect())
}

/// Samples sentences from `langs` (all languages when `None`) with weights
/// from their training sizes and learns a subword vocabulary of
/// `cfg.target_size` tokens.
pub fn build_vocab(
    corpus: &MultilingualCorpus,
    langs: Option<&[String]>,
    cfg: &VocabConfig,
    seed: u64,
) -> Result<Vocabulary> {
    cfg.validate()?;
    let sub;
    let corpus = match langs {
        Some(l) => {
            sub = corpus.restrict(l)?;
            &sub
        }
        None => corpus,
    };
    let weights = language_vocab_weights(&corpus.stats(), cfg.alpha)?;
    let mut rng = rng_for(seed, 0x70CAB);
    let sentences = sample_sentences(corpus, &weights, cfg.sentence_budget, &mut rng)?;
    learn_subwords(&sentences, cfg.target_size)
}
