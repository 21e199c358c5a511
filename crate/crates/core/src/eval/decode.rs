use serde::{Deserialize, Serialize};

use super::error_rate;
use crate::corpus::{MetricKind, MultilingualCorpus, Split};
use crate::error::{Error, Result};
use crate::model::{LanguageGroups, ModelParameters};
use crate::tokenizer::Vocabulary;

/// Language-embedding argument and decoder head for `lang`.
pub fn route<'a>(params: &ModelParameters, groups: &LanguageGroups, lang: &'a str) -> Result<(Option<&'a str>, usize)> {
    let c = params.config();
    let embed = (c.lang_embed_dim > 0).then_some(lang);
    let head = if c.n_heads == 1 { 0 } else { groups.route_head(lang)? };
    Ok((embed, head))
}

/// Greedy transcription of one utterance, capped at twice the encoder
/// length plus ten tokens.
pub fn transcribe(
    params: &ModelParameters,
    vocabs: &[Vocabulary],
    groups: &LanguageGroups,
    lang: &str,
    features: &babel_numerics::Tensor,
) -> Result<String> {
    let (embed, head) = route(params, groups, lang)?;
    let vocab = vocabs
        .get(head)
        .ok_or_else(|| Error::Eval(format!("no vocabulary for head {head}")))?;
    let max_len = 2 * params.config().encoder_len(features.rows()) + 10;
    let ids = params.decode_greedy(features, embed, head, max_len)?;
    vocab.decode(&ids)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LanguageRates {
    pub lang: String,
    pub metric_kind: MetricKind,
    pub cer: f64,
    pub wer: f64,
    pub n_utterances: usize,
}

impl LanguageRates {
    /// The language's own metric: CER for space-free scripts, WER otherwise.
    pub fn rate(&self) -> f64 {
        match self.metric_kind {
            MetricKind::Wer => self.wer,
            MetricKind::Cer => self.cer,
        }
    }
}

/// Decodes the first `limit` utterances (all when `None`) of `split` for each
/// language and scores them.
pub fn evaluate_languages(
    params: &ModelParameters,
    vocabs: &[Vocabulary],
    groups: &LanguageGroups,
    corpus: &MultilingualCorpus,
    split: Split,
    langs: &[String],
    limit: Option<usize>,
) -> Result<Vec<LanguageRates>> {
    langs
        .iter()
        .map(|lang| {
            let spec = corpus.language(lang)?;
            let utts = corpus.utterances(split, lang);
            let utts = &utts[..limit.unwrap_or(utts.len()).min(utts.len())];
            if utts.is_empty() {
                return Err(Error::Eval(format!("{lang} has no {} utterances", split.name())));
            }
            let refs: Vec<&str> = utts.iter().map(|u| u.transcript.as_str()).collect();
            let hyps = utts
                .iter()
                .map(|u| transcribe(params, vocabs, groups, lang, &u.features))
                .collect::<Result<Vec<_>>>()?;
            Ok(LanguageRates {
                lang: lang.clone(),
                metric_kind: spec.metric,
                cer: error_rate(&refs, &hyps, MetricKind::Cer)?,
                wer: error_rate(&refs, &hyps, MetricKind::Wer)?,
                n_utterances: utts.len(),
            })
        })
        .collect()
}
