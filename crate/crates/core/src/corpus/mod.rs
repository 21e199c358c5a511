//! Multilingual corpora: language descriptions, utterance stores, statistics,
//! the synthetic generator, the log-mel frontend and manifest I/O.

mod logmel;
mod manifest;
mod synth;
mod text;

use std::collections::{BTreeMap, BTreeSet};

use babel_numerics::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use logmel::{logmel, LOG_FLOOR, N_MELS};
pub use manifest::{read_corpus, write_corpus, ManifestEntry};
pub use synth::{
    render_clean, synth_corpus, synth_transcripts, toy_languages, toy_unseen_language, SynthConfig, TOY_SIZES,
};
pub use text::normalize_text;

/// Frame rate of every feature sequence (10 ms hop).
pub const FRAMES_PER_SECOND: f64 = 100.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum MetricKind {
    Wer,
    Cer,
}

/// A language: its orthography plus the key used to render synthetic audio.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LanguageSpec {
    pub lang_id: String,
    pub graphemes: Vec<char>,
    /// `Cer` exactly for space-free scripts.
    pub metric: MetricKind,
    pub render_seed: u64,
}

impl LanguageSpec {
    pub fn new(lang_id: &str, graphemes: &str, metric: MetricKind, render_seed: u64) -> Self {
        Self {
            lang_id: lang_id.to_string(),
            graphemes: graphemes.chars().collect(),
            metric,
            render_seed,
        }
    }

    pub fn space_free(&self) -> bool {
        self.metric == MetricKind::Cer
    }

    pub fn has_grapheme(&self, c: char) -> bool {
        self.graphemes.contains(&c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lang_id.is_empty() || self.lang_id.chars().any(|c| c.is_whitespace() || c == '/') {
            return Err(Error::Corpus(format!("invalid language id '{}'", self.lang_id)));
        }
        if self.graphemes.is_empty() {
            return Err(Error::Corpus(format!("{}: empty grapheme set", self.lang_id)));
        }
        let unique: BTreeSet<char> = self.graphemes.iter().copied().collect();
        if unique.len() != self.graphemes.len() {
            return Err(Error::Corpus(format!("{}: duplicate graphemes", self.lang_id)));
        }
        if self.graphemes.iter().any(|c| c.is_whitespace()) {
            return Err(Error::Corpus(format!("{}: whitespace grapheme", self.lang_id)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub lang: String,
    /// `T x F` feature frames.
    pub features: Tensor,
    pub transcript: String,
}

impl Utterance {
    pub fn duration_frames(&self) -> usize {
        self.features.rows()
    }

    pub fn validate(&self, spec: &LanguageSpec) -> Result<()> {
        if self.features.rank() != 2 || self.features.rows() == 0 {
            return Err(Error::Corpus(format!("{}: features must be T x F", self.id)));
        }
        if self.transcript.trim().is_empty() {
            return Err(Error::Corpus(format!("{}: empty transcript", self.id)));
        }
        if let Some(c) = self.transcript.chars().find(|&c| c != ' ' && !spec.has_grapheme(c)) {
            return Err(Error::Corpus(format!(
                "{}: symbol '{c}' is not a grapheme of {}",
                self.id, spec.lang_id
            )));
        }
        if spec.space_free() && self.transcript.contains(' ') {
            return Err(Error::Corpus(format!("{}: space in space-free language", self.id)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

/// Per-language utterance stores for the train/dev/test splits.
#[derive(Clone, Debug, PartialEq)]
pub struct MultilingualCorpus {
    pub languages: Vec<LanguageSpec>,
    pub feature_dim: usize,
    /// Nominal hours credited per training utterance; `None` means hours come
    /// from the frame count.
    pub hours_per_utterance: Option<f64>,
    pub train: BTreeMap<String, Vec<Utterance>>,
    pub dev: BTreeMap<String, Vec<Utterance>>,
    pub test: BTreeMap<String, Vec<Utterance>>,
}

impl MultilingualCorpus {
    pub fn split(&self, split: Split) -> &BTreeMap<String, Vec<Utterance>> {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }

    pub fn split_mut(&mut self, split: Split) -> &mut BTreeMap<String, Vec<Utterance>> {
        match split {
            Split::Train => &mut self.train,
            Split::Dev => &mut self.dev,
            Split::Test => &mut self.test,
        }
    }

    pub fn language(&self, lang: &str) -> Result<&LanguageSpec> {
        self.languages
            .iter()
            .find(|l| l.lang_id == lang)
            .ok_or_else(|| Error::UnknownLanguage(lang.to_string()))
    }

    pub fn lang_ids(&self) -> Vec<String> {
        self.languages.iter().map(|l| l.lang_id.clone()).collect()
    }

    pub fn utterances(&self, split: Split, lang: &str) -> &[Utterance] {
        self.split(split).get(lang).map_or(&[], Vec::as_slice)
    }

    /// Sub-corpus holding only `langs`, in the given order.
    pub fn restrict(&self, langs: &[String]) -> Result<Self> {
        let mut languages = Vec::new();
        for l in langs {
            languages.push(self.language(l)?.clone());
        }
        let pick = |m: &BTreeMap<String, Vec<Utterance>>| {
            m.iter()
                .filter(|(k, _)| langs.contains(k))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect()
        };
        Ok(Self {
            languages,
            feature_dim: self.feature_dim,
            hours_per_utterance: self.hours_per_utterance,
            train: pick(&self.train),
            dev: pick(&self.dev),
            test: pick(&self.test),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        for spec in &self.languages {
            spec.validate()?;
            if !ids.insert(spec.lang_id.clone()) {
                return Err(Error::Corpus(format!("duplicate language id '{}'", spec.lang_id)));
            }
        }
        for split in Split::ALL {
            for (lang, utts) in self.split(split) {
                let spec = self.language(lang)?;
                for u in utts {
                    if u.lang != *lang {
                        return Err(Error::Corpus(format!("{} filed under {lang}", u.id)));
                    }
                    if u.features.cols() != self.feature_dim {
                        return Err(Error::Corpus(format!(
                            "{}: feature dim {} != {}",
                            u.id,
                            u.features.cols(),
                            self.feature_dim
                        )));
                    }
                    u.validate(spec)?;
                }
            }
        }
        Ok(())
    }

    /// Statistics of the training split.
    pub fn stats(&self) -> CorpusStats {
        let per_lang = self
            .languages
            .iter()
            .map(|spec| {
                let utts = self.utterances(Split::Train, &spec.lang_id);
                let hours = match self.hours_per_utterance {
                    Some(h) => h * utts.len() as f64,
                    None => {
                        let frames: usize = utts.iter().map(Utterance::duration_frames).sum();
                        frames as f64 / FRAMES_PER_SECOND / 3600.0
                    }
                };
                (spec.lang_id.clone(), utts.len(), hours)
            })
            .collect::<Vec<_>>();
        CorpusStats::from_counts(per_lang)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LanguageStats {
    pub lang: String,
    pub n: usize,
    pub hours: f64,
    pub p: f64,
}

/// Training-set sizes `n_i`, hours, `n_max` and natural shares `p_i = n_i / sum n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub languages: Vec<LanguageStats>,
    pub n_max: usize,
}

impl CorpusStats {
    pub fn from_counts(counts: Vec<(String, usize, f64)>) -> Self {
        let total: usize = counts.iter().map(|c| c.1).sum();
        let n_max = counts.iter().map(|c| c.1).max().unwrap_or(0);
        let languages = counts
            .into_iter()
            .map(|(lang, n, hours)| LanguageStats {
                lang,
                n,
                hours,
                p: if total == 0 { 0.0 } else { n as f64 / total as f64 },
            })
            .collect();
        Self { languages, n_max }
    }

    /// Stats with nominal hours equal to the counts.
    pub fn from_sizes(sizes: &[(&str, usize)]) -> Self {
        Self::from_counts(sizes.iter().map(|(l, n)| (l.to_string(), *n, *n as f64)).collect())
    }

    pub fn get(&self, lang: &str) -> Option<&LanguageStats> {
        self.languages.iter().find(|l| l.lang == lang)
    }

    pub fn is_empty(&self) -> bool {
        self.languages.is_empty()
    }

    pub fn restrict(&self, langs: &[String]) -> Self {
        Self::from_counts(
            langs
                .iter()
                .filter_map(|l| self.get(l))
                .map(|s| (s.lang.clone(), s.n, s.hours))
                .collect(),
        )
    }

    /// Plain-text table of the training-data distribution.
    pub fn table(&self) -> String {
        let mut out = String::from("lang      n_utts      hours        p  category\n");
        for l in &self.languages {
            let cat = resource_category(l.hours)
                .map(|c| c.name().to_string())
                .unwrap_or_else(|_| "-".into());
            out.push_str(&format!(
                "{:<8}{:>8}{:>11.2}{:>9.4}  {cat}\n",
                l.lang, l.n, l.hours, l.p
            ));
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResourceCategory {
    High,
    Mid,
    Low,
}

impl ResourceCategory {
    pub const ALL: [ResourceCategory; 3] = [Self::High, Self::Mid, Self::Low];

    pub fn name(self) -> &'static str {
        match self {
            Self::High => "high",
            Self::Mid => "mid",
            Self::Low => "low",
        }
    }
}

/// High at 600 h and above, Mid in `[300, 600)`, Low below 300 h.
pub fn resource_category(hours: f64) -> Result<ResourceCategory> {
    if !(hours > 0.0) || !hours.is_finite() {
        return Err(Error::Corpus(format!("hours must be positive, got {hours}")));
    }
    Ok(if hours >= 600.0 {
        ResourceCategory::High
    } else if hours >= 300.0 {
        ResourceCategory::Mid
    } else {
        ResourceCategory::Low
    })
}
