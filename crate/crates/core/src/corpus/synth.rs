//! Synthetic multilingual corpora.
//!
//! Every symbol of a script owns a fixed `frames_per_symbol x feature_dim`
//! template drawn from `(render_seed, symbol)`. An utterance is the
//! concatenation of its symbols' templates plus Gaussian noise, so the
//! audio-to-text mapping is learnable and languages that share a render seed
//! share acoustics for their common graphemes.

use std::collections::{BTreeMap, BTreeSet};

use babel_numerics::Tensor;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{LanguageSpec, MetricKind, MultilingualCorpus, Split, Utterance};
use crate::error::{Error, Result};
use crate::util::{mix_seed, rng_for, str_seed};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub frames_per_symbol: usize,
    pub feature_dim: usize,
    pub noise_std: f64,
    pub dev_size: usize,
    pub test_size: usize,
    /// Words per language lexicon; raised to the grapheme count if smaller.
    pub lexicon_size: usize,
    pub word_len: (usize, usize),
    pub words_per_sentence: (usize, usize),
    pub hours_per_utterance: Option<f64>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            frames_per_symbol: 4,
            feature_dim: 80,
            noise_std: 0.1,
            dev_size: 50,
            test_size: 50,
            lexicon_size: 40,
            word_len: (2, 4),
            words_per_sentence: (2, 4),
            hours_per_utterance: Some(1.0),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synth: {m}")));
        if self.frames_per_symbol == 0 || self.feature_dim == 0 {
            return bad("frames_per_symbol and feature_dim must be positive");
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return bad("noise_std must be finite and non-negative");
        }
        if self.word_len.0 == 0 || self.word_len.0 > self.word_len.1 {
            return bad("word_len must be a non-empty range starting at 1 or more");
        }
        if self.words_per_sentence.0 == 0 || self.words_per_sentence.0 > self.words_per_sentence.1 {
            return bad("words_per_sentence must be a non-empty range starting at 1 or more");
        }
        if self.dev_size == 0 || self.test_size == 0 {
            return bad("dev_size and test_size must be positive");
        }
        if let Some(h) = self.hours_per_utterance {
            if !(h > 0.0) || !h.is_finite() {
                return bad("hours_per_utterance must be positive");
            }
        }
        Ok(())
    }
}

fn template(render_seed: u64, symbol: char, cfg: &SynthConfig) -> Vec<f64> {
    let mut rng = rng_for(render_seed, 0x7E57_0000_0000 ^ u64::from(u32::from(symbol)));
    (0..cfg.frames_per_symbol * cfg.feature_dim)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect()
}

/// Noise-free rendering of a transcript: the concatenated symbol templates.
pub fn render_clean(transcript: &str, render_seed: u64, cfg: &SynthConfig) -> Result<Tensor> {
    let mut cache: BTreeMap<char, Vec<f64>> = BTreeMap::new();
    let mut data = Vec::new();
    for c in transcript.chars() {
        let t = cache.entry(c).or_insert_with(|| template(render_seed, c, cfg));
        data.extend_from_slice(t);
    }
    let frames = transcript.chars().count() * cfg.frames_per_symbol;
    if frames == 0 {
        return Err(Error::EmptyTranscript);
    }
    Ok(Tensor::new(&[frames, cfg.feature_dim], data)?)
}

fn lexicon(spec: &LanguageSpec, seed: u64, cfg: &SynthConfig) -> Vec<String> {
    let mut rng = rng_for(seed, str_seed(&spec.lang_id) ^ 0x1E81C0);
    let g = &spec.graphemes;
    (0..cfg.lexicon_size.max(g.len()))
        .map(|i| {
            // the first letter cycles so every grapheme is attested
            let len = rng.random_range(cfg.word_len.0..=cfg.word_len.1);
            std::iter::once(g[i % g.len()])
                .chain((1..len).map(|_| g[rng.random_range(0..g.len())]))
                .collect()
        })
        .collect()
}

fn sentence<R: Rng>(lex: &[String], sep: &str, rng: &mut R, cfg: &SynthConfig) -> String {
    let words = rng.random_range(cfg.words_per_sentence.0..=cfg.words_per_sentence.1);
    (0..words)
        .map(|_| lex[rng.random_range(0..lex.len())].as_str())
        .collect::<Vec<_>>()
        .join(sep)
}

/// Transcripts only, drawn from the same lexicon [`synth_corpus`] uses for
/// `spec`. Cheap enough for vocabulary experiments at large sizes.
pub fn synth_transcripts(spec: &LanguageSpec, n: usize, seed: u64, cfg: &SynthConfig) -> Result<Vec<String>> {
    cfg.validate()?;
    spec.validate()?;
    let lex = lexicon(spec, seed, cfg);
    let mut rng = rng_for(mix_seed(seed, str_seed(&spec.lang_id)), 0x7E47);
    let sep = if spec.space_free() { "" } else { " " };
    Ok((0..n).map(|_| sentence(&lex, sep, &mut rng, cfg)).collect())
}

fn language_split(
    spec: &LanguageSpec,
    lex: &[String],
    n: usize,
    split: Split,
    seed: u64,
    cfg: &SynthConfig,
) -> Result<Vec<Utterance>> {
    let mut rng = rng_for(mix_seed(seed, str_seed(&spec.lang_id)), split as u64 + 1);
    let noise = Normal::new(0.0, cfg.noise_std).map_err(|e| Error::Config(e.to_string()))?;
    let sep = if spec.space_free() { "" } else { " " };
    let mut templates: BTreeMap<char, Vec<f64>> = BTreeMap::new();
    (0..n)
        .map(|i| {
            let transcript = sentence(lex, sep, &mut rng, cfg);
            let mut data = Vec::with_capacity(transcript.len() * cfg.frames_per_symbol * cfg.feature_dim);
            for c in transcript.chars() {
                let t = templates.entry(c).or_insert_with(|| template(spec.render_seed, c, cfg));
                data.extend(t.iter().map(|v| v + noise.sample(&mut rng)));
            }
            let frames = data.len() / cfg.feature_dim;
            Ok(Utterance {
                id: format!("{}-{}-{i:05}", spec.lang_id, split.name()),
                lang: spec.lang_id.clone(),
                features: Tensor::new(&[frames, cfg.feature_dim], data)?,
                transcript,
            })
        })
        .collect()
}

/// Generates train/dev/test splits for every language. A pure function of
/// `(specs, sizes, seed, cfg)`; languages are rendered in parallel.
pub fn synth_corpus(
    specs: &[LanguageSpec],
    sizes: &[usize],
    seed: u64,
    cfg: &SynthConfig,
) -> Result<MultilingualCorpus> {
    cfg.validate()?;
    if specs.is_empty() || specs.len() != sizes.len() {
        return Err(Error::Corpus(format!(
            "{} language specs but {} sizes",
            specs.len(),
            sizes.len()
        )));
    }
    let mut seen = BTreeSet::new();
    for (spec, &n) in specs.iter().zip(sizes) {
        spec.validate()?;
        if !seen.insert(spec.lang_id.as_str()) {
            return Err(Error::Corpus(format!("duplicate language id '{}'", spec.lang_id)));
        }
        if n == 0 {
            return Err(Error::Corpus(format!("{}: size must be positive", spec.lang_id)));
        }
    }
    let rendered: Vec<_> = specs
        .par_iter()
        .zip(sizes)
        .map(|(spec, &n)| {
            let lex = lexicon(spec, seed, cfg);
            let train = language_split(spec, &lex, n, Split::Train, seed, cfg)?;
            let dev = language_split(spec, &lex, cfg.dev_size, Split::Dev, seed, cfg)?;
            let test = language_split(spec, &lex, cfg.test_size, Split::Test, seed, cfg)?;
            Ok((spec.lang_id.clone(), train, dev, test))
        })
        .collect::<Result<_>>()?;
    let mut corpus = MultilingualCorpus {
        languages: specs.to_vec(),
        feature_dim: cfg.feature_dim,
        hours_per_utterance: cfg.hours_per_utterance,
        train: BTreeMap::new(),
        dev: BTreeMap::new(),
        test: BTreeMap::new(),
    };
    for (lang, train, dev, test) in rendered {
        corpus.train.insert(lang.clone(), train);
        corpus.dev.insert(lang.clone(), dev);
        corpus.test.insert(lang, test);
    }
    Ok(corpus)
}

const LATIN_SEED: u64 = 11;
const CYRILLIC_SEED: u64 = 22;

/// The five-language toy set: three Latin-script languages and two
/// Cyrillic-script ones, the last of which is written without spaces.
/// Pair with [`TOY_SIZES`].
pub fn toy_languages() -> Vec<LanguageSpec> {
    vec![
        LanguageSpec::new("la", "abcdefghijklmnop", MetricKind::Wer, LATIN_SEED),
        LanguageSpec::new("lb", "abcdefghijklmnoq", MetricKind::Wer, LATIN_SEED),
        LanguageSpec::new("ca", "абвгдежзиклмнопр", MetricKind::Wer, CYRILLIC_SEED),
        LanguageSpec::new("lc", "abcdefghijkrst", MetricKind::Wer, LATIN_SEED),
        LanguageSpec::new("cb", "абвгдежзийф", MetricKind::Cer, CYRILLIC_SEED),
    ]
}

pub const TOY_SIZES: [usize; 5] = [1000, 1000, 1000, 100, 100];

/// A Latin-script language absent from [`toy_languages`], with three letters
/// no toy language uses.
pub fn toy_unseen_language() -> LanguageSpec {
    LanguageSpec::new("ld", "abcdefghuvw", MetricKind::Wer, LATIN_SEED)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            dev_size: 3,
            test_size: 3,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn shares_follow_sizes() {
        let specs = &toy_languages()[..2];
        let c = synth_corpus(specs, &[100, 10], 1, &small()).unwrap();
        let s = c.stats();
        assert!((s.languages[0].p - 100.0 / 110.0).abs() < 1e-15);
        assert!((s.languages[1].p - 10.0 / 110.0).abs() < 1e-15);
        c.validate().unwrap();
    }

    #[test]
    fn deterministic() {
        let specs = toy_languages();
        let a = synth_corpus(&specs, &[5, 4, 3, 2, 1], 9, &small()).unwrap();
        let b = synth_corpus(&specs, &[5, 4, 3, 2, 1], 9, &small()).unwrap();
        assert_eq!(a, b);
        let c = synth_corpus(&specs, &[5, 4, 3, 2, 1], 10, &small()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_bad_input() {
        let mut specs = toy_languages()[..2].to_vec();
        assert!(synth_corpus(&specs, &[1, 0], 0, &small()).is_err());
        assert!(synth_corpus(&specs, &[1], 0, &small()).is_err());
        specs[1].lang_id = "la".into();
        assert!(synth_corpus(&specs, &[1, 1], 0, &small()).is_err());
    }

    #[test]
    fn grapheme_template_is_transcript_local() {
        let spec = &toy_languages()[0];
        let cfg = SynthConfig {
            noise_std: 0.0,
            ..small()
        };
        let c = synth_corpus(std::slice::from_ref(spec), &[40], 3, &cfg).unwrap();
        let fps = cfg.frames_per_symbol;
        let width = fps * cfg.feature_dim;
        // collect every rendering of 'a' and check they coincide
        let mut seen: Vec<Vec<f64>> = Vec::new();
        for u in c.utterances(Split::Train, "la") {
            for (i, ch) in u.transcript.chars().enumerate() {
                if ch == 'a' {
                    seen.push(u.features.data()[i * width..(i + 1) * width].to_vec());
                }
            }
            let clean = render_clean(&u.transcript, spec.render_seed, &cfg).unwrap();
            assert_eq!(clean.data(), u.features.data());
        }
        assert!(seen.len() >= 2);
        assert!(seen.iter().all(|s| s == &seen[0]));
    }

    #[test]
    fn noise_level_matches_config() {
        let spec = &toy_languages()[0];
        let cfg = small();
        let c = synth_corpus(std::slice::from_ref(spec), &[30], 5, &cfg).unwrap();
        let (mut ss, mut n) = (0.0, 0usize);
        for u in c.utterances(Split::Train, "la") {
            let clean = render_clean(&u.transcript, spec.render_seed, &cfg).unwrap();
            for (a, b) in u.features.data().iter().zip(clean.data()) {
                ss += (a - b).powi(2);
                n += 1;
            }
        }
        let std = (ss / n as f64).sqrt();
        assert!((std - 0.1).abs() < 0.005, "empirical noise std {std}");
    }

    #[test]
    fn shared_script_shares_templates() {
        let cfg = small();
        let a = render_clean("abc", LATIN_SEED, &cfg).unwrap();
        let b = render_clean("abc", LATIN_SEED, &cfg).unwrap();
        let c = render_clean("abc", CYRILLIC_SEED, &cfg).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn toy_set_is_valid() {
        let specs = toy_languages();
        for s in &specs {
            s.validate().unwrap();
        }
        assert_eq!(specs.iter().filter(|s| s.space_free()).count(), 1);
        toy_unseen_language().validate().unwrap();
        assert!(!specs.iter().any(|s| s.lang_id == toy_unseen_language().lang_id));
        let c = synth_corpus(&specs, &[2, 2, 2, 2, 2], 0, &small()).unwrap();
        for u in c.utterances(Split::Train, "cb") {
            assert!(!u.transcript.contains(' '));
        }
    }
}
