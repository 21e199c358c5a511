use std::path::{Path, PathBuf};

use babel_core::corpus::MultilingualCorpus;
use babel_core::model::{LanguageGroups, ModelConfig};
use babel_core::sampler::SamplerConfig;
use babel_core::tokenizer::{build_vocab, grapheme_vocab, VocabConfig, Vocabulary};
use babel_core::trainer::{Checkpoint, Mode, TrainerConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VocabKind {
    #[default]
    Subword,
    Grapheme,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VocabSpec {
    pub kind: VocabKind,
    pub alpha: f64,
    pub target_size: usize,
    pub sentence_budget: usize,
}

impl Default for VocabSpec {
    fn default() -> Self {
        let c = VocabConfig::default();
        Self {
            kind: VocabKind::Subword,
            alpha: c.alpha,
            target_size: c.target_size,
            sentence_budget: c.sentence_budget,
        }
    }
}

impl VocabSpec {
    pub fn config(&self) -> VocabConfig {
        VocabConfig {
            alpha: self.alpha,
            target_size: self.target_size,
            sentence_budget: self.sentence_budget,
        }
    }
}

/// Either a named preset or a full model configuration. Vocabulary sizes,
/// head count and the language list are always filled in from the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub preset: Option<String>,
    pub config: Option<ModelConfig>,
    /// Language-embedding width for `joint_lang_emb` runs.
    pub lang_embed_dim: usize,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            preset: Some("toy".into()),
            config: None,
            lang_embed_dim: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub corpus_dir: PathBuf,
    pub out_dir: PathBuf,
    pub mode: Mode,
    /// Training languages; all corpus languages when absent.
    #[serde(default)]
    pub languages: Option<Vec<String>>,
    #[serde(default)]
    pub model: ModelSpec,
    /// `rng_seed` is replaced by `seed` when the experiment is resolved.
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub vocab: VocabSpec,
    #[serde(default)]
    pub trainer: TrainerConfig,
    /// Required for `multi_head`.
    #[serde(default)]
    pub groups: Option<LanguageGroups>,
    #[serde(default)]
    pub seed: u64,
}

fn config_err(m: impl Into<String>) -> CliError {
    CliError::Config(m.into())
}

impl ExperimentConfig {
    pub fn new(corpus_dir: &Path, out_dir: &Path, mode: Mode) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            corpus_dir: corpus_dir.to_path_buf(),
            out_dir: out_dir.to_path_buf(),
            mode,
            languages: None,
            model: ModelSpec::default(),
            sampler: SamplerConfig::default(),
            vocab: VocabSpec::default(),
            trainer: TrainerConfig {
                mode,
                ..TrainerConfig::default()
            },
            groups: None,
            seed: 0,
        }
    }

    /// Parses JSON, reporting the path of an offending field.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| config_err(format!("at `{}`: {}", e.path(), e.inner())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("experiment config serializes") + "\n"
    }

    /// Reads and validates a config file, including that `corpus_dir` exists.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let cfg = Self::from_json(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        if !cfg.corpus_dir.is_dir() {
            return Err(config_err(format!(
                "corpus_dir: {} does not exist",
                cfg.corpus_dir.display()
            )));
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(config_err(format!(
                "schema_version: expected {SCHEMA_VERSION}, got {}",
                self.schema_version
            )));
        }
        if self.trainer.mode != self.mode {
            return Err(config_err(format!(
                "trainer.mode: {} differs from mode {}",
                self.trainer.mode, self.mode
            )));
        }
        if self.mode == Mode::Finetune {
            return Err(config_err("mode: fine-tuning runs through the finetune command"));
        }
        if self.mode == Mode::MultiHead && self.groups.is_none() {
            return Err(config_err("groups: multi_head requires language groups"));
        }
        if self.mode == Mode::JointLangEmb && self.model.lang_embed_dim == 0 {
            return Err(config_err(
                "model.lang_embed_dim: joint_lang_emb needs a positive width",
            ));
        }
        if let Some(g) = &self.groups {
            g.validate().map_err(|e| config_err(format!("groups: {e}")))?;
        }
        match (&self.model.preset, &self.model.config) {
            (Some(_), Some(_)) | (None, None) => {
                return Err(config_err("model: give exactly one of preset and config"));
            }
            _ => {}
        }
        self.sampler.validate()?;
        self.vocab.config().validate()?;
        self.trainer.validate()?;
        Ok(())
    }

    pub fn training_languages(&self, corpus: &MultilingualCorpus) -> Result<Vec<String>, CliError> {
        let langs = self.languages.clone().unwrap_or_else(|| corpus.lang_ids());
        for l in &langs {
            corpus.language(l).map_err(|e| config_err(format!("languages: {e}")))?;
        }
        if self.mode == Mode::Mono && langs.len() != 1 {
            return Err(config_err("languages: mono mode trains exactly one language"));
        }
        Ok(langs)
    }

    /// Vocabularies, groups, and the freshly initialized checkpoint.
    pub fn initial_checkpoint(&self, corpus: &MultilingualCorpus) -> Result<Checkpoint, CliError> {
        let langs = self.training_languages(corpus)?;
        let groups = match (self.mode, &self.groups) {
            (Mode::MultiHead, Some(g)) => {
                g.check_covers(&langs).map_err(|e| config_err(format!("groups: {e}")))?;
                let kept: Vec<_> = g
                    .groups
                    .iter()
                    .filter(|grp| grp.languages.iter().any(|l| langs.contains(l)))
                    .map(|grp| babel_core::model::LanguageGroup {
                        name: grp.name.clone(),
                        languages: grp.languages.iter().filter(|l| langs.contains(l)).cloned().collect(),
                    })
                    .collect();
                LanguageGroups { groups: kept }
            }
            _ => LanguageGroups::single(&langs),
        };
        let vocabs = groups
            .groups
            .iter()
            .map(|g| make_vocab(corpus, &g.languages, &self.vocab, self.seed))
            .collect::<Result<Vec<_>, _>>()?;
        let sizes: Vec<usize> = vocabs.iter().map(Vocabulary::len).collect();
        let mut model = match (&self.model.preset, &self.model.config) {
            (Some(p), _) => ModelConfig::preset(p, sizes[0]).map_err(|e| config_err(format!("model.preset: {e}")))?,
            (None, Some(c)) => c.clone(),
            (None, None) => return Err(config_err("model: no preset or config")),
        };
        model.input_dim = corpus.feature_dim;
        model = model.with_heads(sizes);
        model.lang_embed_dim = 0;
        model.languages = Vec::new();
        if self.mode == Mode::JointLangEmb {
            model = model.with_language_embedding(self.model.lang_embed_dim, langs.clone());
        }
        model.validate().map_err(|e| config_err(format!("model: {e}")))?;
        Ok(Checkpoint::init(self.mode, &model, vocabs, groups, langs, self.seed)?)
    }

    /// Trainer and sampler settings with the experiment seed applied.
    pub fn resolved_sampler(&self) -> SamplerConfig {
        SamplerConfig {
            rng_seed: self.seed,
            ..self.sampler.clone()
        }
    }
}

pub fn make_vocab(
    corpus: &MultilingualCorpus,
    langs: &[String],
    spec: &VocabSpec,
    seed: u64,
) -> Result<Vocabulary, CliError> {
    Ok(match spec.kind {
        VocabKind::Grapheme => {
            let specs = langs
                .iter()
                .map(|l| corpus.language(l).cloned())
                .collect::<babel_core::Result<Vec<_>>>()?;
            grapheme_vocab(&specs)?
        }
        VocabKind::Subword => build_vocab(corpus, Some(langs), &spec.config(), seed)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip() {
        let mut c = ExperimentConfig::new(Path::new("corpus"), Path::new("out"), Mode::MultiHead);
        c.groups = Some(LanguageGroups::toy());
        c.seed = 9;
        let back = ExperimentConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_json(), c.to_json());
        assert!(c.validate().is_ok());
    }

    #[test]
    fn defaults_follow_the_paper_sampling_settings() {
        let c = ExperimentConfig::new(Path::new("c"), Path::new("o"), Mode::Joint);
        assert_eq!(c.vocab.alpha, 0.5);
        assert_eq!(c.sampler.beta, 0.5);
    }

    #[test]
    fn errors_name_the_field() {
        let c = ExperimentConfig::new(Path::new("c"), Path::new("o"), Mode::Joint);
        let text = c.to_json().replace("\"momentum\": 0.9", "\"momentum\": \"fast\"");
        let err = ExperimentConfig::from_json(&text).unwrap_err().to_string();
        assert!(err.contains("trainer.momentum"), "{err}");
        let mut bad = c.clone();
        bad.sampler.beta = 2.0;
        assert!(bad.validate().unwrap_err().to_string().contains("sampler.beta"));
        let mut mh = ExperimentConfig::new(Path::new("c"), Path::new("o"), Mode::MultiHead);
        assert!(mh.validate().unwrap_err().to_string().contains("groups"));
        mh.groups = Some(LanguageGroups::toy());
        mh.trainer.mode = Mode::Joint;
        assert!(mh.validate().unwrap_err().to_string().contains("trainer.mode"));
    }
}
