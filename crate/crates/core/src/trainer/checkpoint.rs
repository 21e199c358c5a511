use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Mode;
use crate::error::{io_err, json_err, Error, Result};
use crate::model::{LanguageGroups, ModelConfig, ModelParameters};
use crate::tokenizer::Vocabulary;
use crate::util::rng_for;

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

/// One line of the JSON-lines training log. `event` is one of `train`,
/// `eval`, `language_added`, `augment_enabled`, `lr_decay`, `step_refused`,
/// `diverged`, `finetune`; fields that do not apply are omitted.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogEntry {
    pub iteration: usize,
    pub event: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lang: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cer: Option<f64>,
    /// Mean training loss per language since the previous `train` entry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dev_cer: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dev_wer: Option<BTreeMap<String, f64>>,
    /// Mean of each language's own dev metric; lower is better.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub active: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    /// Seconds since training started; excluded from determinism checks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time: Option<f64>,
}

impl LogEntry {
    pub fn new(iteration: usize, event: &str) -> Self {
        Self {
            iteration,
            event: event.to_string(),
            ..Self::default()
        }
    }

    pub fn without_wall_time(&self) -> Self {
        Self {
            wall_time: None,
            ..self.clone()
        }
    }
}

pub fn log_to_jsonl(log: &[LogEntry]) -> Result<String> {
    let mut s = String::new();
    for e in log {
        s.push_str(&serde_json::to_string(e).map_err(json_err("training log"))?);
        s.push('\n');
    }
    Ok(s)
}

pub fn log_from_jsonl(text: &str) -> Result<Vec<LogEntry>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(json_err(format!("training log line {}", i + 1))))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointConfig {
    schema_version: u32,
    mode: Mode,
    model: ModelConfig,
    languages: Vec<String>,
    iteration: usize,
    best_score: Option<f64>,
    n_vocabularies: usize,
}

/// Everything needed to resume, evaluate or fine-tune a model.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub mode: Mode,
    pub params: ModelParameters,
    /// One vocabulary per decoder head.
    pub vocabs: Vec<Vocabulary>,
    pub groups: LanguageGroups,
    /// Languages the model was trained on.
    pub languages: Vec<String>,
    pub iteration: usize,
    pub best_score: Option<f64>,
    pub log: Vec<LogEntry>,
}

impl Checkpoint {
    /// Freshly initialized model for `mode`, validated for consistency.
    pub fn init(
        mode: Mode,
        config: &ModelConfig,
        vocabs: Vec<Vocabulary>,
        groups: LanguageGroups,
        languages: Vec<String>,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        let params = ModelParameters::build(config, &mut rng_for(seed, 0x1417))?;
        let ck = Self {
            mode,
            params,
            vocabs,
            groups,
            languages,
            iteration: 0,
            best_score: None,
            log: Vec::new(),
        };
        ck.validate()?;
        Ok(ck)
    }

    /// Checks that heads, vocabularies, groups and embeddings agree with `mode`.
    pub fn validate(&self) -> Result<()> {
        let c = self.params.config();
        let bad = |m: String| Err(Error::Config(format!("{} checkpoint: {m}", self.mode.name())));
        if self.vocabs.len() != c.n_heads {
            return bad(format!("{} vocabularies for {} heads", self.vocabs.len(), c.n_heads));
        }
        for (h, v) in self.vocabs.iter().enumerate() {
            if v.len() != c.vocab_sizes[h] {
                return bad(format!(
                    "head {h} has {} outputs but its vocabulary {} tokens",
                    c.vocab_sizes[h],
                    v.len()
                ));
            }
        }
        if self.languages.is_empty() {
            return bad("no languages".into());
        }
        self.groups.validate()?;
        if self.groups.len() != c.n_heads {
            return bad(format!("{} language groups for {} heads", self.groups.len(), c.n_heads));
        }
        self.groups.check_covers(&self.languages)?;
        if c.lang_embed_dim > 0 {
            if let Some(l) = self.languages.iter().find(|l| !c.languages.contains(l)) {
                return bad(format!("no embedding row for '{l}'"));
            }
        }
        let embeds = c.lang_embed_dim > 0;
        match self.mode {
            Mode::Mono if self.languages.len() != 1 => bad("monolingual models train one language".into()),
            Mode::Mono | Mode::Joint if embeds => bad("unexpected language embedding".into()),
            Mode::JointLangEmb if !embeds => bad("language embedding missing".into()),
            Mode::Mono | Mode::Joint | Mode::JointLangEmb | Mode::Finetune if c.n_heads != 1 => {
                bad("expected a single decoder head".into())
            }
            Mode::MultiHead if embeds => bad("multi-head models take no language embedding".into()),
            _ => Ok(()),
        }
    }

    /// Writes `config.json`, `params.bin`, `vocab_{h}.txt`, `groups.json`
    /// and `train_log.jsonl` into `dir`, creating it if needed.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let cfg = CheckpointConfig {
            schema_version: CHECKPOINT_SCHEMA_VERSION,
            mode: self.mode,
            model: self.params.config().clone(),
            languages: self.languages.clone(),
            iteration: self.iteration,
            best_score: self.best_score,
            n_vocabularies: self.vocabs.len(),
        };
        let write = |name: &str, text: &str| {
            let p = dir.join(name);
            fs::write(&p, text).map_err(io_err(p))
        };
        write(
            "config.json",
            &(serde_json::to_string_pretty(&cfg).map_err(json_err("checkpoint config"))? + "\n"),
        )?;
        write(
            "groups.json",
            &(serde_json::to_string_pretty(&self.groups).map_err(json_err("groups"))? + "\n"),
        )?;
        for (h, v) in self.vocabs.iter().enumerate() {
            v.save(&dir.join(format!("vocab_{h}.txt")))?;
        }
        write("train_log.jsonl", &log_to_jsonl(&self.log)?)?;
        let p = dir.join("params.bin");
        let f = fs::File::create(&p).map_err(io_err(&p))?;
        let mut w = BufWriter::new(f);
        self.params.write_to(&mut w)?;
        w.flush().map_err(io_err(&p))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let read = |name: &str| {
            let p = dir.join(name);
            fs::read_to_string(&p).map_err(io_err(p))
        };
        let cfg: CheckpointConfig =
            serde_json::from_str(&read("config.json")?).map_err(json_err("checkpoint config.json"))?;
        if cfg.schema_version != CHECKPOINT_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "checkpoint schema_version {} (expected {CHECKPOINT_SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        cfg.model.validate()?;
        let groups: LanguageGroups = serde_json::from_str(&read("groups.json")?).map_err(json_err("groups.json"))?;
        let vocabs = (0..cfg.n_vocabularies)
            .map(|h| Vocabulary::load(&dir.join(format!("vocab_{h}.txt"))))
            .collect::<Result<Vec<_>>>()?;
        let log = log_from_jsonl(&read("train_log.jsonl")?)?;
        let p = dir.join("params.bin");
        let f = fs::File::open(&p).map_err(io_err(&p))?;
        let params = ModelParameters::read_from(&cfg.model, &mut BufReader::new(f))?;
        let ck = Self {
            mode: cfg.mode,
            params,
            vocabs,
            groups,
            languages: cfg.languages,
            iteration: cfg.iteration,
            best_score: cfg.best_score,
            log,
        };
        ck.validate()?;
        Ok(ck)
    }
}
