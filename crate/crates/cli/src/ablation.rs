//! The α/β grid: one joint model per setting and seed, scored against
//! monolingual baselines trained for the same number of steps.

use std::collections::BTreeMap;

use babel_core::corpus::{resource_category, MultilingualCorpus, ResourceCategory, Split};
use babel_core::eval::{aggregate_report, evaluate_languages, EvalReport};
use babel_core::model::{LanguageGroups, ModelConfig};
use babel_core::sampler::SamplerConfig;
use babel_core::tokenizer::{build_vocab, grapheme_vocab, VocabConfig, Vocabulary};
use babel_core::trainer::{train, Checkpoint, Mode, TrainerConfig};
use serde::{Deserialize, Serialize};

use crate::svg::{render_box_plot, BoxGroup};
use crate::{config_hash, CliError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Explicit `[alpha, beta]` cells; the full grid when absent.
    pub cells: Option<Vec<[f64; 2]>>,
    /// Languages that get a monolingual baseline; all when absent.
    pub baseline_languages: Option<Vec<String>>,
    /// Training steps for every joint and baseline model.
    pub iterations: usize,
    pub vocab_size: usize,
    pub sentence_budget: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub evals_per_run: usize,
    pub dev_limit: Option<usize>,
    pub split: Split,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            alphas: vec![0.0, 0.5, 1.0],
            betas: vec![0.0, 0.5, 1.0],
            seeds: vec![0, 1, 2],
            cells: None,
            baseline_languages: None,
            iterations: 1500,
            vocab_size: 100,
            sentence_budget: 20_000,
            batch_size: 8,
            lr: 0.05,
            evals_per_run: 5,
            dev_limit: Some(30),
            split: Split::Test,
        }
    }
}

impl AblationConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Config(format!("ablation.{m}")));
        if self.alphas.is_empty() || self.betas.is_empty() || self.seeds.is_empty() {
            return bad("alphas, betas and seeds must be non-empty");
        }
        let cell_values = self.cells.iter().flatten().flatten();
        if self
            .alphas
            .iter()
            .chain(&self.betas)
            .chain(cell_values)
            .any(|v| !(0.0..=1.0).contains(v))
        {
            return bad("alphas and betas must lie in [0, 1]");
        }
        if self.iterations == 0 || self.evals_per_run == 0 || self.batch_size == 0 {
            return bad("iterations, evals_per_run and batch_size must be positive");
        }
        Ok(())
    }

    pub fn grid(&self) -> Vec<[f64; 2]> {
        match &self.cells {
            Some(c) => c.clone(),
            None => self
                .alphas
                .iter()
                .flat_map(|&a| self.betas.iter().map(move |&b| [a, b]))
                .collect(),
        }
    }

    fn trainer(&self, mode: Mode) -> TrainerConfig {
        TrainerConfig {
            mode,
            lr: self.lr,
            max_iterations: Some(self.iterations),
            eval_every: self.iterations.div_ceil(self.evals_per_run),
            dev_limit: self.dev_limit,
            curriculum: false,
            augment: None,
            ..TrainerConfig::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRun {
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
    pub report: EvalReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub config: AblationConfig,
    /// Monolingual baseline rate per seed and language.
    pub baselines: BTreeMap<u64, BTreeMap<String, f64>>,
    pub runs: Vec<AblationRun>,
}

fn categories(corpus: &MultilingualCorpus) -> Result<BTreeMap<String, ResourceCategory>, CliError> {
    corpus
        .stats()
        .languages
        .iter()
        .map(|l| Ok((l.lang.clone(), resource_category(l.hours)?)))
        .collect()
}

fn rates_of(
    ck: &Checkpoint,
    corpus: &MultilingualCorpus,
    split: Split,
) -> Result<Vec<(String, babel_core::corpus::MetricKind, f64)>, CliError> {
    Ok(
        evaluate_languages(&ck.params, &ck.vocabs, &ck.groups, corpus, split, &ck.languages, None)?
            .into_iter()
            .map(|r| (r.lang.clone(), r.metric_kind, r.rate()))
            .collect(),
    )
}

/// Runs the grid over every language of `corpus`. `progress` receives one
/// line per finished model.
pub fn run_ablation(
    corpus: &MultilingualCorpus,
    cfg: &AblationConfig,
    mut progress: impl FnMut(&str),
) -> Result<AblationReport, CliError> {
    cfg.validate()?;
    let langs = corpus.lang_ids();
    let cats = categories(corpus)?;
    let mut baselines = BTreeMap::new();
    let mut runs = Vec::new();
    for &seed in &cfg.seeds {
        let sampler = SamplerConfig {
            batch_size: cfg.batch_size,
            rng_seed: seed,
            ..SamplerConfig::default()
        };
        let mut base = BTreeMap::new();
        let base_langs = cfg.baseline_languages.clone().unwrap_or_else(|| langs.clone());
        for lang in &base_langs {
            let one = vec![lang.clone()];
            let vocab = grapheme_vocab(&[corpus.language(lang)?.clone()])?;
            let model = ModelConfig {
                input_dim: corpus.feature_dim,
                ..ModelConfig::toy(vocab.len())
            };
            let init = Checkpoint::init(Mode::Mono, &model, vec![vocab], LanguageGroups::single(&one), one, seed)?;
            let out = train(init, corpus, &cfg.trainer(Mode::Mono), &sampler)?;
            let rate = rates_of(&out.checkpoint, corpus, cfg.split)?[0].2;
            progress(&format!("seed {seed} baseline {lang}: {rate:.4}"));
            base.insert(lang.clone(), rate);
        }
        let mut vocabs: Vec<(f64, Vocabulary)> = Vec::new();
        for [alpha, beta] in cfg.grid() {
            let vocab = match vocabs.iter().find(|v| v.0 == alpha) {
                Some(v) => v.1.clone(),
                None => {
                    let vc = VocabConfig {
                        alpha,
                        target_size: cfg.vocab_size,
                        sentence_budget: cfg.sentence_budget,
                    };
                    let v = build_vocab(corpus, None, &vc, seed)?;
                    vocabs.push((alpha, v.clone()));
                    v
                }
            };
            let model = ModelConfig {
                input_dim: corpus.feature_dim,
                ..ModelConfig::toy(vocab.len())
            };
            let init = Checkpoint::init(
                Mode::Joint,
                &model,
                vec![vocab],
                LanguageGroups::single(&langs),
                langs.clone(),
                seed,
            )?;
            let sampler = SamplerConfig {
                beta,
                ..sampler.clone()
            };
            let out = train(init, corpus, &cfg.trainer(Mode::Joint), &sampler)?;
            let rates = rates_of(&out.checkpoint, corpus, cfg.split)?;
            let hash = config_hash(&(cfg, alpha, beta, seed));
            let report = aggregate_report(&rates, &cats, Some(&base), cfg.split.name(), &hash)?;
            let low = report.category(ResourceCategory::Low).mean_rel_change_pct;
            progress(&format!(
                "seed {seed} alpha {alpha} beta {beta}: low-resource change {low:?}"
            ));
            runs.push(AblationRun {
                alpha,
                beta,
                seed,
                report,
            });
        }
        baselines.insert(seed, base);
    }
    Ok(AblationReport {
        config: cfg.clone(),
        baselines,
        runs,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

impl AblationReport {
    pub fn run(&self, alpha: f64, beta: f64, seed: u64) -> Option<&AblationRun> {
        self.runs
            .iter()
            .find(|r| r.alpha == alpha && r.beta == beta && r.seed == seed)
    }

    /// Mean relative change of `cat` for one grid cell and seed.
    pub fn category_change(&self, alpha: f64, beta: f64, seed: u64, cat: ResourceCategory) -> Option<f64> {
        self.run(alpha, beta, seed)?.report.category(cat).mean_rel_change_pct
    }

    pub fn languages_csv(&self) -> String {
        let mut s = String::from("alpha,beta,seed,lang,metric_kind,rate,baseline_rate,rel_change_pct,category\n");
        for r in &self.runs {
            for l in &r.report.languages {
                s.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{}\n",
                    r.alpha,
                    r.beta,
                    r.seed,
                    l.lang,
                    serde_json::to_value(l.metric_kind)
                        .ok()
                        .and_then(|v| v.as_str().map(String::from))
                        .unwrap_or_default(),
                    l.rate,
                    cell(l.baseline_rate),
                    cell(l.rel_change_pct),
                    l.category.name()
                ));
            }
        }
        s
    }

    pub fn categories_csv(&self) -> String {
        let mut s = String::from("alpha,beta,seed,category,n_languages,mean_rate,mean_rel_change_pct\n");
        for r in &self.runs {
            for c in &r.report.categories {
                s.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    r.alpha,
                    r.beta,
                    r.seed,
                    c.category.name(),
                    c.n_languages,
                    cell(c.mean_rate),
                    cell(c.mean_rel_change_pct)
                ));
            }
        }
        s
    }

    /// Per-language relative changes pooled over seeds, one box per
    /// category within each (α, β) group.
    pub fn to_svg(&self) -> String {
        let mut groups = Vec::new();
        for [alpha, beta] in self.config.grid() {
            let series = ResourceCategory::ALL
                .iter()
                .map(|&cat| {
                    let values = self
                        .runs
                        .iter()
                        .filter(|r| r.alpha == alpha && r.beta == beta)
                        .flat_map(|r| r.report.languages.iter())
                        .filter(|l| l.category == cat)
                        .filter_map(|l| l.rel_change_pct)
                        .collect();
                    (cat.name().to_string(), values)
                })
                .collect();
            groups.push(BoxGroup {
                label: format!("α={alpha} β={beta}"),
                series,
            });
        }
        render_box_plot(
            &groups,
            "Relative change from monolingual baselines",
            "relative change (%)",
        )
    }
}
