//! The `babel` command line: corpus generation, vocabulary building,
//! training, fine-tuning, evaluation and the α/β ablation report.

pub mod ablation;
pub mod config;
pub mod svg;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use babel_core::corpus::{
    read_corpus, resource_category, synth_corpus, toy_languages, toy_unseen_language, write_corpus, MultilingualCorpus,
    Split, SynthConfig, TOY_SIZES,
};
use babel_core::eval::{aggregate_report, embedding_report, evaluate_languages, EvalReport};
use babel_core::model::LanguageGroups;
use babel_core::sampler::SamplerConfig;
use babel_core::tokenizer::VocabConfig;
use babel_core::trainer::{finetune, train, Checkpoint, LogEntry, Mode, TrainOutcome, TrainerConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub use ablation::{run_ablation, AblationConfig, AblationReport};
pub use config::{ExperimentConfig, VocabKind, VocabSpec};

pub const SEED_ENV: &str = "BABEL_SEED";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(babel_core::Error),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("{0}")]
    Io(String),
}

impl From<babel_core::Error> for CliError {
    fn from(e: babel_core::Error) -> Self {
        match e {
            babel_core::Error::Config(m) => CliError::Config(m),
            babel_core::Error::Diverged { iteration, detail } => {
                CliError::Diverged(format!("iteration {iteration}: {detail}"))
            }
            other => CliError::Core(other),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Diverged(_) => 3,
            _ => 1,
        }
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

/// Hex SHA-256 of the value's JSON form.
pub fn config_hash<T: Serialize + ?Sized>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("hashed values serialize");
    hex(&Sha256::digest(&bytes))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Creates `dir` empty. An existing non-empty directory is replaced with
/// `force` and refused without.
pub fn prepare_out_dir(dir: &Path, force: bool) -> Result<(), CliError> {
    if dir.exists() {
        let empty = dir.is_dir() && fs::read_dir(dir).map_err(io(dir))?.next().is_none();
        if !empty {
            if !force {
                return Err(CliError::Config(format!(
                    "{} already exists; pass --force to replace it",
                    dir.display()
                )));
            }
            if dir.is_dir() {
                fs::remove_dir_all(dir).map_err(io(dir))?;
            } else {
                fs::remove_file(dir).map_err(io(dir))?;
            }
        }
    }
    fs::create_dir_all(dir).map_err(io(dir))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(io(path))
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report types serialize") + "\n"
}

/// Seed precedence: command-line flag, then `BABEL_SEED`, then the config.
pub fn resolve_seed(flag: Option<u64>, env: Option<&str>, config: u64) -> Result<u64, CliError> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match env {
        Some(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("{SEED_ENV}: '{v}' is not an unsigned integer"))),
        None => Ok(config),
    }
}

fn env_seed() -> Option<String> {
    std::env::var(SEED_ENV).ok()
}

#[derive(Debug, Parser)]
#[command(
    name = "babel",
    version,
    about = "Multilingual sequence-to-sequence ASR at desk scale"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render the synthetic toy corpus to manifests and feature stores.
    GenCorpus(GenCorpusArgs),
    /// Learn a subword vocabulary with temperature-sampled sentences.
    BuildVocab(BuildVocabArgs),
    Train(TrainArgs),
    /// Adapt a trained checkpoint to a language it has not seen.
    Finetune(FinetuneArgs),
    /// Score a checkpoint and write a per-language and per-category report.
    Eval(EvalArgs),
    /// Run the α/β ablation grid against monolingual baselines.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenCorpusArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Training utterances per toy language, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = TOY_SIZES)]
    pub sizes: Vec<usize>,
    /// Also render the held-out language `ld` with this many utterances.
    #[arg(long)]
    pub unseen: Option<usize>,
    #[arg(long, default_value_t = 50)]
    pub dev_size: usize,
    #[arg(long, default_value_t = 50)]
    pub test_size: usize,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct BuildVocabArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long, default_value_t = 10_000)]
    pub size: usize,
    #[arg(long, default_value_t = 1_000_000)]
    pub budget: usize,
    #[arg(long, value_delimiter = ',')]
    pub languages: Option<Vec<String>>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub force: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OnOff {
    On,
    Off,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CliMode {
    Mono,
    Joint,
    JointLangEmb,
    MultiHead,
}

impl From<CliMode> for Mode {
    fn from(m: CliMode) -> Self {
        match m {
            CliMode::Mono => Mode::Mono,
            CliMode::Joint => Mode::Joint,
            CliMode::JointLangEmb => Mode::JointLangEmb,
            CliMode::MultiHead => Mode::MultiHead,
        }
    }
}

/// Flags override the `--config` file; without one, `--corpus` and
/// `--out-dir` are required.
#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<CliMode>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub sync_period: Option<usize>,
    #[arg(long)]
    pub block_momentum: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long, value_enum)]
    pub curriculum: Option<OnOff>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    pub languages: Option<Vec<String>>,
    /// `toy`, `paper`, or a JSON file of language groups.
    #[arg(long)]
    pub groups: Option<String>,
    #[arg(long, value_enum)]
    pub vocab: Option<VocabKindArg>,
    #[arg(long)]
    pub vocab_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum VocabKindArg {
    Subword,
    Grapheme,
}

#[derive(Debug, Args)]
pub struct FinetuneArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub lang: String,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 300)]
    pub iterations: usize,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Dev,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Dev => Split::Dev,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    /// Utterances per language; all when absent.
    #[arg(long)]
    pub limit: Option<usize>,
    /// A previous `eval_report.json` to compute relative changes against.
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    /// Cluster count for the language-embedding report.
    #[arg(long)]
    pub clusters: Option<usize>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Ablation settings as JSON; defaults otherwise.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub force: bool,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenCorpus(a) => cmd_gen_corpus(&a),
        Command::BuildVocab(a) => cmd_build_vocab(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Finetune(a) => cmd_finetune(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Report(a) => cmd_report(&a),
    }
}

fn load_corpus(dir: &Path) -> Result<MultilingualCorpus, CliError> {
    if !dir.is_dir() {
        return Err(CliError::Config(format!("corpus: {} does not exist", dir.display())));
    }
    Ok(read_corpus(dir)?)
}

pub fn cmd_gen_corpus(a: &GenCorpusArgs) -> Result<(), CliError> {
    let mut specs = toy_languages();
    if a.sizes.len() != specs.len() {
        return Err(CliError::Config(format!(
            "sizes: expected {} values, got {}",
            specs.len(),
            a.sizes.len()
        )));
    }
    if let Some(i) = a.sizes.iter().position(|&n| n == 0) {
        return Err(CliError::Config(format!(
            "sizes: size of '{}' must be positive",
            specs[i].lang_id
        )));
    }
    let mut sizes = a.sizes.clone();
    if let Some(n) = a.unseen {
        specs.push(toy_unseen_language());
        sizes.push(n);
    }
    let cfg = SynthConfig {
        dev_size: a.dev_size,
        test_size: a.test_size,
        ..SynthConfig::default()
    };
    let corpus = synth_corpus(&specs, &sizes, a.seed, &cfg)?;
    prepare_out_dir(&a.out, a.force)?;
    write_corpus(&corpus, &a.out)?;
    print!("{}", corpus.stats().table());
    Ok(())
}

pub fn cmd_build_vocab(a: &BuildVocabArgs) -> Result<(), CliError> {
    let corpus = load_corpus(&a.corpus)?;
    if a.out.exists() && !a.force {
        return Err(CliError::Config(format!(
            "{} already exists; pass --force to replace it",
            a.out.display()
        )));
    }
    let cfg = VocabConfig {
        alpha: a.alpha,
        target_size: a.size,
        sentence_budget: a.budget,
    };
    let vocab = babel_core::tokenizer::build_vocab(&corpus, a.languages.as_deref(), &cfg, a.seed)?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io(parent))?;
    }
    vocab.save(&a.out)?;
    println!("{} tokens written to {}", vocab.len(), a.out.display());
    Ok(())
}

fn parse_groups(spec: &str) -> Result<LanguageGroups, CliError> {
    match spec {
        "toy" => Ok(LanguageGroups::toy()),
        "paper" => Ok(LanguageGroups::paper()),
        path => {
            let p = Path::new(path);
            let text = fs::read_to_string(p).map_err(|e| CliError::Config(format!("groups: {path}: {e}")))?;
            let de = &mut serde_json::Deserializer::from_str(&text);
            serde_path_to_error::deserialize(de)
                .map_err(|e| CliError::Config(format!("groups: at `{}`: {}", e.path(), e.inner())))
        }
    }
}

/// Builds the experiment from `--config` (or defaults) and the flags.
pub fn resolve_train_config(a: &TrainArgs, env: Option<&str>) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => {
            let (Some(corpus), Some(out)) = (&a.corpus, &a.out_dir) else {
                return Err(CliError::Config(
                    "train: give --config or both --corpus and --out-dir".into(),
                ));
            };
            ExperimentConfig::new(corpus, out, a.mode.map_or(Mode::Joint, Mode::from))
        }
    };
    if let Some(c) = &a.corpus {
        cfg.corpus_dir = c.clone();
    }
    if let Some(o) = &a.out_dir {
        cfg.out_dir = o.clone();
    }
    if let Some(m) = a.mode {
        cfg.mode = m.into();
        cfg.trainer.mode = cfg.mode;
    }
    macro_rules! set {
        ($flag:expr, $field:expr) => {
            if let Some(v) = $flag.clone() {
                $field = v;
            }
        };
    }
    set!(a.workers, cfg.trainer.workers);
    set!(a.sync_period, cfg.trainer.sync_period);
    set!(a.block_momentum, cfg.trainer.block_momentum);
    set!(a.alpha, cfg.vocab.alpha);
    set!(a.beta, cfg.sampler.beta);
    set!(a.vocab_size, cfg.vocab.target_size);
    set!(a.epochs, cfg.trainer.epochs);
    set!(a.lr, cfg.trainer.lr);
    if let Some(c) = a.curriculum {
        cfg.trainer.curriculum = c == OnOff::On;
    }
    if a.max_iterations.is_some() {
        cfg.trainer.max_iterations = a.max_iterations;
    }
    if a.languages.is_some() {
        cfg.languages = a.languages.clone();
    }
    if let Some(v) = a.vocab {
        cfg.vocab.kind = match v {
            VocabKindArg::Subword => VocabKind::Subword,
            VocabKindArg::Grapheme => VocabKind::Grapheme,
        };
    }
    if let Some(g) = &a.groups {
        cfg.groups = Some(parse_groups(g)?);
    } else if cfg.mode == Mode::MultiHead && cfg.groups.is_none() {
        cfg.groups = Some(LanguageGroups::toy());
    }
    cfg.seed = resolve_seed(a.seed, env, cfg.seed)?;
    cfg.validate()?;
    Ok(cfg)
}

/// The log as written to disk: wall-clock times are dropped so that reruns
/// produce identical files.
fn reproducible(mut ck: Checkpoint) -> Checkpoint {
    ck.log = ck.log.iter().map(LogEntry::without_wall_time).collect();
    ck
}

fn finish_training(out: TrainOutcome, dir: &Path) -> Result<Checkpoint, CliError> {
    let ck = reproducible(out.checkpoint);
    ck.save(&dir.join("checkpoint"))?;
    if let Some(d) = out.diverged {
        return Err(CliError::Diverged(format!(
            "{d}; diagnostic checkpoint in {}",
            dir.join("checkpoint").display()
        )));
    }
    Ok(ck)
}

fn summarize(ck: &Checkpoint) {
    let score = ck.best_score.map_or("n/a".to_string(), |s| format!("{s:.4}"));
    println!(
        "mode {} languages {} iteration {} best dev score {score}",
        ck.mode,
        ck.languages.join(","),
        ck.iteration
    );
}

pub fn cmd_train(a: &TrainArgs) -> Result<(), CliError> {
    let cfg = resolve_train_config(a, env_seed().as_deref())?;
    let corpus = load_corpus(&cfg.corpus_dir)?;
    let init = cfg.initial_checkpoint(&corpus)?;
    prepare_out_dir(&cfg.out_dir, a.force)?;
    write(&cfg.out_dir.join("experiment.json"), &cfg.to_json())?;
    let out = train(init, &corpus, &cfg.trainer, &cfg.resolved_sampler())?;
    let ck = finish_training(out, &cfg.out_dir)?;
    summarize(&ck);
    Ok(())
}

pub fn cmd_finetune(a: &FinetuneArgs) -> Result<(), CliError> {
    let corpus = load_corpus(&a.corpus)?;
    let ck = Checkpoint::load(&a.checkpoint)?;
    let seed = resolve_seed(a.seed, env_seed().as_deref(), 0)?;
    let tc = TrainerConfig {
        mode: Mode::Finetune,
        lr: a.lr,
        max_iterations: Some(a.iterations),
        eval_every: a.iterations.div_ceil(5).max(1),
        curriculum: false,
        augment: None,
        ..TrainerConfig::default()
    };
    tc.validate()?;
    let sc = SamplerConfig {
        rng_seed: seed,
        ..SamplerConfig::default()
    };
    prepare_out_dir(&a.out_dir, a.force)?;
    let out = finetune(&ck, &corpus, &a.lang, &tc, &sc)?;
    let ck = finish_training(out, &a.out_dir)?;
    for e in ck.log.iter().filter(|e| e.event == "finetune") {
        println!(
            "{} dev score {:.4}",
            e.detail.as_deref().unwrap_or(""),
            e.score.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct EvalSettings<'a> {
    params_sha256: String,
    languages: &'a [String],
    split: &'a str,
    limit: Option<usize>,
    baseline: Option<&'a BTreeMap<String, f64>>,
}

pub fn cmd_eval(a: &EvalArgs) -> Result<(), CliError> {
    let corpus = load_corpus(&a.corpus)?;
    let ck = Checkpoint::load(&a.checkpoint)?;
    let split = Split::from(a.split);
    let baseline = match &a.baseline {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(io(p))?;
            let r: EvalReport =
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("baseline {}: {e}", p.display())))?;
            Some(
                r.languages
                    .iter()
                    .map(|l| (l.lang.clone(), l.rate))
                    .collect::<BTreeMap<_, _>>(),
            )
        }
        None => None,
    };
    let rates = evaluate_languages(
        &ck.params,
        &ck.vocabs,
        &ck.groups,
        &corpus,
        split,
        &ck.languages,
        a.limit,
    )?;
    let rates: Vec<_> = rates
        .iter()
        .map(|r| (r.lang.clone(), r.metric_kind, r.rate()))
        .collect();
    let stats = corpus.stats();
    let cats = ck
        .languages
        .iter()
        .map(|l| {
            let hours = stats.get(l).map(|s| s.hours).unwrap_or(0.0);
            Ok((l.clone(), resource_category(hours)?))
        })
        .collect::<Result<BTreeMap<_, _>, CliError>>()?;
    let params = fs::read(a.checkpoint.join("params.bin")).map_err(io(&a.checkpoint))?;
    let hash = config_hash(&EvalSettings {
        params_sha256: hex(&Sha256::digest(&params)),
        languages: &ck.languages,
        split: split.name(),
        limit: a.limit,
        baseline: baseline.as_ref(),
    });
    let report = aggregate_report(&rates, &cats, baseline.as_ref(), split.name(), &hash)?;
    prepare_out_dir(&a.out, a.force)?;
    write(&a.out.join("eval_report.json"), &report.to_json()?)?;
    write(&a.out.join("eval_report.csv"), &report.to_csv())?;
    write(&a.out.join("eval_categories.csv"), &report.category_csv())?;
    let cfg = ck.params.config();
    if cfg.lang_embed_dim > 0 {
        let table = ck
            .params
            .get("enc.lang_embed")
            .ok_or_else(|| CliError::Io("checkpoint has no language-embedding table".into()))?;
        let n = cfg.languages.len();
        let k = a.clusters.unwrap_or(n.saturating_sub(1).max(1));
        let emb = embedding_report(table, &cfg.languages, k)?;
        write(&a.out.join("embeddings.json"), &to_json(&emb))?;
    }
    print!("{}", report.to_csv());
    Ok(())
}

pub fn cmd_report(a: &ReportArgs) -> Result<(), CliError> {
    let corpus = load_corpus(&a.corpus)?;
    let mut cfg = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            let de = &mut serde_json::Deserializer::from_str(&text);
            serde_path_to_error::deserialize(de)
                .map_err(|e| CliError::Config(format!("{}: at `{}`: {}", p.display(), e.path(), e.inner())))?
        }
        None => AblationConfig::default(),
    };
    if let Some(s) = &a.seeds {
        cfg.seeds = s.clone();
    }
    if let Some(i) = a.iterations {
        cfg.iterations = i;
    }
    cfg.validate()?;
    prepare_out_dir(&a.out, a.force)?;
    let report = run_ablation(&corpus, &cfg, |line| eprintln!("{line}"))?;
    write_ablation(&report, &a.out)?;
    println!("{} runs written to {}", report.runs.len(), a.out.display());
    Ok(())
}

pub fn write_ablation(report: &AblationReport, dir: &Path) -> Result<(), CliError> {
    write(&dir.join("ablation_config.json"), &to_json(&report.config))?;
    write(&dir.join("ablation.json"), &to_json(report))?;
    write(&dir.join("ablation_languages.csv"), &report.languages_csv())?;
    write(&dir.join("ablation_categories.csv"), &report.categories_csv())?;
    write(&dir.join("ablation.svg"), &report.to_svg())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_precedence() {
        assert_eq!(resolve_seed(Some(3), Some("7"), 1).unwrap(), 3);
        assert_eq!(resolve_seed(None, Some("7"), 1).unwrap(), 7);
        assert_eq!(resolve_seed(None, None, 1).unwrap(), 1);
        assert_eq!(resolve_seed(None, Some("x"), 1).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::from(babel_core::Error::Config("x".into())).exit_code(), 2);
        let d = babel_core::Error::Diverged {
            iteration: 4,
            detail: "nan".into(),
        };
        assert_eq!(CliError::from(d).exit_code(), 3);
        assert_eq!(CliError::from(babel_core::Error::Eval("x".into())).exit_code(), 1);
    }

    #[test]
    fn hash_is_stable_hex() {
        let h = config_hash(&("a", 1));
        assert_eq!(h.len(), 64);
        assert_eq!(h, config_hash(&("a", 1)));
        assert_ne!(h, config_hash(&("a", 2)));
    }

    #[test]
    fn flags_override_defaults() {
        let args = Cli::try_parse_from([
            "babel",
            "train",
            "--corpus",
            "c",
            "--out-dir",
            "o",
            "--mode",
            "multi-head",
            "--beta",
            "1",
            "--curriculum",
            "off",
            "--workers",
            "4",
        ])
        .unwrap();
        let Command::Train(t) = args.command else { panic!() };
        let cfg = resolve_train_config(&t, Some("11")).unwrap();
        assert_eq!(cfg.mode, Mode::MultiHead);
        assert_eq!(cfg.trainer.mode, Mode::MultiHead);
        assert_eq!(cfg.groups, Some(LanguageGroups::toy()));
        assert_eq!(
            (cfg.sampler.beta, cfg.trainer.curriculum, cfg.trainer.workers, cfg.seed),
            (1.0, false, 4, 11)
        );
        let bad = Cli::try_parse_from(["babel", "train", "--corpus", "c", "--out-dir", "o", "--beta", "3"]).unwrap();
        let Command::Train(t) = bad.command else { panic!() };
        let err = resolve_train_config(&t, None).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("sampler.beta"));
    }

    #[test]
    fn out_dir_needs_force() {
        let tmp = tempfile::tempdir().unwrap();
        let d = tmp.path().join("x");
        prepare_out_dir(&d, false).unwrap();
        fs::write(d.join("f"), "1").unwrap();
        assert_eq!(prepare_out_dir(&d, false).unwrap_err().exit_code(), 2);
        prepare_out_dir(&d, true).unwrap();
        assert!(fs::read_dir(&d).unwrap().next().is_none());
    }
}
