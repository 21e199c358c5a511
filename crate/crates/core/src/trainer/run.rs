use std::collections::BTreeMap;
use std::time::Instant;

use babel_numerics::{Graph, Tensor};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{bmuf_sync, sgd_momentum_step, Checkpoint, LogEntry, Mode, TrainerConfig};
use crate::corpus::{MultilingualCorpus, Split};
use crate::error::{Error, Result};
use crate::eval::{evaluate_languages, route, LanguageRates};
use crate::model::{LanguageGroups, ModelParameters};
use crate::sampler::{
    curriculum_order, language_train_weights, spec_augment, AugmentPolicy, Batch, BatchSampler, CurriculumState,
    SamplerConfig,
};
use crate::tokenizer::grapheme_vocab;
use crate::util::{mix_seed, rng_for};

/// Batch-sampling stream: worker `k` draws from `rng_for(seed ^ k, SAMPLER_STREAM)`.
pub const SAMPLER_STREAM: u64 = 0x5A3F;
const AUGMENT_STREAM: u64 = 0xA06;
const DROPOUT_STREAM: u64 = 0xD50;

/// Loss and gradients of one batch.
#[derive(Clone, Debug)]
pub struct BatchResult {
    /// Mean over utterances of each utterance's mean token cross-entropy.
    pub loss: f64,
    /// Per-language `(sum of utterance losses, utterance count)`.
    pub per_language: BTreeMap<String, (f64, usize)>,
    /// One gradient per parameter tensor, in parameter order.
    pub grads: Vec<Tensor>,
}

/// Differentiates the batch-mean loss. `targets[lang][i]` holds the token ids
/// of training utterance `i`; `augment` (policy and its stream) masks
/// features first when given.
#[allow(clippy::too_many_arguments)]
pub fn batch_gradients(
    params: &ModelParameters,
    corpus: &MultilingualCorpus,
    groups: &LanguageGroups,
    targets: &BTreeMap<String, Vec<Vec<usize>>>,
    batch: &[(String, usize)],
    dropout_seed: u64,
    augment: Option<(&AugmentPolicy, &mut ChaCha8Rng)>,
) -> Result<BatchResult> {
    if batch.is_empty() {
        return Err(Error::Sampler("empty batch".into()));
    }
    let mut g = Graph::training(dropout_seed);
    let p = params.register(&mut g);
    let mut augment = augment;
    let mut losses = Vec::with_capacity(batch.len());
    for (lang, idx) in batch {
        let utt = corpus
            .utterances(Split::Train, lang)
            .get(*idx)
            .ok_or_else(|| Error::Sampler(format!("{lang} has no training utterance {idx}")))?;
        let ids = targets
            .get(lang)
            .and_then(|t| t.get(*idx))
            .ok_or_else(|| Error::Sampler(format!("no targets for {lang}/{idx}")))?;
        let features = match augment.as_mut() {
            Some((policy, rng)) => spec_augment(&utt.features, policy, &mut **rng),
            None => utt.features.clone(),
        };
        let (embed, head) = route(params, groups, lang)?;
        losses.push(params.utterance_loss(&mut g, &p, &features, embed, ids, head)?);
    }
    let mut per_language: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for ((lang, _), &l) in batch.iter().zip(&losses) {
        let e = per_language.entry(lang.clone()).or_default();
        e.0 += g.value(l).item()?;
        e.1 += 1;
    }
    let mut total = losses[0];
    for &l in &losses[1..] {
        total = g.add(total, l)?;
    }
    let mean = g.scale(total, 1.0 / batch.len() as f64)?;
    let loss = g.value(mean).item()?;
    let grads = g.backward(mean)?;
    Ok(BatchResult {
        loss,
        per_language,
        grads: p.iter().map(|&v| grads.get(v)).collect(),
    })
}

struct Worker {
    params: ModelParameters,
    velocity: Vec<Tensor>,
    sampler: BatchSampler,
    rng: ChaCha8Rng,
    aug_rng: ChaCha8Rng,
    seed: u64,
}

enum StepStatus {
    Ok(BTreeMap<String, (f64, usize)>),
    Bad(String),
}

/// Result of [`train`]: the checkpoint with the best dev score (or, after
/// divergence, a diagnostic checkpoint of the last good state).
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub final_params: ModelParameters,
    pub diverged: Option<String>,
}

/// Step-wise training driver. [`Trainer::run`] is the usual entry point;
/// [`Trainer::step`] exposes single iterations for inspection.
pub struct Trainer<'a> {
    corpus: &'a MultilingualCorpus,
    tc: TrainerConfig,
    sc: SamplerConfig,
    base: Checkpoint,
    global: ModelParameters,
    delta: Vec<Tensor>,
    workers: Vec<Worker>,
    targets: BTreeMap<String, Vec<Vec<usize>>>,
    curriculum: Option<CurriculumState>,
    augment: Option<AugmentPolicy>,
    active: Vec<String>,
    weights: Vec<f64>,
    lr: f64,
    iteration: usize,
    total_iterations: usize,
    eval_every: usize,
    log: Vec<LogEntry>,
    best: Option<(f64, ModelParameters, usize)>,
    evals_since_best: usize,
    consecutive_bad: usize,
    loss_acc: BTreeMap<String, (f64, usize)>,
    stop: bool,
    diverged: Option<String>,
    start: Instant,
}

impl<'a> Trainer<'a> {
    /// Prepares training of `init.params` on `init.languages`. The log of
    /// `init` is continued.
    pub fn new(
        init: Checkpoint,
        corpus: &'a MultilingualCorpus,
        tc: &TrainerConfig,
        sc: &SamplerConfig,
    ) -> Result<Self> {
        tc.validate()?;
        sc.validate()?;
        init.validate()?;
        if tc.mode != init.mode {
            return Err(Error::Config(format!(
                "trainer mode {} does not match the {} checkpoint",
                tc.mode, init.mode
            )));
        }
        let mut targets = BTreeMap::new();
        let mut total_utts = 0;
        for lang in &init.languages {
            corpus.language(lang)?;
            let (_, head) = route(&init.params, &init.groups, lang)?;
            let utts = corpus.utterances(Split::Train, lang);
            if utts.is_empty() {
                return Err(Error::Corpus(format!("{lang} has no training utterances")));
            }
            total_utts += utts.len();
            let vocab = &init.vocabs[head];
            targets.insert(lang.clone(), utts.iter().map(|u| vocab.encode(&u.transcript)).collect());
        }
        let stats = corpus.stats().restrict(&init.languages);
        let use_curriculum = tc.curriculum && tc.mode != Mode::MultiHead && init.languages.len() > 1;
        let curriculum = if use_curriculum {
            Some(CurriculumState::new(
                curriculum_order(&stats),
                tc.max_stage_iterations,
                tc.cer_gate,
            )?)
        } else {
            None
        };
        let augment = tc.augment.clone().map(|mut p| {
            if curriculum.is_some() {
                p.enabled = false;
            }
            p
        });
        let per_iter = sc.batch_size * tc.workers;
        let iters_per_epoch = total_utts.div_ceil(per_iter).max(1);
        let total_iterations = tc.max_iterations.unwrap_or(tc.epochs * iters_per_epoch);
        let eval_every = if tc.eval_every == 0 {
            iters_per_epoch
        } else {
            tc.eval_every
        };
        let workers = (0..tc.workers)
            .map(|k| {
                let seed = if tc.identical_worker_streams {
                    sc.rng_seed
                } else {
                    sc.rng_seed ^ k as u64
                };
                Worker {
                    params: init.params.clone(),
                    velocity: init.params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect(),
                    sampler: BatchSampler::new(),
                    rng: rng_for(seed, SAMPLER_STREAM),
                    aug_rng: rng_for(seed, AUGMENT_STREAM),
                    seed,
                }
            })
            .collect();
        let mut t = Self {
            corpus,
            tc: tc.clone(),
            sc: sc.clone(),
            global: init.params.clone(),
            delta: init.params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect(),
            workers,
            targets,
            curriculum,
            augment,
            active: Vec::new(),
            weights: Vec::new(),
            lr: tc.lr,
            iteration: init.iteration,
            total_iterations: init.iteration + total_iterations,
            eval_every,
            log: init.log.clone(),
            best: None,
            evals_since_best: 0,
            consecutive_bad: 0,
            loss_acc: BTreeMap::new(),
            stop: false,
            diverged: None,
            start: Instant::now(),
            base: init,
        };
        t.refresh_active()?;
        Ok(t)
    }

    fn refresh_active(&mut self) -> Result<()> {
        self.active = match &self.curriculum {
            Some(c) => c.active().to_vec(),
            None => self.base.languages.clone(),
        };
        let stats = self.corpus.stats().restrict(&self.active);
        self.weights = language_train_weights(&stats, self.sc.beta)?;
        Ok(())
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn is_done(&self) -> bool {
        self.stop || self.iteration >= self.total_iterations
    }

    /// Parameters as of the last synchronization.
    pub fn global_params(&self) -> &ModelParameters {
        &self.global
    }

    pub fn worker_params(&self, k: usize) -> &ModelParameters {
        &self.workers[k].params
    }

    pub fn active_languages(&self) -> &[String] {
        &self.active
    }

    pub fn language_weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn curriculum(&self) -> Option<&CurriculumState> {
        self.curriculum.as_ref()
    }

    pub fn augment_enabled(&self) -> bool {
        self.augment.as_ref().is_some_and(|p| p.enabled)
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn targets(&self) -> &BTreeMap<String, Vec<Vec<usize>>> {
        &self.targets
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    fn push(&mut self, mut e: LogEntry) {
        e.wall_time = Some(self.start.elapsed().as_secs_f64());
        self.log.push(e);
    }

    /// One local step on every worker, then BMUF at block boundaries, the
    /// curriculum update, logging and dev evaluation as scheduled.
    pub fn step(&mut self) -> Result<()> {
        if self.is_done() {
            return Err(Error::Config("training budget exhausted".into()));
        }
        let next = self.iteration + 1;
        let (corpus, groups, targets) = (self.corpus, &self.base.groups, &self.targets);
        let (active, weights) = (&self.active, &self.weights);
        let (bs, lr, tc) = (self.sc.batch_size, self.lr, &self.tc);
        let augment = self.augment.as_ref().filter(|p| p.enabled);
        let statuses: Vec<Result<StepStatus>> = self
            .workers
            .par_iter_mut()
            .map(|w| {
                let batch: Batch = w.sampler.next_batch(corpus, active, weights, bs, &mut w.rng)?;
                let dropout_seed = mix_seed(w.seed ^ DROPOUT_STREAM, next as u64);
                let aug = augment.map(|p| (p, &mut w.aug_rng));
                let r = batch_gradients(&w.params, corpus, groups, targets, &batch, dropout_seed, aug)?;
                if !r.loss.is_finite() {
                    return Ok(StepStatus::Bad(format!("non-finite loss {}", r.loss)));
                }
                match sgd_momentum_step(
                    w.params.tensors_mut(),
                    &mut w.velocity,
                    &r.grads,
                    lr,
                    tc.momentum,
                    tc.grad_clip,
                ) {
                    Ok(_) => Ok(StepStatus::Ok(r.per_language)),
                    Err(Error::NonFiniteGradient) => Ok(StepStatus::Bad("non-finite gradient".into())),
                    Err(e) => Err(e),
                }
            })
            .collect();
        self.iteration = next;
        let mut bad = None;
        for s in statuses {
            match s? {
                StepStatus::Ok(per) => {
                    for (lang, (sum, n)) in per {
                        let e = self.loss_acc.entry(lang).or_default();
                        e.0 += sum;
                        e.1 += n;
                    }
                }
                StepStatus::Bad(detail) => bad = Some(detail),
            }
        }
        if let Some(detail) = bad {
            self.consecutive_bad += 1;
            self.push(LogEntry {
                detail: Some(detail.clone()),
                ..LogEntry::new(next, "step_refused")
            });
            if self.consecutive_bad >= 2 {
                self.push(LogEntry {
                    detail: Some(detail.clone()),
                    ..LogEntry::new(next, "diverged")
                });
                self.diverged = Some(format!("iteration {next}: {detail}"));
                self.stop = true;
                return Ok(());
            }
        } else {
            self.consecutive_bad = 0;
        }
        if next % self.tc.sync_period == 0 {
            self.sync()?;
        }
        self.advance_curriculum()?;
        if next % self.tc.log_every == 0 && !self.loss_acc.is_empty() {
            let loss = std::mem::take(&mut self.loss_acc)
                .into_iter()
                .map(|(l, (s, n))| (l, s / n as f64))
                .collect();
            let entry = LogEntry {
                loss: Some(loss),
                active: Some(self.active.clone()),
                lr: Some(self.lr),
                ..LogEntry::new(next, "train")
            };
            self.push(entry);
        }
        if next % self.eval_every == 0 || next == self.total_iterations {
            self.evaluate()?;
        }
        Ok(())
    }

    fn sync(&mut self) -> Result<()> {
        let mut locals: Vec<Vec<Tensor>> = self.workers.iter().map(|w| w.params.tensors().to_vec()).collect();
        bmuf_sync(
            self.global.tensors_mut(),
            &mut locals,
            &mut self.delta,
            self.tc.block_momentum,
            self.tc.block_lr,
        )?;
        for (w, l) in self.workers.iter_mut().zip(locals) {
            w.params.tensors_mut().clone_from_slice(&l);
        }
        Ok(())
    }

    fn advance_curriculum(&mut self) -> Result<()> {
        let Some(state) = &self.curriculum else { return Ok(()) };
        if state.complete {
            return Ok(());
        }
        let lang = state.last_added().to_string();
        let cer = if self.iteration % self.tc.gate_every == 0 {
            let rates = evaluate_languages(
                &self.global,
                &self.base.vocabs,
                &self.base.groups,
                self.corpus,
                Split::Dev,
                std::slice::from_ref(&lang),
                Some(self.tc.gate_dev_size),
            )?;
            let cer = rates[0].cer;
            self.push(LogEntry {
                lang: Some(lang),
                cer: Some(cer),
                ..LogEntry::new(self.iteration, "gate")
            });
            Some(cer)
        } else {
            None
        };
        let state = self.curriculum.as_mut().expect("checked above");
        if let Some(added) = state.curriculum_step(cer)? {
            let complete = state.complete;
            self.push(LogEntry {
                lang: Some(added),
                cer,
                ..LogEntry::new(self.iteration, "language_added")
            });
            self.refresh_active()?;
            if complete {
                if let Some(p) = self.augment.as_mut() {
                    p.enabled = true;
                    self.push(LogEntry::new(self.iteration, "augment_enabled"));
                }
            }
        }
        Ok(())
    }

    /// Dev rates of every training language under the global parameters.
    pub fn dev_rates(&self) -> Result<Vec<LanguageRates>> {
        evaluate_languages(
            &self.global,
            &self.base.vocabs,
            &self.base.groups,
            self.corpus,
            Split::Dev,
            &self.base.languages,
            self.tc.dev_limit,
        )
    }

    fn evaluate(&mut self) -> Result<()> {
        let rates = self.dev_rates()?;
        let score = rates.iter().map(LanguageRates::rate).sum::<f64>() / rates.len() as f64;
        let entry = LogEntry {
            dev_cer: Some(rates.iter().map(|r| (r.lang.clone(), r.cer)).collect()),
            dev_wer: Some(rates.iter().map(|r| (r.lang.clone(), r.wer)).collect()),
            score: Some(score),
            active: Some(self.active.clone()),
            lr: Some(self.lr),
            ..LogEntry::new(self.iteration, "eval")
        };
        self.push(entry);
        // Model selection starts once every language is in play.
        if self.curriculum.as_ref().is_some_and(|c| !c.complete) {
            return Ok(());
        }
        if self.best.as_ref().is_none_or(|b| score < b.0) {
            self.best = Some((score, self.global.clone(), self.iteration));
            self.evals_since_best = 0;
        } else {
            self.evals_since_best += 1;
            if self.evals_since_best >= self.tc.plateau_evals {
                self.lr *= self.tc.lr_decay;
                self.evals_since_best = 0;
                self.push(LogEntry {
                    lr: Some(self.lr),
                    ..LogEntry::new(self.iteration, "lr_decay")
                });
            }
        }
        if let Some(target) = self.tc.target_dev_cer {
            if rates.iter().all(|r| r.cer <= target) {
                self.stop = true;
            }
        }
        Ok(())
    }

    /// Runs to the iteration budget, early stop or divergence.
    pub fn run(mut self) -> Result<TrainOutcome> {
        while !self.is_done() {
            self.step()?;
        }
        if self.diverged.is_none() && self.iteration % self.tc.sync_period != 0 {
            self.sync()?;
        }
        let (params, iteration, best_score) = match (&self.diverged, self.best.take()) {
            (None, Some((score, params, it))) => (params, it, Some(score)),
            _ => (self.global.clone(), self.iteration, None),
        };
        let checkpoint = Checkpoint {
            params,
            iteration,
            best_score,
            log: self.log,
            ..self.base
        };
        Ok(TrainOutcome {
            checkpoint,
            final_params: self.global,
            diverged: self.diverged,
        })
    }
}

/// Trains `init` on `corpus` and returns the best checkpoint by dev score.
pub fn train(
    init: Checkpoint,
    corpus: &MultilingualCorpus,
    tc: &TrainerConfig,
    sc: &SamplerConfig,
) -> Result<TrainOutcome> {
    Trainer::new(init, corpus, tc, sc)?.run()
}

/// Step-0 fine-tuning checkpoint for the unseen language `lang`: a fresh
/// grapheme decoder and, for embedding models, a new embedding row. Encoder
/// tensors are copied unchanged.
pub fn prepare_finetune(ckpt: &Checkpoint, corpus: &MultilingualCorpus, lang: &str, seed: u64) -> Result<Checkpoint> {
    if ckpt.languages.iter().any(|l| l == lang) || ckpt.params.config().languages.iter().any(|l| l == lang) {
        return Err(Error::KnownLanguage(lang.to_string()));
    }
    let spec = corpus.language(lang)?;
    let vocab = grapheme_vocab(std::slice::from_ref(spec))?;
    let mut rng = rng_for(seed, 0xF1AE);
    let mut params = ckpt.params.reinit_decoder(vocab.len(), &mut rng)?;
    if params.config().lang_embed_dim > 0 {
        params = params.add_language(lang, &mut rng)?;
    }
    let languages = vec![lang.to_string()];
    Ok(Checkpoint {
        mode: Mode::Finetune,
        params,
        vocabs: vec![vocab],
        groups: LanguageGroups::single(&languages),
        languages,
        iteration: 0,
        best_score: None,
        log: Vec::new(),
    })
}

/// Fine-tunes every tensor of `ckpt` on `lang` after [`prepare_finetune`].
/// The log opens and closes with a `finetune` entry holding the dev score
/// before and after.
pub fn finetune(
    ckpt: &Checkpoint,
    corpus: &MultilingualCorpus,
    lang: &str,
    tc: &TrainerConfig,
    sc: &SamplerConfig,
) -> Result<TrainOutcome> {
    let mut init = prepare_finetune(ckpt, corpus, lang, sc.rng_seed)?;
    let tc = TrainerConfig {
        mode: Mode::Finetune,
        ..tc.clone()
    };
    let before = evaluate_languages(
        &init.params,
        &init.vocabs,
        &init.groups,
        corpus,
        Split::Dev,
        &init.languages,
        tc.dev_limit,
    )?;
    init.log.push(LogEntry {
        lang: Some(lang.to_string()),
        score: Some(before[0].rate()),
        cer: Some(before[0].cer),
        detail: Some("before".into()),
        ..LogEntry::new(0, "finetune")
    });
    let mut out = train(init, corpus, &tc, sc)?;
    let ck = &out.checkpoint;
    let after = evaluate_languages(
        &ck.params,
        &ck.vocabs,
        &ck.groups,
        corpus,
        Split::Dev,
        &ck.languages,
        tc.dev_limit,
    )?;
    let last = out.checkpoint.log.last().map_or(0, |e| e.iteration);
    out.checkpoint.log.push(LogEntry {
        lang: Some(lang.to_string()),
        score: Some(after[0].rate()),
        cer: Some(after[0].cer),
        detail: Some("after".into()),
        ..LogEntry::new(last, "finetune")
    });
    Ok(out)
}
