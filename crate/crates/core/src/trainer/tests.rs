use std::collections::BTreeMap;

use super::*;
use crate::corpus::{synth_corpus, toy_languages, toy_unseen_language, MultilingualCorpus, SynthConfig};
use crate::model::{LanguageGroups, ModelConfig};
use crate::sampler::SamplerConfig;
use crate::tokenizer::{grapheme_vocab, Vocabulary};

fn tiny_corpus() -> MultilingualCorpus {
    let mut specs = toy_languages();
    specs.push(toy_unseen_language());
    let cfg = SynthConfig {
        dev_size: 4,
        test_size: 2,
        ..SynthConfig::default()
    };
    synth_corpus(&specs, &[16, 16, 12, 6, 6, 8], 3, &cfg).unwrap()
}

fn langs(l: &[&str]) -> Vec<String> {
    l.iter().map(|s| s.to_string()).collect()
}

fn init(mode: Mode, corpus: &MultilingualCorpus, languages: Vec<String>) -> Checkpoint {
    let specs: Vec<_> = languages.iter().map(|l| corpus.language(l).unwrap().clone()).collect();
    let (config, vocabs, groups) = match mode {
        Mode::MultiHead => {
            let groups = LanguageGroups::toy();
            let vocabs: Vec<Vocabulary> = (0..groups.len())
                .map(|m| {
                    let members: Vec<_> = groups
                        .members(m)
                        .iter()
                        .map(|l| corpus.language(l).unwrap().clone())
                        .collect();
                    grapheme_vocab(&members).unwrap()
                })
                .collect();
            let sizes = vocabs.iter().map(Vocabulary::len).collect();
            (ModelConfig::toy(0).with_heads(sizes), vocabs, groups)
        }
        _ => {
            let v = grapheme_vocab(&specs).unwrap();
            let mut c = ModelConfig::toy(v.len());
            if mode == Mode::JointLangEmb {
                c = c.with_language_embedding(4, languages.clone());
            }
            (c, vec![v], LanguageGroups::single(&languages))
        }
    };
    Checkpoint::init(mode, &config, vocabs, groups, languages, 7).unwrap()
}

fn quick(mode: Mode, iterations: usize) -> TrainerConfig {
    TrainerConfig {
        mode,
        max_iterations: Some(iterations),
        eval_every: 5,
        dev_limit: Some(2),
        max_stage_iterations: 2,
        gate_every: 1,
        gate_dev_size: 2,
        log_every: 1,
        augment: None,
        ..TrainerConfig::default()
    }
}

fn sampler() -> SamplerConfig {
    SamplerConfig {
        batch_size: 4,
        ..SamplerConfig::default()
    }
}

const JOINT: [&str; 5] = ["la", "lb", "ca", "lc", "cb"];

#[test]
fn mode_names_round_trip() {
    for m in Mode::ALL {
        assert_eq!(m.name().parse::<Mode>().unwrap(), m);
        assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.name()));
    }
    assert!("joint-lang-emb".parse::<Mode>().is_err());
}

#[test]
fn config_validation() {
    assert!(TrainerConfig::default().validate().is_ok());
    for bad in [
        TrainerConfig {
            workers: 0,
            ..TrainerConfig::default()
        },
        TrainerConfig {
            sync_period: 0,
            ..TrainerConfig::default()
        },
        TrainerConfig {
            block_momentum: 1.0,
            ..TrainerConfig::default()
        },
        TrainerConfig {
            lr: 0.0,
            ..TrainerConfig::default()
        },
        TrainerConfig {
            momentum: -0.1,
            ..TrainerConfig::default()
        },
    ] {
        assert!(bad.validate().is_err());
    }
    let json = serde_json::to_string(&TrainerConfig::default()).unwrap();
    assert_eq!(
        serde_json::from_str::<TrainerConfig>(&json).unwrap(),
        TrainerConfig::default()
    );
}

#[test]
fn checkpoint_mode_consistency() {
    let corpus = tiny_corpus();
    let ck = init(Mode::Joint, &corpus, langs(&JOINT));
    let mut mono = ck.clone();
    mono.mode = Mode::Mono;
    assert!(mono.validate().is_err());
    let mut emb = ck.clone();
    emb.mode = Mode::JointLangEmb;
    assert!(emb.validate().is_err());
    let mut short = ck;
    short.vocabs.clear();
    assert!(short.validate().is_err());
}

#[test]
fn loss_descends_on_a_frozen_batch_in_every_mode() {
    let corpus = tiny_corpus();
    for (mode, languages) in [
        (Mode::Mono, langs(&["la"])),
        (Mode::Joint, langs(&JOINT)),
        (Mode::JointLangEmb, langs(&JOINT)),
        (Mode::MultiHead, langs(&JOINT)),
    ] {
        let ck = init(mode, &corpus, languages.clone());
        let t = Trainer::new(ck.clone(), &corpus, &quick(mode, 1), &sampler()).unwrap();
        let batch: Vec<(String, usize)> = languages.iter().map(|l| (l.clone(), 1)).collect();
        let before = batch_gradients(&ck.params, &corpus, &ck.groups, t.targets(), &batch, 0, None).unwrap();
        let mut params = ck.params.clone();
        let mut v: Vec<_> = params
            .tensors()
            .iter()
            .map(|x| babel_numerics::Tensor::zeros(x.shape()))
            .collect();
        sgd_momentum_step(params.tensors_mut(), &mut v, &before.grads, 1e-3, 0.0, 0.0).unwrap();
        let after = batch_gradients(&params, &corpus, &ck.groups, t.targets(), &batch, 0, None).unwrap();
        assert!(after.loss < before.loss, "{mode}: {} -> {}", before.loss, after.loss);
    }
    let ft = prepare_finetune(&init(Mode::Joint, &corpus, langs(&JOINT)), &corpus, "ld", 1).unwrap();
    let t = Trainer::new(ft.clone(), &corpus, &quick(Mode::Finetune, 1), &sampler()).unwrap();
    let batch = vec![("ld".to_string(), 0), ("ld".to_string(), 1)];
    let before = batch_gradients(&ft.params, &corpus, &ft.groups, t.targets(), &batch, 0, None).unwrap();
    let mut params = ft.params.clone();
    let mut v: Vec<_> = params
        .tensors()
        .iter()
        .map(|x| babel_numerics::Tensor::zeros(x.shape()))
        .collect();
    sgd_momentum_step(params.tensors_mut(), &mut v, &before.grads, 1e-3, 0.0, 0.0).unwrap();
    let after = batch_gradients(&params, &corpus, &ft.groups, t.targets(), &batch, 0, None).unwrap();
    assert!(after.loss < before.loss);
}

fn strip(log: &[LogEntry]) -> Vec<LogEntry> {
    log.iter().map(LogEntry::without_wall_time).collect()
}

#[test]
fn training_is_deterministic() {
    let corpus = tiny_corpus();
    let run = || {
        let ck = init(Mode::Joint, &corpus, langs(&JOINT));
        let tc = TrainerConfig {
            augment: Some(crate::sampler::AugmentPolicy {
                max_freq_width: 5,
                max_time_width: 3,
                ..Default::default()
            }),
            ..quick(Mode::Joint, 12)
        };
        train(ck, &corpus, &tc, &sampler()).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(strip(&a.checkpoint.log), strip(&b.checkpoint.log));
    assert_eq!(a.final_params, b.final_params);
    assert_eq!(a.checkpoint.params, b.checkpoint.params);
    let train_its: Vec<usize> = a
        .checkpoint
        .log
        .iter()
        .filter(|e| e.event == "train")
        .map(|e| e.iteration)
        .collect();
    assert!(train_its.windows(2).all(|w| w[0] < w[1]));
    assert!(a.checkpoint.log.windows(2).all(|w| w[0].iteration <= w[1].iteration));
}

#[test]
fn curriculum_adds_languages_largest_first_and_then_augments() {
    let corpus = tiny_corpus();
    let ck = init(Mode::Joint, &corpus, langs(&JOINT));
    let tc = TrainerConfig {
        augment: Some(Default::default()),
        ..quick(Mode::Joint, 12)
    };
    let out = train(ck, &corpus, &tc, &sampler()).unwrap();
    let log = &out.checkpoint.log;
    let added: Vec<&str> = log
        .iter()
        .filter(|e| e.event == "language_added")
        .map(|e| e.lang.as_deref().unwrap())
        .collect();
    // sizes 16, 16, 12, 6, 6: ties keep corpus order after the first language
    assert_eq!(added, ["lb", "ca", "lc", "cb"]);
    let done = log
        .iter()
        .position(|e| e.event == "language_added" && e.lang.as_deref() == Some("cb"))
        .unwrap();
    let aug = log.iter().position(|e| e.event == "augment_enabled").unwrap();
    assert_eq!(log[aug].iteration, log[done].iteration);
    assert_eq!(log.iter().filter(|e| e.event == "augment_enabled").count(), 1);
}

#[test]
fn multi_head_skips_the_curriculum() {
    let corpus = tiny_corpus();
    let ck = init(Mode::MultiHead, &corpus, langs(&JOINT));
    let out = train(ck, &corpus, &quick(Mode::MultiHead, 6), &sampler()).unwrap();
    assert!(out
        .checkpoint
        .log
        .iter()
        .all(|e| e.event != "language_added" && e.event != "gate"));
    let first = out.checkpoint.log.iter().find(|e| e.event == "train").unwrap();
    assert_eq!(first.active.as_ref().unwrap().len(), 5);
}

#[test]
fn checkpoint_round_trip_is_byte_identical() {
    let corpus = tiny_corpus();
    let out = train(
        init(Mode::JointLangEmb, &corpus, langs(&JOINT)),
        &corpus,
        &quick(Mode::JointLangEmb, 5),
        &sampler(),
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    out.checkpoint.save(&a).unwrap();
    let loaded = Checkpoint::load(&a).unwrap();
    assert_eq!(loaded, out.checkpoint);
    loaded.save(&b).unwrap();
    let mut names: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 5);
    for n in names {
        assert_eq!(
            std::fs::read(a.join(&n)).unwrap(),
            std::fs::read(b.join(&n)).unwrap(),
            "{n:?}"
        );
    }
}

#[test]
fn divergence_aborts_with_a_diagnostic_checkpoint() {
    let corpus = tiny_corpus();
    let mut ck = init(Mode::Joint, &corpus, langs(&["la", "lb"]));
    let i = ck.params.names().iter().position(|n| n.ends_with("out.b")).unwrap();
    ck.params.tensors_mut()[i].data_mut()[0] = f64::NAN;
    let tc = TrainerConfig {
        curriculum: false,
        ..quick(Mode::Joint, 10)
    };
    let out = train(ck, &corpus, &tc, &sampler()).unwrap();
    assert!(out.diverged.is_some());
    let events: Vec<&str> = out.checkpoint.log.iter().map(|e| e.event.as_str()).collect();
    assert_eq!(events, ["step_refused", "step_refused", "diverged"]);
    assert_eq!(out.checkpoint.iteration, 2);
}

#[test]
fn finetune_rejects_known_languages_and_keeps_the_encoder() {
    let corpus = tiny_corpus();
    let ck = train(
        init(Mode::JointLangEmb, &corpus, langs(&JOINT)),
        &corpus,
        &quick(Mode::JointLangEmb, 3),
        &sampler(),
    )
    .unwrap()
    .checkpoint;
    assert!(matches!(
        prepare_finetune(&ck, &corpus, "la", 0),
        Err(crate::Error::KnownLanguage(_))
    ));
    let step0 = prepare_finetune(&ck, &corpus, "ld", 0).unwrap();
    let enc = |p: &crate::model::ModelParameters| -> BTreeMap<String, babel_numerics::Tensor> {
        p.names()
            .iter()
            .zip(p.tensors())
            .filter(|(n, _)| crate::model::ModelParameters::is_encoder(n) && *n != "enc.lang_embed")
            .map(|(n, t)| (n.clone(), t.clone()))
            .collect()
    };
    assert_eq!(enc(&step0.params), enc(&ck.params));
    let old = ck.params.get("enc.lang_embed").unwrap();
    let new = step0.params.get("enc.lang_embed").unwrap();
    assert_eq!(&new.data()[..old.numel()], old.data());
    assert_eq!(step0.vocabs[0].len(), step0.params.config().vocab_sizes[0]);
    let out = finetune(&ck, &corpus, "ld", &quick(Mode::Finetune, 4), &sampler()).unwrap();
    let ft: Vec<_> = out.checkpoint.log.iter().filter(|e| e.event == "finetune").collect();
    assert_eq!(ft.len(), 2);
    assert_ne!(enc(&out.final_params), enc(&ck.params));
}
