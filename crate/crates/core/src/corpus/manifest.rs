//! On-disk corpus layout:
//!
//! ```text
//! languages.json                   language specs, feature dim, hours scale
//! {split}/{lang}.jsonl             one ManifestEntry per utterance
//! {split}/{lang}.features.bin      concatenated tensors in the numerics format
//! {split}/{lang}.features.idx.json [id, byte_offset, byte_len] per utterance
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Cursor, Write};
use std::path::Path;

use babel_numerics::{encoded_len, read_tensor, write_tensor};
use serde::{Deserialize, Serialize};

use super::{LanguageSpec, MultilingualCorpus, Split, Utterance};
use crate::error::{io_err, json_err, Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub lang: String,
    pub n_frames: usize,
    /// Relative to the corpus directory.
    pub feature_file: String,
    pub byte_offset: u64,
    pub transcript: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LanguagesFile {
    feature_dim: usize,
    hours_per_utterance: Option<f64>,
    languages: Vec<LanguageSpec>,
}

pub fn write_corpus(corpus: &MultilingualCorpus, dir: &Path) -> Result<()> {
    corpus.validate()?;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let header = LanguagesFile {
        feature_dim: corpus.feature_dim,
        hours_per_utterance: corpus.hours_per_utterance,
        languages: corpus.languages.clone(),
    };
    let path = dir.join("languages.json");
    let text = serde_json::to_string_pretty(&header).map_err(json_err("languages.json"))?;
    fs::write(&path, text + "\n").map_err(io_err(&path))?;

    for split in Split::ALL {
        let sdir = dir.join(split.name());
        fs::create_dir_all(&sdir).map_err(io_err(&sdir))?;
        for (lang, utts) in corpus.split(split) {
            let feature_file = format!("{}/{lang}.features.bin", split.name());
            let bin_path = dir.join(&feature_file);
            let mut bin = BufWriter::new(fs::File::create(&bin_path).map_err(io_err(&bin_path))?);
            let mut manifest = String::new();
            let mut index = Vec::new();
            let mut offset = 0u64;
            for u in utts {
                write_tensor(&mut bin, &u.features)?;
                let len = encoded_len(&u.features) as u64;
                let entry = ManifestEntry {
                    id: u.id.clone(),
                    lang: lang.clone(),
                    n_frames: u.duration_frames(),
                    feature_file: feature_file.clone(),
                    byte_offset: offset,
                    transcript: u.transcript.clone(),
                };
                manifest.push_str(&serde_json::to_string(&entry).map_err(json_err(&u.id))?);
                manifest.push('\n');
                index.push((u.id.clone(), offset, len));
                offset += len;
            }
            bin.flush().map_err(io_err(&bin_path))?;
            let mpath = sdir.join(format!("{lang}.jsonl"));
            fs::write(&mpath, manifest).map_err(io_err(&mpath))?;
            let ipath = sdir.join(format!("{lang}.features.idx.json"));
            let itext = serde_json::to_string(&index).map_err(json_err("feature index"))?;
            fs::write(&ipath, itext + "\n").map_err(io_err(&ipath))?;
        }
    }
    Ok(())
}

fn read_manifest(dir: &Path, path: &Path, lang: &str) -> Result<Vec<Utterance>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut blobs: BTreeMap<String, Vec<u8>> = BTreeMap::new();
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let ctx = format!("{}:{}", path.display(), lineno + 1);
        let e: ManifestEntry = serde_json::from_str(line).map_err(json_err(&ctx))?;
        if e.lang != lang {
            return Err(Error::Corpus(format!(
                "{ctx}: entry for '{}' in {lang} manifest",
                e.lang
            )));
        }
        if !blobs.contains_key(&e.feature_file) {
            let p = dir.join(&e.feature_file);
            let bytes = fs::read(&p).map_err(io_err(&p))?;
            blobs.insert(e.feature_file.clone(), bytes);
        }
        let blob = &blobs[&e.feature_file];
        let start = usize::try_from(e.byte_offset)
            .ok()
            .filter(|&s| s < blob.len())
            .ok_or_else(|| Error::Corpus(format!("{ctx}: byte offset past end of {}", e.feature_file)))?;
        let features = read_tensor(&mut Cursor::new(&blob[start..]))?;
        if features.rank() != 2 || features.rows() != e.n_frames {
            return Err(Error::Corpus(format!(
                "{ctx}: stored features have shape {:?}, manifest says {} frames",
                features.shape(),
                e.n_frames
            )));
        }
        out.push(Utterance {
            id: e.id,
            lang: e.lang,
            features,
            transcript: e.transcript,
        });
    }
    Ok(out)
}

/// Loads a corpus written by [`write_corpus`] and validates every utterance.
/// Missing split manifests are treated as empty.
pub fn read_corpus(dir: &Path) -> Result<MultilingualCorpus> {
    let path = dir.join("languages.json");
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let header: LanguagesFile = serde_json::from_str(&text).map_err(json_err(path.display().to_string()))?;
    let mut corpus = MultilingualCorpus {
        languages: header.languages,
        feature_dim: header.feature_dim,
        hours_per_utterance: header.hours_per_utterance,
        train: BTreeMap::new(),
        dev: BTreeMap::new(),
        test: BTreeMap::new(),
    };
    for split in Split::ALL {
        for lang in corpus.lang_ids() {
            let mpath = dir.join(split.name()).join(format!("{lang}.jsonl"));
            if mpath.exists() {
                let utts = read_manifest(dir, &mpath, &lang)?;
                corpus.split_mut(split).insert(lang, utts);
            }
        }
    }
    corpus.validate()?;
    Ok(corpus)
}
