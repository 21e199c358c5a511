//! Shared subword and grapheme vocabularies.

mod bpe;
mod sampling;

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::corpus::LanguageSpec;
use crate::error::{io_err, Error, Result};

pub use bpe::learn_subwords;
pub use sampling::{build_vocab, language_vocab_weights, sample_sentences, VocabConfig};

pub const PAD: usize = 0;
pub const EOS: usize = 1;
pub const UNK: usize = 2;
pub const SPECIALS: [&str; 3] = ["<pad>", "<eos>", "<unk>"];
/// Prefixes word-initial subword pieces.
pub const WORD_BOUNDARY: char = '\u{2581}';
const UNK_TEXT: char = '\u{fffd}';

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VocabKind {
    Subword,
    Grapheme,
}

#[derive(Clone, Debug)]
pub struct Vocabulary {
    tokens: Vec<String>,
    kind: VocabKind,
    merges: Vec<(String, String)>,
    index: HashMap<String, usize>,
    ranks: HashMap<(usize, usize), (usize, usize)>,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.tokens == other.tokens && self.kind == other.kind && self.merges == other.merges
    }
}

impl Eq for Vocabulary {}

impl Vocabulary {
    pub(crate) fn from_parts(tokens: Vec<String>, kind: VocabKind, merges: Vec<(String, String)>) -> Result<Self> {
        if tokens.len() < SPECIALS.len() || tokens[..3].iter().zip(SPECIALS).any(|(t, s)| t != s) {
            return Err(Error::Tokenizer(
                "vocabulary must start with <pad>, <eos>, <unk>".into(),
            ));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.contains('\n') {
                return Err(Error::Tokenizer(format!("invalid token {t:?} at id {i}")));
            }
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Tokenizer(format!("duplicate token {t:?}")));
            }
        }
        if kind == VocabKind::Grapheme && !merges.is_empty() {
            return Err(Error::Tokenizer("grapheme vocabularies have no merges".into()));
        }
        let mut ranks = HashMap::new();
        for (rank, (l, r)) in merges.iter().enumerate() {
            let id = |s: &str| {
                index
                    .get(s)
                    .copied()
                    .ok_or_else(|| Error::Tokenizer(format!("merge {l:?} {r:?} names unknown token {s:?}")))
            };
            let (li, ri, mi) = (id(l)?, id(r)?, id(&format!("{l}{r}"))?);
            ranks.entry((li, ri)).or_insert((rank, mi));
        }
        Ok(Self {
            tokens,
            kind,
            merges,
            index,
            ranks,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn kind(&self) -> VocabKind {
        self.kind
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    fn symbol(&self, c: char) -> usize {
        let mut buf = [0u8; 4];
        self.id(c.encode_utf8(&mut buf)).unwrap_or(UNK)
    }

    fn encode_word(&self, word: &str, out: &mut Vec<usize>) {
        let mut syms: Vec<usize> = std::iter::once(WORD_BOUNDARY)
            .chain(word.chars())
            .map(|c| self.symbol(c))
            .collect();
        loop {
            let best = syms
                .windows(2)
                .enumerate()
                .filter_map(|(i, w)| self.ranks.get(&(w[0], w[1])).map(|&(rank, id)| (rank, i, id)))
                .min();
            let Some((rank, _, id)) = best else { break };
            let mut merged = Vec::with_capacity(syms.len());
            let mut i = 0;
            while i < syms.len() {
                if i + 1 < syms.len() && self.ranks.get(&(syms[i], syms[i + 1])).map(|r| r.0) == Some(rank) {
                    merged.push(id);
                    i += 2;
                } else {
                    merged.push(syms[i]);
                    i += 1;
                }
            }
            syms = merged;
        }
        out.extend(syms);
    }

    /// Token ids for a normalized transcript, terminated by `EOS`. Symbols
    /// never seen at learning time become `UNK`.
    pub fn encode(&self, text: &str) -> Vec<usize> {
        let mut out = Vec::new();
        match self.kind {
            VocabKind::Grapheme => out.extend(text.chars().map(|c| self.symbol(c))),
            VocabKind::Subword => {
                for w in text.split_whitespace() {
                    self.encode_word(w, &mut out);
                }
            }
        }
        out.push(EOS);
        out
    }

    /// Text for a token sequence; stops at the first `EOS` and skips `PAD`.
    pub fn decode(&self, ids: &[usize]) -> Result<String> {
        let mut s = String::new();
        for &id in ids {
            match id {
                EOS => break,
                PAD => {}
                UNK => s.push(UNK_TEXT),
                _ => s.push_str(
                    self.token(id)
                        .ok_or_else(|| Error::Tokenizer(format!("token id {id} out of range {}", self.len())))?,
                ),
            }
        }
        Ok(match self.kind {
            VocabKind::Grapheme => s,
            VocabKind::Subword => s.replace(WORD_BOUNDARY, " ").trim_start().to_string(),
        })
    }

    /// One token per line; subword vocabularies add a blank line, a
    /// `#merges` header and one `left right` pair per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for t in &self.tokens {
            s.push_str(t);
            s.push('\n');
        }
        if self.kind == VocabKind::Subword {
            s.push_str("\n#merges\n");
            for (l, r) in &self.merges {
                s.push_str(l);
                s.push(' ');
                s.push_str(r);
                s.push('\n');
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.split('\n');
        let mut tokens = Vec::new();
        for line in lines.by_ref() {
            if line.is_empty() {
                break;
            }
            tokens.push(line.to_string());
        }
        let rest: Vec<&str> = lines.collect();
        let (kind, merges) = match rest.split_first() {
            Some((&"#merges", pairs)) => {
                let merges = pairs
                    .iter()
                    .filter(|l| !l.is_empty())
                    .map(|l| {
                        l.split_once(' ')
                            .map(|(a, b)| (a.to_string(), b.to_string()))
                            .ok_or_else(|| Error::Tokenizer(format!("malformed merge line {l:?}")))
                    })
                    .collect::<Result<_>>()?;
                (VocabKind::Subword, merges)
            }
            None => (VocabKind::Grapheme, Vec::new()),
            Some((first, _)) => {
                return Err(Error::Tokenizer(format!(
                    "expected '#merges' after blank line, found {first:?}"
                )))
            }
        };
        Self::from_parts(tokens, kind, merges)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&fs::read_to_string(path).map_err(io_err(path))?)
    }
}

/// Specials, then space, then the union of graphemes in order of first
/// appearance across `specs`.
pub fn grapheme_vocab(specs: &[LanguageSpec]) -> Result<Vocabulary> {
    if specs.is_empty() {
        return Err(Error::Tokenizer(
            "grapheme vocabulary needs at least one language".into(),
        ));
    }
    let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
    tokens.push(" ".into());
    for spec in specs {
        for c in &spec.graphemes {
            let t = c.to_string();
            if !tokens.contains(&t) {
                tokens.push(t);
            }
        }
    }
    Vocabulary::from_parts(tokens, VocabKind::Grapheme, Vec::new())
}
