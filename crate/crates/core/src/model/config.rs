use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture hyperparameters.
///
/// The encoder is an input convolution (dense over features, strided), then
/// groups of TDS blocks; every group after the first opens with a strided
/// convolution that changes the channel count. A TDS block is a time
/// convolution shared across `tds_width` feature columns, then a two-layer
/// feed-forward of inner size `ff_mult * width * channels`, each with a
/// residual connection and layer norm. A linear layer maps to `encoder_dim`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub input_dim: usize,
    /// `(num_blocks, channels)` per group.
    pub tds_groups: Vec<(usize, usize)>,
    pub tds_width: usize,
    pub kernel_width: usize,
    /// Stride of the convolution opening each group.
    pub strides: Vec<usize>,
    /// Declared total sub-sampling; must equal the product of `strides`.
    pub subsampling: usize,
    pub ff_mult: usize,
    pub encoder_dim: usize,
    pub decoder_layers: usize,
    pub decoder_hidden: usize,
    pub attention_rounds: usize,
    /// Output vocabulary size of each decoder head.
    pub vocab_sizes: Vec<usize>,
    /// 0 disables the input language embedding.
    pub lang_embed_dim: usize,
    /// Rows of the language-embedding table, in order.
    pub languages: Vec<String>,
    pub n_heads: usize,
    pub dropout: f64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("model: {m}")));
        if self.input_dim == 0 || self.tds_width == 0 || self.kernel_width == 0 {
            return bad("input_dim, tds_width and kernel_width must be positive".into());
        }
        if self.tds_groups.is_empty() || self.tds_groups.iter().any(|&(_, c)| c == 0) {
            return bad("need at least one TDS group with positive channels".into());
        }
        if self.strides.len() != self.tds_groups.len() || self.strides.contains(&0) {
            return bad(format!(
                "{} strides for {} TDS groups (all must be positive)",
                self.strides.len(),
                self.tds_groups.len()
            ));
        }
        let product: usize = self.strides.iter().product();
        if product != self.subsampling {
            return bad(format!(
                "strides multiply to {product}, declared sub-sampling is {}",
                self.subsampling
            ));
        }
        if self.ff_mult == 0 || self.encoder_dim == 0 || self.decoder_hidden == 0 {
            return bad("ff_mult, encoder_dim and decoder_hidden must be positive".into());
        }
        if self.decoder_layers == 0 || self.attention_rounds > self.decoder_layers {
            return bad(format!(
                "{} attention rounds need at least as many decoder layers (have {})",
                self.attention_rounds, self.decoder_layers
            ));
        }
        if self.n_heads == 0 || self.vocab_sizes.len() != self.n_heads {
            return bad(format!(
                "{} heads but {} vocab sizes",
                self.n_heads,
                self.vocab_sizes.len()
            ));
        }
        if self.vocab_sizes.iter().any(|&v| v < 4) {
            return bad("every vocabulary needs the three specials plus one token".into());
        }
        if self.lang_embed_dim > 0 && self.languages.is_empty() {
            return bad("language embedding enabled without a language list".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        if let Some(l) = self.languages.iter().find(|l| !seen.insert(l.as_str())) {
            return bad(format!("language '{l}' listed twice"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        Ok(())
    }

    /// Encoder frames for an input of `t` frames.
    pub fn encoder_len(&self, t: usize) -> usize {
        self.strides.iter().fold(t, |len, &s| len.div_ceil(s))
    }

    /// Baseline architecture: 3x10, 4x14, 8x18 TDS blocks over 80 feature
    /// columns, kernel 21, three stride-2 convolutions, 1024-d encoder,
    /// 2-layer 512-unit GRU decoder with two attention rounds, 10K tokens.
    pub fn paper_150m() -> Self {
        Self {
            input_dim: 80,
            tds_groups: vec![(3, 10), (4, 14), (8, 18)],
            tds_width: 80,
            kernel_width: 21,
            strides: vec![2, 2, 2],
            subsampling: 8,
            ff_mult: 3,
            encoder_dim: 1024,
            decoder_layers: 2,
            decoder_hidden: 512,
            attention_rounds: 2,
            vocab_sizes: vec![10_000],
            lang_embed_dim: 0,
            languages: Vec::new(),
            n_heads: 1,
            dropout: 0.0,
        }
    }

    /// Wider encoder and decoder; constructed for shape checks only.
    pub fn paper_500m() -> Self {
        Self {
            tds_groups: vec![(3, 18), (4, 26), (8, 32)],
            encoder_dim: 1536,
            decoder_hidden: 768,
            ..Self::paper_150m()
        }
    }

    /// Constructed for shape checks only.
    pub fn paper_1b() -> Self {
        Self {
            tds_groups: vec![(3, 24), (4, 36), (8, 46)],
            encoder_dim: 2048,
            decoder_hidden: 1024,
            ..Self::paper_150m()
        }
    }

    /// Small enough to train on one CPU core in seconds per epoch.
    pub fn toy(vocab_size: usize) -> Self {
        Self {
            input_dim: 80,
            tds_groups: vec![(1, 4), (1, 6), (1, 8)],
            tds_width: 8,
            kernel_width: 5,
            strides: vec![2, 2, 1],
            subsampling: 4,
            ff_mult: 1,
            encoder_dim: 64,
            decoder_layers: 2,
            decoder_hidden: 64,
            attention_rounds: 2,
            vocab_sizes: vec![vocab_size],
            lang_embed_dim: 0,
            languages: Vec::new(),
            n_heads: 1,
            dropout: 0.0,
        }
    }

    pub fn preset(name: &str, vocab_size: usize) -> Result<Self> {
        let mut c = match name {
            "paper-150m" => Self::paper_150m(),
            "paper-500m" => Self::paper_500m(),
            "paper-1b" => Self::paper_1b(),
            "toy" => return Ok(Self::toy(vocab_size)),
            other => return Err(Error::Config(format!("unknown model preset '{other}'"))),
        };
        c.vocab_sizes = vec![vocab_size];
        Ok(c)
    }

    pub fn with_language_embedding(mut self, dim: usize, languages: Vec<String>) -> Self {
        self.lang_embed_dim = dim;
        self.languages = languages;
        self
    }

    pub fn with_heads(mut self, vocab_sizes: Vec<usize>) -> Self {
        self.n_heads = vocab_sizes.len();
        self.vocab_sizes = vocab_sizes;
        self
    }
}
