//! Multilingual sequence-to-sequence speech recognition at desk scale:
//! synthetic corpora, shared subword vocabularies, language-balanced
//! sampling with a curriculum, TDS/GRU attention models with optional
//! language embeddings or per-group decoder heads, BMUF training, and
//! WER/CER reporting.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod model;
pub mod sampler;
pub mod tokenizer;
pub mod trainer;
pub mod util;

pub use error::{Error, Result};
