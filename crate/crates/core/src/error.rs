use std::path::PathBuf;

use babel_numerics::NumericsError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json error in {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("corpus error: {0}")]
    Corpus(String),
    #[error("transcript is empty after normalization")]
    EmptyTranscript,
    #[error("tokenizer error: {0}")]
    Tokenizer(String),
    #[error("unknown language '{0}'")]
    UnknownLanguage(String),
    #[error("language '{0}' is already known to the model")]
    KnownLanguage(String),
    #[error("sampler error: {0}")]
    Sampler(String),
    #[error("curriculum already complete")]
    CurriculumComplete,
    #[error("model error: {0}")]
    Model(String),
    #[error("non-finite gradient; step refused")]
    NonFiniteGradient,
    #[error("training diverged at iteration {iteration}: {detail}")]
    Diverged { iteration: usize, detail: String },
    #[error("evaluation error: {0}")]
    Eval(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |source| Error::Io { path, source }
}

pub(crate) fn json_err(context: impl Into<String>) -> impl FnOnce(serde_json::Error) -> Error {
    let context = context.into();
    move |source| Error::Json { context, source }
}
