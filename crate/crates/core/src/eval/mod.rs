//! Error rates, relative changes, per-category reports and language
//! embedding similarity.

mod decode;
mod metrics;
mod report;

pub use decode::{evaluate_languages, route, transcribe, LanguageRates};
pub use metrics::{edit_distance, error_rate, relative_change};
pub use report::{aggregate_report, embedding_report, CategorySummary, EmbeddingReport, EvalReport, LanguageResult};
