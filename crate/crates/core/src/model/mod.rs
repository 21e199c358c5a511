//! TDS encoder, GRU decoder with key-value attention, optional input
//! language embedding, and per-group decoder heads.

mod config;
mod forward;
mod groups;
mod params;

pub use config::ModelConfig;
pub use groups::{LanguageGroup, LanguageGroups};
pub use params::{parameter_count, ModelParameters};

use rand::Rng;

use crate::error::Result;

pub fn build_model<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Result<ModelParameters> {
    ModelParameters::build(config, rng)
}

/// Head index for `lang`.
pub fn route_head(groups: &LanguageGroups, lang: &str) -> Result<usize> {
    groups.route_head(lang)
}
