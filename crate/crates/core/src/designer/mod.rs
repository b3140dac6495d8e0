//! The sampling port: turns a guidance bundle into K reward sources.

mod llm;
mod synthetic;

use serde::{Deserialize, Serialize};

use crate::chat::ChatError;
use crate::guidance::GuidanceBundle;
use crate::settable::StateExecutionTable;

pub use llm::{LlmDesigner, DESIGNER_SYSTEM_PROMPT};
pub use synthetic::{SyntheticDesigner, GHOST_STATE};

#[derive(Debug, thiserror::Error)]
pub enum DesignerError {
    #[error(transparent)]
    Chat(#[from] ChatError),
    #[error("none of the {requested} completions contained a code block")]
    NoCode { requested: usize },
    #[error("invalid sampler configuration: {0}")]
    Config(String),
}

/// Produces reward sources for one iteration. Implementations may return
/// fewer than `k` texts; missing samples count as failed executions.
pub trait DesignerPort: Send + Sync {
    fn propose(&self, bundle: &GuidanceBundle, k: usize, seed: u64) -> Result<Vec<String>, DesignerError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub temperature: f64,
    pub contribution_weight: f64,
    pub usage_weight: f64,
    /// Probability that a sample also reads a state outside the catalog.
    pub invalid_rate: f64,
    pub member_count_range: (usize, usize),
    /// Factor on the sampling weight of the example's states in state
    /// selection mode.
    pub example_weight_factor: f64,
    /// In operation refinement mode, probability that a reward item keeps
    /// the operation kind it has in the example.
    pub refine_keep_rate: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            contribution_weight: 1.0,
            usage_weight: 0.1,
            invalid_rate: 0.05,
            member_count_range: (2, 6),
            example_weight_factor: 0.5,
            refine_keep_rate: 0.5,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), DesignerError> {
        let (lo, hi) = self.member_count_range;
        if !(self.temperature > 0.0) {
            return Err(DesignerError::Config("temperature must be positive".into()));
        }
        if lo == 0 || lo > hi {
            return Err(DesignerError::Config(format!("member_count_range ({lo}, {hi})")));
        }
        if !(0.0..=1.0).contains(&self.invalid_rate) {
            return Err(DesignerError::Config("invalid_rate must be a probability".into()));
        }
        if !(0.0..=1.0).contains(&self.refine_keep_rate) {
            return Err(DesignerError::Config("refine_keep_rate must be a probability".into()));
        }
        if !(self.example_weight_factor > 0.0) {
            return Err(DesignerError::Config("example_weight_factor must be positive".into()));
        }
        Ok(())
    }
}

/// Softmax over `α·contribution − β·usage`, one probability per row.
pub fn score_rows(rows: &[(u64, f64)], config: &SamplerConfig) -> Vec<f64> {
    let scores: Vec<f64> = rows
        .iter()
        .map(|&(usage, contribution)| {
            (config.contribution_weight * contribution - config.usage_weight * usage as f64)
                / config.temperature
        })
        .collect();
    let top = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = scores.iter().map(|s| (s - top).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.iter().map(|w| w / total).collect()
}

/// Sampling distribution over the table's states, in catalog order.
pub fn score_states(table: &StateExecutionTable, config: &SamplerConfig) -> Vec<(String, f64)> {
    let rows: Vec<(u64, f64)> = table.rows().map(|(_, r)| (r.usage_count, r.contribution)).collect();
    table
        .names()
        .iter()
        .cloned()
        .zip(score_rows(&rows, config))
        .collect()
}
