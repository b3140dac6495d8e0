//! Run metrics: ESR, ESR_avg and sampling state disparity (SSD).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::evaluator::EvaluationRecord;
use crate::ros::RewardCandidate;
use crate::worldmodel::StateDescriptor;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("ESR_avg of an empty record list")]
    EmptyRecords,
}

/// Maximum success reached during one training run; 0 for a run that did
/// not execute.
pub fn esr(record: &EvaluationRecord) -> f64 {
    if !record.executed {
        return 0.0;
    }
    record.trajectory.iter().copied().fold(0.0, f64::max)
}

pub fn esr_avg(records: &[EvaluationRecord]) -> Result<f64, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyRecords);
    }
    Ok(mean(&records.iter().map(esr).collect::<Vec<_>>()))
}

/// How often each state was read by any sampled reward, executed or not.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageHistory {
    pub counts: BTreeMap<String, u64>,
}

impl UsageHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, candidate: &RewardCandidate) {
        for state in &candidate.ros_st {
            *self.counts.entry(state.clone()).or_insert(0) += 1;
        }
    }

    pub fn count(&self, state: &str) -> u64 {
        self.counts.get(state).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }
}

/// Max minus mean of per-state usage frequency over the whole catalog.
/// Zero for an empty history.
pub fn ssd(history: &UsageHistory, catalog: &[StateDescriptor]) -> f64 {
    let counts: Vec<u64> = catalog.iter().map(|s| history.count(&s.name)).collect();
    let total: u64 = counts.iter().sum();
    if total == 0 || counts.is_empty() {
        return 0.0;
    }
    let freqs: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
    let max = freqs.iter().copied().fold(0.0, f64::max);
    max - mean(&freqs)
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation; 0 for fewer than two values.
pub fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m).powi(2)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}
