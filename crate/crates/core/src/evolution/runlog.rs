//! Append-only JSON-lines record of a run.
//!
//! One event object per line, discriminated by its `event` field. The log
//! carries every raw record, so selections and metrics can be recomputed
//! from it alone (see [`super::replay`]).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::EvolutionConfig;
use crate::evaluator::EvaluationRecord;
use crate::guidance::{Mission, Mode};
use crate::settable::SnapshotRow;

/// One sampled reward and its evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateOutcome {
    pub sample_index: u32,
    pub candidate_id: String,
    /// Raw designer text; empty when the designer returned too few samples.
    pub source: String,
    /// Observed states; empty when the text did not parse.
    pub ros_st: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parse_error: Option<String>,
    pub record: EvaluationRecord,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauSource {
    Adaptive,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum RunEvent {
    RunStarted {
        task_id: String,
        config: EvolutionConfig,
        catalog: Vec<String>,
    },
    MissionReady {
        mission: Mission,
    },
    PilotBatch {
        batch: u32,
        outcomes: Vec<CandidateOutcome>,
    },
    ThresholdSet {
        tau: f64,
        source: TauSource,
        pilot_successes: Vec<f64>,
    },
    IterationStarted {
        iteration: u32,
        mode: Mode,
        bundle_hash: String,
        resample: bool,
    },
    CandidateEvaluated {
        iteration: u32,
        outcome: CandidateOutcome,
    },
    IterationBest {
        iteration: u32,
        candidate_id: String,
        sample_index: u32,
        success: f64,
        barren: bool,
    },
    SetSnapshot {
        iteration: u32,
        rows: Vec<SnapshotRow>,
    },
    FinalSelection {
        iteration: u32,
        candidate_id: String,
        design_success: f64,
    },
    FinalEvaluation {
        records: Vec<EvaluationRecord>,
    },
    Metrics {
        esr_avg: f64,
        esr_list: Vec<f64>,
        ssd: f64,
        usage: BTreeMap<String, u64>,
    },
    RunFailed {
        error: String,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum RunLogError {
    #[error("line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub events: Vec<RunEvent>,
}

impl RunLog {
    pub fn push(&mut self, event: RunEvent) {
        self.events.push(event);
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for event in &self.events {
            out.push_str(&serde_json::to_string(event).expect("events serialize"));
            out.push('\n');
        }
        out
    }

    /// Parse JSON lines; blank lines are skipped, anything else that fails
    /// to parse is reported with its 1-based line number.
    pub fn from_jsonl(text: &str) -> Result<Self, RunLogError> {
        let mut events = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let event = serde_json::from_str(line).map_err(|e| RunLogError::Corrupt {
                line: i + 1,
                message: e.to_string(),
            })?;
            events.push(event);
        }
        Ok(Self { events })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RunLogError> {
        Self::from_jsonl(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), RunLogError> {
        std::fs::write(path, self.to_jsonl())?;
        Ok(())
    }

    pub fn started(&self) -> Option<(&str, &EvolutionConfig, &[String])> {
        self.events.iter().find_map(|e| match e {
            RunEvent::RunStarted { task_id, config, catalog } => Some((task_id.as_str(), config, catalog.as_slice())),
            _ => None,
        })
    }

    pub fn failure(&self) -> Option<&str> {
        self.events.iter().find_map(|e| match e {
            RunEvent::RunFailed { error } => Some(error.as_str()),
            _ => None,
        })
    }

    /// Logged per-iteration best successes, in iteration order.
    pub fn iteration_bests(&self) -> Vec<(u32, f64)> {
        self.events
            .iter()
            .filter_map(|e| match e {
                RunEvent::IterationBest { iteration, success, .. } => Some((*iteration, *success)),
                _ => None,
            })
            .collect()
    }

    pub fn set_snapshots(&self) -> Vec<(u32, &[SnapshotRow])> {
        self.events
            .iter()
            .filter_map(|e| match e {
                RunEvent::SetSnapshot { iteration, rows } => Some((*iteration, rows.as_slice())),
                _ => None,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip_and_line_numbers() {
        let mut log = RunLog::default();
        log.push(RunEvent::ThresholdSet { tau: 0.2, source: TauSource::Adaptive, pilot_successes: vec![0.2] });
        log.push(RunEvent::RunFailed { error: "boom".into() });
        let text = log.to_jsonl();
        assert!(text.starts_with("{\"event\":\"threshold_set\""));
        assert_eq!(RunLog::from_jsonl(&text).unwrap(), log);
        let corrupt = format!("{text}{{not json\n");
        match RunLog::from_jsonl(&corrupt) {
            Err(RunLogError::Corrupt { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }
}
