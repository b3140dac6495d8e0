//! Everything the designer sees in one iteration.
//!
//! A [`GuidanceBundle`] carries the design mode, the projected reward
//! example, a feedback summary of the example's training run, the rendered
//! state execution table and the mission text.

mod reconcile;

use serde::{Deserialize, Serialize};

use crate::evaluator::EvaluationRecord;
use crate::ros::{project, RewardCandidate, RewardProjection};
use crate::settable::StateExecutionTable;

pub use reconcile::{
    parse_mission_text, reconcile_mission, render_mission_template, ChatReconciler,
    MissionExemplar, ReconcileError, ReconcileRequest, ReconciledMission, ReconcilerPort,
    SyntheticReconciler, MISSION_SECTIONS, SUCCESS_SECTION,
};

/// What the designer is asked to change this iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Choose which states the reward observes.
    StateSelection,
    /// Keep the states, rework the operations over them.
    OperationRefinement,
}

/// Piecewise schedule: state selection on odd iterations or when the
/// previous best fell strictly below `tau`, operation refinement otherwise.
pub fn select_mode(n: u32, prev_success: f64, tau: f64) -> Mode {
    if n % 2 == 1 || prev_success < tau {
        Mode::StateSelection
    } else {
        Mode::OperationRefinement
    }
}

pub const MAX_FEEDBACK_CHECKPOINTS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackSummary {
    pub executed: bool,
    pub success: f64,
    pub trajectory: Vec<f64>,
    pub failure_cause: Option<String>,
}

/// At most `max` evenly spaced points, always keeping the first and last.
pub fn downsample(values: &[f64], max: usize) -> Vec<f64> {
    if values.len() <= max {
        return values.to_vec();
    }
    if max == 1 {
        return vec![values[values.len() - 1]];
    }
    let last = values.len() - 1;
    (0..max)
        .map(|i| {
            let at = (i * last + (max - 1) / 2) / (max - 1);
            values[at]
        })
        .collect()
}

pub fn build_feedback(record: &EvaluationRecord) -> FeedbackSummary {
    if !record.executed {
        return FeedbackSummary {
            executed: false,
            success: 0.0,
            trajectory: Vec::new(),
            failure_cause: Some(
                record
                    .failure_cause
                    .clone()
                    .unwrap_or_else(|| "not executed".to_string()),
            ),
        };
    }
    let success = record.trajectory.iter().copied().fold(0.0, f64::max);
    FeedbackSummary {
        executed: true,
        success,
        trajectory: downsample(&record.trajectory, MAX_FEEDBACK_CHECKPOINTS),
        failure_cause: None,
    }
}

impl FeedbackSummary {
    pub fn render(&self) -> String {
        if !self.executed {
            return format!(
                "The example failed to execute: {}",
                self.failure_cause.as_deref().unwrap_or("unknown cause")
            );
        }
        let points: Vec<String> = self.trajectory.iter().map(|v| format!("{v:.3}")).collect();
        format!(
            "Maximum success during training: {:.3}\nSuccess at evenly spaced checkpoints: {}",
            self.success,
            points.join(", ")
        )
    }
}

/// Mission text handed to the designer: either the reconciled template or
/// the raw user description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mission {
    Raw { description: String },
    Reconciled(ReconciledMission),
}

impl Mission {
    pub fn render(&self) -> String {
        match self {
            Mission::Raw { description } => description.clone(),
            Mission::Reconciled(m) => m.render_for_designer(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleOptions {
    pub use_set: bool,
    pub use_dr_schedule: bool,
}

impl Default for BundleOptions {
    fn default() -> Self {
        Self {
            use_set: true,
            use_dr_schedule: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidanceBundle {
    pub iteration: u32,
    pub mode: Mode,
    pub example: Option<RewardProjection>,
    pub feedback: Option<FeedbackSummary>,
    /// Empty when the table is disabled.
    pub table_text: String,
    pub mission: Mission,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GuidanceError {
    #[error("iteration {0}: a previous best is required exactly when n > 1")]
    Precondition(u32),
}

pub const STATE_SELECTION_INSTRUCTION: &str = include_str!("../../prompts/mode_state_selection.v1.txt");
pub const OPERATION_REFINEMENT_INSTRUCTION: &str =
    include_str!("../../prompts/mode_operation_refinement.v1.txt");
/// Added to the state selection instruction when a table is shown.
pub const TABLE_HINT: &str = include_str!("../../prompts/table_hint.v1.txt");

/// Assemble the designer input for iteration `n`.
///
/// Without the schedule the mode stays [`Mode::StateSelection`] and the
/// example is always shown in full, which is the plain "best previous
/// reward" loop.
pub fn assemble_bundle(
    n: u32,
    best_prev: Option<(&RewardCandidate, &EvaluationRecord)>,
    table: &StateExecutionTable,
    mission: &Mission,
    tau: f64,
    options: BundleOptions,
) -> Result<GuidanceBundle, GuidanceError> {
    if n == 0 || (n == 1) != best_prev.is_none() {
        return Err(GuidanceError::Precondition(n));
    }
    let table_text = if options.use_set { table.render() } else { String::new() };
    let Some((candidate, record)) = best_prev else {
        return Ok(GuidanceBundle {
            iteration: n,
            mode: Mode::StateSelection,
            example: None,
            feedback: None,
            table_text,
            mission: mission.clone(),
        });
    };
    let feedback = build_feedback(record);
    let (mode, example) = if options.use_dr_schedule {
        let mode = select_mode(n, feedback.success, tau);
        (mode, project(candidate, mode))
    } else {
        (
            Mode::StateSelection,
            project(candidate, Mode::OperationRefinement),
        )
    };
    Ok(GuidanceBundle {
        iteration: n,
        mode,
        example: Some(example),
        feedback: Some(feedback),
        table_text,
        mission: mission.clone(),
    })
}

impl GuidanceBundle {
    pub fn mode_instruction(&self) -> String {
        let members = self
            .example
            .as_ref()
            .map(|e| e.member_names.join(", "))
            .unwrap_or_default();
        let template = match self.mode {
            Mode::StateSelection => STATE_SELECTION_INSTRUCTION,
            Mode::OperationRefinement => OPERATION_REFINEMENT_INSTRUCTION,
        };
        let members = if members.is_empty() { "(none yet)".to_string() } else { members };
        let mut text = template.trim_end().replace("{members}", &members);
        if self.mode == Mode::StateSelection && !self.table_text.is_empty() {
            text.push('\n');
            text.push_str(TABLE_HINT.trim_end());
        }
        text
    }

    /// Designer-facing text. Its length depends on the catalog size and the
    /// example, never on how many iterations came before.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str("# Mission\n");
        out.push_str(self.mission.render().trim_end());
        out.push_str("\n\n# Design target\n");
        out.push_str(&self.mode_instruction());
        if let Some(example) = &self.example {
            out.push_str("\n\n# Reward example\n");
            out.push_str(&example.text);
        }
        if let Some(feedback) = &self.feedback {
            out.push_str("\n\n# Training feedback\n");
            out.push_str(&feedback.render());
        }
        if !self.table_text.is_empty() {
            out.push_str("\n\n# State execution table\n");
            out.push_str(self.table_text.trim_end());
        }
        out.push('\n');
        out
    }

    pub fn digest(&self) -> String {
        crate::seed::text_digest(&self.render())
    }
}
