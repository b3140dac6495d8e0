//! Synthetic tasks with a hidden ground-truth observation space.
//!
//! A synthetic task stands in for a simulator benchmark: the surrogate
//! evaluator scores candidates against `truth_subset` and `truth_ops`, which
//! are never shown to the designer.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Comparator, StateDescriptor, StateKind, SuccessSpec, TaskDef, WorldModel, WorldModelError};
use crate::ros::OpKind;
use crate::seed::rng_for;

/// Fixed vocabulary for generated state names. Catalog entry `j` is named
/// `{base}_{j / len}` with `base = STATE_VOCABULARY[j % len]`.
pub const STATE_VOCABULARY: &[(&str, StateKind, u32)] = &[
    ("hand_pos", StateKind::Position, 3),
    ("block_pos", StateKind::Position, 3),
    ("goal_pos", StateKind::Position, 3),
    ("object_rot", StateKind::Orientation, 4),
    ("up_vec", StateKind::Orientation, 3),
    ("palm_vel", StateKind::Velocity, 3),
    ("fingertip_vel", StateKind::Velocity, 3),
    ("grip_force", StateKind::Force, 1),
    ("contact_force", StateKind::Force, 3),
    ("goal_dist", StateKind::Distance, 1),
    ("torso_height", StateKind::Distance, 1),
    ("door_angle", StateKind::Angle, 1),
    ("wrist_angle", StateKind::Angle, 1),
    ("is_grasped", StateKind::BooleanFlag, 1),
    ("is_lifted", StateKind::BooleanFlag, 1),
    ("handle_dist", StateKind::Distance, 1),
];

const NOISE_PER_DIFFICULTY: f64 = 0.15;
const FAILURE_PER_DIFFICULTY: f64 = 0.10;

/// Difficulty to `(noise_scale, exec_failure_rate)`. Linear, monotone and
/// zero at difficulty 0.
pub fn difficulty_map(difficulty: f64) -> (f64, f64) {
    (NOISE_PER_DIFFICULTY * difficulty, FAILURE_PER_DIFFICULTY * difficulty)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTask {
    pub task: TaskDef,
    /// Relevant states, in catalog order.
    pub truth_subset: Vec<String>,
    pub truth_ops: BTreeMap<String, OpKind>,
    pub difficulty: f64,
    pub noise_scale: f64,
    pub exec_failure_rate: f64,
}

impl SyntheticTask {
    /// Build a task from an explicit ground truth, e.g. for file-backed
    /// world models.
    pub fn with_truth(
        world: &WorldModel,
        task: TaskDef,
        truth_ops: BTreeMap<String, OpKind>,
        difficulty: f64,
    ) -> Result<Self, WorldModelError> {
        if !(0.0..=1.0).contains(&difficulty) {
            return Err(WorldModelError::Argument(format!(
                "difficulty {difficulty} outside [0, 1]"
            )));
        }
        let truth_subset = world
            .catalog
            .iter()
            .filter(|s| truth_ops.contains_key(&s.name))
            .map(|s| s.name.clone())
            .collect();
        let (noise_scale, exec_failure_rate) = difficulty_map(difficulty);
        let out = SyntheticTask {
            task,
            truth_subset,
            truth_ops,
            difficulty,
            noise_scale,
            exec_failure_rate,
        };
        out.validate(world)?;
        Ok(out)
    }

    pub fn validate(&self, world: &WorldModel) -> Result<(), WorldModelError> {
        let bad = |field: &str, message: String| {
            Err(WorldModelError::Validation {
                field: field.to_string(),
                message,
            })
        };
        if self.truth_subset.is_empty() || self.truth_subset.len() > world.catalog.len() {
            return bad("truth_subset", format!("size {} out of range", self.truth_subset.len()));
        }
        if let Some(name) = self.truth_subset.iter().find(|n| !world.contains_state(n)) {
            return bad("truth_subset", format!("unknown state `{name}`"));
        }
        let keys: Vec<&String> = self.truth_ops.keys().collect();
        let mut subset: Vec<&String> = self.truth_subset.iter().collect();
        subset.sort();
        subset.dedup();
        if keys != subset || subset.len() != self.truth_subset.len() {
            return bad("truth_ops", "keys must equal the truth subset".to_string());
        }
        if !(0.0..=1.0).contains(&self.difficulty) {
            return bad("difficulty", format!("{} outside [0, 1]", self.difficulty));
        }
        if !(self.noise_scale >= 0.0) {
            return bad("noise_scale", "must be non-negative".to_string());
        }
        if !(0.0..=1.0).contains(&self.exec_failure_rate) {
            return bad("exec_failure_rate", "must be a probability".to_string());
        }
        Ok(())
    }
}

/// Generate a world model plus a synthetic task on it. Deterministic in all
/// arguments.
pub fn generate_synthetic_task(
    catalog_size: usize,
    truth_size: usize,
    difficulty: f64,
    seed: u64,
) -> Result<(WorldModel, SyntheticTask), WorldModelError> {
    if catalog_size == 0 {
        return Err(WorldModelError::Argument("catalog_size must be positive".into()));
    }
    if truth_size == 0 || truth_size > catalog_size {
        return Err(WorldModelError::Argument(format!(
            "truth_size {truth_size} must be in 1..={catalog_size}"
        )));
    }
    if !(0.0..=1.0).contains(&difficulty) {
        return Err(WorldModelError::Argument(format!(
            "difficulty {difficulty} outside [0, 1]"
        )));
    }

    let vocab = STATE_VOCABULARY.len();
    let catalog: Vec<StateDescriptor> = (0..catalog_size)
        .map(|j| {
            let (base, kind, arity) = STATE_VOCABULARY[j % vocab];
            StateDescriptor::new(format!("{base}_{}", j / vocab), kind, arity)
        })
        .collect();

    let mut rng = rng_for(seed, "synthetic-task");
    let mut picked = sample(&mut rng, catalog_size, truth_size).into_vec();
    picked.sort_unstable();
    let truth_subset: Vec<String> = picked.iter().map(|&i| catalog[i].name.clone()).collect();
    let truth_ops: BTreeMap<String, OpKind> = truth_subset
        .iter()
        .map(|name| (name.clone(), OpKind::ALL[rng.random_range(0..OpKind::ALL.len())]))
        .collect();

    let success = SuccessSpec::All(
        truth_subset
            .iter()
            .map(|name| SuccessSpec::cmp(name.clone(), Comparator::Gt, 0.5))
            .collect(),
    );
    let task = TaskDef {
        id: format!("synthetic-{seed}"),
        user_description: format!(
            "Drive the {catalog_size}-state system into its goal configuration and keep it there."
        ),
        success_spec: Some(success),
    };
    let world = WorldModel {
        id: format!("synthetic-world-{catalog_size}-{seed}"),
        catalog,
        tasks: vec![task.clone()],
    };
    let (noise_scale, exec_failure_rate) = difficulty_map(difficulty);
    let synthetic = SyntheticTask {
        task,
        truth_subset,
        truth_ops,
        difficulty,
        noise_scale,
        exec_failure_rate,
    };
    Ok((world, synthetic))
}
