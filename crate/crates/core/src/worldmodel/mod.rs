//! World models: the catalog of environment-robot states a reward may read,
//! plus the tasks defined on it.
//!
//! World models are stored as TOML:
//!
//! ```toml
//! id = "humanoid"
//!
//! [[states]]
//! name = "torso_height"
//! kind = "distance"
//! arity = 1
//!
//! [[tasks]]
//! id = "stand_up"
//! description = "make humanoids stand up"
//! success = { cmp = { state = "torso_height", op = ">", value = 0.8 } }
//! ```
//!
//! Catalog order in the file is the canonical state order used by every
//! table and metric.

mod success;
mod synthetic;

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use success::{Comparator, SuccessParseError, SuccessSpec};
pub use synthetic::{
    difficulty_map, generate_synthetic_task, SyntheticTask, STATE_VOCABULARY,
};

#[derive(Debug, thiserror::Error)]
pub enum WorldModelError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid field `{field}`: {message}")]
    Validation { field: String, message: String },
    #[error("invalid argument: {0}")]
    Argument(String),
}

impl WorldModelError {
    fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        WorldModelError::Validation {
            field: field.into(),
            message: message.into(),
        }
    }
}

/// Semantic kind of a state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StateKind {
    Position,
    Orientation,
    Velocity,
    Force,
    Distance,
    Angle,
    BooleanFlag,
}

impl fmt::Display for StateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            StateKind::Position => "position",
            StateKind::Orientation => "orientation",
            StateKind::Velocity => "velocity",
            StateKind::Force => "force",
            StateKind::Distance => "distance",
            StateKind::Angle => "angle",
            StateKind::BooleanFlag => "boolean-flag",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateDescriptor {
    pub name: String,
    pub kind: StateKind,
    pub arity: u32,
}

impl StateDescriptor {
    pub fn new(name: impl Into<String>, kind: StateKind, arity: u32) -> Self {
        Self {
            name: name.into(),
            kind,
            arity,
        }
    }
}

/// A task on a world model: the user's description `U` and, when an expert
/// supplied one, the success predicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskDef {
    pub id: String,
    #[serde(rename = "description")]
    pub user_description: String,
    #[serde(rename = "success", default, skip_serializing_if = "Option::is_none")]
    pub success_spec: Option<SuccessSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldModel {
    pub id: String,
    #[serde(rename = "states")]
    pub catalog: Vec<StateDescriptor>,
    #[serde(default)]
    pub tasks: Vec<TaskDef>,
}

/// State names must be plain identifiers so that whole-token extraction
/// from reward source is unambiguous.
pub fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl WorldModel {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, WorldModelError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| WorldModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, WorldModelError> {
        let model: WorldModel = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|span| text[..span.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(0);
            WorldModelError::Parse {
                line,
                message: e.message().to_string(),
            }
        })?;
        model.validate()?;
        Ok(model)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("world model serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), WorldModelError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_toml_string()).map_err(|source| WorldModelError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn validate(&self) -> Result<(), WorldModelError> {
        if self.id.trim().is_empty() {
            return Err(WorldModelError::validation("id", "must be non-empty"));
        }
        if self.catalog.is_empty() {
            return Err(WorldModelError::validation("states", "catalog must be non-empty"));
        }
        let mut seen = BTreeSet::new();
        for (i, state) in self.catalog.iter().enumerate() {
            if !is_identifier(&state.name) {
                return Err(WorldModelError::validation(
                    format!("states[{i}].name"),
                    format!("`{}` is not a plain identifier", state.name),
                ));
            }
            if !seen.insert(state.name.as_str()) {
                return Err(WorldModelError::validation(
                    format!("states[{i}].name"),
                    format!("duplicate state name `{}`", state.name),
                ));
            }
            if state.arity == 0 {
                return Err(WorldModelError::validation(
                    format!("states[{i}].arity"),
                    "arity must be at least 1",
                ));
            }
        }
        for (i, task) in self.tasks.iter().enumerate() {
            if task.id.trim().is_empty() {
                return Err(WorldModelError::validation(
                    format!("tasks[{i}].id"),
                    "must be non-empty",
                ));
            }
            if task.user_description.trim().is_empty() {
                return Err(WorldModelError::validation(
                    format!("tasks[{i}].description"),
                    "must be non-empty",
                ));
            }
            if let Some(spec) = &task.success_spec {
                if let Some(unknown) = spec.unknown_states(&self.catalog).into_iter().next() {
                    return Err(WorldModelError::validation(
                        format!("tasks[{i}].success"),
                        format!("references unknown state `{unknown}`"),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn state_names(&self) -> Vec<String> {
        self.catalog.iter().map(|s| s.name.clone()).collect()
    }

    pub fn task(&self, id: &str) -> Option<&TaskDef> {
        self.tasks.iter().find(|t| t.id == id)
    }

    pub fn contains_state(&self, name: &str) -> bool {
        self.catalog.iter().any(|s| s.name == name)
    }
}
