//! Heuristic evolution of reward observation spaces for LLM-aided reward
//! design.
//!
//! The crate is organised around the design loop:
//!
//! - [`worldmodel`]: state catalogs, task definitions and synthetic tasks
//!   with hidden ground truth.
//! - [`ros`]: reward candidates, their observation space (state subset and
//!   operation terms) and the example projection shown to the designer.
//! - [`settable`]: the state execution table, the designer's history memory.
//! - [`guidance`]: mode scheduling, feedback summaries, mission
//!   reconciliation and bundle assembly.
//! - [`designer`]: the sampling port (synthetic and chat-completion).
//! - [`evaluator`]: the evaluation port (surrogate and external trainer).
//! - [`metrics`]: ESR, ESR_avg and sampling state disparity.
//! - [`evolution`]: threshold calibration, the iteration loop, run logs and
//!   replay.

pub mod chat;
pub mod designer;
pub mod evaluator;
pub mod evolution;
pub mod guidance;
pub mod metrics;
pub mod ros;
pub mod seed;
pub mod settable;
pub mod worldmodel;

pub use designer::{DesignerPort, SamplerConfig, SyntheticDesigner};
pub use evaluator::{EvaluationRecord, EvaluatorPort, SurrogateEvaluator};
pub use evolution::{run_evolution, EvolutionConfig, RunLog, TauPolicy, VariantFlags};
pub use guidance::{GuidanceBundle, Mission, Mode, ReconciledMission};
pub use ros::{OpKind, OpTerm, RewardCandidate};
pub use settable::StateExecutionTable;
pub use worldmodel::{StateDescriptor, StateKind, SyntheticTask, TaskDef, WorldModel};
