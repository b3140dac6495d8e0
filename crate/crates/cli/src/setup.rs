//! Settings shared by `run` and `ablate`: where the task comes from and
//! which designer, evaluator and reconciler back a run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::Deserialize;

use rosevo::chat::{ChatClient, EndpointConfig};
use rosevo::designer::{LlmDesigner, SamplerConfig};
use rosevo::evaluator::ExternalEvaluator;
use rosevo::evolution::{run_evolution, EvolutionRun, Ports, RunTask, Variant};
use rosevo::guidance::{ChatReconciler, ReconcilerPort, SyntheticReconciler};
use rosevo::worldmodel::generate_synthetic_task;
use rosevo::{
    DesignerPort, EvaluatorPort, EvolutionConfig, OpKind, SurrogateEvaluator, SyntheticDesigner, SyntheticTask,
    TaskDef, WorldModel,
};

use crate::error::{Categorize, CliError, CliResult};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum DesignerKind {
    #[default]
    Synthetic,
    Llm,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum EvaluatorKind {
    #[default]
    Surrogate,
    External,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalCommand {
    pub program: String,
    #[serde(default)]
    pub args: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticParams {
    pub states: usize,
    pub truth: usize,
    pub difficulty: f64,
    /// Fixed task seed; by default each run seed generates its own task.
    pub task_seed: Option<u64>,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self { states: 24, truth: 4, difficulty: 0.5, task_seed: None }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskSource {
    Synthetic(SyntheticParams),
    /// A task of a world model file. `truth` is only needed by the
    /// surrogate evaluator.
    File {
        world: PathBuf,
        task: String,
        #[serde(default)]
        truth: BTreeMap<String, OpKind>,
        #[serde(default = "half")]
        difficulty: f64,
    },
}

fn half() -> f64 {
    0.5
}

impl Default for TaskSource {
    fn default() -> Self {
        TaskSource::Synthetic(SyntheticParams::default())
    }
}

impl TaskSource {
    /// Stable label used for output directories and report rows.
    pub fn label(&self) -> String {
        match self {
            TaskSource::Synthetic(p) => format!("synthetic-{}x{}-d{}", p.states, p.truth, p.difficulty),
            TaskSource::File { task, .. } => task.clone(),
        }
    }

    /// Resolve relative world paths against `base`.
    pub fn rebase(&mut self, base: &Path) {
        if let TaskSource::File { world, .. } = self {
            if world.is_relative() {
                *world = base.join(&*world);
            }
        }
    }
}

/// A task ready to run.
pub struct Prepared {
    pub world: WorldModel,
    pub task: TaskDef,
    /// Hidden ground truth, when the surrogate can score this task.
    pub truth: Option<SyntheticTask>,
}

pub fn prepare(source: &TaskSource, seed: u64) -> CliResult<Prepared> {
    match source {
        TaskSource::Synthetic(p) => {
            let (world, truth) = generate_synthetic_task(p.states, p.truth, p.difficulty, p.task_seed.unwrap_or(seed))
                .or_config("synthetic task")?;
            Ok(Prepared { world, task: truth.task.clone(), truth: Some(truth) })
        }
        TaskSource::File { world, task, truth, difficulty } => {
            let model = WorldModel::load(world).or_config(format!("world model {}", world.display()))?;
            let def = model
                .task(task)
                .cloned()
                .ok_or_else(|| CliError::config(anyhow::anyhow!("world model {} has no task `{task}`", world.display())))?;
            let truth = if truth.is_empty() {
                None
            } else {
                Some(SyntheticTask::with_truth(&model, def.clone(), truth.clone(), *difficulty).or_config("task truth")?)
            };
            Ok(Prepared { world: model, task: def, truth })
        }
    }
}

/// Backend choices plus their settings.
#[derive(Debug, Clone, Default)]
pub struct BackendSettings {
    pub designer: DesignerKind,
    pub evaluator: EvaluatorKind,
    pub sampler: SamplerConfig,
    pub endpoint: EndpointConfig,
    pub external: Option<ExternalCommand>,
}

impl BackendSettings {
    /// Catch problems that would otherwise surface mid-sweep.
    pub fn check(&self, task: &TaskSource) -> CliResult<()> {
        self.sampler.validate().or_config("sampler")?;
        if self.designer == DesignerKind::Llm && self.endpoint.resolve_api_key().is_none() {
            return Err(CliError::config(rosevo::chat::ChatError::MissingApiKey));
        }
        match (self.evaluator, task) {
            (EvaluatorKind::External, _) if self.external.is_none() => Err(CliError::config(anyhow::anyhow!(
                "the external evaluator needs an [external] section with `program`"
            ))),
            (EvaluatorKind::Surrogate, TaskSource::File { truth, task, .. }) if truth.is_empty() => {
                Err(CliError::config(anyhow::anyhow!("the surrogate evaluator needs `truth` for file task `{task}`")))
            }
            _ => Ok(()),
        }
    }
}

pub struct Backends {
    designer: Box<dyn DesignerPort>,
    evaluator: Box<dyn EvaluatorPort>,
    reconciler: Box<dyn ReconcilerPort>,
}

impl Backends {
    pub fn build(settings: &BackendSettings, prepared: &Prepared) -> CliResult<Self> {
        let client = || ChatClient::new(settings.endpoint.clone()).map_err(CliError::config);
        let (designer, reconciler): (Box<dyn DesignerPort>, Box<dyn ReconcilerPort>) = match settings.designer {
            DesignerKind::Synthetic => (
                Box::new(SyntheticDesigner::new(&prepared.world.catalog, settings.sampler.clone()).or_config("sampler")?),
                Box::new(SyntheticReconciler),
            ),
            DesignerKind::Llm => (
                Box::new(LlmDesigner::new(client()?, &prepared.world.catalog)),
                Box::new(ChatReconciler::new(client()?)),
            ),
        };
        let evaluator: Box<dyn EvaluatorPort> = match settings.evaluator {
            EvaluatorKind::Surrogate => {
                let truth = prepared.truth.clone().ok_or_else(|| {
                    CliError::config(anyhow::anyhow!("task `{}` has no ground truth for the surrogate", prepared.task.id))
                })?;
                Box::new(SurrogateEvaluator::new(&prepared.world, truth))
            }
            EvaluatorKind::External => {
                let cmd = settings
                    .external
                    .as_ref()
                    .ok_or_else(|| CliError::config(anyhow::anyhow!("no external evaluator command")))?;
                Box::new(ExternalEvaluator::new(cmd.program.clone(), cmd.args.clone()))
            }
        };
        Ok(Self { designer, evaluator, reconciler })
    }

    pub fn run(&self, prepared: &Prepared, config: &EvolutionConfig) -> EvolutionRun {
        let ports = Ports {
            designer: self.designer.as_ref(),
            evaluator: self.evaluator.as_ref(),
            reconciler: self.reconciler.as_ref(),
        };
        run_evolution(RunTask { world: &prepared.world, task: &prepared.task, exemplar: None }, ports, config)
    }
}

/// A preset name or an inline variant table.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum VariantSpec {
    Preset(String),
    Custom(Variant),
}

impl VariantSpec {
    pub fn resolve(&self) -> CliResult<Variant> {
        match self {
            VariantSpec::Custom(v) => Ok(v.clone()),
            VariantSpec::Preset(name) => Variant::preset(name).ok_or_else(|| {
                let known: Vec<String> = Variant::presets().into_iter().map(|v| v.name).collect();
                CliError::config(anyhow::anyhow!("unknown variant `{name}` (presets: {})", known.join(", ")))
            }),
        }
    }
}

/// Parse a TOML file into `T`, as a configuration error on failure.
pub fn load_toml<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).or_config(path.display())?;
    toml::from_str(&text).or_config(path.display())
}
