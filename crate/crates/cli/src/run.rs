use std::path::PathBuf;

use clap::Args;
use serde::Deserialize;

use rosevo::chat::EndpointConfig;
use rosevo::designer::SamplerConfig;
use rosevo::evolution::write_artifacts;
use rosevo::EvolutionConfig;

use crate::error::{Categorize, CliError, CliResult};
use crate::setup::{
    load_toml, prepare, Backends, BackendSettings, DesignerKind, EvaluatorKind, ExternalCommand, SyntheticParams,
    TaskSource, VariantSpec,
};

/// Contents of a `run` config file. Every field is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub task: TaskSource,
    pub designer: DesignerKind,
    pub evaluator: EvaluatorKind,
    pub variant: Option<VariantSpec>,
    pub out: Option<PathBuf>,
    pub evolution: EvolutionConfig,
    pub sampler: SamplerConfig,
    pub endpoint: EndpointConfig,
    pub external: Option<ExternalCommand>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML config; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Generate a synthetic task (the default when no config names a task).
    #[arg(long, conflicts_with_all = ["world", "task"])]
    synthetic: bool,
    /// Catalog size of the synthetic task.
    #[arg(long)]
    states: Option<usize>,
    /// Number of relevant states in the synthetic task.
    #[arg(long)]
    truth: Option<usize>,
    #[arg(long)]
    difficulty: Option<f64>,
    /// Fix the synthetic task instead of deriving it from --seed.
    #[arg(long)]
    task_seed: Option<u64>,
    /// World model file.
    #[arg(long, requires = "task")]
    world: Option<PathBuf>,
    /// Task id within --world.
    #[arg(long, requires = "world")]
    task: Option<String>,
    #[arg(long, value_enum)]
    designer: Option<DesignerKind>,
    #[arg(long, value_enum)]
    evaluator: Option<EvaluatorKind>,
    /// Variant preset: baseline_du, set, dr_fixed or dr_adaptive.
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iterations: Option<u32>,
    #[arg(long)]
    samples: Option<usize>,
    /// Threads for evaluating the samples of one iteration.
    #[arg(long)]
    eval_workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn resolve(&self) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let mut cfg: RunConfig = load_toml(path)?;
                cfg.task.rebase(path.parent().unwrap_or(std::path::Path::new(".")));
                cfg
            }
            None => RunConfig::default(),
        };
        let synthetic_flags = self.synthetic
            || self.states.is_some()
            || self.truth.is_some()
            || self.difficulty.is_some()
            || self.task_seed.is_some();
        if synthetic_flags && self.world.is_none() {
            let mut p = match &cfg.task {
                TaskSource::Synthetic(p) => p.clone(),
                TaskSource::File { .. } => SyntheticParams::default(),
            };
            p.states = self.states.unwrap_or(p.states);
            p.truth = self.truth.unwrap_or(p.truth);
            p.difficulty = self.difficulty.unwrap_or(p.difficulty);
            p.task_seed = self.task_seed.or(p.task_seed);
            cfg.task = TaskSource::Synthetic(p);
        }
        if let (Some(world), Some(task)) = (&self.world, &self.task) {
            let (truth, difficulty) = match &cfg.task {
                TaskSource::File { truth, difficulty, .. } => (truth.clone(), *difficulty),
                TaskSource::Synthetic(_) => (Default::default(), self.difficulty.unwrap_or(0.5)),
            };
            cfg.task = TaskSource::File { world: world.clone(), task: task.clone(), truth, difficulty };
        }
        if let Some(d) = self.designer {
            cfg.designer = d;
        }
        if let Some(e) = self.evaluator {
            cfg.evaluator = e;
        }
        if let Some(v) = &self.variant {
            cfg.variant = Some(VariantSpec::Preset(v.clone()));
        }
        let evo = &mut cfg.evolution;
        evo.seed = self.seed.unwrap_or(evo.seed);
        evo.iterations = self.iterations.unwrap_or(evo.iterations);
        evo.samples = self.samples.unwrap_or(evo.samples);
        evo.eval_workers = self.eval_workers.unwrap_or(evo.eval_workers);
        if let Some(v) = &cfg.variant {
            cfg.evolution = cfg.evolution.clone().with_variant(&v.resolve()?);
        }
        if self.out.is_some() {
            cfg.out = self.out.clone();
        }
        cfg.evolution.validate().map_err(|e| CliError::config(anyhow::anyhow!(e)))?;
        Ok(cfg)
    }
}

pub fn run(args: &RunArgs) -> CliResult<()> {
    let cfg = args.resolve()?;
    let settings = BackendSettings {
        designer: cfg.designer,
        evaluator: cfg.evaluator,
        sampler: cfg.sampler.clone(),
        endpoint: cfg.endpoint.clone(),
        external: cfg.external.clone(),
    };
    settings.check(&cfg.task)?;
    let seed = cfg.evolution.seed;
    let prepared = prepare(&cfg.task, seed)?;
    let backends = Backends::build(&settings, &prepared)?;
    let out = cfg.out.clone().unwrap_or_else(|| {
        PathBuf::from("runs").join(format!("{}-{}-s{seed}", cfg.task.label(), cfg.evolution.variant_name))
    });

    tracing::info!(task = %prepared.task.id, variant = %cfg.evolution.variant_name, seed, "starting run");
    let run = backends.run(&prepared, &cfg.evolution);
    let report = write_artifacts(&out, &run.log).or_runtime(format!("writing {}", out.display()))?;
    let summary = run.outcome.map_err(|e| {
        CliError::runtime(anyhow::anyhow!("{e} (partial log in {})", out.join("runlog.jsonl").display()))
    })?;
    debug_assert_eq!(report.as_ref().map(|r| r.esr_avg), Some(summary.esr_avg));

    println!("task       {}", prepared.task.id);
    println!("variant    {}", cfg.evolution.variant_name);
    println!("seed       {seed}");
    println!("tau        {:.4}", summary.tau);
    println!("best       iteration {} ({:.4} at design time)", summary.best_iteration, summary.best.record.success);
    println!("ESR_avg    {:.4}", summary.esr_avg);
    println!("SSD        {:.4}", summary.ssd);
    println!("artifacts  {}", out.display());
    Ok(())
}
