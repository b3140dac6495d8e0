//! Sweeps of tasks x variants x seeds.
//!
//! ```toml
//! output_dir = "ablation"
//! seeds = [0, 1, 2]             # default: 0..20
//! workers = 4
//! variants = ["baseline_du", "set", { name = "no_table", flags = { use_set = false } }]
//!
//! [[tasks]]
//! kind = "synthetic"
//! states = 24
//! truth = 4
//! ```
//!
//! Each run writes its artifacts to `<output_dir>/<task>/<variant>/seed-<n>/`.
//! The report is aggregated afterwards from those logs alone.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use clap::Args;
use rayon::prelude::*;
use serde::Deserialize;

use rosevo::chat::EndpointConfig;
use rosevo::designer::SamplerConfig;
use rosevo::evolution::{write_artifacts, Variant};
use rosevo::EvolutionConfig;

use crate::error::{Categorize, CliError, CliResult};
use crate::report::{aggregate, render_rows, replay_file, write_rows_csv, Entry, Row};
use crate::setup::{
    load_toml, prepare, Backends, BackendSettings, DesignerKind, EvaluatorKind, ExternalCommand, TaskSource,
    VariantSpec,
};

pub const DEFAULT_SEEDS: u64 = 20;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Defaults to one synthetic task with default parameters.
    pub tasks: Option<Vec<TaskSource>>,
    /// Defaults to the four presets.
    pub variants: Option<Vec<VariantSpec>>,
    pub seeds: Option<Vec<u64>>,
    pub output_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    pub designer: DesignerKind,
    pub evaluator: EvaluatorKind,
    /// Base settings; each variant overrides flags, threshold and name.
    pub evolution: EvolutionConfig,
    pub sampler: SamplerConfig,
    pub endpoint: EndpointConfig,
    pub external: Option<ExternalCommand>,
}

/// A validated spec.
#[derive(Debug, Clone)]
pub struct Plan {
    pub tasks: Vec<TaskSource>,
    pub variants: Vec<Variant>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub workers: usize,
    pub backends: BackendSettings,
    pub evolution: EvolutionConfig,
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::config(anyhow::anyhow!("{}", msg.into()))
}

impl ExperimentSpec {
    pub fn plan(self, base_dir: &Path) -> CliResult<Plan> {
        let mut tasks = self.tasks.unwrap_or_else(|| vec![TaskSource::default()]);
        if tasks.is_empty() {
            return Err(invalid("`tasks` is empty"));
        }
        for t in &mut tasks {
            t.rebase(base_dir);
        }
        let labels: BTreeSet<String> = tasks.iter().map(TaskSource::label).collect();
        if labels.len() != tasks.len() {
            return Err(invalid("task labels must be unique"));
        }
        let variants = match self.variants {
            None => Variant::presets(),
            Some(v) if v.is_empty() => return Err(invalid("`variants` is empty")),
            Some(v) => v.iter().map(VariantSpec::resolve).collect::<CliResult<Vec<_>>>()?,
        };
        let names: BTreeSet<&str> = variants.iter().map(|v| v.name.as_str()).collect();
        if names.len() != variants.len() {
            return Err(invalid("variant names must be unique"));
        }
        let seeds = self.seeds.unwrap_or_else(|| (0..DEFAULT_SEEDS).collect());
        if seeds.is_empty() {
            return Err(invalid("`seeds` is empty"));
        }
        if seeds.iter().collect::<BTreeSet<_>>().len() != seeds.len() {
            return Err(invalid("seeds must be unique"));
        }
        let workers = self.workers.unwrap_or(1);
        if workers == 0 {
            return Err(invalid("`workers` must be at least 1"));
        }
        for v in &variants {
            self.evolution.clone().with_variant(v).validate().map_err(|e| invalid(format!("variant {}: {e}", v.name)))?;
        }
        let backends = BackendSettings {
            designer: self.designer,
            evaluator: self.evaluator,
            sampler: self.sampler,
            endpoint: self.endpoint,
            external: self.external,
        };
        for t in &tasks {
            backends.check(t)?;
        }
        Ok(Plan {
            tasks,
            variants,
            seeds,
            output_dir: self.output_dir.unwrap_or_else(|| PathBuf::from("ablation")),
            workers,
            backends,
            evolution: self.evolution,
        })
    }
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Experiment spec (TOML).
    spec: PathBuf,
    /// Overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `workers`.
    #[arg(long)]
    workers: Option<usize>,
    /// Use seeds 0..N instead of the spec's list.
    #[arg(long)]
    seeds: Option<u64>,
}

struct Job<'a> {
    task: &'a TaskSource,
    variant: &'a Variant,
    seed: u64,
    dir: PathBuf,
}

/// Run one cell member. Errors are per run and do not stop the sweep.
fn run_job(plan: &Plan, job: &Job<'_>) -> Result<(), String> {
    let prepared = prepare(job.task, job.seed).map_err(|e| e.to_string())?;
    let backends = Backends::build(&plan.backends, &prepared).map_err(|e| e.to_string())?;
    let config = EvolutionConfig { seed: job.seed, ..plan.evolution.clone() }.with_variant(job.variant);
    let run = backends.run(&prepared, &config);
    write_artifacts(&job.dir, &run.log).map_err(|e| format!("{}: {e}", job.dir.display()))?;
    run.outcome.map(|_| ()).map_err(|e| e.to_string())
}

/// Execute every run of `plan` and aggregate from the written logs.
pub fn execute(plan: &Plan) -> CliResult<Vec<Row>> {
    let mut jobs = Vec::new();
    for task in &plan.tasks {
        for variant in &plan.variants {
            for &seed in &plan.seeds {
                let dir = plan.output_dir.join(task.label()).join(&variant.name).join(format!("seed-{seed}"));
                jobs.push(Job { task, variant, seed, dir });
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(plan.workers).build().or_runtime("thread pool")?;
    let outcomes: Vec<Result<(), String>> = pool.install(|| jobs.par_iter().map(|j| run_job(plan, j)).collect());

    // single-threaded from here on
    let mut entries: Vec<Entry> = Vec::with_capacity(jobs.len());
    for (job, outcome) in jobs.iter().zip(outcomes) {
        if let Err(e) = &outcome {
            tracing::warn!(task = %job.task.label(), variant = %job.variant.name, seed = job.seed, "run failed: {e}");
        }
        let log = job.dir.join("runlog.jsonl");
        let mut entry = if log.exists() {
            replay_file(&log)?
        } else {
            // the run never got as far as writing a log
            Entry {
                path: log,
                task: String::new(),
                variant: String::new(),
                seed: job.seed,
                report: Default::default(),
            }
        };
        // group by the sweep's labels, not the task ids inside the logs
        entry.task = job.task.label();
        entry.variant = job.variant.name.clone();
        if outcome.is_err() {
            entry.report.failed = true;
        }
        entries.push(entry);
    }
    Ok(aggregate(&entries))
}

pub fn ablate(args: &AblateArgs) -> CliResult<()> {
    let spec: ExperimentSpec = load_toml(&args.spec)?;
    let base = args.spec.parent().unwrap_or(Path::new("."));
    let mut plan = spec.plan(base)?;
    if let Some(out) = &args.out {
        plan.output_dir = out.clone();
    }
    if let Some(w) = args.workers {
        if w == 0 {
            return Err(invalid("--workers must be at least 1"));
        }
        plan.workers = w;
    }
    if let Some(n) = args.seeds {
        if n == 0 {
            return Err(invalid("--seeds must be at least 1"));
        }
        plan.seeds = (0..n).collect();
    }
    std::fs::create_dir_all(&plan.output_dir).or_runtime(plan.output_dir.display())?;
    let rows = execute(&plan)?;
    write_rows_csv(&plan.output_dir.join("ablation.csv"), &rows)?;
    let text = render_rows(&rows);
    std::fs::write(plan.output_dir.join("ablation.txt"), &text).or_runtime(plan.output_dir.display())?;
    print!("{text}");

    let dead: Vec<String> =
        rows.iter().filter(|r| r.all_failed()).map(|r| format!("{}/{}", r.task, r.variant)).collect();
    if !dead.is_empty() {
        return Err(CliError::runtime(anyhow::anyhow!("every run failed in: {}", dead.join(", "))));
    }
    Ok(())
}
