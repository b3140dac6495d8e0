//! The design loop: threshold calibration, N iterations of sampling and
//! selection, and the final multi-run evaluation of the overall best.

mod artifacts;
mod config;
mod replay;
mod runlog;

use std::collections::BTreeMap;

use crate::designer::{DesignerError, DesignerPort};
use crate::evaluator::{evaluate_final, EvaluationRecord, EvaluatorPort};
use crate::guidance::{
    assemble_bundle, reconcile_mission, GuidanceError, Mission, MissionExemplar, ReconcileError,
    ReconcilerPort,
};
use crate::metrics::{esr, esr_avg, ssd, UsageHistory};
use crate::ros::{parse_candidate, RewardCandidate};
use crate::seed::derive_seed;
use crate::settable::{SetError, StateExecutionTable};
use crate::worldmodel::{TaskDef, WorldModel};

pub use artifacts::{write_artifacts, MetricsReport};
pub use config::{EvolutionConfig, TauPolicy, Variant, VariantFlags};
pub use replay::{replay, ReplayReport};
pub use runlog::{CandidateOutcome, RunEvent, RunLog, RunLogError, TauSource};

#[derive(Debug, thiserror::Error)]
pub enum EvolutionError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("threshold calibration for task `{task}` failed: {executed} of {needed} pilots executed within {batches} batches")]
    Calibration {
        task: String,
        executed: usize,
        needed: usize,
        batches: u32,
    },
    #[error("iteration 1 produced no executable reward, even after resampling")]
    NoExecutableStart,
    #[error("designer failed: {0}")]
    Designer(#[from] DesignerError),
    #[error("mission reconciliation failed: {0}")]
    Reconcile(#[from] ReconcileError),
    #[error(transparent)]
    Guidance(#[from] GuidanceError),
    #[error(transparent)]
    Table(#[from] SetError),
}

/// The task a run designs rewards for.
#[derive(Debug, Clone, Copy)]
pub struct RunTask<'a> {
    pub world: &'a WorldModel,
    pub task: &'a TaskDef,
    pub exemplar: Option<&'a MissionExemplar>,
}

/// External collaborators of a run.
#[derive(Clone, Copy)]
pub struct Ports<'a> {
    pub designer: &'a dyn DesignerPort,
    pub evaluator: &'a dyn EvaluatorPort,
    pub reconciler: &'a dyn ReconcilerPort,
}

/// A sampled reward that executed, with its design-time record.
#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    pub candidate: RewardCandidate,
    pub record: EvaluationRecord,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub tau: f64,
    /// Best of each iteration (carried forward over barren iterations).
    pub iteration_bests: Vec<Scored>,
    pub best_iteration: u32,
    pub best: Scored,
    pub final_records: Vec<EvaluationRecord>,
    pub esr_avg: f64,
    pub ssd: f64,
    pub usage: UsageHistory,
    pub table: StateExecutionTable,
}

/// A run's log, complete or partial, and its outcome.
pub struct EvolutionRun {
    pub log: RunLog,
    pub outcome: Result<RunSummary, EvolutionError>,
}

/// Mutable state carried from one iteration to the next.
#[derive(Debug, Clone)]
pub struct LoopState {
    pub best_prev: Option<Scored>,
    pub table: StateExecutionTable,
    pub mission: Mission,
    pub tau: f64,
    pub usage: UsageHistory,
}

/// What one iteration produced.
#[derive(Debug, Clone)]
pub struct IterationResult {
    pub outcomes: Vec<CandidateOutcome>,
    pub best: Scored,
    pub barren: bool,
}

/// Parse and evaluate `texts`, padding up to `k` with failed records for
/// samples the designer did not return. Outcomes are in sample order
/// whatever the number of workers.
fn evaluate_batch(
    texts: &[String],
    k: usize,
    world: &WorldModel,
    evaluator: &dyn EvaluatorPort,
    iteration: u32,
    id_prefix: &str,
    seed: u64,
    workers: usize,
) -> Vec<(Option<RewardCandidate>, CandidateOutcome)> {
    let one = |index: usize| {
        let id = format!("{id_prefix}-{index}");
        let Some(text) = texts.get(index) else {
            let record = EvaluationRecord::failed(&id, "designer returned no sample", seed);
            return (None, outcome(index, id, String::new(), Vec::new(), None, record));
        };
        match parse_candidate(text, &world.catalog, &id, iteration, index as u32) {
            Ok(candidate) => {
                let record = evaluator.evaluate(&candidate, seed);
                let out = outcome(index, id, text.clone(), candidate.ros_st.clone(), None, record);
                (Some(candidate), out)
            }
            Err(e) => {
                let record = EvaluationRecord::failed(&id, format!("parse error: {e}"), seed);
                (None, outcome(index, id, text.clone(), Vec::new(), Some(e.to_string()), record))
            }
        }
    };
    let count = k.max(texts.len());
    if workers <= 1 || count <= 1 {
        return (0..count).map(one).collect();
    }
    let chunk = count.div_ceil(workers);
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..count)
            .collect::<Vec<_>>()
            .chunks(chunk)
            .map(|idx| {
                let idx = idx.to_vec();
                let one = &one;
                scope.spawn(move || idx.into_iter().map(one).collect::<Vec<_>>())
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("evaluation worker panicked"))
            .collect()
    })
}

fn outcome(
    index: usize,
    id: String,
    source: String,
    ros_st: Vec<String>,
    parse_error: Option<String>,
    record: EvaluationRecord,
) -> CandidateOutcome {
    CandidateOutcome {
        sample_index: index as u32,
        candidate_id: id,
        source,
        ros_st,
        parse_error,
        record,
    }
}

/// Executed outcome with the highest success; ties go to the lowest index.
fn select_best(batch: &[(Option<RewardCandidate>, CandidateOutcome)]) -> Option<Scored> {
    let mut best: Option<&(Option<RewardCandidate>, CandidateOutcome)> = None;
    for item in batch {
        if !item.1.record.executed || item.0.is_none() {
            continue;
        }
        if best.is_none_or(|b| item.1.record.success > b.1.record.success) {
            best = Some(item);
        }
    }
    best.map(|(c, o)| Scored {
        candidate: c.clone().expect("executed outcomes carry a candidate"),
        record: o.record.clone(),
    })
}

/// Adaptive threshold: mean success of the first `k0` executed pilot
/// samples, drawn in batches of `k0` from iteration-1 bundles.
pub fn calibrate_threshold(
    task: RunTask<'_>,
    mission: &Mission,
    ports: Ports<'_>,
    config: &EvolutionConfig,
    log: &mut RunLog,
) -> Result<f64, EvolutionError> {
    let k0 = config.pilot_samples;
    if let TauPolicy::Fixed(tau) = config.tau_policy {
        log.push(RunEvent::ThresholdSet { tau, source: TauSource::Fixed, pilot_successes: Vec::new() });
        return Ok(tau);
    }
    let empty = StateExecutionTable::new(&task.world.catalog)?;
    let bundle = assemble_bundle(1, None, &empty, mission, 0.0, config.variant.bundle_options())?;
    let mut successes = Vec::with_capacity(k0);
    for b in 0..config.max_pilot_batches {
        let texts = ports.designer.propose(&bundle, k0, derive_seed(config.seed, &format!("pilot/{b}")))?;
        let seed = derive_seed(config.seed, &format!("pilot-eval/{b}"));
        let batch = evaluate_batch(
            &texts,
            k0,
            task.world,
            ports.evaluator,
            0,
            &format!("p{b}"),
            seed,
            config.eval_workers,
        );
        for (_, o) in &batch {
            if o.record.executed && successes.len() < k0 {
                successes.push(o.record.success);
            }
        }
        log.push(RunEvent::PilotBatch { batch: b, outcomes: batch.into_iter().map(|(_, o)| o).collect() });
        if successes.len() == k0 {
            let tau = successes.iter().sum::<f64>() / k0 as f64;
            log.push(RunEvent::ThresholdSet { tau, source: TauSource::Adaptive, pilot_successes: successes });
            return Ok(tau);
        }
    }
    Err(EvolutionError::Calibration {
        task: task.task.id.clone(),
        executed: successes.len(),
        needed: k0,
        batches: config.max_pilot_batches,
    })
}

/// One iteration: assemble the bundle, sample K rewards, evaluate them,
/// update the usage history and (when enabled) the table, and pick the best.
pub fn run_iteration(
    n: u32,
    state: &mut LoopState,
    task: RunTask<'_>,
    ports: Ports<'_>,
    config: &EvolutionConfig,
    log: &mut RunLog,
) -> Result<IterationResult, EvolutionError> {
    let options = config.variant.bundle_options();
    let prev = state.best_prev.as_ref().map(|s| (&s.candidate, &s.record));
    let bundle = assemble_bundle(n, prev, &state.table, &state.mission, state.tau, options)?;
    let attempts = if n == 1 { 2 } else { 1 };
    let mut all_outcomes = Vec::new();
    for attempt in 0..attempts {
        log.push(RunEvent::IterationStarted {
            iteration: n,
            mode: bundle.mode,
            bundle_hash: bundle.digest(),
            resample: attempt > 0,
        });
        let design_seed = derive_seed(config.seed, &format!("iter/{n}/{attempt}"));
        let texts = ports.designer.propose(&bundle, config.samples, design_seed)?;
        let eval_seed = derive_seed(config.seed, &format!("eval/{n}/{attempt}"));
        let prefix = if attempt == 0 { format!("i{n}") } else { format!("i{n}r{attempt}") };
        let batch = evaluate_batch(
            &texts,
            config.samples,
            task.world,
            ports.evaluator,
            n,
            &prefix,
            eval_seed,
            config.eval_workers,
        );
        for (candidate, o) in &batch {
            if let Some(c) = candidate {
                state.usage.record(c);
            }
            log.push(RunEvent::CandidateEvaluated { iteration: n, outcome: o.clone() });
        }
        if config.variant.use_set {
            let pairs: Vec<(&RewardCandidate, &EvaluationRecord)> = batch
                .iter()
                .filter_map(|(c, o)| c.as_ref().map(|c| (c, &o.record)))
                .collect();
            state.table = state.table.accumulate(&pairs)?;
        }
        let best = select_best(&batch);
        all_outcomes.extend(batch.into_iter().map(|(_, o)| o));
        let (best, barren) = match (best, &state.best_prev) {
            (Some(best), _) => (best, false),
            (None, Some(prev)) => (prev.clone(), true),
            (None, None) if attempt + 1 < attempts => continue,
            (None, None) => return Err(EvolutionError::NoExecutableStart),
        };
        log.push(RunEvent::IterationBest {
            iteration: n,
            candidate_id: best.candidate.id.clone(),
            sample_index: best.candidate.sample_index,
            success: best.record.success,
            barren,
        });
        log.push(RunEvent::SetSnapshot { iteration: n, rows: state.table.snapshot() });
        state.best_prev = Some(best.clone());
        return Ok(IterationResult { outcomes: all_outcomes, best, barren });
    }
    unreachable!("the last attempt either selects or fails")
}

/// Index of the highest design-time success; ties go to the earliest.
pub fn select_overall(successes: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in successes.iter().enumerate() {
        if best.is_none_or(|b| s > successes[b]) {
            best = Some(i);
        }
    }
    best
}

/// Run the whole loop. The returned log is complete on success and ends
/// with a `run_failed` event otherwise.
pub fn run_evolution(task: RunTask<'_>, ports: Ports<'_>, config: &EvolutionConfig) -> EvolutionRun {
    let mut log = RunLog::default();
    log.push(RunEvent::RunStarted {
        task_id: task.task.id.clone(),
        config: config.clone(),
        catalog: task.world.state_names(),
    });
    let outcome = run_inner(task, ports, config, &mut log);
    if let Err(e) = &outcome {
        log.push(RunEvent::RunFailed { error: e.to_string() });
    }
    EvolutionRun { log, outcome }
}

fn run_inner(
    task: RunTask<'_>,
    ports: Ports<'_>,
    config: &EvolutionConfig,
    log: &mut RunLog,
) -> Result<RunSummary, EvolutionError> {
    config.validate().map_err(EvolutionError::Config)?;
    let mission = if config.variant.use_reconciliation {
        Mission::Reconciled(reconcile_mission(
            &task.task.user_description,
            task.task.success_spec.as_ref(),
            task.world,
            task.exemplar,
            ports.reconciler,
        )?)
    } else {
        Mission::Raw { description: task.task.user_description.clone() }
    };
    log.push(RunEvent::MissionReady { mission: mission.clone() });

    let tau = calibrate_threshold(task, &mission, ports, config, log)?;
    let mut state = LoopState {
        best_prev: None,
        table: StateExecutionTable::new(&task.world.catalog)?,
        mission,
        tau,
        usage: UsageHistory::new(),
    };
    let mut bests = Vec::with_capacity(config.iterations as usize);
    for n in 1..=config.iterations {
        let result = run_iteration(n, &mut state, task, ports, config, log)?;
        tracing::debug!(iteration = n, success = result.best.record.success, barren = result.barren, "iteration done");
        bests.push(result.best);
    }

    let successes: Vec<f64> = bests.iter().map(|b| b.record.success).collect();
    let pick = select_overall(&successes).expect("at least one iteration");
    let best = bests[pick].clone();
    log.push(RunEvent::FinalSelection {
        iteration: pick as u32 + 1,
        candidate_id: best.candidate.id.clone(),
        design_success: best.record.success,
    });
    let final_records = evaluate_final(
        &best.candidate,
        ports.evaluator,
        config.final_eval_runs,
        derive_seed(config.seed, "final"),
    );
    log.push(RunEvent::FinalEvaluation { records: final_records.clone() });
    let esr_avg = esr_avg(&final_records).expect("final_eval_runs >= 1");
    let ssd = ssd(&state.usage, &task.world.catalog);
    log.push(RunEvent::Metrics {
        esr_avg,
        esr_list: final_records.iter().map(esr).collect(),
        ssd,
        usage: state.usage.counts.clone(),
    });
    Ok(RunSummary {
        tau,
        iteration_bests: bests,
        best_iteration: pick as u32 + 1,
        best,
        final_records,
        esr_avg,
        ssd,
        usage: state.usage,
        table: state.table,
    })
}

/// Usage counts recomputed from every evaluated candidate in a log.
pub fn usage_from_log(log: &RunLog) -> BTreeMap<String, u64> {
    let mut counts = BTreeMap::new();
    for event in &log.events {
        if let RunEvent::CandidateEvaluated { outcome, .. } = event {
            for s in &outcome.ros_st {
                *counts.entry(s.clone()).or_insert(0) += 1;
            }
        }
    }
    counts
}


/// Parameters of a generated task.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SyntheticSpec {
    pub catalog_size: usize,
    pub truth_size: usize,
    pub difficulty: f64,
    pub task_seed: u64,
}

pub struct SyntheticRun {
    pub world: WorldModel,
    pub task: crate::worldmodel::SyntheticTask,
    pub run: EvolutionRun,
}

/// Generate a task and run the loop on it with the synthetic designer,
/// reconciler and surrogate evaluator.
pub fn run_synthetic(
    spec: SyntheticSpec,
    sampler: &crate::designer::SamplerConfig,
    config: &EvolutionConfig,
) -> Result<SyntheticRun, EvolutionError> {
    use crate::designer::SyntheticDesigner;
    use crate::evaluator::SurrogateEvaluator;
    use crate::guidance::SyntheticReconciler;
    use crate::worldmodel::generate_synthetic_task;

    let (world, task) = generate_synthetic_task(spec.catalog_size, spec.truth_size, spec.difficulty, spec.task_seed)
        .map_err(|e| EvolutionError::Config(e.to_string()))?;
    let designer = SyntheticDesigner::new(&world.catalog, sampler.clone())?;
    let evaluator = SurrogateEvaluator::new(&world, task.clone());
    let reconciler = SyntheticReconciler;
    let ports = Ports { designer: &designer, evaluator: &evaluator, reconciler: &reconciler };
    let run = run_evolution(RunTask { world: &world, task: &task.task, exemplar: None }, ports, config);
    Ok(SyntheticRun { world, task, run })
}
