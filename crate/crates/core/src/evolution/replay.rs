//! Recompute every selection and metric of a run from its raw records and
//! compare with what the log claims.

use std::collections::BTreeMap;

use serde::Serialize;

use super::config::TauPolicy;
use super::runlog::{CandidateOutcome, RunEvent, RunLog, TauSource};
use super::{select_overall, usage_from_log};
use crate::evaluator::EvaluationRecord;
use crate::guidance::{select_mode, Mode};
use crate::metrics::{esr, mean, ssd, UsageHistory};
use crate::ros::RewardCandidate;
use crate::seed::derive_seed;
use crate::settable::StateExecutionTable;
use crate::worldmodel::{StateDescriptor, StateKind};

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ReplayReport {
    pub task_id: String,
    pub variant: String,
    pub seed: u64,
    /// Number of logged values compared against a recomputation.
    pub checks: usize,
    pub mismatches: Vec<String>,
    /// Recomputed best success of each iteration.
    pub iteration_bests: Vec<(u32, f64)>,
    pub esr_avg: Option<f64>,
    pub ssd: Option<f64>,
    pub failed: bool,
}

impl ReplayReport {
    pub fn is_ok(&self) -> bool {
        self.mismatches.is_empty()
    }

    fn expect<T: PartialEq + std::fmt::Debug>(&mut self, what: &str, logged: T, recomputed: T) {
        self.checks += 1;
        if logged != recomputed {
            self.mismatches
                .push(format!("{what}: logged {logged:?}, recomputed {recomputed:?}"));
        }
    }
}

/// Executed outcome with the highest success, ties to the lowest index.
fn best_of<'a>(outcomes: &[&'a CandidateOutcome]) -> Option<&'a CandidateOutcome> {
    let mut best: Option<&CandidateOutcome> = None;
    for o in outcomes {
        if o.record.executed
            && o.parse_error.is_none()
            && best.is_none_or(|b| o.record.success > b.record.success)
        {
            best = Some(o);
        }
    }
    best
}

fn stub_candidate(o: &CandidateOutcome) -> RewardCandidate {
    RewardCandidate {
        id: o.candidate_id.clone(),
        iteration: 0,
        sample_index: o.sample_index,
        source: Vec::new(),
        ros_st: o.ros_st.clone(),
        ros_op: Vec::new(),
        unresolved: Vec::new(),
    }
}

pub fn replay(log: &RunLog) -> ReplayReport {
    let mut report = ReplayReport::default();
    let Some((task_id, config, catalog)) = log.started() else {
        report.mismatches.push("log has no run_started event".into());
        return report;
    };
    report.task_id = task_id.to_string();
    report.variant = config.variant_name.clone();
    report.seed = config.seed;
    report.failed = log.failure().is_some();
    let descriptors: Vec<StateDescriptor> = catalog
        .iter()
        .map(|n| StateDescriptor::new(n.clone(), StateKind::Distance, 1))
        .collect();

    // record invariants
    let check_record = |report: &mut ReplayReport, r: &EvaluationRecord| {
        report.checks += 1;
        if let Err(e) = r.check() {
            report.mismatches.push(e);
        }
    };
    for event in &log.events {
        match event {
            RunEvent::PilotBatch { outcomes, .. } => outcomes.iter().for_each(|o| check_record(&mut report, &o.record)),
            RunEvent::CandidateEvaluated { outcome, .. } => {
                check_record(&mut report, &outcome.record);
                if let Some(s) = outcome.ros_st.iter().find(|s| !catalog.contains(s)) {
                    report.mismatches.push(format!("{}: unknown state `{s}`", outcome.candidate_id));
                }
            }
            RunEvent::FinalEvaluation { records } => records.iter().for_each(|r| check_record(&mut report, r)),
            _ => {}
        }
    }

    // threshold
    let mut tau = None;
    for event in &log.events {
        if let RunEvent::ThresholdSet { tau: logged, source, pilot_successes } = event {
            match config.tau_policy {
                TauPolicy::Fixed(v) => {
                    report.expect("threshold source", *source, TauSource::Fixed);
                    report.expect("threshold", *logged, v);
                }
                TauPolicy::Adaptive => {
                    let pilots: Vec<f64> = log
                        .events
                        .iter()
                        .filter_map(|e| match e {
                            RunEvent::PilotBatch { outcomes, .. } => Some(outcomes),
                            _ => None,
                        })
                        .flatten()
                        .filter(|o| o.record.executed)
                        .map(|o| o.record.success)
                        .take(config.pilot_samples)
                        .collect();
                    report.expect("pilot successes", pilot_successes, &pilots);
                    let recomputed = pilots.iter().sum::<f64>() / pilots.len().max(1) as f64;
                    report.expect("threshold", *logged, recomputed);
                }
            }
            tau = Some(*logged);
        }
    }

    // iterations
    let mut by_iteration: BTreeMap<u32, Vec<&CandidateOutcome>> = BTreeMap::new();
    let mut modes: BTreeMap<u32, Mode> = BTreeMap::new();
    for event in &log.events {
        match event {
            RunEvent::CandidateEvaluated { iteration, outcome } => by_iteration.entry(*iteration).or_default().push(outcome),
            RunEvent::IterationStarted { iteration, mode, .. } => {
                modes.insert(*iteration, *mode);
            }
            _ => {}
        }
    }
    let mut table = StateExecutionTable::new(&descriptors).ok();
    let mut prev: Option<(String, u32, f64)> = None;
    let mut bests: Vec<(u32, String, f64)> = Vec::new();
    for event in &log.events {
        match event {
            RunEvent::IterationBest { iteration, candidate_id, sample_index, success, barren } => {
                let n = *iteration;
                let outcomes = by_iteration.get(&n).cloned().unwrap_or_default();
                let (id, idx, s, was_barren) = match (best_of(&outcomes), &prev) {
                    (Some(o), _) => (o.candidate_id.clone(), o.sample_index, o.record.success, false),
                    (None, Some((id, idx, s))) => (id.clone(), *idx, *s, true),
                    (None, None) => {
                        report.mismatches.push(format!("iteration {n}: best logged but nothing executed"));
                        continue;
                    }
                };
                let expected_mode = match (&prev, tau) {
                    (Some((_, _, prev_s)), Some(tau)) if config.variant.use_dr_schedule => select_mode(n, *prev_s, tau),
                    _ => Mode::StateSelection,
                };
                if let Some(mode) = modes.get(&n) {
                    report.expect(&format!("iteration {n} mode"), *mode, expected_mode);
                }
                report.expect(&format!("iteration {n} best"), (candidate_id.as_str(), *sample_index), (id.as_str(), idx));
                report.expect(&format!("iteration {n} best success"), *success, s);
                report.expect(&format!("iteration {n} barren"), *barren, was_barren);
                report.iteration_bests.push((n, s));
                bests.push((n, id.clone(), s));
                prev = Some((id, idx, s));
                if config.variant.use_set {
                    if let Some(t) = table.as_ref() {
                        let stubs: Vec<RewardCandidate> = outcomes.iter().map(|o| stub_candidate(o)).collect();
                        let pairs: Vec<(&RewardCandidate, &EvaluationRecord)> =
                            stubs.iter().zip(outcomes.iter().map(|o| &o.record)).collect();
                        match t.accumulate(&pairs) {
                            Ok(next) => table = Some(next),
                            Err(e) => report.mismatches.push(format!("iteration {n}: {e}")),
                        }
                    }
                }
            }
            RunEvent::SetSnapshot { iteration, rows } => {
                if let Some(t) = table.as_ref() {
                    let recomputed = t.snapshot();
                    report.checks += 1;
                    if rows.len() != recomputed.len() {
                        report.mismatches.push(format!(
                            "iteration {iteration} table: logged {} rows, recomputed {}",
                            rows.len(),
                            recomputed.len()
                        ));
                    }
                    for (logged, want) in rows.iter().zip(&recomputed).filter(|(a, b)| a != b) {
                        report.mismatches.push(format!(
                            "iteration {iteration} table row `{}`: logged ({}, {}), recomputed `{}` ({}, {})",
                            logged.state, logged.usage, logged.contribution, want.state, want.usage, want.contribution
                        ));
                    }
                }
            }
            _ => {}
        }
    }

    // overall selection
    for event in &log.events {
        if let RunEvent::FinalSelection { iteration, candidate_id, design_success } = event {
            let successes: Vec<f64> = bests.iter().map(|b| b.2).collect();
            match select_overall(&successes) {
                Some(i) => {
                    report.expect("overall best iteration", *iteration, bests[i].0);
                    report.expect("overall best", candidate_id.as_str(), bests[i].1.as_str());
                    report.expect("overall best success", *design_success, bests[i].2);
                }
                None => report.mismatches.push("final selection without iteration bests".into()),
            }
        }
    }

    // metrics
    let usage = usage_from_log(log);
    let recount_ssd = ssd(&UsageHistory { counts: usage.clone() }, &descriptors);
    let final_records = log.events.iter().find_map(|e| match e {
        RunEvent::FinalEvaluation { records } => Some(records),
        _ => None,
    });
    if let Some(records) = final_records {
        report.expect("final runs", records.len(), config.final_eval_runs as usize);
        let base = derive_seed(config.seed, "final");
        let seeds: Vec<u64> = records.iter().map(|r| r.seed).collect();
        let expected: Vec<u64> = (0..records.len() as u64).map(|i| base.wrapping_add(i)).collect();
        report.expect("final seeds", seeds, expected);
    }
    for event in &log.events {
        if let RunEvent::Metrics { esr_avg, esr_list, ssd: logged_ssd, usage: logged_usage } = event {
            let list: Vec<f64> = final_records.map(|rs| rs.iter().map(esr).collect()).unwrap_or_default();
            let avg = mean(&list);
            report.expect("esr list", esr_list, &list);
            report.expect("esr_avg", *esr_avg, avg);
            report.expect("ssd", *logged_ssd, recount_ssd);
            report.expect("usage", logged_usage, &usage);
            report.esr_avg = Some(avg);
            report.ssd = Some(recount_ssd);
        }
    }
    report
}
