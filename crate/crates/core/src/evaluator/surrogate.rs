//! A stand-in for RL training on a synthetic task.
//!
//! Success rewards observing the right states (Jaccard overlap with the
//! hidden truth subset), penalises irrelevant states, and gives a smaller
//! bonus for combining each relevant state with its ideal operation.

use std::collections::BTreeSet;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{EvaluationRecord, EvaluatorPort};
use crate::ros::RewardCandidate;
use crate::seed::rng_for;
use crate::worldmodel::{StateDescriptor, SyntheticTask, WorldModel};

pub const TRAJECTORY_CHECKPOINTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateCoefficients {
    pub relevance: f64,
    pub irrelevance: f64,
    pub operation: f64,
}

impl Default for SurrogateCoefficients {
    fn default() -> Self {
        Self {
            relevance: 0.8,
            irrelevance: 0.3,
            operation: 0.2,
        }
    }
}

/// Fraction of truth states read by at least one term of their ideal kind.
fn opmatch(candidate: &RewardCandidate, task: &SyntheticTask) -> f64 {
    let covered = task
        .truth_ops
        .iter()
        .filter(|(state, kind)| {
            candidate
                .ros_op
                .iter()
                .any(|t| t.kind == **kind && t.operands.iter().any(|o| o == *state))
        })
        .count();
    covered as f64 / task.truth_ops.len() as f64
}

/// Noise-free score before clamping.
fn base_score(
    candidate: &RewardCandidate,
    task: &SyntheticTask,
    catalog_len: usize,
    k: SurrogateCoefficients,
) -> f64 {
    let chosen: BTreeSet<&str> = candidate.ros_st.iter().map(String::as_str).collect();
    let truth: BTreeSet<&str> = task.truth_subset.iter().map(String::as_str).collect();
    let inter = chosen.intersection(&truth).count();
    let union = chosen.union(&truth).count();
    let jaccard = if union == 0 { 0.0 } else { inter as f64 / union as f64 };
    let extras = chosen.difference(&truth).count();
    k.relevance * jaccard - k.irrelevance * (extras as f64 / catalog_len as f64)
        + k.operation * opmatch(candidate, task)
}

/// Evaluate `candidate` on `task`. Deterministic in `(candidate.id, seed)`.
///
/// The run fails outright when the candidate declares inputs outside the
/// catalog, and otherwise with probability `exec_failure_rate`. A completed
/// run reports ten checkpoints rising monotonically to the final success.
pub fn surrogate_evaluate(
    candidate: &RewardCandidate,
    task: &SyntheticTask,
    catalog: &[StateDescriptor],
    seed: u64,
    coefficients: SurrogateCoefficients,
) -> EvaluationRecord {
    let mut rng = rng_for(seed, &candidate.id);
    let crash: f64 = rng.random();
    let noise: f64 = rng.sample(StandardNormal);
    let id = candidate.id.as_str();
    let unknown = candidate
        .ros_st
        .iter()
        .chain(&candidate.unresolved)
        .find(|n| !catalog.iter().any(|s| &s.name == *n));
    if let Some(name) = unknown {
        return EvaluationRecord::failed(id, format!("NameError: `{name}` is not an observed state"), seed);
    }
    if crash < task.exec_failure_rate {
        return EvaluationRecord::failed(id, "runtime error during training", seed);
    }
    let base = base_score(candidate, task, catalog.len(), coefficients);
    let success = (base + task.noise_scale * noise).clamp(0.0, 1.0);

    let increments: Vec<f64> = (0..TRAJECTORY_CHECKPOINTS)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            1.0 + task.noise_scale * z.abs()
        })
        .collect();
    let total: f64 = increments.iter().sum();
    let mut trajectory = Vec::with_capacity(TRAJECTORY_CHECKPOINTS);
    let mut acc = 0.0;
    for inc in &increments[..TRAJECTORY_CHECKPOINTS - 1] {
        acc += inc;
        trajectory.push(success * (acc / total).min(1.0));
    }
    trajectory.push(success);
    EvaluationRecord::executed(id, trajectory, seed)
}

/// [`EvaluatorPort`] over a synthetic task.
#[derive(Debug, Clone)]
pub struct SurrogateEvaluator {
    catalog: Vec<StateDescriptor>,
    task: SyntheticTask,
    coefficients: SurrogateCoefficients,
}

impl SurrogateEvaluator {
    pub fn new(world: &WorldModel, task: SyntheticTask) -> Self {
        Self {
            catalog: world.catalog.clone(),
            task,
            coefficients: SurrogateCoefficients::default(),
        }
    }

    pub fn with_coefficients(mut self, coefficients: SurrogateCoefficients) -> Self {
        self.coefficients = coefficients;
        self
    }

    pub fn task(&self) -> &SyntheticTask {
        &self.task
    }
}

impl EvaluatorPort for SurrogateEvaluator {
    fn evaluate(&self, candidate: &RewardCandidate, seed: u64) -> EvaluationRecord {
        surrogate_evaluate(candidate, &self.task, &self.catalog, seed, self.coefficients)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ros::{OpKind, OpTerm};
    use crate::worldmodel::generate_synthetic_task;
    use proptest::prelude::*;

    fn candidate(states: &[&str], ops: Vec<OpTerm>) -> RewardCandidate {
        RewardCandidate {
            id: "c".into(),
            iteration: 1,
            sample_index: 0,
            source: vec!["r = 0".into()],
            ros_st: states.iter().map(|s| s.to_string()).collect(),
            ros_op: ops,
            unresolved: Vec::new(),
        }
    }

    fn noiseless(catalog: usize, truth: usize, seed: u64) -> (WorldModel, SyntheticTask) {
        generate_synthetic_task(catalog, truth, 0.0, seed).unwrap()
    }

    fn ideal_ops(task: &SyntheticTask) -> Vec<OpTerm> {
        task.truth_ops
            .iter()
            .map(|(s, k)| OpTerm { kind: *k, operands: vec![s.clone()], weight: 1.0 })
            .collect()
    }

    #[test]
    fn perfect_candidate_hits_the_ceiling() {
        let (world, task) = noiseless(24, 4, 1);
        let truth: Vec<&str> = task.truth_subset.iter().map(String::as_str).collect();
        let c = candidate(&truth, ideal_ops(&task));
        let r = surrogate_evaluate(&c, &task, &world.catalog, 3, SurrogateCoefficients::default());
        assert!(r.executed);
        assert_eq!(r.success, 1.0);
        assert_eq!(r.trajectory.len(), TRAJECTORY_CHECKPOINTS);
    }

    #[test]
    fn disjoint_candidate_clamps_to_zero() {
        let (world, task) = noiseless(24, 4, 1);
        let other: Vec<&str> = world
            .catalog
            .iter()
            .map(|s| s.name.as_str())
            .filter(|n| !task.truth_subset.iter().any(|t| t == n))
            .take(3)
            .collect();
        let c = candidate(&other, Vec::new());
        let r = surrogate_evaluate(&c, &task, &world.catalog, 3, SurrogateCoefficients::default());
        assert!(r.executed);
        assert_eq!(r.success, 0.0);
    }

    #[test]
    fn half_the_truth_scores_forty_percent() {
        let (world, task) = noiseless(24, 4, 5);
        let half: Vec<&str> = task.truth_subset[..2].iter().map(String::as_str).collect();
        let c = candidate(&half, Vec::new());
        let r = surrogate_evaluate(&c, &task, &world.catalog, 0, SurrogateCoefficients::default());
        // J = 2 / 4, no extras, no matching operations: 0.8 * 0.5
        assert!((r.success - 0.40).abs() < 1e-12);
    }

    #[test]
    fn unknown_inputs_always_fail() {
        let (world, task) = noiseless(24, 4, 5);
        let mut c = candidate(&[task.truth_subset[0].as_str()], Vec::new());
        c.unresolved.push("ghost_state".into());
        for seed in 0..20 {
            let r = surrogate_evaluate(&c, &task, &world.catalog, seed, SurrogateCoefficients::default());
            assert!(!r.executed);
            assert!(r.failure_cause.as_deref().unwrap().contains("ghost_state"));
        }
    }

    #[test]
    fn failure_rate_is_respected_roughly() {
        let (world, mut task) = noiseless(24, 4, 5);
        task.exec_failure_rate = 0.25;
        let c = candidate(&[task.truth_subset[0].as_str()], Vec::new());
        let failed = (0..4000)
            .filter(|&seed| !surrogate_evaluate(&c, &task, &world.catalog, seed, SurrogateCoefficients::default()).executed)
            .count();
        assert!((800..1200).contains(&failed), "{failed}");
    }

    /// Straight-line restatement of the scoring rule, independent of the
    /// set-based implementation above.
    fn oracle(chosen: &[String], ops: &[OpTerm], task: &SyntheticTask, catalog_len: usize) -> f64 {
        let mut inter = 0usize;
        let mut extras = 0usize;
        for s in chosen {
            if task.truth_subset.contains(s) {
                inter += 1;
            } else {
                extras += 1;
            }
        }
        let union = task.truth_subset.len() + extras;
        let mut covered = 0usize;
        for t in &task.truth_subset {
            let ideal = task.truth_ops[t];
            let mut hit = false;
            for op in ops {
                if op.kind == ideal && op.operands.contains(t) {
                    hit = true;
                }
            }
            if hit {
                covered += 1;
            }
        }
        let raw = 0.8 * (inter as f64 / union as f64) - 0.3 * (extras as f64 / catalog_len as f64)
            + 0.2 * (covered as f64 / task.truth_subset.len() as f64);
        raw.max(0.0).min(1.0)
    }

    fn arb_case() -> impl Strategy<Value = (usize, usize, u64, Vec<bool>, Vec<(usize, usize)>, u64)> {
        (2usize..40, any::<u64>(), any::<u64>()).prop_flat_map(|(n, task_seed, seed)| {
            (
                Just(n),
                1..=n,
                Just(task_seed),
                prop::collection::vec(any::<bool>(), n),
                prop::collection::vec((0..n, 0..OpKind::ALL.len()), 0..8),
                Just(seed),
            )
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn agrees_with_oracle((n, truth, task_seed, mask, ops, seed) in arb_case()) {
            let (world, task) = noiseless(n, truth, task_seed);
            let chosen: Vec<String> = world
                .catalog
                .iter()
                .zip(&mask)
                .filter(|(_, m)| **m)
                .map(|(s, _)| s.name.clone())
                .collect();
            prop_assume!(!chosen.is_empty());
            let terms: Vec<OpTerm> = ops
                .iter()
                .filter(|(i, _)| mask[*i])
                .map(|&(i, k)| OpTerm { kind: OpKind::ALL[k], operands: vec![world.catalog[i].name.clone()], weight: 1.0 })
                .collect();
            let refs: Vec<&str> = chosen.iter().map(String::as_str).collect();
            let c = candidate(&refs, terms.clone());
            let r = surrogate_evaluate(&c, &task, &world.catalog, seed, SurrogateCoefficients::default());
            prop_assert!(r.executed);
            prop_assert!((r.success - oracle(&chosen, &terms, &task, n)).abs() < 1e-12);
            r.check().unwrap();
            prop_assert!(r.trajectory.windows(2).all(|w| w[0] <= w[1]));
        }

        #[test]
        fn monotone_in_relevant_and_irrelevant_states(
            (n, truth, task_seed, mask, _ops, seed) in arb_case(),
            pick in any::<prop::sample::Index>(),
        ) {
            let (world, task) = noiseless(n, truth, task_seed);
            let names: Vec<String> = world.catalog.iter().map(|s| s.name.clone()).collect();
            let chosen: Vec<String> = names.iter().zip(&mask).filter(|(_, m)| **m).map(|(s, _)| s.clone()).collect();
            prop_assume!(!chosen.is_empty());
            let missing: Vec<&String> = names.iter().filter(|s| !chosen.contains(s)).collect();
            prop_assume!(!missing.is_empty());
            let added = missing[pick.index(missing.len())].clone();
            let score = |states: &[String]| {
                let refs: Vec<&str> = states.iter().map(String::as_str).collect();
                surrogate_evaluate(&candidate(&refs, Vec::new()), &task, &world.catalog, seed, SurrogateCoefficients::default()).success
            };
            let before = score(&chosen);
            let mut grown = chosen.clone();
            grown.push(added.clone());
            let after = score(&grown);
            if task.truth_subset.contains(&added) {
                prop_assert!(after >= before);
            } else {
                prop_assert!(after <= before);
            }
        }

        #[test]
        fn success_is_clamped_under_noise(task_seed in any::<u64>(), seed in any::<u64>(), k in 1usize..10) {
            let (world, task) = generate_synthetic_task(24, 4, 1.0, task_seed).unwrap();
            let refs: Vec<&str> = world.catalog.iter().take(k).map(|s| s.name.as_str()).collect();
            let r = surrogate_evaluate(&candidate(&refs, Vec::new()), &task, &world.catalog, seed, SurrogateCoefficients::default());
            prop_assert!((0.0..=1.0).contains(&r.success));
            r.check().unwrap();
        }
    }
}
