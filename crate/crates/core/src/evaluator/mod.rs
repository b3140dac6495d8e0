//! The evaluation port: how well does training with a reward go?

mod external;
mod surrogate;

use serde::{Deserialize, Serialize};

use crate::ros::RewardCandidate;

pub use external::{ExternalEvaluator, CANDIDATE_ID_ENV, SEED_ENV};
pub use surrogate::{
    surrogate_evaluate, SurrogateCoefficients, SurrogateEvaluator, TRAJECTORY_CHECKPOINTS,
};

/// Outcome of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub candidate_id: String,
    pub executed: bool,
    pub success: f64,
    pub trajectory: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_cause: Option<String>,
    pub seed: u64,
}

impl EvaluationRecord {
    /// A completed run; success is the maximum of the trajectory.
    pub fn executed(candidate_id: impl Into<String>, trajectory: Vec<f64>, seed: u64) -> Self {
        let success = trajectory.iter().copied().fold(0.0, f64::max);
        Self {
            candidate_id: candidate_id.into(),
            executed: true,
            success,
            trajectory,
            failure_cause: None,
            seed,
        }
    }

    pub fn failed(candidate_id: impl Into<String>, cause: impl Into<String>, seed: u64) -> Self {
        Self {
            candidate_id: candidate_id.into(),
            executed: false,
            success: 0.0,
            trajectory: Vec::new(),
            failure_cause: Some(cause.into()),
            seed,
        }
    }

    /// Check the executed/success/trajectory consistency rules.
    pub fn check(&self) -> Result<(), String> {
        if self.executed {
            let max = self.trajectory.iter().copied().fold(0.0, f64::max);
            if max != self.success {
                return Err(format!(
                    "{}: success {} differs from trajectory maximum {max}",
                    self.candidate_id, self.success
                ));
            }
            if !(0.0..=1.0).contains(&self.success) {
                return Err(format!("{}: success {} outside [0, 1]", self.candidate_id, self.success));
            }
        } else if self.success != 0.0 || !self.trajectory.is_empty() || self.failure_cause.is_none() {
            return Err(format!("{}: failed run carries results", self.candidate_id));
        }
        Ok(())
    }
}

/// Trains with a reward and reports the outcome. The task is bound at
/// construction. Implementations must be deterministic in
/// `(candidate, seed)` if runs are to be replayable, and safe to call from
/// several threads at once.
pub trait EvaluatorPort: Send + Sync {
    fn evaluate(&self, candidate: &RewardCandidate, seed: u64) -> EvaluationRecord;
}

/// `runs` independent evaluations with seeds `base_seed + i`.
pub fn evaluate_final(
    candidate: &RewardCandidate,
    evaluator: &dyn EvaluatorPort,
    runs: u32,
    base_seed: u64,
) -> Vec<EvaluationRecord> {
    (0..runs as u64)
        .map(|i| evaluator.evaluate(candidate, base_seed.wrapping_add(i)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::worldmodel::generate_synthetic_task;
    use crate::ros::parse_candidate;

    #[test]
    fn record_constructors_satisfy_invariants() {
        let ok = EvaluationRecord::executed("a", vec![0.1, 0.5, 0.3], 1);
        assert_eq!(ok.success, 0.5);
        ok.check().unwrap();
        let bad = EvaluationRecord::failed("a", "crash", 1);
        assert_eq!((bad.success, bad.trajectory.len()), (0.0, 0));
        bad.check().unwrap();
        let mut tampered = ok.clone();
        tampered.success = 0.9;
        assert!(tampered.check().is_err());
    }

    #[test]
    fn final_evaluation_seeds() {
        let (world, task) = generate_synthetic_task(24, 4, 0.5, 11).unwrap();
        let src = format!("r = norm({})", task.truth_subset.join(" - "));
        let c = parse_candidate(&src, &world.catalog, "c", 1, 0).unwrap();
        let eval = SurrogateEvaluator::new(&world, task);
        let five = evaluate_final(&c, &eval, 5, 100);
        let seeds: Vec<u64> = five.iter().map(|r| r.seed).collect();
        assert_eq!(seeds, vec![100, 101, 102, 103, 104]);
        assert_eq!(evaluate_final(&c, &eval, 5, 100), five);
        let one = evaluate_final(&c, &eval, 1, 100);
        assert_eq!(one, vec![eval.evaluate(&c, 100)]);
    }
}
