//! Subprocess adapter for a real trainer.
//!
//! Protocol: the command is started once per evaluation with the candidate
//! source on stdin and two environment variables, `ROSEVO_SEED` and
//! `ROSEVO_CANDIDATE_ID`. It must print one JSON object on stdout:
//!
//! ```text
//! {"executed": true, "trajectory": [0.0, 0.1, 0.4]}
//! {"executed": false, "failure_cause": "reward raised ZeroDivisionError"}
//! ```
//!
//! A non-zero exit status or malformed output is recorded as a failed run.

use std::io::Write;
use std::process::{Command, Stdio};

use serde::Deserialize;

use super::{EvaluationRecord, EvaluatorPort};
use crate::ros::RewardCandidate;

pub const SEED_ENV: &str = "ROSEVO_SEED";
pub const CANDIDATE_ID_ENV: &str = "ROSEVO_CANDIDATE_ID";

#[derive(Debug, Deserialize)]
struct Reply {
    executed: bool,
    #[serde(default)]
    trajectory: Vec<f64>,
    #[serde(default)]
    failure_cause: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ExternalEvaluator {
    program: String,
    args: Vec<String>,
}

impl ExternalEvaluator {
    pub fn new(program: impl Into<String>, args: Vec<String>) -> Self {
        Self {
            program: program.into(),
            args,
        }
    }

    fn run(&self, candidate: &RewardCandidate, seed: u64) -> Result<Reply, String> {
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .env(SEED_ENV, seed.to_string())
            .env(CANDIDATE_ID_ENV, &candidate.id)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| format!("cannot start `{}`: {e}", self.program))?;
        if let Some(mut stdin) = child.stdin.take() {
            // a trainer that ignores its input may close stdin early
            let _ = stdin.write_all(candidate.render().as_bytes());
        }
        let output = child.wait_with_output().map_err(|e| e.to_string())?;
        if !output.status.success() {
            let stderr = String::from_utf8_lossy(&output.stderr);
            return Err(format!("trainer exited with {}: {}", output.status, stderr.trim()));
        }
        let stdout = String::from_utf8_lossy(&output.stdout);
        serde_json::from_str(stdout.trim()).map_err(|e| format!("malformed trainer reply: {e}"))
    }
}

impl EvaluatorPort for ExternalEvaluator {
    fn evaluate(&self, candidate: &RewardCandidate, seed: u64) -> EvaluationRecord {
        match self.run(candidate, seed) {
            Ok(reply) if reply.executed => {
                let trajectory: Vec<f64> = reply.trajectory.iter().map(|v| v.clamp(0.0, 1.0)).collect();
                EvaluationRecord::executed(&candidate.id, trajectory, seed)
            }
            Ok(reply) => EvaluationRecord::failed(
                &candidate.id,
                reply.failure_cause.unwrap_or_else(|| "trainer reported failure".into()),
                seed,
            ),
            Err(cause) => EvaluationRecord::failed(&candidate.id, cause, seed),
        }
    }
}
