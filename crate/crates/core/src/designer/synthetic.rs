//! A seeded heuristic designer for desk-scale experiments.
//!
//! It reads only what an LLM would read: the rendered table text and the
//! example projection in the bundle. States are drawn from the softmax over
//! table scores; in operation refinement mode the example's states are kept
//! and the reward items are redrawn, each keeping the example's operation
//! kind with probability `refine_keep_rate`.

use std::collections::BTreeMap;

use rand::seq::index::sample_weighted;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{score_rows, DesignerError, DesignerPort, SamplerConfig};
use crate::guidance::{GuidanceBundle, Mode};
use crate::ros::{parse_candidate, OpKind};
use crate::seed::rng_for;
use crate::settable::StateExecutionTable;
use crate::worldmodel::StateDescriptor;

/// Name used by deliberately invalid samples.
pub const GHOST_STATE: &str = "ghost_state";

#[derive(Debug, Clone)]
pub struct SyntheticDesigner {
    names: Vec<String>,
    config: SamplerConfig,
}

impl SyntheticDesigner {
    pub fn new(catalog: &[StateDescriptor], config: SamplerConfig) -> Result<Self, DesignerError> {
        config.validate()?;
        if catalog.is_empty() {
            return Err(DesignerError::Config("empty catalog".into()));
        }
        Ok(Self {
            names: catalog.iter().map(|s| s.name.clone()).collect(),
            config,
        })
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    /// Table rows in catalog order as read back from the bundle; an absent
    /// table reads as all zeros.
    fn table_rows(&self, bundle: &GuidanceBundle) -> Vec<(u64, f64)> {
        let parsed: BTreeMap<String, (u64, f64)> = StateExecutionTable::parse_rendered(&bundle.table_text)
            .unwrap_or_default()
            .into_iter()
            .map(|r| (r.state, (r.usage, r.contribution)))
            .collect();
        self.names
            .iter()
            .map(|n| parsed.get(n).copied().unwrap_or((0, 0.0)))
            .collect()
    }

    /// Sampling weights for state selection, with the example's states
    /// damped.
    fn selection_weights(&self, bundle: &GuidanceBundle) -> Vec<f64> {
        let probs = score_rows(&self.table_rows(bundle), &self.config);
        let members: &[String] = bundle.example.as_ref().map(|e| e.member_names.as_slice()).unwrap_or(&[]);
        self.names
            .iter()
            .zip(probs)
            .map(|(name, p)| {
                if members.contains(name) {
                    p * self.config.example_weight_factor
                } else {
                    p
                }
            })
            .collect()
    }

    fn draw_members(&self, weights: &[f64], rng: &mut ChaCha8Rng) -> Vec<String> {
        let (lo, hi) = self.config.member_count_range;
        let hi = hi.min(self.names.len());
        let lo = lo.min(hi);
        let count = rng.random_range(lo..=hi);
        let mut picked: Vec<usize> = match sample_weighted(rng, self.names.len(), |i| weights[i], count) {
            Ok(idx) => idx.into_vec(),
            // all weights underflowed: fall back to a uniform draw
            Err(_) => rand::seq::index::sample(rng, self.names.len(), count).into_vec(),
        };
        picked.sort_unstable();
        picked.into_iter().map(|i| self.names[i].clone()).collect()
    }

    /// Operation kind of each example state, read back from the example
    /// text. States only the signature mentions have none.
    fn example_kinds(&self, text: &str) -> BTreeMap<String, OpKind> {
        let catalog: Vec<StateDescriptor> = self
            .names
            .iter()
            .map(|n| StateDescriptor::new(n.clone(), crate::worldmodel::StateKind::Distance, 1))
            .collect();
        let mut kinds = BTreeMap::new();
        if let Ok(parsed) = parse_candidate(text, &catalog, "example", 0, 0) {
            for term in parsed.ros_op {
                for state in term.operands {
                    kinds.entry(state).or_insert(term.kind);
                }
            }
        }
        kinds
    }

    fn render(&self, members: &[String], keep: &BTreeMap<String, OpKind>, rng: &mut ChaCha8Rng) -> String {
        let invalid = rng.random_bool(self.config.invalid_rate);
        let mut params: Vec<&str> = members.iter().map(String::as_str).collect();
        if invalid {
            params.push(GHOST_STATE);
        }
        let mut lines = vec![format!("def compute_reward({}):", params.join(", "))];
        let mut terms = Vec::new();
        for (i, state) in members.iter().enumerate() {
            let drawn = OpKind::ALL[rng.random_range(0..OpKind::ALL.len())];
            let kind = match keep.get(state) {
                Some(&old) if rng.random_bool(self.config.refine_keep_rate) => old,
                _ => drawn,
            };
            let weight: f64 = rng.random_range(0.1..=2.0);
            lines.push(format!("    r{i} = {}", item(kind, state, weight)));
            terms.push(format!("r{i}"));
        }
        if invalid {
            lines.push(format!("    r{} = 0.10 * {GHOST_STATE}", members.len()));
            terms.push(format!("r{}", members.len()));
        }
        lines.push(format!("    return {}", terms.join(" + ")));
        lines.join("\n")
    }
}

fn item(kind: OpKind, state: &str, weight: f64) -> String {
    match kind {
        OpKind::DistancePenalty => format!("-{weight:.2} * norm({state})"),
        OpKind::ExponentialShaping => format!("{weight:.2} * exp(-{state})"),
        OpKind::ThresholdBonus => format!("{weight:.2} * where({state} > 0.5, 1.0, 0.0)"),
        OpKind::VelocityPenalty => format!("-{weight:.2} * square({state})"),
        OpKind::DotProductAlignment => format!("{weight:.2} * dot({state}, target_dir)"),
        OpKind::WeightedSum => format!("{weight:.2} * {state}"),
    }
}

impl DesignerPort for SyntheticDesigner {
    fn propose(&self, bundle: &GuidanceBundle, k: usize, seed: u64) -> Result<Vec<String>, DesignerError> {
        let mut rng = rng_for(seed, "synthetic-designer");
        let (refine, keep) = match (&bundle.example, bundle.mode) {
            (Some(example), Mode::OperationRefinement) => {
                (Some(example.member_names.clone()), self.example_kinds(&example.text))
            }
            _ => (None, BTreeMap::new()),
        };
        let weights = self.selection_weights(bundle);
        Ok((0..k)
            .map(|_| {
                let members = match &refine {
                    Some(members) => members.clone(),
                    None => self.draw_members(&weights, &mut rng),
                };
                self.render(&members, &keep, &mut rng)
            })
            .collect())
    }
}
