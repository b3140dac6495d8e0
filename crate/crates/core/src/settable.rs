//! The state execution table.
//!
//! One row per catalog state: how many absorbed rewards read the state, and
//! the cumulative success credited to it. A reward's success is split evenly
//! over the states it reads. Only rewards that executed are absorbed.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::evaluator::EvaluationRecord;
use crate::ros::RewardCandidate;
use crate::worldmodel::StateDescriptor;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SetRow {
    pub usage_count: u64,
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateExecutionTable {
    names: Vec<String>,
    rows: Vec<SetRow>,
    accumulated_candidates: u64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SetError {
    #[error("state execution table needs a non-empty catalog")]
    EmptyCatalog,
    #[error("candidate `{candidate}` reads `{state}`, which is not in the table")]
    UnknownState { candidate: String, state: String },
    #[error("malformed table row: {0}")]
    Malformed(String),
}

/// One CSV row of a table snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRow {
    pub state: String,
    pub usage: u64,
    pub contribution: f64,
}

impl StateExecutionTable {
    pub fn new(catalog: &[StateDescriptor]) -> Result<Self, SetError> {
        Self::from_names(catalog.iter().map(|s| s.name.clone()).collect())
    }

    pub fn from_names(names: Vec<String>) -> Result<Self, SetError> {
        if names.is_empty() {
            return Err(SetError::EmptyCatalog);
        }
        let rows = vec![SetRow::default(); names.len()];
        Ok(Self {
            names,
            rows,
            accumulated_candidates: 0,
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn accumulated_candidates(&self) -> u64 {
        self.accumulated_candidates
    }

    pub fn row(&self, name: &str) -> Option<SetRow> {
        self.names.iter().position(|n| n == name).map(|i| self.rows[i])
    }

    /// Rows in catalog order.
    pub fn rows(&self) -> impl Iterator<Item = (&str, SetRow)> {
        self.names.iter().map(String::as_str).zip(self.rows.iter().copied())
    }

    pub fn total_usage(&self) -> u64 {
        self.rows.iter().map(|r| r.usage_count).sum()
    }

    pub fn total_contribution(&self) -> f64 {
        self.rows.iter().map(|r| r.contribution).sum()
    }

    /// Absorb one iteration's results and return the new table.
    ///
    /// Results that did not execute are skipped. Per-state increments are
    /// summed in sorted order, so the outcome does not depend on the order of
    /// `results`.
    pub fn accumulate(
        &self,
        results: &[(&RewardCandidate, &EvaluationRecord)],
    ) -> Result<Self, SetError> {
        let index: BTreeMap<&str, usize> = self
            .names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        let mut increments: Vec<Vec<f64>> = vec![Vec::new(); self.names.len()];
        let mut absorbed = 0;
        for (candidate, record) in results {
            if !record.executed {
                continue;
            }
            let mut slots = Vec::with_capacity(candidate.ros_st.len());
            for state in &candidate.ros_st {
                let slot = index.get(state.as_str()).ok_or_else(|| SetError::UnknownState {
                    candidate: candidate.id.clone(),
                    state: state.clone(),
                })?;
                slots.push(*slot);
            }
            if slots.is_empty() {
                continue;
            }
            let share = record.success / slots.len() as f64;
            for slot in slots {
                increments[slot].push(share);
            }
            absorbed += 1;
        }
        let mut next = self.clone();
        for (row, mut shares) in next.rows.iter_mut().zip(increments) {
            shares.sort_by(f64::total_cmp);
            row.usage_count += shares.len() as u64;
            for share in shares {
                row.contribution += share;
            }
        }
        next.accumulated_candidates += absorbed;
        Ok(next)
    }

    /// Three fixed-width columns in catalog order.
    pub fn render(&self) -> String {
        let name_width = self.names.iter().map(|n| n.len()).max().unwrap_or(0).max(5);
        let mut out = format!("{:<name_width$} | {:>5} | {:>12}\n", "state", "usage", "contribution");
        out.push_str(&format!("{}-+-------+-------------\n", "-".repeat(name_width)));
        for (name, row) in self.rows() {
            out.push_str(&format!(
                "{:<name_width$} | {:>5} | {:>12.3}\n",
                name, row.usage_count, row.contribution
            ));
        }
        out
    }

    /// Rows recovered from [`render`](Self::render) output. Contributions
    /// carry the rendered three decimals.
    pub fn parse_rendered(text: &str) -> Result<Vec<SnapshotRow>, SetError> {
        let mut rows = Vec::new();
        for line in text.lines().skip(2) {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('|').map(str::trim).collect();
            if cols.len() != 3 {
                return Err(SetError::Malformed(line.to_string()));
            }
            let usage = cols[1].parse().map_err(|_| SetError::Malformed(line.to_string()))?;
            let contribution = cols[2].parse().map_err(|_| SetError::Malformed(line.to_string()))?;
            rows.push(SnapshotRow {
                state: cols[0].to_string(),
                usage,
                contribution,
            });
        }
        Ok(rows)
    }

    pub fn snapshot(&self) -> Vec<SnapshotRow> {
        self.rows()
            .map(|(state, row)| SnapshotRow {
                state: state.to_string(),
                usage: row.usage_count,
                contribution: row.contribution,
            })
            .collect()
    }

    /// `state,usage,contribution` CSV, rows in catalog order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("state,usage,contribution\n");
        for row in self.snapshot() {
            out.push_str(&format!("{},{},{}\n", row.state, row.usage, row.contribution));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ros::parse_candidate;
    use crate::worldmodel::StateKind;
    use proptest::prelude::*;

    fn catalog(names: &[&str]) -> Vec<StateDescriptor> {
        names
            .iter()
            .map(|n| StateDescriptor::new(*n, StateKind::Distance, 1))
            .collect()
    }

    fn candidate(cat: &[StateDescriptor], states: &[&str], idx: u32) -> RewardCandidate {
        let src = states
            .iter()
            .map(|s| format!("r_{s} = norm({s})"))
            .collect::<Vec<_>>()
            .join("\n");
        parse_candidate(&src, cat, format!("c{idx}"), 1, idx).unwrap()
    }

    fn normalize(line: &str) -> String {
        line.split_whitespace().collect::<Vec<_>>().join(" ")
    }

    #[test]
    fn zero_table() {
        let t = StateExecutionTable::new(&catalog(&["a", "b", "c"])).unwrap();
        assert_eq!(t.rows().count(), 3);
        assert_eq!(t.accumulated_candidates(), 0);
        let text = t.render();
        for line in text.lines().skip(2) {
            assert!(normalize(line).ends_with("| 0 | 0.000"), "{line}");
        }
        assert_eq!(StateExecutionTable::new(&catalog(&["a"])).unwrap().rows().count(), 1);
        assert_eq!(StateExecutionTable::new(&[]), Err(SetError::EmptyCatalog));
    }

    #[test]
    fn even_split_of_success() {
        let cat = catalog(&["q", "r", "s"]);
        let t = StateExecutionTable::new(&cat).unwrap();
        let c = candidate(&cat, &["q", "r"], 0);
        let rec = EvaluationRecord::executed("c0", vec![0.2, 0.6], 0);
        let t = t.accumulate(&[(&c, &rec)]).unwrap();
        // 0.6 / 2 states
        assert_eq!(t.row("q").unwrap(), SetRow { usage_count: 1, contribution: 0.3 });
        assert_eq!(t.row("r").unwrap(), SetRow { usage_count: 1, contribution: 0.3 });
        assert_eq!(t.row("s").unwrap(), SetRow::default());
        let lines: Vec<String> = t.render().lines().map(normalize).collect();
        assert_eq!(lines[2], "q | 1 | 0.300");
        assert_eq!(lines[4], "s | 0 | 0.000");
        assert_eq!(t.to_csv(), "state,usage,contribution\nq,1,0.3\nr,1,0.3\ns,0,0\n");
    }

    #[test]
    fn failed_runs_and_empty_results_leave_table_unchanged() {
        let cat = catalog(&["q", "r"]);
        let t = StateExecutionTable::new(&cat).unwrap();
        let c = candidate(&cat, &["q", "r"], 0);
        let failed = EvaluationRecord::failed("c0", "crash", 0);
        assert_eq!(t.accumulate(&[(&c, &failed)]).unwrap(), t);
        assert_eq!(t.accumulate(&[]).unwrap(), t);
    }

    #[test]
    fn unknown_state_is_a_contract_violation() {
        let wide = catalog(&["q", "r", "z"]);
        let c = candidate(&wide, &["z"], 0);
        let t = StateExecutionTable::new(&catalog(&["q", "r"])).unwrap();
        let rec = EvaluationRecord::executed("c0", vec![0.5], 0);
        assert!(matches!(t.accumulate(&[(&c, &rec)]), Err(SetError::UnknownState { .. })));
    }

    #[test]
    fn rendered_rows_parse_back() {
        let cat = catalog(&["q", "long_state_name"]);
        let c = candidate(&cat, &["q", "long_state_name"], 0);
        let rec = EvaluationRecord::executed("c0", vec![0.7], 0);
        let t = StateExecutionTable::new(&cat).unwrap().accumulate(&[(&c, &rec)]).unwrap();
        let rows = StateExecutionTable::parse_rendered(&t.render()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].state, "long_state_name");
        assert_eq!(rows[1].usage, 1);
        assert_eq!(rows[1].contribution, 0.35);
        assert_eq!(t.render(), t.clone().render());
    }

    const NAMES: [&str; 6] = ["a", "b", "c", "d", "e", "f"];

    fn arb_history() -> impl Strategy<Value = Vec<(Vec<usize>, bool, f64)>> {
        prop::collection::vec(
            (
                prop::collection::btree_set(0usize..NAMES.len(), 1..4).prop_map(|s| s.into_iter().collect()),
                prop::bool::weighted(0.7),
                0.0f64..=1.0,
            ),
            0..30,
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn conservation_counts_and_order_independence(history in arb_history(), rotate in 0usize..30) {
            let cat = catalog(&NAMES);
            let cands: Vec<RewardCandidate> = history
                .iter()
                .enumerate()
                .map(|(i, (idx, _, _))| {
                    let states: Vec<&str> = idx.iter().map(|&j| NAMES[j]).collect();
                    candidate(&cat, &states, i as u32)
                })
                .collect();
            let recs: Vec<EvaluationRecord> = history
                .iter()
                .enumerate()
                .map(|(i, (_, ok, s))| {
                    if *ok {
                        EvaluationRecord::executed(format!("c{i}"), vec![*s], 0)
                    } else {
                        EvaluationRecord::failed(format!("c{i}"), "crash", 0)
                    }
                })
                .collect();
            let pairs: Vec<(&RewardCandidate, &EvaluationRecord)> = cands.iter().zip(recs.iter()).collect();
            let table = StateExecutionTable::new(&cat).unwrap().accumulate(&pairs).unwrap();

            let executed_success: f64 = recs.iter().filter(|r| r.executed).map(|r| r.success).sum();
            prop_assert!((table.total_contribution() - executed_success).abs() < 1e-9);
            for name in NAMES {
                let brute = pairs
                    .iter()
                    .filter(|(c, r)| r.executed && c.ros_st.iter().any(|s| s == name))
                    .count() as u64;
                prop_assert_eq!(table.row(name).unwrap().usage_count, brute);
            }

            let mut permuted = pairs.clone();
            if !permuted.is_empty() {
                let k = rotate % permuted.len();
                permuted.rotate_left(k);
                permuted.reverse();
            }
            let other = StateExecutionTable::new(&cat).unwrap().accumulate(&permuted).unwrap();
            prop_assert_eq!(&other, &table);

            let failed_only: Vec<(&RewardCandidate, &EvaluationRecord)> =
                pairs.iter().copied().filter(|(_, r)| !r.executed).collect();
            let zero = StateExecutionTable::new(&cat).unwrap();
            prop_assert_eq!(zero.accumulate(&failed_only).unwrap(), zero);
        }
    }
}
