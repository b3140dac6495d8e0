//! Reward candidates and their reward observation space.
//!
//! Candidate source is line oriented: `#` starts a comment, a trailing `\`
//! continues a statement on the next line, and blank lines are ignored.
//! What remains are the *logical lines*. A typical sample:
//!
//! ```text
//! def compute_reward(hand_pos_0, block_pos_0):
//!     r0 = -0.80 * norm(hand_pos_0 - block_pos_0)   # reach
//!     return r0
//! ```
//!
//! The state subset is every catalog name appearing as a whole identifier
//! token. Operation terms are inferred per logical line from the calls and
//! operators it uses. Parameters of a `def` signature that are not catalog
//! names are recorded as unresolved references; such a candidate cannot
//! execute.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::guidance::Mode;
use crate::worldmodel::StateDescriptor;

/// Separator line between the first and last logical line of a truncated
/// reward.
pub const TRUNCATION_MARKER: &str = "…";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OpKind {
    DistancePenalty,
    ExponentialShaping,
    ThresholdBonus,
    VelocityPenalty,
    DotProductAlignment,
    WeightedSum,
}

impl OpKind {
    pub const ALL: [OpKind; 6] = [
        OpKind::DistancePenalty,
        OpKind::ExponentialShaping,
        OpKind::ThresholdBonus,
        OpKind::VelocityPenalty,
        OpKind::DotProductAlignment,
        OpKind::WeightedSum,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OpKind::DistancePenalty => "distance-penalty",
            OpKind::ExponentialShaping => "exponential-shaping",
            OpKind::ThresholdBonus => "threshold-bonus",
            OpKind::VelocityPenalty => "velocity-penalty",
            OpKind::DotProductAlignment => "dot-product-alignment",
            OpKind::WeightedSum => "weighted-sum",
        }
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpTerm {
    pub kind: OpKind,
    pub operands: Vec<String>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardCandidate {
    pub id: String,
    pub iteration: u32,
    pub sample_index: u32,
    /// Logical lines.
    pub source: Vec<String>,
    /// Referenced catalog states, in catalog order.
    pub ros_st: Vec<String>,
    pub ros_op: Vec<OpTerm>,
    /// Declared inputs that are not catalog states.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unresolved: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("empty reward")]
    EmptyReward,
    #[error("no observed states")]
    NoObservedStates,
}

/// Comment-stripped, blank-stripped statements with `\` continuations joined.
pub fn logical_lines(text: &str) -> Vec<String> {
    let mut lines = Vec::new();
    let mut pending: Vec<String> = Vec::new();
    for raw in text.lines() {
        let code = match raw.find('#') {
            Some(at) => &raw[..at],
            None => raw,
        };
        let code = code.trim();
        if code.ends_with('\\') {
            let head = code.trim_end_matches(|c: char| c == '\\' || c.is_whitespace());
            if !head.is_empty() {
                pending.push(head.to_string());
            }
            continue;
        }
        if !code.is_empty() {
            pending.push(code.to_string());
        }
        if !pending.is_empty() && !code.is_empty() {
            lines.push(pending.join(" "));
            pending.clear();
        }
    }
    if !pending.is_empty() {
        lines.push(pending.join(" "));
    }
    lines
}

/// Identifier tokens of a line with their byte offsets.
fn identifiers(line: &str) -> Vec<(usize, &str)> {
    let bytes = line.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_alphanumeric() || c == b'_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            // numeric literals such as `1e5` are not identifiers
            if !bytes[start].is_ascii_digit() {
                out.push((start, &line[start..i]));
            }
        } else {
            i += 1;
        }
    }
    out
}

/// Names of functions called on this line (`exp(`, `torch.norm (`, ...).
fn called_functions(line: &str) -> BTreeSet<&str> {
    identifiers(line)
        .into_iter()
        .filter(|(at, name)| line[at + name.len()..].trim_start().starts_with('('))
        .map(|(_, name)| name)
        .collect()
}

fn has_comparison(line: &str) -> bool {
    let bytes = line.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        match b {
            b'<' => {
                if bytes.get(i + 1) != Some(&b'<') && (i == 0 || bytes[i - 1] != b'<') {
                    return true;
                }
            }
            b'>' => {
                let arrow = i > 0 && bytes[i - 1] == b'-';
                let shift = bytes.get(i + 1) == Some(&b'>') || (i > 0 && bytes[i - 1] == b'>');
                if !arrow && !shift {
                    return true;
                }
            }
            _ => {}
        }
    }
    false
}

fn infer_kind(line: &str) -> OpKind {
    let calls = called_functions(line);
    let called = |names: &[&str]| names.iter().any(|n| calls.contains(n));
    let compact: String = line.chars().filter(|c| !c.is_whitespace()).collect();
    if called(&["exp"]) {
        OpKind::ExponentialShaping
    } else if called(&["dot", "cosine_similarity", "inner"]) {
        OpKind::DotProductAlignment
    } else if called(&["norm", "dist", "distance", "cdist"]) {
        OpKind::DistancePenalty
    } else if called(&["where", "clip_above"]) || has_comparison(line) {
        OpKind::ThresholdBonus
    } else if called(&["square", "abs"]) || compact.contains("**2") {
        OpKind::VelocityPenalty
    } else {
        OpKind::WeightedSum
    }
}

/// Right-hand side of an assignment, if the line is one.
fn assignment_rhs(line: &str) -> Option<&str> {
    let bytes = line.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        if b != b'=' {
            continue;
        }
        let prev = if i > 0 { bytes[i - 1] } else { b' ' };
        let next = bytes.get(i + 1).copied().unwrap_or(b' ');
        if next == b'=' || matches!(prev, b'=' | b'<' | b'>' | b'!') {
            continue;
        }
        return Some(&line[i + 1..]);
    }
    None
}

/// Leading `[-] <number> *` coefficient of the expression, else ±1.
fn leading_weight(line: &str) -> f64 {
    let expr = assignment_rhs(line)
        .or_else(|| line.trim_start().strip_prefix("return "))
        .unwrap_or(line)
        .trim_start();
    let (sign, rest) = match expr.strip_prefix('-') {
        Some(rest) => (-1.0, rest.trim_start()),
        None => (1.0, expr.strip_prefix('+').unwrap_or(expr).trim_start()),
    };
    let numeric_len = rest
        .char_indices()
        .take_while(|&(i, c)| {
            c.is_ascii_digit()
                || c == '.'
                || ((c == 'e' || c == 'E') && i > 0)
                || ((c == '-' || c == '+') && i > 0 && matches!(rest.as_bytes()[i - 1], b'e' | b'E'))
        })
        .count();
    if numeric_len > 0 && rest[numeric_len..].trim_start().starts_with('*') {
        if let Ok(value) = rest[..numeric_len].parse::<f64>() {
            if value.is_finite() {
                return sign * value;
            }
        }
    }
    sign
}

/// Parameters declared by a `def name(a, b: T, c=1):` line.
fn signature_params(line: &str) -> Option<Vec<&str>> {
    let rest = line.strip_prefix("def ")?;
    let open = rest.find('(')?;
    let close = rest.rfind(')')?;
    if close < open {
        return None;
    }
    Some(
        rest[open + 1..close]
            .split(',')
            .map(|p| {
                let p = p.split(':').next().unwrap_or("");
                let p = p.split('=').next().unwrap_or("");
                p.trim().trim_start_matches('*')
            })
            .filter(|p| !p.is_empty() && *p != "self")
            .collect(),
    )
}

pub fn parse_candidate(
    source_text: &str,
    catalog: &[StateDescriptor],
    id: impl Into<String>,
    iteration: u32,
    sample_index: u32,
) -> Result<RewardCandidate, ParseError> {
    let source = logical_lines(source_text);
    if source.is_empty() {
        return Err(ParseError::EmptyReward);
    }
    let is_state = |name: &str| catalog.iter().any(|s| s.name == name);

    let mut referenced = BTreeSet::new();
    let mut unresolved = Vec::new();
    let mut ros_op = Vec::new();
    for line in &source {
        let mut operands: Vec<String> = Vec::new();
        for (_, token) in identifiers(line) {
            if is_state(token) {
                referenced.insert(token.to_string());
                if !operands.iter().any(|o| o == token) {
                    operands.push(token.to_string());
                }
            }
        }
        if let Some(params) = signature_params(line) {
            for p in params {
                if !is_state(p) && !unresolved.iter().any(|u| u == p) {
                    unresolved.push(p.to_string());
                }
            }
            continue;
        }
        if !operands.is_empty() {
            ros_op.push(OpTerm {
                kind: infer_kind(line),
                operands,
                weight: leading_weight(line),
            });
        }
    }
    if referenced.is_empty() {
        return Err(ParseError::NoObservedStates);
    }
    let ros_st: Vec<String> = catalog
        .iter()
        .filter(|s| referenced.contains(&s.name))
        .map(|s| s.name.clone())
        .collect();
    if ros_op.is_empty() {
        // states only appear in the signature: they are read but combined
        // by nothing more specific than a sum
        ros_op.push(OpTerm {
            kind: OpKind::WeightedSum,
            operands: ros_st.clone(),
            weight: 1.0,
        });
    }
    Ok(RewardCandidate {
        id: id.into(),
        iteration,
        sample_index,
        source,
        ros_st,
        ros_op,
        unresolved,
    })
}

impl RewardCandidate {
    /// Full source, one logical line per line.
    pub fn render(&self) -> String {
        self.source.join("\n")
    }

    pub fn first_line(&self) -> &str {
        self.source.first().map(String::as_str).unwrap_or("")
    }

    pub fn last_line(&self) -> &str {
        self.source.last().map(String::as_str).unwrap_or("")
    }
}

/// First and last logical line joined by the truncation marker; a single
/// line is returned as is.
pub fn truncate(candidate: &RewardCandidate) -> String {
    match candidate.source.len() {
        0 => String::new(),
        1 => candidate.source[0].clone(),
        _ => format!(
            "{}\n{TRUNCATION_MARKER}\n{}",
            candidate.first_line(),
            candidate.last_line()
        ),
    }
}

/// What the designer is shown of a reward example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardProjection {
    pub mode: Mode,
    pub text: String,
    pub member_names: Vec<String>,
}

pub fn project(candidate: &RewardCandidate, mode: Mode) -> RewardProjection {
    let text = match mode {
        Mode::StateSelection => truncate(candidate),
        Mode::OperationRefinement => candidate.render(),
    };
    RewardProjection {
        mode,
        text,
        member_names: candidate.ros_st.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::worldmodel::StateKind;
    use proptest::prelude::*;

    fn catalog(names: &[&str]) -> Vec<StateDescriptor> {
        names
            .iter()
            .map(|n| StateDescriptor::new(*n, StateKind::Position, 3))
            .collect()
    }

    fn parse(text: &str, names: &[&str]) -> Result<RewardCandidate, ParseError> {
        parse_candidate(text, &catalog(names), "c", 1, 0)
    }

    #[test]
    fn extracts_referenced_states_in_catalog_order() {
        let c = parse(
            "r = exp(-abs(up_vec - 1.0)) + 0.5 * torso_height",
            &["torso_height", "up_vec", "hand_pos"],
        )
        .unwrap();
        assert_eq!(c.ros_st, vec!["torso_height", "up_vec"]);
        assert_eq!(c.ros_op.len(), 1);
    }

    #[test]
    fn unknown_only_is_no_observed_states() {
        assert_eq!(
            parse("r = 2.0 * foo_bar", &["torso_height"]).unwrap_err(),
            ParseError::NoObservedStates
        );
        assert_eq!(
            parse("# nothing here\n\n   \n", &["torso_height"]).unwrap_err(),
            ParseError::EmptyReward
        );
    }

    #[test]
    fn whole_token_matching_only() {
        let c = parse(
            "r = norm(left_hand_pos_prev) + norm(hand_pos)",
            &["hand_pos", "left_hand_pos_prev_x"],
        )
        .unwrap();
        assert_eq!(c.ros_st, vec!["hand_pos"]);
        assert!(parse("r = norm(left_hand_pos_prev)", &["hand_pos"]).is_err());
    }

    #[test]
    fn block_grasp_distance_term() {
        let src = "def compute_reward(right_hand_pos, block_pos):\n    \
                   d = torch.norm(right_hand_pos - block_pos, p=2, dim=-1)\n    \
                   return -d";
        let c = parse(src, &["right_hand_pos", "block_pos", "block_rot"]).unwrap();
        assert_eq!(c.ros_st, vec!["right_hand_pos", "block_pos"]);
        assert_eq!(
            c.ros_op,
            vec![OpTerm {
                kind: OpKind::DistancePenalty,
                operands: vec!["right_hand_pos".into(), "block_pos".into()],
                weight: 1.0,
            }]
        );
        assert!(c.unresolved.is_empty());
    }

    #[test]
    fn infers_kinds_and_weights() {
        let src = "def compute_reward(a, b, c, d, e, f):
r0 = -0.7 * norm(a)
r1 = 1.5 * exp(-b)
r2 = 2.0 * where(c > 0.5, 1.0, 0.0)
r3 = -0.25 * square(d)
r4 = 0.9 * dot(e, target_dir)
r5 = 3 * f
return r0 + r1 + r2 + r3 + r4 + r5";
        let c = parse(src, &["a", "b", "c", "d", "e", "f"]).unwrap();
        let kinds: Vec<(OpKind, f64)> = c.ros_op.iter().map(|t| (t.kind, t.weight)).collect();
        assert_eq!(
            kinds,
            vec![
                (OpKind::DistancePenalty, -0.7),
                (OpKind::ExponentialShaping, 1.5),
                (OpKind::ThresholdBonus, 2.0),
                (OpKind::VelocityPenalty, -0.25),
                (OpKind::DotProductAlignment, 0.9),
                (OpKind::WeightedSum, 3.0),
            ]
        );
    }

    #[test]
    fn arrows_and_shifts_are_not_comparisons() {
        assert!(!has_comparison("def f(x) -> float:"));
        assert!(!has_comparison("y = x >> 2"));
        assert!(has_comparison("y = x >= 2"));
        assert!(has_comparison("y = x < 2"));
        assert_eq!(infer_kind("y = x ** 2"), OpKind::VelocityPenalty);
    }

    #[test]
    fn unresolved_signature_parameters() {
        let c = parse(
            "def compute_reward(self, hand_pos, ghost_state: Tensor):\n  return norm(hand_pos) + ghost_state",
            &["hand_pos"],
        )
        .unwrap();
        assert_eq!(c.unresolved, vec!["ghost_state"]);
        assert_eq!(c.ros_st, vec!["hand_pos"]);
    }

    #[test]
    fn logical_lines_join_continuations() {
        let lines = logical_lines("a = 1 + \\\n    b  # note\n\n# full comment\nc = 2\\\n");
        assert_eq!(lines, vec!["a = 1 + b", "c = 2"]);
    }

    fn five_lines() -> RewardCandidate {
        parse(
            "def compute_reward(a, b):\n  x = norm(a)\n  y = exp(-b)\n  z = x + y\n  return z",
            &["a", "b"],
        )
        .unwrap()
    }

    #[test]
    fn truncation_keeps_first_and_last() {
        let c = five_lines();
        assert_eq!(truncate(&c), "def compute_reward(a, b):\n…\nreturn z");
        let one = parse("r = norm(a)", &["a"]).unwrap();
        assert_eq!(truncate(&one), "r = norm(a)");
        let two = parse("r = norm(a)\nreturn r", &["a"]).unwrap();
        assert_eq!(truncate(&two), "r = norm(a)\n…\nreturn r");
    }

    #[test]
    fn projection_by_mode() {
        let c = five_lines();
        let content_lines = |t: &str| t.lines().filter(|l| *l != TRUNCATION_MARKER).count();
        let sel = project(&c, Mode::StateSelection);
        assert_eq!(content_lines(&sel.text), 2);
        assert_eq!(sel.member_names, vec!["a", "b"]);
        let op = project(&c, Mode::OperationRefinement);
        assert_eq!(content_lines(&op.text), 5);
        assert_eq!(op.member_names, c.ros_st);

        let one = parse("r = norm(a)", &["a"]).unwrap();
        assert_eq!(
            project(&one, Mode::StateSelection).text,
            project(&one, Mode::OperationRefinement).text
        );
    }

    fn arb_source() -> impl Strategy<Value = String> {
        let names = vec!["a", "b_1", "hand_pos", "up_vec", "foo", "r0", "exp", "norm"];
        let piece = prop_oneof![
            prop::sample::select(names).prop_map(str::to_string),
            prop::sample::select(vec![" + ", " * ", "(", ")", " > ", "-", "0.5", " ", "=", ","])
                .prop_map(str::to_string),
        ];
        let line = prop::collection::vec(piece, 1..8).prop_map(|p| p.concat());
        let decorated = (line, prop::sample::select(vec!["", "  # c", " \\", "   "]))
            .prop_map(|(l, tail)| format!("{l}{tail}"));
        prop::collection::vec(decorated, 1..10).prop_map(|ls| ls.join("\n"))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn parse_render_parse_is_idempotent(src in arb_source()) {
            let cat = catalog(&["a", "b_1", "hand_pos", "up_vec"]);
            if let Ok(first) = parse_candidate(&src, &cat, "x", 1, 0) {
                let again = parse_candidate(&first.render(), &cat, "x", 1, 0).unwrap();
                prop_assert_eq!(&again, &first);
                prop_assert!(!first.ros_op.is_empty());
                for term in &first.ros_op {
                    prop_assert!(term.operands.iter().all(|o| first.ros_st.contains(o)));
                    prop_assert!(term.weight.is_finite());
                }
            }
        }

        #[test]
        fn truncation_is_prefix_plus_suffix(src in arb_source()) {
            let cat = catalog(&["a", "b_1", "hand_pos", "up_vec"]);
            if let Ok(c) = parse_candidate(&src, &cat, "x", 1, 0) {
                let t = truncate(&c);
                let lines: Vec<&str> = t.lines().collect();
                prop_assert_eq!(lines[0], c.first_line());
                prop_assert_eq!(*lines.last().unwrap(), c.last_line());
                prop_assert!(lines.len() == 1 || lines.len() == 3);
                let before = c.clone();
                let _ = project(&c, Mode::StateSelection);
                prop_assert_eq!(before, c);
            }
        }
    }
}
