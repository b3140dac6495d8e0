//! User/expert mission reconciliation.
//!
//! A reconciler turns the user's description and the expert's success
//! predicate into a four-section mission. When no success predicate exists
//! it also writes one, guided by an exemplar task on the same world model.
//! The reconciler only ever sees a [`ReconcileRequest`]; nothing from the
//! design loop reaches it.

use serde::{Deserialize, Serialize};

use crate::chat::{ChatClient, ChatError, ChatMessage};
use crate::worldmodel::{SuccessParseError, SuccessSpec, WorldModel};

pub const MISSION_SECTIONS: [&str; 4] = [
    "## Composition",
    "## Goal States",
    "## Initial Conditions",
    "## Post-Goal States",
];
pub const SUCCESS_SECTION: &str = "## Success Function";

const TEMPLATE: &str = include_str!("../../prompts/reconcile_template.v1.txt");
const SYSTEM_PROMPT: &str = include_str!("../../prompts/reconcile_system.v1.txt");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconciledMission {
    pub composition: String,
    pub goal_states: String,
    pub initial_conditions: String,
    pub post_goal_states: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_success: Option<SuccessSpec>,
}

impl ReconciledMission {
    /// The text the reward designer sees. A generated success function is
    /// kept out of it, like any expert success code.
    pub fn render_for_designer(&self) -> String {
        let bodies = [
            &self.composition,
            &self.goal_states,
            &self.initial_conditions,
            &self.post_goal_states,
        ];
        MISSION_SECTIONS
            .iter()
            .zip(bodies)
            .map(|(h, b)| format!("{h}\n{}", b.trim()))
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Full template form, including the success section when present.
    pub fn render_template(&self) -> String {
        let mut out = self.render_for_designer();
        if let Some(spec) = &self.generated_success {
            out.push_str(&format!("\n{SUCCESS_SECTION}\n{spec}"));
        }
        out
    }
}

/// A solved task on the same world model, shown when a success predicate has
/// to be written from scratch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionExemplar {
    pub mission: ReconciledMission,
    pub success: SuccessSpec,
}

/// Everything a reconciler is allowed to see.
#[derive(Debug, Clone, Copy)]
pub struct ReconcileRequest<'a> {
    pub description: &'a str,
    pub success: Option<&'a SuccessSpec>,
    pub world: &'a WorldModel,
    pub exemplar: Option<&'a MissionExemplar>,
}

#[derive(Debug, thiserror::Error)]
pub enum ReconcileError {
    #[error("reconciler output is missing section `{0}`")]
    MissingSection(String),
    #[error("generated success function is invalid: {0}")]
    Validation(String),
    #[error("generated success function does not parse: {0}")]
    SuccessSyntax(#[from] SuccessParseError),
    #[error("reconciliation precondition: {0}")]
    Precondition(String),
    #[error("reconciler port failed: {0}")]
    Port(String),
}

impl From<ChatError> for ReconcileError {
    fn from(e: ChatError) -> Self {
        ReconcileError::Port(e.to_string())
    }
}

/// Produces raw template text for a request.
pub trait ReconcilerPort {
    fn reconcile(&self, request: &ReconcileRequest<'_>) -> Result<String, ReconcileError>;
}

/// Split template text into its sections. Returns the four mission sections
/// and the success section body, if any.
pub fn parse_mission_text(text: &str) -> Result<(ReconciledMission, Option<String>), ReconcileError> {
    let headers: Vec<&str> = MISSION_SECTIONS.iter().copied().chain([SUCCESS_SECTION]).collect();
    let mut bodies: Vec<Option<Vec<&str>>> = vec![None; headers.len()];
    let mut current: Option<usize> = None;
    for line in text.lines() {
        let trimmed = line.trim();
        if let Some(idx) = headers.iter().position(|h| h.eq_ignore_ascii_case(trimmed)) {
            current = Some(idx);
            bodies[idx].get_or_insert_with(Vec::new);
            continue;
        }
        if let Some(idx) = current {
            if !trimmed.starts_with("```") {
                bodies[idx].get_or_insert_with(Vec::new).push(line);
            }
        }
    }
    let mut section = |idx: usize| -> Result<String, ReconcileError> {
        let body = bodies[idx].take().unwrap_or_default().join("\n").trim().to_string();
        if body.is_empty() {
            Err(ReconcileError::MissingSection(headers[idx].trim_start_matches("## ").to_string()))
        } else {
            Ok(body)
        }
    };
    let mission = ReconciledMission {
        composition: section(0)?,
        goal_states: section(1)?,
        initial_conditions: section(2)?,
        post_goal_states: section(3)?,
        generated_success: None,
    };
    let success = section(4).ok();
    Ok((mission, success))
}

/// Reconcile `description` with `success` on `world`.
///
/// Output that lacks a template section is retried once. When `success` is
/// absent the reconciler must also write one; it is validated against the
/// catalog and returned in `generated_success`.
pub fn reconcile_mission(
    description: &str,
    success: Option<&SuccessSpec>,
    world: &WorldModel,
    exemplar: Option<&MissionExemplar>,
    reconciler: &dyn ReconcilerPort,
) -> Result<ReconciledMission, ReconcileError> {
    if description.trim().is_empty() {
        return Err(ReconcileError::Precondition("task description is empty".into()));
    }
    if success.is_none() && exemplar.is_none() {
        return Err(ReconcileError::Precondition(
            "an exemplar task is required when no success definition exists".into(),
        ));
    }
    let request = ReconcileRequest {
        description,
        success,
        world,
        exemplar,
    };
    let mut last_err = None;
    for _attempt in 0..2 {
        let text = reconciler.reconcile(&request)?;
        let (mut mission, success_text) = match parse_mission_text(&text) {
            Ok(parsed) => parsed,
            Err(e) => {
                last_err = Some(e);
                continue;
            }
        };
        if success.is_some() {
            return Ok(mission);
        }
        let Some(success_text) = success_text else {
            last_err = Some(ReconcileError::MissingSection("Success Function".into()));
            continue;
        };
        let spec: SuccessSpec = success_text.parse()?;
        let unknown = spec.unknown_states(&world.catalog);
        if !unknown.is_empty() {
            return Err(ReconcileError::Validation(format!(
                "references unknown states: {}",
                unknown.join(", ")
            )));
        }
        mission.generated_success = Some(spec);
        return Ok(mission);
    }
    Err(last_err.expect("at least one attempt"))
}

/// The blank template, as shown to LLM reconcilers.
pub fn render_mission_template() -> &'static str {
    TEMPLATE
}

fn catalog_listing(world: &WorldModel) -> String {
    world
        .catalog
        .iter()
        .map(|s| format!("{} ({}, {})", s.name, s.kind, s.arity))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Deterministic template filler. Goals come straight from the success
/// predicate; a missing predicate is adapted from the exemplar by renaming
/// its states to the catalog states the description mentions.
#[derive(Debug, Clone, Copy, Default)]
pub struct SyntheticReconciler;

impl SyntheticReconciler {
    fn adapt_exemplar(description: &str, world: &WorldModel, exemplar: &SuccessSpec) -> SuccessSpec {
        let mut mentioned: Vec<String> = Vec::new();
        for word in description.split(|c: char| !(c.is_ascii_alphanumeric() || c == '_')) {
            if world.contains_state(word) && !mentioned.iter().any(|m| m == word) {
                mentioned.push(word.to_string());
            }
        }
        if mentioned.is_empty() {
            return exemplar.clone();
        }
        let originals: Vec<String> = exemplar.states().into_iter().collect();
        exemplar.map_states(&mut |s| {
            let idx = originals.iter().position(|o| o == s).unwrap_or(0);
            mentioned[idx % mentioned.len()].clone()
        })
    }
}

impl ReconcilerPort for SyntheticReconciler {
    fn reconcile(&self, request: &ReconcileRequest<'_>) -> Result<String, ReconcileError> {
        let world = request.world;
        let (goal, generated) = match (request.success, request.exemplar) {
            (Some(spec), _) => (spec.clone(), None),
            (None, Some(ex)) => {
                let spec = Self::adapt_exemplar(request.description, world, &ex.success);
                (spec.clone(), Some(spec))
            }
            (None, None) => {
                return Err(ReconcileError::Precondition("no success definition and no exemplar".into()))
            }
        };
        let mut text = format!(
            "{}\nWorld model `{}` exposes {} states: {}.\n\
             {}\nTask: {}\nThe task is solved when {goal}.\n\
             {}\nEach episode starts from the environment's reset configuration, where the goal does not hold yet.\n\
             {}\nAfter the goal is reached, {goal} should keep holding until the episode ends.\n",
            MISSION_SECTIONS[0],
            world.id,
            world.catalog.len(),
            catalog_listing(world),
            MISSION_SECTIONS[1],
            request.description.trim(),
            MISSION_SECTIONS[2],
            MISSION_SECTIONS[3],
        );
        if let Some(spec) = generated {
            text.push_str(&format!("{SUCCESS_SECTION}\n{spec}\n"));
        }
        Ok(text)
    }
}

/// Reconciler backed by a chat-completion endpoint. It holds its own client
/// and conversation; the reward designer never shares it.
pub struct ChatReconciler {
    client: ChatClient,
}

impl ChatReconciler {
    pub fn new(client: ChatClient) -> Self {
        Self { client }
    }

    pub fn messages(request: &ReconcileRequest<'_>) -> Vec<ChatMessage> {
        let mut user = String::new();
        user.push_str(&format!("Task description:\n{}\n\n", request.description.trim()));
        match request.success {
            Some(spec) => user.push_str(&format!("Expert success definition:\n{spec}\n\n")),
            None => user.push_str("Expert success definition: none. Write one in the Success Function section.\n\n"),
        }
        user.push_str(&format!(
            "Environment `{}` states:\n{}\n\n",
            request.world.id,
            catalog_listing(request.world)
        ));
        if let Some(ex) = request.exemplar {
            user.push_str(&format!(
                "Example task on the same environment:\n{}\n\n",
                ex.mission.render_for_designer()
            ));
            user.push_str(&format!("{SUCCESS_SECTION}\n{}\n\n", ex.success));
        }
        user.push_str("Template:\n");
        user.push_str(TEMPLATE);
        vec![ChatMessage::system(SYSTEM_PROMPT.trim()), ChatMessage::user(user)]
    }
}

impl ReconcilerPort for ChatReconciler {
    fn reconcile(&self, request: &ReconcileRequest<'_>) -> Result<String, ReconcileError> {
        let completions = self.client.complete(&Self::messages(request), 1)?;
        completions
            .into_iter()
            .next()
            .ok_or_else(|| ReconcileError::Port("empty completion".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::worldmodel::{Comparator, StateDescriptor, StateKind, TaskDef};
    use std::cell::{Cell, RefCell};

    fn humanoid() -> WorldModel {
        WorldModel {
            id: "humanoid".into(),
            catalog: vec![
                StateDescriptor::new("torso_height", StateKind::Distance, 1),
                StateDescriptor::new("up_vec", StateKind::Orientation, 3),
                StateDescriptor::new("hand_pos", StateKind::Position, 3),
            ],
            tasks: vec![TaskDef {
                id: "stand_up".into(),
                user_description: "make humanoids stand up".into(),
                success_spec: Some(SuccessSpec::cmp("torso_height", Comparator::Gt, 0.8)),
            }],
        }
    }

    #[test]
    fn humanoid_goal_mentions_torso_height() {
        let world = humanoid();
        let task = &world.tasks[0];
        let m = reconcile_mission(
            &task.user_description,
            task.success_spec.as_ref(),
            &world,
            None,
            &SyntheticReconciler,
        )
        .unwrap();
        assert!(m.goal_states.contains("torso_height > 0.8"));
        assert!(m.goal_states.contains("make humanoids stand up"));
        assert!(m.generated_success.is_none());
        for s in [&m.composition, &m.goal_states, &m.initial_conditions, &m.post_goal_states] {
            assert!(!s.is_empty());
        }
    }

    fn exemplar(world: &WorldModel) -> MissionExemplar {
        let task = &world.tasks[0];
        let spec = task.success_spec.clone().unwrap();
        let mission = reconcile_mission(&task.user_description, Some(&spec), world, None, &SyntheticReconciler).unwrap();
        MissionExemplar { mission, success: spec }
    }

    #[test]
    fn writes_success_from_exemplar() {
        let world = humanoid();
        let ex = exemplar(&world);
        let m = reconcile_mission(
            "raise hand_pos above the head",
            None,
            &world,
            Some(&ex),
            &SyntheticReconciler,
        )
        .unwrap();
        let spec = m.generated_success.clone().unwrap();
        assert!(spec.unknown_states(&world.catalog).is_empty());
        assert_eq!(spec.to_string(), "hand_pos > 0.8");
        assert!(m.render_template().contains(SUCCESS_SECTION));
        assert!(!m.render_for_designer().contains(SUCCESS_SECTION));
    }

    #[test]
    fn synthetic_is_deterministic() {
        let world = humanoid();
        let t = &world.tasks[0];
        let a = reconcile_mission(&t.user_description, t.success_spec.as_ref(), &world, None, &SyntheticReconciler).unwrap();
        let b = reconcile_mission(&t.user_description, t.success_spec.as_ref(), &world, None, &SyntheticReconciler).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn missing_exemplar_is_a_precondition_error() {
        let world = humanoid();
        assert!(matches!(
            reconcile_mission("stand", None, &world, None, &SyntheticReconciler),
            Err(ReconcileError::Precondition(_))
        ));
        assert!(matches!(
            reconcile_mission("  ", world.tasks[0].success_spec.as_ref(), &world, None, &SyntheticReconciler),
            Err(ReconcileError::Precondition(_))
        ));
    }

    struct Scripted {
        replies: RefCell<Vec<String>>,
        calls: Cell<usize>,
    }

    impl Scripted {
        fn new(replies: &[&str]) -> Self {
            Self {
                replies: RefCell::new(replies.iter().rev().map(|s| s.to_string()).collect()),
                calls: Cell::new(0),
            }
        }
    }

    impl ReconcilerPort for Scripted {
        fn reconcile(&self, _: &ReconcileRequest<'_>) -> Result<String, ReconcileError> {
            self.calls.set(self.calls.get() + 1);
            Ok(self.replies.borrow_mut().pop().unwrap_or_default())
        }
    }

    const COMPLETE: &str = "## Composition\na humanoid\n## Goal States\nstand\n## Initial Conditions\nlying\n## Post-Goal States\nkeep standing\n";

    #[test]
    fn retries_once_on_missing_section() {
        let world = humanoid();
        let spec = world.tasks[0].success_spec.clone();
        let port = Scripted::new(&["## Composition\na humanoid\n", COMPLETE]);
        let m = reconcile_mission("stand up", spec.as_ref(), &world, None, &port).unwrap();
        assert_eq!(port.calls.get(), 2);
        assert_eq!(m.post_goal_states, "keep standing");

        let port = Scripted::new(&["## Composition\nx\n", "## Goal States\ny\n"]);
        match reconcile_mission("stand up", spec.as_ref(), &world, None, &port) {
            // the second reply decides the error
            Err(ReconcileError::MissingSection(s)) => assert_eq!(s, "Composition"),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(port.calls.get(), 2);
    }

    #[test]
    fn generated_success_must_resolve() {
        let world = humanoid();
        let ex = exemplar(&world);
        let reply = format!("{COMPLETE}## Success Function\n```\nhead_height > 1.2\n```\n");
        let port = Scripted::new(&[&reply]);
        assert!(matches!(
            reconcile_mission("stand up", None, &world, Some(&ex), &port),
            Err(ReconcileError::Validation(_))
        ));

        let reply = format!("{COMPLETE}## Success Function\n```\ntorso_height > 1.2 and up_vec > 0.9\n```\n");
        let port = Scripted::new(&[&reply]);
        let m = reconcile_mission("stand up", None, &world, Some(&ex), &port).unwrap();
        assert_eq!(m.generated_success.unwrap().to_string(), "torso_height > 1.2 and up_vec > 0.9");
    }

    #[test]
    fn chat_messages_carry_only_the_request() {
        let world = humanoid();
        let ex = exemplar(&world);
        let req = ReconcileRequest {
            description: "stand up",
            success: None,
            world: &world,
            exemplar: Some(&ex),
        };
        let msgs = ChatReconciler::messages(&req);
        assert_eq!(msgs.len(), 2);
        assert!(msgs[1].content.contains("torso_height (distance, 1)"));
        assert!(msgs[1].content.contains("## Post-Goal States"));
    }
}
