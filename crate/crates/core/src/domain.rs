//! Core value types shared by the planner, the simulators and the harness.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

/// Label of the reserved termination skill.
pub const DONE: &str = "done";

/// Placement value for an object held by the robot.
pub const GRIPPER: &str = "gripper";

pub type ObjectId = String;
pub type LocationId = String;

/// Natural-language description of a skill, e.g. `"pick up the coke can"`.
///
/// Exact string equality is identity.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SkillLabel(String);

impl SkillLabel {
    pub fn new(text: impl Into<String>) -> Result<Self, DomainError> {
        let text = text.into();
        if text.is_empty() {
            return Err(DomainError::EmptyLabel);
        }
        Ok(Self(text))
    }

    pub fn done() -> Self {
        Self(DONE.to_string())
    }

    pub fn is_done(&self) -> bool {
        self.0 == DONE
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for SkillLabel {
    type Error = DomainError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl TryFrom<&str> for SkillLabel {
    type Error = DomainError;
    fn try_from(value: &str) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<SkillLabel> for String {
    fn from(l: SkillLabel) -> String {
        l.0
    }
}

impl fmt::Display for SkillLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for SkillLabel {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SkillId(pub String);

impl SkillId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SkillId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for SkillId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkillFamily {
    Pick,
    GoTo,
    Find,
    Place,
    OpenDrawer,
    CloseDrawer,
    PutInDrawer,
    TakeFromDrawer,
    /// Tabletop composite: pick an object and place it at a target in one skill.
    PickAndPlace,
    Terminate,
}

impl SkillFamily {
    pub fn is_drawer(self) -> bool {
        matches!(
            self,
            Self::OpenDrawer | Self::CloseDrawer | Self::PutInDrawer | Self::TakeFromDrawer
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Pick => "pick",
            Self::GoTo => "go_to",
            Self::Find => "find",
            Self::Place => "place",
            Self::OpenDrawer => "open_drawer",
            Self::CloseDrawer => "close_drawer",
            Self::PutInDrawer => "put_in_drawer",
            Self::TakeFromDrawer => "take_from_drawer",
            Self::PickAndPlace => "pick_and_place",
            Self::Terminate => "terminate",
        }
    }
}

/// An atomic capability: a label the language model scores plus the
/// arguments the simulator needs to execute it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Skill {
    pub id: SkillId,
    pub label: SkillLabel,
    pub family: SkillFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object_arg: Option<ObjectId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location_arg: Option<LocationId>,
}

impl Skill {
    pub fn terminate() -> Self {
        Self {
            id: SkillId("terminate".into()),
            label: SkillLabel::done(),
            family: SkillFamily::Terminate,
            object_arg: None,
            location_arg: None,
        }
    }

    /// Checks the per-family argument rules.
    pub fn check(&self) -> Result<(), DomainError> {
        let bad = |why: &str| DomainError::InvalidSkill {
            id: self.id.0.clone(),
            reason: why.to_string(),
        };
        match self.family {
            SkillFamily::Terminate => {
                if !self.label.is_done() {
                    return Err(bad("terminate skill must be labelled \"done\""));
                }
                if self.object_arg.is_some() || self.location_arg.is_some() {
                    return Err(bad("terminate skill takes no arguments"));
                }
            }
            _ if self.label.is_done() => return Err(bad("only terminate may use \"done\"")),
            SkillFamily::Pick | SkillFamily::Place if self.object_arg.is_none() => {
                return Err(bad("object argument required"))
            }
            SkillFamily::PutInDrawer | SkillFamily::TakeFromDrawer
                if self.object_arg.is_none() || self.location_arg.is_none() =>
            {
                return Err(bad("object and drawer arguments required"))
            }
            SkillFamily::OpenDrawer | SkillFamily::CloseDrawer if self.location_arg.is_none() => {
                return Err(bad("drawer argument required"))
            }
            SkillFamily::GoTo if self.location_arg.is_none() => {
                return Err(bad("target location required"))
            }
            SkillFamily::Find if self.object_arg.is_none() => {
                return Err(bad("target object required"))
            }
            SkillFamily::PickAndPlace
                if self.object_arg.is_none() || self.location_arg.is_none() =>
            {
                return Err(bad("object and target required"))
            }
            _ => {}
        }
        Ok(())
    }
}

/// An ordered skill set with unique ids and exactly one terminate skill.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Skill>", into = "Vec<Skill>")]
pub struct SkillSet {
    skills: Vec<Skill>,
}

impl SkillSet {
    pub fn new(skills: Vec<Skill>) -> Result<Self, DomainError> {
        let mut ids = BTreeSet::new();
        let mut labels = BTreeSet::new();
        let mut terminates = 0;
        for s in &skills {
            s.check()?;
            if !ids.insert(s.id.clone()) {
                return Err(DomainError::DuplicateSkillId(s.id.0.clone()));
            }
            if !labels.insert(s.label.clone()) {
                return Err(DomainError::DuplicateLabel(s.label.to_string()));
            }
            if s.family == SkillFamily::Terminate {
                terminates += 1;
            }
        }
        if terminates != 1 {
            return Err(DomainError::TerminateCount(terminates));
        }
        Ok(Self { skills })
    }

    pub fn skills(&self) -> &[Skill] {
        &self.skills
    }

    pub fn len(&self) -> usize {
        self.skills.len()
    }

    pub fn is_empty(&self) -> bool {
        self.skills.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Skill> {
        self.skills.iter()
    }

    pub fn labels(&self) -> Vec<SkillLabel> {
        self.skills.iter().map(|s| s.label.clone()).collect()
    }

    pub fn by_label(&self, label: &str) -> Option<&Skill> {
        self.skills.iter().find(|s| s.label.as_str() == label)
    }

    pub fn by_id(&self, id: &SkillId) -> Option<&Skill> {
        self.skills.iter().find(|s| &s.id == id)
    }

    pub fn terminate(&self) -> &Skill {
        self.skills
            .iter()
            .find(|s| s.family == SkillFamily::Terminate)
            .expect("skill set always holds one terminate skill")
    }
}

impl TryFrom<Vec<Skill>> for SkillSet {
    type Error = DomainError;
    fn try_from(v: Vec<Skill>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<SkillSet> for Vec<Skill> {
    fn from(s: SkillSet) -> Self {
        s.skills
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instruction {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language_tag: Option<String>,
}

impl Instruction {
    pub fn new(text: impl Into<String>) -> Result<Self, DomainError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(DomainError::EmptyInstruction);
        }
        Ok(Self {
            text,
            language_tag: None,
        })
    }

    pub fn with_language(mut self, tag: impl Into<String>) -> Self {
        self.language_tag = Some(tag.into());
        self
    }
}

/// Full simulated state: robot pose, gripper and object placements.
///
/// Placement values are location ids, drawer ids, or [`GRIPPER`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub robot_location: LocationId,
    pub gripper_contents: Option<ObjectId>,
    pub object_placement: BTreeMap<ObjectId, String>,
    pub drawer_open: BTreeMap<String, bool>,
    /// Location each drawer is operated from.
    #[serde(default)]
    pub drawer_host: BTreeMap<String, LocationId>,
    pub step_count: u64,
    pub location_coords: BTreeMap<LocationId, [f64; 2]>,
}

impl WorldState {
    /// Where an object physically is: held objects travel with the robot and
    /// drawer contents sit at the drawer's host location.
    pub fn object_location(&self, object: &str) -> Option<&str> {
        let place = self.object_placement.get(object)?;
        if place == GRIPPER {
            return Some(&self.robot_location);
        }
        if let Some(host) = self.drawer_host.get(place) {
            return Some(host);
        }
        Some(place)
    }

    pub fn coords(&self, location: &str) -> Option<[f64; 2]> {
        self.location_coords
            .get(location)
            .or_else(|| {
                self.drawer_host
                    .get(location)
                    .and_then(|h| self.location_coords.get(h))
            })
            .copied()
    }

    pub fn is_holding(&self, object: &str) -> bool {
        self.gripper_contents.as_deref() == Some(object)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    DuplicatePlacement,
    GripperCapacity,
    GripperMismatch,
    UnknownPlacement,
    UnknownLocation,
    UnknownObject,
    UnknownDrawer,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub path: String,
    pub kind: ViolationKind,
    pub message: String,
}

/// Lists every invariant violation of `state`; an empty list means valid.
pub fn validate_world_state(state: &WorldState) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |path: String, kind: ViolationKind, message: String| {
        out.push(Violation {
            path,
            kind,
            message,
        })
    };

    if !state.location_coords.contains_key(&state.robot_location) {
        push(
            "robot_location".into(),
            ViolationKind::UnknownLocation,
            format!("robot at unknown location {:?}", state.robot_location),
        );
    }

    let held: Vec<&ObjectId> = state
        .object_placement
        .iter()
        .filter(|(_, p)| p.as_str() == GRIPPER)
        .map(|(o, _)| o)
        .collect();
    if held.len() > 1 {
        push(
            "object_placement".into(),
            ViolationKind::GripperCapacity,
            format!("{} objects in gripper: {:?}", held.len(), held),
        );
    }

    for (object, place) in &state.object_placement {
        if place != GRIPPER
            && !state.location_coords.contains_key(place)
            && !state.drawer_open.contains_key(place)
        {
            push(
                format!("object_placement.{object}"),
                ViolationKind::UnknownPlacement,
                format!("{object} placed at unknown {place:?}"),
            );
        }
    }

    match &state.gripper_contents {
        Some(obj) => match state.object_placement.get(obj) {
            None => push(
                "gripper_contents".into(),
                ViolationKind::UnknownObject,
                format!("gripper holds unplaced object {obj:?}"),
            ),
            Some(p) if p != GRIPPER => push(
                format!("object_placement.{obj}"),
                ViolationKind::DuplicatePlacement,
                format!("{obj} is both in the gripper and at {p:?}"),
            ),
            _ => {}
        },
        None => {
            for o in &held {
                push(
                    format!("object_placement.{o}"),
                    ViolationKind::GripperMismatch,
                    format!("{o} placed in gripper but gripper_contents is empty"),
                );
            }
        }
    }
    if let Some(obj) = &state.gripper_contents {
        for o in held.iter().filter(|o| o.as_str() != obj) {
            push(
                format!("object_placement.{o}"),
                ViolationKind::GripperMismatch,
                format!("{o} placed in gripper but gripper_contents is {obj:?}"),
            );
        }
    }

    for (drawer, host) in &state.drawer_host {
        if !state.drawer_open.contains_key(drawer) {
            push(
                format!("drawer_host.{drawer}"),
                ViolationKind::UnknownDrawer,
                format!("host given for unknown drawer {drawer:?}"),
            );
        }
        if !state.location_coords.contains_key(host) {
            push(
                format!("drawer_host.{drawer}"),
                ViolationKind::UnknownLocation,
                format!("drawer {drawer:?} hosted at unknown {host:?}"),
            );
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffordanceEstimate {
    pub skill_id: SkillId,
    pub raw_value: f64,
    pub probability: f64,
    pub capped: bool,
}

/// One candidate's scores at a single planning step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub skill_id: SkillId,
    pub label: SkillLabel,
    pub llm_logprob: f64,
    pub llm_prob: f64,
    pub affordance_prob: f64,
    pub combined: f64,
    #[serde(default)]
    pub capped: bool,
}

/// How a step's skill was selected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DecisionSource {
    /// Argmax over fused candidate scores.
    Scored,
    /// Free text mapped onto the nearest skill label.
    Projected { text: String, cosine: f64 },
    /// Raw instruction handed to the skill policy unchanged.
    Direct { text: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub step_index: usize,
    pub prompt_snapshot: String,
    pub candidates: Vec<CandidateScore>,
    pub chosen_skill_id: SkillId,
    pub chosen_label: SkillLabel,
    pub tie_broken: bool,
    pub source: DecisionSource,
}

impl DecisionRecord {
    pub fn chosen(&self) -> Option<&CandidateScore> {
        self.candidates
            .iter()
            .find(|c| c.skill_id == self.chosen_skill_id)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    DoneToken,
    MaxSteps,
    NoFeasible,
    /// An open-loop plan ran out of steps without emitting "done".
    EndOfPlan,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanTrace {
    pub instruction: Instruction,
    pub records: Vec<DecisionRecord>,
    pub labels: Vec<SkillLabel>,
    pub termination: Termination,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub trace: PlanTrace,
    pub step_outcomes: Vec<bool>,
    pub final_state: WorldState,
    pub plan_success: bool,
    pub execution_success: bool,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstructionFamily {
    NlSinglePrimitive,
    NlNouns,
    NlVerbs,
    StructuredLanguage,
    Embodiment,
    CrowdSourced,
    LongHorizon,
}

impl InstructionFamily {
    pub const ALL: [InstructionFamily; 7] = [
        Self::NlSinglePrimitive,
        Self::NlNouns,
        Self::NlVerbs,
        Self::StructuredLanguage,
        Self::Embodiment,
        Self::CrowdSourced,
        Self::LongHorizon,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::NlSinglePrimitive => "nl_single_primitive",
            Self::NlNouns => "nl_nouns",
            Self::NlVerbs => "nl_verbs",
            Self::StructuredLanguage => "structured_language",
            Self::Embodiment => "embodiment",
            Self::CrowdSourced => "crowd_sourced",
            Self::LongHorizon => "long_horizon",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Self::NlSinglePrimitive => "NL Single",
            Self::NlNouns => "NL Nouns",
            Self::NlVerbs => "NL Verbs",
            Self::StructuredLanguage => "Structured",
            Self::Embodiment => "Embodiment",
            Self::CrowdSourced => "Crowd Sourced",
            Self::LongHorizon => "Long-Horizon",
        }
    }
}

/// Serializable goal predicate over a [`WorldState`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum GoalPredicate {
    True,
    All { of: Vec<GoalPredicate> },
    Any { of: Vec<GoalPredicate> },
    Not { of: Box<GoalPredicate> },
    /// Object is at the location, either resting there or held by a robot
    /// standing there.
    ObjectAt { object: ObjectId, location: LocationId },
    /// Object rests at the location (not held).
    PlacedAt { object: ObjectId, location: LocationId },
    /// Object rests wherever the robot currently is.
    PlacedNearRobot { object: ObjectId },
    Holding { object: ObjectId },
    GripperEmpty,
    RobotAt { location: LocationId },
    DrawerOpen { drawer: String },
    DrawerClosed { drawer: String },
}

impl GoalPredicate {
    pub fn eval(&self, s: &WorldState) -> bool {
        match self {
            Self::True => true,
            Self::All { of } => of.iter().all(|p| p.eval(s)),
            Self::Any { of } => of.iter().any(|p| p.eval(s)),
            Self::Not { of } => !of.eval(s),
            Self::ObjectAt { object, location } => match s.object_placement.get(object) {
                Some(p) if p == GRIPPER => &s.robot_location == location,
                Some(p) => p == location,
                None => false,
            },
            Self::PlacedAt { object, location } => {
                s.object_placement.get(object) == Some(location)
            }
            Self::PlacedNearRobot { object } => {
                s.object_placement.get(object) == Some(&s.robot_location)
            }
            Self::Holding { object } => s.is_holding(object),
            Self::GripperEmpty => s.gripper_contents.is_none(),
            Self::RobotAt { location } => &s.robot_location == location,
            Self::DrawerOpen { drawer } => s.drawer_open.get(drawer) == Some(&true),
            Self::DrawerClosed { drawer } => s.drawer_open.get(drawer) == Some(&false),
        }
    }
}

/// A benchmark instruction with its accepted solutions and goal test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstructionCase {
    pub id: String,
    pub instruction: Instruction,
    pub family: InstructionFamily,
    pub acceptable_plans: Vec<Vec<SkillLabel>>,
    pub goal: GoalPredicate,
    pub scenario: String,
    /// Skills applied (always succeeding) after reset, so a case can start
    /// from a partially completed stage.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub setup: Vec<SkillLabel>,
}

impl InstructionCase {
    pub fn check(&self, skills: &SkillSet) -> Result<(), DomainError> {
        if self.acceptable_plans.is_empty() {
            return Err(DomainError::InvalidCase {
                id: self.id.clone(),
                reason: "no acceptable plans".into(),
            });
        }
        for label in self.acceptable_plans.iter().flatten().chain(&self.setup) {
            if label.is_done() || skills.by_label(label.as_str()).is_none() {
                return Err(DomainError::InvalidCase {
                    id: self.id.clone(),
                    reason: format!("label {label:?} is not an executable skill"),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DomainError {
    #[error("skill label must be non-empty")]
    EmptyLabel,
    #[error("instruction text must be non-empty")]
    EmptyInstruction,
    #[error("duplicate skill id {0:?}")]
    DuplicateSkillId(String),
    #[error("duplicate skill label {0:?}")]
    DuplicateLabel(String),
    #[error("skill set must contain exactly one terminate skill, found {0}")]
    TerminateCount(usize),
    #[error("invalid skill {id:?}: {reason}")]
    InvalidSkill { id: String, reason: String },
    #[error("invalid case {id:?}: {reason}")]
    InvalidCase { id: String, reason: String },
}
