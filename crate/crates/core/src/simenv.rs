//! Seeded discrete simulators: the mock office kitchen and the tabletop
//! blocks-and-bowls domain.
//!
//! Skills are executed symbolically against a [`WorldState`]; an infeasible
//! skill changes nothing but the step counter, and a feasible one succeeds
//! with its family's configured probability.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::affordance::CalibrationConfig;
use crate::domain::{
    validate_world_state, DomainError, InstructionCase, LocationId, ObjectId, Skill, SkillFamily,
    SkillId, SkillLabel, SkillSet, Violation, WorldState, GRIPPER,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvironmentKind {
    Kitchen,
    Tabletop,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocationConfig {
    pub name: String,
    pub coords: [f64; 2],
    #[serde(default = "yes")]
    pub navigable: bool,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectConfig {
    pub name: String,
    /// Location or drawer name the object starts at.
    pub at: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub article: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrawerConfig {
    pub name: String,
    /// Location the drawer is operated from.
    pub at: String,
    #[serde(default)]
    pub open: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabletopConfig {
    pub colors: Vec<String>,
    pub blocks: usize,
    pub bowls: usize,
    #[serde(default)]
    pub layout_seed: u64,
    #[serde(default = "default_grid")]
    pub grid: usize,
    #[serde(default = "default_cell")]
    pub cell_size: f64,
}

fn default_grid() -> usize {
    8
}
fn default_cell() -> f64 {
    0.1
}

/// On-disk scenario and skill-set description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    #[serde(default = "one")]
    pub format_version: u32,
    pub id: String,
    pub kind: EnvironmentKind,
    #[serde(default)]
    pub start_location: Option<String>,
    #[serde(default)]
    pub user_location: Option<String>,
    #[serde(default)]
    pub locations: Vec<LocationConfig>,
    #[serde(default)]
    pub objects: Vec<ObjectConfig>,
    #[serde(default)]
    pub drawers: Vec<DrawerConfig>,
    pub skill_families: Vec<SkillFamily>,
    /// Labels replacing the templated ones, keyed by skill id.
    #[serde(default)]
    pub label_overrides: BTreeMap<String, String>,
    #[serde(default)]
    pub success_prob: BTreeMap<SkillFamily, f64>,
    #[serde(default)]
    pub calibration: CalibrationConfig,
    #[serde(default)]
    pub tabletop: Option<TabletopConfig>,
}

fn one() -> u32 {
    1
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error("scenario parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("initial state invalid: {0:?}")]
    InvalidState(Vec<Violation>),
    #[error("setup skill {label:?} failed: {reason}")]
    Setup { label: String, reason: String },
    #[error("unknown skill label {0:?}")]
    UnknownLabel(String),
}

/// Lowercase snake-case id from a display name.
pub fn to_id(name: &str) -> String {
    let mut out = String::new();
    for c in name.trim().chars().flat_map(char::to_lowercase) {
        if c.is_alphanumeric() {
            out.push(c);
        } else if !out.ends_with('_') && !out.is_empty() {
            out.push('_');
        }
    }
    out.trim_end_matches('_').to_string()
}

fn article_for(obj: &ObjectConfig) -> String {
    obj.article.clone().unwrap_or_else(|| {
        match obj.name.chars().next().map(|c| c.to_ascii_lowercase()) {
            Some('a' | 'e' | 'i' | 'o' | 'u') => "an".into(),
            _ => "a".into(),
        }
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectInfo {
    pub id: ObjectId,
    pub name: String,
    pub category: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocationInfo {
    pub id: LocationId,
    pub name: String,
    pub navigable: bool,
}

/// A resolved, validated scenario: initial state, skill set and execution
/// success probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub id: String,
    pub kind: EnvironmentKind,
    pub initial: WorldState,
    pub skills: SkillSet,
    pub success_prob: BTreeMap<SkillFamily, f64>,
    pub calibration: CalibrationConfig,
    pub user_location: Option<LocationId>,
    pub objects: Vec<ObjectInfo>,
    pub locations: Vec<LocationInfo>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        Self::from_config(serde_json::from_str(text)?)
    }

    pub fn from_config(cfg: ScenarioConfig) -> Result<Self, SimError> {
        let cfg = match cfg.kind {
            EnvironmentKind::Tabletop => expand_tabletop(cfg)?,
            EnvironmentKind::Kitchen => cfg,
        };
        cfg.calibration
            .validate()
            .map_err(|e| SimError::Config(e.to_string()))?;
        for (fam, p) in &cfg.success_prob {
            if !(0.0..=1.0).contains(p) {
                return Err(SimError::Config(format!(
                    "success probability for {} must lie in [0, 1], got {p}",
                    fam.as_str()
                )));
            }
        }

        let locations: Vec<LocationInfo> = cfg
            .locations
            .iter()
            .map(|l| LocationInfo {
                id: to_id(&l.name),
                name: l.name.clone(),
                navigable: l.navigable,
            })
            .collect();
        let objects: Vec<ObjectInfo> = cfg
            .objects
            .iter()
            .map(|o| ObjectInfo {
                id: to_id(&o.name),
                name: o.name.clone(),
                category: o.category.clone(),
            })
            .collect();
        let unique = |ids: Vec<&String>, what: &str| -> Result<(), SimError> {
            let mut seen = BTreeSet::new();
            for id in ids {
                if !seen.insert(id) {
                    return Err(SimError::Config(format!("duplicate {what} id {id:?}")));
                }
            }
            Ok(())
        };
        unique(locations.iter().map(|l| &l.id).collect(), "location")?;
        unique(objects.iter().map(|o| &o.id).collect(), "object")?;

        let mut state = WorldState {
            robot_location: String::new(),
            gripper_contents: None,
            object_placement: BTreeMap::new(),
            drawer_open: BTreeMap::new(),
            drawer_host: BTreeMap::new(),
            step_count: 0,
            location_coords: cfg
                .locations
                .iter()
                .map(|l| (to_id(&l.name), l.coords))
                .collect(),
        };
        for d in &cfg.drawers {
            let id = to_id(&d.name);
            if state.location_coords.contains_key(&id) {
                return Err(SimError::Config(format!("drawer id {id:?} clashes with a location")));
            }
            state.drawer_open.insert(id.clone(), d.open);
            state.drawer_host.insert(id, to_id(&d.at));
        }
        for o in &cfg.objects {
            state.object_placement.insert(to_id(&o.name), to_id(&o.at));
        }
        state.robot_location = match &cfg.start_location {
            Some(s) => to_id(s),
            None => locations
                .first()
                .map(|l| l.id.clone())
                .ok_or_else(|| SimError::Config("no locations".into()))?,
        };
        let violations = validate_world_state(&state);
        if !violations.is_empty() {
            return Err(SimError::InvalidState(violations));
        }
        let user_location = cfg.user_location.as_deref().map(to_id);
        if let Some(u) = &user_location {
            if !state.location_coords.contains_key(u) {
                return Err(SimError::Config(format!("user location {u:?} is not a location")));
            }
        }

        let skills = build_skills(&cfg)?;
        for id in cfg.label_overrides.keys() {
            if skills.by_id(&SkillId(id.clone())).is_none() {
                return Err(SimError::Config(format!("label override for unknown skill {id:?}")));
            }
        }
        Ok(Self {
            id: cfg.id,
            kind: cfg.kind,
            initial: state,
            skills,
            success_prob: cfg.success_prob,
            calibration: cfg.calibration,
            user_location,
            objects,
            locations,
        })
    }

    pub fn success_prob(&self, family: SkillFamily) -> f64 {
        self.success_prob.get(&family).copied().unwrap_or(1.0)
    }

    /// Copy with every family's success probability set to `p`.
    pub fn with_uniform_success(&self, p: f64) -> Self {
        let mut s = self.clone();
        s.success_prob = self
            .skills
            .iter()
            .map(|k| (k.family, p))
            .collect();
        s
    }

    pub fn object_name<'a>(&'a self, id: &'a str) -> &'a str {
        self.objects
            .iter()
            .find(|o| o.id == id)
            .map(|o| o.name.as_str())
            .unwrap_or(id)
    }

    pub fn location_name<'a>(&'a self, id: &'a str) -> &'a str {
        self.locations
            .iter()
            .find(|l| l.id == id)
            .map(|l| l.name.as_str())
            .unwrap_or(id)
    }

    pub fn is_deterministic(&self) -> bool {
        self.skills.iter().all(|s| {
            let p = self.success_prob(s.family);
            p == 0.0 || p == 1.0
        }) && self.calibration.oracle_noise_sigma == 0.0
    }
}

fn build_skills(cfg: &ScenarioConfig) -> Result<SkillSet, SimError> {
    let mut skills = Vec::new();
    let mut push = |id: String, label: String, family, obj: Option<&str>, loc: Option<&str>| {
        let label = cfg.label_overrides.get(&id).cloned().unwrap_or(label);
        skills.push((id, label, family, obj.map(str::to_owned), loc.map(str::to_owned)));
    };
    let bowls: Vec<&LocationConfig> = cfg.locations.iter().filter(|l| l.navigable).collect();
    for family in &cfg.skill_families {
        match family {
            SkillFamily::Pick => {
                for o in &cfg.objects {
                    let id = to_id(&o.name);
                    push(format!("pick_{id}"), format!("pick up the {}", o.name), *family, Some(&id), None);
                }
            }
            SkillFamily::Find => {
                for o in &cfg.objects {
                    let id = to_id(&o.name);
                    push(format!("find_{id}"), format!("find {} {}", article_for(o), o.name), *family, Some(&id), None);
                }
            }
            SkillFamily::Place => {
                for o in &cfg.objects {
                    let id = to_id(&o.name);
                    push(format!("place_{id}"), format!("put down the {}", o.name), *family, Some(&id), None);
                }
            }
            SkillFamily::GoTo => {
                for l in cfg.locations.iter().filter(|l| l.navigable) {
                    let id = to_id(&l.name);
                    push(format!("go_to_{id}"), format!("go to the {}", l.name), *family, None, Some(&id));
                }
            }
            SkillFamily::OpenDrawer | SkillFamily::CloseDrawer => {
                let verb = if *family == SkillFamily::OpenDrawer { "open" } else { "close" };
                for d in &cfg.drawers {
                    let id = to_id(&d.name);
                    push(format!("{verb}_{id}"), format!("{verb} the {}", d.name), *family, None, Some(&id));
                }
            }
            SkillFamily::PutInDrawer => {
                for d in &cfg.drawers {
                    let did = to_id(&d.name);
                    for o in &cfg.objects {
                        let oid = to_id(&o.name);
                        push(
                            format!("put_{oid}_in_{did}"),
                            format!("put the {} in the {}", o.name, d.name),
                            *family,
                            Some(&oid),
                            Some(&did),
                        );
                    }
                }
            }
            SkillFamily::TakeFromDrawer => {
                for d in &cfg.drawers {
                    let did = to_id(&d.name);
                    for o in &cfg.objects {
                        let oid = to_id(&o.name);
                        push(
                            format!("take_{oid}_from_{did}"),
                            format!("take the {} out of the {}", o.name, d.name),
                            *family,
                            Some(&oid),
                            Some(&did),
                        );
                    }
                }
            }
            SkillFamily::PickAndPlace => {
                for o in &cfg.objects {
                    let oid = to_id(&o.name);
                    for b in &bowls {
                        let bid = to_id(&b.name);
                        push(
                            format!("move_{oid}_to_{bid}"),
                            format!("pick up the {} and place it in the {}", o.name, b.name),
                            *family,
                            Some(&oid),
                            Some(&bid),
                        );
                    }
                }
            }
            SkillFamily::Terminate => {}
        }
    }
    let mut out: Vec<Skill> = skills
        .into_iter()
        .map(|(id, label, family, object_arg, location_arg)| {
            Ok(Skill {
                id: SkillId(id),
                label: SkillLabel::new(label)?,
                family,
                object_arg,
                location_arg,
            })
        })
        .collect::<Result<_, DomainError>>()?;
    out.push(Skill::terminate());
    Ok(SkillSet::new(out)?)
}

/// Samples distinct block and bowl colours and distinct grid cells from the
/// layout seed. Blocks start at their own cells; bowls are the place targets.
fn expand_tabletop(mut cfg: ScenarioConfig) -> Result<ScenarioConfig, SimError> {
    let t = cfg
        .tabletop
        .clone()
        .ok_or_else(|| SimError::Config("tabletop scenario needs a tabletop section".into()))?;
    if t.blocks > t.colors.len() || t.bowls > t.colors.len() {
        return Err(SimError::Config("not enough colours".into()));
    }
    if t.blocks + t.bowls > t.grid * t.grid {
        return Err(SimError::Config("grid too small".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(t.layout_seed);
    let mut block_colors = t.colors.clone();
    block_colors.shuffle(&mut rng);
    block_colors.truncate(t.blocks);
    let mut bowl_colors = t.colors.clone();
    bowl_colors.shuffle(&mut rng);
    bowl_colors.truncate(t.bowls);
    let mut cells: Vec<(usize, usize)> = (0..t.grid)
        .flat_map(|r| (0..t.grid).map(move |c| (r, c)))
        .collect();
    cells.shuffle(&mut rng);
    let mut cells = cells.into_iter();
    let coords = |(r, c): (usize, usize)| [c as f64 * t.cell_size, r as f64 * t.cell_size];

    cfg.locations = vec![LocationConfig {
        name: "table".into(),
        coords: [0.0, 0.0],
        navigable: false,
    }];
    for color in &bowl_colors {
        let cell = cells.next().expect("grid size checked");
        cfg.locations.push(LocationConfig {
            name: format!("{color} bowl"),
            coords: coords(cell),
            navigable: true,
        });
    }
    cfg.objects.clear();
    for color in &block_colors {
        let (r, c) = cells.next().expect("grid size checked");
        let cell_name = format!("cell {r} {c}");
        cfg.locations.push(LocationConfig {
            name: cell_name.clone(),
            coords: coords((r, c)),
            navigable: false,
        });
        cfg.objects.push(ObjectConfig {
            name: format!("{color} block"),
            at: cell_name,
            category: Some("block".into()),
            article: None,
        });
    }
    cfg.start_location = Some("table".into());
    cfg.skill_families = vec![SkillFamily::PickAndPlace];
    Ok(cfg)
}

/// Fresh copy of the initial state.
pub fn reset(scenario: &Scenario) -> WorldState {
    let mut s = scenario.initial.clone();
    s.step_count = 0;
    s
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feasibility {
    pub ok: bool,
    pub reason: String,
}

impl Feasibility {
    fn yes() -> Self {
        Self {
            ok: true,
            reason: "ok".into(),
        }
    }

    fn no(reason: impl Into<String>) -> Self {
        Self {
            ok: false,
            reason: reason.into(),
        }
    }
}

/// Symbolic preconditions per skill family.
pub fn feasible(state: &WorldState, skill: &Skill) -> Feasibility {
    let obj = skill.object_arg.as_deref();
    let loc = skill.location_arg.as_deref();
    let drawer_ready = |d: &str| -> Option<Feasibility> {
        if state.drawer_host.get(d) != Some(&state.robot_location) {
            return Some(Feasibility::no("not at the drawer"));
        }
        None
    };
    match skill.family {
        SkillFamily::Terminate => Feasibility::yes(),
        SkillFamily::GoTo => match loc {
            Some(l) if state.coords(l).is_some() => Feasibility::yes(),
            _ => Feasibility::no("unknown location"),
        },
        SkillFamily::Find => match obj.and_then(|o| state.object_location(o)) {
            Some(_) => Feasibility::yes(),
            None => Feasibility::no("unknown object"),
        },
        SkillFamily::Pick => {
            let o = obj.unwrap_or_default();
            if state.gripper_contents.is_some() {
                Feasibility::no("gripper occupied")
            } else if state.object_placement.get(o) != Some(&state.robot_location) {
                Feasibility::no("object not here")
            } else {
                Feasibility::yes()
            }
        }
        SkillFamily::Place => {
            if state.is_holding(obj.unwrap_or_default()) {
                Feasibility::yes()
            } else {
                Feasibility::no("not holding object")
            }
        }
        SkillFamily::OpenDrawer | SkillFamily::CloseDrawer => {
            let d = loc.unwrap_or_default();
            if let Some(f) = drawer_ready(d) {
                return f;
            }
            let open = state.drawer_open.get(d).copied().unwrap_or(false);
            match (skill.family, open) {
                (SkillFamily::OpenDrawer, true) => Feasibility::no("drawer already open"),
                (SkillFamily::CloseDrawer, false) => Feasibility::no("drawer already closed"),
                _ => Feasibility::yes(),
            }
        }
        SkillFamily::PutInDrawer => {
            let d = loc.unwrap_or_default();
            if !state.is_holding(obj.unwrap_or_default()) {
                Feasibility::no("not holding object")
            } else if let Some(f) = drawer_ready(d) {
                f
            } else if state.drawer_open.get(d) != Some(&true) {
                Feasibility::no("drawer closed")
            } else {
                Feasibility::yes()
            }
        }
        SkillFamily::TakeFromDrawer => {
            let d = loc.unwrap_or_default();
            if let Some(f) = drawer_ready(d) {
                f
            } else if state.drawer_open.get(d) != Some(&true) {
                Feasibility::no("drawer closed")
            } else if state.gripper_contents.is_some() {
                Feasibility::no("gripper occupied")
            } else if state.object_placement.get(obj.unwrap_or_default()).map(String::as_str) != Some(d) {
                Feasibility::no("object not in drawer")
            } else {
                Feasibility::yes()
            }
        }
        SkillFamily::PickAndPlace => {
            let o = obj.unwrap_or_default();
            let l = loc.unwrap_or_default();
            match state.object_placement.get(o) {
                None => Feasibility::no("unknown object"),
                Some(p) if p == GRIPPER => Feasibility::no("object in gripper"),
                Some(_) if state.gripper_contents.is_some() => Feasibility::no("gripper occupied"),
                Some(_) if state.coords(l).is_none() => Feasibility::no("unknown target"),
                Some(_) => Feasibility::yes(),
            }
        }
    }
}

fn apply_effects(state: &mut WorldState, skill: &Skill) {
    let obj = skill.object_arg.clone().unwrap_or_default();
    let loc = skill.location_arg.clone().unwrap_or_default();
    match skill.family {
        SkillFamily::Pick | SkillFamily::TakeFromDrawer => {
            state.object_placement.insert(obj.clone(), GRIPPER.into());
            state.gripper_contents = Some(obj);
        }
        SkillFamily::Place => {
            state.object_placement.insert(obj, state.robot_location.clone());
            state.gripper_contents = None;
        }
        SkillFamily::PutInDrawer => {
            state.object_placement.insert(obj, loc);
            state.gripper_contents = None;
        }
        SkillFamily::GoTo => state.robot_location = loc,
        SkillFamily::Find => {
            if let Some(at) = state.object_location(&obj) {
                state.robot_location = at.to_string();
            }
        }
        SkillFamily::OpenDrawer => {
            state.drawer_open.insert(loc, true);
        }
        SkillFamily::CloseDrawer => {
            state.drawer_open.insert(loc, false);
        }
        SkillFamily::PickAndPlace => {
            state.object_placement.insert(obj, loc);
        }
        SkillFamily::Terminate => {}
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub skill_id: SkillId,
    pub success: bool,
    pub reason: String,
    pub state_after: WorldState,
}

/// Attempts `skill`. Infeasible attempts fail without effect; feasible ones
/// succeed with the family's success probability.
pub fn execute(state: &WorldState, skill: &Skill, rng: &mut dyn RngCore, scenario: &Scenario) -> StepOutcome {
    let mut next = state.clone();
    next.step_count += 1;
    let f = feasible(state, skill);
    if !f.ok {
        return StepOutcome {
            skill_id: skill.id.clone(),
            success: false,
            reason: f.reason,
            state_after: next,
        };
    }
    let draw: f64 = rng.random();
    let success = draw < scenario.success_prob(skill.family);
    if success {
        apply_effects(&mut next, skill);
    }
    StepOutcome {
        skill_id: skill.id.clone(),
        success,
        reason: if success { "ok".into() } else { "execution failed".into() },
        state_after: next,
    }
}

/// Skill whose label matches `text` up to case, surrounding whitespace and
/// trailing punctuation.
pub fn skill_for_text<'a>(skills: &'a SkillSet, text: &str) -> Option<&'a Skill> {
    let norm = text
        .trim()
        .trim_end_matches(['.', '!', '?'])
        .trim()
        .to_lowercase();
    skills.iter().find(|s| s.label.as_str().to_lowercase() == norm)
}

/// Executes a raw text command: succeeds only when it names a skill.
pub fn execute_text(
    state: &WorldState,
    text: &str,
    rng: &mut dyn RngCore,
    scenario: &Scenario,
) -> StepOutcome {
    match skill_for_text(&scenario.skills, text) {
        Some(skill) => execute(state, skill, rng, scenario),
        None => {
            let mut next = state.clone();
            next.step_count += 1;
            StepOutcome {
                skill_id: SkillId("unknown".into()),
                success: false,
                reason: "no skill matches the command".into(),
                state_after: next,
            }
        }
    }
}

/// Applies `labels` with guaranteed success, for starting a case partway
/// through a task. The step counter is left at zero.
pub fn apply_setup(state: &WorldState, labels: &[SkillLabel], scenario: &Scenario) -> Result<WorldState, SimError> {
    let mut s = state.clone();
    for label in labels {
        let skill = scenario
            .skills
            .by_label(label.as_str())
            .ok_or_else(|| SimError::UnknownLabel(label.to_string()))?;
        let f = feasible(&s, skill);
        if !f.ok {
            return Err(SimError::Setup {
                label: label.to_string(),
                reason: f.reason,
            });
        }
        apply_effects(&mut s, skill);
    }
    Ok(s)
}

/// Initial state of a case: reset plus its setup prefix.
pub fn case_initial_state(scenario: &Scenario, case: &InstructionCase) -> Result<WorldState, SimError> {
    apply_setup(&reset(scenario), &case.setup, scenario)
}

pub fn check_goal(state: &WorldState, case: &InstructionCase) -> bool {
    case.goal.eval(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{GoalPredicate, Instruction, InstructionFamily};

    fn kitchen() -> Scenario {
        Scenario::from_json(
            r#"{
            "id": "mini", "kind": "kitchen",
            "start_location": "start", "user_location": "user",
            "locations": [
                {"name": "start", "coords": [0, 0], "navigable": false},
                {"name": "table", "coords": [3, 4]},
                {"name": "user", "coords": [0, 2]},
                {"name": "drawers", "coords": [6, 0]}
            ],
            "objects": [
                {"name": "apple", "at": "table"},
                {"name": "coke can", "at": "table"}
            ],
            "drawers": [{"name": "drawer", "at": "drawers"}],
            "skill_families": ["find", "pick", "place", "go_to", "open_drawer", "close_drawer", "put_in_drawer", "take_from_drawer"],
            "label_overrides": {"go_to_user": "bring it to you"}
        }"#,
        )
        .unwrap()
    }

    fn skill<'a>(s: &'a Scenario, label: &str) -> &'a Skill {
        s.skills.by_label(label).unwrap_or_else(|| panic!("no skill {label:?}"))
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(1)
    }

    #[test]
    fn ids_and_labels() {
        assert_eq!(to_id("Far Counter"), "far_counter");
        assert_eq!(to_id("7up can"), "7up_can");
        let k = kitchen();
        assert!(k.skills.by_label("find an apple").is_some());
        assert!(k.skills.by_label("find a coke can").is_some());
        assert!(k.skills.by_label("bring it to you").is_some());
        assert!(k.skills.by_label("go to the user").is_none());
        assert!(k.skills.by_label("go to the start").is_none());
        assert!(k.skills.by_label("take the apple out of the drawer").is_some());
        assert_eq!(k.skills.terminate().label.as_str(), "done");
    }

    #[test]
    fn reset_is_valid_and_repeatable() {
        let k = kitchen();
        let a = reset(&k);
        assert_eq!(a, reset(&k));
        assert!(validate_world_state(&a).is_empty());
        assert_eq!(a.robot_location, "start");
        assert_eq!(a.drawer_open.get("drawer"), Some(&false));
    }

    #[test]
    fn pick_preconditions() {
        let k = kitchen();
        let mut s = reset(&k);
        s.robot_location = "table".into();
        assert!(feasible(&s, skill(&k, "pick up the apple")).ok);
        let s = apply_setup(&s, &[SkillLabel::new("pick up the coke can").unwrap()], &k).unwrap();
        let f = feasible(&s, skill(&k, "pick up the apple"));
        assert!(!f.ok);
        assert_eq!(f.reason, "gripper occupied");
    }

    #[test]
    fn put_in_closed_drawer_is_infeasible() {
        let k = kitchen();
        let labels: Vec<SkillLabel> = ["find a coke can", "pick up the coke can", "go to the drawers"]
            .iter()
            .map(|l| SkillLabel::new(*l).unwrap())
            .collect();
        let s = apply_setup(&reset(&k), &labels, &k).unwrap();
        let put = skill(&k, "put the coke can in the drawer");
        assert_eq!(feasible(&s, put).reason, "drawer closed");
        let s = apply_setup(&s, &[SkillLabel::new("open the drawer").unwrap()], &k).unwrap();
        assert!(feasible(&s, put).ok);
    }

    #[test]
    fn execution_success_and_failure() {
        let k = kitchen();
        let mut s = reset(&k);
        s.robot_location = "table".into();
        let pick = skill(&k, "pick up the apple");
        let out = execute(&s, pick, &mut rng(), &k);
        assert!(out.success);
        assert_eq!(out.state_after.gripper_contents.as_deref(), Some("apple"));
        assert_eq!(out.state_after.step_count, 1);

        let never = k.with_uniform_success(0.0);
        let out = execute(&s, pick, &mut rng(), &never);
        assert!(!out.success);
        assert_eq!(out.state_after.object_placement, s.object_placement);
        assert_eq!(out.state_after.gripper_contents, None);
    }

    #[test]
    fn infeasible_execution_changes_only_the_counter() {
        let k = kitchen();
        let s = reset(&k);
        let out = execute(&s, skill(&k, "pick up the apple"), &mut rng(), &k);
        assert!(!out.success);
        let mut expected = s.clone();
        expected.step_count = 1;
        assert_eq!(out.state_after, expected);
    }

    #[test]
    fn find_moves_to_the_object() {
        let k = kitchen();
        let out = execute(&reset(&k), skill(&k, "find an apple"), &mut rng(), &k);
        assert_eq!(out.state_after.robot_location, "table");
    }

    #[test]
    fn unknown_text_command_fails() {
        let k = kitchen();
        let out = execute_text(&reset(&k), "bring me an apple", &mut rng(), &k);
        assert!(!out.success);
        let out = execute_text(&reset(&k), "Find an apple.", &mut rng(), &k);
        assert!(out.success);
    }

    fn case(goal: GoalPredicate) -> InstructionCase {
        InstructionCase {
            id: "c".into(),
            instruction: Instruction::new("x").unwrap(),
            family: InstructionFamily::NlSinglePrimitive,
            acceptable_plans: vec![vec![]],
            goal,
            scenario: "mini".into(),
            setup: vec![],
        }
    }

    #[test]
    fn goals() {
        let k = kitchen();
        let bring = case(GoalPredicate::ObjectAt {
            object: "coke_can".into(),
            location: "user".into(),
        });
        assert!(!check_goal(&reset(&k), &bring));
        let labels: Vec<SkillLabel> = ["find a coke can", "pick up the coke can", "bring it to you"]
            .iter()
            .map(|l| SkillLabel::new(*l).unwrap())
            .collect();
        let s = apply_setup(&reset(&k), &labels, &k).unwrap();
        assert!(check_goal(&s, &bring));

        let let_go = case(GoalPredicate::All {
            of: vec![
                GoalPredicate::GripperEmpty,
                GoalPredicate::PlacedNearRobot {
                    object: "coke_can".into(),
                },
            ],
        });
        assert!(!check_goal(&s, &let_go));
        let s = apply_setup(&s, &[SkillLabel::new("put down the coke can").unwrap()], &k).unwrap();
        assert!(check_goal(&s, &let_go));
    }

    #[test]
    fn tabletop_layout_is_seeded() {
        let json = r#"{
            "id": "tabletop", "kind": "tabletop", "skill_families": [],
            "tabletop": {"colors": ["red","green","blue","yellow","purple"], "blocks": 3, "bowls": 3, "layout_seed": 4}
        }"#;
        let a = Scenario::from_json(json).unwrap();
        let b = Scenario::from_json(json).unwrap();
        assert_eq!(reset(&a), reset(&b));
        assert!(validate_world_state(&reset(&a)).is_empty());
        assert_eq!(a.objects.len(), 3);
        // 3 blocks x 3 bowls + done
        assert_eq!(a.skills.len(), 10);
        let other = Scenario::from_json(&json.replace("\"layout_seed\": 4", "\"layout_seed\": 5")).unwrap();
        assert_ne!(reset(&a).location_coords, reset(&other).location_coords);
        let lbl = a.skills.iter().find(|s| s.family == SkillFamily::PickAndPlace).unwrap();
        assert!(lbl.label.as_str().starts_with("pick up the "));
        assert!(lbl.label.as_str().contains(" and place it in the "));
    }

    #[test]
    fn bad_configs_rejected() {
        let bad_prob = r#"{"id":"x","kind":"kitchen","locations":[{"name":"a","coords":[0,0]}],
            "skill_families":["go_to"],"success_prob":{"go_to":1.5}}"#;
        assert!(Scenario::from_json(bad_prob).is_err());
        let bad_place = r#"{"id":"x","kind":"kitchen","locations":[{"name":"a","coords":[0,0]}],
            "objects":[{"name":"apple","at":"nowhere"}],"skill_families":["pick"]}"#;
        assert!(matches!(Scenario::from_json(bad_place), Err(SimError::InvalidState(_))));
        let bad_family = r#"{"id":"x","kind":"kitchen","locations":[{"name":"a","coords":[0,0]}],
            "skill_families":["teleport"]}"#;
        assert!(Scenario::from_json(bad_family).is_err());
    }
}
