//! Affordance estimates `p(completion | state, skill)` for every skill.
//!
//! Raw values come from simulator-state oracles; the calibration formulas and
//! constants are the ones used on the real robot (pick value normalisation,
//! distance-based navigation, constant place and terminate affordances, and a
//! completion cap for skills that would have no effect).

use std::collections::BTreeMap;
use std::cmp::Ordering;

use rand::RngCore;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::domain::{AffordanceEstimate, Skill, SkillFamily, SkillId, SkillSet, WorldState, GRIPPER};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationConfig {
    pub pick_v_min: f64,
    pub pick_v_max: f64,
    pub goto_d_min: f64,
    pub goto_d_max: f64,
    pub place_prob: f64,
    pub terminate_prob: f64,
    pub cap_value: f64,
    pub oracle_noise_sigma: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            pick_v_min: 0.2,
            pick_v_max: 0.5,
            goto_d_min: 0.0,
            goto_d_max: 100.0,
            place_prob: 1.0,
            terminate_prob: 0.1,
            cap_value: 0.0,
            oracle_noise_sigma: 0.0,
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<(), AffordanceError> {
        let bad = |m: String| Err(AffordanceError::Config(m));
        if self.pick_v_min.partial_cmp(&self.pick_v_max) != Some(Ordering::Less) {
            return bad(format!("pick_v_min {} must be < pick_v_max {}", self.pick_v_min, self.pick_v_max));
        }
        if self.goto_d_min.partial_cmp(&self.goto_d_max) != Some(Ordering::Less) {
            return bad(format!("goto_d_min {} must be < goto_d_max {}", self.goto_d_min, self.goto_d_max));
        }
        for (name, p) in [
            ("place_prob", self.place_prob),
            ("terminate_prob", self.terminate_prob),
            ("cap_value", self.cap_value),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        if !(self.oracle_noise_sigma >= 0.0 && self.oracle_noise_sigma.is_finite()) {
            return bad(format!("oracle_noise_sigma must be >= 0, got {}", self.oracle_noise_sigma));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum AffordanceError {
    #[error("invalid calibration: {0}")]
    Config(String),
    #[error("distance must be non-negative, got {0}")]
    NegativeDistance(f64),
    #[error("unknown location {0:?}")]
    UnknownLocation(String),
    #[error("unknown object {0:?}")]
    UnknownObject(String),
    #[error("skill {skill} is not a {expected} skill")]
    WrongFamily { skill: String, expected: &'static str },
    #[error("skill set must contain exactly one terminate skill")]
    Terminate,
    #[error("no affordance schedule entry for skill {0:?}")]
    UnknownSkill(String),
}

pub fn calibrate_pick(v: f64, cfg: &CalibrationConfig) -> f64 {
    ((v - cfg.pick_v_min) / (cfg.pick_v_max - cfg.pick_v_min)).clamp(0.0, 1.0)
}

pub fn calibrate_goto(d: f64, cfg: &CalibrationConfig) -> Result<f64, AffordanceError> {
    if d < 0.0 || d.is_nan() {
        return Err(AffordanceError::NegativeDistance(d));
    }
    Ok(((cfg.goto_d_max - d) / (cfg.goto_d_max - cfg.goto_d_min)).clamp(0.0, 1.0))
}

pub fn place_affordance(_state: &WorldState, skill: &Skill, cfg: &CalibrationConfig) -> Result<f64, AffordanceError> {
    expect_family(skill, &[SkillFamily::Place], "place")?;
    Ok(cfg.place_prob)
}

pub fn terminate_affordance(cfg: &CalibrationConfig) -> f64 {
    cfg.terminate_prob
}

/// Every drawer skill is possible next to the drawer and impossible elsewhere.
/// Opening an open drawer or closing a closed one is capped.
pub fn drawer_affordance(state: &WorldState, skill: &Skill, cfg: &CalibrationConfig) -> Result<f64, AffordanceError> {
    if !skill.family.is_drawer() {
        return Err(AffordanceError::WrongFamily {
            skill: skill.id.to_string(),
            expected: "drawer",
        });
    }
    let host = skill
        .location_arg
        .as_ref()
        .and_then(|d| state.drawer_host.get(d));
    let p = if host == Some(&state.robot_location) { 1.0 } else { 0.0 };
    Ok(apply_completion_cap(state, skill, p, cfg).probability)
}

/// Stand-in for the learned pick value function: `pick_v_max` when the
/// object rests at the robot's location with an empty gripper, `pick_v_min`
/// otherwise, plus optional Gaussian noise (left unclamped).
pub fn raw_pick_value(
    state: &WorldState,
    skill: &Skill,
    rng: &mut dyn RngCore,
    cfg: &CalibrationConfig,
) -> Result<f64, AffordanceError> {
    expect_family(skill, &[SkillFamily::Pick], "pick")?;
    let object = skill.object_arg.as_deref().unwrap_or_default();
    let reachable = state.object_placement.get(object) == Some(&state.robot_location)
        && state.gripper_contents.is_none();
    let v = if reachable { cfg.pick_v_max } else { cfg.pick_v_min };
    Ok(v + noise(rng, cfg))
}

fn noise(rng: &mut dyn RngCore, cfg: &CalibrationConfig) -> f64 {
    if cfg.oracle_noise_sigma > 0.0 {
        Normal::new(0.0, cfg.oracle_noise_sigma)
            .expect("sigma validated finite and positive")
            .sample(rng)
    } else {
        0.0
    }
}

/// True when executing `skill` in `state` would change nothing because its
/// effect already holds.
pub fn is_noop(state: &WorldState, skill: &Skill) -> bool {
    let loc = skill.location_arg.as_deref();
    let obj = skill.object_arg.as_deref();
    match skill.family {
        SkillFamily::GoTo => loc == Some(state.robot_location.as_str()),
        SkillFamily::Find => obj
            .and_then(|o| state.object_location(o))
            .is_some_and(|l| l == state.robot_location),
        SkillFamily::Place => state.gripper_contents.is_none(),
        SkillFamily::OpenDrawer => loc.and_then(|d| state.drawer_open.get(d)) == Some(&true),
        SkillFamily::CloseDrawer => loc.and_then(|d| state.drawer_open.get(d)) == Some(&false),
        SkillFamily::PickAndPlace => match (obj, loc) {
            (Some(o), Some(l)) => state.object_placement.get(o).map(String::as_str) == Some(l),
            _ => false,
        },
        _ => false,
    }
}

/// Forces the probability of a no-op skill down to `cap_value`.
pub fn apply_completion_cap(
    state: &WorldState,
    skill: &Skill,
    p: f64,
    cfg: &CalibrationConfig,
) -> AffordanceEstimate {
    let capped = is_noop(state, skill);
    AffordanceEstimate {
        skill_id: skill.id.clone(),
        raw_value: p,
        probability: if capped { cfg.cap_value } else { p },
        capped,
    }
}

fn expect_family(skill: &Skill, families: &[SkillFamily], name: &'static str) -> Result<(), AffordanceError> {
    if families.contains(&skill.family) {
        Ok(())
    } else {
        Err(AffordanceError::WrongFamily {
            skill: skill.id.to_string(),
            expected: name,
        })
    }
}

fn distance(state: &WorldState, target: &str) -> Result<f64, AffordanceError> {
    let here = state
        .coords(&state.robot_location)
        .ok_or_else(|| AffordanceError::UnknownLocation(state.robot_location.clone()))?;
    let there = state
        .coords(target)
        .ok_or_else(|| AffordanceError::UnknownLocation(target.to_string()))?;
    Ok(((here[0] - there[0]).powi(2) + (here[1] - there[1]).powi(2)).sqrt())
}

/// Affordance of a single skill, before nothing else; dispatches by family.
pub fn affordance_for(
    state: &WorldState,
    skill: &Skill,
    cfg: &CalibrationConfig,
    rng: &mut dyn RngCore,
) -> Result<AffordanceEstimate, AffordanceError> {
    let (raw, p) = match skill.family {
        SkillFamily::Pick => {
            let v = raw_pick_value(state, skill, rng, cfg)?;
            (v, calibrate_pick(v, cfg))
        }
        SkillFamily::GoTo => {
            let target = skill.location_arg.as_deref().unwrap_or_default();
            let d = distance(state, target)?;
            (d, calibrate_goto(d, cfg)?)
        }
        SkillFamily::Find => {
            let object = skill.object_arg.as_deref().unwrap_or_default();
            let at = state
                .object_location(object)
                .ok_or_else(|| AffordanceError::UnknownObject(object.to_string()))?
                .to_string();
            let d = distance(state, &at)?;
            (d, calibrate_goto(d, cfg)?)
        }
        SkillFamily::Place => {
            let p = place_affordance(state, skill, cfg)?;
            (p, p)
        }
        f if f.is_drawer() => {
            let p = drawer_affordance(state, skill, cfg)?;
            (p, p)
        }
        SkillFamily::PickAndPlace => {
            let ok = match (&skill.object_arg, &skill.location_arg) {
                (Some(o), Some(l)) => {
                    state.gripper_contents.is_none()
                        && state.object_placement.get(o).is_some_and(|p| p != GRIPPER)
                        && state.coords(l).is_some()
                }
                _ => false,
            };
            let p = if ok { 1.0 } else { 0.0 };
            (p, p)
        }
        SkillFamily::Terminate => {
            let p = terminate_affordance(cfg);
            return Ok(AffordanceEstimate {
                skill_id: skill.id.clone(),
                raw_value: p,
                probability: p,
                capped: false,
            });
        }
        _ => unreachable!("drawer families handled above"),
    };
    let mut est = apply_completion_cap(state, skill, p, cfg);
    est.raw_value = raw;
    Ok(est)
}

/// The affordance space: one estimate per skill, in skill-set order.
pub fn affordances_for_all(
    state: &WorldState,
    skills: &SkillSet,
    cfg: &CalibrationConfig,
    rng: &mut dyn RngCore,
) -> Result<Vec<AffordanceEstimate>, AffordanceError> {
    skills
        .iter()
        .map(|s| affordance_for(state, s, cfg, rng))
        .collect()
}

/// Where the planner gets affordances from at each step.
pub trait AffordanceSource: Send + Sync {
    fn estimate(
        &self,
        step: usize,
        state: &WorldState,
        skills: &SkillSet,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<AffordanceEstimate>, AffordanceError>;
}

/// Affordances read off the simulated world state.
#[derive(Clone, Copy, Debug, Default)]
pub struct SimulatedAffordances {
    pub calibration: CalibrationConfig,
}

impl AffordanceSource for SimulatedAffordances {
    fn estimate(
        &self,
        _step: usize,
        state: &WorldState,
        skills: &SkillSet,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<AffordanceEstimate>, AffordanceError> {
        affordances_for_all(state, skills, &self.calibration, rng)
    }
}

/// Affordance 1 for every skill and no cap: removes world grounding.
#[derive(Clone, Copy, Debug, Default)]
pub struct UnitAffordances;

impl AffordanceSource for UnitAffordances {
    fn estimate(
        &self,
        _step: usize,
        _state: &WorldState,
        skills: &SkillSet,
        _rng: &mut dyn RngCore,
    ) -> Result<Vec<AffordanceEstimate>, AffordanceError> {
        Ok(skills
            .iter()
            .map(|s| AffordanceEstimate {
                skill_id: s.id.clone(),
                raw_value: 1.0,
                probability: 1.0,
                capped: false,
            })
            .collect())
    }
}

/// Precomputed per-step affordances, independent of world state. Steps past
/// the end of the schedule use `after`; skills absent from a step get 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduledAffordances {
    pub steps: Vec<BTreeMap<SkillId, f64>>,
    pub after: BTreeMap<SkillId, f64>,
}

impl AffordanceSource for ScheduledAffordances {
    fn estimate(
        &self,
        step: usize,
        _state: &WorldState,
        skills: &SkillSet,
        _rng: &mut dyn RngCore,
    ) -> Result<Vec<AffordanceEstimate>, AffordanceError> {
        let table = self.steps.get(step).unwrap_or(&self.after);
        Ok(skills
            .iter()
            .map(|s| {
                let p = table.get(&s.id).copied().unwrap_or(0.0);
                AffordanceEstimate {
                    skill_id: s.id.clone(),
                    raw_value: p,
                    probability: p,
                    capped: false,
                }
            })
            .collect())
    }
}
