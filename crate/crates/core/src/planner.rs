//! The step loop and its ablations.
//!
//! [`plan_step`] scores every skill label with the language model, asks the
//! affordance source how likely each skill is to succeed, and picks the
//! largest product. [`run`] repeats that until "done", the step limit, or no
//! skill has positive score, optionally executing each choice in a simulator.

use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::affordance::{AffordanceError, AffordanceSource, UnitAffordances};
use crate::domain::{
    CandidateScore, DecisionRecord, DecisionSource, Instruction, PlanTrace, SkillId, SkillLabel,
    SkillSet, Termination, WorldState, DONE,
};
use crate::embedding::{nearest, Embedder, EmbeddingVector};
use crate::prompting::{build_cot_prompt, build_prompt, PromptError, PromptTemplate};
use crate::scoring::{score_candidates, ScoreError, ScoreRequest, Scorer};
use crate::simenv::{execute, execute_text, skill_for_text, Scenario, StepOutcome};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlannerMode {
    #[default]
    Saycan,
    #[serde(alias = "no_vf")]
    NoVf,
    Generative,
    #[serde(alias = "bc_use")]
    BcUse,
    Cot,
    /// The instruction itself is sent to the skill policies as a command.
    #[serde(alias = "bc_nl")]
    BcNl,
}

impl PlannerMode {
    pub const ALL: [PlannerMode; 6] = [
        PlannerMode::Saycan,
        PlannerMode::NoVf,
        PlannerMode::Generative,
        PlannerMode::BcUse,
        PlannerMode::Cot,
        PlannerMode::BcNl,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PlannerMode::Saycan => "saycan",
            PlannerMode::NoVf => "no-vf",
            PlannerMode::Generative => "generative",
            PlannerMode::BcUse => "bc-use",
            PlannerMode::Cot => "cot",
            PlannerMode::BcNl => "bc-nl",
        }
    }
}

impl fmt::Display for PlannerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PlannerMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == norm)
            .ok_or_else(|| format!("unknown mode {s:?}"))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    #[default]
    LexicographicId,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub max_steps: usize,
    pub tie_break: TieBreak,
    pub mode: PlannerMode,
    pub bc_use_max_len: usize,
    /// Token budget for generative calls (plans and explanations).
    pub max_tokens: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            max_steps: 20,
            tie_break: TieBreak::LexicographicId,
            mode: PlannerMode::Saycan,
            bc_use_max_len: 2,
            max_tokens: 128,
        }
    }
}

impl PlannerConfig {
    pub fn with_mode(mut self, mode: PlannerMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        if self.max_steps == 0 {
            return Err(PlanError::Config("max_steps must be at least 1".into()));
        }
        if self.bc_use_max_len == 0 {
            return Err(PlanError::Config("bc_use_max_len must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PlanError {
    #[error("invalid planner config: {0}")]
    Config(String),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Affordance(#[from] AffordanceError),
    #[error("affordance source returned {got} estimates for {want} skills")]
    AffordanceShape { got: usize, want: usize },
}

/// Everything the planner consults besides the world state.
#[derive(Clone, Copy)]
pub struct PlannerDeps<'a> {
    pub scorer: &'a dyn Scorer,
    pub template: &'a PromptTemplate,
    pub affordances: &'a dyn AffordanceSource,
    pub embedder: &'a Embedder,
}

/// Index of the winning candidate, whether several tied for the maximum,
/// and whether every combined score was zero (in which case the winner is
/// `fallback`).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Selection {
    pub index: usize,
    pub tie_broken: bool,
    pub no_feasible: bool,
}

/// Argmax of `combined`; ties go to the smallest skill id.
pub fn select(candidates: &[CandidateScore], fallback: &SkillId) -> Selection {
    let best = candidates
        .iter()
        .map(|c| c.combined)
        .fold(f64::NEG_INFINITY, f64::max);
    // f64::max skips NaN, so `best` is never NaN here.
    if best <= 0.0 {
        let index = candidates
            .iter()
            .position(|c| &c.skill_id == fallback)
            .unwrap_or(0);
        return Selection {
            index,
            tie_broken: false,
            no_feasible: true,
        };
    }
    let mut winners = candidates
        .iter()
        .enumerate()
        .filter(|(_, c)| c.combined == best);
    let (mut index, mut id) = winners.next().map(|(i, c)| (i, &c.skill_id)).expect("max exists");
    let mut tie_broken = false;
    for (i, c) in winners {
        tie_broken = true;
        if c.skill_id < *id {
            index = i;
            id = &c.skill_id;
        }
    }
    Selection {
        index,
        tie_broken,
        no_feasible: false,
    }
}

fn render_prompt(
    template: &PromptTemplate,
    instruction: &Instruction,
    history: &[SkillLabel],
    explanation: Option<&str>,
) -> Result<String, PlanError> {
    Ok(match explanation {
        Some(e) => build_cot_prompt(template, instruction, history, Some(e))?,
        None => build_prompt(template, instruction, history)?,
    })
}

/// Fuses language-model and affordance scores for every skill and picks one.
pub fn fuse(
    step_index: usize,
    prompt: String,
    skills: &SkillSet,
    logprobs: &[f64],
    affordances: &[f64],
    capped: &[bool],
) -> (DecisionRecord, bool) {
    let candidates: Vec<CandidateScore> = skills
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let llm_prob = logprobs[i].exp();
            let affordance_prob = affordances[i];
            CandidateScore {
                skill_id: s.id.clone(),
                label: s.label.clone(),
                llm_logprob: logprobs[i],
                llm_prob,
                affordance_prob,
                combined: llm_prob * affordance_prob,
                capped: capped[i],
            }
        })
        .collect();
    let sel = select(&candidates, &skills.terminate().id);
    let chosen = &candidates[sel.index];
    let record = DecisionRecord {
        step_index,
        prompt_snapshot: prompt,
        chosen_skill_id: chosen.skill_id.clone(),
        chosen_label: chosen.label.clone(),
        tie_broken: sel.tie_broken,
        source: DecisionSource::Scored,
        candidates,
    };
    (record, sel.no_feasible)
}

/// One scoring step. The boolean is true when no candidate had positive
/// combined score and terminate was chosen by default.
#[allow(clippy::too_many_arguments)]
pub fn plan_step(
    step_index: usize,
    state: &WorldState,
    instruction: &Instruction,
    history: &[SkillLabel],
    explanation: Option<&str>,
    skills: &SkillSet,
    deps: &PlannerDeps<'_>,
    cfg: &PlannerConfig,
    rng: &mut dyn RngCore,
) -> Result<(DecisionRecord, bool), PlanError> {
    let prompt = render_prompt(deps.template, instruction, history, explanation)?;
    let request = ScoreRequest::new(prompt, skills.labels())?;
    let response = score_candidates(deps.scorer, &request)?;
    let source: &dyn AffordanceSource = if cfg.mode == PlannerMode::NoVf {
        &UnitAffordances
    } else {
        deps.affordances
    };
    let estimates = source.estimate(step_index, state, skills, rng)?;
    if estimates.len() != skills.len() {
        return Err(PlanError::AffordanceShape {
            got: estimates.len(),
            want: skills.len(),
        });
    }
    let probs: Vec<f64> = estimates.iter().map(|e| e.probability).collect();
    let capped: Vec<bool> = estimates.iter().map(|e| e.capped).collect();
    Ok(fuse(step_index, request.prompt, skills, &response.logprobs, &probs, &capped))
}

/// Rescores a logged record's prompt and re-fuses with its stored
/// affordances.
pub fn replay_record(record: &DecisionRecord, skills: &SkillSet, scorer: &dyn Scorer) -> Result<DecisionRecord, PlanError> {
    let request = ScoreRequest::new(record.prompt_snapshot.clone(), skills.labels())?;
    let response = score_candidates(scorer, &request)?;
    let by_id = |s: &SkillId| record.candidates.iter().find(|c| &c.skill_id == s);
    let affs: Vec<f64> = skills
        .iter()
        .map(|s| by_id(&s.id).map(|c| c.affordance_prob).unwrap_or(0.0))
        .collect();
    let capped: Vec<bool> = skills
        .iter()
        .map(|s| by_id(&s.id).is_some_and(|c| c.capped))
        .collect();
    Ok(fuse(record.step_index, request.prompt, skills, &response.logprobs, &affs, &capped).0)
}

/// Result of one planning episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub trace: PlanTrace,
    pub outcomes: Vec<StepOutcome>,
    pub final_state: WorldState,
}

struct Runner<'a, 'r> {
    state: WorldState,
    env: Option<&'a Scenario>,
    rng: &'r mut dyn RngCore,
    outcomes: Vec<StepOutcome>,
    skills: &'a SkillSet,
}

impl Runner<'_, '_> {
    fn act(&mut self, label: &SkillLabel) {
        if let Some(env) = self.env {
            let skill = self.skills.by_label(label.as_str()).expect("label from skill set");
            let out = execute(&self.state, skill, self.rng, env);
            self.state = out.state_after.clone();
            self.outcomes.push(out);
        }
    }
}

/// Plans (and, when `env` is given, executes) one instruction starting from
/// `start`. Execution is open to failure: the post-execution state feeds
/// the next step whether or not the skill succeeded.
#[allow(clippy::too_many_arguments)]
pub fn run(
    instruction: &Instruction,
    skills: &SkillSet,
    start: &WorldState,
    env: Option<&Scenario>,
    deps: &PlannerDeps<'_>,
    cfg: &PlannerConfig,
    rng: &mut dyn RngCore,
) -> Result<RunOutput, PlanError> {
    cfg.validate()?;
    let mut runner = Runner {
        state: start.clone(),
        env,
        rng,
        outcomes: Vec::new(),
        skills,
    };
    let trace = match cfg.mode {
        PlannerMode::Saycan | PlannerMode::NoVf => scored_loop(instruction, None, &mut runner, deps, cfg)?,
        PlannerMode::Cot => cot_loop(instruction, &mut runner, deps, cfg)?,
        PlannerMode::Generative => generative(instruction, &mut runner, deps, cfg)?,
        PlannerMode::BcUse => bc_use(instruction, &mut runner, deps, cfg),
        PlannerMode::BcNl => bc_nl(instruction, &mut runner),
    };
    Ok(RunOutput {
        trace,
        outcomes: runner.outcomes,
        final_state: runner.state,
    })
}

fn scored_loop(
    instruction: &Instruction,
    explanation: Option<&str>,
    runner: &mut Runner<'_, '_>,
    deps: &PlannerDeps<'_>,
    cfg: &PlannerConfig,
) -> Result<PlanTrace, PlanError> {
    let mut records = Vec::new();
    let mut labels: Vec<SkillLabel> = Vec::new();
    let mut termination = Termination::MaxSteps;
    while labels.len() < cfg.max_steps {
        let (record, no_feasible) = plan_step(
            records.len(),
            &runner.state,
            instruction,
            &labels,
            explanation,
            runner.skills,
            deps,
            cfg,
            runner.rng,
        )?;
        let label = record.chosen_label.clone();
        records.push(record);
        if no_feasible {
            termination = Termination::NoFeasible;
            break;
        }
        if label.is_done() {
            termination = Termination::DoneToken;
            break;
        }
        runner.act(&label);
        labels.push(label);
    }
    Ok(PlanTrace {
        instruction: instruction.clone(),
        records,
        labels,
        termination,
        explanation: explanation.map(str::to_owned),
        notes: Vec::new(),
    })
}

fn cot_loop(
    instruction: &Instruction,
    runner: &mut Runner<'_, '_>,
    deps: &PlannerDeps<'_>,
    cfg: &PlannerConfig,
) -> Result<PlanTrace, PlanError> {
    let prompt = build_cot_prompt(deps.template, instruction, &[], None)?;
    match deps.scorer.generate(&prompt, cfg.max_tokens) {
        Ok(text) => {
            let text = text.trim();
            let explanation = (!text.is_empty()).then_some(text);
            scored_loop(instruction, explanation, runner, deps, cfg)
        }
        Err(e) => {
            let mut trace = scored_loop(instruction, None, runner, deps, cfg)?;
            trace
                .notes
                .push(format!("explanation generation failed ({e}); planned without one"));
            Ok(trace)
        }
    }
}

/// Splits "1. a, 2. b, 3. done" (leading number optional) into steps.
pub fn parse_numbered_steps(text: &str) -> Vec<String> {
    let line = text.lines().next().unwrap_or("");
    let sep = Regex::new(r"(?:^|,)\s*\d+\.\s*").expect("static regex");
    sep.split(line.trim())
        .map(|s| s.trim().trim_end_matches('.').trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

fn generative(
    instruction: &Instruction,
    runner: &mut Runner<'_, '_>,
    deps: &PlannerDeps<'_>,
    cfg: &PlannerConfig,
) -> Result<PlanTrace, PlanError> {
    let prompt = build_prompt(deps.template, instruction, &[])?;
    let text = deps.scorer.generate(&prompt, cfg.max_tokens)?;
    let steps = parse_numbered_steps(&text);
    let label_strings: Vec<String> = runner.skills.labels().iter().map(|l| l.to_string()).collect();
    let embedded: Vec<EmbeddingVector> = label_strings.iter().map(|l| deps.embedder.embed(l)).collect();

    let mut records = Vec::new();
    let mut labels = Vec::new();
    let mut termination = if steps.is_empty() {
        Termination::NoFeasible
    } else {
        Termination::EndOfPlan
    };
    for step in steps {
        if labels.len() >= cfg.max_steps {
            termination = Termination::MaxSteps;
            break;
        }
        let (idx, cosine) = if step == DONE {
            let i = label_strings.iter().position(|l| l == DONE).expect("terminate present");
            (i, 1.0)
        } else {
            nearest(&deps.embedder.embed(&step), &label_strings, &embedded).expect("skill set non-empty")
        };
        let skill = &runner.skills.skills()[idx];
        records.push(DecisionRecord {
            step_index: records.len(),
            prompt_snapshot: prompt.clone(),
            candidates: Vec::new(),
            chosen_skill_id: skill.id.clone(),
            chosen_label: skill.label.clone(),
            tie_broken: false,
            source: DecisionSource::Projected { text: step, cosine },
        });
        if skill.label.is_done() {
            termination = Termination::DoneToken;
            break;
        }
        let label = skill.label.clone();
        runner.act(&label);
        labels.push(label);
    }
    Ok(PlanTrace {
        instruction: instruction.clone(),
        records,
        labels,
        termination,
        explanation: None,
        notes: vec![format!("generated plan: {}", text.trim())],
    })
}

/// All label sequences of length 1..=`max_len` over the non-terminate
/// skills, with their rendered text. Length-1 sequences render as the bare
/// label; longer ones as "1. a, 2. b".
pub fn bc_use_sequences(skills: &SkillSet, max_len: usize) -> Vec<(Vec<usize>, String)> {
    let base: Vec<usize> = skills
        .iter()
        .enumerate()
        .filter(|(_, s)| !s.label.is_done())
        .map(|(i, _)| i)
        .collect();
    let mut out = Vec::new();
    let mut frontier: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::with_capacity(frontier.len() * base.len());
        for prefix in &frontier {
            for &i in &base {
                let mut seq = prefix.clone();
                seq.push(i);
                next.push(seq);
            }
        }
        for seq in &next {
            let text = if seq.len() == 1 {
                skills.skills()[seq[0]].label.to_string()
            } else {
                seq.iter()
                    .enumerate()
                    .map(|(n, &i)| format!("{}. {}", n + 1, skills.skills()[i].label))
                    .collect::<Vec<_>>()
                    .join(", ")
            };
            out.push((seq.clone(), text));
        }
        frontier = next;
    }
    out
}

fn bc_use(
    instruction: &Instruction,
    runner: &mut Runner<'_, '_>,
    deps: &PlannerDeps<'_>,
    cfg: &PlannerConfig,
) -> PlanTrace {
    let seqs = bc_use_sequences(runner.skills, cfg.bc_use_max_len);
    let texts: Vec<&str> = seqs.iter().map(|(_, t)| t.as_str()).collect();
    let embedded: Vec<EmbeddingVector> = texts.iter().map(|t| deps.embedder.embed(t)).collect();
    let query = deps.embedder.embed(&instruction.text);
    let mut trace = PlanTrace {
        instruction: instruction.clone(),
        records: Vec::new(),
        labels: Vec::new(),
        termination: Termination::EndOfPlan,
        explanation: None,
        notes: Vec::new(),
    };
    let Some((best, cosine)) = nearest(&query, &texts, &embedded) else {
        trace.termination = Termination::NoFeasible;
        return trace;
    };
    let (seq, text) = &seqs[best];
    for &i in seq.iter().take(cfg.max_steps) {
        let skill = &runner.skills.skills()[i];
        trace.records.push(DecisionRecord {
            step_index: trace.records.len(),
            prompt_snapshot: instruction.text.clone(),
            candidates: Vec::new(),
            chosen_skill_id: skill.id.clone(),
            chosen_label: skill.label.clone(),
            tie_broken: false,
            source: DecisionSource::Projected {
                text: text.clone(),
                cosine,
            },
        });
        runner.act(&skill.label);
        trace.labels.push(skill.label.clone());
    }
    if seq.len() > cfg.max_steps {
        trace.termination = Termination::MaxSteps;
    }
    trace
}

fn bc_nl(instruction: &Instruction, runner: &mut Runner<'_, '_>) -> PlanTrace {
    let text = instruction.text.clone();
    let (id, label) = match skill_for_text(runner.skills, &text) {
        Some(s) => (s.id.clone(), s.label.clone()),
        None => (
            SkillId("unknown".into()),
            SkillLabel::new(text.clone()).expect("instruction is non-empty"),
        ),
    };
    if let Some(env) = runner.env {
        let out = execute_text(&runner.state, &text, runner.rng, env);
        runner.state = out.state_after.clone();
        runner.outcomes.push(out);
    }
    PlanTrace {
        instruction: instruction.clone(),
        records: vec![DecisionRecord {
            step_index: 0,
            prompt_snapshot: text.clone(),
            candidates: Vec::new(),
            chosen_skill_id: id,
            chosen_label: label.clone(),
            tie_broken: false,
            source: DecisionSource::Direct { text },
        }],
        labels: vec![label],
        termination: Termination::EndOfPlan,
        explanation: None,
        notes: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affordance::{ScheduledAffordances, SimulatedAffordances};
    use crate::domain::{Skill, SkillFamily};
    use crate::scoring::{
        CannedCompletion, CompletionKind, ScorerTable, TableRule, TableScorer, UniformScorer,
    };
    use crate::simenv::reset;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    fn mini() -> Scenario {
        Scenario::from_json(
            r#"{
            "id": "mini", "kind": "kitchen",
            "start_location": "start", "user_location": "user",
            "locations": [
                {"name": "start", "coords": [0, 0], "navigable": false},
                {"name": "table", "coords": [3, 4]},
                {"name": "counter", "coords": [6, 8]},
                {"name": "user", "coords": [0, 2]}
            ],
            "objects": [
                {"name": "apple", "at": "table"},
                {"name": "coke can", "at": "counter"},
                {"name": "sponge", "at": "table"}
            ],
            "skill_families": ["find", "pick", "place", "go_to"],
            "label_overrides": {"go_to_user": "bring it to you"}
        }"#,
        )
        .unwrap()
    }

    fn labels(ls: &[&str]) -> Vec<SkillLabel> {
        ls.iter().map(|l| SkillLabel::new(*l).unwrap()).collect()
    }

    fn instr(t: &str) -> Instruction {
        Instruction::new(t).unwrap()
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(3)
    }

    fn template() -> PromptTemplate {
        PromptTemplate {
            examples: vec![crate::prompting::PromptExample {
                query: "throw away the apple".into(),
                steps: vec!["find an apple".into(), "pick up the apple".into(), "go to the trash".into()],
                explanation: Some("the apple goes in the trash".into()),
            }],
            cot_enabled: true,
            ..PromptTemplate::default()
        }
    }

    fn run_with(
        scorer: &dyn Scorer,
        aff: &dyn AffordanceSource,
        mode: PlannerMode,
        text: &str,
        env: bool,
    ) -> RunOutput {
        let s = mini();
        let t = template();
        let e = Embedder::default();
        let deps = PlannerDeps {
            scorer,
            template: &t,
            affordances: aff,
            embedder: &e,
        };
        let cfg = PlannerConfig::default().with_mode(mode);
        run(&instr(text), &s.skills, &reset(&s), env.then_some(&s), &deps, &cfg, &mut rng()).unwrap()
    }

    const BRING_COKE: &str = "How would you bring me a coke can?";

    fn coke_plan() -> Vec<SkillLabel> {
        labels(&["find a coke can", "pick up the coke can", "bring it to you"])
    }

    #[test]
    fn oracle_scorer_recovers_plan_with_execution() {
        let plan = coke_plan();
        let scorer = TableScorer::new(ScorerTable::oracle([(BRING_COKE, plan.as_slice())])).unwrap();
        let sim = SimulatedAffordances::default();
        let out = run_with(&scorer, &sim, PlannerMode::Saycan, BRING_COKE, true);
        assert_eq!(out.trace.labels, plan);
        assert_eq!(out.trace.termination, Termination::DoneToken);
        assert_eq!(out.final_state.object_placement["coke_can"], "gripper");
        assert_eq!(out.final_state.robot_location, "user");
        assert!(out.outcomes.iter().all(|o| o.success));
        for r in &out.trace.records {
            for c in &r.candidates {
                assert_eq!(c.combined, c.llm_prob * c.affordance_prob);
            }
        }
    }

    #[test]
    fn never_done_hits_max_steps() {
        let table = ScorerTable {
            rules: vec![TableRule {
                instruction: String::new(),
                exact: false,
                history_suffix: vec![],
                history_len: None,
                explanation: None,
                distribution: BTreeMap::from([("find an apple".into(), 1.0)]),
            }],
            ..ScorerTable::default()
        };
        let scorer = TableScorer::new(table).unwrap();
        let out = run_with(&scorer, &UnitAffordances, PlannerMode::NoVf, "anything", false);
        assert_eq!(out.trace.termination, Termination::MaxSteps);
        assert_eq!(out.trace.labels.len(), 20);
    }

    #[test]
    fn uniform_scorer_follows_the_single_feasible_skill() {
        let s = mini();
        let only = s.skills.by_label("find a sponge").unwrap().id.clone();
        let mut step = BTreeMap::from([(only.clone(), 1.0)]);
        step.insert(s.skills.terminate().id.clone(), 0.1);
        let aff = ScheduledAffordances {
            steps: vec![step],
            after: BTreeMap::new(),
        };
        let t = template();
        let e = Embedder::default();
        let deps = PlannerDeps {
            scorer: &UniformScorer,
            template: &t,
            affordances: &aff,
            embedder: &e,
        };
        let (rec, nf) = plan_step(0, &reset(&s), &instr("x"), &[], None, &s.skills, &deps, &PlannerConfig::default(), &mut rng()).unwrap();
        assert!(!nf);
        assert_eq!(rec.chosen_skill_id, only);
    }

    #[test]
    fn all_zero_scores_terminate_with_no_feasible() {
        let aff = ScheduledAffordances {
            steps: vec![],
            after: BTreeMap::new(),
        };
        let out = run_with(&UniformScorer, &aff, PlannerMode::Saycan, "x", false);
        assert_eq!(out.trace.termination, Termination::NoFeasible);
        assert!(out.trace.labels.is_empty());
        assert_eq!(out.trace.records.len(), 1);
        assert!(out.trace.records[0].chosen_label.is_done());
    }

    #[test]
    fn ties_break_on_smallest_id() {
        let mut step = BTreeMap::new();
        for id in ["pick_apple", "find_apple", "go_to_table"] {
            step.insert(SkillId(id.into()), 1.0);
        }
        let aff = ScheduledAffordances {
            steps: vec![step],
            after: BTreeMap::new(),
        };
        let out = run_with(&UniformScorer, &aff, PlannerMode::Saycan, "x", false);
        let first = &out.trace.records[0];
        assert_eq!(first.chosen_skill_id.as_str(), "find_apple");
        assert!(first.tie_broken);
    }

    #[test]
    fn no_vf_matches_saycan_when_all_affordances_are_one() {
        let plan = coke_plan();
        let scorer = TableScorer::new(ScorerTable::oracle([(BRING_COKE, plan.as_slice())])).unwrap();
        let a = run_with(&scorer, &UnitAffordances, PlannerMode::Saycan, BRING_COKE, false);
        let b = run_with(&scorer, &UnitAffordances, PlannerMode::NoVf, BRING_COKE, false);
        assert_eq!(a.trace, b.trace);
    }

    #[test]
    fn replay_reproduces_records() {
        let plan = coke_plan();
        let scorer = TableScorer::new(ScorerTable::oracle([(BRING_COKE, plan.as_slice())])).unwrap();
        let out = run_with(&scorer, &SimulatedAffordances::default(), PlannerMode::Saycan, BRING_COKE, true);
        let skills = mini().skills;
        for r in &out.trace.records {
            assert_eq!(&replay_record(r, &skills, &scorer).unwrap(), r);
        }
    }

    #[test]
    fn numbered_steps_parse() {
        assert_eq!(
            parse_numbered_steps("1. find an apple, 2. pick up the apple, 3. done."),
            vec!["find an apple", "pick up the apple", "done"]
        );
        assert_eq!(parse_numbered_steps(" find an apple, 2. done"), vec!["find an apple", "done"]);
        assert!(parse_numbered_steps("").is_empty());
    }

    fn generating(text: &str) -> TableScorer {
        TableScorer::new(ScorerTable {
            generations: vec![CannedCompletion {
                instruction: String::new(),
                exact: false,
                kind: CompletionKind::Plan,
                text: text.into(),
            }],
            ..ScorerTable::default()
        })
        .unwrap()
    }

    #[test]
    fn generative_identity_projection() {
        let scorer = generating("1. find an apple, 2. pick up the apple, 3. done");
        let out = run_with(&scorer, &UnitAffordances, PlannerMode::Generative, "bring me an apple", false);
        assert_eq!(out.trace.labels, labels(&["find an apple", "pick up the apple"]));
        assert_eq!(out.trace.termination, Termination::DoneToken);
    }

    #[test]
    fn generative_projects_paraphrase() {
        let scorer = generating("1. grab the apple, 2. done");
        let out = run_with(&scorer, &UnitAffordances, PlannerMode::Generative, "x", false);
        assert_eq!(out.trace.labels, labels(&["pick up the apple"]));
    }

    #[test]
    fn generative_without_generation_errors_and_empty_plan_is_no_feasible() {
        let t = template();
        let e = Embedder::default();
        let deps = PlannerDeps {
            scorer: &UniformScorer,
            template: &t,
            affordances: &UnitAffordances,
            embedder: &e,
        };
        let s = mini();
        let cfg = PlannerConfig::default().with_mode(PlannerMode::Generative);
        assert!(run(&instr("x"), &s.skills, &reset(&s), None, &deps, &cfg, &mut rng()).is_err());
        let out = run_with(&generating("   "), &UnitAffordances, PlannerMode::Generative, "x", false);
        assert_eq!(out.trace.termination, Termination::NoFeasible);
    }

    #[test]
    fn bc_use_counts_and_identity() {
        let s = mini();
        let n = s.skills.len() - 1;
        assert_eq!(bc_use_sequences(&s.skills, 2).len(), n + n * n);
        let out = run_with(&UniformScorer, &UnitAffordances, PlannerMode::BcUse, "pick up the coke can", false);
        assert_eq!(out.trace.labels, labels(&["pick up the coke can"]));
        let out = run_with(&UniformScorer, &UnitAffordances, PlannerMode::BcUse, "pick up the coke can please", false);
        assert_eq!(out.trace.labels, labels(&["pick up the coke can"]));
    }

    #[test]
    fn bc_nl_executes_raw_instruction() {
        let out = run_with(&UniformScorer, &UnitAffordances, PlannerMode::BcNl, "bring me an apple", true);
        assert_eq!(out.outcomes.len(), 1);
        assert!(!out.outcomes[0].success);
        let out = run_with(&UniformScorer, &UnitAffordances, PlannerMode::BcNl, "find an apple", true);
        assert!(out.outcomes[0].success);
    }

    fn cot_scorer(explanation: &str) -> TableScorer {
        let snack = "bring me a snack that isn't an apple";
        let mut table = ScorerTable::default();
        // With the explanation the scorer avoids the apple; without it the
        // apple wins.
        table.rules.push(TableRule {
            instruction: snack.into(),
            exact: true,
            history_suffix: vec![],
            history_len: Some(0),
            explanation: Some("not an apple".into()),
            distribution: BTreeMap::from([("find a sponge".into(), 0.6), ("find an apple".into(), 0.3)]),
        });
        table.rules.push(TableRule {
            instruction: snack.into(),
            exact: true,
            history_suffix: vec![],
            history_len: Some(0),
            explanation: None,
            distribution: BTreeMap::from([("find an apple".into(), 0.6), ("find a sponge".into(), 0.3)]),
        });
        table.rules.push(TableRule {
            instruction: snack.into(),
            exact: true,
            history_suffix: vec![],
            history_len: Some(1),
            explanation: None,
            distribution: BTreeMap::from([(DONE.into(), 1.0)]),
        });
        table.generations.push(CannedCompletion {
            instruction: snack.into(),
            exact: true,
            kind: CompletionKind::Explanation,
            text: explanation.into(),
        });
        TableScorer::new(table).unwrap()
    }

    #[test]
    fn cot_explanation_steers_scoring() {
        let snack = "bring me a snack that isn't an apple";
        let scorer = cot_scorer("The user wants a snack that is not an apple.");
        let out = run_with(&scorer, &UnitAffordances, PlannerMode::Cot, snack, false);
        assert_eq!(out.trace.labels, labels(&["find a sponge"]));
        for r in &out.trace.records {
            assert!(r.prompt_snapshot.contains("The user wants a snack that is not an apple."));
        }
        let plain = run_with(&scorer, &UnitAffordances, PlannerMode::Saycan, snack, false);
        assert_eq!(plain.trace.labels, labels(&["find an apple"]));
    }

    #[test]
    fn cot_with_empty_explanation_equals_saycan() {
        let snack = "bring me a snack that isn't an apple";
        let scorer = cot_scorer("");
        let a = run_with(&scorer, &UnitAffordances, PlannerMode::Cot, snack, false);
        let b = run_with(&scorer, &UnitAffordances, PlannerMode::Saycan, snack, false);
        assert_eq!(a.trace, b.trace);
    }

    #[test]
    fn cot_generation_failure_falls_back() {
        let out = run_with(&UniformScorer, &UnitAffordances, PlannerMode::Cot, "x", false);
        assert_eq!(out.trace.notes.len(), 1);
        assert!(out.trace.explanation.is_none());
    }

    #[test]
    fn modes_parse() {
        for m in PlannerMode::ALL {
            assert_eq!(m.as_str().parse::<PlannerMode>().unwrap(), m);
        }
        assert_eq!("no_vf".parse::<PlannerMode>().unwrap(), PlannerMode::NoVf);
        assert!("gpt".parse::<PlannerMode>().is_err());
        assert!(PlannerConfig { max_steps: 0, ..PlannerConfig::default() }.validate().is_err());
    }

    fn skillset(n: usize) -> SkillSet {
        let mut v: Vec<Skill> = (0..n)
            .map(|i| Skill {
                id: SkillId(format!("s{i:02}")),
                label: SkillLabel::new(format!("skill {i}")).unwrap(),
                family: SkillFamily::GoTo,
                object_arg: None,
                location_arg: Some(format!("l{i}")),
            })
            .collect();
        v.push(Skill::terminate());
        SkillSet::new(v).unwrap()
    }

    proptest! {
        #[test]
        fn chosen_is_an_argmax(
            lps in proptest::collection::vec(-10.0f64..0.0, 6),
            affs in proptest::collection::vec(prop_oneof![Just(0.0), 0.0f64..1.0], 6),
        ) {
            let skills = skillset(5);
            let capped = vec![false; 6];
            let (rec, nf) = fuse(0, String::new(), &skills, &lps, &affs, &capped);
            let best = rec.candidates.iter().map(|c| c.combined).fold(0.0, f64::max);
            if nf {
                prop_assert!(rec.chosen_label.is_done());
                prop_assert_eq!(best, 0.0);
            } else {
                prop_assert_eq!(rec.chosen().unwrap().combined, best);
                prop_assert!(rec.chosen().unwrap().affordance_prob > 0.0);
            }
        }
    }
}
