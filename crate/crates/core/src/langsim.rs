//! Language-only simulator for prompt tuning.
//!
//! Cases are sampled from per-family instruction templates, each with a
//! known solution and a per-step affordance schedule consistent with it:
//! the next solution step and a few distractors are feasible, everything
//! else is not, and "done" sits at the terminate constant throughout.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::affordance::ScheduledAffordances;
use crate::domain::{
    GoalPredicate, Instruction, InstructionCase, InstructionFamily, PlanTrace, SkillFamily, SkillId,
    SkillLabel, Termination,
};
use crate::embedding::Embedder;
use crate::planner::{run, PlanError, PlannerConfig, PlannerDeps};
use crate::prompting::{truncate_examples, PromptError, PromptTemplate};
use crate::rng::stream;
use crate::scoring::{ScorerTable, TableScorer};
use crate::simenv::{reset, Scenario};

pub const DEFAULT_DISTRACTORS: usize = 3;
pub const DEFAULT_BATCH: usize = 50;

/// Prompt sizes swept by [`k_sweep`].
pub const SWEEP_K: [usize; 6] = [0, 1, 2, 4, 8, 17];

/// Published planning rates for the swept prompt sizes, as
/// (with termination, without termination) percentages. These come from a
/// much larger model and are carried for side-by-side reading only.
pub const REFERENCE_RATES: [(usize, f64, f64); 6] = [
    (0, 10.0, 52.0),
    (1, 64.0, 74.0),
    (2, 68.0, 76.0),
    (4, 82.0, 84.0),
    (8, 80.0, 80.0),
    (17, 88.0, 88.0),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratedCase {
    pub case: InstructionCase,
    pub affordance_schedule: Vec<BTreeMap<SkillId, f64>>,
    pub distractor_skills: BTreeSet<SkillId>,
    /// Affordances once the solution is exhausted.
    pub after: BTreeMap<SkillId, f64>,
}

impl GeneratedCase {
    pub fn solution(&self) -> &[SkillLabel] {
        &self.case.acceptable_plans[0]
    }

    pub fn affordances(&self) -> ScheduledAffordances {
        ScheduledAffordances {
            steps: self.affordance_schedule.clone(),
            after: self.after.clone(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LangSimError {
    #[error("scenario lacks what the template needs: {0}")]
    Scenario(String),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

struct Names {
    object: String,
    article: String,
    location: String,
    second: String,
    second_article: String,
}

fn label(s: String) -> SkillLabel {
    SkillLabel::new(s).expect("templated labels are non-empty")
}

/// Instruction text and solution labels for one family.
fn template(family: InstructionFamily, n: &Names, rng: &mut dyn RngCore) -> (String, Vec<SkillLabel>) {
    let o = &n.object;
    let fetch = |o: &str, article: &str| {
        vec![
            label(format!("find {article} {o}")),
            label(format!("pick up the {o}")),
        ]
    };
    let restock = |o: &str, article: &str, l: &str| {
        let mut v = fetch(o, article);
        v.push(label(format!("go to the {l}")));
        v.push(label(format!("put down the {o}")));
        v
    };
    match family {
        InstructionFamily::NlSinglePrimitive => {
            let options: [(String, Vec<SkillLabel>); 3] = [
                (format!("Find {} {o}", n.article), vec![label(format!("find {} {o}", n.article))]),
                (format!("Go to the {}", n.location), vec![label(format!("go to the {}", n.location))]),
                (format!("Let go of the {o}"), vec![label(format!("put down the {o}"))]),
            ];
            options.choose(rng).expect("non-empty").clone()
        }
        InstructionFamily::NlNouns => {
            let mut v = fetch(o, &n.article);
            v.push(label("bring it to you".into()));
            v.push(label(format!("put down the {o}")));
            (format!("Bring me {} {o}", n.article), v)
        }
        InstructionFamily::NlVerbs => (
            format!("Restock the {o} on the {}", n.location),
            restock(o, &n.article, &n.location),
        ),
        InstructionFamily::StructuredLanguage => (
            format!("Move the {o} to the {}.", n.location),
            restock(o, &n.article, &n.location),
        ),
        InstructionFamily::Embodiment => (
            format!("You are holding the {o}, leave it on the {}", n.location),
            vec![
                label(format!("go to the {}", n.location)),
                label(format!("put down the {o}")),
            ],
        ),
        InstructionFamily::CrowdSourced => {
            let mut v = fetch(o, &n.article);
            v.push(label("go to the trash".into()));
            v.push(label(format!("put down the {o}")));
            (format!("Can you throw away the {o} for me?"), v)
        }
        InstructionFamily::LongHorizon => {
            let mut v = restock(o, &n.article, &n.location);
            v.extend(restock(&n.second, &n.second_article, &n.location));
            (
                format!("Put the {o} and the {} on the {}", n.second, n.location),
                v,
            )
        }
    }
}

/// The article the scenario's find label uses for `name`.
fn article_in(skills: &crate::domain::SkillSet, name: &str) -> String {
    let suffix = format!(" {name}");
    skills
        .iter()
        .filter(|s| s.family == SkillFamily::Find)
        .find_map(|s| s.label.as_str().strip_prefix("find ")?.strip_suffix(&suffix).map(str::to_owned))
        .unwrap_or_else(|| "a".into())
}

/// Samples one case of `family` over the scenario's objects and locations.
pub fn generate_case(
    rng: &mut dyn RngCore,
    family: InstructionFamily,
    scenario: &Scenario,
    distractors: usize,
    id: impl Into<String>,
) -> Result<GeneratedCase, LangSimError> {
    let skills = &scenario.skills;
    let objects: Vec<&str> = scenario
        .objects
        .iter()
        .filter(|o| skills.iter().any(|s| s.family == SkillFamily::Pick && s.object_arg.as_deref() == Some(o.id.as_str())))
        .map(|o| o.name.as_str())
        .collect();
    let places: Vec<&str> = scenario
        .locations
        .iter()
        .filter(|l| l.navigable && Some(&l.id) != scenario.user_location.as_ref() && l.id != "trash")
        .map(|l| l.name.as_str())
        .collect();
    if objects.len() < 2 || places.is_empty() {
        return Err(LangSimError::Scenario("needs two objects and a destination".into()));
    }
    let mut pair: Vec<&str> = objects.choose_multiple(rng, 2).copied().collect();
    pair.shuffle(rng);
    let names = Names {
        object: pair[0].to_string(),
        article: article_in(skills, pair[0]),
        location: places.choose(rng).expect("non-empty").to_string(),
        second: pair[1].to_string(),
        second_article: article_in(skills, pair[1]),
    };
    let (text, solution) = template(family, &names, rng);

    let mut ids = Vec::with_capacity(solution.len());
    for l in &solution {
        let skill = skills
            .by_label(l.as_str())
            .ok_or_else(|| LangSimError::Scenario(format!("missing skill {l:?}")))?;
        ids.push(skill.id.clone());
    }
    let terminate = skills.terminate().id.clone();
    let mut pool: Vec<&SkillId> = skills
        .iter()
        .map(|s| &s.id)
        .filter(|id| **id != terminate && !ids.contains(id))
        .collect();
    pool.sort();
    let distractor_skills: BTreeSet<SkillId> = pool
        .choose_multiple(rng, distractors.min(pool.len()))
        .map(|id| (*id).clone())
        .collect();

    let mut after: BTreeMap<SkillId, f64> = distractor_skills.iter().map(|d| (d.clone(), 1.0)).collect();
    after.insert(terminate, scenario.calibration.terminate_prob);
    let affordance_schedule = ids
        .iter()
        .map(|truth| {
            let mut step = after.clone();
            step.insert(truth.clone(), 1.0);
            step
        })
        .collect();

    Ok(GeneratedCase {
        case: InstructionCase {
            id: id.into(),
            instruction: Instruction::new(text).expect("templated text is non-empty"),
            family,
            acceptable_plans: vec![solution],
            goal: GoalPredicate::True,
            scenario: scenario.id.clone(),
            setup: Vec::new(),
        },
        affordance_schedule,
        distractor_skills,
        after,
    })
}

/// `n` cases cycling through the families, case `i` drawn from its own
/// stream of `seed`.
pub fn generate_batch(
    seed: u64,
    n: usize,
    scenario: &Scenario,
    distractors: usize,
) -> Result<Vec<GeneratedCase>, LangSimError> {
    (0..n)
        .map(|i| {
            let family = InstructionFamily::ALL[i % InstructionFamily::ALL.len()];
            let mut rng = stream(seed, i as u64);
            generate_case(&mut rng, family, scenario, distractors, format!("langsim-{i:03}"))
        })
        .collect()
}

/// Scorer with probability 1 on each next solution step, then "done".
pub fn oracle_table(cases: &[GeneratedCase]) -> ScorerTable {
    ScorerTable::oracle(
        cases
            .iter()
            .map(|c| (c.case.instruction.text.as_str(), c.solution())),
    )
}

/// Whether `trace` counts as a successful plan for `case`. With
/// `require_termination` the labels must equal an acceptable plan and the
/// trace must end on "done"; without it, producing an acceptable plan as a
/// prefix is enough.
pub fn plan_ok(trace: &PlanTrace, case: &InstructionCase, require_termination: bool) -> bool {
    if require_termination {
        trace.termination == Termination::DoneToken && case.acceptable_plans.contains(&trace.labels)
    } else {
        case.acceptable_plans
            .iter()
            .any(|p| trace.labels.starts_with(p))
    }
}

/// Fraction of cases `planner` solves.
pub fn evaluate_planner<F>(planner: F, cases: &[GeneratedCase], require_termination: bool) -> f64
where
    F: Fn(&GeneratedCase) -> Option<PlanTrace> + Sync,
{
    if cases.is_empty() {
        return f64::NAN;
    }
    let hits = cases
        .par_iter()
        .map(|c| planner(c).is_some_and(|t| plan_ok(&t, &c.case, require_termination)))
        .filter(|ok| *ok)
        .count();
    hits as f64 / cases.len() as f64
}

/// Plans `case` against its affordance schedule without executing.
pub fn plan_case(
    case: &GeneratedCase,
    scenario: &Scenario,
    scorer: &dyn crate::scoring::Scorer,
    template: &PromptTemplate,
    cfg: &PlannerConfig,
) -> Result<PlanTrace, PlanError> {
    let aff = case.affordances();
    let embedder = Embedder::default();
    let deps = PlannerDeps {
        scorer,
        template,
        affordances: &aff,
        embedder: &embedder,
    };
    let mut rng = stream(0, 0);
    Ok(run(&case.case.instruction, &scenario.skills, &reset(scenario), None, &deps, cfg, &mut rng)?.trace)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub with_termination: f64,
    pub without_termination: f64,
    pub reference_with: Option<f64>,
    pub reference_without: Option<f64>,
}

/// Plan rate for each prompt size in `ks`, truncating `template` to its
/// first `k` examples.
pub fn k_sweep(
    cases: &[GeneratedCase],
    scenario: &Scenario,
    scorer: &dyn crate::scoring::Scorer,
    template: &PromptTemplate,
    ks: &[usize],
    cfg: &PlannerConfig,
) -> Result<Vec<SweepRow>, LangSimError> {
    ks.iter()
        .map(|&k| {
            let t = truncate_examples(template, k)?;
            let traces: Vec<Option<PlanTrace>> = cases
                .par_iter()
                .map(|c| plan_case(c, scenario, scorer, &t, cfg).ok())
                .collect();
            let rate = |req: bool| {
                let hits = cases
                    .iter()
                    .zip(&traces)
                    .filter(|(c, t)| t.as_ref().is_some_and(|t| plan_ok(t, &c.case, req)))
                    .count();
                if cases.is_empty() {
                    f64::NAN
                } else {
                    hits as f64 / cases.len() as f64
                }
            };
            let reference = REFERENCE_RATES.iter().find(|r| r.0 == k);
            Ok(SweepRow {
                k,
                with_termination: rate(true),
                without_termination: rate(false),
                reference_with: reference.map(|r| r.1 / 100.0),
                reference_without: reference.map(|r| r.2 / 100.0),
            })
        })
        .collect()
}

fn fmt_rate(r: f64) -> String {
    if r.is_nan() {
        "n/a".into()
    } else {
        format!("{r:.4}")
    }
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "format_version",
        "k",
        "plan_rate_with_termination",
        "plan_rate_without_termination",
        "reference_with_termination",
        "reference_without_termination",
    ])
    .expect("in-memory write");
    for r in rows {
        let opt = |v: Option<f64>| v.map(fmt_rate).unwrap_or_default();
        w.write_record([
            "1".to_string(),
            r.k.to_string(),
            fmt_rate(r.with_termination),
            fmt_rate(r.without_termination),
            opt(r.reference_with),
            opt(r.reference_without),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

/// The oracle scorer for a batch, wrapped.
pub fn oracle_scorer(cases: &[GeneratedCase]) -> TableScorer {
    TableScorer::new(oracle_table(cases)).expect("oracle tables are valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::DONE;
    use crate::scoring::UniformScorer;

    fn scenario() -> Scenario {
        Scenario::from_json(include_str!("../assets/kitchen.json")).unwrap()
    }

    #[test]
    fn schedules_are_consistent_with_solutions() {
        let s = scenario();
        for gc in generate_batch(11, 70, &s, DEFAULT_DISTRACTORS).unwrap() {
            assert_eq!(gc.affordance_schedule.len(), gc.solution().len());
            for (t, l) in gc.solution().iter().enumerate() {
                let id = &s.skills.by_label(l.as_str()).unwrap().id;
                assert!(gc.affordance_schedule[t][id] >= 1.0);
            }
            assert_eq!(gc.distractor_skills.len(), DEFAULT_DISTRACTORS);
            for d in &gc.distractor_skills {
                assert!(!gc.solution().iter().any(|l| s.skills.by_label(l.as_str()).unwrap().id == *d));
            }
        }
    }

    #[test]
    fn verbs_and_structured_mirror_each_other() {
        let s = scenario();
        let a = generate_case(&mut stream(5, 0), InstructionFamily::NlVerbs, &s, 3, "a").unwrap();
        let b = generate_case(&mut stream(5, 0), InstructionFamily::StructuredLanguage, &s, 3, "b").unwrap();
        assert_eq!(a.case.acceptable_plans, b.case.acceptable_plans);
        let sol = a.solution();
        let obj = sol[1].as_str().strip_prefix("pick up the ").unwrap();
        let loc = sol[2].as_str().strip_prefix("go to the ").unwrap();
        assert_eq!(a.case.instruction.text, format!("Restock the {obj} on the {loc}"));
        assert_eq!(b.case.instruction.text, format!("Move the {obj} to the {loc}."));
    }

    #[test]
    fn zero_distractors_only_solution_and_terminate() {
        let s = scenario();
        let gc = generate_case(&mut stream(1, 1), InstructionFamily::LongHorizon, &s, 0, "x").unwrap();
        let term = &s.skills.terminate().id;
        for step in &gc.affordance_schedule {
            for (id, p) in step {
                if *p > 0.0 && id != term {
                    let label = &s.skills.by_id(id).unwrap().label;
                    assert!(gc.solution().contains(label));
                }
            }
        }
    }

    #[test]
    fn oracle_recovers_every_case() {
        let s = scenario();
        let cases = generate_batch(2, 21, &s, DEFAULT_DISTRACTORS).unwrap();
        let scorer = oracle_scorer(&cases);
        let t = PromptTemplate::default();
        let cfg = PlannerConfig::default();
        let f = |c: &GeneratedCase| plan_case(c, &s, &scorer, &t, &cfg).ok();
        assert_eq!(evaluate_planner(f, &cases, true), 1.0);
        assert_eq!(evaluate_planner(f, &cases, false), 1.0);
    }

    #[test]
    fn scorer_without_done_fails_only_with_termination() {
        let s = scenario();
        let cases = generate_batch(3, 14, &s, DEFAULT_DISTRACTORS).unwrap();
        // The oracle table minus its "done" rules.
        let mut table = oracle_table(&cases);
        table.rules.retain(|r| !r.distribution.contains_key(DONE));
        let scorer = TableScorer::new(table).unwrap();
        let t = PromptTemplate::default();
        let cfg = PlannerConfig::default();
        let f = |c: &GeneratedCase| plan_case(c, &s, &scorer, &t, &cfg).ok();
        assert_eq!(evaluate_planner(f, &cases, true), 0.0);
        assert_eq!(evaluate_planner(f, &cases, false), 1.0);
    }

    #[test]
    fn sweep_has_one_row_per_k() {
        let s = scenario();
        let cases = generate_batch(4, 7, &s, DEFAULT_DISTRACTORS).unwrap();
        let t = PromptTemplate::from_json(include_str!("../assets/prompt_default.json")).unwrap();
        let rows = k_sweep(&cases, &s, &oracle_scorer(&cases), &t, &SWEEP_K, &PlannerConfig::default()).unwrap();
        assert_eq!(rows.len(), 6);
        assert!(rows.iter().all(|r| r.with_termination == 1.0));
        let csv = sweep_csv(&rows);
        assert_eq!(csv.lines().count(), 7);
        assert!(csv.lines().nth(1).unwrap().ends_with(",0.1000,0.5200"));

        let uni = k_sweep(&cases, &s, &UniformScorer, &t, &[0], &PlannerConfig::default()).unwrap();
        assert!(uni[0].with_termination < 1.0);
        assert!(k_sweep(&cases, &s, &UniformScorer, &t, &[99], &PlannerConfig::default()).is_err());
    }
}
