//! Suite evaluation: plan and execution success per instruction family,
//! ablation sweeps and report emission.
//!
//! A plan succeeds when its label sequence is one of the case's acceptable
//! plans. Execution succeeds when the case's goal predicate holds on the
//! final simulated state.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::affordance::SimulatedAffordances;
use crate::domain::{Episode, InstructionCase, InstructionFamily, PlanTrace};
use crate::embedding::Embedder;
use crate::planner::{run, PlannerConfig, PlannerDeps, PlannerMode};
use crate::prompting::{truncate_examples, PromptTemplate};
use crate::rng::{mix, stream};
use crate::scoring::Scorer;
use crate::simenv::{case_initial_state, check_goal, Scenario};

pub const REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum SuiteError {
    #[error("cannot read suite {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("suite parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("case {id:?}: {message}")]
    Case { id: String, message: String },
}

/// Parses a JSON array of cases. Blank input is an empty suite.
pub fn parse_suite(text: &str) -> Result<Vec<InstructionCase>, SuiteError> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let cases: Vec<InstructionCase> = serde_json::from_str(text).map_err(|e| SuiteError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    for c in &cases {
        let bad = |m: &str| SuiteError::Case {
            id: c.id.clone(),
            message: m.to_string(),
        };
        if c.instruction.text.trim().is_empty() {
            return Err(bad("empty instruction"));
        }
        if c.acceptable_plans.is_empty() {
            return Err(bad("no acceptable plans"));
        }
    }
    Ok(cases)
}

pub fn load_suite(path: &Path) -> Result<Vec<InstructionCase>, SuiteError> {
    let text = std::fs::read_to_string(path).map_err(|source| SuiteError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_suite(&text)
}

/// Checks every case against its scenario's skill set.
pub fn check_suite(cases: &[InstructionCase], registry: &BTreeMap<String, Scenario>) -> Result<(), SuiteError> {
    for c in cases {
        let scenario = registry.get(&c.scenario).ok_or_else(|| SuiteError::Case {
            id: c.id.clone(),
            message: format!("unknown scenario {:?}", c.scenario),
        })?;
        c.check(&scenario.skills).map_err(|e| SuiteError::Case {
            id: c.id.clone(),
            message: e.to_string(),
        })?;
        case_initial_state(scenario, c).map_err(|e| SuiteError::Case {
            id: c.id.clone(),
            message: e.to_string(),
        })?;
    }
    Ok(())
}

/// Order-sensitive membership of the trace's labels in the acceptable set.
pub fn rate_plan(trace: &PlanTrace, case: &InstructionCase) -> bool {
    case.acceptable_plans.contains(&trace.labels)
}

/// What a suite run needs besides the suite itself.
#[derive(Clone, Copy)]
pub struct EvalDeps<'a> {
    pub registry: &'a BTreeMap<String, Scenario>,
    pub scorer: &'a dyn Scorer,
    pub template: &'a PromptTemplate,
    pub embedder: &'a Embedder,
    /// Replaces every skill family's execution success probability.
    pub success_prob: Option<f64>,
}

fn scenario_for(deps: &EvalDeps<'_>, case: &InstructionCase) -> Result<Scenario, String> {
    let s = deps
        .registry
        .get(&case.scenario)
        .ok_or_else(|| format!("unknown scenario {:?}", case.scenario))?;
    Ok(match deps.success_prob {
        Some(p) => s.with_uniform_success(p),
        None => s.clone(),
    })
}

/// Plans and executes one case from its initial stage.
pub fn run_episode(
    case: &InstructionCase,
    deps: &EvalDeps<'_>,
    cfg: &PlannerConfig,
    seed: u64,
) -> Result<Episode, String> {
    let scenario = scenario_for(deps, case)?;
    let start = case_initial_state(&scenario, case).map_err(|e| e.to_string())?;
    let affordances = SimulatedAffordances {
        calibration: scenario.calibration,
    };
    let pdeps = PlannerDeps {
        scorer: deps.scorer,
        template: deps.template,
        affordances: &affordances,
        embedder: deps.embedder,
    };
    let mut rng = stream(seed, 0);
    let out = run(&case.instruction, &scenario.skills, &start, Some(&scenario), &pdeps, cfg, &mut rng)
        .map_err(|e| e.to_string())?;
    Ok(Episode {
        plan_success: rate_plan(&out.trace, case),
        execution_success: check_goal(&out.final_state, case),
        step_outcomes: out.outcomes.iter().map(|o| o.success).collect(),
        final_state: out.final_state,
        trace: out.trace,
        seed,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyRow {
    pub family: String,
    pub count: usize,
    /// `None` when the family has no cases.
    pub plan_rate: Option<f64>,
    pub execution_rate: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub id: String,
    pub family: InstructionFamily,
    pub runs: usize,
    pub plan_successes: usize,
    pub execution_successes: usize,
    /// Labels planned on the first repeat.
    pub labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub format_version: u32,
    pub mode: PlannerMode,
    pub k_examples: Option<usize>,
    pub seed: u64,
    pub repeats: usize,
    pub scorer: String,
    pub config_fingerprint: String,
    pub rows: Vec<FamilyRow>,
    pub total: FamilyRow,
    pub cases: Vec<CaseResult>,
}

fn rate(hits: usize, runs: usize) -> Option<f64> {
    (runs > 0).then(|| hits as f64 / runs as f64)
}

#[derive(Serialize)]
struct Fingerprint<'a> {
    format_version: u32,
    cfg: &'a PlannerConfig,
    k_examples: Option<usize>,
    scorer: &'a str,
    template: &'a PromptTemplate,
    suite: &'a [InstructionCase],
    success_prob: Option<f64>,
    embedder: crate::embedding::EmbedderConfig,
    seed: u64,
    repeats: usize,
}

/// Runs every case `repeats` times and aggregates per family. Case `i` on
/// repeat `r` draws from its own random stream, so results do not depend
/// on thread scheduling. Errors count as failures and are kept per case.
pub fn run_suite(
    suite: &[InstructionCase],
    deps: &EvalDeps<'_>,
    cfg: &PlannerConfig,
    seed: u64,
    repeats: usize,
    k_examples: Option<usize>,
) -> SuiteReport {
    let repeats = repeats.max(1);
    let cases: Vec<CaseResult> = suite
        .par_iter()
        .enumerate()
        .map(|(i, case)| {
            let mut res = CaseResult {
                id: case.id.clone(),
                family: case.family,
                runs: repeats,
                plan_successes: 0,
                execution_successes: 0,
                labels: Vec::new(),
                errors: Vec::new(),
            };
            for r in 0..repeats {
                let ep_seed = mix(mix(seed, r as u64), i as u64);
                match run_episode(case, deps, cfg, ep_seed) {
                    Ok(ep) => {
                        res.plan_successes += usize::from(ep.plan_success);
                        res.execution_successes += usize::from(ep.execution_success);
                        if r == 0 {
                            res.labels = ep.trace.labels.iter().map(|l| l.to_string()).collect();
                        }
                    }
                    Err(e) => res.errors.push(format!("repeat {r}: {e}")),
                }
            }
            res
        })
        .collect();

    let mut rows = Vec::new();
    let (mut all_runs, mut all_plan, mut all_exec, mut all_count) = (0, 0, 0, 0);
    for fam in InstructionFamily::ALL {
        let of: Vec<&CaseResult> = cases.iter().filter(|c| c.family == fam).collect();
        let runs: usize = of.iter().map(|c| c.runs).sum();
        let plan: usize = of.iter().map(|c| c.plan_successes).sum();
        let exec: usize = of.iter().map(|c| c.execution_successes).sum();
        all_runs += runs;
        all_plan += plan;
        all_exec += exec;
        all_count += of.len();
        rows.push(FamilyRow {
            family: fam.as_str().to_string(),
            count: of.len(),
            plan_rate: rate(plan, runs),
            execution_rate: rate(exec, runs),
        });
    }
    let fingerprint = Fingerprint {
        format_version: REPORT_FORMAT_VERSION,
        cfg,
        k_examples,
        scorer: deps.scorer.name(),
        template: deps.template,
        suite,
        success_prob: deps.success_prob,
        embedder: deps.embedder.config(),
        seed,
        repeats,
    };
    let digest = Sha256::digest(serde_json::to_vec(&fingerprint).expect("serializable"));
    SuiteReport {
        format_version: REPORT_FORMAT_VERSION,
        mode: cfg.mode,
        k_examples,
        seed,
        repeats,
        scorer: deps.scorer.name().to_string(),
        config_fingerprint: hex::encode(digest),
        rows,
        total: FamilyRow {
            family: "total".into(),
            count: all_count,
            plan_rate: rate(all_plan, all_runs),
            execution_rate: rate(all_exec, all_runs),
        },
        cases,
    }
}

/// One report per (mode, k) pair. `None` in `k_values` keeps the full
/// template.
pub fn ablation_matrix(
    suite: &[InstructionCase],
    modes: &[PlannerMode],
    k_values: &[Option<usize>],
    deps: &EvalDeps<'_>,
    cfg: &PlannerConfig,
    seed: u64,
    repeats: usize,
) -> Result<Vec<SuiteReport>, crate::prompting::PromptError> {
    let mut out = Vec::new();
    for &mode in modes {
        for &k in k_values {
            let template = match k {
                Some(k) => truncate_examples(deps.template, k)?,
                None => deps.template.clone(),
            };
            let d = EvalDeps {
                template: &template,
                ..*deps
            };
            out.push(run_suite(suite, &d, &cfg.clone().with_mode(mode), seed, repeats, k));
        }
    }
    Ok(out)
}

fn fmt_rate(r: Option<f64>) -> String {
    r.map(|r| format!("{r:.4}")).unwrap_or_else(|| "n/a".into())
}

/// All reports as one CSV, one row per (mode, k, family) plus totals.
pub fn reports_csv(reports: &[SuiteReport]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "format_version",
        "mode",
        "k",
        "family",
        "count",
        "plan_rate",
        "execution_rate",
        "seed",
        "repeats",
        "config_fingerprint",
    ])
    .expect("in-memory write");
    for r in reports {
        for row in r.rows.iter().chain(std::iter::once(&r.total)) {
            w.write_record([
                r.format_version.to_string(),
                r.mode.to_string(),
                r.k_examples.map(|k| k.to_string()).unwrap_or_else(|| "all".into()),
                row.family.clone(),
                row.count.to_string(),
                fmt_rate(row.plan_rate),
                fmt_rate(row.execution_rate),
                r.seed.to_string(),
                r.repeats.to_string(),
                r.config_fingerprint.clone(),
            ])
            .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

fn pct(r: Option<f64>) -> String {
    r.map(|r| format!("{:.0}%", r * 100.0)).unwrap_or_else(|| "n/a".into())
}

/// Console table for one report.
pub fn render_report(r: &SuiteReport) -> String {
    let mut s = String::new();
    let k = r.k_examples.map(|k| k.to_string()).unwrap_or_else(|| "all".into());
    let _ = writeln!(s, "mode {}  scorer {}  k {}  seed {}  repeats {}", r.mode, r.scorer, k, r.seed, r.repeats);
    let _ = writeln!(s, "{:<16} {:>5} {:>6} {:>6}", "family", "count", "plan", "exec");
    for row in r.rows.iter().chain(std::iter::once(&r.total)) {
        let name = InstructionFamily::ALL
            .iter()
            .find(|f| f.as_str() == row.family)
            .map(|f| f.display_name())
            .unwrap_or("Total");
        let _ = writeln!(
            s,
            "{:<16} {:>5} {:>6} {:>6}",
            name,
            row.count,
            pct(row.plan_rate),
            pct(row.execution_rate)
        );
    }
    let errors: usize = r.cases.iter().map(|c| c.errors.len()).sum();
    if errors > 0 {
        let _ = writeln!(s, "{errors} episode(s) errored");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assets;
    use crate::domain::SkillLabel;
    use crate::scoring::{TableScorer, UniformScorer};

    #[test]
    fn empty_suite_is_valid_with_undefined_rates() {
        assert!(parse_suite("").unwrap().is_empty());
        assert!(parse_suite("  \n").unwrap().is_empty());
        let reg = assets::registry();
        let t = PromptTemplate::default();
        let e = Embedder::default();
        let deps = EvalDeps {
            registry: &reg,
            scorer: &UniformScorer,
            template: &t,
            embedder: &e,
            success_prob: None,
        };
        let r = run_suite(&[], &deps, &PlannerConfig::default(), 0, 1, None);
        assert_eq!(r.total.plan_rate, None);
        assert!(reports_csv(std::slice::from_ref(&r)).contains("n/a"));
        assert!(render_report(&r).contains("n/a"));
    }

    #[test]
    fn unknown_family_reports_line() {
        let text = "[\n {\"id\": \"x\", \"instruction\": {\"text\": \"hi\"},\n  \"family\": \"telepathy\", \"acceptable_plans\": [[]], \"goal\": {\"op\": \"true\"}, \"scenario\": \"kitchen\"}\n]";
        match parse_suite(text) {
            Err(SuiteError::Parse { line, .. }) => assert!(line >= 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn rate_plan_is_order_sensitive_membership() {
        let suite = assets::kitchen_suite();
        let case = suite
            .iter()
            .find(|c| c.instruction.text == "Bring me a sponge and throw away the coke can")
            .unwrap();
        assert_eq!(case.acceptable_plans.len(), 2);
        let mut trace = PlanTrace {
            instruction: case.instruction.clone(),
            records: vec![],
            labels: case.acceptable_plans[1].clone(),
            termination: crate::domain::Termination::DoneToken,
            explanation: None,
            notes: vec![],
        };
        assert!(rate_plan(&trace, case));
        trace.labels.push(SkillLabel::new("go to the table").unwrap());
        assert!(!rate_plan(&trace, case));

        let done = suite
            .iter()
            .find(|c| c.acceptable_plans.contains(&vec![]))
            .expect("a completed embodiment case");
        trace.labels.clear();
        assert!(rate_plan(&trace, done));
    }

    #[test]
    fn shipped_suites_check_against_scenarios() {
        let reg = assets::registry();
        check_suite(&assets::kitchen_suite(), &reg).unwrap();
        check_suite(&assets::drawers_suite(), &reg).unwrap();
    }

    #[test]
    fn oracle_run_is_perfect_and_deterministic() {
        let reg = assets::registry();
        let scorer = TableScorer::new(assets::oracle_table()).unwrap();
        let t = assets::default_prompt();
        let e = Embedder::default();
        let deps = EvalDeps {
            registry: &reg,
            scorer: &scorer,
            template: &t,
            embedder: &e,
            success_prob: Some(1.0),
        };
        let suite = assets::kitchen_suite();
        let a = run_suite(&suite, &deps, &PlannerConfig::default(), 7, 1, None);
        assert_eq!(a.total.plan_rate, Some(1.0), "{}", render_report(&a));
        assert_eq!(a.total.execution_rate, Some(1.0));
        let b = run_suite(&suite, &deps, &PlannerConfig::default(), 7, 1, None);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn bc_nl_fails_multi_step_families() {
        let reg = assets::registry();
        let t = assets::default_prompt();
        let e = Embedder::default();
        let deps = EvalDeps {
            registry: &reg,
            scorer: &UniformScorer,
            template: &t,
            embedder: &e,
            success_prob: None,
        };
        let suite = assets::kitchen_suite();
        let r = run_suite(&suite, &deps, &PlannerConfig::default().with_mode(PlannerMode::BcNl), 0, 1, None);
        for row in &r.rows {
            if ["nl_nouns", "nl_verbs", "structured_language", "crowd_sourced", "long_horizon"].contains(&row.family.as_str()) {
                assert_eq!(row.execution_rate, Some(0.0), "{}", row.family);
            }
        }
    }
}
