//! Command-line front end: single runs, suite evaluation, an interactive
//! session, the synthetic prompt-size sweep and oracle table export.

pub mod render;
pub mod repl;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context as _, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use saycan::affordance::SimulatedAffordances;
use saycan::assets;
use saycan::domain::{DecisionRecord, InstructionCase, Instruction, Termination};
use saycan::embedding::Embedder;
use saycan::evalharness::{ablation_matrix, check_suite, load_suite, render_report, reports_csv, EvalDeps};
use saycan::langsim::{self, SWEEP_K};
use saycan::planner::{run, PlannerConfig, PlannerDeps, PlannerMode, RunOutput};
use saycan::prompting::{truncate_examples, PromptTemplate};
use saycan::rng::stream;
use saycan::scoring::{RemoteConfig, RemoteScorer, Scorer, ScorerTable, TableScorer, UniformScorer};
use saycan::simenv::{case_initial_state, check_goal, reset, Scenario};

pub const LOG_FORMAT_VERSION: u32 = 1;

#[derive(Parser, Debug)]
#[command(name = "saycan", version, about = "Language-model skill planning grounded by affordances")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Plan and execute a single instruction.
    Run(RunArgs),
    /// Evaluate an instruction suite, optionally over several modes and
    /// prompt sizes.
    Eval(EvalArgs),
    /// Interactive session against a persistent world.
    Repl(ReplArgs),
    /// Plan rate of synthetic instructions across prompt sizes.
    Langsim(LangsimArgs),
    /// Write the perfect scorer table for a suite.
    OracleTable(OracleArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ScorerKind {
    Table,
    Uniform,
    Remote,
}

#[derive(Args, Debug, Clone)]
pub struct CommonArgs {
    /// Shipped scenario id (kitchen, kitchen_drawers, tabletop) or a JSON file.
    #[arg(long, default_value = "kitchen")]
    pub scenario: String,
    #[arg(long, value_enum, default_value_t = ScorerKind::Table)]
    pub scorer: ScorerKind,
    /// Base URL of the scoring service; the bearer token is read from
    /// SAYCAN_SCORER_TOKEN.
    #[arg(long)]
    pub scorer_url: Option<String>,
    /// Scorer table JSON. Defaults to the shipped oracle table.
    #[arg(long)]
    pub scorer_table: Option<PathBuf>,
    /// Prompt template JSON. Defaults to a shipped template for the mode and
    /// scenario.
    #[arg(long)]
    pub prompt: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub max_steps: usize,
    /// Override every skill's execution success probability.
    #[arg(long)]
    pub success_prob: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    pub instruction: String,
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value = "saycan")]
    pub mode: PlannerMode,
    /// Keep only the first K prompt examples.
    #[arg(long)]
    pub k_examples: Option<usize>,
    #[arg(long, default_value_t = 5)]
    pub top_k: usize,
    /// JSONL decision log.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Suite JSON. Defaults to the shipped 101-instruction kitchen suite.
    #[arg(long)]
    pub suite: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "saycan")]
    pub modes: Vec<PlannerMode>,
    /// Prompt sizes to sweep; the full template when omitted.
    #[arg(long, value_delimiter = ',')]
    pub k_examples: Vec<usize>,
    /// Episodes per case. Defaults to 1 when execution is deterministic and
    /// 100 otherwise.
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Writes one JSON report per (mode, k) plus summary.csv.
    #[arg(long)]
    pub report_dir: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct ReplArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value = "saycan")]
    pub mode: PlannerMode,
    #[arg(long)]
    pub k_examples: Option<usize>,
    #[arg(long, default_value_t = 5)]
    pub top_k: usize,
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Reset the world before every instruction.
    #[arg(long)]
    pub fresh: bool,
}

#[derive(Args, Debug, Clone)]
pub struct LangsimArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value_t = langsim::DEFAULT_BATCH)]
    pub cases: usize,
    #[arg(long, default_value_t = langsim::DEFAULT_DISTRACTORS)]
    pub distractors: usize,
    #[arg(long, value_delimiter = ',')]
    pub k_examples: Vec<usize>,
    /// CSV output path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct OracleArgs {
    /// Suite files; both shipped suites when omitted.
    #[arg(long)]
    pub suite: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// One JSONL log line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogLine {
    Decision {
        format_version: u32,
        episode: u64,
        record: DecisionRecord,
    },
    Trailer {
        format_version: u32,
        episode: u64,
        instruction: String,
        mode: PlannerMode,
        seed: u64,
        labels: Vec<String>,
        termination: Termination,
        executed: Vec<bool>,
        goal_met: bool,
    },
}

/// Everything a planning episode needs, resolved from flags.
pub struct Context {
    pub scenario: Scenario,
    pub scorer: Box<dyn Scorer>,
    pub template: PromptTemplate,
    pub embedder: Embedder,
    pub cfg: PlannerConfig,
}

impl Context {
    pub fn run(&self, instruction: &Instruction, start: &saycan::domain::WorldState, seed: u64) -> Result<RunOutput> {
        let affordances = SimulatedAffordances {
            calibration: self.scenario.calibration,
        };
        let deps = PlannerDeps {
            scorer: self.scorer.as_ref(),
            template: &self.template,
            affordances: &affordances,
            embedder: &self.embedder,
        };
        let mut rng = stream(seed, 0);
        Ok(run(instruction, &self.scenario.skills, start, Some(&self.scenario), &deps, &self.cfg, &mut rng)?)
    }
}

pub fn load_scenario(spec: &str) -> Result<Scenario> {
    if let Some(s) = assets::registry().remove(spec) {
        return Ok(s);
    }
    let text = fs::read_to_string(spec).with_context(|| format!("scenario {spec:?} is neither shipped nor a readable file"))?;
    Ok(Scenario::from_json(&text)?)
}

fn has_drawers(s: &Scenario) -> bool {
    s.skills.iter().any(|k| k.family.is_drawer())
}

fn load_template(path: Option<&Path>, mode: PlannerMode, drawers: bool, k: Option<usize>) -> Result<PromptTemplate> {
    let t = match path {
        Some(p) => PromptTemplate::from_json(&read(p)?)?,
        None if mode == PlannerMode::Cot => assets::cot_prompt(),
        None if drawers => assets::drawers_prompt(),
        None => assets::default_prompt(),
    };
    Ok(match k {
        Some(k) => truncate_examples(&t, k)?,
        None => t,
    })
}

fn read(p: &Path) -> Result<String> {
    fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))
}

fn load_table(c: &CommonArgs) -> Result<Option<ScorerTable>> {
    c.scorer_table
        .as_deref()
        .map(|p| serde_json::from_str(&read(p)?).with_context(|| format!("parsing {}", p.display())))
        .transpose()
}

/// `default_table` is used by the table scorer when no file is given.
fn build_scorer(c: &CommonArgs, default_table: impl FnOnce() -> ScorerTable) -> Result<Box<dyn Scorer>> {
    Ok(match c.scorer {
        ScorerKind::Table => Box::new(TableScorer::new(load_table(c)?.unwrap_or_else(default_table))?),
        ScorerKind::Uniform => Box::new(UniformScorer),
        ScorerKind::Remote => {
            let url = c.scorer_url.clone().ok_or_else(|| anyhow!("--scorer remote needs --scorer-url"))?;
            Box::new(RemoteScorer::new(RemoteConfig::new(url)))
        }
    })
}

fn planner_cfg(c: &CommonArgs, mode: PlannerMode) -> Result<PlannerConfig> {
    let cfg = PlannerConfig {
        max_steps: c.max_steps,
        ..PlannerConfig::default()
    }
    .with_mode(mode);
    cfg.validate()?;
    Ok(cfg)
}

fn check_prob(p: Option<f64>) -> Result<()> {
    match p {
        Some(p) if !(0.0..=1.0).contains(&p) => bail!("--success-prob must be in [0, 1], got {p}"),
        _ => Ok(()),
    }
}

fn with_success(s: Scenario, p: Option<f64>) -> Result<Scenario> {
    check_prob(p)?;
    Ok(match p {
        Some(p) => s.with_uniform_success(p),
        None => s,
    })
}

pub fn build_context(c: &CommonArgs, mode: PlannerMode, k: Option<usize>) -> Result<Context> {
    let scenario = with_success(load_scenario(&c.scenario)?, c.success_prob)?;
    let template = load_template(c.prompt.as_deref(), mode, has_drawers(&scenario), k)?;
    Ok(Context {
        scorer: build_scorer(c, assets::oracle_table)?,
        template,
        embedder: Embedder::default(),
        cfg: planner_cfg(c, mode)?,
        scenario,
    })
}

/// Shipped suite case for this scenario whose instruction matches `text`
/// up to case and surrounding whitespace.
pub fn find_case(scenario_id: &str, text: &str) -> Option<InstructionCase> {
    let want = text.trim().to_lowercase();
    assets::kitchen_suite()
        .into_iter()
        .chain(assets::drawers_suite())
        .find(|c| c.scenario == scenario_id && c.instruction.text.trim().to_lowercase() == want)
}

/// Whether an episode counts as achieved: the case goal when the
/// instruction is a known case, otherwise an explicit "done" with every
/// executed step succeeding.
pub fn goal_met(out: &RunOutput, case: Option<&InstructionCase>) -> bool {
    match case {
        Some(c) => check_goal(&out.final_state, c),
        None => out.trace.termination == Termination::DoneToken && out.outcomes.iter().all(|o| o.success),
    }
}

pub fn log_lines(out: &RunOutput, episode: u64, mode: PlannerMode, seed: u64, goal: bool) -> Vec<LogLine> {
    let mut lines: Vec<LogLine> = out
        .trace
        .records
        .iter()
        .map(|r| LogLine::Decision {
            format_version: LOG_FORMAT_VERSION,
            episode,
            record: r.clone(),
        })
        .collect();
    lines.push(LogLine::Trailer {
        format_version: LOG_FORMAT_VERSION,
        episode,
        instruction: out.trace.instruction.text.clone(),
        mode,
        seed,
        labels: out.trace.labels.iter().map(|l| l.to_string()).collect(),
        termination: out.trace.termination,
        executed: out.outcomes.iter().map(|o| o.success).collect(),
        goal_met: goal,
    });
    lines
}

pub fn write_log_lines(w: &mut dyn Write, lines: &[LogLine]) -> Result<()> {
    for l in lines {
        serde_json::to_writer(&mut *w, l)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

pub fn cmd_run(a: &RunArgs, out: &mut dyn Write) -> Result<i32> {
    let ctx = build_context(&a.common, a.mode, a.k_examples)?;
    let instruction = Instruction::new(a.instruction.clone())?;
    let case = find_case(&ctx.scenario.id, &a.instruction);
    let start = match &case {
        Some(c) => case_initial_state(&ctx.scenario, c)?,
        None => reset(&ctx.scenario),
    };
    let mut log = a.log.as_deref().map(create).transpose()?;
    let result = ctx.run(&instruction, &start, a.common.seed)?;
    let goal = goal_met(&result, case.as_ref());
    write!(out, "{}", render::render_trace(&result.trace, a.top_k))?;
    write!(out, "{}", render::render_outcomes(&result.trace, &result.outcomes))?;
    write!(out, "{}", render::render_state(&result.final_state, &ctx.scenario))?;
    match &case {
        Some(c) => writeln!(out, "Goal ({}): {}", c.id, if goal { "met" } else { "not met" })?,
        None => writeln!(out, "Goal: {}", if goal { "met" } else { "not met" })?,
    }
    if let Some(w) = log.as_mut() {
        write_log_lines(w, &log_lines(&result, 0, a.mode, a.common.seed, goal))?;
    }
    Ok(if goal { 0 } else { 1 })
}

fn report_name(mode: PlannerMode, k: Option<usize>) -> String {
    match k {
        Some(k) => format!("{mode}-k{k}.json"),
        None => format!("{mode}.json"),
    }
}

pub fn cmd_eval(a: &EvalArgs, out: &mut dyn Write) -> Result<i32> {
    let c = &a.common;
    let mut registry: BTreeMap<String, Scenario> = assets::registry();
    let extra = load_scenario(&c.scenario)?;
    registry.insert(extra.id.clone(), extra);
    let suite = match &a.suite {
        Some(p) => load_suite(p)?,
        None => assets::kitchen_suite(),
    };
    check_suite(&suite, &registry)?;
    check_prob(c.success_prob)?;
    let drawers = suite.iter().any(|case| has_drawers(&registry[&case.scenario]));
    if a.modes.is_empty() {
        bail!("--modes is empty");
    }
    let base = load_template(c.prompt.as_deref(), PlannerMode::Saycan, drawers, None)?;
    let cot = load_template(c.prompt.as_deref(), PlannerMode::Cot, drawers, None)?;
    let scorer = build_scorer(c, assets::oracle_table)?;
    let embedder = Embedder::default();
    let deterministic = match c.success_prob {
        Some(p) => p == 0.0 || p == 1.0,
        None => suite.iter().all(|case| registry[&case.scenario].is_deterministic()),
    };
    let repeats = a.repeats.unwrap_or(if deterministic { 1 } else { 100 });
    let ks: Vec<Option<usize>> = if a.k_examples.is_empty() {
        vec![None]
    } else {
        a.k_examples.iter().copied().map(Some).collect()
    };
    let mut reports = Vec::new();
    for &mode in &a.modes {
        let deps = EvalDeps {
            registry: &registry,
            scorer: scorer.as_ref(),
            template: if mode == PlannerMode::Cot { &cot } else { &base },
            embedder: &embedder,
            success_prob: c.success_prob,
        };
        reports.extend(ablation_matrix(&suite, &[mode], &ks, &deps, &planner_cfg(c, mode)?, c.seed, repeats)?);
    }
    for r in &reports {
        writeln!(out, "{}", render_report(r))?;
    }
    if let Some(dir) = &a.report_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for r in &reports {
            let mut w = create(&dir.join(report_name(r.mode, r.k_examples)))?;
            serde_json::to_writer_pretty(&mut w, r)?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
        fs::write(dir.join("summary.csv"), reports_csv(&reports))?;
        writeln!(out, "reports written to {}", dir.display())?;
    }
    Ok(0)
}

pub fn cmd_langsim(a: &LangsimArgs, out: &mut dyn Write) -> Result<i32> {
    let c = &a.common;
    let scenario = load_scenario(&c.scenario)?;
    let cases = langsim::generate_batch(c.seed, a.cases, &scenario, a.distractors)?;
    let scorer = build_scorer(c, || langsim::oracle_table(&cases))?;
    let template = load_template(c.prompt.as_deref(), PlannerMode::Saycan, has_drawers(&scenario), None)?;
    let ks: Vec<usize> = if a.k_examples.is_empty() { SWEEP_K.to_vec() } else { a.k_examples.clone() };
    let rows = langsim::k_sweep(&cases, &scenario, scorer.as_ref(), &template, &ks, &planner_cfg(c, PlannerMode::Saycan)?)?;
    let opt = |v: Option<f64>| v.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into());
    writeln!(out, "{:>3}  {:>9}  {:>12}  {:>9}  {:>12}", "k", "plan", "plan (no end)", "ref", "ref (no end)")?;
    for r in &rows {
        writeln!(
            out,
            "{:>3}  {:>9.2}  {:>12.2}  {:>9}  {:>12}",
            r.k,
            r.with_termination,
            r.without_termination,
            opt(r.reference_with),
            opt(r.reference_without)
        )?;
    }
    writeln!(out, "ref columns are published large-model rates, listed for comparison only")?;
    if let Some(p) = &a.out {
        fs::write(p, langsim::sweep_csv(&rows)).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(0)
}

pub fn cmd_oracle_table(a: &OracleArgs, out: &mut dyn Write) -> Result<i32> {
    let cases: Vec<InstructionCase> = if a.suite.is_empty() {
        assets::kitchen_suite().into_iter().chain(assets::drawers_suite()).collect()
    } else {
        let mut all = Vec::new();
        for p in &a.suite {
            all.extend(load_suite(p)?);
        }
        all
    };
    let text = serde_json::to_string_pretty(&assets::oracle_for(&cases))? + "\n";
    match &a.out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(0)
}

/// The error and its causes, skipping causes whose text is already shown.
pub fn error_text(e: &anyhow::Error) -> String {
    let mut s = e.to_string();
    for cause in e.chain().skip(1) {
        let c = cause.to_string();
        if !s.contains(&c) {
            s.push_str(": ");
            s.push_str(&c);
        }
    }
    s
}

/// Parses `args` and runs the command. Returns the process exit code: 0 on
/// success, 1 when an episode ran but its goal was not met, 2 on
/// configuration or IO errors.
pub fn main_with<I, T>(args: I, input: &mut dyn BufRead, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a, out),
        Command::Eval(a) => cmd_eval(a, out),
        Command::Repl(a) => repl::cmd_repl(a, input, out),
        Command::Langsim(a) => cmd_langsim(a, out),
        Command::OracleTable(a) => cmd_oracle_table(a, out),
    };
    let _ = out.flush();
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {}", error_text(&e));
            2
        }
    }
}
