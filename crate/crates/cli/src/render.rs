//! Console rendering. Everything here is a pure function of its inputs.

use std::collections::BTreeMap;
use std::fmt::Write;

use saycan::domain::{CandidateScore, DecisionRecord, DecisionSource, PlanTrace, WorldState, GRIPPER};
use saycan::simenv::{Scenario, StepOutcome};

/// Top `top_k` candidates by combined score, ties by skill id.
pub fn top_candidates(record: &DecisionRecord, top_k: usize) -> Vec<&CandidateScore> {
    let mut c: Vec<&CandidateScore> = record.candidates.iter().collect();
    c.sort_by(|a, b| b.combined.total_cmp(&a.combined).then_with(|| a.skill_id.cmp(&b.skill_id)));
    c.truncate(top_k);
    c
}

pub fn render_step(record: &DecisionRecord, top_k: usize) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "Step {}: {}", record.step_index + 1, record.chosen_label);
    match &record.source {
        DecisionSource::Scored => {}
        DecisionSource::Projected { text, cosine } => {
            let _ = writeln!(s, "  projected from {text:?} (cosine {cosine:.4})");
        }
        DecisionSource::Direct { text } => {
            let _ = writeln!(s, "  sent as-is: {text:?}");
        }
    }
    let rows = top_candidates(record, top_k);
    if rows.is_empty() {
        return s;
    }
    let width = rows.iter().map(|c| c.label.as_str().len()).max().unwrap_or(0).max(5);
    let _ = writeln!(s, "    {:<width$}  {:>8}  {:>10}  {:>8}", "skill", "LLM", "affordance", "combined");
    for c in rows {
        let mark = if c.skill_id == record.chosen_skill_id { ">" } else { " " };
        let cap = if c.capped { " (capped)" } else { "" };
        let _ = writeln!(
            s,
            "  {mark} {:<width$}  {:>8.4}  {:>10.4}  {:>8.4}{cap}",
            c.label.as_str(),
            c.llm_prob,
            c.affordance_prob,
            c.combined
        );
    }
    if record.tie_broken {
        let _ = writeln!(s, "    (tie broken by skill id)");
    }
    s
}

pub fn render_trace(trace: &PlanTrace, top_k: usize) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "Instruction: {}", trace.instruction.text);
    if let Some(e) = &trace.explanation {
        let _ = writeln!(s, "Explanation: {e}");
    }
    for note in &trace.notes {
        let _ = writeln!(s, "note: {note}");
    }
    for r in &trace.records {
        s.push_str(&render_step(r, top_k));
    }
    let plan: Vec<&str> = trace.labels.iter().map(|l| l.as_str()).collect();
    let _ = writeln!(s, "Plan: {}", if plan.is_empty() { "(empty)".into() } else { plan.join(", ") });
    let _ = writeln!(s, "Termination: {}", termination_name(trace));
    s
}

fn termination_name(trace: &PlanTrace) -> String {
    serde_json::to_value(trace.termination)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

pub fn render_outcomes(trace: &PlanTrace, outcomes: &[StepOutcome]) -> String {
    let mut s = String::from("Execution:\n");
    if outcomes.is_empty() {
        s.push_str("  (nothing executed)\n");
    }
    for (i, (o, l)) in outcomes.iter().zip(&trace.labels).enumerate() {
        let status = if o.success { "ok".to_string() } else { format!("failed ({})", o.reason) };
        let _ = writeln!(s, "  {}. {l}: {status}", i + 1);
    }
    s
}

/// Robot, gripper, objects grouped by where they physically are, drawers.
pub fn render_state(state: &WorldState, scenario: &Scenario) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "robot: {}", scenario.location_name(&state.robot_location));
    let held = state
        .gripper_contents
        .as_deref()
        .map(|o| scenario.object_name(o))
        .unwrap_or("nothing");
    let _ = writeln!(s, "holding: {held}");
    let mut by_place: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for (obj, place) in &state.object_placement {
        let at = state.object_location(obj).unwrap_or("?");
        let mut name = scenario.object_name(obj).to_string();
        if place == GRIPPER {
            name.push_str(" (held)");
        } else if state.drawer_open.contains_key(place) {
            name.push_str(&format!(" (in {place})"));
        }
        by_place.entry(at).or_default().push(name);
    }
    s.push_str("objects:\n");
    for (at, names) in by_place {
        let _ = writeln!(s, "  {}: {}", scenario.location_name(at), names.join(", "));
    }
    if !state.drawer_open.is_empty() {
        s.push_str("drawers:\n");
        for (d, open) in &state.drawer_open {
            let _ = writeln!(s, "  {d}: {}", if *open { "open" } else { "closed" });
        }
    }
    s
}
