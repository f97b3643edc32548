//! Scenarios, prompts, suites and scorer tables shipped with the crate.

use std::collections::BTreeMap;

use crate::domain::InstructionCase;
use crate::evalharness::parse_suite;
use crate::prompting::PromptTemplate;
use crate::scoring::ScorerTable;
use crate::simenv::Scenario;

pub const KITCHEN: &str = include_str!("../assets/kitchen.json");
pub const KITCHEN_DRAWERS: &str = include_str!("../assets/kitchen_drawers.json");
pub const TABLETOP: &str = include_str!("../assets/tabletop.json");
pub const PROMPT_DEFAULT: &str = include_str!("../assets/prompt_default.json");
pub const PROMPT_DRAWERS: &str = include_str!("../assets/prompt_drawers.json");
pub const PROMPT_COT: &str = include_str!("../assets/prompt_cot.json");
pub const KITCHEN_SUITE: &str = include_str!("../assets/kitchen_suite.json");
pub const DRAWERS_SUITE: &str = include_str!("../assets/kitchen_drawers_suite.json");
pub const ORACLE_TABLE: &str = include_str!("../assets/kitchen_oracle_table.json");

pub fn kitchen() -> Scenario {
    Scenario::from_json(KITCHEN).expect("shipped scenario is valid")
}

pub fn kitchen_drawers() -> Scenario {
    Scenario::from_json(KITCHEN_DRAWERS).expect("shipped scenario is valid")
}

pub fn tabletop() -> Scenario {
    Scenario::from_json(TABLETOP).expect("shipped scenario is valid")
}

/// Every shipped scenario by id.
pub fn registry() -> BTreeMap<String, Scenario> {
    [kitchen(), kitchen_drawers(), tabletop()]
        .into_iter()
        .map(|s| (s.id.clone(), s))
        .collect()
}

pub fn default_prompt() -> PromptTemplate {
    PromptTemplate::from_json(PROMPT_DEFAULT).expect("shipped prompt is valid")
}

pub fn drawers_prompt() -> PromptTemplate {
    PromptTemplate::from_json(PROMPT_DRAWERS).expect("shipped prompt is valid")
}

pub fn cot_prompt() -> PromptTemplate {
    PromptTemplate::from_json(PROMPT_COT).expect("shipped prompt is valid")
}

pub fn kitchen_suite() -> Vec<InstructionCase> {
    parse_suite(KITCHEN_SUITE).expect("shipped suite is valid")
}

pub fn drawers_suite() -> Vec<InstructionCase> {
    parse_suite(DRAWERS_SUITE).expect("shipped suite is valid")
}

/// Oracle scorer table covering both shipped suites.
pub fn oracle_table() -> ScorerTable {
    serde_json::from_str(ORACLE_TABLE).expect("shipped table is valid")
}

/// The oracle table for `cases`, built from each case's first acceptable
/// plan.
pub fn oracle_for(cases: &[InstructionCase]) -> ScorerTable {
    ScorerTable::oracle(
        cases
            .iter()
            .map(|c| (c.instruction.text.as_str(), c.acceptable_plans[0].as_slice())),
    )
}
