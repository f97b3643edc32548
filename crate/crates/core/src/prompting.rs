//! Dialog-structured few-shot prompts ("Human: ... / Robot: 1. ..., 2. ...").
//!
//! Rendering is a pure function of its inputs. [`LiveQuery::parse`] inverts
//! the live-query section so a scorer can recover the instruction, the
//! optional explanation and the step history from prompt text alone.

use serde::{Deserialize, Serialize};

use crate::domain::{Instruction, SkillLabel, DONE};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptExample {
    pub query: String,
    pub steps: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    #[serde(default = "one")]
    pub format_version: u32,
    #[serde(default)]
    pub preamble: String,
    #[serde(default = "human_prefix")]
    pub human_prefix: String,
    #[serde(default = "robot_prefix")]
    pub robot_prefix: String,
    pub examples: Vec<PromptExample>,
    #[serde(default)]
    pub cot_enabled: bool,
    #[serde(default = "explanation_label")]
    pub explanation_label: String,
}

fn one() -> u32 {
    1
}
fn human_prefix() -> String {
    "Human:".into()
}
fn robot_prefix() -> String {
    "Robot:".into()
}
fn explanation_label() -> String {
    "Explanation:".into()
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self {
            format_version: 1,
            preamble: String::new(),
            human_prefix: human_prefix(),
            robot_prefix: robot_prefix(),
            examples: Vec::new(),
            cot_enabled: false,
            explanation_label: explanation_label(),
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("k={k} out of range, template has {available} examples")]
    KOutOfRange { k: usize, available: usize },
    #[error("template does not enable chain-of-thought")]
    NotChainOfThought,
    #[error("history must not contain \"done\"")]
    DoneInHistory,
    #[error("invalid prompt template: {0}")]
    Parse(String),
}

impl PromptTemplate {
    pub fn from_json(text: &str) -> Result<Self, PromptError> {
        serde_json::from_str(text).map_err(|e| PromptError::Parse(e.to_string()))
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    fn render_examples(&self, out: &mut String, with_explanations: bool) {
        if !self.preamble.is_empty() {
            out.push_str(&self.preamble);
            out.push('\n');
        }
        for ex in &self.examples {
            out.push_str(&self.human_prefix);
            out.push(' ');
            out.push_str(&single_line(&ex.query));
            out.push('\n');
            if with_explanations {
                out.push_str(&self.explanation_label);
                out.push(' ');
                out.push_str(&single_line(ex.explanation.as_deref().unwrap_or("")));
                out.push('\n');
            }
            out.push_str(&self.robot_prefix);
            out.push(' ');
            let mut n = 1;
            for step in ex.steps.iter().filter(|s| s.as_str() != DONE) {
                out.push_str(&format!("{n}. {step}, "));
                n += 1;
            }
            out.push_str(&format!("{n}. {DONE}.\n"));
        }
    }

    fn render_live(&self, out: &mut String, instruction: &Instruction) {
        out.push_str(&self.human_prefix);
        out.push(' ');
        out.push_str(&single_line(&instruction.text));
        out.push('\n');
    }

    fn render_robot_turn(&self, out: &mut String, history: &[SkillLabel]) {
        out.push_str(&self.robot_prefix);
        for (i, label) in history.iter().enumerate() {
            out.push_str(&format!(" {}. {},", i + 1, label));
        }
        out.push_str(&format!(" {}.", history.len() + 1));
    }
}

fn single_line(s: &str) -> String {
    s.replace(['\n', '\r'], " ")
}

fn check_history(history: &[SkillLabel]) -> Result<(), PromptError> {
    if history.iter().any(SkillLabel::is_done) {
        return Err(PromptError::DoneInHistory);
    }
    Ok(())
}

/// Keeps the first `k` examples.
pub fn truncate_examples(template: &PromptTemplate, k: usize) -> Result<PromptTemplate, PromptError> {
    if k > template.examples.len() {
        return Err(PromptError::KOutOfRange {
            k,
            available: template.examples.len(),
        });
    }
    let mut t = template.clone();
    t.examples.truncate(k);
    Ok(t)
}

/// Renders examples, the live query and a robot turn listing `history` as
/// numbered steps, ending at the dangling next step number.
pub fn build_prompt(
    template: &PromptTemplate,
    instruction: &Instruction,
    history: &[SkillLabel],
) -> Result<String, PromptError> {
    check_history(history)?;
    let mut out = String::new();
    template.render_examples(&mut out, false);
    template.render_live(&mut out, instruction);
    template.render_robot_turn(&mut out, history);
    Ok(out)
}

/// Chain-of-thought variant. Without an explanation the prompt stops at the
/// explanation slot for generative completion; with one, it is embedded and
/// the prompt ends at the next step number for scoring.
pub fn build_cot_prompt(
    template: &PromptTemplate,
    instruction: &Instruction,
    history: &[SkillLabel],
    explanation: Option<&str>,
) -> Result<String, PromptError> {
    if !template.cot_enabled {
        return Err(PromptError::NotChainOfThought);
    }
    check_history(history)?;
    let mut out = String::new();
    template.render_examples(&mut out, true);
    template.render_live(&mut out, instruction);
    out.push_str(&template.explanation_label);
    if let Some(e) = explanation {
        out.push(' ');
        out.push_str(&single_line(e));
        out.push('\n');
        template.render_robot_turn(&mut out, history);
    }
    Ok(out)
}

/// The trailing live-query section of a rendered prompt.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LiveQuery {
    pub instruction: String,
    pub explanation: Option<String>,
    pub history: Vec<String>,
    /// The prompt stops at the explanation slot.
    pub awaiting_explanation: bool,
}

impl LiveQuery {
    pub fn parse(prompt: &str, template: &PromptTemplate) -> Option<Self> {
        Self::parse_with(
            prompt,
            &template.human_prefix,
            &template.robot_prefix,
            &template.explanation_label,
        )
    }

    pub fn parse_with(
        prompt: &str,
        human: &str,
        robot: &str,
        explanation_label: &str,
    ) -> Option<Self> {
        let lines: Vec<&str> = prompt.split('\n').collect();
        let start = lines
            .iter()
            .rposition(|l| l.strip_prefix(human).is_some_and(|r| r.starts_with(' ')))?;
        let instruction = lines[start][human.len() + 1..].to_string();
        let mut rest = &lines[start + 1..];

        let mut explanation = None;
        if let Some(first) = rest.first() {
            if let Some(e) = first.strip_prefix(explanation_label) {
                if rest.len() == 1 && e.is_empty() {
                    return Some(Self {
                        instruction,
                        explanation: None,
                        history: Vec::new(),
                        awaiting_explanation: true,
                    });
                }
                explanation = Some(e.strip_prefix(' ').unwrap_or(e).to_string());
                rest = &rest[1..];
            }
        }
        if rest.len() != 1 {
            return None;
        }
        let turn = rest[0].strip_prefix(robot)?;
        let history = parse_numbered_turn(turn)?;
        Some(Self {
            instruction,
            explanation,
            history,
            awaiting_explanation: false,
        })
    }
}

/// Parses `" 1. a, 2. b, 3."` into `["a", "b"]`, using the explicit step
/// numbers as delimiters.
fn parse_numbered_turn(turn: &str) -> Option<Vec<String>> {
    let mut rest = turn;
    let mut history = Vec::new();
    let mut n = 1usize;
    loop {
        let head = format!(" {n}.");
        rest = rest.strip_prefix(&head)?;
        if rest.is_empty() {
            return Some(history);
        }
        rest = rest.strip_prefix(' ')?;
        let delim = format!(", {}.", n + 1);
        let end = rest.find(&delim)?;
        history.push(rest[..end].to_string());
        rest = &rest[end + 1..];
        n += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labels(xs: &[&str]) -> Vec<SkillLabel> {
        xs.iter().map(|x| SkillLabel::new(*x).unwrap()).collect()
    }

    fn template(n: usize) -> PromptTemplate {
        PromptTemplate {
            examples: (0..n)
                .map(|i| PromptExample {
                    query: format!("query {i}"),
                    steps: vec![format!("step {i}a"), format!("step {i}b")],
                    explanation: Some(format!("because {i}")),
                })
                .collect(),
            ..PromptTemplate::default()
        }
    }

    fn instr(s: &str) -> Instruction {
        Instruction::new(s).unwrap()
    }

    #[test]
    fn empty_history_ends_at_step_one() {
        let p = build_prompt(&template(0), &instr("bring me a coke can"), &[]).unwrap();
        assert_eq!(p, "Human: bring me a coke can\nRobot: 1.");
    }

    #[test]
    fn history_is_numbered() {
        let p = build_prompt(&template(0), &instr("x"), &labels(&["find a coke can"])).unwrap();
        assert!(p.ends_with("Robot: 1. find a coke can, 2."), "{p}");
    }

    #[test]
    fn examples_render_with_done() {
        let p = build_prompt(&template(1), &instr("x"), &[]).unwrap();
        assert_eq!(
            p,
            "Human: query 0\nRobot: 1. step 0a, 2. step 0b, 3. done.\nHuman: x\nRobot: 1."
        );
        assert_eq!(p.matches("Human:").count(), 2);
    }

    #[test]
    fn truncation_is_a_prefix() {
        let t = template(17);
        assert_eq!(truncate_examples(&t, 17).unwrap(), t);
        assert!(truncate_examples(&t, 0).unwrap().examples.is_empty());
        let four = truncate_examples(&t, 4).unwrap();
        assert_eq!(four.examples, t.examples[..4].to_vec());
        assert_eq!(
            truncate_examples(&t, 18),
            Err(PromptError::KOutOfRange { k: 18, available: 17 })
        );
    }

    #[test]
    fn done_in_history_rejected() {
        let err = build_prompt(&template(0), &instr("x"), &[SkillLabel::done()]).unwrap_err();
        assert_eq!(err, PromptError::DoneInHistory);
    }

    #[test]
    fn cot_slot_and_embedding() {
        let mut t = template(1);
        assert_eq!(
            build_cot_prompt(&t, &instr("x"), &[], None),
            Err(PromptError::NotChainOfThought)
        );
        t.cot_enabled = true;
        let open = build_cot_prompt(&t, &instr("bring me a drink"), &[], None).unwrap();
        assert!(open.ends_with("Explanation:"), "{open}");
        let expl = "the user wants a drink that is not coke";
        let p = build_cot_prompt(&t, &instr("bring me a drink"), &labels(&["find a pepsi"]), Some(expl))
            .unwrap();
        let e_at = p.rfind(expl).unwrap();
        let steps_at = p.rfind("Robot:").unwrap();
        assert!(e_at < steps_at);
        assert!(p.ends_with("Robot: 1. find a pepsi, 2."), "{p}");
    }

    #[test]
    fn live_query_parses_cot_slot() {
        let mut t = template(2);
        t.cot_enabled = true;
        let p = build_cot_prompt(&t, &instr("bring a snack"), &[], None).unwrap();
        let q = LiveQuery::parse(&p, &t).unwrap();
        assert!(q.awaiting_explanation);
        assert_eq!(q.instruction, "bring a snack");
        let p = build_cot_prompt(&t, &instr("bring a snack"), &labels(&["a, b"]), Some("not apple")).unwrap();
        let q = LiveQuery::parse(&p, &t).unwrap();
        assert_eq!(q.explanation.as_deref(), Some("not apple"));
        assert_eq!(q.history, vec!["a, b".to_string()]);
    }

    proptest! {
        #[test]
        fn rendering_is_pure_and_parse_inverts_it(
            text in "[a-zA-Z][a-zA-Z ,.?']{0,30}",
            hist in proptest::collection::vec("[a-z][a-z ]{0,20}[a-z]", 0..6),
            k in 0usize..5,
        ) {
            let t = truncate_examples(&template(4), k.min(4)).unwrap();
            let history = labels(&hist.iter().map(String::as_str).collect::<Vec<_>>());
            let i = instr(&text);
            let a = build_prompt(&t, &i, &history).unwrap();
            let b = build_prompt(&t, &i, &history).unwrap();
            prop_assert_eq!(&a, &b);
            let q = LiveQuery::parse(&a, &t).unwrap();
            prop_assert_eq!(q.instruction, text);
            prop_assert_eq!(q.history, hist.clone());
            let n = hist.len();
            let tail = format!(" {}.", n + 1);
            prop_assert!(a.ends_with(&tail));
            let last_turn = a.rsplit('\n').next().unwrap();
            for j in 1..=n {
                let needle = format!(" {}. ", j);
                prop_assert!(last_turn.contains(&needle));
            }
        }

        #[test]
        fn smaller_k_renders_a_prefix(k1 in 0usize..17, k2 in 0usize..=17) {
            prop_assume!(k1 < k2);
            let t = template(17);
            let i = instr("live");
            let short = build_prompt(&truncate_examples(&t, k1).unwrap(), &i, &[]).unwrap();
            let long = build_prompt(&truncate_examples(&t, k2).unwrap(), &i, &[]).unwrap();
            let cut = short.rfind("Human: live").unwrap();
            prop_assert!(long.starts_with(&short[..cut]));
            prop_assert!(long.len() > short.len());
        }
    }
}
