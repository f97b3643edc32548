//! Language-model abstraction.
//!
//! A [`Scorer`] assigns a log-probability to each fixed candidate
//! continuation of a prompt (scoring mode) and may also produce free text
//! (generative mode). Three implementations ship: a deterministic rule
//! table, a uniform baseline and an HTTP client for a remote model.

use std::collections::BTreeMap;
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::domain::{SkillLabel, DONE};
use crate::prompting::LiveQuery;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub prompt: String,
    pub candidates: Vec<SkillLabel>,
}

impl ScoreRequest {
    pub fn new(prompt: impl Into<String>, candidates: Vec<SkillLabel>) -> Result<Self, ScoreError> {
        let req = Self {
            prompt: prompt.into(),
            candidates,
        };
        req.validate()?;
        Ok(req)
    }

    pub fn validate(&self) -> Result<(), ScoreError> {
        if self.candidates.is_empty() {
            return Err(ScoreError::InvalidRequest("no candidates".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for c in &self.candidates {
            if !seen.insert(c.as_str()) {
                return Err(ScoreError::InvalidRequest(format!("duplicate candidate {c:?}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub logprobs: Vec<f64>,
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ScoreError {
    #[error("invalid score request: {0}")]
    InvalidRequest(String),
    #[error("transport failure (retryable): {0}")]
    Transport(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("scorer does not support {0}")]
    Unsupported(&'static str),
    #[error("no completion available: {0}")]
    NoCompletion(String),
    #[error("invalid scorer table: {0}")]
    Table(String),
}

impl ScoreError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, Self::Transport(_))
    }
}

/// A language model usable for planning. Implementations must tolerate
/// concurrent calls.
pub trait Scorer: Send + Sync {
    fn score(&self, request: &ScoreRequest) -> Result<ScoreResponse, ScoreError>;

    fn generate(&self, prompt: &str, max_tokens: usize) -> Result<String, ScoreError>;

    fn name(&self) -> &str;
}

/// Validates the request, scores it and checks the response shape.
pub fn score_candidates(scorer: &dyn Scorer, request: &ScoreRequest) -> Result<ScoreResponse, ScoreError> {
    request.validate()?;
    let resp = scorer.score(request)?;
    if resp.logprobs.len() != request.candidates.len() {
        return Err(ScoreError::Protocol(format!(
            "expected {} logprobs, got {}",
            request.candidates.len(),
            resp.logprobs.len()
        )));
    }
    if let Some(bad) = resp.logprobs.iter().find(|l| !l.is_finite()) {
        return Err(ScoreError::Protocol(format!("non-finite logprob {bad}")));
    }
    Ok(resp)
}

pub fn generate(scorer: &dyn Scorer, prompt: &str, max_tokens: usize) -> Result<String, ScoreError> {
    scorer.generate(prompt, max_tokens)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Probabilities {
    /// `exp(logprob)` per candidate; these feed the fused product.
    pub unnormalized: Vec<f64>,
    /// Softmax over the candidate set, for display only.
    pub display: Vec<f64>,
}

pub fn to_probabilities(response: &ScoreResponse) -> Result<Probabilities, ScoreError> {
    if response.logprobs.iter().any(|l| !l.is_finite()) {
        return Err(ScoreError::Protocol("non-finite logprob".into()));
    }
    let unnormalized = response.logprobs.iter().map(|l| l.exp()).collect();
    Ok(Probabilities {
        unnormalized,
        display: softmax(&response.logprobs),
    })
}

/// Max-subtracted softmax; stays finite for large-magnitude inputs.
pub fn softmax(logprobs: &[f64]) -> Vec<f64> {
    let max = logprobs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let shifted: Vec<f64> = logprobs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = shifted.iter().sum();
    shifted.into_iter().map(|x| x / total).collect()
}

fn uniform_logprobs(n: usize) -> Vec<f64> {
    vec![(1.0 / n as f64).ln(); n]
}

/// Scores every candidate equally; cannot generate text.
#[derive(Clone, Copy, Debug, Default)]
pub struct UniformScorer;

impl Scorer for UniformScorer {
    fn score(&self, request: &ScoreRequest) -> Result<ScoreResponse, ScoreError> {
        Ok(ScoreResponse {
            logprobs: uniform_logprobs(request.candidates.len()),
        })
    }

    fn generate(&self, _prompt: &str, _max_tokens: usize) -> Result<String, ScoreError> {
        Err(ScoreError::Unsupported("generation"))
    }

    fn name(&self) -> &str {
        "uniform"
    }
}

// ---------------------------------------------------------------------------
// Rule table
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRule {
    /// Literal instruction text; substring match unless `exact`.
    #[serde(default)]
    pub instruction: String,
    #[serde(default, skip_serializing_if = "is_false")]
    pub exact: bool,
    /// The step history must end with these labels.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub history_suffix: Vec<String>,
    /// When set, the history must have exactly this many steps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub history_len: Option<usize>,
    /// Substring required in the prompt's explanation line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
    pub distribution: BTreeMap<String, f64>,
}

fn is_false(b: &bool) -> bool {
    !*b
}

impl TableRule {
    fn matches(&self, q: &LiveQuery) -> bool {
        let instr_ok = if self.exact {
            q.instruction == self.instruction
        } else {
            q.instruction.contains(&self.instruction)
        };
        if !instr_ok {
            return false;
        }
        if self.history_len.is_some_and(|n| n != q.history.len()) {
            return false;
        }
        if !q.history.ends_with(&self.history_suffix) {
            return false;
        }
        match (&self.explanation, &q.explanation) {
            (None, _) => true,
            (Some(want), Some(have)) => have.contains(want.as_str()),
            (Some(_), None) => false,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompletionKind {
    #[default]
    Plan,
    Explanation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CannedCompletion {
    pub instruction: String,
    #[serde(default, skip_serializing_if = "is_false")]
    pub exact: bool,
    #[serde(default)]
    pub kind: CompletionKind,
    pub text: String,
}

/// Serialized form of a [`TableScorer`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScorerTable {
    #[serde(default = "one")]
    pub format_version: u32,
    /// Probability mass given to candidates a matching rule does not list.
    #[serde(default = "default_floor")]
    pub floor: f64,
    #[serde(default = "human")]
    pub human_prefix: String,
    #[serde(default = "robot")]
    pub robot_prefix: String,
    #[serde(default = "explanation")]
    pub explanation_label: String,
    pub rules: Vec<TableRule>,
    #[serde(default)]
    pub generations: Vec<CannedCompletion>,
}

fn one() -> u32 {
    1
}
fn default_floor() -> f64 {
    1e-6
}
fn human() -> String {
    "Human:".into()
}
fn robot() -> String {
    "Robot:".into()
}
fn explanation() -> String {
    "Explanation:".into()
}

impl Default for ScorerTable {
    fn default() -> Self {
        Self {
            format_version: 1,
            floor: default_floor(),
            human_prefix: human(),
            robot_prefix: robot(),
            explanation_label: explanation(),
            rules: Vec::new(),
            generations: Vec::new(),
        }
    }
}

impl ScorerTable {
    pub fn validate(&self) -> Result<(), ScoreError> {
        if !(self.floor > 0.0 && self.floor.is_finite()) {
            return Err(ScoreError::Table(format!("floor must be positive, got {}", self.floor)));
        }
        for (i, r) in self.rules.iter().enumerate() {
            if r.distribution.values().any(|m| !m.is_finite() || *m < 0.0) {
                return Err(ScoreError::Table(format!("rule {i}: masses must be finite and >= 0")));
            }
            if !r.distribution.values().any(|m| *m > 0.0) {
                return Err(ScoreError::Table(format!("rule {i}: no positive mass")));
            }
        }
        Ok(())
    }

    /// A table that scores probability 1 on each next step of the given
    /// plans and then on "done", with matching canned plan generations.
    pub fn oracle<'a, I>(plans: I) -> Self
    where
        I: IntoIterator<Item = (&'a str, &'a [SkillLabel])>,
    {
        let mut table = Self::default();
        for (instruction, plan) in plans {
            for t in 0..=plan.len() {
                let next = plan.get(t).map(SkillLabel::as_str).unwrap_or(DONE);
                table.rules.push(TableRule {
                    instruction: instruction.to_string(),
                    exact: true,
                    history_suffix: plan[..t].iter().map(|l| l.to_string()).collect(),
                    history_len: Some(t),
                    explanation: None,
                    distribution: BTreeMap::from([(next.to_string(), 1.0)]),
                });
            }
            table.generations.push(CannedCompletion {
                instruction: instruction.to_string(),
                exact: true,
                kind: CompletionKind::Plan,
                text: render_plan_text(plan),
            });
        }
        table
    }
}

/// `"1. a, 2. b, 3. done"`.
pub fn render_plan_text(plan: &[SkillLabel]) -> String {
    plan.iter()
        .map(SkillLabel::as_str)
        .chain(std::iter::once(DONE))
        .enumerate()
        .map(|(i, l)| format!("{}. {}", i + 1, l))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Deterministic scorer reading the live query out of the prompt and
/// answering from an ordered rule table; first matching rule wins, no match
/// falls back to uniform.
#[derive(Clone, Debug)]
pub struct TableScorer {
    table: ScorerTable,
}

impl TableScorer {
    pub fn new(table: ScorerTable) -> Result<Self, ScoreError> {
        table.validate()?;
        Ok(Self { table })
    }

    pub fn from_json(text: &str) -> Result<Self, ScoreError> {
        let table: ScorerTable =
            serde_json::from_str(text).map_err(|e| ScoreError::Table(e.to_string()))?;
        Self::new(table)
    }

    pub fn table(&self) -> &ScorerTable {
        &self.table
    }

    fn live_query(&self, prompt: &str) -> Option<LiveQuery> {
        LiveQuery::parse_with(
            prompt,
            &self.table.human_prefix,
            &self.table.robot_prefix,
            &self.table.explanation_label,
        )
    }
}

impl Scorer for TableScorer {
    fn score(&self, request: &ScoreRequest) -> Result<ScoreResponse, ScoreError> {
        let n = request.candidates.len();
        let rule = self
            .live_query(&request.prompt)
            .and_then(|q| self.table.rules.iter().find(|r| r.matches(&q)));
        let logprobs = match rule {
            None => uniform_logprobs(n),
            Some(rule) => request
                .candidates
                .iter()
                .map(|c| {
                    let mass = rule.distribution.get(c.as_str()).copied().unwrap_or(0.0);
                    mass.max(self.table.floor).ln()
                })
                .collect(),
        };
        Ok(ScoreResponse { logprobs })
    }

    fn generate(&self, prompt: &str, _max_tokens: usize) -> Result<String, ScoreError> {
        let q = self
            .live_query(prompt)
            .ok_or_else(|| ScoreError::NoCompletion("prompt has no live query".into()))?;
        let kind = if q.awaiting_explanation {
            CompletionKind::Explanation
        } else {
            CompletionKind::Plan
        };
        self.table
            .generations
            .iter()
            .find(|g| {
                g.kind == kind
                    && if g.exact {
                        g.instruction == q.instruction
                    } else {
                        q.instruction.contains(&g.instruction)
                    }
            })
            .map(|g| g.text.clone())
            .ok_or_else(|| ScoreError::NoCompletion(q.instruction.clone()))
    }

    fn name(&self) -> &str {
        "table"
    }
}

// ---------------------------------------------------------------------------
// Remote client
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub base_url: String,
    /// Upper bound on concurrent HTTP requests issued by this client.
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    /// Split the candidate set into requests of at most this many labels.
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
    /// Divide summed token logprobs by the token count. Only applies when the
    /// server returns per-token values.
    #[serde(default)]
    pub length_normalize: bool,
    #[serde(default, skip_serializing)]
    pub bearer_token: Option<String>,
}

fn default_in_flight() -> usize {
    4
}
fn default_retries() -> u32 {
    3
}
fn default_backoff() -> u64 {
    50
}
fn default_timeout() -> u64 {
    30_000
}

impl RemoteConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            max_in_flight: default_in_flight(),
            batch_size: None,
            max_retries: default_retries(),
            backoff_ms: default_backoff(),
            timeout_ms: default_timeout(),
            length_normalize: false,
            bearer_token: None,
        }
    }
}

/// Environment variable holding the bearer token for the remote scorer.
pub const TOKEN_ENV: &str = "SAYCAN_SCORER_TOKEN";

#[derive(Serialize)]
struct WireScoreRequest<'a> {
    prompt: &'a str,
    candidates: &'a [SkillLabel],
}

#[derive(Deserialize)]
struct WireScoreResponse {
    #[serde(default)]
    logprobs: Option<Vec<f64>>,
    #[serde(default)]
    token_logprobs: Option<Vec<Vec<f64>>>,
}

#[derive(Serialize)]
struct WireGenerateRequest<'a> {
    prompt: &'a str,
    max_tokens: usize,
}

#[derive(Deserialize)]
struct WireGenerateResponse {
    text: String,
}

struct InFlight {
    limit: usize,
    used: Mutex<usize>,
    freed: Condvar,
}

impl InFlight {
    fn acquire(&self) -> InFlightGuard<'_> {
        let mut used = self.used.lock().expect("in-flight lock poisoned");
        while *used >= self.limit {
            used = self.freed.wait(used).expect("in-flight lock poisoned");
        }
        *used += 1;
        InFlightGuard(self)
    }
}

struct InFlightGuard<'a>(&'a InFlight);

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        let mut used = self.0.used.lock().expect("in-flight lock poisoned");
        *used -= 1;
        self.0.freed.notify_one();
    }
}

/// HTTP scorer: `POST /score {prompt, candidates}` and
/// `POST /generate {prompt, max_tokens}`.
pub struct RemoteScorer {
    cfg: RemoteConfig,
    agent: ureq::Agent,
    in_flight: InFlight,
}

impl RemoteScorer {
    pub fn new(mut cfg: RemoteConfig) -> Self {
        if cfg.bearer_token.is_none() {
            cfg.bearer_token = std::env::var(TOKEN_ENV).ok();
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(cfg.timeout_ms)))
            .build()
            .into();
        let limit = cfg.max_in_flight.max(1);
        Self {
            cfg,
            agent,
            in_flight: InFlight {
                limit,
                used: Mutex::new(0),
                freed: Condvar::new(),
            },
        }
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.cfg
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.cfg.base_url.trim_end_matches('/'), path)
    }

    fn post<B: Serialize, R: serde::de::DeserializeOwned>(&self, path: &str, body: &B) -> Result<R, ScoreError> {
        let mut attempt = 0;
        loop {
            let result = {
                let _slot = self.in_flight.acquire();
                self.post_once(path, body)
            };
            match result {
                Err(e) if e.is_retryable() && attempt < self.cfg.max_retries => {
                    let wait = self.cfg.backoff_ms.saturating_mul(1 << attempt.min(16));
                    thread::sleep(Duration::from_millis(wait));
                    attempt += 1;
                }
                other => return other,
            }
        }
    }

    fn post_once<B: Serialize, R: serde::de::DeserializeOwned>(&self, path: &str, body: &B) -> Result<R, ScoreError> {
        let mut req = self.agent.post(self.url(path));
        if let Some(token) = &self.cfg.bearer_token {
            req = req.header("Authorization", format!("Bearer {token}"));
        }
        let mut resp = req.send_json(body).map_err(classify)?;
        resp.body_mut()
            .read_json::<R>()
            .map_err(|e| ScoreError::Protocol(format!("malformed response: {e}")))
    }

    fn score_chunk(&self, prompt: &str, candidates: &[SkillLabel]) -> Result<Vec<f64>, ScoreError> {
        let resp: WireScoreResponse = self.post(
            "score",
            &WireScoreRequest {
                prompt,
                candidates,
            },
        )?;
        let logprobs = match (resp.logprobs, resp.token_logprobs) {
            (_, Some(tokens)) => tokens
                .iter()
                .map(|t| {
                    let sum: f64 = t.iter().sum();
                    if self.cfg.length_normalize && !t.is_empty() {
                        sum / t.len() as f64
                    } else {
                        sum
                    }
                })
                .collect(),
            (Some(l), None) => l,
            (None, None) => {
                return Err(ScoreError::Protocol("response has neither logprobs nor token_logprobs".into()))
            }
        };
        if logprobs.len() != candidates.len() {
            return Err(ScoreError::Protocol(format!(
                "expected {} logprobs, got {}",
                candidates.len(),
                logprobs.len()
            )));
        }
        Ok(logprobs)
    }
}

fn classify(e: ureq::Error) -> ScoreError {
    match e {
        ureq::Error::StatusCode(code) if code == 429 || code >= 500 => {
            ScoreError::Transport(format!("HTTP {code}"))
        }
        ureq::Error::StatusCode(code) => ScoreError::Protocol(format!("HTTP {code}")),
        ureq::Error::Io(_)
        | ureq::Error::Timeout(_)
        | ureq::Error::HostNotFound
        | ureq::Error::ConnectionFailed => ScoreError::Transport(e.to_string()),
        other => ScoreError::Protocol(other.to_string()),
    }
}

impl Scorer for RemoteScorer {
    fn score(&self, request: &ScoreRequest) -> Result<ScoreResponse, ScoreError> {
        let size = self.cfg.batch_size.unwrap_or(request.candidates.len()).max(1);
        let chunks: Vec<&[SkillLabel]> = request.candidates.chunks(size).collect();
        if chunks.len() == 1 {
            let logprobs = self.score_chunk(&request.prompt, chunks[0])?;
            return Ok(ScoreResponse { logprobs });
        }
        // Chunks go out concurrently (bounded by the in-flight limit) and are
        // reassembled in request order.
        let results: Vec<Result<Vec<f64>, ScoreError>> = thread::scope(|s| {
            let handles: Vec<_> = chunks
                .iter()
                .map(|c| s.spawn(|| self.score_chunk(&request.prompt, c)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err(ScoreError::Transport("worker panicked".into()))))
                .collect()
        });
        let mut logprobs = Vec::with_capacity(request.candidates.len());
        for r in results {
            logprobs.extend(r?);
        }
        Ok(ScoreResponse { logprobs })
    }

    fn generate(&self, prompt: &str, max_tokens: usize) -> Result<String, ScoreError> {
        let resp: WireGenerateResponse = self.post("generate", &WireGenerateRequest { prompt, max_tokens })?;
        Ok(resp.text)
    }

    fn name(&self) -> &str {
        "remote"
    }
}
