//! Python bindings. Structured results cross the boundary as JSON and come
//! back as plain dicts and lists.

use pyo3::exceptions::{PyKeyError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyModule;

use saycan::affordance::{self, CalibrationConfig, SimulatedAffordances};
use saycan::assets;
use saycan::domain::{Instruction, InstructionCase};
use saycan::embedding::{self, Embedder as CoreEmbedder, EmbedderConfig};
use saycan::evalharness::{parse_suite, run_suite as core_run_suite, EvalDeps};
use saycan::planner::{run, PlannerConfig, PlannerDeps, PlannerMode};
use saycan::rng::stream;
use saycan::scoring::{Scorer, TableScorer, UniformScorer};
use saycan::simenv::{self, Scenario as CoreScenario};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Serializes through JSON into Python objects.
fn to_py<T: serde::Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(value_err)?;
    let json = PyModule::import(py, "json")?;
    Ok(json.call_method1("loads", (text,))?.unbind())
}

fn calibration() -> CalibrationConfig {
    CalibrationConfig::default()
}

/// Pick success value mapped to a probability.
#[pyfunction]
fn calibrate_pick(value: f64) -> f64 {
    affordance::calibrate_pick(value, &calibration())
}

/// Navigation distance in meters mapped to a probability.
#[pyfunction]
fn calibrate_goto(distance: f64) -> PyResult<f64> {
    affordance::calibrate_goto(distance, &calibration()).map_err(value_err)
}

#[pyfunction]
fn terminate_affordance() -> f64 {
    affordance::terminate_affordance(&calibration())
}

#[pyclass(module = "saycan_py")]
struct Embedder {
    inner: CoreEmbedder,
}

#[pymethods]
impl Embedder {
    #[new]
    #[pyo3(signature = (dim = embedding::DEFAULT_DIM, hash_seed = 0))]
    fn new(dim: usize, hash_seed: u64) -> PyResult<Self> {
        if dim == 0 {
            return Err(PyValueError::new_err("dim must be positive"));
        }
        Ok(Self {
            inner: CoreEmbedder::new(EmbedderConfig { dim, hash_seed }),
        })
    }

    fn embed(&self, text: &str) -> Vec<f64> {
        self.inner.embed(text).values().to_vec()
    }

    fn cosine(&self, a: &str, b: &str) -> f64 {
        embedding::cosine(&self.inner.embed(a), &self.inner.embed(b))
    }

    /// Nearest candidate to `text` and its cosine similarity.
    fn project(&self, text: &str, candidates: Vec<String>) -> PyResult<(String, f64)> {
        let (c, cos) = embedding::project_to_nearest(&self.inner, text, &candidates)
            .ok_or_else(|| PyValueError::new_err("no candidates"))?;
        Ok((c.to_string(), cos))
    }
}

#[pyclass(module = "saycan_py", from_py_object)]
#[derive(Clone)]
struct Scenario {
    inner: CoreScenario,
}

#[pymethods]
impl Scenario {
    /// A shipped scenario: kitchen, kitchen_drawers or tabletop.
    #[staticmethod]
    fn builtin(name: &str) -> PyResult<Self> {
        assets::registry()
            .remove(name)
            .map(|inner| Self { inner })
            .ok_or_else(|| PyKeyError::new_err(format!("no shipped scenario {name:?}")))
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        CoreScenario::from_json(text).map(|inner| Self { inner }).map_err(value_err)
    }

    #[getter]
    fn id(&self) -> String {
        self.inner.id.clone()
    }

    fn skill_labels(&self) -> Vec<String> {
        self.inner.skills.labels().iter().map(|l| l.to_string()).collect()
    }

    fn skills(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.skills)
    }

    fn initial_state(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &simenv::reset(&self.inner))
    }

    fn __repr__(&self) -> String {
        format!("Scenario({:?}, {} skills)", self.inner.id, self.inner.skills.len())
    }
}

fn make_scorer(table_json: Option<&str>, uniform: bool) -> PyResult<Box<dyn Scorer>> {
    Ok(match (table_json, uniform) {
        (_, true) => Box::new(UniformScorer),
        (Some(t), false) => Box::new(TableScorer::from_json(t).map_err(value_err)?),
        (None, false) => Box::new(TableScorer::new(assets::oracle_table()).map_err(value_err)?),
    })
}

fn check_prob(p: Option<f64>) -> PyResult<()> {
    match p {
        Some(p) if !(0.0..=1.0).contains(&p) => Err(PyValueError::new_err(format!("success_prob must be in [0, 1], got {p}"))),
        _ => Ok(()),
    }
}

fn parse_mode(mode: &str) -> PyResult<PlannerMode> {
    mode.parse().map_err(|e: String| PyValueError::new_err(e))
}

/// Plans and executes one instruction from the scenario's initial state.
/// Returns a dict with `trace`, `outcomes` and `final_state`.
#[pyfunction]
#[pyo3(signature = (instruction, scenario = None, mode = "saycan", seed = 0, max_steps = 20, scorer_table = None, uniform_scorer = false, success_prob = None))]
#[allow(clippy::too_many_arguments)]
fn run_episode(
    py: Python<'_>,
    instruction: &str,
    scenario: Option<Scenario>,
    mode: &str,
    seed: u64,
    max_steps: usize,
    scorer_table: Option<&str>,
    uniform_scorer: bool,
    success_prob: Option<f64>,
) -> PyResult<Py<PyAny>> {
    let mut s = match scenario {
        Some(s) => s.inner,
        None => assets::kitchen(),
    };
    check_prob(success_prob)?;
    if let Some(p) = success_prob {
        s = s.with_uniform_success(p);
    }
    let mode = parse_mode(mode)?;
    let scorer = make_scorer(scorer_table, uniform_scorer)?;
    let template = match mode {
        PlannerMode::Cot => assets::cot_prompt(),
        _ if s.skills.iter().any(|k| k.family.is_drawer()) => assets::drawers_prompt(),
        _ => assets::default_prompt(),
    };
    let embedder = CoreEmbedder::default();
    let affordances = SimulatedAffordances {
        calibration: s.calibration,
    };
    let deps = PlannerDeps {
        scorer: scorer.as_ref(),
        template: &template,
        affordances: &affordances,
        embedder: &embedder,
    };
    let cfg = PlannerConfig {
        max_steps,
        ..PlannerConfig::default()
    }
    .with_mode(mode);
    let instruction = Instruction::new(instruction).map_err(value_err)?;
    let start = simenv::reset(&s);
    let out = py
        .detach(|| run(&instruction, &s.skills, &start, Some(&s), &deps, &cfg, &mut stream(seed, 0)))
        .map_err(value_err)?;
    to_py(py, &out)
}

/// Runs a suite (the shipped kitchen suite by default) and returns the
/// report as a dict.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (mode = "saycan", seed = 0, repeats = 1, success_prob = None, suite_json = None, scorer_table = None, uniform_scorer = false))]
fn run_suite(
    py: Python<'_>,
    mode: &str,
    seed: u64,
    repeats: usize,
    success_prob: Option<f64>,
    suite_json: Option<&str>,
    scorer_table: Option<&str>,
    uniform_scorer: bool,
) -> PyResult<Py<PyAny>> {
    check_prob(success_prob)?;
    let suite: Vec<InstructionCase> = match suite_json {
        Some(t) => parse_suite(t).map_err(value_err)?,
        None => assets::kitchen_suite(),
    };
    let mode = parse_mode(mode)?;
    let registry = assets::registry();
    let scorer = make_scorer(scorer_table, uniform_scorer)?;
    let drawers = suite
        .iter()
        .any(|c| registry.get(&c.scenario).is_some_and(|s| s.skills.iter().any(|k| k.family.is_drawer())));
    let template = match mode {
        PlannerMode::Cot => assets::cot_prompt(),
        _ if drawers => assets::drawers_prompt(),
        _ => assets::default_prompt(),
    };
    let embedder = CoreEmbedder::default();
    let deps = EvalDeps {
        registry: &registry,
        scorer: scorer.as_ref(),
        template: &template,
        embedder: &embedder,
        success_prob,
    };
    let cfg = PlannerConfig::default().with_mode(mode);
    let report = py.detach(|| core_run_suite(&suite, &deps, &cfg, seed, repeats, None));
    to_py(py, &report)
}

#[pymodule]
fn saycan_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(calibrate_pick, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate_goto, m)?)?;
    m.add_function(wrap_pyfunction!(terminate_affordance, m)?)?;
    m.add_function(wrap_pyfunction!(run_episode, m)?)?;
    m.add_function(wrap_pyfunction!(run_suite, m)?)?;
    m.add_class::<Embedder>()?;
    m.add_class::<Scenario>()?;
    Ok(())
}
