//! Python bindings: models, policies, logged streams, replay, sizing and the
//! experiment runner.

use std::path::PathBuf;
use std::sync::Mutex;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;

use cabreplay::harness::{self, Mode, Overrides};
use cabreplay::metrics;
use cabreplay::policies::{Policy as _, PolicySpec};
use cabreplay::replay::{self, LoggedEvent};
use cabreplay::reward_models::{self, ModelFamily};
use cabreplay::{Error, SimRng};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        Error::Config { .. } | Error::ConfigSyntax(_) | Error::InvalidParameter { .. } | Error::InvalidRange { .. } => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn range(lo: f64, hi: f64) -> PyResult<reward_models::ActionRange> {
    reward_models::ActionRange::new(lo, hi).map_err(to_py)
}

/// A ground-truth reward function on an action interval.
#[pyclass(frozen)]
struct RewardModel {
    inner: reward_models::RewardModel,
}

#[pymethods]
impl RewardModel {
    /// `-scale * (a - peak)^2` with Gaussian noise of variance `noise_var`.
    #[staticmethod]
    #[pyo3(signature = (peak, scale=1.0, noise_var=0.01, lo=0.0, hi=1.0))]
    fn parabola(peak: f64, scale: f64, noise_var: f64, lo: f64, hi: f64) -> PyResult<Self> {
        let m = reward_models::ParabolaModel::new(peak, scale, noise_var, range(lo, hi)?).map_err(to_py)?;
        Ok(Self { inner: m.into() })
    }

    /// A random model from the `"parabola"` or `"bimodal"` family.
    #[staticmethod]
    #[pyo3(signature = (family, seed, noise_var=0.01, lo=0.0, hi=1.0))]
    fn draw(family: &str, seed: u64, noise_var: f64, lo: f64, hi: f64) -> PyResult<Self> {
        let family = match family {
            "parabola" => ModelFamily::Parabola { scale: ModelFamily::DEFAULT_PARABOLA_SCALE },
            "bimodal" => ModelFamily::Bimodal { max_drop: ModelFamily::DEFAULT_BIMODAL_MAX_DROP },
            other => return Err(PyValueError::new_err(format!("unknown family `{other}`"))),
        };
        let inner = family.draw(&mut SimRng::seed_from_u64(seed), range(lo, hi)?, noise_var).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn family(&self) -> &'static str {
        self.inner.family()
    }

    fn mean_reward(&self, a: f64) -> f64 {
        self.inner.mean_reward(a)
    }

    /// `(a_star, r_star)`.
    fn optimum(&self) -> (f64, f64) {
        self.inner.optimum()
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

/// A CAB policy with its own seeded random source.
#[pyclass]
struct Policy {
    inner: Mutex<(Box<dyn cabreplay::Policy>, SimRng)>,
    label: &'static str,
}

#[pymethods]
impl Policy {
    /// `kind` is one of `UR`, `EF`, `TBL`, `LiF` or `FIXED`; parameters not
    /// given take the study defaults.
    #[new]
    #[pyo3(signature = (kind, seed=0, lo=0.0, hi=1.0, exploration=None, action=None, a0=None))]
    fn new(
        kind: &str,
        seed: u64,
        lo: f64,
        hi: f64,
        exploration: Option<usize>,
        action: Option<f64>,
        a0: Option<f64>,
    ) -> PyResult<Self> {
        let spec = match kind {
            "UR" => PolicySpec::uniform(),
            "EF" => PolicySpec::epsilon_first(exploration.unwrap_or(PolicySpec::SIMULATION_EXPLORATION)),
            "TBL" => PolicySpec::thompson(),
            "LiF" => match PolicySpec::lock_in() {
                PolicySpec::LockIn { amplitude, window, gamma, omega, .. } => {
                    PolicySpec::LockIn { a0, amplitude, window, gamma, omega }
                }
                _ => unreachable!(),
            },
            "FIXED" => PolicySpec::Fixed {
                action: action.ok_or_else(|| PyValueError::new_err("FIXED needs `action`"))?,
            },
            other => return Err(PyValueError::new_err(format!("unknown policy `{other}`"))),
        };
        let mut rng = SimRng::seed_from_u64(seed);
        let policy = spec.build(range(lo, hi)?, &mut rng).map_err(to_py)?;
        Ok(Self { inner: Mutex::new((policy, rng)), label: spec.label() })
    }

    #[getter]
    fn name(&self) -> &'static str {
        self.label
    }

    #[getter]
    fn steps(&self) -> u64 {
        self.inner.lock().unwrap().0.steps()
    }

    fn propose(&self) -> PyResult<f64> {
        let mut guard = self.inner.lock().unwrap();
        let (policy, rng) = &mut *guard;
        policy.propose(rng).map_err(to_py)
    }

    fn update(&self, action: f64, reward: f64) -> PyResult<()> {
        self.inner.lock().unwrap().0.update(action, reward).map_err(to_py)
    }
}

/// A uniformly-logged `(index, action, reward)` stream.
#[pyclass(frozen)]
struct LoggedStream {
    inner: replay::LoggedStream,
}

#[pymethods]
impl LoggedStream {
    #[new]
    #[pyo3(signature = (actions, rewards, lo=0.0, hi=1.0))]
    fn new(actions: Vec<f64>, rewards: Vec<f64>, lo: f64, hi: f64) -> PyResult<Self> {
        if actions.len() != rewards.len() {
            return Err(PyValueError::new_err("actions and rewards differ in length"));
        }
        let events = actions
            .into_iter()
            .zip(rewards)
            .enumerate()
            .map(|(i, (action, reward))| LoggedEvent { index: i as u64, action, reward })
            .collect();
        Ok(Self { inner: replay::LoggedStream::new(events, range(lo, hi)?).map_err(to_py)? })
    }

    #[staticmethod]
    fn generate(model: &RewardModel, length: usize, seed: u64) -> PyResult<Self> {
        let inner =
            replay::generate_logged_stream(&model.inner, length, &mut SimRng::seed_from_u64(seed)).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (path, lo=0.0, hi=1.0))]
    fn load(path: PathBuf, lo: f64, hi: f64) -> PyResult<Self> {
        Ok(Self { inner: replay::load_stream(path, range(lo, hi)?).map_err(to_py)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        replay::save_stream(&self.inner, path).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn actions(&self) -> Vec<f64> {
        self.inner.events().iter().map(|e| e.action).collect()
    }

    #[getter]
    fn rewards(&self) -> Vec<f64> {
        self.inner.events().iter().map(|e| e.reward).collect()
    }
}

/// Replays `stream` through `policy` with tolerance `delta`. Returns a dict
/// with `T`, `actions`, `rewards` and `cumulative_reward`.
#[pyfunction]
fn replay_cab<'py>(py: Python<'py>, policy: &Policy, stream: &LoggedStream, delta: f64) -> PyResult<Bound<'py, PyDict>> {
    if !(delta.is_finite() && delta > 0.0) {
        return Err(PyValueError::new_err(format!("delta must be > 0, got {delta}")));
    }
    let mut guard = policy.inner.lock().unwrap();
    let (p, rng) = &mut *guard;
    let trace =
        replay::replay_cab(p, &stream.inner, &replay::ReplayConfig::unchecked(delta), rng).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("T", trace.accepted())?;
    out.set_item("actions", trace.records().iter().map(|r| r.action).collect::<Vec<_>>())?;
    out.set_item("rewards", trace.records().iter().map(|r| r.reward).collect::<Vec<_>>())?;
    out.set_item("cumulative_reward", trace.cumulative_reward())?;
    Ok(out)
}

/// Cumulative noiseless regret of a sequence of actions under `model`.
#[pyfunction]
fn cumulative_regret(model: &RewardModel, actions: Vec<f64>) -> Vec<f64> {
    let mut trace = replay::Trace::with_capacity(actions.len());
    for (i, a) in actions.into_iter().enumerate() {
        trace.push(i as u64, a, model.inner.mean_reward(a));
    }
    metrics::cumulative_regret(&trace, &model.inner).into_inner()
}

#[pyfunction]
#[pyo3(signature = (delta, lo=0.0, hi=1.0))]
fn acceptance_probability(delta: f64, lo: f64, hi: f64) -> PyResult<f64> {
    Ok(replay::acceptance_probability(delta, range(lo, hi)?))
}

#[pyfunction]
#[pyo3(signature = (t_prime, delta, lo=0.0, hi=1.0))]
fn required_log_length(t_prime: u64, delta: f64, lo: f64, hi: f64) -> PyResult<u64> {
    replay::required_log_length(t_prime, delta, range(lo, hi)?).map_err(to_py)
}

/// `(policy, value, rank, tie_group)`; `None` fields are "n/a".
type RankRow = (String, Option<f64>, Option<usize>, Option<usize>);

/// Runs the experiment described by a TOML config and writes its artifacts.
/// Returns the written paths and the rank tables as
/// `{delta: [(policy, value, rank, tie_group), ...]}`.
#[pyfunction]
#[pyo3(signature = (config, mode=None, seed=None, out=None, workers=None))]
fn run_experiment<'py>(
    py: Python<'py>,
    config: PathBuf,
    mode: Option<&str>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    workers: Option<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let mode = mode.map(|m| m.parse::<Mode>()).transpose().map_err(to_py)?;
    let ov = Overrides { mode, seed, output: out, workers };
    let (results, written) = py
        .detach(|| -> cabreplay::Result<_> {
            let cfg = harness::parse_config_with(&config, &ov)?;
            let results = harness::run(&cfg)?;
            let written = harness::write_results(&results, &cfg.output)?;
            Ok((results, written))
        })
        .map_err(to_py)?;

    let ranks = PyDict::new(py);
    for r in &results.ranks {
        let rows: Vec<RankRow> = r
            .table
            .entries
            .iter()
            .map(|e| (e.policy.clone(), e.value, e.rank, e.tie_group))
            .collect();
        ranks.set_item(r.delta, rows)?;
    }
    let dict = PyDict::new(py);
    dict.set_item("written", written)?;
    dict.set_item("ranks", ranks)?;
    dict.set_item("errors", results.errors.len())?;
    dict.set_item("warnings", results.warnings.clone())?;
    Ok(dict)
}

#[pymodule]
fn cabreplay_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<RewardModel>()?;
    m.add_class::<Policy>()?;
    m.add_class::<LoggedStream>()?;
    m.add_function(wrap_pyfunction!(replay_cab, m)?)?;
    m.add_function(wrap_pyfunction!(cumulative_regret, m)?)?;
    m.add_function(wrap_pyfunction!(acceptance_probability, m)?)?;
    m.add_function(wrap_pyfunction!(required_log_length, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
