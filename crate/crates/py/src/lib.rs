//! Python bindings: model construction, exact solving, bounds, and policy
//! simulation. See `python/smoke_test.py` for usage.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use psomdp::bnb::{solve_bnb, BnbConfig};
use psomdp::bounds::{
    check_composable, lower_bound_suffix, omniscient_values, upper_bound_divisor, SuffixSpec,
};
use psomdp::compose::CapacityConfig;
use psomdp::domains::{
    build_counterexample, build_gridworld, builtin, model_from_json, model_to_json,
    CounterexampleVariant, GridSpec,
};
use psomdp::oracle::{finite_horizon_value, simulate_policy};
use psomdp::solver::{solve_naive, SolverConfig};
use psomdp::{PsoMdp, SeqId};

fn input_err(err: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(err.to_string())
}

fn solve_err(err: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(err.to_string())
}

fn solver_config(tolerance: f64) -> SolverConfig {
    SolverConfig { tolerance, ..SolverConfig::default() }
}

/// A validated periodically state-observed MDP.
#[pyclass(name = "Model", frozen)]
struct PyModel {
    inner: PsoMdp,
}

#[pymethods]
impl PyModel {
    /// Parses the model JSON format.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<PyModel> {
        Ok(PyModel { inner: model_from_json(text).map_err(input_err)? })
    }

    /// Loads a model JSON file.
    #[staticmethod]
    fn load(path: &str) -> PyResult<PyModel> {
        Ok(PyModel {
            inner: psomdp::domains::load_model(std::path::Path::new(path)).map_err(input_err)?,
        })
    }

    /// Builds a grid world from a grid-spec JSON string.
    #[staticmethod]
    fn gridworld(spec_json: &str) -> PyResult<PyModel> {
        let spec = GridSpec::from_json(spec_json).map_err(input_err)?;
        Ok(PyModel { inner: build_gridworld(&spec).map_err(input_err)? })
    }

    /// One of the named builtin instances, with optional overrides.
    #[staticmethod]
    #[pyo3(signature = (name, k=None, gamma=None))]
    fn builtin(name: &str, k: Option<u32>, gamma: Option<f64>) -> PyResult<PyModel> {
        let mut spec = builtin(name).map_err(input_err)?;
        if let Some(k) = k {
            spec.checkin_period = k;
        }
        if let Some(g) = gamma {
            spec.gamma = g;
        }
        Ok(PyModel { inner: build_gridworld(&spec).map_err(input_err)? })
    }

    /// The fixed corridor counterexample at period 2 or 3.
    #[staticmethod]
    fn counterexample(k: u32) -> PyResult<PyModel> {
        let variant = match k {
            2 => CounterexampleVariant::K2,
            3 => CounterexampleVariant::K3,
            other => return Err(input_err(format!("counterexample period must be 2 or 3, got {other}"))),
        };
        Ok(PyModel { inner: build_counterexample(variant) })
    }

    #[getter]
    fn num_states(&self) -> usize {
        self.inner.num_states()
    }

    #[getter]
    fn num_actions(&self) -> usize {
        self.inner.num_actions()
    }

    #[getter]
    fn checkin_period(&self) -> u32 {
        self.inner.checkin_period()
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.discount()
    }

    #[getter]
    fn nop_action(&self) -> Option<usize> {
        self.inner.nop_action()
    }

    fn content_hash(&self) -> String {
        self.inner.content_hash()
    }

    fn to_json(&self) -> String {
        model_to_json(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(states={}, actions={}, k={}, gamma={})",
            self.inner.num_states(),
            self.inner.num_actions(),
            self.inner.checkin_period(),
            self.inner.discount()
        )
    }
}

/// Result of an exact solve.
#[pyclass(name = "Solution", frozen)]
struct PySolution {
    #[pyo3(get)]
    values: Vec<f64>,
    #[pyo3(get)]
    policy: Vec<Vec<usize>>,
    #[pyo3(get)]
    iterations: usize,
    #[pyo3(get)]
    residual: f64,
    #[pyo3(get)]
    pruned_fraction: Option<f64>,
}

/// Solves a model exactly with the requested method ("naive" or "bnb").
#[pyfunction]
#[pyo3(signature = (model, method="naive", tolerance=1e-9))]
fn solve(model: &PyModel, method: &str, tolerance: f64) -> PyResult<PySolution> {
    let config = solver_config(tolerance);
    let capacity = CapacityConfig::default();
    let (solution, pruned) = match method {
        "naive" => (solve_naive(&model.inner, &config, &capacity).map_err(solve_err)?, None),
        "bnb" => {
            let bnb = BnbConfig { solver: config, capacity, ..BnbConfig::default() };
            let (solution, stats) = solve_bnb(&model.inner, &bnb).map_err(solve_err)?;
            (solution, Some(stats.pruned_fraction))
        }
        other => return Err(input_err(format!("unknown method '{other}'"))),
    };
    let num_actions = model.inner.num_actions();
    Ok(PySolution {
        values: solution.values.as_slice().to_vec(),
        policy: solution.policy.iter().map(|seq| seq.decode(num_actions)).collect(),
        iterations: solution.stats.iterations,
        residual: solution.stats.residual,
        pruned_fraction: pruned,
    })
}

/// Per-state value of the every-step observation relaxation.
#[pyfunction]
#[pyo3(signature = (model, tolerance=1e-9))]
fn omniscient(model: &PyModel, tolerance: f64) -> PyResult<Vec<f64>> {
    let values =
        omniscient_values(&model.inner, &solver_config(tolerance), &CapacityConfig::default())
            .map_err(solve_err)?;
    Ok(values.as_slice().to_vec())
}

/// Per-state upper bound from re-planning every `ell` steps (`ell` must
/// divide the period).
#[pyfunction]
#[pyo3(signature = (model, ell, tolerance=1e-9))]
fn upper_bound(model: &PyModel, ell: u32, tolerance: f64) -> PyResult<Vec<f64>> {
    let table = upper_bound_divisor(
        &model.inner,
        ell,
        &solver_config(tolerance),
        &CapacityConfig::default(),
        None,
    )
    .map_err(solve_err)?;
    Ok((0..model.inner.num_states())
        .map(|s| table.best(s).map(|(_, v)| v).unwrap_or(f64::NEG_INFINITY))
        .collect())
}

/// Per-state lower bound from optimizing length-`tau` prefixes over a fixed
/// suffix ("nop" or "action:<i>").
#[pyfunction]
#[pyo3(signature = (model, tau, suffix="nop", tolerance=1e-9))]
fn lower_bound(model: &PyModel, tau: u32, suffix: &str, tolerance: f64) -> PyResult<Vec<f64>> {
    let spec = if suffix == "nop" {
        SuffixSpec::NopRepeat
    } else if let Some(idx) = suffix.strip_prefix("action:") {
        SuffixSpec::ActionRepeat(idx.parse().map_err(|_| input_err("bad suffix action index"))?)
    } else {
        return Err(input_err("suffix must be 'nop' or 'action:<i>'"));
    };
    let (_, values) = lower_bound_suffix(
        &model.inner,
        tau,
        &spec,
        &solver_config(tolerance),
        &CapacityConfig::default(),
        None,
    )
    .map_err(solve_err)?;
    Ok(values.as_slice().to_vec())
}

/// Whether every stride in `members` composes to the period, plus the
/// materialized offset lattice.
#[pyfunction]
fn composable(members: Vec<u32>, period: u32) -> (bool, Vec<u32>) {
    check_composable(&members, period)
}

/// Monte-Carlo estimate `(mean, standard_error)` of a policy's discounted
/// return; bit-reproducible for a fixed seed.
#[pyfunction]
#[pyo3(signature = (model, policy, start=0, episodes=10_000, horizon_periods=64, seed=42))]
fn simulate(
    model: &PyModel,
    policy: Vec<Vec<usize>>,
    start: usize,
    episodes: u64,
    horizon_periods: u32,
    seed: u64,
) -> PyResult<(f64, f64)> {
    let seqs = encode_policy(&model.inner, &policy)?;
    Ok(simulate_policy(&model.inner, &seqs, start, episodes, horizon_periods, seed))
}

/// Exact truncated policy value by forward propagation.
#[pyfunction]
#[pyo3(signature = (model, policy, start=0, horizon_periods=64))]
fn policy_value(
    model: &PyModel,
    policy: Vec<Vec<usize>>,
    start: usize,
    horizon_periods: u32,
) -> PyResult<f64> {
    let seqs = encode_policy(&model.inner, &policy)?;
    Ok(finite_horizon_value(&model.inner, &seqs, start, horizon_periods))
}

fn encode_policy(model: &PsoMdp, policy: &[Vec<usize>]) -> PyResult<Vec<SeqId>> {
    if policy.len() != model.num_states() {
        return Err(input_err(format!(
            "policy covers {} states, model has {}",
            policy.len(),
            model.num_states()
        )));
    }
    policy
        .iter()
        .map(|actions| {
            if actions.len() != model.checkin_period() as usize {
                return Err(input_err("policy sequences must have length equal to the period"));
            }
            SeqId::encode(actions, model.num_actions()).map_err(input_err)
        })
        .collect()
}

#[pymodule]
fn psomdp_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_class::<PySolution>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(omniscient, m)?)?;
    m.add_function(wrap_pyfunction!(upper_bound, m)?)?;
    m.add_function(wrap_pyfunction!(lower_bound, m)?)?;
    m.add_function(wrap_pyfunction!(composable, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(policy_value, m)?)?;
    Ok(())
}
