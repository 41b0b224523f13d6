//! Python bindings. Parameter sets and results cross the boundary as plain
//! dicts and lists with the same keys as the JSON artifacts of the CLI.

use pullin_core::basins::{self, GridSpec};
use pullin_core::continuation;
use pullin_core::model::{self, PhysicalParams};
use pullin_core::poincare::{self, PoincareMapSpec};
use pullin_core::thresholds::{self, ThresholdReport};
use pullin_core::{Error, Integrator, IntegratorConfig, ModelParams, State};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyModule;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;

create_exception!(pullin, PullinError, PyException, "Solver failure.");
create_exception!(pullin, NoConvergence, PullinError, "Newton or the continuation did not converge.");
create_exception!(pullin, BracketInvalid, PullinError, "The orbit still exists at the upper damping.");

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::InvalidParameter(_) | Error::UndefinedRatio { .. } => PyValueError::new_err(e.to_string()),
        Error::NoConvergence { .. } | Error::EventInterrupted(_) | Error::SeedInvalid { .. } => {
            NoConvergence::new_err(e.to_string())
        }
        Error::BracketInvalid { .. } => BracketInvalid::new_err(e.to_string()),
        _ => PullinError::new_err(e.to_string()),
    }
}

/// Decode a Python object through its JSON form.
fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let json = PyModule::import(obj.py(), "json")?;
    let text: String = json.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    PyModule::import(py, "json")?.call_method1("loads", (text,))
}

fn integrator_config(obj: Option<&Bound<'_, PyAny>>) -> PyResult<IntegratorConfig> {
    obj.map(from_py).transpose().map(Option::unwrap_or_default)
}

/// The bound `A_alpha` on `V_M^2` below which a T-periodic orbit is guaranteed.
#[pyfunction]
fn a_alpha(alpha: f64) -> f64 {
    thresholds::a_alpha(alpha)
}

/// Static pull-in bound on `lambda^2`.
#[pyfunction]
fn static_threshold(alpha: f64) -> f64 {
    thresholds::static_threshold(alpha)
}

/// Full analytical report for a parameter dict.
#[pyfunction]
fn threshold_report<'py>(model: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    let p: ModelParams = from_py(model)?;
    to_py(model.py(), &ThresholdReport::new(&p))
}

/// Dimensionless group for a physical device description.
#[pyfunction]
fn nondimensionalize<'py>(physical: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    let pp: PhysicalParams = from_py(physical)?;
    to_py(physical.py(), &model::nondimensionalize(&pp).map_err(to_py_err)?)
}

/// Trajectory from `initial` at time `t0`, sampled at `samples` uniform times up to `t_end`.
#[pyfunction]
#[pyo3(signature = (model, initial, t_end, samples = 1000, t0 = 0.0, integrator = None))]
fn simulate<'py>(
    py: Python<'py>,
    model: &Bound<'py, PyAny>,
    initial: [f64; 2],
    t_end: f64,
    samples: usize,
    t0: f64,
    integrator: Option<&Bound<'py, PyAny>>,
) -> PyResult<Bound<'py, PyAny>> {
    let p: ModelParams = from_py(model)?;
    let cfg = integrator_config(integrator)?;
    let times: Vec<f64> = match samples {
        0 => Vec::new(),
        1 => vec![t0],
        m => (0..m).map(|k| t0 + (t_end - t0) * k as f64 / (m - 1) as f64).collect(),
    };
    let out = py
        .detach(|| Integrator::new(&p, &cfg)?.integrate(State::new(initial[0], initial[1], t0), t_end, &times))
        .map_err(to_py_err)?;
    let value = json!({
        "outcome": out.record(),
        "t": out.samples.iter().map(|s| s.t).collect::<Vec<_>>(),
        "x": out.samples.iter().map(|s| s.x).collect::<Vec<_>>(),
        "v": out.samples.iter().map(|s| s.v).collect::<Vec<_>>(),
    });
    to_py(py, &value)
}

/// Newton search for an `n`T-periodic orbit; the result reports its minimal period.
#[pyfunction]
#[pyo3(signature = (model, n, guess, integrator = None))]
fn find_orbit<'py>(
    py: Python<'py>,
    model: &Bound<'py, PyAny>,
    n: usize,
    guess: [f64; 2],
    integrator: Option<&Bound<'py, PyAny>>,
) -> PyResult<Bound<'py, PyAny>> {
    let spec = PoincareMapSpec::new(from_py(model)?, integrator_config(integrator)?, n).map_err(to_py_err)?;
    let orbit = py.detach(|| poincare::find_orbit(&spec, guess)).map_err(to_py_err)?;
    to_py(py, &orbit)
}

/// Section points of the `n`-period map from each seed.
#[pyfunction]
#[pyo3(signature = (model, seeds, iterations, n = 1, integrator = None))]
fn pss_scan<'py>(
    py: Python<'py>,
    model: &Bound<'py, PyAny>,
    seeds: Vec<[f64; 2]>,
    iterations: usize,
    n: usize,
    integrator: Option<&Bound<'py, PyAny>>,
) -> PyResult<Bound<'py, PyAny>> {
    let spec = PoincareMapSpec::new(from_py(model)?, integrator_config(integrator)?, n).map_err(to_py_err)?;
    let traces = py.detach(|| poincare::pss_scan(&spec, &seeds, iterations)).map_err(to_py_err)?;
    let value: Vec<_> = traces
        .iter()
        .map(|t| {
            json!({
                "seed_id": t.seed_id,
                "termination": t.termination.name(),
                "t_event": t.termination.event_time().filter(|x| x.is_finite()),
                "points": t.points,
            })
        })
        .collect();
    to_py(py, &value)
}

/// Classify a grid of initial conditions. `grid` has the keys of the CLI's
/// grid block: `x_range`, `v_range`, `nx`, `nv`, `iterations` and optionally
/// `attractors`, `match_tol`, `block`.
#[pyfunction]
#[pyo3(signature = (model, grid, integrator = None))]
fn basin_grid<'py>(
    py: Python<'py>,
    model: &Bound<'py, PyAny>,
    grid: &Bound<'py, PyAny>,
    integrator: Option<&Bound<'py, PyAny>>,
) -> PyResult<Bound<'py, PyAny>> {
    let p: ModelParams = from_py(model)?;
    let spec: GridSpec = from_py(grid)?;
    let cfg = integrator_config(integrator)?;
    let out = py.detach(|| basins::sweep(&p, &cfg, &spec)).map_err(to_py_err)?;
    to_py(py, &out)
}

/// Critical damping of the `n`T orbit through `guess` at the model's damping.
#[pyfunction]
#[pyo3(signature = (model, n, guess, c_hi, integrator = None))]
fn find_c_star<'py>(
    py: Python<'py>,
    model: &Bound<'py, PyAny>,
    n: usize,
    guess: [f64; 2],
    c_hi: f64,
    integrator: Option<&Bound<'py, PyAny>>,
) -> PyResult<Bound<'py, PyAny>> {
    let spec = PoincareMapSpec::new(from_py(model)?, integrator_config(integrator)?, n).map_err(to_py_err)?;
    let result = py
        .detach(|| {
            let seed = poincare::find_orbit(&spec, guess)?;
            continuation::find_c_star(&spec, &seed, c_hi)
        })
        .map_err(to_py_err)?;
    to_py(py, &result)
}

#[pymodule]
fn pullin(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("PullinError", py.get_type::<PullinError>())?;
    m.add("NoConvergence", py.get_type::<NoConvergence>())?;
    m.add("BracketInvalid", py.get_type::<BracketInvalid>())?;
    m.add_function(wrap_pyfunction!(a_alpha, m)?)?;
    m.add_function(wrap_pyfunction!(static_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(threshold_report, m)?)?;
    m.add_function(wrap_pyfunction!(nondimensionalize, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(find_orbit, m)?)?;
    m.add_function(wrap_pyfunction!(pss_scan, m)?)?;
    m.add_function(wrap_pyfunction!(basin_grid, m)?)?;
    m.add_function(wrap_pyfunction!(find_c_star, m)?)?;
    Ok(())
}
