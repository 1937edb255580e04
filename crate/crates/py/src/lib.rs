use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use starris_core::experiment::{self, ExperimentKind};
use starris_core::scenario::{stream_rng, ScenarioConfig, Scheme};
use starris_core::solvers::{self, AdmmKnobs, AmplitudeProblem, QcqpProblem};
use starris_core::star_ris::{design_surface, RisStructure};
use starris_core::{beam_gain, Error};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidConfig(_) | Error::InvalidGeometry(_) | Error::InvalidProblem(_) | Error::Parse(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn parse_scheme(s: &str) -> PyResult<Scheme> {
    Scheme::ALL
        .into_iter()
        .find(|x| x.as_str() == s)
        .ok_or_else(|| PyValueError::new_err(format!("unknown scheme {s:?}")))
}

/// `"fully"`, `"conventional"` or `"sub"` (needs `s1`, `s2`).
fn parse_structure(s: &str, s1: Option<usize>, s2: Option<usize>) -> PyResult<RisStructure> {
    match (s, s1, s2) {
        ("fully", ..) => Ok(RisStructure::FullyConnected),
        ("conventional", ..) => Ok(RisStructure::Conventional),
        ("sub", Some(s1), Some(s2)) => Ok(RisStructure::SubConnected { s1, s2 }),
        ("sub", ..) => Err(PyValueError::new_err("sub-connected structure needs s1 and s2")),
        _ => Err(PyValueError::new_err(format!("unknown structure {s:?}"))),
    }
}

#[pyclass(name = "Config", module = "starris")]
struct PyConfig {
    inner: ScenarioConfig,
}

#[pymethods]
impl PyConfig {
    /// Parse TOML text, apply `key=value` overrides and validate.
    #[staticmethod]
    #[pyo3(signature = (text, overrides = Vec::new()))]
    fn from_toml(text: &str, overrides: Vec<String>) -> PyResult<Self> {
        let inner = ScenarioConfig::from_toml_with_overrides(text, &overrides).map_err(to_py)?;
        inner.validate().map_err(to_py)?;
        Ok(PyConfig { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (path, overrides = Vec::new()))]
    fn from_path(path: PathBuf, overrides: Vec<String>) -> PyResult<Self> {
        let text = std::fs::read_to_string(&path)
            .map_err(|e| PyValueError::new_err(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text, overrides)
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(to_py)
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml_string()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.system.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.system.seed = seed;
    }

    fn __repr__(&self) -> String {
        let s = &self.inner.system;
        format!("Config(M={}, nt={}, users={}, seed={})", s.subcarriers, s.nt, s.users, s.seed)
    }
}

#[pyclass(name = "System", module = "starris")]
struct PySystem {
    inner: starris_core::system::System,
}

#[pymethods]
impl PySystem {
    #[new]
    fn new(config: &PyConfig) -> PyResult<Self> {
        Ok(PySystem { inner: starris_core::system::System::new(&config.inner).map_err(to_py)? })
    }

    #[getter]
    fn frequencies(&self) -> Vec<f64> {
        self.inner.grid.frequencies.clone()
    }

    #[getter]
    fn noise_power(&self) -> f64 {
        self.inner.sigma2
    }

    /// Optimize one scheme. CSI errors with variance `delta` are drawn from
    /// stream 1 of `seed` (default: the config seed).
    #[pyo3(signature = (scheme, delta = 0.0, seed = None))]
    fn run<'py>(&self, py: Python<'py>, scheme: &str, delta: f64, seed: Option<u64>) -> PyResult<Bound<'py, PyDict>> {
        let scheme = parse_scheme(scheme)?;
        let mut rng = stream_rng(seed.unwrap_or(self.inner.cfg.system.seed), 1);
        let run = py.detach(|| self.inner.run(scheme, delta, &mut rng)).map_err(to_py)?;
        let out = PyDict::new(py);
        out.set_item("scheme", scheme.as_str())?;
        out.set_item("sum_rate_bits", run.sum_rate_bits)?;
        out.set_item("iterations", run.outcome.iterations)?;
        out.set_item("converged", run.outcome.converged)?;
        let trace: Vec<(usize, f64, f64, f64)> = run
            .outcome
            .state
            .trace
            .iter()
            .map(|t| (t.iteration, t.ldr_objective, t.sum_rate_bits, t.power_used))
            .collect();
        out.set_item("trace", trace)?;
        let beta: Vec<Vec<f64>> = run.outcome.state.beta.iter().map(|b| b.iter().copied().collect()).collect();
        out.set_item("beta", beta)?;
        Ok(out)
    }
}

/// Run one experiment in memory; returns `(csv, summary)`.
#[pyfunction]
fn run_experiment(py: Python<'_>, kind: &str, config: &PyConfig) -> PyResult<(String, String)> {
    let kind: ExperimentKind = kind.parse().map_err(to_py)?;
    let out = py.detach(|| experiment::run_experiment(kind, &config.inner)).map_err(to_py)?;
    Ok((out.csv, out.summary))
}

/// Run one experiment and write CSV, manifest and summary into `out`.
#[pyfunction]
fn run_to_dir(py: Python<'_>, kind: &str, config: &PyConfig, out: PathBuf) -> PyResult<String> {
    let kind: ExperimentKind = kind.parse().map_err(to_py)?;
    let res = py.detach(|| experiment::run_to_dir(kind, &config.inner, &out)).map_err(to_py)?;
    Ok(res.summary)
}

#[pyfunction]
fn experiment_kinds() -> Vec<&'static str> {
    ExperimentKind::ALL.iter().map(|k| k.as_str()).collect()
}

#[pyfunction]
fn xi_kernel(n: usize, x: f64) -> f64 {
    beam_gain::xi_kernel(n, x)
}

/// Normalized gain at frequency `f` of a surface designed at `fc` for the
/// given incident and departure spatial frequencies.
#[pyfunction]
#[pyo3(name = "beam_gain", signature = (structure, f, fc, inc, dep, n1, n2, s1 = None, s2 = None))]
#[allow(clippy::too_many_arguments)]
fn gain(
    structure: &str,
    f: f64,
    fc: f64,
    inc: (f64, f64),
    dep: (f64, f64),
    n1: usize,
    n2: usize,
    s1: Option<usize>,
    s2: Option<usize>,
) -> PyResult<f64> {
    let s = parse_structure(structure, s1, s2)?;
    if let RisStructure::SubConnected { s1, s2 } = s {
        if s1 == 0 || s2 == 0 || n1 % s1 != 0 || n2 % s2 != 0 {
            return Err(PyValueError::new_err("sub-surface grid must divide the element grid"));
        }
    }
    let surface = design_surface(s, inc, dep, fc, n1, n2);
    Ok(beam_gain::gain_of_design(s, f, fc, inc, dep, n1, n2, &surface))
}

fn cmatrix(rows: Vec<Vec<Complex64>>) -> PyResult<DMatrix<Complex64>> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("matrix must be square"));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// Minimize `d^H E d - 2 Re(v^H d)` subject to `d^H C d <= pmax`.
/// Returns `(d, lambda, power)`.
#[pyfunction]
#[pyo3(signature = (e, v, c, pmax, tol = 1e-10))]
fn solve_qcqp(
    e: Vec<Vec<Complex64>>,
    v: Vec<Complex64>,
    c: Vec<Vec<Complex64>>,
    pmax: f64,
    tol: f64,
) -> PyResult<(Vec<Complex64>, f64, f64)> {
    let p = QcqpProblem::dense(cmatrix(e)?, DVector::from_vec(v), cmatrix(c)?, pmax);
    let s = solvers::solve_qcqp(&p, tol).map_err(to_py)?;
    Ok((s.d[0].iter().copied().collect(), s.lambda, s.power))
}

/// Amplitude subproblem for both sides; returns `(beta_r, beta_t, iterations)`.
#[pyfunction]
#[pyo3(signature = (delta_r, delta_t, upsilon_r, upsilon_t, max_iter = 500))]
fn solve_amplitudes(
    delta_r: Vec<Vec<f64>>,
    delta_t: Vec<Vec<f64>>,
    upsilon_r: Vec<f64>,
    upsilon_t: Vec<f64>,
    max_iter: usize,
) -> PyResult<(Vec<f64>, Vec<f64>, usize)> {
    let real = |rows: Vec<Vec<f64>>| -> PyResult<DMatrix<f64>> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(PyValueError::new_err("matrix must be square"));
        }
        Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    };
    let p = AmplitudeProblem {
        delta: [real(delta_r)?, real(delta_t)?],
        upsilon: [DVector::from_vec(upsilon_r), DVector::from_vec(upsilon_t)],
    };
    let out = solvers::solve_amplitudes_admm(&p, &AdmmKnobs { max_iter, ..Default::default() }, None).map_err(to_py)?;
    let [r, t] = out.beta;
    Ok((r.iter().copied().collect(), t.iter().copied().collect(), out.iterations))
}

#[pymodule]
fn starris(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PySystem>()?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(run_to_dir, m)?)?;
    m.add_function(wrap_pyfunction!(experiment_kinds, m)?)?;
    m.add_function(wrap_pyfunction!(xi_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(gain, m)?)?;
    m.add_function(wrap_pyfunction!(solve_qcqp, m)?)?;
    m.add_function(wrap_pyfunction!(solve_amplitudes, m)?)?;
    Ok(())
}
