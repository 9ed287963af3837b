//! Python bindings: configurations, replica paths, arrow fields, the
//! trichotomy estimator and the property suites.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde_json::Value;

use rwdre::analysis::{classify_series, run_replicas};
use rwdre::config::{preset, ExperimentConfig, PRESETS};
use rwdre::error::Error;
use rwdre::graphical::{evolve_coupled, evolve_walk, ArrowField};
use rwdre::path::{WalkLimits, WalkPath};
use rwdre::rng::SeedTree;
use rwdre::stats::{ks_two_sample, wilson_interval, Z99};
use rwdre::validate::{run_suite, Suite, SuiteOptions};
use rwdre::walk::{hitting_time, SiteSet};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(io) => PyIOError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match (n.as_i64(), n.as_u64()) {
            (Some(i), _) => i.into_pyobject(py)?.into_any(),
            (None, Some(u)) => u.into_pyobject(py)?.into_any(),
            _ => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(to_py(py, item)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, item) in map {
                dict.set_item(k, to_py(py, item)?)?;
            }
            dict.into_any()
        }
    })
}

/// An experiment configuration.
#[pyclass(name = "Config", from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: ExperimentConfig,
}

#[pymethods]
impl PyConfig {
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        ExperimentConfig::from_toml_str(text).map(|inner| Self { inner }).map_err(py_err)
    }

    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        preset(name).map(|inner| Self { inner }).map_err(py_err)
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml_string()
    }

    /// SHA-256 of the model, run, stream scheme and sweep sections.
    fn hash(&self) -> String {
        self.inner.hash()
    }

    #[getter]
    fn model_kind(&self) -> &'static str {
        self.inner.model.kind()
    }

    #[getter]
    fn horizon(&self) -> f64 {
        self.inner.run.horizon
    }

    #[getter]
    fn level(&self) -> i64 {
        self.inner.run.level
    }

    #[getter]
    fn replicas(&self) -> usize {
        self.inner.run.replicas
    }

    #[setter]
    fn set_replicas(&mut self, n: usize) -> PyResult<()> {
        if n == 0 {
            return Err(PyValueError::new_err("replicas must be at least 1"));
        }
        self.inner.run.replicas = n;
        Ok(())
    }

    #[setter]
    fn set_horizon(&mut self, t: f64) -> PyResult<()> {
        let mut next = self.inner.clone();
        next.run.horizon = t;
        next.run.checkpoints.retain(|&c| c < t);
        next.validate().map_err(py_err)?;
        self.inner = next;
        Ok(())
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(model={}, horizon={}, level={}, replicas={})",
            self.inner.model.kind(),
            self.inner.run.horizon,
            self.inner.run.level,
            self.inner.run.replicas
        )
    }
}

/// A piecewise-constant nearest-neighbour path.
#[pyclass(name = "WalkPath", from_py_object)]
#[derive(Clone)]
struct PyWalkPath {
    inner: WalkPath,
}

#[pymethods]
impl PyWalkPath {
    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        WalkPath::read_text(text.as_bytes()).map(|inner| Self { inner }).map_err(py_err)
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    #[getter]
    fn start(&self) -> i64 {
        self.inner.start()
    }

    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.times().to_vec()
    }

    #[getter]
    fn positions(&self) -> Vec<i64> {
        self.inner.positions().to_vec()
    }

    #[getter]
    fn status(&self) -> &'static str {
        self.inner.status().as_str()
    }

    #[getter]
    fn final_position(&self) -> i64 {
        self.inner.final_position()
    }

    #[getter]
    fn jumps(&self) -> u64 {
        self.inner.arrows_crossed()
    }

    fn position_at(&self, t: f64) -> Option<i64> {
        self.inner.position_at(t)
    }

    /// Hitting time of a site set written as `points:a,b`,
    /// `interval:lo:hi` or `outside:lo:hi`; returns `(kind, time)` with kind
    /// one of `finite`, `censored`, `infinite`.
    fn hitting_time(&self, target: &str) -> PyResult<(String, Option<f64>)> {
        let set: SiteSet = target.parse().map_err(PyValueError::new_err)?;
        let h = hitting_time(&self.inner, &set);
        let text = h.to_string();
        let kind = text.split_whitespace().next().unwrap_or("").to_string();
        let t = text.split_whitespace().nth(1).and_then(|s| s.parse().ok());
        Ok((kind, t))
    }

    fn __len__(&self) -> usize {
        self.inner.times().len()
    }

    fn __repr__(&self) -> String {
        format!(
            "WalkPath(start={}, jumps={}, final={}, status={})",
            self.inner.start(),
            self.inner.arrows_crossed(),
            self.inner.final_position(),
            self.inner.status().as_str()
        )
    }
}

/// A realised field of left and right arrows.
#[pyclass(name = "ArrowField")]
struct PyArrowField {
    inner: ArrowField,
}

#[pymethods]
impl PyArrowField {
    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        ArrowField::read_text(text.as_bytes()).map(|inner| Self { inner }).map_err(py_err)
    }

    fn to_text(&self) -> PyResult<String> {
        self.inner.to_text().map_err(py_err)
    }

    /// Path from `x0` following the arrows up to `horizon`.
    fn walk(&self, x0: i64, horizon: f64) -> PyResult<PyWalkPath> {
        evolve_walk(&self.inner, x0, &WalkLimits::new(horizon))
            .map(|inner| PyWalkPath { inner })
            .map_err(py_err)
    }

    /// Coalescing walks from `starts`; returns the paths and the
    /// coalescence events as `(time, site, absorbed, survivor)`.
    fn coupled(&self, starts: Vec<i64>, horizon: f64) -> PyResult<(Vec<PyWalkPath>, Vec<(f64, i64, i64, i64)>)> {
        let ens = evolve_coupled(&self.inner, &starts, &WalkLimits::new(horizon)).map_err(py_err)?;
        let paths = ens.paths().iter().map(|p| PyWalkPath { inner: p.clone() }).collect();
        let events = ens
            .coalescences()
            .iter()
            .map(|c| (c.time, c.site, c.absorbed, c.survivor))
            .collect();
        Ok((paths, events))
    }
}

#[pyfunction]
fn preset_names() -> Vec<&'static str> {
    PRESETS.to_vec()
}

/// Replica paths from the origin, replica `i` drawn from stream `i` of `seed`.
#[pyfunction]
#[pyo3(signature = (config, count, seed=0))]
fn simulate(py: Python<'_>, config: &PyConfig, count: usize, seed: u64) -> PyResult<Vec<PyWalkPath>> {
    let plan = config.inner.plan();
    let paths = py
        .detach(|| run_replicas(count, seed, |s| plan.run(s)))
        .map_err(py_err)?;
    Ok(paths.into_iter().map(|inner| PyWalkPath { inner }).collect())
}

/// Trichotomy estimates at each checkpoint and at the horizon.
#[pyfunction]
#[pyo3(signature = (config, seed=None))]
fn classify<'py>(py: Python<'py>, config: &PyConfig, seed: Option<u64>) -> PyResult<Bound<'py, PyAny>> {
    let c = &config.inner;
    let seed = seed.unwrap_or(c.rng.base_seed);
    let series = py
        .detach(|| classify_series(&c.plan(), c.run.level, &c.run.checkpoints, c.run.replicas, seed))
        .map_err(py_err)?;
    let value = serde_json::to_value(&series).map_err(|e| PyValueError::new_err(e.to_string()))?;
    to_py(py, &value)
}

/// Runs one property suite by name with reduced sizes scaled by `scale`.
#[pyfunction]
#[pyo3(signature = (suite, config, seed=7, scale=1.0))]
fn run_property_suite<'py>(
    py: Python<'py>,
    suite: &str,
    config: &PyConfig,
    seed: u64,
    scale: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let suite = Suite::ALL
        .into_iter()
        .find(|s| s.name() == suite)
        .ok_or_else(|| PyValueError::new_err(format!("unknown suite `{suite}`")))?;
    if !(scale > 0.0 && scale <= 1.0) {
        return Err(PyValueError::new_err("scale must lie in (0, 1]"));
    }
    let d = SuiteOptions::default();
    let shrink = |n: usize| ((n as f64 * scale).ceil() as usize).max(2);
    let opts = SuiteOptions {
        coupling_replicas: shrink(d.coupling_replicas),
        poisson_seeds: shrink(d.poisson_seeds),
        ks_replicas: shrink(d.ks_replicas),
        stationarity_replicas: shrink(d.stationarity_replicas),
        exit_replicas: shrink(d.exit_replicas),
        ..d
    };
    let report = py
        .detach(|| run_suite(suite, "python", &config.inner, &opts, seed))
        .map_err(py_err)?;
    let value = serde_json::to_value(&report).map_err(|e| PyValueError::new_err(e.to_string()))?;
    to_py(py, &value)
}

/// Two-sample Kolmogorov-Smirnov test; returns `(statistic, p_value)`.
#[pyfunction]
fn ks_test(a: Vec<f64>, b: Vec<f64>) -> PyResult<(f64, f64)> {
    let r = ks_two_sample(&a, &b).map_err(py_err)?;
    Ok((r.statistic, r.p_value))
}

/// 99% Wilson interval for `successes` out of `n`.
#[pyfunction]
fn wilson99(successes: u64, n: u64) -> (f64, f64) {
    wilson_interval(successes, n, Z99)
}

/// First 64-bit word of the stream `tags` below `seed`, for checking stream
/// reproducibility across languages.
#[pyfunction]
fn stream_key(seed: u64, tags: Vec<u64>) -> u64 {
    tags.into_iter().fold(SeedTree::new(seed), |t, tag| t.child(tag)).seed()
}

#[pymodule]
fn pyrwdre(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyWalkPath>()?;
    m.add_class::<PyArrowField>()?;
    m.add_function(wrap_pyfunction!(preset_names, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(run_property_suite, m)?)?;
    m.add_function(wrap_pyfunction!(ks_test, m)?)?;
    m.add_function(wrap_pyfunction!(wilson99, m)?)?;
    m.add_function(wrap_pyfunction!(stream_key, m)?)?;
    Ok(())
}
