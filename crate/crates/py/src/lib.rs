//! Python bindings for the scheduling core.

use dosched_core::offline::offline_solve as core_offline_solve;
use dosched_core::online::Variant;
use dosched_core::sim::{run_online, Algorithm, RunOptions};
use dosched_core::workload::generate_instance as core_generate_instance;
use dosched_core::{Error, Instance as CoreInstance, ScenarioConfig, Utility};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Convergence { .. } | Error::Io(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

#[pyclass(module = "dosched", frozen)]
struct PowerUtility {
    inner: dosched_core::PowerUtility,
}

#[pymethods]
impl PowerUtility {
    #[new]
    fn new(v: f64, psi: f64) -> PyResult<Self> {
        let inner = dosched_core::PowerUtility::new(v, psi).map_err(|e| to_py(e.into()))?;
        Ok(Self { inner })
    }

    fn eval(&self, x: f64) -> PyResult<f64> {
        self.inner.eval(x).map_err(|e| to_py(e.into()))
    }

    fn grad(&self, x: f64) -> PyResult<f64> {
        self.inner.grad(x).map_err(|e| to_py(e.into()))
    }

    #[getter]
    fn v(&self) -> f64 {
        self.inner.v()
    }

    #[getter]
    fn psi(&self) -> f64 {
        self.inner.psi()
    }
}

#[pyclass(module = "dosched", frozen)]
struct RateRegion {
    inner: dosched_core::RateRegion,
}

#[pymethods]
impl RateRegion {
    #[new]
    fn new(num_users: usize, vertices: Vec<Vec<f64>>) -> PyResult<Self> {
        let inner = dosched_core::RateRegion::new(num_users, vertices).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[pyo3(signature = (x, tol = 1e-9))]
    fn contains(&self, x: Vec<f64>, tol: f64) -> bool {
        self.inner.contains(&x, tol)
    }

    fn max_rate(&self, user: usize) -> f64 {
        self.inner.max_rate(user)
    }

    #[getter]
    fn num_users(&self) -> usize {
        self.inner.num_users()
    }

    #[getter]
    fn vertices(&self) -> Vec<Vec<f64>> {
        self.inner.vertices().map(<[f64]>::to_vec).collect()
    }
}

#[pyclass(module = "dosched", frozen)]
struct Instance {
    inner: CoreInstance,
}

#[pymethods]
impl Instance {
    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        Ok(Self { inner: CoreInstance::from_text(text).map_err(to_py)? })
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.inner.horizon()
    }

    #[getter]
    fn num_users(&self) -> usize {
        self.inner.num_users
    }

    #[getter]
    fn num_jobs(&self) -> usize {
        self.inner.jobs.len()
    }

    #[getter]
    fn f_max(&self) -> f64 {
        self.inner.f_max()
    }
}

/// Online scheduler state; jobs are referred to by the integer handle `admit` returns.
#[pyclass(module = "dosched")]
struct Scheduler {
    inner: dosched_core::SchedulerState,
}

#[pymethods]
impl Scheduler {
    #[new]
    fn new(num_users: usize, f_max: f64) -> PyResult<Self> {
        Ok(Self { inner: dosched_core::SchedulerState::new(num_users, f_max).map_err(to_py)? })
    }

    fn admit(&mut self, id: usize, size: f64, utility: &PowerUtility, user: usize) -> PyResult<usize> {
        Ok(self.inner.admit(id, size, utility.inner, user).map_err(to_py)?.0)
    }

    /// Runs one slot over the given active handles and returns their rates.
    #[pyo3(signature = (active, region, lightweight = false))]
    fn step(&mut self, active: Vec<usize>, region: &RateRegion, lightweight: bool) -> PyResult<Vec<f64>> {
        let n = self.inner.num_jobs();
        if let Some(h) = active.iter().find(|&&h| h >= n) {
            return Err(PyValueError::new_err(format!("unknown job handle {h}")));
        }
        let handles: Vec<_> = active.into_iter().map(dosched_core::JobHandle).collect();
        let variant = if lightweight { Variant::Lightweight } else { Variant::Full };
        let d = self.inner.step(variant, &handles, &region.inner).map_err(to_py)?;
        Ok(d.rates)
    }

    fn alpha(&self, handle: usize) -> PyResult<f64> {
        self.check(handle)?;
        Ok(self.inner.alpha(dosched_core::JobHandle(handle)))
    }

    fn beta(&self, handle: usize) -> PyResult<f64> {
        self.check(handle)?;
        Ok(self.inner.beta(dosched_core::JobHandle(handle)))
    }

    fn served(&self, handle: usize) -> PyResult<f64> {
        self.check(handle)?;
        Ok(self.inner.cumulative(dosched_core::JobHandle(handle)))
    }

    fn primal(&self) -> PyResult<f64> {
        self.inner.compute_primal().map_err(to_py)
    }

    #[getter]
    fn c(&self) -> f64 {
        self.inner.c()
    }
}

impl Scheduler {
    fn check(&self, handle: usize) -> PyResult<()> {
        if handle < self.inner.num_jobs() {
            Ok(())
        } else {
            Err(PyValueError::new_err(format!("unknown job handle {handle}")))
        }
    }
}

#[pyfunction]
fn competitive_constant(f_max: f64) -> f64 {
    dosched_core::competitive_constant(f_max)
}

#[pyfunction]
fn competitive_bound(f_max: f64) -> f64 {
    dosched_core::competitive_bound(f_max)
}

#[pyfunction]
#[pyo3(signature = (seed, num_users = 3, horizon = 200, arrival_prob = 0.3))]
fn generate_instance(seed: u64, num_users: usize, horizon: usize, arrival_prob: f64) -> PyResult<Instance> {
    let cfg = ScenarioConfig {
        num_users,
        horizon,
        arrival_prob,
        rate_caps: vec![4.0; num_users],
        seed,
        ..Default::default()
    };
    Ok(Instance { inner: core_generate_instance(&cfg).map_err(to_py)? })
}

/// Runs a slot-by-slot algorithm; returns (reward, dual or None).
#[pyfunction]
fn run(instance: &Instance, algo: &str) -> PyResult<(f64, Option<f64>)> {
    let algorithm: Algorithm = algo.parse().map_err(to_py)?;
    let r = run_online(&instance.inner, algorithm, &RunOptions::default()).map_err(to_py)?;
    Ok((r.primal, r.dual))
}

/// Offline optimum; returns (objective, certified upper bound).
#[pyfunction]
#[pyo3(signature = (instance, tol = 1e-7))]
fn offline_solve(instance: &Instance, tol: f64) -> PyResult<(f64, f64)> {
    let s = core_offline_solve(&instance.inner, tol).map_err(to_py)?;
    Ok((s.objective, s.upper_bound()))
}

#[pymodule]
fn dosched(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PowerUtility>()?;
    m.add_class::<RateRegion>()?;
    m.add_class::<Instance>()?;
    m.add_class::<Scheduler>()?;
    m.add_function(wrap_pyfunction!(competitive_constant, m)?)?;
    m.add_function(wrap_pyfunction!(competitive_bound, m)?)?;
    m.add_function(wrap_pyfunction!(generate_instance, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(offline_solve, m)?)?;
    Ok(())
}
