//! Python bindings for `lace_core`.

use std::path::PathBuf;
use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use lace_core::clt;
use lace_core::config::{self, RunConfig};
use lace_core::critical;
use lace_core::engine::{laplacian_recursion, run_recursion, CoefficientProvider, RecursionState};
use lace_core::induction;
use lace_core::kernels::{check_assumption_d, KPoint, StepKernel};
use lace_core::models::saw::{saw_deconvolve_pi, saw_enumerate, SawProvider, DEFAULT_WALK_BUDGET};
use lace_core::models::srw::SrwProvider;
use lace_core::models::synthetic::SyntheticProvider;
use lace_core::run;
use lace_core::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidArgument(_)
        | Error::InvalidKPoint(_)
        | Error::InvalidKernel(_)
        | Error::Config { .. }
        | Error::InvalidProbability { .. }
        | Error::RegimeRejected { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Serialise through JSON into plain Python objects.
fn to_object<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn kpoint(k: Vec<f64>) -> PyResult<KPoint> {
    KPoint::new(k).map_err(to_py)
}

#[pyclass(name = "StepKernel", frozen)]
struct PyStepKernel {
    inner: Arc<StepKernel>,
}

#[pymethods]
impl PyStepKernel {
    /// Uniform distribution on `{x : |x|_inf <= L}`.
    #[staticmethod]
    #[pyo3(signature = (d, l, exclude_origin=false))]
    fn uniform_cube(d: usize, l: u32, exclude_origin: bool) -> PyResult<Self> {
        let k = StepKernel::uniform_cube(d, l, exclude_origin).map_err(to_py)?;
        Ok(PyStepKernel { inner: Arc::new(k) })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let k = StepKernel::from_json(text).map_err(to_py)?;
        Ok(PyStepKernel { inner: Arc::new(k) })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d()
    }

    #[getter(L)]
    fn l(&self) -> u32 {
        self.inner.l()
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.inner.beta()
    }

    #[getter]
    fn sigma_sq(&self) -> f64 {
        self.inner.sigma_sq()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn content_hash(&self) -> String {
        self.inner.content_hash()
    }

    fn dhat(&self, k: Vec<f64>) -> PyResult<f64> {
        Ok(self.inner.dhat(&kpoint(k)?))
    }

    #[pyo3(signature = (resolution=33))]
    fn check_assumption_d<'py>(&self, py: Python<'py>, resolution: usize) -> PyResult<Bound<'py, PyAny>> {
        let r = check_assumption_d(&self.inner, resolution).map_err(to_py)?;
        to_object(py, &r)
    }

    fn __repr__(&self) -> String {
        format!("StepKernel('{}')", self.inner.label())
    }
}

#[pyclass(name = "Provider", frozen)]
struct PyProvider {
    inner: Arc<dyn CoefficientProvider>,
}

#[pymethods]
impl PyProvider {
    #[staticmethod]
    fn srw(kernel: &PyStepKernel) -> Self {
        PyProvider {
            inner: Arc::new(SrwProvider::new(kernel.inner.clone())),
        }
    }

    /// Walk perturbed by `g_2 = b z^2 Dhat^p`.
    #[staticmethod]
    #[pyo3(signature = (kernel, b, p=2))]
    fn synthetic(kernel: &PyStepKernel, b: f64, p: u32) -> Self {
        PyProvider {
            inner: Arc::new(SyntheticProvider::single_g2(kernel.inner.clone(), b, p)),
        }
    }

    /// Self-avoiding walk coefficients from exact enumeration up to `n_max`.
    #[staticmethod]
    fn saw(py: Python<'_>, kernel: &PyStepKernel, n_max: usize) -> PyResult<Self> {
        let k = kernel.inner.clone();
        let provider = py
            .detach(|| -> lace_core::Result<SawProvider> {
                let tables = saw_enumerate(&k, n_max, DEFAULT_WALK_BUDGET)?;
                let pi = saw_deconvolve_pi(&tables)?;
                SawProvider::new(k.clone(), &pi)
            })
            .map_err(to_py)?;
        Ok(PyProvider { inner: Arc::new(provider) })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name().to_string()
    }

    fn g(&self, m: usize, k: Vec<f64>, z: f64) -> PyResult<f64> {
        self.inner.g(m, &kpoint(k)?, z).map_err(to_py)
    }

    fn e(&self, m: usize, k: Vec<f64>, z: f64) -> PyResult<f64> {
        self.inner.e(m, &kpoint(k)?, z).map_err(to_py)
    }

    /// Solve the recursion on `kset` and the Laplacian companion at `k = 0`.
    fn run(&self, py: Python<'_>, z: f64, n_max: usize, kset: Vec<Vec<f64>>) -> PyResult<PyRecursionState> {
        let ks: Vec<KPoint> = kset.into_iter().map(kpoint).collect::<PyResult<_>>()?;
        let p = self.inner.clone();
        let state = py
            .detach(move || -> lace_core::Result<RecursionState> {
                let mut s = run_recursion(p.as_ref(), z, n_max, &ks)?;
                if s.kset.iter().any(|k| k.is_zero()) {
                    laplacian_recursion(p.as_ref(), &mut s)?;
                }
                Ok(s)
            })
            .map_err(to_py)?;
        Ok(PyRecursionState { inner: state })
    }

    #[pyo3(signature = (n_max, tol=1e-12))]
    fn solve_zc<'py>(&self, py: Python<'py>, n_max: usize, tol: f64) -> PyResult<Bound<'py, PyAny>> {
        let r = critical::solve_zc(self.inner.as_ref(), n_max, tol).map_err(to_py)?;
        to_object(py, &r)
    }

    fn estimate_a_v<'py>(&self, py: Python<'py>, z: f64, n_max: usize) -> PyResult<Bound<'py, PyAny>> {
        let r = critical::estimate_a_v(self.inner.as_ref(), z, n_max).map_err(to_py)?;
        to_object(py, &r)
    }

    fn vn_sequence<'py>(&self, py: Python<'py>, z: f64, n_max: usize) -> PyResult<Bound<'py, PyAny>> {
        let r = critical::vn_sequence(self.inner.as_ref(), z, n_max).map_err(to_py)?;
        to_object(py, &r)
    }
}

#[pyclass(name = "RecursionState", frozen)]
struct PyRecursionState {
    inner: RecursionState,
}

#[pymethods]
impl PyRecursionState {
    #[getter]
    fn z(&self) -> f64 {
        self.inner.z
    }

    #[getter]
    fn n_max(&self) -> usize {
        self.inner.n_max
    }

    #[getter]
    fn kset(&self) -> Vec<Vec<f64>> {
        self.inner.kset.iter().map(|k| k.as_slice().to_vec()).collect()
    }

    fn f(&self, n: usize, k_index: usize) -> PyResult<f64> {
        if n > self.inner.n_max || k_index >= self.inner.kset.len() {
            return Err(PyValueError::new_err("index out of range"));
        }
        Ok(self.inner.f(n, k_index))
    }

    fn column(&self, k_index: usize) -> PyResult<Vec<f64>> {
        if k_index >= self.inner.kset.len() {
            return Err(PyValueError::new_err("k index out of range"));
        }
        Ok(self.inner.column(k_index).to_vec())
    }

    /// `nabla^2 f_n(0)`, or `None` when the k-set has no zero point.
    #[getter]
    fn lapf0(&self) -> Option<Vec<f64>> {
        self.inner.lapf0.clone()
    }
}

#[pyfunction]
fn dirichlet_qhat(r: i64, k: Vec<f64>) -> PyResult<f64> {
    Ok(clt::dirichlet_qhat(r, &kpoint(k)?))
}

#[pyfunction]
fn conv_bound_probe<'py>(py: Python<'py>, a: f64, b: f64, n_max: usize) -> PyResult<Bound<'py, PyAny>> {
    let p = induction::conv_bound_probe(a, b, n_max).map_err(to_py)?;
    to_object(py, &p)
}

/// Run the batch pipeline from a config file and return the manifest.
#[pyfunction]
#[pyo3(signature = (config_path, out_dir, cache_dir=None))]
fn run_config<'py>(
    py: Python<'py>,
    config_path: PathBuf,
    out_dir: PathBuf,
    cache_dir: Option<PathBuf>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = RunConfig::from_flat(&config::load(&config_path).map_err(to_py)?).map_err(to_py)?;
    let cache = cache_dir.unwrap_or_else(lace_core::cache::default_dir);
    let manifest = py.detach(|| run::cmd_run(&cfg, &out_dir, &cache)).map_err(to_py)?;
    to_object(py, &manifest)
}

#[pymodule]
pub fn lacepy(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyStepKernel>()?;
    m.add_class::<PyProvider>()?;
    m.add_class::<PyRecursionState>()?;
    m.add_function(wrap_pyfunction!(dirichlet_qhat, m)?)?;
    m.add_function(wrap_pyfunction!(conv_bound_probe, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    Ok(())
}
