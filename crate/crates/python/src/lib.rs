//! Python bindings: datasets, the log-sum penalty, both optimizers, the
//! `σ` estimate and the verification suites.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use moreau_sgd::data::{parse_libsvm, synthetic_clusters, synthetic_separable};
use moreau_sgd::harness::{run_verification, write_trace, Suite, VerifyOptions};
use moreau_sgd::optim::{self, MbsgaConfig, OutputRule, RunOptions, RunTrace, VrsgaConfig};
use moreau_sgd::{
    EnvelopeAnchor, ErmObjective, Error, LabelRule, LibsvmOptions, LogSumRegularizer, Regularizer,
    SparseDataset,
};

create_exception!(moreau_sgd, DivergenceError, PyRuntimeError);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(io) => PyIOError::new_err(io.to_string()),
        Error::Divergence { .. } => DivergenceError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse_rule(s: &str) -> PyResult<OutputRule> {
    s.parse().map_err(to_py)
}

/// A labelled sparse dataset with labels in {-1, +1}.
#[pyclass(name = "Dataset", frozen)]
struct PyDataset {
    inner: SparseDataset,
}

#[pymethods]
impl PyDataset {
    /// Dense rows; labels map to +1 when positive, else -1.
    #[staticmethod]
    fn from_dense(rows: Vec<Vec<f64>>, labels: Vec<f64>) -> PyResult<Self> {
        let labels = labels.into_iter().map(|y| LabelRule::Sign.map(y)).collect();
        let inner = SparseDataset::from_dense(&rows, labels).map_err(to_py)?;
        Ok(PyDataset { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (path, dim=None, positive_class=None))]
    fn read_libsvm(
        path: PathBuf,
        dim: Option<usize>,
        positive_class: Option<f64>,
    ) -> PyResult<Self> {
        let file = std::fs::File::open(&path)
            .map_err(|e| PyIOError::new_err(format!("{}: {e}", path.display())))?;
        let labels = positive_class.map_or(LabelRule::Sign, LabelRule::OneVsRest);
        let inner = parse_libsvm(std::io::BufReader::new(file), LibsvmOptions { dim, labels })
            .map_err(to_py)?;
        Ok(PyDataset { inner })
    }

    /// Two noisy clusters along a random direction, with label noise.
    #[staticmethod]
    #[pyo3(signature = (n, dim, separation=3.0, noise=0.2, flip_prob=0.1, seed=0))]
    fn clusters(
        n: usize,
        dim: usize,
        separation: f64,
        noise: f64,
        flip_prob: f64,
        seed: u64,
    ) -> PyResult<Self> {
        let inner =
            synthetic_clusters(n, dim, separation, noise, flip_prob, seed).map_err(to_py)?;
        Ok(PyDataset { inner })
    }

    /// Gaussian features labelled by a random hyperplane, with label noise.
    #[staticmethod]
    #[pyo3(signature = (n, dim, flip_prob=0.1, seed=0))]
    fn separable(n: usize, dim: usize, flip_prob: f64, seed: u64) -> PyResult<Self> {
        let inner = synthetic_separable(n, dim, flip_prob, seed).map_err(to_py)?;
        Ok(PyDataset { inner })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn labels(&self) -> Vec<f64> {
        self.inner.labels().to_vec()
    }

    /// `(2/n) Σ ‖x_j‖²`, the smoothness constant MBSGA uses.
    #[getter]
    fn l_mean(&self) -> f64 {
        ErmObjective::new(&self.inner).l_mean()
    }

    /// `2 max ‖x_j‖²`, the smoothness constant VRSGA uses.
    #[getter]
    fn l_max(&self) -> f64 {
        ErmObjective::new(&self.inner).l_max()
    }

    /// Mean Lorenz loss at `w`.
    fn loss(&self, w: Vec<f64>) -> PyResult<f64> {
        ErmObjective::new(&self.inner).value(&w).map_err(to_py)
    }

    fn loss_gradient(&self, w: Vec<f64>) -> PyResult<Vec<f64>> {
        ErmObjective::new(&self.inner)
            .full_gradient(&w)
            .map_err(to_py)
    }

    fn to_libsvm(&self) -> String {
        self.inner.to_libsvm()
    }

    fn __len__(&self) -> usize {
        self.inner.n()
    }

    fn __repr__(&self) -> String {
        format!("Dataset(n={}, dim={})", self.inner.n(), self.inner.dim())
    }
}

/// `κ Σ log(1 + |w_i|/ν)`.
#[pyclass(name = "LogSum", frozen)]
struct PyLogSum {
    inner: LogSumRegularizer,
}

#[pymethods]
impl PyLogSum {
    #[new]
    fn new(kappa: f64, nu: f64, dim: usize) -> PyResult<Self> {
        Ok(PyLogSum {
            inner: LogSumRegularizer::new(kappa, nu, dim).map_err(to_py)?,
        })
    }

    #[getter]
    fn kappa(&self) -> f64 {
        self.inner.kappa()
    }

    #[getter]
    fn nu(&self) -> f64 {
        self.inner.nu()
    }

    #[getter]
    fn lipschitz(&self) -> f64 {
        self.inner.lipschitz()
    }

    fn value(&self, w: Vec<f64>) -> PyResult<f64> {
        self.inner.value(&w).map_err(to_py)
    }

    /// Returns `(prox point, Moreau envelope value)`.
    fn prox(&self, lam: f64, w: Vec<f64>) -> PyResult<(Vec<f64>, f64)> {
        let r = self.inner.prox(lam, &w).map_err(to_py)?;
        Ok((r.point, r.envelope_value))
    }

    fn __repr__(&self) -> String {
        format!(
            "LogSum(kappa={}, nu={}, dim={})",
            self.inner.kappa(),
            self.inner.nu(),
            self.inner.dim()
        )
    }
}

/// Column-wise run record plus the returned points and call counts.
#[pyclass(name = "Trace", frozen)]
struct PyTrace {
    #[pyo3(get)]
    iteration: Vec<usize>,
    #[pyo3(get)]
    time_s: Vec<f64>,
    #[pyo3(get)]
    h: Vec<f64>,
    #[pyo3(get)]
    grad_norm: Vec<Option<f64>>,
    #[pyo3(get)]
    grad_calls: u64,
    #[pyo3(get)]
    prox_calls: u64,
    #[pyo3(get)]
    iterations: usize,
    #[pyo3(get)]
    outer_iterations: Option<usize>,
    #[pyo3(get)]
    final_iterate: Vec<f64>,
    #[pyo3(get)]
    output: Vec<f64>,
    raw: RunTrace,
}

impl From<RunTrace> for PyTrace {
    fn from(t: RunTrace) -> Self {
        PyTrace {
            iteration: t.records.iter().map(|r| r.iteration).collect(),
            time_s: t.records.iter().map(|r| r.elapsed_s).collect(),
            h: t.records.iter().map(|r| r.objective).collect(),
            grad_norm: t.records.iter().map(|r| r.envelope_grad_norm).collect(),
            grad_calls: t.counters.grad_calls,
            prox_calls: t.counters.prox_calls,
            iterations: t.iterations,
            outer_iterations: t.outer_iterations,
            final_iterate: t.final_iterate.clone(),
            output: t.output.clone(),
            raw: t,
        }
    }
}

#[pymethods]
impl PyTrace {
    /// Writes the trace in the command-line tool's CSV layout.
    fn write_csv(&self, path: PathBuf) -> PyResult<()> {
        write_trace(&path, &self.raw).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.iteration.len()
    }
}

fn run_options(record_every: usize, track_grad: bool, w0: Option<Vec<f64>>) -> RunOptions {
    RunOptions {
        initial: w0,
        record_every,
        track_envelope_grad: track_grad,
    }
}

/// Mini-batch method on `data` with penalty `g` for `iterations` steps.
#[pyfunction]
#[pyo3(signature = (
    data, g, iterations, sigma=0.0, seed=0, alpha=0.25, theta=0.25,
    output_rule="random_r", record_every=1, track_grad=false, w0=None,
))]
#[allow(clippy::too_many_arguments)]
fn mbsga(
    py: Python<'_>,
    data: &PyDataset,
    g: &PyLogSum,
    iterations: usize,
    sigma: f64,
    seed: u64,
    alpha: f64,
    theta: f64,
    output_rule: &str,
    record_every: usize,
    track_grad: bool,
    w0: Option<Vec<f64>>,
) -> PyResult<PyTrace> {
    let cfg = MbsgaConfig {
        iterations,
        alpha,
        theta,
        sigma,
        seed,
        output_rule: parse_rule(output_rule)?,
    };
    let opts = run_options(record_every, track_grad, w0);
    let trace = py
        .detach(|| optim::mbsga_run(&ErmObjective::new(&data.inner), &g.inner, &cfg, &opts))
        .map_err(to_py)?;
    Ok(trace.into())
}

/// Variance-reduced method with an inner-iteration budget of `iterations`.
#[pyfunction]
#[pyo3(signature = (
    data, g, iterations, seed=0, alpha=1.0/3.0, theta=1.0/3.0,
    output_rule="random_r", record_every=1, track_grad=false, w0=None,
))]
#[allow(clippy::too_many_arguments)]
fn vrsga(
    py: Python<'_>,
    data: &PyDataset,
    g: &PyLogSum,
    iterations: usize,
    seed: u64,
    alpha: f64,
    theta: f64,
    output_rule: &str,
    record_every: usize,
    track_grad: bool,
    w0: Option<Vec<f64>>,
) -> PyResult<PyTrace> {
    let cfg = VrsgaConfig {
        iterations,
        alpha,
        theta,
        seed,
        output_rule: parse_rule(output_rule)?,
    };
    let opts = run_options(record_every, track_grad, w0);
    let trace = py
        .detach(|| optim::vrsga_run(&ErmObjective::new(&data.inner), &g.inner, &cfg, &opts))
        .map_err(to_py)?;
    Ok(trace.into())
}

/// Returns `(sigma_hat, per-iteration estimates)`.
#[pyfunction]
#[pyo3(signature = (data, g, iterations, alpha=0.25, theta=0.25, trial_iters=50, seed=1))]
fn estimate_sigma(
    data: &PyDataset,
    g: &PyLogSum,
    iterations: usize,
    alpha: f64,
    theta: f64,
    trial_iters: usize,
    seed: u64,
) -> PyResult<(f64, Vec<f64>)> {
    let obj = ErmObjective::new(&data.inner);
    let est = optim::estimate_sigma(&obj, &g.inner, iterations, alpha, theta, trial_iters, seed)
        .map_err(to_py)?;
    Ok((est.sigma, est.per_iteration))
}

/// Batch size, `λ`, `L + 1/λ` and step size for an MBSGA budget.
#[pyfunction]
#[pyo3(signature = (iterations, l_smooth, sigma=0.0, alpha=0.25, theta=0.25))]
fn mbsga_params<'py>(
    py: Python<'py>,
    iterations: usize,
    l_smooth: f64,
    sigma: f64,
    alpha: f64,
    theta: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let p = optim::mbsga_derive_params(iterations, alpha, theta, l_smooth, sigma).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("batch", p.batch)?;
    d.set_item("lambda", p.lambda)?;
    d.set_item("l_envelope", p.l_envelope)?;
    d.set_item("gamma", p.gamma)?;
    Ok(d)
}

/// Inner length `m`, batch `b = m²`, outer count `S`, `λ`, `L + 1/λ` and step size.
#[pyfunction]
#[pyo3(signature = (iterations, n_samples, l_smooth, alpha=1.0/3.0, theta=1.0/3.0))]
fn vrsga_params<'py>(
    py: Python<'py>,
    iterations: usize,
    n_samples: usize,
    l_smooth: f64,
    alpha: f64,
    theta: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let p =
        optim::vrsga_derive_params(iterations, n_samples, alpha, theta, l_smooth).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("inner", p.inner)?;
    d.set_item("batch", p.batch)?;
    d.set_item("outer", p.outer)?;
    d.set_item("lambda", p.lambda)?;
    d.set_item("l_envelope", p.l_envelope)?;
    d.set_item("gamma", p.gamma)?;
    Ok(d)
}

/// `‖∇E(w)‖` for the majorant anchored at `w`.
#[pyfunction]
fn envelope_grad_norm(data: &PyDataset, g: &PyLogSum, lam: f64, w: Vec<f64>) -> PyResult<f64> {
    let obj = ErmObjective::new(&data.inner);
    let anchor = EnvelopeAnchor::new(&g.inner, lam, &w).map_err(to_py)?;
    let grad = anchor.gradient(&obj, &w).map_err(to_py)?;
    Ok(grad.iter().map(|x| x * x).sum::<f64>().sqrt())
}

/// Runs one verification suite; returns `(passed, [(check, measured, tolerance, passed)])`.
#[pyfunction]
#[pyo3(signature = (suite, quick=true, seed=None))]
fn verify(
    py: Python<'_>,
    suite: &str,
    quick: bool,
    seed: Option<u64>,
) -> PyResult<(bool, Vec<(String, f64, f64, bool)>)> {
    let suite: Suite = suite.parse().map_err(to_py)?;
    let mut opts = VerifyOptions::default();
    if quick {
        opts = VerifyOptions::quick(opts.seed);
    }
    if let Some(s) = seed {
        opts.seed = s;
    }
    let report = py
        .detach(|| run_verification(suite, &opts))
        .map_err(to_py)?;
    let checks = report
        .checks
        .into_iter()
        .map(|c| (c.name, c.measured, c.tolerance, c.passed))
        .collect();
    Ok((report.passed, checks))
}

#[pymodule]
#[pyo3(name = "moreau_sgd")]
fn moreau_sgd_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyLogSum>()?;
    m.add_class::<PyTrace>()?;
    m.add_function(wrap_pyfunction!(mbsga, m)?)?;
    m.add_function(wrap_pyfunction!(vrsga, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_sigma, m)?)?;
    m.add_function(wrap_pyfunction!(mbsga_params, m)?)?;
    m.add_function(wrap_pyfunction!(vrsga_params, m)?)?;
    m.add_function(wrap_pyfunction!(envelope_grad_norm, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add("DivergenceError", m.py().get_type::<DivergenceError>())?;
    Ok(())
}
