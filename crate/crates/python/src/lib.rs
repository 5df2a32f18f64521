//! Python bindings. Observations cross the boundary as sequences of floats;
//! noise laws use the same `name:key=value` strings as the CLI.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use pseudohuber::harness::{self, Estimator};
use pseudohuber::{loss, noise, oracle, solver};
use pseudohuber::{EstimatorConfig, InitPolicy, LossPoint, NoiseModel, Sample, StudySpec, Strategy};

fn py_bool(b: bool) -> &'static str {
    if b {
        "True"
    } else {
        "False"
    }
}

fn to_py(e: pseudohuber::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn sample(values: Vec<f64>) -> PyResult<Sample> {
    Sample::new(values).map_err(to_py)
}

fn noise_model(spec: &str) -> PyResult<NoiseModel> {
    spec.parse().map_err(to_py)
}

fn point(mu: f64, tau: f64, z: f64) -> PyResult<LossPoint> {
    LossPoint::new(mu, tau, z).map_err(to_py)
}

#[pyclass(name = "FitResult", frozen, get_all, skip_from_py_object)]
#[derive(Clone)]
struct PyFitResult {
    mu_hat: f64,
    tau_hat: f64,
    iterations: usize,
    grad_norm: f64,
    converged: bool,
    degenerate: bool,
    z: f64,
    tau_floor: f64,
    warnings: Vec<String>,
}

#[pymethods]
impl PyFitResult {
    fn __repr__(&self) -> String {
        format!(
            "FitResult(mu_hat={}, tau_hat={}, iterations={}, converged={}, degenerate={})",
            self.mu_hat,
            self.tau_hat,
            self.iterations,
            py_bool(self.converged),
            py_bool(self.degenerate)
        )
    }
}

impl From<solver::FitResult> for PyFitResult {
    fn from(r: solver::FitResult) -> Self {
        PyFitResult {
            mu_hat: r.mu_hat,
            tau_hat: r.tau_hat,
            iterations: r.iterations,
            grad_norm: r.grad_norm,
            converged: r.converged,
            degenerate: r.degenerate,
            z: r.z,
            tau_floor: r.tau_floor,
            warnings: r.warnings.iter().map(|w| w.to_string()).collect(),
        }
    }
}

#[pyclass(name = "OracleSolution", frozen, get_all, skip_from_py_object)]
#[derive(Clone)]
struct PyOracleSolution {
    tau_star: f64,
    sigma_tau_star_sq: f64,
    lower_bound_sq: f64,
    upper_bound_sq: f64,
    residual: f64,
    n: usize,
    z: f64,
    sigma: f64,
}

#[pymethods]
impl PyOracleSolution {
    #[pyo3(signature = (rel_slack=1e-6))]
    fn bounds_hold(&self, rel_slack: f64) -> bool {
        let t2 = self.tau_star * self.tau_star;
        t2 >= self.lower_bound_sq * (1.0 - rel_slack) && t2 <= self.upper_bound_sq * (1.0 + rel_slack)
    }

    fn __repr__(&self) -> String {
        format!("OracleSolution(tau_star={}, n={}, z={})", self.tau_star, self.n, self.z)
    }
}

fn config(
    delta: f64,
    z: Option<f64>,
    strategy: &str,
    grad_tol: f64,
    max_iters: usize,
    tau_floor: Option<f64>,
    init: Option<(f64, f64)>,
) -> PyResult<EstimatorConfig> {
    let strategy = match strategy {
        "agd" => Strategy::Agd,
        "exact_coordinate" => Strategy::ExactCoordinate,
        other => return Err(PyValueError::new_err(format!("unknown strategy '{other}'"))),
    };
    Ok(EstimatorConfig {
        delta,
        z_override: z,
        grad_tol,
        max_iters,
        tau_floor,
        strategy,
        init: match init {
            Some((mu0, tau0)) => InitPolicy::User { mu0, tau0 },
            None => InitPolicy::MedianMad,
        },
    })
}

/// Joint estimate of (mu, tau).
#[pyfunction]
#[pyo3(signature = (values, delta=0.05, z=None, strategy="agd", grad_tol=1e-10, max_iters=100_000, tau_floor=None, init=None))]
#[allow(clippy::too_many_arguments)]
fn fit(
    py: Python<'_>,
    values: Vec<f64>,
    delta: f64,
    z: Option<f64>,
    strategy: &str,
    grad_tol: f64,
    max_iters: usize,
    tau_floor: Option<f64>,
    init: Option<(f64, f64)>,
) -> PyResult<PyFitResult> {
    let cfg = config(delta, z, strategy, grad_tol, max_iters, tau_floor, init)?;
    let data = sample(values)?;
    let res = py.detach(|| solver::fit(&data, &cfg)).map_err(to_py)?;
    Ok(res.into())
}

#[pyfunction]
#[pyo3(signature = (values, tau, delta=0.05, z=None))]
fn fit_fixed_tau(values: Vec<f64>, tau: f64, delta: f64, z: Option<f64>) -> PyResult<f64> {
    let cfg = EstimatorConfig { delta, z_override: z, ..Default::default() };
    solver::fit_fixed_tau(&sample(values)?, tau, &cfg).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (values, tau, delta=0.05, z=None))]
fn profile_tau_gradient(values: Vec<f64>, tau: f64, delta: f64, z: Option<f64>) -> PyResult<f64> {
    let cfg = EstimatorConfig { delta, z_override: z, ..Default::default() };
    solver::profile_tau_gradient(&sample(values)?, tau, &cfg).map_err(to_py)
}

#[pyfunction]
fn pointwise_loss(x: f64, tau: f64, n: usize, z: f64) -> PyResult<f64> {
    loss::pointwise_loss(x, tau, n, z).map_err(to_py)
}

#[pyfunction]
fn total_loss(values: Vec<f64>, mu: f64, tau: f64, z: f64) -> PyResult<f64> {
    loss::total_loss(&sample(values)?, point(mu, tau, z)?).map_err(to_py)
}

/// `(dL/dmu, dL/dtau)`.
#[pyfunction]
fn gradient(values: Vec<f64>, mu: f64, tau: f64, z: f64) -> PyResult<(f64, f64)> {
    let d = sample(values)?;
    let p = point(mu, tau, z)?;
    Ok((loss::grad_mu(&d, p).map_err(to_py)?, loss::grad_tau(&d, p).map_err(to_py)?))
}

/// `(d_mumu, d_mutau, d_tautau)`.
#[pyfunction]
fn hessian(values: Vec<f64>, mu: f64, tau: f64, z: f64) -> PyResult<(f64, f64, f64)> {
    let h = loss::hessian(&sample(values)?, point(mu, tau, z)?).map_err(to_py)?;
    Ok((h.d_mumu, h.d_mutau, h.d_tautau))
}

#[pyfunction]
#[pyo3(signature = (noise, n, sigma=1.0, z=None, delta=0.05))]
fn tau_star(noise: &str, n: usize, sigma: f64, z: Option<f64>, delta: f64) -> PyResult<PyOracleSolution> {
    let z = z.unwrap_or_else(|| solver::z_from_delta(delta));
    let s = oracle::tau_star(&noise_model(noise)?, sigma, n, z).map_err(to_py)?;
    Ok(PyOracleSolution {
        tau_star: s.tau_star,
        sigma_tau_star_sq: s.sigma_tau_star_sq,
        lower_bound_sq: s.lower_bound_sq,
        upper_bound_sq: s.upper_bound_sq,
        residual: s.residual,
        n: s.n,
        z: s.z,
        sigma: s.sigma,
    })
}

#[pyfunction]
fn sigma_tau_sq(noise: &str, sigma: f64, tau: f64) -> PyResult<f64> {
    oracle::sigma_tau_sq(&noise_model(noise)?, sigma, tau).map_err(to_py)
}

/// Seeded draw of `mu + sigma * eps_i`.
#[pyfunction]
#[pyo3(signature = (noise, n, sigma=1.0, mu=0.0, seed=0))]
fn simulate(noise: &str, n: usize, sigma: f64, mu: f64, seed: u64) -> PyResult<Vec<f64>> {
    Ok(noise::sample(&noise_model(noise)?, sigma, n, mu, seed).map_err(to_py)?.into_inner())
}

#[pyfunction]
fn sample_mean(values: Vec<f64>) -> PyResult<f64> {
    Ok(harness::sample_mean(&sample(values)?))
}

#[pyfunction]
#[pyo3(signature = (values, blocks, seed=0))]
fn median_of_means(values: Vec<f64>, blocks: usize, seed: u64) -> PyResult<f64> {
    harness::median_of_means(&sample(values)?, blocks, seed).map_err(to_py)
}

/// Runs a study and returns its JSON document as a string.
#[pyfunction]
#[pyo3(signature = (noise, n_grid, replications, sigma=1.0, mu=0.0, delta=0.05, z=None, seed=0, estimators=None, kind="deviation"))]
#[allow(clippy::too_many_arguments)]
fn run_study(
    py: Python<'_>,
    noise: &str,
    n_grid: Vec<usize>,
    replications: usize,
    sigma: f64,
    mu: f64,
    delta: f64,
    z: Option<f64>,
    seed: u64,
    estimators: Option<Vec<String>>,
    kind: &str,
) -> PyResult<String> {
    let estimators = match estimators {
        Some(list) => list.iter().map(|e| e.parse::<Estimator>()).collect::<Result<Vec<_>, _>>().map_err(to_py)?,
        None => vec![Estimator::PenalizedPh, Estimator::SampleMean],
    };
    let spec = StudySpec {
        noise: noise_model(noise)?,
        sigma,
        mu_true: mu,
        n_grid,
        delta,
        z_override: z,
        replications,
        base_seed: seed,
        estimators,
    };
    let res = match kind {
        "deviation" => py.detach(|| harness::run_deviation_study(&spec)),
        "tau_adaptivity" => py.detach(|| harness::run_tau_adaptivity_study(&spec)),
        other => return Err(PyValueError::new_err(format!("unknown study kind '{other}'"))),
    }
    .map_err(to_py)?;
    Ok(res.to_json())
}

#[pymodule]
#[pyo3(name = "pseudohuber")]
fn pseudohuber_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFitResult>()?;
    m.add_class::<PyOracleSolution>()?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(fit_fixed_tau, m)?)?;
    m.add_function(wrap_pyfunction!(profile_tau_gradient, m)?)?;
    m.add_function(wrap_pyfunction!(pointwise_loss, m)?)?;
    m.add_function(wrap_pyfunction!(total_loss, m)?)?;
    m.add_function(wrap_pyfunction!(gradient, m)?)?;
    m.add_function(wrap_pyfunction!(hessian, m)?)?;
    m.add_function(wrap_pyfunction!(tau_star, m)?)?;
    m.add_function(wrap_pyfunction!(sigma_tau_sq, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(sample_mean, m)?)?;
    m.add_function(wrap_pyfunction!(median_of_means, m)?)?;
    m.add_function(wrap_pyfunction!(run_study, m)?)?;
    m.add("DEFAULT_DELTA", 0.05)?;
    Ok(())
}
