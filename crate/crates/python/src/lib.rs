//! Python bindings for `rtk_core`. Sample matrices cross the boundary as
//! lists of rows.

use ndarray::{Array1, Array2};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use rtk_core::bench::{render_csv, run_experiment as run_core_experiment, ExperimentConfig};
use rtk_core::metrics;
use rtk_core::mixture::{Component, IsotropicGaussianMixture};
use rtk_core::oracle::ScoreOracle;
use rtk_core::rng::stream_rng;
use rtk_core::samplers::{self, EnergyEstimator, InnerKind, RtkMethod, StepRule, UldKernel};
use rtk_core::schedule::RtkSchedule;
use rtk_core::RtkError;

fn py_err(e: RtkError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_matrix(rows: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err("rows must all have the same length"));
    }
    Array2::from_shape_vec((n, d), rows.into_iter().flatten().collect())
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

type Draws = (Vec<Vec<f64>>, Vec<u64>, Option<f64>);

fn to_rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

#[pyclass(name = "Mixture", frozen)]
struct PyMixture {
    inner: IsotropicGaussianMixture,
}

#[pymethods]
impl PyMixture {
    #[new]
    fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<f64>) -> PyResult<Self> {
        if weights.len() != means.len() || weights.len() != variances.len() {
            return Err(PyValueError::new_err("weights, means and variances need equal lengths"));
        }
        let dim = means.first().map_or(0, Vec::len);
        let components = weights
            .into_iter()
            .zip(means)
            .zip(variances)
            .map(|((weight, mean), variance)| Component { weight, mean, variance })
            .collect();
        let inner = IsotropicGaussianMixture::new(dim, components).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn circle(n_components: usize, dim: usize, radius: f64, variance: f64) -> PyResult<Self> {
        let inner = IsotropicGaussianMixture::circle(n_components, dim, radius, variance).map_err(py_err)?;
        Ok(Self { inner })
    }

    /// The 12-component, 10-D benchmark mixture.
    #[staticmethod]
    fn benchmark() -> Self {
        Self {
            inner: IsotropicGaussianMixture::circle(12, 10, 1.0, 0.007).expect("valid preset"),
        }
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn n_components(&self) -> usize {
        self.inner.n_components()
    }

    fn means(&self) -> Vec<Vec<f64>> {
        to_rows(self.inner.means())
    }

    fn log_density(&self, t: f64, x: Vec<f64>) -> PyResult<f64> {
        self.check(&x)?;
        Ok(self.inner.log_density(t, Array1::from(x).view()))
    }

    fn score(&self, t: f64, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check(&x)?;
        Ok(self.inner.score(t, Array1::from(x).view()).to_vec())
    }

    fn forward_marginal(&self, t: f64) -> Self {
        Self {
            inner: self.inner.forward_marginal(t),
        }
    }

    fn second_moment(&self) -> f64 {
        self.inner.second_moment()
    }

    fn sample(&self, n: usize, seed: u64) -> Vec<Vec<f64>> {
        to_rows(&self.inner.sample(n, &mut stream_rng(seed, 0)))
    }

    fn __repr__(&self) -> String {
        format!("Mixture(dim={}, n_components={})", self.inner.dim(), self.inner.n_components())
    }
}

impl PyMixture {
    fn check(&self, x: &[f64]) -> PyResult<()> {
        if x.len() != self.inner.dim() {
            return Err(py_err(RtkError::DimensionMismatch {
                expected: self.inner.dim(),
                found: x.len(),
            }));
        }
        Ok(())
    }
}

#[pyfunction]
fn eta_for(smoothness: f64) -> PyResult<f64> {
    rtk_core::eta_for(smoothness).map_err(py_err)
}

#[pyfunction]
fn outer_steps(smoothness: f64, dim: usize, grad0_norm: f64, eps: f64) -> PyResult<usize> {
    rtk_core::outer_steps(smoothness, dim, grad0_norm, eps).map_err(py_err)
}

/// `(var_z, cov_zv, var_v)` of the ULD noise pair.
#[pyfunction]
fn uld_noise_covariance(friction: f64, step: f64) -> PyResult<(f64, f64, f64)> {
    let k = UldKernel::new(friction, step).map_err(py_err)?;
    Ok((k.var_z(), k.cov_zv(), k.var_v()))
}

/// DDPM samples and per-chain NFE.
#[pyfunction]
#[pyo3(signature = (mixture, horizon, steps, n, seed=0))]
fn ddpm(mixture: &PyMixture, horizon: f64, steps: usize, n: usize, seed: u64) -> PyResult<(Vec<Vec<f64>>, Vec<u64>)> {
    let o = ScoreOracle::exact(mixture.inner.clone());
    let run = samplers::ddpm_run(&o, horizon, steps, n, seed).map_err(py_err)?;
    Ok((to_rows(&run.samples), run.nfe))
}

/// RTK samples over a fixed schedule; returns `(samples, nfe, accept_rate)`.
#[pyfunction]
#[pyo3(signature = (
    mixture, inner, iterations, n, seed=0, horizon=6.0,
    fractions=vec![0.0, 0.2, 0.4, 0.6, 0.8], smoothness=None, step_scale=0.5, estimator="exact"
))]
#[allow(clippy::too_many_arguments)]
fn rtk(
    mixture: &PyMixture,
    inner: &str,
    iterations: usize,
    n: usize,
    seed: u64,
    horizon: f64,
    fractions: Vec<f64>,
    smoothness: Option<f64>,
    step_scale: f64,
    estimator: &str,
) -> PyResult<Draws> {
    let estimator = match estimator {
        "exact" => EnergyEstimator::Exact,
        "taylor" => EnergyEstimator::taylor_default(0.0),
        other => return Err(PyValueError::new_err(format!("unknown estimator {other:?}"))),
    };
    let kind = match inner {
        "ula" => InnerKind::Ula,
        "mala" => InnerKind::Mala { projection: None, estimator, lazy: false },
        "uld" => InnerKind::Uld { friction: None },
        other => return Err(PyValueError::new_err(format!("unknown inner sampler {other:?}"))),
    };
    let o = ScoreOracle::exact(mixture.inner.clone());
    let l = smoothness.unwrap_or_else(|| 1.0 / mixture.inner.min_variance(0.0));
    let schedule = RtkSchedule::fixed(l, horizon, &fractions).map_err(py_err)?;
    let method = RtkMethod::new(kind, vec![iterations], StepRule::Smoothness { scale: step_scale });
    let run = samplers::rtk_run(&o, &schedule, &method, n, seed).map_err(py_err)?;
    Ok((to_rows(&run.samples), run.nfe.clone(), run.accept_rate()))
}

#[pyfunction]
#[pyo3(signature = (samples, reference, bins=metrics::DEFAULT_BINS))]
fn marginal_accuracy(samples: Vec<Vec<f64>>, reference: Vec<Vec<f64>>, bins: usize) -> PyResult<f64> {
    let (s, r) = (to_matrix(samples)?, to_matrix(reference)?);
    metrics::marginal_accuracy(s.view(), r.view(), bins).map_err(py_err)
}

#[pyfunction]
fn histogram_tv(a: Vec<f64>, b: Vec<f64>, low: f64, high: f64, bins: usize) -> PyResult<f64> {
    let edges = metrics::uniform_edges(low, high, bins).map_err(py_err)?;
    metrics::histogram_tv(Array1::from(a).view(), Array1::from(b).view(), &edges).map_err(py_err)
}

#[pyfunction]
fn mode_mass(samples: Vec<Vec<f64>>, mixture: &PyMixture) -> PyResult<Vec<f64>> {
    metrics::mode_mass(to_matrix(samples)?.view(), &mixture.inner).map_err(py_err)
}

#[pyfunction]
fn second_moment(samples: Vec<Vec<f64>>) -> PyResult<f64> {
    metrics::second_moment(to_matrix(samples)?.view()).map_err(py_err)
}

/// The benchmark preset as TOML text.
#[pyfunction]
fn paper_preset() -> String {
    ExperimentConfig::paper_preset().to_toml_string()
}

/// Runs a TOML experiment config and returns the results CSV.
#[pyfunction]
fn run_experiment(py: Python<'_>, config: &str) -> PyResult<String> {
    let cfg = ExperimentConfig::from_toml_str(config).map_err(py_err)?;
    let report = py.detach(|| run_core_experiment(&cfg)).map_err(py_err)?;
    Ok(render_csv(&report))
}

#[pymodule]
fn rtk_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMixture>()?;
    m.add_function(wrap_pyfunction!(eta_for, m)?)?;
    m.add_function(wrap_pyfunction!(outer_steps, m)?)?;
    m.add_function(wrap_pyfunction!(uld_noise_covariance, m)?)?;
    m.add_function(wrap_pyfunction!(ddpm, m)?)?;
    m.add_function(wrap_pyfunction!(rtk, m)?)?;
    m.add_function(wrap_pyfunction!(marginal_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(histogram_tv, m)?)?;
    m.add_function(wrap_pyfunction!(mode_mass, m)?)?;
    m.add_function(wrap_pyfunction!(second_moment, m)?)?;
    m.add_function(wrap_pyfunction!(paper_preset, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
