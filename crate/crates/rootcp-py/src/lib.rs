//! Python bindings for the rootcp conformal prediction library.
//!
//! Exposes the main types (datasets, regressors, intervals) and the interval
//! constructions behind a thin, list-based interface. Build with
//! `cargo build -p rootcp-py --release`; the resulting `lib_rootcp.so`
//! imports as the module `_rootcp` once renamed `_rootcp.so`.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use rootcp::bench::SyntheticSpec;
use rootcp::{ConformalConfig, Envelope, Epsilon, Error, ScoreFunction, SmoothingConfig};

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::InvalidInput(_) | Error::Parse { .. } => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn parse_envelope(name: &str) -> PyResult<Envelope> {
    match name {
        "sigmoid" => Ok(Envelope::Sigmoid),
        "lower_ramp" => Ok(Envelope::LowerRamp),
        "upper_ramp" => Ok(Envelope::UpperRamp),
        other => Err(PyValueError::new_err(format!(
            "unknown envelope '{other}' (expected sigmoid, lower_ramp or upper_ramp)"
        ))),
    }
}

fn config(alpha: f64, eps: Option<f64>, max_fits: usize) -> PyResult<ConformalConfig> {
    let epsilon = match eps {
        Some(e) => Epsilon::Absolute(e),
        None => Epsilon::ResponseScaled(1e-4),
    };
    ConformalConfig::with(alpha, epsilon, max_fits).map_err(to_py_err)
}

/// Observed regression data plus the test feature row.
#[pyclass(frozen)]
struct Dataset {
    inner: rootcp::Dataset,
}

#[pymethods]
impl Dataset {
    #[new]
    fn new(
        features: Vec<Vec<f64>>,
        responses: Vec<f64>,
        test_features: Vec<f64>,
    ) -> PyResult<Self> {
        let inner =
            rootcp::Dataset::from_rows(&features, &responses, &test_features).map_err(to_py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn p(&self) -> usize {
        self.inner.p()
    }

    fn __repr__(&self) -> String {
        format!("Dataset(n={}, p={})", self.inner.n(), self.inner.p())
    }
}

/// A symmetric regression estimator (ridge, lasso or k-nearest-neighbors).
#[pyclass(frozen)]
struct Regressor {
    inner: rootcp::SymmetricRegressor,
}

#[pymethods]
impl Regressor {
    #[staticmethod]
    fn ridge(lam: f64) -> PyResult<Self> {
        Ok(Self {
            inner: rootcp::SymmetricRegressor::ridge(lam).map_err(to_py_err)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (lam, tol = 1e-8, max_iter = 10_000))]
    fn lasso(lam: f64, tol: f64, max_iter: usize) -> PyResult<Self> {
        Ok(Self {
            inner: rootcp::SymmetricRegressor::lasso_with(lam, tol, max_iter).map_err(to_py_err)?,
        })
    }

    #[staticmethod]
    fn knn(k: usize) -> PyResult<Self> {
        Ok(Self {
            inner: rootcp::SymmetricRegressor::knn(k).map_err(to_py_err)?,
        })
    }

    /// Fit on the augmented data `D_n + (x_test, candidate)` and return the
    /// predictions at every augmented row.
    fn fit_predict(&self, dataset: &Dataset, candidate: f64) -> PyResult<Vec<f64>> {
        let model = self
            .inner
            .fit(&dataset.inner, candidate)
            .map_err(to_py_err)?;
        Ok(model
            .predict_rows(dataset.inner.augmented_features())
            .as_slice()
            .to_vec())
    }

    fn __repr__(&self) -> String {
        format!("Regressor({:?})", self.inner)
    }
}

/// A conformal prediction interval with its accounting.
#[pyclass(frozen, get_all)]
struct Interval {
    lower: f64,
    upper: f64,
    epsilon: f64,
    fits_used: usize,
    method: String,
    warnings: Vec<String>,
}

impl From<rootcp::ConformalInterval> for Interval {
    fn from(itv: rootcp::ConformalInterval) -> Self {
        Self {
            lower: itv.lower,
            upper: itv.upper,
            epsilon: itv.epsilon,
            fits_used: itv.fits_used,
            method: itv.method.to_string(),
            warnings: itv.warnings,
        }
    }
}

#[pymethods]
impl Interval {
    fn is_empty(&self) -> bool {
        self.lower.is_nan()
    }

    fn length(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.upper - self.lower
        }
    }

    fn contains(&self, y: f64) -> bool {
        !self.is_empty() && self.lower <= y && y <= self.upper
    }

    fn __repr__(&self) -> String {
        format!(
            "Interval[{:.6}, {:.6}] (method={}, fits={})",
            self.lower, self.upper, self.method, self.fits_used
        )
    }
}

/// Full conformal interval by bisection on the typicalness function.
#[pyfunction]
#[pyo3(signature = (regressor, dataset, alpha = 0.1, eps = None, max_fits = 1000))]
fn conformal_interval(
    regressor: &Regressor,
    dataset: &Dataset,
    alpha: f64,
    eps: Option<f64>,
    max_fits: usize,
) -> PyResult<Interval> {
    let cfg = config(alpha, eps, max_fits)?;
    rootcp::conformal_interval(&regressor.inner, &dataset.inner, &cfg)
        .map(Interval::from)
        .map_err(to_py_err)
}

/// Split (inductive) conformal interval: one fit, calibration quantile.
#[pyfunction]
#[pyo3(signature = (regressor, dataset, alpha = 0.1, train_fraction = 0.5, seed = 0))]
fn split_interval(
    regressor: &Regressor,
    dataset: &Dataset,
    alpha: f64,
    train_fraction: f64,
    seed: u64,
) -> PyResult<Interval> {
    let cfg = config(alpha, None, 1000)?;
    let split_cfg = rootcp::SplitConfig::new(train_fraction, seed).map_err(to_py_err)?;
    rootcp::split_interval(&regressor.inner, &dataset.inner, &cfg, &split_cfg)
        .map(Interval::from)
        .map_err(to_py_err)
}

/// Conformal interval from a piecewise-linear interpolation of the fit map
/// (`d` query fits plus two anchors), with exact crossing enumeration.
#[pyfunction]
#[pyo3(signature = (regressor, dataset, alpha = 0.1, d = 8, seed = 0))]
fn interp_interval(
    regressor: &Regressor,
    dataset: &Dataset,
    alpha: f64,
    d: usize,
    seed: u64,
) -> PyResult<Interval> {
    let cfg = config(alpha, None, 1000)?;
    let split_cfg = rootcp::SplitConfig::new(0.5, seed).map_err(to_py_err)?;
    rootcp::interp_interval_auto(&regressor.inner, &dataset.inner, &cfg, d, &split_cfg)
        .map(Interval::from)
        .map_err(to_py_err)
}

/// Conformal interval from the smoothed typicalness profile.
#[pyfunction]
#[pyo3(signature = (regressor, dataset, gamma, envelope = "sigmoid", alpha = 0.1,
                    eps = None, max_fits = 1000, target_alpha = None))]
#[allow(clippy::too_many_arguments)]
fn smooth_interval(
    regressor: &Regressor,
    dataset: &Dataset,
    gamma: f64,
    envelope: &str,
    alpha: f64,
    eps: Option<f64>,
    max_fits: usize,
    target_alpha: Option<f64>,
) -> PyResult<Interval> {
    let cfg = config(alpha, eps, max_fits)?;
    let mut smoothing =
        SmoothingConfig::new(gamma, parse_envelope(envelope)?).map_err(to_py_err)?;
    if let Some(t) = target_alpha {
        smoothing = smoothing.with_target_alpha(t).map_err(to_py_err)?;
    }
    rootcp::smooth_conformal_interval(&regressor.inner, &dataset.inner, &cfg, &smoothing)
        .map(Interval::from)
        .map_err(to_py_err)
}

/// Oracle baseline: one fit at the true held-out response.
#[pyfunction]
#[pyo3(signature = (regressor, dataset, true_response, alpha = 0.1))]
fn oracle_interval(
    regressor: &Regressor,
    dataset: &Dataset,
    true_response: f64,
    alpha: f64,
) -> PyResult<Interval> {
    let cfg = config(alpha, None, 1000)?;
    rootcp::bench::oracle_interval(&regressor.inner, &dataset.inner, true_response, &cfg)
        .map(Interval::from)
        .map_err(to_py_err)
}

/// The exact ridge conformal set as a list of disjoint `(lower, upper)`
/// intervals.
#[pyfunction]
#[pyo3(signature = (dataset, lam, alpha = 0.1))]
fn exact_ridge_intervals(dataset: &Dataset, lam: f64, alpha: f64) -> PyResult<Vec<(f64, f64)>> {
    rootcp::exact_ridge_set(&dataset.inner, lam, alpha)
        .map(|s| s.intervals)
        .map_err(to_py_err)
}

#[pyfunction]
fn rank_of_last(scores: Vec<f64>) -> PyResult<usize> {
    let sv = rootcp::ScoreVector::new(scores).map_err(to_py_err)?;
    Ok(rootcp::rank_of_last(&sv))
}

#[pyfunction]
fn typicalness(scores: Vec<f64>) -> PyResult<f64> {
    let sv = rootcp::ScoreVector::new(scores).map_err(to_py_err)?;
    Ok(rootcp::typicalness(&sv))
}

#[pyfunction]
fn typicalness_with_slack(scores: Vec<f64>, slack: f64) -> PyResult<f64> {
    let sv = rootcp::ScoreVector::new(scores).map_err(to_py_err)?;
    rootcp::typicalness_with_slack(&sv, slack).map_err(to_py_err)
}

#[pyfunction]
fn empirical_quantile(values: Vec<f64>, level: f64) -> PyResult<f64> {
    rootcp::empirical_quantile(&values, level).map_err(to_py_err)
}

#[pyfunction]
#[pyo3(signature = (scores, gamma, envelope = "sigmoid"))]
fn smooth_rank(scores: Vec<f64>, gamma: f64, envelope: &str) -> PyResult<f64> {
    let sv = rootcp::ScoreVector::new(scores).map_err(to_py_err)?;
    let cfg = SmoothingConfig::new(gamma, parse_envelope(envelope)?).map_err(to_py_err)?;
    Ok(rootcp::smooth_rank(&sv, &cfg))
}

#[pyfunction]
#[pyo3(signature = (scores, gamma, envelope = "sigmoid"))]
fn smooth_typicalness(scores: Vec<f64>, gamma: f64, envelope: &str) -> PyResult<f64> {
    let sv = rootcp::ScoreVector::new(scores).map_err(to_py_err)?;
    let cfg = SmoothingConfig::new(gamma, parse_envelope(envelope)?).map_err(to_py_err)?;
    Ok(rootcp::smooth_typicalness(&sv, &cfg))
}

/// The indicator surrogate `phi_gamma(x)`.
#[pyfunction]
#[pyo3(signature = (x, gamma, envelope = "sigmoid"))]
fn phi(x: f64, gamma: f64, envelope: &str) -> PyResult<f64> {
    Ok(rootcp::phi(parse_envelope(envelope)?, gamma, x))
}

/// Worst-case gap between the surrogate and the indicator.
#[pyfunction]
#[pyo3(signature = (gamma, envelope = "sigmoid"))]
fn delta(gamma: f64, envelope: &str) -> PyResult<f64> {
    Ok(rootcp::delta(parse_envelope(envelope)?, gamma))
}

/// Score `S(truth, prediction)` for kind "absolute", "squared" or "linex"
/// (the latter takes `gamma`).
#[pyfunction]
#[pyo3(signature = (kind, truth, prediction, gamma = 1.0))]
fn score(kind: &str, truth: f64, prediction: f64, gamma: f64) -> PyResult<f64> {
    let f = match kind {
        "absolute" => ScoreFunction::Absolute,
        "squared" => ScoreFunction::Squared,
        "linex" => ScoreFunction::AsymmetricLinex { gamma },
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown score kind '{other}' (expected absolute, squared or linex)"
            )))
        }
    };
    f.score(truth, prediction).map_err(to_py_err)
}

/// `(features, responses, test_features, held_out_response)`.
type SyntheticData = (Vec<Vec<f64>>, Vec<f64>, Vec<f64>, f64);

/// Seeded synthetic regression data.
#[pyfunction]
#[pyo3(signature = (n, p, n_informative, noise_sd = 1.0, seed = 0))]
fn generate_synthetic(
    n: usize,
    p: usize,
    n_informative: usize,
    noise_sd: f64,
    seed: u64,
) -> PyResult<SyntheticData> {
    let spec = SyntheticSpec::new(n, p, n_informative, noise_sd, seed).map_err(to_py_err)?;
    let (data, held_out) = rootcp::bench::generate(&spec).map_err(to_py_err)?;
    let features: Vec<Vec<f64>> = (0..data.n())
        .map(|i| (0..data.p()).map(|j| data.features()[(i, j)]).collect())
        .collect();
    Ok((
        features,
        data.responses().as_slice().to_vec(),
        data.test_features().as_slice().to_vec(),
        held_out,
    ))
}

#[pymodule]
fn _rootcp(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_class::<Regressor>()?;
    m.add_class::<Interval>()?;
    m.add_function(wrap_pyfunction!(conformal_interval, m)?)?;
    m.add_function(wrap_pyfunction!(split_interval, m)?)?;
    m.add_function(wrap_pyfunction!(interp_interval, m)?)?;
    m.add_function(wrap_pyfunction!(smooth_interval, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_interval, m)?)?;
    m.add_function(wrap_pyfunction!(exact_ridge_intervals, m)?)?;
    m.add_function(wrap_pyfunction!(rank_of_last, m)?)?;
    m.add_function(wrap_pyfunction!(typicalness, m)?)?;
    m.add_function(wrap_pyfunction!(typicalness_with_slack, m)?)?;
    m.add_function(wrap_pyfunction!(empirical_quantile, m)?)?;
    m.add_function(wrap_pyfunction!(smooth_rank, m)?)?;
    m.add_function(wrap_pyfunction!(smooth_typicalness, m)?)?;
    m.add_function(wrap_pyfunction!(phi, m)?)?;
    m.add_function(wrap_pyfunction!(delta, m)?)?;
    m.add_function(wrap_pyfunction!(score, m)?)?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    Ok(())
}
