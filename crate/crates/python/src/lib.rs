//! Python bindings. Structured results cross the boundary as JSON and come
//! back to Python as plain dicts.

use eqchirp::asymptotics::{AsymptoticReport, CrossTermConvention};
use eqchirp::model::{self, Component};
use eqchirp::montecarlo::{self, SweepConfig};
use eqchirp::optimize::InitStrategy;
use eqchirp::{EstimatorOptions, InitBox, Inits, Method, ParameterBounds, Signal};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyString;
use serde::de::DeserializeOwned;
use serde::Serialize;

fn to_py_err(e: eqchirp::Error) -> PyErr {
    use eqchirp::Error as E;
    match e {
        E::DegenerateDesign { .. } | E::BadStart | E::Numerical(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_dict<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Accepts a JSON string or any JSON-serialisable Python object.
fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = if obj.is_instance_of::<PyString>() {
        obj.extract()?
    } else {
        obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?
    };
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn parse_method(name: &str) -> PyResult<Method> {
    name.parse().map_err(to_py_err)
}

fn estimator_options(obj: Option<&Bound<'_, PyAny>>) -> PyResult<EstimatorOptions> {
    obj.map_or_else(|| Ok(EstimatorOptions::default()), from_py)
}

#[pyclass(name = "ChirpParams", frozen, skip_from_py_object, module = "eqchirp")]
#[derive(Clone)]
struct PyChirpParams {
    inner: model::ChirpParams,
}

#[pymethods]
impl PyChirpParams {
    /// `components` is a list of `(a, b, alpha)` triples. Components are
    /// sorted into decreasing power.
    #[new]
    fn new(components: Vec<(f64, f64, f64)>, beta: f64) -> PyResult<Self> {
        let comps = components.into_iter().map(|(a, b, alpha)| Component::new(a, b, alpha)).collect();
        let (inner, _) = model::ChirpParams::sorted(comps, beta).map_err(to_py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn benchmark() -> Self {
        Self { inner: model::ChirpParams::benchmark() }
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        serde_json::from_str(text).map(|inner| Self { inner }).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[getter]
    fn components(&self) -> Vec<(f64, f64, f64)> {
        self.inner.components().iter().map(|c| (c.a, c.b, c.alpha)).collect()
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.inner.beta()
    }

    #[getter]
    fn powers(&self) -> Vec<f64> {
        self.inner.powers()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("ChirpParams(components={:?}, beta={})", self.components(), self.inner.beta())
    }
}

#[pyclass(name = "NoiseModel", frozen, skip_from_py_object, module = "eqchirp")]
#[derive(Clone)]
struct PyNoiseModel {
    inner: eqchirp::NoiseModel,
}

impl PyNoiseModel {
    fn checked(inner: eqchirp::NoiseModel) -> PyResult<Self> {
        inner.validate().map_err(to_py_err)?;
        Ok(Self { inner })
    }
}

#[pymethods]
impl PyNoiseModel {
    #[staticmethod]
    fn iid(sigma: f64) -> PyResult<Self> {
        Self::checked(eqchirp::NoiseModel::Iid { sigma })
    }

    #[staticmethod]
    #[pyo3(signature = (sigma, phi = 0.6, theta = 0.1))]
    fn arma11(sigma: f64, phi: f64, theta: f64) -> PyResult<Self> {
        Self::checked(eqchirp::NoiseModel::Arma11 { phi, theta, sigma })
    }

    #[staticmethod]
    #[pyo3(signature = (coefficients, sigma, first_lag = 0))]
    fn linear(coefficients: Vec<f64>, sigma: f64, first_lag: i64) -> PyResult<Self> {
        Self::checked(eqchirp::NoiseModel::Linear { coefficients, first_lag, sigma })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Self::checked(inner)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn generate(&self, n_samples: usize, seed: u64) -> PyResult<Vec<f64>> {
        self.inner.generate(n_samples, seed).map_err(to_py_err)
    }

    #[getter]
    fn sigma(&self) -> f64 {
        self.inner.sigma()
    }

    fn long_run_constant(&self) -> f64 {
        self.inner.long_run_constant()
    }

    fn variance(&self) -> f64 {
        self.inner.variance()
    }

    fn __repr__(&self) -> String {
        format!("NoiseModel({})", self.to_json().unwrap_or_default())
    }
}

/// Noiseless signal plus optional additive noise samples.
#[pyfunction]
#[pyo3(signature = (params, n_samples, noise = None))]
fn synthesize(params: &PyChirpParams, n_samples: usize, noise: Option<Vec<f64>>) -> PyResult<Vec<f64>> {
    model::synthesize(&params.inner, n_samples, noise.as_deref()).map(Signal::into_samples).map_err(to_py_err)
}

/// `(signal power, SNR in dB)` for innovation standard deviation `sigma`.
#[pyfunction]
fn signal_power_and_snr(params: &PyChirpParams, sigma: f64) -> PyResult<(f64, f64)> {
    model::signal_power_and_snr(&params.inner, sigma).map_err(to_py_err)
}

#[pyfunction]
fn sigma_for_snr(params: &PyChirpParams, snr_db: f64) -> PyResult<f64> {
    model::sigma_for_snr(&params.inner, snr_db).map_err(to_py_err)
}

/// Starting points from a grid search around `hints`, one `(alpha, beta)`
/// per component.
#[pyfunction]
#[pyo3(signature = (samples, hints, strategy = "oracle_neighborhood", points = 21))]
fn init_from_grid(samples: Vec<f64>, hints: Vec<(f64, f64)>, strategy: &str, points: usize) -> PyResult<Vec<(f64, f64)>> {
    let signal = Signal::new(samples).map_err(to_py_err)?;
    let strategy: InitStrategy = serde_json::from_value(serde_json::Value::String(strategy.into()))
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    Inits::from_grid(&signal, &hints, strategy, points, &ParameterBounds::default())
        .map(|i| i.pairs)
        .map_err(to_py_err)
}

/// Starting points from a grid search over boxes
/// `[((alpha_lo, alpha_hi), (beta_lo, beta_hi)), ...]`.
#[pyfunction]
#[pyo3(signature = (samples, boxes, points = 21))]
fn init_from_boxes(samples: Vec<f64>, boxes: Vec<((f64, f64), (f64, f64))>, points: usize) -> PyResult<Vec<(f64, f64)>> {
    let signal = Signal::new(samples).map_err(to_py_err)?;
    let boxes: Vec<InitBox> = boxes.into_iter().map(|(alpha, beta)| InitBox { alpha, beta }).collect();
    Inits::from_boxes(&signal, &boxes, points, &ParameterBounds::default()).map(|i| i.pairs).map_err(to_py_err)
}

/// Runs one estimator. `inits` holds one `(alpha, beta)` pair per component
/// in extraction order; `options` is estimator-options JSON or a dict.
#[pyfunction]
#[pyo3(signature = (method, samples, inits, options = None))]
fn estimate<'py>(
    py: Python<'py>,
    method: &str,
    samples: Vec<f64>,
    inits: Vec<(f64, f64)>,
    options: Option<&Bound<'py, PyAny>>,
) -> PyResult<Bound<'py, PyAny>> {
    let method = parse_method(method)?;
    let signal = Signal::new(samples).map_err(to_py_err)?;
    let inits = Inits::new(inits).map_err(to_py_err)?;
    let opts = estimator_options(options)?;
    let result = py.detach(|| eqchirp::estimate(method, &signal, &inits, &opts)).map_err(to_py_err)?;
    to_dict(py, &result)
}

/// Asymptotic variances of all three estimators.
#[pyfunction]
#[pyo3(signature = (params, c = 1.0, sigma2 = 1.0, n_samples = None, cross_terms = "verbatim"))]
fn asymptotic_report<'py>(
    py: Python<'py>,
    params: &PyChirpParams,
    c: f64,
    sigma2: f64,
    n_samples: Option<usize>,
    cross_terms: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let convention = match cross_terms {
        "verbatim" => CrossTermConvention::Verbatim,
        "divided_by_leading_power" => CrossTermConvention::DividedByLeadingPower,
        other => return Err(PyValueError::new_err(format!("unknown cross-term convention `{other}`"))),
    };
    let report = AsymptoticReport::new(&params.inner, c, sigma2, n_samples, convention).map_err(to_py_err)?;
    to_dict(py, &report)
}

/// Monte-Carlo MSE sweep from a config dict or JSON string.
#[pyfunction]
fn run_sweep<'py>(py: Python<'py>, config: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    let config: SweepConfig = from_py(config)?;
    let report = py.detach(|| montecarlo::run_sweep(&config)).map_err(to_py_err)?;
    to_dict(py, &report)
}

#[pyfunction]
fn run_timing<'py>(py: Python<'py>, config: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    let config: SweepConfig = from_py(config)?;
    let report = py.detach(|| montecarlo::run_timing(&config)).map_err(to_py_err)?;
    to_dict(py, &report)
}

#[pymodule]
#[pyo3(name = "eqchirp")]
fn eqchirp_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyChirpParams>()?;
    m.add_class::<PyNoiseModel>()?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(signal_power_and_snr, m)?)?;
    m.add_function(wrap_pyfunction!(sigma_for_snr, m)?)?;
    m.add_function(wrap_pyfunction!(init_from_grid, m)?)?;
    m.add_function(wrap_pyfunction!(init_from_boxes, m)?)?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    m.add_function(wrap_pyfunction!(asymptotic_report, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(run_timing, m)?)?;
    m.add("METHODS", Method::ALL.iter().map(|m| m.as_str()).collect::<Vec<_>>())?;
    Ok(())
}
