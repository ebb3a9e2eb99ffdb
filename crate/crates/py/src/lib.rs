//! Python bindings: the instance type with its core analytics, the
//! closed-form bounds, and one-shot simulation/learning runs.
//!
//! Build the cdylib and import it as `loyalty_lab_py` (see
//! `python/smoke.py` for a loader that works straight out of the cargo
//! target directory).

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use loyalty_lab::error::Error;
use loyalty_lab::experiments;
use loyalty_lab::metrics::MetricsRow;
use loyalty_lab::model::{self, LinkKind};
use loyalty_lab::policies::{build_policy, PolicyConfig};
use loyalty_lab::rng::StreamRng;
use loyalty_lab::sim::{simulate_fixed, simulate_policy};
use loyalty_lab::steady::{self, Threshold};

fn to_py_err(err: Error) -> PyErr {
    match err {
        Error::Io { .. } => PyIOError::new_err(err.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse_link(name: &str) -> PyResult<LinkKind> {
    serde_json::from_value(serde_json::Value::String(name.to_string()))
        .map_err(|_| PyValueError::new_err(format!("unknown link {name:?}")))
}

fn to_threshold(n: Option<u32>) -> Threshold {
    n.map(Threshold::Finite).unwrap_or(Threshold::Infinite)
}

fn from_threshold(t: Threshold) -> Option<u32> {
    t.finite()
}

/// A complete rewards-program instance.
#[pyclass(module = "loyalty_lab_py", skip_from_py_object)]
#[derive(Clone)]
struct Instance {
    inner: model::Instance,
}

#[pymethods]
impl Instance {
    /// Parse the JSON wire format used by the CLI.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Instance {
            inner: model::Instance::from_json(text).map_err(to_py_err)?,
        })
    }

    /// The tight two-type instance with price of fairness exactly 3/2.
    #[staticmethod]
    fn tight() -> Self {
        Instance {
            inner: experiments::tight_two_type_instance(),
        }
    }

    /// The frequent-versus-infrequent instance of the regret study.
    #[staticmethod]
    fn regret_study() -> Self {
        Instance {
            inner: experiments::regret_study_instance(),
        }
    }

    /// A random two-type instance from the seeded study generator.
    #[staticmethod]
    fn two_type(seed: u64) -> Self {
        let mut rng = StreamRng::new(seed);
        Instance {
            inner: experiments::gen_two_type(&mut rng),
        }
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn n_max(&self) -> u32 {
        self.inner.n_max
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    /// Price of fairness of the instance.
    fn pof(&self) -> PyResult<f64> {
        steady::price_of_fairness(&self.inner).map_err(to_py_err)
    }

    /// Optimal shared goal as `(threshold, value)`; `None` means the
    /// paused program.
    fn optimal_threshold(&self) -> PyResult<(Option<u32>, f64)> {
        let choice = steady::optimal_threshold(&self.inner).map_err(to_py_err)?;
        Ok((from_threshold(choice.n), choice.value))
    }

    /// Per-type optimal goals plus the revenue they achieve together.
    fn personalized(&self) -> PyResult<(Vec<Option<u32>>, f64)> {
        let (choices, total) = steady::optimal_personalized(&self.inner).map_err(to_py_err)?;
        Ok((choices.iter().map(|c| from_threshold(c.n)).collect(), total))
    }

    /// Long-run mixture revenue of a goal (`None` = paused).
    fn mixture_revenue(&self, n: Option<u32>) -> PyResult<f64> {
        steady::mixture_revenue(&self.inner, to_threshold(n)).map_err(to_py_err)
    }

    fn no_loyalty_revenue(&self) -> f64 {
        self.inner.no_loyalty_revenue()
    }

    /// Regularity report as a JSON string.
    fn validate(&self) -> PyResult<String> {
        let report = model::validate_instance(&self.inner).map_err(to_py_err)?;
        serde_json::to_string(&report).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    /// Simulate a fixed goal; returns the observed revenue rate.
    #[pyo3(signature = (n, m, t, seed))]
    fn simulate(&self, n: Option<u32>, m: u64, t: u64, seed: u64) -> PyResult<f64> {
        let run = simulate_fixed(&self.inner, to_threshold(n), m, t, seed).map_err(to_py_err)?;
        Ok(run.observed_revenue_rate())
    }

    /// Run a learning policy end to end; returns the metrics row as a
    /// JSON string.
    #[pyo3(signature = (policy, t, m, seed))]
    fn learn(&self, policy: &str, t: u64, m: u64, seed: u64) -> PyResult<String> {
        let kind = serde_json::from_value(serde_json::Value::String(policy.to_string()))
            .map_err(|_| PyValueError::new_err(format!("unknown policy {policy:?}")))?;
        let config = PolicyConfig::new(kind);
        let mut built = build_policy(&config, &self.inner, t, m).map_err(to_py_err)?;
        let run = simulate_policy(&self.inner, built.as_mut(), m, t, seed).map_err(to_py_err)?;
        let row = MetricsRow::evaluate(&run, &self.inner, built.name()).map_err(to_py_err)?;
        serde_json::to_string(&row).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!("Instance(k={}, n_max={})", self.inner.k(), self.inner.n_max)
    }
}

/// Worst-case price-of-fairness bound `K - (K-1) 2^(-1/(K-1))`.
#[pyfunction]
fn pof_upper_bound(k: u32) -> f64 {
    steady::pof_upper_bound(k)
}

/// Mixing-time bound `(n_max+1)^2 / (2 (1-mu_max) mu_min)`.
#[pyfunction]
fn tmix_upper_bound(n_max: u32, mu_min: f64, mu_max: f64) -> f64 {
    steady::tmix_upper_bound(n_max, mu_min, mu_max)
}

/// Purchase probability `min(link(b1 + b2 tau), 1)`.
#[pyfunction]
fn purchase_prob(link: &str, baseline: f64, b1: f64, b2: f64, tau: u32) -> PyResult<f64> {
    let spec = model::TypeSpec::new(parse_link(link)?, baseline, b1, b2).map_err(to_py_err)?;
    Ok(spec.purchase_prob(tau))
}

/// Closed-form revenue gap `R(1) - R(2)` of the lower-bound pair
/// (`which` is "first" or "second").
#[pyfunction]
fn rev_gap_closed_form(delta: f64, which: &str) -> PyResult<f64> {
    let member = match which {
        "first" => experiments::PairMember::First,
        "second" => experiments::PairMember::Second,
        other => return Err(PyValueError::new_err(format!("unknown member {other:?}"))),
    };
    Ok(experiments::rev_gap_closed_form(delta, member))
}

/// The two nearly indistinguishable lower-bound instances.
#[pyfunction]
fn lower_bound_pair(delta: f64) -> PyResult<(Instance, Instance)> {
    let (a, b) = experiments::gen_lower_bound_pair(delta).map_err(to_py_err)?;
    Ok((Instance { inner: a }, Instance { inner: b }))
}

#[pymodule]
fn loyalty_lab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Instance>()?;
    m.add_function(wrap_pyfunction!(pof_upper_bound, m)?)?;
    m.add_function(wrap_pyfunction!(tmix_upper_bound, m)?)?;
    m.add_function(wrap_pyfunction!(purchase_prob, m)?)?;
    m.add_function(wrap_pyfunction!(rev_gap_closed_form, m)?)?;
    m.add_function(wrap_pyfunction!(lower_bound_pair, m)?)?;
    Ok(())
}
