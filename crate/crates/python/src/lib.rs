//! Python bindings. Scenarios are classes; results come back as plain
//! dicts and lists with the same keys as the CLI's JSON output.

use borrowoc::borrow::{self, ArmSummary, BorrowingMethod};
use borrowoc::oc_onearm::{self, ScenarioOneArm};
use borrowoc::oc_twoarm::{self, ScenarioTwoArm};
use borrowoc::region;
use borrowoc::runner::{self, Design, RunOptions, TwoArmDesign};
use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde::Serialize;
use serde_json::Value;

fn to_py_err(e: borrowoc::Error) -> PyErr {
    if e.is_numeric() {
        PyArithmeticError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn method(name: &str, delta: Option<f64>) -> PyResult<BorrowingMethod> {
    match (name, delta) {
        ("none", None) => Ok(BorrowingMethod::NoBorrowing),
        ("eb-pp", None) => Ok(BorrowingMethod::EmpiricalBayes),
        ("fixed-pp", Some(d)) => BorrowingMethod::fixed(d).map_err(to_py_err),
        ("fixed-pp", None) => Err(PyValueError::new_err("method 'fixed-pp' needs delta")),
        ("none" | "eb-pp", Some(_)) => Err(PyValueError::new_err(format!("method '{name}' takes no delta"))),
        _ => Err(PyValueError::new_err(format!(
            "unknown method '{name}'; expected 'none', 'fixed-pp' or 'eb-pp'"
        ))),
    }
}

fn json_to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match n.as_u64() {
            Some(u) => u.into_pyobject(py)?.into_any(),
            None => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, item) in map {
                dict.set_item(k, json_to_py(py, item)?)?;
            }
            dict.into_any()
        }
    })
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let v = serde_json::to_value(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    json_to_py(py, &v)
}

/// One-arm trial: current arm of size `n` tested against `theta0`, with
/// `n_e` external observations.
#[pyclass(frozen, from_py_object, module = "borrowoc_py")]
#[derive(Clone)]
struct OneArmScenario {
    inner: ScenarioOneArm,
}

#[pymethods]
impl OneArmScenario {
    #[new]
    #[pyo3(signature = (n, n_e, theta1, sigma=1.0, theta0=0.0, alpha=0.025, c=None, sigma_e=None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        n: u32,
        n_e: u32,
        theta1: f64,
        sigma: f64,
        theta0: f64,
        alpha: f64,
        c: Option<f64>,
        sigma_e: Option<f64>,
    ) -> PyResult<Self> {
        let mut s = ScenarioOneArm::new(n, n_e, sigma, theta0, theta1, alpha).map_err(to_py_err)?;
        if let Some(c) = c {
            s = s.with_c(c).map_err(to_py_err)?;
        }
        if let Some(se) = sigma_e {
            s = s.with_sigma_e(se).map_err(to_py_err)?;
        }
        Ok(Self { inner: s })
    }

    #[getter]
    fn n(&self) -> u32 {
        self.inner.n
    }
    #[getter]
    fn n_e(&self) -> u32 {
        self.inner.n_e
    }
    #[getter]
    fn sigma(&self) -> f64 {
        self.inner.sigma
    }
    #[getter]
    fn sigma_e(&self) -> f64 {
        self.inner.sigma_e
    }
    #[getter]
    fn theta0(&self) -> f64 {
        self.inner.theta0
    }
    #[getter]
    fn theta1(&self) -> f64 {
        self.inner.theta1
    }
    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha
    }
    #[getter]
    fn c(&self) -> f64 {
        self.inner.c
    }

    fn __repr__(&self) -> String {
        let s = &self.inner;
        format!(
            "OneArmScenario(n={}, n_e={}, theta1={}, sigma={}, theta0={}, alpha={}, c={}, sigma_e={})",
            s.n, s.n_e, s.theta1, s.sigma, s.theta0, s.alpha, s.c, s.sigma_e
        )
    }
}

/// Two-arm hybrid-control trial with `n_e` external controls.
#[pyclass(frozen, from_py_object, module = "borrowoc_py")]
#[derive(Clone)]
struct TwoArmScenario {
    inner: ScenarioTwoArm,
}

#[pymethods]
impl TwoArmScenario {
    #[new]
    #[pyo3(signature = (nc, nt, n_e, theta1, sigma=1.0, alpha=0.025, c=None, sigma_e=None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        nc: u32,
        nt: u32,
        n_e: u32,
        theta1: f64,
        sigma: f64,
        alpha: f64,
        c: Option<f64>,
        sigma_e: Option<f64>,
    ) -> PyResult<Self> {
        let mut s = ScenarioTwoArm::new(nc, nt, n_e, sigma, theta1, alpha).map_err(to_py_err)?;
        if let Some(c) = c {
            s = s.with_c(c).map_err(to_py_err)?;
        }
        if let Some(se) = sigma_e {
            s = s.with_sigma_e(se).map_err(to_py_err)?;
        }
        Ok(Self { inner: s })
    }

    #[getter]
    fn nc(&self) -> u32 {
        self.inner.nc
    }
    #[getter]
    fn nt(&self) -> u32 {
        self.inner.nt
    }
    #[getter]
    fn n_e(&self) -> u32 {
        self.inner.n_e
    }
    #[getter]
    fn sigma(&self) -> f64 {
        self.inner.sigma
    }
    #[getter]
    fn sigma_e(&self) -> f64 {
        self.inner.sigma_e
    }
    #[getter]
    fn theta1(&self) -> f64 {
        self.inner.theta1
    }
    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha
    }
    #[getter]
    fn c(&self) -> f64 {
        self.inner.c
    }

    fn __repr__(&self) -> String {
        let s = &self.inner;
        format!(
            "TwoArmScenario(nc={}, nt={}, n_e={}, theta1={}, sigma={}, alpha={}, c={}, sigma_e={})",
            s.nc, s.nt, s.n_e, s.theta1, s.sigma, s.alpha, s.c, s.sigma_e
        )
    }
}

#[derive(FromPyObject)]
enum AnyScenario {
    One(OneArmScenario),
    Two(TwoArmScenario),
}

impl AnyScenario {
    fn design(self, theta_c: f64) -> Design {
        match self {
            AnyScenario::One(s) => Design::OneArm(s.inner),
            AnyScenario::Two(s) => Design::TwoArm(TwoArmDesign {
                scenario: s.inner,
                theta_c,
                external_mean: theta_c,
            }),
        }
    }
}

/// Empirical Bayes power-prior weight for a current and an external mean.
#[pyfunction]
#[pyo3(signature = (current_mean, n, external_mean, n_e, sigma=1.0, sigma_e=None))]
fn eb_delta(current_mean: f64, n: u32, external_mean: f64, n_e: u32, sigma: f64, sigma_e: Option<f64>) -> PyResult<f64> {
    let cur = ArmSummary::new(current_mean, n, sigma).map_err(to_py_err)?;
    let ext = ArmSummary::new(external_mean, n_e, sigma_e.unwrap_or(sigma)).map_err(to_py_err)?;
    Ok(borrow::eb_delta(&cur, &ext))
}

/// Power of the one-arm z-test without borrowing at level `alpha_b`.
#[pyfunction]
fn power_calibrated(alpha_b: f64, scenario: &OneArmScenario) -> f64 {
    oc_onearm::power_calibrated(alpha_b, &scenario.inner)
}

/// Rejection region in the current mean as a list of `(lo, hi)` pairs.
#[pyfunction]
#[pyo3(signature = (scenario, external_mean, method, delta=None, c=None))]
fn rejection_region(
    scenario: &OneArmScenario,
    external_mean: f64,
    method: &str,
    delta: Option<f64>,
    c: Option<f64>,
) -> PyResult<Vec<(f64, f64)>> {
    let m = self::method(method, delta)?;
    let s = scenario.inner;
    let r = region::rejection_region(&s, external_mean, m, c.unwrap_or(s.c)).map_err(to_py_err)?;
    Ok(r.intervals().iter().map(|i| (i.lo(), i.hi())).collect())
}

/// One-arm characteristics for a fixed external mean.
#[pyfunction]
#[pyo3(signature = (scenario, external_mean, method, delta=None))]
fn oc_fixed_external<'py>(
    py: Python<'py>,
    scenario: &OneArmScenario,
    external_mean: f64,
    method: &str,
    delta: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let m = self::method(method, delta)?;
    let p = oc_onearm::oc_fixed_external(&scenario.inner, external_mean, m).map_err(to_py_err)?;
    to_py(py, &p)
}

/// One-arm characteristics with a fixed weight and a random external mean.
#[pyfunction]
fn oc_random_external_fixed_pp<'py>(
    py: Python<'py>,
    scenario: &OneArmScenario,
    theta_e: f64,
    delta: f64,
) -> PyResult<Bound<'py, PyAny>> {
    BorrowingMethod::fixed(delta).map_err(to_py_err)?;
    to_py(py, &oc_onearm::oc_random_external_fixed_pp(&scenario.inner, theta_e, delta))
}

/// Two-arm rejection probability for given control, treatment and external means.
#[pyfunction]
#[pyo3(signature = (scenario, theta_c, theta_t, external_mean, method, delta=None))]
fn reject_prob_two_arm(
    py: Python<'_>,
    scenario: &TwoArmScenario,
    theta_c: f64,
    theta_t: f64,
    external_mean: f64,
    method: &str,
    delta: Option<f64>,
) -> PyResult<f64> {
    let m = self::method(method, delta)?;
    let s = scenario.inner;
    py.detach(|| oc_twoarm::reject_prob_two_arm(&s, theta_c, theta_t, external_mean, m))
        .map_err(to_py_err)
}

/// Type I error and power along standardised control offsets.
#[pyfunction]
#[pyo3(signature = (scenario, external_mean, offsets, method, delta=None))]
fn power_profile<'py>(
    py: Python<'py>,
    scenario: &TwoArmScenario,
    external_mean: f64,
    offsets: Vec<f64>,
    method: &str,
    delta: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let m = self::method(method, delta)?;
    let s = scenario.inner;
    let p = py
        .detach(|| oc_twoarm::power_profile(&s, external_mean, m, &offsets))
        .map_err(to_py_err)?;
    to_py(py, &p)
}

/// [`power_profile`] averaged over a random external mean.
#[pyfunction]
#[pyo3(signature = (scenario, theta_e, offsets, method, delta=None, tol=1e-8))]
fn oc_random_external_two_arm<'py>(
    py: Python<'py>,
    scenario: &TwoArmScenario,
    theta_e: f64,
    offsets: Vec<f64>,
    method: &str,
    delta: Option<f64>,
    tol: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let m = self::method(method, delta)?;
    let s = scenario.inner;
    let p = py
        .detach(|| oc_twoarm::oc_random_external_two_arm(&s, theta_e, m, &offsets, tol))
        .map_err(to_py_err)?;
    to_py(py, &p)
}

/// Replicated characteristics with the external mean drawn once per
/// replicate. `theta_c` is the two-arm control mean.
#[pyfunction]
#[pyo3(signature = (scenario, theta_e, method, nsim=runner::DEFAULT_NSIM_ALGORITHM1, seed=0, delta=None, theta_c=0.0))]
#[allow(clippy::too_many_arguments)]
fn run_algorithm1<'py>(
    py: Python<'py>,
    scenario: AnyScenario,
    theta_e: f64,
    method: &str,
    nsim: usize,
    seed: u64,
    delta: Option<f64>,
    theta_c: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let m = self::method(method, delta)?;
    let design = scenario.design(theta_c);
    let r = py
        .detach(|| runner::run_algorithm1(&design, theta_e, m, nsim, seed, RunOptions::default()))
        .map_err(to_py_err)?;
    to_py(py, &r)
}

/// Characteristics averaged over the external mean, calibrated once.
#[pyfunction]
#[pyo3(signature = (scenario, theta_e, method, nsim=runner::DEFAULT_NSIM_ALGORITHM2, seed=0, delta=None, theta_c=0.0))]
#[allow(clippy::too_many_arguments)]
fn run_algorithm2<'py>(
    py: Python<'py>,
    scenario: AnyScenario,
    theta_e: f64,
    method: &str,
    nsim: usize,
    seed: u64,
    delta: Option<f64>,
    theta_c: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let m = self::method(method, delta)?;
    let design = scenario.design(theta_c);
    let r = py
        .detach(|| runner::run_algorithm2(&design, theta_e, m, nsim, seed, RunOptions::default()))
        .map_err(to_py_err)?;
    to_py(py, &r)
}

#[pymodule]
fn borrowoc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<OneArmScenario>()?;
    m.add_class::<TwoArmScenario>()?;
    m.add_function(wrap_pyfunction!(eb_delta, m)?)?;
    m.add_function(wrap_pyfunction!(power_calibrated, m)?)?;
    m.add_function(wrap_pyfunction!(rejection_region, m)?)?;
    m.add_function(wrap_pyfunction!(oc_fixed_external, m)?)?;
    m.add_function(wrap_pyfunction!(oc_random_external_fixed_pp, m)?)?;
    m.add_function(wrap_pyfunction!(reject_prob_two_arm, m)?)?;
    m.add_function(wrap_pyfunction!(power_profile, m)?)?;
    m.add_function(wrap_pyfunction!(oc_random_external_two_arm, m)?)?;
    m.add_function(wrap_pyfunction!(run_algorithm1, m)?)?;
    m.add_function(wrap_pyfunction!(run_algorithm2, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names() {
        assert_eq!(method("none", None).unwrap(), BorrowingMethod::NoBorrowing);
        assert_eq!(method("eb-pp", None).unwrap(), BorrowingMethod::EmpiricalBayes);
        assert_eq!(method("fixed-pp", Some(0.5)).unwrap(), BorrowingMethod::fixed(0.5).unwrap());
        assert!(method("fixed-pp", None).is_err());
        assert!(method("fixed-pp", Some(1.5)).is_err());
        assert!(method("eb-pp", Some(0.5)).is_err());
        assert!(method("bayes", None).is_err());
    }
}
