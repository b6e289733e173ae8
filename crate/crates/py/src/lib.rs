//! Python bindings: scenario spaces, regimes, agent systems and the main
//! solvers. Results come back as plain dicts keyed like the CLI documents.

use std::sync::Arc;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use riskshare::equilibrium::{build_equilibrium, verify_equilibrium};
use riskshare::lawinv::{self, LawInvProblem};
use riskshare::market::{self, AgentSystem};
use riskshare::oracle::{self, GridSpec};
use riskshare::regime::{
    validate_regime, AcceptanceSet, LawInvariantKind, PolyhedralAcceptanceSet, RiskMeasurementRegime, SecurityMarket,
};
use riskshare::report::Report;
use riskshare::splits::{self, Cost, RegimeFactory, SplitProblem};
use riskshare::{Error, Extended, Functional, SupportMask};

fn err(e: Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn ext(e: Extended) -> f64 {
    e.finite().unwrap_or(f64::INFINITY)
}

fn kind(name: &str, param: Option<f64>) -> PyResult<LawInvariantKind> {
    let need = |p: Option<f64>| p.ok_or_else(|| PyValueError::new_err(format!("{name} needs a parameter")));
    match name {
        "entropic" => LawInvariantKind::entropic(need(param)?).map_err(err),
        "avar" => LawInvariantKind::avar(need(param)?).map_err(err),
        "expectation" => Ok(LawInvariantKind::Expectation),
        other => Err(PyValueError::new_err(format!("unknown law-invariant kind '{other}'"))),
    }
}

fn report<'py>(py: Python<'py>, r: &Report) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    for c in &r.checks {
        let e = PyDict::new(py);
        e.set_item("passed", c.passed)?;
        e.set_item("value", c.value)?;
        e.set_item("tolerance", c.tolerance)?;
        e.set_item("detail", &c.detail)?;
        d.set_item(&c.name, e)?;
    }
    Ok(d)
}

#[pyclass(name = "ScenarioSpace", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyScenarioSpace {
    inner: Arc<riskshare::ScenarioSpace>,
}

#[pymethods]
impl PyScenarioSpace {
    /// Uniform probabilities when `probs` is omitted.
    #[new]
    #[pyo3(signature = (labels, probs=None))]
    fn new(labels: Vec<String>, probs: Option<Vec<f64>>) -> PyResult<Self> {
        let inner = match probs {
            Some(p) => riskshare::ScenarioSpace::new(labels, p),
            None => riskshare::ScenarioSpace::uniform_labeled(labels),
        }
        .map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn labels(&self) -> Vec<String> {
        self.inner.labels().to_vec()
    }

    #[getter]
    fn probs(&self) -> Vec<f64> {
        self.inner.probs().to_vec()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("ScenarioSpace({:?})", self.inner.labels())
    }
}

#[pyclass(name = "Regime", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyRegime {
    inner: RiskMeasurementRegime,
}

#[pymethods]
impl PyRegime {
    /// Acceptance set `{X : sum_w weights[k][w] X_w <= bounds[k]}` on the
    /// scenarios listed in `support` (all when omitted).
    #[staticmethod]
    #[pyo3(signature = (space, weights, bounds, basis, prices, support=None))]
    fn polyhedral(
        space: &PyScenarioSpace,
        weights: Vec<Vec<f64>>,
        bounds: Vec<f64>,
        basis: Vec<Vec<f64>>,
        prices: Vec<f64>,
        support: Option<Vec<usize>>,
    ) -> PyResult<Self> {
        let sp = space.inner.clone();
        let fs = weights
            .iter()
            .map(|w| Functional::from_weights(sp.clone(), w))
            .collect::<riskshare::Result<Vec<_>>>()
            .map_err(err)?;
        let acc = PolyhedralAcceptanceSet::new(fs, bounds).map_err(err)?;
        let m = SecurityMarket::new(sp.clone(), basis, prices).map_err(err)?;
        let mask = match support {
            Some(idx) => SupportMask::from_indices(sp, &idx).map_err(err)?,
            None => SupportMask::full(sp),
        };
        let inner = RiskMeasurementRegime::new(AcceptanceSet::Polyhedral(acc), m, mask).map_err(err)?;
        Ok(Self { inner })
    }

    /// `kind` is `"entropic"`, `"avar"` or `"expectation"`.
    #[staticmethod]
    #[pyo3(signature = (space, kind_name, param, basis, prices))]
    fn law_invariant(
        space: &PyScenarioSpace,
        kind_name: &str,
        param: Option<f64>,
        basis: Vec<Vec<f64>>,
        prices: Vec<f64>,
    ) -> PyResult<Self> {
        let m = SecurityMarket::new(space.inner.clone(), basis, prices).map_err(err)?;
        let inner = RiskMeasurementRegime::law_invariant(kind(kind_name, param)?, m).map_err(err)?;
        Ok(Self { inner })
    }

    /// Risk of `x`; `inf` when no security makes it acceptable.
    fn rho(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.rho_raw(&x).map(ext).map_err(err)
    }

    #[pyo3(signature = (seed=0))]
    fn validate<'py>(&self, py: Python<'py>, seed: u64) -> PyResult<Bound<'py, PyDict>> {
        report(py, &validate_regime(&self.inner, seed).map_err(err)?)
    }

    fn lipschitz_bound(&self) -> PyResult<f64> {
        self.inner.lipschitz_bound().map_err(err)
    }
}

#[pyclass(name = "AgentSystem", frozen)]
pub struct PyAgentSystem {
    inner: AgentSystem,
}

#[pymethods]
impl PyAgentSystem {
    #[new]
    fn new(regimes: Vec<PyRef<'_, PyRegime>>) -> PyResult<Self> {
        let rs = regimes.iter().map(|r| r.inner.clone()).collect();
        Ok(Self { inner: AgentSystem::new(rs).map_err(err)? })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Pooled risk with optimal payoff, Pareto allocation and subgradient.
    /// Raises when `x` is outside the domain.
    fn market_risk<'py>(&self, py: Python<'py>, x: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
        let s = market::lambda_raw(&self.inner, &x)
            .map_err(err)?
            .ok_or_else(|| PyValueError::new_err("loss is outside the domain of the market risk measure"))?;
        let d = PyDict::new(py);
        d.set_item("value", s.value)?;
        d.set_item("payoff", s.payoff)?;
        d.set_item("allocation", s.allocation.parts)?;
        d.set_item("securities", s.securities)?;
        d.set_item("subgradient", s.subgradient)?;
        Ok(d)
    }

    fn nsa<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let c = market::nsa_check(&self.inner).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("dim", c.dim)?;
        d.set_item("agents", c.agents)?;
        d.set_item("holds", c.holds)?;
        d.set_item("lp_unbounded", c.lp_unbounded)?;
        Ok(d)
    }

    fn validate_star<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        report(py, &market::validate_star(&self.inner).report)
    }

    /// Equilibrium allocation, price weights and its verification report.
    fn equilibrium<'py>(&self, py: Python<'py>, endowments: Vec<Vec<f64>>) -> PyResult<Bound<'py, PyDict>> {
        let eq = build_equilibrium(&self.inner, &endowments).map_err(err)?;
        let rep = verify_equilibrium(&self.inner, &endowments, &eq).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("allocation", eq.allocation.parts.clone())?;
        d.set_item("price", eq.price.weights())?;
        d.set_item("passed", rep.passed())?;
        d.set_item("checks", report(py, &rep)?)?;
        Ok(d)
    }

    /// Grid minimum of the two-agent risk sum over the box `[lower, upper]`.
    fn brute_lambda<'py>(
        &self,
        py: Python<'py>,
        x: Vec<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
        h: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let g = GridSpec::new(lower, upper, h).map_err(err)?;
        let b = oracle::brute_lambda(&self.inner, &x, &g).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("estimate", b.estimate)?;
        d.set_item("lower_bound", b.lower_bound)?;
        d.set_item("omega", b.omega)?;
        d.set_item("points", b.points)?;
        Ok(d)
    }
}

#[pyfunction]
fn entropic(alpha: f64, probs: Vec<f64>, x: Vec<f64>) -> f64 {
    riskshare::regime::entropic(alpha, &probs, &x)
}

#[pyfunction]
fn avar(beta: f64, probs: Vec<f64>, x: Vec<f64>) -> f64 {
    riskshare::regime::avar(beta, &probs, &x)
}

/// `(alpha, value)` of the pooled entropic risk.
#[pyfunction]
fn entropic_infconv(alphas: Vec<f64>, probs: Vec<f64>, x: Vec<f64>) -> PyResult<(f64, f64)> {
    let r = lawinv::entropic_infconv(&alphas, &probs, &x).map_err(err)?;
    Ok((r.alpha, r.value))
}

/// Pooled risk of law-invariant agents. `kinds` holds `(name, param)`
/// pairs; securities are priced by `scale * E[density * Z]`.
#[pyfunction]
#[pyo3(signature = (space, kinds, bases, scale, density, x))]
fn law_invariant_risk<'py>(
    py: Python<'py>,
    space: &PyScenarioSpace,
    kinds: Vec<(String, Option<f64>)>,
    bases: Vec<Vec<Vec<f64>>>,
    scale: f64,
    density: Vec<f64>,
    x: Vec<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let ks = kinds.iter().map(|(n, p)| kind(n, *p)).collect::<PyResult<Vec<_>>>()?;
    let p = LawInvProblem::new(space.inner.clone(), ks, bases, scale, density).map_err(err)?;
    let s = lawinv::lawinv_lambda(&p, &x).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("value", s.value)?;
    d.set_item("payoff", s.payoff)?;
    d.set_item("allocation", s.allocation.parts)?;
    d.set_item("subgradient", s.subgradient)?;
    Ok(d)
}

/// Optimal number of identical entropic subsidiaries under a linear cost.
#[pyfunction]
fn split_entropic<'py>(
    py: Python<'py>,
    space: &PyScenarioSpace,
    alpha: f64,
    rate: f64,
    n_max: usize,
    w: Vec<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let f = RegimeFactory::identical_entropic(space.inner.clone(), alpha).map_err(err)?;
    let p = SplitProblem::new(f, Cost::Linear { rate }, n_max).map_err(err)?;
    let r = splits::split_optimize(&p, &w).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("n_star", r.n_star)?;
    d.set_item("value", r.value)?;
    d.set_item("objective", r.objective)?;
    d.set_item("lower_bound", r.lower_bound)?;
    d.set_item("allocation", r.allocation.parts)?;
    d.set_item("trajectory", r.trajectory.iter().map(|s| (s.n, s.lambda, s.objective)).collect::<Vec<_>>())?;
    Ok(d)
}

#[pymodule]
pub fn riskshare_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenarioSpace>()?;
    m.add_class::<PyRegime>()?;
    m.add_class::<PyAgentSystem>()?;
    m.add_function(wrap_pyfunction!(entropic, m)?)?;
    m.add_function(wrap_pyfunction!(avar, m)?)?;
    m.add_function(wrap_pyfunction!(entropic_infconv, m)?)?;
    m.add_function(wrap_pyfunction!(law_invariant_risk, m)?)?;
    m.add_function(wrap_pyfunction!(split_entropic, m)?)?;
    Ok(())
}
