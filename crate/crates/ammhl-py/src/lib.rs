//! Python bindings for the ammhl simulator.
//!
//! The module mirrors the Rust API closely: model/parameter types are thin
//! pyclass wrappers, simulation outputs come back as row-major lists per
//! path, and domain errors map to ValueError while numerical failures map
//! to RuntimeError.

use ammhl_core as core;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn err(e: core::AmmError) -> PyErr {
    use core::AmmError::*;
    match e {
        Domain(_) | Precondition(_) | Capability(_) | Config(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn signal_from_args(
    signal: &str,
    signal_a: f64,
    ou_theta: f64,
    ou_mu: f64,
    ou_xi: f64,
    ou_a0: f64,
) -> PyResult<core::SignalModel> {
    match signal {
        "zero" => Ok(core::SignalModel::Zero),
        "constant" => Ok(core::SignalModel::Constant { a: signal_a }),
        "ou" => Ok(core::SignalModel::Ou { theta: ou_theta, mu: ou_mu, xi: ou_xi, a0: ou_a0 }),
        other => Err(PyValueError::new_err(format!(
            "signal must be 'zero', 'constant', or 'ou', got {other:?}"
        ))),
    }
}

/// Fundamental price dynamics dF = AF dt + sigma F dW on [0, T].
#[pyclass(name = "MarketModel")]
#[derive(Clone)]
struct PyMarketModel {
    inner: core::MarketModel,
}

#[pymethods]
impl PyMarketModel {
    #[new]
    #[pyo3(signature = (f0, sigma, horizon_t, signal="zero", signal_a=0.0, ou_theta=1.0, ou_mu=0.0, ou_xi=0.1, ou_a0=0.0))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        f0: f64,
        sigma: f64,
        horizon_t: f64,
        signal: &str,
        signal_a: f64,
        ou_theta: f64,
        ou_mu: f64,
        ou_xi: f64,
        ou_a0: f64,
    ) -> PyResult<Self> {
        let sig = signal_from_args(signal, signal_a, ou_theta, ou_mu, ou_xi, ou_a0)?;
        Ok(Self { inner: core::MarketModel::new(f0, sigma, horizon_t, sig).map_err(err)? })
    }

    #[getter]
    fn f0(&self) -> f64 {
        self.inner.f0
    }

    #[getter]
    fn sigma(&self) -> f64 {
        self.inner.sigma
    }

    #[getter]
    fn horizon_t(&self) -> f64 {
        self.inner.horizon_t
    }

    fn __repr__(&self) -> String {
        format!(
            "MarketModel(f0={}, sigma={}, horizon_t={}, signal={:?})",
            self.inner.f0, self.inner.sigma, self.inner.horizon_t, self.inner.signal
        )
    }
}

/// Hedging costs: quadratic cost eta, tracking penalty phi, transient
/// impact scale c with resilience beta_res, initial inventory q0.
#[pyclass(name = "HedgeParams")]
#[derive(Clone)]
struct PyHedgeParams {
    inner: core::HedgeParams,
}

#[pymethods]
impl PyHedgeParams {
    #[new]
    #[pyo3(signature = (eta, phi, c=0.0, beta_res=1.0, q0=0.0))]
    fn new(eta: f64, phi: f64, c: f64, beta_res: f64, q0: f64) -> PyResult<Self> {
        Ok(Self { inner: core::HedgeParams::new(eta, phi, c, beta_res, q0).map_err(err)? })
    }

    #[getter]
    fn eta(&self) -> f64 {
        self.inner.eta
    }

    #[getter]
    fn phi(&self) -> f64 {
        self.inner.phi
    }

    #[getter]
    fn c(&self) -> f64 {
        self.inner.c
    }

    #[getter]
    fn q0(&self) -> f64 {
        self.inner.q0
    }

    /// Copy with a different initial inventory.
    fn with_q0(&self, q0: f64) -> Self {
        Self { inner: self.inner.clone().with_q0(q0) }
    }

    fn __repr__(&self) -> String {
        format!(
            "HedgeParams(eta={}, phi={}, c={}, beta_res={}, q0={})",
            self.inner.eta, self.inner.phi, self.inner.c, self.inner.beta_res, self.inner.q0
        )
    }
}

/// Noise-trader flow: either an explicit arrival rate `lam` or a
/// profitability target `gamma` (one of the two must be given).
#[pyclass(name = "FlowParams")]
#[derive(Clone)]
struct PyFlowParams {
    inner: core::FlowParams,
}

#[pymethods]
impl PyFlowParams {
    #[new]
    #[pyo3(signature = (fee_pi=0.003, gamma=None, lam=None))]
    fn new(fee_pi: f64, gamma: Option<f64>, lam: Option<f64>) -> PyResult<Self> {
        let inner = match (gamma, lam) {
            (Some(_), Some(_)) => {
                return Err(PyValueError::new_err("give either gamma or lam, not both"))
            }
            (None, None) => return Err(PyValueError::new_err("give gamma or lam")),
            (Some(g), None) => {
                core::FlowParams::from_gamma(g, fee_pi, core::ValuationDist::Uniform)
            }
            (None, Some(l)) => core::FlowParams::new(l, fee_pi, core::ValuationDist::Uniform),
        }
        .map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma
    }

    #[getter]
    fn lam(&self) -> f64 {
        self.inner.lambda
    }

    #[getter]
    fn fee_pi(&self) -> f64 {
        self.inner.fee_pi
    }

    fn __repr__(&self) -> String {
        format!(
            "FlowParams(fee_pi={}, gamma={}, lam={})",
            self.inner.fee_pi, self.inner.gamma, self.inner.lambda
        )
    }
}

/// Simulated price/signal/reserve paths on a shared time grid.
#[pyclass(name = "PathBundle")]
struct PyPathBundle {
    inner: core::PathBundle,
}

#[pymethods]
impl PyPathBundle {
    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.times.clone()
    }

    #[getter]
    fn n_paths(&self) -> usize {
        self.inner.n_paths
    }

    #[getter]
    fn n_steps(&self) -> usize {
        self.inner.n_steps
    }

    /// Fundamental price along one path.
    fn f(&self, path: usize) -> PyResult<Vec<f64>> {
        self.check(path)?;
        Ok(self.inner.f_path(path).to_vec())
    }

    /// Drift signal along one path.
    fn a(&self, path: usize) -> PyResult<Vec<f64>> {
        self.check(path)?;
        Ok(self.inner.a_path(path).to_vec())
    }

    /// Pool risky reserve along one path.
    fn y(&self, path: usize) -> PyResult<Vec<f64>> {
        self.check(path)?;
        Ok(self.inner.y_path(path).to_vec())
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }
}

impl PyPathBundle {
    fn check(&self, path: usize) -> PyResult<()> {
        if path >= self.inner.n_paths {
            return Err(PyValueError::new_err(format!(
                "path index {path} out of range (n_paths = {})",
                self.inner.n_paths
            )));
        }
        Ok(())
    }
}

/// Hedge solution (trading rate, inventory, impact, ...) on the path grid.
#[pyclass(name = "HedgePath")]
struct PyHedgePath {
    inner: core::HedgePath,
}

#[pymethods]
impl PyHedgePath {
    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.times.clone()
    }

    #[getter]
    fn n_paths(&self) -> usize {
        self.inner.n_paths
    }

    fn nu(&self, path: usize) -> Vec<f64> {
        self.inner.nu_path(path).to_vec()
    }

    fn q(&self, path: usize) -> Vec<f64> {
        self.inner.q_path(path).to_vec()
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }
}

/// Stage-one result: reference depth, equilibrium depth, and diagnostics.
#[pyclass(name = "StageOneResult")]
struct PyStageOneResult {
    inner: core::StageOneResult,
}

#[pymethods]
impl PyStageOneResult {
    #[getter]
    fn kappa_ref(&self) -> f64 {
        self.inner.kappa_ref
    }

    #[getter]
    fn kappa_star(&self) -> f64 {
        self.inner.kappa_star
    }

    #[getter]
    fn scaling(&self) -> f64 {
        self.inner.scaling
    }

    #[getter]
    fn frak_b(&self) -> f64 {
        self.inner.frak_b.mean
    }

    #[getter]
    fn shutdown(&self) -> bool {
        self.inner.shutdown
    }

    #[getter]
    fn clamped(&self) -> bool {
        self.inner.clamped
    }

    #[getter]
    fn argmax_mc(&self) -> Option<f64> {
        self.inner.argmax_mc
    }

    /// The Monte Carlo value curve as (kappa, value, se) tuples.
    #[getter]
    fn value_curve(&self) -> Vec<(f64, f64, f64)> {
        self.inner.mc_value_curve.iter().map(|p| (p.kappa, p.value, p.se)).collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "StageOneResult(kappa_ref={}, kappa_star={}, scaling={}, shutdown={})",
            self.inner.kappa_ref, self.inner.kappa_star, self.inner.scaling, self.inner.shutdown
        )
    }
}

/// Marginal price kappa^2 / y^2 of the constant-product pool.
#[pyfunction]
fn marginal_price(y: f64, kappa: f64) -> PyResult<f64> {
    core::marginal_price(y, kappa).map_err(err)
}

/// Risky reserve h(f) = kappa / sqrt(f) that marks the pool to price f.
#[pyfunction]
fn reserves_from_price(f: f64, kappa: f64) -> PyResult<f64> {
    core::reserves_from_price(f, kappa).map_err(err)
}

/// Instantaneous loss-versus-rebalancing rate of the pool.
#[pyfunction]
fn lvr_rate(f: f64, kappa: f64, sigma: f64) -> PyResult<f64> {
    core::lvr_rate(f, kappa, sigma).map_err(err)
}

/// Simulate price/signal/reserve paths.
#[pyfunction]
#[pyo3(signature = (model, kappa, n_steps, n_paths, seed=1))]
fn simulate_paths(
    model: &PyMarketModel,
    kappa: f64,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
) -> PyResult<PyPathBundle> {
    let grid = core::SimGrid::new(n_steps, n_paths, seed).map_err(err)?;
    Ok(PyPathBundle { inner: core::simulate_paths(&model.inner, &grid, kappa).map_err(err)? })
}

/// Terminal fee revenue per path; realized=False integrates the fee rate.
#[pyfunction]
#[pyo3(signature = (paths, flow, kappa, realized=false, seed_offset=1))]
fn fee_revenue(
    paths: &PyPathBundle,
    flow: &PyFlowParams,
    kappa: f64,
    realized: bool,
    seed_offset: u64,
) -> PyResult<Vec<f64>> {
    let acc =
        core::simulate_fee_accrual(&paths.inner, &flow.inner, kappa, seed_offset).map_err(err)?;
    let pick = |p: usize| {
        if realized {
            *acc.realized_path(p).last().unwrap()
        } else {
            *acc.rate_path(p).last().unwrap()
        }
    };
    Ok((0..paths.inner.n_paths).map(pick).collect())
}

/// Optimal hedge on simulated paths: closed form for c = 0, Riccati
/// assembly for transient impact.
#[pyfunction]
fn hedge_path(
    paths: &PyPathBundle,
    kappa: f64,
    hedge: &PyHedgeParams,
    model: &PyMarketModel,
) -> PyResult<PyHedgePath> {
    let inner = if hedge.inner.c == 0.0 {
        core::hedge_path_no_transient(&paths.inner, kappa, &hedge.inner, &model.inner)
    } else {
        let dre = core::solve_dre(&hedge.inner, model.inner.horizon_t, 1024).map_err(err)?;
        core::assemble_fbsde_solution(&dre, &paths.inner, kappa, &hedge.inner, &model.inner)
    }
    .map_err(err)?;
    Ok(PyHedgePath { inner })
}

/// Closed-form reference depth (zero signal); returns (kappa, shutdown).
#[pyfunction]
fn kappa_ref(model: &PyMarketModel, flow: &PyFlowParams, phi: f64) -> PyResult<(f64, bool)> {
    let kr = core::kappa_ref_closed_form(&model.inner, &flow.inner, phi).map_err(err)?;
    Ok((kr.value, kr.shutdown))
}

/// Closed-form equilibrium depth for a zero signal and c = 0; returns
/// (kappa_star, kappa_ref, scaling).
#[pyfunction]
fn kappa_star(
    model: &PyMarketModel,
    flow: &PyFlowParams,
    hedge: &PyHedgeParams,
) -> PyResult<(f64, f64, f64)> {
    let cf = core::kappa_star_closed_form_a0(&model.inner, &flow.inner, &hedge.inner).map_err(err)?;
    Ok((cf.kappa_star, cf.kappa_ref, cf.scaling))
}

/// Full stage-one run: closed forms (or the kernel estimator with a
/// signal) plus a common-random-numbers Monte Carlo value curve.
#[pyfunction]
#[pyo3(signature = (model, hedge, flow, kappa_max, n_steps=200, n_paths=1000, seed=1, kappa_grid_n=21))]
#[allow(clippy::too_many_arguments)]
fn run_stage_one(
    model: &PyMarketModel,
    hedge: &PyHedgeParams,
    flow: &PyFlowParams,
    kappa_max: f64,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
    kappa_grid_n: usize,
) -> PyResult<PyStageOneResult> {
    let inputs = core::StageOneInputs::new(
        model.inner.clone(),
        hedge.inner.clone(),
        flow.inner.clone(),
        kappa_max,
    )
    .map_err(err)?;
    let grid = core::SimGrid::new(n_steps, n_paths, seed).map_err(err)?;
    Ok(PyStageOneResult { inner: core::run_stage_one(&inputs, &grid, kappa_grid_n).map_err(err)? })
}

/// Terminal wealth ledger per path at pool depth kappa. Returns a list of
/// dicts with the fee / DEX / offsetting / cost split.
#[pyfunction]
fn wealth_decomposition(
    py: Python<'_>,
    paths: &PyPathBundle,
    hedge: &PyHedgePath,
    fees: Vec<f64>,
    kappa: f64,
    eta: f64,
) -> PyResult<Vec<PyObject>> {
    let records = core::wealth_decomposition(&paths.inner, &hedge.inner, &fees, kappa, eta)
        .map_err(err)?;
    records
        .into_iter()
        .map(|r| {
            let d = pyo3::types::PyDict::new(py);
            d.set_item("path", r.path)?;
            d.set_item("fee_revenue", r.fee_revenue)?;
            d.set_item("dex_value_change", r.dex_value_change)?;
            d.set_item("risk_offsetting_pnl", r.risk_offsetting_pnl)?;
            d.set_item("cex_cost", r.cex_cost)?;
            d.set_item("total", r.total)?;
            d.set_item("normalized_total", r.normalized_total)?;
            Ok(d.into())
        })
        .collect()
}

#[pymodule]
fn ammhl(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMarketModel>()?;
    m.add_class::<PyHedgeParams>()?;
    m.add_class::<PyFlowParams>()?;
    m.add_class::<PyPathBundle>()?;
    m.add_class::<PyHedgePath>()?;
    m.add_class::<PyStageOneResult>()?;
    m.add_function(wrap_pyfunction!(marginal_price, m)?)?;
    m.add_function(wrap_pyfunction!(reserves_from_price, m)?)?;
    m.add_function(wrap_pyfunction!(lvr_rate, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_paths, m)?)?;
    m.add_function(wrap_pyfunction!(fee_revenue, m)?)?;
    m.add_function(wrap_pyfunction!(hedge_path, m)?)?;
    m.add_function(wrap_pyfunction!(kappa_ref, m)?)?;
    m.add_function(wrap_pyfunction!(kappa_star, m)?)?;
    m.add_function(wrap_pyfunction!(run_stage_one, m)?)?;
    m.add_function(wrap_pyfunction!(wealth_decomposition, m)?)?;
    Ok(())
}
