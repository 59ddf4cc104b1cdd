//! Python bindings: thin wrappers over the solver library. Scalar helpers
//! return plain values; solves and grid searches return the full report as a
//! JSON string so Python callers can `json.loads` it.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use improx::dc::{abs_quadratic_instance, check_b_stationarity, DcBuilder, DEFAULT_DC_MODEL_CAP};
use improx::models::{LinearizationBuilder, ModelBuilder};
use improx::problems::beam::{build_cantilever_instance, BeamSpec};
use improx::problems::gas::{build_gas_instance, GasTree};
use improx::problems::grid::grid_search;
use improx::{solve, OuterParams};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_json<T: serde::Serialize>(v: &T) -> PyResult<String> {
    serde_json::to_string_pretty(v).map_err(value_err)
}

/// Smoothed step function `1 / (1 + exp(-z / theta))`.
#[pyfunction]
fn sigmoid(z: f64, theta: f64) -> f64 {
    improx::problems::gas::sigmoid(z, theta)
}

/// Default penalty weight `|f0| / (1 + |c0|)` from the objective and
/// constraint values at the start point.
#[pyfunction]
fn default_rho(f0: f64, c0: f64) -> f64 {
    improx::default_rho(f0, c0)
}

/// Average value-at-risk of an empirical distribution at level `alpha`.
/// Returns `(avar, t)` where `t` is the leftmost minimizer of the
/// Rockafellar-Uryasev objective. Weights default to uniform.
#[pyfunction(signature = (values, alpha, probs=None))]
fn empirical_avar(values: Vec<f64>, alpha: f64, probs: Option<Vec<f64>>) -> PyResult<(f64, f64)> {
    improx::problems::avar::empirical_avar(&values, probs.as_deref(), alpha).map_err(value_err)
}

/// Solves the cantilever-beam buffered-probability instance and returns the
/// solve report as JSON. Defaults match the CLI (`improx solve --instance
/// beam`).
#[pyfunction(signature = (n=100_000, alpha=0.999, seed=12, tol=1e-6, kappa=0.3, lambda=0.1, mu0=0.3))]
#[allow(clippy::too_many_arguments)]
fn solve_beam(
    n: usize,
    alpha: f64,
    seed: u64,
    tol: f64,
    kappa: f64,
    lambda: f64,
    mu0: f64,
) -> PyResult<String> {
    let spec = BeamSpec::standard(alpha, n);
    let inst = build_cantilever_instance(&spec, seed).map_err(value_err)?;
    let builder = LinearizationBuilder { problem: &inst.problem, tuple_cap: 1 };
    let params = OuterParams::new(kappa, lambda, mu0, tol).map_err(value_err)?;
    let report = solve(&inst.problem, &builder, &inst.start, &params).map_err(value_err)?;
    to_json(&report)
}

/// Solves the gas-network chance-constraint instance (4-node tree, sigmoid
/// smoothing width `theta`) and returns the solve report as JSON.
#[pyfunction(signature = (n=10_000, theta=0.1, alpha=0.05, seed=12, tol=1e-6, kappa=0.3, lambda=0.1, mu0=2.0))]
#[allow(clippy::too_many_arguments)]
fn solve_gas(
    n: usize,
    theta: f64,
    alpha: f64,
    seed: u64,
    tol: f64,
    kappa: f64,
    lambda: f64,
    mu0: f64,
) -> PyResult<String> {
    let tree = GasTree::chain_with_branch_n4();
    let inst = build_gas_instance(&tree, n, theta, alpha, seed).map_err(value_err)?;
    let builder = LinearizationBuilder { problem: &inst.problem, tuple_cap: 1 };
    let params = OuterParams::new(kappa, lambda, mu0, tol).map_err(value_err)?;
    let report = solve(&inst.problem, &builder, &inst.start, &params).map_err(value_err)?;
    to_json(&report)
}

/// Solves the analytic DC instance `min x^2 - |x|` on `[-1, 1]` from `x0`.
/// Returns `(x, stationary)` where `stationary` is the B-stationarity
/// certificate at the returned point.
#[pyfunction(signature = (x0, tol=1e-11))]
fn solve_dc_toy(x0: f64, tol: f64) -> PyResult<(f64, bool)> {
    let p = abs_quadratic_instance();
    let comp = p.to_composite();
    let builder = DcBuilder { problem: &p, eps: None, cap: DEFAULT_DC_MODEL_CAP };
    let params = OuterParams::new(0.3, 0.1, 0.3, tol).map_err(value_err)?;
    let report =
        solve(&comp, &builder as &dyn ModelBuilder, &[x0], &params).map_err(value_err)?;
    let cert = check_b_stationarity(&p, &report.x, 1e-5).map_err(value_err)?;
    Ok((report.x[0], cert.stationary))
}

/// Exhaustive grid-search baseline for the beam instance; returns the
/// outcome (best feasible point and cost, or infeasible) as JSON.
#[pyfunction(signature = (rows, cols, n=100_000, alpha=0.999, seed=12))]
fn grid_search_beam(
    rows: usize,
    cols: usize,
    n: usize,
    alpha: f64,
    seed: u64,
) -> PyResult<String> {
    let spec = BeamSpec::standard(alpha, n);
    let inst = build_cantilever_instance(&spec, seed).map_err(value_err)?;
    let outcome = grid_search(&inst.table, spec.y_m_bounds, spec.y_t_bounds, rows, cols, alpha)
        .map_err(value_err)?;
    to_json(&outcome)
}

#[pymodule]
fn improx_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(sigmoid, m)?)?;
    m.add_function(wrap_pyfunction!(default_rho, m)?)?;
    m.add_function(wrap_pyfunction!(empirical_avar, m)?)?;
    m.add_function(wrap_pyfunction!(solve_beam, m)?)?;
    m.add_function(wrap_pyfunction!(solve_gas, m)?)?;
    m.add_function(wrap_pyfunction!(solve_dc_toy, m)?)?;
    m.add_function(wrap_pyfunction!(grid_search_beam, m)?)?;
    Ok(())
}
