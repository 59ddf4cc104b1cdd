//! Synthetic gas-network instance with an SAA chance constraint smoothed by
//! a sigmoid.
//!
//! On a rooted tree, scenario loads at the exit nodes induce pressure drops
//! `h_l(w) = sum_{e in path(0,l)} beta_e (sum_{i in subtree(e)} w_i)^2`,
//! pressures `v_0 = 1 + max_l h_l`, `v_l = v_0 - h_l`, and per-node limit
//! states `G_l(x, w) = v_l(w) - x_l^2`. The smoothed chance constraint is
//!
//! ```text
//!   (1/N) sum_j max_l psi_theta(G_l(x, w^j))  <=  alpha ,
//! ```
//!
//! expressed in sum-max form with one group per scenario. The objective is
//! `sum_l x_l` over `X = {x >= 1}`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::oracle::{AffineFn, WeaklyConcaveOracle, ZeroFn};
use crate::problem::{default_rho, CompositeProblem, Piece, PieceGroup};
use crate::problems::scenario::{sample_scenarios, ColumnSpec, DistributionSpec, ScenarioSet};
use crate::set::FeasibleSet;

/// Numerically stable logistic `1 / (1 + exp(-z / theta))`.
pub fn sigmoid(z: f64, theta: f64) -> f64 {
    let u = z / theta;
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// `d/dz sigmoid(z, theta) = psi (1 - psi) / theta`.
pub fn sigmoid_deriv(z: f64, theta: f64) -> f64 {
    let s = sigmoid(z, theta);
    s * (1.0 - s) / theta
}

/// Rooted tree (node 0 is the root) with per-edge resistances; the edge into
/// node `v >= 1` carries `beta[v - 1]`.
#[derive(Debug, Clone)]
pub struct GasTree {
    /// `parent[v - 1]` is the parent of node `v`, for `v = 1..n-1`.
    pub parent: Vec<usize>,
    pub beta: Vec<f64>,
}

impl GasTree {
    pub fn n_nodes(&self) -> usize {
        self.parent.len() + 1
    }

    /// The 4-node chain-with-branch topology: 0 - 1, then 1 - 2 and 1 - 3.
    pub fn chain_with_branch_n4() -> Self {
        Self { parent: vec![0, 1, 1], beta: vec![0.1; 3] }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_nodes();
        if self.beta.len() != self.parent.len() {
            return Err(Error::Config("one beta per edge required".into()));
        }
        if self.beta.iter().any(|&b| !(b > 0.0)) {
            return Err(Error::Config("edge resistances must be > 0".into()));
        }
        for (v, &p) in self.parent.iter().enumerate() {
            if p >= n {
                return Err(Error::Config(format!("node {} has parent {p} >= n", v + 1)));
            }
        }
        // connectivity and acyclicity: every node must reach the root
        for start in 1..n {
            let mut cur = start;
            for _ in 0..n {
                if cur == 0 {
                    break;
                }
                cur = self.parent[cur - 1];
            }
            if cur != 0 {
                return Err(Error::Config(format!("node {start} does not reach the root")));
            }
        }
        Ok(())
    }

    /// Nodes in the subtree rooted at `v` (including `v`).
    fn subtree(&self, v: usize) -> Vec<usize> {
        let n = self.n_nodes();
        let mut members = vec![v];
        // repeatedly absorb nodes whose parent is already in the subtree
        let mut inset = vec![false; n];
        inset[v] = true;
        let mut changed = true;
        while changed {
            changed = false;
            for u in 1..n {
                if !inset[u] && inset[self.parent[u - 1]] {
                    inset[u] = true;
                    members.push(u);
                    changed = true;
                }
            }
        }
        members.sort_unstable();
        members
    }

    /// Pressure drops `h_l(w)` for one scenario of exit loads
    /// `w = (w_1, .., w_{n-1})` at the non-root nodes.
    pub fn pressure_drops(&self, loads: &[f64]) -> Vec<f64> {
        let n = self.n_nodes();
        debug_assert_eq!(loads.len(), n - 1);
        // flow through the edge into v = sum of loads in v's subtree
        let edge_term: Vec<f64> = (1..n)
            .map(|v| {
                let flow: f64 = self.subtree(v).iter().filter(|&&u| u >= 1).map(|&u| loads[u - 1]).sum();
                self.beta[v - 1] * flow * flow
            })
            .collect();
        (0..n)
            .map(|l| {
                let mut h = 0.0;
                let mut cur = l;
                while cur != 0 {
                    h += edge_term[cur - 1];
                    cur = self.parent[cur - 1];
                }
                h
            })
            .collect()
    }
}

/// One scenario-node term of the smoothed chance constraint:
/// `(1/N) psi_theta(v - x_node^2) - alpha/N`, smooth and treated as weakly
/// concave (single gradient).
struct GasPiece {
    node: usize,
    dim: usize,
    /// Pressure `v_l(w^j)` for this scenario and node.
    v: f64,
    theta: f64,
    inv_n: f64,
    alpha_over_n: f64,
}

impl WeaklyConcaveOracle for GasPiece {
    fn eval(&self, x: &[f64]) -> (f64, Vec<Vec<f64>>) {
        let xl = x[self.node];
        let z = self.v - xl * xl;
        let val = self.inv_n * sigmoid(z, self.theta) - self.alpha_over_n;
        let mut g = vec![0.0; self.dim];
        g[self.node] = self.inv_n * sigmoid_deriv(z, self.theta) * (-2.0 * xl);
        (val, vec![g])
    }
    fn value(&self, x: &[f64]) -> f64 {
        let xl = x[self.node];
        self.inv_n * sigmoid(self.v - xl * xl, self.theta) - self.alpha_over_n
    }
}

/// A built gas instance: the composite problem, its scenarios, the scenario
/// pressures, and a feasible starting point.
pub struct GasInstance {
    pub problem: CompositeProblem,
    pub scenarios: ScenarioSet,
    /// Row-major `N x n` pressures `v_l(w^j)`.
    pub pressures: Vec<f64>,
    pub start: Vec<f64>,
}

/// Builds the synthetic instance: exit loads are i.i.d. `|N(1, 0.3^2)|`,
/// the starting point `x_l = sqrt(v_max + 1)` is feasible by construction,
/// and `rho` is the default scale at the start.
pub fn build_gas_instance(
    tree: &GasTree,
    n_scenarios: usize,
    theta: f64,
    alpha: f64,
    seed: u64,
) -> Result<GasInstance> {
    let spec = DistributionSpec::normal_columns(vec![
        ColumnSpec { mean: 1.0, scale: 0.3, abs: true };
        tree.n_nodes() - 1
    ]);
    let scenarios = sample_scenarios(&spec, n_scenarios, seed)?;
    build_gas_from_scenarios(tree, scenarios, theta, alpha)
}

/// Same as [`build_gas_instance`] but with an externally supplied load
/// matrix (one column per non-root node).
pub fn build_gas_from_scenarios(
    tree: &GasTree,
    scenarios: ScenarioSet,
    theta: f64,
    alpha: f64,
) -> Result<GasInstance> {
    tree.validate()?;
    scenarios.validate()?;
    if !(theta > 0.0) {
        return Err(Error::Config(format!("theta = {theta} must be > 0")));
    }
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(Error::Config(format!("alpha = {alpha} not in (0,1)")));
    }
    let n = tree.n_nodes();
    if scenarios.n_vars != n - 1 {
        return Err(Error::Config(format!(
            "scenario set has {} columns, tree needs {}",
            scenarios.n_vars,
            n - 1
        )));
    }
    let n_scenarios = scenarios.n;

    let mut pressures = Vec::with_capacity(n_scenarios * n);
    let mut v_max = f64::NEG_INFINITY;
    for j in 0..n_scenarios {
        let h = tree.pressure_drops(scenarios.row(j));
        let h_max = h.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let v0 = 1.0 + h_max;
        for hl in &h {
            let v = v0 - hl;
            v_max = v_max.max(v);
            pressures.push(v);
        }
    }

    let inv_n = 1.0 / n_scenarios as f64;
    let alpha_over_n = alpha * inv_n;
    let constraint: Vec<PieceGroup> = (0..n_scenarios)
        .map(|j| PieceGroup {
            pieces: (0..n)
                .map(|l| Piece {
                    convex: Arc::new(ZeroFn { dim: n }),
                    concave: Arc::new(GasPiece {
                        node: l,
                        dim: n,
                        v: pressures[j * n + l],
                        theta,
                        inv_n,
                        alpha_over_n,
                    }),
                })
                .collect(),
        })
        .collect();

    let objective = vec![PieceGroup {
        pieces: vec![Piece {
            convex: Arc::new(AffineFn { coeffs: vec![1.0; n], offset: 0.0 }),
            concave: Arc::new(ZeroFn { dim: n }),
        }],
    }];

    let set = FeasibleSet::bounded(vec![1.0; n], vec![f64::INFINITY; n])?;
    let start = vec![(v_max + 1.0).sqrt().max(1.0); n];

    let mut problem =
        CompositeProblem { set, objective, constraint, outer: None, rho: 0.0 };
    let f0 = problem.objective_value(&start)?;
    let c0 = problem.constraint_value(&start)?;
    problem.rho = default_rho(f0, c0);
    Ok(GasInstance { problem, scenarios, pressures, start })
}
