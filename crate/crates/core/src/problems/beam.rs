//! Cantilever beam-bar design under a buffered failure-probability
//! constraint.
//!
//! An ideally plastic beam of span `2L` (here `L = 5`) with random moment
//! capacity `y_M + w_M`, propped by a brittle bar of random strength
//! `y_T + w_T`, carries a random load `w_P`. Failure of the system is
//! `max{G_1, G_2, G_3} > 0` with each `G_i` a min of affine limit states.
//! The buffered-probability constraint `AVaR_alpha(max_i G_i) <= 0` is
//! written in sum-max form over the decision `(y_M, y_T, t)`:
//!
//! ```text
//!   -t alpha/(1-alpha) + sum_j p_j/(1-alpha) max{G_1, G_2, G_3, t} <= 0 .
//! ```

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{AffineFn, MinAffine, ZeroFn};
use crate::problem::{default_rho, CompositeProblem, Piece, PieceGroup};
use crate::problems::avar::empirical_avar;
use crate::problems::scenario::{sample_scenarios, ColumnSpec, DistributionSpec, ScaleKind, ScenarioSet};
use crate::set::FeasibleSet;

/// A scenario-dependent concave piecewise-linear limit state: maps one
/// scenario row to the affine rows (over the full decision, `t` last) whose
/// pointwise minimum defines it.
pub type LimitState = Arc<dyn Fn(&[f64]) -> Vec<AffineFn> + Send + Sync>;

/// Buffered-probability instance over limit states: decision `(y, t)` with
/// `t` appended to the design variables, objective `cost`, constraint as in
/// the module docs. `rho` is left at 0 for the caller to set.
pub fn build_buffered_instance(
    limit_states: &[LimitState],
    scenarios: &ScenarioSet,
    alpha: f64,
    cost: AffineFn,
    design_set: &FeasibleSet,
) -> Result<CompositeProblem> {
    if limit_states.is_empty() {
        return Err(Error::Empty("no limit states given".into()));
    }
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(Error::Config(format!("alpha = {alpha} not in (0,1)")));
    }
    scenarios.validate()?;
    let d = design_set.dim();
    let dim = d + 1; // t last
    if cost.coeffs.len() != dim {
        return Err(Error::Config("cost must cover the (y, t) decision".into()));
    }

    let mut t_coeff = vec![0.0; dim];
    t_coeff[d] = -alpha / (1.0 - alpha);
    let mut constraint = Vec::with_capacity(scenarios.n + 1);
    constraint.push(PieceGroup {
        pieces: vec![Piece {
            convex: Arc::new(AffineFn { coeffs: t_coeff, offset: 0.0 }),
            concave: Arc::new(ZeroFn { dim }),
        }],
    });
    for j in 0..scenarios.n {
        let sigma = scenarios.prob(j) / (1.0 - alpha);
        let omega = scenarios.row(j);
        let mut pieces = Vec::with_capacity(limit_states.len() + 1);
        let mut t_row = vec![0.0; dim];
        t_row[d] = sigma;
        pieces.push(Piece {
            convex: Arc::new(AffineFn { coeffs: t_row, offset: 0.0 }),
            concave: Arc::new(ZeroFn { dim }),
        });
        for (i, ls) in limit_states.iter().enumerate() {
            let rows = ls(omega);
            if rows.is_empty() {
                return Err(Error::OracleContract(format!(
                    "limit state {i} produced no affine rows"
                )));
            }
            let scaled = rows
                .into_iter()
                .map(|r| {
                    if r.coeffs.len() != dim {
                        return Err(Error::Config(format!(
                            "limit state {i} row has {} coefficients, expected {dim}",
                            r.coeffs.len()
                        )));
                    }
                    Ok(AffineFn {
                        coeffs: r.coeffs.iter().map(|c| sigma * c).collect(),
                        offset: sigma * r.offset,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            pieces.push(Piece {
                convex: Arc::new(ZeroFn { dim }),
                concave: Arc::new(MinAffine::new(scaled)),
            });
        }
        constraint.push(PieceGroup { pieces });
    }

    let mut lower = design_set.lower().to_vec();
    let mut upper = design_set.upper().to_vec();
    lower.push(f64::NEG_INFINITY);
    upper.push(f64::INFINITY);
    let set = FeasibleSet::bounded(lower, upper)?;

    let objective = vec![PieceGroup {
        pieces: vec![Piece { convex: Arc::new(cost), concave: Arc::new(ZeroFn { dim }) }],
    }];
    Ok(CompositeProblem { set, objective, constraint, outer: None, rho: 0.0 })
}

// ---------------------------------------------------------------------------
// Cantilever beam
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BeamSpec {
    /// Half-span; the limit-state coefficients below are for `l = 5`.
    pub l: f64,
    pub alpha: f64,
    pub n_scenarios: usize,
    /// Scale parameters of `w_M ~ N(0, 300)`, `w_T ~ N(0, 20)`,
    /// `w_P ~ N(150, 30)`; read per `scale_kind`.
    pub sd_m: f64,
    pub sd_t: f64,
    pub mean_p: f64,
    pub sd_p: f64,
    pub scale_kind: ScaleKind,
    pub y_m_bounds: (f64, f64),
    pub y_t_bounds: (f64, f64),
}

impl BeamSpec {
    pub fn standard(alpha: f64, n_scenarios: usize) -> Self {
        Self {
            l: 5.0,
            alpha,
            n_scenarios,
            sd_m: 300.0,
            sd_t: 20.0,
            mean_p: 150.0,
            sd_p: 30.0,
            scale_kind: ScaleKind::Sd,
            y_m_bounds: (500.0, 1500.0),
            y_t_bounds: (50.0, 150.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if (self.l - 5.0).abs() > 1e-12 {
            return Err(Error::Config(
                "limit-state coefficients are specific to half-span l = 5".into(),
            ));
        }
        if !(0.0 < self.alpha && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha = {} not in (0,1)", self.alpha)));
        }
        if self.n_scenarios == 0 {
            return Err(Error::Empty("n_scenarios = 0".into()));
        }
        if self.y_m_bounds.0 > self.y_m_bounds.1 || self.y_t_bounds.0 > self.y_t_bounds.1 {
            return Err(Error::InfeasibleSet("design box is empty".into()));
        }
        Ok(())
    }

    pub fn distribution(&self) -> DistributionSpec {
        DistributionSpec {
            columns: vec![
                ColumnSpec { mean: 0.0, scale: self.sd_m, abs: false },
                ColumnSpec { mean: 0.0, scale: self.sd_t, abs: false },
                ColumnSpec { mean: self.mean_p, scale: self.sd_p, abs: false },
            ],
            scale_kind: self.scale_kind,
        }
    }
}

/// Limit-state values for one scenario `w = (w_M, w_T, w_P)`, as functions
/// of the design `(y_M, y_T)` (the `t` coordinate never enters):
///
/// ```text
///   g1 = -y_T + a,  a = -w_T + (5/16) w_P
///   g2 = -y_M + b,  b = -w_M + 5 w_P
///   g3 = -y_M + c,  c = -w_M + (15/8) w_P
///   g4 = -y_M + d,  d = -w_M + (5/3) w_P
///   g5 = -y_M - 10 y_T + e,  e = -w_M - 10 w_T + 5 w_P
/// ```
pub fn g_offsets(omega: &[f64]) -> [f64; 5] {
    let (wm, wt, wp) = (omega[0], omega[1], omega[2]);
    [
        -wt + (5.0 / 16.0) * wp,
        -wm + 5.0 * wp,
        -wm + (15.0 / 8.0) * wp,
        -wm + (5.0 / 3.0) * wp,
        -wm - 10.0 * wt + 5.0 * wp,
    ]
}

/// Per-scenario offsets needed for fast sweeps of
/// `xi(y) = max{min(g1,g2), min(g3,g4), min(g3,g5)}`.
#[derive(Debug, Clone)]
pub struct LimitStateTable {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    /// `min(c, d)`: `G_2 = -y_M + min(c, d)`.
    pub cd: Vec<f64>,
    pub e: Vec<f64>,
}

impl LimitStateTable {
    pub fn from_scenarios(scenarios: &ScenarioSet) -> Self {
        let n = scenarios.n;
        let mut t = Self {
            a: Vec::with_capacity(n),
            b: Vec::with_capacity(n),
            c: Vec::with_capacity(n),
            cd: Vec::with_capacity(n),
            e: Vec::with_capacity(n),
        };
        for j in 0..n {
            let [a, b, c, d, e] = g_offsets(scenarios.row(j));
            t.a.push(a);
            t.b.push(b);
            t.c.push(c);
            t.cd.push(c.min(d));
            t.e.push(e);
        }
        t
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    /// Worst limit state `xi_j(y) = max_i G_i(y, w^j)`.
    pub fn xi(&self, y_m: f64, y_t: f64, j: usize) -> f64 {
        let g1 = -y_t + self.a[j];
        let g2 = -y_m + self.b[j];
        let g3 = -y_m + self.c[j];
        let g5 = -y_m - 10.0 * y_t + self.e[j];
        let big_g1 = g1.min(g2);
        let big_g2 = -y_m + self.cd[j];
        let big_g3 = g3.min(g5);
        big_g1.max(big_g2).max(big_g3)
    }

    /// Fills `out` with `xi_j(y)` for all scenarios.
    pub fn xi_values(&self, y_m: f64, y_t: f64, out: &mut Vec<f64>) {
        out.clear();
        out.extend((0..self.len()).map(|j| self.xi(y_m, y_t, j)));
    }
}

pub struct BeamInstance {
    pub spec: BeamSpec,
    pub problem: CompositeProblem,
    pub scenarios: ScenarioSet,
    pub table: LimitStateTable,
    /// `(y_M, y_T, t)` start: the cheapest design corner with `t` at the
    /// AVaR argmin of its limit-state distribution.
    pub start: Vec<f64>,
}

/// Builds the beam instance: samples scenarios, assembles the buffered
/// constraint over `G_1, G_2, G_3`, and sets `rho` at the start point.
pub fn build_cantilever_instance(spec: &BeamSpec, seed: u64) -> Result<BeamInstance> {
    spec.validate()?;
    let scenarios = sample_scenarios(&spec.distribution(), spec.n_scenarios, seed)?;
    build_cantilever_from_scenarios(spec, scenarios)
}

/// Same as [`build_cantilever_instance`] but with an externally supplied
/// scenario matrix (columns `w_M, w_T, w_P`).
pub fn build_cantilever_from_scenarios(
    spec: &BeamSpec,
    scenarios: ScenarioSet,
) -> Result<BeamInstance> {
    spec.validate()?;
    scenarios.validate()?;
    if scenarios.n_vars != 3 {
        return Err(Error::Config(format!(
            "beam scenarios need 3 columns (w_M, w_T, w_P), got {}",
            scenarios.n_vars
        )));
    }
    let table = LimitStateTable::from_scenarios(&scenarios);

    let row = |coeffs: [f64; 3], offset: f64| AffineFn { coeffs: coeffs.to_vec(), offset };
    let limit_states: Vec<LimitState> = vec![
        // G1 = min{g1, g2}
        Arc::new(move |w: &[f64]| {
            let [a, b, _, _, _] = g_offsets(w);
            vec![row([0.0, -1.0, 0.0], a), row([-1.0, 0.0, 0.0], b)]
        }),
        // G2 = min{g3, g4}
        Arc::new(move |w: &[f64]| {
            let [_, _, c, d, _] = g_offsets(w);
            vec![row([-1.0, 0.0, 0.0], c), row([-1.0, 0.0, 0.0], d)]
        }),
        // G3 = min{g3, g5}
        Arc::new(move |w: &[f64]| {
            let [_, _, c, _, e] = g_offsets(w);
            vec![row([-1.0, 0.0, 0.0], c), row([-1.0, -10.0, 0.0], e)]
        }),
    ];

    let design_set = FeasibleSet::bounded(
        vec![spec.y_m_bounds.0, spec.y_t_bounds.0],
        vec![spec.y_m_bounds.1, spec.y_t_bounds.1],
    )?;
    let cost = AffineFn { coeffs: vec![2.0, 1.0, 0.0], offset: 0.0 };
    let mut problem =
        build_buffered_instance(&limit_states, &scenarios, spec.alpha, cost, &design_set)?;

    // start at the cheapest corner, t at the AVaR argmin there
    let (y_m0, y_t0) = (spec.y_m_bounds.0, spec.y_t_bounds.0);
    let mut xi = Vec::with_capacity(scenarios.n);
    table.xi_values(y_m0, y_t0, &mut xi);
    let (_, t0) = empirical_avar(&xi, scenarios.probs.as_deref(), spec.alpha)?;
    let start = vec![y_m0, y_t0, t0];

    let f0 = problem.objective_value(&start)?;
    let c0 = problem.constraint_value(&start)?;
    problem.rho = default_rho(f0, c0);
    let spec = BeamSpec { n_scenarios: scenarios.n, ..spec.clone() };
    Ok(BeamInstance { spec, problem, scenarios, table, start })
}
