//! Prox-form bundle method for one convex model.
//!
//! Given a convex model `M_a(.;x)` and a center `x`, [`inner_solve`] computes
//! an eps-solution of
//!
//! ```text
//!   min_{y in X}  M_a(y; x) + (mu/2) ||y - x||^2
//! ```
//!
//! by iterating cutting-plane QPs, with the two stopping tests: a
//! center-optimality gap test at the center and an inexactness test
//! `eps <= (lambda/2) ||y - x||^2` at the candidate. [`select_candidate`]
//! reduces the per-model results to the outer iterate.

use crate::error::{Error, Result};
use crate::linalg::dist_sq;
use crate::models::{ConvexModel, ModelFamily};
use crate::qp::{solve_prox_cut_qp, Cut, CutOrigin, QpSolution};
use crate::set::FeasibleSet;

pub const DEFAULT_MAX_INNER_ITERS: usize = 500;
pub const DEFAULT_MAX_CUTS: usize = 100;

#[derive(Debug, Clone, Copy)]
pub struct InnerParams {
    /// Inexactness weight, in `[0, kappa)` of the outer loop.
    pub lambda: f64,
    /// Center-optimality gap tolerance (the outer Tol).
    pub tol: f64,
    pub max_iters: usize,
    pub max_cuts: usize,
}

impl InnerParams {
    pub fn new(lambda: f64, tol: f64) -> Self {
        Self {
            lambda,
            tol,
            max_iters: DEFAULT_MAX_INNER_ITERS,
            max_cuts: DEFAULT_MAX_CUTS,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(Error::Config(format!("lambda = {} negative", self.lambda)));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::Config(format!("tol = {} negative", self.tol)));
        }
        if self.max_cuts < 2 {
            return Err(Error::Config("max stored cuts must be >= 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerStatus {
    /// The center itself is optimal for the prox subproblem (up to tol).
    CenterOptimal,
    /// The candidate satisfies the inexactness test.
    EpsSolution,
    /// Iteration cap hit; candidate is the best iterate so far.
    IterationCap,
}

#[derive(Debug, Clone)]
pub struct InnerResult {
    pub candidate: Vec<f64>,
    /// Achieved inexactness `M_a(y) - Hhat(y) >= 0`.
    pub eps: f64,
    pub status: InnerStatus,
    pub iterations: usize,
    pub cuts: Vec<Cut>,
    /// Last center-gap `M_a(center;center) - Hhat(y)`, for cap diagnosis.
    pub center_gap: f64,
    /// `M_a(candidate; center)`.
    pub model_value: f64,
}

/// Runs the bundle loop on one convex model.
pub fn inner_solve(
    model: &ConvexModel,
    center: &[f64],
    mu: f64,
    set: &FeasibleSet,
    params: &InnerParams,
) -> Result<InnerResult> {
    params.validate()?;
    if !(mu > 0.0) {
        return Err(Error::Config(format!("mu = {mu} must be > 0")));
    }

    let (m_center, g0) = model.eval(center)?;
    let mut cuts = vec![Cut {
        anchor: center.to_vec(),
        value: m_center,
        slope: g0,
        origin: CutOrigin::Ordinary,
    }];

    let mut last: Option<(Vec<f64>, f64, f64, f64)> = None; // (y, eps, gap, model value)
    for m in 0..params.max_iters {
        let sol = solve_prox_cut_qp(&cuts, mu, center, set)?;
        let y = sol.minimizer.clone();
        let model_lb = sol.model_value; // Hhat^m(y^{m+1})

        let center_gap = m_center - model_lb;
        if center_gap <= params.tol {
            return Ok(InnerResult {
                candidate: center.to_vec(),
                eps: 0.0,
                status: InnerStatus::CenterOptimal,
                iterations: m + 1,
                cuts,
                center_gap,
                model_value: m_center,
            });
        }

        let (v, g) = model.eval(&y)?;
        let eps = (v - model_lb).max(0.0);
        if eps <= 0.5 * params.lambda * dist_sq(&y, center) {
            return Ok(InnerResult {
                candidate: y,
                eps,
                status: InnerStatus::EpsSolution,
                iterations: m + 1,
                cuts,
                center_gap,
                model_value: v,
            });
        }

        let new_cut = Cut { anchor: y.clone(), value: v, slope: g, origin: CutOrigin::Ordinary };
        cuts = update_cuts(&cuts, &sol, new_cut, mu, center, params.max_cuts)?;
        last = Some((y, eps, center_gap, v));
    }

    let (candidate, eps, center_gap, model_value) =
        last.expect("max_iters >= 1 so at least one QP ran");
    Ok(InnerResult {
        candidate,
        eps,
        status: InnerStatus::IterationCap,
        iterations: params.max_iters,
        cuts,
        center_gap,
        model_value,
    })
}

/// Cut retention rule: the new cut and the aggregate linearization are always
/// kept; then active cuts, then inactive cuts, both newest-first, up to `cap`.
/// Surviving old cuts keep their age order; the aggregate and the new cut are
/// appended as the newest entries. Duplicates are merged.
pub fn update_cuts(
    cuts: &[Cut],
    qp_sol: &QpSolution,
    new_cut: Cut,
    mu: f64,
    center: &[f64],
    cap: usize,
) -> Result<Vec<Cut>> {
    if cap < 2 {
        return Err(Error::Config(
            "cut cap must be >= 2 (aggregate and new cut are both kept)".into(),
        ));
    }
    let aggregate = qp_sol.aggregate_cut(mu, center);

    let same = |a: &Cut, b: &Cut| {
        (a.intercept() - b.intercept()).abs() <= 1e-12
            && a.slope.iter().zip(&b.slope).all(|(x, y)| (x - y).abs() <= 1e-12)
    };

    // priority order: new cut, aggregate, actives newest-first, inactives
    // newest-first
    let mut priority: Vec<Cut> = vec![new_cut, aggregate];
    let active = &qp_sol.active_cuts;
    for &i in active.iter().rev() {
        priority.push(cuts[i].clone());
    }
    for (i, c) in cuts.iter().enumerate().rev() {
        if !active.contains(&i) {
            priority.push(c.clone());
        }
    }

    let mut selected: Vec<Cut> = Vec::with_capacity(cap);
    for c in priority {
        if selected.len() == cap {
            break;
        }
        if !selected.iter().any(|s| same(s, &c)) {
            selected.push(c);
        }
    }
    // restore age order: old cuts as before, then aggregate, then new cut
    let rank = |c: &Cut| -> usize {
        if let Some(i) = cuts.iter().position(|o| same(o, c)) {
            i
        } else if c.origin == CutOrigin::Aggregate {
            cuts.len()
        } else {
            cuts.len() + 1
        }
    };
    selected.sort_by_key(rank);
    Ok(selected)
}

/// Picks the outer candidate across the per-model inner results: the one
/// minimizing `M(y_a; center) + (mu/2)||y_a - center||^2` where
/// `M = min_a M_a`; ties within 1e-12 go to the lowest index. The returned
/// inexactness is `min_a eps_a`.
pub fn select_candidate(
    results: &[InnerResult],
    family: &ModelFamily,
    mu: f64,
) -> Result<(usize, Vec<f64>, f64)> {
    if results.is_empty() {
        return Err(Error::Internal("no inner results to select from".into()));
    }
    let mut best_idx = 0usize;
    let mut best_val = f64::INFINITY;
    for (a, r) in results.iter().enumerate() {
        let prox_val = family.min_value(&r.candidate)?
            + 0.5 * mu * dist_sq(&r.candidate, &family.center);
        if prox_val < best_val - 1e-12 {
            best_val = prox_val;
            best_idx = a;
        }
    }
    let eps = results.iter().map(|r| r.eps).fold(f64::INFINITY, f64::min);
    Ok((best_idx, results[best_idx].candidate.clone(), eps))
}

/// Solves the prox subproblem to an absolute gap: iterates until the bundle
/// upper bound (best evaluated prox objective) and lower bound
/// (`Hhat(y) + (mu/2)||y-center||^2`) differ by at most `abs_gap`.
///
/// By `mu`-strong convexity the returned point is within
/// `sqrt(2 * abs_gap / mu)` of the true minimizer; used for criticality
/// residuals and B-stationarity certification.
pub fn prox_solve_exact(
    model: &ConvexModel,
    center: &[f64],
    mu: f64,
    set: &FeasibleSet,
    abs_gap: f64,
    max_iters: usize,
) -> Result<(Vec<f64>, f64)> {
    if !(mu > 0.0 && abs_gap >= 0.0) {
        return Err(Error::Config("need mu > 0 and abs_gap >= 0".into()));
    }
    let (v0, g0) = model.eval(center)?;
    let mut cuts = vec![Cut {
        anchor: center.to_vec(),
        value: v0,
        slope: g0,
        origin: CutOrigin::Ordinary,
    }];
    let mut best_point = center.to_vec();
    let mut best_ub = v0; // prox objective at center has zero prox term
    let mut last_gap = f64::INFINITY;

    for _ in 0..max_iters {
        let sol = solve_prox_cut_qp(&cuts, mu, center, set)?;
        let y = sol.minimizer.clone();
        let lb = sol.model_value + 0.5 * mu * dist_sq(&y, center);
        let (v, g) = model.eval(&y)?;
        let ub = v + 0.5 * mu * dist_sq(&y, center);
        if ub < best_ub {
            best_ub = ub;
            best_point = y.clone();
        }
        last_gap = best_ub - lb;
        if last_gap <= abs_gap {
            return Ok((best_point, best_ub));
        }
        let new_cut = Cut { anchor: y, value: v, slope: g, origin: CutOrigin::Ordinary };
        cuts = update_cuts(&cuts, &sol, new_cut, mu, center, DEFAULT_MAX_CUTS)?;
    }
    Err(Error::InnerAbort { gap: last_gap, tolerance: abs_gap, iterations: max_iters })
}
