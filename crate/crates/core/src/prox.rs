//! Outer proximal loop on the improvement function.
//!
//! At center `x^k` a model family `{M_a(.;x^k)}` is built, each model is
//! prox-minimized inexactly by the bundle method, and the best candidate
//! `y^k` either becomes the next center (serious step, sufficient decrease of
//! `H(.;x^k)`) or the prox parameter grows (null step). Termination on
//! `||y^k - x^k|| <= tol`; the final point is additionally certified by an
//! independent criticality residual.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bundle::{inner_solve, prox_solve_exact, select_candidate, InnerParams, InnerResult, InnerStatus};
use crate::error::{Error, Result};
use crate::linalg::{dist_sq, norm, sub};
use crate::models::ModelBuilder;
use crate::problem::{descent_test, eval_improvement, CompositeProblem};
use crate::set::FeasibleSet;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OuterParams {
    /// Descent weight, in (0,1).
    pub kappa: f64,
    /// Inexactness weight, in [0, kappa).
    pub lambda: f64,
    /// Initial prox parameter, >= kappa.
    pub mu0: f64,
    /// Stopping tolerance on the step norm.
    pub tol: f64,
    /// Null-step growth factor (> 1).
    pub growth_factor: f64,
    /// Null-step additive increment (> 0).
    pub growth_increment: f64,
    pub max_iters: usize,
    pub max_inner_iters: usize,
    pub max_cuts: usize,
}

impl OuterParams {
    /// Defaults: growth `mu <- max(2 mu, mu + kappa)`, generous caps.
    pub fn new(kappa: f64, lambda: f64, mu0: f64, tol: f64) -> Result<Self> {
        let p = Self {
            kappa,
            lambda,
            mu0,
            tol,
            growth_factor: 2.0,
            growth_increment: kappa,
            max_iters: 20_000,
            max_inner_iters: crate::bundle::DEFAULT_MAX_INNER_ITERS,
            max_cuts: crate::bundle::DEFAULT_MAX_CUTS,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.kappa && self.kappa < 1.0) {
            return Err(Error::Config(format!("kappa = {} not in (0,1)", self.kappa)));
        }
        if !(0.0 <= self.lambda && self.lambda < self.kappa) {
            return Err(Error::Config(format!(
                "lambda = {} not in [0, kappa = {})",
                self.lambda, self.kappa
            )));
        }
        if !(self.mu0 >= self.kappa) {
            return Err(Error::Config(format!(
                "mu0 = {} must be >= kappa = {}",
                self.mu0, self.kappa
            )));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::Config(format!("tol = {} negative", self.tol)));
        }
        if !(self.growth_factor > 1.0) {
            return Err(Error::Config("growth factor must be > 1".into()));
        }
        if !(self.growth_increment > 0.0) {
            return Err(Error::Config("growth increment must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    /// `||y^k - x^k|| <= tol` reached.
    Converged,
    MaxIter,
}

/// One outer iteration of the trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iter: usize,
    pub x: Vec<f64>,
    pub mu: f64,
    /// `f(x^k)`, `c(x^k)` at the center.
    pub f: f64,
    pub c: f64,
    /// `H(x^k; x^k)` and `H(y^k; x^k)`.
    pub h_center: f64,
    pub h_candidate: f64,
    pub step_norm: f64,
    pub eps: f64,
    pub family_size: usize,
    pub inner_iterations: usize,
    pub serious: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub f: f64,
    pub c: f64,
    pub iterations: usize,
    pub serious_steps: usize,
    pub criticality_residual: f64,
    pub trace: Vec<TraceEntry>,
    pub params: OuterParams,
    /// Wall-clock seconds. The only nondeterministic field; determinism
    /// checks compare reports with this field removed.
    pub timing: f64,
}

/// Runs the outer loop from `x0` (must lie in `X`).
pub fn solve(
    problem: &CompositeProblem,
    builder: &dyn ModelBuilder,
    x0: &[f64],
    params: &OuterParams,
) -> Result<SolveReport> {
    params.validate()?;
    problem.validate()?;
    let set = &problem.set;
    if !set.contains(x0, 1e-9 * (1.0 + norm(x0))) {
        return Err(Error::Precondition("x0 outside the feasible set".into()));
    }
    let start = Instant::now();

    let mut x = x0.to_vec();
    let mut mu = params.mu0;
    let mut serious_steps = 0usize;
    let mut trace: Vec<TraceEntry> = Vec::new();
    let mut status = SolveStatus::MaxIter;
    let mut f_x = problem.objective_value(&x)?;
    let mut c_x = problem.constraint_value(&x)?;

    let inner_params = InnerParams {
        lambda: params.lambda,
        tol: params.tol,
        max_iters: params.max_inner_iters,
        max_cuts: params.max_cuts,
    };

    for k in 0..params.max_iters {
        let family = builder.build(&x)?;
        let h_x = family.h_center;

        let mut results: Vec<InnerResult> = Vec::with_capacity(family.len());
        for model in &family.models {
            let mut r = inner_solve(model, &x, mu, set, &inner_params)?;
            if r.status == InnerStatus::IterationCap {
                if r.center_gap <= 10.0 * params.tol {
                    // close enough to a prox fixed point to treat as such
                    r.candidate = x.clone();
                    r.eps = 0.0;
                    r.status = InnerStatus::CenterOptimal;
                } else {
                    return Err(Error::InnerAbort {
                        gap: r.center_gap,
                        tolerance: 10.0 * params.tol,
                        iterations: r.iterations,
                    });
                }
            }
            results.push(r);
        }
        let inner_iterations: usize = results.iter().map(|r| r.iterations).sum();
        let (_, y, eps) = select_candidate(&results, &family, mu)?;

        let step_sq = dist_sq(&y, &x);
        let step_norm = step_sq.sqrt();
        if eps > 0.5 * params.lambda * step_sq + 1e-9 * (1.0 + h_x.abs()) {
            return Err(Error::Internal(format!(
                "inexactness guard violated at iteration {k}: eps = {eps:.3e} > (lambda/2) step^2 = {:.3e}",
                0.5 * params.lambda * step_sq
            )));
        }
        let h_y = eval_improvement(problem, &x, &y)?;

        let converged = step_norm <= params.tol;
        let serious = !converged
            && descent_test(h_y, h_x, params.kappa, params.lambda, step_sq)?;

        trace.push(TraceEntry {
            iter: k,
            x: x.clone(),
            mu,
            f: f_x,
            c: c_x,
            h_center: h_x,
            h_candidate: h_y,
            step_norm,
            eps,
            family_size: family.len(),
            inner_iterations,
            serious,
        });

        if converged {
            status = SolveStatus::Converged;
            break;
        }
        if serious {
            let f_y = problem.objective_value(&y)?;
            let c_y = problem.constraint_value(&y)?;
            // feasibility persistence (Lemma 1): once feasible, stay feasible
            if c_x <= 0.0 && c_y > 1e-8 * (1.0 + c_x.abs()) {
                return Err(Error::Internal(format!(
                    "feasibility lost at serious step {k}: c went from {c_x:.3e} to {c_y:.3e}"
                )));
            }
            x = y;
            f_x = f_y;
            c_x = c_y;
            serious_steps += 1;
        } else {
            mu = (params.growth_factor * mu).max(mu + params.growth_increment);
        }
    }

    let criticality_residual = criticality_residual(builder, set, &x, mu)?;
    Ok(SolveReport {
        status,
        x,
        f: f_x,
        c: c_x,
        iterations: trace.len(),
        serious_steps,
        criticality_residual,
        trace,
        params: *params,
        timing: start.elapsed().as_secs_f64(),
    })
}

/// Independent criticality certificate at `x_bar`: for every model active at
/// the center (value within `1e-9 * (1+|H|)` of `H(x_bar;x_bar)`), solve its
/// prox subproblem to a tight absolute gap and return the largest distance
/// from `x_bar` to a subproblem solution. A small residual combined with
/// `c(x_bar) <= 0` certifies approximate FM-criticality.
pub fn criticality_residual(
    builder: &dyn ModelBuilder,
    set: &FeasibleSet,
    x_bar: &[f64],
    mu_probe: f64,
) -> Result<f64> {
    if !(mu_probe > 0.0) {
        return Err(Error::Config(format!("mu_probe = {mu_probe} must be > 0")));
    }
    let family = builder.build(x_bar)?;
    let h = family.h_center;
    let tie = 1e-9 * (1.0 + h.abs());
    // absolute prox gap chosen so the implied distance error
    // sqrt(2 gap / mu) stays well below typical tolerances; the bundle
    // bounds are differences of terms of order ||x_bar||, so the gap floor
    // must scale with the iterate or it sits below float resolution
    let abs_gap = 1e-13 * (1.0 + h.abs() + norm(x_bar)) * mu_probe.max(1.0);

    let mut residual = 0.0f64;
    let mut any_active = false;
    for model in &family.models {
        if model.value(x_bar)? > h + tie {
            continue;
        }
        any_active = true;
        let (y, _) = prox_solve_exact(model, x_bar, mu_probe, set, abs_gap, 2000)?;
        residual = residual.max(norm(&sub(&y, x_bar)));
    }
    if !any_active {
        return Err(Error::Internal(
            "no model active at the center; Assumption 1(a) violated".into(),
        ));
    }
    Ok(residual)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    use crate::models::LinearizationBuilder;
    use crate::oracle::{AffineFn, DiagQuadraticFn, ZeroFn};
    use crate::problem::{Piece, PieceGroup};

    fn quadratic_instance() -> CompositeProblem {
        // f = (x - 0.3)^2, c = -1, X free
        CompositeProblem {
            set: FeasibleSet::free(1),
            objective: vec![PieceGroup {
                pieces: vec![Piece {
                    convex: Arc::new(DiagQuadraticFn {
                        quad: vec![2.0],
                        coeffs: vec![-0.6],
                        offset: 0.09,
                    }),
                    concave: Arc::new(ZeroFn { dim: 1 }),
                }],
            }],
            constraint: vec![PieceGroup {
                pieces: vec![Piece {
                    convex: Arc::new(AffineFn { coeffs: vec![0.0], offset: -1.0 }),
                    concave: Arc::new(ZeroFn { dim: 1 }),
                }],
            }],
            outer: None,
            rho: 1.0,
        }
    }

    fn abs_instance() -> CompositeProblem {
        // f = |x| = max{x, -x} (two convex pieces), c = -1
        CompositeProblem {
            set: FeasibleSet::free(1),
            objective: vec![PieceGroup {
                pieces: vec![
                    Piece {
                        convex: Arc::new(AffineFn { coeffs: vec![1.0], offset: 0.0 }),
                        concave: Arc::new(ZeroFn { dim: 1 }),
                    },
                    Piece {
                        convex: Arc::new(AffineFn { coeffs: vec![-1.0], offset: 0.0 }),
                        concave: Arc::new(ZeroFn { dim: 1 }),
                    },
                ],
            }],
            constraint: vec![PieceGroup {
                pieces: vec![Piece {
                    convex: Arc::new(AffineFn { coeffs: vec![0.0], offset: -1.0 }),
                    concave: Arc::new(ZeroFn { dim: 1 }),
                }],
            }],
            outer: None,
            rho: 0.0,
        }
    }

    #[test]
    fn fixed_point_terminates_immediately() {
        let p = quadratic_instance();
        let builder = LinearizationBuilder { problem: &p, tuple_cap: 1 };
        let params = OuterParams::new(0.3, 0.1, 1.0, 1e-6).unwrap();
        let r = solve(&p, &builder, &[0.3], &params).unwrap();
        assert_eq!(r.status, SolveStatus::Converged);
        assert_eq!(r.iterations, 1);
        assert_eq!(r.serious_steps, 0);
        assert!(r.criticality_residual <= 1e-6);
    }

    #[test]
    fn converges_on_nonsmooth_convex_instance() {
        let p = abs_instance();
        let builder = LinearizationBuilder { problem: &p, tuple_cap: 1 };
        let params = OuterParams::new(0.3, 0.1, 0.3, 1e-7).unwrap();
        let r = solve(&p, &builder, &[0.9], &params).unwrap();
        assert_eq!(r.status, SolveStatus::Converged);
        assert!(r.x[0].abs() < 1e-6, "x = {}", r.x[0]);
        assert!(r.criticality_residual <= 1e-6);
        // descent inequality at every serious step (Lemma 1, feasible case)
        for w in r.trace.windows(2) {
            if w[0].serious {
                let lhs = w[1].f;
                let rhs = w[0].f - 0.5 * (0.3 - 0.1) * w[0].step_norm.powi(2);
                assert!(lhs <= rhs + 1e-10, "descent violated: {lhs} > {rhs}");
            }
        }
        assert!(r.serious_steps <= r.iterations);
        assert_eq!(r.trace.len(), r.iterations);
    }

    #[test]
    fn null_steps_grow_mu_by_rule() {
        // f = 10 x^2 carried entirely by a weakly concave part (modulus 20):
        // tangents at the center underestimate badly while mu is small, so
        // early candidates overshoot and force null steps until mu catches up
        let p = CompositeProblem {
            set: FeasibleSet::free(1),
            objective: vec![PieceGroup {
                pieces: vec![Piece {
                    convex: Arc::new(ZeroFn { dim: 1 }),
                    concave: Arc::new(DiagQuadraticFn {
                        quad: vec![20.0],
                        coeffs: vec![0.0],
                        offset: 0.0,
                    }),
                }],
            }],
            constraint: vec![PieceGroup {
                pieces: vec![Piece {
                    convex: Arc::new(AffineFn { coeffs: vec![1.0], offset: -100.0 }),
                    concave: Arc::new(ZeroFn { dim: 1 }),
                }],
            }],
            outer: None,
            rho: 0.0,
        };
        let builder = LinearizationBuilder { problem: &p, tuple_cap: 1 };
        let params = OuterParams::new(0.3, 0.1, 0.3, 1e-7).unwrap();
        let r = solve(&p, &builder, &[0.1], &params).unwrap();
        assert_eq!(r.status, SolveStatus::Converged);
        assert!(r.x[0].abs() < 1e-5, "x = {}", r.x[0]);
        assert!(r.serious_steps < r.iterations.saturating_sub(1), "expected null steps");
        for w in r.trace.windows(2) {
            if !w[0].serious {
                let expected = (2.0 * w[0].mu).max(w[0].mu + 0.3);
                assert!((w[1].mu - expected).abs() < 1e-12);
                assert!(w[1].mu >= w[0].mu + 0.3 - 1e-12);
            } else {
                assert_eq!(w[0].mu, w[1].mu);
            }
        }
    }

    #[test]
    fn infeasible_start_rejected() {
        let mut p = abs_instance();
        p.set = FeasibleSet::bounded(vec![0.0], vec![1.0]).unwrap();
        let builder = LinearizationBuilder { problem: &p, tuple_cap: 1 };
        let params = OuterParams::new(0.3, 0.1, 0.3, 1e-6).unwrap();
        assert!(matches!(
            solve(&p, &builder, &[2.0], &params),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn criticality_residual_detects_non_minimizer() {
        let p = quadratic_instance();
        let builder = LinearizationBuilder { problem: &p, tuple_cap: 1 };
        // at x = 1.3 the prox step with mu = 2 moves toward 0.3:
        // min (x-0.3)^2 + (x-1.3)^2 -> x = 0.8, residual 0.5
        let res = criticality_residual(&builder, &p.set, &[1.3], 2.0).unwrap();
        assert!((res - 0.5).abs() < 1e-5, "res = {res}");
        let res = criticality_residual(&builder, &p.set, &[0.3], 2.0).unwrap();
        assert!(res <= 1e-7);
    }
}
