//! Composite problem description and the improvement function.
//!
//! A problem is `min f(x) s.t. c(x) <= 0, x in X` where both `f` and `c` are
//! sums over groups of maxima of convex-plus-weakly-concave pieces. In
//! composite mode a convex nondecreasing scalar map is applied to each
//! (singleton) group instead.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::chunked_sum;
use crate::oracle::{ConvexFnOracle, ScalarConvexMap, WeaklyConcaveOracle};
use crate::set::FeasibleSet;

/// One convex-plus-weakly-concave piece inside a group max.
pub struct Piece {
    pub convex: Arc<dyn ConvexFnOracle>,
    pub concave: Arc<dyn WeaklyConcaveOracle>,
}

/// A finite group of pieces; the group contributes `max` over its pieces.
pub struct PieceGroup {
    pub pieces: Vec<Piece>,
}

/// Outer scalar maps for the composite variant (`G` on objective groups,
/// `R` on constraint groups), both convex and nondecreasing.
pub struct OuterMaps {
    pub g: Arc<dyn ScalarConvexMap>,
    pub r: Arc<dyn ScalarConvexMap>,
}

pub struct CompositeProblem {
    pub set: FeasibleSet,
    pub objective: Vec<PieceGroup>,
    pub constraint: Vec<PieceGroup>,
    /// Present iff the problem is in composite mode; groups must then be
    /// singletons.
    pub outer: Option<OuterMaps>,
    /// Improvement-function parameter, `>= 0`.
    pub rho: f64,
}

impl CompositeProblem {
    pub fn validate(&self) -> Result<()> {
        if self.objective.is_empty() || self.constraint.is_empty() {
            return Err(Error::Config("objective and constraint need >= 1 group".into()));
        }
        for (gi, g) in self.objective.iter().chain(&self.constraint).enumerate() {
            if g.pieces.is_empty() {
                return Err(Error::Config(format!("group {gi} has no pieces")));
            }
            if self.outer.is_some() && g.pieces.len() != 1 {
                return Err(Error::Config(
                    "composite mode requires singleton piece groups".into(),
                ));
            }
        }
        if !(self.rho >= 0.0) {
            return Err(Error::Config(format!("rho = {} must be >= 0", self.rho)));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.set.dim()
    }

    fn eval_groups(
        &self,
        groups: &[PieceGroup],
        outer: Option<&Arc<dyn ScalarConvexMap>>,
        context: &'static str,
        x: &[f64],
    ) -> Result<f64> {
        let total = chunked_sum(groups.len(), |j| {
            let m = groups[j]
                .pieces
                .iter()
                .map(|p| p.convex.value(x) + p.concave.value(x))
                .fold(f64::NEG_INFINITY, f64::max);
            match outer {
                Some(map) => map.value_deriv(m).0,
                None => m,
            }
        });
        if !total.is_finite() {
            // locate the offending component for the diagnostic
            for (j, g) in groups.iter().enumerate() {
                for (l, p) in g.pieces.iter().enumerate() {
                    if !(p.convex.value(x) + p.concave.value(x)).is_finite() {
                        return Err(Error::NonFiniteOracle { context, group: j, piece: l });
                    }
                }
            }
            return Err(Error::NonFiniteOracle { context, group: 0, piece: 0 });
        }
        Ok(total)
    }

    /// Objective value `f(x)`.
    pub fn objective_value(&self, x: &[f64]) -> Result<f64> {
        self.eval_groups(
            &self.objective,
            self.outer.as_ref().map(|o| &o.g),
            "objective",
            x,
        )
    }

    /// Constraint value `c(x)`.
    pub fn constraint_value(&self, x: &[f64]) -> Result<f64> {
        self.eval_groups(
            &self.constraint,
            self.outer.as_ref().map(|o| &o.r),
            "constraint",
            x,
        )
    }

    /// Target level `tau_f(x) = f(x) + rho * [c(x)]_+`.
    pub fn tau(&self, x: &[f64]) -> Result<f64> {
        Ok(self.objective_value(x)? + self.rho * self.constraint_value(x)?.max(0.0))
    }
}

/// Improvement function evaluation anchored at a center.
pub struct ImprovementEval<'a> {
    problem: &'a CompositeProblem,
    pub center: Vec<f64>,
    pub tau: f64,
}

impl<'a> ImprovementEval<'a> {
    pub fn new(problem: &'a CompositeProblem, center: &[f64]) -> Result<Self> {
        Ok(Self {
            problem,
            center: center.to_vec(),
            tau: problem.tau(center)?,
        })
    }

    /// `H(y; center) = max{f(y) - tau_f(center), c(y)}`.
    pub fn eval(&self, y: &[f64]) -> Result<f64> {
        let f = self.problem.objective_value(y)?;
        let c = self.problem.constraint_value(y)?;
        Ok((f - self.tau).max(c))
    }
}

/// `H(y; center)` in one call.
pub fn eval_improvement(problem: &CompositeProblem, center: &[f64], y: &[f64]) -> Result<f64> {
    ImprovementEval::new(problem, center)?.eval(y)
}

/// Default improvement parameter `rho = |f0| / (1 + |c0|)`, chosen so the
/// objective and constraint enter `H` at comparable magnitudes.
pub fn default_rho(f0: f64, c0: f64) -> f64 {
    f0.abs() / (1.0 + c0.abs())
}

/// Serious-step test: `H_y <= H_x - (kappa - lambda)/2 * dist_sq`.
pub fn descent_test(h_y: f64, h_x: f64, kappa: f64, lambda: f64, dist_sq: f64) -> Result<bool> {
    if !(0.0 < kappa && kappa < 1.0) {
        return Err(Error::Config(format!("kappa = {kappa} not in (0,1)")));
    }
    if !(0.0 <= lambda && lambda < kappa) {
        return Err(Error::Config(format!("lambda = {lambda} not in [0,kappa)")));
    }
    if !(dist_sq >= 0.0) {
        return Err(Error::Config(format!("dist_sq = {dist_sq} negative")));
    }
    Ok(h_y <= h_x - 0.5 * (kappa - lambda) * dist_sq)
}
