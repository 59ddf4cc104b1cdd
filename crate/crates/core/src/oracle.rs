//! Oracle contracts for the component functions and common implementations.
//!
//! Convex components return a value and exactly one subgradient. Weakly
//! concave components return a value and a nonempty list of Clarke
//! subgradients; smooth components return the gradient as a singleton list.
//! Oracles must be deterministic pure functions of `x` (scenario data is
//! frozen at problem-build time) and safe to call from multiple threads.

use std::sync::Arc;

use crate::linalg::dot;

/// Value + one subgradient oracle for a convex function.
pub trait ConvexFnOracle: Send + Sync {
    fn eval(&self, x: &[f64]) -> (f64, Vec<f64>);

    fn value(&self, x: &[f64]) -> f64 {
        self.eval(x).0
    }
}

/// Value + Clarke subgradients oracle for a weakly concave function.
pub trait WeaklyConcaveOracle: Send + Sync {
    /// Returns the value and a nonempty list of Clarke subgradients.
    fn eval(&self, x: &[f64]) -> (f64, Vec<Vec<f64>>);

    fn value(&self, x: &[f64]) -> f64 {
        self.eval(x).0
    }
}

/// Value + one subderivative oracle for a one-dimensional convex
/// nondecreasing outer map (the `G`/`R` of the composite form).
pub trait ScalarConvexMap: Send + Sync {
    fn value_deriv(&self, t: f64) -> (f64, f64);
}

// ---------------------------------------------------------------------------
// Common implementations
// ---------------------------------------------------------------------------

/// The zero function, usable as either a convex or concave component.
#[derive(Debug, Clone, Default)]
pub struct ZeroFn {
    pub dim: usize,
}

impl ConvexFnOracle for ZeroFn {
    fn eval(&self, _x: &[f64]) -> (f64, Vec<f64>) {
        (0.0, vec![0.0; self.dim])
    }
    fn value(&self, _x: &[f64]) -> f64 {
        0.0
    }
}

impl WeaklyConcaveOracle for ZeroFn {
    fn eval(&self, _x: &[f64]) -> (f64, Vec<Vec<f64>>) {
        (0.0, vec![vec![0.0; self.dim]])
    }
    fn value(&self, _x: &[f64]) -> f64 {
        0.0
    }
}

/// Affine function `<coeffs, x> + offset`.
#[derive(Debug, Clone)]
pub struct AffineFn {
    pub coeffs: Vec<f64>,
    pub offset: f64,
}

impl ConvexFnOracle for AffineFn {
    fn eval(&self, x: &[f64]) -> (f64, Vec<f64>) {
        (dot(&self.coeffs, x) + self.offset, self.coeffs.clone())
    }
    fn value(&self, x: &[f64]) -> f64 {
        dot(&self.coeffs, x) + self.offset
    }
}

impl WeaklyConcaveOracle for AffineFn {
    fn eval(&self, x: &[f64]) -> (f64, Vec<Vec<f64>>) {
        (dot(&self.coeffs, x) + self.offset, vec![self.coeffs.clone()])
    }
    fn value(&self, x: &[f64]) -> f64 {
        dot(&self.coeffs, x) + self.offset
    }
}

/// Convex quadratic `0.5 * <x, diag(q) x> + <coeffs, x> + offset` with `q >= 0`.
#[derive(Debug, Clone)]
pub struct DiagQuadraticFn {
    pub quad: Vec<f64>,
    pub coeffs: Vec<f64>,
    pub offset: f64,
}

impl ConvexFnOracle for DiagQuadraticFn {
    fn eval(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let v = ConvexFnOracle::value(self, x);
        let g = x
            .iter()
            .zip(&self.quad)
            .zip(&self.coeffs)
            .map(|((xi, qi), ci)| qi * xi + ci)
            .collect();
        (v, g)
    }
    fn value(&self, x: &[f64]) -> f64 {
        let q: f64 = x.iter().zip(&self.quad).map(|(xi, qi)| qi * xi * xi).sum();
        0.5 * q + dot(&self.coeffs, x) + self.offset
    }
}

impl WeaklyConcaveOracle for DiagQuadraticFn {
    // any C^2 function with bounded curvature is weakly concave; the modulus
    // here is max(quad)
    fn eval(&self, x: &[f64]) -> (f64, Vec<Vec<f64>>) {
        let (v, g) = ConvexFnOracle::eval(self, x);
        (v, vec![g])
    }
    fn value(&self, x: &[f64]) -> f64 {
        ConvexFnOracle::value(self, x)
    }
}

/// Pointwise minimum of affine functions: concave and piecewise linear.
///
/// Supergradients are the coefficient rows of every piece tied with the
/// minimum within `tie_tol` relative; ties expose alternative subgradients
/// for tuple enumeration.
#[derive(Debug, Clone)]
pub struct MinAffine {
    pub rows: Vec<AffineFn>,
    pub tie_tol: f64,
}

pub const MIN_AFFINE_TIE_TOL: f64 = 1e-7;

impl MinAffine {
    pub fn new(rows: Vec<AffineFn>) -> Self {
        Self {
            rows,
            tie_tol: MIN_AFFINE_TIE_TOL,
        }
    }
}

impl WeaklyConcaveOracle for MinAffine {
    fn eval(&self, x: &[f64]) -> (f64, Vec<Vec<f64>>) {
        debug_assert!(!self.rows.is_empty());
        let vals: Vec<f64> = self.rows.iter().map(|r| ConvexFnOracle::value(r, x)).collect();
        let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let tol = self.tie_tol * (1.0 + min.abs());
        let grads = self
            .rows
            .iter()
            .zip(&vals)
            .filter(|(_, &v)| v <= min + tol)
            .map(|(r, _)| r.coeffs.clone())
            .collect();
        (min, grads)
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.rows
            .iter()
            .map(|r| ConvexFnOracle::value(r, x))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Convex oracle from a closure returning (value, subgradient).
pub struct ClosureConvex<F>(pub F);

impl<F> ConvexFnOracle for ClosureConvex<F>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>) + Send + Sync,
{
    fn eval(&self, x: &[f64]) -> (f64, Vec<f64>) {
        (self.0)(x)
    }
}

/// Weakly concave oracle from a closure returning (value, supergradients).
pub struct ClosureConcave<F>(pub F);

impl<F> WeaklyConcaveOracle for ClosureConcave<F>
where
    F: Fn(&[f64]) -> (f64, Vec<Vec<f64>>) + Send + Sync,
{
    fn eval(&self, x: &[f64]) -> (f64, Vec<Vec<f64>>) {
        (self.0)(x)
    }
}

/// Sum of a convex oracle and an affine shift; used to assemble the
/// linearized B-stationarity subproblems.
pub struct ShiftedConvex {
    pub inner: Arc<dyn ConvexFnOracle>,
    pub shift: AffineFn,
}

impl ConvexFnOracle for ShiftedConvex {
    fn eval(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let (v, mut g) = self.inner.eval(x);
        for (gi, ci) in g.iter_mut().zip(&self.shift.coeffs) {
            *gi += ci;
        }
        (v + ConvexFnOracle::value(&self.shift, x), g)
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.inner.value(x) + ConvexFnOracle::value(&self.shift, x)
    }
}

/// Identity outer map, reduces the composite family to sum-max.
#[derive(Debug, Clone, Default)]
pub struct IdentityMap;

impl ScalarConvexMap for IdentityMap {
    fn value_deriv(&self, t: f64) -> (f64, f64) {
        (t, 1.0)
    }
}

/// Hinge outer map `max{0, t}`.
#[derive(Debug, Clone, Default)]
pub struct HingeMap;

impl ScalarConvexMap for HingeMap {
    fn value_deriv(&self, t: f64) -> (f64, f64) {
        if t > 0.0 {
            (t, 1.0)
        } else {
            (0.0, 0.0)
        }
    }
}
