//! DC special form `f = f1 + min_j fj`, `c = c1 + min_l cl` with smooth
//! concave pieces, its epsilon-active model family, and B-stationarity
//! certification via the linearized convex subproblems.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::models::{ConvexModel, LinPiece, ModelAnchor, ModelBuilder, ModelFamily};
use crate::oracle::{AffineFn, ConvexFnOracle, DiagQuadraticFn, ShiftedConvex, WeaklyConcaveOracle, ZeroFn};
use crate::problem::{default_rho, CompositeProblem, Piece, PieceGroup};
use crate::prox::{self, OuterParams};
use crate::set::FeasibleSet;

/// Value + gradient oracle for a smooth (C^1) function.
pub trait SmoothFn: Send + Sync {
    fn eval(&self, x: &[f64]) -> (f64, Vec<f64>);

    fn value(&self, x: &[f64]) -> f64 {
        self.eval(x).0
    }
}

impl SmoothFn for AffineFn {
    fn eval(&self, x: &[f64]) -> (f64, Vec<f64>) {
        ConvexFnOracle::eval(self, x)
    }
}

impl SmoothFn for DiagQuadraticFn {
    fn eval(&self, x: &[f64]) -> (f64, Vec<f64>) {
        ConvexFnOracle::eval(self, x)
    }
}

impl SmoothFn for ZeroFn {
    fn eval(&self, x: &[f64]) -> (f64, Vec<f64>) {
        ConvexFnOracle::eval(self, x)
    }
}

/// Smooth oracle from a closure.
pub struct ClosureSmooth<F>(pub F);

impl<F> SmoothFn for ClosureSmooth<F>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>) + Send + Sync,
{
    fn eval(&self, x: &[f64]) -> (f64, Vec<f64>) {
        (self.0)(x)
    }
}

/// Hard cap on |A_f^eps x A_c^eps|; exceeding it is an error (truncation
/// would invalidate the stationarity analysis), remedied by a smaller eps.
pub const DEFAULT_DC_MODEL_CAP: usize = 64;

/// Problem in DC special form. Each `fj`/`cl` must be smooth and concave;
/// `f2 = min_j fj(x)`, `c2 = min_l cl(x)`.
pub struct DcProblem {
    pub set: FeasibleSet,
    pub f1: Arc<dyn ConvexFnOracle>,
    pub f2: Vec<Arc<dyn SmoothFn>>,
    pub c1: Arc<dyn ConvexFnOracle>,
    pub c2: Vec<Arc<dyn SmoothFn>>,
    pub rho: f64,
}

fn min_values(pieces: &[Arc<dyn SmoothFn>], x: &[f64]) -> (f64, Vec<f64>) {
    let vals: Vec<f64> = pieces.iter().map(|p| p.value(x)).collect();
    let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    (min, vals)
}

impl DcProblem {
    pub fn validate(&self) -> Result<()> {
        if self.f2.is_empty() || self.c2.is_empty() {
            return Err(Error::Config("DC form needs >= 1 piece per side".into()));
        }
        if !(self.rho >= 0.0) {
            return Err(Error::Config(format!("rho = {} must be >= 0", self.rho)));
        }
        Ok(())
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.f1.value(x) + min_values(&self.f2, x).0
    }

    pub fn constraint_value(&self, x: &[f64]) -> f64 {
        self.c1.value(x) + min_values(&self.c2, x).0
    }

    pub fn tau(&self, x: &[f64]) -> f64 {
        self.objective_value(x) + self.rho * self.constraint_value(x).max(0.0)
    }

    /// Scale-relative default for the active-set width:
    /// `1e-3 * (1 + |f2(x)| + |c2(x)|)`.
    pub fn default_eps(&self, x: &[f64]) -> f64 {
        let f2 = min_values(&self.f2, x).0;
        let c2 = min_values(&self.c2, x).0;
        1e-3 * (1.0 + f2.abs() + c2.abs())
    }

    /// View as a general composite problem (for improvement-function
    /// evaluation by the outer loop; models still come from [`DcBuilder`]).
    pub fn to_composite(&self) -> CompositeProblem {
        CompositeProblem {
            set: self.set.clone(),
            objective: vec![PieceGroup {
                pieces: vec![Piece {
                    convex: self.f1.clone(),
                    concave: Arc::new(MinSmooth { pieces: self.f2.clone() }),
                }],
            }],
            constraint: vec![PieceGroup {
                pieces: vec![Piece {
                    convex: self.c1.clone(),
                    concave: Arc::new(MinSmooth { pieces: self.c2.clone() }),
                }],
            }],
            outer: None,
            rho: self.rho,
        }
    }
}

/// `min_j` of smooth concave pieces as a weakly concave oracle; exposes the
/// gradients of all pieces tied with the min (1e-7 relative).
pub struct MinSmooth {
    pub pieces: Vec<Arc<dyn SmoothFn>>,
}

impl WeaklyConcaveOracle for MinSmooth {
    fn eval(&self, x: &[f64]) -> (f64, Vec<Vec<f64>>) {
        let (min, vals) = min_values(&self.pieces, x);
        let tol = 1e-7 * (1.0 + min.abs());
        let grads = self
            .pieces
            .iter()
            .zip(&vals)
            .filter(|(_, &v)| v <= min + tol)
            .map(|(p, _)| p.eval(x).1)
            .collect();
        (min, grads)
    }
    fn value(&self, x: &[f64]) -> f64 {
        min_values(&self.pieces, x).0
    }
}

/// Epsilon-active index sets at a point.
#[derive(Debug, Clone)]
pub struct EpsActiveSets {
    pub eps: f64,
    pub a_f: Vec<usize>,
    pub a_c: Vec<usize>,
}

/// `A_f^eps(x) = {j : fj(x) <= f2(x) + eps}` and the analogue for `c`.
pub fn eps_active_sets(problem: &DcProblem, x: &[f64], eps: f64) -> Result<EpsActiveSets> {
    if !(eps >= 0.0) {
        return Err(Error::Config(format!("eps = {eps} negative")));
    }
    let active = |pieces: &[Arc<dyn SmoothFn>]| -> Vec<usize> {
        let (min, vals) = min_values(pieces, x);
        vals.iter()
            .enumerate()
            .filter(|(_, &v)| v <= min + eps)
            .map(|(i, _)| i)
            .collect()
    };
    Ok(EpsActiveSets { eps, a_f: active(&problem.f2), a_c: active(&problem.c2) })
}

/// DC model family: one convex model per active pair `(j, l)`,
/// `M_{jl}(y;x) = max{f1(y) + fj(x) + <grad fj(x), y-x> - tau,
///                   c1(y) + cl(x) + <grad cl(x), y-x>}`.
/// Concavity of the pieces makes every tangent an overestimate, so the
/// family overestimates `H` with no quadratic slack (modulus 0).
pub fn build_dc_family(
    problem: &DcProblem,
    center: &[f64],
    eps: f64,
    cap: usize,
) -> Result<ModelFamily> {
    problem.validate()?;
    let active = eps_active_sets(problem, center, eps)?;
    let size = active.a_f.len() * active.a_c.len();
    if size > cap {
        return Err(Error::DcProductTooLarge { size, cap });
    }

    let f = problem.objective_value(center);
    let c = problem.constraint_value(center);
    let tau = f + problem.rho * c.max(0.0);
    let h_center = (f - tau).max(c);

    let f_tangents: Vec<(f64, Vec<f64>)> =
        active.a_f.iter().map(|&j| problem.f2[j].eval(center)).collect();
    let c_tangents: Vec<(f64, Vec<f64>)> =
        active.a_c.iter().map(|&l| problem.c2[l].eval(center)).collect();

    let mut models = Vec::with_capacity(size);
    let mut anchors = Vec::with_capacity(size);
    for (ji, &j) in active.a_f.iter().enumerate() {
        for (li, &l) in active.a_c.iter().enumerate() {
            let (fv, fg) = &f_tangents[ji];
            let (cv, cg) = &c_tangents[li];
            models.push(ConvexModel {
                obj_groups: vec![vec![LinPiece::from_tangent(
                    problem.f1.clone(),
                    center,
                    *fv,
                    fg,
                )]],
                con_groups: vec![vec![LinPiece::from_tangent(
                    problem.c1.clone(),
                    center,
                    *cv,
                    cg,
                )]],
                outer_obj: None,
                outer_con: None,
                tau,
            });
            anchors.push(ModelAnchor::DcPair { j, l });
        }
    }
    Ok(ModelFamily { center: center.to_vec(), h_center, tau, anchors, models })
}

/// Builder for the outer loop over a DC problem. `eps = None` uses the
/// scale-relative default at each center.
pub struct DcBuilder<'a> {
    pub problem: &'a DcProblem,
    pub eps: Option<f64>,
    pub cap: usize,
}

impl<'a> DcBuilder<'a> {
    pub fn new(problem: &'a DcProblem) -> Self {
        Self { problem, eps: None, cap: DEFAULT_DC_MODEL_CAP }
    }
}

impl ModelBuilder for DcBuilder<'_> {
    fn build(&self, center: &[f64]) -> Result<ModelFamily> {
        let eps = self.eps.unwrap_or_else(|| self.problem.default_eps(center));
        build_dc_family(self.problem, center, eps, self.cap)
    }
}

/// Outcome of the B-stationarity check at a point.
#[derive(Debug, Clone)]
pub struct BStationarity {
    pub stationary: bool,
    /// Per active pair `(j, l)`: objective gap `phi(x_bar) - phi(y*)` of the
    /// linearized subproblem; a positive gap beyond tol refutes stationarity.
    pub residuals: Vec<(usize, usize, f64)>,
    /// Set when `c(x_bar)` is within tol of 0: the pointwise Slater condition
    /// is assumed, not verified.
    pub slater_assumed: bool,
}

/// Certifies B-stationarity of `x_bar` by solving, for every zero-active
/// pair `(j, l)`, the convex program
/// `min f1(y) + tangent of fj  s.t.  c1(y) + tangent of cl <= 0, y in X`
/// with the same improvement-function/bundle stack at tolerance `tol / 10`,
/// and checking that `x_bar` attains each optimal value within `tol`.
pub fn check_b_stationarity(problem: &DcProblem, x_bar: &[f64], tol: f64) -> Result<BStationarity> {
    problem.validate()?;
    if !(tol > 0.0) {
        return Err(Error::Config(format!("tol = {tol} must be > 0")));
    }
    let c_val = problem.constraint_value(x_bar);
    if c_val > tol {
        return Err(Error::Precondition(format!(
            "B-stationarity requires a feasible point; c(x_bar) = {c_val:.3e}"
        )));
    }
    let slater_assumed = c_val >= -tol;

    // zero-active sets, with a relative tie tolerance in place of the
    // exact-arithmetic equality
    let f2_scale = 1e-9 * (1.0 + min_values(&problem.f2, x_bar).0.abs());
    let c2_scale = 1e-9 * (1.0 + min_values(&problem.c2, x_bar).0.abs());
    let a_f = eps_active_sets(problem, x_bar, f2_scale)?.a_f;
    let a_c = eps_active_sets(problem, x_bar, c2_scale)?.a_c;

    let dim = problem.set.dim();
    let tangent = |piece: &Arc<dyn SmoothFn>| -> AffineFn {
        let (v, g) = piece.eval(x_bar);
        AffineFn { offset: v - dot(&g, x_bar), coeffs: g }
    };

    let mut residuals = Vec::new();
    let mut stationary = true;
    for &j in &a_f {
        for &l in &a_c {
            let obj = ShiftedConvex { inner: problem.f1.clone(), shift: tangent(&problem.f2[j]) };
            let con = ShiftedConvex { inner: problem.c1.clone(), shift: tangent(&problem.c2[l]) };
            let phi_center = obj.value(x_bar);
            let sub = CompositeProblem {
                set: problem.set.clone(),
                objective: vec![PieceGroup {
                    pieces: vec![Piece { convex: Arc::new(obj), concave: Arc::new(ZeroFn { dim }) }],
                }],
                constraint: vec![PieceGroup {
                    pieces: vec![Piece { convex: Arc::new(con), concave: Arc::new(ZeroFn { dim }) }],
                }],
                outer: None,
                rho: default_rho(phi_center, c_val),
            };
            let builder = crate::models::LinearizationBuilder { problem: &sub, tuple_cap: 1 };
            let params = OuterParams::new(0.3, 0.1, 1.0, tol / 10.0)?;
            let report = prox::solve(&sub, &builder, x_bar, &params)?;
            if report.c > tol {
                // the convex subproblem could not be made feasible
                return Err(Error::CqViolation { j, l });
            }
            let gap = phi_center - report.f;
            residuals.push((j, l, gap));
            if gap > tol {
                stationary = false;
            }
        }
    }
    Ok(BStationarity { stationary, residuals, slater_assumed })
}

/// 1-D analytic instance `min x^2 - |x| on [-1,1]` with `c = -1`:
/// `f1 = x^2`, `f2 = min{x, -x}`. Its B-stationary points are +-1/2.
pub fn abs_quadratic_instance() -> DcProblem {
    DcProblem {
        set: FeasibleSet::bounded(vec![-1.0], vec![1.0]).expect("static bounds"),
        f1: Arc::new(DiagQuadraticFn { quad: vec![2.0], coeffs: vec![0.0], offset: 0.0 }),
        f2: vec![
            Arc::new(AffineFn { coeffs: vec![1.0], offset: 0.0 }),
            Arc::new(AffineFn { coeffs: vec![-1.0], offset: 0.0 }),
        ],
        c1: Arc::new(AffineFn { coeffs: vec![0.0], offset: -1.0 }),
        c2: vec![Arc::new(ZeroFn { dim: 1 }) as Arc<dyn SmoothFn>],
        rho: 1.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::eval_improvement;

    #[test]
    fn eps_active_sets_examples() {
        let p = abs_quadratic_instance();
        // f2 = min{x, -x}
        let a = eps_active_sets(&p, &[0.0], 0.0).unwrap();
        assert_eq!(a.a_f, vec![0, 1]);
        let a = eps_active_sets(&p, &[0.05], 0.0).unwrap();
        assert_eq!(a.a_f, vec![1]);
        let a = eps_active_sets(&p, &[0.05], 0.2).unwrap();
        assert_eq!(a.a_f, vec![0, 1]);
    }

    #[test]
    fn dc_family_at_kink_has_two_models() {
        let p = abs_quadratic_instance();
        let fam = build_dc_family(&p, &[0.0], 0.0, 64).unwrap();
        assert_eq!(fam.len(), 2);
        assert_eq!(fam.anchors[0], ModelAnchor::DcPair { j: 0, l: 0 });
        // tau = f(0) + rho*[c]_+ = 0; models are max{y^2 +- y, -1}
        for (a, sign) in fam.models.iter().zip([1.0f64, -1.0]) {
            for y in [-0.8, -0.2, 0.0, 0.3, 1.0] {
                let expect = (y * y + sign * y).max(-1.0);
                assert!((a.value(&[y]).unwrap() - expect).abs() < 1e-12);
            }
        }
        // family min equals H here: min over +-  of y^2 +- y = y^2 - |y|
        let comp = p.to_composite();
        for y in [-1.0, -0.4, 0.0, 0.6, 1.0] {
            let h = eval_improvement(&comp, &[0.0], &[y]).unwrap();
            let m = fam.min_value(&[y]).unwrap();
            assert!((h - m).abs() < 1e-12);
        }
        assert!(matches!(
            build_dc_family(&p, &[0.0], 0.0, 1),
            Err(Error::DcProductTooLarge { size: 2, cap: 1 })
        ));
    }

    #[test]
    fn dc_family_overestimates_without_slack() {
        // H(y;x) <= min_a M_a(y;x) on sampled pairs, mu bar = 0
        let p = abs_quadratic_instance();
        let comp = p.to_composite();
        for k in 0..100 {
            let x = ((k * 17 % 41) as f64 / 20.0) - 1.0;
            let y = ((k * 29 % 37) as f64 / 18.0) - 1.0;
            let fam = build_dc_family(&p, &[x], p.default_eps(&[x]), 64).unwrap();
            let h = eval_improvement(&comp, &[x], &[y]).unwrap();
            let m = fam.min_value(&[y]).unwrap();
            assert!(h <= m + 1e-9, "x={x} y={y}: H={h} > M={m}");
            // family min matches H at the center (Assumption 1(a))
            let mc = fam.min_value(&[x]).unwrap();
            assert!((mc - fam.h_center).abs() <= 1e-10 * (1.0 + fam.h_center.abs()));
        }
    }

    #[test]
    fn b_stationarity_accepts_half_rejects_zero() {
        let p = abs_quadratic_instance();
        let r = check_b_stationarity(&p, &[0.5], 1e-6).unwrap();
        assert!(r.stationary, "residuals: {:?}", r.residuals);
        let r = check_b_stationarity(&p, &[-0.5], 1e-6).unwrap();
        assert!(r.stationary);
        let r = check_b_stationarity(&p, &[0.0], 1e-6).unwrap();
        assert!(!r.stationary);
        // both piece subproblems move by 1/2, objective gap 1/4
        for (_, _, gap) in &r.residuals {
            assert!((gap - 0.25).abs() < 1e-5, "gap = {gap}");
        }
    }

    #[test]
    fn b_stationarity_on_convex_corner() {
        // m_f = m_c = 1, affine pieces: min x on [0,1] with c = -x <= 0;
        // the KKT point is x = 0
        let p = DcProblem {
            set: FeasibleSet::bounded(vec![0.0], vec![1.0]).unwrap(),
            f1: Arc::new(AffineFn { coeffs: vec![1.0], offset: 0.0 }),
            f2: vec![Arc::new(ZeroFn { dim: 1 }) as Arc<dyn SmoothFn>],
            c1: Arc::new(AffineFn { coeffs: vec![-1.0], offset: 0.0 }),
            c2: vec![Arc::new(ZeroFn { dim: 1 }) as Arc<dyn SmoothFn>],
            rho: 1.0,
        };
        let r = check_b_stationarity(&p, &[0.0], 1e-6).unwrap();
        assert!(r.stationary);
        assert!(r.slater_assumed); // c(0) = 0 sits on the boundary
        let r = check_b_stationarity(&p, &[0.4], 1e-6).unwrap();
        assert!(!r.stationary);
    }

    #[test]
    fn solver_reaches_b_stationary_point() {
        let p = abs_quadratic_instance();
        let comp = p.to_composite();
        let builder = DcBuilder::new(&p);
        // the stop test bounds the model gap, so the distance error scales
        // like sqrt(tol); 1e-11 gives about 3e-6 here
        let params = OuterParams::new(0.3, 0.1, 0.3, 1e-11).unwrap();
        let r = prox::solve(&comp, &builder, &[0.9], &params).unwrap();
        assert!((r.x[0].abs() - 0.5).abs() < 1e-5, "x = {}", r.x[0]);
        assert!(check_b_stationarity(&p, &r.x, 1e-5).unwrap().stationary);
    }
}
