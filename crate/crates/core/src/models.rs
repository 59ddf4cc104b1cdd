//! Convex model families for the outer loop.
//!
//! At a center `x` the nonconvex improvement function `H(.;x)` is modeled by
//! `M(.;x) = min_a M_a(.;x)` where each `M_a` is convex: the weakly concave
//! part of every piece is replaced by a tangent at the center (one choice of
//! supergradient per piece = one index `a`). Builders here cover the plain
//! sum-max linearization and the composite variant with convex nondecreasing
//! outer maps; the DC-specific family lives in [`crate::dc`].

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{chunked_accumulate, chunked_sum, dot};
use crate::oracle::{ConvexFnOracle, ScalarConvexMap};
use crate::problem::{CompositeProblem, PieceGroup};

/// Default number of models per family: one, built from the first
/// supergradient of every component.
pub const DEFAULT_TUPLE_CAP: usize = 1;

/// Index identifying one convex model within a family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelAnchor {
    /// Enumeration index over supergradient tuples (sum-max / composite).
    Tuple(usize),
    /// Active index pair (j, l) in the DC setting.
    DcPair { j: usize, l: usize },
}

/// One piece of a convex model: the retained convex part plus the affine
/// tangent of the concave part, stored as `convex(y) + base + <slope, y>`.
#[derive(Clone)]
pub struct LinPiece {
    pub convex: Arc<dyn ConvexFnOracle>,
    pub base: f64,
    pub slope: Vec<f64>,
}

impl LinPiece {
    /// Tangent of a concave component at `center`: value `val` there, one
    /// supergradient `grad`.
    pub fn from_tangent(
        convex: Arc<dyn ConvexFnOracle>,
        center: &[f64],
        val: f64,
        grad: &[f64],
    ) -> Self {
        Self {
            convex,
            base: val - dot(grad, center),
            slope: grad.to_vec(),
        }
    }

    pub fn value(&self, y: &[f64]) -> f64 {
        self.convex.value(y) + self.base + dot(&self.slope, y)
    }

    pub fn eval(&self, y: &[f64]) -> (f64, Vec<f64>) {
        let (v, mut g) = self.convex.eval(y);
        for (gi, si) in g.iter_mut().zip(&self.slope) {
            *gi += si;
        }
        (v + self.base + dot(&self.slope, y), g)
    }
}

/// One convex model `M_a(.;x)`:
/// `max{ sum_j [G](max-piece of obj group j) - tau, sum_l [R](max-piece of con group l) }`.
/// An empty side is treated as absent (`-inf`), which lets the same evaluator
/// serve pure convex subproblems (criticality probes, B-stationarity).
#[derive(Clone)]
pub struct ConvexModel {
    pub obj_groups: Vec<Vec<LinPiece>>,
    pub con_groups: Vec<Vec<LinPiece>>,
    pub outer_obj: Option<Arc<dyn ScalarConvexMap>>,
    pub outer_con: Option<Arc<dyn ScalarConvexMap>>,
    /// Target level subtracted from the objective side.
    pub tau: f64,
}

impl ConvexModel {
    fn side_value(
        groups: &[Vec<LinPiece>],
        map: Option<&Arc<dyn ScalarConvexMap>>,
        y: &[f64],
    ) -> Option<f64> {
        if groups.is_empty() {
            return None;
        }
        Some(chunked_sum(groups.len(), |j| {
            let m = groups[j]
                .iter()
                .map(|p| p.value(y))
                .fold(f64::NEG_INFINITY, f64::max);
            match map {
                Some(map) => map.value_deriv(m).0,
                None => m,
            }
        }))
    }

    fn side_grad(
        groups: &[Vec<LinPiece>],
        map: Option<&Arc<dyn ScalarConvexMap>>,
        y: &[f64],
    ) -> Vec<f64> {
        chunked_accumulate(groups.len(), y.len(), |j, buf| {
            // first piece attaining the group max, then chain rule
            let (mut bi, mut bv) = (0usize, f64::NEG_INFINITY);
            for (i, p) in groups[j].iter().enumerate() {
                let v = p.value(y);
                if v > bv {
                    bv = v;
                    bi = i;
                }
            }
            let (_, g) = groups[j][bi].eval(y);
            let d = match map {
                Some(map) => map.value_deriv(bv).1,
                None => 1.0,
            };
            for (b, gi) in buf.iter_mut().zip(&g) {
                *b += d * gi;
            }
        })
    }

    fn locate_nonfinite(&self, y: &[f64]) -> Error {
        for (ctx, groups) in [
            ("model objective side", &self.obj_groups),
            ("model constraint side", &self.con_groups),
        ] {
            for (j, g) in groups.iter().enumerate() {
                for (l, p) in g.iter().enumerate() {
                    if !p.value(y).is_finite() {
                        return Error::NonFiniteOracle { context: ctx, group: j, piece: l };
                    }
                }
            }
        }
        Error::NonFiniteOracle { context: "model", group: 0, piece: 0 }
    }

    pub fn value(&self, y: &[f64]) -> Result<f64> {
        let o = Self::side_value(&self.obj_groups, self.outer_obj.as_ref(), y)
            .map(|v| v - self.tau);
        let c = Self::side_value(&self.con_groups, self.outer_con.as_ref(), y);
        let v = match (o, c) {
            (Some(a), Some(b)) => a.max(b),
            (Some(a), None) => a,
            (None, Some(b)) => b,
            (None, None) => return Err(Error::Empty("model has no pieces".into())),
        };
        if !v.is_finite() {
            return Err(self.locate_nonfinite(y));
        }
        Ok(v)
    }

    /// Value and one subgradient (the active side's, objective side on ties).
    pub fn eval(&self, y: &[f64]) -> Result<(f64, Vec<f64>)> {
        let o = Self::side_value(&self.obj_groups, self.outer_obj.as_ref(), y)
            .map(|v| v - self.tau);
        let c = Self::side_value(&self.con_groups, self.outer_con.as_ref(), y);
        let (v, g) = match (o, c) {
            (Some(a), Some(b)) if a >= b => {
                (a, Self::side_grad(&self.obj_groups, self.outer_obj.as_ref(), y))
            }
            (Some(_), Some(b)) => {
                (b, Self::side_grad(&self.con_groups, self.outer_con.as_ref(), y))
            }
            (Some(a), None) => (a, Self::side_grad(&self.obj_groups, self.outer_obj.as_ref(), y)),
            (None, Some(b)) => (b, Self::side_grad(&self.con_groups, self.outer_con.as_ref(), y)),
            (None, None) => return Err(Error::Empty("model has no pieces".into())),
        };
        if !v.is_finite() || g.iter().any(|x| !x.is_finite()) {
            return Err(self.locate_nonfinite(y));
        }
        Ok((v, g))
    }
}

/// Family `{M_a(.;x)}_{a in A(x)}` anchored at one center.
pub struct ModelFamily {
    pub center: Vec<f64>,
    /// `H(center; center) = [c(center)]_+`.
    pub h_center: f64,
    pub tau: f64,
    pub anchors: Vec<ModelAnchor>,
    pub models: Vec<ConvexModel>,
}

impl ModelFamily {
    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    /// `M(y; center) = min_a M_a(y; center)`.
    pub fn min_value(&self, y: &[f64]) -> Result<f64> {
        let mut best = f64::INFINITY;
        for m in &self.models {
            best = best.min(m.value(y)?);
        }
        Ok(best)
    }
}

/// Produces the model family at any center; the outer loop is generic over
/// this so the sum-max, composite, and DC constructions share one driver.
pub trait ModelBuilder: Sync {
    fn build(&self, center: &[f64]) -> Result<ModelFamily>;
}

// ---------------------------------------------------------------------------
// Sum-max and composite builders
// ---------------------------------------------------------------------------

/// Per-piece tangent data collected at the center.
struct TangentPiece {
    convex: Arc<dyn ConvexFnOracle>,
    val: f64,
    grads: Vec<Vec<f64>>,
}

fn collect_tangents(groups: &[PieceGroup], center: &[f64]) -> Result<Vec<Vec<TangentPiece>>> {
    groups
        .iter()
        .enumerate()
        .map(|(j, g)| {
            g.pieces
                .iter()
                .enumerate()
                .map(|(l, p)| {
                    let (val, grads) = p.concave.eval(center);
                    if grads.is_empty() {
                        return Err(Error::OracleContract(format!(
                            "concave oracle returned no supergradients (group {j}, piece {l})"
                        )));
                    }
                    Ok(TangentPiece { convex: p.convex.clone(), val, grads })
                })
                .collect()
        })
        .collect()
}

fn realize_groups(
    tangents: &[Vec<TangentPiece>],
    center: &[f64],
    mut pick: impl FnMut() -> usize,
) -> Vec<Vec<LinPiece>> {
    tangents
        .iter()
        .map(|g| {
            g.iter()
                .map(|t| {
                    let k = if t.grads.len() > 1 { pick() % t.grads.len() } else { 0 };
                    LinPiece::from_tangent(t.convex.clone(), center, t.val, &t.grads[k])
                })
                .collect()
        })
        .collect()
}

fn build_linearized_family(
    problem: &CompositeProblem,
    center: &[f64],
    tuple_cap: usize,
) -> Result<ModelFamily> {
    if tuple_cap < 1 {
        return Err(Error::Config("tuple cap must be >= 1".into()));
    }
    if center.len() != problem.dim() {
        return Err(Error::Precondition("center dimension mismatch".into()));
    }
    let f = problem.objective_value(center)?;
    let c = problem.constraint_value(center)?;
    let tau = f + problem.rho * c.max(0.0);
    let h_center = (f - tau).max(c);

    let obj_t = collect_tangents(&problem.objective, center)?;
    let con_t = collect_tangents(&problem.constraint, center)?;

    // Components with tied supergradients, in encounter order (objective side
    // first). Enumeration is a mixed-radix counter with the most recently
    // encountered tied component varying fastest, truncated at the cap.
    let radices: Vec<usize> = obj_t
        .iter()
        .chain(&con_t)
        .flatten()
        .filter(|t| t.grads.len() > 1)
        .map(|t| t.grads.len())
        .collect();
    let total: usize = radices
        .iter()
        .try_fold(1usize, |acc, &r| acc.checked_mul(r))
        .unwrap_or(usize::MAX);
    let count = total.min(tuple_cap);

    let (outer_obj, outer_con) = match &problem.outer {
        Some(m) => (Some(m.g.clone()), Some(m.r.clone())),
        None => (None, None),
    };

    let mut models = Vec::with_capacity(count);
    let mut anchors = Vec::with_capacity(count);
    for a in 0..count {
        // decode `a` into one choice per tied component, last component fastest
        let mut digits = vec![0usize; radices.len()];
        let mut rem = a;
        for (d, &r) in digits.iter_mut().zip(&radices).rev() {
            *d = rem % r;
            rem /= r;
        }
        let mut it = digits.iter();
        let mut pick = || *it.next().expect("one digit per tied component");
        let obj_groups = realize_groups(&obj_t, center, &mut pick);
        let con_groups = realize_groups(&con_t, center, &mut pick);
        models.push(ConvexModel {
            obj_groups,
            con_groups,
            outer_obj: outer_obj.clone(),
            outer_con: outer_con.clone(),
            tau,
        });
        anchors.push(ModelAnchor::Tuple(a));
    }

    Ok(ModelFamily { center: center.to_vec(), h_center, tau, anchors, models })
}

/// Model family for a problem in plain sum-max form.
pub fn build_summax_family(
    problem: &CompositeProblem,
    center: &[f64],
    tuple_cap: usize,
) -> Result<ModelFamily> {
    if problem.outer.is_some() {
        return Err(Error::Precondition(
            "problem has outer maps; use build_composite_family".into(),
        ));
    }
    build_linearized_family(problem, center, tuple_cap)
}

/// Model family for the composite form (outer maps applied per group).
///
/// The outer maps must be nondecreasing; this is spot-checked on a sample of
/// arguments around the group values at the center.
pub fn build_composite_family(
    problem: &CompositeProblem,
    center: &[f64],
    tuple_cap: usize,
) -> Result<ModelFamily> {
    let maps = problem.outer.as_ref().ok_or_else(|| {
        Error::Precondition("problem has no outer maps; use build_summax_family".into())
    })?;
    for (name, map) in [("G", &maps.g), ("R", &maps.r)] {
        let mut prev = f64::NEG_INFINITY;
        for i in -3..=3 {
            let t = i as f64;
            let (v, d) = map.value_deriv(t);
            if d < -1e-12 || v < prev - 1e-12 {
                return Err(Error::OracleContract(format!(
                    "outer map {name} is decreasing near t = {t}"
                )));
            }
            prev = v;
        }
    }
    build_linearized_family(problem, center, tuple_cap)
}

/// Builder over a sum-max or composite problem (dispatches on the presence
/// of outer maps).
pub struct LinearizationBuilder<'a> {
    pub problem: &'a CompositeProblem,
    pub tuple_cap: usize,
}

impl ModelBuilder for LinearizationBuilder<'_> {
    fn build(&self, center: &[f64]) -> Result<ModelFamily> {
        if self.problem.outer.is_some() {
            build_composite_family(self.problem, center, self.tuple_cap)
        } else {
            build_summax_family(self.problem, center, self.tuple_cap)
        }
    }
}
