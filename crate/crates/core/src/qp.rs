//! Strictly convex prox cutting-plane QP
//!
//! ```text
//!   min_{x in X}  max_j { v_j + <s_j, x - y_j> }  +  (mu/2) ||x - center||^2
//! ```
//!
//! solved in epigraph form over `(x, r)` with a primal active-set method.
//! Dimensions are small (n up to a few dozen, cuts up to a few hundred), so
//! dense linear algebra on the KKT system is adequate and reaches the
//! residual contract `<= 1e-9 * (1 + ||center||)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm};
use crate::set::FeasibleSet;

/// Multiplier threshold above which a cut counts as active.
pub const ACTIVE_MULTIPLIER_TOL: f64 = 1e-10;

/// Tolerance for deduplicating cuts by (slope, intercept).
const DEDUP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CutOrigin {
    Ordinary,
    Aggregate,
}

/// One affine minorant `x -> value + <slope, x - anchor>` of a convex model.
#[derive(Debug, Clone)]
pub struct Cut {
    pub anchor: Vec<f64>,
    pub value: f64,
    pub slope: Vec<f64>,
    pub origin: CutOrigin,
}

impl Cut {
    pub fn intercept(&self) -> f64 {
        self.value - dot(&self.slope, &self.anchor)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.value + dot(&self.slope, x) - dot(&self.slope, &self.anchor)
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub minimizer: Vec<f64>,
    /// Optimal cutting-plane model value `r* = max_j cut_j(x*)`.
    pub model_value: f64,
    /// One multiplier per input cut (duplicates get 0); sums to 1.
    pub cut_multipliers: Vec<f64>,
    pub lower_multipliers: Vec<f64>,
    pub upper_multipliers: Vec<f64>,
    pub linear_multipliers: Vec<f64>,
    pub kkt_residual: f64,
    /// Indices of cuts with multiplier above [`ACTIVE_MULTIPLIER_TOL`].
    pub active_cuts: Vec<usize>,
}

impl QpSolution {
    /// Aggregate linearization of the solved model at the minimizer:
    /// anchor `x*`, value `r*`, slope `mu (center - x*)`. It minorizes the
    /// cutting-plane model (and hence the convex model) on `X`.
    pub fn aggregate_cut(&self, mu: f64, center: &[f64]) -> Cut {
        let slope = center
            .iter()
            .zip(&self.minimizer)
            .map(|(c, x)| mu * (c - x))
            .collect();
        Cut {
            anchor: self.minimizer.clone(),
            value: self.model_value,
            slope,
            origin: CutOrigin::Aggregate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CIdx {
    Cut(usize),
    Linear(usize),
    Lower(usize),
    Upper(usize),
}

struct Workspace<'a> {
    n: usize,
    mu: f64,
    center: &'a [f64],
    /// deduplicated cuts as (intercept, slope)
    cut_intercepts: Vec<f64>,
    cut_slopes: Vec<&'a [f64]>,
    set: &'a FeasibleSet,
}

impl Workspace<'_> {
    /// Row `a` and bound `b` of constraint `a . (x, r) <= b`.
    fn row(&self, c: CIdx) -> (Vec<f64>, f64) {
        let n = self.n;
        let mut a = vec![0.0; n + 1];
        match c {
            CIdx::Cut(j) => {
                a[..n].copy_from_slice(self.cut_slopes[j]);
                a[n] = -1.0;
                (a, -self.cut_intercepts[j])
            }
            CIdx::Linear(i) => {
                let r = &self.set.linear()[i];
                a[..n].copy_from_slice(&r.coeffs);
                (a, r.bound)
            }
            CIdx::Lower(i) => {
                a[i] = -1.0;
                (a, -self.set.lower()[i])
            }
            CIdx::Upper(i) => {
                a[i] = 1.0;
                (a, self.set.upper()[i])
            }
        }
    }

    fn all_constraints(&self) -> Vec<CIdx> {
        let mut out: Vec<CIdx> = (0..self.cut_slopes.len()).map(CIdx::Cut).collect();
        out.extend((0..self.set.linear().len()).map(CIdx::Linear));
        for i in 0..self.n {
            if self.set.lower()[i].is_finite() {
                out.push(CIdx::Lower(i));
            }
            if self.set.upper()[i].is_finite() {
                out.push(CIdx::Upper(i));
            }
        }
        out
    }

    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.n + 1];
        for i in 0..self.n {
            g[i] = self.mu * (z[i] - self.center[i]);
        }
        g[self.n] = 1.0;
        g
    }

    /// Objective of the EQP direction problem solved at each step:
    /// min 0.5 p'Hp + g'p  s.t.  A p = 0, via the dense KKT system.
    /// Returns (direction p, multipliers for working rows).
    fn eqp_step(&self, z: &[f64], working: &[CIdx]) -> Result<(Vec<f64>, Vec<f64>)> {
        let n1 = self.n + 1;
        let k = working.len();
        let dim = n1 + k;
        let mut m = DMatrix::<f64>::zeros(dim, dim);
        for i in 0..self.n {
            m[(i, i)] = self.mu;
        }
        // H[r,r] = 0
        for (wi, &c) in working.iter().enumerate() {
            let (a, _) = self.row(c);
            for i in 0..n1 {
                m[(i, n1 + wi)] = a[i];
                m[(n1 + wi, i)] = a[i];
            }
        }
        let g = self.gradient(z);
        let mut rhs = DVector::<f64>::zeros(dim);
        for i in 0..n1 {
            rhs[i] = -g[i];
        }
        let sol = m
            .full_piv_lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Internal("singular KKT system in prox QP".into()))?;
        let p = sol.as_slice()[..n1].to_vec();
        let mul = sol.as_slice()[n1..].to_vec();
        Ok((p, mul))
    }
}

/// Solves the prox cutting-plane QP over `X`.
///
/// `center` must lie in `X`; cuts must be nonempty and `mu > 0`.
pub fn solve_prox_cut_qp(
    cuts: &[Cut],
    mu: f64,
    center: &[f64],
    set: &FeasibleSet,
) -> Result<QpSolution> {
    let n = set.dim();
    if cuts.is_empty() {
        return Err(Error::Empty("no cuts given to prox QP".into()));
    }
    if !(mu > 0.0) {
        return Err(Error::Config(format!("mu = {mu} must be > 0")));
    }
    if center.len() != n || center.iter().any(|v| !v.is_finite()) {
        return Err(Error::Precondition("center not a finite vector of set dimension".into()));
    }
    for (i, (l, u)) in set.lower().iter().zip(set.upper()).enumerate() {
        if l > u {
            return Err(Error::InfeasibleSet(format!("bounds cross at index {i}")));
        }
    }
    if !set.contains(center, 1e-7 * (1.0 + norm(center))) {
        return Err(Error::Precondition("center outside the feasible set".into()));
    }

    // Deduplicate cuts by (slope, intercept); duplicates map onto their
    // representative so active sets stay nonsingular.
    let mut rep: Vec<usize> = Vec::with_capacity(cuts.len()); // input -> dedup index
    let mut kept: Vec<usize> = Vec::new(); // dedup index -> input index
    for (i, c) in cuts.iter().enumerate() {
        let ic = c.intercept();
        let found = kept.iter().position(|&kj| {
            let kcut = &cuts[kj];
            (kcut.intercept() - ic).abs() <= DEDUP_TOL
                && kcut
                    .slope
                    .iter()
                    .zip(&c.slope)
                    .all(|(a, b)| (a - b).abs() <= DEDUP_TOL)
        });
        match found {
            Some(pos) => rep.push(pos),
            None => {
                kept.push(i);
                rep.push(kept.len() - 1);
            }
        }
    }

    let ws = Workspace {
        n,
        mu,
        center,
        cut_intercepts: kept.iter().map(|&i| cuts[i].intercept()).collect(),
        cut_slopes: kept.iter().map(|&i| cuts[i].slope.as_slice()).collect(),
        set,
    };

    // Feasible start: x = center (in X by precondition, clipped for safety),
    // r = max cut value there; working set = one argmax cut.
    let x0 = set.clip_to_box(center);
    let cut_vals: Vec<f64> = (0..kept.len())
        .map(|j| ws.cut_intercepts[j] + dot(ws.cut_slopes[j], &x0))
        .collect();
    let (argmax, &rmax) = cut_vals
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty cuts");
    let mut z: Vec<f64> = x0;
    z.push(rmax);
    let mut working: Vec<CIdx> = vec![CIdx::Cut(argmax)];

    let all = ws.all_constraints();
    let scale = 1.0 + norm(center);
    let step_tol = 1e-12 * scale;
    let cap = 100 + 10 * all.len();

    let mut final_multipliers: Vec<f64> = Vec::new();
    let mut converged = false;
    for _iter in 0..cap {
        let (p, mul) = ws.eqp_step(&z, &working)?;
        let pmax = p.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if pmax <= step_tol {
            // stationary on the working set; check multiplier signs
            let (min_idx, min_val) = mul
                .iter()
                .enumerate()
                .fold((usize::MAX, f64::INFINITY), |(bi, bv), (i, &v)| {
                    if v < bv {
                        (i, v)
                    } else {
                        (bi, bv)
                    }
                });
            if min_val >= -ACTIVE_MULTIPLIER_TOL {
                final_multipliers = mul;
                converged = true;
                break;
            }
            working.remove(min_idx);
        } else {
            // ratio test against constraints outside the working set
            let mut alpha = 1.0f64;
            let mut blocking: Option<CIdx> = None;
            for &c in &all {
                if working.contains(&c) {
                    continue;
                }
                let (a, b) = ws.row(c);
                let denom = dot(&a, &p);
                if denom > 1e-13 * scale.max(1.0) {
                    let slack = (b - dot(&a, &z)).max(0.0);
                    let step = slack / denom;
                    if step < alpha {
                        alpha = step;
                        blocking = Some(c);
                    }
                }
            }
            for (zi, pi) in z.iter_mut().zip(&p) {
                *zi += alpha * pi;
            }
            if let Some(c) = blocking {
                working.push(c);
            }
        }
    }

    // Assemble full multiplier vectors (dedup space -> input space).
    let mut cut_mul_dedup = vec![0.0; kept.len()];
    let mut lower_mul = vec![0.0; n];
    let mut upper_mul = vec![0.0; n];
    let mut linear_mul = vec![0.0; set.linear().len()];
    for (wi, &c) in working.iter().enumerate() {
        let v = final_multipliers.get(wi).copied().unwrap_or(0.0);
        match c {
            CIdx::Cut(j) => cut_mul_dedup[j] = v,
            CIdx::Linear(i) => linear_mul[i] = v,
            CIdx::Lower(i) => lower_mul[i] = v,
            CIdx::Upper(i) => upper_mul[i] = v,
        }
    }
    let cut_multipliers: Vec<f64> = rep
        .iter()
        .enumerate()
        .map(|(i, &d)| if kept[d] == i { cut_mul_dedup[d] } else { 0.0 })
        .collect();

    // KKT residual over ALL constraints.
    let g = ws.gradient(&z);
    let mut stationarity = g;
    let mut primal = 0.0f64;
    let mut compl = 0.0f64;
    let mut dual = 0.0f64;
    for &c in &all {
        let (a, b) = ws.row(c);
        let m = match c {
            CIdx::Cut(j) => cut_mul_dedup[j],
            CIdx::Linear(i) => linear_mul[i],
            CIdx::Lower(i) => lower_mul[i],
            CIdx::Upper(i) => upper_mul[i],
        };
        let slack = dot(&a, &z) - b;
        primal = primal.max(slack);
        compl = compl.max((m * slack).abs());
        dual = dual.max(-m);
        for (si, ai) in stationarity.iter_mut().zip(&a) {
            *si += m * ai;
        }
    }
    let stat = stationarity.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let kkt_residual = stat.max(primal).max(compl).max(dual);

    let tolerance = 1e-9 * scale;
    if !converged || kkt_residual > tolerance {
        return Err(Error::QpAccuracy {
            residual: kkt_residual,
            tolerance,
            iterations: cap,
            best: z[..n].to_vec(),
        });
    }

    let active_cuts = cut_multipliers
        .iter()
        .enumerate()
        .filter(|(_, &m)| m > ACTIVE_MULTIPLIER_TOL)
        .map(|(i, _)| i)
        .collect();

    Ok(QpSolution {
        minimizer: z[..n].to_vec(),
        model_value: z[n],
        cut_multipliers,
        lower_multipliers: lower_mul,
        upper_multipliers: upper_mul,
        linear_multipliers: linear_mul,
        kkt_residual,
        active_cuts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cut(anchor: Vec<f64>, value: f64, slope: Vec<f64>) -> Cut {
        Cut { anchor, value, slope, origin: CutOrigin::Ordinary }
    }

    #[test]
    fn prox_of_constant_is_center() {
        let set = FeasibleSet::free(2);
        let sol = solve_prox_cut_qp(
            &[cut(vec![0.5, -0.5], 0.0, vec![0.0, 0.0])],
            1.0,
            &[0.5, -0.5],
            &set,
        )
        .unwrap();
        assert!(norm(&crate::linalg::sub(&sol.minimizer, &[0.5, -0.5])) < 1e-10);
        assert!(sol.model_value.abs() < 1e-10);
    }

    #[test]
    fn prox_of_affine_closed_form() {
        // single cut slope g, free X: x* = center - g/mu
        let center = [1.0, 2.0, -1.0];
        let g = [0.5, -1.0, 2.0];
        let mu = 4.0;
        let set = FeasibleSet::free(3);
        let sol = solve_prox_cut_qp(&[cut(center.to_vec(), 3.0, g.to_vec())], mu, &center, &set)
            .unwrap();
        for i in 0..3 {
            assert!((sol.minimizer[i] - (center[i] - g[i] / mu)).abs() < 1e-10);
        }
        assert!((sol.cut_multipliers[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn box_clipping() {
        // slope -1, center 0, X = [-0.2, 0.2], mu = 1 -> unconstrained 1, clipped to 0.2
        let set = FeasibleSet::bounded(vec![-0.2], vec![0.2]).unwrap();
        let sol =
            solve_prox_cut_qp(&[cut(vec![0.0], 0.0, vec![-1.0])], 1.0, &[0.0], &set).unwrap();
        assert!((sol.minimizer[0] - 0.2).abs() < 1e-10);
    }

    #[test]
    fn duplicate_cuts_share_representative() {
        let set = FeasibleSet::free(1);
        let c = cut(vec![0.0], 0.0, vec![1.0]);
        let sol = solve_prox_cut_qp(&[c.clone(), c.clone(), c], 1.0, &[0.0], &set).unwrap();
        assert!((sol.minimizer[0] + 1.0).abs() < 1e-10);
        assert!((sol.cut_multipliers.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(sol.cut_multipliers[1], 0.0);
        assert_eq!(sol.cut_multipliers[2], 0.0);
    }

    #[test]
    fn two_cut_kink() {
        // max{x, -x} = |x|, center 1, mu = 1: prox of |.| -> x* = 0? prox_|.|(1) = 0 for mu=1
        let set = FeasibleSet::free(1);
        let cuts = [cut(vec![0.0], 0.0, vec![1.0]), cut(vec![0.0], 0.0, vec![-1.0])];
        let sol = solve_prox_cut_qp(&cuts, 1.0, &[1.0], &set).unwrap();
        assert!(sol.minimizer[0].abs() < 1e-10);
        let msum: f64 = sol.cut_multipliers.iter().sum();
        assert!((msum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_inputs() {
        let set = FeasibleSet::free(1);
        assert!(solve_prox_cut_qp(&[], 1.0, &[0.0], &set).is_err());
        let c = cut(vec![0.0], 0.0, vec![1.0]);
        assert!(solve_prox_cut_qp(&[c.clone()], 0.0, &[0.0], &set).is_err());
        let box_set = FeasibleSet::bounded(vec![0.0], vec![1.0]).unwrap();
        assert!(solve_prox_cut_qp(&[c], 1.0, &[5.0], &box_set).is_err());
    }
}
