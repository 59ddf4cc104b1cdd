//! The convex closed feasible set `X`: box bounds plus optional linear
//! inequalities `A x <= b`. Absent bounds are IEEE infinities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::dot;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearIneq {
    pub coeffs: Vec<f64>,
    pub bound: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeasibleSet {
    dim: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    linear: Vec<LinearIneq>,
}

pub const DEFAULT_MEMBERSHIP_TOL: f64 = 1e-9;

impl FeasibleSet {
    pub fn free(dim: usize) -> Self {
        Self {
            dim,
            lower: vec![f64::NEG_INFINITY; dim],
            upper: vec![f64::INFINITY; dim],
            linear: Vec::new(),
        }
    }

    pub fn bounded(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Config("bound vectors of different length".into()));
        }
        for (i, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if l > u {
                return Err(Error::InfeasibleSet(format!(
                    "lower[{i}] = {l} > upper[{i}] = {u}"
                )));
            }
            if l.is_nan() || u.is_nan() {
                return Err(Error::Config(format!("NaN bound at index {i}")));
            }
        }
        Ok(Self {
            dim: lower.len(),
            lower,
            upper,
            linear: Vec::new(),
        })
    }

    pub fn with_linear(mut self, rows: Vec<LinearIneq>) -> Result<Self> {
        for (i, r) in rows.iter().enumerate() {
            if r.coeffs.len() != self.dim {
                return Err(Error::Config(format!(
                    "linear row {i} has {} coefficients, expected {}",
                    r.coeffs.len(),
                    self.dim
                )));
            }
        }
        self.linear = rows;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn linear(&self) -> &[LinearIneq] {
        &self.linear
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        if x.len() != self.dim {
            return false;
        }
        for i in 0..self.dim {
            if x[i] < self.lower[i] - tol || x[i] > self.upper[i] + tol {
                return false;
            }
        }
        self.linear
            .iter()
            .all(|r| dot(&r.coeffs, x) <= r.bound + tol)
    }

    /// Componentwise clip onto the box part of the set.
    pub fn clip_to_box(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, &v)| v.clamp(self.lower[i], self.upper[i]))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn membership_with_tolerance() {
        let set = FeasibleSet::bounded(vec![0.0, -1.0], vec![1.0, f64::INFINITY]).unwrap();
        assert!(set.contains(&[0.5, 100.0], 1e-9));
        assert!(set.contains(&[1.0 + 1e-10, 0.0], 1e-9));
        assert!(!set.contains(&[1.1, 0.0], 1e-9));
    }

    #[test]
    fn inverted_bounds_rejected() {
        assert!(FeasibleSet::bounded(vec![1.0], vec![0.0]).is_err());
    }

    #[test]
    fn linear_rows_checked() {
        let set = FeasibleSet::bounded(vec![-10.0, -10.0], vec![10.0, 10.0])
            .unwrap()
            .with_linear(vec![LinearIneq {
                coeffs: vec![1.0, 1.0],
                bound: 1.0,
            }])
            .unwrap();
        assert!(set.contains(&[0.5, 0.5], 1e-9));
        assert!(!set.contains(&[1.0, 1.0], 1e-9));
    }
}
