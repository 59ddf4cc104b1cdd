//! Solver library for nonsmooth nonconvex constrained minimization
//! `min f(x)  s.t.  c(x) <= 0,  x in X`.
//!
//! The outer loop ([`prox::solve`]) is a proximal method on the improvement
//! function `H(y;x) = max{f(y) - tau_f(x), c(y)}`. At each center it minimizes
//! a nonconvex model built as the pointwise minimum of finitely many convex
//! models, each handled by a prox-form bundle method ([`bundle::inner_solve`])
//! whose cutting-plane subproblems are strictly convex QPs
//! ([`qp::solve_prox_cut_qp`]).
//!
//! Three model families are available ([`models`]): sum-max linearization,
//! epsilon-active DC, and composite (convex nondecreasing outer maps). The
//! [`problems`] module builds the stochastic reliability instances (gas
//! network chance constraint, cantilever beam buffered probability).

pub mod bundle;
pub mod dc;
pub mod error;
pub mod linalg;
pub mod models;
pub mod oracle;
pub mod problem;
pub mod problems;
pub mod prox;
pub mod qp;
pub mod set;

pub use error::{Error, Result};
pub use problem::{default_rho, descent_test, eval_improvement, CompositeProblem};
pub use prox::{solve, OuterParams, SolveReport};
pub use set::FeasibleSet;
