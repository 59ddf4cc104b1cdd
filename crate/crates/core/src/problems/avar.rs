//! Empirical Average Value-at-Risk (AVaR / CVaR) of a discrete distribution:
//!
//! ```text
//!   AVaR_alpha(xi) = min_t  t + (1 / (1 - alpha)) * E[ (xi - t)_+ ]
//! ```
//!
//! The minimizing `t` is an alpha-quantile; on ties the leftmost minimizer is
//! returned. For uniform probabilities the quantile is found by selection
//! instead of sorting, which matters for the grid-search baseline.

use crate::error::{Error, Result};
use crate::linalg::chunked_sum;

/// Returns `(avar, t_star)` for the discrete distribution `(values, probs)`;
/// `probs = None` means uniform. `t_star` is the leftmost minimizer.
pub fn empirical_avar(values: &[f64], probs: Option<&[f64]>, alpha: f64) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::Empty("empirical_avar of no values".into()));
    }
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(Error::Config(format!("alpha = {alpha} not in (0,1)")));
    }
    match probs {
        None => {
            let mut buf = values.to_vec();
            Ok(avar_uniform_inplace(&mut buf, alpha))
        }
        Some(p) => {
            if p.len() != values.len() {
                return Err(Error::Config("probs/values length mismatch".into()));
            }
            let total: f64 = p.iter().sum();
            if (total - 1.0).abs() > 1e-12 || p.iter().any(|&v| v < 0.0) {
                return Err(Error::Config("probs must be nonnegative and sum to 1".into()));
            }
            Ok(avar_weighted(values, p, alpha))
        }
    }
}

/// Uniform-probability AVaR; scrambles `values` (selection), no allocation.
///
/// The leftmost minimizer is the order statistic at ascending index
/// `n - k - 1` with `k = floor(n (1 - alpha))`: it is the smallest value `v`
/// with `P(xi > v) <= 1 - alpha`.
pub fn avar_uniform_inplace(values: &mut [f64], alpha: f64) -> (f64, f64) {
    let n = values.len();
    let k = ((n as f64) * (1.0 - alpha)).floor() as usize;
    let idx = n - k.min(n - 1) - 1;
    let (_, t, _) = values.select_nth_unstable_by(idx, f64::total_cmp);
    let t = *t;
    let excess = chunked_sum(n, |j| (values[j] - t).max(0.0)) / n as f64;
    (t + excess / (1.0 - alpha), t)
}

fn avar_weighted(values: &[f64], probs: &[f64], alpha: f64) -> (f64, f64) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    // leftmost minimizer: smallest v with P(xi > v) <= 1 - alpha,
    // scanning descending and accumulating the strict tail probability
    let thr = 1.0 - alpha;
    let mut t = values[*order.last().expect("nonempty")];
    let mut tail = 0.0; // P(xi > t)
    for w in order.windows(2).rev() {
        let (lo, hi) = (values[w[0]], values[w[1]]);
        tail += probs[w[1]];
        if lo < hi {
            // candidate t = lo has strict tail `tail`
            if tail <= thr {
                t = lo;
            } else {
                break;
            }
        }
    }
    let excess = chunked_sum(values.len(), |j| probs[j] * (values[j] - t).max(0.0));
    (t + excess / (1.0 - alpha), t)
}
