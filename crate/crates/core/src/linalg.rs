//! Small dense vector helpers and the deterministic summation scheme used by
//! scenario sweeps.
//!
//! All scenario-indexed reductions follow one documented order: Neumaier
//! compensated summation inside fixed chunks of [`SUM_CHUNK`] elements, then
//! Neumaier over the per-chunk sums in chunk order. Chunk boundaries depend
//! only on the index, so results are bit-identical regardless of how many
//! threads evaluate the chunks.

use rayon::prelude::*;

/// Fixed chunk width for deterministic parallel reductions.
pub const SUM_CHUNK: usize = 1024;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add_scaled(acc: &mut [f64], scale: f64, v: &[f64]) {
    for (a, x) in acc.iter_mut().zip(v) {
        *a += scale * x;
    }
}

/// Neumaier-compensated sum of a slice, sequential.
fn neumaier(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Deterministic chunked compensated sum of `f(i)` for `i in 0..n`.
///
/// Parallelizes over chunks; the combination order is fixed by chunk index,
/// so the result does not depend on the rayon thread count.
pub fn chunked_sum<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    if n == 0 {
        return 0.0;
    }
    let n_chunks = n.div_ceil(SUM_CHUNK);
    if n_chunks == 1 {
        return neumaier((0..n).map(&f));
    }
    let partials: Vec<f64> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * SUM_CHUNK;
            let hi = (lo + SUM_CHUNK).min(n);
            neumaier((lo..hi).map(&f))
        })
        .collect();
    neumaier(partials.into_iter())
}

/// Deterministic chunked accumulation of dense vectors: sums `f(i)` applied
/// into a per-chunk buffer, then adds chunk buffers in chunk order.
///
/// `f(i, buf)` must add term `i`'s contribution into `buf`.
pub fn chunked_accumulate<F>(n: usize, dim: usize, f: F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    let n_chunks = n.div_ceil(SUM_CHUNK).max(1);
    if n_chunks <= 1 {
        let mut buf = vec![0.0; dim];
        for i in 0..n {
            f(i, &mut buf);
        }
        return buf;
    }
    let partials: Vec<Vec<f64>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * SUM_CHUNK;
            let hi = (lo + SUM_CHUNK).min(n);
            let mut buf = vec![0.0; dim];
            for i in lo..hi {
                f(i, &mut buf);
            }
            buf
        })
        .collect();
    let mut out = vec![0.0; dim];
    for p in partials {
        add_scaled(&mut out, 1.0, &p);
    }
    out
}
