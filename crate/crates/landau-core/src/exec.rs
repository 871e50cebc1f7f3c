//! Deterministic parallel reductions.
//!
//! Sums are accumulated per fixed-size chunk and the chunk partials are added
//! in index order, so results are bitwise identical for any thread count.

use rayon::prelude::*;
use std::sync::atomic::{AtomicBool, Ordering};

const CHUNK: usize = 4096;

static SEQUENTIAL: AtomicBool = AtomicBool::new(false);

/// Force sequential execution of all reductions (used by `--deterministic`).
/// Chunked parallel reductions are already bit-stable; the sequential mode is
/// the reference order they are checked against.
pub fn set_sequential(on: bool) {
    SEQUENTIAL.store(on, Ordering::SeqCst);
}

pub fn sequential() -> bool {
    SEQUENTIAL.load(Ordering::SeqCst)
}

/// Sum `term(i)` for `i in 0..n` with a fixed chunked association order.
pub fn par_sum<F>(n: usize, term: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    if sequential() || n < 2 * CHUNK {
        return (0..n).map(term).sum();
    }
    let chunks: Vec<f64> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(n);
            (lo..hi).map(&term).sum::<f64>()
        })
        .collect();
    chunks.iter().sum()
}

/// Sum a pair of accumulators in one sweep.
pub fn par_sum2<F>(n: usize, term: F) -> (f64, f64)
where
    F: Fn(usize) -> (f64, f64) + Sync,
{
    if sequential() || n < 2 * CHUNK {
        let mut a = 0.0;
        let mut b = 0.0;
        for i in 0..n {
            let (x, y) = term(i);
            a += x;
            b += y;
        }
        return (a, b);
    }
    let chunks: Vec<(f64, f64)> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(n);
            let mut a = 0.0;
            let mut b = 0.0;
            for i in lo..hi {
                let (x, y) = term(i);
                a += x;
                b += y;
            }
            (a, b)
        })
        .collect();
    let mut a = 0.0;
    let mut b = 0.0;
    for (x, y) in chunks {
        a += x;
        b += y;
    }
    (a, b)
}

/// Sum a fixed-length vector of accumulators in one sweep.
pub fn par_sum_vec<const K: usize, F>(n: usize, term: F) -> [f64; K]
where
    F: Fn(usize) -> [f64; K] + Sync,
{
    let add = |mut a: [f64; K], b: [f64; K]| {
        for k in 0..K {
            a[k] += b[k];
        }
        a
    };
    if sequential() || n < 2 * CHUNK {
        return (0..n).map(term).fold([0.0; K], add);
    }
    let chunks: Vec<[f64; K]> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(n);
            (lo..hi).map(&term).fold([0.0; K], add)
        })
        .collect();
    chunks.into_iter().fold([0.0; K], add)
}

/// Fill `out[i] = value(i)` in parallel. Element writes are independent, so
/// the result does not depend on scheduling.
pub fn par_fill<T, F>(out: &mut [T], value: F)
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    if sequential() || out.len() < 2 * CHUNK {
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = value(i);
        }
        return;
    }
    out.par_iter_mut().enumerate().for_each(|(i, slot)| {
        *slot = value(i);
    });
}
