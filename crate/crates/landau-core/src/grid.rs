//! Uniform cubic velocity grid `[-v_max, v_max]^3`.
//!
//! Nodes sit at `v_k = -v_max + k h` with `h = 2 v_max / (n - 1)` per axis.
//! Quadrature weights are the tensor product of the 1-d trapezoid rule:
//! `h` at interior nodes, `h/2` at the two axis endpoints. For fields that
//! decay well inside the box this is the plain midpoint sum, which on
//! Gaussian-type integrands converges faster than any power of `h`.

use crate::{Error, Result};
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq)]
pub struct CubicGrid {
    n: usize,
    v_max: f64,
    h: f64,
    axis: Vec<f64>,
    axis_w: Vec<f64>,
    /// Flat index of the node at `v = 0` (only present for odd `n`).
    origin: Option<usize>,
}

impl CubicGrid {
    pub fn new(n: usize, v_max: f64) -> Result<Arc<Self>> {
        if n < 8 {
            return Err(Error::Grid(format!("n_per_axis = {n} below minimum 8")));
        }
        if !(v_max.is_finite() && v_max > 0.0) {
            return Err(Error::Grid(format!("v_max = {v_max} must be positive")));
        }
        let h = 2.0 * v_max / (n - 1) as f64;
        let axis: Vec<f64> = (0..n).map(|k| -v_max + k as f64 * h).collect();
        let mut axis_w = vec![h; n];
        axis_w[0] = 0.5 * h;
        axis_w[n - 1] = 0.5 * h;
        let origin = if n % 2 == 1 {
            let mid = (n - 1) / 2;
            Some((mid * n + mid) * n + mid)
        } else {
            None
        };
        Ok(Arc::new(Self {
            n,
            v_max,
            h,
            axis,
            axis_w,
            origin,
        }))
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn v_max(&self) -> f64 {
        self.v_max
    }

    #[inline]
    pub fn h(&self) -> f64 {
        self.h
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn flat(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n + j) * self.n + k
    }

    #[inline]
    pub fn unflat(&self, idx: usize) -> (usize, usize, usize) {
        let k = idx % self.n;
        let j = (idx / self.n) % self.n;
        let i = idx / (self.n * self.n);
        (i, j, k)
    }

    #[inline]
    pub fn coord(&self, idx: usize) -> [f64; 3] {
        let (i, j, k) = self.unflat(idx);
        [self.axis[i], self.axis[j], self.axis[k]]
    }

    #[inline]
    pub fn weight(&self, idx: usize) -> f64 {
        let (i, j, k) = self.unflat(idx);
        self.axis_w[i] * self.axis_w[j] * self.axis_w[k]
    }

    #[inline]
    pub fn axis(&self) -> &[f64] {
        &self.axis
    }

    /// Flat index of the exact origin node, when one exists (odd `n`).
    #[inline]
    pub fn origin_node(&self) -> Option<usize> {
        self.origin
    }

    /// Whether the node index carries a vanishing velocity, where `|v|^-1`
    /// weights and the radial projector are undefined.
    #[inline]
    pub fn is_origin(&self, idx: usize) -> bool {
        self.origin == Some(idx)
    }

    /// Distance in node layers to the nearest box face.
    #[inline]
    pub fn face_distance(&self, idx: usize) -> usize {
        let (i, j, k) = self.unflat(idx);
        let d = |p: usize| p.min(self.n - 1 - p);
        d(i).min(d(j)).min(d(k))
    }

    pub fn same_layout(&self, other: &CubicGrid) -> bool {
        self.n == other.n && self.v_max == other.v_max
    }

    /// Quadrature of a scalar field given by node values.
    pub fn integrate(&self, values: &[f64]) -> Result<f64> {
        self.integrate_weighted(values, |_, _| 1.0)
    }

    /// Quadrature of `values[idx] * factor(idx, v)`.
    pub fn integrate_weighted<F>(&self, values: &[f64], factor: F) -> Result<f64>
    where
        F: Fn(usize, [f64; 3]) -> f64 + Sync,
    {
        if values.len() != self.len() {
            return Err(Error::Grid(format!(
                "field length {} does not match grid size {}",
                values.len(),
                self.len()
            )));
        }
        let sum = crate::exec::par_sum(self.len(), |idx| {
            let t = values[idx] * factor(idx, self.coord(idx)) * self.weight(idx);
            if t.is_finite() {
                t
            } else {
                f64::NAN
            }
        });
        if !sum.is_finite() {
            // locate the first offender for the error message
            for idx in 0..self.len() {
                let t = values[idx] * factor(idx, self.coord(idx));
                if !t.is_finite() {
                    return Err(Error::NonFinite {
                        node: idx,
                        context: "integrate".into(),
                    });
                }
            }
            return Err(Error::NonFinite {
                node: 0,
                context: "integrate (overflowing sum)".into(),
            });
        }
        Ok(sum)
    }
}
