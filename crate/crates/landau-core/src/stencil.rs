//! Fourth-order finite differences on the cubic grid.
//!
//! Interior nodes use the five-point central stencil
//! `(f_{-2} - 8 f_{-1} + 8 f_{+1} - f_{+2}) / (12h)`; the two outermost
//! layers per axis use one-sided five-point stencils of the same order.
//! All stencils are exact on polynomials of degree <= 4.

use crate::exec::par_fill;
use crate::grid::CubicGrid;
use crate::{Error, Result};

/// (offset, coefficient * 12h) rows for the five stencil positions.
const EDGE0: [(isize, f64); 5] = [(0, -25.0), (1, 48.0), (2, -36.0), (3, 16.0), (4, -3.0)];
const EDGE1: [(isize, f64); 5] = [(-1, -3.0), (0, -10.0), (1, 18.0), (2, -6.0), (3, 1.0)];
const CENTRAL: [(isize, f64); 5] = [(-2, 1.0), (-1, -8.0), (1, 8.0), (2, -1.0), (0, 0.0)];
const EDGE2: [(isize, f64); 5] = [(-3, -1.0), (-2, 6.0), (-1, -18.0), (0, 10.0), (1, 3.0)];
const EDGE3: [(isize, f64); 5] = [(-4, 3.0), (-3, -16.0), (-2, 36.0), (-1, -48.0), (0, 25.0)];

#[inline]
fn row(pos: usize, n: usize) -> &'static [(isize, f64); 5] {
    if pos == 0 {
        &EDGE0
    } else if pos == 1 {
        &EDGE1
    } else if pos + 2 == n {
        &EDGE2
    } else if pos + 1 == n {
        &EDGE3
    } else {
        &CENTRAL
    }
}

/// Partial derivative of a scalar field along one axis (0, 1, or 2).
pub fn derivative_axis(grid: &CubicGrid, values: &[f64], axis: usize) -> Result<Vec<f64>> {
    if values.len() != grid.len() {
        return Err(Error::Grid(format!(
            "field length {} does not match grid size {}",
            values.len(),
            grid.len()
        )));
    }
    if axis > 2 {
        return Err(Error::Grid(format!("axis {axis} out of range")));
    }
    let n = grid.n();
    let stride: isize = match axis {
        0 => (n * n) as isize,
        1 => n as isize,
        _ => 1,
    };
    let scale = 1.0 / (12.0 * grid.h());
    let mut out = vec![0.0; values.len()];
    par_fill(&mut out, |idx| {
        let (i, j, k) = grid.unflat(idx);
        let pos = match axis {
            0 => i,
            1 => j,
            _ => k,
        };
        let mut acc = 0.0;
        for &(off, c) in row(pos, n) {
            if c != 0.0 {
                acc += c * values[(idx as isize + off * stride) as usize];
            }
        }
        acc * scale
    });
    Ok(out)
}

/// Gradient of a scalar field, one `[f64; 3]` per node.
pub fn gradient(grid: &CubicGrid, values: &[f64]) -> Result<Vec<[f64; 3]>> {
    let dx = derivative_axis(grid, values, 0)?;
    let dy = derivative_axis(grid, values, 1)?;
    let dz = derivative_axis(grid, values, 2)?;
    let mut out = vec![[0.0; 3]; values.len()];
    par_fill(&mut out, |idx| [dx[idx], dy[idx], dz[idx]]);
    Ok(out)
}

/// Divergence of a vector field.
pub fn divergence(grid: &CubicGrid, field: &[[f64; 3]]) -> Result<Vec<f64>> {
    if field.len() != grid.len() {
        return Err(Error::Grid("vector field length mismatch".into()));
    }
    let comp = |a: usize| -> Vec<f64> { field.iter().map(|w| w[a]).collect() };
    let dx = derivative_axis(grid, &comp(0), 0)?;
    let dy = derivative_axis(grid, &comp(1), 1)?;
    let dz = derivative_axis(grid, &comp(2), 2)?;
    let mut out = vec![0.0; field.len()];
    par_fill(&mut out, |idx| dx[idx] + dy[idx] + dz[idx]);
    Ok(out)
}

/// Jacobian of a vector field: `out[idx][a][b] = d_a W_b`.
pub fn jacobian(grid: &CubicGrid, field: &[[f64; 3]]) -> Result<Vec<[[f64; 3]; 3]>> {
    if field.len() != grid.len() {
        return Err(Error::Grid("vector field length mismatch".into()));
    }
    let mut out = vec![[[0.0; 3]; 3]; field.len()];
    for b in 0..3 {
        let comp: Vec<f64> = field.iter().map(|w| w[b]).collect();
        for a in 0..3 {
            let d = derivative_axis(grid, &comp, a)?;
            for (idx, m) in out.iter_mut().enumerate() {
                m[a][b] = d[idx];
            }
        }
    }
    Ok(out)
}

/// Hessian as the composition of first-derivative stencils, symmetrized.
/// Mixed derivatives commute exactly; the diagonal uses the squared
/// first-derivative operator, which stays fourth-order accurate.
pub fn hessian(grid: &CubicGrid, values: &[f64]) -> Result<Vec<[[f64; 3]; 3]>> {
    let grad = gradient(grid, values)?;
    let jac = jacobian(grid, &grad)?;
    let mut out = vec![[[0.0; 3]; 3]; values.len()];
    par_fill(&mut out, |idx| {
        let m = &jac[idx];
        let mut s = [[0.0; 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                s[a][b] = 0.5 * (m[a][b] + m[b][a]);
            }
        }
        s
    });
    Ok(out)
}

/// Least-squares slope of `log(error)` against `log(h)`, used by the
/// refinement order checks.
pub fn fit_loglog_slope(hs: &[f64], errors: &[f64]) -> f64 {
    let xs: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    num / den
}
