//! Density fields and logarithmic derivatives.
//!
//! A [`DensityField`] stores nonnegative node values of one species on a
//! shared [`CubicGrid`]. Logarithmic derivatives are formed from the field's
//! own stencil derivatives through the quotient rule,
//! `grad log f = grad f / f` and `hess log f = hess f / f - grad log f (x) grad log f`,
//! with `f` floored at a small fraction of its maximum. Nodes below the floor
//! are masked and skipped by every `f`-weighted quadrature; since all
//! integrands carry a factor `f`, the floor choice moves results only at the
//! level of the tail mass it hides.

use crate::grid::CubicGrid;
use crate::stencil;
use crate::{Error, Result};
use std::sync::Arc;

pub type Vector3Field = Vec<[f64; 3]>;
pub type Matrix3Field = Vec<[[f64; 3]; 3]>;

/// Default relative floor under `max f` for log-derivative masking.
pub const DEFAULT_LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct DensityField {
    grid: Arc<CubicGrid>,
    values: Vec<f64>,
    species_index: u32,
}

impl DensityField {
    pub fn new(grid: Arc<CubicGrid>, values: Vec<f64>, species_index: u32) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Field(format!(
                "value count {} does not match grid size {}",
                values.len(),
                grid.len()
            )));
        }
        for (idx, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    node: idx,
                    context: "density".into(),
                });
            }
            if v < 0.0 {
                return Err(Error::Field(format!("negative density {v} at node {idx}")));
            }
        }
        Ok(Self {
            grid,
            values,
            species_index,
        })
    }

    /// Sample an analytic density; negative samples are rejected.
    pub fn from_fn(
        grid: Arc<CubicGrid>,
        species_index: u32,
        f: impl Fn([f64; 3]) -> f64,
    ) -> Result<Self> {
        let values: Vec<f64> = (0..grid.len()).map(|i| f(grid.coord(i))).collect();
        Self::new(grid, values, species_index)
    }

    #[inline]
    pub fn grid(&self) -> &Arc<CubicGrid> {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn species_index(&self) -> u32 {
        self.species_index
    }

    pub fn with_species(mut self, species_index: u32) -> Self {
        self.species_index = species_index;
        self
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    pub fn mass(&self) -> f64 {
        self.grid
            .integrate(&self.values)
            .expect("density values are finite by construction")
    }

    /// Rescale so the mass equals `target`.
    pub fn normalize_mass(&mut self, target: f64) -> Result<()> {
        let m = self.mass();
        if m <= 0.0 {
            return Err(Error::Field("cannot normalize an empty density".into()));
        }
        let s = target / m;
        for v in &mut self.values {
            *v *= s;
        }
        Ok(())
    }

    /// Logarithmic derivatives via the quotient rule on stencil derivatives.
    pub fn log_derivatives(&self, floor_rel: f64) -> Result<LogDerivatives> {
        let floor_abs = floor_rel * self.max_value();
        if floor_abs <= 0.0 {
            return Err(Error::Field("empty density has no log-derivatives".into()));
        }
        let grad_f = stencil::gradient(&self.grid, &self.values)?;
        let hess_f = stencil::hessian(&self.grid, &self.values)?;
        let n = self.grid.len();
        let mut grad = vec![[0.0; 3]; n];
        let mut hess = vec![[[0.0; 3]; 3]; n];
        let mut mask = vec![false; n];
        for idx in 0..n {
            let f = self.values[idx].max(floor_abs);
            mask[idx] = self.values[idx] >= floor_abs;
            let g = [grad_f[idx][0] / f, grad_f[idx][1] / f, grad_f[idx][2] / f];
            grad[idx] = g;
            for a in 0..3 {
                for b in 0..3 {
                    hess[idx][a][b] = hess_f[idx][a][b] / f - g[a] * g[b];
                }
            }
        }
        Ok(LogDerivatives {
            grad,
            hess,
            mask,
            floor_abs,
        })
    }

    /// Logarithmic derivatives by differencing `log(max(f, floor))` directly.
    /// An independent route used by the discretization self-checks.
    pub fn log_derivatives_direct(&self, floor_rel: f64) -> Result<LogDerivatives> {
        let floor_abs = floor_rel * self.max_value();
        if floor_abs <= 0.0 {
            return Err(Error::Field("empty density has no log-derivatives".into()));
        }
        let logs: Vec<f64> = self.values.iter().map(|&v| v.max(floor_abs).ln()).collect();
        let grad = stencil::gradient(&self.grid, &logs)?;
        let hess = stencil::hessian(&self.grid, &logs)?;
        let mask = self.values.iter().map(|&v| v >= floor_abs).collect();
        Ok(LogDerivatives {
            grad,
            hess,
            mask,
            floor_abs,
        })
    }
}

/// Gradient and Hessian of `log f` with the validity mask of the floor.
#[derive(Debug, Clone)]
pub struct LogDerivatives {
    pub grad: Vector3Field,
    pub hess: Matrix3Field,
    pub mask: Vec<bool>,
    pub floor_abs: f64,
}

/// A sampled Maxwellian together with its resolution diagnostics.
pub struct MaxwellianSample {
    pub field: DensityField,
    /// Nodes per thermal standard deviation `sqrt(T/m) / h`.
    pub nodes_per_sigma: f64,
    /// True when below the recommended six nodes per standard deviation.
    pub under_resolved: bool,
}

/// `M_{T,m}(v) = (m / 2 pi T)^{3/2} exp(-m |v|^2 / 2T)`, unit mass.
pub fn maxwellian(grid: &Arc<CubicGrid>, temperature: f64, mass: f64) -> Result<MaxwellianSample> {
    if !(temperature > 0.0 && mass > 0.0) {
        return Err(Error::Field(format!(
            "maxwellian needs T > 0 and m > 0, got T = {temperature}, m = {mass}"
        )));
    }
    let norm = (mass / (2.0 * std::f64::consts::PI * temperature)).powf(1.5);
    let field = DensityField::from_fn(Arc::clone(grid), 0, |v| {
        let r2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
        norm * (-0.5 * mass * r2 / temperature).exp()
    })?;
    let sigma = (temperature / mass).sqrt();
    let nodes_per_sigma = sigma / grid.h();
    Ok(MaxwellianSample {
        field,
        nodes_per_sigma,
        under_resolved: nodes_per_sigma < 6.0,
    })
}
