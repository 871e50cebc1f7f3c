//! Numerics for the spatially homogeneous Landau equation with several species.
//!
//! The library discretizes densities `f_i(v)` on a uniform cubic velocity grid
//! and provides
//!
//! * the collision operator `Q_ij` with kernel `A(z) = |z|^{2+gamma} (Id - z z^T/|z|^2)`
//!   together with the electron-ion linear operators `L` and `L_S`,
//! * entropy, Fisher information, and weighted-moment functionals,
//! * closed-form dissipation identities for `d/dt H` and `d/dt I` along the flow,
//!   including the two-species pair form and its coercive lower bound,
//! * spherical calculus on velocity shells (projected gradients, intrinsic
//!   Hessians, the Gamma_2 integrand) with discretization self-checks,
//! * an explicit time integrator with conservation and monotonicity monitors,
//! * the annular datum whose Fisher information increases at soft potentials,
//!   and the damped Lyapunov functional `Lambda = I + a J + R H_rel` with its
//!   constant bookkeeping,
//! * a sphere-mesh check of the log-Sobolev-type inequality behind the
//!   coercivity constants.
//!
//! Scalar fields are flat `Vec<f64>` in row-major `(x, y, z)` order over a
//! [`grid::CubicGrid`]; vector and matrix fields store one `[f64; 3]` or
//! `[[f64; 3]; 3]` per node.

pub mod collision;
pub mod counterexample;
pub mod dissipation;
pub mod evolution;
pub mod exec;
pub mod field;
pub mod functionals;
pub mod grid;
pub mod linalg;
pub mod logsobolev;
pub mod lyapunov;
pub mod persistence;
pub mod samples;
pub mod spherical;
pub mod stencil;

use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("grid: {0}")]
    Grid(String),
    #[error("field: {0}")]
    Field(String),
    #[error("non-finite value at node {node} in {context}")]
    NonFinite { node: usize, context: String },
    #[error("system: {0}")]
    System(String),
    #[error("internal consistency: {0}")]
    Consistency(String),
    #[error("evolution aborted: {0}")]
    Evolution(String),
    #[error("counterexample: {0}")]
    Counterexample(String),
    #[error("lyapunov: {0}")]
    Lyapunov(String),
    #[error("persistence: {0}")]
    Persistence(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
