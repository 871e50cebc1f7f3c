//! Scalar functionals of one or several densities: Fisher information,
//! entropy, weighted moments, and conserved quantities.

use std::sync::Arc;

use crate::exec::{par_sum, par_sum_vec};
use crate::field::{DensityField, DEFAULT_LOG_FLOOR};
use crate::grid::CubicGrid;
use crate::linalg::*;
use crate::spherical::projector;
use crate::{stencil, Error, Result};

pub use crate::field::{maxwellian, MaxwellianSample};

/// A multi-species state: one density per species on a shared grid, with
/// interaction exponent `gamma`, particle masses, and symmetric pair
/// couplings `c_ij`.
#[derive(Debug, Clone)]
pub struct SpeciesSystem {
    pub gamma: f64,
    pub masses: Vec<f64>,
    pub couplings: Vec<Vec<f64>>,
    pub densities: Vec<DensityField>,
}

impl SpeciesSystem {
    pub fn new(
        gamma: f64,
        masses: Vec<f64>,
        couplings: Vec<Vec<f64>>,
        densities: Vec<DensityField>,
    ) -> Result<Self> {
        let n = densities.len();
        if n == 0 {
            return Err(Error::System("system needs at least one species".into()));
        }
        if !(-3.0..=1.0).contains(&gamma) {
            return Err(Error::System(format!(
                "gamma = {gamma} outside [-3, 1]"
            )));
        }
        if masses.len() != n || couplings.len() != n {
            return Err(Error::System(format!(
                "shape mismatch: {} densities, {} masses, {} coupling rows",
                n,
                masses.len(),
                couplings.len()
            )));
        }
        if let Some(m) = masses.iter().find(|&&m| !(m > 0.0) || !m.is_finite()) {
            return Err(Error::System(format!("nonpositive mass {m}")));
        }
        for (i, row) in couplings.iter().enumerate() {
            if row.len() != n {
                return Err(Error::System(format!(
                    "coupling row {i} has length {} for {n} species",
                    row.len()
                )));
            }
            for (j, &c) in row.iter().enumerate() {
                if !(c > 0.0) || !c.is_finite() {
                    return Err(Error::System(format!("coupling c[{i}][{j}] = {c}")));
                }
                if (c - couplings[j][i]).abs() > 1e-14 * c.abs() {
                    return Err(Error::System(format!(
                        "couplings not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let grid = densities[0].grid();
        for f in &densities[1..] {
            if !grid.same_layout(f.grid()) {
                return Err(Error::System(
                    "densities live on different grids".into(),
                ));
            }
        }
        Ok(Self {
            gamma,
            masses,
            couplings,
            densities,
        })
    }

    pub fn species_count(&self) -> usize {
        self.densities.len()
    }

    pub fn grid(&self) -> &Arc<CubicGrid> {
        self.densities[0].grid()
    }
}

/// Totals that the collision operator leaves invariant.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ConservedState {
    /// per-species mass `m_i ∫ f_i`
    pub species_mass: Vec<f64>,
    /// `Σ_i m_i ∫ v f_i`
    pub momentum: V3,
    /// `(1/2) Σ_i m_i ∫ |v|² f_i`
    pub energy: f64,
}

fn check_support(f: &DensityField) -> Result<f64> {
    let mass = f.mass();
    if !(mass > 0.0) {
        return Err(Error::Field("density has empty support".into()));
    }
    Ok(mass)
}

/// `I(f) = ∫ |∇ log f|² f`, evaluated as `|∇f|²/f` over nodes above the
/// relative floor.
pub fn fisher(f: &DensityField) -> Result<f64> {
    fisher_with_floor(f, DEFAULT_LOG_FLOOR)
}

pub fn fisher_with_floor(f: &DensityField, floor_rel: f64) -> Result<f64> {
    check_support(f)?;
    let grid = f.grid();
    let grad = stencil::gradient(grid, f.values())?;
    let floor_abs = floor_rel * f.max_value();
    let vals = f.values();
    Ok(par_sum(grid.len(), |idx| {
        let fv = vals[idx];
        if fv < floor_abs {
            return 0.0;
        }
        grid.weight(idx) * dot(grad[idx], grad[idx]) / fv
    }))
}

/// `𝓘(F) = Σ_i I(f_i) / m_i`.
pub fn multi_fisher(system: &SpeciesSystem) -> Result<f64> {
    let mut total = 0.0;
    for (f, &m) in system.densities.iter().zip(&system.masses) {
        total += fisher(f)? / m;
    }
    Ok(total)
}

/// `J_β(f) = ∫ |Π⊥_v ∇ log f|² |v|^{-β} f` with the origin node excluded.
pub fn spherical_fisher(f: &DensityField, beta: f64) -> Result<f64> {
    if beta < 0.0 {
        return Err(Error::Field(format!("negative weight exponent {beta}")));
    }
    check_support(f)?;
    let grid = f.grid();
    let grad = stencil::gradient(grid, f.values())?;
    let floor_abs = DEFAULT_LOG_FLOOR * f.max_value();
    let vals = f.values();
    Ok(par_sum(grid.len(), |idx| {
        let fv = vals[idx];
        if fv < floor_abs || grid.is_origin(idx) {
            return 0.0;
        }
        let v = grid.coord(idx);
        let p = projector(v);
        let t = mat_vec(&p, grad[idx]);
        grid.weight(idx) * dot(t, t) / (fv * norm(v).powf(beta))
    }))
}

/// `I(f)` evaluated through stencils of `log f` instead of the `|∇f|²/f`
/// quotient. On rapidly decaying tails the quotient route amplifies stencil
/// error exponentially (the gradient of `f` at a node mixes values spanning
/// several e-foldings); differentiating `log f` keeps the integrand accurate
/// wherever `f` clears the floor, so this variant is the reference when
/// comparing against dissipation identities.
pub fn fisher_direct(f: &DensityField, floor_rel: f64) -> Result<f64> {
    check_support(f)?;
    let grid = f.grid();
    let ld = f.log_derivatives_direct(floor_rel)?;
    let vals = f.values();
    Ok(par_sum(grid.len(), |idx| {
        if !ld.mask[idx] {
            return 0.0;
        }
        grid.weight(idx) * vals[idx] * dot(ld.grad[idx], ld.grad[idx])
    }))
}

/// `J_β(f)` through stencils of `log f`; see [`fisher_direct`].
pub fn spherical_fisher_direct(f: &DensityField, beta: f64, floor_rel: f64) -> Result<f64> {
    if beta < 0.0 {
        return Err(Error::Field(format!("negative weight exponent {beta}")));
    }
    check_support(f)?;
    let grid = f.grid();
    let ld = f.log_derivatives_direct(floor_rel)?;
    let vals = f.values();
    Ok(par_sum(grid.len(), |idx| {
        if !ld.mask[idx] || grid.is_origin(idx) {
            return 0.0;
        }
        let v = grid.coord(idx);
        let p = projector(v);
        let t = mat_vec(&p, ld.grad[idx]);
        grid.weight(idx) * vals[idx] * dot(t, t) / norm(v).powf(beta)
    }))
}

/// `H(f) = ∫ f log f` over nodes above the floor.
pub fn entropy(f: &DensityField) -> Result<f64> {
    entropy_with_floor(f, DEFAULT_LOG_FLOOR)
}

pub fn entropy_with_floor(f: &DensityField, floor_rel: f64) -> Result<f64> {
    check_support(f)?;
    let grid = f.grid();
    let floor_abs = floor_rel * f.max_value();
    let vals = f.values();
    Ok(par_sum(grid.len(), |idx| {
        let fv = vals[idx];
        if fv < floor_abs {
            return 0.0;
        }
        grid.weight(idx) * fv * fv.ln()
    }))
}

/// Relative entropy against the unit-mass Maxwellian of temperature `t0`,
/// `H(f | M_{t0,1}) = ∫ f log f − ∫ f log M_{t0,1}`, with the reference term
/// expanded in closed form.
pub fn relative_entropy(f: &DensityField, t0: f64) -> Result<f64> {
    if !(t0 > 0.0) {
        return Err(Error::Field(format!("reference temperature {t0}")));
    }
    let grid = f.grid();
    let vals = f.values();
    let [mass, second] = par_sum_vec::<2, _>(grid.len(), |idx| {
        let w = grid.weight(idx) * vals[idx];
        let v = grid.coord(idx);
        [w, w * dot(v, v)]
    });
    let log_norm = -1.5 * (2.0 * std::f64::consts::PI * t0).ln();
    Ok(entropy(f)? - (log_norm * mass - second / (2.0 * t0)))
}

/// Temperature `T°` with `∫ ½|v|² M_{T°,1} = ∫ ½|v|² f`, i.e. `(1/3) ∫ |v|² f`
/// for unit-mass `f`.
pub fn equilibrium_temperature(f: &DensityField) -> f64 {
    let grid = f.grid();
    let vals = f.values();
    par_sum(grid.len(), |idx| {
        let v = grid.coord(idx);
        grid.weight(idx) * vals[idx] * dot(v, v)
    }) / 3.0
}

/// `∫ ⟨v⟩^l f` with `⟨v⟩ = (1 + |v|²)^{1/2}`.
pub fn weighted_moment(f: &DensityField, l: u32) -> f64 {
    let grid = f.grid();
    let vals = f.values();
    par_sum(grid.len(), |idx| {
        let v = grid.coord(idx);
        grid.weight(idx) * vals[idx] * (1.0 + dot(v, v)).powi(l as i32 / 2)
            * if l % 2 == 1 {
                (1.0 + dot(v, v)).sqrt()
            } else {
                1.0
            }
    })
}

/// System moment `M_l = Σ_i m_i ∫ ⟨v⟩^l f_i`.
pub fn system_weighted_moment(system: &SpeciesSystem, l: u32) -> f64 {
    system
        .densities
        .iter()
        .zip(&system.masses)
        .map(|(f, &m)| m * weighted_moment(f, l))
        .sum()
}

/// `(‖f‖_{L¹_l}, ‖f‖_{L²_l})` where the norms carry the weight `⟨v⟩^l`
/// inside `∫ |f| ⟨v⟩^l` and `(∫ f² ⟨v⟩^{2l})^{1/2}`.
pub fn weighted_norms(f: &DensityField, l: u32) -> (f64, f64) {
    let grid = f.grid();
    let vals = f.values();
    let [l1, l2sq] = par_sum_vec::<2, _>(grid.len(), |idx| {
        let v = grid.coord(idx);
        let w = grid.weight(idx);
        let bracket = (1.0 + dot(v, v)).sqrt().powi(l as i32);
        [w * vals[idx].abs() * bracket, w * vals[idx] * vals[idx] * bracket * bracket]
    });
    (l1, l2sq.sqrt())
}

/// Mass per species plus total momentum and kinetic energy.
pub fn conserved_quantities(system: &SpeciesSystem) -> ConservedState {
    let grid = system.grid();
    let mut species_mass = Vec::with_capacity(system.species_count());
    let mut momentum = [0.0; 3];
    let mut energy = 0.0;
    for (f, &m) in system.densities.iter().zip(&system.masses) {
        let vals = f.values();
        let [mass, px, py, pz, e2] = par_sum_vec::<5, _>(grid.len(), |idx| {
            let w = grid.weight(idx) * vals[idx];
            let v = grid.coord(idx);
            [w, w * v[0], w * v[1], w * v[2], w * dot(v, v)]
        });
        species_mass.push(m * mass);
        momentum = add(momentum, scale([px, py, pz], m));
        energy += 0.5 * m * e2;
    }
    ConservedState {
        species_mass,
        momentum,
        energy,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::maxwellian;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn gaussian_grid() -> Arc<CubicGrid> {
        CubicGrid::new(56, 7.0).unwrap()
    }

    #[test]
    fn fisher_of_maxwellian_matches_closed_form() {
        // I(M_{T,m}) = 3m/T
        let grid = gaussian_grid();
        for (t, m) in [(1.0, 1.0), (0.8, 1.0), (1.0, 2.0)] {
            let f = maxwellian(&grid, t, m).unwrap().field;
            assert_relative_eq!(fisher(&f).unwrap(), 3.0 * m / t, max_relative = 1e-4);
        }
    }

    #[test]
    fn fisher_floor_independence_on_maxwellian() {
        let grid = gaussian_grid();
        let f = maxwellian(&grid, 1.0, 1.0).unwrap().field;
        let lo = fisher_with_floor(&f, 1e-14).unwrap();
        let hi = fisher_with_floor(&f, 1e-8).unwrap();
        assert_relative_eq!(lo, hi, max_relative = 1e-6);
        let e_lo = entropy_with_floor(&f, 1e-14).unwrap();
        let e_hi = entropy_with_floor(&f, 1e-8).unwrap();
        assert_relative_eq!(e_lo, e_hi, max_relative = 1e-6);
    }

    #[test]
    fn direct_route_is_exact_on_gaussians() {
        // quadratic logs make the stencils exact, so the only errors left
        // are lattice aliasing (needs h below ~0.8 thermal widths) and the
        // floor shell, which carries f ~ 1e-12; size the box per species
        for (t, m) in [(1.0, 1.0), (0.8, 2.0)] {
            let sigma = f64::sqrt(t / m);
            let grid = CubicGrid::new(20, 6.5 * sigma).unwrap();
            let f = maxwellian(&grid, t, m).unwrap().field;
            assert_relative_eq!(
                fisher_direct(&f, 1e-12).unwrap(),
                3.0 * m / t,
                max_relative = 1e-6
            );
        }
        // radial data has no tangential gradient; boxes sized so the corner
        // stays above the floor, which keeps every stencil sample on the
        // quadratic and the projected rest at round-off
        for (t, m, vmax) in [(1.0, 1.0, 4.0), (0.8, 2.0, 2.6)] {
            let g = CubicGrid::new(20, vmax).unwrap();
            let f = maxwellian(&g, t, m).unwrap().field;
            assert!(spherical_fisher_direct(&f, 1.0, 1e-12).unwrap() < 1e-25);
        }
    }

    #[test]
    fn direct_and_quotient_routes_agree_when_resolved() {
        let grid = gaussian_grid();
        let f = maxwellian(&grid, 1.0, 1.0).unwrap().field;
        assert_relative_eq!(
            fisher_direct(&f, 1e-12).unwrap(),
            fisher(&f).unwrap(),
            max_relative = 1e-3
        );
    }

    fn bump(center: V3) -> impl Fn(V3) -> f64 {
        move |v: V3| {
            let d = sub(v, center);
            let rho2 = dot(d, d) / 2.25;
            if rho2 < 1.0 {
                (-1.0 / (1.0 - rho2)).exp()
            } else {
                0.0
            }
        }
    }

    #[test]
    fn grid_aligned_translation_leaves_functionals_unchanged() {
        let grid = CubicGrid::new(40, 6.0).unwrap();
        let h = grid.h();
        let f0 = DensityField::from_fn(Arc::clone(&grid), 0, bump([0.0, 0.0, 0.0])).unwrap();
        let f1 =
            DensityField::from_fn(Arc::clone(&grid), 0, bump([2.0 * h, -h, 0.0])).unwrap();
        assert_relative_eq!(
            fisher(&f0).unwrap(),
            fisher(&f1).unwrap(),
            max_relative = 1e-12
        );
        assert_relative_eq!(
            entropy(&f0).unwrap(),
            entropy(&f1).unwrap(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn fisher_scaling_at_lambda_two() {
        // lambda^3 f(lambda v) for f = M_{1,1} is M_{1/4,1}, so I scales by 4
        let coarse = CubicGrid::new(48, 6.0).unwrap();
        let fine = CubicGrid::new(48, 3.0).unwrap();
        let base = fisher(&maxwellian(&coarse, 1.0, 1.0).unwrap().field).unwrap();
        let scaled = fisher(&maxwellian(&fine, 0.25, 1.0).unwrap().field).unwrap();
        assert_relative_eq!(scaled, 4.0 * base, max_relative = 1e-6);
    }

    #[test]
    fn multi_fisher_of_shared_temperature_maxwellians() {
        let grid = gaussian_grid();
        let t = 1.0;
        let f1 = maxwellian(&grid, t, 1.0).unwrap().field;
        let f2 = maxwellian(&grid, t, 2.0).unwrap().field.with_species(1);
        let system = SpeciesSystem::new(
            -2.0,
            vec![1.0, 2.0],
            vec![vec![1.0, 1.0], vec![1.0, 1.0]],
            vec![f1.clone(), f2],
        )
        .unwrap();
        assert_relative_eq!(
            multi_fisher(&system).unwrap(),
            6.0 / t,
            max_relative = 1e-4
        );

        let single = SpeciesSystem::new(-2.0, vec![2.0], vec![vec![1.0]], vec![f1]).unwrap();
        assert_relative_eq!(
            multi_fisher(&single).unwrap(),
            fisher(&single.densities[0]).unwrap() / 2.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn spherical_fisher_vanishes_on_radial_data() {
        // discretization noise from the steep tail keeps these at the 1e-6
        // level rather than exactly zero
        let grid = gaussian_grid();
        let f = maxwellian(&grid, 1.0, 1.0).unwrap().field;
        assert!(spherical_fisher(&f, 0.0).unwrap() < 1e-5);
        assert!(spherical_fisher(&f, 1.0).unwrap() < 1e-5);
        let bump = DensityField::from_fn(Arc::clone(&grid), 0, |v| {
            let r2 = dot(v, v);
            (1.0 + r2) * (-r2 / 2.0).exp()
        })
        .unwrap();
        let jb = spherical_fisher(&bump, 1.0).unwrap();
        assert!(jb < 1e-4, "J1(bump) = {jb:e}");
    }

    #[test]
    fn spherical_fisher_tilted_exponential_is_resolution_stable() {
        // f ∝ exp(0.1 v_1) M_{1,1}; doubling the resolution moves J_1 by < 1e-3
        let tilt = |v: V3| (0.1 * v[0] - 0.5 * dot(v, v)).exp();
        let coarse = CubicGrid::new(112, 6.0).unwrap();
        let fine = CubicGrid::new(224, 6.0).unwrap();
        let a = {
            let mut f = DensityField::from_fn(coarse, 0, tilt).unwrap();
            f.normalize_mass(1.0).unwrap();
            spherical_fisher(&f, 1.0).unwrap()
        };
        let b = {
            let mut f = DensityField::from_fn(fine, 0, tilt).unwrap();
            f.normalize_mass(1.0).unwrap();
            spherical_fisher(&f, 1.0).unwrap()
        };
        assert_relative_eq!(a, b, max_relative = 1e-3);
        assert!(a > 0.0);
    }

    #[test]
    fn entropy_of_maxwellian_matches_closed_form() {
        let grid = gaussian_grid();
        for t in [0.8, 1.0, 1.3] {
            let f = maxwellian(&grid, t, 1.0).unwrap().field;
            let exact = -1.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * t).ln();
            assert_relative_eq!(entropy(&f).unwrap(), exact, max_relative = 1e-4);
        }
    }

    #[test]
    fn relative_entropy_vanishes_at_reference() {
        let grid = gaussian_grid();
        let t0 = 1.1;
        let f = maxwellian(&grid, t0, 1.0).unwrap().field;
        assert!(relative_entropy(&f, t0).unwrap().abs() < 1e-6);
    }

    #[test]
    fn equilibrium_temperature_identities() {
        let grid = gaussian_grid();
        let f = maxwellian(&grid, 1.0, 1.0).unwrap().field;
        // E = 3T/2 = 1.5 gives T° = 1
        assert_relative_eq!(equilibrium_temperature(&f), 1.0, max_relative = 1e-6);

        // symmetric mixture of Gaussians shifted by ±u: E = 3T/2 + |u|²/2
        let (t, u) = (0.7, [0.9, 0.0, 0.3]);
        let mix = DensityField::from_fn(Arc::clone(&grid), 0, |v| {
            let c = (2.0 * std::f64::consts::PI * t).powf(-1.5);
            let dp = sub(v, u);
            let dm = add(v, u);
            0.5 * c * ((-dot(dp, dp) / (2.0 * t)).exp() + (-dot(dm, dm) / (2.0 * t)).exp())
        })
        .unwrap();
        let expect = (2.0 / 3.0) * (1.5 * t + 0.5 * dot(u, u));
        assert_relative_eq!(equilibrium_temperature(&mix), expect, max_relative = 1e-6);
    }

    #[test]
    fn weighted_moments_and_norms() {
        let grid = gaussian_grid();
        let f = maxwellian(&grid, 1.0, 1.0).unwrap().field;
        assert_relative_eq!(weighted_moment(&f, 0), 1.0, max_relative = 1e-8);
        // ∫⟨v⟩² M_{T,1} = 1 + 3T
        assert_relative_eq!(weighted_moment(&f, 2), 4.0, max_relative = 1e-6);

        let shell = DensityField::from_fn(Arc::clone(&grid), 0, |v| {
            let r = norm(v);
            if r >= 1.5 && r <= 3.0 {
                1.0
            } else {
                0.0
            }
        })
        .unwrap();
        let mut prev = weighted_moment(&shell, 0);
        for l in 1..=6 {
            let cur = weighted_moment(&shell, l);
            assert!(cur > prev, "moment not monotone at l = {l}");
            prev = cur;
        }

        let (l1, l2) = weighted_norms(&f, 0);
        assert_relative_eq!(l1, 1.0, max_relative = 1e-8);
        assert!(l2 > 0.0 && l2 < 1.0);
    }

    #[test]
    fn conserved_quantities_on_maxwellian_pairs() {
        let grid = gaussian_grid();
        let f1 = maxwellian(&grid, 1.0, 1.0).unwrap().field;
        let f2 = maxwellian(&grid, 0.5, 2.0).unwrap().field.with_species(1);
        let system = SpeciesSystem::new(
            -2.0,
            vec![1.0, 2.0],
            vec![vec![1.0, 1.0], vec![1.0, 1.0]],
            vec![f1, f2],
        )
        .unwrap();
        let state = conserved_quantities(&system);
        assert!(norm(state.momentum) < 1e-12);
        assert_relative_eq!(state.species_mass[0], 1.0, max_relative = 1e-8);
        assert_relative_eq!(state.species_mass[1], 2.0, max_relative = 1e-8);
        // ½ m_i ∫|v|² M_{T_i,m_i} = 3T_i/2 per species
        assert_relative_eq!(state.energy, 1.5 + 0.75, max_relative = 1e-6);
    }

    #[test]
    fn system_validation_rejects_bad_inputs() {
        let grid = CubicGrid::new(8, 1.0).unwrap();
        let f = DensityField::from_fn(Arc::clone(&grid), 0, |_| 1.0).unwrap();
        assert!(SpeciesSystem::new(-4.0, vec![1.0], vec![vec![1.0]], vec![f.clone()]).is_err());
        assert!(SpeciesSystem::new(-2.0, vec![-1.0], vec![vec![1.0]], vec![f.clone()]).is_err());
        assert!(SpeciesSystem::new(
            -2.0,
            vec![1.0, 1.0],
            vec![vec![1.0, 2.0], vec![3.0, 1.0]],
            vec![f.clone(), f.clone()]
        )
        .is_err());
        let other = CubicGrid::new(8, 2.0).unwrap();
        let g = DensityField::from_fn(other, 1, |_| 1.0).unwrap();
        assert!(SpeciesSystem::new(
            -2.0,
            vec![1.0, 1.0],
            vec![vec![1.0, 1.0], vec![1.0, 1.0]],
            vec![f, g]
        )
        .is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]

        #[test]
        fn relative_entropy_nonnegative_on_perturbed_gaussians(
            a in -0.4f64..0.4,
            b in 0.5f64..2.0,
            c in -0.3f64..0.3,
        ) {
            let grid = CubicGrid::new(32, 6.0).unwrap();
            let mut f = DensityField::from_fn(grid, 0, |v| {
                (1.0 + a * (b * v[0]).cos() + c * (b * v[1]).sin())
                    * (-0.5 * dot(v, v)).exp()
            }).unwrap();
            f.normalize_mass(1.0).unwrap();
            let t0 = equilibrium_temperature(&f);
            prop_assert!(relative_entropy(&f, t0).unwrap() > -1e-7);
        }

        #[test]
        fn projection_contracts_fisher(
            a in -0.3f64..0.3,
            b in -0.3f64..0.3,
        ) {
            let grid = CubicGrid::new(24, 5.0).unwrap();
            let f = DensityField::from_fn(grid, 0, |v| {
                (a * v[0] + b * v[1] * v[2] - 0.5 * dot(v, v)).exp()
            }).unwrap();
            let j0 = spherical_fisher(&f, 0.0).unwrap();
            let i = fisher(&f).unwrap();
            prop_assert!(j0 <= i * (1.0 + 1e-12) + 1e-12);
        }
    }
}
