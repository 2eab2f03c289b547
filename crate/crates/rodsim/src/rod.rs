//! Per-rod state and material description.
//!
//! Discretization is staggered: N+1 nodes carry position, velocity and lumped
//! mass; N elements carry a director frame and a local-frame angular velocity;
//! N-1 interior (Voronoi) regions carry curvature and bending stiffness.

use crate::frames::Frames;
use crate::math::{cross, norm, normalize, scale, sub, Mat3, Vec3};

/// Dynamic state of one rod (positions/velocities on nodes, frames/spins on elements).
#[derive(Debug, Clone, PartialEq)]
pub struct RodState {
    pub positions: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
    /// Row-director frames, one per element (stored as component planes).
    pub directors: Frames,
    /// Angular velocity in the local director frame, one per element.
    pub angular_velocities: Vec<Vec3>,
}

impl RodState {
    pub fn n_elements(&self) -> usize {
        self.directors.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.positions.len()
    }
}

/// Material scalars for a rod with a circular cross-section.
///
/// `density` is mass per unit volume; lumped nodal mass is
/// `density * area * rest_length` split half/half onto the element's nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialScalars {
    pub density: f64,
    pub youngs_modulus: f64,
    pub shear_modulus: f64,
    pub shear_correction: f64,
}

/// Per-element and per-region material data, with derived stiffness/inertia
/// diagonals precomputed from the scalars and geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialProperties {
    pub scalars: MaterialScalars,
    /// Per-element cross-section radius.
    pub radius: Vec<f64>,
    /// Per-element rest length.
    pub rest_length: Vec<f64>,
    /// Per-element cross-section area A = pi r^2.
    pub area: Vec<f64>,
    /// Lumped nodal mass (N+1 entries).
    pub nodal_mass: Vec<f64>,
    /// Per-element shear/stretch stiffness diagonal (ac*G*A, ac*G*A, E*A).
    pub shear_diag: Vec<Vec3>,
    /// Per-element second moment of mass diagonal rho*(I1, I2, I1+I2)*l_hat.
    pub inertia_diag: Vec<Vec3>,
    /// Componentwise inverse of `inertia_diag`.
    pub inv_inertia_diag: Vec<Vec3>,
    /// Per-region bending/twist stiffness diagonal (E*I1, E*I2, G*(I1+I2)),
    /// length-weighted average of the adjacent elements.
    pub bend_diag: Vec<Vec3>,
    /// Per-region Voronoi rest length (average of adjacent element rest lengths).
    pub voronoi_rest_length: Vec<f64>,
    /// Per-region intrinsic curvature (zero for rods born straight).
    pub rest_kappa: Vec<Vec3>,
}

impl MaterialProperties {
    /// Builds the derived fields for a rod with per-element radius and rest length.
    pub fn new(scalars: MaterialScalars, radius: Vec<f64>, rest_length: Vec<f64>) -> Self {
        assert_eq!(radius.len(), rest_length.len());
        let n = radius.len();
        assert!(n >= 1, "a rod needs at least one element");
        let area: Vec<f64> = radius.iter().map(|r| std::f64::consts::PI * r * r).collect();

        let mut nodal_mass = vec![0.0; n + 1];
        for k in 0..n {
            let m = scalars.density * area[k] * rest_length[k];
            nodal_mass[k] += 0.5 * m;
            nodal_mass[k + 1] += 0.5 * m;
        }

        let mut shear_diag = Vec::with_capacity(n);
        let mut inertia_diag = Vec::with_capacity(n);
        let mut inv_inertia_diag = Vec::with_capacity(n);
        // Per-element (I1, I2, I3) with I3 = I1 + I2 for a circular section.
        let mut second_moment = Vec::with_capacity(n);
        for k in 0..n {
            let i1 = std::f64::consts::PI * radius[k].powi(4) / 4.0;
            let i3 = 2.0 * i1;
            second_moment.push([i1, i1, i3]);
            let ag = scalars.shear_correction * scalars.shear_modulus * area[k];
            shear_diag.push([ag, ag, scalars.youngs_modulus * area[k]]);
            let j = [
                scalars.density * i1 * rest_length[k],
                scalars.density * i1 * rest_length[k],
                scalars.density * i3 * rest_length[k],
            ];
            inertia_diag.push(j);
            inv_inertia_diag.push([1.0 / j[0], 1.0 / j[1], 1.0 / j[2]]);
        }

        let regions = n.saturating_sub(1);
        let mut bend_diag = Vec::with_capacity(regions);
        let mut voronoi_rest_length = Vec::with_capacity(regions);
        for j in 0..regions {
            let d_hat = 0.5 * (rest_length[j] + rest_length[j + 1]);
            voronoi_rest_length.push(d_hat);
            let mut b = [0.0; 3];
            for c in 0..3 {
                let stiff_lo = if c < 2 { scalars.youngs_modulus } else { scalars.shear_modulus };
                b[c] = (stiff_lo * second_moment[j][c] * rest_length[j]
                    + stiff_lo * second_moment[j + 1][c] * rest_length[j + 1])
                    / (2.0 * d_hat);
            }
            bend_diag.push(b);
        }

        Self {
            scalars,
            radius,
            rest_length,
            area,
            nodal_mass,
            shear_diag,
            inertia_diag,
            inv_inertia_diag,
            bend_diag,
            voronoi_rest_length,
            rest_kappa: vec![[0.0; 3]; regions],
        }
    }

    pub fn n_elements(&self) -> usize {
        self.radius.len()
    }

    pub fn total_mass(&self) -> f64 {
        self.nodal_mass.iter().sum()
    }

    pub fn total_rest_length(&self) -> f64 {
        self.rest_length.iter().sum()
    }

    /// Borrows the kernel-facing view; block storage builds the same view
    /// over its pooled buffers.
    pub fn view(&self) -> MaterialView<'_> {
        MaterialView {
            scalars: self.scalars,
            radius: &self.radius,
            rest_length: &self.rest_length,
            nodal_mass: &self.nodal_mass,
            shear_diag: &self.shear_diag,
            inertia_diag: &self.inertia_diag,
            inv_inertia_diag: &self.inv_inertia_diag,
            bend_diag: &self.bend_diag,
            voronoi_rest_length: &self.voronoi_rest_length,
            rest_kappa: &self.rest_kappa,
        }
    }
}

/// Borrowed material data in the exact shape the dynamics kernels consume,
/// so a standalone rod and a rod carved out of a block run identical code.
#[derive(Debug, Clone, Copy)]
pub struct MaterialView<'a> {
    pub scalars: MaterialScalars,
    pub radius: &'a [f64],
    pub rest_length: &'a [f64],
    pub nodal_mass: &'a [f64],
    pub shear_diag: &'a [Vec3],
    pub inertia_diag: &'a [Vec3],
    pub inv_inertia_diag: &'a [Vec3],
    pub bend_diag: &'a [Vec3],
    pub voronoi_rest_length: &'a [f64],
    pub rest_kappa: &'a [Vec3],
}

/// A rod plus its material, the unit other modules build ensembles from.
#[derive(Debug, Clone, PartialEq)]
pub struct Rod {
    pub state: RodState,
    pub material: MaterialProperties,
}

/// Builds a straight uniform rod of `n` elements from `origin` along `direction`.
///
/// `normal_hint` seeds d1; it is projected orthogonal to the axis, so any
/// vector not parallel to `direction` works.
pub fn straight_rod(
    n: usize,
    length: f64,
    radius: f64,
    scalars: MaterialScalars,
    origin: Vec3,
    direction: Vec3,
    normal_hint: Vec3,
) -> Rod {
    assert!(n >= 1 && length > 0.0 && radius > 0.0);
    let d3 = normalize(direction);
    let mut d1 = sub(normal_hint, scale(d3, crate::math::dot(normal_hint, d3)));
    if norm(d1) < 1e-12 {
        let pick = if d3[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
        d1 = sub(pick, scale(d3, crate::math::dot(pick, d3)));
    }
    let d1 = normalize(d1);
    let d2 = cross(d3, d1);
    let frame: Mat3 = [d1[0], d1[1], d1[2], d2[0], d2[1], d2[2], d3[0], d3[1], d3[2]];

    let h = length / n as f64;
    let positions: Vec<Vec3> = (0..=n)
        .map(|i| crate::math::add(origin, scale(d3, i as f64 * h)))
        .collect();
    let state = RodState {
        positions,
        velocities: vec![[0.0; 3]; n + 1],
        directors: Frames::filled(n, frame),
        angular_velocities: vec![[0.0; 3]; n],
    };
    let material = MaterialProperties::new(scalars, vec![radius; n], vec![h; n]);
    Rod { state, material }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalars() -> MaterialScalars {
        MaterialScalars {
            density: 1000.0,
            youngs_modulus: 1e6,
            shear_modulus: 4e5,
            shear_correction: 1.0,
        }
    }

    /// Derived diagonals must match the defining formulas exactly.
    #[test]
    fn derived_fields_match_formulas() {
        let r = 0.01;
        let rod = straight_rod(8, 1.0, r, scalars(), [0.0; 3], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]);
        let m = &rod.material;
        let s = scalars();
        let area = std::f64::consts::PI * r * r;
        let i1 = std::f64::consts::PI * r.powi(4) / 4.0;
        let l = 1.0 / 8.0;
        for k in 0..8 {
            assert_eq!(m.area[k], area);
            let ag = s.shear_correction * s.shear_modulus * area;
            assert_eq!(m.shear_diag[k], [ag, ag, s.youngs_modulus * area]);
            let j = m.inertia_diag[k];
            assert!((j[0] - s.density * i1 * l).abs() < 1e-18);
            assert!((j[2] - s.density * 2.0 * i1 * l).abs() < 1e-18);
        }
        for j in 0..7 {
            let b = m.bend_diag[j];
            assert!((b[0] - s.youngs_modulus * i1).abs() < 1e-12 * b[0].abs());
            assert!((b[2] - s.shear_modulus * 2.0 * i1).abs() < 1e-12 * b[2].abs());
            assert!((m.voronoi_rest_length[j] - l).abs() < 1e-18);
        }
    }

    /// Total mass is density * area * length; end nodes carry half weights.
    #[test]
    fn lumped_mass_bookkeeping() {
        let rod = straight_rod(10, 2.0, 0.05, scalars(), [0.0; 3], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]);
        let m = &rod.material;
        let expect = scalars().density * std::f64::consts::PI * 0.05 * 0.05 * 2.0;
        assert!((m.total_mass() - expect).abs() < 1e-9 * expect);
        assert!((m.nodal_mass[0] - 0.5 * m.nodal_mass[1]).abs() < 1e-12 * m.nodal_mass[1]);
        assert!((m.nodal_mass[10] - 0.5 * m.nodal_mass[5]).abs() < 1e-12 * m.nodal_mass[5]);
    }
}
