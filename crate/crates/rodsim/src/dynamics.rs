//! Internal dynamics and time integration for a single rod.
//!
//! The momentum balance discretizes to nodal forces and per-element couples:
//! nodes receive the difference of the element stress resultants
//! Q^T S sigma / e; elements receive five couple contributions (bend/twist
//! flux divergence, curvature transport, shear coupling, gyroscopic
//! transport, unsteady dilatation) plus external couples, all in the local
//! frame. Time stepping is three-stage position Verlet.

use crate::frames::{FramesMut, FramesRef};
use crate::kinematics::{
    compute_dilatation_rates, compute_kappa, compute_sigma, compute_tangents_dilatations,
    compute_voronoi_dilatations, max_orthonormality_residual, reorthonormalize_all,
    so3_rotate_inplace,
};
use crate::math::{self, add, cross, mat_t_vec, norm, scale, sub, Mat3, Vec3};
use crate::rod::{MaterialProperties, MaterialView, RodState};

/// Director frames are re-orthonormalized at least this often.
pub const REORTHONORMALIZE_INTERVAL: u64 = 1000;
/// ... or earlier, when the worst frame residual exceeds this.
pub const REORTHONORMALIZE_RESIDUAL: f64 = 1e-8;
/// Residual monitoring cadence; drift accumulates ~1e-16 per step, so
/// sampling every 100 steps bounds the worst excursion well below harm.
pub const DRIFT_CHECK_INTERVAL: u64 = 100;
/// Runs abort when any nodal speed exceeds this multiple of sqrt(E/rho).
pub const INSTABILITY_SPEED_FACTOR: f64 = 1e6;
/// Safety factor in the explicit timestep bound.
pub const DT_SAFETY_FACTOR: f64 = 0.3;

/// Why a step could not be completed.
#[derive(Debug, thiserror::Error)]
pub enum StepError {
    #[error("adjacent frames anti-podal at step {step}: {source}")]
    Antipodal {
        step: u64,
        source: math::AntipodalRotation,
    },
    #[error("numerical instability at step {step}: max nodal speed {speed:.3e} exceeds {limit:.3e}")]
    Unstable { step: u64, speed: f64, limit: f64 },
}

/// Reusable per-rod work buffers (strains and load accumulators).
#[derive(Debug, Clone)]
pub struct RodScratch {
    pub tangents: Vec<Vec3>,
    pub dilatations: Vec<f64>,
    pub dilatation_rates: Vec<f64>,
    pub voronoi_dilatations: Vec<f64>,
    pub sigma: Vec<Vec3>,
    pub kappa: Vec<Vec3>,
    /// Nodal force accumulator, lab frame.
    pub node_force: Vec<Vec3>,
    /// Element couple accumulator, local frame.
    pub elem_couple: Vec<Vec3>,
}

impl RodScratch {
    pub fn new(n_elements: usize) -> Self {
        let regions = n_elements.saturating_sub(1);
        Self {
            tangents: vec![[0.0; 3]; n_elements],
            dilatations: vec![0.0; n_elements],
            dilatation_rates: vec![0.0; n_elements],
            voronoi_dilatations: vec![0.0; regions],
            sigma: vec![[0.0; 3]; n_elements],
            kappa: vec![[0.0; 3]; regions],
            node_force: vec![[0.0; 3]; n_elements + 1],
            elem_couple: vec![[0.0; 3]; n_elements],
        }
    }

    pub fn clear_loads(&mut self) {
        self.view().clear_loads();
    }

    /// Borrows the kernel-facing view; block storage carves the same view
    /// out of its pooled buffers.
    pub fn view(&mut self) -> ScratchView<'_> {
        ScratchView {
            tangents: &mut self.tangents,
            dilatations: &mut self.dilatations,
            dilatation_rates: &mut self.dilatation_rates,
            voronoi_dilatations: &mut self.voronoi_dilatations,
            sigma: &mut self.sigma,
            kappa: &mut self.kappa,
            node_force: &mut self.node_force,
            elem_couple: &mut self.elem_couple,
        }
    }
}

/// Borrowed per-rod scratch in the exact shape the kernels consume.
#[derive(Debug)]
pub struct ScratchView<'a> {
    pub tangents: &'a mut [Vec3],
    pub dilatations: &'a mut [f64],
    pub dilatation_rates: &'a mut [f64],
    pub voronoi_dilatations: &'a mut [f64],
    pub sigma: &'a mut [Vec3],
    pub kappa: &'a mut [Vec3],
    /// Nodal force accumulator, lab frame.
    pub node_force: &'a mut [Vec3],
    /// Element couple accumulator, local frame.
    pub elem_couple: &'a mut [Vec3],
}

impl ScratchView<'_> {
    pub fn clear_loads(&mut self) {
        for f in self.node_force.iter_mut() {
            *f = [0.0; 3];
        }
        for c in self.elem_couple.iter_mut() {
            *c = [0.0; 3];
        }
    }
}

/// The mid-step configuration handed to external forcing: read-only state and
/// strains, mutable load accumulators.
pub struct MidStep<'a> {
    pub positions: &'a [Vec3],
    pub velocities: &'a [Vec3],
    pub directors: FramesRef<'a>,
    pub angular_velocities: &'a [Vec3],
    pub tangents: &'a [Vec3],
    pub dilatations: &'a [f64],
    pub sigma: &'a [Vec3],
    pub kappa: &'a [Vec3],
    /// Material data, so forcing terms can weight by mass or rest length.
    pub material: &'a MaterialView<'a>,
    /// Nodal force accumulator, lab frame.
    pub node_force: &'a mut [Vec3],
    /// Element couple accumulator, local frame.
    pub elem_couple: &'a mut [Vec3],
}

/// Fills every strain field of `scratch` from the current state.
pub fn compute_strains(
    positions: &[Vec3],
    velocities: &[Vec3],
    directors: FramesRef<'_>,
    material: &MaterialView<'_>,
    scratch: &mut ScratchView<'_>,
) -> Result<(), math::AntipodalRotation> {
    compute_tangents_dilatations(
        positions,
        material.rest_length,
        scratch.tangents,
        scratch.dilatations,
    );
    compute_voronoi_dilatations(
        scratch.dilatations,
        material.rest_length,
        scratch.voronoi_dilatations,
    );
    compute_sigma(directors, scratch.tangents, scratch.sigma);
    compute_kappa(directors, material.voronoi_rest_length, scratch.kappa)?;
    compute_dilatation_rates(
        velocities,
        scratch.tangents,
        scratch.dilatations,
        material.rest_length,
        scratch.dilatation_rates,
    );
    Ok(())
}

/// Adds internal elastic and transport loads into the scratch accumulators.
///
/// Requires `compute_strains` to have run for the same configuration.
pub fn accumulate_internal_loads(
    directors: FramesRef<'_>,
    angular_velocities: &[Vec3],
    material: &MaterialView<'_>,
    scratch: &mut ScratchView<'_>,
) {
    let n = directors.len();
    let regions = n.saturating_sub(1);

    // Element stress resultants n_k = S sigma (local) and their lab-frame
    // flux Q^T n / e; nodes receive the flux difference.
    let mut prev_flux = [0.0; 3];
    for k in 0..n {
        let s = material.shear_diag[k];
        let sig = scratch.sigma[k];
        let stress = [s[0] * sig[0], s[1] * sig[1], s[2] * sig[2]];
        let flux = scale(mat_t_vec(&directors.get(k), stress), 1.0 / scratch.dilatations[k]);
        scratch.node_force[k] = add(scratch.node_force[k], sub(flux, prev_flux));
        prev_flux = flux;

        // Shear/stretch couple (Q tau) x (S sigma) * l_hat; Q tau = sigma + e3.
        let local_tau = [sig[0], sig[1], sig[2] + 1.0];
        let shear_couple = scale(cross(local_tau, stress), material.rest_length[k]);

        // Gyroscopic transport (J w / e) x w and unsteady dilatation (J w / e^2) de/dt.
        let w = angular_velocities[k];
        let j = material.inertia_diag[k];
        let jw = [j[0] * w[0], j[1] * w[1], j[2] * w[2]];
        let e = scratch.dilatations[k];
        let gyro = scale(cross(jw, w), 1.0 / e);
        let unsteady = scale(jw, scratch.dilatation_rates[k] / (e * e));

        scratch.elem_couple[k] =
            add(scratch.elem_couple[k], add(shear_couple, add(gyro, unsteady)));
    }
    // Last node closes the telescoping flux difference.
    scratch.node_force[n] = sub(scratch.node_force[n], prev_flux);

    // Region torques tau_j = B (kappa - kappa_hat) / eps^3: elements receive
    // the flux difference, and the curvature transport kappa x B kappa / eps^3
    // weighted by the Voronoi rest length is split half/half onto neighbours.
    let mut prev_torque = [0.0; 3];
    let mut prev_transport = [0.0; 3];
    for j in 0..regions {
        let b = material.bend_diag[j];
        let dk = sub(scratch.kappa[j], material.rest_kappa[j]);
        let bk = [b[0] * dk[0], b[1] * dk[1], b[2] * dk[2]];
        let eps3 = scratch.voronoi_dilatations[j].powi(3);
        let torque = scale(bk, 1.0 / eps3);
        let transport = scale(
            cross(scratch.kappa[j], bk),
            material.voronoi_rest_length[j] / eps3,
        );
        scratch.elem_couple[j] = add(
            scratch.elem_couple[j],
            add(sub(torque, prev_torque), scale(add(transport, prev_transport), 0.5)),
        );
        prev_torque = torque;
        prev_transport = transport;
        if j + 1 == regions {
            scratch.elem_couple[j + 1] = add(
                scratch.elem_couple[j + 1],
                add(scale(torque, -1.0), scale(transport, 0.5)),
            );
        }
    }
}

/// Velocity update v += dt F/m, omega += dt e J^-1 c.
pub fn apply_accelerations(
    velocities: &mut [Vec3],
    angular_velocities: &mut [Vec3],
    material: &MaterialView<'_>,
    scratch: &ScratchView<'_>,
    dt: f64,
) {
    for i in 0..velocities.len() {
        let f = scratch.node_force[i];
        let inv_m = dt / material.nodal_mass[i];
        velocities[i] = add(velocities[i], scale(f, inv_m));
    }
    for k in 0..angular_velocities.len() {
        let inv_j = material.inv_inertia_diag[k];
        let c = scratch.elem_couple[k];
        let e_dt = scratch.dilatations[k] * dt;
        let w = &mut angular_velocities[k];
        w[0] += e_dt * inv_j[0] * c[0];
        w[1] += e_dt * inv_j[1] * c[1];
        w[2] += e_dt * inv_j[2] * c[2];
    }
}

/// Half-step kinematic drift: r += v h, Q <- rotate(omega, h).
pub fn kinematic_drift(
    positions: &mut [Vec3],
    directors: FramesMut<'_>,
    velocities: &[Vec3],
    angular_velocities: &[Vec3],
    h: f64,
) {
    for i in 0..positions.len() {
        positions[i] = add(positions[i], scale(velocities[i], h));
    }
    // Negative scale realizes the physical frame update for +omega.
    so3_rotate_inplace(directors, angular_velocities, -h);
}

/// Largest explicit-stable timestep.
///
/// Two mode families bound the step. The axial/flexural waves give the
/// familiar `l_hat_min * sqrt(rho / E)`. The transverse shear-rotation mode
/// (an element's frame librating against the shear potential) has frequency
/// `sqrt(alpha_c G A / (rho I))  =  (2 / r) * sqrt(alpha_c G / rho)`
/// independent of element length, so for elements longer than a few radii it
/// is the stiffest mode in the system and the radius controls the step.
pub fn stable_dt(material: &MaterialView<'_>) -> f64 {
    let l_min = material
        .rest_length
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let r_min = material
        .radius
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let s = &material.scalars;
    let axial = l_min * (s.density / s.youngs_modulus).sqrt();
    let shear_rotation = r_min * (s.density / (s.shear_correction * s.shear_modulus)).sqrt();
    DT_SAFETY_FACTOR * axial.min(shear_rotation)
}

/// Speed above which the run is declared unstable (also trips on NaN).
pub fn instability_speed_limit(material: &MaterialView<'_>) -> f64 {
    INSTABILITY_SPEED_FACTOR
        * (material.scalars.youngs_modulus / material.scalars.density).sqrt()
}

/// Checks all nodal speeds against the instability watchdog.
pub fn check_stability(velocities: &[Vec3], limit: f64, step: u64) -> Result<(), StepError> {
    let mut max_speed: f64 = 0.0;
    for v in velocities {
        let s = norm(*v);
        if !(s <= limit) {
            // NaN fails the comparison and lands here too.
            return Err(StepError::Unstable {
                step,
                speed: s,
                limit,
            });
        }
        max_speed = max_speed.max(s);
    }
    let _ = max_speed;
    Ok(())
}

/// Strain evaluation, external + internal loads, and the velocity update —
/// the middle stage of the Verlet step, at the already-drifted configuration.
///
/// `external` may add loads into the accumulators it is handed.
pub fn kick<F>(
    positions: &[Vec3],
    velocities: &mut [Vec3],
    directors: FramesRef<'_>,
    angular_velocities: &mut [Vec3],
    material: &MaterialView<'_>,
    scratch: &mut ScratchView<'_>,
    dt: f64,
    step: u64,
    external: F,
) -> Result<(), StepError>
where
    F: FnOnce(&mut MidStep<'_>),
{
    compute_strains(positions, velocities, directors, material, scratch)
        .map_err(|source| StepError::Antipodal { step, source })?;
    scratch.clear_loads();
    {
        let mut mid = MidStep {
            positions,
            velocities: &*velocities,
            directors,
            angular_velocities: &*angular_velocities,
            tangents: &*scratch.tangents,
            dilatations: &*scratch.dilatations,
            sigma: &*scratch.sigma,
            kappa: &*scratch.kappa,
            material,
            node_force: &mut *scratch.node_force,
            elem_couple: &mut *scratch.elem_couple,
        };
        external(&mut mid);
    }
    accumulate_internal_loads(directors, angular_velocities, material, scratch);
    apply_accelerations(velocities, angular_velocities, material, scratch, dt);
    Ok(())
}

/// Director renormalization policy: unconditionally every
/// `REORTHONORMALIZE_INTERVAL` steps, or when the sampled drift residual
/// exceeds `REORTHONORMALIZE_RESIDUAL`.
pub fn renormalize_policy(directors: FramesMut<'_>, step: u64) {
    if step % REORTHONORMALIZE_INTERVAL == 0
        || (step % DRIFT_CHECK_INTERVAL == 0
            && max_orthonormality_residual(directors.as_ref()) > REORTHONORMALIZE_RESIDUAL)
    {
        reorthonormalize_all(directors);
    }
}

/// One three-stage position-Verlet step on raw field slices.
///
/// `external` may add loads into the mid-step accumulators; it runs after the
/// half drift, i.e. at the mid-step configuration.
#[allow(clippy::too_many_arguments)]
pub fn verlet_step_parts<F>(
    positions: &mut [Vec3],
    velocities: &mut [Vec3],
    mut directors: FramesMut<'_>,
    angular_velocities: &mut [Vec3],
    material: &MaterialView<'_>,
    scratch: &mut ScratchView<'_>,
    dt: f64,
    step: u64,
    external: F,
) -> Result<(), StepError>
where
    F: FnOnce(&mut MidStep<'_>),
{
    let h = 0.5 * dt;
    kinematic_drift(positions, directors.reborrow(), velocities, angular_velocities, h);
    kick(
        positions,
        velocities,
        directors.as_ref(),
        angular_velocities,
        material,
        scratch,
        dt,
        step,
        external,
    )?;
    kinematic_drift(positions, directors.reborrow(), velocities, angular_velocities, h);
    renormalize_policy(directors, step);
    Ok(())
}

/// One three-stage position-Verlet step for a standalone rod.
pub fn verlet_step<F>(
    state: &mut RodState,
    material: &MaterialProperties,
    scratch: &mut RodScratch,
    dt: f64,
    step: u64,
    external: F,
) -> Result<(), StepError>
where
    F: FnOnce(&mut MidStep<'_>),
{
    verlet_step_parts(
        &mut state.positions,
        &mut state.velocities,
        state.directors.as_mut(),
        &mut state.angular_velocities,
        &material.view(),
        &mut scratch.view(),
        dt,
        step,
        external,
    )
}

/// Mechanical energy split by reservoir.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EnergyBreakdown {
    pub translational: f64,
    pub rotational: f64,
    pub shear_stretch: f64,
    pub bend_twist: f64,
}

impl EnergyBreakdown {
    pub fn total(&self) -> f64 {
        self.translational + self.rotational + self.shear_stretch + self.bend_twist
    }
}

/// Computes all mechanical energy reservoirs at the given configuration.
pub fn mechanical_energy_parts(
    positions: &[Vec3],
    velocities: &[Vec3],
    directors: FramesRef<'_>,
    angular_velocities: &[Vec3],
    material: &MaterialView<'_>,
    scratch: &mut ScratchView<'_>,
) -> Result<EnergyBreakdown, math::AntipodalRotation> {
    compute_strains(positions, velocities, directors, material, scratch)?;
    let mut out = EnergyBreakdown::default();
    for i in 0..positions.len() {
        out.translational += 0.5 * material.nodal_mass[i] * math::norm_sq(velocities[i]);
    }
    for k in 0..directors.len() {
        let w = angular_velocities[k];
        let j = material.inertia_diag[k];
        out.rotational += 0.5 * (j[0] * w[0] * w[0] + j[1] * w[1] * w[1] + j[2] * w[2] * w[2]);
        let s = material.shear_diag[k];
        let sig = scratch.sigma[k];
        out.shear_stretch += 0.5
            * (s[0] * sig[0] * sig[0] + s[1] * sig[1] * sig[1] + s[2] * sig[2] * sig[2])
            * material.rest_length[k];
    }
    for j in 0..scratch.kappa.len() {
        let b = material.bend_diag[j];
        let dk = sub(scratch.kappa[j], material.rest_kappa[j]);
        out.bend_twist += 0.5
            * (b[0] * dk[0] * dk[0] + b[1] * dk[1] * dk[1] + b[2] * dk[2] * dk[2])
            * material.voronoi_rest_length[j];
    }
    Ok(out)
}

/// Convenience form of `mechanical_energy_parts` for a standalone rod.
pub fn mechanical_energy(
    state: &RodState,
    material: &MaterialProperties,
    scratch: &mut RodScratch,
) -> Result<EnergyBreakdown, math::AntipodalRotation> {
    mechanical_energy_parts(
        &state.positions,
        &state.velocities,
        state.directors.as_ref(),
        &state.angular_velocities,
        &material.view(),
        &mut scratch.view(),
    )
}

/// Total linear momentum sum(m v).
pub fn linear_momentum(velocities: &[Vec3], nodal_mass: &[f64]) -> Vec3 {
    let mut p = [0.0; 3];
    for i in 0..velocities.len() {
        p = add(p, scale(velocities[i], nodal_mass[i]));
    }
    p
}

/// Total angular momentum about the origin: sum(r x m v) + sum(Q^T J omega).
pub fn angular_momentum(
    positions: &[Vec3],
    velocities: &[Vec3],
    directors: FramesRef<'_>,
    angular_velocities: &[Vec3],
    material: &MaterialView<'_>,
) -> Vec3 {
    let mut l = [0.0; 3];
    for i in 0..positions.len() {
        l = add(
            l,
            cross(positions[i], scale(velocities[i], material.nodal_mass[i])),
        );
    }
    for k in 0..directors.len() {
        let w = angular_velocities[k];
        let j = material.inertia_diag[k];
        let jw = [j[0] * w[0], j[1] * w[1], j[2] * w[2]];
        l = add(l, mat_t_vec(&directors.get(k), jw));
    }
    l
}

/// A kinematic boundary condition applied to one end of a rod.
#[derive(Debug, Clone, PartialEq)]
pub enum RodConstraint {
    /// Fixes the first node's position and the first element's frame.
    ClampStart { position: Vec3, frame: Mat3 },
    /// Fixes only the first node's position.
    PinStart { position: Vec3 },
}

impl RodConstraint {
    pub fn apply(
        &self,
        positions: &mut [Vec3],
        velocities: &mut [Vec3],
        mut directors: FramesMut<'_>,
        angular_velocities: &mut [Vec3],
    ) {
        match self {
            RodConstraint::ClampStart { position, frame } => {
                positions[0] = *position;
                velocities[0] = [0.0; 3];
                directors.set(0, *frame);
                angular_velocities[0] = [0.0; 3];
            }
            RodConstraint::PinStart { position } => {
                positions[0] = *position;
                velocities[0] = [0.0; 3];
            }
        }
    }
}

/// Exponential velocity damping used by dynamic relaxation toward statics.
pub fn damp_velocities(
    velocities: &mut [Vec3],
    angular_velocities: &mut [Vec3],
    damping: f64,
    dt: f64,
) {
    let f = (-damping * dt).exp();
    for v in velocities.iter_mut() {
        *v = scale(*v, f);
    }
    for w in angular_velocities.iter_mut() {
        *w = scale(*w, f);
    }
}

/// Max nodal speed, the relaxation convergence measure.
pub fn max_speed(velocities: &[Vec3]) -> f64 {
    velocities.iter().map(|v| norm(*v)).fold(0.0, f64::max)
}
