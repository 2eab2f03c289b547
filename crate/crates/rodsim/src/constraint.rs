//! Displacement constraints applied between steps.
//!
//! A [`Clamp`] pins a rod's first node and first cross-section frame, the
//! discrete version of a built-in (cantilever) support: the base tangent is
//! enforced elastically through the first element's shear stiffness, which is
//! how the staggered discretization expresses a clamped end. Constraints are
//! applied as a projection after each completed step, so they compose with
//! either stepping protocol.

use crate::block::{BlockScratch, RodBlock};
use crate::math::{Mat3, Vec3};

/// Pins node 0 and element frame 0 of one rod.
#[derive(Debug, Clone, PartialEq)]
pub struct Clamp {
    pub rod: usize,
    /// Held position of node 0.
    pub position: Vec3,
    /// Held director frame of element 0 (rows are the directors).
    pub frame: Mat3,
}

impl Clamp {
    /// A clamp that holds the rod exactly where it currently stands.
    pub fn holding(block: &RodBlock, rod: usize) -> Self {
        let span = block.spans()[rod];
        Self {
            rod,
            position: block.positions_all()[span.node_start],
            frame: block.frames_all().get(span.elem_start),
        }
    }
}

/// Projects the ensemble onto the clamp constraints: held degrees of freedom
/// are reset to their target values and their velocities zeroed.
pub fn apply_clamps(block: &mut RodBlock, scratch: &mut BlockScratch, clamps: &[Clamp]) {
    if clamps.is_empty() {
        return;
    }
    block.for_each_rod_serial(scratch, |rod| {
        for clamp in clamps {
            if clamp.rod == rod.rod_index {
                rod.positions[0] = clamp.position;
                rod.velocities[0] = [0.0; 3];
                rod.directors.set(0, clamp.frame);
                rod.angular_velocities[0] = [0.0; 3];
            }
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{damp_velocities, max_speed, stable_dt};
    use crate::forcing::add_gravity;
    use crate::math::norm;
    use crate::rod::{straight_rod, MaterialScalars};

    /// A clamped horizontal rod sagging under gravity relaxes to the
    /// uniformly loaded cantilever: held DOFs exact, tip deflection within
    /// discretization error of q*L^4/(8*E*I).
    #[test]
    fn clamped_rod_sags_to_cantilever_deflection() {
        let n = 16;
        let (length, radius) = (0.5, 0.01);
        let scalars = MaterialScalars {
            density: 1200.0,
            youngs_modulus: 2.0e6,
            shear_modulus: 2.0e6 / 3.0,
            shear_correction: 4.0 / 3.0,
        };
        let rod = straight_rod(
            n,
            length,
            radius,
            scalars,
            [0.0; 3],
            [1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0],
        );
        // Gravity sized for a small deflection so the linear formula applies.
        let area = std::f64::consts::PI * radius * radius;
        let second_moment = area * radius * radius / 4.0;
        let g = 0.1;
        let line_load = scalars.density * area * g;
        let expected = line_load * length.powi(4)
            / (8.0 * scalars.youngs_modulus * second_moment);
        assert!(expected < 0.02 * length, "load too big for the linear check");

        let mut block = RodBlock::build(std::slice::from_ref(&rod)).unwrap();
        let mut scratch = BlockScratch::for_block(&block);
        let clamps = vec![Clamp::holding(&block, 0)];
        let dt = 0.5 * stable_dt(&block.material_view(0));
        // Near-critical damping on the fundamental bending mode.
        let damping = 8.0;
        let mut step = 0;
        loop {
            block
                .step_all(&mut scratch, usize::MAX, dt, step, &|_, mid| {
                    add_gravity(mid, [0.0, 0.0, -g])
                })
                .unwrap();
            apply_clamps(&mut block, &mut scratch, &clamps);
            block.for_each_rod_serial(&mut scratch, |rod| {
                damp_velocities(rod.velocities, rod.angular_velocities, damping, dt);
            });
            step += 1;
            let settled = max_speed(block.velocities_all()) < 1e-7 * (g * length).sqrt();
            if (settled && step > 1000) || step > 4_000_000 {
                break;
            }
        }

        let positions = block.positions_all();
        assert_eq!(positions[0], [0.0; 3], "clamped node moved");
        let held = block.frames_all().get(0);
        assert_eq!(held, clamps[0].frame, "clamped frame moved");
        let tip_drop = -positions[n][2];
        assert!(
            (tip_drop - expected).abs() <= 0.05 * expected,
            "tip deflection {tip_drop:.6e} vs expected {expected:.6e}"
        );
        // The free end stayed essentially in-plane.
        assert!(norm([positions[n][1], 0.0, 0.0]) < 1e-12);
    }
}
