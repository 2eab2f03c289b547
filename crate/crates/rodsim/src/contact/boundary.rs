//! Environment boundaries: planes, box interiors, and driven pistons.
//!
//! A boundary is a collection of surfaces a node can press against. Each
//! surface reports its inward unit normal (pointing into the allowed region),
//! the signed distance of a query point (negative = penetrating), and the
//! surface velocity along the normal (zero except for moving pistons).
//! Substrate friction may be anisotropic, with independent multipliers for
//! sliding forward along the body axis, backward, and laterally.

use crate::math::{add, dot, norm, normalize, scale, sub, Vec3};

use super::narrow::ContactLaw;

/// Direction-dependent multipliers on the substrate friction coefficients.
///
/// `forward` scales friction when the tangential slip has a positive
/// component along the body's forward axis, `backward` when negative, and
/// `lateral` scales the slip component perpendicular to that axis. Equal
/// multipliers recover isotropic friction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrictionAnisotropy {
    pub forward: f64,
    pub backward: f64,
    pub lateral: f64,
}

impl Default for FrictionAnisotropy {
    /// Backward slip resists 1.5x harder than forward, lateral 2x — the
    /// asymmetry that lets an undulating body push itself forward over a
    /// substrate.
    fn default() -> Self {
        Self {
            forward: 1.0,
            backward: 1.5,
            lateral: 2.0,
        }
    }
}

/// Prescribed triangular-wave displacement along a piston's normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PistonMotion {
    /// Peak displacement, reached half-way through each period.
    pub amplitude: f64,
    /// Duration of one advance-and-retreat cycle.
    pub period: f64,
}

impl PistonMotion {
    /// Displacement along the normal at time `t`: rises linearly from 0 to
    /// `amplitude` over the first half period, returns linearly over the
    /// second.
    pub fn offset(&self, t: f64) -> f64 {
        let phase = (t / self.period).rem_euclid(1.0);
        if phase < 0.5 {
            2.0 * self.amplitude * phase
        } else {
            2.0 * self.amplitude * (1.0 - phase)
        }
    }

    /// Rate of `offset` at time `t` (the kinks at the turning points take the
    /// advancing value).
    pub fn speed(&self, t: f64) -> f64 {
        let phase = (t / self.period).rem_euclid(1.0);
        if phase < 0.5 {
            2.0 * self.amplitude / self.period
        } else {
            -2.0 * self.amplitude / self.period
        }
    }
}

/// The geometry of one boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryKind {
    /// Everything on the `normal` side of `point` is allowed.
    HalfSpace { point: Vec3, normal: Vec3 },
    /// The axis-aligned box `[min, max]`; `open_top` drops the `+z` face so
    /// material can be poured in from above.
    BoxInterior { min: Vec3, max: Vec3, open_top: bool },
    /// A plane at `origin` facing `normal` that advances into the domain and
    /// retreats along its own normal.
    Piston {
        origin: Vec3,
        normal: Vec3,
        motion: PistonMotion,
    },
}

/// A boundary plus its contact-law coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Boundary {
    pub kind: BoundaryKind,
    pub mu_static: f64,
    pub mu_kinetic: f64,
    /// Direction-dependent friction multipliers; `None` means isotropic.
    pub anisotropy: Option<FrictionAnisotropy>,
}

impl Boundary {
    /// Visits every surface of this boundary whose signed distance to `x` at
    /// time `t` is below `cutoff`, passing `(inward_normal, signed_distance,
    /// normal_surface_speed)`. Signed distance is measured to the surface
    /// plane; subtract the body radius to get the gap.
    pub fn for_each_surface<F>(&self, x: Vec3, t: f64, cutoff: f64, mut visit: F)
    where
        F: FnMut(Vec3, f64, f64),
    {
        match self.kind {
            BoundaryKind::HalfSpace { point, normal } => {
                let sd = dot(sub(x, point), normal);
                if sd < cutoff {
                    visit(normal, sd, 0.0);
                }
            }
            BoundaryKind::BoxInterior { min, max, open_top } => {
                // Six half-spaces (five when the top stays open), each
                // pointing into the interior.
                let faces = [
                    ([1.0, 0.0, 0.0], x[0] - min[0], true),
                    ([-1.0, 0.0, 0.0], max[0] - x[0], true),
                    ([0.0, 1.0, 0.0], x[1] - min[1], true),
                    ([0.0, -1.0, 0.0], max[1] - x[1], true),
                    ([0.0, 0.0, 1.0], x[2] - min[2], true),
                    ([0.0, 0.0, -1.0], max[2] - x[2], !open_top),
                ];
                for (normal, sd, active) in faces {
                    if active && sd < cutoff {
                        visit(normal, sd, 0.0);
                    }
                }
            }
            BoundaryKind::Piston {
                origin,
                normal,
                motion,
            } => {
                let sd = dot(sub(x, origin), normal) - motion.offset(t);
                if sd < cutoff {
                    visit(normal, sd, motion.speed(t));
                }
            }
        }
    }
}

/// Regularized friction force with direction-dependent multipliers.
///
/// `v_t` is the tangential slip velocity of the body relative to the surface,
/// `forward` a unit vector in the surface plane giving the body's forward
/// axis. Below `law.v_stick` the static coefficient acts through a linear
/// creep regularization; above it the kinetic coefficient opposes the slip.
/// The slip is split into its forward/backward and lateral components and
/// each is scaled by its multiplier. A degenerate `forward` falls back to
/// isotropic friction.
pub fn anisotropic_friction(
    v_t: Vec3,
    normal_magnitude: f64,
    forward: Vec3,
    law: &ContactLaw,
    aniso: &FrictionAnisotropy,
) -> Vec3 {
    if normal_magnitude <= 0.0 {
        return [0.0; 3];
    }
    let speed = norm(v_t);
    if speed == 0.0 {
        return [0.0; 3];
    }
    // Friction magnitude per unit slip speed: static creep below v_stick,
    // kinetic Coulomb above.
    let coeff = if speed < law.v_stick {
        law.mu_static * normal_magnitude / law.v_stick
    } else {
        law.mu_kinetic * normal_magnitude / speed
    };
    let f_len = norm(forward);
    if f_len < 1e-12 {
        return scale(v_t, -coeff);
    }
    let f_hat = scale(forward, 1.0 / f_len);
    let v_f = dot(v_t, f_hat);
    let v_lat = sub(v_t, scale(f_hat, v_f));
    let m_long = if v_f >= 0.0 {
        aniso.forward
    } else {
        aniso.backward
    };
    scale(
        add(scale(f_hat, m_long * v_f), scale(v_lat, aniso.lateral)),
        -coeff,
    )
}

/// Projects `v` onto the plane perpendicular to unit `normal`.
pub fn tangential_part(v: Vec3, normal: Vec3) -> Vec3 {
    sub(v, scale(normal, dot(v, normal)))
}

/// Unit projection of `axis` onto the surface plane of `normal`, or `None`
/// when `axis` is (numerically) parallel to the normal.
pub fn surface_forward(axis: Vec3, normal: Vec3) -> Option<Vec3> {
    let in_plane = tangential_part(axis, normal);
    if norm(in_plane) < 1e-9 {
        None
    } else {
        Some(normalize(in_plane))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn law() -> ContactLaw {
        ContactLaw {
            stiffness: 1.0e3,
            damping: 0.0,
            mu_static: 0.5,
            mu_kinetic: 0.3,
            v_stick: 1.0e-3,
        }
    }

    #[test]
    fn half_space_signed_distance() {
        let floor = Boundary {
            kind: BoundaryKind::HalfSpace {
                point: [0.0, 0.0, 0.0],
                normal: [0.0, 0.0, 1.0],
            },
            mu_static: 0.5,
            mu_kinetic: 0.3,
            anisotropy: None,
        };
        let mut hits = Vec::new();
        floor.for_each_surface([0.3, -0.2, 0.05], 0.0, 0.1, |n, sd, vs| {
            hits.push((n, sd, vs))
        });
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].0, [0.0, 0.0, 1.0]);
        assert_relative_eq!(hits[0].1, 0.05, max_relative = 1e-15);
        assert_eq!(hits[0].2, 0.0);

        // Far above the cutoff: no visit.
        let mut count = 0;
        floor.for_each_surface([0.0, 0.0, 5.0], 0.0, 0.1, |_, _, _| count += 1);
        assert_eq!(count, 0);

        // Penetrating: negative signed distance.
        let mut sd_pen = f64::NAN;
        floor.for_each_surface([0.0, 0.0, -0.02], 0.0, 0.1, |_, sd, _| sd_pen = sd);
        assert_relative_eq!(sd_pen, -0.02, max_relative = 1e-15);
    }

    #[test]
    fn box_corner_sees_three_faces_and_open_top_omits_ceiling() {
        let make = |open_top| Boundary {
            kind: BoundaryKind::BoxInterior {
                min: [0.0, 0.0, 0.0],
                max: [1.0, 1.0, 1.0],
                open_top,
            },
            mu_static: 0.5,
            mu_kinetic: 0.3,
            anisotropy: None,
        };

        // Near the (min, min, min) corner: three faces within the cutoff.
        let mut hits = Vec::new();
        make(false).for_each_surface([0.01, 0.02, 0.03], 0.0, 0.1, |n, sd, _| hits.push((n, sd)));
        assert_eq!(hits.len(), 3);
        assert!(hits.contains(&([1.0, 0.0, 0.0], 0.01)));
        assert!(hits.contains(&([0.0, 1.0, 0.0], 0.02)));
        assert!(hits.contains(&([0.0, 0.0, 1.0], 0.03)));

        // Just under the ceiling: closed box sees it, open box does not.
        let mut closed = 0;
        make(false).for_each_surface([0.5, 0.5, 0.99], 0.0, 0.1, |_, _, _| closed += 1);
        assert_eq!(closed, 1);
        let mut open = 0;
        make(true).for_each_surface([0.5, 0.5, 0.99], 0.0, 0.1, |_, _, _| open += 1);
        assert_eq!(open, 0);
    }

    #[test]
    fn piston_triangular_profile() {
        let motion = PistonMotion {
            amplitude: 0.2,
            period: 4.0,
        };
        assert_relative_eq!(motion.offset(0.0), 0.0, epsilon = 1e-15);
        assert_relative_eq!(motion.offset(1.0), 0.1, epsilon = 1e-15); // T/4
        assert_relative_eq!(motion.offset(2.0), 0.2, epsilon = 1e-15); // T/2
        assert_relative_eq!(motion.offset(3.0), 0.1, epsilon = 1e-15); // 3T/4
        assert_relative_eq!(motion.offset(4.0), 0.0, epsilon = 1e-15); // T wraps
        assert_relative_eq!(motion.offset(9.0), 0.1, epsilon = 1e-15); // 2T + T/4

        // Finite-difference oracle away from the kinks.
        let h = 1e-6;
        for &t in &[0.3, 0.7, 1.5, 2.3, 3.1, 3.9] {
            let fd = (motion.offset(t + h) - motion.offset(t - h)) / (2.0 * h);
            assert_relative_eq!(motion.speed(t), fd, max_relative = 1e-8);
        }

        // Advancing speed positive, retreating negative, magnitudes equal.
        assert!(motion.speed(1.0) > 0.0);
        assert!(motion.speed(3.0) < 0.0);
        assert_relative_eq!(motion.speed(1.0), -motion.speed(3.0), epsilon = 1e-15);
    }

    #[test]
    fn piston_surface_tracks_motion() {
        let motion = PistonMotion {
            amplitude: 0.5,
            period: 2.0,
        };
        let piston = Boundary {
            kind: BoundaryKind::Piston {
                origin: [0.0, 0.0, 0.0],
                normal: [1.0, 0.0, 0.0],
                motion,
            },
            mu_static: 0.5,
            mu_kinetic: 0.3,
            anisotropy: None,
        };
        // At t = T/4 the face has advanced amplitude/2 = 0.25 along +x, so a
        // point at x = 0.3 sits 0.05 ahead of it, moving at +2A/T = 0.5.
        let mut seen = None;
        piston.for_each_surface([0.3, 0.0, 0.0], 0.5, 0.1, |n, sd, vs| {
            seen = Some((n, sd, vs));
        });
        let (n, sd, vs) = seen.expect("within cutoff");
        assert_eq!(n, [1.0, 0.0, 0.0]);
        assert_relative_eq!(sd, 0.05, epsilon = 1e-15);
        assert_relative_eq!(vs, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn anisotropy_scales_each_direction() {
        let aniso = FrictionAnisotropy {
            forward: 1.0,
            backward: 1.5,
            lateral: 2.0,
        };
        let law = law();
        let n_mag = 10.0;
        let fwd = [1.0, 0.0, 0.0];
        // All slips well above v_stick: kinetic regime, coeff = mu_k * N / |v|.
        let v = 0.1;

        // Pure forward slide.
        let f = anisotropic_friction([v, 0.0, 0.0], n_mag, fwd, &law, &aniso);
        assert_relative_eq!(f[0], -0.3 * n_mag * 1.0, max_relative = 1e-12);
        assert_eq!((f[1], f[2]), (0.0, 0.0));

        // Pure backward slide: 1.5x.
        let f = anisotropic_friction([-v, 0.0, 0.0], n_mag, fwd, &law, &aniso);
        assert_relative_eq!(f[0], 0.3 * n_mag * 1.5, max_relative = 1e-12);

        // Pure lateral slide: 2x.
        let f = anisotropic_friction([0.0, v, 0.0], n_mag, fwd, &law, &aniso);
        assert_relative_eq!(f[1], -0.3 * n_mag * 2.0, max_relative = 1e-12);
        assert_eq!((f[0], f[2]), (0.0, 0.0));

        // Mixed slip decomposes into per-axis multiples.
        let v_t = [0.06, -0.08, 0.0];
        let f = anisotropic_friction(v_t, n_mag, fwd, &law, &aniso);
        let speed = norm(v_t);
        let coeff = 0.3 * n_mag / speed;
        assert_relative_eq!(f[0], -coeff * 1.0 * 0.06, max_relative = 1e-12);
        assert_relative_eq!(f[1], coeff * 2.0 * 0.08, max_relative = 1e-12);

        // Unit multipliers reduce to isotropic kinetic friction.
        let iso = FrictionAnisotropy {
            forward: 1.0,
            backward: 1.0,
            lateral: 1.0,
        };
        let f = anisotropic_friction(v_t, n_mag, fwd, &law, &iso);
        let expect = scale(v_t, -0.3 * n_mag / speed);
        for k in 0..3 {
            assert_relative_eq!(f[k], expect[k], max_relative = 1e-12);
        }

        // Degenerate forward axis: isotropic fallback.
        let f = anisotropic_friction(v_t, n_mag, [0.0; 3], &law, &aniso);
        for k in 0..3 {
            assert_relative_eq!(f[k], expect[k], max_relative = 1e-12);
        }
    }

    #[test]
    fn anisotropic_static_regime_uses_creep() {
        let aniso = FrictionAnisotropy::default();
        let law = law();
        // Slip at half of v_stick, pure lateral: creep scale mu_s*N/v_stick.
        let v_t = [0.0, 0.5 * law.v_stick, 0.0];
        let f = anisotropic_friction(v_t, 10.0, [1.0, 0.0, 0.0], &law, &aniso);
        let expect = -(0.5 * 10.0 / law.v_stick) * aniso.lateral * v_t[1];
        assert_relative_eq!(f[1], expect, max_relative = 1e-12);
    }

    #[test]
    fn surface_forward_projects_and_rejects_parallel() {
        let n = [0.0, 0.0, 1.0];
        let f = surface_forward([1.0, 0.0, 1.0], n).unwrap();
        assert_relative_eq!(f[0], 1.0, max_relative = 1e-15);
        assert_eq!((f[1], f[2]), (0.0, 0.0));
        assert!(surface_forward([0.0, 0.0, 1.0], n).is_none());
    }
}
