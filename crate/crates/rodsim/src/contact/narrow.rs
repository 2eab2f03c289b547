//! Narrow phase: exact segment-segment distance and the penalty contact law.
//!
//! Contact between two capsules reduces to the minimum distance between
//! their axis segments. The normal force is a damped linear penalty on
//! penetration (no adhesion: clamped at zero), and friction is regularized
//! Coulomb — velocity-proportional static force capped at the static cone,
//! kinetic force opposing the tangential slip direction.

use crate::math::{add, dot, norm, scale, sub, Vec3};

/// Closest points between two segments: `point_a = p0 + param_a (p1 - p0)`
/// with `param_a` clamped to [0, 1]; likewise for B.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestPair {
    pub point_a: Vec3,
    pub point_b: Vec3,
    pub param_a: f64,
    pub param_b: f64,
    pub distance: f64,
}

/// Global minimum distance between closed segments [p0,p1] and [q0,q1]
/// (clamped-parameter solution of the distance quadratic; zero-length
/// segments degrade to points).
pub fn segment_min_distance(p0: Vec3, p1: Vec3, q0: Vec3, q1: Vec3) -> ClosestPair {
    let d1 = sub(p1, p0);
    let d2 = sub(q1, q0);
    let r = sub(p0, q0);
    let a = dot(d1, d1);
    let e = dot(d2, d2);
    let f = dot(d2, r);

    let (s, t);
    if a == 0.0 && e == 0.0 {
        s = 0.0;
        t = 0.0;
    } else if a == 0.0 {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = dot(d1, r);
        if e == 0.0 {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = dot(d1, d2);
            let denom = a * e - b * b;
            // Parallel segments (denom == 0): any point of the overlap is a
            // minimizer; start from s = 0 and let the t-clamp refine.
            let s0 = if denom != 0.0 {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let t0 = (b * s0 + f) / e;
            if t0 < 0.0 {
                t = 0.0;
                s = (-c / a).clamp(0.0, 1.0);
            } else if t0 > 1.0 {
                t = 1.0;
                s = ((b - c) / a).clamp(0.0, 1.0);
            } else {
                t = t0;
                s = s0;
            }
        }
    }

    let point_a = add(p0, scale(d1, s));
    let point_b = add(q0, scale(d2, t));
    ClosestPair {
        point_a,
        point_b,
        param_a: s,
        param_b: t,
        distance: norm(sub(point_a, point_b)),
    }
}

/// Penalty-contact parameters for one contact (pairwise-combined upstream).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactLaw {
    /// Normal penalty stiffness k (force / length).
    pub stiffness: f64,
    /// Normal damping gamma (force / velocity).
    pub damping: f64,
    pub mu_static: f64,
    pub mu_kinetic: f64,
    /// Below this slip speed the contact is in the (regularized) static regime.
    pub v_stick: f64,
}

/// Magnitude of the repulsive normal force for signed `gap` (negative =
/// penetration) and `gap_rate` = d(gap)/dt (positive = separating):
/// `k |gap| - gamma gap_rate`, clamped at zero both for non-penetrating
/// gaps and against adhesion.
pub fn normal_force_magnitude(gap: f64, gap_rate: f64, law: &ContactLaw) -> f64 {
    if gap >= 0.0 {
        return 0.0;
    }
    (law.stiffness * (-gap) - law.damping * gap_rate).max(0.0)
}

/// Friction force on body A for tangential velocity `v_t` of A relative to B.
/// Regularized Coulomb: below `v_stick` the force is proportional to the slip
/// velocity and reaches the static cone exactly at `v_stick`; above it the
/// kinetic force `mu_k |F_n|` opposes the slip direction. Never exceeds
/// `mu_s |F_n|` (requires `mu_k <= mu_s`, enforced at configuration).
pub fn friction_force(v_t: Vec3, normal_magnitude: f64, law: &ContactLaw) -> Vec3 {
    if normal_magnitude <= 0.0 {
        return [0.0; 3];
    }
    let speed = norm(v_t);
    if speed < law.v_stick {
        scale(v_t, -law.mu_static * normal_magnitude / law.v_stick)
    } else {
        scale(v_t, -law.mu_kinetic * normal_magnitude / speed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lerp(p0: Vec3, p1: Vec3, t: f64) -> Vec3 {
        add(p0, scale(sub(p1, p0), t))
    }

    /// Golden-section minimization of a unimodal function on [lo, hi];
    /// returns the minimum VALUE.
    fn golden_min(mut lo: f64, mut hi: f64, eval: &dyn Fn(f64) -> f64) -> f64 {
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        let (mut x1, mut x2) = (hi - phi * (hi - lo), lo + phi * (hi - lo));
        let (mut f1, mut f2) = (eval(x1), eval(x2));
        for _ in 0..80 {
            if f1 < f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - phi * (hi - lo);
                f1 = eval(x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + phi * (hi - lo);
                f2 = eval(x2);
            }
        }
        f1.min(f2).min(eval(lo)).min(eval(hi))
    }

    /// Independent oracle: nested golden-section search. The distance is the
    /// norm of an affine map of (s, t), hence jointly convex, so
    /// `g(s) = min_t d(s, t)` is convex too and both 1-D searches converge
    /// globally — no zigzag stalls like coordinate descent on diagonal
    /// valleys.
    fn oracle_min_distance(p0: Vec3, p1: Vec3, q0: Vec3, q1: Vec3) -> f64 {
        let d = |s: f64, t: f64| norm(sub(lerp(p0, p1, s), lerp(q0, q1, t)));
        golden_min(0.0, 1.0, &|s| golden_min(0.0, 1.0, &|t| d(s, t)))
    }

    /// Parallel unit segments offset perpendicular by d: distance d.
    #[test]
    fn parallel_offset() {
        let cp = segment_min_distance(
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 0.3, 0.0],
            [1.0, 0.3, 0.0],
        );
        assert_eq!(cp.distance, 0.3);
    }

    /// Perpendicular crossing segments: distance 0 at the crossing.
    #[test]
    fn perpendicular_crossing() {
        let cp = segment_min_distance(
            [-1.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.25, -1.0, 0.0],
            [0.25, 1.0, 0.0],
        );
        assert!(cp.distance < 1e-14);
        assert!((cp.param_a - 0.625).abs() < 1e-12);
        assert!((cp.param_b - 0.5).abs() < 1e-12);
    }

    /// Zero-length segments degrade to point distances.
    #[test]
    fn degenerate_points() {
        let p = [1.0, 2.0, 3.0];
        let q = [4.0, 6.0, 3.0];
        let cp = segment_min_distance(p, p, q, q);
        assert_eq!(cp.distance, 5.0);
        let cp = segment_min_distance(p, p, [0.0, 2.0, 3.0], [4.0, 2.0, 3.0]);
        assert_eq!(cp.distance, 0.0);
    }

    /// Closest-point consistency: the reported distance equals the distance
    /// between the reported points, and both parameters are in range.
    #[test]
    fn closest_points_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let v = |rng: &mut ChaCha8Rng| -> Vec3 {
                [
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ]
            };
            let (p0, p1, q0, q1) = (v(&mut rng), v(&mut rng), v(&mut rng), v(&mut rng));
            let cp = segment_min_distance(p0, p1, q0, q1);
            assert!((0.0..=1.0).contains(&cp.param_a));
            assert!((0.0..=1.0).contains(&cp.param_b));
            assert!((norm(sub(cp.point_a, cp.point_b)) - cp.distance).abs() <= 1e-10);
            // Symmetric under argument swap.
            let swapped = segment_min_distance(q0, q1, p0, p1);
            assert!((swapped.distance - cp.distance).abs() <= 1e-12);
        }
    }

    /// 2e4 random segment pairs against the nested golden-section oracle,
    /// including near-parallel and degenerate shapes.
    #[test]
    fn random_pairs_match_convex_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut checked = 0usize;
        while checked < 20_000 {
            let v = |rng: &mut ChaCha8Rng| -> Vec3 {
                [
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                ]
            };
            let p0 = v(&mut rng);
            let q0 = v(&mut rng);
            // Mix shapes: general, short, near-parallel, point-like.
            let (p1, q1) = match checked % 4 {
                0 => (v(&mut rng), v(&mut rng)),
                1 => (
                    add(p0, scale(v(&mut rng), 0.01)),
                    add(q0, scale(v(&mut rng), 0.01)),
                ),
                2 => {
                    let d = v(&mut rng);
                    (add(p0, d), add(q0, scale(d, 1.0 + 1e-9)))
                }
                _ => (p0, v(&mut rng)),
            };
            let fast = segment_min_distance(p0, p1, q0, q1).distance;
            let slow = oracle_min_distance(p0, p1, q0, q1);
            assert!(
                fast <= slow + 1e-12 && (slow - fast).abs() <= 1e-9,
                "fast {fast} vs oracle {slow} for {p0:?}->{p1:?}, {q0:?}->{q1:?}"
            );
            checked += 1;
        }
    }

    fn law() -> ContactLaw {
        ContactLaw {
            stiffness: 1000.0,
            damping: 2.0,
            mu_static: 0.5,
            mu_kinetic: 0.3,
            v_stick: 1e-4,
        }
    }

    /// No force outside penetration; adhesion clamped away.
    #[test]
    fn normal_force_clamps() {
        let l = law();
        assert_eq!(normal_force_magnitude(0.01, 0.0, &l), 0.0);
        assert_eq!(normal_force_magnitude(0.0, -5.0, &l), 0.0);
        // Static penetration delta: |F| = k delta.
        assert_eq!(normal_force_magnitude(-0.002, 0.0, &l), 2.0);
        // Fast separation overwhelms the spring: clamped to zero, no adhesion.
        assert_eq!(normal_force_magnitude(-0.002, 10.0, &l), 0.0);
        // Approach adds damping force.
        assert_eq!(normal_force_magnitude(-0.002, -1.0, &l), 4.0);
    }

    /// Kinetic friction magnitude and direction; static regularization caps
    /// at the cone; zero normal force gives zero friction.
    #[test]
    fn friction_regimes() {
        let l = law();
        assert_eq!(friction_force([1.0, 0.0, 0.0], 0.0, &l), [0.0; 3]);
        // Sliding: mu_k |F_n| opposing v_t.
        let f = friction_force([2.0, 0.0, 0.0], 10.0, &l);
        assert!((f[0] + 3.0).abs() < 1e-12 && f[1] == 0.0 && f[2] == 0.0);
        // Static: proportional to v_t, reaching mu_s |F_n| at v_stick.
        let f = friction_force([0.5e-4, 0.0, 0.0], 10.0, &l);
        assert!((f[0] + 2.5).abs() < 1e-12);
        // Cone invariant across the regime boundary.
        for &speed in &[1e-6, 0.5e-4, 0.99e-4, 1e-4, 1.0, 100.0] {
            let f = friction_force([speed, 0.0, 0.0], 10.0, &l);
            assert!(norm(f) <= l.mu_static * 10.0 + 1e-12, "speed {speed}");
        }
    }
}
