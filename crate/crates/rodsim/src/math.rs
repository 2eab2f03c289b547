//! Small fixed-size vector/matrix kernels used throughout the engine.
//!
//! Conventions:
//! - `Vec3` is `[f64; 3]`, `Mat3` is row-major `[f64; 9]`.
//! - Director frames are stored as row matrices: row 0..2 are the directors
//!   d1, d2, d3 expressed in the lab frame, so `Q * v` maps lab -> material
//!   and `Q^T * v` maps material -> lab.
//! - `rotation_matrix(phi)` is the right-hand-rule Rodrigues exponential
//!   `exp(skew(phi))`; applying it to a frame is the plain matrix product
//!   `Q <- R * Q` (sign convention locked by `quarter_turn_convention`).

pub type Vec3 = [f64; 3];
/// Row-major 3x3 matrix.
pub type Mat3 = [f64; 9];

pub const IDENTITY: Mat3 = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];

/// Angle below which rotation kernels switch to a two-term series branch.
pub const SO3_SERIES_ANGLE: f64 = 1e-6;
/// Angle below which the Rodrigues exponential uses its four-term polynomial
/// branch (truncation error < 2e-17 relative at the boundary).
pub const SO3_POLY_ANGLE: f64 = 0.04;
/// Angles within this margin of pi are rejected as anti-podal (log map is ill-conditioned).
pub const SO3_ANTIPODAL_MARGIN: f64 = 1e-6;

#[inline(always)]
pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline(always)]
pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline(always)]
pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline(always)]
pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline(always)]
pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline(always)]
pub fn norm_sq(a: Vec3) -> f64 {
    dot(a, a)
}

#[inline(always)]
pub fn norm(a: Vec3) -> f64 {
    norm_sq(a).sqrt()
}

/// Returns `a / |a|`; for a zero vector returns the zero vector.
#[inline(always)]
pub fn normalize(a: Vec3) -> Vec3 {
    let n = norm(a);
    if n > 0.0 {
        scale(a, 1.0 / n)
    } else {
        [0.0; 3]
    }
}

#[inline(always)]
pub fn mat_vec(m: &Mat3, v: Vec3) -> Vec3 {
    [
        m[0] * v[0] + m[1] * v[1] + m[2] * v[2],
        m[3] * v[0] + m[4] * v[1] + m[5] * v[2],
        m[6] * v[0] + m[7] * v[1] + m[8] * v[2],
    ]
}

/// `m^T * v`: for a row-director frame this maps material -> lab.
#[inline(always)]
pub fn mat_t_vec(m: &Mat3, v: Vec3) -> Vec3 {
    [
        m[0] * v[0] + m[3] * v[1] + m[6] * v[2],
        m[1] * v[0] + m[4] * v[1] + m[7] * v[2],
        m[2] * v[0] + m[5] * v[1] + m[8] * v[2],
    ]
}

#[inline(always)]
pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [0.0; 9];
    for i in 0..3 {
        for j in 0..3 {
            out[3 * i + j] = a[3 * i] * b[j] + a[3 * i + 1] * b[3 + j] + a[3 * i + 2] * b[6 + j];
        }
    }
    out
}

/// `a * b^T`; the relative rotation between two row-director frames.
#[inline(always)]
pub fn mat_mul_nt(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [0.0; 9];
    for i in 0..3 {
        for j in 0..3 {
            out[3 * i + j] =
                a[3 * i] * b[3 * j] + a[3 * i + 1] * b[3 * j + 1] + a[3 * i + 2] * b[3 * j + 2];
        }
    }
    out
}

#[inline(always)]
pub fn transpose(m: &Mat3) -> Mat3 {
    [m[0], m[3], m[6], m[1], m[4], m[7], m[2], m[5], m[8]]
}

/// Vector-from-skew extraction: `ax(U)_i = eps_ijk U_kj / 2`.
///
/// For U = skew(w) this recovers w; for a rotation matrix it returns
/// `sin(theta) * axis`.
#[inline(always)]
pub fn ax(m: &Mat3) -> Vec3 {
    [
        0.5 * (m[7] - m[5]),
        0.5 * (m[2] - m[6]),
        0.5 * (m[3] - m[1]),
    ]
}

/// Skew matrix with `skew(w) * u = w x u`.
#[inline(always)]
pub fn skew(w: Vec3) -> Mat3 {
    [0.0, -w[2], w[1], w[2], 0.0, -w[0], -w[1], w[0], 0.0]
}

/// Rodrigues exponential `exp(skew(phi))` with a series branch for small angles.
///
/// Full branch: R = I + sin(t)*K + (1-cos(t))*K^2 with K = skew(phi)/t.
/// Series branch (t < SO3_POLY_ANGLE): sin(t)/t and (1-cos(t))/t^2 expanded to
/// four even terms, applied to the unnormalized skew(phi). At the branch point
/// the truncation error is below 2e-17 relative — under half an ulp — so the
/// branch is invisible to callers; it exists because integrator drift angles
/// are |omega| dt/2 (1e-4 rad scale), making the trig-free path the hot one.
#[inline(always)]
pub fn rotation_matrix(phi: Vec3) -> Mat3 {
    let t2 = norm_sq(phi);
    // a = sin(t)/t, b = (1-cos(t))/t^2, both applied to skew(phi) directly.
    let (a, b) = if t2 < SO3_POLY_ANGLE * SO3_POLY_ANGLE {
        (
            1.0 + t2 * (-1.0 / 6.0 + t2 * (1.0 / 120.0 + t2 * (-1.0 / 5040.0))),
            0.5 + t2 * (-1.0 / 24.0 + t2 * (1.0 / 720.0 + t2 * (-1.0 / 40320.0))),
        )
    } else {
        let t = t2.sqrt();
        (t.sin() / t, (1.0 - t.cos()) / t2)
    };
    let (x, y, z) = (phi[0], phi[1], phi[2]);
    // K^2 entries written out; K = skew(phi).
    let xx = x * x;
    let yy = y * y;
    let zz = z * z;
    let xy = x * y;
    let xz = x * z;
    let yz = y * z;
    [
        1.0 + b * (-yy - zz),
        b * xy - a * z,
        b * xz + a * y,
        b * xy + a * z,
        1.0 + b * (-xx - zz),
        b * yz - a * x,
        b * xz - a * y,
        b * yz + a * x,
        1.0 + b * (-xx - yy),
    ]
}

/// Error from the SO(3) log map near the anti-podal cut.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AntipodalRotation;

impl std::fmt::Display for AntipodalRotation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "rotation angle within {SO3_ANTIPODAL_MARGIN} of pi: log map ill-conditioned")
    }
}

impl std::error::Error for AntipodalRotation {}

/// Log map: rotation vector of a rotation matrix (inverse of `rotation_matrix`).
///
/// Returns a hard error (never NaN) for angles within `SO3_ANTIPODAL_MARGIN`
/// of pi, where the axis is numerically meaningless.
#[inline(always)]
pub fn rotation_vector(r: &Mat3) -> Result<Vec3, AntipodalRotation> {
    // ax(R) = sin(theta) * axis, trace = 1 + 2 cos(theta); atan2 of the pair
    // is well-conditioned for every angle, unlike acos of the trace alone.
    let a = ax(r);
    let s = norm(a);
    let c = ((r[0] + r[4] + r[8] - 1.0) * 0.5).clamp(-1.0, 1.0);
    let theta = s.atan2(c);
    if theta >= std::f64::consts::PI - SO3_ANTIPODAL_MARGIN {
        return Err(AntipodalRotation);
    }
    if c > -0.5 {
        // theta in [0, 2pi/3): the axis signal in ax(R) is O(1), so scaling
        // it by theta/sin(theta) keeps full precision.
        let f = if s < SO3_SERIES_ANGLE {
            1.0 + theta * theta / 6.0
        } else {
            theta / s
        };
        Ok(scale(a, f))
    } else {
        // Near pi the axis signal in ax(R) decays like sin(theta); recover it
        // from the symmetric part instead: R + R^T - 2c I = 2(1-c) n n^T,
        // which stays O(1)-conditioned all the way to the cut.
        let inv = 1.0 / (1.0 - c); // 1 - c >= 1.5 on this branch
        let diag = [(r[0] - c) * inv, (r[4] - c) * inv, (r[8] - c) * inv];
        let k = if diag[0] >= diag[1] && diag[0] >= diag[2] {
            0
        } else if diag[1] >= diag[2] {
            1
        } else {
            2
        };
        // The largest diagonal entry of n n^T (>= 1/3) yields its component
        // without cancellation; the other two come from the off-diagonal
        // products n_k n_j, preserving full absolute precision for small
        // components. Orient the whole axis so that ax(R) = sin(theta) n.
        let nk = diag[k].max(0.0).sqrt();
        let mut n = [0.0; 3];
        n[k] = nk;
        for j in 0..3 {
            if j != k {
                n[j] = 0.5 * (r[3 * k + j] + r[3 * j + k]) * inv / nk;
            }
        }
        if dot(a, n) < 0.0 {
            n = scale(n, -1.0);
        }
        Ok(scale(normalize(n), theta))
    }
}

/// Max-abs entry of `Q Q^T - I`; zero for an exactly orthonormal frame.
pub fn orthonormality_residual(q: &Mat3) -> f64 {
    let g = mat_mul_nt(q, q);
    let mut res: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let target = if i == j { 1.0 } else { 0.0 };
            res = res.max((g[3 * i + j] - target).abs());
        }
    }
    res
}

/// Re-orthonormalizes a row-director frame in place, preserving the d3 row
/// direction exactly and rebuilding d2 = d3 x d1 for a right-handed triad.
pub fn orthonormalize_rows(q: &mut Mat3) {
    let mut d3 = normalize([q[6], q[7], q[8]]);
    if norm_sq(d3) == 0.0 {
        d3 = [0.0, 0.0, 1.0];
    }
    let d1_raw = [q[0], q[1], q[2]];
    let mut d1 = sub(d1_raw, scale(d3, dot(d1_raw, d3)));
    if norm_sq(d1) < 1e-30 {
        // Degenerate d1: pick any direction orthogonal to d3.
        let pick = if d3[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
        d1 = sub(pick, scale(d3, dot(pick, d3)));
    }
    d1 = normalize(d1);
    let d2 = cross(d3, d1);
    *q = [d1[0], d1[1], d1[2], d2[0], d2[1], d2[2], d3[0], d3[1], d3[2]];
}
