//! Quaternions, poses and the localization error metrics.
//!
//! Conventions: quaternions are scalar-first `(w, x, y, z)`; a [`Pose`] is
//! camera-to-world, so `q` rotates camera-frame vectors into the world frame
//! and `p` is the camera centre in world coordinates. The camera looks down
//! its own `+z` axis.
//!
//! The logarithm of a unit quaternion `(w, v)` is `v / |v| · atan2(|v|, w)`,
//! the axis scaled by the half rotation angle. `atan2` agrees with the
//! `acos(w)` form on the `w >= 0` hemisphere and stays well conditioned near
//! the identity.

use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::numerics::Rng;

/// Below this raw norm a 4-vector is treated as degenerate.
pub const DEGENERATE_NORM: f64 = 1e-12;
/// Vector-part norm below which the log map uses its linear limit.
pub const SMALL_ANGLE: f64 = 1e-8;
const UNIT_TOL: f64 = 1e-6;
const ORTHO_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("quaternion norm {0} is not 1")]
    NotUnit(f64),
    #[error("matrix is not orthonormal (max deviation {0:e})")]
    NotOrthonormal(f64),
    #[error("matrix is a reflection (det {0})")]
    Reflection(f64),
    #[error("median of an empty list")]
    EmptyMedian,
    #[error("raw quaternion norm {0:e} is degenerate")]
    Degenerate(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quaternion {
    pub w: f64,
    pub v: [f64; 3],
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion { w: 1.0, v: [0.0; 3] };

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, v: [x, y, z] }
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.v[0], self.v[1], self.v[2]]
    }

    pub fn norm(self) -> f64 {
        self.to_array().iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn neg(self) -> Self {
        Self::new(-self.w, -self.v[0], -self.v[1], -self.v[2])
    }

    pub fn dot(self, o: Self) -> f64 {
        self.w * o.w + self.v[0] * o.v[0] + self.v[1] * o.v[1] + self.v[2] * o.v[2]
    }

    pub fn conjugate(self) -> Self {
        Self::new(self.w, -self.v[0], -self.v[1], -self.v[2])
    }

    /// Hamilton product `self · o`.
    pub fn mul(self, o: Self) -> Self {
        let [x1, y1, z1] = self.v;
        let [x2, y2, z2] = o.v;
        Self::new(
            self.w * o.w - x1 * x2 - y1 * y2 - z1 * z2,
            self.w * x2 + x1 * o.w + y1 * z2 - z1 * y2,
            self.w * y2 - x1 * z2 + y1 * o.w + z1 * x2,
            self.w * z2 + x1 * y2 - y1 * x2 + z1 * o.w,
        )
    }

    /// Rotates `p` by this (unit) quaternion.
    pub fn rotate(self, p: [f64; 3]) -> [f64; 3] {
        let r = quat_to_matrix(self);
        [
            r[0][0] * p[0] + r[0][1] * p[1] + r[0][2] * p[2],
            r[1][0] * p[0] + r[1][1] * p[1] + r[1][2] * p[2],
            r[2][0] * p[0] + r[2][1] * p[1] + r[2][2] * p[2],
        ]
    }

    pub fn is_unit(self) -> bool {
        (self.norm() - 1.0).abs() <= UNIT_TOL
    }

    pub fn is_canonical(self) -> bool {
        canonicalize_hemisphere(self) == self
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub p: [f64; 3],
    pub q: Quaternion,
}

impl Pose {
    pub const IDENTITY: Pose = Pose {
        p: [0.0; 3],
        q: Quaternion::IDENTITY,
    };

    /// Row-major homogeneous `[R | p; 0 0 0 1]`.
    pub fn to_matrix(&self) -> [[f64; 4]; 4] {
        let r = quat_to_matrix(self.q);
        let mut m = [[0.0; 4]; 4];
        for i in 0..3 {
            m[i][..3].copy_from_slice(&r[i]);
            m[i][3] = self.p[i];
        }
        m[3][3] = 1.0;
        m
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogQuaternion(pub [f64; 3]);

impl LogQuaternion {
    pub fn norm(self) -> f64 {
        norm3(self.0)
    }
}

fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Result of [`normalize`]: the unit quaternion and whether the input was degenerate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Normalized {
    pub q: Quaternion,
    pub degenerate: bool,
}

/// Scales a raw 4-vector to unit norm; inputs with norm below 1e-12 map to the identity.
pub fn normalize(raw: [f64; 4]) -> Normalized {
    let n = raw.iter().map(|c| c * c).sum::<f64>().sqrt();
    if n < DEGENERATE_NORM {
        return Normalized {
            q: Quaternion::IDENTITY,
            degenerate: true,
        };
    }
    Normalized {
        q: Quaternion::from_array(raw.map(|c| c / n)),
        degenerate: false,
    }
}

/// Picks the representative with `w > 0`; on the `w = 0` boundary the first
/// nonzero vector component is made positive.
pub fn canonicalize_hemisphere(q: Quaternion) -> Quaternion {
    if hemisphere_sign(q) < 0.0 {
        q.neg()
    } else {
        q
    }
}

fn hemisphere_sign(q: Quaternion) -> f64 {
    if q.w > 0.0 {
        return 1.0;
    }
    if q.w < 0.0 {
        return -1.0;
    }
    match q.v.iter().find(|c| **c != 0.0) {
        Some(c) if *c < 0.0 => -1.0,
        _ => 1.0,
    }
}

pub fn quat_log(q: Quaternion) -> Result<LogQuaternion, GeometryError> {
    if !q.is_unit() {
        return Err(GeometryError::NotUnit(q.norm()));
    }
    let n = norm3(q.v);
    if n <= SMALL_ANGLE {
        return Ok(LogQuaternion(q.v));
    }
    let s = n.atan2(q.w) / n;
    Ok(LogQuaternion(q.v.map(|c| c * s)))
}

pub fn quat_exp(u: LogQuaternion) -> Quaternion {
    let n = u.norm();
    if n == 0.0 {
        return Quaternion::IDENTITY;
    }
    let s = n.sin() / n;
    Quaternion::new(n.cos(), u.0[0] * s, u.0[1] * s, u.0[2] * s)
}

/// `log(canonicalize(normalize(raw)))` together with its 3×4 Jacobian with
/// respect to `raw`.
///
/// The sign flip of canonicalization is locally constant and only enters as a
/// factor on the Jacobian.
pub fn raw_quat_log_with_jacobian(raw: [f64; 4]) -> Result<([f64; 3], [[f64; 4]; 3]), GeometryError> {
    let r = raw.iter().map(|c| c * c).sum::<f64>().sqrt();
    if r < DEGENERATE_NORM {
        return Err(GeometryError::Degenerate(r));
    }
    let qhat = raw.map(|c| c / r);
    let sign = hemisphere_sign(Quaternion::from_array(qhat));
    let q = qhat.map(|c| c * sign);
    let (w, v) = (q[0], [q[1], q[2], q[3]]);
    let n = norm3(v);

    // d log / d q, 3×4.
    let mut jl = [[0.0; 4]; 3];
    let value;
    if n <= SMALL_ANGLE {
        value = v;
        for i in 0..3 {
            jl[i][i + 1] = 1.0;
        }
    } else {
        let theta = n.atan2(w);
        let rr = w * w + n * n;
        let dtheta_dw = -n / rr;
        let dtheta_dn = w / rr;
        let ratio = theta / n;
        let dratio_dn = (dtheta_dn * n - theta) / (n * n);
        value = v.map(|c| c * ratio);
        for i in 0..3 {
            jl[i][0] = v[i] / n * dtheta_dw;
            for j in 0..3 {
                let delta = if i == j { ratio } else { 0.0 };
                jl[i][j + 1] = delta + v[i] * dratio_dn * v[j] / n;
            }
        }
    }

    // d q / d raw = sign · (I - qhat qhatᵀ) / r.
    let mut jac = [[0.0; 4]; 3];
    for i in 0..3 {
        for k in 0..4 {
            let mut acc = 0.0;
            for j in 0..4 {
                let delta = if j == k { 1.0 } else { 0.0 };
                acc += jl[i][j] * (delta - qhat[j] * qhat[k]);
            }
            jac[i][k] = acc * sign / r;
        }
    }
    Ok((value, jac))
}

/// Row-major rotation matrix of a unit quaternion.
pub fn quat_to_matrix(q: Quaternion) -> [[f64; 3]; 3] {
    let (w, [x, y, z]) = (q.w, q.v);
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

fn det3(r: &[[f64; 3]; 3]) -> f64 {
    r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1]) - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
        + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0])
}

/// Shepperd's method: branches on the largest of the trace and the diagonal.
/// The output is hemisphere-canonical.
pub fn rotation_matrix_to_quat(r: &[[f64; 3]; 3]) -> Result<Quaternion, GeometryError> {
    let mut dev: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let rtr: f64 = (0..3).map(|k| r[k][i] * r[k][j]).sum();
            let id = if i == j { 1.0 } else { 0.0 };
            dev = dev.max((rtr - id).abs());
        }
    }
    if !dev.is_finite() || dev > ORTHO_TOL {
        return Err(GeometryError::NotOrthonormal(dev));
    }
    let det = det3(r);
    if det < 0.0 {
        return Err(GeometryError::Reflection(det));
    }
    let trace = r[0][0] + r[1][1] + r[2][2];
    let q = if trace >= r[0][0] && trace >= r[1][1] && trace >= r[2][2] {
        let s = 2.0 * (1.0 + trace).sqrt();
        Quaternion::new(0.25 * s, (r[2][1] - r[1][2]) / s, (r[0][2] - r[2][0]) / s, (r[1][0] - r[0][1]) / s)
    } else if r[0][0] >= r[1][1] && r[0][0] >= r[2][2] {
        let s = 2.0 * (1.0 + r[0][0] - r[1][1] - r[2][2]).sqrt();
        Quaternion::new((r[2][1] - r[1][2]) / s, 0.25 * s, (r[0][1] + r[1][0]) / s, (r[0][2] + r[2][0]) / s)
    } else if r[1][1] >= r[2][2] {
        let s = 2.0 * (1.0 + r[1][1] - r[0][0] - r[2][2]).sqrt();
        Quaternion::new((r[0][2] - r[2][0]) / s, (r[0][1] + r[1][0]) / s, 0.25 * s, (r[1][2] + r[2][1]) / s)
    } else {
        let s = 2.0 * (1.0 + r[2][2] - r[0][0] - r[1][1]).sqrt();
        Quaternion::new((r[1][0] - r[0][1]) / s, (r[0][2] + r[2][0]) / s, (r[1][2] + r[2][1]) / s, 0.25 * s)
    };
    Ok(canonicalize_hemisphere(normalize(q.to_array()).q))
}

/// Geodesic angle between two orientations, in degrees, identifying `q` with `-q`.
///
/// Equal to `2·acos(|⟨q1, q2⟩|)` for unit inputs, evaluated as `2·atan2(|v|, |w|)`
/// of the relative rotation so that tiny angles keep full precision.
pub fn rotation_error_deg(q1: Quaternion, q2: Quaternion) -> f64 {
    // Vector part of q1*·q2 = w1·v2 − w2·v1 − v1×v2, grouped so equal inputs cancel exactly.
    let ([a, b, c], [x, y, z]) = (q1.v, q2.v);
    let v = [
        (q1.w * x - q2.w * a) - (b * z - c * y),
        (q1.w * y - q2.w * b) - (c * x - a * z),
        (q1.w * z - q2.w * c) - (a * y - b * x),
    ];
    2.0 * norm3(v).atan2(q1.dot(q2).abs()) * 180.0 / PI
}

pub fn position_error_m(p1: [f64; 3], p2: [f64; 3]) -> f64 {
    norm3([p1[0] - p2[0], p1[1] - p2[1], p1[2] - p2[2]])
}

/// Middle element after sorting; the mean of the middle pair for even counts.
pub fn median(values: &[f64]) -> Result<f64, GeometryError> {
    if values.is_empty() {
        return Err(GeometryError::EmptyMedian);
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Ok(if v.len() % 2 == 1 { v[mid] } else { 0.5 * (v[mid - 1] + v[mid]) })
}

/// Uniformly distributed rotation: a normalized 4-D standard Gaussian, canonicalized.
pub fn random_unit_quaternion(rng: &mut Rng) -> Quaternion {
    loop {
        let raw: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let n = normalize(raw);
        if !n.degenerate {
            return canonicalize_hemisphere(n.q);
        }
    }
}
