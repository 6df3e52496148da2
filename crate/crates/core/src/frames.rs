//! Coordinate frames and the static transforms between them.
//!
//! - `G`: inertial ground frame centered at the ground unit, `X` downwind
//!   along the ground-unit symmetry plane, `Z` up.
//! - `L`: local north/east/down frame tangent to the tether sphere at the
//!   wing; `L_D` points from the wing towards the ground unit.
//! - `NED`: geographic north/east/down, related to `G` by the heading
//!   `phi_g` of the ground unit.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Relative tolerance admitted on `|p_z| <= r` before reporting an
/// off-sphere position.
pub const SPHERE_TOLERANCE: f64 = 1e-9;

/// Wing position in spherical coordinates around the ground unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalPos {
    /// Elevation above the `(X, Y)` plane, rad.
    pub theta: f64,
    /// Azimuth from `X`, positive about `Z`, rad.
    pub phi: f64,
    /// Distance from the ground unit, m.
    pub r: f64,
}

impl SphericalPos {
    pub fn new(theta: f64, phi: f64, r: f64) -> Self {
        Self { theta, phi, r }
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(angle: f64) -> f64 {
    let wrapped = (angle + PI).rem_euclid(2.0 * PI) - PI;
    if wrapped <= -PI {
        wrapped + 2.0 * PI
    } else {
        wrapped
    }
}

pub fn spherical_to_cartesian(s: SphericalPos) -> Vec3 {
    let (st, ct) = s.theta.sin_cos();
    let (sp, cp) = s.phi.sin_cos();
    s.r * Vec3::new(ct * cp, ct * sp, st)
}

/// Elevation and azimuth of a position on the sphere of radius `r`.
///
/// The elevation is `asin(p_z / r)`, so positions slightly off the sphere
/// (within [`SPHERE_TOLERANCE`]) are accepted and clamped; anything further
/// out is an error, as is a position on the vertical axis.
pub fn cartesian_to_spherical(p: &Vec3, r: f64) -> Result<(f64, f64)> {
    if p.z.abs() > r * (1.0 + SPHERE_TOLERANCE) {
        return Err(Error::OffSphere { z: p.z, r });
    }
    if p.x == 0.0 && p.y == 0.0 {
        return Err(Error::DegenerateAzimuth);
    }
    let theta = (p.z / r).clamp(-1.0, 1.0).asin();
    let phi = wrap_angle(p.y.atan2(p.x));
    Ok((theta, phi))
}

/// Rotation from `G` to the local frame `L` at elevation `theta`, azimuth `phi`.
pub fn rot_g_to_l(theta: f64, phi: f64) -> Mat3 {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    Mat3::new(
        -st * cp, -st * sp, ct, //
        -sp, cp, 0.0, //
        -cp * ct, -sp * ct, -st,
    )
}

/// Rotation from `NED` to `G` for a ground unit whose `X` axis sits at
/// heading `phi_g` from north. The matrix is symmetric and its own inverse.
pub fn rot_ned_to_g(phi_g: f64) -> Mat3 {
    let (s, c) = phi_g.sin_cos();
    Mat3::new(
        c, s, 0.0, //
        s, -c, 0.0, //
        0.0, 0.0, -1.0,
    )
}

/// Velocity angle of a velocity expressed in `L`: the heading of its
/// tangent-plane projection measured from local north towards local east.
pub fn velocity_angle(v_l: &Vec3) -> Result<f64> {
    if v_l.x == 0.0 && v_l.y == 0.0 {
        return Err(Error::DegenerateVelocity);
    }
    Ok(wrap_angle(v_l.y.atan2(v_l.x)))
}
