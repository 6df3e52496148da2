//! Wing attitude as a scalar-first quaternion `[q1, q2, q3, q4]` describing
//! the rotation from the wing frame `K` to `NED`.

use nalgebra::{Matrix4, UnitQuaternion, Vector4};

use crate::error::{Error, Result};
use crate::frames::{rot_ned_to_g, Mat3, Vec3};

/// Standard gravity, m/s².
pub const GRAVITY: f64 = 9.80665;

/// Tolerance on `|q| - 1` accepted by operations that build a rotation.
pub const UNIT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quat {
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
    pub q4: f64,
}

/// Angular rates about the three wing axes, rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BodyRates {
    pub wx: f64,
    pub wy: f64,
    pub wz: f64,
}

impl BodyRates {
    pub fn new(wx: f64, wy: f64, wz: f64) -> Self {
        Self { wx, wy, wz }
    }

    pub fn as_vec(&self) -> Vec3 {
        Vec3::new(self.wx, self.wy, self.wz)
    }

    pub fn from_vec(v: &Vec3) -> Self {
        Self::new(v.x, v.y, v.z)
    }
}

impl Quat {
    pub const IDENTITY: Quat = Quat { q1: 1.0, q2: 0.0, q3: 0.0, q4: 0.0 };

    /// Builds a quaternion from raw components without normalizing.
    pub fn new(q1: f64, q2: f64, q3: f64, q4: f64) -> Self {
        Self { q1, q2, q3, q4 }
    }

    pub fn from_vector(v: &Vector4<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn as_vector(&self) -> Vector4<f64> {
        Vector4::new(self.q1, self.q2, self.q3, self.q4)
    }

    pub fn norm(&self) -> f64 {
        self.as_vector().norm()
    }

    pub fn normalized(&self) -> Self {
        Self::from_vector(&self.as_vector().normalize())
    }

    /// Rotation of `angle` rad about `axis` (need not be unit).
    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 || angle == 0.0 {
            return Self::IDENTITY;
        }
        let (s, c) = (0.5 * angle).sin_cos();
        let u = axis / n;
        Self::new(c, s * u.x, s * u.y, s * u.z)
    }

    /// Quaternion of a proper rotation matrix, sign chosen with `q1 >= 0`.
    pub fn from_rotation(m: &Mat3) -> Self {
        let uq = UnitQuaternion::from_matrix(m);
        let q = Self::new(uq.w, uq.i, uq.j, uq.k);
        if q.q1 < 0.0 {
            q.negated()
        } else {
            q
        }
    }

    pub fn negated(&self) -> Self {
        Self::new(-self.q1, -self.q2, -self.q3, -self.q4)
    }

    pub fn conjugate(&self) -> Self {
        Self::new(self.q1, -self.q2, -self.q3, -self.q4)
    }

    /// Hamilton product `self ⊗ rhs`.
    pub fn mul(&self, rhs: &Quat) -> Quat {
        let (a1, a2, a3, a4) = (self.q1, self.q2, self.q3, self.q4);
        let (b1, b2, b3, b4) = (rhs.q1, rhs.q2, rhs.q3, rhs.q4);
        Quat::new(
            a1 * b1 - a2 * b2 - a3 * b3 - a4 * b4,
            a1 * b2 + a2 * b1 + a3 * b4 - a4 * b3,
            a1 * b3 - a2 * b4 + a3 * b1 + a4 * b2,
            a1 * b4 + a2 * b3 - a3 * b2 + a4 * b1,
        )
    }

    /// Rotation angle (in `[0, pi]`) of the relative rotation from `self` to `other`.
    pub fn angle_to(&self, other: &Quat) -> f64 {
        let d = self.as_vector().dot(&other.as_vector()).abs().min(1.0);
        2.0 * d.acos()
    }

    fn check_unit(&self) -> Result<()> {
        let n = self.norm();
        if (n - 1.0).abs() > UNIT_TOLERANCE || !n.is_finite() {
            return Err(Error::NonUnitQuaternion(n));
        }
        Ok(())
    }
}

/// Rotation matrix from `K` to `NED`.
pub fn quat_to_rot(q: &Quat) -> Result<Mat3> {
    q.check_unit()?;
    let Quat { q1, q2, q3, q4 } = *q;
    Ok(Mat3::new(
        2.0 * (q1 * q1 + q2 * q2) - 1.0,
        2.0 * (q2 * q3 - q1 * q4),
        2.0 * (q2 * q4 + q1 * q3),
        2.0 * (q2 * q3 + q1 * q4),
        2.0 * (q1 * q1 + q3 * q3) - 1.0,
        2.0 * (q3 * q4 - q1 * q2),
        2.0 * (q2 * q4 - q1 * q3),
        2.0 * (q3 * q4 + q1 * q2),
        2.0 * (q1 * q1 + q4 * q4) - 1.0,
    ))
}

/// The 4×4 rate matrix `Omega(w)` of the quaternion kinematics `qdot = Omega q / 2`.
fn rate_matrix(w: &BodyRates) -> Matrix4<f64> {
    let BodyRates { wx, wy, wz } = *w;
    Matrix4::new(
        0.0, -wx, -wy, -wz, //
        wx, 0.0, -wz, wy, //
        wy, wz, 0.0, -wx, //
        wz, -wy, wx, 0.0,
    )
}

pub fn quat_derivative(q: &Quat, w: &BodyRates) -> Vector4<f64> {
    0.5 * rate_matrix(w) * q.as_vector()
}

/// Rates reproducing `qdot` through [`quat_derivative`] at attitude `q`.
///
/// Inverts the kinematics: `Omega(w) q = [0, w] ⊗ q`, hence
/// `w = vec(2 qdot ⊗ q*)` for unit `q`.
pub fn rates_from_derivative(q: &Quat, qdot: &Vector4<f64>) -> BodyRates {
    let p = Quat::from_vector(&(2.0 * qdot)).mul(&q.conjugate());
    BodyRates::new(p.q2, p.q3, p.q4)
}

/// Advances `q` by `dt` seconds at constant rates `w`.
///
/// Uses the exact solution of the linear kinematics for constant `w`:
/// `Omega(w)^2 = -|w|^2 I`, so
/// `exp(Omega dt / 2) = cos(|w| dt / 2) I + sin(|w| dt / 2) / |w| Omega`.
/// The result is renormalized.
pub fn quat_propagate(q: &Quat, w: &BodyRates, dt: f64) -> Quat {
    let rate = w.as_vec().norm();
    if rate == 0.0 {
        return q.normalized();
    }
    let half = 0.5 * rate * dt;
    let step = Matrix4::identity() * half.cos() + rate_matrix(w) * (half.sin() / rate);
    Quat::from_vector(&(step * q.as_vector())).normalized()
}

/// Gravity-compensated inertial acceleration in `G` from the accelerometer
/// reading `a_k` and the attitude estimate `q_hat`.
///
/// The accelerometer convention is the one of the IMU in use: a wing at rest
/// with `K` aligned to `NED` reads `[0, 0, +g]`, which maps to zero here.
pub fn accel_to_inertial(a_k: &Vec3, q_hat: &Quat, phi_g: f64) -> Result<Vec3> {
    let r_k_ned = quat_to_rot(q_hat)?;
    Ok(rot_ned_to_g(phi_g) * r_k_ned * a_k + Vec3::new(0.0, 0.0, GRAVITY))
}

/// Accelerometer reading that [`accel_to_inertial`] maps back to `a_g`.
pub fn inertial_to_accel(a_g: &Vec3, q: &Quat, phi_g: f64) -> Result<Vec3> {
    let r_k_ned = quat_to_rot(q)?;
    // rot_ned_to_g is its own inverse.
    Ok(r_k_ned.transpose() * rot_ned_to_g(phi_g) * (a_g - Vec3::new(0.0, 0.0, GRAVITY)))
}
