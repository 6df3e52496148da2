//! Line-angle sensor: two incremental encoders on a rod-and-pulley head that
//! follows the center tether.
//!
//! The elevation encoder reads `theta_b`, the angle of the rod above the
//! ground plane; the azimuth encoder reads `phi_b`. The tether direction is
//! recovered from the position of the pulley relative to the tether
//! attachment point on the ground unit.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::frames::{spherical_to_cartesian, SphericalPos, Vec3};

/// Counts per encoder revolution of the reference hardware.
pub const DEFAULT_COUNTS_PER_REV: u32 = 400;

const NEWTON_MAX_ITERATIONS: usize = 50;
const NEWTON_TOLERANCE: f64 = 1e-12;
const JACOBIAN_STEP: f64 = 1e-7;

/// Mechanical dimensions of the sensor head, m.
///
/// The defaults are configuration placeholders, not measured values of any
/// particular sensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderGeometry {
    /// Length of the metal rod carrying the pulley.
    pub rod_length: f64,
    /// Length of the pulley arm on top of the rod.
    pub pulley_length: f64,
    /// Height offset between the encoders and the tether attachment point.
    pub attach_height: f64,
    /// Horizontal offset between the encoders and the tether attachment point.
    pub attach_setback: f64,
}

impl Default for EncoderGeometry {
    fn default() -> Self {
        Self {
            rod_length: 0.25,
            pulley_length: 0.05,
            attach_height: 0.10,
            attach_setback: 0.10,
        }
    }
}

impl EncoderGeometry {
    /// Geometry whose readings equal the tether angles.
    pub fn identity() -> Self {
        Self {
            rod_length: 0.0,
            pulley_length: 1.0,
            attach_height: 0.0,
            attach_setback: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.rod_length, self.pulley_length, self.attach_height, self.attach_setback];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGeometry("non-finite dimension".into()));
        }
        if self.rod_length < 0.0 || self.pulley_length < 0.0 {
            return Err(Error::InvalidGeometry("rod and pulley lengths must be non-negative".into()));
        }
        if self.rod_length == 0.0 && self.pulley_length == 0.0 {
            return Err(Error::InvalidGeometry("rod and pulley are both zero".into()));
        }
        if self.attach_height < 0.0 || self.attach_setback < 0.0 {
            return Err(Error::InvalidGeometry("attachment offsets must be non-negative".into()));
        }
        Ok(())
    }

    fn arm(&self) -> f64 {
        self.rod_length.hypot(self.pulley_length)
    }

    fn arm_angle(&self) -> f64 {
        self.rod_length.atan2(self.pulley_length)
    }
}

/// Raw angles reported by the two encoders, rad.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderReading {
    pub theta_b: f64,
    pub phi_b: f64,
}

impl EncoderReading {
    pub fn new(theta_b: f64, phi_b: f64) -> Self {
        Self { theta_b, phi_b }
    }

    /// Rounds both angles to the nearest count. `counts_per_rev == 0`
    /// leaves the reading untouched.
    pub fn quantized(&self, counts_per_rev: u32) -> Self {
        if counts_per_rev == 0 {
            return *self;
        }
        let step = 2.0 * PI / f64::from(counts_per_rev);
        Self::new(
            (self.theta_b / step).round() * step,
            (self.phi_b / step).round() * step,
        )
    }
}

/// Tether elevation and azimuth from the encoder readings.
pub fn encoder_to_angles(reading: &EncoderReading, geo: &EncoderGeometry) -> Result<(f64, f64)> {
    let arm = geo.arm();
    let rod_elevation = reading.theta_b - geo.arm_angle();
    let (s, c) = rod_elevation.sin_cos();
    let vertical = arm * s;
    let forward = arm * c * reading.phi_b.cos() - geo.attach_setback;
    let lateral = arm * c * reading.phi_b.sin();
    let horizontal = forward.hypot(lateral);
    if horizontal == 0.0 {
        return Err(Error::DegenerateGeometry);
    }
    let theta = ((vertical + geo.attach_height) / horizontal).atan();
    let phi = lateral.atan2(forward);
    Ok((theta, phi))
}

/// Position measurement on the sphere of radius `r` from measured tether angles.
pub fn angles_to_position(theta: f64, phi: f64, r: f64) -> Vec3 {
    spherical_to_cartesian(SphericalPos::new(theta, phi, r))
}

/// Encoder readings that produce the tether angles `(theta, phi)`, before
/// quantization.
///
/// Damped Newton iteration on the two-dimensional residual with a
/// finite-difference Jacobian. The first start puts the rod along the
/// tether; near the zenith that start can sit behind the encoder axis,
/// where the azimuth residual jumps by pi, so lower rod elevations are
/// tried next.
///
/// The same pulley position is reached with the rod tilted past the
/// vertical and the azimuth turned by pi; the result is reported with the
/// rod elevation in `[-pi/2, pi/2]`.
pub fn invert_encoder(theta: f64, phi: f64, geo: &EncoderGeometry) -> Result<EncoderReading> {
    geo.validate()?;
    let mut last = Err(Error::DegenerateGeometry);
    for rod_elevation in [theta, 0.5 * theta, 0.0, -0.5 * theta] {
        last = newton(theta, phi, rod_elevation + geo.arm_angle(), geo);
        if last.is_ok() {
            break;
        }
    }
    let reading = last?;
    let rod = wrap(reading.theta_b - geo.arm_angle());
    Ok(if rod.abs() > FRAC_PI_2 {
        EncoderReading::new(wrap(PI - rod) + geo.arm_angle(), wrap(reading.phi_b + PI))
    } else {
        EncoderReading::new(rod + geo.arm_angle(), wrap(reading.phi_b))
    })
}

fn newton(theta: f64, phi: f64, theta_b0: f64, geo: &EncoderGeometry) -> Result<EncoderReading> {
    let target = Vector2::new(theta, phi);
    let residual = |x: &Vector2<f64>| -> Result<Vector2<f64>> {
        let (t, p) = encoder_to_angles(&EncoderReading::new(x[0], x[1]), geo)?;
        Ok(Vector2::new(t - target[0], wrap(p - target[1])))
    };

    let mut x = Vector2::new(theta_b0, phi);
    let mut f = residual(&x)?;
    for _ in 0..NEWTON_MAX_ITERATIONS {
        if f.amax() < NEWTON_TOLERANCE {
            return Ok(EncoderReading::new(x[0], x[1]));
        }
        let mut jac = Matrix2::zeros();
        for k in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[k] += JACOBIAN_STEP;
            xm[k] -= JACOBIAN_STEP;
            let col = (residual(&xp)? - residual(&xm)?) / (2.0 * JACOBIAN_STEP);
            jac.set_column(k, &col);
        }
        let Some(delta) = jac.lu().solve(&(-f)) else {
            return Err(Error::DegenerateGeometry);
        };
        // Backtrack until the residual decreases.
        let mut step = 1.0;
        loop {
            let candidate = x + step * delta;
            if let Ok(fc) = residual(&candidate) {
                if fc.norm() < f.norm() {
                    x = candidate;
                    f = fc;
                    break;
                }
            }
            step *= 0.5;
            if step < 1e-6 {
                return Err(Error::NonConvergence {
                    what: "encoder inversion",
                    iterations: NEWTON_MAX_ITERATIONS,
                });
            }
        }
    }
    if f.amax() < NEWTON_TOLERANCE {
        return Ok(EncoderReading::new(x[0], x[1]));
    }
    Err(Error::NonConvergence {
        what: "encoder inversion",
        iterations: NEWTON_MAX_ITERATIONS,
    })
}

/// Quantized encoder readings for the tether angles `(theta, phi)`.
pub fn angles_to_encoder(
    theta: f64,
    phi: f64,
    geo: &EncoderGeometry,
    counts_per_rev: u32,
) -> Result<EncoderReading> {
    Ok(invert_encoder(theta, phi, geo)?.quantized(counts_per_rev))
}

fn wrap(a: f64) -> f64 {
    crate::frames::wrap_angle(a)
}
