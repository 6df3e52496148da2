//! Kinematic figure-eight flight on the tether sphere and synthetic sensors.
//!
//! The wing follows a 2:1 Lissajous pattern in the tether angles,
//!
//! ```text
//! theta(t) = theta0 + a_theta sin(2 w t)
//! phi(t)   = phi0   + a_phi   sin(w t),      w = 2 pi f_loop speed_scale
//! ```
//!
//! Position, velocity and acceleration follow in closed form. The wing frame
//! has `x` along the velocity and `z` pointing at the ground unit.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::attitude::{inertial_to_accel, BodyRates, Quat, GRAVITY};
use crate::error::{Error, Result};
use crate::frames::{rot_g_to_l, rot_ned_to_g, velocity_angle, Mat3, Vec3};
use crate::lineangle::{angles_to_encoder, EncoderGeometry, DEFAULT_COUNTS_PER_REV};
use crate::pipelines::SensorFrame;

/// Name of the pseudorandom generator, written into log metadata.
pub const RNG_ALGORITHM: &str = "ChaCha8";

/// Gyro measurement range, rad/s.
pub const GYRO_RANGE: f64 = 300.0 * PI / 180.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryParams {
    pub r: f64,
    pub theta0: f64,
    pub phi0: f64,
    pub a_theta: f64,
    pub a_phi: f64,
    /// Figure-eight frequency at `speed_scale == 1`, Hz.
    pub f_loop: f64,
    /// Multiplies every velocity; stands in for the wind speed.
    pub speed_scale: f64,
    pub duration: f64,
    pub phi_g: f64,
    /// Sample time of the synthesized frames, s.
    pub ts: f64,
}

impl Default for TrajectoryParams {
    fn default() -> Self {
        Self {
            r: 30.0,
            theta0: 0.7,
            phi0: 0.0,
            a_theta: 0.15,
            a_phi: 0.75,
            f_loop: 0.16,
            speed_scale: 1.0,
            duration: 60.0,
            phi_g: 0.0,
            ts: 0.02,
        }
    }
}

impl TrajectoryParams {
    pub fn omega(&self) -> f64 {
        2.0 * PI * self.f_loop * self.speed_scale
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Trajectory(msg));
        if !(self.r > 0.0) {
            return bad(format!("tether length must be positive, got {}", self.r));
        }
        if !(self.f_loop > 0.0) || !(self.speed_scale > 0.0) {
            return bad("loop frequency and speed scale must be positive".into());
        }
        if !(self.ts > 0.0) || !(self.duration >= 0.0) {
            return bad("sample time must be positive and duration non-negative".into());
        }
        let lo = self.theta0 - self.a_theta.abs();
        let hi = self.theta0 + self.a_theta.abs();
        if !(lo > 0.0 && hi < FRAC_PI_2) {
            return bad(format!("elevation range [{lo}, {hi}] leaves (0, pi/2)"));
        }
        if self.a_phi == 0.0 && self.a_theta == 0.0 {
            return bad("pattern has zero span".into());
        }
        Ok(())
    }
}

/// True state of the wing at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthSample {
    pub t: f64,
    pub p: Vec3,
    pub v: Vec3,
    pub a: Vec3,
    pub theta: f64,
    pub phi: f64,
    pub gamma: f64,
    pub gamma_dot: f64,
    /// Attitude, wing frame to `NED`.
    pub quat: Quat,
    /// Angular velocity resolved in `NED`, as consumed by the quaternion
    /// kinematics.
    pub rates: BodyRates,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    params: TrajectoryParams,
}

impl Trajectory {
    pub fn new(params: TrajectoryParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params })
    }

    pub fn params(&self) -> &TrajectoryParams {
        &self.params
    }

    /// Angles and their first two time derivatives.
    fn angles(&self, t: f64) -> ([f64; 3], [f64; 3]) {
        let p = &self.params;
        let w = p.omega();
        let (s1, c1) = (w * t).sin_cos();
        let (s2, c2) = (2.0 * w * t).sin_cos();
        let theta = [
            p.theta0 + p.a_theta * s2,
            2.0 * w * p.a_theta * c2,
            -4.0 * w * w * p.a_theta * s2,
        ];
        let phi = [p.phi0 + p.a_phi * s1, w * p.a_phi * c1, -w * w * p.a_phi * s1];
        (theta, phi)
    }

    pub fn truth_at(&self, t: f64) -> Result<TruthSample> {
        let r = self.params.r;
        let ([th, thd, thdd], [ph, phd, phdd]) = self.angles(t);
        let (st, ct) = th.sin_cos();
        let (sp, cp) = ph.sin_cos();

        let u = Vec3::new(ct * cp, ct * sp, st);
        let u_t = Vec3::new(-st * cp, -st * sp, ct);
        let u_p = Vec3::new(-ct * sp, ct * cp, 0.0);
        let u_tp = Vec3::new(st * sp, -st * cp, 0.0);
        let u_pp = Vec3::new(-ct * cp, -ct * sp, 0.0);

        let p = r * u;
        let v = r * (u_t * thd + u_p * phd);
        let a = r * (-u * thd * thd + 2.0 * u_tp * thd * phd + u_pp * phd * phd + u_t * thdd + u_p * phdd);

        let speed = v.norm();
        if speed == 0.0 {
            return Err(Error::Trajectory(format!("zero velocity at t = {t}")));
        }
        let gamma = velocity_angle(&(rot_g_to_l(th, ph) * v))?;
        let (n, e) = (thd, ct * phd);
        let (n_dot, e_dot) = (thdd, -st * thd * phd + ct * phdd);
        let gamma_dot = (n * e_dot - e * n_dot) / (n * n + e * e);

        // Wing axes in G and their rates.
        let e1 = v / speed;
        let e3 = -u;
        let e2 = e3.cross(&e1);
        let e1_dot = (a - e1 * e1.dot(&a)) / speed;
        let e3_dot = -v / r;
        let e2_dot = e3_dot.cross(&e1) + e3.cross(&e1_dot);
        let omega_g = 0.5 * (e1.cross(&e1_dot) + e2.cross(&e2_dot) + e3.cross(&e3_dot));

        let r_ng = rot_ned_to_g(self.params.phi_g);
        let r_k_g = Mat3::from_columns(&[e1, e2, e3]);
        let quat = Quat::from_rotation(&(r_ng * r_k_g));
        let rates = BodyRates::from_vec(&(r_ng * omega_g));

        Ok(TruthSample { t, p, v, a, theta: th, phi: ph, gamma, gamma_dot, quat, rates })
    }

    pub fn sample_times(&self) -> impl Iterator<Item = f64> {
        let ts = self.params.ts;
        let n = (self.params.duration / ts).round() as usize;
        (0..=n).map(move |k| k as f64 * ts)
    }
}

/// Sensor imperfections. Units follow the datasheet conventions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    /// g/√Hz.
    pub accel_noise_density: f64,
    /// Per-axis bias bound, g; each run draws a bias uniformly in `±accel_bias`.
    pub accel_bias: f64,
    /// °/s/√Hz.
    pub gyro_noise_density: f64,
    /// Per-axis bias bound, °/s.
    pub gyro_bias: f64,
    /// Standard deviation of each horizontal GPS axis, m.
    pub gps_sigma_xy: f64,
    /// Added GPS standard deviation per m/s of wing speed, s.
    pub gps_speed_inflation: f64,
    pub gps_rate: f64,
    pub gps_latency: f64,
    pub baro_resolution: f64,
    pub baro_rate: f64,
    /// Total RMS attitude error, deg.
    pub attitude_rms: f64,
    /// Encoder resolution; 0 disables quantization.
    pub encoder_cpr: u32,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            accel_noise_density: 2.5e-4,
            accel_bias: 4e-3,
            gyro_noise_density: 0.05,
            gyro_bias: 0.1,
            gps_sigma_xy: 2.5,
            gps_speed_inflation: 0.0,
            gps_rate: 4.0,
            gps_latency: 0.2,
            baro_resolution: 0.2,
            baro_rate: 9.0,
            attitude_rms: 1.0,
            encoder_cpr: DEFAULT_COUNTS_PER_REV,
            seed: 0,
        }
    }
}

impl NoiseSpec {
    /// Perfect sensors: every channel exact, GPS and barometer still at
    /// their own rates but without latency.
    pub fn zero() -> Self {
        Self {
            accel_noise_density: 0.0,
            accel_bias: 0.0,
            gyro_noise_density: 0.0,
            gyro_bias: 0.0,
            gps_sigma_xy: 0.0,
            gps_speed_inflation: 0.0,
            gps_latency: 0.0,
            baro_resolution: 0.0,
            attitude_rms: 0.0,
            encoder_cpr: 0,
            ..Self::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let values = [
            self.accel_noise_density,
            self.accel_bias,
            self.gyro_noise_density,
            self.gyro_bias,
            self.gps_sigma_xy,
            self.gps_speed_inflation,
            self.gps_latency,
            self.baro_resolution,
            self.attitude_rms,
        ];
        if values.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Trajectory("noise parameters must be non-negative".into()));
        }
        if !(self.gps_rate > 0.0 && self.baro_rate > 0.0) {
            return Err(Error::Trajectory("sensor rates must be positive".into()));
        }
        Ok(())
    }
}

/// Synthesized sensor stream with the matching truth.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub params: TrajectoryParams,
    pub noise: NoiseSpec,
    pub frames: Vec<SensorFrame>,
    pub truth: Vec<TruthSample>,
}

fn gaussian3(rng: &mut ChaCha8Rng, sigma: f64) -> Vec3 {
    let mut draw = || sigma * rng.sample::<f64, _>(StandardNormal);
    Vec3::new(draw(), draw(), draw())
}

fn uniform3(rng: &mut ChaCha8Rng, bound: f64) -> Vec3 {
    let mut draw = || if bound > 0.0 { rng.gen_range(-bound..=bound) } else { 0.0 };
    Vec3::new(draw(), draw(), draw())
}

/// Index of the latest sample of a `rate` Hz sensor taken at or before `t`.
fn latest_sample(t: f64, rate: f64) -> Option<i64> {
    (t >= 0.0).then(|| (t * rate + 1e-9).floor() as i64)
}

/// Generates the sensor frames of one flight.
pub fn synthesize(params: &TrajectoryParams, noise: &NoiseSpec, geometry: &EncoderGeometry) -> Result<Simulation> {
    noise.validate()?;
    geometry.validate()?;
    let traj = Trajectory::new(*params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);

    let nyquist = 0.5 / params.ts;
    let accel_sigma = noise.accel_noise_density * nyquist.sqrt() * GRAVITY;
    let gyro_sigma = (noise.gyro_noise_density * nyquist.sqrt()).to_radians();
    let attitude_sigma = noise.attitude_rms.to_radians() / 3f64.sqrt();
    let accel_bias = uniform3(&mut rng, noise.accel_bias * GRAVITY);
    let gyro_bias = uniform3(&mut rng, noise.gyro_bias.to_radians());

    let mut frames = Vec::new();
    let mut truth = Vec::new();
    let mut last_gps = None;
    let mut last_baro = None;

    for t in traj.sample_times() {
        let s = traj.truth_at(t)?;

        let accel = inertial_to_accel(&s.a, &s.quat, params.phi_g)? + accel_bias + gaussian3(&mut rng, accel_sigma);
        let w = s.rates.as_vec() + gyro_bias + gaussian3(&mut rng, gyro_sigma);
        let gyro = BodyRates::from_vec(&w.map(|x| x.clamp(-GYRO_RANGE, GYRO_RANGE)));

        let tilt = gaussian3(&mut rng, attitude_sigma);
        let quat = match tilt.try_normalize(0.0) {
            Some(axis) => Quat::from_axis_angle(&axis, tilt.norm()).mul(&s.quat),
            None => s.quat,
        };

        let mut gps_xy = None;
        if let Some(k) = latest_sample(t - noise.gps_latency, noise.gps_rate) {
            if last_gps != Some(k) {
                last_gps = Some(k);
                let sampled = traj.truth_at(k as f64 / noise.gps_rate)?;
                let sigma = noise.gps_sigma_xy + noise.gps_speed_inflation * sampled.v.norm();
                let dx = sigma * rng.sample::<f64, _>(StandardNormal);
                let dy = sigma * rng.sample::<f64, _>(StandardNormal);
                gps_xy = Some([sampled.p.x + dx, sampled.p.y + dy]);
            }
        }

        let mut baro_z = None;
        if let Some(k) = latest_sample(t, noise.baro_rate) {
            if last_baro != Some(k) {
                last_baro = Some(k);
                let z = traj.truth_at(k as f64 / noise.baro_rate)?.p.z;
                let res = noise.baro_resolution;
                baro_z = Some(if res > 0.0 { (z / res).round() * res } else { z });
            }
        }

        let encoder = angles_to_encoder(s.theta, s.phi, geometry, noise.encoder_cpr)?;

        frames.push(SensorFrame {
            t,
            accel: Some(accel),
            gyro: Some(gyro),
            quat: Some(quat),
            gps_xy,
            baro_z,
            encoder: Some(encoder),
            wind_speed: Some(params.speed_scale),
        });
        truth.push(s);
    }

    Ok(Simulation { params: *params, noise: *noise, frames, truth })
}
