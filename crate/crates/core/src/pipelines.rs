//! The three position observers and the velocity-angle observer.
//!
//! Every observer converts the accelerometer reading into an inertial
//! acceleration with the IMU attitude, runs the steady-state Kalman filter
//! at the sample rate and corrects it with whatever position measurement
//! the frame carries. They differ only in how that measurement is formed:
//!
//! - [`Approach::GpsBaro`]: GPS for `X, Y`, barometer for `Z`, each applied
//!   when it arrives.
//! - [`Approach::GpsBaroCorrected`]: as above with the GPS reading rescaled
//!   onto the tether sphere using the barometric elevation.
//! - [`Approach::LineAngle`]: position from the line-angle encoders at every
//!   sample, on the sphere by construction.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;

use crate::attitude::{accel_to_inertial, BodyRates, Quat};
use crate::error::{Error, Result};
use crate::estimator::{check_frequencies, spectral_radius, KfTuning, MultiRateKf, PositionMeasurement};
use crate::frames::{cartesian_to_spherical, rot_g_to_l, velocity_angle, wrap_angle, Vec3};
use crate::lineangle::{angles_to_position, encoder_to_angles, EncoderGeometry, EncoderReading};

/// One sample of every sensor; absent measurements are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SensorFrame {
    pub t: f64,
    /// Accelerometer reading in the wing frame, m/s².
    pub accel: Option<Vec3>,
    pub gyro: Option<BodyRates>,
    /// Attitude from the IMU's own attitude filter.
    pub quat: Option<Quat>,
    /// GPS position relative to the ground unit, `(X, Y)` in m.
    pub gps_xy: Option<[f64; 2]>,
    /// Barometric height above the ground unit, m.
    pub baro_z: Option<f64>,
    pub encoder: Option<EncoderReading>,
    /// Wind speed, used only to group evaluation results.
    pub wind_speed: Option<f64>,
}

impl SensorFrame {
    pub fn empty(t: f64) -> Self {
        Self { t, ..Default::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Approach {
    GpsBaro,
    GpsBaroCorrected,
    LineAngle,
}

impl Approach {
    pub const ALL: [Approach; 3] = [Approach::GpsBaro, Approach::GpsBaroCorrected, Approach::LineAngle];

    pub fn number(self) -> u8 {
        match self {
            Approach::GpsBaro => 1,
            Approach::GpsBaroCorrected => 2,
            Approach::LineAngle => 3,
        }
    }

    pub fn from_number(n: u8) -> Result<Self> {
        match n {
            1 => Ok(Approach::GpsBaro),
            2 => Ok(Approach::GpsBaroCorrected),
            3 => Ok(Approach::LineAngle),
            _ => Err(Error::Config(format!("approach must be 1, 2 or 3, got {n}"))),
        }
    }

    /// Tuning ratio of the reference setup: GPS-based observers rely on the
    /// accelerometers over a wider band than the line-angle observer.
    pub fn default_lambda(self) -> f64 {
        match self {
            Approach::GpsBaro | Approach::GpsBaroCorrected => 10.0,
            Approach::LineAngle => 500.0,
        }
    }
}

impl fmt::Display for Approach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

impl FromStr for Approach {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let n: u8 = s
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("invalid approach `{s}`")))?;
        Approach::from_number(n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConfig {
    /// Tether length, m.
    pub r: f64,
    /// Heading of the ground-unit `X` axis from north, rad.
    pub phi_g: f64,
    /// Sample time, s.
    pub ts: f64,
    pub lambda: [f64; 3],
    pub k_gamma: [f64; 2],
    pub geometry: EncoderGeometry,
    pub approach: Approach,
    pub use_imu: bool,
}

impl EstimatorConfig {
    /// Reference configuration: 30 m tether, 50 Hz, `K_gamma = [0.4, 0.9]`.
    pub fn for_approach(approach: Approach) -> Self {
        Self {
            r: 30.0,
            phi_g: 0.0,
            ts: 0.02,
            lambda: [approach.default_lambda(); 3],
            k_gamma: [0.4, 0.9],
            geometry: EncoderGeometry::default(),
            approach,
            use_imu: true,
        }
    }

    pub fn tuning(&self) -> KfTuning {
        KfTuning::new(self.ts, self.lambda)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r > 0.0) {
            return Err(Error::Config(format!("tether length must be positive, got {}", self.r)));
        }
        self.tuning().validate()?;
        self.geometry.validate()?;
        let rho = luenberger_radius(self.k_gamma, self.ts);
        if !(rho < 1.0) {
            return Err(Error::UnstableObserver(rho));
        }
        Ok(())
    }
}

/// Filter output at one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateOutput {
    pub t: f64,
    pub p_hat: Vec3,
    pub v_hat: Vec3,
    pub theta_hat: f64,
    pub phi_hat: f64,
    pub gamma_hat: f64,
    pub gamma_dot_hat: f64,
}

/// Position measurement from GPS (horizontal) and barometer (vertical).
/// `None` when the frame carries neither.
pub fn assemble_position_approach1(f: &SensorFrame) -> Option<PositionMeasurement> {
    let mut meas = PositionMeasurement { p: Vec3::zeros(), available: [false; 3] };
    if let Some([x, y]) = f.gps_xy {
        meas.p.x = x;
        meas.p.y = y;
        meas.available[0] = true;
        meas.available[1] = true;
    }
    if let Some(z) = f.baro_z {
        meas.p.z = z;
        meas.available[2] = true;
    }
    (!meas.is_empty()).then_some(meas)
}

/// Rescales the horizontal components so that the point lies on the sphere
/// of radius `r` at the elevation implied by its `Z` component.
pub fn geometric_correction(p_tilde: &Vec3, r: f64) -> Result<Vec3> {
    if p_tilde.z.abs() > r {
        return Err(Error::OffSphere { z: p_tilde.z, r });
    }
    let horizontal = p_tilde.x.hypot(p_tilde.y);
    if horizontal == 0.0 {
        return Err(Error::DegenerateAzimuth);
    }
    let theta = (p_tilde.z / r).asin();
    let scale = r * theta.cos() / horizontal;
    Ok(Vec3::new(p_tilde.x * scale, p_tilde.y * scale, p_tilde.z))
}

/// Unfiltered velocity angle from the velocity estimate in `G` and the
/// estimated tether angles.
pub fn gamma_unfiltered(v_hat: &Vec3, theta_hat: f64, phi_hat: f64) -> Result<f64> {
    velocity_angle(&(rot_g_to_l(theta_hat, phi_hat) * v_hat))
}

/// State of the velocity-angle observer. The angle is kept unwrapped so it
/// stays continuous through `±pi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LuenbergerState {
    pub gamma: f64,
    pub gamma_dot: f64,
}

impl LuenbergerState {
    pub fn new(gamma: f64, gamma_dot: f64) -> Self {
        Self { gamma, gamma_dot }
    }

    pub fn wrapped(&self) -> (f64, f64) {
        (wrap_angle(self.gamma), self.gamma_dot)
    }
}

/// `x+ = [[1, Ts], [0, 1]] x + K wrap(gamma_tilde - gamma)`.
///
/// With `gamma_tilde == None` only the prediction is applied.
pub fn luenberger_step(state: &LuenbergerState, gamma_tilde: Option<f64>, k_gamma: [f64; 2], ts: f64) -> LuenbergerState {
    let innovation = gamma_tilde.map_or(0.0, |g| wrap_angle(g - state.gamma));
    LuenbergerState::new(
        state.gamma + ts * state.gamma_dot + k_gamma[0] * innovation,
        state.gamma_dot + k_gamma[1] * innovation,
    )
}

fn luenberger_closed_loop(k_gamma: [f64; 2], ts: f64) -> Matrix2<f64> {
    Matrix2::new(1.0 - k_gamma[0], ts, -k_gamma[1], 1.0)
}

pub fn luenberger_radius(k_gamma: [f64; 2], ts: f64) -> f64 {
    let m = luenberger_closed_loop(k_gamma, ts);
    spectral_radius(&DMatrix::from_column_slice(2, 2, m.as_slice()))
}

/// Magnitudes of the transfer functions from the unfiltered angle to the
/// filtered angle (`fy1`) and to the filtered rate (`fy2`).
pub fn lo_frequency_response(k_gamma: [f64; 2], ts: f64, freqs: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    check_frequencies(freqs, ts)?;
    let (k1, k2) = (k_gamma[0], k_gamma[1]);
    let mut fy1 = Vec::with_capacity(freqs.len());
    let mut fy2 = Vec::with_capacity(freqs.len());
    for &f in freqs {
        let z = Complex64::from_polar(1.0, 2.0 * PI * f * ts);
        let zm1 = z - 1.0;
        // det(zI - A_cl) with A_cl = [[1 - k1, Ts], [-k2, 1]].
        let det = zm1 * zm1 + k1 * zm1 + ts * k2;
        fy1.push(((k1 * zm1 + ts * k2) / det).norm());
        fy2.push((k2 * zm1 / det).norm());
    }
    Ok((fy1, fy2))
}

/// `|(z - 1) / Ts|`: the backward-difference derivative.
pub fn derivative_magnitude(f: f64, ts: f64) -> f64 {
    let z = Complex64::from_polar(1.0, 2.0 * PI * f * ts);
    ((z - 1.0) / ts).norm()
}

/// Position measurement of one frame for the configured observer.
/// `held_baro` is the latest barometer reading, used by the corrected
/// GPS observer when the frame carries GPS but no barometer value.
pub fn position_measurement(
    cfg: &EstimatorConfig,
    f: &SensorFrame,
    held_baro: Option<f64>,
) -> Result<Option<PositionMeasurement>> {
    match cfg.approach {
        Approach::GpsBaro => Ok(assemble_position_approach1(f)),
        Approach::GpsBaroCorrected => {
            let Some(mut meas) = assemble_position_approach1(f) else {
                return Ok(None);
            };
            if let (Some([x, y]), Some(z)) = (f.gps_xy, f.baro_z.or(held_baro)) {
                // A reading that cannot be projected is used as is.
                if let Ok(c) = geometric_correction(&Vec3::new(x, y, z), cfg.r) {
                    meas.p.x = c.x;
                    meas.p.y = c.y;
                }
            }
            Ok(Some(meas))
        }
        Approach::LineAngle => match f.encoder {
            Some(reading) => {
                let (theta, phi) = encoder_to_angles(&reading, &cfg.geometry)?;
                Ok(Some(PositionMeasurement::full(angles_to_position(theta, phi, cfg.r))))
            }
            None => Ok(None),
        },
    }
}

/// Sequential observer for one sensor stream.
#[derive(Debug, Clone)]
pub struct Pipeline {
    cfg: EstimatorConfig,
    kf: MultiRateKf,
    gamma: Option<LuenbergerState>,
    angles: Option<(f64, f64)>,
    last_baro: Option<f64>,
    last_t: Option<f64>,
}

impl Pipeline {
    pub fn new(cfg: EstimatorConfig) -> Result<Self> {
        cfg.validate()?;
        let gain = cfg.tuning().gain()?;
        Ok(Self {
            kf: MultiRateKf::new(&gain, cfg.ts),
            cfg,
            gamma: None,
            angles: None,
            last_baro: None,
            last_t: None,
        })
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.cfg
    }

    fn inertial_acceleration(&self, f: &SensorFrame) -> Result<Vec3> {
        match (self.cfg.use_imu, f.accel, f.quat) {
            (true, Some(a), Some(q)) => accel_to_inertial(&a, &q, self.cfg.phi_g),
            _ => Ok(Vec3::zeros()),
        }
    }

    fn position_measurement(&mut self, f: &SensorFrame) -> Result<Option<PositionMeasurement>> {
        if let Some(z) = f.baro_z {
            self.last_baro = Some(z);
        }
        position_measurement(&self.cfg, f, self.last_baro)
    }

    /// Tether angles of the position estimate. Estimates that drift above
    /// the sphere (GPS-based observers only) fall back to the direction of
    /// the estimate; a position on the vertical axis keeps the last angles.
    fn estimated_angles(&mut self, p: &Vec3) -> Option<(f64, f64)> {
        let angles = match cartesian_to_spherical(p, self.cfg.r) {
            Ok(a) => Some(a),
            Err(Error::OffSphere { .. }) => Some((p.z.atan2(p.x.hypot(p.y)), wrap_angle(p.y.atan2(p.x)))),
            Err(_) => None,
        };
        if let Some(a) = angles {
            self.angles = Some(a);
        }
        self.angles
    }

    /// Processes one frame. Returns `None` until every position axis has
    /// been measured and a velocity angle has been formed.
    pub fn step(&mut self, f: &SensorFrame) -> Result<Option<EstimateOutput>> {
        if let Some(prev) = self.last_t {
            if f.t < prev {
                return Err(Error::OutOfOrder { t: f.t, prev });
            }
        }
        self.last_t = Some(f.t);

        let a_g = self.inertial_acceleration(f)?;
        let meas = self.position_measurement(f)?;
        self.kf.step(f.t, &a_g, meas.as_ref())?;
        if !self.kf.is_initialized() {
            return Ok(None);
        }

        let state = *self.kf.state();
        let Some((theta, phi)) = self.estimated_angles(&state.p) else {
            return Ok(None);
        };
        let gamma_tilde = gamma_unfiltered(&state.v, theta, phi).ok();
        let next = match (self.gamma, gamma_tilde) {
            (Some(s), g) => luenberger_step(&s, g, self.cfg.k_gamma, self.cfg.ts),
            (None, Some(g)) => LuenbergerState::new(g, 0.0),
            (None, None) => return Ok(None),
        };
        self.gamma = Some(next);
        let (gamma_hat, gamma_dot_hat) = next.wrapped();

        Ok(Some(EstimateOutput {
            t: f.t,
            p_hat: state.p,
            v_hat: state.v,
            theta_hat: theta,
            phi_hat: phi,
            gamma_hat,
            gamma_dot_hat,
        }))
    }
}

/// Runs one observer over a whole stream.
pub fn run_pipeline(cfg: EstimatorConfig, frames: &[SensorFrame]) -> Result<Vec<EstimateOutput>> {
    let mut pipeline = Pipeline::new(cfg)?;
    let mut out = Vec::with_capacity(frames.len());
    for f in frames {
        if let Some(e) = pipeline.step(f)? {
            out.push(e);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::{spherical_to_cartesian, SphericalPos};
    use proptest::prelude::*;

    #[test]
    fn approach1_assembly() {
        let mut f = SensorFrame::empty(0.0);
        assert!(assemble_position_approach1(&f).is_none());
        f.gps_xy = Some([1.0, 2.0]);
        let m = assemble_position_approach1(&f).unwrap();
        assert_eq!(m.available, [true, true, false]);
        f.baro_z = Some(3.0);
        let m = assemble_position_approach1(&f).unwrap();
        assert_eq!(m.p, Vec3::new(1.0, 2.0, 3.0));
        assert_eq!(m.available, [true; 3]);
    }

    #[test]
    fn correction_examples() {
        let c = geometric_correction(&Vec3::new(4.0, 3.0, 0.0), 10.0).unwrap();
        assert!((c - Vec3::new(8.0, 6.0, 0.0)).norm() < 1e-12);
        let on = spherical_to_cartesian(SphericalPos::new(0.6, -0.4, 30.0));
        assert!((geometric_correction(&on, 30.0).unwrap() - on).norm() < 1e-12);
        assert!(geometric_correction(&Vec3::new(0.0, 0.0, 5.0), 30.0).is_err());
        assert!(geometric_correction(&Vec3::new(1.0, 0.0, 31.0), 30.0).is_err());
    }

    #[test]
    fn gamma_unfiltered_examples() {
        let (theta, phi) = (0.7, -0.4);
        let l_to_g = rot_g_to_l(theta, phi).transpose();
        let north = l_to_g * Vec3::new(2.0, 0.0, 0.0);
        let east = l_to_g * Vec3::new(0.0, 3.0, 0.0);
        assert!(gamma_unfiltered(&north, theta, phi).unwrap().abs() < 1e-12);
        assert!((gamma_unfiltered(&east, theta, phi).unwrap() - PI / 2.0).abs() < 1e-12);
        // At theta = phi = 0 the local down axis is -X exactly.
        assert!(gamma_unfiltered(&Vec3::new(-1.0, 0.0, 0.0), 0.0, 0.0).is_err());
    }

    #[test]
    fn luenberger_equilibrium() {
        let s = LuenbergerState::new(1.2, 0.0);
        assert_eq!(luenberger_step(&s, Some(1.2), [0.4, 0.9], 0.02), s);
        let mut s = LuenbergerState::new(0.0, 0.0);
        for _ in 0..2000 {
            s = luenberger_step(&s, Some(-2.5), [0.4, 0.9], 0.02);
        }
        assert!((s.gamma + 2.5).abs() < 1e-9 && s.gamma_dot.abs() < 1e-9);
    }

    #[test]
    fn luenberger_predicts_without_measurement() {
        let s = LuenbergerState::new(0.5, 2.0);
        let next = luenberger_step(&s, None, [0.4, 0.9], 0.02);
        assert_eq!(next, LuenbergerState::new(0.54, 2.0));
    }

    #[test]
    fn corrected_measurement_uses_held_barometer() {
        let cfg = EstimatorConfig::for_approach(Approach::GpsBaroCorrected);
        let mut f = SensorFrame::empty(0.0);
        f.gps_xy = Some([20.0, 5.0]);
        let m = position_measurement(&cfg, &f, Some(18.0)).unwrap().unwrap();
        assert_eq!(m.available, [true, true, false]);
        let on = Vec3::new(m.p.x, m.p.y, 18.0);
        assert!((on.norm() - 30.0).abs() < 1e-9);
        let raw = position_measurement(&cfg, &f, None).unwrap().unwrap();
        assert_eq!((raw.p.x, raw.p.y), (20.0, 5.0));
    }

    #[test]
    fn luenberger_wraps_innovation() {
        let s = LuenbergerState::new(PI - 0.1, 0.0);
        let next = luenberger_step(&s, Some(-PI + 0.1), [1.0, 0.0], 0.02);
        assert!((next.gamma - (PI + 0.1)).abs() < 1e-12);
        assert!((next.wrapped().0 - (-PI + 0.1)).abs() < 1e-12);
    }

    #[test]
    fn reference_observer_gain_is_stable() {
        // Characteristic polynomial z² - (2 - k1) z + (1 - k1 + Ts k2).
        let (k1, k2, ts): (f64, f64, f64) = (0.4, 0.9, 0.02);
        let (b, c) = (-(2.0 - k1), 1.0 - k1 + ts * k2);
        let disc = b * b - 4.0 * c;
        let roots = if disc >= 0.0 {
            [(-b + disc.sqrt()) / 2.0, (-b - disc.sqrt()) / 2.0]
        } else {
            [c.sqrt(); 2]
        };
        assert!(roots.iter().all(|z| z.abs() < 1.0));
        let rho = luenberger_radius([k1, k2], ts);
        assert!((rho - roots[0].abs().max(roots[1].abs())).abs() < 1e-12);
        assert!(luenberger_radius([0.4, -5.0], ts) >= 1.0);
    }

    #[test]
    fn lo_response_has_unit_dc_gain() {
        let (fy1, fy2) = lo_frequency_response([0.4, 0.9], 0.02, &[1e-5]).unwrap();
        assert!((fy1[0] - 1.0).abs() < 1e-6);
        assert!((fy2[0] / derivative_magnitude(1e-5, 0.02) - 1.0).abs() < 1e-4);
        assert!(lo_frequency_response([0.4, 0.9], 0.02, &[30.0]).is_err());
    }

    #[test]
    fn lo_response_matches_time_domain_simulation() {
        // Steady-state amplitude of a simulated sinusoid through the observer.
        let (k, ts, f) = ([0.4, 0.9], 0.02, 0.8);
        let mut s = LuenbergerState::new(0.0, 0.0);
        let (mut peak_g, mut peak_r) = (0.0f64, 0.0f64);
        for n in 0..20_000 {
            let u = 0.01 * (2.0 * PI * f * n as f64 * ts).sin();
            s = luenberger_step(&s, Some(u), k, ts);
            if n > 10_000 {
                peak_g = peak_g.max(s.gamma.abs());
                peak_r = peak_r.max(s.gamma_dot.abs());
            }
        }
        let (fy1, fy2) = lo_frequency_response(k, ts, &[f]).unwrap();
        assert!((peak_g / 0.01 - fy1[0]).abs() < 1e-3);
        assert!((peak_r / 0.01 - fy2[0]).abs() < 1e-2);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = EstimatorConfig::for_approach(Approach::LineAngle);
        cfg.k_gamma = [0.4, -5.0];
        assert!(matches!(Pipeline::new(cfg), Err(Error::UnstableObserver(_))));
        let mut cfg = EstimatorConfig::for_approach(Approach::GpsBaro);
        cfg.r = 0.0;
        assert!(Pipeline::new(cfg).is_err());
        let mut cfg = EstimatorConfig::for_approach(Approach::GpsBaro);
        cfg.lambda[1] = 0.0;
        assert!(Pipeline::new(cfg).is_err());
    }

    #[test]
    fn out_of_order_frames_are_rejected() {
        let mut p = Pipeline::new(EstimatorConfig::for_approach(Approach::GpsBaro)).unwrap();
        p.step(&SensorFrame::empty(1.0)).unwrap();
        assert!(matches!(p.step(&SensorFrame::empty(0.5)), Err(Error::OutOfOrder { .. })));
    }

    #[test]
    fn approach_parsing() {
        assert_eq!("2".parse::<Approach>().unwrap(), Approach::GpsBaroCorrected);
        assert!("4".parse::<Approach>().is_err());
        assert_eq!(Approach::LineAngle.to_string(), "3");
    }

    proptest! {
        #[test]
        fn correction_lands_on_sphere(x in -40.0..40.0f64, y in -40.0..40.0f64, z in -29.9..29.9f64) {
            prop_assume!(x.hypot(y) > 1e-3);
            let c = geometric_correction(&Vec3::new(x, y, z), 30.0).unwrap();
            prop_assert!((c.norm() - 30.0).abs() < 1e-9);
            prop_assert_eq!(c.z, z);
        }

        #[test]
        fn gamma_unfiltered_composes_frames(theta in 0.0..1.5f64, phi in -PI..PI, v in prop::array::uniform3(-20.0..20.0f64)) {
            let v = Vec3::from(v);
            let direct = velocity_angle(&(rot_g_to_l(theta, phi) * v));
            match direct {
                Ok(g) => prop_assert_eq!(gamma_unfiltered(&v, theta, phi).unwrap(), g),
                Err(_) => prop_assert!(gamma_unfiltered(&v, theta, phi).is_err()),
            }
        }
    }
}
