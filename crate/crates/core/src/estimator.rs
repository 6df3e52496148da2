//! Steady-state Kalman filter over the discretized double integrator
//! `p(k+1) = p(k) + Ts v(k)`, `v(k+1) = v(k) + Ts a(k)` with position
//! measurements.

use nalgebra::{DMatrix, DVector, Matrix3x6, Matrix6, Matrix6x3, SMatrix};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::frames::Vec3;

/// SDA iteration cap; convergence is quadratic so this is never reached for
/// well-posed problems.
const DARE_MAX_ITERATIONS: usize = 200;
const DARE_TOLERANCE: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KinematicState {
    pub p: Vec3,
    pub v: Vec3,
}

impl KinematicState {
    pub fn new(p: Vec3, v: Vec3) -> Self {
        Self { p, v }
    }

    fn to_vector(self) -> SMatrix<f64, 6, 1> {
        SMatrix::<f64, 6, 1>::from_iterator(self.p.iter().chain(self.v.iter()).copied())
    }

    fn from_vector(x: &SMatrix<f64, 6, 1>) -> Self {
        Self::new(Vec3::new(x[0], x[1], x[2]), Vec3::new(x[3], x[4], x[5]))
    }
}

/// Per-axis tuning: `lambda[i] = Q_ii / R_ii` with `R = I`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KfTuning {
    pub ts: f64,
    pub lambda: [f64; 3],
}

impl KfTuning {
    pub fn new(ts: f64, lambda: [f64; 3]) -> Self {
        Self { ts, lambda }
    }

    pub fn uniform(ts: f64, lambda: f64) -> Self {
        Self::new(ts, [lambda; 3])
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ts > 0.0) {
            return Err(Error::Config(format!("sample time must be positive, got {}", self.ts)));
        }
        if let Some(l) = self.lambda.iter().find(|l| !(**l > 0.0) || !l.is_finite()) {
            return Err(Error::Config(format!("lambda must be positive, got {l}")));
        }
        Ok(())
    }

    /// Steady-state gain for this tuning.
    pub fn gain(&self) -> Result<KalmanGain> {
        self.validate()?;
        let sys = build_system(self.ts);
        let q = DMatrix::from_diagonal(&DVector::from_row_slice(&self.lambda));
        let r = DMatrix::identity(3, 3);
        let (a, b, c) = sys.dynamic();
        let p = solve_dare(&a, &b, &c, &q, &r)?;
        kalman_gain(&p, &a, &c, &r)
    }
}

/// Model matrices of the position/velocity double integrator.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemMatrices {
    pub a: Matrix6<f64>,
    pub b: Matrix6x3<f64>,
    pub c: Matrix3x6<f64>,
}

impl SystemMatrices {
    pub fn dynamic(&self) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        (
            DMatrix::from_column_slice(6, 6, self.a.as_slice()),
            DMatrix::from_column_slice(6, 3, self.b.as_slice()),
            DMatrix::from_column_slice(3, 6, self.c.as_slice()),
        )
    }
}

pub fn build_system(ts: f64) -> SystemMatrices {
    let mut a = Matrix6::identity();
    let mut b = Matrix6x3::zeros();
    let mut c = Matrix3x6::zeros();
    for i in 0..3 {
        a[(i, 3 + i)] = ts;
        b[(3 + i, i)] = ts;
        c[(i, i)] = 1.0;
    }
    SystemMatrices { a, b, c }
}

/// Stabilizing solution of the filtering Riccati equation
///
/// `P = A P Aᵀ - A P Cᵀ (C P Cᵀ + R)⁻¹ C P Aᵀ + B Q Bᵀ`.
///
/// Solved with the structure-preserving doubling algorithm applied to the
/// dual control problem `(Aᵀ, Cᵀ)`.
pub fn solve_dare(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let m = c.nrows();
    if a.ncols() != n || b.nrows() != n || c.ncols() != n || q.nrows() != b.ncols() || r.nrows() != m {
        return Err(Error::Config("Riccati problem has inconsistent dimensions".into()));
    }
    let r_inv = r
        .clone()
        .cholesky()
        .ok_or(Error::IndefiniteR)?
        .inverse();

    let eye = DMatrix::<f64>::identity(n, n);
    let mut ak = a.transpose();
    let mut gk = c.transpose() * &r_inv * c;
    let mut hk = b * q * b.transpose();
    symmetrize(&mut hk);

    for _ in 0..DARE_MAX_ITERATIONS {
        let w = (&eye + &gk * &hk).lu();
        let w_a = w.solve(&ak).ok_or(Error::SingularInnovation)?;
        let w_g = w.solve(&gk).ok_or(Error::SingularInnovation)?;
        let a_next = &ak * &w_a;
        let mut g_next = &gk + &ak * &w_g * ak.transpose();
        let mut h_next = &hk + ak.transpose() * &hk * &w_a;
        symmetrize(&mut g_next);
        symmetrize(&mut h_next);

        let change = (&h_next - &hk).norm();
        let scale = 1.0 + h_next.norm();
        ak = a_next;
        gk = g_next;
        hk = h_next;
        if change <= DARE_TOLERANCE * scale {
            return Ok(hk);
        }
    }
    Err(Error::NonConvergence {
        what: "Riccati doubling",
        iterations: DARE_MAX_ITERATIONS,
    })
}

/// Frobenius norm of the Riccati residual at `p`.
pub fn dare_residual(
    p: &DMatrix<f64>,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> f64 {
    let s = c * p * c.transpose() + r;
    let s_inv = s.try_inverse().unwrap_or_else(|| DMatrix::from_element(r.nrows(), r.ncols(), f64::NAN));
    let apc = a * p * c.transpose();
    let rhs = a * p * a.transpose() - &apc * s_inv * apc.transpose() + b * q * b.transpose();
    (p - rhs).norm()
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m = (&*m + t) * 0.5;
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanGain {
    /// 6×3 gain applied to the position innovation.
    pub k: DMatrix<f64>,
    /// 6×6 steady-state covariance.
    pub p_inf: DMatrix<f64>,
}

impl KalmanGain {
    /// The gain as a fixed-size matrix, for the 6-state position filter.
    pub fn fixed(&self) -> Matrix6x3<f64> {
        Matrix6x3::from_column_slice(self.k.as_slice())
    }

    /// Spectral radius of the error dynamics `(I - K C) A`.
    pub fn closed_loop_radius(&self, a: &DMatrix<f64>, c: &DMatrix<f64>) -> f64 {
        let n = a.nrows();
        let m = (DMatrix::identity(n, n) - &self.k * c) * a;
        spectral_radius(&m)
    }
}

pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `K = A P Cᵀ (C P Cᵀ + R)⁻¹`.
pub fn kalman_gain(
    p_inf: &DMatrix<f64>,
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<KalmanGain> {
    let s = c * p_inf * c.transpose() + r;
    let s_inv = s.try_inverse().ok_or(Error::SingularInnovation)?;
    if s_inv.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularInnovation);
    }
    Ok(KalmanGain {
        k: a * p_inf * c.transpose() * s_inv,
        p_inf: p_inf.clone(),
    })
}

/// Prediction with the estimated inertial acceleration `a_g`.
pub fn time_update(s: &KinematicState, a_g: &Vec3, ts: f64) -> KinematicState {
    KinematicState::new(s.p + ts * s.v, s.v + ts * a_g)
}

/// Correction with a full position measurement.
pub fn measurement_update(prior: &KinematicState, p_meas: &Vec3, gain: &Matrix6x3<f64>) -> KinematicState {
    let innovation = p_meas - prior.p;
    KinematicState::from_vector(&(prior.to_vector() + gain * innovation))
}

/// Correction using only the measured position components. Only the gain
/// columns of the available rows are applied; with the decoupled per-axis
/// gains this is the exact row-partitioned update.
pub fn measurement_update_partial(
    prior: &KinematicState,
    p_meas: &Vec3,
    available: [bool; 3],
    gain: &Matrix6x3<f64>,
) -> KinematicState {
    let mut innovation = p_meas - prior.p;
    for (i, ok) in available.iter().enumerate() {
        if !ok {
            innovation[i] = 0.0;
        }
    }
    KinematicState::from_vector(&(prior.to_vector() + gain * innovation))
}

/// A position measurement with possibly missing components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionMeasurement {
    pub p: Vec3,
    pub available: [bool; 3],
}

impl PositionMeasurement {
    pub fn full(p: Vec3) -> Self {
        Self { p, available: [true; 3] }
    }

    pub fn is_empty(&self) -> bool {
        !self.available.iter().any(|a| *a)
    }
}

/// Multi-rate steady-state filter: one prediction per sample interval and a
/// correction whenever a position measurement is present.
///
/// Each axis is initialized from its first measurement with zero velocity.
#[derive(Debug, Clone)]
pub struct MultiRateKf {
    gain: Matrix6x3<f64>,
    ts: f64,
    state: KinematicState,
    initialized: [bool; 3],
    last_t: Option<f64>,
}

impl MultiRateKf {
    pub fn new(gain: &KalmanGain, ts: f64) -> Self {
        Self {
            gain: gain.fixed(),
            ts,
            state: KinematicState::default(),
            initialized: [false; 3],
            last_t: None,
        }
    }

    pub fn state(&self) -> &KinematicState {
        &self.state
    }

    pub fn is_initialized(&self) -> bool {
        self.initialized.iter().all(|i| *i)
    }

    /// Advances to time `t` using acceleration `a_g`, then applies the
    /// measurement if any. Time is mapped onto whole sample intervals.
    pub fn step(&mut self, t: f64, a_g: &Vec3, meas: Option<&PositionMeasurement>) -> Result<()> {
        if let Some(prev) = self.last_t {
            if t < prev {
                return Err(Error::OutOfOrder { t, prev });
            }
            let steps = ((t - prev) / self.ts).round() as u64;
            for _ in 0..steps {
                self.state = time_update(&self.state, a_g, self.ts);
            }
            if steps > 0 {
                self.last_t = Some(prev + steps as f64 * self.ts);
            }
        } else {
            self.last_t = Some(t);
        }

        let Some(meas) = meas else { return Ok(()) };
        let mut available = meas.available;
        for i in 0..3 {
            if available[i] && !self.initialized[i] {
                self.state.p[i] = meas.p[i];
                self.state.v[i] = 0.0;
                self.initialized[i] = true;
                available[i] = false;
            }
        }
        if available.iter().any(|a| *a) {
            self.state = measurement_update_partial(&self.state, &meas.p, available, &self.gain);
        }
        Ok(())
    }
}

/// Checks `0 < f < 1 / (2 Ts)` for every frequency.
pub(crate) fn check_frequencies(freqs: &[f64], ts: f64) -> Result<()> {
    let nyquist = 0.5 / ts;
    match freqs.iter().find(|f| !(**f > 0.0 && **f < nyquist)) {
        Some(&f) => Err(Error::FrequencyOutOfRange { f, nyquist }),
        None => Ok(()),
    }
}

/// Magnitudes of the single-axis transfer functions from estimated
/// acceleration to filtered position (`fu`) and from measured position to
/// filtered position (`fy`), evaluated at `z = exp(j 2 pi f Ts)`.
pub fn kf_frequency_response(tuning: &KfTuning, axis: usize, freqs: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if axis > 2 {
        return Err(Error::Config(format!("axis must be 0, 1 or 2, got {axis}")));
    }
    check_frequencies(freqs, tuning.ts)?;
    let gain = tuning.gain()?;
    let (a, b, c) = build_system(tuning.ts).dynamic();
    let k = &gain.k;
    let i_kc = DMatrix::identity(6, 6) - k * &c;
    let closed = &i_kc * &a;
    let input_u = &i_kc * b.columns(axis, 1);
    let input_y = k.columns(axis, 1).into_owned();

    let to_complex = |m: &DMatrix<f64>| m.map(|v| Complex64::new(v, 0.0));
    let closed_c = to_complex(&closed);
    let u_c = to_complex(&input_u);
    let y_c = to_complex(&input_y);

    let mut fu = Vec::with_capacity(freqs.len());
    let mut fy = Vec::with_capacity(freqs.len());
    for &f in freqs {
        let z = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * f * tuning.ts);
        let lhs = DMatrix::<Complex64>::identity(6, 6) * z - &closed_c;
        let lu = lhs.lu();
        let xu = lu.solve(&u_c).ok_or(Error::SingularInnovation)?;
        let xy = lu.solve(&y_c).ok_or(Error::SingularInnovation)?;
        fu.push((xu[axis] * z).norm());
        fy.push((xy[axis] * z).norm());
    }
    Ok((fu, fy))
}

/// `|Ts² / (z - 1)²|`: the pure double integrator.
pub fn double_integrator_magnitude(f: f64, ts: f64) -> f64 {
    let z = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * f * ts);
    (ts * ts / ((z - 1.0) * (z - 1.0))).norm()
}
