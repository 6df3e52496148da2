use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("|p_z| = {z} exceeds the sphere radius {r}")]
    OffSphere { z: f64, r: f64 },

    #[error("azimuth undefined: position lies on the vertical axis")]
    DegenerateAzimuth,

    #[error("velocity angle undefined: horizontal velocity components are zero")]
    DegenerateVelocity,

    #[error("quaternion norm {0} is not unit")]
    NonUnitQuaternion(f64),

    #[error("line-angle geometry is degenerate for this reading")]
    DegenerateGeometry,

    #[error("invalid encoder geometry: {0}")]
    InvalidGeometry(String),

    #[error("{what} did not converge within {iterations} iterations")]
    NonConvergence { what: &'static str, iterations: usize },

    #[error("measurement noise covariance is not positive definite")]
    IndefiniteR,

    #[error("innovation covariance is singular")]
    SingularInnovation,

    #[error("observer gain is not stabilizing (spectral radius {0})")]
    UnstableObserver(f64),

    #[error("frequency {f} Hz outside (0, {nyquist}) Hz")]
    FrequencyOutOfRange { f: f64, nyquist: f64 },

    #[error("frame timestamp {t} precedes previous timestamp {prev}")]
    OutOfOrder { t: f64, prev: f64 },

    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("series are empty")]
    EmptySeries,

    #[error("line {line}: {msg}")]
    MalformedRow { line: usize, msg: String },

    #[error("line {line}: timestamp {t} is not greater than the previous row")]
    NonMonotone { line: usize, t: f64 },

    #[error("log is missing channel `{0}`")]
    MissingChannel(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid trajectory: {0}")]
    Trajectory(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::MalformedRow { .. }
            | Error::NonMonotone { .. }
            | Error::MissingChannel(_)
            | Error::OutOfOrder { .. }
            | Error::NonUnitQuaternion(_)
            | Error::InvalidGeometry(_)
            | Error::FrequencyOutOfRange { .. }
            | Error::Trajectory(_)
            | Error::Config(_) => 2,
            Error::NonConvergence { .. }
            | Error::IndefiniteR
            | Error::SingularInnovation
            | Error::UnstableObserver(_)
            | Error::DegenerateGeometry
            | Error::OffSphere { .. }
            | Error::DegenerateAzimuth
            | Error::DegenerateVelocity => 3,
            Error::LengthMismatch(..) | Error::EmptySeries | Error::Io(_) => 1,
        }
    }
}
