//! Log files, configuration, RMSE evaluation and plot-ready tables.
//!
//! A log is a CSV file with header
//!
//! ```text
//! t,ax,ay,az,wx,wy,wz,q1,q2,q3,q4,gps_x,gps_y,baro_z,enc_theta,enc_phi,wind
//! ```
//!
//! optionally followed by the truth columns written by the simulator.
//! Empty cells mark absent measurements. Lines starting with `#` are
//! comments.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use serde::Deserialize;

use crate::attitude::{BodyRates, Quat};
use crate::error::{Error, Result};
use crate::estimator::{double_integrator_magnitude, kf_frequency_response, KfTuning};
use crate::frames::{wrap_angle, Vec3};
use crate::lineangle::{EncoderGeometry, EncoderReading};
use crate::pipelines::{
    derivative_magnitude, lo_frequency_response, Approach, EstimateOutput, EstimatorConfig, Pipeline, SensorFrame,
};
use crate::simkite::{NoiseSpec, Simulation, TrajectoryParams, RNG_ALGORITHM};

pub const SENSOR_COLUMNS: [&str; 17] = [
    "t", "ax", "ay", "az", "wx", "wy", "wz", "q1", "q2", "q3", "q4", "gps_x", "gps_y", "baro_z", "enc_theta",
    "enc_phi", "wind",
];

pub const TRUTH_COLUMNS: [&str; 9] = [
    "truth_px",
    "truth_py",
    "truth_pz",
    "truth_vx",
    "truth_vy",
    "truth_vz",
    "truth_theta",
    "truth_phi",
    "truth_gamma",
];

pub const ESTIMATE_COLUMNS: [&str; 11] = [
    "t", "px", "py", "pz", "vx", "vy", "vz", "theta", "phi", "gamma", "gamma_dot",
];

/// Reference values stored alongside simulated sensor data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogTruth {
    pub p: Vec3,
    pub v: Vec3,
    pub theta: f64,
    pub phi: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRecord {
    pub frame: SensorFrame,
    pub truth: Option<LogTruth>,
}

impl Simulation {
    pub fn records(&self) -> Vec<LogRecord> {
        self.frames
            .iter()
            .zip(&self.truth)
            .map(|(f, s)| LogRecord {
                frame: *f,
                truth: Some(LogTruth { p: s.p, v: s.v, theta: s.theta, phi: s.phi, gamma: s.gamma }),
            })
            .collect()
    }

    /// Comment lines identifying the run.
    pub fn metadata(&self) -> Vec<String> {
        vec![
            format!("rng={RNG_ALGORITHM} seed={}", self.noise.seed),
            format!(
                "r={} theta0={} phi0={} a_theta={} a_phi={} f_loop={} speed_scale={} phi_g={}",
                self.params.r,
                self.params.theta0,
                self.params.phi0,
                self.params.a_theta,
                self.params.a_phi,
                self.params.f_loop,
                self.params.speed_scale,
                self.params.phi_g
            ),
        ]
    }
}

fn push_opt(row: &mut Vec<String>, values: Option<&[f64]>, width: usize) {
    match values {
        Some(v) => row.extend(v.iter().map(|x| x.to_string())),
        None => row.extend(std::iter::repeat_n(String::new(), width)),
    }
}

/// Writes a log. Every record must carry truth or none may.
pub fn write_log<W: Write>(records: &[LogRecord], comments: &[String], mut out: W) -> Result<()> {
    let with_truth = records.first().is_some_and(|r| r.truth.is_some());
    if records.iter().any(|r| r.truth.is_some() != with_truth) {
        return Err(Error::Config("truth columns must be present in every record or in none".into()));
    }
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let mut header: Vec<&str> = SENSOR_COLUMNS.to_vec();
    if with_truth {
        header.extend(TRUTH_COLUMNS);
    }
    w.write_record(&header).map_err(csv_io)?;

    for r in records {
        let f = &r.frame;
        let mut row = vec![f.t.to_string()];
        push_opt(&mut row, f.accel.as_ref().map(|a| a.as_slice()), 3);
        push_opt(&mut row, f.gyro.map(|g| [g.wx, g.wy, g.wz]).as_ref().map(|g| &g[..]), 3);
        push_opt(&mut row, f.quat.map(|q| [q.q1, q.q2, q.q3, q.q4]).as_ref().map(|q| &q[..]), 4);
        push_opt(&mut row, f.gps_xy.as_ref().map(|g| &g[..]), 2);
        push_opt(&mut row, f.baro_z.map(|z| [z]).as_ref().map(|z| &z[..]), 1);
        push_opt(&mut row, f.encoder.map(|e| [e.theta_b, e.phi_b]).as_ref().map(|e| &e[..]), 2);
        push_opt(&mut row, f.wind_speed.map(|w| [w]).as_ref().map(|w| &w[..]), 1);
        if let Some(t) = &r.truth {
            let vals = [t.p.x, t.p.y, t.p.z, t.v.x, t.v.y, t.v.z, t.theta, t.phi, t.gamma];
            push_opt(&mut row, Some(&vals), 9);
        }
        w.write_record(&row).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_log_file(records: &[LogRecord], comments: &[String], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_log(records, comments, std::io::BufWriter::new(file))
}

fn csv_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Config(format!("{other:?}")),
    }
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => Error::MalformedRow {
            line,
            msg: format!("expected {expected_len} fields, found {len}"),
        },
        csv::ErrorKind::Utf8 { .. } => Error::MalformedRow { line, msg: "invalid UTF-8".into() },
        other => Error::MalformedRow { line, msg: format!("{other:?}") },
    }
}

/// Column positions of one log header.
struct Layout {
    index: HashMap<String, usize>,
}

impl Layout {
    fn new(header: &csv::StringRecord, line: usize) -> Result<Self> {
        let mut index = HashMap::new();
        for (i, name) in header.iter().enumerate() {
            let name = name.trim();
            if !SENSOR_COLUMNS.contains(&name) && !TRUTH_COLUMNS.contains(&name) {
                return Err(Error::MalformedRow { line, msg: format!("unknown column `{name}`") });
            }
            if index.insert(name.to_string(), i).is_some() {
                return Err(Error::MalformedRow { line, msg: format!("duplicate column `{name}`") });
            }
        }
        if !index.contains_key("t") {
            return Err(Error::MissingChannel("t"));
        }
        let truth = TRUTH_COLUMNS.iter().filter(|c| index.contains_key(**c)).count();
        if truth != 0 && truth != TRUTH_COLUMNS.len() {
            return Err(Error::MalformedRow { line, msg: "incomplete truth columns".into() });
        }
        Ok(Self { index })
    }

    fn has_truth(&self) -> bool {
        self.index.contains_key(TRUTH_COLUMNS[0])
    }

    /// Values of a column group; `None` when the group is absent from the
    /// header or every cell is empty.
    fn group<const N: usize>(&self, row: &csv::StringRecord, names: [&str; N], line: usize) -> Result<Option<[f64; N]>> {
        let mut cells = [""; N];
        for (cell, name) in cells.iter_mut().zip(names) {
            match self.index.get(name) {
                Some(&i) => *cell = row.get(i).unwrap_or("").trim(),
                None => return Ok(None),
            }
        }
        if cells.iter().all(|c| c.is_empty()) {
            return Ok(None);
        }
        let mut out = [0.0; N];
        for ((v, cell), name) in out.iter_mut().zip(cells).zip(names) {
            if cell.is_empty() {
                return Err(Error::MalformedRow { line, msg: format!("`{name}` is empty but its group is not") });
            }
            *v = cell
                .parse()
                .map_err(|_| Error::MalformedRow { line, msg: format!("`{name}` is not a number: `{cell}`") })?;
        }
        Ok(Some(out))
    }
}

pub fn read_log<R: Read>(input: R) -> Result<Vec<LogRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input);
    let header = rdr.headers().map_err(csv_error)?.clone();
    let header_line = header.position().map_or(1, |p| p.line() as usize);
    let layout = Layout::new(&header, header_line)?;

    let mut records = Vec::new();
    let mut prev_t: Option<f64> = None;
    for row in rdr.records() {
        let row = row.map_err(csv_error)?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let [t] = layout.group(&row, ["t"], line)?.ok_or(Error::MalformedRow { line, msg: "missing time".into() })?;
        if prev_t.is_some_and(|p| !(t > p)) {
            return Err(Error::NonMonotone { line, t });
        }
        prev_t = Some(t);

        let frame = SensorFrame {
            t,
            accel: layout.group(&row, ["ax", "ay", "az"], line)?.map(Vec3::from),
            gyro: layout.group(&row, ["wx", "wy", "wz"], line)?.map(|[x, y, z]| BodyRates::new(x, y, z)),
            quat: layout.group(&row, ["q1", "q2", "q3", "q4"], line)?.map(|[a, b, c, d]| Quat::new(a, b, c, d)),
            gps_xy: layout.group(&row, ["gps_x", "gps_y"], line)?,
            baro_z: layout.group(&row, ["baro_z"], line)?.map(|[z]| z),
            encoder: layout.group(&row, ["enc_theta", "enc_phi"], line)?.map(|[a, b]| EncoderReading::new(a, b)),
            wind_speed: layout.group(&row, ["wind"], line)?.map(|[w]| w),
        };
        let truth = if layout.has_truth() {
            let v = layout
                .group(&row, TRUTH_COLUMNS, line)?
                .ok_or(Error::MalformedRow { line, msg: "missing truth values".into() })?;
            Some(LogTruth {
                p: Vec3::new(v[0], v[1], v[2]),
                v: Vec3::new(v[3], v[4], v[5]),
                theta: v[6],
                phi: v[7],
                gamma: v[8],
            })
        } else {
            None
        };
        records.push(LogRecord { frame, truth });
    }
    Ok(records)
}

pub fn read_log_file(path: &Path) -> Result<Vec<LogRecord>> {
    read_log(std::io::BufReader::new(std::fs::File::open(path)?))
}

pub fn write_estimates<W: Write>(outputs: &[EstimateOutput], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(ESTIMATE_COLUMNS).map_err(csv_io)?;
    for e in outputs {
        let vals = [
            e.t,
            e.p_hat.x,
            e.p_hat.y,
            e.p_hat.z,
            e.v_hat.x,
            e.v_hat.y,
            e.v_hat.z,
            e.theta_hat,
            e.phi_hat,
            e.gamma_hat,
            e.gamma_dot_hat,
        ];
        w.write_record(vals.iter().map(|v| v.to_string())).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

/// Root mean square of `a - b`; angular differences are wrapped first.
pub fn rmse(a: &[f64], b: &[f64], angular: bool) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(Error::EmptySeries);
    }
    let sum: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| {
            let d = if angular { wrap_angle(x - y) } else { x - y };
            d * d
        })
        .sum();
    Ok((sum / a.len() as f64).sqrt())
}

/// Flat configuration shared by every command. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub r: f64,
    pub phi_g: f64,
    pub ts: f64,
    pub approach: u8,
    pub use_imu: bool,
    pub lambda_gps_baro: f64,
    pub lambda_line_angle: f64,
    pub k_gamma: [f64; 2],
    pub rod_length: f64,
    pub pulley_length: f64,
    pub attach_height: f64,
    pub attach_setback: f64,
    pub encoder_cpr: u32,
    pub warmup: f64,
    pub speed_bins: Vec<f64>,

    pub theta0: f64,
    pub phi0: f64,
    pub a_theta: f64,
    pub a_phi: f64,
    pub f_loop: f64,
    pub speed_scale: f64,
    pub duration: f64,
    pub seed: u64,
    pub accel_noise_density: f64,
    pub accel_bias: f64,
    pub gyro_noise_density: f64,
    pub gyro_bias: f64,
    pub gps_sigma_xy: f64,
    pub gps_speed_inflation: f64,
    pub gps_rate: f64,
    pub gps_latency: f64,
    pub baro_resolution: f64,
    pub baro_rate: f64,
    pub attitude_rms: f64,

    pub bode_f_min: f64,
    pub bode_f_max: f64,
    pub bode_points: usize,
}

impl Default for Config {
    fn default() -> Self {
        let geo = EncoderGeometry::default();
        let traj = TrajectoryParams::default();
        let noise = NoiseSpec::default();
        Self {
            r: traj.r,
            phi_g: traj.phi_g,
            ts: traj.ts,
            approach: 3,
            use_imu: true,
            lambda_gps_baro: Approach::GpsBaro.default_lambda(),
            lambda_line_angle: Approach::LineAngle.default_lambda(),
            k_gamma: [0.4, 0.9],
            rod_length: geo.rod_length,
            pulley_length: geo.pulley_length,
            attach_height: geo.attach_height,
            attach_setback: geo.attach_setback,
            encoder_cpr: noise.encoder_cpr,
            warmup: 2.0,
            speed_bins: vec![2.0, 3.0, 4.0],
            theta0: traj.theta0,
            phi0: traj.phi0,
            a_theta: traj.a_theta,
            a_phi: traj.a_phi,
            f_loop: traj.f_loop,
            speed_scale: traj.speed_scale,
            duration: traj.duration,
            seed: noise.seed,
            accel_noise_density: noise.accel_noise_density,
            accel_bias: noise.accel_bias,
            gyro_noise_density: noise.gyro_noise_density,
            gyro_bias: noise.gyro_bias,
            gps_sigma_xy: noise.gps_sigma_xy,
            gps_speed_inflation: noise.gps_speed_inflation,
            gps_rate: noise.gps_rate,
            gps_latency: noise.gps_latency,
            baro_resolution: noise.baro_resolution,
            baro_rate: noise.baro_rate,
            attitude_rms: noise.attitude_rms,
            bode_f_min: 0.01,
            bode_f_max: 24.0,
            bode_points: 200,
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn geometry(&self) -> EncoderGeometry {
        EncoderGeometry {
            rod_length: self.rod_length,
            pulley_length: self.pulley_length,
            attach_height: self.attach_height,
            attach_setback: self.attach_setback,
        }
    }

    pub fn lambda_for(&self, approach: Approach) -> f64 {
        match approach {
            Approach::GpsBaro | Approach::GpsBaroCorrected => self.lambda_gps_baro,
            Approach::LineAngle => self.lambda_line_angle,
        }
    }

    pub fn approach(&self) -> Result<Approach> {
        Approach::from_number(self.approach)
    }

    pub fn estimator(&self, approach: Approach) -> EstimatorConfig {
        EstimatorConfig {
            r: self.r,
            phi_g: self.phi_g,
            ts: self.ts,
            lambda: [self.lambda_for(approach); 3],
            k_gamma: self.k_gamma,
            geometry: self.geometry(),
            approach,
            use_imu: self.use_imu,
        }
    }

    pub fn trajectory(&self) -> TrajectoryParams {
        TrajectoryParams {
            r: self.r,
            theta0: self.theta0,
            phi0: self.phi0,
            a_theta: self.a_theta,
            a_phi: self.a_phi,
            f_loop: self.f_loop,
            speed_scale: self.speed_scale,
            duration: self.duration,
            phi_g: self.phi_g,
            ts: self.ts,
        }
    }

    pub fn noise(&self) -> NoiseSpec {
        NoiseSpec {
            accel_noise_density: self.accel_noise_density,
            accel_bias: self.accel_bias,
            gyro_noise_density: self.gyro_noise_density,
            gyro_bias: self.gyro_bias,
            gps_sigma_xy: self.gps_sigma_xy,
            gps_speed_inflation: self.gps_speed_inflation,
            gps_rate: self.gps_rate,
            gps_latency: self.gps_latency,
            baro_resolution: self.baro_resolution,
            baro_rate: self.baro_rate,
            attitude_rms: self.attitude_rms,
            encoder_cpr: self.encoder_cpr,
            seed: self.seed,
        }
    }

    fn validate_bins(&self) -> Result<()> {
        if self.speed_bins.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config("speed_bins must be strictly increasing".into()));
        }
        if !(self.warmup >= 0.0) {
            return Err(Error::Config("warmup must be non-negative".into()));
        }
        Ok(())
    }
}

/// Runs one observer and aligns its outputs with the input frames.
pub fn run_aligned(cfg: EstimatorConfig, frames: &[SensorFrame]) -> Result<Vec<Option<EstimateOutput>>> {
    let mut pipeline = Pipeline::new(cfg)?;
    frames.iter().map(|f| pipeline.step(f)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variable {
    PX,
    PY,
    PZ,
    Gamma,
}

impl Variable {
    pub const ALL: [Variable; 4] = [Variable::PX, Variable::PY, Variable::PZ, Variable::Gamma];

    pub fn name(self) -> &'static str {
        match self {
            Variable::PX => "p_X",
            Variable::PY => "p_Y",
            Variable::PZ => "p_Z",
            Variable::Gamma => "gamma",
        }
    }

    fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == s)
    }

    fn angular(self) -> bool {
        self == Variable::Gamma
    }

    fn of_estimate(self, e: &EstimateOutput) -> f64 {
        match self {
            Variable::PX => e.p_hat.x,
            Variable::PY => e.p_hat.y,
            Variable::PZ => e.p_hat.z,
            Variable::Gamma => e.gamma_hat,
        }
    }

    fn of_truth(self, t: &LogTruth) -> f64 {
        match self {
            Variable::PX => t.p.x,
            Variable::PY => t.p.y,
            Variable::PZ => t.p.z,
            Variable::Gamma => t.gamma,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reference {
    Truth,
    LineAngle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RmseRow {
    pub variable: Variable,
    pub approach: Approach,
    /// One value per speed bin; `None` for bins without samples.
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RmseReport {
    pub bin_labels: Vec<String>,
    pub rows: Vec<RmseRow>,
    pub reference: Reference,
}

fn bin_labels(edges: &[f64]) -> Vec<String> {
    if edges.is_empty() {
        return vec!["all".into()];
    }
    let mut labels = vec![format!("<{}", edges[0])];
    labels.extend(edges.windows(2).map(|w| format!("{}-{}", w[0], w[1])));
    labels.push(format!(">{}", edges[edges.len() - 1]));
    labels
}

fn bin_of(speed: f64, edges: &[f64]) -> usize {
    edges.iter().take_while(|e| speed >= **e).count()
}

impl RmseReport {
    pub fn row(&self, variable: Variable, approach: Approach) -> Option<&RmseRow> {
        self.rows.iter().find(|r| r.variable == variable && r.approach == approach)
    }

    pub fn value(&self, variable: Variable, approach: Approach, bin: usize) -> Option<f64> {
        self.row(variable, approach).and_then(|r| r.values.get(bin).copied().flatten())
    }

    /// CSV with numeric cells at 9 significant digits.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("variable,approach");
        for l in &self.bin_labels {
            let _ = write!(s, ",{l}");
        }
        s.push('\n');
        for row in &self.rows {
            let _ = write!(s, "{},{}", row.variable.name(), row.approach);
            for v in &row.values {
                match v {
                    Some(x) => {
                        let _ = write!(s, ",{x:.8e}");
                    }
                    None => s.push(','),
                }
            }
            s.push('\n');
        }
        s
    }

    /// Parses [`to_csv`](Self::to_csv) output. The reference kind is not
    /// part of the table and is supplied by the caller.
    pub fn from_csv(text: &str, reference: Reference) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let header = rdr.headers().map_err(csv_error)?.clone();
        if header.len() < 3 || &header[0] != "variable" || &header[1] != "approach" {
            return Err(Error::MalformedRow { line: 1, msg: "not an RMSE report header".into() });
        }
        let bin_labels: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(csv_error)?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            let bad = |msg: String| Error::MalformedRow { line, msg };
            let variable = Variable::from_name(&rec[0]).ok_or_else(|| bad(format!("unknown variable `{}`", &rec[0])))?;
            let approach: Approach = rec[1].parse().map_err(|_| bad(format!("unknown approach `{}`", &rec[1])))?;
            let values = rec
                .iter()
                .skip(2)
                .map(|c| if c.is_empty() { Ok(None) } else { c.parse().map(Some) })
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad("invalid number".into()))?;
            rows.push(RmseRow { variable, approach, values });
        }
        Ok(Self { bin_labels, rows, reference })
    }
}

/// Runs the three observers over one log and reports RMSE per variable and
/// speed bin against the truth columns, or against the line-angle observer
/// when the log has none.
///
/// Samples within `cfg.warmup` seconds of the log start and samples where
/// any observer has no output yet are skipped. The speed of a sample is its
/// `wind` cell, or `cfg.speed_scale` when the cell is empty.
pub fn compare_approaches(records: &[LogRecord], cfg: &Config) -> Result<RmseReport> {
    cfg.validate_bins()?;
    let frames: Vec<SensorFrame> = records.iter().map(|r| r.frame).collect();
    if !frames.iter().any(|f| f.gps_xy.is_some()) {
        return Err(Error::MissingChannel("gps_x"));
    }
    if !frames.iter().any(|f| f.baro_z.is_some()) {
        return Err(Error::MissingChannel("baro_z"));
    }
    if !frames.iter().any(|f| f.encoder.is_some()) {
        return Err(Error::MissingChannel("enc_theta"));
    }

    let runs = Approach::ALL.map(|a| run_aligned(cfg.estimator(a), &frames));
    let [r1, r2, r3] = runs;
    let outputs = [r1?, r2?, r3?];
    let reference = if records.iter().all(|r| r.truth.is_some()) {
        Reference::Truth
    } else {
        Reference::LineAngle
    };

    let nbins = cfg.speed_bins.len() + 1;
    // Per approach, variable and bin: (estimates, references).
    let mut series = vec![vec![vec![(Vec::new(), Vec::new()); nbins]; Variable::ALL.len()]; Approach::ALL.len()];
    let t0 = frames.first().map_or(0.0, |f| f.t);
    for (k, rec) in records.iter().enumerate() {
        if rec.frame.t < t0 + cfg.warmup {
            continue;
        }
        let Some(est) = outputs.iter().map(|o| o[k]).collect::<Option<Vec<_>>>() else {
            continue;
        };
        let bin = bin_of(rec.frame.wind_speed.unwrap_or(cfg.speed_scale), &cfg.speed_bins);
        for (ai, e) in est.iter().enumerate() {
            for (vi, var) in Variable::ALL.iter().enumerate() {
                let reference_value = match (reference, &rec.truth) {
                    (Reference::Truth, Some(t)) => var.of_truth(t),
                    _ => var.of_estimate(&est[2]),
                };
                let (a, b) = &mut series[ai][vi][bin];
                a.push(var.of_estimate(e));
                b.push(reference_value);
            }
        }
    }

    let mut rows = Vec::new();
    for (vi, var) in Variable::ALL.into_iter().enumerate() {
        for (ai, approach) in Approach::ALL.into_iter().enumerate() {
            let values = series[ai][vi]
                .iter()
                .map(|(a, b)| if a.is_empty() { Ok(None) } else { rmse(a, b, var.angular()).map(Some) })
                .collect::<Result<Vec<_>>>()?;
            rows.push(RmseRow { variable: var, approach, values });
        }
    }
    Ok(RmseReport { bin_labels: bin_labels(&cfg.speed_bins), rows, reference })
}

/// Logarithmically spaced frequencies in `[f_min, f_max]`.
pub fn log_frequencies(f_min: f64, f_max: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![f_min],
        _ => {
            let (a, b) = (f_min.ln(), f_max.ln());
            (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
        }
    }
}

/// Frequency responses of the Kalman filters at both tuning ratios and of
/// the velocity-angle observer, one row per frequency.
pub fn bode_table(cfg: &Config) -> Result<String> {
    let freqs = log_frequencies(cfg.bode_f_min, cfg.bode_f_max, cfg.bode_points);
    let (fu_gps, fy_gps) = kf_frequency_response(&KfTuning::uniform(cfg.ts, cfg.lambda_gps_baro), 0, &freqs)?;
    let (fu_la, fy_la) = kf_frequency_response(&KfTuning::uniform(cfg.ts, cfg.lambda_line_angle), 0, &freqs)?;
    let (fy1, fy2) = lo_frequency_response(cfg.k_gamma, cfg.ts, &freqs)?;
    let mut s = String::from("f,kf_fu_gps_baro,kf_fy_gps_baro,kf_fu_line_angle,kf_fy_line_angle,double_integrator,lo_fy1,lo_fy2,derivative\n");
    for (i, &f) in freqs.iter().enumerate() {
        let vals = [
            f,
            fu_gps[i],
            fy_gps[i],
            fu_la[i],
            fy_la[i],
            double_integrator_magnitude(f, cfg.ts),
            fy1[i],
            fy2[i],
            derivative_magnitude(f, cfg.ts),
        ];
        let row: Vec<String> = vals.iter().map(|v| format!("{v:.8e}")).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simkite::synthesize;
    use std::f64::consts::PI;

    fn sample_records() -> Vec<LogRecord> {
        let mut a = SensorFrame::empty(0.0);
        a.accel = Some(Vec3::new(0.1, -0.2, 9.8));
        a.quat = Some(Quat::new(1.0, 0.0, 0.0, 0.0));
        a.encoder = Some(EncoderReading::new(1.234567890123, -0.1));
        let mut b = SensorFrame::empty(0.02);
        b.gps_xy = Some([12.5, -3.25]);
        b.baro_z = Some(19.4);
        b.gyro = Some(BodyRates::new(1e-7, 0.0, -3.0));
        b.wind_speed = Some(2.5);
        vec![LogRecord { frame: a, truth: None }, LogRecord { frame: b, truth: None }]
    }

    #[test]
    fn log_round_trip() {
        let recs = sample_records();
        let mut buf = Vec::new();
        write_log(&recs, &["seed=1".into()], &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# seed=1\nt,ax,ay,az,wx,wy,wz,q1,q2,q3,q4,gps_x,gps_y,baro_z,enc_theta,enc_phi,wind\n"));
        assert!(!text.contains('\r'));
        assert_eq!(read_log(&buf[..]).unwrap(), recs);
    }

    #[test]
    fn simulated_log_round_trip() {
        let p = TrajectoryParams { duration: 2.0, ..Default::default() };
        let sim = synthesize(&p, &NoiseSpec::default().with_seed(9), &EncoderGeometry::default()).unwrap();
        let recs = sim.records();
        let mut buf = Vec::new();
        write_log(&recs, &sim.metadata(), &mut buf).unwrap();
        assert_eq!(read_log(&buf[..]).unwrap(), recs);
    }

    #[test]
    fn empty_cells_are_absent() {
        let text = "t,gps_x,gps_y,baro_z\n0.0,,,1.5\n0.1,1,2,\n";
        let recs = read_log(text.as_bytes()).unwrap();
        assert_eq!(recs[0].frame.gps_xy, None);
        assert_eq!(recs[0].frame.baro_z, Some(1.5));
        assert_eq!(recs[1].frame.gps_xy, Some([1.0, 2.0]));
        assert_eq!(recs[1].frame.accel, None);
    }

    #[test]
    fn log_errors_name_the_line() {
        let text = "t,baro_z\n0.0,1\n0.2,1\n0.1,1\n";
        assert!(matches!(read_log(text.as_bytes()), Err(Error::NonMonotone { line: 4, .. })));
        let text = "t,baro_z\n0.0,1\n0.2,abc\n";
        assert!(matches!(read_log(text.as_bytes()), Err(Error::MalformedRow { line: 3, .. })));
        let text = "t,baro_z\n0.0,1\n0.2\n";
        assert!(matches!(read_log(text.as_bytes()), Err(Error::MalformedRow { line: 3, .. })));
        let text = "t,gps_x,gps_y\n0.0,1,\n";
        assert!(matches!(read_log(text.as_bytes()), Err(Error::MalformedRow { line: 2, .. })));
        let text = "t,bogus\n0.0,1\n";
        assert!(matches!(read_log(text.as_bytes()), Err(Error::MalformedRow { line: 1, .. })));
        let text = "baro_z\n1\n";
        assert!(matches!(read_log(text.as_bytes()), Err(Error::MissingChannel("t"))));
    }

    #[test]
    fn rmse_examples() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(rmse(&a, &a, false).unwrap(), 0.0);
        let b = [1.5, 2.5, 3.5];
        assert!((rmse(&a, &b, false).unwrap() - 0.5).abs() < 1e-15);
        let x = [PI - 0.05; 4];
        let y = [-PI + 0.05; 4];
        assert!((rmse(&x, &y, true).unwrap() - 0.1).abs() < 1e-12);
        assert!(matches!(rmse(&a, &b[..2], false), Err(Error::LengthMismatch(3, 2))));
        assert!(matches!(rmse(&[], &[], false), Err(Error::EmptySeries)));
    }

    #[test]
    fn config_defaults_and_overrides() {
        let cfg = Config::from_toml("").unwrap();
        assert_eq!(cfg, Config::default());
        assert_eq!(cfg.r, 30.0);
        assert_eq!(cfg.ts, 0.02);
        assert_eq!(cfg.k_gamma, [0.4, 0.9]);
        assert_eq!((cfg.lambda_gps_baro, cfg.lambda_line_angle), (10.0, 500.0));
        let cfg = Config::from_toml("r = 25.0 # m\napproach = 1\nk_gamma = [0.3, 0.5]\n").unwrap();
        assert_eq!(cfg.r, 25.0);
        assert_eq!(cfg.approach().unwrap(), Approach::GpsBaro);
        assert_eq!(cfg.estimator(Approach::GpsBaro).lambda, [10.0; 3]);
        assert!(matches!(Config::from_toml("radius = 3"), Err(Error::Config(_))));
        assert!(matches!(Config::from_toml("r = \"x\""), Err(Error::Config(_))));
    }

    #[test]
    fn bins() {
        assert_eq!(bin_labels(&[2.0, 3.0, 4.0]), ["<2", "2-3", "3-4", ">4"]);
        assert_eq!(bin_of(1.5, &[2.0, 3.0, 4.0]), 0);
        assert_eq!(bin_of(3.0, &[2.0, 3.0, 4.0]), 2);
        assert_eq!(bin_of(9.0, &[2.0, 3.0, 4.0]), 3);
    }

    fn short_sim(with_truth: bool) -> Vec<LogRecord> {
        let p = TrajectoryParams { duration: 12.0, speed_scale: 1.0, ..Default::default() };
        let sim = synthesize(&p, &NoiseSpec::default().with_seed(5), &EncoderGeometry::default()).unwrap();
        let mut recs = sim.records();
        if !with_truth {
            recs.iter_mut().for_each(|r| r.truth = None);
        }
        recs
    }

    #[test]
    fn report_layout_and_read_back() {
        let report = compare_approaches(&short_sim(true), &Config::default()).unwrap();
        assert_eq!(report.reference, Reference::Truth);
        assert_eq!(report.rows.len(), 12);
        assert!(report.rows.iter().all(|r| r.values.len() == 4));
        // speed_scale 1 falls in the first bin only.
        assert!(report.value(Variable::PX, Approach::GpsBaro, 0).unwrap() > 0.0);
        assert!(report.value(Variable::PX, Approach::GpsBaro, 1).is_none());
        let csv = report.to_csv();
        let back = RmseReport::from_csv(&csv, Reference::Truth).unwrap();
        assert_eq!(back.to_csv(), csv);
        for (a, b) in report.rows.iter().zip(&back.rows) {
            for (x, y) in a.values.iter().zip(&b.values) {
                match (x, y) {
                    (Some(x), Some(y)) => assert!((x - y).abs() <= 1e-8 * x.abs()),
                    (None, None) => {}
                    _ => panic!("cell mismatch"),
                }
            }
        }
    }

    #[test]
    fn line_angle_reference_rows_are_zero() {
        let report = compare_approaches(&short_sim(false), &Config::default()).unwrap();
        assert_eq!(report.reference, Reference::LineAngle);
        for var in Variable::ALL {
            assert_eq!(report.value(var, Approach::LineAngle, 0), Some(0.0));
        }
    }

    #[test]
    fn comparison_is_repeatable() {
        let recs = short_sim(true);
        let a = compare_approaches(&recs, &Config::default()).unwrap().to_csv();
        let b = compare_approaches(&recs, &Config::default()).unwrap().to_csv();
        assert_eq!(a, b);
    }

    #[test]
    fn missing_channels_are_reported() {
        let mut recs = short_sim(true);
        recs.iter_mut().for_each(|r| r.frame.encoder = None);
        assert!(matches!(compare_approaches(&recs, &Config::default()), Err(Error::MissingChannel(_))));
    }

    #[test]
    fn bode_table_shape() {
        let cfg = Config { bode_points: 5, ..Default::default() };
        let table = bode_table(&cfg).unwrap();
        let lines: Vec<_> = table.lines().collect();
        assert_eq!(lines.len(), 6);
        assert!(lines[1..].iter().all(|l| l.split(',').count() == 9));
    }
}
