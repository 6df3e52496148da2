//! End-to-end properties of the observers on simulated flights.

use kitefusion::evalio::run_aligned;
use kitefusion::frames::wrap_angle;
use kitefusion::lineangle::EncoderGeometry;
use kitefusion::pipelines::{position_measurement, Approach, EstimatorConfig, Pipeline, SensorFrame};
use kitefusion::simkite::{synthesize, NoiseSpec, Simulation, TrajectoryParams};
use std::f64::consts::PI;

fn flight(seed: u64, duration: f64) -> Simulation {
    let params = TrajectoryParams { duration, ..Default::default() };
    synthesize(&params, &NoiseSpec::default().with_seed(seed), &EncoderGeometry::default()).unwrap()
}

fn position_rmse(cfg: EstimatorConfig, sim: &Simulation) -> f64 {
    let out = run_aligned(cfg, &sim.frames).unwrap();
    let (mut sq, mut n) = (0.0, 0usize);
    for (e, s) in out.iter().zip(&sim.truth) {
        if let (Some(e), true) = (e, s.t >= 2.0) {
            sq += (e.p_hat - s.p).norm_squared();
            n += 1;
        }
    }
    (sq / n as f64).sqrt()
}

#[test]
fn measured_positions_on_sphere() {
    let sim = flight(1, 20.0);
    let la = EstimatorConfig::for_approach(Approach::LineAngle);
    let corrected = EstimatorConfig::for_approach(Approach::GpsBaroCorrected);
    let mut held = None;
    let mut seen = 0;
    for f in &sim.frames {
        let m = position_measurement(&la, f, None).unwrap().unwrap();
        assert!((m.p.norm() - 30.0).abs() < 1e-12 * 30.0);
        held = f.baro_z.or(held);
        if let (Some(m), true) = (position_measurement(&corrected, f, held).unwrap(), f.gps_xy.is_some() && held.is_some()) {
            let z = f.baro_z.unwrap_or(held.unwrap());
            let on = kitefusion::Vec3::new(m.p.x, m.p.y, z);
            assert!((on.norm() - 30.0).abs() < 1e-9);
            seen += 1;
        }
    }
    assert!(seen > 50);
}

#[test]
fn line_angle_estimates_stay_on_sphere() {
    let sim = flight(2, 30.0);
    for e in run_aligned(EstimatorConfig::for_approach(Approach::LineAngle), &sim.frames).unwrap().into_iter().flatten() {
        assert!(e.p_hat.z.abs() <= 30.0 * (1.0 + 1e-6));
        assert!(e.gamma_hat > -PI && e.gamma_hat <= PI);
    }
}

#[test]
fn noiseless_line_angle_tracks_truth() {
    let params = TrajectoryParams { duration: 20.0, ..Default::default() };
    let sim = synthesize(&params, &NoiseSpec::zero(), &EncoderGeometry::default()).unwrap();
    let out = run_aligned(EstimatorConfig::for_approach(Approach::LineAngle), &sim.frames).unwrap();
    for (e, s) in out.iter().zip(&sim.truth).filter(|(_, s)| s.t >= 2.0) {
        assert!((e.unwrap().p_hat - s.p).norm() < 0.01);
    }
}

#[test]
fn velocity_angle_is_continuous() {
    let sim = flight(3, 60.0);
    for approach in Approach::ALL {
        let out: Vec<_> = run_aligned(EstimatorConfig::for_approach(approach), &sim.frames)
            .unwrap()
            .into_iter()
            .flatten()
            .collect();
        for w in out.windows(2) {
            let jump = wrap_angle(w[1].gamma_hat - w[0].gamma_hat).abs();
            assert!(jump < PI / 4.0, "approach {approach}: jump {jump} at t = {}", w[1].t);
        }
    }
}

#[test]
fn line_angle_beats_gps() {
    for seed in 10..15 {
        let sim = flight(seed, 40.0);
        let gps = position_rmse(EstimatorConfig::for_approach(Approach::GpsBaro), &sim);
        let la = position_rmse(EstimatorConfig::for_approach(Approach::LineAngle), &sim);
        assert!(gps > la, "seed {seed}: {gps} <= {la}");
    }
}

#[test]
fn estimates_without_imu_stay_bounded() {
    let sim = flight(4, 60.0);
    for approach in Approach::ALL {
        let cfg = EstimatorConfig { use_imu: false, ..EstimatorConfig::for_approach(approach) };
        let out = run_aligned(cfg, &sim.frames).unwrap();
        for (e, s) in out.iter().zip(&sim.truth) {
            if let (Some(e), true) = (e, s.t >= 10.0) {
                assert!(e.p_hat.iter().chain(e.v_hat.iter()).all(|v| v.is_finite()));
                assert!((e.p_hat - s.p).norm() < 30.0, "approach {approach}: {} at {}", (e.p_hat - s.p).norm(), s.t);
            }
        }
    }
}

#[test]
fn outputs_are_bit_identical() {
    let sim = flight(5, 20.0);
    for approach in Approach::ALL {
        let cfg = EstimatorConfig::for_approach(approach);
        assert_eq!(run_aligned(cfg, &sim.frames).unwrap(), run_aligned(cfg, &sim.frames).unwrap());
    }
}

#[test]
fn gps_only_frames_leave_height_alone() {
    let cfg = EstimatorConfig { use_imu: false, ..EstimatorConfig::for_approach(Approach::GpsBaro) };
    let mut p = Pipeline::new(cfg).unwrap();
    let mut f = SensorFrame::empty(0.0);
    f.gps_xy = Some([20.0, 0.0]);
    f.baro_z = Some(22.0);
    p.step(&f).unwrap();
    let mut g = SensorFrame::empty(0.02);
    g.gps_xy = Some([21.0, 1.0]);
    p.step(&g).unwrap();
    let mut h = SensorFrame::empty(0.04);
    h.gps_xy = Some([22.0, 2.0]);
    let out = p.step(&h).unwrap().unwrap();
    assert_eq!(out.p_hat.z, 22.0);
    assert!(out.p_hat.x > 20.0 && out.p_hat.y > 0.0);
}
