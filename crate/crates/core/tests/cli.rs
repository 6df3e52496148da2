//! Command-line verbs and exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kitefusion::evalio::{read_log_file, Reference, RmseReport};

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("kitefusion-cli-{name}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn kitefusion(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kitefusion")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_estimate_evaluate_bode() {
    let dir = scratch("verbs");
    let cfg = dir.join("cfg.toml");
    std::fs::write(&cfg, "# short run\nduration = 15.0 # s\nseed = 3\n").unwrap();
    let log = dir.join("log.csv");
    let out = kitefusion(&["simulate", "-c", s(&cfg), "-o", s(&log)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&log).unwrap();
    assert!(text.starts_with("# rng=ChaCha8 seed=3\n"));
    assert_eq!(read_log_file(&log).unwrap().len(), 751);

    for approach in ["1", "2", "3"] {
        let est = dir.join(format!("est{approach}.csv"));
        let out = kitefusion(&["estimate", s(&log), "-c", s(&cfg), "-a", approach, "-o", s(&est)]);
        assert!(out.status.success());
        let text = std::fs::read_to_string(&est).unwrap();
        assert!(text.starts_with("t,px,py,pz,vx,vy,vz,theta,phi,gamma,gamma_dot\n"));
        assert!(text.lines().count() > 700);
    }

    let out = kitefusion(&["evaluate", s(&log), "-c", s(&cfg)]);
    assert!(out.status.success());
    let report = RmseReport::from_csv(&String::from_utf8(out.stdout).unwrap(), Reference::Truth).unwrap();
    assert_eq!(report.rows.len(), 12);
    assert_eq!(report.bin_labels, ["<2", "2-3", "3-4", ">4"]);

    let out = kitefusion(&["bode"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 201);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn input_errors_exit_with_2() {
    let dir = scratch("input");
    let log = dir.join("bad.csv");
    std::fs::write(&log, "t,baro_z\n0.0,1\n0.02,x\n").unwrap();
    let out = kitefusion(&["estimate", s(&log)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    std::fs::write(&log, "t,baro_z\n0.04,1\n0.02,1\n").unwrap();
    assert_eq!(kitefusion(&["estimate", s(&log)]).status.code(), Some(2));

    let cfg = dir.join("cfg.toml");
    std::fs::write(&cfg, "tether = 30\n").unwrap();
    assert_eq!(kitefusion(&["bode", "-c", s(&cfg)]).status.code(), Some(2));
    assert_eq!(kitefusion(&["frobnicate"]).status.code(), Some(2));

    std::fs::write(&log, "t,baro_z\n0.0,1\n").unwrap();
    assert_eq!(kitefusion(&["evaluate", s(&log)]).status.code(), Some(2));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn unstable_observer_exits_with_3() {
    let dir = scratch("numeric");
    let cfg = dir.join("cfg.toml");
    std::fs::write(&cfg, "k_gamma = [0.4, -5.0]\n").unwrap();
    let log = dir.join("log.csv");
    std::fs::write(&log, "t,baro_z\n0.0,1\n").unwrap();
    assert_eq!(kitefusion(&["estimate", s(&log), "-c", s(&cfg)]).status.code(), Some(3));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn shipped_config_matches_defaults() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../config/kitefusion.toml");
    let cfg = kitefusion::evalio::Config::from_file(&path).unwrap();
    assert_eq!(cfg, kitefusion::evalio::Config::default());
}
