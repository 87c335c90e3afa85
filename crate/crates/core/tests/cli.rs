mod common;

use std::path::Path;
use std::process::{Command, Output};

use selfimaging_opo::app::{self, apply_overrides, csv_stamp, exit_code, RunOptions, Subcommand};
use selfimaging_opo::config::{load_config, parse_config, Truncation};
use selfimaging_opo::Error;

fn sopo(args: &[&str], config: Option<&Path>, out: &Path) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sopo"));
    cmd.args(args).arg("--quiet").arg("--out").arg(out);
    if let Some(c) = config {
        cmd.arg("--config").arg(c);
    }
    cmd.output().expect("run sopo")
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("small.toml");
    std::fs::write(&path, common::SMALL).unwrap();
    path
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn design_reports_self_imaging_cavity() {
    let dir = tempfile::tempdir().unwrap();
    let out = sopo(&["design"], None, dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(dir.path(), "design.csv");
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# selfimaging-opo "));
    assert_eq!(lines.next(), Some("quantity,value"));
    let value = |key: &str| -> f64 {
        csv.lines()
            .find_map(|l| l.strip_prefix(&format!("{key},")))
            .unwrap()
            .parse()
            .unwrap()
    };
    assert!((value("l1_m") - 0.048).abs() < 1e-15);
    assert!((value("l2_m") - 0.080).abs() < 1e-15);
    assert!((value("bandwidth_fwhm_hz") - 4.68e6).abs() < 0.05e6);
    assert!(read(dir.path(), "degeneracy_scan.csv").lines().nth(1) == Some("dL1,dL2,stable,gouy_rad,order,offset_hz"));
}

#[test]
fn every_csv_has_stamp_and_header() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let stamp = csv_stamp(&load_config(&config).unwrap().config);
    for cmd in ["design", "spectrum", "modes", "homodyne"] {
        let out_dir = dir.path().join(cmd);
        let out = sopo(&[cmd], Some(&config), &out_dir);
        assert_eq!(out.status.code(), Some(0), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
        for entry in std::fs::read_dir(&out_dir).unwrap() {
            let path = entry.unwrap().path();
            if path.extension().is_some_and(|e| e == "csv") {
                let text = std::fs::read_to_string(&path).unwrap();
                assert!(text.starts_with(&stamp), "{}", path.display());
                let header = text.lines().nth(1).unwrap();
                assert!(header.split(',').all(|h| h.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')));
            }
        }
    }
}

#[test]
fn truncation_flag_sets_basis_size() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let out = sopo(&["spectrum", "--truncation", "3"], Some(&config), dir.path());
    assert_eq!(out.status.code(), Some(0));
    let rows = read(dir.path(), "eigenvalues.csv").lines().count() - 2;
    assert_eq!(rows, 16);
    let resolved = load_config(&dir.path().join("resolved_config.toml")).unwrap().config;
    assert_eq!(resolved.basis.truncation, Truncation::Fixed(3));
}

#[test]
fn homodyne_output_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let run = |name: &str, seed: &str| {
        let out_dir = dir.path().join(name);
        let out = sopo(&["homodyne", "--seed", seed], Some(&config), &out_dir);
        assert_eq!(out.status.code(), Some(0));
        std::fs::read(out_dir.join("homodyne_TEM00.csv")).unwrap()
    };
    let a = run("a", "11");
    assert_eq!(a, run("b", "11"));
    assert_ne!(a, run("c", "12"));
}

#[test]
fn resolved_config_reloads_to_the_same_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = parse_config(common::SMALL).unwrap().config;
    let opts = RunOptions {
        out_dir: Some(dir.path().to_path_buf()),
        seed: Some(99),
        truncation: Some(4),
        quiet: true,
    };
    let outcome = app::run(Subcommand::Design, &config, &opts).unwrap();
    assert_eq!(outcome.exit_code, 0);
    let echoed = load_config(&dir.path().join("resolved_config.toml")).unwrap().config;
    assert_eq!(echoed, apply_overrides(&config, &opts));
    assert_eq!(echoed.homodyne.seed, 99);
}

#[test]
fn invalid_config_gives_single_line_error_and_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, common::SMALL.replace("waist = \"120 um\"", "waist = 120")).unwrap();
    let out = sopo(&["design"], Some(&path), &dir.path().join("o"));
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error kind=config exit=1 message="), "{err}");
    assert!(err.contains("pump.waist"), "{err}");

    let out = sopo(&["design"], Some(&dir.path().join("missing.toml")), &dir.path().join("o"));
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn above_threshold_pump_is_rejected_at_load() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("hot.toml");
    std::fs::write(&path, common::SMALL.replace("pump_ratio = 0.5", "pump_ratio = 1.5")).unwrap();
    let out = sopo(&["spectrum"], Some(&path), &dir.path().join("o"));
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("error kind=config exit=1") && err.contains("squeezing.pump_ratio"), "{err}");
}

#[test]
fn exit_codes_follow_error_class() {
    assert_eq!(exit_code(&Error::NonConvergence("x".into())), 2);
    assert_eq!(exit_code(&Error::Missing("x".into())), 1);
    assert_eq!(exit_code(&Error::AboveThreshold { sigma: 2.0 }), 1);
    let record = app::error_record(&Error::NonConvergence("quadrature \"z\"".into()));
    assert!(record.starts_with("error kind=non-convergence exit=2 message=\""));
    assert_eq!(record.lines().count(), 1);
}

#[test]
fn unknown_subcommand_is_rejected() {
    assert!("spectra".parse::<Subcommand>().is_err());
    for c in Subcommand::ALL {
        assert_eq!(c.name().parse::<Subcommand>().unwrap(), c);
    }
}
