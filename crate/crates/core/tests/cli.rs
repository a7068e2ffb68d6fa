use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rmns::config::ExperimentConfig;
use rmns::scattering::read_stack;

fn rmns(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rmns"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

#[test]
fn simulate_is_deterministic_and_stamped() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for (out, seed) in [("a.rmns", "7"), ("b.rmns", "7"), ("c.rmns", "8")] {
        let o = rmns(
            &["simulate", "--frames", "20", "--seed", seed, "--out", out],
            d,
        );
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        assert!(String::from_utf8_lossy(&o.stdout).contains(&format!("seed={seed}")));
    }
    let (a, b, c) = (
        fs::read(d.join("a.rmns")).unwrap(),
        fs::read(d.join("b.rmns")).unwrap(),
        fs::read(d.join("c.rmns")).unwrap(),
    );
    assert_eq!(a, b);
    assert_ne!(a, c);
    let stack = read_stack(&a[..]).unwrap();
    assert_eq!(stack.frames.len(), 20);
    assert_eq!(stack.header.seed, 7);
    assert_eq!(
        stack.header.config_checksum,
        ExperimentConfig::default().checksum()
    );
}

#[test]
fn metadata_and_seed_do_not_change_checksum() {
    let base = ExperimentConfig::default();
    let text = format!(
        "seed = 99\n{}\n[metadata]\nnote = \"x\"\n",
        base.to_toml()
            .replace("seed = 1\n", "")
            .replace("[metadata]\n", "")
    );
    let other = ExperimentConfig::from_toml(&text).unwrap();
    assert_eq!(other.seed, 99);
    assert_eq!(other.checksum(), base.checksum());
    let mut changed = base.clone();
    changed.retrieval.eta0 = 0.31;
    assert_ne!(changed.checksum(), base.checksum());
}

#[test]
fn bad_config_exits_2_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("bad.toml"), "seed = 3\n\n[retrieval]\neta0 = 1.5\n").unwrap();
    let o = rmns(
        &[
            "simulate", "--config", "bad.toml", "--frames", "2", "--out", "x.rmns",
        ],
        d,
    );
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 4"), "{err}");
    assert!(!d.join("x.rmns").exists());

    fs::write(d.join("typo.toml"), "[camera]\nwidht = 10\n").unwrap();
    let o = rmns(&["herald", "--config", "typo.toml", "--out", "h"], d);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn correlate_writes_maps_and_fits() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(
        code(&rmns(
            &["simulate", "--frames", "400", "--seed", "3", "--out", "s.rmns"],
            d
        )),
        0
    );
    let o = rmns(&["correlate", "--stack", "s.rmns", "--out", "out/run"], d);
    assert!(
        matches!(code(&o), 0 | 4),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    for f in [
        "run_stokes.csv",
        "run_anti_stokes.csv",
        "run.pgm",
        "run_twin_fit.csv",
        "run_reference_fit.csv",
    ] {
        assert!(d.join("out").join(f).exists(), "{f} missing");
    }
    let csv = fs::read_to_string(d.join("out/run_anti_stokes.csv")).unwrap();
    assert!(csv.starts_with("# config_checksum="));
    let rows = csv.lines().filter(|l| !l.starts_with('#')).count();
    assert_eq!(rows, 1 + 64 * 128);
    let pgm = fs::read(d.join("out/run.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5"));
    let fit = fs::read_to_string(d.join("out/run_twin_fit.csv")).unwrap();
    assert!(fit.lines().nth(1).unwrap().starts_with("twin,"));

    // reference pixel off the pane is a usage error
    let o = rmns(
        &[
            "correlate",
            "--stack",
            "s.rmns",
            "--ref-x",
            "5000",
            "--out",
            "o2",
        ],
        d,
    );
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn correlate_on_noise_reports_fit_failure() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // no photons in any mode: the maps are pure counting noise
    let mut cfg = ExperimentConfig::default();
    cfg.modes.mean_photons_per_mode = 0.0;
    fs::write(d.join("noise.toml"), cfg.to_toml()).unwrap();
    assert_eq!(
        code(&rmns(
            &[
                "simulate",
                "--config",
                "noise.toml",
                "--frames",
                "200",
                "--out",
                "n.rmns"
            ],
            d
        )),
        0
    );
    let o = rmns(
        &[
            "correlate",
            "--stack",
            "n.rmns",
            "--config",
            "noise.toml",
            "--out",
            "n",
        ],
        d,
    );
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stdout));
    let fit = fs::read_to_string(d.join("n_twin_fit.csv")).unwrap();
    assert!(fit.contains("fit-failed"));
}

#[test]
fn steer_flags_unreachable_fiber_with_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut cfg = ExperimentConfig::default();
    cfg.steer.fibers = vec![
        [-55.038_461_538_461_54, 0.0],
        [-55.038_461_538_461_54, 450.0],
    ];
    fs::write(d.join("far.toml"), cfg.to_toml()).unwrap();
    let o = rmns(
        &[
            "steer", "--config", "far.toml", "--frames", "300", "--out", "st",
        ],
        d,
    );
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(d.join("st_steer.csv")).unwrap();
    let rows: Vec<&str> = table
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[1].contains(",unreachable,"));
    // the clamped drive sits on the band edge
    assert!(rows[1].contains(",90000000,"));
    let schedule = fs::read_to_string(d.join("st_schedule.csv")).unwrap();
    assert_eq!(schedule.lines().filter(|l| !l.starts_with('#')).count(), 2);
    assert!(d.join("st_baseline.csv").exists());
}

#[test]
fn schedule_round_trips_through_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("sched.csv"),
        "shot,theta_read_x,theta_read_y\n0,0,0\n1,0,100\n2,0,-100\n",
    )
    .unwrap();
    let o = rmns(
        &[
            "simulate",
            "--frames",
            "3",
            "--schedule",
            "sched.csv",
            "--out",
            "s.rmns",
        ],
        d,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = rmns(
        &[
            "simulate",
            "--frames",
            "4",
            "--schedule",
            "sched.csv",
            "--out",
            "t.rmns",
        ],
        d,
    );
    assert_eq!(code(&o), 2);
}

#[test]
fn herald_writes_stats_and_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = rmns(
        &["herald", "--shots", "20000", "--seed", "5", "--out", "h"],
        d,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stats = fs::read_to_string(d.join("h.csv")).unwrap();
    let mut lines = stats.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header.len(), row.len());
    let col = |name: &str| row[header.iter().position(|h| *h == name).unwrap()];
    assert_eq!(col("modes"), "20");
    assert_eq!(col("shots"), "20000");
    let sweep = fs::read_to_string(d.join("h_sweep.csv")).unwrap();
    let rows: Vec<&str> = sweep
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[2].starts_with("1000,"));

    let o = rmns(&["herald", "--shots", "0", "--out", "h0"], d);
    assert_eq!(code(&o), 2);
}
