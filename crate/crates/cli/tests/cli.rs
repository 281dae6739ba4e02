use std::path::Path;
use std::process::{Command, Output};

use nearfield::harness::ExperimentConfig;
use nearfield::pipeline::{ArrayConfig, EstimatorConfig, Method, SolverKind};

fn nearfield(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nearfield"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn tiny_config(dir: &Path) -> String {
    let mut cfg = ExperimentConfig::desk();
    cfg.profile = "tiny".into();
    cfg.array = ArrayConfig {
        bs_antennas: [4, 8],
        tiles: [2, 2],
        user_antennas: 2,
        ..ArrayConfig::full()
    };
    let mut est = EstimatorConfig {
        slots: 4,
        chains_per_tile: 2,
        angular_grid: 16,
        full_array_grid: 16,
        spherical_angle_grid: 8,
        spherical_rings: 2,
        stage1_solver: SolverKind::Sbl,
        ..EstimatorConfig::default()
    };
    est.location_grid.counts = [5, 5, 1];
    cfg.estimator = est;
    cfg.sweep.methods = vec![Method::ProposedSbl, Method::Stage1Only, Method::EigenDictionary];
    cfg.sweep.snr_db = vec![0.0, 10.0];
    cfg.sweep.trials = 2;
    let path = dir.join("tiny.json");
    std::fs::write(&path, cfg.to_json()).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = nearfield(&[], dir.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
    let o = nearfield(&["sweep", "--bogus"], dir.path());
    assert_eq!(code(&o), 1);
    let o = nearfield(&["simulate", "--seed", "x"], dir.path());
    assert_eq!(code(&o), 1);
    assert_eq!(code(&nearfield(&["--help"], dir.path())), 0);
}

#[test]
fn config_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = nearfield(&["sweep", "--config", "missing.json"], dir.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("missing.json"), "{}", stderr(&o));
    let o = nearfield(&["simulate", "--method", "nonsense"], dir.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("unknown method"));
    let o = nearfield(&["verify", "--profile", "huge"], dir.path());
    assert_eq!(code(&o), 1);
    std::fs::write(dir.path().join("bad.json"), "{ not json").unwrap();
    assert_eq!(code(&nearfield(&["sweep", "--config", "bad.json"], dir.path())), 1);
}

#[test]
fn simulate_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = nearfield(&["simulate", "--method", "proposed", "--seed", "7", "--out", out], dir.path());
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    for f in ["simulate.json", "h_true.nfm", "h_hat.nfm"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{f} differs");
    }
    let report = std::fs::read_to_string(dir.path().join("a/simulate.json")).unwrap();
    assert!(report.contains("\"method\": \"proposed-sbl\""));
    assert!(report.contains("\"stages\""));
}

#[test]
fn sweep_writes_identical_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    for (out, threads) in [("a", "1"), ("b", "2")] {
        let o = nearfield(&["sweep", "--config", &cfg, "--out", out, "--threads", threads], dir.path());
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    for f in ["results.csv", "results.json"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs");
    }
    let csv = std::fs::read_to_string(dir.path().join("a/results.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "method,snr_db,trial,seed,nmse_db,rmse_m,t_stage1_ms,t_stage2_ms,t_stage3_ms,status"
    );
    // 3 methods x 2 points x 2 trials, then 6 aggregate rows
    assert_eq!(lines.count(), 12 + 6);
}

#[test]
fn sweep_overrides_narrow_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let o = nearfield(
        &["sweep", "--config", &cfg, "--method", "stage1-only", "--snr-db", "-5", "--trials", "1", "--seed", "3"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("out/results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.lines().nth(1).unwrap().starts_with("stage1-only,-5,0,"));
}

#[test]
fn verify_passes_on_the_default_profile() {
    let dir = tempfile::tempdir().unwrap();
    let o = nearfield(&["verify"], dir.path());
    let out = String::from_utf8_lossy(&o.stdout);
    assert_eq!(code(&o), 0, "{out}{}", stderr(&o));
    assert!(!out.contains("FAIL"));
}

#[test]
fn export_dict_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let o = nearfield(&["export-dict", "--config", &cfg, "--out", "dicts"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["angular.nfm", "spherical.nfm", "combiner.nfm", "manifest.txt"] {
        assert!(dir.path().join("dicts").join(f).is_file(), "{f}");
    }
    let o = nearfield(&["config", "--profile", "full"], dir.path());
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout.clone()).unwrap();
    assert_eq!(ExperimentConfig::from_json(&text).unwrap(), ExperimentConfig::full());
    assert!(stderr(&o).contains("warning"));
}
