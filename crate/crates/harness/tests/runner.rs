use std::process::Command;

use spatial_trees_harness::{acceptance_suite, find, registry, run_experiment, ConfigError, ExperimentConfig};

/// Small versions of every experiment, so the whole registry runs in seconds.
fn small(name: &str) -> &'static str {
    match name {
        "cov-check" => "grid_size = 257\nreplicas = 200",
        "hausdorff-verify" => "delta = 0.03125\ncalibration_reps = 20\nreplicas = 5",
        "tour-bound" => "replicas = 6\ngrid_size = 65",
        "arc-identity" => "grid_size = 1025\ndelta = 0.03125\ncalibration_reps = 20\ntimes = 4\npairs = 3",
        "tour-convergence" => "n = 200\nreplicas = 100",
        "bm-properties" => "replicas = 200\nh_divisor = 5",
        "mass-identity" => "replicas = 4\ngrid_size = 1025\nrefine = 16",
        "spectral-dim" => "n = 500\nreplicas = 10\nwalks = 20\nm_min = 10\nm_max = 100\npoints = 3",
        "walk-scaling" => "replicas = 20\nn_small = 100\nn = 200",
        "superprocess-sanity" => "replicas = 20\ndt_factor = 0.01\ngrid_max = 4096",
        "hausdorff-calibrate" => "replicas = 4\ndelta = 0.03125",
        "reduced-subtree-check" => "replicas = 3\nn = 200",
        "oracle-batch" => "arrays = 30\nwalk_trees = 5",
        _ => "",
    }
}

#[test]
fn registry_lists_twelve_criteria_in_order() {
    let suite = acceptance_suite();
    let criteria: Vec<u8> = suite.iter().map(|s| s.criterion.unwrap()).collect();
    assert_eq!(criteria, (1..=12).collect::<Vec<u8>>());
    let mut names: Vec<&str> = registry().iter().map(|s| s.name).collect();
    names.sort_unstable();
    names.dedup();
    assert_eq!(names.len(), registry().len());
    for spec in registry() {
        // every default passes its own validation
        let mut cfg = ExperimentConfig::defaults(spec, 0);
        for p in spec.params {
            cfg.set(spec, p.key, p.default).unwrap();
        }
    }
    assert!(matches!(find("no-such-thing"), Err(ConfigError::UnknownExperiment(_))));
}

#[test]
fn every_experiment_runs_at_small_size() {
    let dir = tempfile::tempdir().unwrap();
    for spec in registry() {
        let cfg = ExperimentConfig::from_text(spec, 11, small(spec.name)).unwrap();
        let out = dir.path().join(spec.name);
        let report = run_experiment(&cfg, Some(&out)).unwrap_or_else(|e| panic!("{}: {e:#}", spec.name));
        assert!(out.join("report.json").exists());
        for f in &report.files {
            assert!(out.join(f).exists(), "{} lists missing file {f}", spec.name);
        }
        assert_eq!(report.criterion, spec.criterion);
    }
}

#[test]
fn exact_checks_pass_at_small_size() {
    for name in ["oracle-batch", "alpha-uniformity", "tour-bound"] {
        let spec = find(name).unwrap();
        let cfg = ExperimentConfig::from_text(spec, 5, small(name)).unwrap();
        assert!(run_experiment(&cfg, None).unwrap().passed, "{name}");
    }
}

#[test]
fn reruns_give_identical_reports() {
    let spec = find("cov-check").unwrap();
    let cfg = ExperimentConfig::from_text(spec, 42, small("cov-check")).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_experiment(&cfg, Some(a.path())).unwrap();
    run_experiment(&cfg, Some(b.path())).unwrap();
    for f in ["report.json", "covariance.csv"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert_eq!(x, y, "{f} differs between reruns");
    }
    let other = ExperimentConfig { seed: 43, ..cfg };
    let c = tempfile::tempdir().unwrap();
    run_experiment(&other, Some(c.path())).unwrap();
    assert_ne!(
        std::fs::read(a.path().join("covariance.csv")).unwrap(),
        std::fs::read(c.path().join("covariance.csv")).unwrap()
    );
}

fn stree(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_stree")).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stdout).into(), String::from_utf8_lossy(&out.stderr).into())
}

#[test]
fn cli_list_and_usage_errors() {
    let (code, out, _) = stree(&["list"]);
    assert_eq!(code, 0);
    assert_eq!(out.lines().count(), 12);
    assert!(out.lines().next().unwrap().contains("cov-check"));

    let (code, _, err) = stree(&["run", "no-such-thing"]);
    assert_eq!(code, 2);
    assert!(err.contains("unknown experiment"));
    let (code, _, err) = stree(&["cov-check", "--set", "colour=red"]);
    assert_eq!(code, 2);
    assert!(err.contains("unknown key"));
    let (code, _, _) = stree(&["oracle-batch", "--replicas", "5"]);
    assert_eq!(code, 2);
    let (code, _, _) = stree(&["no-such-subcommand"]);
    assert_eq!(code, 2);
}

#[test]
fn cli_config_file_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    std::fs::write(&conf, "# small run\nseed = 7\ngrid_size = 129\nreplicas = 50\n").unwrap();
    let out = dir.path().join("out");
    let (code, stdout, _) =
        stree(&["cov-check", "--config", conf.to_str().unwrap(), "--replicas", "60", "--out", out.to_str().unwrap()]);
    assert!(code == 0 || code == 1, "{stdout}");
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["seed"], 7);
    assert_eq!(report["config"]["params"]["replicas"], "60");
    assert_eq!(report["config"]["params"]["grid_size"], "129");
    assert!(out.join("timing.json").exists());
    assert!(report.get("wall_clock_secs").is_none());

    let (code, _, _) = stree(&["simulate-tour", "--set", "mode=discrete", "--set", "n=50", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    let tour = std::fs::read_to_string(out.join("tour.csv")).unwrap();
    assert_eq!(tour.lines().next().unwrap(), "t,v,r_1,r_2");
    assert_eq!(tour.lines().count(), 1 + 101);
}
