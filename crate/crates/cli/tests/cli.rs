use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bench(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../benchmarks").join(name)
}

fn homwave(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_homwave")).args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const CONSTANT: &str = r#"coefficient={"kind":"constant","value":2.0}"#;

#[test]
fn epsilon_above_one_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r");
    let o = homwave(&["sweep", "--config", bench("b1.json").to_str().unwrap(), "--override", "epsilons=[2.0]", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("ε must lie in (0,1]"), "{}", stderr(&o));
}

#[test]
fn unknown_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    let text = std::fs::read_to_string(bench("b1.json")).unwrap().replacen("\"epsilons\"", "\"epsilonz\"", 1);
    std::fs::write(&cfg, text).unwrap();
    let o = homwave(&["sweep", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("r").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("epsilonz"), "{}", stderr(&o));
}

#[test]
fn missing_config_and_unknown_subcommand_fail() {
    let o = homwave(&["sweep", "--out", "nowhere"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--config"));
    let o = homwave(&["frobnicate"]);
    assert_ne!(o.status.code(), Some(0));
    let o = homwave(&["cell", "--config", "/nonexistent/exp.json", "--out", "x.json"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn constant_coefficient_sweep_is_all_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r");
    let o = homwave(&[
        "sweep",
        "--config",
        bench("b1.json").to_str().unwrap(),
        "--override",
        CONSTANT,
        "--override",
        "grid.points_per_period=8",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("errors.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "epsilon,t,errL2_u,errL2_combined,errL2_discrepancy,dataNorm,normalizedErr,correctorL2"
    );
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[2], "0e0", "{line}");
        assert_eq!(f[3], "0e0", "{line}");
        assert_eq!(f[4], "0e0", "{line}");
    }
    let rates = json(&out.join("rates.json"));
    assert!(rates["rates"].as_array().unwrap().iter().all(|r| r["fit"].is_null() && r["note"].as_str().unwrap().contains("undefined")));
    for f in ["constants.json", "plots.gp", "manifest.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn under_resolved_sweep_exits_with_acceptance_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r");
    let o = homwave(&["sweep", "--config", bench("b1.json").to_str().unwrap(), "--override", "grid.points_per_period=4", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("Richardson"));
    let rates = json(&out.join("rates.json"));
    assert_eq!(rates["richardson_clean"], false);
    assert_eq!(rates["acceptable"], false);
}

#[test]
fn outputs_are_byte_identical_across_runs_and_job_counts() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, jobs: &str| {
        let out = dir.path().join(name);
        let o = homwave(&[
            "sweep",
            "--config",
            bench("b1.json").to_str().unwrap(),
            "--override",
            "grid.points_per_period=8",
            "--override",
            "epsilons=[0.25,0.125,0.0625]",
            "--jobs",
            jobs,
            "--seed",
            "99",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.code() == Some(0) || o.status.code() == Some(2), "{}", stderr(&o));
        out
    };
    let a = run("a", "1");
    let b = run("b", "2");
    for f in ["errors.csv", "rates.json", "constants.json", "plots.gp"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let m = json(&a.join("manifest.json"));
    assert_eq!(m["seed"], 99);
    assert_eq!(m["config"]["grid"]["points_per_period"], 8);
    assert_eq!(m["config"]["seed"], 99);
    assert!(m["config"]["evolution"]["samples_per_unit"].is_number());
    assert!(m["config"]["extension"]["margin_periods"].is_number());
    assert!(m["runtime_seconds"].is_number());
}

#[test]
fn cell_reports_the_two_phase_effective_coefficient() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cell.json");
    let o = homwave(&["cell", "--config", bench("b1.json").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let c = json(&out);
    assert!((c["g0"]["re"][0][0].as_f64().unwrap() - 1.6).abs() < 1e-6);
    assert!((c["voigt"]["re"][0][0].as_f64().unwrap() - 2.5).abs() < 1e-12);
    assert_eq!(c["certificate"]["passed"], true);
    let samples = std::fs::read_to_string(dir.path().join("cell.corrector.csv")).unwrap();
    assert_eq!(samples.lines().count(), 513);
    assert!(dir.path().join("cell.manifest.json").exists());
}

#[test]
fn solve_then_approx_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let traj = dir.path().join("traj");
    let cfg = bench("b1.json");
    let o = homwave(&["solve", "--config", cfg.to_str().unwrap(), "--epsilon", "0.0625", "--out", traj.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let m = json(&traj.join("manifest.json"));
    assert_eq!(m["extra"]["epsilon"], 0.0625);
    // Energy of the unforced part is not conserved here (the data carry a forcing), but it is recorded per time.
    assert_eq!(m["extra"]["problems"][0]["energy"].as_array().unwrap().len(), 4);
    let errors = dir.path().join("errors.csv");
    let o = homwave(&["approx", "--config", cfg.to_str().unwrap(), "--traj", traj.to_str().unwrap(), "--out", errors.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(&errors).unwrap();
    let rows: Vec<Vec<String>> = text.lines().map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows[0], ["t", "errL2_u", "errL2_combined", "errL2_discrepancy", "dataNorm"]);
    assert_eq!(rows[1][1], "0e0");
    let u1: f64 = rows[3][1].parse().unwrap();
    let comb1: f64 = rows[3][2].parse().unwrap();
    assert!(u1 > 0.0 && comb1 < u1);

    // A trajectory from a different grid is rejected.
    let o = homwave(&[
        "approx",
        "--config",
        cfg.to_str().unwrap(),
        "--override",
        "grid.points_per_period=64",
        "--traj",
        traj.to_str().unwrap(),
        "--out",
        errors.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("grid"), "{}", stderr(&o));
}

#[test]
fn opnorm_gaps_vanish_for_constant_coefficient() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gaps.json");
    let o = homwave(&[
        "opnorm",
        "--config",
        bench("b1.json").to_str().unwrap(),
        "--override",
        CONSTANT,
        "--override",
        "epsilons=[0.25,0.125,0.0625]",
        "--override",
        "acceptance.exploratory=true",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let g = json(&out);
    assert!(g["rows"].as_array().unwrap().iter().all(|r| r["gap"].as_f64().unwrap() < 1e-9));
}

#[test]
fn b1_sweep_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r");
    let o = homwave(&["sweep", "--config", bench("b1.json").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rates = json(&out.join("rates.json"));
    let r = rates["rates"].as_array().unwrap().iter().find(|r| r["quantity"] == "normalized_u" && r["t"] == 1.0).unwrap();
    let slope = r["fit"]["slope"].as_f64().unwrap();
    assert!((0.85..=1.3).contains(&slope), "{slope}");
    assert!(r["fit"]["residual"].is_number());
}
