//! `homwave`: cell solves, evolution, error curves, ε-sweeps and operator gaps
//! driven by one JSON experiment config.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime};

use clap::{Args, Parser, Subcommand};
use log::info;
use nalgebra::{DMatrix, DVector};
use serde_json::{json, Value};

use homwave_core::approximation::combined_error;
use homwave_core::evolution::trajectory::{ProblemTag, Trajectory};
use homwave_core::harness::report::{manifest, write_curves_csv, write_json, write_report};
use homwave_core::harness::sweep::solve_point;
use homwave_core::harness::{gap_sweep, run_sweep, Experiment, ExperimentConfig, OpNormOptions};
use homwave_core::io::{read_field_csv, write_corrector_csv, write_field_csv};
use homwave_core::linalg::C64;
use homwave_core::Error;

#[derive(Parser, Debug)]
#[command(name = "homwave", version, about = "Periodic homogenization of Dirichlet wave problems")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file or directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Seed for randomized steps; replaces the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Config override `dotted.key=json`, repeatable.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the cell problem: g⁰, Voigt/Reuss brackets and corrector samples.
    Cell,
    /// Evolve u_ε and u₀ at one ε and write trajectories.
    Solve {
        /// ε to solve at (default: the first configured ε).
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Error curves against trajectories written by `solve`.
    Approx {
        #[arg(long)]
        traj: PathBuf,
    },
    /// ε-sweep with rate fits and Richardson checks.
    Sweep,
    /// Operator cosine and sine gaps over the configured ε and t.
    Opnorm,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Cell => "cell",
            Command::Solve { .. } => "solve",
            Command::Approx { .. } => "approx",
            Command::Sweep => "sweep",
            Command::Opnorm => "opnorm",
        }
    }
}

enum Outcome {
    Ok,
    AcceptanceFailed(String),
}

struct Run {
    config: ExperimentConfig,
    common: Common,
    started: SystemTime,
    clock: Instant,
}

/// Where the main output and its side files go.
struct OutLayout {
    dir: PathBuf,
    /// Main file when `--out` names a file.
    file: Option<PathBuf>,
    prefix: String,
}

impl OutLayout {
    fn new(out: &Path) -> Self {
        match out.extension().and_then(|e| e.to_str()) {
            Some("json") | Some("csv") => OutLayout {
                dir: out.parent().map(Path::to_path_buf).filter(|p| !p.as_os_str().is_empty()).unwrap_or_else(|| PathBuf::from(".")),
                file: Some(out.to_path_buf()),
                prefix: format!("{}.", out.file_stem().and_then(|s| s.to_str()).unwrap_or("out")),
            },
            _ => OutLayout {
                dir: out.to_path_buf(),
                file: None,
                prefix: String::new(),
            },
        }
    }

    fn main_file(&self, default: &str) -> PathBuf {
        self.file.clone().unwrap_or_else(|| self.dir.join(default))
    }

    fn side(&self, name: &str) -> PathBuf {
        self.dir.join(format!("{}{name}", self.prefix))
    }

    fn create(&self) -> homwave_core::Result<()> {
        std::fs::create_dir_all(&self.dir)?;
        Ok(())
    }
}

fn complex_rows(m: &DMatrix<C64>) -> Value {
    let part = |f: fn(&C64) -> f64| -> Vec<Vec<f64>> { m.row_iter().map(|r| r.iter().map(f).collect()).collect() };
    json!({ "re": part(|c| c.re), "im": part(|c| c.im) })
}

fn real_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl Run {
    fn out(&self) -> homwave_core::Result<OutLayout> {
        let out = self.common.out.as_ref().ok_or_else(|| Error::Config("--out is required".into()))?;
        let layout = OutLayout::new(out);
        layout.create()?;
        Ok(layout)
    }

    fn write_manifest(&self, layout: &OutLayout, subcommand: &str, extra: Value) -> homwave_core::Result<()> {
        let m = manifest(
            subcommand,
            self.config.resolved(),
            self.config.seed,
            self.common.jobs,
            self.started,
            self.clock.elapsed(),
            extra,
        );
        write_json(&layout.side("manifest.json"), &m)
    }

    fn cell(&self) -> homwave_core::Result<Outcome> {
        let layout = self.out()?;
        let exp = Experiment::build(self.config.clone())?;
        let eff = &exp.effective;
        let c = &exp.corrector;
        let corrector_file = layout.side("corrector.csv");
        write_corrector_csv(&corrector_file, c)?;
        let body = json!({
            "g0": complex_rows(&eff.g0),
            "voigt": complex_rows(&eff.voigt),
            "reuss": complex_rows(&eff.reuss),
            "g0_real": real_rows(&eff.g0_real),
            "corrector": {
                "grid": c.grid,
                "l2_norm": c.l2_norm,
                "h1_seminorm": c.h1_seminorm,
                "mean_residual": c.mean_residual,
                "equation_residual": c.equation_residual,
                "samples": corrector_file.file_name().and_then(|s| s.to_str()),
            },
            "certificate": exp.certificate,
            "constants": exp.ledger,
        });
        write_json(&layout.main_file("cell.json"), &body)?;
        self.write_manifest(&layout, "cell", json!({ "certified": exp.certificate.passed }))?;
        Ok(Outcome::Ok)
    }

    fn solve(&self, epsilon: Option<f64>) -> homwave_core::Result<Outcome> {
        let layout = self.out()?;
        let exp = Experiment::build(self.config.clone())?;
        let eps = epsilon.unwrap_or(self.config.epsilons[0]);
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::Config(format!("ε must lie in (0,1], got {eps}")));
        }
        let grid = exp.grid(eps, self.config.grid.points_per_period)?;
        let point = solve_point(&exp, eps, &grid, false)?;
        let (_, het, eff) = exp.operators(eps, &grid)?;
        let nc = point.grams.nc;
        let complex = exp.medium.is_complex();
        let mut problems = Vec::new();
        for (name, traj, op) in [("u_eps", &point.u_eps, &het), ("u0", &point.u0, &eff)] {
            let mut files = Vec::new();
            for (i, state) in traj.states.iter().enumerate() {
                let file = format!("{name}_{i:03}.csv");
                write_field_csv(&layout.dir.join(&file), &grid, state, nc, complex)?;
                files.push(file);
            }
            problems.push(json!({
                "name": name,
                "tag": traj.tag,
                "files": files,
                "energy": traj.energy(op),
            }));
        }
        let extra = json!({
            "epsilon": eps,
            "cells": grid.cells(),
            "times": self.config.times,
            "propagator": point.propagator,
            "problems": problems,
        });
        self.write_manifest(&layout, "solve", extra)?;
        Ok(Outcome::Ok)
    }

    fn approx(&self, traj_dir: &Path) -> homwave_core::Result<Outcome> {
        let text = std::fs::read_to_string(traj_dir.join("manifest.json")).map_err(|e| Error::Config(format!("cannot read trajectory manifest: {e}")))?;
        let m: Value = serde_json::from_str(&text)?;
        let extra = &m["extra"];
        let eps = extra["epsilon"].as_f64().ok_or_else(|| Error::Config("trajectory manifest has no epsilon".into()))?;
        let times: Vec<f64> = serde_json::from_value(extra["times"].clone())?;
        let cells: Vec<usize> = serde_json::from_value(extra["cells"].clone())?;
        if times != self.config.times {
            return Err(Error::GridMismatch(format!("trajectory times {times:?} differ from the config times {:?}", self.config.times)));
        }
        let exp = Experiment::build(self.config.clone())?;
        let grid = exp.grid(eps, self.config.grid.points_per_period)?;
        if grid.cells() != cells.as_slice() {
            return Err(Error::GridMismatch(format!("trajectory grid {cells:?} differs from the config grid {:?}", grid.cells())));
        }
        let point = solve_point(&exp, eps, &grid, true)?;
        let nc = point.grams.nc;
        let complex = exp.medium.is_complex();
        let load = |name: &str, tag: ProblemTag| -> homwave_core::Result<Trajectory> {
            let problem = extra["problems"]
                .as_array()
                .and_then(|ps| ps.iter().find(|p| p["name"] == name))
                .ok_or_else(|| Error::Config(format!("trajectory manifest lists no {name}")))?;
            let files: Vec<String> = serde_json::from_value(problem["files"].clone())?;
            let states = files.iter().map(|f| read_field_csv(&traj_dir.join(f), &grid, nc, complex)).collect::<homwave_core::Result<Vec<_>>>()?;
            let velocities = vec![DVector::zeros(grid.node_count() * nc); states.len()];
            Ok(Trajectory {
                tag,
                times: times.clone(),
                states,
                velocities,
            })
        };
        let u_eps = load("u_eps", ProblemTag::Heterogeneous { epsilon: eps })?;
        let u0 = load("u0", ProblemTag::Effective)?;
        let curves = match &point.discrepancy {
            Some(d) => combined_error(&u_eps, &u0, &d.w, &d.corrector_terms, &point.grams)?,
            None => {
                return Err(Error::InvalidInput(
                    "error curves need the modal discrepancy solve; set evolution.discrepancy = true and use the modal propagator".into(),
                ))
            }
        };
        let layout = self.out()?;
        write_curves_csv(&layout.main_file("errors.csv"), &curves, &point.data_norms)?;
        self.write_manifest(&layout, "approx", json!({ "epsilon": eps, "traj": traj_dir, "corrector_l2": curves.corrector }))?;
        Ok(Outcome::Ok)
    }

    fn sweep(&self) -> homwave_core::Result<Outcome> {
        let layout = self.out()?;
        let exp = Experiment::build(self.config.clone())?;
        let report = run_sweep(&exp)?;
        write_report(&layout.dir, &report)?;
        let extra = json!({
            "acceptable": report.acceptable,
            "richardson_clean": report.richardson_clean,
            "slopes_passed": report.slopes_passed,
            "exploratory": report.exploratory,
        });
        self.write_manifest(&layout, "sweep", extra)?;
        if report.acceptable {
            Ok(Outcome::Ok)
        } else {
            let mut why = Vec::new();
            if !report.richardson_clean {
                why.push("Richardson check failed (h-halving moved errors beyond tolerance)");
            }
            if !report.slopes_passed && !report.exploratory {
                why.push("fitted slope outside the acceptance window");
            }
            Ok(Outcome::AcceptanceFailed(why.join("; ")))
        }
    }

    fn opnorm(&self) -> homwave_core::Result<Outcome> {
        let layout = self.out()?;
        let exp = Experiment::build(self.config.clone())?;
        let opts = OpNormOptions {
            seed: self.config.seed,
            ..Default::default()
        };
        let report = gap_sweep(&exp, &opts)?;
        write_json(&layout.main_file("gaps.json"), &report)?;
        self.write_manifest(&layout, "opnorm", json!({ "passed": report.passed, "opnorm": opts }))?;
        if report.passed {
            Ok(Outcome::Ok)
        } else {
            Ok(Outcome::AcceptanceFailed("gap slope outside the acceptance window".into()))
        }
    }
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("HOMWAVE_LOG", "error");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

fn load_config(common: &Common) -> homwave_core::Result<ExperimentConfig> {
    let path = common.config.as_ref().ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut overrides = common.overrides.clone();
    if let Some(seed) = common.seed {
        overrides.push(format!("seed={seed}"));
    }
    let cfg = ExperimentConfig::load(path, &overrides)?;
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    init_logging();
    let cli = Cli::parse();
    let name = cli.command.name();
    if cli.common.jobs == 0 {
        eprintln!("homwave {name}: --jobs must be at least 1");
        return ExitCode::from(1);
    }
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.common.jobs).build_global() {
        eprintln!("homwave {name}: cannot start the worker pool: {e}");
        return ExitCode::from(1);
    }
    let config = match load_config(&cli.common) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("homwave {name}: {e}");
            return ExitCode::from(1);
        }
    };
    let run = Run {
        config,
        common: cli.common,
        started: SystemTime::now(),
        clock: Instant::now(),
    };
    let result = match &cli.command {
        Command::Cell => run.cell(),
        Command::Solve { epsilon } => run.solve(*epsilon),
        Command::Approx { traj } => run.approx(traj),
        Command::Sweep => run.sweep(),
        Command::Opnorm => run.opnorm(),
    };
    match result {
        Ok(Outcome::Ok) => {
            info!("{name} finished in {:.2?}", run.clock.elapsed());
            ExitCode::SUCCESS
        }
        Ok(Outcome::AcceptanceFailed(why)) => {
            eprintln!("homwave {name}: acceptance failed: {why}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("homwave {name}: {e}");
            ExitCode::from(1)
        }
    }
}
