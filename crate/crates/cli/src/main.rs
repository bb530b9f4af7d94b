use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use proxnewton::harness::{
    check_suite, delta_grid, delta_sweep, generate_instance, read_instance, run_experiment,
    solve_instance, summary_json, sweep_csv, write_instance, write_iteration_csv, Algorithm,
    ExperimentConfig, Family, Instance, InstanceSpec,
};
use proxnewton::outer::{InnerChoice, OuterConfig, RunReport};
use serde_json::json;

#[derive(Parser)]
#[command(name = "proxnewton", version, about = "Inexact proximal Newton solvers for sparse recovery with a Student's t loss")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance and print a JSON summary.
    Solve {
        #[command(flatten)]
        instance: InstanceArgs,
        /// Read the instance from a file written by `gen-instance`.
        #[arg(long, conflicts_with_all = ["n", "db", "seed"])]
        input: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
        /// Directory for `iterations.csv` and `summary.json`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Keep wall-clock times in the iteration log.
        #[arg(long)]
        timing: bool,
    },
    /// Run several seeded trials and aggregate them.
    Experiment {
        #[command(flatten)]
        instance: InstanceArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        /// Directory for per-trial logs and `summary.json`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        timing: bool,
    },
    /// Average time and iterations over a grid of delta values.
    SweepDelta {
        #[command(flatten)]
        instance: InstanceArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        /// Grid spacing on [0, 1].
        #[arg(long, default_value_t = 0.05, conflicts_with = "deltas")]
        step: f64,
        /// Explicit comma separated delta values.
        #[arg(long, value_delimiter = ',')]
        deltas: Option<Vec<f64>>,
        /// CSV output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate an instance and write it to disk.
    GenInstance {
        #[command(flatten)]
        instance: InstanceArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the audit and consistency checks on a small instance.
    Check {
        #[arg(long, default_value_t = 512)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    L1,
    Group,
}

#[derive(Args, Clone)]
struct InstanceArgs {
    #[arg(long, default_value_t = 4096)]
    n: usize,
    /// Dynamic range of the signal in dB.
    #[arg(long = "dB", id = "db", default_value_t = 20.0)]
    db: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = FamilyArg::L1)]
    family: FamilyArg,
    /// Number of groups (group family).
    #[arg(long, default_value_t = 64)]
    groups: usize,
    /// Number of nonzero groups (group family).
    #[arg(long, default_value_t = 8)]
    active: usize,
    /// Student's t parameter; defaults to 0.25 (l1) or 0.2 (group).
    #[arg(long)]
    nu: Option<f64>,
}

impl InstanceArgs {
    fn spec(&self) -> InstanceSpec {
        let mut spec = match self.family {
            FamilyArg::L1 => InstanceSpec::l1(self.n, self.db, self.seed),
            FamilyArg::Group => InstanceSpec::group(self.n, self.groups, self.active, self.db, self.seed),
        };
        if let Some(nu) = self.nu {
            spec.nu = nu;
        }
        spec
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum InnerArg {
    Ssn,
    Pg,
}

#[derive(Args, Clone)]
struct SolverArgs {
    #[arg(long, default_value = "alg1", value_parser = parse_algorithm)]
    algorithm: Algorithm,
    #[arg(long, default_value_t = 0.05)]
    c: f64,
    /// Defaults to min(1e-4, c/2).
    #[arg(long)]
    tau: Option<f64>,
    /// Defaults to 0.95 for the l1 family and 0 for the group family.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, default_value_t = 0.1)]
    mu1: f64,
    #[arg(long, default_value_t = 0.1)]
    mu2: f64,
    #[arg(long, default_value_t = 0.6)]
    theta: f64,
    #[arg(long, default_value_t = 1e-5)]
    eps0: f64,
    #[arg(long, value_enum)]
    inner: Option<InnerArg>,
    #[arg(long, default_value_t = 10_000)]
    max_iters: usize,
    #[arg(long, default_value_t = 1800.0)]
    max_seconds: f64,
    /// Floor of the adaptive L_H estimate; defaults to L_H/1024.
    #[arg(long)]
    u0: Option<f64>,
}

fn parse_algorithm(s: &str) -> std::result::Result<Algorithm, String> {
    s.parse().map_err(|e: proxnewton::SolverError| e.to_string())
}

impl SolverArgs {
    fn config(&self, family: Family) -> OuterConfig {
        let mut cfg = OuterConfig::default().with_c(self.c);
        if let Some(tau) = self.tau {
            cfg.tau = tau;
        }
        cfg.delta = self.delta.unwrap_or(match family {
            Family::L1 { .. } => 0.95,
            Family::Group { .. } => 0.0,
        });
        cfg.mu1 = self.mu1;
        cfg.mu2 = self.mu2;
        cfg.theta = self.theta;
        cfg.eps0 = self.eps0;
        cfg.max_outer_iters = self.max_iters;
        cfg.max_wall_seconds = self.max_seconds;
        cfg.inner = match self.inner {
            None => InnerChoice::Auto,
            Some(InnerArg::Ssn) => InnerChoice::Ssn,
            Some(InnerArg::Pg) => InnerChoice::Pg,
        };
        cfg
    }
}

fn report_json(inst: &Instance, alg: Algorithm, cfg: &OuterConfig, rep: &RunReport) -> serde_json::Value {
    json!({
        "algorithm": alg.name(),
        "n": inst.spec.n,
        "m": inst.spec.m,
        "dynamic_range_db": inst.spec.dynamic_range_db,
        "seed": inst.spec.seed,
        "lambda": inst.lambda,
        "delta": cfg.delta,
        "c": cfg.c,
        "status": format!("{:?}", rep.status),
        "message": rep.message,
        "iterations": rep.iterations(),
        "fv": rep.final_phi,
        "g_norm": rep.final_g_norm,
        "time_s": rep.wall_seconds,
        "audits": rep.audits,
        "audit_violations": rep.audits.total(),
        "rate_certificate": rep.rate_certificate,
        "total_doublings": rep.total_doublings,
    })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn run_cli(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Solve {
            instance,
            input,
            solver,
            out,
            timing,
        } => {
            let inst = match input {
                Some(path) => read_instance(&path).with_context(|| format!("reading {}", path.display()))?,
                None => generate_instance(&instance.spec())?,
            };
            let cfg = solver.config(inst.spec.family);
            let rep = solve_instance(&inst, solver.algorithm, &cfg, solver.u0)?;
            let summary = serde_json::to_string_pretty(&report_json(&inst, solver.algorithm, &cfg, &rep))?;
            if let Some(dir) = out {
                ensure_dir(&dir)?;
                write_iteration_csv(&dir.join("iterations.csv"), &rep.records, timing)?;
                std::fs::write(dir.join("summary.json"), &summary)?;
            }
            println!("{summary}");
            Ok(true)
        }
        Command::Experiment {
            instance,
            solver,
            trials,
            out,
            timing,
        } => {
            let spec = instance.spec();
            let cfg = ExperimentConfig {
                solver: solver.config(spec.family),
                instance: spec,
                algorithm: solver.algorithm,
                u0: solver.u0,
                trials,
                csv_dir: out.clone(),
                timing,
            };
            let rep = run_experiment(&cfg)?;
            let summary = summary_json(&rep.summary);
            if let Some(dir) = out {
                std::fs::write(dir.join("summary.json"), &summary)?;
            }
            println!("{summary}");
            Ok(true)
        }
        Command::SweepDelta {
            instance,
            solver,
            trials,
            step,
            deltas,
            out,
        } => {
            let spec = instance.spec();
            let grid = match deltas {
                Some(d) => d,
                None => delta_grid(step)?,
            };
            let cfg = ExperimentConfig {
                solver: solver.config(spec.family),
                instance: spec,
                algorithm: solver.algorithm,
                u0: solver.u0,
                trials,
                csv_dir: None,
                timing: false,
            };
            let csv = sweep_csv(&delta_sweep(&cfg, &grid)?);
            match out {
                Some(path) => std::fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?,
                None => print!("{csv}"),
            }
            Ok(true)
        }
        Command::GenInstance { instance, out } => {
            let inst = generate_instance(&instance.spec())?;
            write_instance(&out, &inst).with_context(|| format!("writing {}", out.display()))?;
            println!(
                "wrote n = {}, m = {}, lambda = {:e} to {}",
                inst.spec.n,
                inst.spec.m,
                inst.lambda,
                out.display()
            );
            Ok(true)
        }
        Command::Check { n, seed } => {
            if n < 64 {
                bail!("check needs n ≥ 64");
            }
            let lines = check_suite(n, seed)?;
            let mut ok = true;
            for l in &lines {
                println!("{} {}: {}", if l.passed { "PASS" } else { "FAIL" }, l.name, l.detail);
                ok &= l.passed;
            }
            Ok(ok)
        }
    }
}

fn main() -> ExitCode {
    match run_cli(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
