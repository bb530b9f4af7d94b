use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, SolverError};
use crate::harness::instance::{generate_instance, Instance, InstanceSpec};
use crate::harness::io::write_iteration_csv;
use crate::outer::{pgm_baseline, run, AuditCounters, LhMode, OuterConfig, RunReport, RunStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Alg1,
    Alg2,
    Alg3,
    Pgm,
    RegNewton,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Alg1 => "alg1",
            Algorithm::Alg2 => "alg2",
            Algorithm::Alg3 => "alg3",
            Algorithm::Pgm => "pgm",
            Algorithm::RegNewton => "regnewton",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = SolverError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alg1" => Ok(Algorithm::Alg1),
            "alg2" => Ok(Algorithm::Alg2),
            "alg3" => Ok(Algorithm::Alg3),
            "pgm" => Ok(Algorithm::Pgm),
            "regnewton" => Ok(Algorithm::RegNewton),
            other => invalid(format!("unknown algorithm {other:?}")),
        }
    }
}

/// Solves a generated instance. `u0` is the adaptive floor (default
/// `L_H/1024`); the audit `L_H` is always the instance's `2/ν`.
pub fn solve_instance(
    inst: &Instance,
    algorithm: Algorithm,
    outer: &OuterConfig,
    u0: Option<f64>,
) -> Result<RunReport> {
    let lh = inst.lipschitz();
    let mut cfg = outer.clone();
    cfg.audit_lipschitz = Some(lh);
    match algorithm {
        Algorithm::Alg1 => cfg.lh_mode = LhMode::Unknown,
        Algorithm::Alg2 => cfg.lh_mode = LhMode::Known { lipschitz: lh },
        Algorithm::Alg3 => {
            cfg.lh_mode = LhMode::Adaptive {
                initial: u0.unwrap_or(lh / 1024.0),
            }
        }
        Algorithm::Pgm => {
            return pgm_baseline(
                &inst.problem,
                &inst.x0,
                1.0 / lh,
                cfg.eps0,
                cfg.max_outer_iters,
                cfg.max_wall_seconds,
            );
        }
        Algorithm::RegNewton => {
            return invalid("regularized Newton applies to g ≡ 0 only, not to sparse recovery instances");
        }
    }
    run(&inst.problem, &inst.x0, &cfg)
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    /// Trial `i` uses seed `instance.seed + i`.
    pub instance: InstanceSpec,
    pub algorithm: Algorithm,
    pub solver: OuterConfig,
    pub u0: Option<f64>,
    pub trials: usize,
    /// Per-trial CSV logs go here when set.
    pub csv_dir: Option<PathBuf>,
    /// Keep real wall-clock values in the logs.
    pub timing: bool,
}

#[derive(Debug, Clone)]
pub struct TrialResult {
    pub seed: u64,
    pub report: Option<RunReport>,
    pub error: Option<String>,
}

impl TrialResult {
    pub fn status(&self) -> Option<RunStatus> {
        self.report.as_ref().map(|r| r.status)
    }
}

/// Averages in the shape fv, ‖G‖, time plus audit totals.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub algorithm: Algorithm,
    pub n: usize,
    pub m: usize,
    pub dynamic_range_db: f64,
    pub delta: f64,
    pub c: f64,
    pub trials: usize,
    pub converged: usize,
    pub failed: usize,
    pub mean_fv: f64,
    pub mean_g_norm: f64,
    pub mean_time_s: f64,
    pub mean_iters: f64,
    pub audits: AuditCounters,
    pub audit_violations: usize,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub trials: Vec<TrialResult>,
    pub summary: ExperimentSummary,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    if cfg.trials == 0 {
        return invalid("an experiment needs at least one trial");
    }
    cfg.instance.validate()?;
    cfg.solver.validate()?;
    if let Some(dir) = &cfg.csv_dir {
        std::fs::create_dir_all(dir)?;
    }
    let trials: Vec<TrialResult> = (0..cfg.trials)
        .into_par_iter()
        .map(|i| {
            let seed = cfg.instance.seed.wrapping_add(i as u64);
            let spec = InstanceSpec {
                seed,
                ..cfg.instance.clone()
            };
            let outcome = generate_instance(&spec)
                .and_then(|inst| solve_instance(&inst, cfg.algorithm, &cfg.solver, cfg.u0));
            match outcome {
                Ok(report) => {
                    let error = cfg.csv_dir.as_ref().and_then(|dir| {
                        let path = dir.join(format!("trial_{i:03}.csv"));
                        write_iteration_csv(&path, &report.records, cfg.timing)
                            .err()
                            .map(|e| e.to_string())
                    });
                    TrialResult {
                        seed,
                        report: Some(report),
                        error,
                    }
                }
                Err(e) => TrialResult {
                    seed,
                    report: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();

    let reports: Vec<&RunReport> = trials.iter().filter_map(|t| t.report.as_ref()).collect();
    let mut audits = AuditCounters::default();
    for r in &reports {
        audits.add(&r.audits);
    }
    let converged = reports.iter().filter(|r| r.status == RunStatus::Converged).count();
    let failures = trials
        .iter()
        .filter_map(|t| match (&t.report, &t.error) {
            (_, Some(e)) => Some(format!("seed {}: {e}", t.seed)),
            (Some(r), None) if r.status != RunStatus::Converged => Some(format!(
                "seed {}: {:?}{}",
                t.seed,
                r.status,
                r.message.as_deref().map(|m| format!(" ({m})")).unwrap_or_default()
            )),
            _ => None,
        })
        .collect::<Vec<_>>();
    let summary = ExperimentSummary {
        algorithm: cfg.algorithm,
        n: cfg.instance.n,
        m: cfg.instance.m,
        dynamic_range_db: cfg.instance.dynamic_range_db,
        delta: cfg.solver.delta,
        c: cfg.solver.c,
        trials: cfg.trials,
        converged,
        failed: cfg.trials - converged,
        mean_fv: mean(reports.iter().map(|r| r.final_phi)),
        mean_g_norm: mean(reports.iter().map(|r| r.final_g_norm)),
        mean_time_s: mean(reports.iter().map(|r| r.wall_seconds)),
        mean_iters: mean(reports.iter().map(|r| r.iterations() as f64)),
        audit_violations: audits.total(),
        audits,
        failures,
    };
    Ok(ExperimentReport { trials, summary })
}

pub fn summary_json(summary: &ExperimentSummary) -> String {
    serde_json::to_string_pretty(summary).expect("summary serializes")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub delta: f64,
    pub mean_time_s: f64,
    pub mean_iters: f64,
    pub mean_fv: f64,
}

/// `0, step, 2·step, …, 1`.
pub fn delta_grid(step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step <= 1.0) {
        return invalid(format!("grid step must lie in (0, 1], got {step}"));
    }
    let count = (1.0 / step).round() as usize;
    Ok((0..=count).map(|i| (i as f64 * step).min(1.0)).collect())
}

pub fn delta_sweep(cfg: &ExperimentConfig, deltas: &[f64]) -> Result<Vec<SweepRow>> {
    if deltas.is_empty() {
        return invalid("empty delta list");
    }
    if let Some(bad) = deltas.iter().find(|d| !(0.0..=1.0).contains(*d)) {
        return invalid(format!("delta {bad} outside [0, 1]"));
    }
    deltas
        .iter()
        .map(|&delta| {
            let mut c = cfg.clone();
            c.solver.delta = delta;
            c.csv_dir = None;
            let rep = run_experiment(&c)?;
            Ok(SweepRow {
                delta,
                mean_time_s: rep.summary.mean_time_s,
                mean_iters: rep.summary.mean_iters,
                mean_fv: rep.summary.mean_fv,
            })
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("delta,mean_time_s,mean_iters,mean_fv\n");
    for r in rows {
        s.push_str(&format!(
            "{},{:e},{},{:e}\n",
            r.delta, r.mean_time_s, r.mean_iters, r.mean_fv
        ));
    }
    s
}
