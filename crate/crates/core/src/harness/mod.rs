//! Seeded instance generation and batch experiments.

mod check;
mod experiment;
mod instance;
mod io;

pub use check::{check_suite, CheckLine};
pub use experiment::{
    delta_grid, delta_sweep, run_experiment, solve_instance, summary_json, sweep_csv, Algorithm,
    ExperimentConfig, ExperimentReport, ExperimentSummary, SweepRow, TrialResult,
};
pub use instance::{
    assemble, generate_instance, generate_signal, lambda_rule, signal_magnitude, student_t_noise,
    Family, Instance, InstanceSpec, RNG_NAME,
};
pub use io::{
    decode_instance, encode_instance, iteration_csv, read_instance, write_instance,
    write_iteration_csv, FORMAT_VERSION, ITERATION_COLUMNS,
};
