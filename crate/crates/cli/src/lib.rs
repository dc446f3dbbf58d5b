//! Benchmark layer over the solver library: spiked-spectrum problem
//! generation, reference baselines, config-driven sweeps, and the
//! self-check suite behind the `stsv` binary.

pub mod baseline;
pub mod bench;
pub mod gen;
pub mod verify;

pub use baseline::{baseline_cg, baseline_direct, DIRECT_DIM_LIMIT};
pub use bench::{
    from_json, parse_config, parse_csv, run_bench, to_csv, to_json, write_outputs, BenchConfig,
    BenchReport, BenchRow, CsvRecord, EnvironmentMeta, SolverKind, CSV_HEADER, SOLVER_NAMES,
};
pub use gen::{gen_spiked, spec_singular_values, Consistency, ProblemSpec};
pub use verify::{run_all, CheckOutcome};
