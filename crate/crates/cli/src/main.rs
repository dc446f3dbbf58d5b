//! `stsv`: generate spiked test problems, run one solver on a stored
//! system, sweep a benchmark grid from a config file, or run the built-in
//! verification suite.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use stsv_cli::bench;
use stsv_cli::gen::{gen_spiked, Consistency, ProblemSpec};
use stsv_cli::verify;
use stsv_cli::SolverKind;
use stsv_core::linalg::{read_matrix, write_matrix, MatrixFormat};
use stsv_core::solvers::{
    solve_auto, solve_coordinate_descent, solve_kaczmarz, solve_least_squares, solve_psd,
};
use stsv_core::{DenseMatrix, Error, Result, SolveReport, SolverConfig};

#[derive(Parser)]
#[command(
    name = "stsv",
    about = "Randomized solvers for linear systems with a few large singular values",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a spiked-spectrum problem and write the matrix and vectors.
    Gen(GenArgs),
    /// Run one solver on a matrix and right-hand side stored on disk.
    Solve(SolveArgs),
    /// Run a benchmark grid described by a flat key=value config file.
    Bench(BenchArgs),
    /// Run the built-in verification checks and report pass/fail per check.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(short, long)]
    m: usize,
    #[arg(short, long)]
    n: usize,
    /// Number of large singular values.
    #[arg(short, long, default_value_t = 0)]
    k: usize,
    /// Largest singular value relative to the tail floor of 1.
    #[arg(long, default_value_t = 1.0)]
    head_cond: f64,
    /// Root-mean-square tail singular value over the smallest one.
    #[arg(long, default_value_t = 1.0)]
    tail_spread: f64,
    /// Off-range component size relative to the consistent right-hand side.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// consistent | inconsistent
    #[arg(long, default_value = "consistent")]
    consistency: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// On-disk encoding: mm (MatrixMarket) or bin.
    #[arg(long, default_value = "mm")]
    format: String,
    /// Output path for the matrix.
    #[arg(long)]
    matrix: PathBuf,
    /// Output path for the right-hand side (stored as an m x 1 matrix).
    #[arg(long)]
    rhs: PathBuf,
    /// Optional output path for the planted solution.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    /// Path to the matrix file.
    #[arg(long)]
    matrix: PathBuf,
    /// Path to the right-hand side (an m x 1 matrix file).
    #[arg(long)]
    rhs: PathBuf,
    /// kaczmarz | coordinate_descent | least_squares | psd | auto | baseline_cg
    #[arg(long)]
    solver: String,
    /// On-disk encoding of both inputs: mm or bin.
    #[arg(long, default_value = "mm")]
    format: String,
    #[arg(long, default_value_t = 1e-6)]
    eps: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Block size; omit to let the solver derive one.
    #[arg(long)]
    tau: Option<usize>,
    /// Outer iteration budget.
    #[arg(long)]
    t_max: Option<usize>,
    /// Inner CG iteration cap per block.
    #[arg(long)]
    s_max: Option<usize>,
    /// Stopping-test cadence in outer iterations.
    #[arg(long)]
    check_every: Option<usize>,
    /// Write the full solve report as JSON to this path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Flat key=value config file describing problems, solvers, and seeds.
    #[arg(long)]
    config: PathBuf,
    /// Worker threads for grid cells; overrides the config's jobs key.
    #[arg(long)]
    jobs: Option<usize>,
    /// Override the config's CSV output path.
    #[arg(long)]
    out_csv: Option<PathBuf>,
    /// Override the config's JSON output path.
    #[arg(long)]
    out_json: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.cmd {
        Cmd::Gen(args) => cmd_gen(args),
        Cmd::Solve(args) => cmd_solve(args),
        Cmd::Bench(args) => cmd_bench(args),
        Cmd::Verify(args) => cmd_verify(args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn cmd_gen(args: GenArgs) -> Result<ExitCode> {
    let format: MatrixFormat = args.format.parse()?;
    let consistency: Consistency = args.consistency.parse()?;
    let spec = ProblemSpec {
        m: args.m,
        n: args.n,
        k: args.k,
        head_cond: args.head_cond,
        tail_spread: args.tail_spread,
        noise: args.noise,
        consistency,
        seed: args.seed,
    };
    let (a, b, xstar) = gen_spiked(&spec)?;
    write_matrix(&args.matrix, &a, format)?;
    write_matrix(&args.rhs, &column(&b), format)?;
    if let Some(path) = &args.truth {
        write_matrix(path, &column(&xstar), format)?;
    }
    println!(
        "wrote {} x {} system (k = {}, {}) to {} and {}",
        spec.m,
        spec.n,
        spec.k,
        consistency.as_str(),
        args.matrix.display(),
        args.rhs.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn column(v: &[f64]) -> DenseMatrix {
    DenseMatrix::new(v.len(), 1, v.to_vec()).expect("vector entries are finite")
}

fn cmd_solve(args: SolveArgs) -> Result<ExitCode> {
    let format: MatrixFormat = args.format.parse()?;
    let kind: SolverKind = args.solver.parse()?;
    let a = read_matrix(&args.matrix, format)?;
    let rhs = read_matrix(&args.rhs, format)?;
    if rhs.cols() != 1 {
        return Err(Error::InvalidArg(format!(
            "right-hand side must be a single column, got {} x {}",
            rhs.rows(),
            rhs.cols()
        )));
    }
    let b: Vec<f64> = rhs.data().to_vec();

    let mut cfg = SolverConfig { eps: args.eps, seed: args.seed, ..SolverConfig::default() };
    cfg.tau = args.tau;
    cfg.t_max = args.t_max;
    cfg.check_every = args.check_every;
    if let Some(s) = args.s_max {
        cfg.s_max = s;
    }

    let report: SolveReport = match kind {
        SolverKind::Kaczmarz => solve_kaczmarz(&a, &b, &cfg)?,
        SolverKind::CoordinateDescent => {
            let c = a.matvec_transpose(&b)?;
            solve_coordinate_descent(&a, &c, &cfg)?
        }
        SolverKind::LeastSquares => solve_least_squares(&a, &b, &cfg)?,
        SolverKind::Psd => solve_psd(&a, &b, &cfg)?,
        SolverKind::Auto => solve_auto(&a, &b, cfg.eps, &cfg)?,
        SolverKind::BaselineCg => {
            let budget = cfg.t_max.unwrap_or_else(|| 2 * a.rows().min(a.cols()));
            stsv_cli::baseline_cg(&a, &b, cfg.eps, budget)?
        }
    };

    println!(
        "solver={} converged={} iterations={} flops={} wall_ms={:.3} final_rel_residual={:.6e}",
        kind.name(),
        report.converged,
        report.iterations_run,
        report.flop_count,
        report.wall_seconds * 1e3,
        report.final_relative_residual()
    );
    if let Some(note) = &report.note {
        println!("note: {note}");
    }
    if let Some(path) = &args.out {
        let payload = serde_json::to_string_pretty(&report)
            .map_err(|e| Error::Parse(format!("json encode: {e}")))?;
        std::fs::write(path, payload)?;
        println!("report written to {}", path.display());
    }
    Ok(if report.converged { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn cmd_bench(args: BenchArgs) -> Result<ExitCode> {
    let text = std::fs::read_to_string(&args.config)?;
    let mut cfg = bench::parse_config(&text)?;
    if let Some(jobs) = args.jobs {
        cfg.jobs = jobs.max(1);
    }
    if args.out_csv.is_some() {
        cfg.out_csv = args.out_csv;
    }
    if args.out_json.is_some() {
        cfg.out_json = args.out_json;
    }
    let report = bench::run_bench(&cfg)?;
    bench::write_outputs(&cfg, &report)?;
    if cfg.out_csv.is_none() && cfg.out_json.is_none() {
        print!("{}", bench::to_csv(&report));
    } else {
        println!(
            "{} rows written{}{}",
            report.rows.len(),
            cfg.out_csv
                .as_ref()
                .map(|p| format!(", csv: {}", p.display()))
                .unwrap_or_default(),
            cfg.out_json
                .as_ref()
                .map(|p| format!(", json: {}", p.display()))
                .unwrap_or_default()
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(args: VerifyArgs) -> Result<ExitCode> {
    let outcomes = verify::run_all(args.seed);
    let mut all_ok = true;
    for o in &outcomes {
        println!("{} {:<30} {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
        all_ok &= o.passed;
    }
    Ok(if all_ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
