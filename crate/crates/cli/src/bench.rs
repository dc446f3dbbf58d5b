//! Config-driven benchmark sweeps: generate problems, run each requested
//! solver at each seed, and emit the grid as CSV and JSON.
//!
//! Configs are flat `key = value` text. Global keys set solver knobs and
//! outputs; `problem.<id>.<field>` keys describe the instances:
//!
//! ```text
//! solvers = coordinate_descent, baseline_cg
//! seeds = 1, 2, 3
//! eps = 1e-6
//! tau = 48
//! problem.spiked.m = 1024
//! problem.spiked.n = 1024
//! problem.spiked.k = 16
//! problem.spiked.head_cond = 1e4
//! ```

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;
use std::thread;

use serde::{Deserialize, Serialize};

use stsv_core::flops;
use stsv_core::solvers::{
    solve_auto, solve_coordinate_descent, solve_kaczmarz, solve_least_squares, solve_psd,
};
use stsv_core::{DenseMatrix, Error, Result, SolveReport, SolverConfig};

use crate::baseline::baseline_cg;
use crate::gen::{gen_spiked, Consistency, ProblemSpec};

/// The solvers a bench run can request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Kaczmarz,
    CoordinateDescent,
    LeastSquares,
    Psd,
    Auto,
    BaselineCg,
}

pub const SOLVER_NAMES: [&str; 6] = [
    "kaczmarz",
    "coordinate_descent",
    "least_squares",
    "psd",
    "auto",
    "baseline_cg",
];

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Kaczmarz => "kaczmarz",
            SolverKind::CoordinateDescent => "coordinate_descent",
            SolverKind::LeastSquares => "least_squares",
            SolverKind::Psd => "psd",
            SolverKind::Auto => "auto",
            SolverKind::BaselineCg => "baseline_cg",
        }
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kaczmarz" => Ok(SolverKind::Kaczmarz),
            "coordinate_descent" => Ok(SolverKind::CoordinateDescent),
            "least_squares" => Ok(SolverKind::LeastSquares),
            "psd" => Ok(SolverKind::Psd),
            "auto" => Ok(SolverKind::Auto),
            "baseline_cg" => Ok(SolverKind::BaselineCg),
            other => Err(Error::Parse(format!(
                "unknown solver '{other}'; valid names: {}",
                SOLVER_NAMES.join(", ")
            ))),
        }
    }
}

/// A parsed bench configuration: the problem list in file order, the solver
/// and seed grids, and one shared solver template whose seed is replaced per
/// cell.
#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub problems: Vec<(String, ProblemSpec)>,
    pub solvers: Vec<SolverKind>,
    pub seeds: Vec<u64>,
    pub template: SolverConfig,
    pub out_csv: Option<PathBuf>,
    pub out_json: Option<PathBuf>,
    pub jobs: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            problems: Vec::new(),
            solvers: Vec::new(),
            seeds: vec![0],
            template: SolverConfig::default(),
            out_csv: None,
            out_json: None,
            jobs: 1,
        }
    }
}

#[derive(Debug, Default, Clone)]
struct ProblemDraft {
    m: Option<usize>,
    n: Option<usize>,
    k: Option<usize>,
    head_cond: Option<f64>,
    tail_spread: Option<f64>,
    noise: Option<f64>,
    consistency: Option<Consistency>,
    seed: Option<u64>,
}

fn scalar<T: std::str::FromStr>(key: &str, val: &str, line: usize) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    val.parse().map_err(|e| {
        Error::Parse(format!("line {line}: bad value '{val}' for {key}: {e}"))
    })
}

fn id_ok(id: &str) -> bool {
    !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

/// Parses the flat `key = value` config format. Lines starting with `#` and
/// blank lines are skipped; unknown keys are errors so typos cannot silently
/// fall back to defaults.
pub fn parse_config(text: &str) -> Result<BenchConfig> {
    let mut cfg = BenchConfig::default();
    let mut drafts: Vec<(String, ProblemDraft)> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, val) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("line {lineno}: expected key = value")))?;
        let (key, val) = (key.trim(), val.trim());

        if let Some(rest) = key.strip_prefix("problem.") {
            let (id, field) = rest.split_once('.').ok_or_else(|| {
                Error::Parse(format!(
                    "line {lineno}: problem keys look like problem.<id>.<field>"
                ))
            })?;
            if !id_ok(id) {
                return Err(Error::Parse(format!(
                    "line {lineno}: problem id '{id}' may only use letters, digits, _ and -"
                )));
            }
            let draft = match drafts.iter_mut().find(|(d, _)| d == id) {
                Some((_, d)) => d,
                None => {
                    drafts.push((id.to_string(), ProblemDraft::default()));
                    &mut drafts.last_mut().expect("just pushed").1
                }
            };
            match field {
                "m" => draft.m = Some(scalar(key, val, lineno)?),
                "n" => draft.n = Some(scalar(key, val, lineno)?),
                "k" => draft.k = Some(scalar(key, val, lineno)?),
                "head_cond" => draft.head_cond = Some(scalar(key, val, lineno)?),
                "tail_spread" => draft.tail_spread = Some(scalar(key, val, lineno)?),
                "noise" => draft.noise = Some(scalar(key, val, lineno)?),
                "consistency" => draft.consistency = Some(val.parse()?),
                "seed" => draft.seed = Some(scalar(key, val, lineno)?),
                other => {
                    return Err(Error::Parse(format!(
                        "line {lineno}: unknown problem field '{other}'"
                    )))
                }
            }
        } else {
            match key {
                "solvers" => {
                    cfg.solvers = val
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(SolverKind::from_str)
                        .collect::<Result<_>>()?;
                }
                "seeds" => {
                    cfg.seeds = val
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(|s| scalar("seeds", s, lineno))
                        .collect::<Result<_>>()?;
                }
                "eps" => cfg.template.eps = scalar(key, val, lineno)?,
                "tau" => cfg.template.tau = Some(scalar(key, val, lineno)?),
                "oversampling" => cfg.template.oversampling = scalar(key, val, lineno)?,
                "s_max" => cfg.template.s_max = scalar(key, val, lineno)?,
                "t_max" => cfg.template.t_max = Some(scalar(key, val, lineno)?),
                "check_every" => cfg.template.check_every = Some(scalar(key, val, lineno)?),
                "burn_in" => cfg.template.burn_in = Some(scalar(key, val, lineno)?),
                "retries" => cfg.template.retries = scalar(key, val, lineno)?,
                "eps_embed" => cfg.template.eps_embed = scalar(key, val, lineno)?,
                "delta_embed" => cfg.template.delta_embed = Some(scalar(key, val, lineno)?),
                "c_phi" => cfg.template.c_phi = scalar(key, val, lineno)?,
                "c_s" => cfg.template.c_s = scalar(key, val, lineno)?,
                "jobs" => cfg.jobs = scalar::<usize>(key, val, lineno)?.max(1),
                "out_csv" => cfg.out_csv = Some(PathBuf::from(val)),
                "out_json" => cfg.out_json = Some(PathBuf::from(val)),
                other => {
                    return Err(Error::Parse(format!("line {lineno}: unknown key '{other}'")))
                }
            }
        }
    }

    for (id, draft) in drafts {
        let m = draft
            .m
            .ok_or_else(|| Error::Parse(format!("problem '{id}': missing m")))?;
        let n = draft
            .n
            .ok_or_else(|| Error::Parse(format!("problem '{id}': missing n")))?;
        let k = draft.k.unwrap_or(0);
        if k > 0 && draft.head_cond.is_none() {
            return Err(Error::Parse(format!(
                "problem '{id}': k > 0 needs head_cond"
            )));
        }
        let spec = ProblemSpec {
            m,
            n,
            k,
            head_cond: draft.head_cond.unwrap_or(1.0),
            tail_spread: draft.tail_spread.unwrap_or(1.0),
            noise: draft.noise.unwrap_or(0.0),
            consistency: draft.consistency.unwrap_or(Consistency::Consistent),
            seed: draft.seed.unwrap_or(0),
        };
        spec.validate()
            .map_err(|e| Error::Parse(format!("problem '{id}': {e}")))?;
        cfg.problems.push((id, spec));
    }
    cfg.template.validate()?;
    Ok(cfg)
}

/// Host and build facts attached to every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentMeta {
    pub package: String,
    pub version: String,
    pub os: String,
    pub arch: String,
    pub jobs: usize,
}

impl EnvironmentMeta {
    fn current(jobs: usize) -> Self {
        EnvironmentMeta {
            package: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            os: std::env::consts::OS.to_string(),
            arch: std::env::consts::ARCH.to_string(),
            jobs,
        }
    }
}

/// One (problem, solver, seed) cell of the grid. The CSV carries the scalar
/// columns; the JSON adds the histories and diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub problem_id: String,
    pub solver: String,
    pub m: usize,
    pub n: usize,
    pub k: usize,
    /// Configured block size; 0 means the solver derived its own.
    pub tau: usize,
    pub seed: u64,
    pub iterations: usize,
    pub flops: u64,
    pub wall_ms: f64,
    pub final_rel_residual: f64,
    pub fitted_rate: Option<f64>,
    pub converged: bool,
    pub residual_history: Vec<f64>,
    pub energy_history: Option<Vec<f64>>,
    pub note: Option<String>,
}

/// The scalar projection of a row, exactly the CSV columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRecord {
    pub problem_id: String,
    pub solver: String,
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub tau: usize,
    pub iterations: usize,
    pub flops: u64,
    pub wall_ms: f64,
    pub final_rel_residual: f64,
    pub fitted_rate: Option<f64>,
}

impl BenchRow {
    pub fn csv_record(&self) -> CsvRecord {
        CsvRecord {
            problem_id: self.problem_id.clone(),
            solver: self.solver.clone(),
            m: self.m,
            n: self.n,
            k: self.k,
            tau: self.tau,
            iterations: self.iterations,
            flops: self.flops,
            wall_ms: self.wall_ms,
            final_rel_residual: self.final_rel_residual,
            fitted_rate: self.fitted_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub environment: EnvironmentMeta,
    pub rows: Vec<BenchRow>,
}

pub const CSV_HEADER: &str =
    "problem_id,solver,m,n,k,tau,iterations,flops,wall_ms,final_rel_residual,fitted_rate";

/// Renders the scalar columns of a report as CSV. Floats use the shortest
/// representation that parses back to the same bits, so a read-back loses
/// nothing.
pub fn to_csv(report: &BenchReport) -> String {
    let mut out = String::with_capacity(64 * (report.rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for row in &report.rows {
        let r = row.csv_record();
        let rate = r.fitted_rate.map(|v| format!("{v:?}")).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{:?},{:?},{}",
            r.problem_id,
            r.solver,
            r.m,
            r.n,
            r.k,
            r.tau,
            r.iterations,
            r.flops,
            r.wall_ms,
            r.final_rel_residual,
            rate
        )
        .expect("writing to String cannot fail");
    }
    out
}

/// Parses CSV produced by [`to_csv`] back into records.
pub fn parse_csv(text: &str) -> Result<Vec<CsvRecord>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty CSV".into()))?;
    if header != CSV_HEADER {
        return Err(Error::Parse(format!("unexpected CSV header: {header}")));
    }
    let mut records = Vec::new();
    for (idx, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 11 {
            return Err(Error::Parse(format!(
                "row {}: expected 11 columns, got {}",
                idx + 2,
                cells.len()
            )));
        }
        let field = |i: usize| -> &str { cells[i] };
        records.push(CsvRecord {
            problem_id: field(0).to_string(),
            solver: field(1).to_string(),
            m: scalar("m", field(2), idx + 2)?,
            n: scalar("n", field(3), idx + 2)?,
            k: scalar("k", field(4), idx + 2)?,
            tau: scalar("tau", field(5), idx + 2)?,
            iterations: scalar("iterations", field(6), idx + 2)?,
            flops: scalar("flops", field(7), idx + 2)?,
            wall_ms: scalar("wall_ms", field(8), idx + 2)?,
            final_rel_residual: scalar("final_rel_residual", field(9), idx + 2)?,
            fitted_rate: if field(10).is_empty() {
                None
            } else {
                Some(scalar("fitted_rate", field(10), idx + 2)?)
            },
        });
    }
    Ok(records)
}

pub fn to_json(report: &BenchReport) -> Result<String> {
    serde_json::to_string_pretty(report).map_err(|e| Error::Parse(format!("json encode: {e}")))
}

pub fn from_json(text: &str) -> Result<BenchReport> {
    serde_json::from_str(text).map_err(|e| Error::Parse(format!("json decode: {e}")))
}

fn run_cell(
    id: &str,
    spec: &ProblemSpec,
    a: &DenseMatrix,
    b: &[f64],
    kind: SolverKind,
    template: &SolverConfig,
    seed: u64,
) -> Result<BenchRow> {
    let mut scfg = template.clone();
    scfg.seed = seed;
    let report: SolveReport = match kind {
        SolverKind::Kaczmarz => solve_kaczmarz(a, b, &scfg)?,
        SolverKind::CoordinateDescent => {
            // The row targets the least-squares system through its normal
            // equations; forming c = Aᵀb is part of the method's cost.
            let c = a.matvec_transpose(b)?;
            let mut rep = solve_coordinate_descent(a, &c, &scfg)?;
            rep.flop_count = rep
                .flop_count
                .saturating_add(flops::matvec(a.rows(), a.cols()));
            rep
        }
        SolverKind::LeastSquares => solve_least_squares(a, b, &scfg)?,
        SolverKind::Psd => solve_psd(a, b, &scfg)?,
        SolverKind::Auto => solve_auto(a, b, scfg.eps, &scfg)?,
        SolverKind::BaselineCg => {
            let budget = scfg
                .t_max
                .unwrap_or_else(|| 2 * a.rows().min(a.cols()));
            baseline_cg(a, b, scfg.eps, budget)?
        }
    };
    Ok(BenchRow {
        problem_id: id.to_string(),
        solver: kind.name().to_string(),
        m: spec.m,
        n: spec.n,
        k: spec.k,
        tau: scfg.tau.unwrap_or(0),
        seed,
        iterations: report.iterations_run,
        flops: report.flop_count,
        wall_ms: report.wall_seconds * 1e3,
        final_rel_residual: report.final_relative_residual(),
        fitted_rate: report.fitted_rate,
        converged: report.converged,
        residual_history: report.residual_history,
        energy_history: report.energy_history,
        note: report.note,
    })
}

/// Runs the whole grid. Problems are generated once and shared across their
/// cells; rows come back in (problem, solver, seed) order regardless of the
/// `jobs` setting, and every cell's randomness is fixed by its own seed, so
/// two runs of the same config differ only in wall-clock times.
pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    let mut built = Vec::with_capacity(cfg.problems.len());
    for (id, spec) in &cfg.problems {
        let (a, b, _xstar) = gen_spiked(spec)?;
        built.push((id.as_str(), spec, a, b));
    }
    let mut plans = Vec::new();
    for pi in 0..built.len() {
        for &kind in &cfg.solvers {
            for &seed in &cfg.seeds {
                plans.push((pi, kind, seed));
            }
        }
    }

    let jobs = cfg.jobs.max(1).min(plans.len().max(1));
    let rows: Vec<Result<BenchRow>> = if jobs <= 1 {
        plans
            .iter()
            .map(|&(pi, kind, seed)| {
                let (id, spec, a, b) = &built[pi];
                run_cell(id, spec, a, b, kind, &cfg.template, seed)
            })
            .collect()
    } else {
        let mut slots: Vec<Option<Result<BenchRow>>> = (0..plans.len()).map(|_| None).collect();
        thread::scope(|scope| {
            let mut handles = Vec::with_capacity(jobs);
            for worker in 0..jobs {
                let plans = &plans;
                let built = &built;
                let template = &cfg.template;
                handles.push(scope.spawn(move || {
                    plans
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| i % jobs == worker)
                        .map(|(i, &(pi, kind, seed))| {
                            let (id, spec, a, b) = &built[pi];
                            (i, run_cell(id, spec, a, b, kind, template, seed))
                        })
                        .collect::<Vec<_>>()
                }));
            }
            for handle in handles {
                for (i, row) in handle.join().expect("bench worker panicked") {
                    slots[i] = Some(row);
                }
            }
        });
        slots
            .into_iter()
            .map(|s| s.expect("every cell was assigned to a worker"))
            .collect()
    };

    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(BenchReport {
        environment: EnvironmentMeta::current(jobs),
        rows,
    })
}

/// Writes the configured outputs, creating parent directories as needed.
pub fn write_outputs(cfg: &BenchConfig, report: &BenchReport) -> Result<()> {
    for (path, payload) in [
        (&cfg.out_csv, to_csv(report)),
        (&cfg.out_json, to_json(report)?),
    ] {
        if let Some(path) = path {
            if let Some(dir) = path.parent() {
                if !dir.as_os_str().is_empty() {
                    std::fs::create_dir_all(dir)?;
                }
            }
            std::fs::write(path, payload)?;
        }
    }
    Ok(())
}
