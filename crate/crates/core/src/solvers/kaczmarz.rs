//! Row-action solver for consistent systems.
//!
//! Each outer iteration samples a block of rows of the randomized Hadamard
//! transform of the system, then removes the sampled residual by an
//! approximate projection onto the affine subspace those rows define. The
//! transform flattens row leverage so that uniform-with-replacement row
//! sampling behaves like a volume-weighted sample, and the per-block sketch
//! preconditioner keeps the inner conjugate-gradient count independent of the
//! block's conditioning.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::flops::{self, FlopCounter};
use crate::inner::{approx_project_step, build_preconditioner_with_constants};
use crate::linalg::{axpy, norm2, DenseMatrix};
use crate::rht::RhtOperator;
use crate::sampling::uniform_coupon_sample;

use super::{fit_geometric_rate, SolveReport, SolverConfig};

/// Relative improvement per stopping test below which progress counts as
/// stalled; three consecutive stalled tests abort the attempt.
const PLATEAU_IMPROVEMENT: f64 = 1e-3;
const PLATEAU_STRIKES: usize = 3;

/// Solves a consistent system `Ax = b` and reports the iterate trajectory.
///
/// Stops when `‖Ax_t − b‖ ≤ eps·‖b‖`, testing at the configured cadence. On
/// an inconsistent system the residual stalls above the threshold; the run
/// then ends early with `converged = false` and a diagnostic note instead of
/// burning the full iteration budget.
pub fn solve_kaczmarz(a: &DenseMatrix, b: &[f64], cfg: &SolverConfig) -> Result<SolveReport> {
    let start = Instant::now();
    cfg.validate()?;
    let (m, n) = (a.rows(), a.cols());
    if b.len() != m {
        return Err(Error::Dimension(format!(
            "rhs length {} does not match {m} rows",
            b.len()
        )));
    }
    let min_dim = m.min(n);
    let norm_b = norm2(b);
    if norm_b == 0.0 {
        return Ok(SolveReport {
            solution: vec![0.0; n],
            residual_history: vec![0.0],
            iterations_run: 0,
            flop_count: 0,
            wall_seconds: start.elapsed().as_secs_f64(),
            converged: true,
            fitted_rate: None,
            energy_history: None,
            note: None,
        });
    }

    let mut counter = FlopCounter::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let attempts = 1 + cfg.retries as usize;
    let mut last: Option<Attempt> = None;
    for attempt in 0..attempts {
        let out = run_attempt(a, b, norm_b, cfg, min_dim, &mut rng, &mut counter)?;
        let done = out.converged;
        last = Some(out);
        if done || attempt + 1 == attempts {
            break;
        }
    }
    let att = last.expect("at least one attempt runs");

    let mut note = att.note;
    if att.breakdowns > 0 {
        let msg = format!("{} inner CG breakdowns", att.breakdowns);
        note = Some(match note {
            Some(n) => format!("{n}; {msg}"),
            None => msg,
        });
    }
    Ok(SolveReport {
        fitted_rate: fit_geometric_rate(&att.history),
        solution: att.solution,
        residual_history: att.history,
        iterations_run: att.iterations,
        flop_count: counter.total(),
        wall_seconds: start.elapsed().as_secs_f64(),
        converged: att.converged,
        energy_history: None,
        note,
    })
}

struct Attempt {
    solution: Vec<f64>,
    history: Vec<f64>,
    iterations: usize,
    converged: bool,
    breakdowns: usize,
    note: Option<String>,
}

fn run_attempt(
    a: &DenseMatrix,
    b: &[f64],
    norm_b: f64,
    cfg: &SolverConfig,
    min_dim: usize,
    rng: &mut ChaCha8Rng,
    counter: &mut FlopCounter,
) -> Result<Attempt> {
    let (m, n) = (a.rows(), a.cols());
    let rht = RhtOperator::new(m, rng)?;
    let p = rht.padded_dim();
    // Sign flips touch the m original rows; the butterfly runs over all p.
    let abar = rht.apply_left(a)?;
    counter.add(flops::matvec(m, n) + flops::fwht(p, n));
    let bbar = rht.apply_left_vec(b)?;
    counter.add(flops::matvec(m, 1) + flops::fwht(p, 1));

    let tau = cfg.resolve_tau(p, min_dim)?;
    let delta = cfg.resolve_delta(tau, min_dim);
    let t_max = cfg.resolve_t_max(min_dim, tau);
    let check_every = cfg.resolve_check_every(min_dim, tau);
    let threshold = cfg.eps * norm_b;

    let mut x = vec![0.0; n];
    // Padding rows of the transformed system are exact zeros on both sides,
    // so ‖Āx − b̄‖ equals ‖Ax − b‖ for every iterate.
    let mut history = vec![norm_b];
    let mut converged = false;
    let mut breakdowns = 0usize;
    let mut note = None;
    let mut iterations = 0usize;
    let mut last_checked = norm_b;
    let mut strikes = 0usize;

    for t in 1..=t_max {
        let sample = uniform_coupon_sample(p, tau, rng)?;
        let atil = abar.gather_rows(sample.indices())?;
        let block_rows = atil.rows();
        let mut btil = atil.matvec(&x)?;
        counter.add(flops::matvec(block_rows, n));
        for (v, &i) in btil.iter_mut().zip(sample.indices()) {
            *v -= bbar[i];
        }
        match build_preconditioner_with_constants(
            &atil,
            cfg.eps_embed,
            delta,
            cfg.c_phi,
            cfg.c_s,
            rng,
            counter,
        ) {
            Ok(pre) => {
                let step = approx_project_step(&atil, &btil, &pre, cfg.s_max, counter)?;
                if step.breakdown {
                    breakdowns += 1;
                }
                axpy(-1.0, &step.w, &mut x);
            }
            // A zero sampled block carries no constraint; skip the update.
            Err(Error::SampledBlockZero) => {}
            Err(e) => return Err(e),
        }
        iterations = t;

        let resid = transformed_residual(&abar, &x, &bbar);
        history.push(resid);
        if t % check_every == 0 {
            counter.add(flops::matvec(p, n));
            if resid <= threshold {
                converged = true;
                break;
            }
            if resid >= last_checked * (1.0 - PLATEAU_IMPROVEMENT) {
                strikes += 1;
                if strikes >= PLATEAU_STRIKES {
                    note = Some(format!(
                        "residual stalled at {:.3e} (relative {:.3e}) across {} checks; \
                         the system may be inconsistent",
                        resid,
                        resid / norm_b,
                        PLATEAU_STRIKES
                    ));
                    break;
                }
            } else {
                strikes = 0;
            }
            last_checked = resid;
        }
    }

    if !converged && note.is_none() {
        note = Some(format!(
            "iteration budget {t_max} exhausted at relative residual {:.3e}",
            history.last().copied().unwrap_or(norm_b) / norm_b
        ));
    }
    Ok(Attempt {
        solution: x,
        history,
        iterations,
        converged,
        breakdowns,
        note: if converged { None } else { note },
    })
}

fn transformed_residual(abar: &DenseMatrix, x: &[f64], bbar: &[f64]) -> f64 {
    let mut r = abar.matvec(x).expect("dimensions fixed by caller");
    axpy(-1.0, bbar, &mut r);
    norm2(&r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{compact_svd, pinv_solve};

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseMatrix::from_fn(rows, cols, |_, _| rng.gen::<f64>() * 2.0 - 1.0)
    }

    fn orthogonal_square(n: usize, seed: u64) -> DenseMatrix {
        let svd = compact_svd(&random_matrix(n, n, seed), 1e-12).unwrap();
        assert_eq!(svd.rank(), n);
        svd.u
    }

    #[test]
    fn identity_with_full_block_converges_exactly() {
        let a = DenseMatrix::identity(8);
        let b: Vec<f64> = (1..=8).map(|i| i as f64).collect();
        let mut cfg = SolverConfig::default();
        cfg.tau = Some(8);
        cfg.eps = 1e-10;
        cfg.check_every = Some(1);
        cfg.t_max = Some(50);
        let rep = solve_kaczmarz(&a, &b, &cfg).unwrap();
        assert!(rep.converged, "note: {:?}", rep.note);
        // Each step projects exactly onto the sampled rows of an orthogonal
        // system, so a handful of covering draws suffices.
        assert!(rep.iterations_run <= 12, "took {}", rep.iterations_run);
        for (xi, bi) in rep.solution.iter().zip(&b) {
            assert!((xi - bi).abs() < 1e-8);
        }
    }

    #[test]
    fn orthogonal_system_converges_within_default_budget() {
        let a = orthogonal_square(64, 7);
        let ones = vec![1.0; 64];
        let b = a.matvec(&ones).unwrap();
        let cfg = SolverConfig {
            seed: 3,
            ..SolverConfig::default()
        };
        let rep = solve_kaczmarz(&a, &b, &cfg).unwrap();
        assert!(rep.converged, "note: {:?}", rep.note);
        let rel = rep.residual_history.last().unwrap() / norm2(&b);
        assert!(rel <= 1e-6, "relative residual {rel}");
        assert_eq!(rep.residual_history.len(), rep.iterations_run + 1);
        let rate = rep.fitted_rate.unwrap();
        assert!(rate > 0.0 && rate <= 1.0, "rate {rate}");
    }

    #[test]
    fn consistent_rectangular_recovers_row_space_solution() {
        let a = random_matrix(48, 16, 11);
        // Truth inside the row space makes it the minimum-norm solution the
        // method converges to from zero.
        let w: Vec<f64> = (0..48).map(|i| ((i * 13 % 7) as f64 - 3.0) / 5.0).collect();
        let x_star = a.matvec_transpose(&w).unwrap();
        let b = a.matvec(&x_star).unwrap();
        let mut cfg = SolverConfig::default();
        cfg.eps = 1e-9;
        cfg.seed = 5;
        let rep = solve_kaczmarz(&a, &b, &cfg).unwrap();
        assert!(rep.converged, "note: {:?}", rep.note);
        let err: f64 = rep
            .solution
            .iter()
            .zip(&x_star)
            .map(|(u, v)| (u - v) * (u - v))
            .sum::<f64>()
            .sqrt();
        assert!(err <= 1e-6 * norm2(&x_star), "error {err}");
        assert!(rep.flop_count > 0);
    }

    #[test]
    fn solution_matches_pseudoinverse_despite_transform() {
        // Controlled spectrum in [1, 2]: a raw random square matrix can be
        // near-singular, which no iteration budget covers reliably.
        let g = random_matrix(20, 20, 23);
        let svd = compact_svd(&g, 1e-12).unwrap();
        let mut core = DenseMatrix::zeros(20, 20);
        for j in 0..20 {
            core.set(j, j, 1.0 + j as f64 / 19.0);
        }
        let a = svd
            .u
            .matmul(&core)
            .unwrap()
            .matmul(&svd.v.transpose())
            .unwrap();
        let x_star: Vec<f64> = (0..20).map(|i| (i as f64 / 7.0).sin()).collect();
        let b = a.matvec(&x_star).unwrap();
        let mut cfg = SolverConfig::default();
        cfg.eps = 1e-10;
        cfg.seed = 1;
        let rep = solve_kaczmarz(&a, &b, &cfg).unwrap();
        assert!(rep.converged);
        let oracle = pinv_solve(&a, &b, 1e-12).unwrap();
        for (u, v) in rep.solution.iter().zip(&oracle) {
            assert!((u - v).abs() < 1e-6, "{u} vs {v}");
        }
    }

    #[test]
    fn inconsistent_system_stops_early_with_note() {
        let a = random_matrix(30, 10, 2);
        let x_star: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
        let mut b = a.matvec(&x_star).unwrap();
        // Push the rhs far out of the range: project noise off the range.
        let svd = compact_svd(&a, 1e-12).unwrap();
        let mut noise: Vec<f64> = (0..30).map(|i| (i * 7 % 11) as f64 - 5.0).collect();
        let coef = svd.u.matvec_transpose(&noise).unwrap();
        let back = svd.u.matvec(&coef).unwrap();
        axpy(-1.0, &back, &mut noise);
        let scale = 0.5 * norm2(&b) / norm2(&noise);
        for (bi, ni) in b.iter_mut().zip(&noise) {
            *bi += scale * ni;
        }
        let mut cfg = SolverConfig::default();
        cfg.seed = 9;
        cfg.retries = 0;
        let rep = solve_kaczmarz(&a, &b, &cfg).unwrap();
        assert!(!rep.converged);
        assert!(rep.note.is_some());
        // The plateau detector should fire well before the budget.
        let t_max = cfg.resolve_t_max(10, cfg.resolve_tau(32, 10).unwrap());
        assert!(rep.iterations_run < t_max);
    }

    #[test]
    fn zero_rhs_short_circuits() {
        let a = random_matrix(6, 4, 3);
        let rep = solve_kaczmarz(&a, &[0.0; 6], &SolverConfig::default()).unwrap();
        assert!(rep.converged);
        assert_eq!(rep.iterations_run, 0);
        assert_eq!(rep.residual_history, vec![0.0]);
        assert_eq!(rep.solution, vec![0.0; 4]);
    }

    #[test]
    fn zero_matrix_with_nonzero_rhs_reports_failure() {
        let a = DenseMatrix::zeros(8, 4);
        let b = vec![1.0; 8];
        let mut cfg = SolverConfig::default();
        cfg.t_max = Some(20);
        cfg.retries = 0;
        let rep = solve_kaczmarz(&a, &b, &cfg).unwrap();
        assert!(!rep.converged);
        assert_eq!(rep.solution, vec![0.0; 4]);
    }

    #[test]
    fn same_seed_reproduces_bitwise_different_seed_departs() {
        let a = random_matrix(24, 12, 4);
        let x_star: Vec<f64> = (0..12).map(|i| 1.0 / (i + 1) as f64).collect();
        let b = a.matvec(&x_star).unwrap();
        let mut cfg = SolverConfig::default();
        cfg.seed = 42;
        let r1 = solve_kaczmarz(&a, &b, &cfg).unwrap();
        let r2 = solve_kaczmarz(&a, &b, &cfg).unwrap();
        assert_eq!(r1.solution, r2.solution);
        assert_eq!(r1.flop_count, r2.flop_count);
        assert_eq!(r1.residual_history, r2.residual_history);
        cfg.seed = 43;
        let r3 = solve_kaczmarz(&a, &b, &cfg).unwrap();
        assert_ne!(r1.residual_history, r3.residual_history);
    }

    #[test]
    fn rejects_bad_inputs() {
        let a = random_matrix(6, 4, 3);
        assert!(solve_kaczmarz(&a, &[1.0; 5], &SolverConfig::default()).is_err());
        let mut cfg = SolverConfig::default();
        cfg.tau = Some(5); // exceeds min(m, n) = 4
        assert!(solve_kaczmarz(&a, &[1.0; 6], &cfg).is_err());
        cfg = SolverConfig::default();
        cfg.eps = 2.0;
        assert!(solve_kaczmarz(&a, &[1.0; 6], &cfg).is_err());
    }
}
