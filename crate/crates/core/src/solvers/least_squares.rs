//! Preconditioned least-squares solver for tall systems.
//!
//! A single sparse embedding compresses the tall matrix once into a short
//! sketch whose Gram matrix spectrally approximates the true Hessian `AᵀA`.
//! Each outer iteration computes the exact gradient, then asks the
//! coordinate-descent solver to invert the sketched Hessian against it,
//! yielding an inexact Newton step. With the sketch distortion and the inner
//! accuracy both fixed, the error contracts by a constant factor per
//! iteration, so the outer loop is logarithmically short and touches the
//! tall matrix only twice per iteration.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::flops::{self, FlopCounter};
use crate::inner::SparseEmbedding;
use crate::linalg::{axpy, norm2, DenseMatrix};

use super::{cd_solve, fit_geometric_rate, CdRhs, SolveReport, SolverConfig};

/// Sketch distortion for the one-time Hessian approximation.
const HESSIAN_DISTORTION: f64 = 0.125;
/// Failure probability of the one-time sketch.
const HESSIAN_DELTA: f64 = 0.01;
/// Relative gradient accuracy demanded of each inner solve; this keeps the
/// inexact Newton step well within the contraction budget.
const INNER_EPS: f64 = 0.05;
/// Inner iteration budget in expected covers of the lifted coordinates.
const INNER_COVERS: usize = 5;
/// Seed increment between inner solves.
const SEED_STRIDE: u64 = 0x9E37_79B9_7F4A_7C15;

/// Solves `min_x ‖Ax − b‖` for tall `A` (at least as many rows as columns).
///
/// Stops when `‖Aᵀ(Ax_t − b)‖ ≤ eps·‖Aᵀb‖`, a test that remains meaningful
/// when the system is inconsistent. The history records `‖Ax_t − b‖` per
/// outer iteration. Wide inputs are rejected: the coordinate-descent solver
/// already handles them directly at no extra cost.
pub fn solve_least_squares(a: &DenseMatrix, b: &[f64], cfg: &SolverConfig) -> Result<SolveReport> {
    let start = Instant::now();
    cfg.validate()?;
    let (n, d) = (a.rows(), a.cols());
    if d > n {
        return Err(Error::UseCoordinateDescent);
    }
    if b.len() != n {
        return Err(Error::Dimension(format!(
            "rhs length {} does not match {n} rows",
            b.len()
        )));
    }

    let mut counter = FlopCounter::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let embedding = SparseEmbedding::build_with_constants(
        n,
        d,
        HESSIAN_DISTORTION,
        HESSIAN_DELTA,
        cfg.c_phi,
        cfg.c_s,
        &mut rng,
    )?;
    let sketch = embedding.apply(a)?;
    counter.add(flops::embed_apply(n, d, embedding.nnz_per_col()));

    // Inner solves sample lifted coordinates of the d-dimensional sketch
    // domain, so the block size is resolved against that side.
    let p_d = d.next_power_of_two();
    let tau = cfg.resolve_tau(p_d, d.min(sketch.rows()))?;
    let inner_t_max = INNER_COVERS * ((p_d + tau - 1) / tau).max(1);

    // The expected contraction per outer step is a fixed constant, so the
    // default budget only needs to scale with log(1/eps).
    let t_max = cfg.t_max.unwrap_or_else(|| {
        (2.0 * ((1.0 / cfg.eps).ln() / (6.0f64 / 5.0).ln()).ceil()).max(1.0) as usize
    });

    let mut x = vec![0.0; d];
    let mut resid: Vec<f64> = b.iter().map(|&v| -v).collect(); // Ax − b at x = 0
    let mut history = vec![norm2(b)];
    let mut g = a.matvec_transpose(&resid)?;
    counter.add(flops::matvec(n, d));
    let g_scale = norm2(&g); // equals ‖Aᵀb‖ at the zero iterate
    let threshold = cfg.eps * g_scale;

    let mut converged = g_scale == 0.0;
    let mut iterations = 0usize;
    while !converged {
        if norm2(&g) <= threshold {
            converged = true;
            break;
        }
        if iterations == t_max {
            break;
        }
        let mut inner_cfg = cfg.clone();
        inner_cfg.tau = Some(tau);
        inner_cfg.eps = INNER_EPS;
        inner_cfg.t_max = Some(inner_t_max);
        inner_cfg.check_every = None;
        inner_cfg.seed = cfg
            .seed
            .wrapping_add(SEED_STRIDE.wrapping_mul(iterations as u64 + 1));
        inner_cfg.retries = 0;
        let inner = cd_solve(&sketch, CdRhs::Gram(&g), &inner_cfg, false)?;
        counter.add(inner.report.flop_count);
        axpy(-1.0, &inner.report.solution, &mut x);

        resid = a.matvec(&x)?;
        axpy(-1.0, b, &mut resid);
        counter.add(flops::matvec(n, d));
        history.push(norm2(&resid));
        g = a.matvec_transpose(&resid)?;
        counter.add(flops::matvec(n, d));
        iterations += 1;
    }

    let note = if converged {
        None
    } else {
        Some(format!(
            "iteration budget {t_max} exhausted with relative gradient {:.3e}",
            norm2(&g) / g_scale
        ))
    };
    Ok(SolveReport {
        fitted_rate: fit_geometric_rate(&history),
        solution: x,
        residual_history: history,
        iterations_run: iterations,
        flop_count: counter.total(),
        wall_seconds: start.elapsed().as_secs_f64(),
        converged,
        energy_history: None,
        note,
    })
}
