//! Reference solvers the randomized methods are measured against: conjugate
//! gradient on the normal equations and a dense SVD solve, instrumented
//! under the same flop conventions.

use std::time::Instant;

use stsv_core::flops::{self, FlopCounter};
use stsv_core::linalg::{axpy, dot, norm2, pinv_solve, DEFAULT_RANK_TOL};
use stsv_core::solvers::fit_geometric_rate;
use stsv_core::{DenseMatrix, Error, Result, SolveReport};

/// Size cap for [`baseline_direct`]: a dense SVD beyond this is too slow to
/// serve as a reference point.
pub const DIRECT_DIM_LIMIT: usize = 2048;

/// CGLS: conjugate gradient on `AᵀA x = Aᵀb` using only products with A and
/// Aᵀ, started from zero. Stops when the normal-equation gradient satisfies
/// `‖Aᵀ(Ax − b)‖ ≤ eps·‖Aᵀb‖` or after `max_iter` iterations.
///
/// Each iteration costs one product with A and one with Aᵀ; the history
/// records `‖Ax_t − b‖` from the maintained residual at no extra cost.
pub fn baseline_cg(a: &DenseMatrix, b: &[f64], eps: f64, max_iter: usize) -> Result<SolveReport> {
    let (m, n) = (a.rows(), a.cols());
    if b.len() != m {
        return Err(Error::Dimension(format!(
            "rhs length {} does not match {m} rows",
            b.len()
        )));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidArg(format!("eps must lie in (0, 1), got {eps}")));
    }
    let start = Instant::now();
    let mut counter = FlopCounter::new();
    let mut x = vec![0.0; n];
    let mut resid = b.to_vec();
    let mut s = a.matvec_transpose(&resid)?;
    counter.add(flops::matvec(m, n));
    let g0 = norm2(&s);
    let mut history = vec![norm2(b)];

    let mut converged = g0 == 0.0; // b has no row-space component: x = 0 is optimal
    let mut note = None;
    let mut iterations = 0;
    if !converged {
        let mut p = s.clone();
        let mut gamma = g0 * g0;
        for _ in 0..max_iter {
            let q = a.matvec(&p)?;
            counter.add(flops::matvec(m, n));
            let curvature = dot(&q, &q);
            if curvature == 0.0 {
                note = Some("search direction left the column space".into());
                break;
            }
            let alpha = gamma / curvature;
            axpy(alpha, &p, &mut x);
            axpy(-alpha, &q, &mut resid);
            s = a.matvec_transpose(&resid)?;
            counter.add(flops::matvec(m, n));
            let gamma_next = dot(&s, &s);
            iterations += 1;
            history.push(norm2(&resid));
            if gamma_next.sqrt() <= eps * g0 {
                converged = true;
                break;
            }
            let beta = gamma_next / gamma;
            gamma = gamma_next;
            for (pi, si) in p.iter_mut().zip(&s) {
                *pi = si + beta * *pi;
            }
        }
        if !converged && note.is_none() {
            note = Some(format!("iteration budget {max_iter} exhausted"));
        }
    }

    let fitted_rate = fit_geometric_rate(&history);
    Ok(SolveReport {
        solution: x,
        residual_history: history,
        iterations_run: iterations,
        flop_count: counter.total(),
        wall_seconds: start.elapsed().as_secs_f64(),
        converged,
        fitted_rate,
        energy_history: None,
        note,
    })
}

/// Minimum-norm least-squares solution through a dense SVD. Refuses
/// problems with `min(m, n)` above [`DIRECT_DIM_LIMIT`].
pub fn baseline_direct(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != a.rows() {
        return Err(Error::Dimension(format!(
            "rhs length {} does not match {} rows",
            b.len(),
            a.rows()
        )));
    }
    let small = a.rows().min(a.cols());
    if small > DIRECT_DIM_LIMIT {
        return Err(Error::InvalidArg(format!(
            "direct solve is capped at min(m, n) <= {DIRECT_DIM_LIMIT}, got {small}"
        )));
    }
    pinv_solve(a, b, DEFAULT_RANK_TOL)
}
