//! Outer solver loops built on the sampling, transform, and projection
//! machinery: a row-action solver for consistent systems, a coordinate-descent
//! solver for the normal equations, a positive semidefinite solver driven by
//! volume sampling, a preconditioned least-squares wrapper, and an adaptive
//! driver that searches for the effective head size.
//!
//! Every solver takes a [`SolverConfig`], runs from the zero initial iterate,
//! and returns a [`SolveReport`] carrying the solution, a per-iteration
//! history, and a flop count under the shared accounting conventions of
//! [`crate::flops`].

mod auto;
mod coordinate;
mod kaczmarz;
mod least_squares;
mod psd;

pub use auto::solve_auto;
pub use coordinate::solve_coordinate_descent;
pub(crate) use coordinate::{cd_solve, CdRhs};
pub use kaczmarz::solve_kaczmarz;
pub use least_squares::solve_least_squares;
pub use psd::solve_psd;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Knobs shared by all outer solvers.
///
/// Fields left at `None` are resolved per solve from the problem dimensions;
/// the resolution rules are documented on each field.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Block size. `None` derives `clamp(C·ln³(dim), 2, dim/4)` from the
    /// sampled dimension, a head size of one, and the oversampling factor;
    /// callers that know the head size should set this explicitly (see
    /// [`derive_tau`]).
    pub tau: Option<usize>,
    /// Oversampling factor `C` used when deriving the block size.
    pub oversampling: f64,
    /// Cap on inner conjugate-gradient iterations per projection step.
    pub s_max: usize,
    /// Outer iteration cap. `None` resolves to `10·ceil((dim/tau)·ln(1/eps))`.
    pub t_max: Option<usize>,
    /// Relative stopping tolerance; must lie in (0, 1).
    pub eps: f64,
    /// Seed for all randomness in the solve.
    pub seed: u64,
    /// Distortion of the per-block sketch used to build preconditioners.
    pub eps_embed: f64,
    /// Failure probability of the per-block sketch. `None` resolves to
    /// `(tau/dim)/324`, splitting the failure budget across the expected
    /// number of outer iterations.
    pub delta_embed: Option<f64>,
    /// Row-count constant of the sparse embedding.
    pub c_phi: f64,
    /// Sparsity constant of the sparse embedding.
    pub c_s: f64,
    /// Stopping-test cadence in outer iterations. `None` resolves to
    /// `ceil(dim/tau)`, one test per expected cover of the sampled dimension.
    pub check_every: Option<usize>,
    /// Markov-chain burn-in per sample in the PSD solver. `None` resolves to
    /// `10·ceil(ln n)`.
    pub burn_in: Option<usize>,
    /// Fresh preprocessing draws allowed after a non-converged attempt.
    pub retries: u32,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tau: None,
            oversampling: 1.0,
            s_max: 20,
            t_max: None,
            eps: 1e-6,
            seed: 0,
            eps_embed: 0.5,
            delta_embed: None,
            c_phi: crate::inner::DEFAULT_C_PHI,
            c_s: crate::inner::DEFAULT_C_S,
            check_every: None,
            burn_in: None,
            retries: 1,
        }
    }
}

impl SolverConfig {
    /// Rejects parameter combinations no solver can honor.
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::InvalidArg(format!(
                "eps must lie in (0, 1), got {}",
                self.eps
            )));
        }
        if !(self.eps_embed > 0.0 && self.eps_embed <= 0.5) {
            return Err(Error::InvalidArg(format!(
                "eps_embed must lie in (0, 1/2], got {}",
                self.eps_embed
            )));
        }
        if let Some(d) = self.delta_embed {
            if !(d > 0.0 && d < 1.0) {
                return Err(Error::InvalidArg(format!(
                    "delta_embed must lie in (0, 1), got {d}"
                )));
            }
        }
        if self.s_max == 0 {
            return Err(Error::InvalidArg("s_max must be at least 1".into()));
        }
        if self.t_max == Some(0) {
            return Err(Error::InvalidArg("t_max must be at least 1".into()));
        }
        if self.check_every == Some(0) {
            return Err(Error::InvalidArg("check_every must be at least 1".into()));
        }
        if !(self.oversampling > 0.0) || !self.oversampling.is_finite() {
            return Err(Error::InvalidArg(format!(
                "oversampling must be positive and finite, got {}",
                self.oversampling
            )));
        }
        if !(self.c_phi > 0.0) || !(self.c_s > 0.0) {
            return Err(Error::InvalidArg(
                "embedding constants must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Resolves the block size against the sampled dimension `dim` and the
    /// hard cap `cap = min(m, n)`.
    pub(crate) fn resolve_tau(&self, dim: usize, cap: usize) -> Result<usize> {
        match self.tau {
            Some(t) => {
                if t == 0 || t > cap {
                    return Err(Error::InvalidArg(format!(
                        "tau must lie in 1..={cap}, got {t}"
                    )));
                }
                Ok(t)
            }
            None => Ok(derive_tau(1, dim, self.oversampling).min(cap).max(1)),
        }
    }

    pub(crate) fn resolve_delta(&self, tau: usize, dim: usize) -> f64 {
        self.delta_embed
            .unwrap_or_else(|| default_delta(tau, dim))
    }

    pub(crate) fn resolve_t_max(&self, dim: usize, tau: usize) -> usize {
        self.t_max
            .unwrap_or_else(|| default_t_max(dim, tau, self.eps))
    }

    pub(crate) fn resolve_check_every(&self, dim: usize, tau: usize) -> usize {
        self.check_every
            .unwrap_or_else(|| (dim + tau - 1) / tau)
            .max(1)
    }
}

/// Block size for a head of size `head_k` inside a sampled dimension `dim`:
/// `C·head_k·ln³(dim)` clamped to `[head_k + 1, dim/4]`, and at least 1.
///
/// The lower clamp keeps the sampled blocks strictly larger than the head;
/// the upper clamp keeps per-iteration cost below a quarter pass over the
/// data even when the polylog factor is large.
pub fn derive_tau(head_k: usize, dim: usize, oversampling: f64) -> usize {
    let lo = head_k + 1;
    let hi = (dim / 4).max(1);
    let log = (dim.max(2) as f64).ln();
    let raw = (oversampling * head_k as f64 * log.powi(3)).ceil();
    let raw = if raw.is_finite() && raw > 0.0 {
        raw as usize
    } else {
        lo
    };
    raw.max(lo).min(hi).max(1)
}

/// Default per-block sketch failure probability: the outer loop performs
/// about `dim/tau` iterations per decade of progress, so each block gets an
/// equal share of a small global failure budget.
pub(crate) fn default_delta(tau: usize, dim: usize) -> f64 {
    ((tau as f64 / dim.max(1) as f64) / 324.0).clamp(1e-12, 0.49)
}

pub(crate) fn default_t_max(dim: usize, tau: usize, eps: f64) -> usize {
    let nats = (1.0 / eps).ln().max(1.0);
    let per_cover = dim as f64 / tau.max(1) as f64;
    (10.0 * (per_cover * nats).ceil()).max(1.0) as usize
}

/// Outcome of a single solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    /// Final iterate in the original coordinates.
    pub solution: Vec<f64>,
    /// Per-iteration progress metric, absolute: entry `t` belongs to iterate
    /// `x_t`, so the length is `iterations_run + 1` and entry 0 describes the
    /// zero initial iterate. Row-action and least-squares solves record
    /// `‖Ax_t − b‖`; the PSD solve records the same; coordinate-descent
    /// solves record the normal-equation residual `‖AᵀAx_t − c‖`.
    pub residual_history: Vec<f64>,
    /// Number of completed outer iterations.
    pub iterations_run: usize,
    /// Arithmetic cost under the conventions of [`crate::flops`]. History
    /// bookkeeping is excluded; stopping tests at the configured cadence are
    /// included.
    pub flop_count: u64,
    /// Wall-clock time of the solve in seconds.
    pub wall_seconds: f64,
    /// Whether the stopping criterion was met.
    pub converged: bool,
    /// Least-squares geometric decay rate fitted to the history, when a fit
    /// is possible.
    pub fitted_rate: Option<f64>,
    /// PSD solves only: `x_tᵀA x_t − 2bᵀx_t` per iteration, the squared
    /// A-seminorm error up to an additive constant.
    pub energy_history: Option<Vec<f64>>,
    /// Diagnostic attached to non-converged or degenerate runs.
    pub note: Option<String>,
}

impl SolveReport {
    /// Last history entry divided by the first, or 1 when the history is
    /// degenerate.
    pub fn final_relative_residual(&self) -> f64 {
        match (self.residual_history.first(), self.residual_history.last()) {
            (Some(&first), Some(&last)) if first > 0.0 => last / first,
            _ => 1.0,
        }
    }
}

/// Fits `h_t ≈ h_0·rate^t` by least squares on `ln h_t` and returns the rate.
///
/// Entries that are zero or negative (exact convergence, floating-point
/// underflow) are skipped; a fit needs at least two usable points.
pub fn fit_geometric_rate(history: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = history
        .iter()
        .enumerate()
        .filter(|&(_, &h)| h > 0.0 && h.is_finite())
        .map(|(t, &h)| (t as f64, h.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mean_t = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_l = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let var: f64 = pts.iter().map(|p| (p.0 - mean_t).powi(2)).sum();
    if var == 0.0 {
        return None;
    }
    let cov: f64 = pts
        .iter()
        .map(|p| (p.0 - mean_t) * (p.1 - mean_l))
        .sum();
    let rate = (cov / var).exp();
    if rate.is_finite() && rate > 0.0 {
        Some(rate)
    } else {
        None
    }
}
