//! Analytic flop model shared by solvers and baselines.
//!
//! Counts are multiply-adds under fixed conventions so that solver and
//! baseline totals are comparable without trusting wall clocks:
//! matvec m·n, dense SVD 2mn² + 11n³ (n the smaller side), symmetric
//! eigensolve 9n³, FWHT p·log₂p per column.

/// Running multiply-add counter owned by one solve.
#[derive(Debug, Clone, Copy, Default)]
pub struct FlopCounter(u64);

impl FlopCounter {
    pub fn new() -> Self {
        Self(0)
    }

    pub fn add(&mut self, cost: u64) {
        self.0 = self.0.saturating_add(cost);
    }

    pub fn total(&self) -> u64 {
        self.0
    }
}

pub fn matvec(m: usize, n: usize) -> u64 {
    m as u64 * n as u64
}

pub fn matmat(m: usize, n: usize, k: usize) -> u64 {
    m as u64 * n as u64 * k as u64
}

/// Dense SVD of an m×n block, n ≤ m.
pub fn svd(m: usize, n: usize) -> u64 {
    let (m, n) = (m as u64, n as u64);
    2 * m * n * n + 11 * n * n * n
}

/// Symmetric eigendecomposition of an n×n matrix.
pub fn sym_eig(n: usize) -> u64 {
    9 * (n as u64).pow(3)
}

/// FWHT over `cols` columns of length p (p a power of two).
pub fn fwht(p: usize, cols: usize) -> u64 {
    let p = p as u64;
    p * p.trailing_zeros() as u64 * cols as u64
}

/// Sparse-embedding application to an n×d matrix, s nonzeros per column.
pub fn embed_apply(n: usize, d: usize, s: usize) -> u64 {
    n as u64 * d as u64 * s as u64
}
