//! Elementary symmetric polynomials of eigenvalue vectors and the exact
//! expected projection matrix under determinantal block sampling.
//!
//! These are the verification tools for the convergence theory: σ_ℓ(λ)
//! equals the sum of ℓ×ℓ principal minors, the leave-one-out tables feed
//! the closed form for E[P_S], and the closed-form lower bound on
//! λ⁺_min(E[P_S]) is what the solvers' per-iteration contraction is
//! certified against.

use crate::error::{Error, Result};
use crate::linalg::{sym_eig, tail_condition, DenseMatrix, SpectralProfile};

/// Table of σ_0(λ) … σ_m(λ) for one nonnegative vector λ.
#[derive(Debug, Clone)]
pub struct EspTable {
    values: Vec<f64>,
}

impl EspTable {
    /// σ_ℓ(λ); zero for ℓ beyond the vector length.
    pub fn value(&self, ell: usize) -> f64 {
        self.values.get(ell).copied().unwrap_or(0.0)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Length of the underlying vector.
    pub fn degree(&self) -> usize {
        self.values.len() - 1
    }
}

/// All elementary symmetric polynomials by the stable one-pass recurrence
/// e_ℓ ← e_ℓ + λ_i·e_{ℓ−1}. Entries more negative than −1e-12 are
/// rejected; roundoff-scale negatives are clamped to zero.
pub fn esp_all(lambda: &[f64]) -> Result<EspTable> {
    let clean = clean_nonneg(lambda)?;
    let mut values = vec![0.0; clean.len() + 1];
    values[0] = 1.0;
    for (i, &l) in clean.iter().enumerate() {
        for ell in (1..=i + 1).rev() {
            values[ell] += l * values[ell - 1];
        }
    }
    Ok(EspTable { values })
}

fn clean_nonneg(lambda: &[f64]) -> Result<Vec<f64>> {
    lambda
        .iter()
        .map(|&l| {
            if l < -1e-12 {
                Err(Error::InvalidArg(format!("negative eigenvalue {l:.3e} in symmetric polynomial input")))
            } else {
                Ok(l.max(0.0))
            }
        })
        .collect()
}

/// σ_0 … σ_ell_max of λ with entry `skip` removed, recomputed from scratch.
pub fn esp_all_excluding(lambda: &[f64], skip: usize, ell_max: usize) -> Result<Vec<f64>> {
    let clean = clean_nonneg(lambda)?;
    let mut values = vec![0.0; ell_max + 1];
    values[0] = 1.0;
    let mut used = 0usize;
    for (i, &l) in clean.iter().enumerate() {
        if i == skip {
            continue;
        }
        used += 1;
        for ell in (1..=used.min(ell_max)).rev() {
            values[ell] += l * values[ell - 1];
        }
    }
    Ok(values)
}

/// Leave-one-out table σ_0(λ_{−i}) … σ_ell_max(λ_{−i}).
///
/// Uses the downdating recurrence e⁻[ℓ] = e[ℓ] − λ_i·e⁻[ℓ−1] against the
/// full table, which is O(ℓ_max) but cancels catastrophically when λ_i
/// carries most of the mass; any sign of cancellation (negative, non-finite,
/// or collapsed-by-eight-digits entries) falls back to recomputation.
pub fn esp_leave_one_out(
    lambda: &[f64],
    full: &EspTable,
    i: usize,
    ell_max: usize,
) -> Result<Vec<f64>> {
    if i >= lambda.len() {
        return Err(Error::InvalidArg(format!("leave-one-out index {i} out of {}", lambda.len())));
    }
    let li = lambda[i].max(0.0);
    let mut out = vec![0.0; ell_max + 1];
    out[0] = 1.0;
    let mut suspicious = false;
    for ell in 1..=ell_max {
        let v = full.value(ell) - li * out[ell - 1];
        if !v.is_finite() || v < 0.0 || v < 1e-8 * full.value(ell) {
            suspicious = true;
            break;
        }
        out[ell] = v;
    }
    if suspicious {
        return esp_all_excluding(lambda, i, ell_max);
    }
    Ok(out)
}

/// Exact E[P_S] for S a size-k determinantal sample over the rows of A,
/// as the n×n matrix Aᵀ·U·diag(σ_{k−1}(λ_{−i})/σ_k(λ))·Uᵀ·A with
/// (λ, U) the eigendecomposition of A·Aᵀ.
///
/// Guarded to m ≤ 16 so the result stays verifiable against subset
/// enumeration.
pub fn expected_projection_exact(a: &DenseMatrix, k: usize) -> Result<DenseMatrix> {
    let m = a.rows();
    if m > 16 {
        return Err(Error::InvalidArg(format!("expected projection is enumeration-guarded to m <= 16, got {m}")));
    }
    if k == 0 || k > m {
        return Err(Error::InvalidArg(format!("need 1 <= k <= {m}, got {k}")));
    }
    let gram = a.matmul(&a.transpose())?;
    let (raw_eigs, u) = sym_eig(&gram, 1e-10)?;
    let lambda: Vec<f64> = raw_eigs.iter().map(|&l| l.max(0.0)).collect();
    let lambda_max = lambda.first().copied().unwrap_or(0.0);
    let rank = lambda.iter().filter(|&&l| l > 1e-12 * lambda_max).count();
    if k > rank {
        return Err(Error::KAboveRank);
    }

    let table = esp_all(&lambda)?;
    let sigma_k = table.value(k);
    let weights: Vec<f64> = (0..m)
        .map(|i| Ok(esp_leave_one_out(&lambda, &table, i, k - 1)?[k - 1] / sigma_k))
        .collect::<Result<_>>()?;

    // Aᵀ·U·diag(w)·Uᵀ·A, assembled as Gᵀ·diag(w)·G with G = Uᵀ·A.
    let g = u.transpose().matmul(a)?;
    let n = a.cols();
    let mut out = DenseMatrix::zeros(n, n);
    for i in 0..m {
        let w = weights[i];
        if w == 0.0 {
            continue;
        }
        let grow = g.row(i).to_vec();
        for r in 0..n {
            let coeff = w * grow[r];
            if coeff != 0.0 {
                let dst = &mut out.data_mut()[r * n..(r + 1) * n];
                for (d, gc) in dst.iter_mut().zip(&grow) {
                    *d += coeff * gc;
                }
            }
        }
    }
    // Symmetrize away roundoff drift.
    let sym = DenseMatrix::from_fn(n, n, |r, c| 0.5 * (out.get(r, c) + out.get(c, r)));
    Ok(sym)
}

/// Closed-form lower bound on λ⁺_min(E[P_S]) for a size-k′ determinantal
/// sample: (k′−k)/(k′−k−1 + (r−k)·κ̄_k²), valid for any k < k′ < r.
pub fn projection_lower_bound(profile: &SpectralProfile, k: usize, k_prime: usize) -> Result<f64> {
    let r = profile.rank();
    if !(k < k_prime && k_prime < r) {
        return Err(Error::InvalidArg(format!("need k < k' < rank, got k={k}, k'={k_prime}, rank={r}")));
    }
    let kappa = tail_condition(profile, k)?;
    let num = (k_prime - k) as f64;
    let den = (k_prime - k - 1) as f64 + (r - k) as f64 * kappa * kappa;
    Ok(num / den)
}

/// Checks the tail ratio inequality
/// σ_{τ+1}(λ)/σ_τ(λ) ≤ (1/(τ+1−j))·Σ_{i>j} λ_i
/// for a nonincreasing nonnegative λ; vacuously true when σ_τ = 0.
pub fn esp_ratio_bound_check(lambda: &[f64], tau: usize, j: usize) -> Result<bool> {
    if !(tau >= j && j > 0) {
        return Err(Error::InvalidArg(format!("need tau >= j > 0, got tau={tau}, j={j}")));
    }
    if tau + 1 > lambda.len() {
        return Err(Error::InvalidArg(format!(
            "need tau+1 <= len(lambda), got tau={tau}, len={}",
            lambda.len()
        )));
    }
    if lambda.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::InvalidArg("lambda must be nonincreasing".into()));
    }
    let table = esp_all(lambda)?;
    let sigma_tau = table.value(tau);
    if sigma_tau == 0.0 {
        return Ok(true);
    }
    let ratio = table.value(tau + 1) / sigma_tau;
    let tail_mean = lambda[j..].iter().sum::<f64>() / (tau + 1 - j) as f64;
    // Exact-arithmetic inequality checked with a roundoff allowance.
    Ok(ratio <= tail_mean * (1.0 + 1e-12) + 1e-300)
}
