//! Spectral summaries: singular-value profiles, averaged tail condition
//! numbers, and the smallest positive eigenvalue of a PSD matrix.

use super::svd::{sym_eig, CompactSvd};
use super::DenseMatrix;
use crate::error::{Error, Result};

/// The positive singular values of a matrix, largest first, together with
/// the original shape.
#[derive(Debug, Clone)]
pub struct SpectralProfile {
    singular_values: Vec<f64>,
    m: usize,
    n: usize,
}

impl SpectralProfile {
    pub fn new(singular_values: Vec<f64>, m: usize, n: usize) -> Result<Self> {
        if singular_values.len() > m.min(n) {
            return Err(Error::Dimension(format!(
                "rank {} exceeds min({m},{n})",
                singular_values.len()
            )));
        }
        if singular_values.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::InvalidArg("singular values must be strictly positive".into()));
        }
        if singular_values.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::InvalidArg("singular values must be nonincreasing".into()));
        }
        Ok(Self { singular_values, m, n })
    }

    pub fn from_svd(svd: &CompactSvd) -> Self {
        Self {
            singular_values: svd.s.clone(),
            m: svd.u.rows(),
            n: svd.v.rows(),
        }
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.m, self.n)
    }
}

/// Averaged tail condition number
/// κ̄_k = sqrt( (1/(r−k)) · Σ_{j>k} σ_j²/σ_r² ), always ≥ 1.
///
/// Small κ̄_k certifies that at most k singular values are "large" relative
/// to the smallest positive one, which is the regime where block sampling
/// beats full-spectrum Krylov iteration.
pub fn tail_condition(profile: &SpectralProfile, k: usize) -> Result<f64> {
    let r = profile.rank();
    if k >= r {
        return Err(Error::InvalidArg(format!("tail condition needs k < rank, got k={k}, r={r}")));
    }
    let sv = profile.singular_values();
    let sigma_r = sv[r - 1];
    let mean_sq = sv[k..].iter().map(|s| (s / sigma_r).powi(2)).sum::<f64>() / (r - k) as f64;
    Ok(mean_sq.sqrt())
}

/// Eigenvalue-ratio variant used for PSD systems:
/// κ̄_k = (1/(r−k)) · Σ_{j>k} λ_j/λ_r over the positive eigenvalues
/// (plain average of ratios, no squaring).
pub fn eigen_tail_condition(eigs_desc: &[f64], k: usize) -> Result<f64> {
    let r = eigs_desc.len();
    if k >= r {
        return Err(Error::InvalidArg(format!("tail condition needs k < rank, got k={k}, r={r}")));
    }
    if eigs_desc.iter().any(|&l| !(l > 0.0)) || eigs_desc.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::InvalidArg(
            "eigenvalues must be strictly positive and nonincreasing".into(),
        ));
    }
    let lambda_r = eigs_desc[r - 1];
    Ok(eigs_desc[k..].iter().map(|l| l / lambda_r).sum::<f64>() / (r - k) as f64)
}

/// Smallest eigenvalue of a symmetric PSD matrix strictly above the
/// relative cutoff `tol`·λ_max; 0 for a (numerically) zero matrix.
pub fn lambda_min_plus(mat: &DenseMatrix, tol: f64) -> Result<f64> {
    let (eigs, _) = sym_eig(mat, tol)?;
    let lambda_max = eigs.first().copied().unwrap_or(0.0);
    if lambda_max <= 0.0 {
        // Zero (or numerically negative-definite-looking noise) matrix.
        if eigs.last().is_some_and(|&l| l < -tol * mat.max_abs().max(f64::MIN_POSITIVE)) {
            return Err(Error::NotPsd(*eigs.last().expect("nonempty")));
        }
        return Ok(0.0);
    }
    if let Some(&min) = eigs.last() {
        if min < -tol * lambda_max {
            return Err(Error::NotPsd(min));
        }
    }
    Ok(eigs
        .iter()
        .rev()
        .find(|&&l| l > tol * lambda_max)
        .copied()
        .expect("lambda_max itself clears the cutoff"))
}
