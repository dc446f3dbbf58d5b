//! Spiked-spectrum test problems: a handful of large singular values in
//! front of a short, nearly flat tail, with a planted least-squares
//! solution.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use stsv_core::linalg::norm2;
use stsv_core::{DenseMatrix, Error, Result};

/// Whether the generated right-hand side lies in the range of the matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Consistency {
    Consistent,
    Inconsistent,
}

impl Consistency {
    pub fn as_str(self) -> &'static str {
        match self {
            Consistency::Consistent => "consistent",
            Consistency::Inconsistent => "inconsistent",
        }
    }
}

impl FromStr for Consistency {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "consistent" => Ok(Consistency::Consistent),
            "inconsistent" => Ok(Consistency::Inconsistent),
            other => Err(Error::Parse(format!(
                "unknown consistency '{other}', expected consistent or inconsistent"
            ))),
        }
    }
}

/// Recipe for one spiked-spectrum instance.
///
/// The generated matrix is `U·diag(σ)·Vᵀ` with Haar-random orthonormal
/// factors. The spectrum has `k` head values log-spaced from `head_cond`
/// down to `head_cond^(1/k)`, followed by a tail whose squared values ramp
/// linearly down to 1 so that the root mean square tail over the smallest
/// value equals `tail_spread`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub m: usize,
    pub n: usize,
    /// Number of large singular values ahead of the tail.
    pub k: usize,
    /// Scale of the largest singular value relative to the tail floor of 1.
    pub head_cond: f64,
    /// Target root-mean-square tail singular value over the smallest one.
    pub tail_spread: f64,
    /// Size of the off-range component relative to `‖A·x*‖`, used only for
    /// inconsistent instances. The perturbation is orthogonal to the range,
    /// so the planted solution stays the exact least-squares minimizer.
    pub noise: f64,
    pub consistency: Consistency,
    pub seed: u64,
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(Error::InvalidArg("matrix dimensions must be positive".into()));
        }
        let r = self.m.min(self.n);
        if self.k >= r {
            return Err(Error::InvalidArg(format!(
                "head size k must be smaller than min(m, n) = {r}, got {}",
                self.k
            )));
        }
        if self.k > 0 && !(self.head_cond >= 1.0 && self.head_cond.is_finite()) {
            return Err(Error::InvalidArg(format!(
                "head_cond must be finite and at least 1, got {}",
                self.head_cond
            )));
        }
        if !self.tail_spread.is_finite() || self.tail_spread < 1.0 {
            return Err(Error::InvalidArg(format!(
                "tail spread below 1 is infeasible: the root mean square of the tail \
                 cannot undershoot its smallest value (got {})",
                self.tail_spread
            )));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::InvalidArg(format!("noise must be finite and nonnegative, got {}", self.noise)));
        }
        if self.consistency == Consistency::Inconsistent {
            if self.m <= self.n {
                return Err(Error::InvalidArg(
                    "inconsistent instances need m > n so the right-hand side can leave the range".into(),
                ));
            }
            if self.noise <= 0.0 {
                return Err(Error::InvalidArg(
                    "inconsistent instances need a positive noise level".into(),
                ));
            }
        }
        Ok(())
    }
}

/// The singular values the generator plants, in nonincreasing order.
///
/// Head: `head_cond^((k−j)/k)` for j = 0..k. Tail: squared values ramp
/// linearly from `2·tail_spread² − 1` down to 1, which puts the mean of
/// `σ²/σ_min²` at exactly `tail_spread²` whenever the tail has at least two
/// entries. A single-entry tail is pinned to 1 regardless of `tail_spread`
/// (its spread is 1 by definition). If the head underruns the tail the
/// values are still returned sorted, so the spectrum stays valid even when
/// the head/tail split loses its meaning.
pub fn spec_singular_values(spec: &ProblemSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let r = spec.m.min(spec.n);
    let tail_len = r - spec.k;
    let mut sigma = Vec::with_capacity(r);
    for j in 0..spec.k {
        sigma.push(spec.head_cond.powf((spec.k - j) as f64 / spec.k as f64));
    }
    let beta = 2.0 * spec.tail_spread * spec.tail_spread - 1.0;
    for i in 0..tail_len {
        let t = if tail_len == 1 {
            1.0
        } else {
            i as f64 / (tail_len - 1) as f64
        };
        sigma.push((beta + (1.0 - beta) * t).sqrt());
    }
    sigma.sort_by(|a, b| b.partial_cmp(a).expect("finite by construction"));
    Ok(sigma)
}

/// Generates `(A, b, x*)` from the recipe.
///
/// `x*` is a unit vector in the row space of A. For consistent instances
/// `b = A·x*` exactly; for inconsistent ones a component orthogonal to the
/// range of size `noise·‖A·x*‖` is added, so `x*` remains the exact
/// least-squares minimizer while `‖Ax − b‖` is bounded away from zero.
pub fn gen_spiked(spec: &ProblemSpec) -> Result<(DenseMatrix, Vec<f64>, Vec<f64>)> {
    let sigma = spec_singular_values(spec)?;
    let r = spec.m.min(spec.n);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let u = haar_orthonormal(spec.m, r, &mut rng);
    let v = haar_orthonormal(spec.n, r, &mut rng);

    // A = U·diag(σ)·Vᵀ, assembled by scaling the rows of Vᵀ first.
    let mut svt = v.transpose();
    for (i, &s) in sigma.iter().enumerate() {
        for entry in &mut svt.data_mut()[i * spec.n..(i + 1) * spec.n] {
            *entry *= s;
        }
    }
    let a = u.matmul(&svt)?;

    let mut w: Vec<f64> = (0..r).map(|_| rng.sample(StandardNormal)).collect();
    let wn = norm2(&w);
    for wi in &mut w {
        *wi /= wn;
    }
    let xstar = v.matvec(&w)?;
    let mut b = a.matvec(&xstar)?;

    if spec.consistency == Consistency::Inconsistent {
        let g: Vec<f64> = (0..spec.m).map(|_| rng.sample(StandardNormal)).collect();
        let coeff = u.matvec_transpose(&g)?;
        let back = u.matvec(&coeff)?;
        let mut off: Vec<f64> = g.iter().zip(&back).map(|(gi, bi)| gi - bi).collect();
        let off_norm = norm2(&off);
        if off_norm == 0.0 {
            return Err(Error::InvalidArg(
                "off-range direction degenerated to zero; pick another seed".into(),
            ));
        }
        let scale = spec.noise * norm2(&b) / off_norm;
        for oi in &mut off {
            *oi *= scale;
        }
        for (bi, oi) in b.iter_mut().zip(&off) {
            *bi += oi;
        }
    }
    Ok((a, b, xstar))
}

/// Column-orthonormal `rows × cols` factor of a standard Gaussian matrix,
/// computed by Householder QR. Multiplying each column by the sign of the
/// corresponding R diagonal makes the distribution rotation invariant.
fn haar_orthonormal(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    assert!(cols >= 1 && rows >= cols, "factor must be tall or square");
    // Column-major scratch so the Householder sweeps run on contiguous memory.
    let mut g: Vec<f64> = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    let mut betas = vec![0.0f64; cols];
    let mut signs = vec![1.0f64; cols];
    for j in 0..cols {
        let (left, rest) = g.split_at_mut((j + 1) * rows);
        let colj = &mut left[j * rows..];
        let head = norm2(&colj[j..]);
        if head == 0.0 {
            continue;
        }
        let alpha = if colj[j] > 0.0 { -head } else { head };
        colj[j] -= alpha;
        let vn = norm2(&colj[j..]);
        let beta = 2.0 / (vn * vn);
        betas[j] = beta;
        signs[j] = if alpha < 0.0 { -1.0 } else { 1.0 };
        for block in rest.chunks_exact_mut(rows) {
            let w = beta * dot_from(&colj[j..], &block[j..]);
            for (vi, xi) in colj[j..].iter().zip(block[j..].iter_mut()) {
                *xi -= w * vi;
            }
        }
    }
    // Thin Q = H_0···H_{cols−1}·[I; 0], accumulated back to front; the
    // reflector at step j only touches columns j and later.
    let mut q = vec![0.0f64; rows * cols];
    for j in 0..cols {
        q[j * rows + j] = 1.0;
    }
    for j in (0..cols).rev() {
        if betas[j] == 0.0 {
            continue;
        }
        let (v_part, q_ref) = (&g[j * rows + j..(j + 1) * rows], &mut q);
        for c in j..cols {
            let column = &mut q_ref[c * rows..(c + 1) * rows];
            let w = betas[j] * dot_from(v_part, &column[j..]);
            for (vi, xi) in v_part.iter().zip(column[j..].iter_mut()) {
                *xi -= w * vi;
            }
        }
    }
    let mut data = vec![0.0f64; rows * cols];
    for c in 0..cols {
        let s = signs[c];
        for r in 0..rows {
            data[r * cols + c] = s * q[c * rows + r];
        }
    }
    DenseMatrix::new(rows, cols, data).expect("finite by construction")
}

fn dot_from(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use stsv_core::linalg::{compact_svd, DEFAULT_RANK_TOL};

    fn base_spec() -> ProblemSpec {
        ProblemSpec {
            m: 24,
            n: 16,
            k: 3,
            head_cond: 100.0,
            tail_spread: 1.2,
            noise: 0.0,
            consistency: Consistency::Consistent,
            seed: 7,
        }
    }

    #[test]
    fn haar_factor_has_orthonormal_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = haar_orthonormal(40, 12, &mut rng);
        let gram = q.transpose().matmul(&q).unwrap();
        for i in 0..12 {
            for j in 0..12 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((gram.get(i, j) - want).abs() < 1e-12, "gram[{i}][{j}] = {}", gram.get(i, j));
            }
        }
    }

    #[test]
    fn planted_spectrum_hits_head_and_tail_targets() {
        let spec = base_spec();
        let sigma = spec_singular_values(&spec).unwrap();
        assert_eq!(sigma.len(), 16);
        assert!((sigma[0] - 100.0).abs() < 1e-12);
        assert!((sigma[2] - 100.0f64.powf(1.0 / 3.0)).abs() < 1e-12);
        let tail = &sigma[3..];
        assert!((tail[tail.len() - 1] - 1.0).abs() < 1e-12);
        let mean_sq = tail.iter().map(|s| s * s).sum::<f64>() / tail.len() as f64;
        assert!((mean_sq.sqrt() - 1.2).abs() < 1e-12, "tail spread came out {}", mean_sq.sqrt());
    }

    #[test]
    fn flat_request_gives_all_ones() {
        let spec = ProblemSpec { k: 0, tail_spread: 1.0, ..base_spec() };
        let sigma = spec_singular_values(&spec).unwrap();
        assert!(sigma.iter().all(|&s| (s - 1.0).abs() < 1e-15));
    }

    #[test]
    fn infeasible_and_malformed_specs_are_rejected() {
        assert!(matches!(
            spec_singular_values(&ProblemSpec { tail_spread: 0.8, ..base_spec() }),
            Err(Error::InvalidArg(_))
        ));
        assert!(matches!(
            spec_singular_values(&ProblemSpec { k: 16, ..base_spec() }),
            Err(Error::InvalidArg(_))
        ));
        assert!(matches!(
            gen_spiked(&ProblemSpec {
                consistency: Consistency::Inconsistent,
                noise: 0.5,
                m: 16,
                n: 24,
                ..base_spec()
            }),
            Err(Error::InvalidArg(_))
        ));
        assert!(matches!(
            gen_spiked(&ProblemSpec { consistency: Consistency::Inconsistent, noise: 0.0, ..base_spec() }),
            Err(Error::InvalidArg(_))
        ));
    }

    #[test]
    fn generator_is_deterministic_in_the_seed() {
        let spec = base_spec();
        let (a1, b1, x1) = gen_spiked(&spec).unwrap();
        let (a2, b2, x2) = gen_spiked(&spec).unwrap();
        assert_eq!(a1.data(), a2.data());
        assert_eq!(b1, b2);
        assert_eq!(x1, x2);
        let (a3, _, _) = gen_spiked(&ProblemSpec { seed: 8, ..spec }).unwrap();
        assert_ne!(a1.data(), a3.data());
    }

    #[test]
    fn planted_solution_is_unit_and_in_the_row_space() {
        let spec = ProblemSpec { m: 12, n: 20, k: 2, ..base_spec() };
        let (a, _, xstar) = gen_spiked(&spec).unwrap();
        assert!((norm2(&xstar) - 1.0).abs() < 1e-12);
        let svd = compact_svd(&a, DEFAULT_RANK_TOL).unwrap();
        let coeff = svd.v.matvec_transpose(&xstar).unwrap();
        let back = svd.v.matvec(&coeff).unwrap();
        let drift: f64 = xstar
            .iter()
            .zip(&back)
            .map(|(x, p)| (x - p) * (x - p))
            .sum::<f64>()
            .sqrt();
        assert!(drift < 1e-10, "row-space leakage {drift}");
    }
}
