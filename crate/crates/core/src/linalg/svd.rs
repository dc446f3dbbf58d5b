//! Compact SVD via one-sided Jacobi and a cyclic Jacobi symmetric
//! eigensolver. All blocks in the pipeline are small (at most a few
//! hundred on a side), where Jacobi methods are simple and robust.

use super::{dot, norm2, DenseMatrix};
use crate::error::{Error, Result};

/// Relative rank cutoff: singular values ≤ tol·σ_max are treated as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-12;

/// A = U·diag(s)·Vᵀ with U (m×r), V (n×r) column-orthonormal and
/// s strictly positive, nonincreasing.
#[derive(Debug, Clone)]
pub struct CompactSvd {
    pub u: DenseMatrix,
    pub s: Vec<f64>,
    pub v: DenseMatrix,
}

impl CompactSvd {
    pub fn rank(&self) -> usize {
        self.s.len()
    }

    /// U·diag(s)·Vᵀ.
    pub fn reconstruct(&self) -> DenseMatrix {
        let (m, n, r) = (self.u.rows(), self.v.rows(), self.rank());
        DenseMatrix::from_fn(m, n, |i, j| {
            (0..r).map(|t| self.u.get(i, t) * self.s[t] * self.v.get(j, t)).sum()
        })
    }

    /// x = V·diag(1/s)·Uᵀy, the minimum-norm least-squares solution of Ax = y.
    pub fn pseudoinverse_apply(&self, y: &[f64]) -> Result<Vec<f64>> {
        let mut coeffs = self.u.matvec_transpose(y)?;
        for (c, s) in coeffs.iter_mut().zip(&self.s) {
            *c /= s;
        }
        self.v.matvec(&coeffs)
    }

    /// Worst max-abs deviation of UᵀU and VᵀV from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let gram_defect = |f: &DenseMatrix| {
            let g = f.transpose().matmul(f).expect("square gram");
            let mut worst = 0.0f64;
            for i in 0..g.rows() {
                for j in 0..g.cols() {
                    let target = if i == j { 1.0 } else { 0.0 };
                    worst = worst.max((g.get(i, j) - target).abs());
                }
            }
            worst
        };
        gram_defect(&self.u).max(gram_defect(&self.v))
    }
}

/// Compact SVD with rank cutoff at `rank_tol`·σ_max.
///
/// Runs one-sided Jacobi on the transposed-if-needed matrix so the column
/// orthogonalization happens on the shorter side.
pub fn compact_svd(a: &DenseMatrix, rank_tol: f64) -> Result<CompactSvd> {
    if !(rank_tol > 0.0) {
        return Err(Error::InvalidArg(format!("rank_tol must be positive, got {rank_tol}")));
    }
    if a.frobenius_norm() == 0.0 {
        return Err(Error::ZeroMatrixSvd);
    }
    let transposed = a.rows() < a.cols();
    let tall = if transposed { a.transpose() } else { a.clone() };
    let (m, n) = (tall.rows(), tall.cols());

    // Column-major working copies: b holds the rotated columns of `tall`,
    // v accumulates the right rotations.
    let mut b = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            b[j * m + i] = tall.get(i, j);
        }
    }
    let mut v = vec![0.0; n * n];
    for j in 0..n {
        v[j * n + j] = 1.0;
    }
    one_sided_jacobi(&mut b, &mut v, m, n);

    let norms: Vec<f64> = (0..n).map(|j| norm2(&b[j * m..(j + 1) * m])).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&p, &q| norms[q].partial_cmp(&norms[p]).expect("finite norms"));
    let sigma_max = norms[order[0]];
    let kept: Vec<usize> = order
        .into_iter()
        .filter(|&j| norms[j] > rank_tol * sigma_max)
        .collect();
    let r = kept.len();

    let mut u = DenseMatrix::zeros(m, r);
    let mut vmat = DenseMatrix::zeros(n, r);
    let mut s = Vec::with_capacity(r);
    for (t, &j) in kept.iter().enumerate() {
        let sigma = norms[j];
        s.push(sigma);
        for i in 0..m {
            u.set(i, t, b[j * m + i] / sigma);
        }
        for i in 0..n {
            vmat.set(i, t, v[j * n + i]);
        }
    }

    Ok(if transposed {
        CompactSvd { u: vmat, s, v: u }
    } else {
        CompactSvd { u, s, v: vmat }
    })
}

/// Hestenes one-sided Jacobi: rotates column pairs of b (m×n col-major)
/// until all pairs are orthogonal to relative tolerance, accumulating the
/// same rotations in v (n×n col-major).
fn one_sided_jacobi(b: &mut [f64], v: &mut [f64], m: usize, n: usize) {
    const TOL: f64 = 1e-14;
    const MAX_SWEEPS: usize = 64;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let (alpha, beta, gamma) = {
                    let bp = &b[p * m..(p + 1) * m];
                    let bq = &b[q * m..(q + 1) * m];
                    (dot(bp, bp), dot(bq, bq), dot(bp, bq))
                };
                if gamma.abs() <= TOL * (alpha * beta).sqrt() || alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_columns(b, m, p, q, c, s);
                rotate_columns(v, n, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
}

#[inline]
fn rotate_columns(data: &mut [f64], len: usize, p: usize, q: usize, c: f64, s: f64) {
    // Split borrows: p < q always.
    let (head, tail) = data.split_at_mut(q * len);
    let colp = &mut head[p * len..(p + 1) * len];
    let colq = &mut tail[..len];
    for (xp, xq) in colp.iter_mut().zip(colq.iter_mut()) {
        let (a, bq) = (*xp, *xq);
        *xp = c * a - s * bq;
        *xq = s * a + c * bq;
    }
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in nonincreasing order with matching eigenvector
/// columns. `sym_tol` bounds the accepted asymmetry relative to the largest
/// entry; the matrix is symmetrized before iterating.
pub fn sym_eig(mat: &DenseMatrix, sym_tol: f64) -> Result<(Vec<f64>, DenseMatrix)> {
    let n = mat.rows();
    if n != mat.cols() {
        return Err(Error::Dimension(format!(
            "symmetric eigensolve needs a square matrix, got {}x{}",
            mat.rows(),
            mat.cols()
        )));
    }
    let scale = mat.max_abs();
    let dev = mat.asymmetry();
    if dev > sym_tol * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::Asymmetric(dev));
    }
    if n == 0 {
        return Ok((Vec::new(), DenseMatrix::zeros(0, 0)));
    }

    let mut a: Vec<f64> = (0..n * n)
        .map(|idx| {
            let (i, j) = (idx / n, idx % n);
            0.5 * (mat.get(i, j) + mat.get(j, i))
        })
        .collect();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    let frob: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    const MAX_SWEEPS: usize = 100;
    for _ in 0..MAX_SWEEPS {
        let off: f64 = {
            let mut acc = 0.0;
            for p in 0..n {
                for q in (p + 1)..n {
                    acc += a[p * n + q] * a[p * n + q];
                }
            }
            (2.0 * acc).sqrt()
        };
        if off <= 1e-15 * frob.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() <= 1e-18 * frob.max(f64::MIN_POSITIVE) {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                apply_two_sided_rotation(&mut a, n, p, q, c, s);
                // Accumulate: V ← V·J, i.e. rotate columns p and q.
                for i in 0..n {
                    let (vip, viq) = (v[i * n + p], v[i * n + q]);
                    v[i * n + p] = c * vip - s * viq;
                    v[i * n + q] = s * vip + c * viq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&p, &q| {
        a[q * n + q].partial_cmp(&a[p * n + p]).expect("finite eigenvalues")
    });
    let eigs: Vec<f64> = order.iter().map(|&j| a[j * n + j]).collect();
    let vectors = DenseMatrix::from_fn(n, n, |i, t| v[i * n + order[t]]);
    Ok((eigs, vectors))
}

/// A ← JᵀAJ for the (p,q) rotation with cosine c, sine s.
fn apply_two_sided_rotation(a: &mut [f64], n: usize, p: usize, q: usize, c: f64, s: f64) {
    for i in 0..n {
        let (aip, aiq) = (a[i * n + p], a[i * n + q]);
        a[i * n + p] = c * aip - s * aiq;
        a[i * n + q] = s * aip + c * aiq;
    }
    for j in 0..n {
        let (apj, aqj) = (a[p * n + j], a[q * n + j]);
        a[p * n + j] = c * apj - s * aqj;
        a[q * n + j] = s * apj + c * aqj;
    }
}

/// Minimum-norm least-squares solve through the compact SVD.
pub fn pinv_solve(a: &DenseMatrix, b: &[f64], rank_tol: f64) -> Result<Vec<f64>> {
    compact_svd(a, rank_tol)?.pseudoinverse_apply(b)
}
