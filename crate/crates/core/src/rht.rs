//! Randomized Hadamard mixing. The operator Q = (1/√p)·H·D pads inputs to
//! the next power of two p, flips signs with a Rademacher diagonal D, and
//! mixes with the Walsh–Hadamard matrix H. Q is exactly orthogonal, so
//! applying it from either side preserves spectra while spreading the
//! leverage of any single row or column across all of them.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// Sign diagonal plus padding bookkeeping for one mixing operator.
///
/// `apply_left` treats the signs as acting on rows, `apply_right` on
/// columns; both normalize by the padded size so the map is orthogonal.
#[derive(Debug, Clone)]
pub struct RhtOperator {
    padded_dim: usize,
    original_dim: usize,
    signs: Vec<f64>,
}

impl RhtOperator {
    /// Draws fresh Rademacher signs for a dimension-`original_dim` operand.
    pub fn new(original_dim: usize, rng: &mut impl Rng) -> Result<Self> {
        let padded = original_dim.next_power_of_two();
        let signs = (0..padded)
            .map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 })
            .collect();
        Self::with_signs(original_dim, signs)
    }

    /// Fixed-sign constructor; every sign must be exactly ±1 and the count
    /// must match the padded dimension.
    pub fn with_signs(original_dim: usize, signs: Vec<f64>) -> Result<Self> {
        if original_dim == 0 {
            return Err(Error::InvalidArg("operand dimension must be positive".into()));
        }
        let padded = original_dim.next_power_of_two();
        if signs.len() != padded {
            return Err(Error::Dimension(format!(
                "expected {padded} signs, got {}",
                signs.len()
            )));
        }
        if signs.iter().any(|&s| s != 1.0 && s != -1.0) {
            return Err(Error::InvalidArg("signs must be exactly +1 or -1".into()));
        }
        Ok(Self {
            padded_dim: padded,
            original_dim,
            signs,
        })
    }

    pub fn padded_dim(&self) -> usize {
        self.padded_dim
    }

    pub fn original_dim(&self) -> usize {
        self.original_dim
    }

    pub fn signs(&self) -> &[f64] {
        &self.signs
    }

    /// (1/√p)·H·D·Ā for row-dimension operands: pads A with zero rows to p,
    /// flips row signs, then runs the row butterfly. Output has p rows.
    pub fn apply_left(&self, a: &DenseMatrix) -> Result<DenseMatrix> {
        if a.rows() != self.original_dim {
            return Err(Error::Dimension(format!(
                "apply_left: operator dimension {} vs {} rows",
                self.original_dim,
                a.rows()
            )));
        }
        let (p, n) = (self.padded_dim, a.cols());
        let mut out = DenseMatrix::zeros(p, n);
        for i in 0..a.rows() {
            let sign = self.signs[i];
            let src = a.row(i);
            let dst = &mut out.data_mut()[i * n..(i + 1) * n];
            for (d, s) in dst.iter_mut().zip(src) {
                *d = sign * s;
            }
        }
        fwht_rows(out.data_mut(), p, n);
        out.scale(1.0 / (p as f64).sqrt());
        Ok(out)
    }

    /// Vector form of `apply_left`: returns (1/√p)·H·D·v̄ of length p.
    pub fn apply_left_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.original_dim {
            return Err(Error::Dimension(format!(
                "apply_left_vec: operator dimension {} vs vector length {}",
                self.original_dim,
                v.len()
            )));
        }
        let p = self.padded_dim;
        let mut w = vec![0.0; p];
        for (wi, (vi, sign)) in w.iter_mut().zip(v.iter().zip(&self.signs)) {
            *wi = sign * vi;
        }
        fwht_inplace(&mut w)?;
        let scale = 1.0 / (p as f64).sqrt();
        for wi in &mut w {
            *wi *= scale;
        }
        Ok(w)
    }

    /// (1/√p)·Ā·D·H for column-dimension operands: pads A with zero columns
    /// to p, flips column signs, then transforms each row. Output has p
    /// columns.
    pub fn apply_right(&self, a: &DenseMatrix) -> Result<DenseMatrix> {
        if a.cols() != self.original_dim {
            return Err(Error::Dimension(format!(
                "apply_right: operator dimension {} vs {} cols",
                self.original_dim,
                a.cols()
            )));
        }
        let (m, p) = (a.rows(), self.padded_dim);
        let mut out = DenseMatrix::zeros(m, p);
        let scale = 1.0 / (p as f64).sqrt();
        for i in 0..m {
            let src = a.row(i);
            let dst = &mut out.data_mut()[i * p..(i + 1) * p];
            for ((d, s), sign) in dst.iter_mut().zip(src).zip(&self.signs) {
                *d = sign * s;
            }
            fwht_inplace(dst).expect("padded dim is a power of two");
            for d in dst.iter_mut() {
                *d *= scale;
            }
        }
        Ok(out)
    }

    /// (1/√p)·D·H·z truncated to the original dimension. This inverts the
    /// coordinate change of `apply_right`, mapping a solution of the mixed
    /// system back to the caller's coordinates.
    pub fn pull_back_solution(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.padded_dim {
            return Err(Error::Dimension(format!(
                "pull_back: padded dimension {} vs vector length {}",
                self.padded_dim,
                z.len()
            )));
        }
        let mut w = z.to_vec();
        fwht_inplace(&mut w)?;
        let scale = 1.0 / (self.padded_dim as f64).sqrt();
        for (wi, sign) in w.iter_mut().zip(&self.signs) {
            *wi *= sign * scale;
        }
        w.truncate(self.original_dim);
        Ok(w)
    }

    /// Dense p×p matrix of Q = (1/√p)·H·D; test and oracle use only.
    pub fn materialize(&self) -> DenseMatrix {
        let p = self.padded_dim;
        let scale = 1.0 / (p as f64).sqrt();
        DenseMatrix::from_fn(p, p, |i, j| {
            let parity = (i & j).count_ones() & 1;
            let h = if parity == 0 { 1.0 } else { -1.0 };
            scale * h * self.signs[j]
        })
    }
}

/// In-place unnormalized Walsh–Hadamard transform, v ← H·v, by the
/// standard butterfly in p·log₂p multiply-adds.
pub fn fwht_inplace(v: &mut [f64]) -> Result<()> {
    let p = v.len();
    if !p.is_power_of_two() {
        return Err(Error::InvalidArg(format!(
            "transform length must be a power of two, got {p}"
        )));
    }
    let mut half = 1;
    while half < p {
        let mut start = 0;
        while start < p {
            for i in start..start + half {
                let (a, b) = (v[i], v[i + half]);
                v[i] = a + b;
                v[i + half] = a - b;
            }
            start += 2 * half;
        }
        half *= 2;
    }
    Ok(())
}

/// Row-wise butterfly over a p×n row-major buffer: every column gets H
/// applied at once, keeping the inner loop contiguous.
fn fwht_rows(data: &mut [f64], p: usize, n: usize) {
    debug_assert!(p.is_power_of_two());
    debug_assert_eq!(data.len(), p * n);
    let mut half = 1;
    while half < p {
        let mut start = 0;
        while start < p {
            for i in start..start + half {
                let (top, bottom) = data.split_at_mut((i + half) * n);
                let rowa = &mut top[i * n..(i + 1) * n];
                let rowb = &mut bottom[..n];
                for (a, b) in rowa.iter_mut().zip(rowb.iter_mut()) {
                    let (x, y) = (*a, *b);
                    *a = x + y;
                    *b = x - y;
                }
            }
            start += 2 * half;
        }
        half *= 2;
    }
}
