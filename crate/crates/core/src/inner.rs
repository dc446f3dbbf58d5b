//! Per-iteration machinery shared by the outer solvers: sparse subspace
//! embeddings, the sketch-based block preconditioner, conjugate gradient on
//! the second-kind normal equations, and the approximate projection step.
//!
//! One outer iteration of a sketch-and-project solver gathers a block
//! `Atil` (tau x n), sketches it down to `phi` rows, whitens the block with
//! the inverted sketch spectrum, and runs a few CG steps on the
//! preconditioned system. Everything here is deterministic given the RNG
//! handle passed in.

use rand::Rng;

use crate::error::{Error, Result};
use crate::flops::{self, FlopCounter};
use crate::linalg::{sym_eig, DenseMatrix};

/// Default multiplier for the embedding row count phi.
pub const DEFAULT_C_PHI: f64 = 4.0;
/// Default multiplier for the per-column nonzero count s.
pub const DEFAULT_C_S: f64 = 2.0;

/// Relative cutoff below which sketch singular values are treated as zero.
/// The sketch spectrum is recovered through a Gram eigensolve, whose noise
/// floor sits near 1e-8 of the top singular value in f64; one decade above
/// that keeps noise directions out of the preconditioner.
const SKETCH_RANK_TOL: f64 = 1e-7;

/// Sparse subspace embedding: `phi` x `n` with exactly `s` nonzeros per
/// column, each +-1/sqrt(s), at distinct row positions. Stored column-wise;
/// never materialized during application.
#[derive(Debug, Clone)]
pub struct SparseEmbedding {
    phi: usize,
    n: usize,
    s: usize,
    /// Row indices, `s` per column, column-major.
    rows: Vec<u32>,
    /// Matching values (+-1/sqrt(s)), aligned with `rows`.
    values: Vec<f64>,
}

impl SparseEmbedding {
    /// Sizes the embedding for a `d`-dimensional subspace of R^`n` with
    /// distortion `eps` and failure budget `delta`, using the default
    /// constants.
    pub fn build<R: Rng>(n: usize, d: usize, eps: f64, delta: f64, rng: &mut R) -> Result<Self> {
        Self::build_with_constants(n, d, eps, delta, DEFAULT_C_PHI, DEFAULT_C_S, rng)
    }

    /// Same as [`SparseEmbedding::build`] with explicit sizing constants:
    /// phi = ceil(c_phi (d + ln(1/delta)) / eps^2) rows and
    /// s = ceil(c_s ln(d/delta) / eps) nonzeros per column.
    pub fn build_with_constants<R: Rng>(
        n: usize,
        d: usize,
        eps: f64,
        delta: f64,
        c_phi: f64,
        c_s: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::InvalidArg("embedding dimensions must be positive".into()));
        }
        if !(eps > 0.0 && eps <= 0.5) {
            return Err(Error::InvalidArg(format!(
                "embedding distortion must lie in (0, 1/2], got {eps}"
            )));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidArg(format!(
                "embedding failure budget must lie in (0, 1), got {delta}"
            )));
        }
        if !(c_phi > 0.0 && c_s > 0.0) {
            return Err(Error::InvalidArg("embedding constants must be positive".into()));
        }
        let phi = (c_phi * (d as f64 + (1.0 / delta).ln()) / (eps * eps)).ceil() as usize;
        let phi = phi.max(1);
        let s = (c_s * ((d as f64) / delta).ln() / eps).ceil() as usize;
        let s = s.clamp(1, phi);
        let scale = 1.0 / (s as f64).sqrt();
        let mut rows = Vec::with_capacity(n * s);
        let mut values = Vec::with_capacity(n * s);
        let mut scratch = Vec::with_capacity(s);
        for _ in 0..n {
            sample_distinct(phi, s, rng, &mut scratch);
            for &r in &scratch {
                rows.push(r as u32);
                values.push(if rng.gen::<bool>() { scale } else { -scale });
            }
        }
        Ok(Self { phi, n, s, rows, values })
    }

    /// Number of embedding rows phi.
    pub fn phi(&self) -> usize {
        self.phi
    }

    /// Input dimension n (columns of the embedding).
    pub fn input_dim(&self) -> usize {
        self.n
    }

    /// Nonzeros per column.
    pub fn nnz_per_col(&self) -> usize {
        self.s
    }

    /// Computes the sketch `Phi * a` for an `n x c` input. Cost is
    /// nnz(Phi) * c = n * s * c multiply-adds.
    pub fn apply(&self, a: &DenseMatrix) -> Result<DenseMatrix> {
        if a.rows() != self.n {
            return Err(Error::Dimension(format!(
                "embedding expects {} input rows, got {}",
                self.n,
                a.rows()
            )));
        }
        let c = a.cols();
        let mut out = DenseMatrix::zeros(self.phi, c);
        let out_data = out.data_mut();
        for col in 0..self.n {
            let src = a.row(col);
            let base = col * self.s;
            for j in 0..self.s {
                let r = self.rows[base + j] as usize;
                let v = self.values[base + j];
                let dst = &mut out_data[r * c..(r + 1) * c];
                for (d, &s) in dst.iter_mut().zip(src.iter()) {
                    *d += v * s;
                }
            }
        }
        Ok(out)
    }

    /// Dense form, for tests and tiny problems only.
    pub fn materialize(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.phi, self.n);
        for col in 0..self.n {
            let base = col * self.s;
            for j in 0..self.s {
                let r = self.rows[base + j] as usize;
                out.set(r, col, self.values[base + j]);
            }
        }
        out
    }
}

/// Draws `count` distinct values from `0..range` into `out`, sorted.
fn sample_distinct<R: Rng>(range: usize, count: usize, rng: &mut R, out: &mut Vec<usize>) {
    debug_assert!(count <= range);
    out.clear();
    if count * 2 >= range {
        // Dense case: partial Fisher-Yates over the full range.
        let mut pool: Vec<usize> = (0..range).collect();
        for i in 0..count {
            let j = rng.gen_range(i..range);
            pool.swap(i, j);
        }
        out.extend_from_slice(&pool[..count]);
    } else {
        // Sparse case: rejection with a linear duplicate scan (count is
        // small, so the scan is cheaper than hashing).
        while out.len() < count {
            let v = rng.gen_range(0..range);
            if !out.contains(&v) {
                out.push(v);
            }
        }
    }
    out.sort_unstable();
}

/// Whitening preconditioner for one sampled block: `M = V * diag(1/sigma)`
/// built from the sketch spectrum, shaped tau x rho where rho is the sketch
/// rank (rho < tau when the block is rank deficient).
#[derive(Debug, Clone)]
pub struct Preconditioner {
    m: DenseMatrix,
}

impl Preconditioner {
    /// The tau x rho matrix M.
    pub fn matrix(&self) -> &DenseMatrix {
        &self.m
    }

    /// Sketch rank rho (number of inverted singular values).
    pub fn rank(&self) -> usize {
        self.m.cols()
    }

    /// Builds M from an explicit sketch `Phi * Atil^T` (phi x tau). The
    /// spectrum is recovered from the Gram matrix of the sketch, which only
    /// needs the right singular vectors and singular values.
    pub fn from_sketch(sketch: &DenseMatrix) -> Result<Self> {
        let tau = sketch.cols();
        let gram = sketch.transpose().matmul(sketch)?;
        let (eigs, vecs) = sym_eig(&gram, 1e-8)?;
        let top = eigs.first().copied().unwrap_or(0.0).max(0.0).sqrt();
        if top == 0.0 {
            return Err(Error::SampledBlockZero);
        }
        let cutoff = SKETCH_RANK_TOL * top;
        let sigmas: Vec<f64> = eigs
            .iter()
            .map(|&l| l.max(0.0).sqrt())
            .take_while(|&s| s > cutoff)
            .collect();
        let rho = sigmas.len();
        if rho == 0 {
            return Err(Error::SampledBlockZero);
        }
        let mut m = DenseMatrix::zeros(tau, rho);
        for i in 0..tau {
            for (j, &s) in sigmas.iter().enumerate() {
                m.set(i, j, vecs.get(i, j) / s);
            }
        }
        Ok(Self { m })
    }
}

/// Sketches `atil` (tau x n, tau <= n) down to phi rows and inverts the
/// sketch spectrum. On embedding success every singular value of
/// `atil^T * M` lies in [1/(1+eps), 1+eps]. Flops are charged to `counter`:
/// the embedding application plus the factorization at the dense-SVD
/// convention for a phi x tau block.
pub fn build_preconditioner<R: Rng>(
    atil: &DenseMatrix,
    eps: f64,
    delta: f64,
    rng: &mut R,
    counter: &mut FlopCounter,
) -> Result<Preconditioner> {
    build_preconditioner_with_constants(atil, eps, delta, DEFAULT_C_PHI, DEFAULT_C_S, rng, counter)
}

/// [`build_preconditioner`] with explicit embedding constants.
pub fn build_preconditioner_with_constants<R: Rng>(
    atil: &DenseMatrix,
    eps: f64,
    delta: f64,
    c_phi: f64,
    c_s: f64,
    rng: &mut R,
    counter: &mut FlopCounter,
) -> Result<Preconditioner> {
    let (tau, n) = (atil.rows(), atil.cols());
    if tau > n {
        return Err(Error::Dimension(format!(
            "preconditioned block must be wide, got {tau} x {n}"
        )));
    }
    let embedding = SparseEmbedding::build_with_constants(n, tau, eps, delta, c_phi, c_s, rng)?;
    let sketch = embedding.apply(&atil.transpose())?;
    counter.add(flops::embed_apply(n, tau, embedding.nnz_per_col()));
    counter.add(flops::svd(embedding.phi(), tau));
    let pre = Preconditioner::from_sketch(&sketch)?;
    counter.add(flops::matvec(tau, pre.rank()));
    Ok(pre)
}

/// Matrix-shaped linear map accessed only through products with itself and
/// its transpose.
pub trait LinearOperator {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    /// out = B x, with x.len() == cols and out.len() == rows.
    fn apply(&self, x: &[f64], out: &mut [f64]);
    /// out = B^T y, with y.len() == rows and out.len() == cols.
    fn apply_transpose(&self, y: &[f64], out: &mut [f64]);
}

impl LinearOperator for DenseMatrix {
    fn rows(&self) -> usize {
        DenseMatrix::rows(self)
    }

    fn cols(&self) -> usize {
        DenseMatrix::cols(self)
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        self.matvec_into(x, out);
    }

    fn apply_transpose(&self, y: &[f64], out: &mut [f64]) {
        self.matvec_transpose_into(y, out);
    }
}

/// The preconditioned block `B = M^T * block` (rho x n), applied without
/// ever forming the product.
pub struct WhitenedBlock<'a> {
    block: &'a DenseMatrix,
    m: &'a DenseMatrix,
}

impl<'a> WhitenedBlock<'a> {
    /// `block` is tau x n, `pre` holds the tau x rho whitener.
    pub fn new(block: &'a DenseMatrix, pre: &'a Preconditioner) -> Self {
        debug_assert_eq!(block.rows(), pre.matrix().rows());
        Self { block, m: pre.matrix() }
    }
}

impl LinearOperator for WhitenedBlock<'_> {
    fn rows(&self) -> usize {
        self.m.cols()
    }

    fn cols(&self) -> usize {
        self.block.cols()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let mut tmp = vec![0.0; self.block.rows()];
        self.block.matvec_into(x, &mut tmp);
        self.m.matvec_transpose_into(&tmp, out);
    }

    fn apply_transpose(&self, y: &[f64], out: &mut [f64]) {
        let mut tmp = vec![0.0; self.m.rows()];
        self.m.matvec_into(y, &mut tmp);
        self.block.matvec_transpose_into(&tmp, out);
    }
}

/// Result of a CG run on the second-kind normal equations.
#[derive(Debug, Clone)]
pub struct CgOutcome {
    /// Final iterate u (length = operator rows).
    pub u: Vec<f64>,
    /// Iterations actually executed (early exit on exact convergence).
    pub iterations: usize,
    /// True when a search direction hit nonpositive curvature and the run
    /// stopped early with the current iterate.
    pub breakdown: bool,
}

/// Runs at most `s_max` CG iterations on `B B^T u = rhs` from u = 0, using
/// only products with B and B^T; `B B^T` is never formed. With
/// kappa = cond(B B^T), the iterates satisfy
/// `|u_s - u*|_{BB^T} <= 2 ((sqrt(kappa)-1)/(sqrt(kappa)+1))^s |u*|_{BB^T}`.
///
/// Operator products are not charged here; callers convert
/// [`CgOutcome::iterations`] into flops since only they know the operator's
/// internal structure.
pub fn cg_normal_second_kind(
    b: &impl LinearOperator,
    rhs: &[f64],
    s_max: usize,
) -> Result<CgOutcome> {
    let rows = b.rows();
    if rhs.len() != rows {
        return Err(Error::Dimension(format!(
            "rhs length {} does not match operator rows {rows}",
            rhs.len()
        )));
    }
    let mut u = vec![0.0; rows];
    let mut r = rhs.to_vec();
    let mut p = r.clone();
    let mut w = vec![0.0; rows];
    let mut bt_p = vec![0.0; b.cols()];
    let mut rho = dot(&r, &r);
    let rho0 = rho;
    if rho == 0.0 {
        return Ok(CgOutcome { u, iterations: 0, breakdown: false });
    }
    // Rayleigh quotient of BB^T along the first direction; used to scale the
    // curvature-breakdown test.
    let mut rayleigh0 = 0.0;
    let mut iterations = 0;
    let mut breakdown = false;
    for it in 0..s_max {
        b.apply_transpose(&p, &mut bt_p);
        b.apply(&bt_p, &mut w);
        let curvature = dot(&p, &w);
        let pp = dot(&p, &p);
        if it == 0 {
            rayleigh0 = curvature / pp;
        }
        // curvature = |B^T p|^2 >= 0 in exact arithmetic; a value at the
        // roundoff floor means p is numerically in the kernel of B^T.
        if curvature <= 1e-28 * rayleigh0 * pp || !curvature.is_finite() {
            breakdown = true;
            break;
        }
        let alpha = rho / curvature;
        for (ui, &pi) in u.iter_mut().zip(p.iter()) {
            *ui += alpha * pi;
        }
        for (ri, &wi) in r.iter_mut().zip(w.iter()) {
            *ri -= alpha * wi;
        }
        iterations = it + 1;
        let rho_new = dot(&r, &r);
        // Relative residual 1e-14 is finite-termination noise; stop there.
        if rho_new <= 1e-28 * rho0 {
            break;
        }
        let beta = rho_new / rho;
        rho = rho_new;
        for (pi, &ri) in p.iter_mut().zip(r.iter()) {
            *pi = ri + beta * *pi;
        }
    }
    Ok(CgOutcome { u, iterations, breakdown })
}

/// One approximate projection step onto the solution set of `Atil w = btil`.
#[derive(Debug, Clone)]
pub struct ProjectionStep {
    /// The step w (length n), approximating the minimum-norm solution
    /// Atil^+ btil.
    pub w: Vec<f64>,
    /// Inner CG iterations executed.
    pub cg_iterations: usize,
    /// Propagated CG curvature-breakdown flag.
    pub breakdown: bool,
}

/// Solves `(M^T Atil Atil^T M) u = M^T btil` by CG and returns
/// `w = Atil^T M u`, the approximate minimum-norm solution of
/// `Atil w = btil`. With kappa_tilde = cond(Atil^T M)^2 bounded by the
/// whitening band, `|w_s - w*| <= 2 ((kt-1)/(kt+1))^s |w*|` for w* the true
/// pseudoinverse solution. All matvec work is charged to `counter`.
pub fn approx_project_step(
    atil: &DenseMatrix,
    btil: &[f64],
    pre: &Preconditioner,
    s_max: usize,
    counter: &mut FlopCounter,
) -> Result<ProjectionStep> {
    let (tau, n) = (atil.rows(), atil.cols());
    if btil.len() != tau {
        return Err(Error::Dimension(format!(
            "btil length {} does not match block rows {tau}",
            btil.len()
        )));
    }
    let m = pre.matrix();
    if m.rows() != tau {
        return Err(Error::Dimension(format!(
            "preconditioner rows {} do not match block rows {tau}",
            m.rows()
        )));
    }
    let rho = pre.rank();
    let mut rhs = vec![0.0; rho];
    m.matvec_transpose_into(btil, &mut rhs);
    counter.add(flops::matvec(tau, rho));
    let op = WhitenedBlock::new(atil, pre);
    let cg = cg_normal_second_kind(&op, &rhs, s_max)?;
    counter.add((cg.iterations as u64).saturating_mul(2 * flops::matvec(tau, n) + 2 * flops::matvec(tau, rho)));
    let mut mu = vec![0.0; tau];
    m.matvec_into(&cg.u, &mut mu);
    let mut w = vec![0.0; n];
    atil.matvec_transpose_into(&mu, &mut w);
    counter.add(flops::matvec(tau, rho) + flops::matvec(tau, n));
    Ok(ProjectionStep { w, cg_iterations: cg.iterations, breakdown: cg.breakdown })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}
