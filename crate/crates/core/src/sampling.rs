//! Index-subset samplers: the cheap uniform coupon sampler used on the
//! solver hot path, exact determinantal samplers used for verification and
//! for PSD block selection, and the down-up Markov chain that keeps
//! determinantal sampling affordable when fresh exact samples per
//! iteration would dominate the solve.

use std::collections::HashMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::esp::esp_all;
use crate::linalg::{axpy, dot, norm2, sym_eig, DenseMatrix};

/// Strictly increasing 0-based indices drawn from a universe of size m.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SampleSet {
    indices: Vec<usize>,
    universe: usize,
}

impl SampleSet {
    /// Sorts the given indices; rejects duplicates, out-of-range entries,
    /// and the empty set.
    pub fn new(mut indices: Vec<usize>, universe: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidArg("sample set must be nonempty".into()));
        }
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArg("duplicate index in sample set".into()));
        }
        if *indices.last().expect("nonempty") >= universe {
            return Err(Error::InvalidArg(format!(
                "index {} outside universe {universe}",
                indices.last().expect("nonempty")
            )));
        }
        Ok(Self { indices, universe })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn universe(&self) -> usize {
        self.universe
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }
}

/// Symmetric PSD kernel with its eigendecomposition cached at
/// construction. Symmetry is accepted to 1e-10 relative, eigenvalues to
/// −1e-10·λ_max; negative roundoff eigenvalues are clamped to zero.
#[derive(Debug, Clone)]
pub struct DppKernel {
    l: DenseMatrix,
    eigvals: Vec<f64>,
    eigvecs: DenseMatrix,
}

impl DppKernel {
    pub fn new(l: DenseMatrix) -> Result<Self> {
        let (raw, eigvecs) = sym_eig(&l, 1e-10)?;
        let lambda_max = raw.first().copied().unwrap_or(0.0).max(0.0);
        if let Some(&min) = raw.last() {
            if min < -1e-10 * lambda_max.max(f64::MIN_POSITIVE) {
                return Err(Error::NotPsd(min));
            }
        }
        let eigvals = raw.into_iter().map(|l| l.max(0.0)).collect();
        Ok(Self { l, eigvals, eigvecs })
    }

    /// Kernel L = F·Fᵀ held through its factor.
    pub fn from_factor(f: &DenseMatrix) -> Result<Self> {
        Self::new(f.matmul(&f.transpose())?)
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.l
    }

    /// Eigenvalues, largest first, clamped to be nonnegative.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigvals
    }

    /// Count of eigenvalues above the relative rank cutoff.
    pub fn rank(&self) -> usize {
        let lmax = self.eigvals.first().copied().unwrap_or(0.0);
        self.eigvals.iter().filter(|&&l| l > 1e-12 * lmax).count()
    }

    /// det(L_{S,S}) by partial-pivot LU on the gathered block.
    pub fn principal_minor(&self, idx: &[usize]) -> Result<f64> {
        for &i in idx {
            if i >= self.dim() {
                return Err(Error::InvalidArg(format!("index {i} outside kernel of size {}", self.dim())));
            }
        }
        Ok(det_gathered(&self.l, idx))
    }
}

fn det_gathered(l: &DenseMatrix, idx: &[usize]) -> f64 {
    let t = idx.len();
    if t == 0 {
        return 1.0;
    }
    let mut a: Vec<f64> = Vec::with_capacity(t * t);
    for &i in idx {
        for &j in idx {
            a.push(l.get(i, j));
        }
    }
    let mut det = 1.0;
    for col in 0..t {
        let pivot = (col..t)
            .max_by(|&p, &q| {
                a[p * t + col].abs().partial_cmp(&a[q * t + col].abs()).expect("finite")
            })
            .expect("nonempty range");
        let pval = a[pivot * t + col];
        if pval == 0.0 {
            return 0.0;
        }
        if pivot != col {
            for j in 0..t {
                a.swap(col * t + j, pivot * t + j);
            }
            det = -det;
        }
        det *= a[col * t + col];
        for row in col + 1..t {
            let f = a[row * t + col] / a[col * t + col];
            if f != 0.0 {
                for j in col..t {
                    a[row * t + j] -= f * a[col * t + j];
                }
            }
        }
    }
    det
}

/// Distinct values among `tau` i.i.d. uniform draws from [0, m).
///
/// This is the solver-path sampler: with high probability its output
/// contains a determinantal sample as a subset, which is what the
/// convergence analysis needs, at O(τ) cost and no linear algebra.
pub fn uniform_coupon_sample(m: usize, tau: usize, rng: &mut impl Rng) -> Result<SampleSet> {
    if m == 0 || tau == 0 {
        return Err(Error::InvalidArg(format!("need m >= 1 and tau >= 1, got m={m}, tau={tau}")));
    }
    let mut draws: Vec<usize> = (0..tau).map(|_| rng.gen_range(0..m)).collect();
    draws.sort_unstable();
    draws.dedup();
    SampleSet::new(draws, m)
}

/// Number of uniform draws needed until `t` distinct indices of [0, m)
/// have appeared.
pub fn coupon_calls_until(m: usize, t: usize, rng: &mut impl Rng) -> Result<u64> {
    if t == 0 || t > m {
        return Err(Error::InvalidArg(format!("need 1 <= t <= m, got t={t}, m={m}")));
    }
    let mut seen = vec![false; m];
    let mut distinct = 0usize;
    let mut calls = 0u64;
    while distinct < t {
        let i = rng.gen_range(0..m);
        calls += 1;
        if !seen[i] {
            seen[i] = true;
            distinct += 1;
        }
    }
    Ok(calls)
}

/// Exact distribution of the set produced by [`uniform_coupon_sample`]:
/// Pr{U} = Σ_{V ⊆ U} (−1)^{|U|−|V|} (|V|/m)^τ by inclusion-exclusion over
/// the event that all τ draws land inside V.
///
/// Enumeration is guarded to m ≤ 16. Sets larger than τ cannot occur and are
/// omitted, as are sets whose probability cancels to zero.
pub fn coupon_set_pmf(m: usize, tau: usize) -> Result<HashMap<SampleSet, f64>> {
    if m == 0 || tau == 0 {
        return Err(Error::InvalidArg(format!("need m >= 1 and tau >= 1, got m={m}, tau={tau}")));
    }
    if m > 16 {
        return Err(Error::InvalidArg(format!("pmf enumeration is guarded to m <= 16, got {m}")));
    }
    // (j/m)^τ reused across all subsets of size j.
    let pow: Vec<f64> = (0..=m).map(|j| (j as f64 / m as f64).powi(tau as i32)).collect();
    let mut pmf = HashMap::new();
    for mask in 1u32..(1u32 << m) {
        let size = mask.count_ones() as usize;
        if size > tau {
            continue;
        }
        let mut prob = 0.0;
        let mut sub = mask;
        loop {
            let s = sub.count_ones() as usize;
            let sign = if (size - s) % 2 == 0 { 1.0 } else { -1.0 };
            prob += sign * pow[s];
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & mask;
        }
        if prob > 0.0 {
            let idx: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
            pmf.insert(SampleSet::new(idx, m)?, prob);
        }
    }
    Ok(pmf)
}

/// Exact size-k determinantal pmf by enumeration: Pr{S} = det(L_{S,S}) / σ_k(λ).
/// Only sets with positive probability appear in the map.
pub fn kdpp_pmf_bruteforce(kernel: &DppKernel, k: usize) -> Result<HashMap<SampleSet, f64>> {
    let m = kernel.dim();
    if m > 16 {
        return Err(Error::InvalidArg(format!("pmf enumeration is guarded to m <= 16, got {m}")));
    }
    if k == 0 || k > m {
        return Err(Error::InvalidArg(format!("need 1 <= k <= {m}, got k={k}")));
    }
    if k > kernel.rank() {
        return Err(Error::KAboveRankSupport);
    }
    let sigma_k = esp_all(kernel.eigenvalues())?.value(k);
    if !(sigma_k > 0.0) {
        return Err(Error::KAboveRankSupport);
    }
    let mut pmf = HashMap::new();
    let mut idx = Vec::with_capacity(k);
    for mask in 0u32..(1u32 << m) {
        if mask.count_ones() as usize != k {
            continue;
        }
        idx.clear();
        idx.extend((0..m).filter(|i| mask & (1 << i) != 0));
        let det = det_gathered(&kernel.l, &idx).max(0.0);
        if det > 0.0 {
            pmf.insert(SampleSet::new(idx.clone(), m)?, det / sigma_k);
        }
    }
    Ok(pmf)
}

/// Exact marginals Pr{j ∈ S} of the size-k determinantal measure, summed
/// from the brute-force pmf.
pub fn kdpp_marginals_exact(kernel: &DppKernel, k: usize) -> Result<Vec<f64>> {
    let pmf = kdpp_pmf_bruteforce(kernel, k)?;
    let mut marginals = vec![0.0; kernel.dim()];
    for (set, p) in &pmf {
        for &i in set.indices() {
            marginals[i] += p;
        }
    }
    Ok(marginals)
}

const REJECTION_CAP: u64 = 1_000_000;

/// Exact size-k determinantal sample.
///
/// Mixture form: draw γ_i ~ Bernoulli(λ_i/(1+λ_i)) until Σγ = k (rejection
/// capped), then sample the projection determinantal measure spanned by the
/// selected eigenvectors via sequential conditionals.
pub fn exact_kdpp_sample(kernel: &DppKernel, k: usize, rng: &mut impl Rng) -> Result<SampleSet> {
    let m = kernel.dim();
    if k == 0 || k > m {
        return Err(Error::InvalidArg(format!("need 1 <= k <= {m}, got k={k}")));
    }
    if k > kernel.rank() {
        return Err(Error::KAboveRankSupport);
    }
    let probs: Vec<f64> = kernel.eigenvalues().iter().map(|&l| l / (1.0 + l)).collect();
    let mut selected = Vec::with_capacity(k);
    let mut accepted = false;
    for _ in 0..REJECTION_CAP {
        selected.clear();
        for (i, &p) in probs.iter().enumerate() {
            if rng.gen::<f64>() < p {
                selected.push(i);
            }
        }
        if selected.len() == k {
            accepted = true;
            break;
        }
    }
    if !accepted {
        return Err(Error::RejectionCap(REJECTION_CAP));
    }
    let chosen = projection_dpp_sample(&kernel.eigvecs, &selected, rng)?;
    SampleSet::new(chosen, m)
}

/// Sequential-conditional sampler for a projection determinantal measure:
/// at each step draw an index from the squared row norms of the current
/// orthonormal basis, then restrict the basis to the complement of that
/// coordinate and re-orthonormalize.
fn projection_dpp_sample(
    eigvecs: &DenseMatrix,
    selected: &[usize],
    rng: &mut impl Rng,
) -> Result<Vec<usize>> {
    let m = eigvecs.rows();
    let mut cols: Vec<Vec<f64>> = selected.iter().map(|&c| eigvecs.col(c)).collect();
    let k = cols.len();
    let mut chosen = Vec::with_capacity(k);
    let mut weights = vec![0.0; m];
    for _ in 0..k {
        for (j, w) in weights.iter_mut().enumerate() {
            *w = cols.iter().map(|c| c[j] * c[j]).sum();
        }
        let j = sample_discrete(&weights, rng)?;
        chosen.push(j);
        // Eliminate coordinate j from the span using the column with the
        // largest weight there, then restore orthonormality.
        let pivot = (0..cols.len())
            .max_by(|&p, &q| cols[p][j].abs().partial_cmp(&cols[q][j].abs()).expect("finite"))
            .expect("nonempty basis");
        let pcol = cols.swap_remove(pivot);
        let pj = pcol[j];
        if pj == 0.0 {
            return Err(Error::InvalidArg("projection sampler drew a zero-mass coordinate".into()));
        }
        for col in &mut cols {
            let f = col[j] / pj;
            if f != 0.0 {
                axpy(-f, &pcol, col);
            }
            col[j] = 0.0;
        }
        orthonormalize(&mut cols)?;
    }
    Ok(chosen)
}

/// Modified Gram–Schmidt in place; errors if the set loses rank.
fn orthonormalize(cols: &mut [Vec<f64>]) -> Result<()> {
    for c in 0..cols.len() {
        let (done, rest) = cols.split_at_mut(c);
        let cur = &mut rest[0];
        for prev in done.iter() {
            let d = dot(cur, prev);
            if d != 0.0 {
                axpy(-d, prev, cur);
            }
        }
        let nrm = norm2(cur);
        if nrm < 1e-10 {
            return Err(Error::InvalidArg("projection basis lost rank during elimination".into()));
        }
        for x in cur.iter_mut() {
            *x /= nrm;
        }
    }
    Ok(())
}

fn sample_discrete(weights: &[f64], rng: &mut impl Rng) -> Result<usize> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::InvalidArg(format!("discrete sampler got total weight {total}")));
    }
    let target = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = None;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = Some(i);
            if target < acc {
                return Ok(i);
            }
        }
    }
    last_positive.ok_or_else(|| Error::InvalidArg("no positive weight".into()))
}

/// Warm-startable down-up chain on size-k subsets: lift the state to a
/// uniform t-superset, then resample a k-subset of it with probability
/// proportional to the principal minor. Stationary at the size-k
/// determinantal measure.
#[derive(Debug, Clone)]
pub struct DownUpWalk {
    k: usize,
    t: usize,
    state: SampleSet,
}

impl DownUpWalk {
    /// Greedy maximum-volume initialization (pivoted-Cholesky order),
    /// guaranteeing positive initial mass.
    pub fn new(kernel: &DppKernel, k: usize, t: usize) -> Result<Self> {
        let m = kernel.dim();
        if !(k >= 1 && k <= t && t <= m) {
            return Err(Error::InvalidArg(format!("need 1 <= k <= t <= m, got k={k}, t={t}, m={m}")));
        }
        let state = greedy_volume_init(kernel, k)?;
        Ok(Self { k, t, state })
    }

    pub fn state(&self) -> &SampleSet {
        &self.state
    }

    pub fn step(&mut self, kernel: &DppKernel, rng: &mut impl Rng) -> Result<()> {
        let m = kernel.dim();
        let need = self.t - self.k;
        let mut t_set: Vec<usize> = self.state.indices().to_vec();
        if need > 0 {
            let mut in_state = vec![false; m];
            for &i in self.state.indices() {
                in_state[i] = true;
            }
            let mut comp: Vec<usize> = (0..m).filter(|&i| !in_state[i]).collect();
            for i in 0..need {
                let j = rng.gen_range(i..comp.len());
                comp.swap(i, j);
            }
            t_set.extend_from_slice(&comp[..need]);
            t_set.sort_unstable();
        }
        let local = conditional_kdpp_on_restriction(kernel, &t_set, self.k, rng)?;
        let global: Vec<usize> = local.into_iter().map(|li| t_set[li]).collect();
        self.state = SampleSet::new(global, m)?;
        Ok(())
    }

    pub fn steps(&mut self, kernel: &DppKernel, n: usize, rng: &mut impl Rng) -> Result<()> {
        for _ in 0..n {
            self.step(kernel, rng)?;
        }
        Ok(())
    }
}

/// Runs a fresh greedy-initialized chain for `n_steps` and returns the
/// final state.
pub fn downup_walk(
    kernel: &DppKernel,
    k: usize,
    t: usize,
    n_steps: usize,
    rng: &mut impl Rng,
) -> Result<SampleSet> {
    let mut walk = DownUpWalk::new(kernel, k, t)?;
    walk.steps(kernel, n_steps, rng)?;
    Ok(walk.state().clone())
}

/// Pivoted-Cholesky greedy: repeatedly take the index with the largest
/// conditional variance. Scans all m candidates for each of the k picks,
/// erroring once no candidate has positive mass left.
fn greedy_volume_init(kernel: &DppKernel, k: usize) -> Result<SampleSet> {
    let m = kernel.dim();
    let l = &kernel.l;
    let mut cond_var: Vec<f64> = (0..m).map(|i| l.get(i, i)).collect();
    let scale = cond_var.iter().cloned().fold(0.0f64, f64::max);
    let cutoff = 1e-12 * scale.max(f64::MIN_POSITIVE);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k); // conditioning vectors
    let mut chosen = Vec::with_capacity(k);
    for _ in 0..k {
        let best = (0..m)
            .filter(|i| !chosen.contains(i))
            .max_by(|&p, &q| cond_var[p].partial_cmp(&cond_var[q]).expect("finite"))
            .ok_or(Error::KernelRankBelowK)?;
        if cond_var[best] <= cutoff {
            return Err(Error::KernelRankBelowK);
        }
        // New conditioning vector c = (L_{:,best} − Σ v·v[best]) / √d.
        let d = cond_var[best];
        let mut c = l.col(best);
        for v in &basis {
            let f = v[best];
            if f != 0.0 {
                axpy(-f, v, &mut c);
            }
        }
        let droot = d.sqrt();
        for x in &mut c {
            *x /= droot;
        }
        for (i, cv) in cond_var.iter_mut().enumerate() {
            *cv -= c[i] * c[i];
        }
        basis.push(c);
        chosen.push(best);
    }
    SampleSet::new(chosen, m)
}

/// Max subset count for which the walk's downsample enumerates the
/// conditional pmf directly instead of eigendecomposing the restriction.
const ENUM_SUBSET_CAP: u128 = 1024;

fn binomial(t: usize, k: usize) -> u128 {
    let k = k.min(t - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((t - i) as u128) / (i as u128 + 1);
        if acc > ENUM_SUBSET_CAP {
            return acc;
        }
    }
    acc
}

/// Size-k determinantal sample restricted to the index set `t_set`,
/// returned in local coordinates. Enumerates the conditional pmf when the
/// subset count is small; otherwise eigendecomposes the restriction and
/// reuses the exact sampler. Both paths are exact.
fn conditional_kdpp_on_restriction(
    kernel: &DppKernel,
    t_set: &[usize],
    k: usize,
    rng: &mut impl Rng,
) -> Result<Vec<usize>> {
    let t = t_set.len();
    if binomial(t, k) <= ENUM_SUBSET_CAP {
        let block = kernel.l.gather_rows(t_set)?.gather_cols(t_set)?;
        let mut subsets: Vec<Vec<usize>> = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        let mut idx: Vec<usize> = (0..k).collect();
        loop {
            subsets.push(idx.clone());
            weights.push(det_gathered(&block, &idx).max(0.0));
            if !next_combination(&mut idx, t) {
                break;
            }
        }
        let pick = sample_discrete(&weights, rng)?;
        Ok(subsets[pick].clone())
    } else {
        let block = kernel.l.gather_rows(t_set)?.gather_cols(t_set)?;
        let restricted = DppKernel::new(block)?;
        let local = exact_kdpp_sample(&restricted, k, rng)?;
        Ok(local.indices().to_vec())
    }
}

/// Advances `idx` to the next k-combination of [0, t) in lexicographic
/// order; false once the last combination has been visited.
fn next_combination(idx: &mut [usize], t: usize) -> bool {
    let k = idx.len();
    let mut pos = k;
    while pos > 0 {
        pos -= 1;
        if idx[pos] < t - (k - pos) {
            idx[pos] += 1;
            for later in pos + 1..k {
                idx[later] = idx[later - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Analytic multiply-add estimate of one walk step, matching the
/// enumeration/eigendecomposition split above. Exposed so solvers can
/// account for sampling work under the same flop conventions as the
/// numeric kernels.
pub fn walk_step_flop_estimate(t: usize, k: usize) -> u64 {
    let combos = binomial(t, k);
    if combos <= ENUM_SUBSET_CAP {
        // LU of a k×k block per subset: ~k³/3 multiply-adds.
        (combos as u64) * ((k * k * k) as u64 / 3).max(1)
    } else {
        crate::flops::sym_eig(t) + (t * t * k) as u64
    }
}
