//! Fast self-checks behind `stsv verify`: exact combinatorial identities,
//! guaranteed bounds, and statistical sanity checks on the samplers, each
//! small enough to run in seconds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use stsv_core::esp::{esp_all, expected_projection_exact, projection_lower_bound};
use stsv_core::flops::FlopCounter;
use stsv_core::inner::{build_preconditioner, cg_normal_second_kind};
use stsv_core::linalg::{compact_svd, lambda_min_plus, norm2, sym_eig, DEFAULT_RANK_TOL};
use stsv_core::sampling::{
    coupon_calls_until, downup_walk, exact_kdpp_sample, kdpp_pmf_bruteforce, DppKernel, SampleSet,
};
use stsv_core::solvers::solve_kaczmarz;
use stsv_core::{DenseMatrix, Result, SolverConfig, SpectralProfile};

use crate::gen::{gen_spiked, Consistency, ProblemSpec};

/// One named check with its measured evidence.
#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        CheckOutcome { name, passed, detail }
    }
}

/// Runs every check; failures never abort the sweep, and internal errors are
/// reported as failed checks rather than propagated.
pub fn run_all(seed: u64) -> Vec<CheckOutcome> {
    let checks: [(&'static str, fn(u64) -> Result<(bool, String)>); 9] = [
        ("esp-minor-identity", esp_minor_identity),
        ("projection-lower-bound", projection_bound_holds),
        ("nested-projection-monotone", nested_projections_monotone),
        ("exact-sampler-distribution", exact_sampler_distribution),
        ("walk-sampler-distribution", walk_sampler_distribution),
        ("preconditioner-conditioning", preconditioner_conditioning),
        ("inner-cg-contract", inner_cg_contract),
        ("coupon-call-bound", coupon_call_bound),
        ("end-to-end-recovery", end_to_end_recovery),
    ];
    checks
        .iter()
        .map(|&(name, f)| match f(seed) {
            Ok((passed, detail)) => CheckOutcome::new(name, passed, detail),
            Err(e) => CheckOutcome::new(name, false, format!("errored: {e}")),
        })
        .collect()
}

fn gaussian_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Every size-ℓ subset of indices of an m-element ground set, in
/// lexicographic order. Only used at m ≤ 8.
fn subsets(m: usize, ell: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(ell);
    fn rec(start: usize, m: usize, ell: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == ell {
            out.push(cur.clone());
            return;
        }
        for i in start..m {
            cur.push(i);
            rec(i + 1, m, ell, cur, out);
            cur.pop();
        }
    }
    rec(0, m, ell, &mut cur, &mut out);
    out
}

/// Σ over |S| = ℓ of det(L_SS) equals the degree-ℓ elementary symmetric
/// polynomial of the kernel eigenvalues, for every ℓ.
fn esp_minor_identity(seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x01);
    let m = 7;
    let f = gaussian_matrix(m, 4, &mut rng);
    let kernel = DppKernel::from_factor(&f)?;
    let table = esp_all(kernel.eigenvalues())?;
    let mut worst = 0.0f64;
    for ell in 0..=kernel.rank() {
        let total: f64 = subsets(m, ell)
            .iter()
            .map(|s| kernel.principal_minor(s))
            .sum::<Result<f64>>()?;
        let want = table.value(ell);
        let scale = want.abs().max(1.0);
        worst = worst.max((total - want).abs() / scale);
    }
    Ok((worst < 1e-8, format!("max relative mismatch {worst:.2e} (tolerance 1e-8)")))
}

/// λ⁺_min of the exact expected projection dominates the closed-form lower
/// bound for every admissible (head, sample-size) pair.
fn projection_bound_holds(seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x02);
    let mut worst_gap = f64::INFINITY;
    let mut checked = 0usize;
    for trial in 0..6 {
        let m = 4 + (trial % 3);
        let a = gaussian_matrix(m, m + 3, &mut rng);
        let svd = compact_svd(&a, DEFAULT_RANK_TOL)?;
        let profile = SpectralProfile::from_svd(&svd);
        let r = profile.rank();
        for k_prime in 1..r {
            let ep = expected_projection_exact(&a, k_prime)?;
            let lam = lambda_min_plus(&ep, 1e-10)?;
            for k in 0..k_prime {
                let bound = projection_lower_bound(&profile, k, k_prime)?;
                worst_gap = worst_gap.min(lam - bound);
                checked += 1;
            }
        }
    }
    Ok((
        worst_gap >= -1e-10,
        format!("{checked} (k, k') pairs, worst margin {worst_gap:.3e}"),
    ))
}

fn row_space_projector(block: &DenseMatrix) -> Result<DenseMatrix> {
    match compact_svd(block, DEFAULT_RANK_TOL) {
        Ok(svd) => svd.v.matmul(&svd.v.transpose()),
        Err(stsv_core::Error::ZeroMatrixSvd) => {
            Ok(DenseMatrix::zeros(block.cols(), block.cols()))
        }
        Err(e) => Err(e),
    }
}

/// Growing the sampled row set can only grow the projection: for S₁ ⊆ S₂
/// the difference P₂ − P₁ stays positive semidefinite.
fn nested_projections_monotone(seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x03);
    let m = 6;
    let a = gaussian_matrix(m, 9, &mut rng);
    let mut worst = f64::INFINITY;
    for _ in 0..50 {
        let mut idx: Vec<usize> = (0..m).collect();
        for i in (1..m).rev() {
            let j = rng.gen_range(0..=i);
            idx.swap(i, j);
        }
        let small = 1 + rng.gen_range(0..m - 1);
        let large = small + rng.gen_range(0..m - small) + 1;
        let mut s1: Vec<usize> = idx[..small].to_vec();
        let mut s2: Vec<usize> = idx[..large.min(m)].to_vec();
        s1.sort_unstable();
        s2.sort_unstable();
        let p1 = row_space_projector(&a.gather_rows(&s1)?)?;
        let p2 = row_space_projector(&a.gather_rows(&s2)?)?;
        let diff = DenseMatrix::from_fn(p1.rows(), p1.cols(), |i, j| p2.get(i, j) - p1.get(i, j));
        let (eigs, _) = sym_eig(&diff, 1e-9)?;
        worst = worst.min(eigs.last().copied().unwrap_or(0.0));
    }
    Ok((worst >= -1e-10, format!("50 nested pairs, most negative eigenvalue {worst:.3e}")))
}

fn total_variation(
    counts: &std::collections::HashMap<SampleSet, usize>,
    pmf: &std::collections::HashMap<SampleSet, f64>,
    draws: usize,
) -> f64 {
    let mut tv = 0.0;
    for (set, &p) in pmf {
        let freq = counts.get(set).copied().unwrap_or(0) as f64 / draws as f64;
        tv += (freq - p).abs();
    }
    // Mass observed outside the support counts fully.
    for (set, &c) in counts {
        if !pmf.contains_key(set) {
            tv += c as f64 / draws as f64;
        }
    }
    tv / 2.0
}

/// The exact sampler's empirical distribution matches the brute-force pmf.
fn exact_sampler_distribution(seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x04);
    let f = gaussian_matrix(6, 5, &mut rng);
    let kernel = DppKernel::from_factor(&f)?;
    let k = 2;
    let pmf = kdpp_pmf_bruteforce(&kernel, k)?;
    let draws = 20_000;
    let mut counts = std::collections::HashMap::new();
    for _ in 0..draws {
        let s = exact_kdpp_sample(&kernel, k, &mut rng)?;
        *counts.entry(s).or_insert(0usize) += 1;
    }
    let tv = total_variation(&counts, &pmf, draws);
    Ok((tv <= 0.03, format!("TV distance {tv:.4} over {draws} draws (limit 0.03)")))
}

/// A short down-up walk reaches the same distribution.
fn walk_sampler_distribution(seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x05);
    let f = gaussian_matrix(6, 5, &mut rng);
    let kernel = DppKernel::from_factor(&f)?;
    let k = 2;
    let pmf = kdpp_pmf_bruteforce(&kernel, k)?;
    let draws = 4_000;
    let mut counts = std::collections::HashMap::new();
    for _ in 0..draws {
        let s = downup_walk(&kernel, k, 2 * k, 40, &mut rng)?;
        *counts.entry(s).or_insert(0usize) += 1;
    }
    let tv = total_variation(&counts, &pmf, draws);
    Ok((tv <= 0.05, format!("TV distance {tv:.4} over {draws} chains (limit 0.05)")))
}

/// The sketch-based whitener keeps the preconditioned block's condition
/// number inside the embedding guarantee (1+ε)².
fn preconditioner_conditioning(seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x06);
    let eps = 0.5;
    let kappa_cap = (1.0 + eps) * (1.0 + eps);
    let trials = 10;
    let mut ok = 0;
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let atil = gaussian_matrix(20, 500, &mut rng);
        let mut counter = FlopCounter::new();
        let pre = build_preconditioner(&atil, eps, 0.01, &mut rng, &mut counter)?;
        let prod = atil.transpose().matmul(pre.matrix())?;
        let svd = compact_svd(&prod, DEFAULT_RANK_TOL)?;
        let kappa = svd.s[0] / svd.s[svd.s.len() - 1];
        worst = worst.max(kappa);
        if kappa <= kappa_cap {
            ok += 1;
        }
    }
    Ok((
        ok >= trials - 1,
        format!("{ok}/{trials} within κ ≤ {kappa_cap}, worst {worst:.3}"),
    ))
}

/// CG on `BBᵀu = rhs` obeys the classical energy-norm error contract
/// `‖u_s − u*‖ ≤ 2·ρ^s·‖u*‖` with ρ = (√κ − 1)/(√κ + 1), κ = cond(BBᵀ).
fn inner_cg_contract(seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x07);
    let n = 12;
    // Log-spaced diagonal, cond(B) = 10, so cond(BBᵀ) = 100 exactly.
    let diag: Vec<f64> = (0..n)
        .map(|i| 10f64.powf(i as f64 / (n - 1) as f64))
        .collect();
    let b = DenseMatrix::from_fn(n, n, |i, j| if i == j { diag[i] } else { 0.0 });
    let rhs: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let ustar: Vec<f64> = rhs.iter().zip(&diag).map(|(r, d)| r / (d * d)).collect();
    let energy = |v: &[f64]| -> f64 {
        v.iter().zip(&diag).map(|(vi, d)| (vi * d) * (vi * d)).sum::<f64>().sqrt()
    };
    let e0 = energy(&ustar);
    let rho: f64 = (10.0 - 1.0) / (10.0 + 1.0);
    let mut worst_ratio = 0.0f64;
    for s in 1..=30 {
        let out = cg_normal_second_kind(&b, &rhs, s)?;
        let diff: Vec<f64> = out.u.iter().zip(&ustar).map(|(u, v)| u - v).collect();
        let bound = 2.0 * rho.powi(s as i32) * e0;
        worst_ratio = worst_ratio.max(energy(&diff) / bound);
    }
    Ok((
        worst_ratio <= 1.0 + 1e-8,
        format!("worst error/bound ratio {worst_ratio:.4} over s = 1..30"),
    ))
}

/// Coupon collection: the number of uniform draws needed to see t distinct
/// indices stays below 4t + 4·ln(1/δ) with probability at least 1 − δ.
fn coupon_call_bound(seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x08);
    let (m, t, delta) = (500usize, 30usize, 0.01f64);
    let cap = 4.0 * t as f64 + 4.0 * (1.0 / delta).ln();
    let trials = 2_000;
    let mut ok = 0;
    for _ in 0..trials {
        if (coupon_calls_until(m, t, &mut rng)? as f64) <= cap {
            ok += 1;
        }
    }
    let freq = ok as f64 / trials as f64;
    Ok((freq >= 0.98, format!("{freq:.4} of {trials} trials within {cap:.1} calls")))
}

/// A planted spiked instance is recovered by the row-action solver.
fn end_to_end_recovery(seed: u64) -> Result<(bool, String)> {
    let spec = ProblemSpec {
        m: 48,
        n: 24,
        k: 3,
        head_cond: 100.0,
        tail_spread: 1.1,
        noise: 0.0,
        consistency: Consistency::Consistent,
        seed: seed ^ 0x09,
    };
    let (a, b, xstar) = gen_spiked(&spec)?;
    let cfg = SolverConfig { seed: seed ^ 0x0a, ..SolverConfig::default() };
    let report = solve_kaczmarz(&a, &b, &cfg)?;
    let diff: Vec<f64> = report.solution.iter().zip(&xstar).map(|(x, y)| x - y).collect();
    let rel = norm2(&diff) / norm2(&xstar).max(f64::MIN_POSITIVE);
    Ok((
        report.converged && rel <= 1e-3,
        format!("converged = {}, relative error {rel:.2e}", report.converged),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subset_enumeration_counts_match_binomials() {
        assert_eq!(subsets(6, 0).len(), 1);
        assert_eq!(subsets(6, 2).len(), 15);
        assert_eq!(subsets(6, 6).len(), 1);
    }

    #[test]
    fn all_checks_pass_on_the_default_seed() {
        let outcomes = run_all(0);
        assert_eq!(outcomes.len(), 9);
        for o in &outcomes {
            assert!(o.passed, "{} failed: {}", o.name, o.detail);
        }
    }
}
