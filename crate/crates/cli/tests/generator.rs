//! Generator invariants: the planted spectrum survives a measurement round
//! trip, and consistency of the right-hand side is exactly as requested.

use stsv_cli::{gen_spiked, spec_singular_values, Consistency, ProblemSpec};
use stsv_core::linalg::{compact_svd, norm2, tail_condition, DEFAULT_RANK_TOL};
use stsv_core::SpectralProfile;

fn spec(m: usize, n: usize, k: usize) -> ProblemSpec {
    ProblemSpec {
        m,
        n,
        k,
        head_cond: 1e3,
        tail_spread: 1.2,
        noise: 0.0,
        consistency: Consistency::Consistent,
        seed: 42,
    }
}

#[test]
fn measured_spectrum_matches_the_request() {
    let spec = spec(48, 32, 4);
    let requested = spec_singular_values(&spec).unwrap();
    let (a, _, _) = gen_spiked(&spec).unwrap();
    let svd = compact_svd(&a, DEFAULT_RANK_TOL).unwrap();
    assert_eq!(svd.s.len(), requested.len());
    let scale = requested[0];
    for (got, want) in svd.s.iter().zip(&requested) {
        assert!(
            (got - want).abs() <= 1e-8 * scale,
            "measured {got} vs requested {want}"
        );
    }
}

#[test]
fn flat_tail_request_measures_as_flat() {
    let spec = ProblemSpec { head_cond: 100.0, tail_spread: 1.0, ..spec(64, 64, 4) };
    let (a, _, _) = gen_spiked(&spec).unwrap();
    let svd = compact_svd(&a, DEFAULT_RANK_TOL).unwrap();
    let profile = SpectralProfile::from_svd(&svd);
    let kappa = tail_condition(&profile, 4).unwrap();
    assert!((kappa - 1.0).abs() <= 1e-8, "tail condition {kappa}");
}

#[test]
fn consistent_rhs_lies_in_the_range() {
    let (a, b, xstar) = gen_spiked(&spec(40, 24, 3)).unwrap();
    let ax = a.matvec(&xstar).unwrap();
    let gap: f64 = ax.iter().zip(&b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt();
    assert!(gap <= 1e-10 * norm2(&b), "residual at the planted solution: {gap}");
}

#[test]
fn inconsistent_rhs_keeps_the_planted_least_squares_minimizer() {
    let spec = ProblemSpec {
        consistency: Consistency::Inconsistent,
        noise: 0.5,
        ..spec(60, 20, 2)
    };
    let (a, b, xstar) = gen_spiked(&spec).unwrap();
    let ax = a.matvec(&xstar).unwrap();
    let resid: Vec<f64> = ax.iter().zip(&b).map(|(u, v)| u - v).collect();
    // The residual has the requested relative size and no row-space
    // component, so x* is still the exact minimizer.
    let rel = norm2(&resid) / norm2(&ax);
    assert!((rel - 0.5).abs() < 1e-10, "noise level came out {rel}");
    let grad = a.matvec_transpose(&resid).unwrap();
    assert!(
        norm2(&grad) <= 1e-10 * norm2(&ax),
        "normal-equation gradient at x*: {}",
        norm2(&grad)
    );
}

#[test]
fn infeasible_tail_spread_is_an_error() {
    let bad = ProblemSpec { tail_spread: 0.5, ..spec(16, 16, 2) };
    assert!(gen_spiked(&bad).is_err());
}

#[test]
fn zero_head_gives_a_pure_tail_spectrum() {
    let spec = ProblemSpec { k: 0, head_cond: 1.0, tail_spread: 1.5, ..spec(20, 20, 0) };
    let sigma = spec_singular_values(&spec).unwrap();
    assert_eq!(sigma.len(), 20);
    let mean_sq = sigma.iter().map(|s| s * s).sum::<f64>() / 20.0;
    assert!((mean_sq.sqrt() - 1.5).abs() < 1e-12);
}
