//! Cross-check the bisection estimator against a dense derivative-free
//! sweep on a tiny grid, where brute force is affordable.

mod support;

use tmcf::grid::Grid;
use tmcf::variational::{estimate_beta0, Beta0Opts, MinimizeOpts};

#[test]
fn bisection_agrees_with_dense_oracle_sweep() {
    let grid = Grid::new(4, 4, 1.0, 1.0).unwrap();
    let tol_zero = 1e-8;

    // Oracle: classify 20 weights across the search range by restarted
    // Nelder-Mead, recording the transition interval.
    let lo_end = 0.3;
    let hi_end = 2.0 * std::f64::consts::PI;
    let betas: Vec<f64> = (0..20)
        .map(|k| lo_end + (hi_end - lo_end) * k as f64 / 19.0)
        .collect();
    let mut last_zero = None;
    let mut first_negative = None;
    let mut minima = Vec::new();
    for &beta in &betas {
        let j_min = support::brute_force_min_j(grid, beta, 12, 999);
        minima.push(j_min);
        if j_min >= -tol_zero {
            if first_negative.is_none() {
                last_zero = Some(beta);
            }
        } else if first_negative.is_none() {
            first_negative = Some(beta);
        }
    }
    // Best values are nonincreasing in the weight, up to oracle noise.
    for w in minima.windows(2) {
        assert!(w[1] <= w[0] + 1e-6, "oracle sweep not monotone: {minima:?}");
    }
    let oracle_lo = last_zero.expect("some weight must collapse");
    let oracle_hi = first_negative.expect("some weight must go negative");
    println!("oracle transition within [{oracle_lo:.3}, {oracle_hi:.3}]");

    let opts = Beta0Opts {
        multistarts: 6,
        tol_zero,
        bisect_steps: 8,
        minimize: MinimizeOpts {
            max_iter: 3000,
            tol: 1e-10,
            ..Default::default()
        },
        ..Default::default()
    };
    let estimate = estimate_beta0(grid, &opts, 77).unwrap();
    println!(
        "bisection: beta0_hat {:.4} bracket [{:.4}, {:.4}]",
        estimate.beta0_hat, estimate.bracket.0, estimate.bracket.1
    );
    assert!(!estimate.no_negative_bracket);
    assert!(estimate.bracket.0 <= estimate.beta0_hat && estimate.beta0_hat <= estimate.bracket.1);
    // The sweep samples every ~0.31 in beta; the bisected value must land
    // inside the oracle's transition interval.
    assert!(
        estimate.beta0_hat >= oracle_lo - 1e-9 && estimate.beta0_hat <= oracle_hi + 1e-9,
        "beta0_hat {} outside oracle interval [{}, {}]",
        estimate.beta0_hat,
        oracle_lo,
        oracle_hi
    );

    // Recorded samples are nonincreasing in beta per start family: check
    // the per-beta best across the estimate's own records.
    let mut by_beta: Vec<(f64, f64)> = Vec::new();
    for s in &estimate.per_beta {
        match by_beta.last_mut() {
            Some((b, best)) if *b == s.beta => *best = best.min(s.j_min),
            _ => by_beta.push((s.beta, s.j_min)),
        }
    }
    by_beta.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    for w in by_beta.windows(2) {
        assert!(
            w[1].1 <= w[0].1 + 1e-8,
            "per-weight minima not monotone: {by_beta:?}"
        );
    }
}
