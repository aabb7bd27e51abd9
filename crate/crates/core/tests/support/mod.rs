//! Shared helpers for the integration suites, most importantly a
//! derivative-free brute-force minimizer used as an independent oracle for
//! the descent implementation. It never touches the analytic gradient.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tmcf::grid::{Grid, ScalarBc, ScalarField};
use tmcf::variational::eval_j;

/// Orthonormal basis of the zero-mean subspace: all nonconstant cosine
/// modes, normalized in the cell inner product.
pub fn zero_mean_basis(grid: Grid) -> Vec<Vec<f64>> {
    let mut basis = Vec::new();
    for jy in 0..grid.ny {
        for jx in 0..grid.nx {
            if jx == 0 && jy == 0 {
                continue;
            }
            let f = ScalarField::from_fn(grid, ScalarBc::Neumann, |x, y| {
                (jx as f64 * std::f64::consts::PI * x / grid.lx).cos()
                    * (jy as f64 * std::f64::consts::PI * y / grid.ly).cos()
            });
            let norm = (f.values.iter().map(|v| v * v).sum::<f64>()).sqrt();
            basis.push(f.values.iter().map(|v| v / norm).collect());
        }
    }
    basis
}

pub fn field_from_coords(grid: Grid, basis: &[Vec<f64>], x: &[f64]) -> ScalarField {
    let mut values = vec![0.0; grid.n_cells()];
    for (c, b) in x.iter().zip(basis.iter()) {
        for (v, bv) in values.iter_mut().zip(b.iter()) {
            *v += c * bv;
        }
    }
    ScalarField::from_values(grid, values, ScalarBc::Neumann).unwrap()
}

/// Plain Nelder-Mead on `dim` coordinates. Returns (argmin, min).
pub fn nelder_mead(
    f: &dyn Fn(&[f64]) -> f64,
    x0: &[f64],
    scale: f64,
    max_iter: usize,
) -> (Vec<f64>, f64) {
    let dim = x0.len();
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
    simplex.push(x0.to_vec());
    for k in 0..dim {
        let mut v = x0.to_vec();
        v[k] += scale;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();

    for _ in 0..max_iter {
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
        let best = order[0];
        let worst = order[dim];
        let second_worst = order[dim - 1];
        if (values[worst] - values[best]).abs() <= 1e-14 * (1.0 + values[best].abs()) {
            break;
        }
        // Centroid of all but the worst.
        let mut centroid = vec![0.0; dim];
        for &idx in order[..dim].iter() {
            for (c, v) in centroid.iter_mut().zip(simplex[idx].iter()) {
                *c += v / dim as f64;
            }
        }
        let lerp = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> {
            a.iter()
                .zip(b.iter())
                .map(|(x, y)| x + t * (y - x))
                .collect()
        };
        let reflected = lerp(&centroid, &simplex[worst], -alpha);
        let fr = f(&reflected);
        if fr < values[order[0]] {
            let expanded = lerp(&centroid, &simplex[worst], -alpha * gamma);
            let fe = f(&expanded);
            if fe < fr {
                simplex[worst] = expanded;
                values[worst] = fe;
            } else {
                simplex[worst] = reflected;
                values[worst] = fr;
            }
        } else if fr < values[second_worst] {
            simplex[worst] = reflected;
            values[worst] = fr;
        } else {
            let contracted = lerp(&centroid, &simplex[worst], rho);
            let fc = f(&contracted);
            if fc < values[worst] {
                simplex[worst] = contracted;
                values[worst] = fc;
            } else {
                let best_point = simplex[best].clone();
                for idx in 0..=dim {
                    if idx != best {
                        simplex[idx] = lerp(&best_point, &simplex[idx], sigma);
                        values[idx] = f(&simplex[idx]);
                    }
                }
            }
        }
    }
    let k = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap()
        .0;
    (simplex[k].clone(), values[k])
}

/// Multistart restarted Nelder-Mead over the zero-mean subspace; the
/// brute-force reference for the descent minimizer.
pub fn brute_force_min_j(grid: Grid, beta: f64, restarts: usize, seed: u64) -> f64 {
    let basis = zero_mean_basis(grid);
    let dim = basis.len();
    let objective = |x: &[f64]| -> f64 { eval_j(beta, &field_from_coords(grid, &basis, x)) };
    let mut best = objective(&vec![0.0; dim]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..restarts {
        let x0: Vec<f64> = (0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let (mut x, mut v) = nelder_mead(&objective, &x0, 1.0, 4000);
        // Polish with fresh, shrinking simplexes around the found point.
        for scale in [1e-1, 1e-2, 1e-3] {
            let (x2, v2) = nelder_mead(&objective, &x, scale, 2000);
            if v2 < v {
                x = x2;
                v = v2;
            }
        }
        if v < best {
            best = v;
        }
    }
    best
}
