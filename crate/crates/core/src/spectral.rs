//! Direct solver for the Neumann Laplacian on a uniform rectangle.
//!
//! The mirrored-ghost five-point Laplacian is diagonalized exactly by the
//! cell-centered cosine basis `cos(k pi (i + 1/2) / n)` per direction, so
//! Poisson and backward-Euler Helmholtz problems reduce to one forward
//! transform, a pointwise eigenvalue divide and one inverse transform. No
//! iteration, no tolerance: residuals sit at round-off, which the mass and
//! divergence budgets of long runs depend on.

use crate::grid::{Grid, ScalarBc, ScalarField};

/// Orthonormal cosine basis for one direction, stored dense.
#[derive(Debug, Clone)]
struct CosineBasis {
    /// basis[k*n + i] = w_k * cos(k pi (i+1/2)/n), rows orthonormal.
    modes: Vec<f64>,
    /// Transposed copy for cache-friendly inverse passes.
    modes_t: Vec<f64>,
    /// Eigenvalues of the 1D mirrored-ghost Laplacian, lambda_k <= 0.
    eigen: Vec<f64>,
}

impl CosineBasis {
    fn new(n: usize, h: f64) -> Self {
        let mut modes = vec![0.0; n * n];
        let mut eigen = vec![0.0; n];
        for k in 0..n {
            let w = if k == 0 {
                (1.0 / n as f64).sqrt()
            } else {
                (2.0 / n as f64).sqrt()
            };
            let t = k as f64 * std::f64::consts::PI / n as f64;
            for i in 0..n {
                modes[k * n + i] = w * (t * (i as f64 + 0.5)).cos();
            }
            eigen[k] = (2.0 * t.cos() - 2.0) / (h * h);
        }
        let mut modes_t = vec![0.0; n * n];
        for k in 0..n {
            for i in 0..n {
                modes_t[i * n + k] = modes[k * n + i];
            }
        }
        CosineBasis {
            modes,
            modes_t,
            eigen,
        }
    }
}

/// Precomputed transforms for a fixed grid.
#[derive(Debug, Clone)]
pub struct NeumannSolver {
    grid: Grid,
    bx: CosineBasis,
    by: CosineBasis,
    scratch: Vec<f64>,
}

/// c[r*cols_b + j] = sum_k a[r*cols_a + k] * b[k*cols_b + j] with a row-major.
fn matmul(a: &[f64], rows_a: usize, cols_a: usize, b: &[f64], cols_b: usize, c: &mut [f64]) {
    debug_assert_eq!(a.len(), rows_a * cols_a);
    debug_assert_eq!(b.len(), cols_a * cols_b);
    debug_assert_eq!(c.len(), rows_a * cols_b);
    c.fill(0.0);
    for (r, crow) in c.chunks_exact_mut(cols_b).enumerate().take(rows_a) {
        let arow = &a[r * cols_a..(r + 1) * cols_a];
        for (&av, brow) in arow.iter().zip(b.chunks_exact(cols_b)) {
            for (cv, &bv) in crow.iter_mut().zip(brow.iter()) {
                *cv += av * bv;
            }
        }
    }
}

impl NeumannSolver {
    pub fn new(grid: Grid) -> Self {
        NeumannSolver {
            grid,
            bx: CosineBasis::new(grid.nx, grid.hx()),
            by: CosineBasis::new(grid.ny, grid.hy()),
            scratch: vec![0.0; 2 * grid.n_cells()],
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// Forward transform: coefficients hat[l*nx + k] of mode (k, l).
    /// Field values are row-major with x fastest, i.e. an ny-by-nx matrix.
    fn forward(&mut self, values: &[f64], hat: &mut [f64]) {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let (s1, s2) = self.scratch.split_at_mut(self.grid.n_cells());
        // s1 = values * modes_x^T: rows ny, cols nx -> x-mode index k.
        matmul(values, ny, nx, &self.bx.modes_t, nx, s1);
        // hat = modes_y * s1: y-mode index l rows.
        matmul(&self.by.modes, ny, ny, s1, nx, s2);
        hat.copy_from_slice(s2);
    }

    /// Inverse transform back to cell values.
    fn inverse(&mut self, hat: &[f64], values: &mut [f64]) {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let (s1, s2) = self.scratch.split_at_mut(self.grid.n_cells());
        matmul(hat, ny, nx, &self.bx.modes, nx, s1);
        matmul(&self.by.modes_t, ny, ny, s1, nx, s2);
        values.copy_from_slice(s2);
    }

    /// Solve `laplacian(p) = rhs` with homogeneous Neumann walls and the
    /// zero-mean gauge. The constant mode of the right-hand side is ignored
    /// (it must vanish for solvability; flux-form sources guarantee that).
    pub fn solve_poisson(&mut self, rhs: &[f64], out: &mut [f64]) {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let mut hat = vec![0.0; nx * ny];
        self.forward(rhs, &mut hat);
        for l in 0..ny {
            for k in 0..nx {
                let lam = self.bx.eigen[k] + self.by.eigen[l];
                let c = &mut hat[l * nx + k];
                if k == 0 && l == 0 {
                    *c = 0.0;
                } else {
                    *c /= lam;
                }
            }
        }
        self.inverse(&hat, out);
    }

    /// Solve the backward-Euler step `(I - nu * laplacian) x = rhs` with
    /// Neumann walls. All eigenvalues of the operator are >= 1.
    pub fn solve_helmholtz(&mut self, nu: f64, rhs: &[f64], out: &mut [f64]) {
        debug_assert!(nu >= 0.0);
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let mut hat = vec![0.0; nx * ny];
        self.forward(rhs, &mut hat);
        for l in 0..ny {
            for k in 0..nx {
                let lam = self.bx.eigen[k] + self.by.eigen[l];
                hat[l * nx + k] /= 1.0 - nu * lam;
            }
        }
        self.inverse(&hat, out);
    }

    /// Cosine coefficients of a field, indexed `(k, l) -> l*nx + k`, in the
    /// unnormalized convention `f = sum a_kl cos(k pi x/lx) cos(l pi y/ly)`.
    pub fn cosine_coefficients(&mut self, f: &ScalarField) -> Vec<f64> {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let mut hat = vec![0.0; nx * ny];
        self.forward(&f.values, &mut hat);
        for l in 0..ny {
            for k in 0..nx {
                let wx = if k == 0 {
                    (1.0 / nx as f64).sqrt()
                } else {
                    (2.0 / nx as f64).sqrt()
                };
                let wy = if l == 0 {
                    (1.0 / ny as f64).sqrt()
                } else {
                    (2.0 / ny as f64).sqrt()
                };
                hat[l * nx + k] *= wx * wy;
            }
        }
        hat
    }

    pub fn solve_poisson_field(&mut self, rhs: &ScalarField) -> ScalarField {
        let mut out = ScalarField::zeros(self.grid, ScalarBc::Neumann);
        self.solve_poisson(&rhs.values, &mut out.values);
        out
    }

    pub fn solve_helmholtz_field(&mut self, nu: f64, rhs: &ScalarField) -> ScalarField {
        let mut out = ScalarField::zeros(self.grid, ScalarBc::Neumann);
        self.solve_helmholtz(nu, &rhs.values, &mut out.values);
        out
    }
}
