//! Flux-form transport and diffusion substeps for the cell scalars.
//!
//! Advection and the chemotactic drift are explicit first-order upwind in
//! flux form with zero boundary fluxes, so cell sums telescope exactly and
//! the update is a convex combination under the CFL limit (positivity and
//! the discrete maximum principle follow). Diffusion is backward Euler via
//! the spectral Neumann solve; the solution is then re-applied as face
//! fluxes, which pins mass conservation to round-off independently of the
//! solve.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::solver::sensitivity::{regularize_sensitivity, sensitivity, SensitivityParams};
use crate::solver::Consumption;
use crate::spectral::NeumannSolver;

pub(crate) struct ScalarWorkspace {
    pub flux_x: Vec<f64>,
    pub flux_y: Vec<f64>,
    pub solved: Vec<f64>,
    pub drift_x: Vec<f64>,
    pub drift_y: Vec<f64>,
}

impl ScalarWorkspace {
    pub fn new(grid: Grid) -> Self {
        let (nfx, nfy) = grid.n_faces();
        ScalarWorkspace {
            flux_x: vec![0.0; nfx],
            flux_y: vec![0.0; nfy],
            solved: vec![0.0; grid.n_cells()],
            drift_x: vec![0.0; nfx],
            drift_y: vec![0.0; nfy],
        }
    }
}

/// Largest face speed of a staggered velocity pair.
pub(crate) fn max_face_speed(vx: &[f64], vy: &[f64]) -> f64 {
    vx.iter()
        .chain(vy.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Advective time-step limit `0.5 h / vmax`; unbounded for a still field.
pub(crate) fn cfl_limit(grid: Grid, vmax: f64) -> f64 {
    if vmax > 0.0 {
        0.5 * grid.h_min() / vmax
    } else {
        f64::INFINITY
    }
}

pub(crate) fn check_cfl(grid: Grid, t: f64, dt: f64, vmax: f64) -> Result<()> {
    let limit = cfl_limit(grid, vmax);
    if dt > limit {
        return Err(Error::CflViolation { t, dt, limit });
    }
    Ok(())
}

/// One explicit upwind transport step of `q` by the face velocities
/// `(vx, vy)`. Boundary faces must carry zero velocity; fluxes there are
/// forced to zero regardless.
pub(crate) fn upwind_transport(
    grid: Grid,
    q: &mut [f64],
    vx: &[f64],
    vy: &[f64],
    dt: f64,
    ws_flux_x: &mut [f64],
    ws_flux_y: &mut [f64],
) {
    let (nx, ny) = (grid.nx, grid.ny);
    ws_flux_x.fill(0.0);
    ws_flux_y.fill(0.0);
    for j in 0..ny {
        for i in 1..nx {
            let v = vx[grid.fx_idx(i, j)];
            let up = if v >= 0.0 {
                q[grid.idx(i - 1, j)]
            } else {
                q[grid.idx(i, j)]
            };
            ws_flux_x[grid.fx_idx(i, j)] = v * up;
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let v = vy[grid.fy_idx(i, j)];
            let up = if v >= 0.0 {
                q[grid.idx(i, j - 1)]
            } else {
                q[grid.idx(i, j)]
            };
            ws_flux_y[grid.fy_idx(i, j)] = v * up;
        }
    }
    let rx = dt / grid.hx();
    let ry = dt / grid.hy();
    for j in 0..ny {
        for i in 0..nx {
            q[grid.idx(i, j)] -= rx
                * (ws_flux_x[grid.fx_idx(i + 1, j)] - ws_flux_x[grid.fx_idx(i, j)])
                + ry * (ws_flux_y[grid.fy_idx(i, j + 1)] - ws_flux_y[grid.fy_idx(i, j)]);
        }
    }
}

/// Backward-Euler diffusion with conservative re-application: solve
/// `(I - dt lap) s = q`, then update `q += dt div(grad s)` in flux form.
/// In exact arithmetic the result equals `s`; in floats it inherits exact
/// telescoping of the face fluxes.
pub(crate) fn implicit_diffuse_conservative(
    grid: Grid,
    helm: &mut NeumannSolver,
    dt: f64,
    q: &mut [f64],
    ws: &mut ScalarWorkspace,
) {
    helm.solve_helmholtz(dt, q, &mut ws.solved);
    let (nx, ny) = (grid.nx, grid.ny);
    let ihx = 1.0 / grid.hx();
    let ihy = 1.0 / grid.hy();
    ws.flux_x.fill(0.0);
    ws.flux_y.fill(0.0);
    for j in 0..ny {
        for i in 1..nx {
            ws.flux_x[grid.fx_idx(i, j)] =
                (ws.solved[grid.idx(i, j)] - ws.solved[grid.idx(i - 1, j)]) * ihx;
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            ws.flux_y[grid.fy_idx(i, j)] =
                (ws.solved[grid.idx(i, j)] - ws.solved[grid.idx(i, j - 1)]) * ihy;
        }
    }
    let rx = dt * ihx;
    let ry = dt * ihy;
    for j in 0..ny {
        for i in 0..nx {
            q[grid.idx(i, j)] += rx
                * (ws.flux_x[grid.fx_idx(i + 1, j)] - ws.flux_x[grid.fx_idx(i, j)])
                + ry * (ws.flux_y[grid.fy_idx(i, j + 1)] - ws.flux_y[grid.fy_idx(i, j)]);
        }
    }
}

/// Pointwise implicit consumption step `c += -dt n f(c)`. Returns the total
/// removed amount `sum (c_old - c_new)` (cell sums, not yet scaled by the
/// cell measure); that is the exact discrete consumption budget.
pub(crate) fn apply_sink(q: &mut [f64], n: &[f64], dt: f64, f: &Consumption) -> f64 {
    let mut removed = 0.0;
    match f {
        Consumption::Linear => {
            for (c, &nv) in q.iter_mut().zip(n.iter()) {
                let old = *c;
                *c = old / (1.0 + dt * nv);
                removed += old - *c;
            }
        }
        Consumption::Table(points) => {
            for (c, &nv) in q.iter_mut().zip(n.iter()) {
                let old = *c;
                if old <= 0.0 || nv <= 0.0 {
                    continue;
                }
                // Root of x + dt n f(x) = old on [0, old]; the bracket holds
                // because f(0) = 0 and f >= 0.
                let mut lo = 0.0f64;
                let mut hi = old;
                for _ in 0..64 {
                    let mid = 0.5 * (lo + hi);
                    let g = mid + dt * nv * Consumption::table_eval(points, mid) - old;
                    if g > 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                *c = 0.5 * (lo + hi);
                removed += old - *c;
            }
        }
    }
    removed
}

/// Drift velocity of the chemotactic flux at faces: `w = S_eps grad c`,
/// with the matrix evaluated from face-averaged density and attractant and
/// both cutoffs applied. Boundary faces stay zero.
pub(crate) fn chemotaxis_drift(
    grid: Grid,
    n: &[f64],
    c: &[f64],
    p: &SensitivityParams,
    wx: &mut [f64],
    wy: &mut [f64],
) {
    let (nx, ny) = (grid.nx, grid.ny);
    let ihx = 1.0 / grid.hx();
    let ihy = 1.0 / grid.hy();
    wx.fill(0.0);
    wy.fill(0.0);

    // Gradient components on their native faces (mirrored walls -> zero).
    let gx = |i: usize, j: usize| -> f64 {
        if i == 0 || i == nx {
            0.0
        } else {
            (c[grid.idx(i, j)] - c[grid.idx(i - 1, j)]) * ihx
        }
    };
    let gy = |i: usize, j: usize| -> f64 {
        if j == 0 || j == ny {
            0.0
        } else {
            (c[grid.idx(i, j)] - c[grid.idx(i, j - 1)]) * ihy
        }
    };

    for j in 0..ny {
        for i in 1..nx {
            let x = i as f64 * grid.hx();
            let y = (j as f64 + 0.5) * grid.hy();
            let nf = 0.5 * (n[grid.idx(i - 1, j)] + n[grid.idx(i, j)]);
            let cf = 0.5 * (c[grid.idx(i - 1, j)] + c[grid.idx(i, j)]);
            let dcx = gx(i, j);
            let dcy = 0.25 * (gy(i - 1, j) + gy(i - 1, j + 1) + gy(i, j) + gy(i, j + 1));
            let s = sensitivity((x, y), nf, cf, p);
            let s = regularize_sensitivity(&s, nf, grid.boundary_distance(x, y), p);
            wx[grid.fx_idx(i, j)] = s[0][0] * dcx + s[0][1] * dcy;
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let x = (i as f64 + 0.5) * grid.hx();
            let y = j as f64 * grid.hy();
            let nf = 0.5 * (n[grid.idx(i, j - 1)] + n[grid.idx(i, j)]);
            let cf = 0.5 * (c[grid.idx(i, j - 1)] + c[grid.idx(i, j)]);
            let dcy = gy(i, j);
            let dcx = 0.25 * (gx(i, j - 1) + gx(i + 1, j - 1) + gx(i, j) + gx(i + 1, j));
            let s = sensitivity((x, y), nf, cf, p);
            let s = regularize_sensitivity(&s, nf, grid.boundary_distance(x, y), p);
            wy[grid.fy_idx(i, j)] = s[1][0] * dcx + s[1][1] * dcy;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::sensitivity::CapFn;

    fn grid16() -> Grid {
        Grid::new(16, 16, 1.0, 1.0).unwrap()
    }

    fn sum(q: &[f64]) -> f64 {
        q.iter().sum()
    }

    #[test]
    fn upwind_conserves_and_respects_bounds() {
        // Solenoidal velocity from a stream function: the flux-form upwind
        // update is then a doubly stochastic map under the CFL limit.
        let g = grid16();
        let u = crate::solver::velocity::velocity_from_stream(g, |x, y| {
            0.5 * (std::f64::consts::PI * x).sin() * (std::f64::consts::PI * y).sin()
        });
        let (nfx, nfy) = g.n_faces();
        let mut q: Vec<f64> = (0..g.n_cells()).map(|k| (k % 7) as f64).collect();
        let before = sum(&q);
        let (mn, mx) = (0.0, 6.0);
        let mut fx = vec![0.0; nfx];
        let mut fy = vec![0.0; nfy];
        let vmax = max_face_speed(&u.fx, &u.fy);
        let dt = 0.4 * g.h_min() / vmax;
        for _ in 0..50 {
            upwind_transport(g, &mut q, &u.fx, &u.fy, dt, &mut fx, &mut fy);
        }
        assert!((sum(&q) - before).abs() < 1e-10 * before.abs().max(1.0));
        for &v in &q {
            assert!(v >= mn - 1e-12 && v <= mx + 1e-12);
        }
    }

    #[test]
    fn diffusion_conserves_mass_exactly_in_flux_form() {
        let g = grid16();
        let mut helm = NeumannSolver::new(g);
        let mut ws = ScalarWorkspace::new(g);
        let mut q: Vec<f64> = (0..g.n_cells())
            .map(|k| 1.0 + 0.3 * ((k * 37 % 11) as f64 / 11.0))
            .collect();
        let before = sum(&q);
        for _ in 0..100 {
            implicit_diffuse_conservative(g, &mut helm, 1e-3, &mut q, &mut ws);
        }
        assert!((sum(&q) - before).abs() <= 1e-11 * before);
    }

    #[test]
    fn linear_sink_is_exact_division() {
        let mut q = vec![1.0, 0.5, 0.0];
        let n = vec![2.0, 1.0, 3.0];
        let dt = 0.1;
        let removed = apply_sink(&mut q, &n, dt, &Consumption::Linear);
        assert!((q[0] - 1.0 / 1.2).abs() < 1e-15);
        assert!((q[1] - 0.5 / 1.1).abs() < 1e-15);
        assert_eq!(q[2], 0.0);
        let expected = (1.0 - 1.0 / 1.2) + (0.5 - 0.5 / 1.1);
        assert!((removed - expected).abs() < 1e-15);
    }

    #[test]
    fn table_sink_matches_linear_when_table_is_identity() {
        let table = vec![(0.0, 0.0), (10.0, 10.0)];
        let mut qa = vec![0.8, 0.2, 0.05];
        let mut qb = qa.clone();
        let n = vec![1.5, 0.7, 2.0];
        let dt = 0.02;
        let ra = apply_sink(&mut qa, &n, dt, &Consumption::Linear);
        let rb = apply_sink(&mut qb, &n, dt, &Consumption::Table(table));
        for (a, b) in qa.iter().zip(qb.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((ra - rb).abs() < 1e-12);
    }

    #[test]
    fn drift_vanishes_for_flat_attractant_and_near_walls() {
        let g = grid16();
        let p = SensitivityParams {
            a_diag: 1.0,
            b_rot: 0.5,
            s0_cap: CapFn::Constant(10.0),
            eps: 0.1,
            boundary_band: 0.1,
        };
        let n = vec![1.0; g.n_cells()];
        let c = vec![2.0; g.n_cells()];
        let (nfx, nfy) = g.n_faces();
        let mut wx = vec![1.0; nfx];
        let mut wy = vec![1.0; nfy];
        chemotaxis_drift(g, &n, &c, &p, &mut wx, &mut wy);
        assert!(wx.iter().chain(wy.iter()).all(|&v| v == 0.0));

        // With a varying attractant, faces inside the wall band still carry
        // zero drift because of the cutoff.
        let c2: Vec<f64> = (0..g.n_cells()).map(|k| (k % 5) as f64 * 0.1).collect();
        chemotaxis_drift(g, &n, &c2, &p, &mut wx, &mut wy);
        for j in 0..g.ny {
            // x = hx is within the band (hx = 1/16 < 0.1).
            assert_eq!(wx[g.fx_idx(1, j)], 0.0);
        }
    }

    #[test]
    fn cfl_guard_fires() {
        let g = grid16();
        assert!(check_cfl(g, 0.0, 0.1, 1.0).is_err());
        assert!(check_cfl(g, 0.0, 0.01, 1.0).is_ok());
        assert!(check_cfl(g, 0.0, 1e9, 0.0).is_ok());
    }
}
