//! Time stepper for the regularized chemotaxis-fluid system on the
//! rectangle:
//!
//! ```text
//! n_t + u . grad n = lap n - div( n S_eps(x, n, c) grad c )
//! c_t + u . grad c = lap c - n f(c)
//! u_t + (u . grad) u = lap u + grad P + n grad Phi ,   div u = 0
//! ```
//!
//! with Neumann walls for the scalars (the regularized sensitivity
//! vanishes near the boundary, which is what reduces the no-flux condition
//! to Neumann) and no-slip walls for the velocity. Substep order inside a
//! step is c, then n, then u, so the chemotactic flux always sees the
//! freshest attractant gradient.
//!
//! Every substep is conservative in flux form; the run audit tracks mass
//! drift, positivity, attractant-norm monotonicity and the post-projection
//! divergence at every single step.

pub mod config;
pub(crate) mod scalar;
pub mod sensitivity;
pub mod velocity;

use crate::diagnostics::{self, Baseline, DiagnosticsRecord, FunctionalWeights};
use crate::error::{Error, Result};
use crate::grid::{
    divergence, integrate, l1_norm, l2_norm, Grid, ScalarBc, ScalarField, VectorBc, VectorField,
};
use crate::spectral::NeumannSolver;
use scalar::{
    apply_sink, check_cfl, chemotaxis_drift, implicit_diffuse_conservative, max_face_speed,
    upwind_transport, ScalarWorkspace,
};
use sensitivity::SensitivityParams;
use serde::{Deserialize, Serialize};
use std::path::Path;
use velocity::{advection_term, implicit_viscosity, project, VelocityWorkspace};

pub use config::{
    FChoice, FieldSpec, GridConfig, InitialData, Mode, PhiConfig, SimConfig, VelocitySpec,
};

/// Attractant consumption rate `f(c)`: `f(0) = 0`, positive beyond.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Consumption {
    /// `f(c) = c`; the implicit sink is an exact pointwise division.
    Linear,
    /// Piecewise-linear table starting at `(0, 0)`.
    Table(Vec<(f64, f64)>),
}

impl Consumption {
    pub fn eval(&self, c: f64) -> f64 {
        match self {
            Consumption::Linear => c,
            Consumption::Table(points) => Self::table_eval(points, c),
        }
    }

    pub(crate) fn table_eval(points: &[(f64, f64)], c: f64) -> f64 {
        if points.is_empty() || c <= points[0].0 {
            return points.first().map(|p| p.1).unwrap_or(0.0);
        }
        if c >= points[points.len() - 1].0 {
            return points[points.len() - 1].1;
        }
        for w in points.windows(2) {
            if c <= w[1].0 {
                let t = (c - w[0].0) / (w[1].0 - w[0].0);
                return w[0].1 + t * (w[1].1 - w[0].1);
            }
        }
        points[points.len() - 1].1
    }
}

/// The four unknowns plus time. `p` is the zero-mean pressure of the last
/// projection.
#[derive(Debug, Clone)]
pub struct SimState {
    pub n: ScalarField,
    pub c: ScalarField,
    pub u: VectorField,
    pub p: ScalarField,
    pub t: f64,
}

impl SimState {
    /// Homogeneous rest state `(nbar, c, 0, 0)`.
    pub fn rest(grid: Grid, nbar: f64, c: f64) -> Self {
        SimState {
            n: ScalarField::constant(grid, nbar, ScalarBc::Neumann),
            c: ScalarField::constant(grid, c, ScalarBc::Neumann),
            u: VectorField::zeros(grid, VectorBc::DirichletZero),
            p: ScalarField::zeros(grid, ScalarBc::Neumann),
            t: 0.0,
        }
    }

    pub fn mass(&self) -> f64 {
        integrate(&self.n)
    }
}

/// Reusable solver context: parameter functions, the spectral solver and
/// scratch buffers. One context serves one grid.
pub struct SimContext {
    pub grid: Grid,
    pub params: SensitivityParams,
    pub consumption: Consumption,
    pub phi: ScalarField,
    grad_phi_x: Vec<f64>,
    grad_phi_y: Vec<f64>,
    neumann: NeumannSolver,
    sw: ScalarWorkspace,
    vw: VelocityWorkspace,
}

impl SimContext {
    pub fn new(
        grid: Grid,
        params: SensitivityParams,
        consumption: Consumption,
        phi: ScalarField,
    ) -> Result<Self> {
        params.validate()?;
        phi.check_finite("phi")?;
        let (nfx, nfy) = grid.n_faces();
        let mut grad_phi_x = vec![0.0; nfx];
        let mut grad_phi_y = vec![0.0; nfy];
        for j in 0..grid.ny {
            for i in 1..grid.nx {
                grad_phi_x[grid.fx_idx(i, j)] =
                    (phi.values[grid.idx(i, j)] - phi.values[grid.idx(i - 1, j)]) / grid.hx();
            }
        }
        for j in 1..grid.ny {
            for i in 0..grid.nx {
                grad_phi_y[grid.fy_idx(i, j)] =
                    (phi.values[grid.idx(i, j)] - phi.values[grid.idx(i, j - 1)]) / grid.hy();
            }
        }
        Ok(SimContext {
            grid,
            params,
            consumption,
            phi,
            grad_phi_x,
            grad_phi_y,
            neumann: NeumannSolver::new(grid),
            sw: ScalarWorkspace::new(grid),
            vw: VelocityWorkspace::new(grid),
        })
    }

    pub fn from_config(cfg: &SimConfig) -> Result<Self> {
        let grid = cfg.validate()?;
        SimContext::new(
            grid,
            cfg.sensitivity.clone(),
            cfg.f_choice.build(),
            cfg.phi.build(grid),
        )
    }

    /// Attractant substep: upwind advection, implicit diffusion, implicit
    /// consumption. Returns the new field and the exact removed amount
    /// `integral` of the discrete sink.
    pub fn advance_c(&mut self, state: &SimState, dt: f64) -> Result<(ScalarField, f64)> {
        let vmax = max_face_speed(&state.u.fx, &state.u.fy);
        check_cfl(self.grid, state.t, dt, vmax)?;
        let mut q = state.c.values.clone();
        upwind_transport(
            self.grid,
            &mut q,
            &state.u.fx,
            &state.u.fy,
            dt,
            &mut self.sw.flux_x,
            &mut self.sw.flux_y,
        );
        implicit_diffuse_conservative(self.grid, &mut self.neumann, dt, &mut q, &mut self.sw);
        let removed = apply_sink(&mut q, &state.n.values, dt, &self.consumption);
        let field = ScalarField {
            grid: self.grid,
            values: q,
            bc: ScalarBc::Neumann,
        };
        field.check_finite("c")?;
        Ok((field, removed * self.grid.cell_area()))
    }

    /// Density substep: upwind advection by the fluid, explicit upwind
    /// chemotactic flux with zero normal flux, implicit diffusion. The
    /// state's `c` is expected to be the freshest attractant.
    pub fn advance_n(&mut self, state: &SimState, dt: f64) -> Result<ScalarField> {
        let vmax = max_face_speed(&state.u.fx, &state.u.fy);
        check_cfl(self.grid, state.t, dt, vmax)?;
        let mut q = state.n.values.clone();
        upwind_transport(
            self.grid,
            &mut q,
            &state.u.fx,
            &state.u.fy,
            dt,
            &mut self.sw.flux_x,
            &mut self.sw.flux_y,
        );
        chemotaxis_drift(
            self.grid,
            &q,
            &state.c.values,
            &self.params,
            &mut self.sw.drift_x,
            &mut self.sw.drift_y,
        );
        let wmax = max_face_speed(&self.sw.drift_x, &self.sw.drift_y);
        check_cfl(self.grid, state.t, dt, wmax)?;
        {
            let (dx, dy, fx, fy) = (
                &self.sw.drift_x,
                &self.sw.drift_y,
                &mut self.sw.flux_x,
                &mut self.sw.flux_y,
            );
            upwind_transport(self.grid, &mut q, dx, dy, dt, fx, fy);
        }
        implicit_diffuse_conservative(self.grid, &mut self.neumann, dt, &mut q, &mut self.sw);
        let field = ScalarField {
            grid: self.grid,
            values: q,
            bc: ScalarBc::Neumann,
        };
        field.check_finite("n")?;
        Ok(field)
    }

    /// Momentum substep: explicit conservative advection, implicit
    /// viscosity with no-slip walls, buoyancy `n grad Phi` at faces, then
    /// the pressure projection. Expects the state's `n` to be current.
    pub fn advance_u(&mut self, state: &SimState, dt: f64) -> Result<(VectorField, ScalarField)> {
        let vmax = max_face_speed(&state.u.fx, &state.u.fy);
        check_cfl(self.grid, state.t, dt, vmax)?;
        let g = self.grid;
        let mut u = state.u.clone();
        advection_term(g, &state.u, &mut self.vw.adv_x, &mut self.vw.adv_y);
        for (v, a) in u.fx.iter_mut().zip(self.vw.adv_x.iter()) {
            *v -= dt * a;
        }
        for (v, a) in u.fy.iter_mut().zip(self.vw.adv_y.iter()) {
            *v -= dt * a;
        }
        implicit_viscosity(g, dt, &mut u, &mut self.vw)?;
        let n = &state.n.values;
        for j in 0..g.ny {
            for i in 1..g.nx {
                let nf = 0.5 * (n[g.idx(i - 1, j)] + n[g.idx(i, j)]);
                u.fx[g.fx_idx(i, j)] += dt * nf * self.grad_phi_x[g.fx_idx(i, j)];
            }
        }
        for j in 1..g.ny {
            for i in 0..g.nx {
                let nf = 0.5 * (n[g.idx(i, j - 1)] + n[g.idx(i, j)]);
                u.fy[g.fy_idx(i, j)] += dt * nf * self.grad_phi_y[g.fy_idx(i, j)];
            }
        }
        let p = project(g, dt, &mut u, &mut self.neumann, &mut self.vw);
        u.check_finite("u")?;
        Ok((u, p))
    }

    /// One full step in the order c, n, u. Time advances by `dt`.
    pub fn step(&mut self, state: &SimState, dt: f64) -> Result<StepOutcome> {
        let (c_new, consumed) = self.advance_c(state, dt)?;
        let mid = SimState {
            n: state.n.clone(),
            c: c_new,
            u: state.u.clone(),
            p: state.p.clone(),
            t: state.t,
        };
        let n_new = self.advance_n(&mid, dt)?;
        let staged = SimState {
            n: n_new,
            c: mid.c,
            u: mid.u,
            p: mid.p,
            t: state.t,
        };
        let (u_new, p_new) = self.advance_u(&staged, dt)?;
        let next = SimState {
            n: staged.n,
            c: staged.c,
            u: u_new,
            p: p_new,
            t: state.t + dt,
        };
        debug_assert!(next.n.min() > 0.0, "density positivity lost");
        debug_assert!(next.c.min() >= -1e-15, "attractant negativity");
        Ok(StepOutcome {
            state: next,
            consumed_c: consumed,
        })
    }

    /// Make a velocity field exactly solenoidal (single projection).
    pub fn project_velocity(&mut self, u: &mut VectorField) -> ScalarField {
        project(self.grid, 1.0, u, &mut self.neumann, &mut self.vw)
    }
}

pub struct StepOutcome {
    pub state: SimState,
    /// Exact discrete `integral n f(c)` removed by this step's sink.
    pub consumed_c: f64,
}

/// Always-on per-step invariant audit of a run.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RunAudit {
    pub steps: usize,
    pub mass0: f64,
    /// max over steps of |mass - mass0| / mass0.
    pub max_rel_mass_drift: f64,
    pub min_n: f64,
    pub min_c: f64,
    pub max_div_u: f64,
    /// max over steps of the per-step increase of each attractant norm
    /// (negative values mean the norm always decreased).
    pub max_c_l1_increase: f64,
    pub max_c_l2_increase: f64,
    pub max_c_linf_increase: f64,
}

impl RunAudit {
    fn new(state: &SimState) -> Self {
        RunAudit {
            steps: 0,
            mass0: state.mass(),
            max_rel_mass_drift: 0.0,
            min_n: state.n.min(),
            min_c: state.c.min(),
            max_div_u: divergence(&state.u).max_abs(),
            max_c_l1_increase: f64::NEG_INFINITY,
            max_c_l2_increase: f64::NEG_INFINITY,
            max_c_linf_increase: f64::NEG_INFINITY,
        }
    }

    fn observe(&mut self, state: &SimState, prev_norms: (f64, f64, f64)) -> (f64, f64, f64) {
        self.steps += 1;
        let mass = state.mass();
        self.max_rel_mass_drift = self
            .max_rel_mass_drift
            .max((mass - self.mass0).abs() / self.mass0.abs().max(1e-300));
        self.min_n = self.min_n.min(state.n.min());
        self.min_c = self.min_c.min(state.c.min());
        self.max_div_u = self.max_div_u.max(divergence(&state.u).max_abs());
        let norms = (l1_norm(&state.c), l2_norm(&state.c), state.c.max_abs());
        self.max_c_l1_increase = self.max_c_l1_increase.max(norms.0 - prev_norms.0);
        self.max_c_l2_increase = self.max_c_l2_increase.max(norms.1 - prev_norms.1);
        self.max_c_linf_increase = self.max_c_linf_increase.max(norms.2 - prev_norms.2);
        norms
    }

    /// First hard invariant violation, if any, per the configured
    /// tolerances.
    pub fn hard_violation(&self, mass_tol: f64, div_tol: f64) -> Option<(&'static str, String)> {
        if self.max_rel_mass_drift > mass_tol {
            return Some((
                "mass-conservation",
                format!("relative mass drift {}", self.max_rel_mass_drift),
            ));
        }
        if !(self.min_n > 0.0) {
            return Some(("density-positive", format!("min n = {}", self.min_n)));
        }
        if self.min_c < 0.0 {
            return Some(("attractant-nonnegative", format!("min c = {}", self.min_c)));
        }
        if self.max_div_u > div_tol {
            return Some((
                "velocity-solenoidal",
                format!("max |div u| = {}", self.max_div_u),
            ));
        }
        None
    }
}

/// Result of a run. When `abort` is set the run stopped early and
/// `final_state` is the last good state.
pub struct SimRun {
    pub records: Vec<DiagnosticsRecord>,
    pub final_state: SimState,
    pub audit: RunAudit,
    pub dt: f64,
    pub steps_done: usize,
    pub consumed_c_total: f64,
    pub abort: Option<Error>,
}

/// Run a configured simulation from its initial data.
pub fn run_simulation(cfg: &SimConfig) -> Result<SimRun> {
    let grid = cfg.validate()?;
    let n0 = cfg.initial.n.build(grid);
    let c0 = cfg.initial.c.build(grid);
    let mut u0 = cfg.initial.u.build(grid);
    let mut ctx = SimContext::from_config(cfg)?;
    // One projection makes any configured velocity discretely solenoidal.
    let p0 = ctx.project_velocity(&mut u0);
    let state = SimState {
        n: n0,
        c: c0,
        u: u0,
        p: p0,
        t: 0.0,
    };
    let baseline = Baseline::from_initial(&state.n, &state.c);
    run_from(cfg, &mut ctx, state, 0, None, 0.0, baseline)
}

/// Continue a run from a checkpointed state. `start_record` carries the
/// cumulative integrals at the restart point.
pub fn resume_simulation(
    cfg: &SimConfig,
    state: SimState,
    start_step: usize,
    start_record: DiagnosticsRecord,
    consumed_so_far: f64,
    baseline: Baseline,
) -> Result<SimRun> {
    let mut ctx = SimContext::from_config(cfg)?;
    run_from(
        cfg,
        &mut ctx,
        state,
        start_step,
        Some(start_record),
        consumed_so_far,
        baseline,
    )
}

fn run_from(
    cfg: &SimConfig,
    ctx: &mut SimContext,
    state: SimState,
    start_step: usize,
    start_record: Option<DiagnosticsRecord>,
    consumed0: f64,
    baseline: Baseline,
) -> Result<SimRun> {
    let grid = ctx.grid;
    let dt = cfg.resolve_dt(grid);
    let weights = FunctionalWeights::default();
    let total_steps = if cfg.t_end <= 0.0 {
        0
    } else {
        ((cfg.t_end / dt) - 1e-9).ceil().max(0.0) as usize
    };

    let mut records = Vec::new();
    let first = match start_record {
        Some(r) => r,
        None => diagnostics::sample_initial(&state, &baseline, &weights, &ctx.consumption)?,
    };
    records.push(first);

    let mut audit = RunAudit::new(&state);
    let mut prev_norms = (l1_norm(&state.c), l2_norm(&state.c), state.c.max_abs());
    let mut consumed_total = consumed0;
    let mut consumed_since_sample = 0.0;
    let mut cur = state;
    let mut abort = None;

    for k in start_step..total_steps {
        match ctx.step(&cur, dt) {
            Ok(out) => {
                let mut next = out.state;
                // Times are derived from the step count so restarts see the
                // same float sequence.
                next.t = (k + 1) as f64 * dt;
                consumed_total += out.consumed_c;
                consumed_since_sample += out.consumed_c;
                prev_norms = audit.observe(&next, prev_norms);
                cur = next;
                let last = k + 1 == total_steps;
                if (k + 1) % cfg.diag_every == 0 || last {
                    let prev = records.last().unwrap();
                    let rec = diagnostics::accumulate(
                        prev,
                        &cur,
                        cur.t - prev.t,
                        &weights,
                        &baseline,
                        &ctx.consumption,
                        Some(consumed_since_sample),
                    )?;
                    consumed_since_sample = 0.0;
                    records.push(rec);
                }
            }
            Err(e) => {
                abort = Some(e);
                break;
            }
        }
    }

    Ok(SimRun {
        records,
        final_state: cur,
        audit,
        dt,
        steps_done: audit.steps + start_step,
        consumed_c_total: consumed_total,
        abort,
    })
}

/// Checkpoint manifest: enough to continue a run bit-exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub t: f64,
    pub step: usize,
    pub config_hash: String,
    pub dt: f64,
    pub consumed_c_total: f64,
    pub baseline: Baseline,
    pub last_record: DiagnosticsRecord,
}

/// Write a checkpoint: scalar fields in the cell CSV format, the velocity
/// in the exact face-resolved CSV pair (plus the center-interpolated
/// analysis view), and the JSON manifest.
pub fn save_checkpoint(dir: &Path, state: &SimState, manifest: &CheckpointManifest) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    state.n.write_csv(&dir.join("n.csv"))?;
    state.c.write_csv(&dir.join("c.csv"))?;
    state.p.write_csv(&dir.join("p.csv"))?;
    let (ux, uy) = state.u.to_face_csvs();
    std::fs::write(dir.join("ux.csv"), ux)?;
    std::fs::write(dir.join("uy.csv"), uy)?;
    std::fs::write(dir.join("u.csv"), state.u.to_center_csv())?;
    std::fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(manifest)?,
    )?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path, grid: Grid) -> Result<(SimState, CheckpointManifest)> {
    let manifest: CheckpointManifest =
        serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json"))?)?;
    let n = ScalarField::read_csv(grid, &dir.join("n.csv"), ScalarBc::Neumann)?;
    let c = ScalarField::read_csv(grid, &dir.join("c.csv"), ScalarBc::Neumann)?;
    let p = ScalarField::read_csv(grid, &dir.join("p.csv"), ScalarBc::Neumann)?;
    let ux = std::fs::read_to_string(dir.join("ux.csv"))?;
    let uy = std::fs::read_to_string(dir.join("uy.csv"))?;
    let u = VectorField::from_face_csvs(grid, &ux, &uy, VectorBc::DirichletZero)?;
    let state = SimState {
        n,
        c,
        u,
        p,
        t: manifest.t,
    };
    Ok((state, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::sensitivity::CapFn;

    fn small_cfg(n: usize, t_end: f64) -> SimConfig {
        let mut cfg = SimConfig::default_scenario();
        cfg.grid.nx = n;
        cfg.grid.ny = n;
        cfg.t_end = t_end;
        cfg.diag_every = 8;
        cfg
    }

    fn quiet_params() -> SensitivityParams {
        SensitivityParams {
            a_diag: 1.0,
            b_rot: 0.5,
            s0_cap: CapFn::Constant(10.0),
            eps: 0.1,
            boundary_band: 0.05,
        }
    }

    #[test]
    fn constant_state_with_flat_potential_is_untouched() {
        let grid = Grid::new(16, 16, 1.0, 1.0).unwrap();
        let mut ctx = SimContext::new(
            grid,
            quiet_params(),
            Consumption::Linear,
            ScalarField::zeros(grid, ScalarBc::Neumann),
        )
        .unwrap();
        let state = SimState::rest(grid, 1.0, 0.0);
        let out = ctx.step(&state, 1e-3).unwrap();
        assert!(out.state.n.values.iter().all(|&v| (v - 1.0).abs() < 1e-14));
        assert!(out.state.c.values.iter().all(|&v| v == 0.0));
        assert_eq!(out.state.u.max_abs(), 0.0);
    }

    #[test]
    fn equilibrium_is_a_fixed_point_with_linear_potential() {
        // Buoyancy with constant density is a pure gradient; the projection
        // removes it to round-off every step.
        let grid = Grid::new(32, 32, 1.0, 1.0).unwrap();
        let phi = ScalarField::from_fn(grid, ScalarBc::Neumann, |_, y| 0.1 * y);
        let mut ctx = SimContext::new(grid, quiet_params(), Consumption::Linear, phi).unwrap();
        let mut state = SimState::rest(grid, 1.0, 0.0);
        let dt = 0.25 * grid.h_min() * grid.h_min();
        for _ in 0..100 {
            let out = ctx.step(&state, dt).unwrap();
            state = out.state;
        }
        assert!((state.n.max() - 1.0).abs() <= 1e-12);
        assert!((state.n.min() - 1.0).abs() <= 1e-12);
        assert!(state.c.max_abs() <= 1e-12);
        assert!(state.u.max_abs() <= 1e-12);
    }

    #[test]
    fn uniform_ode_reduction_of_the_attractant() {
        // Still fluid, constant density: c(t) = c0 / (1 + dt nbar)^k.
        let grid = Grid::new(16, 16, 1.0, 1.0).unwrap();
        let mut ctx = SimContext::new(
            grid,
            quiet_params(),
            Consumption::Linear,
            ScalarField::zeros(grid, ScalarBc::Neumann),
        )
        .unwrap();
        let nbar = 2.0;
        let c0 = 0.8;
        let mut state = SimState::rest(grid, nbar, c0);
        let dt = 1e-3;
        let k = 50;
        for _ in 0..k {
            state = ctx.step(&state, dt).unwrap().state;
        }
        let expected = c0 / (1.0 + dt * nbar).powi(k);
        for &v in &state.c.values {
            assert!((v - expected).abs() <= 1e-12 * expected);
        }
    }

    #[test]
    fn pure_diffusion_matches_backward_euler_eigendecay() {
        // Chemotaxis off via a zero cap, no flow: the cosine mode decays by
        // exactly 1/(1 + dt lambda_h) per step.
        let grid = Grid::new(32, 8, 1.0, 1.0).unwrap();
        let params = SensitivityParams {
            s0_cap: CapFn::Constant(0.0),
            ..quiet_params()
        };
        let mut ctx = SimContext::new(
            grid,
            params,
            Consumption::Linear,
            ScalarField::zeros(grid, ScalarBc::Neumann),
        )
        .unwrap();
        let amp0 = 0.25;
        let n0 = ScalarField::from_fn(grid, ScalarBc::Neumann, |x, _| {
            1.0 + amp0 * (std::f64::consts::PI * x).cos()
        });
        let mut state = SimState::rest(grid, 1.0, 0.0);
        state.n = n0;
        let dt = 1e-3;
        let lam = (2.0 - 2.0 * (std::f64::consts::PI * grid.hx() / grid.lx).cos())
            / (grid.hx() * grid.hx());
        let steps = 20;
        for _ in 0..steps {
            state = ctx.step(&state, dt).unwrap().state;
        }
        let factor = (1.0 / (1.0 + dt * lam)).powi(steps);
        // Probe the mode amplitude at x extremes, y arbitrary.
        let probe = state.n.at(0, 3) - 1.0;
        let x0 = 0.5 * grid.hx();
        let expected = amp0 * (std::f64::consts::PI * x0).cos() * factor;
        assert!(
            (probe - expected).abs() <= 1e-10 * amp0,
            "probe {probe} vs expected {expected}"
        );
    }

    #[test]
    fn mass_is_conserved_over_a_thousand_steps() {
        let grid = Grid::new(24, 24, 1.0, 1.0).unwrap();
        let phi = ScalarField::from_fn(grid, ScalarBc::Neumann, |_, y| 0.1 * y);
        let mut ctx = SimContext::new(grid, quiet_params(), Consumption::Linear, phi).unwrap();
        let n0 = ScalarField::from_fn(grid, ScalarBc::Neumann, |x, y| {
            1.0 + 0.5 * (std::f64::consts::PI * x).cos() * (std::f64::consts::PI * y).cos()
        });
        let c0 = ScalarField::from_fn(grid, ScalarBc::Neumann, |_, y| {
            0.5 + 0.2 * (std::f64::consts::PI * y).cos()
        });
        let mut state = SimState::rest(grid, 1.0, 0.0);
        state.n = n0;
        state.c = c0;
        let mass0 = state.mass();
        let dt = 0.25 * grid.h_min() * grid.h_min();
        for _ in 0..1000 {
            state = ctx.step(&state, dt).unwrap().state;
        }
        assert!((state.mass() - mass0).abs() <= 1e-8 * mass0);
        assert!(state.n.min() > 0.0);
        assert!(state.c.min() >= 0.0);
    }

    #[test]
    fn attractant_budget_telescopes_per_step() {
        // The discrete sink amounts are the only change to the attractant
        // content; advection and diffusion telescope exactly.
        let grid = Grid::new(24, 24, 1.0, 1.0).unwrap();
        let phi = ScalarField::from_fn(grid, ScalarBc::Neumann, |_, y| 0.1 * y);
        let mut ctx = SimContext::new(grid, quiet_params(), Consumption::Linear, phi).unwrap();
        let mut state = SimState::rest(grid, 1.0, 0.0);
        state.n = ScalarField::from_fn(grid, ScalarBc::Neumann, |x, y| {
            1.0 + 0.4 * (std::f64::consts::PI * x).cos() * (std::f64::consts::PI * y).cos()
        });
        state.c = ScalarField::from_fn(grid, ScalarBc::Neumann, |_, y| {
            0.5 + 0.2 * (std::f64::consts::PI * y).cos()
        });
        let c0_content = integrate(&state.c);
        let dt = 0.25 * grid.h_min() * grid.h_min();
        let mut consumed = 0.0;
        let mut prev_l1 = l1_norm(&state.c);
        for _ in 0..200 {
            let out = ctx.step(&state, dt).unwrap();
            state = out.state;
            consumed += out.consumed_c;
            let l1 = l1_norm(&state.c);
            assert!(l1 <= prev_l1, "attractant content must not grow");
            prev_l1 = l1;
        }
        let lost = c0_content - integrate(&state.c);
        assert!(
            (consumed - lost).abs() <= 1e-10 * c0_content,
            "budget defect {:e}",
            (consumed - lost).abs()
        );
    }

    #[test]
    fn cfl_violation_aborts_with_diagnostic() {
        let grid = Grid::new(16, 16, 1.0, 1.0).unwrap();
        let mut ctx = SimContext::new(
            grid,
            quiet_params(),
            Consumption::Linear,
            ScalarField::zeros(grid, ScalarBc::Neumann),
        )
        .unwrap();
        let mut state = SimState::rest(grid, 1.0, 0.5);
        // A steep attractant ramp makes the chemotactic drift fast.
        state.c = ScalarField::from_fn(grid, ScalarBc::Neumann, |x, _| 50.0 * x);
        let err = ctx.advance_n(&state, 0.05).unwrap_err();
        match err {
            Error::CflViolation { .. } => {}
            other => panic!("expected CFL violation, got {other}"),
        }
    }

    #[test]
    fn run_simulation_t_end_zero_yields_single_record() {
        let cfg = small_cfg(16, 0.0);
        let run = run_simulation(&cfg).unwrap();
        assert_eq!(run.records.len(), 1);
        assert_eq!(run.steps_done, 0);
        assert!(run.abort.is_none());
    }

    #[test]
    fn trajectories_are_deterministic() {
        let cfg = small_cfg(16, 0.02);
        let a = run_simulation(&cfg).unwrap();
        let b = run_simulation(&cfg).unwrap();
        assert_eq!(a.final_state.n.values, b.final_state.n.values);
        assert_eq!(a.final_state.u.fx, b.final_state.u.fx);
        let bits =
            |r: &DiagnosticsRecord| (r.mass.to_bits(), r.f_eps.to_bits(), r.cum_nfc.to_bits());
        for (ra, rb) in a.records.iter().zip(b.records.iter()) {
            assert_eq!(bits(ra), bits(rb));
        }
    }

    #[test]
    fn checkpoint_restart_is_bit_exact() {
        // Horizons land exactly on diagnostics sample boundaries so the
        // resumed cumulative sums chunk identically to the full run.
        let dt = 0.25 / 256.0;
        let cfg_full = small_cfg(16, 40.0 * dt);
        let full = run_simulation(&cfg_full).unwrap();

        // First half, checkpoint, then resume to the horizon.
        let cfg_half = small_cfg(16, 24.0 * dt);
        let half = run_simulation(&cfg_half).unwrap();
        assert_eq!(
            half.records.last().unwrap().cum_nfc.to_bits(),
            full.records[3].cum_nfc.to_bits()
        );
        let dir = std::env::temp_dir().join(format!("tmcf-ckpt-{}", std::process::id()));
        let baseline = {
            let n0 = cfg_full.initial.n.build(cfg_full.grid.build().unwrap());
            let c0 = cfg_full.initial.c.build(cfg_full.grid.build().unwrap());
            Baseline::from_initial(&n0, &c0)
        };
        let manifest = CheckpointManifest {
            t: half.final_state.t,
            step: half.steps_done,
            config_hash: "test".into(),
            dt: half.dt,
            consumed_c_total: half.consumed_c_total,
            baseline,
            last_record: *half.records.last().unwrap(),
        };
        save_checkpoint(&dir, &half.final_state, &manifest).unwrap();

        let grid = cfg_full.grid.build().unwrap();
        let (restored, m) = load_checkpoint(&dir, grid).unwrap();
        assert_eq!(restored.n.values, half.final_state.n.values);
        assert_eq!(restored.u.fx, half.final_state.u.fx);

        let resumed = resume_simulation(
            &cfg_full,
            restored,
            m.step,
            m.last_record,
            m.consumed_c_total,
            m.baseline,
        )
        .unwrap();
        assert_eq!(resumed.final_state.n.values, full.final_state.n.values);
        assert_eq!(resumed.final_state.u.fx, full.final_state.u.fx);
        assert_eq!(resumed.final_state.c.values, full.final_state.c.values);
        let ra = resumed.records.last().unwrap();
        let rb = full.records.last().unwrap();
        assert_eq!(ra.cum_nfc.to_bits(), rb.cum_nfc.to_bits());
        assert_eq!(ra.f_eps.to_bits(), rb.f_eps.to_bits());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn half_steps_versus_full_step_consistency() {
        // The splitting is first order: the defect between one dt step and
        // two dt/2 steps shrinks by at least half when dt halves.
        let grid = Grid::new(16, 16, 1.0, 1.0).unwrap();
        let phi = ScalarField::from_fn(grid, ScalarBc::Neumann, |_, y| 0.1 * y);
        let mk_ctx =
            || SimContext::new(grid, quiet_params(), Consumption::Linear, phi.clone()).unwrap();
        let mut state = SimState::rest(grid, 1.0, 0.0);
        state.n = ScalarField::from_fn(grid, ScalarBc::Neumann, |x, y| {
            1.0 + 0.3 * (std::f64::consts::PI * x).cos() * (std::f64::consts::PI * y).cos()
        });
        state.c = ScalarField::from_fn(grid, ScalarBc::Neumann, |_, y| {
            0.5 + 0.2 * (std::f64::consts::PI * y).cos()
        });

        let defect = |dt: f64| -> f64 {
            let mut ctx = mk_ctx();
            let full = ctx.step(&state, dt).unwrap().state;
            let mut ctx = mk_ctx();
            let h1 = ctx.step(&state, 0.5 * dt).unwrap().state;
            let h2 = ctx.step(&h1, 0.5 * dt).unwrap().state;
            let mut d = 0.0f64;
            for (a, b) in full.n.values.iter().zip(h2.n.values.iter()) {
                d = d.max((a - b).abs());
            }
            for (a, b) in full.c.values.iter().zip(h2.c.values.iter()) {
                d = d.max((a - b).abs());
            }
            d
        };
        let d1 = defect(2e-4);
        let d2 = defect(1e-4);
        assert!(d1 > 0.0);
        assert!(d2 <= 0.6 * d1, "defect did not shrink: {d1} -> {d2}");
    }
}
