//! Every tracked functional of a simulation state: mass, monotone
//! attractant norms, relative entropy, the Lyapunov functional
//!
//! ```text
//! F(t) = integral n ln(n / nbar0) + 1/2 integral |grad c|^2
//!        + 1/(2C) integral |u|^2 ,
//! ```
//!
//! instantaneous dissipation integrals with their running time integrals,
//! and the convergence metrics toward the homogeneous rest state
//! `(nbar0, 0, 0)`. The L1 distance of the density to its mean obeys a
//! Pinsker-type bound `|n - nbar0|_L1 <= sqrt(2 mass entropy)`, whose
//! ratio is reported alongside.

use crate::error::{Error, Result};
use crate::grid::{
    self, grad_norm_sq, gradient_neumann, integrate, l1_norm, laplacian_neumann, ScalarField,
};
use crate::solver::velocity::grad_u_norm_sq;
use crate::solver::{Consumption, SimState};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// Weight of the kinetic part of the Lyapunov functional; any value >= 1
/// gives a valid nonnegative functional.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FunctionalWeights {
    pub fluid_weight_c: f64,
}

impl Default for FunctionalWeights {
    fn default() -> Self {
        FunctionalWeights {
            fluid_weight_c: 1.0,
        }
    }
}

impl FunctionalWeights {
    pub fn validate(&self) -> Result<()> {
        if self.fluid_weight_c >= 1.0 {
            Ok(())
        } else {
            Err(Error::Hypothesis {
                id: "fluid-weight-range",
                msg: format!("fluid weight must be >= 1, got {}", self.fluid_weight_c),
            })
        }
    }
}

/// Stabilization detection knobs.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ThresholdParams {
    pub delta0: f64,
    pub stabilization_window: usize,
}

impl Default for ThresholdParams {
    fn default() -> Self {
        ThresholdParams {
            delta0: 1e-2,
            stabilization_window: 5,
        }
    }
}

impl ThresholdParams {
    pub fn validate(&self) -> Result<()> {
        if self.delta0 > 0.0 {
            Ok(())
        } else {
            Err(Error::Hypothesis {
                id: "threshold-positive",
                msg: format!("delta0 must be positive, got {}", self.delta0),
            })
        }
    }
}

/// Quantities frozen from the initial data.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Baseline {
    /// Mean initial density `mass0 / area`.
    pub nbar0: f64,
    /// Initial mass `integral n0`.
    pub mass0: f64,
    /// Initial attractant content `integral c0`.
    pub c0_l1: f64,
}

impl Baseline {
    pub fn from_initial(n0: &ScalarField, c0: &ScalarField) -> Self {
        let mass0 = integrate(n0);
        Baseline {
            nbar0: mass0 / n0.grid.area(),
            mass0,
            c0_l1: integrate(c0),
        }
    }
}

/// Relative entropy `integral n ln(n / nbar0)`; the log is guarded far
/// below any value the positivity-preserving solver can produce.
pub fn entropy(n: &ScalarField, nbar0: f64) -> f64 {
    n.values
        .iter()
        .map(|&v| v * (v.max(1e-300) / nbar0).ln())
        .sum::<f64>()
        * n.grid.cell_area()
}

/// The three addends of the Lyapunov functional, kept separate.
#[derive(Debug, Clone, Copy)]
pub struct FParts {
    pub entropy: f64,
    pub grad_c_half: f64,
    pub kinetic_weighted: f64,
}

impl FParts {
    #[inline]
    pub fn value(&self) -> f64 {
        self.entropy + self.grad_c_half + self.kinetic_weighted
    }
}

pub fn kinetic_energy(state: &SimState) -> f64 {
    let a = state.u.grid.cell_area();
    (state.u.fx.iter().map(|v| v * v).sum::<f64>() + state.u.fy.iter().map(|v| v * v).sum::<f64>())
        * a
}

pub fn energy_functional(state: &SimState, baseline: &Baseline, w: &FunctionalWeights) -> FParts {
    FParts {
        entropy: entropy(&state.n, baseline.nbar0),
        grad_c_half: 0.5 * grad_norm_sq(&state.c),
        kinetic_weighted: kinetic_energy(state) / (2.0 * w.fluid_weight_c),
    }
}

/// Instantaneous dissipation integrals.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Dissipation {
    /// `integral |grad n|^2 / n`
    pub dn2_over_n: f64,
    /// `integral |grad n|^2 / n^2`
    pub dn2_over_n2: f64,
    /// `integral |lap c|^2`
    pub lap_c_sq: f64,
    /// `integral |grad u|^2`
    pub grad_u_sq: f64,
}

pub fn dissipation_terms(state: &SimState) -> Result<Dissipation> {
    let minn = state.n.min();
    if !(minn > 0.0) {
        return Err(Error::Invariant {
            id: "density-positive",
            t: state.t,
            msg: format!("dissipation integrals need min n > 0, got {minn}"),
        });
    }
    let g = state.n.grid;
    let gr = gradient_neumann(&state.n);
    let mut dn_n = 0.0;
    let mut dn_n2 = 0.0;
    for j in 0..g.ny {
        for i in 1..g.nx {
            let d = gr.fx[g.fx_idx(i, j)];
            let nf = 0.5 * (state.n.values[g.idx(i - 1, j)] + state.n.values[g.idx(i, j)]);
            dn_n += d * d / nf;
            dn_n2 += d * d / (nf * nf);
        }
    }
    for j in 1..g.ny {
        for i in 0..g.nx {
            let d = gr.fy[g.fy_idx(i, j)];
            let nf = 0.5 * (state.n.values[g.idx(i, j - 1)] + state.n.values[g.idx(i, j)]);
            dn_n += d * d / nf;
            dn_n2 += d * d / (nf * nf);
        }
    }
    let lap = laplacian_neumann(&state.c);
    let lap_sq = lap.values.iter().map(|v| v * v).sum::<f64>() * g.cell_area();
    Ok(Dissipation {
        dn2_over_n: dn_n * g.cell_area(),
        dn2_over_n2: dn_n2 * g.cell_area(),
        lap_c_sq: lap_sq,
        grad_u_sq: grad_u_norm_sq(&state.u),
    })
}

/// Distance metrics to the rest state, plus the Pinsker ratio
/// `|n - nbar0|_L1 / sqrt(mass entropy)` (bounded by sqrt 2) when the
/// entropy is meaningfully positive.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Convergence {
    pub n_dist_l1: f64,
    pub c_linf: f64,
    pub u_l2: f64,
    pub pinsker_ratio: Option<f64>,
}

pub fn convergence_metrics(state: &SimState, baseline: &Baseline) -> Convergence {
    let diff = state.n.map(|v| v - baseline.nbar0);
    let n_dist_l1 = l1_norm(&diff);
    let c_linf = state.c.max_abs();
    let u_l2 = kinetic_energy(state).sqrt();
    let ent = entropy(&state.n, baseline.nbar0);
    let mass = integrate(&state.n);
    let pinsker_ratio = if ent > 1e-100 && mass > 0.0 {
        Some(n_dist_l1 / (mass * ent).sqrt())
    } else {
        None
    };
    Convergence {
        n_dist_l1,
        c_linf,
        u_l2,
        pinsker_ratio,
    }
}

/// Instantaneous consumption integrand `integral n f(c)`.
pub fn nfc_instantaneous(state: &SimState, f: &Consumption) -> f64 {
    state
        .n
        .values
        .iter()
        .zip(state.c.values.iter())
        .map(|(&nv, &cv)| nv * f.eval(cv))
        .sum::<f64>()
        * state.n.grid.cell_area()
}

/// One time sample of everything tracked.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub mass: f64,
    pub c_l1: f64,
    pub c_l2: f64,
    pub c_linf: f64,
    pub entropy: f64,
    pub grad_c_sq: f64,
    pub kinetic: f64,
    pub f_eps: f64,
    pub dn2_over_n: f64,
    pub dn2_over_n2: f64,
    pub lap_c_sq: f64,
    pub grad_u_sq: f64,
    /// Instantaneous `integral n f(c)`; feeds the trapezoid fallback.
    pub nfc_inst: f64,
    pub cum_dn2_over_n: f64,
    /// Tracked but not a CSV column.
    pub cum_dn2_over_n2: f64,
    pub cum_lap_c_sq: f64,
    pub cum_grad_u_sq: f64,
    pub cum_nfc: f64,
    pub n_dist_l1: f64,
    /// Zero when the entropy is too small for the ratio to mean anything.
    pub pinsker_ratio: f64,
}

fn instantaneous(
    state: &SimState,
    baseline: &Baseline,
    w: &FunctionalWeights,
    f: &Consumption,
) -> Result<DiagnosticsRecord> {
    let parts = energy_functional(state, baseline, w);
    let diss = dissipation_terms(state)?;
    let conv = convergence_metrics(state, baseline);
    Ok(DiagnosticsRecord {
        t: state.t,
        mass: integrate(&state.n),
        c_l1: l1_norm(&state.c),
        c_l2: grid::l2_norm(&state.c),
        c_linf: conv.c_linf,
        entropy: parts.entropy,
        grad_c_sq: 2.0 * parts.grad_c_half,
        kinetic: kinetic_energy(state),
        f_eps: parts.value(),
        dn2_over_n: diss.dn2_over_n,
        dn2_over_n2: diss.dn2_over_n2,
        lap_c_sq: diss.lap_c_sq,
        grad_u_sq: diss.grad_u_sq,
        nfc_inst: nfc_instantaneous(state, f),
        cum_dn2_over_n: 0.0,
        cum_dn2_over_n2: 0.0,
        cum_lap_c_sq: 0.0,
        cum_grad_u_sq: 0.0,
        cum_nfc: 0.0,
        n_dist_l1: conv.n_dist_l1,
        pinsker_ratio: conv.pinsker_ratio.unwrap_or(0.0),
    })
}

/// First sample of a run; cumulative integrals start at zero.
pub fn sample_initial(
    state: &SimState,
    baseline: &Baseline,
    w: &FunctionalWeights,
    f: &Consumption,
) -> Result<DiagnosticsRecord> {
    instantaneous(state, baseline, w, f)
}

/// Next sample: instantaneous fields recomputed, cumulative integrals
/// advanced by the trapezoid rule over `[prev.t, state.t]`. The consumption
/// budget accepts an exact per-interval amount from the solver (the
/// discrete decrement it actually applied); without it the trapezoid of
/// the instantaneous integrand is used.
pub fn accumulate(
    prev: &DiagnosticsRecord,
    state: &SimState,
    dt: f64,
    w: &FunctionalWeights,
    baseline: &Baseline,
    f: &Consumption,
    exact_nfc_delta: Option<f64>,
) -> Result<DiagnosticsRecord> {
    debug_assert!(
        (state.t - prev.t - dt).abs() <= 1e-9 * (1.0 + dt.abs()),
        "dt does not match the sample spacing"
    );
    let mut rec = instantaneous(state, baseline, w, f)?;
    let trap = |a: f64, b: f64| 0.5 * dt * (a + b);
    rec.cum_dn2_over_n = prev.cum_dn2_over_n + trap(prev.dn2_over_n, rec.dn2_over_n);
    rec.cum_dn2_over_n2 = prev.cum_dn2_over_n2 + trap(prev.dn2_over_n2, rec.dn2_over_n2);
    rec.cum_lap_c_sq = prev.cum_lap_c_sq + trap(prev.lap_c_sq, rec.lap_c_sq);
    rec.cum_grad_u_sq = prev.cum_grad_u_sq + trap(prev.grad_u_sq, rec.grad_u_sq);
    rec.cum_nfc = prev.cum_nfc
        + match exact_nfc_delta {
            Some(d) => d,
            None => trap(prev.nfc_inst, rec.nfc_inst),
        };
    Ok(rec)
}

/// Earliest sample time from which the functional stays at or below
/// `delta0` across the following `stabilization_window` samples (window
/// truncated at the end of the series).
pub fn detect_stabilization(series: &[DiagnosticsRecord], th: &ThresholdParams) -> Option<f64> {
    let len = series.len();
    for k in 0..len {
        let end = (k + th.stabilization_window.max(1)).min(len);
        if series[k..end].iter().all(|r| r.f_eps <= th.delta0) {
            return Some(series[k].t);
        }
    }
    None
}

pub const CSV_HEADER: &str = "t,mass,c_l1,c_l2,c_linf,entropy,grad_c_sq,kinetic,F,dn2_over_n,dn2_over_n2,lap_c_sq,grad_u_sq,cum_dn2_over_n,cum_lap_c_sq,cum_grad_u_sq,cum_nfc,n_dist_l1,pinsker_ratio";

pub fn records_to_csv(records: &[DiagnosticsRecord]) -> String {
    let mut out = String::with_capacity(records.len() * 256 + 128);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            r.t,
            r.mass,
            r.c_l1,
            r.c_l2,
            r.c_linf,
            r.entropy,
            r.grad_c_sq,
            r.kinetic,
            r.f_eps,
            r.dn2_over_n,
            r.dn2_over_n2,
            r.lap_c_sq,
            r.grad_u_sq,
            r.cum_dn2_over_n,
            r.cum_lap_c_sq,
            r.cum_grad_u_sq,
            r.cum_nfc,
            r.n_dist_l1,
            r.pinsker_ratio
        );
    }
    out
}

/// Parse the CSV emitted by [`records_to_csv`]. Fields without a column
/// (the second density dissipation cumulative and the instantaneous
/// consumption) come back as zero.
pub fn records_from_csv(text: &str) -> Result<Vec<DiagnosticsRecord>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == CSV_HEADER => {}
        _ => {
            return Err(Error::Csv {
                row: 1,
                msg: format!("expected header `{CSV_HEADER}`"),
            })
        }
    }
    let mut out = Vec::new();
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let row = lineno + 1;
        let cols: Vec<f64> = line
            .split(',')
            .map(|s| {
                s.trim().parse::<f64>().map_err(|e| Error::Csv {
                    row,
                    msg: format!("bad float `{s}`: {e}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if cols.len() != 19 {
            return Err(Error::Csv {
                row,
                msg: format!("expected 19 columns, got {}", cols.len()),
            });
        }
        out.push(DiagnosticsRecord {
            t: cols[0],
            mass: cols[1],
            c_l1: cols[2],
            c_l2: cols[3],
            c_linf: cols[4],
            entropy: cols[5],
            grad_c_sq: cols[6],
            kinetic: cols[7],
            f_eps: cols[8],
            dn2_over_n: cols[9],
            dn2_over_n2: cols[10],
            lap_c_sq: cols[11],
            grad_u_sq: cols[12],
            nfc_inst: 0.0,
            cum_dn2_over_n: cols[13],
            cum_dn2_over_n2: 0.0,
            cum_lap_c_sq: cols[14],
            cum_grad_u_sq: cols[15],
            cum_nfc: cols[16],
            n_dist_l1: cols[17],
            pinsker_ratio: cols[18],
        });
    }
    Ok(out)
}
