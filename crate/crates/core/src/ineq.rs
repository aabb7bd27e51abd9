//! Two-sided evaluation of the entropy-gradient inequalities on field
//! ensembles.
//!
//! For a positive density `psi` with mean `psi_bar` and any `phi`, the
//! verified bounds are
//!
//! ```text
//! (1)  integral phi (psi - psi_bar)
//!        <= 1/a * integral psi ln(psi/psi_bar)
//!           + a/(4 beta0) * {integral psi} * integral |grad phi|^2
//! (2)  integral psi ln(psi/psi_bar)
//!        <= 1/beta0 * {integral psi} * integral |grad ln(psi)|^2
//! (C)  integral e^phi <= area * exp( 1/(4 beta) |grad phi|^2 + mean(phi) )
//! ```
//!
//! with `beta0` supplied by the variational estimator. Margins are data:
//! a negative margin is never an error here, it is evidence against the
//! estimate and is reported for replay.

use crate::error::{Error, Result};
use crate::grid::{grad_norm_sq, gradient_neumann, integrate, mean, Grid, ScalarBc, ScalarField};
use crate::variational::{exp_integral, log_mean_exp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// One evaluated sample. `margin = rhs - lhs`; nonnegative when the bound
/// holds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IneqSample {
    pub seed: u64,
    pub kind: IneqKind,
    pub a: f64,
    pub beta0: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IneqKind {
    Ineq1,
    Ineq2,
    Corollary,
}

impl std::fmt::Display for IneqKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            IneqKind::Ineq1 => write!(f, "ineq1"),
            IneqKind::Ineq2 => write!(f, "ineq2"),
            IneqKind::Corollary => write!(f, "corollary"),
        }
    }
}

impl std::str::FromStr for IneqKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ineq1" => Ok(IneqKind::Ineq1),
            "ineq2" => Ok(IneqKind::Ineq2),
            "corollary" => Ok(IneqKind::Corollary),
            other => Err(Error::Config(format!("unknown inequality kind `{other}`"))),
        }
    }
}

/// How a generated field is made strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Positivity {
    /// `psi = exp(field)`; strictly positive for any amplitude.
    ExpTransform,
    /// Shift so the minimum sits at `amplitude * 1e-3`, then clip there.
    ShiftClip,
}

/// Truncated cosine-series ensemble member. Cosines have vanishing normal
/// derivative on the rectangle, so generated fields are compatible with the
/// Neumann operators and margins carry no boundary pollution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RandomFieldSpec {
    pub max_frequency: usize,
    pub amplitude: f64,
    pub positivity: Positivity,
    pub seed: u64,
}

impl Default for RandomFieldSpec {
    fn default() -> Self {
        RandomFieldSpec {
            max_frequency: 6,
            amplitude: 1.0,
            positivity: Positivity::ExpTransform,
            seed: 0,
        }
    }
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.gen_range(1e-300..1.0);
    let v: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    (-2.0 * u.ln()).sqrt() * v.cos()
}

/// Draw the cosine coefficients of a field: seeded Gaussians scaled by
/// `amplitude / (1 + jx^2 + jy^2)`.
pub fn draw_coefficients(spec: &RandomFieldSpec) -> Vec<f64> {
    let m = spec.max_frequency + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut coef = vec![0.0; m * m];
    for jy in 0..m {
        for jx in 0..m {
            if jx == 0 && jy == 0 {
                continue; // constant offset stays zero; positivity handles levels
            }
            coef[jy * m + jx] =
                spec.amplitude * standard_normal(&mut rng) / (1.0 + (jx * jx + jy * jy) as f64);
        }
    }
    coef
}

/// Synthesize the raw (possibly signed) cosine series of a spec.
pub fn raw_cosine_field(grid: Grid, spec: &RandomFieldSpec) -> ScalarField {
    let m = spec.max_frequency + 1;
    let coef = draw_coefficients(spec);
    ScalarField::from_fn(grid, ScalarBc::Neumann, |x, y| {
        let mut acc = 0.0;
        for jy in 0..m {
            let cy = (jy as f64 * std::f64::consts::PI * y / grid.ly).cos();
            for jx in 0..m {
                let c = coef[jy * m + jx];
                if c != 0.0 {
                    acc += c * (jx as f64 * std::f64::consts::PI * x / grid.lx).cos() * cy;
                }
            }
        }
        acc
    })
}

/// Generate a smooth field with the requested positivity transform.
pub fn random_smooth_field(grid: Grid, spec: &RandomFieldSpec) -> ScalarField {
    let raw = raw_cosine_field(grid, spec);
    match spec.positivity {
        Positivity::ExpTransform => raw.map(f64::exp),
        Positivity::ShiftClip => {
            let floor = spec.amplitude.abs().max(1e-12) * 1e-3;
            let shift = floor - raw.min();
            raw.map(|v| (v + shift).max(floor))
        }
    }
}

fn require_positive(psi: &ScalarField) -> Result<()> {
    let m = psi.min();
    if !(m > 0.0) {
        return Err(Error::Hypothesis {
            id: "density-positivity",
            msg: format!("psi must be strictly positive, min = {m}"),
        });
    }
    Ok(())
}

/// Relative entropy `integral psi ln(psi / mean(psi))`; nonnegative for
/// positive fields.
pub fn relative_entropy(psi: &ScalarField) -> f64 {
    let pb = mean(psi);
    psi.values.iter().map(|&v| v * (v / pb).ln()).sum::<f64>() * psi.grid.cell_area()
}

/// Both sides of inequality (1) for the pair `(phi, psi)`.
pub fn ineq1_sides(phi: &ScalarField, psi: &ScalarField, a: f64, beta0: f64) -> Result<(f64, f64)> {
    if !(a > 0.0) || !(beta0 > 0.0) {
        return Err(Error::Hypothesis {
            id: "positive-parameters",
            msg: format!("a and beta0 must be positive, got a = {a}, beta0 = {beta0}"),
        });
    }
    require_positive(psi)?;
    let pb = mean(psi);
    let lhs = phi
        .values
        .iter()
        .zip(psi.values.iter())
        .map(|(&f, &p)| f * (p - pb))
        .sum::<f64>()
        * phi.grid.cell_area();
    let rhs = relative_entropy(psi) / a + a / (4.0 * beta0) * integrate(psi) * grad_norm_sq(phi);
    Ok((lhs, rhs))
}

/// Both sides of inequality (2). The second returned right-hand side is the
/// chain-rule variant `2/beta0 * {integral psi} * integral |grad psi|^2 / psi^2`.
pub fn ineq2_sides(psi: &ScalarField, beta0: f64) -> Result<(f64, f64, f64)> {
    if !(beta0 > 0.0) {
        return Err(Error::Hypothesis {
            id: "positive-parameters",
            msg: format!("beta0 must be positive, got {beta0}"),
        });
    }
    require_positive(psi)?;
    let lhs = relative_entropy(psi);
    let log_psi = ScalarField {
        grid: psi.grid,
        values: psi.values.iter().map(|v| v.ln()).collect(),
        bc: ScalarBc::Neumann,
    };
    let rhs = integrate(psi) / beta0 * grad_norm_sq(&log_psi);

    // Variant: |grad psi|^2 / psi^2 with psi averaged to faces.
    let g = psi.grid;
    let gr = gradient_neumann(psi);
    let mut acc = 0.0;
    for j in 0..g.ny {
        for i in 1..g.nx {
            let d = gr.fx[g.fx_idx(i, j)];
            let pf = 0.5 * (psi.values[g.idx(i - 1, j)] + psi.values[g.idx(i, j)]);
            acc += d * d / (pf * pf);
        }
    }
    for j in 1..g.ny {
        for i in 0..g.nx {
            let d = gr.fy[g.fy_idx(i, j)];
            let pf = 0.5 * (psi.values[g.idx(i, j - 1)] + psi.values[g.idx(i, j)]);
            acc += d * d / (pf * pf);
        }
    }
    let rhs_variant = 2.0 * integrate(psi) / beta0 * acc * g.cell_area();
    Ok((lhs, rhs, rhs_variant))
}

/// Both sides of the exponential-embedding bound at weight `beta`, plus the
/// log-space margin `ln(rhs) - ln(lhs)` which stays finite for any field.
pub fn corollary_bound_sides(phi: &ScalarField, beta: f64) -> (f64, f64, f64) {
    assert!(beta > 0.0, "beta must be positive");
    let area = phi.grid.area();
    let log_lhs = log_mean_exp(phi) + area.ln();
    let log_rhs = area.ln() + grad_norm_sq(phi) / (4.0 * beta) + mean(phi);
    (exp_integral(phi), log_rhs.exp(), log_rhs - log_lhs)
}

/// Ensemble configuration for one run of the verifier.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub kind: IneqKind,
    pub count: usize,
    pub field: RandomFieldSpec,
    /// Weight parameter `a` of inequality (1); ignored by the others.
    pub a: f64,
    pub beta0: f64,
}

/// Summary of an ensemble, with the worst seed kept for replay.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IneqReport {
    pub kind: IneqKind,
    pub count: usize,
    pub min_margin: f64,
    pub median_margin: f64,
    /// Samples with `margin < 0`.
    pub failures: usize,
    pub worst_seed: Option<u64>,
    pub samples: Vec<IneqSample>,
}

/// Evaluate one sample; the per-sample seed fully determines the fields.
pub fn eval_sample(grid: Grid, cfg: &EnsembleConfig, seed: u64) -> Result<IneqSample> {
    let mk = |role: u64, positivity: Positivity| RandomFieldSpec {
        seed: seed ^ role,
        positivity,
        ..cfg.field.clone()
    };
    let (lhs, rhs) = match cfg.kind {
        IneqKind::Ineq1 => {
            // phi is a free test field, psi a positive density.
            let phi = raw_cosine_field(grid, &mk(0x5151_5151, cfg.field.positivity));
            let psi = random_smooth_field(grid, &mk(0xabab_abab, cfg.field.positivity));
            ineq1_sides(&phi, &psi, cfg.a, cfg.beta0)?
        }
        IneqKind::Ineq2 => {
            let psi = random_smooth_field(grid, &mk(0xabab_abab, cfg.field.positivity));
            let (l, r, _) = ineq2_sides(&psi, cfg.beta0)?;
            (l, r)
        }
        IneqKind::Corollary => {
            let phi = raw_cosine_field(grid, &mk(0x5151_5151, cfg.field.positivity));
            let (l, r, _) = corollary_bound_sides(&phi, cfg.beta0);
            (l, r)
        }
    };
    Ok(IneqSample {
        seed,
        kind: cfg.kind,
        a: cfg.a,
        beta0: cfg.beta0,
        lhs,
        rhs,
        margin: rhs - lhs,
    })
}

/// Run a deterministic ensemble: sample i uses seed `master_seed + i`.
/// Samples are independent; the reduction is ordered by seed, so the report
/// does not depend on scheduling.
pub fn run_ensemble(grid: Grid, cfg: &EnsembleConfig, master_seed: u64) -> Result<IneqReport> {
    let samples: Vec<IneqSample> = (0..cfg.count as u64)
        .into_par_iter()
        .map(|i| eval_sample(grid, cfg, master_seed.wrapping_add(i)))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(cfg.kind, samples))
}

fn summarize(kind: IneqKind, samples: Vec<IneqSample>) -> IneqReport {
    let count = samples.len();
    let mut margins: Vec<f64> = samples.iter().map(|s| s.margin).collect();
    margins.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let min_margin = margins.first().copied().unwrap_or(0.0);
    let median_margin = if margins.is_empty() {
        0.0
    } else {
        margins[margins.len() / 2]
    };
    let failures = margins.iter().filter(|&&m| m < 0.0).count();
    let worst_seed = samples
        .iter()
        .min_by(|a, b| a.margin.partial_cmp(&b.margin).unwrap())
        .map(|s| s.seed);
    IneqReport {
        kind,
        count,
        min_margin,
        median_margin,
        failures,
        worst_seed,
        samples,
    }
}

/// CSV document with columns `seed,kind,a,beta0,lhs,rhs,margin`.
pub fn report_to_csv(report: &IneqReport) -> String {
    let mut out = String::with_capacity(report.samples.len() * 64 + 32);
    out.push_str("seed,kind,a,beta0,lhs,rhs,margin\n");
    for s in &report.samples {
        let _ = writeln!(
            out,
            "{},{},{:e},{:e},{:e},{:e},{:e}",
            s.seed, s.kind, s.a, s.beta0, s.lhs, s.rhs, s.margin
        );
    }
    out
}
