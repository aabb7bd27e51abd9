//! Simulation configuration: JSON-mirrored structure, initial-data
//! generators, and the hypothesis checks that every run must pass at load
//! time. Each violated hypothesis is rejected with a distinct identifier
//! so callers (and the CLI exit-code contract) can tell them apart.

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarBc, ScalarField, VectorField};
use crate::solver::sensitivity::{CapFn, SensitivityParams};
use crate::solver::velocity::velocity_from_stream;
use crate::solver::Consumption;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
}

impl GridConfig {
    pub fn build(&self) -> Result<Grid> {
        Grid::new(self.nx, self.ny, self.lx, self.ly)
    }
}

/// Cosine-mode sum `base + sum amp cos(jx pi x / lx) cos(jy pi y / ly)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldSpec {
    pub base: f64,
    #[serde(default)]
    pub modes: Vec<Mode>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Mode {
    pub jx: u32,
    pub jy: u32,
    pub amp: f64,
}

impl FieldSpec {
    pub fn build(&self, grid: Grid) -> ScalarField {
        ScalarField::from_fn(grid, ScalarBc::Neumann, |x, y| {
            let mut v = self.base;
            for m in &self.modes {
                v += m.amp
                    * (m.jx as f64 * std::f64::consts::PI * x / grid.lx).cos()
                    * (m.jy as f64 * std::f64::consts::PI * y / grid.ly).cos();
            }
            v
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum VelocitySpec {
    Zero,
    /// Discrete curl of `amp sin(jx pi x / lx) sin(jy pi y / ly)`;
    /// divergence-free with exactly zero normal wall faces.
    Stream {
        amp: f64,
        jx: u32,
        jy: u32,
    },
}

impl VelocitySpec {
    pub fn build(&self, grid: Grid) -> VectorField {
        match self {
            VelocitySpec::Zero => VectorField::zeros(grid, crate::grid::VectorBc::DirichletZero),
            VelocitySpec::Stream { amp, jx, jy } => velocity_from_stream(grid, |x, y| {
                amp * (*jx as f64 * std::f64::consts::PI * x / grid.lx).sin()
                    * (*jy as f64 * std::f64::consts::PI * y / grid.ly).sin()
            }),
        }
    }
}

/// Gravitational-type potential; both options are smooth with bounded
/// second derivatives.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PhiConfig {
    Zero,
    /// `phi = g * y`, constant gradient.
    LinearY {
        g: f64,
    },
    /// Gaussian bump `amp exp(-((x-x0)^2+(y-y0)^2)/(2 sigma^2))`.
    Bump {
        amp: f64,
        x0: f64,
        y0: f64,
        sigma: f64,
    },
}

impl PhiConfig {
    pub fn build(&self, grid: Grid) -> ScalarField {
        match self {
            PhiConfig::Zero => ScalarField::zeros(grid, ScalarBc::Neumann),
            PhiConfig::LinearY { g } => ScalarField::from_fn(grid, ScalarBc::Neumann, |_, y| g * y),
            PhiConfig::Bump { amp, x0, y0, sigma } => {
                let s2 = 2.0 * sigma * sigma;
                ScalarField::from_fn(grid, ScalarBc::Neumann, |x, y| {
                    amp * (-((x - x0).powi(2) + (y - y0).powi(2)) / s2).exp()
                })
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = match self {
            PhiConfig::Zero => true,
            PhiConfig::LinearY { g } => g.is_finite(),
            PhiConfig::Bump { amp, x0, y0, sigma } => {
                amp.is_finite() && x0.is_finite() && y0.is_finite() && *sigma > 0.0
            }
        };
        if finite {
            Ok(())
        } else {
            Err(Error::Hypothesis {
                id: "potential-regularity",
                msg: "potential parameters must be finite (bump sigma positive)".into(),
            })
        }
    }
}

/// Consumption-rate choice mirrored in JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FChoice {
    Linear,
    Table { points: Vec<(f64, f64)> },
}

impl FChoice {
    pub fn build(&self) -> Consumption {
        match self {
            FChoice::Linear => Consumption::Linear,
            FChoice::Table { points } => Consumption::Table(points.clone()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InitialData {
    pub n: FieldSpec,
    pub c: FieldSpec,
    pub u: VelocitySpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub grid: GridConfig,
    /// Time step; `null` selects `0.25 h^2` capped by the advective CFL.
    #[serde(default)]
    pub dt: Option<f64>,
    pub t_end: f64,
    pub initial: InitialData,
    pub sensitivity: SensitivityParams,
    pub f_choice: FChoice,
    pub phi: PhiConfig,
    pub diag_every: usize,
}

impl SimConfig {
    /// The canonical demonstration scenario; also the acceptance workload.
    pub fn default_scenario() -> Self {
        SimConfig {
            grid: GridConfig {
                nx: 64,
                ny: 64,
                lx: 1.0,
                ly: 1.0,
            },
            dt: None,
            t_end: 5.0,
            initial: InitialData {
                n: FieldSpec {
                    base: 1.0,
                    modes: vec![Mode {
                        jx: 1,
                        jy: 1,
                        amp: 0.5,
                    }],
                },
                c: FieldSpec {
                    base: 0.5,
                    modes: vec![Mode {
                        jx: 0,
                        jy: 1,
                        amp: 0.2,
                    }],
                },
                u: VelocitySpec::Zero,
            },
            sensitivity: SensitivityParams {
                a_diag: 1.0,
                b_rot: 0.5,
                s0_cap: CapFn::Constant(10.0),
                eps: 0.1,
                boundary_band: 0.05,
            },
            f_choice: FChoice::Linear,
            phi: PhiConfig::LinearY { g: 0.1 },
            diag_every: 100,
        }
    }

    /// Default step `0.25 h_min^2`; the explicit chemotactic flux is the
    /// stiffest explicit term, and the per-step CFL guard still applies.
    pub fn resolve_dt(&self, grid: Grid) -> f64 {
        self.dt.unwrap_or(0.25 * grid.h_min() * grid.h_min())
    }

    /// All load-time hypothesis checks. Returns the built grid.
    pub fn validate(&self) -> Result<Grid> {
        let grid = self.grid.build()?;
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(Error::Hypothesis {
                id: "time-horizon",
                msg: format!("t_end must be finite and >= 0, got {}", self.t_end),
            });
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) || !dt.is_finite() {
                return Err(Error::Hypothesis {
                    id: "time-step-positive",
                    msg: format!("dt must be positive, got {dt}"),
                });
            }
        }
        if self.diag_every == 0 {
            return Err(Error::Hypothesis {
                id: "diagnostics-cadence",
                msg: "diag_every must be at least 1".into(),
            });
        }

        let n0 = self.initial.n.build(grid);
        if !(n0.min() > 0.0) {
            return Err(Error::Hypothesis {
                id: "initial-density-positive",
                msg: format!(
                    "initial cell density must be strictly positive, min = {}",
                    n0.min()
                ),
            });
        }
        let c0 = self.initial.c.build(grid);
        if !(c0.min() > 0.0) {
            return Err(Error::Hypothesis {
                id: "initial-attractant-positive",
                msg: format!(
                    "initial attractant must be strictly positive, min = {}",
                    c0.min()
                ),
            });
        }

        self.sensitivity.validate()?;
        self.phi.validate()?;
        validate_consumption(&self.f_choice, c0.max())?;
        Ok(grid)
    }
}

/// Consumption-rate hypotheses: `f(0) = 0` and `f > 0` on `(0, c_max]`,
/// sampled densely across the initial range.
pub fn validate_consumption(f: &FChoice, c_max: f64) -> Result<()> {
    match f {
        FChoice::Linear => Ok(()),
        FChoice::Table { points } => {
            if points.is_empty() {
                return Err(Error::Hypothesis {
                    id: "consumption-table-shape",
                    msg: "consumption table is empty".into(),
                });
            }
            for w in points.windows(2) {
                if !(w[1].0 > w[0].0) {
                    return Err(Error::Hypothesis {
                        id: "consumption-table-shape",
                        msg: "table abscissae must be strictly increasing".into(),
                    });
                }
            }
            if points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
                return Err(Error::Hypothesis {
                    id: "consumption-table-shape",
                    msg: "table entries must be finite".into(),
                });
            }
            if points[0].0 != 0.0 || points[0].1 != 0.0 {
                return Err(Error::Hypothesis {
                    id: "consumption-rate-at-zero",
                    msg: format!(
                        "consumption rate must vanish at zero attractant, table starts at ({}, {})",
                        points[0].0, points[0].1
                    ),
                });
            }
            let built = Consumption::Table(points.clone());
            let samples = 128;
            for k in 1..=samples {
                let c = c_max * k as f64 / samples as f64;
                if c > 0.0 && !(built.eval(c) > 0.0) {
                    return Err(Error::Hypothesis {
                        id: "consumption-rate-positive",
                        msg: format!("consumption rate must be positive at c = {c}"),
                    });
                }
            }
            Ok(())
        }
    }
}
