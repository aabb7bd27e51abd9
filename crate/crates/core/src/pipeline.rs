//! Command-level orchestration shared by the CLI and the integration
//! tests: config parsing with hypothesis checks, artifact emission
//! (JSON reports, CSV time series, checkpoints) and the run manifest.
//!
//! Artifacts are deterministic: identical config, master seed and tool
//! version produce byte-identical files. Nothing here writes wall-clock
//! time or machine-specific data.

use crate::diagnostics::{self, ThresholdParams};
use crate::error::{Error, Result};
use crate::ineq::{self, EnsembleConfig, IneqKind, IneqReport, RandomFieldSpec};
use crate::solver::{self, CheckpointManifest, GridConfig, SimConfig};
use crate::variational::{estimate_beta0, Beta0Estimate, Beta0Opts};
use crate::TOOL_VERSION;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// FNV-1a 64-bit digest, hex encoded; stable across platforms.
pub fn fnv1a_hex(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

/// Digest of the canonicalized (sorted-key JSON) form of a config value.
pub fn config_hash<T: Serialize>(cfg: &T) -> Result<String> {
    let value = serde_json::to_value(cfg)?;
    Ok(fnv1a_hex(serde_json::to_string(&value)?.as_bytes()))
}

/// Provenance record written next to every command's artifacts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: String,
    pub output_dir: String,
    pub master_seed: u64,
    pub tool_version: String,
    pub config_hash: String,
}

pub fn write_manifest(out_dir: &Path, manifest: &RunManifest) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(
        out_dir.join("run-manifest.json"),
        serde_json::to_string_pretty(manifest)?,
    )?;
    Ok(())
}

pub fn make_manifest<T: Serialize>(
    command: &str,
    config_path: &str,
    output_dir: &str,
    master_seed: u64,
    cfg: &T,
) -> Result<RunManifest> {
    Ok(RunManifest {
        command: command.to_string(),
        config_path: config_path.to_string(),
        output_dir: output_dir.to_string(),
        master_seed,
        tool_version: TOOL_VERSION.to_string(),
        config_hash: config_hash(cfg)?,
    })
}

// ---------------------------------------------------------------------
// estimate-beta0
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Beta0Config {
    pub grid: GridConfig,
    #[serde(flatten)]
    pub opts: Beta0Opts,
}

pub fn parse_beta0_config(text: &str) -> Result<Beta0Config> {
    let cfg: Beta0Config = serde_json::from_str(text)?;
    cfg.grid.build()?;
    if !(cfg.opts.beta_hi_start > 0.0)
        || cfg.opts.beta_hi_start > 2.0 * std::f64::consts::PI + 1e-12
    {
        return Err(Error::Hypothesis {
            id: "weight-search-range",
            msg: format!(
                "beta_hi_start must lie in (0, 2*pi], got {}",
                cfg.opts.beta_hi_start
            ),
        });
    }
    if !(cfg.opts.tol_zero > 0.0) {
        return Err(Error::Hypothesis {
            id: "threshold-positive",
            msg: "tol_zero must be positive".into(),
        });
    }
    Ok(cfg)
}

/// Run the estimator and write `beta0-report.json`.
pub fn cmd_estimate_beta0(cfg: &Beta0Config, out_dir: &Path, seed: u64) -> Result<Beta0Estimate> {
    let grid = cfg.grid.build()?;
    let estimate = estimate_beta0(grid, &cfg.opts, seed)?;
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(
        out_dir.join("beta0-report.json"),
        serde_json::to_string_pretty(&estimate)?,
    )?;
    Ok(estimate)
}

pub fn read_beta0_report(path: &Path) -> Result<Beta0Estimate> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

// ---------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub grid: GridConfig,
    pub kind: IneqKind,
    pub count: usize,
    pub field: RandomFieldSpec,
    /// Weight of the split in inequality (1); unused by the others.
    #[serde(default = "default_a")]
    pub a: f64,
    /// Either a literal weight or a path to an estimator report.
    #[serde(default)]
    pub beta0: Option<f64>,
    #[serde(default)]
    pub beta0_report: Option<String>,
}

fn default_a() -> f64 {
    1.0
}

pub fn parse_verify_config(text: &str) -> Result<VerifyConfig> {
    let cfg: VerifyConfig = serde_json::from_str(text)?;
    cfg.grid.build()?;
    if !(cfg.a > 0.0) {
        return Err(Error::Hypothesis {
            id: "positive-parameters",
            msg: format!("a must be positive, got {}", cfg.a),
        });
    }
    match (&cfg.beta0, &cfg.beta0_report) {
        (None, None) => Err(Error::Hypothesis {
            id: "positive-parameters",
            msg: "one of `beta0` or `beta0_report` is required".into(),
        }),
        (Some(b), _) if !(*b > 0.0) => Err(Error::Hypothesis {
            id: "positive-parameters",
            msg: format!("beta0 must be positive, got {b}"),
        }),
        _ => Ok(cfg),
    }
}

fn resolve_beta0(cfg: &VerifyConfig) -> Result<f64> {
    if let Some(b) = cfg.beta0 {
        return Ok(b);
    }
    // Relative paths resolve against the working directory, like the
    // config path itself.
    let path = cfg.beta0_report.as_ref().expect("validated");
    let report = read_beta0_report(Path::new(path))?;
    Ok(report.beta0_hat)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifySummary {
    pub kind: IneqKind,
    pub count: usize,
    pub beta0: f64,
    pub a: f64,
    pub min_margin: f64,
    pub median_margin: f64,
    pub failures: usize,
    pub worst_seed: Option<u64>,
    /// Negative margins are soft findings, not errors: they are evidence
    /// for shrinking the weight estimate.
    pub soft_findings: Vec<String>,
}

/// Run an ensemble (or replay one seed) and write `ineq-report.csv` plus
/// `verify-summary.json`.
pub fn cmd_verify(
    cfg: &VerifyConfig,
    out_dir: &Path,
    master_seed: u64,
    replay_seed: Option<u64>,
) -> Result<VerifySummary> {
    let grid = cfg.grid.build()?;
    let beta0 = resolve_beta0(cfg)?;
    let ecfg = EnsembleConfig {
        kind: cfg.kind,
        count: cfg.count,
        field: cfg.field.clone(),
        a: cfg.a,
        beta0,
    };
    let report: IneqReport = match replay_seed {
        Some(seed) => {
            let sample = ineq::eval_sample(grid, &ecfg, seed)?;
            IneqReport {
                kind: cfg.kind,
                count: 1,
                min_margin: sample.margin,
                median_margin: sample.margin,
                failures: usize::from(sample.margin < 0.0),
                worst_seed: Some(seed),
                samples: vec![sample],
            }
        }
        None => ineq::run_ensemble(grid, &ecfg, master_seed)?,
    };
    let mut soft_findings = Vec::new();
    if report.failures > 0 {
        soft_findings.push(format!(
            "{} of {} samples had negative margin (worst seed {:?}); treat as evidence to shrink beta0",
            report.failures, report.count, report.worst_seed
        ));
    }
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(
        out_dir.join("ineq-report.csv"),
        ineq::report_to_csv(&report),
    )?;
    let summary = VerifySummary {
        kind: cfg.kind,
        count: report.count,
        beta0,
        a: cfg.a,
        min_margin: report.min_margin,
        median_margin: report.median_margin,
        failures: report.failures,
        worst_seed: report.worst_seed,
        soft_findings,
    };
    std::fs::write(
        out_dir.join("verify-summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(summary)
}

// ---------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------

pub fn parse_sim_config(text: &str) -> Result<SimConfig> {
    let cfg: SimConfig = serde_json::from_str(text)?;
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulateSummary {
    pub steps: usize,
    pub t_final: f64,
    pub mass_drift: f64,
    pub min_n: f64,
    pub min_c: f64,
    pub max_div_u: f64,
    pub aborted: Option<String>,
}

/// Run the simulation, stream diagnostics to `diagnostics.csv`, checkpoint
/// the final (or last-good) state, and enforce the hard invariants.
pub fn cmd_simulate(cfg: &SimConfig, out_dir: &Path) -> Result<SimulateSummary> {
    let grid = cfg.validate()?;
    let hash = config_hash(cfg)?;
    let run = solver::run_simulation(cfg)?;
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(
        out_dir.join("diagnostics.csv"),
        diagnostics::records_to_csv(&run.records),
    )?;
    let n0 = cfg.initial.n.build(grid);
    let c0 = cfg.initial.c.build(grid);
    let manifest = CheckpointManifest {
        t: run.final_state.t,
        step: run.steps_done,
        config_hash: hash,
        dt: run.dt,
        consumed_c_total: run.consumed_c_total,
        baseline: diagnostics::Baseline::from_initial(&n0, &c0),
        last_record: *run.records.last().expect("at least the initial record"),
    };
    solver::save_checkpoint(&out_dir.join("checkpoint"), &run.final_state, &manifest)?;

    let summary = SimulateSummary {
        steps: run.steps_done,
        t_final: run.final_state.t,
        mass_drift: run.audit.max_rel_mass_drift,
        min_n: run.audit.min_n,
        min_c: run.audit.min_c,
        max_div_u: run.audit.max_div_u,
        aborted: run.abort.as_ref().map(|e| e.to_string()),
    };
    std::fs::write(
        out_dir.join("simulate-summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;

    if let Some(e) = run.abort {
        return Err(e);
    }
    if let Some((id, msg)) = run.audit.hard_violation(1e-8, 1e-8) {
        return Err(Error::Invariant {
            id,
            t: run.final_state.t,
            msg,
        });
    }
    Ok(summary)
}

// ---------------------------------------------------------------------
// report
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportConfig {
    pub diagnostics_path: String,
    #[serde(default = "default_delta0")]
    pub delta0: f64,
    #[serde(default = "default_window")]
    pub stabilization_window: usize,
    #[serde(default = "default_mass_tol")]
    pub mass_tol: f64,
}

fn default_delta0() -> f64 {
    1e-2
}
fn default_window() -> usize {
    5
}
fn default_mass_tol() -> f64 {
    1e-8
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InvariantViolation {
    pub id: String,
    pub t: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FinalMetrics {
    pub t: f64,
    pub mass: f64,
    pub c_linf: f64,
    pub u_l2: f64,
    pub n_dist_l1: f64,
    pub f_eps: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportSummary {
    pub t0_detected: Option<f64>,
    pub final_metrics: FinalMetrics,
    pub invariant_violations: Vec<InvariantViolation>,
}

/// Post-process a diagnostics series: stabilization detection, final
/// metrics, and scan for invariant violations across the samples.
pub fn cmd_report(cfg: &ReportConfig, out_dir: &Path) -> Result<ReportSummary> {
    let text = std::fs::read_to_string(&cfg.diagnostics_path)?;
    let records = diagnostics::records_from_csv(&text)?;
    if records.is_empty() {
        return Err(Error::Csv {
            row: 1,
            msg: "diagnostics series is empty".into(),
        });
    }
    let th = ThresholdParams {
        delta0: cfg.delta0,
        stabilization_window: cfg.stabilization_window,
    };
    let t0_detected = diagnostics::detect_stabilization(&records, &th);

    let mut violations = Vec::new();
    let mass0 = records[0].mass;
    for r in &records {
        if (r.mass - mass0).abs() > cfg.mass_tol * mass0.abs().max(1e-300) {
            violations.push(InvariantViolation {
                id: "mass-conservation".into(),
                t: r.t,
                detail: format!("mass {} deviates from initial {}", r.mass, mass0),
            });
        }
        if r.entropy < -1e-12 {
            violations.push(InvariantViolation {
                id: "entropy-nonnegative".into(),
                t: r.t,
                detail: format!("entropy {}", r.entropy),
            });
        }
    }
    let slack = 1e-12;
    for w in records.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        for (name, va, vb) in [
            ("attractant-l1-monotone", a.c_l1, b.c_l1),
            ("attractant-l2-monotone", a.c_l2, b.c_l2),
            ("attractant-linf-monotone", a.c_linf, b.c_linf),
        ] {
            if vb > va + slack {
                violations.push(InvariantViolation {
                    id: name.into(),
                    t: b.t,
                    detail: format!("{va} -> {vb}"),
                });
            }
        }
    }

    let last = records.last().unwrap();
    let summary = ReportSummary {
        t0_detected,
        final_metrics: FinalMetrics {
            t: last.t,
            mass: last.mass,
            c_linf: last.c_linf,
            u_l2: last.kinetic.max(0.0).sqrt(),
            n_dist_l1: last.n_dist_l1,
            f_eps: last.f_eps,
        },
        invariant_violations: violations,
    };
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(
        out_dir.join("summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(summary)
}

// ---------------------------------------------------------------------
// full pipeline (estimate -> verify -> simulate -> report)
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub beta0: Beta0Config,
    pub verify_count: usize,
    pub verify_field: RandomFieldSpec,
    pub simulate: SimConfig,
    #[serde(default = "default_delta0")]
    pub delta0: f64,
}

/// The whole chain with one master seed; used by reproducibility checks.
pub fn run_pipeline(cfg: &PipelineConfig, out_dir: &Path, seed: u64) -> Result<()> {
    let est = cmd_estimate_beta0(&cfg.beta0, out_dir, seed)?;
    for kind in [IneqKind::Ineq1, IneqKind::Ineq2, IneqKind::Corollary] {
        let vcfg = VerifyConfig {
            grid: cfg.beta0.grid,
            kind,
            count: cfg.verify_count,
            field: cfg.verify_field.clone(),
            a: 1.0,
            beta0: Some(est.beta0_hat),
            beta0_report: None,
        };
        let sub = out_dir.join(format!("verify-{kind}"));
        cmd_verify(&vcfg, &sub, seed, None)?;
    }
    cmd_simulate(&cfg.simulate, &out_dir.join("sim"))?;
    let rcfg = ReportConfig {
        diagnostics_path: out_dir
            .join("sim")
            .join("diagnostics.csv")
            .to_string_lossy()
            .into_owned(),
        delta0: cfg.delta0,
        stabilization_window: default_window(),
        mass_tol: default_mass_tol(),
    };
    cmd_report(&rcfg, &out_dir.join("report"))?;
    Ok(())
}
