//! Command-line entry point tying the three pillars together.
//!
//! Exit codes: 0 clean, 2 hypothesis rejected at parse time, 3 runtime
//! invariant violation, 4 solver non-convergence, 1 other failures.
//! Negative inequality margins are soft findings and exit 0.

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use tmcf::pipeline::{
    cmd_estimate_beta0, cmd_report, cmd_simulate, cmd_verify, make_manifest, parse_beta0_config,
    parse_sim_config, parse_verify_config, write_manifest, ReportConfig,
};
use tmcf::Error;

#[derive(Parser)]
#[command(
    name = "tmcf",
    version,
    about = "Sharp-constant estimation, inequality verification and chemotaxis-fluid simulation on a rectangle"
)]
struct Cli {
    /// Cap on internal parallelism (also via TMCF_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the sharp exponential-embedding weight by bisection.
    EstimateBeta0 {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Master seed for the multistart fields.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Evaluate an inequality ensemble and report margins.
    Verify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Re-evaluate a single recorded sample instead of the ensemble.
        #[arg(long)]
        replay_seed: Option<u64>,
    },
    /// Time-step the chemotaxis-fluid system with full diagnostics.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Post-process a diagnostics series into a summary document.
    Report {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn init_threads(flag: Option<usize>) {
    let n = flag.or_else(|| {
        std::env::var("TMCF_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = n {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    init_threads(cli.threads);
    match cli.command {
        Command::EstimateBeta0 { config, out, seed } => {
            let text = std::fs::read_to_string(&config)?;
            let cfg = parse_beta0_config(&text)?;
            let manifest = make_manifest(
                "estimate-beta0",
                &config.to_string_lossy(),
                &out.to_string_lossy(),
                seed,
                &cfg,
            )?;
            let estimate = cmd_estimate_beta0(&cfg, &out, seed)?;
            write_manifest(&out, &manifest)?;
            println!(
                "beta0_hat = {:.6} bracket = [{:.6}, {:.6}]{}",
                estimate.beta0_hat,
                estimate.bracket.0,
                estimate.bracket.1,
                if estimate.no_negative_bracket {
                    " (no negative bracket found)"
                } else {
                    ""
                }
            );
        }
        Command::Verify {
            config,
            out,
            seed,
            replay_seed,
        } => {
            let text = std::fs::read_to_string(&config)?;
            let cfg = parse_verify_config(&text)?;
            let manifest = make_manifest(
                "verify",
                &config.to_string_lossy(),
                &out.to_string_lossy(),
                seed,
                &cfg,
            )?;
            let summary = cmd_verify(&cfg, &out, seed, replay_seed)?;
            write_manifest(&out, &manifest)?;
            println!(
                "{} samples: min margin {:e}, median {:e}, {} negative",
                summary.count, summary.min_margin, summary.median_margin, summary.failures
            );
            for finding in &summary.soft_findings {
                eprintln!("finding: {finding}");
            }
        }
        Command::Simulate { config, out, seed } => {
            let text = std::fs::read_to_string(&config)?;
            let cfg = parse_sim_config(&text)?;
            let manifest = make_manifest(
                "simulate",
                &config.to_string_lossy(),
                &out.to_string_lossy(),
                seed,
                &cfg,
            )?;
            let summary = cmd_simulate(&cfg, &out)?;
            write_manifest(&out, &manifest)?;
            println!(
                "{} steps to t = {}: mass drift {:e}, max |div u| {:e}",
                summary.steps, summary.t_final, summary.mass_drift, summary.max_div_u
            );
        }
        Command::Report { config, out, seed } => {
            let text = std::fs::read_to_string(&config)?;
            let cfg: ReportConfig = serde_json::from_str(&text).map_err(Error::from)?;
            let manifest = make_manifest(
                "report",
                &config.to_string_lossy(),
                &out.to_string_lossy(),
                seed,
                &cfg,
            )?;
            let summary = cmd_report(&cfg, &out)?;
            write_manifest(&out, &manifest)?;
            match summary.t0_detected {
                Some(t0) => println!("stabilization detected at t0 = {t0}"),
                None => println!("no stabilization detected"),
            }
            if !summary.invariant_violations.is_empty() {
                for v in &summary.invariant_violations {
                    eprintln!("violation: {} at t = {} ({})", v.id, v.t, v.detail);
                }
                return Err(Error::Invariant {
                    id: "diagnostics-series",
                    t: summary.final_metrics.t,
                    msg: format!(
                        "{} invariant violations in the series",
                        summary.invariant_violations.len()
                    ),
                });
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
