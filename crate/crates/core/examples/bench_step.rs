//! Rough per-step timing of the default scenario.

use std::time::Instant;
use tmcf::solver::{run_simulation, SimConfig};

fn main() {
    let mut cfg = SimConfig::default_scenario();
    let steps: usize = std::env::args()
        .nth(1)
        .and_then(|v| v.parse().ok())
        .unwrap_or(2000);
    let dt = 0.25 / 4096.0;
    cfg.t_end = steps as f64 * dt;
    let t0 = Instant::now();
    let run = run_simulation(&cfg).unwrap();
    let dt_wall = t0.elapsed().as_secs_f64();
    println!(
        "{} steps in {:.2} s ({:.1} us/step); mass drift {:e}, div {:e}, records {}",
        run.steps_done,
        dt_wall,
        dt_wall / run.steps_done as f64 * 1e6,
        run.audit.max_rel_mass_drift,
        run.audit.max_div_u,
        run.records.len()
    );
    let full = (5.0 / dt) as usize;
    println!(
        "projected full run ({} steps): {:.1} s",
        full,
        dt_wall / run.steps_done as f64 * full as f64
    );

    // Substep breakdown on the final state.
    use tmcf::solver::SimContext;
    let mut ctx = SimContext::from_config(&cfg).unwrap();
    let state = run.final_state;
    let reps = 200;
    let t0 = Instant::now();
    for _ in 0..reps {
        std::hint::black_box(ctx.advance_c(&state, dt).unwrap());
    }
    println!(
        "advance_c: {:.0} us",
        t0.elapsed().as_secs_f64() / reps as f64 * 1e6
    );
    let t0 = Instant::now();
    for _ in 0..reps {
        std::hint::black_box(ctx.advance_n(&state, dt).unwrap());
    }
    println!(
        "advance_n: {:.0} us",
        t0.elapsed().as_secs_f64() / reps as f64 * 1e6
    );
    let t0 = Instant::now();
    for _ in 0..reps {
        std::hint::black_box(ctx.advance_u(&state, dt).unwrap());
    }
    println!(
        "advance_u: {:.0} us",
        t0.elapsed().as_secs_f64() / reps as f64 * 1e6
    );
}
