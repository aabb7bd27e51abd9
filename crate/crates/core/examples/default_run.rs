//! Run the default scenario and print the stabilization picture.

use tmcf::diagnostics::{detect_stabilization, ThresholdParams};
use tmcf::solver::{run_simulation, SimConfig};

fn main() {
    let mut cfg = SimConfig::default_scenario();
    if let Some(n) = std::env::args().nth(1).and_then(|v| v.parse().ok()) {
        cfg.grid.nx = n;
        cfg.grid.ny = n;
    }
    if let Some(t) = std::env::args().nth(2).and_then(|v| v.parse().ok()) {
        cfg.t_end = t;
    }
    let run = run_simulation(&cfg).unwrap();
    let th = ThresholdParams::default();
    println!(
        "steps {} mass_drift {:e} min_n {:e} min_c {:e} max_div {:e}",
        run.steps_done,
        run.audit.max_rel_mass_drift,
        run.audit.min_n,
        run.audit.min_c,
        run.audit.max_div_u
    );
    println!(
        "norm increases: l1 {:e} l2 {:e} linf {:e}",
        run.audit.max_c_l1_increase, run.audit.max_c_l2_increase, run.audit.max_c_linf_increase
    );
    for r in run.records.iter().step_by(run.records.len().max(16) / 16) {
        println!(
            "t {:8.4}  F {:10.3e}  entropy {:10.3e}  grad_c {:10.3e}  kin {:10.3e}  c_inf {:10.3e}  n_l1 {:10.3e}  u_l2 {:10.3e}",
            r.t,
            r.f_eps,
            r.entropy,
            r.grad_c_sq,
            r.kinetic,
            r.c_linf,
            r.n_dist_l1,
            r.kinetic.sqrt()
        );
    }
    let last = run.records.last().unwrap();
    println!(
        "final: F {:e} c_linf {:e} u_l2 {:e} n_dist {:e} cum_nfc {:e}",
        last.f_eps,
        last.c_linf,
        last.kinetic.sqrt(),
        last.n_dist_l1,
        last.cum_nfc
    );
    let r0 = &run.records[0];
    println!(
        "budget check: cum_nfc {:e} vs c0_l1 - c_l1(final) = {:e}",
        last.cum_nfc,
        r0.c_l1 - last.c_l1
    );
    println!("t0 = {:?}", detect_stabilization(&run.records, &th));
}
