//! Parallel transport around k1, Berry phases, and mending into a periodic gauge.

use std::f64::consts::FRAC_PI_2;

use wannier_ladder::lattice::HaldaneParams;
use wannier_ladder::topology::*;

fn main() -> wannier_ladder::Result<()> {
    let params = HaldaneParams::new(1.0, 0.2, 0.8, FRAC_PI_2);
    for k2 in [0.0, 1.5, 3.0] {
        let frame = transport_frame(&k1_loop(&params, k2, 96, 0.0)?)?;
        println!("k2 = {k2:.2}: Berry phase {:+.6}", frame.berry_phase());
    }
    for (name, params) in [("trivial", HaldaneParams::new(1.0, 0.1, 2.0, FRAC_PI_2)), ("topological", params)] {
        match mend_periodic(&loop_unitaries(&params, 48, 48, 0.0)?)? {
            MendOutcome::Periodic(m) => println!("{name}: mended, cut at {:.4}, max jump {:.2e}", m.cut_phase, m.max_jump),
            MendOutcome::Obstructed { coverage_gap, winding } => {
                println!("{name}: obstructed, avoided arc {coverage_gap:.3}, winding {winding}")
            }
        }
    }
    Ok(())
}
