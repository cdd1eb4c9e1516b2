//! Chern number from the winding of hybrid charge centers across the phase diagram.

use std::f64::consts::FRAC_PI_2;

use wannier_ladder::lattice::*;
use wannier_ladder::topology::*;

fn main() -> wannier_ladder::Result<()> {
    let geom = LatticeGeometry::new(16, 16)?;
    println!("{:>5} {:>5} {:>8} {:>12}", "v", "t'", "winding", "avoided arc");
    for v in [0.0, 1.0, 2.0] {
        for tp in [0.1, 0.3] {
            let params = HaldaneParams::new(1.0, tp, v, FRAC_PI_2);
            let flow = haldane_charge_centers(&geom, &params, Boundary::periodic(), 0.0)?;
            println!("{v:5.2} {tp:5.2} {:8} {:12.4}", flow.winding, flow.largest_avoided_arc);
        }
    }
    let flipped = haldane_charge_centers(&geom, &HaldaneParams::new(1.0, 0.3, 0.0, -FRAC_PI_2), Boundary::periodic(), 0.0)?;
    println!("phi = -pi/2 flips the sign: {}", flipped.winding);
    Ok(())
}
