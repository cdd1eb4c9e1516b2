//! Spectrum and Fermi gap of a trivial Haldane flake under both boundary conditions.

use std::f64::consts::FRAC_PI_2;

use wannier_ladder::lattice::*;
use wannier_ladder::spectral::*;

fn main() -> wannier_ladder::Result<()> {
    let geom = LatticeGeometry::new(16, 16)?;
    let params = HaldaneParams::new(1.0, 0.1, 1.0, FRAC_PI_2);
    for (name, bc) in [("dirichlet", Boundary::dirichlet()), ("periodic", Boundary::periodic())] {
        let h = build_haldane(&geom, &params, bc, &DisorderSpec::clean())?;
        let dec = eigh(&h)?;
        let p = fermi_projection(&dec, 0.0)?;
        let e = dec.eigenvalues();
        println!("{name:>9}: E in [{:.4}, {:.4}], n_occ = {}, gap = {:.5}", e[0], e[e.len() - 1], p.n_occ(), p.gap());
    }
    println!("critical |v| = {:.4}, topological: {}", params.critical_v(), params.is_topological());
    Ok(())
}
