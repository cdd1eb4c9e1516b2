//! Full pipeline on a trivial flake: build the functions and check the frame.

use std::f64::consts::FRAC_PI_2;

use wannier_ladder::lattice::*;
use wannier_ladder::localization::*;
use wannier_ladder::pipeline::*;

fn main() -> wannier_ladder::Result<()> {
    let geom = LatticeGeometry::new(12, 12)?;
    let params = HaldaneParams::new(1.0, 0.1, 1.0, FRAC_PI_2);
    let h = build_haldane(&geom, &params, Boundary::dirichlet(), &DisorderSpec::clean())?;
    let cfg = PipelineConfig::new(
        build_position(&geom, PositionLabel::XStandard),
        build_position(&geom, PositionLabel::YStandard),
    );
    let set = run_pipeline(&h, &cfg)?;
    println!("{} functions in {} bands, H gap {:.5}", set.functions.len(), set.clusters.len(), set.h_gap());
    for f in set.functions.iter().step_by(29) {
        let map = amplitude_map(&f.psi, &geom)?;
        let ((m, n), peak) = map.peak();
        println!("band {:2}  center ({:6.3}, {:6.3})  peak |psi| {peak:.3} at ({m}, {n})", f.band_index, f.center_a, f.center_b);
    }
    let frame = frame_checks(&set.functions, &set.projection);
    println!("orthonormality {:.2e}, completeness {:.2e}", frame.orthonormality_residual, frame.completeness_residual);
    Ok(())
}
