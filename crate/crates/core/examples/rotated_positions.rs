//! Same flake with coordinates rotated by 45 degrees.

use std::f64::consts::FRAC_PI_2;

use wannier_ladder::lattice::*;
use wannier_ladder::localization::*;
use wannier_ladder::pipeline::*;

fn main() -> wannier_ladder::Result<()> {
    let geom = LatticeGeometry::new(12, 12)?;
    let bc = Boundary::dirichlet();
    let h = build_haldane(&geom, &HaldaneParams::new(1.0, 0.1, 1.0, FRAC_PI_2), bc, &DisorderSpec::clean())?;
    let x = build_position(&geom, PositionLabel::XStandard);
    let xr = build_position(&geom, PositionLabel::XRotated);
    let alt = validate_alt_position(xr.to_operator().matrix().as_ref(), &x)?;
    println!("rotated X: symmetric {}, max |X' - X| {:.3}", alt.symmetric, alt.bounded_diff);
    for (name, a, b) in [
        ("standard", PositionLabel::XStandard, PositionLabel::YStandard),
        ("rotated", PositionLabel::XRotated, PositionLabel::YRotated),
    ] {
        let set = run_pipeline(&h, &PipelineConfig::new(build_position(&geom, a), build_position(&geom, b)))?;
        let gammas: Vec<f64> = set
            .functions
            .iter()
            .filter_map(|f| fit_gwf(f, &geom, bc).ok())
            .filter(|fit| is_interior(fit.center, &geom, bc) && !fit.saturated)
            .map(|fit| fit.gamma)
            .collect();
        println!("{name}: {} bands, median interior gamma {:.3}", set.clusters.len(), median(&gammas).unwrap_or(f64::NAN));
    }
    Ok(())
}
