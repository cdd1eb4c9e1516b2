//! Projected position spectrum `PXP` and its gap-separated clusters.

use std::f64::consts::FRAC_PI_2;

use wannier_ladder::lattice::*;
use wannier_ladder::pipeline::*;
use wannier_ladder::spectral::*;

fn main() -> wannier_ladder::Result<()> {
    let geom = LatticeGeometry::new(12, 12)?;
    let x = build_position(&geom, PositionLabel::XStandard);
    let y = build_position(&geom, PositionLabel::YStandard);
    let cases = [
        ("trivial", HaldaneParams::new(1.0, 0.1, 1.0, FRAC_PI_2)),
        ("topological", HaldaneParams::new(1.0, 0.25, 0.0, FRAC_PI_2)),
    ];
    for (name, params) in cases {
        let h = build_haldane(&geom, &params, Boundary::periodic(), &DisorderSpec::clean())?;
        let p = fermi_projection(&eigh(&h)?, 0.0)?;
        let cfg = PipelineConfig::new(x.clone(), y.clone()).with_rule(ClusterRule::Threshold(0.3));
        let spectrum = projected_spectrum(&p, &cfg)?;
        let r = spectrum.report;
        println!("{name}: {} clusters, d = {:?}, D = {:.4}, passed = {}", r.n_clusters, r.d, r.big_d, r.passed);
        for c in spectrum.clusters.iter().take(3) {
            println!("  [{:.4}, {:.4}] x{}", c.sigma_min, c.sigma_max, c.len());
        }
    }
    Ok(())
}
