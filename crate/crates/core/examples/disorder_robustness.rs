//! Localization of the functions under on-site disorder, seed by seed.

use std::f64::consts::FRAC_PI_2;

use wannier_ladder::lattice::*;
use wannier_ladder::localization::*;
use wannier_ladder::pipeline::*;

fn main() -> wannier_ladder::Result<()> {
    let geom = LatticeGeometry::new(16, 16)?;
    let bc = Boundary::dirichlet();
    let params = HaldaneParams::new(1.0, 0.1, 1.0, FRAC_PI_2);
    let cfg = PipelineConfig::new(
        build_position(&geom, PositionLabel::XStandard),
        build_position(&geom, PositionLabel::YStandard),
    );
    for seed in 0..4 {
        let h = build_haldane(&geom, &params, bc, &DisorderSpec::new(0.25, seed))?;
        match run_pipeline(&h, &cfg) {
            Ok(set) => {
                let gammas: Vec<f64> = set
                    .functions
                    .iter()
                    .filter_map(|f| fit_gwf(f, &geom, bc).ok())
                    .filter(|fit| is_interior(fit.center, &geom, bc) && !fit.saturated)
                    .map(|fit| fit.gamma)
                    .collect();
                println!(
                    "seed {seed}: gap {:.3}, {} bands, median gamma {:.3}",
                    set.h_gap(),
                    set.clusters.len(),
                    median(&gammas).unwrap_or(f64::NAN)
                );
            }
            Err(e) => println!("seed {seed}: {e}"),
        }
    }
    Ok(())
}
