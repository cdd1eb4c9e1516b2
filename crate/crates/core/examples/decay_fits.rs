//! Envelope decay rates of the functions and of the Fermi-projection kernel.

use std::f64::consts::FRAC_PI_2;

use wannier_ladder::lattice::*;
use wannier_ladder::localization::*;
use wannier_ladder::pipeline::*;

fn main() -> wannier_ladder::Result<()> {
    let bc = Boundary::dirichlet();
    let params = HaldaneParams::new(1.0, 0.1, 1.0, FRAC_PI_2);
    let mut per_size = Vec::new();
    for n in [12, 18] {
        let geom = LatticeGeometry::new(n, n)?;
        let h = build_haldane(&geom, &params, bc, &DisorderSpec::clean())?;
        let cfg = PipelineConfig::new(
            build_position(&geom, PositionLabel::XStandard),
            build_position(&geom, PositionLabel::YStandard),
        );
        let set = run_pipeline(&h, &cfg)?;
        let fits: Vec<DecayFit> = set
            .functions
            .iter()
            .map(|f| fit_gwf(f, &geom, bc))
            .collect::<wannier_ladder::Result<Vec<_>>>()?
            .into_iter()
            .filter(|fit| is_interior(fit.center, &geom, bc))
            .collect();
        let kernel = kernel_decay_fit(&set.projection, &geom, bc)?;
        println!(
            "{n}x{n}: {} interior fits, p90/p10 spread {:.3}, kernel gamma {:.3}",
            fits.len(),
            gamma_spread(&fits).unwrap_or(f64::NAN),
            kernel.gamma
        );
        per_size.push(fits);
    }
    let s = size_stability(&per_size[0], &per_size[1])?;
    println!("median gamma {:.3} -> {:.3} (ratio {:.3})", s.median_small, s.median_large, s.ratio);
    Ok(())
}
