//! Localization diagnostics: amplitude maps, exponential envelope fits and
//! frame residuals.

use faer::{c64, Mat};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{translate, Boundary, BoundaryCondition, LatticeGeometry, PositionOperator, Sublattice};
use crate::pipeline::{frame_matrix, GeneralizedWannierFunction};
use crate::spectral::FermiProjection;

/// Amplitudes below this fraction of the peak are treated as numerical zeros.
pub const NOISE_FLOOR: f64 = 1e-10;

/// Cells closer than this to a Dirichlet edge are excluded from interior statistics.
pub const EDGE_MARGIN: f64 = 3.0;

/// Per-cell amplitude `sqrt(|ψ_A|² + |ψ_B|²)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AmplitudeMap {
    nx: usize,
    ny: usize,
    values: Vec<f64>,
}

impl AmplitudeMap {
    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    /// Amplitude of cell `(m, n)`.
    pub fn get(&self, m: usize, n: usize) -> f64 {
        self.values[m * self.ny + n]
    }

    /// Row `m` holds the cells `(m, 0..ny)`.
    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.ny)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    pub fn peak(&self) -> ((usize, usize), f64) {
        let (k, &v) = self.values.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).expect("nonempty map");
        ((k / self.ny, k % self.ny), v)
    }

    /// Centre of mass of the squared amplitudes.
    pub fn mass_center(&self) -> (f64, f64) {
        let (mut a, mut b, mut w) = (0.0, 0.0, 0.0);
        for m in 0..self.nx {
            for n in 0..self.ny {
                let p = self.get(m, n).powi(2);
                a += p * m as f64;
                b += p * n as f64;
                w += p;
            }
        }
        (a / w, b / w)
    }
}

pub fn amplitude_map(psi: &[c64], geom: &LatticeGeometry) -> Result<AmplitudeMap> {
    if psi.len() != geom.dim() {
        return Err(Error::DimensionMismatch { expected: geom.dim(), found: psi.len() });
    }
    let (nx, ny) = (geom.nx(), geom.ny());
    let mut values = vec![0.0; nx * ny];
    for m in 0..nx {
        for n in 0..ny {
            let a = psi[geom.index(m, n, Sublattice::A)];
            let b = psi[geom.index(m, n, Sublattice::B)];
            values[m * ny + n] = (a.norm_sqr() + b.norm_sqr()).sqrt();
        }
    }
    Ok(AmplitudeMap { nx, ny, values })
}

/// Centre of mass of `|ψ|²` in cell coordinates. Periodic axes use the
/// circular mean, so functions straddling the seam are placed correctly.
pub fn amplitude_center(map: &AmplitudeMap, bc: Boundary) -> (f64, f64) {
    let axis = |len: usize, bc: BoundaryCondition, coord: &dyn Fn(usize, usize) -> usize| -> f64 {
        let (mut lin, mut circ, mut w) = (0.0, c64::new(0.0, 0.0), 0.0);
        for m in 0..map.nx {
            for n in 0..map.ny {
                let p = map.get(m, n).powi(2);
                let x = coord(m, n) as f64;
                lin += p * x;
                circ += c64::from_polar(p, std::f64::consts::TAU * x / len as f64);
                w += p;
            }
        }
        match bc {
            BoundaryCondition::Dirichlet => lin / w,
            BoundaryCondition::Periodic => (circ.arg() * len as f64 / std::f64::consts::TAU).rem_euclid(len as f64),
        }
    };
    (axis(map.nx, bc.x, &|m, _| m), axis(map.ny, bc.y, &|_, n| n))
}

/// Exponential envelope `a(r) ≈ exp(log_c - gamma * r)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DecayFit {
    /// Decay rate per lattice constant; infinite when saturated.
    pub gamma: f64,
    pub log_c: f64,
    pub r_squared: f64,
    pub center: (f64, f64),
    /// Support too small to fit (fewer than three nonzero shells).
    pub saturated: bool,
}

impl DecayFit {
    fn saturated(center: (f64, f64), peak: f64) -> Self {
        Self { gamma: f64::INFINITY, log_c: peak.ln(), r_squared: f64::NAN, center, saturated: true }
    }
}

fn axis_distance(x: f64, c: f64, len: usize, bc: BoundaryCondition) -> f64 {
    let d = (x - c).abs();
    match bc {
        BoundaryCondition::Dirichlet => d,
        BoundaryCondition::Periodic => {
            let l = len as f64;
            let d = d % l;
            d.min(l - d)
        }
    }
}

/// Shell-envelope fit around `center` using open-lattice distances.
pub fn fit_decay(map: &AmplitudeMap, center: (f64, f64)) -> Result<DecayFit> {
    fit_decay_in(map, center, Boundary::dirichlet())
}

/// Cells closer than this to the centre form the core and are left out of
/// envelope fits.
pub const CORE_RADIUS: f64 = 1.0;

/// Shell-envelope fit; distances wrap along periodic directions.
///
/// Cells are binned into unit-width shells by distance `r` to `center`; the
/// largest amplitude of each shell (at its own `r`) is kept and `ln a` is
/// regressed linearly on `r`. Only shells with `CORE_RADIUS <= r <= reach`
/// enter, where `reach` is the distance to the nearest Dirichlet edge (half
/// the extent along periodic axes), but at least `EDGE_MARGIN + 1`.
pub fn fit_decay_in(map: &AmplitudeMap, center: (f64, f64), bc: Boundary) -> Result<DecayFit> {
    let (a, b) = center;
    let inside = |x: f64, len: usize, bc: BoundaryCondition| {
        x.is_finite() && (bc == BoundaryCondition::Periodic || (x >= -0.5 && x <= len as f64 - 0.5))
    };
    if !inside(a, map.nx, bc.x) || !inside(b, map.ny, bc.y) {
        return Err(Error::CenterOutOfBounds { a, b });
    }
    let reach = fit_reach(a, map.nx, bc.x).min(fit_reach(b, map.ny, bc.y)).max(EDGE_MARGIN + 1.0);
    let peak = map.values.iter().copied().fold(0.0, f64::max);
    let mut points = Vec::with_capacity(map.nx * map.ny);
    for m in 0..map.nx {
        for n in 0..map.ny {
            let dx = axis_distance(m as f64, a, map.nx, bc.x);
            let dy = axis_distance(n as f64, b, map.ny, bc.y);
            let r = (dx * dx + dy * dy).sqrt();
            if (CORE_RADIUS..=reach).contains(&r) {
                points.push((r, map.get(m, n)));
            }
        }
    }
    Ok(envelope_fit(&points, center, peak))
}

fn fit_reach(x: f64, len: usize, bc: BoundaryCondition) -> f64 {
    match bc {
        BoundaryCondition::Dirichlet => x.min(len as f64 - 1.0 - x),
        BoundaryCondition::Periodic => len as f64 / 2.0,
    }
}

/// `peak` sets the noise floor and is taken over all points, fitted or not.
fn envelope_fit(points: &[(f64, f64)], center: (f64, f64), peak: f64) -> DecayFit {
    let floor = NOISE_FLOOR * peak;
    let n_shells = points.iter().map(|p| p.0 as usize + 1).max().unwrap_or(0);
    let mut shells: Vec<Option<(f64, f64)>> = vec![None; n_shells];
    for &(r, amp) in points {
        if amp <= floor {
            continue;
        }
        let slot = &mut shells[r as usize];
        if slot.is_none_or(|(_, best)| amp > best) {
            *slot = Some((r, amp));
        }
    }
    let envelope: Vec<(f64, f64)> = shells.into_iter().flatten().map(|(r, amp)| (r, amp.ln())).collect();
    if envelope.len() < 3 {
        return DecayFit::saturated(center, peak);
    }
    let (slope, intercept, r_squared) = linear_regression(&envelope);
    DecayFit { gamma: -slope, log_c: intercept, r_squared, center, saturated: false }
}

/// Ordinary least squares `y = slope * x + intercept`, with the coefficient of determination.
fn linear_regression(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    (slope, intercept, r_squared)
}

/// Envelope fit of `max |P(r, c)|` against the cell distance between sites `r` and `c`.
pub fn kernel_decay_fit(p: &FermiProjection, geom: &LatticeGeometry, bc: Boundary) -> Result<DecayFit> {
    if p.dim() != geom.dim() {
        return Err(Error::DimensionMismatch { expected: geom.dim(), found: p.dim() });
    }
    let proj = p.projector();
    let dim = geom.dim();
    let mut points = Vec::with_capacity(dim * (dim + 1) / 2);
    for c in 0..dim {
        let (mc, nc, _) = geom.site(c);
        for r in 0..=c {
            let (mr, nr, _) = geom.site(r);
            let dx = axis_distance(mr as f64, mc as f64, geom.nx(), bc.x);
            let dy = axis_distance(nr as f64, nc as f64, geom.ny(), bc.y);
            points.push(((dx * dx + dy * dy).sqrt(), proj[(r, c)].norm()));
        }
    }
    let peak = points.iter().map(|p| p.1).fold(0.0, f64::max);
    Ok(envelope_fit(&points, (f64::NAN, f64::NAN), peak))
}

/// Envelope fit of one generalized Wannier function around its amplitude centre.
pub fn fit_gwf(f: &GeneralizedWannierFunction, geom: &LatticeGeometry, bc: Boundary) -> Result<DecayFit> {
    let map = amplitude_map(&f.psi, geom)?;
    fit_decay_in(&map, amplitude_center(&map, bc), bc)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SizeStability {
    pub median_small: f64,
    pub median_large: f64,
    /// `median_large / median_small`; 1 when both sides are saturated.
    pub ratio: f64,
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[k] } else { 0.5 * (v[k - 1] + v[k]) })
}

/// Linearly interpolated quantile, `p` in `[0, 1]`.
pub fn quantile(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() || !(0.0..=1.0).contains(&p) {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let x = p * (v.len() - 1) as f64;
    let (lo, hi) = (x.floor() as usize, x.ceil() as usize);
    Some(v[lo] + (x - lo as f64) * (v[hi] - v[lo]))
}

/// Ratio of the 90th to the 10th percentile of finite decay rates.
pub fn gamma_spread(fits: &[DecayFit]) -> Option<f64> {
    let gammas: Vec<f64> = fits.iter().filter(|f| !f.saturated).map(|f| f.gamma).collect();
    Some(quantile(&gammas, 0.9)? / quantile(&gammas, 0.1)?)
}

/// Compares decay rates of the same model at two system sizes.
pub fn size_stability(small: &[DecayFit], large: &[DecayFit]) -> Result<SizeStability> {
    let gammas = |fits: &[DecayFit]| fits.iter().map(|f| f.gamma).collect::<Vec<_>>();
    let median_small = median(&gammas(small)).ok_or(Error::EmptySpectrum)?;
    let median_large = median(&gammas(large)).ok_or(Error::EmptySpectrum)?;
    let ratio = if median_small.is_infinite() && median_large.is_infinite() { 1.0 } else { median_large / median_small };
    Ok(SizeStability { median_small, median_large, ratio })
}

/// Whether `center` (cell coordinates) keeps at least [`EDGE_MARGIN`] cells
/// from every Dirichlet edge.
pub fn is_interior(center: (f64, f64), geom: &LatticeGeometry, bc: Boundary) -> bool {
    let ok = |x: f64, len: usize, bc: BoundaryCondition| {
        bc == BoundaryCondition::Periodic || (x >= EDGE_MARGIN && x <= len as f64 - 1.0 - EDGE_MARGIN)
    };
    ok(center.0, geom.nx(), bc.x) && ok(center.1, geom.ny(), bc.y)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FrameReport {
    /// `max |Ψ^H Ψ - I|`
    pub orthonormality_residual: f64,
    /// `max |Ψ Ψ^H - P|`
    pub completeness_residual: f64,
    /// Column count matches `n_occ` and both residuals are below `1e-9`.
    pub complete: bool,
}

pub const FRAME_TOLERANCE: f64 = 1e-9;

pub fn frame_checks(functions: &[GeneralizedWannierFunction], p: &FermiProjection) -> FrameReport {
    let psi = frame_matrix(functions, p.dim());
    frame_checks_matrix(&psi, p)
}

pub fn frame_checks_matrix(psi: &Mat<c64>, p: &FermiProjection) -> FrameReport {
    let k = psi.ncols();
    let gram = psi.adjoint() * psi;
    let orthonormality_residual = (&gram - Mat::<c64>::identity(k, k)).norm_max();
    let completeness_residual = (psi * psi.adjoint() - p.projector()).norm_max();
    FrameReport {
        orthonormality_residual,
        completeness_residual,
        complete: k == p.n_occ()
            && orthonormality_residual < FRAME_TOLERANCE
            && completeness_residual < FRAME_TOLERANCE,
    }
}

/// `P_j Y P_j` eigenvalues closer than this to a neighbour in the same band
/// are treated as degenerate.
pub const DEGENERACY_TOLERANCE: f64 = 1e-6;

/// Whether each function's level is isolated within its band.
pub fn nondegenerate_levels(functions: &[GeneralizedWannierFunction]) -> Vec<bool> {
    functions
        .iter()
        .enumerate()
        .map(|(k, f)| {
            functions.iter().enumerate().all(|(l, g)| {
                l == k || g.band_index != f.band_index || (g.center_b - f.center_b).abs() > DEGENERACY_TOLERANCE
            })
        })
        .collect()
}

/// Largest `|Im ψ|` over the functions on nondegenerate levels.
pub fn max_imaginary_part(functions: &[GeneralizedWannierFunction]) -> f64 {
    functions
        .iter()
        .zip(nondegenerate_levels(functions))
        .filter(|(_, keep)| *keep)
        .flat_map(|(f, _)| f.psi.iter().map(|z| z.im.abs()))
        .fold(0.0, f64::max)
}

/// Translation covariance of the construction.
///
/// `reference` and `translated` come from the same translation-invariant
/// Hamiltonian, the second with the position operators conjugated by the
/// lattice translation `T(dm, dn)`. Returns `max |T ψ_k - e^{iθ} ψ'_k|` over
/// nondegenerate levels, with the optimal phase `θ` per pair.
pub fn covariance_residual(
    reference: &[GeneralizedWannierFunction],
    translated: &[GeneralizedWannierFunction],
    geom: &LatticeGeometry,
    dm: usize,
    dn: usize,
) -> Result<f64> {
    if reference.len() != translated.len() {
        return Err(Error::DimensionMismatch { expected: reference.len(), found: translated.len() });
    }
    let mut worst = 0.0f64;
    for ((f, g), keep) in reference.iter().zip(translated).zip(nondegenerate_levels(reference)) {
        if f.band_index != g.band_index {
            return Err(Error::InvalidPartition(format!("band {} paired with band {}", f.band_index, g.band_index)));
        }
        if !keep {
            continue;
        }
        let moved = translate(&f.psi, geom, dm, dn)?;
        let overlap: c64 = g.psi.iter().zip(&moved).map(|(a, b)| a.conj() * b).sum();
        let rot = if overlap.norm() > 0.0 { overlap / overlap.norm() } else { c64::new(1.0, 0.0) };
        let r = g.psi.iter().zip(&moved).map(|(a, b)| (a * rot - b).norm()).fold(0.0, f64::max);
        worst = worst.max(r);
    }
    Ok(worst)
}

/// `T P T^H` for a diagonal position operator: the coordinate of site `i`
/// moves to the translated site.
pub fn translate_position(pos: &PositionOperator, geom: &LatticeGeometry, dm: usize, dn: usize) -> Result<PositionOperator> {
    if pos.dim() != geom.dim() {
        return Err(Error::DimensionMismatch { expected: geom.dim(), found: pos.dim() });
    }
    let mut diag = vec![0.0; pos.dim()];
    for (i, &x) in pos.diag().iter().enumerate() {
        let (m, n, s) = geom.site(i);
        diag[geom.index((m + dm) % geom.nx(), (n + dn) % geom.ny(), s)] = x;
    }
    PositionOperator::custom(geom, diag)
}
