//! Topological diagnostics for models periodic along x2.
//!
//! Two independent routes to the Chern number live here:
//!
//! * **Charge-centre flow.** Bloch-decompose the lattice along `k2`, compress
//!   the unitary position operator `exp(2πi X / M)` onto each occupied block,
//!   and follow the eigenphases around the `k2` loop. Their total winding is
//!   the Chern number.
//! * **Parallel transport and mending.** Transport an occupied frame around
//!   `k1` at fixed `k2`, collect the loop unitaries `U(k2)`, and try to write
//!   `U(k2) = exp(i h(k2))` with `h` periodic. This succeeds exactly when some
//!   point of the unit circle is avoided by every `U(k2)` spectrum.

use std::f64::consts::{PI, TAU};

use faer::linalg::solvers::DenseSolveCore;
use faer::{c64, Mat, MatRef};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{Boundary, BoundaryCondition, DisorderSpec, HaldaneParams, HermitianOperator, LatticeGeometry, PositionOperator};
use crate::pipeline::hermitize;
use crate::spectral::{eigh, eigh_matrix, fermi_projection, FermiProjection};

/// Eigenvalues of the compressed unitary position operator smaller than this
/// in modulus make its phases meaningless.
pub const MIN_OVERLAP_MODULUS: f64 = 1e-3;

/// Tolerance on `|w - round(w)|` for an accepted winding number.
pub const WINDING_TOLERANCE: f64 = 0.05;
/// Arcs closer than this are treated as touching when measuring coverage.
pub const COVERAGE_TOLERANCE: f64 = 1e-9;

/// Smallest singular value of consecutive frame overlaps accepted by transport.
pub const MIN_TRANSPORT_OVERLAP: f64 = 1e-2;

/// Wraps an angle into `(-π, π]`.
pub fn wrap_phase(x: f64) -> f64 {
    let y = x.rem_euclid(TAU);
    if y > PI {
        y - TAU
    } else {
        y
    }
}

/// Uniform grid `2π j / n`, `j = 0..n`.
pub fn k_grid(n: usize) -> Vec<f64> {
    (0..n).map(|j| TAU * j as f64 / n as f64).collect()
}

/// Block `H(k2)` of a model periodic in x2, acting on the `2 nx` orbitals of
/// one row of cells (index `2 m + s`).
pub fn bloch_block(nx: usize, params: &HaldaneParams, bc_x: BoundaryCondition, k2: f64) -> HermitianOperator {
    let dim = 2 * nx;
    let mut h = Mat::<c64>::zeros(dim, dim);
    for m in 0..nx {
        h[(2 * m, 2 * m)] += c64::new(params.v, 0.0);
        h[(2 * m + 1, 2 * m + 1)] += c64::new(-params.v, 0.0);
        for hop in params.hoppings() {
            let target = m as i64 + hop.dm;
            let m2 = match bc_x {
                BoundaryCondition::Periodic => target.rem_euclid(nx as i64) as usize,
                BoundaryCondition::Dirichlet if (0..nx as i64).contains(&target) => target as usize,
                BoundaryCondition::Dirichlet => continue,
            };
            h[(2 * m + hop.from.offset(), 2 * m2 + hop.to.offset())] += hop.amplitude * c64::from_polar(1.0, k2 * hop.dn as f64);
        }
    }
    hermitize(&mut h);
    HermitianOperator::from_raw(h)
}

/// Fully periodic 2x2 Bloch Hamiltonian `H(k1, k2) = Σ_R exp(i k·R) h(R)`.
pub fn bloch_hamiltonian(params: &HaldaneParams, k1: f64, k2: f64) -> Mat<c64> {
    let mut h = Mat::<c64>::zeros(2, 2);
    h[(0, 0)] = c64::new(params.v, 0.0);
    h[(1, 1)] = c64::new(-params.v, 0.0);
    for hop in params.hoppings() {
        h[(hop.from.offset(), hop.to.offset())] += hop.amplitude * c64::from_polar(1.0, k1 * hop.dm as f64 + k2 * hop.dn as f64);
    }
    hermitize(&mut h);
    h
}

/// Bloch blocks `H(k2)` on the grid `k2 = 2π j / ny` with their occupied bases.
#[derive(Clone, Debug)]
pub struct BlochFamily {
    pub nx: usize,
    pub k2_grid: Vec<f64>,
    pub blocks: Vec<HermitianOperator>,
    pub projections: Vec<FermiProjection>,
}

pub fn bloch_blocks(
    geom: &LatticeGeometry,
    params: &HaldaneParams,
    bc: Boundary,
    disorder: &DisorderSpec,
    fermi_level: f64,
) -> Result<BlochFamily> {
    if bc.y != BoundaryCondition::Periodic {
        return Err(Error::NonPeriodicInput("x2 boundary is not periodic"));
    }
    if !disorder.is_clean() {
        return Err(Error::NonPeriodicInput("onsite disorder breaks x2 translations"));
    }
    let k2_grid = k_grid(geom.ny());
    let blocks: Vec<HermitianOperator> =
        k2_grid.iter().map(|&k2| bloch_block(geom.nx(), params, bc.x, k2)).collect();
    let projections = blocks
        .par_iter()
        .map(|b| fermi_projection(&eigh(b)?, fermi_level))
        .collect::<Result<Vec<_>>>()?;
    Ok(BlochFamily { nx: geom.nx(), k2_grid, blocks, projections })
}

/// Eigenphase flow of `C(k2)^H exp(2πi X / M) C(k2)` around the `k2` loop.
#[derive(Clone, Debug, Serialize)]
pub struct ChargeCenterFlow {
    /// Grid including the closing point `2π`.
    pub k2: Vec<f64>,
    /// `phases[n][i]`: branch-continued phase of curve `n` at `k2[i]`.
    pub phases: Vec<Vec<f64>>,
    /// Net displacement of each curve over the loop, in units of `2π`.
    pub displacements: Vec<f64>,
    /// Total winding of all curves: the Chern number of the occupied bundle.
    pub winding: i64,
    /// Largest arc of the unit circle avoided by every phase curve.
    pub largest_avoided_arc: f64,
    pub gapped: bool,
}

pub fn charge_center_flow(fam: &BlochFamily, x: &PositionOperator, m_cells: usize) -> Result<ChargeCenterFlow> {
    let factors: Vec<c64> = x.diag().iter().map(|&xi| c64::from_polar(1.0, TAU * xi / m_cells as f64)).collect();
    let samples = fam
        .projections
        .par_iter()
        .map(|p| {
            let c = p.occupied_basis();
            if c.nrows() != factors.len() {
                return Err(Error::DimensionMismatch { expected: c.nrows(), found: factors.len() });
            }
            let applied = Mat::from_fn(c.nrows(), c.ncols(), |i, j| c[(i, j)] * factors[i]);
            let u = c.adjoint() * &applied;
            let eigs = general_eigenvalues(u.as_ref())?;
            if let Some(z) = eigs.iter().find(|z| z.norm() < MIN_OVERLAP_MODULUS) {
                return Err(Error::IllConditionedOverlap { modulus: z.norm() });
            }
            Ok(eigs.iter().map(|z| z.arg()).collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let phases = continue_phases(&samples, true)?;
    let displacements: Vec<f64> = phases.iter().map(|c| (c[c.len() - 1] - c[0]) / TAU).collect();
    let total: Vec<f64> = (0..samples.len() + 1).map(|i| phases.iter().map(|c| c[i]).sum()).collect();
    let winding = winding_number(&total)?;
    let coverage = circle_coverage(&phases);
    let mut k2 = fam.k2_grid.clone();
    k2.push(TAU);
    Ok(ChargeCenterFlow {
        k2,
        phases,
        displacements,
        winding,
        largest_avoided_arc: coverage.largest_gap,
        gapped: coverage.largest_gap > 0.0,
    })
}

/// Cell coordinate `m` of each orbital in a row of `nx` cells.
pub fn row_position(nx: usize) -> PositionOperator {
    PositionOperator::with_dim(2 * nx, (0..2 * nx).map(|i| (i / 2) as f64).collect()).expect("length matches")
}

/// Charge-centre flow of a clean Haldane model on `geom`, sampled at the
/// `ny` allowed `k2` and compressed with `exp(2πi m / nx)`.
pub fn haldane_charge_centers(
    geom: &LatticeGeometry,
    params: &HaldaneParams,
    bc: Boundary,
    fermi_level: f64,
) -> Result<ChargeCenterFlow> {
    let fam = bloch_blocks(geom, params, bc, &DisorderSpec::clean(), fermi_level)?;
    charge_center_flow(&fam, &row_position(geom.nx()), geom.nx())
}

fn general_eigenvalues(u: MatRef<'_, c64>) -> Result<Vec<c64>> {
    if u.nrows() == 0 {
        return Ok(Vec::new());
    }
    u.eigenvalues().map_err(|e| Error::Solver(format!("{e:?}")))
}

/// `(Γ(end) - Γ(start)) / 2π` for a branch-continued curve, rounded.
pub fn winding_number(phases: &[f64]) -> Result<i64> {
    let Some((first, last)) = phases.first().zip(phases.last()) else {
        return Ok(0);
    };
    let w = (last - first) / TAU;
    let rounded = w.round();
    if (w - rounded).abs() >= WINDING_TOLERANCE {
        return Err(Error::BranchContinuationFailed { residual: w - rounded });
    }
    Ok(rounded as i64)
}

/// Branch-continues sets of eigenphases sampled along a path.
///
/// Phases at each sample are sorted and matched to the previous sample by the
/// cyclic relabelling with the smallest total squared displacement, then
/// unwrapped onto the nearest branch. With `closed`, the first sample is
/// appended again so the curves end at the closing point of the loop.
pub fn continue_phases(samples: &[Vec<f64>], closed: bool) -> Result<Vec<Vec<f64>>> {
    let Some(first) = samples.first() else {
        return Ok(Vec::new());
    };
    let n = first.len();
    let sorted = |s: &Vec<f64>| -> Result<Vec<f64>> {
        if s.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: s.len() });
        }
        let mut v: Vec<f64> = s.iter().map(|&p| wrap_phase(p)).collect();
        v.sort_by(f64::total_cmp);
        Ok(v)
    };
    let mut curves: Vec<Vec<f64>> = sorted(first)?.into_iter().map(|p| vec![p]).collect();
    let extra = if closed { Some(first) } else { None };
    for sample in samples[1..].iter().chain(extra) {
        let q = sorted(sample)?;
        let current: Vec<f64> = curves.iter().map(|c| c[c.len() - 1]).collect();
        let best = (0..n.max(1))
            .map(|s| {
                let cost: f64 = (0..n).map(|k| wrap_phase(q[(k + s) % n] - current[k]).powi(2)).sum();
                (s, cost)
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map_or(0, |(s, _)| s);
        for k in 0..n {
            let step = wrap_phase(q[(k + best) % n] - current[k]);
            if step.abs() > PI / 2.0 {
                return Err(Error::BranchContinuationFailed { residual: step / TAU });
            }
            curves[k].push(current[k] + step);
        }
    }
    Ok(curves)
}

/// Unit-circle coverage of continuous phase curves.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CircleCoverage {
    /// Length of the largest arc touched by no curve segment.
    pub largest_gap: f64,
    /// Phase at the middle of that arc.
    pub gap_midpoint: f64,
}

/// Each curve segment between consecutive samples sweeps the arc between its
/// endpoints; the union of all swept arcs is compared against the circle.
pub fn circle_coverage(curves: &[Vec<f64>]) -> CircleCoverage {
    let mut arcs: Vec<(f64, f64)> = Vec::new();
    for c in curves {
        if c.len() == 1 {
            let p = c[0].rem_euclid(TAU);
            arcs.push((p, p));
        }
        for w in c.windows(2) {
            let (lo, hi) = if w[0] <= w[1] { (w[0], w[1]) } else { (w[1], w[0]) };
            if hi - lo >= TAU {
                return CircleCoverage { largest_gap: 0.0, gap_midpoint: 0.0 };
            }
            let start = lo.rem_euclid(TAU);
            let end = start + (hi - lo);
            if end > TAU {
                arcs.push((start, TAU));
                arcs.push((0.0, end - TAU));
            } else {
                arcs.push((start, end));
            }
        }
    }
    if arcs.is_empty() {
        return CircleCoverage { largest_gap: TAU, gap_midpoint: PI };
    }
    arcs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for (s, e) in arcs {
        match merged.last_mut() {
            Some(last) if s <= last.1 => last.1 = last.1.max(e),
            _ => merged.push((s, e)),
        }
    }
    let mut best = CircleCoverage { largest_gap: 0.0, gap_midpoint: 0.0 };
    for k in 0..merged.len() {
        let gap_start = merged[k].1;
        let gap_end = if k + 1 < merged.len() { merged[k + 1].0 } else { merged[0].0 + TAU };
        let len = gap_end - gap_start;
        if len > COVERAGE_TOLERANCE && len > best.largest_gap {
            best = CircleCoverage { largest_gap: len, gap_midpoint: wrap_phase(0.5 * (gap_start + gap_end)) };
        }
    }
    best
}

/// Discretized path of equal-rank projectors, each given by an orthonormal basis.
#[derive(Clone, Debug)]
pub struct ProjectorPath {
    pub bases: Vec<Mat<c64>>,
    pub closure: PathClosure,
}

#[derive(Clone, Debug, PartialEq)]
pub enum PathClosure {
    Open,
    /// The path returns to its start. The optional diagonal `D` identifies the
    /// closing point with `D P(s_0) D^H` (the `exp(i w·x)` boundary phases of
    /// a Brillouin-zone loop); `None` means the identity.
    Loop(Option<Vec<c64>>),
}

#[derive(Clone, Debug)]
pub struct TransportFrame {
    pub frames: Vec<Mat<c64>>,
    /// Overlap of the start frame with the transported frame at the end of the path.
    pub loop_unitary: Mat<c64>,
}

impl TransportFrame {
    /// `arg det(loop_unitary)`.
    pub fn berry_phase(&self) -> f64 {
        self.loop_unitary.determinant().arg()
    }
}

/// Discrete Kato transport: each step projects the previous frame onto the
/// next subspace and restores orthonormality by polar decomposition.
pub fn transport_frame(path: &ProjectorPath) -> Result<TransportFrame> {
    let Some(first) = path.bases.first() else {
        return Err(Error::EmptySpectrum);
    };
    let rank = first.ncols();
    let mut frames = vec![first.clone()];
    let closing = match &path.closure {
        PathClosure::Open => None,
        PathClosure::Loop(phases) => Some(match phases {
            None => first.clone(),
            Some(d) => {
                if d.len() != first.nrows() {
                    return Err(Error::DimensionMismatch { expected: first.nrows(), found: d.len() });
                }
                Mat::from_fn(first.nrows(), rank, |i, j| d[i] * first[(i, j)])
            }
        }),
    };
    for (step, next) in path.bases[1..].iter().chain(closing.as_ref()).enumerate() {
        if next.ncols() != rank {
            return Err(Error::ProjectorRankChanged { step: step + 1, from: rank, to: next.ncols() });
        }
        let prev = frames.last().expect("nonempty");
        frames.push(polar_step(next, prev, step + 1)?);
    }
    let reference = closing.as_ref().unwrap_or(first);
    let end = frames.last().expect("nonempty");
    let loop_unitary = reference.adjoint() * end;
    if closing.is_some() {
        frames.pop();
    }
    Ok(TransportFrame { frames, loop_unitary })
}

fn polar_step(next: &Mat<c64>, prev: &Mat<c64>, step: usize) -> Result<Mat<c64>> {
    let overlap = next.adjoint() * prev;
    let svd = overlap.svd().map_err(|e| Error::Solver(format!("{e:?}")))?;
    let smallest = svd.S().column_vector().iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
    if smallest < MIN_TRANSPORT_OVERLAP {
        return Err(Error::GridTooCoarse { step, overlap: smallest });
    }
    Ok(next * (svd.U() * svd.V().adjoint()))
}

/// Occupied Bloch band of the 2x2 Haldane Hamiltonian at `(k1, k2)` below `fermi_level`.
pub fn occupied_bloch_basis(params: &HaldaneParams, k1: f64, k2: f64, fermi_level: f64) -> Result<Mat<c64>> {
    let dec = eigh_matrix(bloch_hamiltonian(params, k1, k2).as_ref())?;
    Ok(fermi_projection(&dec, fermi_level)?.occupied_basis().clone())
}

/// Closed `k1` loop of occupied Bloch projectors at fixed `k2`.
///
/// Orbitals sit at their cell origin, so the boundary identification of the
/// loop is the identity.
pub fn k1_loop(params: &HaldaneParams, k2: f64, n_k1: usize, fermi_level: f64) -> Result<ProjectorPath> {
    let bases = k_grid(n_k1)
        .into_iter()
        .map(|k1| occupied_bloch_basis(params, k1, k2, fermi_level))
        .collect::<Result<Vec<_>>>()?;
    Ok(ProjectorPath { bases, closure: PathClosure::Loop(None) })
}

/// Loop unitaries `U(k2)` from transport around `k1` on an `n_k1 x n_k2` grid.
pub fn loop_unitaries(params: &HaldaneParams, n_k1: usize, n_k2: usize, fermi_level: f64) -> Result<Vec<Mat<c64>>> {
    k_grid(n_k2)
        .par_iter()
        .map(|&k2| Ok(transport_frame(&k1_loop(params, k2, n_k1, fermi_level)?)?.loop_unitary))
        .collect()
}

pub const UNITARITY_TOLERANCE: f64 = 1e-8;

/// Outcome of gauge mending along the `k2` loop.
#[derive(Clone, Debug)]
pub enum MendOutcome {
    /// `U(k2) = exp(i h(k2))` with `h` periodic, using the branch cut at
    /// `cut_phase`.
    Periodic(MendedFrame),
    /// No arc wider than one sampling step is avoided by all `U(k2)` spectra.
    Obstructed {
        /// Largest avoided arc (zero when the spectra cover the circle).
        coverage_gap: f64,
        winding: i64,
    },
}

impl MendOutcome {
    pub fn is_obstructed(&self) -> bool {
        matches!(self, MendOutcome::Obstructed { .. })
    }
}

#[derive(Clone, Debug)]
pub struct MendedFrame {
    pub cut_phase: f64,
    /// Hermitian logarithms `h(k2)` with spectra inside `(cut, cut + 2π)`.
    pub logs: Vec<Mat<c64>>,
    /// Largest `max |h(k2_{i+1}) - h(k2_i)|` along the closed grid.
    pub max_jump: f64,
}

impl MendedFrame {
    /// Mending unitary `exp(-i k1 h(k2) / 2π)` at grid point `k2_index`.
    pub fn mending_unitary(&self, k1: f64, k2_index: usize) -> Result<Mat<c64>> {
        let dec = eigh_matrix(self.logs[k2_index].as_ref())?;
        let q = dec.eigenvectors();
        let phases: Vec<c64> = dec.eigenvalues().iter().map(|&g| c64::from_polar(1.0, -k1 * g / TAU)).collect();
        let scaled = Mat::from_fn(q.nrows(), q.ncols(), |i, j| q[(i, j)] * phases[j]);
        Ok(scaled * q.adjoint())
    }
}

/// Tries to write a periodic family of unitaries as `exp(i h(k2))` with `h`
/// Hermitian and periodic.
pub fn mend_periodic(u_family: &[Mat<c64>]) -> Result<MendOutcome> {
    for u in u_family {
        let n = u.ncols();
        let deviation = (u.adjoint() * u - Mat::<c64>::identity(n, n)).norm_max();
        if u.nrows() != n || deviation > UNITARITY_TOLERANCE {
            return Err(Error::NotUnitary { deviation });
        }
    }
    let samples = u_family
        .iter()
        .map(|u| Ok(general_eigenvalues(u.as_ref())?.iter().map(|z| z.arg()).collect()))
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let curves = continue_phases(&samples, true)?;
    let coverage = circle_coverage(&curves);
    // An avoided arc narrower than one grid step is not resolved by the samples.
    let resolution = curves.iter().flat_map(|c| c.windows(2).map(|w| (w[1] - w[0]).abs())).fold(0.0, f64::max);
    if coverage.largest_gap <= resolution {
        let total: Vec<f64> = (0..samples.len() + 1).map(|i| curves.iter().map(|c| c[i]).sum()).collect();
        return Ok(MendOutcome::Obstructed { coverage_gap: coverage.largest_gap, winding: winding_number(&total)? });
    }
    let cut = coverage.gap_midpoint;
    let logs = u_family.iter().map(|u| log_with_cut(u, cut)).collect::<Result<Vec<_>>>()?;
    let max_jump = (0..logs.len())
        .map(|i| (&logs[(i + 1) % logs.len()] - &logs[i]).norm_max())
        .fold(0.0, f64::max);
    Ok(MendOutcome::Periodic(MendedFrame { cut_phase: cut, logs, max_jump }))
}

/// Hermitian `h` with `exp(i h) = u` and spectrum in `(cut, cut + 2π)`.
///
/// With `w = -exp(-i cut) u` the cut maps to `-1`, which the spectrum avoids,
/// so the Cayley transform `K = i (1 - w)(1 + w)^{-1}` is a bounded Hermitian
/// matrix with eigenvalues `tan(θ/2)`. Diagonalizing `K` gives an orthonormal
/// eigenbasis of `u` even for degenerate spectra.
fn log_with_cut(u: &Mat<c64>, cut: f64) -> Result<Mat<c64>> {
    let n = u.ncols();
    let rot = -c64::from_polar(1.0, -cut);
    let w = Mat::from_fn(n, n, |i, j| u[(i, j)] * rot);
    let id = Mat::<c64>::identity(n, n);
    let plus = &id + &w;
    let minus = &id - &w;
    let inv = plus.partial_piv_lu().inverse();
    let mut k = (&minus * &inv) * faer::Scale(c64::new(0.0, 1.0));
    hermitize(&mut k);
    let dec = eigh_matrix(k.as_ref())?;
    let q = dec.eigenvectors();
    let angles: Vec<f64> = dec.eigenvalues().iter().map(|&t| 2.0 * t.atan() + cut + PI).collect();
    let scaled = Mat::from_fn(n, n, |i, j| q[(i, j)] * angles[j]);
    let mut h = scaled * q.adjoint();
    hermitize(&mut h);
    Ok(h)
}
