//! Finite honeycomb lattices carrying the Haldane model.
//!
//! Sites are labelled by a cell `(m, n)` with `m` along the first lattice
//! vector and `n` along the second, plus a sublattice `A`/`B`. The flat index
//! of `(m, n, s)` is `2 * (n * nx + m) + s`, so the two orbitals of a cell are
//! adjacent and `m` runs fastest.

use faer::{c64, Mat};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sublattice {
    A,
    B,
}

impl Sublattice {
    pub fn offset(self) -> usize {
        match self {
            Sublattice::A => 0,
            Sublattice::B => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeGeometry {
    nx: usize,
    ny: usize,
}

impl LatticeGeometry {
    pub const ORBITALS_PER_CELL: usize = 2;

    pub fn new(nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidGeometry { nx, ny });
        }
        Ok(Self { nx, ny })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    /// Hilbert-space dimension, `2 * nx * ny`.
    pub fn dim(&self) -> usize {
        Self::ORBITALS_PER_CELL * self.n_cells()
    }

    pub fn cell_index(&self, m: usize, n: usize) -> usize {
        debug_assert!(m < self.nx && n < self.ny);
        n * self.nx + m
    }

    pub fn index(&self, m: usize, n: usize, s: Sublattice) -> usize {
        Self::ORBITALS_PER_CELL * self.cell_index(m, n) + s.offset()
    }

    /// Inverse of [`LatticeGeometry::index`].
    pub fn site(&self, index: usize) -> (usize, usize, Sublattice) {
        debug_assert!(index < self.dim());
        let cell = index / Self::ORBITALS_PER_CELL;
        let s = if index % 2 == 0 { Sublattice::A } else { Sublattice::B };
        (cell % self.nx, cell / self.nx, s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HaldaneParams {
    /// Nearest-neighbour hopping.
    pub t: f64,
    /// Magnitude of the complex next-nearest-neighbour hopping.
    pub t_prime: f64,
    /// Staggered onsite potential, `+v` on A and `-v` on B.
    pub v: f64,
    /// Phase of the next-nearest-neighbour hopping, in radians.
    pub phi: f64,
}

impl HaldaneParams {
    pub fn new(t: f64, t_prime: f64, v: f64, phi: f64) -> Self {
        Self { t, t_prime, v, phi }
    }

    /// Zero-hopping limit whose eigenstates are single-site deltas.
    pub fn atomic(v: f64) -> Self {
        Self::new(0.0, 0.0, v, 0.0)
    }

    pub fn is_finite(&self) -> bool {
        [self.t, self.t_prime, self.v, self.phi].iter().all(|x| x.is_finite())
    }

    /// Nonzero Chern number of the crystalline model: `|v| < 3√3 |t' sin φ|`.
    pub fn is_topological(&self) -> bool {
        self.v.abs() < self.critical_v()
    }

    /// `3√3 |t' sin φ|`, the onsite strength at which the bulk gap closes.
    pub fn critical_v(&self) -> f64 {
        3.0 * 3f64.sqrt() * (self.t_prime * self.phi.sin()).abs()
    }

    /// Directed hopping list: `H[(from, m, n), (to, m + dm, n + dn)] += amplitude`.
    ///
    /// The list is closed under Hermitian conjugation.
    pub fn hoppings(&self) -> Vec<Hop> {
        use Sublattice::{A, B};
        let t = c64::new(self.t, 0.0);
        let fwd = c64::from_polar(self.t_prime, self.phi);
        let bwd = fwd.conj();
        let mut hops = Vec::with_capacity(18);
        for (dm, dn) in [(0, 0), (0, -1), (-1, 0)] {
            hops.push(Hop::new(A, B, dm, dn, t));
        }
        for (dm, dn) in [(0, 0), (1, 0), (0, 1)] {
            hops.push(Hop::new(B, A, dm, dn, t));
        }
        for (dm, dn) in [(0, 1), (-1, 0), (1, -1)] {
            hops.push(Hop::new(A, A, dm, dn, fwd));
        }
        for (dm, dn) in [(0, -1), (1, 0), (-1, 1)] {
            hops.push(Hop::new(A, A, dm, dn, bwd));
        }
        for (dm, dn) in [(0, -1), (1, 0), (-1, 1)] {
            hops.push(Hop::new(B, B, dm, dn, fwd));
        }
        for (dm, dn) in [(0, 1), (-1, 0), (1, -1)] {
            hops.push(Hop::new(B, B, dm, dn, bwd));
        }
        hops.retain(|h| h.amplitude != c64::new(0.0, 0.0));
        hops
    }

    pub fn onsite(&self, s: Sublattice) -> f64 {
        match s {
            Sublattice::A => self.v,
            Sublattice::B => -self.v,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hop {
    pub from: Sublattice,
    pub to: Sublattice,
    pub dm: i64,
    pub dn: i64,
    pub amplitude: c64,
}

impl Hop {
    fn new(from: Sublattice, to: Sublattice, dm: i64, dn: i64, amplitude: c64) -> Self {
        Self { from, to, dm, dn, amplitude }
    }
}

/// Gaussian onsite disorder `η(m, n) ~ N(0, sigma2)`, shared by both orbitals
/// of a cell.
///
/// Each cell draws from its own ChaCha8 stream keyed by `(seed, m, n)`, so a
/// cell's value does not depend on lattice size or traversal order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisorderSpec {
    pub sigma2: f64,
    pub seed: u64,
}

impl DisorderSpec {
    pub fn clean() -> Self {
        Self { sigma2: 0.0, seed: 0 }
    }

    pub fn new(sigma2: f64, seed: u64) -> Self {
        Self { sigma2, seed }
    }

    pub fn is_clean(&self) -> bool {
        self.sigma2 == 0.0
    }

    /// Standard normal deviate for cell `(m, n)` (Box–Muller).
    pub fn standard_normal(&self, m: usize, n: usize) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(((m as u64) << 32) | n as u64);
        // u1 in (0, 1], u2 in [0, 1)
        let u1 = ((rng.next_u64() >> 11) + 1) as f64 * f64::EPSILON / 2.0;
        let u2 = (rng.next_u64() >> 11) as f64 * f64::EPSILON / 2.0;
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Realization `η` indexed by [`LatticeGeometry::cell_index`].
    pub fn realization(&self, geom: &LatticeGeometry) -> Vec<f64> {
        if self.is_clean() {
            return vec![0.0; geom.n_cells()];
        }
        let sigma = self.sigma2.sqrt();
        let mut eta = vec![0.0; geom.n_cells()];
        for n in 0..geom.ny() {
            for m in 0..geom.nx() {
                eta[geom.cell_index(m, n)] = sigma * self.standard_normal(m, n);
            }
        }
        eta
    }
}

impl Default for DisorderSpec {
    fn default() -> Self {
        Self::clean()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryCondition {
    Periodic,
    Dirichlet,
}

/// Boundary condition per lattice direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Boundary {
    pub x: BoundaryCondition,
    pub y: BoundaryCondition,
}

impl Boundary {
    pub fn periodic() -> Self {
        Self { x: BoundaryCondition::Periodic, y: BoundaryCondition::Periodic }
    }

    pub fn dirichlet() -> Self {
        Self { x: BoundaryCondition::Dirichlet, y: BoundaryCondition::Dirichlet }
    }
}

fn shift(i: usize, d: i64, len: usize, bc: BoundaryCondition) -> Option<usize> {
    let j = i as i64 + d;
    match bc {
        BoundaryCondition::Periodic => Some(j.rem_euclid(len as i64) as usize),
        BoundaryCondition::Dirichlet => (0..len as i64).contains(&j).then_some(j as usize),
    }
}

/// Dense Hermitian matrix.
#[derive(Clone, Debug)]
pub struct HermitianOperator {
    matrix: Mat<c64>,
}

impl HermitianOperator {
    /// Wraps `matrix` after checking Hermiticity to `1e-12` relative.
    pub fn new(matrix: Mat<c64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch { expected: matrix.nrows(), found: matrix.ncols() });
        }
        let deviation = hermiticity_defect(&matrix);
        let scale = matrix.norm_max().max(1.0);
        if deviation > 1e-12 * scale {
            return Err(Error::NotHermitian { deviation });
        }
        Ok(Self { matrix })
    }

    /// Real diagonal operator.
    pub fn diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Self { matrix: Mat::from_fn(n, n, |i, j| if i == j { c64::new(diag[i], 0.0) } else { c64::new(0.0, 0.0) }) }
    }

    pub(crate) fn from_raw(matrix: Mat<c64>) -> Self {
        Self { matrix }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &Mat<c64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> Mat<c64> {
        self.matrix
    }

    pub fn max_abs(&self) -> f64 {
        self.matrix.norm_max()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        hermiticity_defect(&self.matrix)
    }

    pub fn is_real(&self) -> bool {
        (0..self.dim()).all(|j| (0..self.dim()).all(|i| self.matrix[(i, j)].im == 0.0))
    }
}

pub(crate) fn hermiticity_defect(m: &Mat<c64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in 0..=j.min(n.saturating_sub(1)) {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Real-space Haldane Hamiltonian on a finite lattice.
///
/// Onsite energies are `v + η` on A and `-v + η` on B: the disorder is a
/// random potential felt equally by both orbitals of a cell.
pub fn build_haldane(
    geom: &LatticeGeometry,
    params: &HaldaneParams,
    bc: Boundary,
    disorder: &DisorderSpec,
) -> Result<HermitianOperator> {
    let eta = disorder.realization(geom);
    let hops = params.hoppings();
    let (nx, ny) = (geom.nx(), geom.ny());
    let dim = geom.dim();
    let mut h = Mat::<c64>::zeros(dim, dim);
    for n in 0..ny {
        for m in 0..nx {
            let eta = eta[geom.cell_index(m, n)];
            for s in [Sublattice::A, Sublattice::B] {
                let i = geom.index(m, n, s);
                h[(i, i)] += c64::new(params.onsite(s) + eta, 0.0);
            }
            for hop in &hops {
                let (Some(m2), Some(n2)) = (shift(m, hop.dm, nx, bc.x), shift(n, hop.dn, ny, bc.y)) else {
                    continue;
                };
                h[(geom.index(m, n, hop.from), geom.index(m2, n2, hop.to))] += hop.amplitude;
            }
        }
    }
    // Exact Hermiticity regardless of accumulation order on small periodic lattices.
    let sym = Mat::from_fn(dim, dim, |i, j| (h[(i, j)] + h[(j, i)].conj()) * 0.5);
    Ok(HermitianOperator::from_raw(sym))
}

/// Cyclic lattice translation `(T ψ)(m + dm, n + dn, s) = ψ(m, n, s)`.
pub fn translate(psi: &[c64], geom: &LatticeGeometry, dm: usize, dn: usize) -> Result<Vec<c64>> {
    if psi.len() != geom.dim() {
        return Err(Error::DimensionMismatch { expected: geom.dim(), found: psi.len() });
    }
    let mut out = vec![c64::new(0.0, 0.0); psi.len()];
    for (i, &z) in psi.iter().enumerate() {
        let (m, n, s) = geom.site(i);
        out[geom.index((m + dm) % geom.nx(), (n + dn) % geom.ny(), s)] = z;
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PositionLabel {
    XStandard,
    YStandard,
    XRotated,
    YRotated,
    Custom,
}

/// Diagonal position operator. Both orbitals of a cell share a coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct PositionOperator {
    diag: Vec<f64>,
    label: PositionLabel,
}

impl PositionOperator {
    pub fn custom(geom: &LatticeGeometry, diag: Vec<f64>) -> Result<Self> {
        Self::with_dim(geom.dim(), diag)
    }

    pub fn with_dim(dim: usize, diag: Vec<f64>) -> Result<Self> {
        if diag.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: diag.len() });
        }
        Ok(Self { diag, label: PositionLabel::Custom })
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn label(&self) -> PositionLabel {
        self.label
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// `X + c`.
    pub fn shifted(&self, c: f64) -> Self {
        Self { diag: self.diag.iter().map(|x| x + c).collect(), label: PositionLabel::Custom }
    }

    pub fn to_operator(&self) -> HermitianOperator {
        HermitianOperator::diagonal(&self.diag)
    }
}

/// Standard (`m`, `n`) or 45°-rotated (`(m ∓ n)/√2`) coordinates.
///
/// # Panics
/// If `label` is [`PositionLabel::Custom`]; use [`PositionOperator::custom`].
pub fn build_position(geom: &LatticeGeometry, label: PositionLabel) -> PositionOperator {
    let coord: fn(f64, f64) -> f64 = match label {
        PositionLabel::XStandard => |m, _| m,
        PositionLabel::YStandard => |_, n| n,
        PositionLabel::XRotated => |m, n| (m - n) / std::f64::consts::SQRT_2,
        PositionLabel::YRotated => |m, n| (m + n) / std::f64::consts::SQRT_2,
        PositionLabel::Custom => panic!("custom position operators take an explicit diagonal"),
    };
    let diag = (0..geom.dim())
        .map(|i| {
            let (m, n, _) = geom.site(i);
            coord(m as f64, n as f64)
        })
        .collect();
    PositionOperator { diag, label }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_roundtrip() {
        let g = LatticeGeometry::new(3, 4).unwrap();
        for i in 0..g.dim() {
            let (m, n, s) = g.site(i);
            assert_eq!(g.index(m, n, s), i);
        }
    }

    #[test]
    fn zero_extent_is_rejected() {
        assert!(matches!(LatticeGeometry::new(0, 3), Err(Error::InvalidGeometry { .. })));
    }

    #[test]
    fn atomic_limit_is_diagonal() {
        let g = LatticeGeometry::new(5, 3).unwrap();
        for bc in [Boundary::periodic(), Boundary::dirichlet()] {
            let h = build_haldane(&g, &HaldaneParams::atomic(1.0), bc, &DisorderSpec::clean()).unwrap();
            for j in 0..g.dim() {
                for i in 0..g.dim() {
                    let expected = if i != j {
                        0.0
                    } else if i % 2 == 0 {
                        1.0
                    } else {
                        -1.0
                    };
                    assert_eq!(h.matrix()[(i, j)], c64::new(expected, 0.0));
                }
            }
        }
    }

    #[test]
    fn position_diagonals() {
        let g = LatticeGeometry::new(3, 2).unwrap();
        let x = build_position(&g, PositionLabel::XStandard);
        assert_eq!(&x.diag()[..12], &[0., 0., 1., 1., 2., 2., 0., 0., 1., 1., 2., 2.]);
        let g = LatticeGeometry::new(2, 2).unwrap();
        let xr = build_position(&g, PositionLabel::XRotated);
        let i = g.index(1, 0, Sublattice::A);
        assert!((xr.diag()[i] - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(xr.diag()[i], xr.diag()[i + 1]);
    }

    #[test]
    fn custom_position_checks_length() {
        let g = LatticeGeometry::new(2, 2).unwrap();
        assert!(matches!(PositionOperator::custom(&g, vec![0.0; 3]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn disorder_is_deterministic_and_clean_when_zero() {
        let g = LatticeGeometry::new(6, 6).unwrap();
        let d = DisorderSpec::new(0.25, 17);
        let a = d.realization(&g);
        let b = d.realization(&g);
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(DisorderSpec::new(0.0, 99).realization(&g).iter().all(|&x| x == 0.0));
        // Per-cell values do not depend on the lattice extent.
        let big = d.realization(&LatticeGeometry::new(9, 7).unwrap());
        let gb = LatticeGeometry::new(9, 7).unwrap();
        assert_eq!(a[g.cell_index(4, 5)], big[gb.cell_index(4, 5)]);
    }

    #[test]
    fn disorder_moments() {
        let d = DisorderSpec::new(1.0, 3);
        let n = 200;
        let samples: Vec<f64> = (0..n).flat_map(|m| (0..n).map(move |k| (m, k))).map(|(m, k)| d.standard_normal(m, k)).collect();
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / samples.len() as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.03, "var {var}");
    }

    #[test]
    fn topological_predicate() {
        let half_pi = std::f64::consts::FRAC_PI_2;
        assert!(HaldaneParams::new(1.0, 0.25, 0.0, half_pi).is_topological());
        assert!(!HaldaneParams::new(1.0, 0.1, 1.0, half_pi).is_topological());
        assert!(!HaldaneParams::new(1.0, 0.0, 1.0, half_pi).is_topological());
    }
}
