//! Dense Hermitian eigendecomposition, Fermi projections and gap measurement.

use faer::{c64, Mat, MatRef, Side};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{hermiticity_defect, HermitianOperator};

/// Eigenvalues closer than this to the Fermi level make the filling ambiguous.
pub const FILLING_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    eigenvalues: Vec<f64>,
    eigenvectors: Mat<c64>,
}

impl SpectralDecomposition {
    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Orthonormal eigenvectors; column `i` pairs with `eigenvalues()[i]`.
    pub fn eigenvectors(&self) -> &Mat<c64> {
        &self.eigenvectors
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Number of eigenvalues strictly below `level`.
    pub fn count_below(&self, level: f64) -> usize {
        self.eigenvalues.partition_point(|&e| e < level)
    }

    fn check_level(&self, level: f64) -> Result<()> {
        if let Some(&e) = self.eigenvalues.iter().find(|e| (**e - level).abs() <= FILLING_TOLERANCE) {
            return Err(Error::AmbiguousFilling { level, eigenvalue: e });
        }
        Ok(())
    }
}

pub fn eigh(h: &HermitianOperator) -> Result<SpectralDecomposition> {
    eigh_matrix(h.matrix().as_ref())
}

/// Eigendecomposition of a Hermitian matrix given as a raw view.
pub fn eigh_matrix(h: MatRef<'_, c64>) -> Result<SpectralDecomposition> {
    if h.nrows() != h.ncols() {
        return Err(Error::DimensionMismatch { expected: h.nrows(), found: h.ncols() });
    }
    let owned = h.to_owned();
    let deviation = hermiticity_defect(&owned);
    if deviation > 1e-10 * owned.norm_max().max(1.0) {
        return Err(Error::NotHermitian { deviation });
    }
    if h.nrows() == 0 {
        return Ok(SpectralDecomposition { eigenvalues: Vec::new(), eigenvectors: Mat::zeros(0, 0) });
    }
    let evd = owned.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Solver(format!("{e:?}")))?;
    let eigenvalues = evd.S().column_vector().iter().map(|z| z.re).collect();
    Ok(SpectralDecomposition { eigenvalues, eigenvectors: evd.U().to_owned() })
}

/// Orthonormal basis `C` of the occupied subspace, so that `P = C C^H`.
#[derive(Clone, Debug)]
pub struct FermiProjection {
    occupied_basis: Mat<c64>,
    fermi_level: f64,
    gap: f64,
}

impl FermiProjection {
    /// Builds a projection from an explicit orthonormal basis. `gap` is taken on trust.
    pub fn from_basis(occupied_basis: Mat<c64>, fermi_level: f64, gap: f64) -> Self {
        Self { occupied_basis, fermi_level, gap }
    }

    pub fn occupied_basis(&self) -> &Mat<c64> {
        &self.occupied_basis
    }

    pub fn fermi_level(&self) -> f64 {
        self.fermi_level
    }

    /// Distance between the highest occupied and lowest empty eigenvalue;
    /// infinite when either side is empty.
    pub fn gap(&self) -> f64 {
        self.gap
    }

    pub fn n_occ(&self) -> usize {
        self.occupied_basis.ncols()
    }

    pub fn dim(&self) -> usize {
        self.occupied_basis.nrows()
    }

    /// Dense `P = C C^H`.
    pub fn projector(&self) -> Mat<c64> {
        &self.occupied_basis * self.occupied_basis.adjoint()
    }
}

pub fn fermi_projection(dec: &SpectralDecomposition, fermi_level: f64) -> Result<FermiProjection> {
    dec.check_level(fermi_level)?;
    let n_occ = dec.count_below(fermi_level);
    let gap = match spectral_gap(dec, fermi_level)? {
        GapMeasure::Finite(g) => g,
        GapMeasure::Unbounded => f64::INFINITY,
    };
    let basis = dec.eigenvectors().subcols(0, n_occ).to_owned();
    Ok(FermiProjection { occupied_basis: basis, fermi_level, gap })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum GapMeasure {
    Finite(f64),
    /// The level lies outside the spectrum.
    Unbounded,
}

impl GapMeasure {
    pub fn value(self) -> f64 {
        match self {
            GapMeasure::Finite(g) => g,
            GapMeasure::Unbounded => f64::INFINITY,
        }
    }
}

/// Gap of the spectrum around `level`.
pub fn spectral_gap(dec: &SpectralDecomposition, level: f64) -> Result<GapMeasure> {
    dec.check_level(level)?;
    let below = dec.count_below(level);
    let ev = dec.eigenvalues();
    if below == 0 || below == ev.len() {
        return Ok(GapMeasure::Unbounded);
    }
    Ok(GapMeasure::Finite(ev[below] - ev[below - 1]))
}
