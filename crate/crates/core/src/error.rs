use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid lattice geometry {nx}x{ny}: both extents must be positive")]
    InvalidGeometry { nx: usize, ny: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("operator is not Hermitian (max |A - A^H| = {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("Fermi level {level} lies within tolerance of eigenvalue {eigenvalue}")]
    AmbiguousFilling { level: f64, eigenvalue: f64 },

    #[error("decay center ({a}, {b}) lies outside the lattice")]
    CenterOutOfBounds { a: f64, b: f64 },

    #[error("empty spectrum")]
    EmptySpectrum,

    #[error("clusters do not partition the spectrum: {0}")]
    InvalidPartition(String),

    #[error("Hamiltonian gap at the Fermi level is closed (gap = {gap:e})")]
    GapClosedAtFermiLevel { gap: f64 },

    #[error("projected position spectrum has no uniform gaps ({n_clusters} cluster(s))")]
    UniformGapFailed { n_clusters: usize },

    #[error("input is not periodic along x2: {0}")]
    NonPeriodicInput(&'static str),

    #[error("occupied unitary-position matrix is ill conditioned (|lambda| = {modulus:e})")]
    IllConditionedOverlap { modulus: f64 },

    #[error("branch continuation failed (non-integer winding residual {residual:.3})")]
    BranchContinuationFailed { residual: f64 },

    #[error("projector rank changed along the path at step {step}: {from} -> {to}")]
    ProjectorRankChanged { step: usize, from: usize, to: usize },

    #[error("transport grid too coarse at step {step} (smallest overlap singular value {overlap:e})")]
    GridTooCoarse { step: usize, overlap: f64 },

    #[error("matrix is not unitary (max |U^H U - I| = {deviation:e})")]
    NotUnitary { deviation: f64 },

    #[error("eigensolver failed: {0}")]
    Solver(String),
}

impl Error {
    /// Variant name, used in machine-readable error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidGeometry { .. } => "InvalidGeometry",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::NotHermitian { .. } => "NotHermitian",
            Error::AmbiguousFilling { .. } => "AmbiguousFilling",
            Error::CenterOutOfBounds { .. } => "CenterOutOfBounds",
            Error::EmptySpectrum => "EmptySpectrum",
            Error::InvalidPartition(_) => "InvalidPartition",
            Error::GapClosedAtFermiLevel { .. } => "GapClosedAtFermiLevel",
            Error::UniformGapFailed { .. } => "UniformGapFailed",
            Error::NonPeriodicInput(_) => "NonPeriodicInput",
            Error::IllConditionedOverlap { .. } => "IllConditionedOverlap",
            Error::BranchContinuationFailed { .. } => "BranchContinuationFailed",
            Error::ProjectorRankChanged { .. } => "ProjectorRankChanged",
            Error::GridTooCoarse { .. } => "GridTooCoarse",
            Error::NotUnitary { .. } => "NotUnitary",
            Error::Solver(_) => "Solver",
        }
    }

    /// Whether the error reports a violated modelling assumption rather than
    /// a numerical breakdown.
    pub fn is_assumption_failure(&self) -> bool {
        matches!(
            self,
            Error::AmbiguousFilling { .. }
                | Error::GapClosedAtFermiLevel { .. }
                | Error::UniformGapFailed { .. }
                | Error::NonPeriodicInput(_)
                | Error::InvalidPartition(_)
                | Error::InvalidGeometry { .. }
        )
    }
}
