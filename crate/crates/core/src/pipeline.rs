//! The projected-position ladder.
//!
//! 1. compress a position operator `X` onto the occupied subspace, `C^H X C`;
//! 2. cluster its spectrum into gap-separated islands;
//! 3. group eigenvectors per island into band projectors `P_j`;
//! 4. diagonalize `P_j Y P_j` inside each band.
//!
//! The eigenvectors of the last step form an orthonormal basis of `range(P)`
//! whose members are localized in both directions when the islands are
//! separated by uniform gaps.

use faer::{c64, Mat, MatRef};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{hermiticity_defect, HermitianOperator, PositionOperator};
use crate::spectral::{eigh, eigh_matrix, fermi_projection, FermiProjection, SpectralDecomposition};

pub const DEFAULT_GAP_THRESHOLD: f64 = 0.25;
/// Auto mode cuts where the spacing exceeds this multiple of the median spacing.
pub const AUTO_GAP_RATIO: f64 = 5.0;

/// A position-like observable: either a diagonal position operator or an
/// arbitrary Hermitian matrix.
#[derive(Clone, Debug)]
pub enum Observable {
    Diagonal(PositionOperator),
    Dense(HermitianOperator),
}

impl Observable {
    pub fn dim(&self) -> usize {
        match self {
            Observable::Diagonal(p) => p.dim(),
            Observable::Dense(h) => h.dim(),
        }
    }

    /// `B^H O B` for a basis `B` with `dim()` rows.
    pub fn compress(&self, basis: MatRef<'_, c64>) -> Result<Mat<c64>> {
        if basis.nrows() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: basis.nrows() });
        }
        let applied = match self {
            Observable::Diagonal(p) => {
                let d = p.diag();
                Mat::from_fn(basis.nrows(), basis.ncols(), |i, j| basis[(i, j)] * d[i])
            }
            Observable::Dense(h) => h.matrix() * basis,
        };
        let mut m = basis.adjoint() * &applied;
        hermitize(&mut m);
        Ok(m)
    }
}

impl From<PositionOperator> for Observable {
    fn from(p: PositionOperator) -> Self {
        Observable::Diagonal(p)
    }
}

pub(crate) fn hermitize(m: &mut Mat<c64>) {
    let n = m.nrows();
    for j in 0..n {
        m[(j, j)] = c64::new(m[(j, j)].re, 0.0);
        for i in 0..j {
            let avg = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
    }
}

/// `C^H X C`: the restriction of `P X P` to `range(P)`, written in the
/// occupied basis `C`. This drops the trivial null space of `P X P`.
#[derive(Clone, Debug)]
pub struct ProjectedOperator {
    matrix: Mat<c64>,
}

impl ProjectedOperator {
    pub fn matrix(&self) -> &Mat<c64> {
        &self.matrix
    }

    pub fn eigh(&self) -> Result<SpectralDecomposition> {
        eigh_matrix(self.matrix.as_ref())
    }
}

pub fn project_operator(p: &FermiProjection, pos: &PositionOperator) -> Result<ProjectedOperator> {
    project_observable(p, &Observable::Diagonal(pos.clone()))
}

pub fn project_observable(p: &FermiProjection, obs: &Observable) -> Result<ProjectedOperator> {
    Ok(ProjectedOperator { matrix: obs.compress(p.occupied_basis().as_ref())? })
}

/// A gap-separated island of the projected spectrum, as the half-open index
/// range `start..end` into the sorted eigenvalues.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BandCluster {
    pub start: usize,
    pub end: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub centroid: f64,
}

impl BandCluster {
    fn from_range(eigs: &[f64], start: usize, end: usize) -> Self {
        let slice = &eigs[start..end];
        Self {
            start,
            end,
            sigma_min: slice[0],
            sigma_max: slice[slice.len() - 1],
            centroid: slice.iter().sum::<f64>() / slice.len() as f64,
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn diameter(&self) -> f64 {
        self.sigma_max - self.sigma_min
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum ClusterRule {
    /// Cut wherever consecutive eigenvalues are further apart than this.
    Threshold(f64),
    /// Cut where the spacing exceeds [`AUTO_GAP_RATIO`] times the median spacing.
    Auto,
}

impl Default for ClusterRule {
    fn default() -> Self {
        ClusterRule::Threshold(DEFAULT_GAP_THRESHOLD)
    }
}

/// Uniform-gap constants of a clustering: islands are at least `d` apart and
/// at most `D` wide.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct UniformGapReport {
    pub passed: bool,
    /// Minimal distance between neighbouring clusters; `None` for a single cluster.
    pub d: Option<f64>,
    #[serde(rename = "D")]
    pub big_d: f64,
    pub n_clusters: usize,
}

impl UniformGapReport {
    pub fn of(clusters: &[BandCluster]) -> Self {
        let d = clusters.windows(2).map(|w| w[1].sigma_min - w[0].sigma_max).reduce(f64::min);
        let big_d = clusters.iter().map(BandCluster::diameter).fold(0.0, f64::max);
        Self { passed: clusters.len() >= 2, d, big_d, n_clusters: clusters.len() }
    }
}

pub fn cluster_spectrum(eigs: &[f64], rule: ClusterRule) -> Result<(Vec<BandCluster>, UniformGapReport)> {
    if eigs.is_empty() {
        return Err(Error::EmptySpectrum);
    }
    let threshold = match rule {
        ClusterRule::Threshold(t) => t,
        ClusterRule::Auto => {
            let mut spacings: Vec<f64> = eigs.windows(2).map(|w| w[1] - w[0]).collect();
            spacings.sort_by(f64::total_cmp);
            AUTO_GAP_RATIO * spacings.get(spacings.len() / 2).copied().unwrap_or(0.0)
        }
    };
    let mut clusters = Vec::new();
    let mut start = 0;
    for i in 1..eigs.len() {
        if eigs[i] - eigs[i - 1] > threshold {
            clusters.push(BandCluster::from_range(eigs, start, i));
            start = i;
        }
    }
    clusters.push(BandCluster::from_range(eigs, start, eigs.len()));
    let report = UniformGapReport::of(&clusters);
    Ok((clusters, report))
}

/// Merges inclusive ranges of cluster ids, e.g. `(21, 23)` fuses the last
/// three islands of a 24-island spectrum into one band.
pub fn merge_clusters(eigs: &[f64], clusters: &[BandCluster], merges: &[(usize, usize)]) -> Result<Vec<BandCluster>> {
    let mut sorted = merges.to_vec();
    sorted.sort();
    for (k, &(a, b)) in sorted.iter().enumerate() {
        if a > b || b >= clusters.len() {
            return Err(Error::InvalidPartition(format!("merge range {a}-{b} out of bounds for {} clusters", clusters.len())));
        }
        if k > 0 && a <= sorted[k - 1].1 {
            return Err(Error::InvalidPartition(format!("merge ranges overlap at cluster {a}")));
        }
    }
    let mut out = Vec::new();
    let mut i = 0;
    while i < clusters.len() {
        match sorted.iter().find(|(a, _)| *a == i) {
            Some(&(a, b)) => {
                out.push(BandCluster::from_range(eigs, clusters[a].start, clusters[b].end));
                i = b + 1;
            }
            None => {
                out.push(clusters[i].clone());
                i += 1;
            }
        }
    }
    Ok(out)
}

/// Spectral projector onto one island, as the orthonormal eigenvector block
/// `W_j` in occupied coordinates; the full-space projector is `C W_j W_j^H C^H`.
#[derive(Clone, Debug)]
pub struct BandProjector {
    pub cluster: BandCluster,
    subspace_basis: Mat<c64>,
}

impl BandProjector {
    pub fn subspace_basis(&self) -> &Mat<c64> {
        &self.subspace_basis
    }

    pub fn rank(&self) -> usize {
        self.subspace_basis.ncols()
    }

    /// Dense projector on the full lattice space.
    pub fn full_projector(&self, p: &FermiProjection) -> Mat<c64> {
        let cw = p.occupied_basis() * &self.subspace_basis;
        &cw * cw.adjoint()
    }
}

pub fn band_projectors(
    p: &FermiProjection,
    pxp: &SpectralDecomposition,
    clusters: &[BandCluster],
) -> Result<Vec<BandProjector>> {
    if pxp.dim() != p.n_occ() {
        return Err(Error::DimensionMismatch { expected: p.n_occ(), found: pxp.dim() });
    }
    let mut next = 0;
    for c in clusters {
        if c.start != next || c.end <= c.start {
            return Err(Error::InvalidPartition(format!("cluster {}..{} does not continue at {next}", c.start, c.end)));
        }
        next = c.end;
    }
    if next != pxp.dim() {
        return Err(Error::InvalidPartition(format!("clusters cover {next} of {} eigenvalues", pxp.dim())));
    }
    Ok(clusters
        .iter()
        .map(|c| BandProjector {
            cluster: c.clone(),
            subspace_basis: pxp.eigenvectors().subcols(c.start, c.len()).to_owned(),
        })
        .collect())
}

#[derive(Clone, Debug)]
pub struct GeneralizedWannierFunction {
    pub psi: Vec<c64>,
    pub band_index: usize,
    /// Representative of the band's island (its centroid).
    pub center_a: f64,
    /// Eigenvalue of `P_j Y P_j`.
    pub center_b: f64,
}

impl GeneralizedWannierFunction {
    pub fn y_eigenvalue(&self) -> f64 {
        self.center_b
    }
}

/// Eigenvectors of `P_j Y P_j` inside one band.
pub fn gwf_from_band(
    band_index: usize,
    band: &BandProjector,
    y: &Observable,
    p: &FermiProjection,
) -> Result<Vec<GeneralizedWannierFunction>> {
    let cw = p.occupied_basis() * band.subspace_basis();
    let m = y.compress(cw.as_ref())?;
    gwfs_in_band(band_index, band, &cw, &m)
}

fn gwfs_in_band(
    band_index: usize,
    band: &BandProjector,
    cw: &Mat<c64>,
    compressed_y: &Mat<c64>,
) -> Result<Vec<GeneralizedWannierFunction>> {
    let dec = eigh_matrix(compressed_y.as_ref())?;
    let psis = cw * dec.eigenvectors();
    Ok((0..psis.ncols())
        .map(|k| GeneralizedWannierFunction {
            psi: phase_aligned(psis.col(k).iter().copied().collect()),
            band_index,
            center_a: band.cluster.centroid,
            center_b: dec.eigenvalues()[k],
        })
        .collect())
}

#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub fermi_level: f64,
    pub x: Observable,
    pub y: Observable,
    pub rule: ClusterRule,
    /// Inclusive cluster-id ranges to fuse after clustering.
    pub merges: Vec<(usize, usize)>,
    /// Continue with whatever clusters exist when the uniform-gap check fails.
    pub force: bool,
    /// Smallest Hamiltonian gap accepted at the Fermi level.
    pub min_h_gap: f64,
}

impl PipelineConfig {
    pub fn new(x: impl Into<Observable>, y: impl Into<Observable>) -> Self {
        Self {
            fermi_level: 0.0,
            x: x.into(),
            y: y.into(),
            rule: ClusterRule::default(),
            merges: Vec::new(),
            force: false,
            min_h_gap: 1e-8,
        }
    }

    pub fn with_rule(mut self, rule: ClusterRule) -> Self {
        self.rule = rule;
        self
    }

    pub fn forced(mut self, force: bool) -> Self {
        self.force = force;
        self
    }
}

/// Output of a full pipeline run.
#[derive(Clone, Debug)]
pub struct GwfSet {
    pub functions: Vec<GeneralizedWannierFunction>,
    pub clusters: Vec<BandCluster>,
    pub report: UniformGapReport,
    pub pxp_eigenvalues: Vec<f64>,
    pub projection: FermiProjection,
}

impl GwfSet {
    pub fn h_gap(&self) -> f64 {
        self.projection.gap()
    }

    pub fn n_occ(&self) -> usize {
        self.projection.n_occ()
    }

    /// Functions as the columns of a `dim x n` matrix.
    pub fn frame(&self) -> Mat<c64> {
        frame_matrix(&self.functions, self.projection.dim())
    }
}

pub(crate) fn frame_matrix(functions: &[GeneralizedWannierFunction], dim: usize) -> Mat<c64> {
    Mat::from_fn(dim, functions.len(), |i, j| functions[j].psi[i])
}

/// Projected spectrum and its clustering, without building any band.
#[derive(Clone, Debug)]
pub struct ProjectedSpectrum {
    pub decomposition: SpectralDecomposition,
    pub clusters: Vec<BandCluster>,
    pub report: UniformGapReport,
}

pub fn projected_spectrum(p: &FermiProjection, cfg: &PipelineConfig) -> Result<ProjectedSpectrum> {
    let pxp = project_observable(p, &cfg.x)?.eigh()?;
    let (clusters, _) = cluster_spectrum(pxp.eigenvalues(), cfg.rule)?;
    let clusters = merge_clusters(pxp.eigenvalues(), &clusters, &cfg.merges)?;
    let report = UniformGapReport::of(&clusters);
    Ok(ProjectedSpectrum { decomposition: pxp, clusters, report })
}

pub fn run_pipeline(h: &HermitianOperator, cfg: &PipelineConfig) -> Result<GwfSet> {
    run_pipeline_from(&eigh(h)?, cfg)
}

/// Like [`run_pipeline`], reusing an existing decomposition of `H`.
pub fn run_pipeline_from(h_dec: &SpectralDecomposition, cfg: &PipelineConfig) -> Result<GwfSet> {
    if cfg.x.dim() != h_dec.dim() || cfg.y.dim() != h_dec.dim() {
        return Err(Error::DimensionMismatch { expected: h_dec.dim(), found: cfg.x.dim().min(cfg.y.dim()) });
    }
    let p = fermi_projection(h_dec, cfg.fermi_level)?;
    if p.gap() < cfg.min_h_gap {
        return Err(Error::GapClosedAtFermiLevel { gap: p.gap() });
    }
    let spectrum = projected_spectrum(&p, cfg)?;
    if !spectrum.report.passed && !cfg.force {
        return Err(Error::UniformGapFailed { n_clusters: spectrum.report.n_clusters });
    }
    let bands = band_projectors(&p, &spectrum.decomposition, &spectrum.clusters)?;
    let per_band: Vec<Vec<GeneralizedWannierFunction>> = bands
        .par_iter()
        .enumerate()
        .map(|(j, band)| gwf_from_band(j, band, &cfg.y, &p))
        .collect::<Result<_>>()?;
    Ok(GwfSet {
        functions: per_band.into_iter().flatten().collect(),
        clusters: spectrum.clusters,
        report: spectrum.report,
        pxp_eigenvalues: spectrum.decomposition.eigenvalues().to_vec(),
        projection: p,
    })
}

/// Entries within this relative distance of the largest modulus compete for
/// the phase reference; the lowest index wins.
const PHASE_REFERENCE_TOLERANCE: f64 = 1e-8;

/// Fixes the free phase of `psi` so that its largest entry is real and
/// positive. Real-representable vectors come out real.
pub fn phase_aligned(mut psi: Vec<c64>) -> Vec<c64> {
    let largest = psi.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if largest == 0.0 {
        return psi;
    }
    let reference = psi.iter().find(|z| z.norm() >= largest * (1.0 - PHASE_REFERENCE_TOLERANCE)).copied().expect("nonzero");
    let rot = reference.conj() / reference.norm();
    for z in &mut psi {
        *z *= rot;
    }
    psi
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AltPositionReport {
    /// Power-iteration estimate of the spectral norm `||X̂ - X||`.
    pub bounded_diff: f64,
    pub symmetric: bool,
}

/// Checks that `x_hat` is a valid replacement for the position operator `x`:
/// Hermitian, and a bounded perturbation of it.
pub fn validate_alt_position(x_hat: MatRef<'_, c64>, x: &PositionOperator) -> Result<AltPositionReport> {
    let n = x.dim();
    if x_hat.nrows() != n || x_hat.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, found: x_hat.nrows() });
    }
    let owned = x_hat.to_owned();
    let deviation = hermiticity_defect(&owned);
    if deviation > 1e-12 * owned.norm_max().max(1.0) {
        return Err(Error::NotHermitian { deviation });
    }
    let mut diff = owned;
    for (i, &xi) in x.diag().iter().enumerate() {
        diff[(i, i)] -= c64::new(xi, 0.0);
    }
    Ok(AltPositionReport { bounded_diff: spectral_norm_estimate(&diff, 500), symmetric: true })
}

/// Power iteration on `A^H A`.
pub(crate) fn spectral_norm_estimate(a: &Mat<c64>, iterations: usize) -> f64 {
    let n = a.ncols();
    if n == 0 {
        return 0.0;
    }
    let mut v = Mat::<c64>::from_fn(n, 1, |i, _| c64::new(1.0 + 1e-3 * (i % 7) as f64, 0.0));
    let mut estimate = 0.0;
    for _ in 0..iterations {
        let norm = v.norm_l2();
        if norm == 0.0 {
            return 0.0;
        }
        v = v * faer::Scale(c64::new(1.0 / norm, 0.0));
        let av = a * &v;
        estimate = av.norm_l2();
        v = a.adjoint() * &av;
    }
    estimate
}
