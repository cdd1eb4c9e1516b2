//! Command runners behind the `wannier-ladder` binary.
//!
//! Each command reads a validated [`ExperimentConfig`], writes its CSV and
//! JSON products to the output directory and finishes with `manifest.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde_json::json;

use crate::config::{parse_config, ConfigError, ExperimentConfig, PositionChoice, ScanKey};
use crate::error::Error;
use crate::lattice::{build_haldane, build_position, BoundaryCondition, HermitianOperator, PositionLabel, PositionOperator};
use crate::localization::{fit_gwf, frame_checks, gamma_spread, is_interior, kernel_decay_fit, max_imaginary_part, median, DecayFit};
use crate::output::*;
use crate::pipeline::{projected_spectrum, run_pipeline_from, GwfSet, PipelineConfig};
use crate::spectral::{eigh, fermi_projection, spectral_gap, SpectralDecomposition};
use crate::topology::{bloch_blocks, charge_center_flow, loop_unitaries, mend_periodic, row_position, MendOutcome};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Spectrum,
    Pxp,
    Gwf,
    Decay,
    Chern,
    Scan,
}

impl Command {
    pub const ALL: [Command; 6] = [Command::Spectrum, Command::Pxp, Command::Gwf, Command::Decay, Command::Chern, Command::Scan];

    pub fn name(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Pxp => "pxp",
            Command::Gwf => "gwf",
            Command::Decay => "decay",
            Command::Chern => "chern",
            Command::Scan => "scan",
        }
    }
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Command::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| format!("unknown command `{s}`"))
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub force: bool,
    /// Overrides `outputs.dir`.
    pub out: Option<PathBuf>,
    /// `--grid` scan overrides.
    pub grid: Option<String>,
    /// Base for a relative `pipeline.position_file`.
    pub config_dir: PathBuf,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error("{}: {message}", path.display())]
    Input { path: PathBuf, message: String },

    #[error(transparent)]
    Compute(#[from] Error),

    #[error(transparent)]
    Io(#[from] IoError),
}

impl RunError {
    /// 0 ok, 1 I/O, 2 config, 3 assumption failure, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Io(_) => 1,
            RunError::Config(_) | RunError::Input { .. } => 2,
            RunError::Compute(e) if e.is_assumption_failure() => 3,
            RunError::Compute(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            RunError::Config(e) => e.kind(),
            RunError::Input { .. } => "InvalidInputFile",
            RunError::Compute(e) => e.kind(),
            RunError::Io(_) => "Io",
        }
    }

    /// Machine-readable record for stderr.
    pub fn record(&self) -> serde_json::Value {
        let mut r = json!({ "error": self.kind(), "exit_code": self.exit_code(), "message": self.to_string() });
        if let RunError::Config(e) = self {
            if let Some(line) = e.line() {
                r["line"] = json!(line);
            }
        }
        r
    }
}

/// Reads and validates a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, RunError> {
    let text = fs::read_to_string(path).map_err(|e| IoError::new(path, e))?;
    Ok(parse_config(&text)?)
}

#[derive(Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub files: Vec<String>,
    pub summary: Option<Summary>,
}

pub fn run(command: Command, mut cfg: ExperimentConfig, opts: &RunOptions) -> Result<RunOutcome, RunError> {
    let started = Instant::now();
    if let Some(grid) = &opts.grid {
        cfg.apply_grid(grid)?;
    }
    if command == Command::Scan && cfg.scan.is_empty() {
        return Err(ConfigError::MissingKey("scan (or --grid)".to_string()).into());
    }
    // Load any position file before computing anything.
    let positions = positions(&cfg, &opts.config_dir)?;
    let dir = opts.out.clone().unwrap_or_else(|| cfg.outputs.dir.clone());
    let mut out = OutputDir::create(&dir)?;
    let result = match command {
        Command::Spectrum => cmd_spectrum(&cfg, &mut out).map(Some),
        Command::Pxp => cmd_pxp(&cfg, &positions, &mut out).map(Some),
        Command::Gwf => cmd_gwf(&cfg, &positions, opts.force, &mut out).map(Some),
        Command::Decay => cmd_decay(&cfg, &positions, opts.force, &mut out).map(Some),
        Command::Chern => cmd_chern(&cfg, &mut out).map(Some),
        Command::Scan => cmd_scan(&cfg, &positions, &mut out).map(|_| None),
    };
    let summary = match result {
        Ok(s) => s,
        Err(e) => {
            // A failed run still leaves its manifest, carrying the error record.
            write_manifest(&mut out, command, &cfg, started, &BTreeMap::new(), Some(e.record()))?;
            return Err(e);
        }
    };
    if let Some(s) = &summary {
        out.write_json(SUMMARY, s)?;
    }
    let residuals = summary.as_ref().map(|s| s.residuals.clone()).unwrap_or_default();
    let files = write_manifest(&mut out, command, &cfg, started, &residuals, None)?;
    Ok(RunOutcome { dir, files, summary })
}

fn write_manifest(
    out: &mut OutputDir,
    command: Command,
    cfg: &ExperimentConfig,
    started: Instant,
    residuals: &BTreeMap<String, f64>,
    error: Option<serde_json::Value>,
) -> Result<Vec<String>, IoError> {
    let mut files = out.files().to_vec();
    files.push(MANIFEST.to_string());
    let manifest = Manifest {
        artifact: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command: command.name(),
        seed: cfg.model.seed,
        wall_time_s: started.elapsed().as_secs_f64(),
        config: cfg,
        residuals,
        files: &files,
        error,
    };
    out.write_json(MANIFEST, &manifest)?;
    Ok(files)
}

/// `(X, Y)` diagonals for the configured position choice.
pub type Positions = (PositionOperator, PositionOperator);

fn positions(cfg: &ExperimentConfig, base: &Path) -> Result<Positions, RunError> {
    let geom = cfg.model.geometry();
    Ok(match &cfg.pipeline.position {
        PositionChoice::Standard => (build_position(&geom, PositionLabel::XStandard), build_position(&geom, PositionLabel::YStandard)),
        PositionChoice::Rotated => (build_position(&geom, PositionLabel::XRotated), build_position(&geom, PositionLabel::YRotated)),
        PositionChoice::CustomFile(p) => {
            let path = base.join(p);
            let (x, y) = read_position_file(&path, cfg.model.nx, cfg.model.ny)?;
            let x = PositionOperator::custom(&geom, x)?;
            let y = PositionOperator::custom(&geom, y)?;
            (x, y)
        }
    })
}

/// Reads `m,n,x,y` rows (one per cell) into per-orbital diagonals.
pub fn read_position_file(path: &Path, nx: usize, ny: usize) -> Result<(Vec<f64>, Vec<f64>), RunError> {
    let bad = |message: String| RunError::Input { path: path.to_path_buf(), message };
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => RunError::Io(IoError::new(path, io)),
        other => bad(format!("{other:?}")),
    })?;
    let header = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != ["m", "n", "x", "y"] {
        return Err(bad("expected header m,n,x,y".to_string()));
    }
    let mut x = vec![f64::NAN; 2 * nx * ny];
    let mut y = vec![f64::NAN; 2 * nx * ny];
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let line = row + 2;
        let cell = |i: usize, len: usize| -> Result<usize, RunError> {
            record[i].trim().parse::<usize>().ok().filter(|&c| c < len).ok_or_else(|| bad(format!("line {line}: bad cell index `{}`", &record[i])))
        };
        let coord = |i: usize| -> Result<f64, RunError> {
            record[i].trim().parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| bad(format!("line {line}: bad coordinate `{}`", &record[i])))
        };
        let (m, n) = (cell(0, nx)?, cell(1, ny)?);
        let i = 2 * (n * nx + m);
        if !x[i].is_nan() {
            return Err(bad(format!("line {line}: cell ({m}, {n}) listed twice")));
        }
        let (xv, yv) = (coord(2)?, coord(3)?);
        x[i] = xv;
        x[i + 1] = xv;
        y[i] = yv;
        y[i + 1] = yv;
    }
    if let Some(i) = x.iter().position(|v| v.is_nan()) {
        return Err(bad(format!("cell ({}, {}) missing", (i / 2) % nx, (i / 2) / nx)));
    }
    Ok((x, y))
}

fn hamiltonian(cfg: &ExperimentConfig) -> Result<HermitianOperator, Error> {
    let m = &cfg.model;
    build_haldane(&m.geometry(), &m.params(), m.boundary(), &m.disorder())
}

fn pipeline_config(cfg: &ExperimentConfig, positions: &Positions, force: bool) -> PipelineConfig {
    let mut p = PipelineConfig::new(positions.0.clone(), positions.1.clone()).with_rule(cfg.pipeline.gap_threshold).forced(force);
    p.merges = cfg.pipeline.manual_merges.clone();
    p.fermi_level = cfg.pipeline.fermi_level;
    p.min_h_gap = cfg.pipeline.min_h_gap;
    p
}

fn write_hamiltonian_spectrum(out: &mut OutputDir, dec: &SpectralDecomposition) -> Result<(), IoError> {
    let rows = dec.eigenvalues().iter().enumerate().map(|(i, &e)| vec![i.to_string(), fmt_f64(e)]);
    out.write_csv(HAMILTONIAN_SPECTRUM, &HAMILTONIAN_SPECTRUM_HEADER, rows)
}

fn write_pxp_spectrum(out: &mut OutputDir, eigs: &[f64], clusters: &[crate::pipeline::BandCluster]) -> Result<(), IoError> {
    let rows = clusters.iter().enumerate().flat_map(|(c, cl)| {
        (cl.start..cl.end).map(move |i| vec![i.to_string(), fmt_f64(eigs[i]), c.to_string()])
    });
    out.write_csv(PXP_SPECTRUM, &PXP_SPECTRUM_HEADER, rows)
}

pub fn cmd_spectrum(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<Summary, RunError> {
    let h = hamiltonian(cfg)?;
    let dec = eigh(&h)?;
    write_hamiltonian_spectrum(out, &dec)?;
    let level = cfg.pipeline.fermi_level;
    let mut residuals = BTreeMap::new();
    residuals.insert("hermiticity".to_string(), h.hermiticity_defect());
    Ok(Summary {
        h_gap: spectral_gap(&dec, level).ok().map(|g| g.value()),
        n_occ: Some(dec.count_below(level)),
        residuals,
        ..Summary::default()
    })
}

pub fn cmd_pxp(cfg: &ExperimentConfig, positions: &Positions, out: &mut OutputDir) -> Result<Summary, RunError> {
    let dec = eigh(&hamiltonian(cfg)?)?;
    let pc = pipeline_config(cfg, positions, false);
    let p = fermi_projection(&dec, pc.fermi_level)?;
    if p.gap() < pc.min_h_gap {
        return Err(Error::GapClosedAtFermiLevel { gap: p.gap() }.into());
    }
    let spec = projected_spectrum(&p, &pc)?;
    write_pxp_spectrum(out, spec.decomposition.eigenvalues(), &spec.clusters)?;
    Ok(Summary {
        h_gap: Some(p.gap()),
        n_occ: Some(p.n_occ()),
        uniform_gap: Some(spec.report),
        ..Summary::default()
    })
}

fn gwf_run(cfg: &ExperimentConfig, positions: &Positions, force: bool) -> Result<(GwfSet, Vec<DecayFit>), RunError> {
    let h = hamiltonian(cfg)?;
    let set = run_pipeline_from(&eigh(&h)?, &pipeline_config(cfg, positions, force))?;
    let (geom, bc) = (cfg.model.geometry(), cfg.model.boundary());
    let fits = set.functions.par_iter().map(|f| fit_gwf(f, &geom, bc)).collect::<Result<Vec<_>, _>>()?;
    Ok((set, fits))
}

fn gwf_residuals(set: &GwfSet) -> BTreeMap<String, f64> {
    let frame = frame_checks(&set.functions, &set.projection);
    BTreeMap::from([
        ("orthonormality".to_string(), frame.orthonormality_residual),
        ("completeness".to_string(), frame.completeness_residual),
        ("max_imaginary_part".to_string(), max_imaginary_part(&set.functions)),
    ])
}

fn write_centers(out: &mut OutputDir, set: &GwfSet, fits: &[DecayFit]) -> Result<(), IoError> {
    let mut within_band = Vec::with_capacity(set.functions.len());
    let mut counts = vec![0usize; set.clusters.len()];
    for f in &set.functions {
        within_band.push(counts[f.band_index]);
        counts[f.band_index] += 1;
    }
    let rows = set.functions.iter().zip(fits).zip(within_band).map(|((f, fit), m)| {
        vec![
            f.band_index.to_string(),
            m.to_string(),
            fmt_f64(f.center_a),
            fmt_f64(f.center_b),
            fmt_f64(fit.gamma),
            fmt_f64(fit.log_c),
            fmt_f64(fit.r_squared),
        ]
    });
    out.write_csv(GWF_CENTERS, &GWF_CENTERS_HEADER, rows)
}

pub fn cmd_gwf(cfg: &ExperimentConfig, positions: &Positions, force: bool, out: &mut OutputDir) -> Result<Summary, RunError> {
    let (set, fits) = gwf_run(cfg, positions, force)?;
    write_pxp_spectrum(out, &set.pxp_eigenvalues, &set.clusters)?;
    write_centers(out, &set, &fits)?;
    out.clear_vectors()?;
    if cfg.outputs.emit_vectors {
        let (nx, ny) = (cfg.model.nx, cfg.model.ny);
        for (k, f) in set.functions.iter().enumerate() {
            let rows = (0..ny).flat_map(|n| (0..nx).map(move |m| (m, n))).map(|(m, n)| {
                let (a, b) = (f.psi[2 * (n * nx + m)], f.psi[2 * (n * nx + m) + 1]);
                vec![m.to_string(), n.to_string(), fmt_f64(a.re), fmt_f64(a.im), fmt_f64(b.re), fmt_f64(b.im)]
            });
            out.write_csv(&gwf_file_name(k), &GWF_VECTOR_HEADER, rows)?;
        }
    }
    Ok(Summary {
        h_gap: Some(set.h_gap()),
        n_occ: Some(set.n_occ()),
        uniform_gap: Some(set.report),
        residuals: gwf_residuals(&set),
        ..Summary::default()
    })
}

pub fn cmd_decay(cfg: &ExperimentConfig, positions: &Positions, force: bool, out: &mut OutputDir) -> Result<Summary, RunError> {
    let (set, fits) = gwf_run(cfg, positions, force)?;
    write_centers(out, &set, &fits)?;
    let (geom, bc) = (cfg.model.geometry(), cfg.model.boundary());
    let interior: Vec<DecayFit> = fits.iter().copied().filter(|f| is_interior(f.center, &geom, bc)).collect();
    let fitted: Vec<DecayFit> = interior.iter().copied().filter(|f| !f.saturated).collect();
    let gammas: Vec<f64> = fitted.iter().map(|f| f.gamma).collect();
    let kernel = kernel_decay_fit(&set.projection, &geom, bc)?;
    let decay = DecaySummary {
        n_functions: fits.len(),
        n_interior: interior.len(),
        n_saturated: fits.iter().filter(|f| f.saturated).count(),
        median_gamma: median(&gammas),
        gamma_spread: gamma_spread(&interior),
        min_r2: fitted.iter().map(|f| f.r_squared).reduce(f64::min),
        kernel_gamma: (!kernel.saturated).then_some(kernel.gamma),
    };
    Ok(Summary {
        h_gap: Some(set.h_gap()),
        n_occ: Some(set.n_occ()),
        uniform_gap: Some(set.report),
        residuals: gwf_residuals(&set),
        decay: Some(decay),
        ..Summary::default()
    })
}

/// Loop unitaries for mending are sampled on at least this many points per
/// direction of the Brillouin zone.
pub const MIN_MENDING_GRID: usize = 48;

pub fn cmd_chern(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<Summary, RunError> {
    let m = &cfg.model;
    let geom = m.geometry();
    let fam = bloch_blocks(&geom, &m.params(), m.boundary(), &m.disorder(), cfg.pipeline.fermi_level)?;
    let flow = charge_center_flow(&fam, &row_position(m.nx), m.nx)?;
    let rows = flow.phases.iter().enumerate().flat_map(|(band, curve)| {
        flow.k2.iter().zip(curve).map(move |(&k2, &p)| vec![fmt_f64(k2), band.to_string(), fmt_f64(p)])
    });
    out.write_csv(CHARGE_CENTERS, &CHARGE_CENTERS_HEADER, rows)?;
    // The union of the block spectra is the full spectrum.
    let level = cfg.pipeline.fermi_level;
    let mut below = f64::NEG_INFINITY;
    let mut above = f64::INFINITY;
    for b in &fam.blocks {
        for &e in eigh(b)?.eigenvalues() {
            if e < level {
                below = below.max(e);
            } else {
                above = above.min(e);
            }
        }
    }
    let mending = if m.bc_x == BoundaryCondition::Periodic {
        let (n1, n2) = (m.nx.max(MIN_MENDING_GRID), m.ny.max(MIN_MENDING_GRID));
        let outcome = loop_unitaries(&m.params(), n1, n2, level).and_then(|u| mend_periodic(&u));
        Some(match outcome {
            Ok(MendOutcome::Obstructed { coverage_gap, winding }) => {
                MendingSummary { obstructed: Some(true), coverage_gap: Some(coverage_gap), winding: Some(winding), error: None }
            }
            Ok(MendOutcome::Periodic(frame)) => MendingSummary {
                obstructed: Some(false),
                coverage_gap: None,
                winding: Some(0),
                error: (frame.max_jump > std::f64::consts::PI).then(|| "logarithm jumps by more than pi between samples".to_string()),
            },
            Err(e) => MendingSummary { obstructed: None, coverage_gap: None, winding: None, error: Some(e.to_string()) },
        })
    } else {
        None
    };
    let residuals = BTreeMap::from([("largest_avoided_arc".to_string(), flow.largest_avoided_arc)]);
    Ok(Summary {
        h_gap: Some(above - below),
        n_occ: Some(fam.projections.iter().map(|p| p.n_occ()).sum()),
        chern: Some(flow.winding),
        residuals,
        mending,
        ..Summary::default()
    })
}

/// One row of `scan.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanRow {
    pub values: Vec<f64>,
    pub h_gap: Option<f64>,
    pub n_occ: Option<usize>,
    pub uniform_gap_passed: Option<bool>,
    pub n_clusters: Option<usize>,
    pub winding: Option<i64>,
    /// `ok`, or the kind of the first error met at this point.
    pub status: String,
}

pub fn scan_point(cfg: &ExperimentConfig, positions: &Positions) -> ScanRow {
    let mut row = ScanRow { values: Vec::new(), h_gap: None, n_occ: None, uniform_gap_passed: None, n_clusters: None, winding: None, status: "ok".to_string() };
    let note = |row: &mut ScanRow, e: &Error| {
        if row.status == "ok" {
            row.status = e.kind().to_string();
        }
    };
    let dec = match hamiltonian(cfg).and_then(|h| eigh(&h)) {
        Ok(d) => d,
        Err(e) => {
            note(&mut row, &e);
            return row;
        }
    };
    let pc = pipeline_config(cfg, positions, false);
    match fermi_projection(&dec, pc.fermi_level) {
        Ok(p) => {
            row.h_gap = Some(p.gap());
            row.n_occ = Some(p.n_occ());
            if p.gap() < pc.min_h_gap {
                note(&mut row, &Error::GapClosedAtFermiLevel { gap: p.gap() });
            } else {
                match projected_spectrum(&p, &pc) {
                    Ok(s) => {
                        row.uniform_gap_passed = Some(s.report.passed);
                        row.n_clusters = Some(s.report.n_clusters);
                    }
                    Err(e) => note(&mut row, &e),
                }
            }
        }
        Err(e) => note(&mut row, &e),
    }
    let m = &cfg.model;
    if m.bc_y == BoundaryCondition::Periodic && m.sigma2 == 0.0 {
        let flow = bloch_blocks(&m.geometry(), &m.params(), m.boundary(), &m.disorder(), pc.fermi_level)
            .and_then(|fam| charge_center_flow(&fam, &row_position(m.nx), m.nx));
        match flow {
            Ok(f) => row.winding = Some(f.winding),
            Err(e) => note(&mut row, &e),
        }
    }
    row
}

pub fn cmd_scan(cfg: &ExperimentConfig, positions: &Positions, out: &mut OutputDir) -> Result<Vec<ScanRow>, RunError> {
    let keys: Vec<ScanKey> = cfg.scan.iter().map(|a| a.key).collect();
    let mut rows = Vec::new();
    for values in cfg.scan_points() {
        let mut point = cfg.clone();
        for (k, &v) in keys.iter().zip(&values) {
            k.apply(&mut point.model, v);
        }
        let mut row = scan_point(&point, positions);
        row.values = values;
        rows.push(row);
    }
    let mut header: Vec<&str> = vec!["point"];
    header.extend(keys.iter().map(|k| k.name()));
    header.extend(["h_gap", "n_occ", "uniform_gap_passed", "n_clusters", "winding", "status"]);
    let opt = |x: Option<String>| x.unwrap_or_default();
    let records = rows.iter().enumerate().map(|(i, r)| {
        let mut rec = vec![i.to_string()];
        rec.extend(r.values.iter().map(|&v| fmt_f64(v)));
        rec.push(opt(r.h_gap.map(fmt_f64)));
        rec.push(opt(r.n_occ.map(|n| n.to_string())));
        rec.push(opt(r.uniform_gap_passed.map(|b| b.to_string())));
        rec.push(opt(r.n_clusters.map(|n| n.to_string())));
        rec.push(opt(r.winding.map(|w| w.to_string())));
        rec.push(r.status.clone());
        rec
    });
    out.write_csv(SCAN, &header, records)?;
    Ok(rows)
}
