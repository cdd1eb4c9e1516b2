//! CSV and JSON emission with fixed numeric formatting.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::pipeline::UniformGapReport;

pub const HAMILTONIAN_SPECTRUM: &str = "hamiltonian_spectrum.csv";
pub const PXP_SPECTRUM: &str = "pxp_spectrum.csv";
pub const GWF_CENTERS: &str = "gwf_centers.csv";
pub const CHARGE_CENTERS: &str = "charge_centers.csv";
pub const SCAN: &str = "scan.csv";
pub const SUMMARY: &str = "summary.json";
pub const MANIFEST: &str = "manifest.json";

pub const HAMILTONIAN_SPECTRUM_HEADER: [&str; 2] = ["index", "eigenvalue"];
pub const PXP_SPECTRUM_HEADER: [&str; 3] = ["index", "eigenvalue", "cluster_id"];
pub const GWF_CENTERS_HEADER: [&str; 7] = ["band_j", "m", "center_a", "center_b", "gamma", "log_c", "r2"];
pub const CHARGE_CENTERS_HEADER: [&str; 3] = ["k2", "band", "phase_continued"];
pub const GWF_VECTOR_HEADER: [&str; 6] = ["m", "n", "re_A", "im_A", "re_B", "im_B"];

/// File name of the `index`-th generalized Wannier function.
pub fn gwf_file_name(index: usize) -> String {
    format!("gwf_{index:04}.csv")
}

/// 17 significant digits in scientific notation: exact round trip for `f64`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x:.16e}")
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{}: {source}", path.display())]
pub struct IoError {
    pub path: PathBuf,
    #[source]
    pub source: io::Error,
}

impl IoError {
    pub fn new(path: impl Into<PathBuf>, source: impl Into<io::Error>) -> Self {
        Self { path: path.into(), source: source.into() }
    }
}

/// An output directory; records every file written to it.
#[derive(Debug)]
pub struct OutputDir {
    path: PathBuf,
    files: Vec<String>,
}

impl OutputDir {
    pub fn create(path: &Path) -> Result<Self, IoError> {
        fs::create_dir_all(path).map_err(|e| IoError::new(path, e))?;
        Ok(Self { path: path.to_path_buf(), files: Vec::new() })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    pub fn write_csv<I>(&mut self, name: &str, header: &[&str], rows: I) -> Result<(), IoError>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let path = self.path.join(name);
        let mut w = csv::Writer::from_path(&path).map_err(|e| IoError::new(&path, e))?;
        w.write_record(header).map_err(|e| IoError::new(&path, e))?;
        for row in rows {
            w.write_record(&row).map_err(|e| IoError::new(&path, e))?;
        }
        w.flush().map_err(|e| IoError::new(&path, e))?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<(), IoError> {
        let path = self.path.join(name);
        let mut text = serde_json::to_string_pretty(value).map_err(|e| IoError::new(&path, e))?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| IoError::new(&path, e))?;
        self.files.push(name.to_string());
        Ok(())
    }

    /// Deletes `gwf_XXXX.csv` files left over from an earlier run.
    pub fn clear_vectors(&self) -> Result<(), IoError> {
        let entries = fs::read_dir(&self.path).map_err(|e| IoError::new(&self.path, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| IoError::new(&self.path, e))?;
            let name = entry.file_name();
            let name = name.to_string_lossy();
            if name.starts_with("gwf_") && name.ends_with(".csv") && name != GWF_CENTERS {
                fs::remove_file(entry.path()).map_err(|e| IoError::new(entry.path(), e))?;
            }
        }
        Ok(())
    }
}

/// Per-run summary written to `summary.json`.
#[derive(Clone, Debug, Default, Serialize)]
pub struct Summary {
    pub h_gap: Option<f64>,
    pub n_occ: Option<usize>,
    pub uniform_gap: Option<UniformGapReport>,
    pub chern: Option<i64>,
    pub residuals: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decay: Option<DecaySummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mending: Option<MendingSummary>,
}

#[derive(Clone, Debug, Serialize)]
pub struct DecaySummary {
    pub n_functions: usize,
    pub n_interior: usize,
    pub n_saturated: usize,
    pub median_gamma: Option<f64>,
    /// p90/p10 ratio of the non-saturated gammas.
    pub gamma_spread: Option<f64>,
    pub min_r2: Option<f64>,
    /// Envelope rate of the Fermi-projection kernel.
    pub kernel_gamma: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct MendingSummary {
    pub obstructed: Option<bool>,
    pub coverage_gap: Option<f64>,
    pub winding: Option<i64>,
    pub error: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a, C: Serialize> {
    pub artifact: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub seed: u64,
    pub wall_time_s: f64,
    pub config: &'a C,
    pub residuals: &'a BTreeMap<String, f64>,
    pub files: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<serde_json::Value>,
}
