//! Experiment configuration: a TOML document with `[model]`, `[pipeline]`,
//! `[outputs]` and an optional `[scan]` section.
//!
//! ```toml
//! [model]
//! nx = 24
//! ny = 24
//! t = 1.0
//! t_prime = 0.1
//! v = 1.0
//! phi = "pi/2"
//! ```
//!
//! Every key is checked before any computation starts. Unknown keys, missing
//! required keys and wrongly typed values are reported with the line they
//! occur on.

use std::f64::consts::PI;
use std::ops::Range;
use std::path::PathBuf;

use serde::Serialize;
use thiserror::Error;
use toml::de::{DeArray, DeTable, DeValue};
use toml::Spanned;

use crate::lattice::{Boundary, BoundaryCondition, DisorderSpec, HaldaneParams, LatticeGeometry};
use crate::pipeline::{ClusterRule, DEFAULT_GAP_THRESHOLD};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },

    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { key: String, line: usize },

    #[error("missing required key `{0}`")]
    MissingKey(String),

    #[error("line {line}: `{key}` must be {expected}")]
    TypeError { key: String, line: usize, expected: &'static str },

    #[error("line {line}: invalid `{key}`: {message}")]
    InvalidValue { key: String, line: usize, message: String },

    #[error("invalid --grid entry `{entry}`: {message}")]
    InvalidGrid { entry: String, message: String },
}

impl ConfigError {
    pub fn kind(&self) -> &'static str {
        match self {
            ConfigError::Syntax { .. } => "Syntax",
            ConfigError::UnknownKey { .. } => "UnknownKey",
            ConfigError::MissingKey(_) => "MissingKey",
            ConfigError::TypeError { .. } => "TypeError",
            ConfigError::InvalidValue { .. } => "InvalidValue",
            ConfigError::InvalidGrid { .. } => "InvalidGrid",
        }
    }

    pub fn line(&self) -> Option<usize> {
        match self {
            ConfigError::Syntax { line, .. }
            | ConfigError::UnknownKey { line, .. }
            | ConfigError::TypeError { line, .. }
            | ConfigError::InvalidValue { line, .. } => Some(*line),
            ConfigError::MissingKey(_) | ConfigError::InvalidGrid { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelConfig {
    pub nx: usize,
    pub ny: usize,
    pub t: f64,
    pub t_prime: f64,
    pub v: f64,
    pub phi: f64,
    pub bc_x: BoundaryCondition,
    pub bc_y: BoundaryCondition,
    pub sigma2: f64,
    pub seed: u64,
}

impl ModelConfig {
    pub fn geometry(&self) -> LatticeGeometry {
        LatticeGeometry::new(self.nx, self.ny).expect("extents validated at parse time")
    }

    pub fn params(&self) -> HaldaneParams {
        HaldaneParams::new(self.t, self.t_prime, self.v, self.phi)
    }

    pub fn boundary(&self) -> Boundary {
        Boundary { x: self.bc_x, y: self.bc_y }
    }

    pub fn disorder(&self) -> DisorderSpec {
        DisorderSpec::new(self.sigma2, self.seed)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PositionChoice {
    Standard,
    Rotated,
    /// CSV with header `m,n,x,y` and one row per cell; relative paths are
    /// resolved against the config file's directory.
    CustomFile(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PipelineSettings {
    pub position: PositionChoice,
    pub gap_threshold: ClusterRule,
    pub manual_merges: Vec<(usize, usize)>,
    pub fermi_level: f64,
    pub min_h_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OutputSettings {
    pub dir: PathBuf,
    /// Write one `gwf_XXXX.csv` per function.
    pub emit_vectors: bool,
}

/// Model parameters a scan may sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanKey {
    T,
    TPrime,
    V,
    Phi,
    Sigma2,
}

impl ScanKey {
    pub const ALL: [ScanKey; 5] = [ScanKey::T, ScanKey::TPrime, ScanKey::V, ScanKey::Phi, ScanKey::Sigma2];

    pub fn name(self) -> &'static str {
        match self {
            ScanKey::T => "t",
            ScanKey::TPrime => "t_prime",
            ScanKey::V => "v",
            ScanKey::Phi => "phi",
            ScanKey::Sigma2 => "sigma2",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    pub fn apply(self, model: &mut ModelConfig, value: f64) {
        match self {
            ScanKey::T => model.t = value,
            ScanKey::TPrime => model.t_prime = value,
            ScanKey::V => model.v = value,
            ScanKey::Phi => model.phi = value,
            ScanKey::Sigma2 => model.sigma2 = value,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanAxis {
    pub key: ScanKey,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub pipeline: PipelineSettings,
    pub outputs: OutputSettings,
    pub scan: Vec<ScanAxis>,
}

impl ExperimentConfig {
    /// Replaces or adds scan axes from `--grid` entries of the form
    /// `key=start:stop:count` or `key=a;b;c`, separated by commas.
    pub fn apply_grid(&mut self, spec: &str) -> Result<(), ConfigError> {
        for entry in spec.split(',').map(str::trim).filter(|e| !e.is_empty()) {
            let bad = |message: &str| ConfigError::InvalidGrid { entry: entry.to_string(), message: message.to_string() };
            let (key, values) = entry.split_once('=').ok_or_else(|| bad("expected key=values"))?;
            let key = ScanKey::from_name(key.trim()).ok_or_else(|| bad("not a scannable model parameter"))?;
            let number = |s: &str| parse_number(s.trim()).ok_or_else(|| bad("not a number"));
            let values = if values.contains(':') {
                let parts: Vec<&str> = values.split(':').collect();
                let [start, stop, count] = parts[..] else {
                    return Err(bad("expected start:stop:count"));
                };
                let (start, stop) = (number(start)?, number(stop)?);
                let count: usize = count.trim().parse().map_err(|_| bad("count must be a positive integer"))?;
                match count {
                    0 => return Err(bad("count must be a positive integer")),
                    1 => vec![start],
                    _ => (0..count).map(|i| start + (stop - start) * i as f64 / (count - 1) as f64).collect(),
                }
            } else {
                values.split(';').map(number).collect::<Result<Vec<_>, _>>()?
            };
            match self.scan.iter_mut().find(|a| a.key == key) {
                Some(axis) => axis.values = values,
                None => self.scan.push(ScanAxis { key, values }),
            }
        }
        Ok(())
    }

    /// Every point of the scan grid, first axis slowest.
    pub fn scan_points(&self) -> Vec<Vec<f64>> {
        let mut points = vec![Vec::new()];
        for axis in &self.scan {
            points = points
                .into_iter()
                .flat_map(|p| {
                    axis.values.iter().map(move |&v| {
                        let mut q = p.clone();
                        q.push(v);
                        q
                    })
                })
                .collect();
        }
        points
    }
}

/// Parses numbers and multiples of pi: `1.5`, `pi`, `-pi/2`, `2*pi/3`, `0.5pi`.
pub fn parse_number(s: &str) -> Option<f64> {
    let s = s.trim();
    if let Ok(x) = s.parse::<f64>() {
        return x.is_finite().then_some(x);
    }
    let (num, den) = match s.split_once('/') {
        Some((a, b)) => (a.trim(), b.trim().parse::<f64>().ok().filter(|d| *d != 0.0)?),
        None => (s, 1.0),
    };
    let coeff = num.strip_suffix("pi")?.trim_end().trim_end_matches('*').trim_end();
    let coeff = match coeff {
        "" | "+" => 1.0,
        "-" => -1.0,
        c => c.parse::<f64>().ok()?,
    };
    let x = coeff * PI / den;
    x.is_finite().then_some(x)
}

struct Source<'a> {
    text: &'a str,
}

impl Source<'_> {
    fn line(&self, span: Range<usize>) -> usize {
        let end = span.start.min(self.text.len());
        self.text[..end].bytes().filter(|&b| b == b'\n').count() + 1
    }
}

/// A table whose keys are consumed as they are read; leftovers are unknown.
struct Section<'a, 'i> {
    name: &'static str,
    table: Option<&'a DeTable<'i>>,
    used: Vec<&'static str>,
    src: &'a Source<'a>,
}

impl<'a, 'i> Section<'a, 'i> {
    fn key(&self, k: &str) -> String {
        format!("{}.{}", self.name, k)
    }

    fn get(&mut self, k: &'static str) -> Option<&'a Spanned<DeValue<'i>>> {
        self.used.push(k);
        self.table.and_then(|t| t.get(k))
    }

    fn type_error(&self, k: &str, v: &Spanned<DeValue<'_>>, expected: &'static str) -> ConfigError {
        ConfigError::TypeError { key: self.key(k), line: self.src.line(v.span()), expected }
    }

    fn invalid(&self, k: &str, v: &Spanned<DeValue<'_>>, message: impl Into<String>) -> ConfigError {
        ConfigError::InvalidValue { key: self.key(k), line: self.src.line(v.span()), message: message.into() }
    }

    fn required<T>(&mut self, k: &'static str, f: impl FnOnce(&mut Self, &'a Spanned<DeValue<'i>>) -> Result<T, ConfigError>) -> Result<T, ConfigError> {
        match self.get(k) {
            Some(v) => f(self, v),
            None => Err(ConfigError::MissingKey(self.key(k))),
        }
    }

    fn optional<T>(&mut self, k: &'static str, default: T, f: impl FnOnce(&mut Self, &'a Spanned<DeValue<'i>>) -> Result<T, ConfigError>) -> Result<T, ConfigError> {
        match self.get(k) {
            Some(v) => f(self, v),
            None => Ok(default),
        }
    }

    fn float(&self, k: &str, v: &Spanned<DeValue<'_>>) -> Result<f64, ConfigError> {
        let x = match v.get_ref() {
            DeValue::Float(f) => parse_toml_float(f.as_str()),
            DeValue::Integer(i) => i64::from_str_radix(i.as_str(), i.radix()).ok().map(|i| i as f64),
            _ => return Err(self.type_error(k, v, "a number")),
        };
        x.filter(|x| x.is_finite()).ok_or_else(|| self.invalid(k, v, "must be finite"))
    }

    /// A float, or a string such as `"pi/2"`.
    fn angle(&self, k: &str, v: &Spanned<DeValue<'_>>) -> Result<f64, ConfigError> {
        match v.get_ref() {
            DeValue::String(s) => parse_number(s).ok_or_else(|| self.invalid(k, v, format!("cannot read `{s}` as a number"))),
            _ => self.float(k, v).map_err(|e| match e {
                ConfigError::TypeError { key, line, .. } => ConfigError::TypeError { key, line, expected: "a number or a string like \"pi/2\"" },
                e => e,
            }),
        }
    }

    fn integer(&self, k: &str, v: &Spanned<DeValue<'_>>) -> Result<u64, ConfigError> {
        match v.get_ref() {
            DeValue::Integer(i) => {
                let x = i64::from_str_radix(i.as_str(), i.radix()).map_err(|_| self.invalid(k, v, "out of range"))?;
                u64::try_from(x).map_err(|_| self.invalid(k, v, "must be non-negative"))
            }
            _ => Err(self.type_error(k, v, "a non-negative integer")),
        }
    }

    fn string(&self, k: &str, v: &'a Spanned<DeValue<'i>>) -> Result<&'a str, ConfigError> {
        match v.get_ref() {
            DeValue::String(s) => Ok(s.as_ref()),
            _ => Err(self.type_error(k, v, "a string")),
        }
    }

    fn boolean(&self, k: &str, v: &Spanned<DeValue<'_>>) -> Result<bool, ConfigError> {
        match v.get_ref() {
            DeValue::Boolean(b) => Ok(*b),
            _ => Err(self.type_error(k, v, "a boolean")),
        }
    }

    fn array(&self, k: &str, v: &'a Spanned<DeValue<'i>>) -> Result<&'a DeArray<'i>, ConfigError> {
        match v.get_ref() {
            DeValue::Array(a) => Ok(a),
            _ => Err(self.type_error(k, v, "an array")),
        }
    }

    fn boundary(&self, k: &str, v: &Spanned<DeValue<'_>>) -> Result<BoundaryCondition, ConfigError> {
        match v.get_ref() {
            DeValue::String(s) if s == "periodic" => Ok(BoundaryCondition::Periodic),
            DeValue::String(s) if s == "dirichlet" => Ok(BoundaryCondition::Dirichlet),
            DeValue::String(s) => Err(self.invalid(k, v, format!("`{s}` is neither \"periodic\" nor \"dirichlet\""))),
            _ => Err(self.type_error(k, v, "\"periodic\" or \"dirichlet\"")),
        }
    }

    fn finish(self) -> Result<(), ConfigError> {
        let Some(table) = self.table else {
            return Ok(());
        };
        // Report the first stray key in source order.
        let stray = table.iter().filter(|(k, _)| !self.used.contains(&k.get_ref().as_ref())).min_by_key(|(k, _)| k.span().start);
        match stray {
            Some((k, _)) => Err(ConfigError::UnknownKey { key: self.key(k.get_ref()), line: self.src.line(k.span()) }),
            None => Ok(()),
        }
    }
}

fn parse_toml_float(s: &str) -> Option<f64> {
    let cleaned: String = s.chars().filter(|&c| c != '_').collect();
    cleaned.parse().ok()
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let src = Source { text };
    let doc = DeTable::parse(text).map_err(|e| ConfigError::Syntax {
        line: e.span().map_or(1, |s| src.line(s)),
        message: e.message().to_string(),
    })?;
    let root = doc.get_ref();
    const SECTIONS: [&str; 4] = ["model", "pipeline", "outputs", "scan"];
    if let Some((k, _)) = root.iter().filter(|(k, _)| !SECTIONS.contains(&k.get_ref().as_ref())).min_by_key(|(k, _)| k.span().start) {
        return Err(ConfigError::UnknownKey { key: k.get_ref().to_string(), line: src.line(k.span()) });
    }
    let section = |name: &'static str| -> Result<Section<'_, '_>, ConfigError> {
        let entry = root.iter().find(|(k, _)| k.get_ref() == name);
        let table = match entry {
            None => None,
            Some((k, v)) => match v.get_ref() {
                DeValue::Table(t) => Some(t),
                _ => return Err(ConfigError::TypeError { key: name.to_string(), line: src.line(k.span()), expected: "a table" }),
            },
        };
        Ok(Section { name, table, used: Vec::new(), src: &src })
    };

    let mut s = section("model")?;
    if s.table.is_none() {
        return Err(ConfigError::MissingKey("model".to_string()));
    }
    let extent = |s: &mut Section<'_, '_>, k: &'static str| {
        s.required(k, |s, v| {
            let n = s.integer(k, v)?;
            if n == 0 {
                return Err(s.invalid(k, v, "must be positive"));
            }
            usize::try_from(n).map_err(|_| s.invalid(k, v, "too large"))
        })
    };
    let nx = extent(&mut s, "nx")?;
    let ny = extent(&mut s, "ny")?;
    let t = s.required("t", |s, v| s.float("t", v))?;
    let t_prime = s.required("t_prime", |s, v| s.float("t_prime", v))?;
    let v = s.required("v", |s, v| s.float("v", v))?;
    let phi = s.required("phi", |s, v| s.angle("phi", v))?;
    let bc_x = s.optional("bc_x", BoundaryCondition::Dirichlet, |s, v| s.boundary("bc_x", v))?;
    let bc_y = s.optional("bc_y", BoundaryCondition::Dirichlet, |s, v| s.boundary("bc_y", v))?;
    let sigma2 = s.optional("sigma2", 0.0, |s, v| {
        let x = s.float("sigma2", v)?;
        if x < 0.0 {
            return Err(s.invalid("sigma2", v, "must be non-negative"));
        }
        Ok(x)
    })?;
    let seed = s.optional("seed", 0, |s, v| s.integer("seed", v))?;
    s.finish()?;
    let model = ModelConfig { nx, ny, t, t_prime, v, phi, bc_x, bc_y, sigma2, seed };

    let mut s = section("pipeline")?;
    let position = s.optional("position", "standard", |s, v| s.string("position", v))?;
    let position_file = s.optional("position_file", None, |s, v| s.string("position_file", v).map(Some))?;
    let position = match (position, position_file) {
        ("standard", None) => PositionChoice::Standard,
        ("rotated", None) => PositionChoice::Rotated,
        ("custom_file", Some(path)) => PositionChoice::CustomFile(PathBuf::from(path)),
        ("custom_file", None) => return Err(ConfigError::MissingKey("pipeline.position_file".to_string())),
        ("standard" | "rotated", Some(_)) => {
            let v = s.table.and_then(|t| t.get("position_file")).expect("present");
            return Err(s.invalid("position_file", v, "only used with position = \"custom_file\""));
        }
        (other, _) => {
            let v = s.table.and_then(|t| t.get("position")).expect("present");
            return Err(s.invalid("position", v, format!("`{other}` is not one of standard, rotated, custom_file")));
        }
    };
    let gap_threshold = s.optional("gap_threshold", ClusterRule::Threshold(DEFAULT_GAP_THRESHOLD), |s, v| match v.get_ref() {
        DeValue::String(a) if a == "auto" => Ok(ClusterRule::Auto),
        DeValue::String(_) => Err(s.invalid("gap_threshold", v, "the only string value is \"auto\"")),
        _ => {
            let x = s.float("gap_threshold", v).map_err(|e| match e {
                ConfigError::TypeError { key, line, .. } => ConfigError::TypeError { key, line, expected: "a positive number or \"auto\"" },
                e => e,
            })?;
            if x <= 0.0 {
                return Err(s.invalid("gap_threshold", v, "must be positive"));
            }
            Ok(ClusterRule::Threshold(x))
        }
    })?;
    let manual_merges = s.optional("manual_merges", Vec::new(), |s, v| {
        s.array("manual_merges", v)?
            .iter()
            .map(|pair| {
                let expected = "an array of [first, last] cluster-id pairs";
                let DeValue::Array(items) = pair.get_ref() else {
                    return Err(s.type_error("manual_merges", pair, expected));
                };
                let ids = items.iter().map(|i| s.integer("manual_merges", i)).collect::<Result<Vec<_>, _>>()?;
                match ids[..] {
                    [a, b] if a <= b => Ok((a as usize, b as usize)),
                    [_, _] => Err(s.invalid("manual_merges", pair, "first id exceeds last id")),
                    _ => Err(s.type_error("manual_merges", pair, expected)),
                }
            })
            .collect()
    })?;
    let fermi_level = s.optional("fermi_level", 0.0, |s, v| s.float("fermi_level", v))?;
    let min_h_gap = s.optional("min_h_gap", 1e-8, |s, v| s.float("min_h_gap", v))?;
    s.finish()?;
    let pipeline = PipelineSettings { position, gap_threshold, manual_merges, fermi_level, min_h_gap };

    let mut s = section("outputs")?;
    let dir = s.optional("dir", PathBuf::from("out"), |s, v| s.string("dir", v).map(PathBuf::from))?;
    let emit_vectors = s.optional("emit_vectors", true, |s, v| s.boolean("emit_vectors", v))?;
    s.finish()?;
    let outputs = OutputSettings { dir, emit_vectors };

    let s = section("scan")?;
    let mut scan = Vec::new();
    if let Some(table) = s.table {
        let mut keys: Vec<_> = table.iter().collect();
        keys.sort_by_key(|(k, _)| k.span().start);
        for (k, v) in keys {
            let name = k.get_ref().as_ref();
            let Some(key) = ScanKey::from_name(name) else {
                return Err(ConfigError::UnknownKey { key: s.key(name), line: src.line(k.span()) });
            };
            let values = s
                .array(name, v)?
                .iter()
                .map(|x| s.angle(name, x))
                .collect::<Result<Vec<_>, _>>()?;
            if values.is_empty() {
                return Err(s.invalid(name, v, "needs at least one value"));
            }
            scan.push(ScanAxis { key, values });
        }
    }
    Ok(ExperimentConfig { model, pipeline, outputs, scan })
}
