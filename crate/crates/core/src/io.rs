//! System files, auxiliary input files and the line-oriented report format.
//!
//! All input files are TOML. A system file looks like
//!
//! ```toml
//! name = "double-integrator"
//! a = [[0.0, 1.0], [0.0, 0.0]]
//! b = [[0.0], [1.0]]
//!
//! [[structure]]
//! re = -1.0
//! blocks = [1]
//!
//! [[structure]]
//! re = -2.0
//! ```
//!
//! `im` defaults to 0 and `blocks` to `[1]`. Complex eigenvalues may be listed
//! without their conjugate. Instead of `structure`, `zero_structure = true`
//! requests every eigenvalue at zero with one Jordan block per controllability
//! index. Optional `[baseline]` and `[reference]` tables carry published
//! figures (`kappa_fro`, `gain_fro`, `delta_fro`, `source`).

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::Deserialize;
use thiserror::Error;

use crate::eigstructure::{controllability_indices, EigStructure, EigenGroup};
use crate::error::Error;
use crate::linalg::{CMat, RMat, ToleranceConfig};
use crate::system::System;

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: parse error: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: field `{field}`: {source}")]
    Invalid {
        path: PathBuf,
        field: &'static str,
        source: Error,
    },
}

impl LoadError {
    /// The underlying model error for invariant violations.
    pub fn model_error(&self) -> Option<&Error> {
        match self {
            LoadError::Invalid { source, .. } => Some(source),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEigenvalue {
    re: f64,
    #[serde(default)]
    im: f64,
    #[serde(default = "one_block")]
    blocks: Vec<usize>,
}

fn one_block() -> Vec<usize> {
    vec![1]
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Figures {
    pub kappa_fro: Option<f64>,
    pub gain_fro: Option<f64>,
    pub delta_fro: Option<f64>,
    #[serde(default)]
    pub source: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystemFile {
    name: String,
    #[serde(default)]
    provenance: Option<String>,
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    #[serde(default)]
    structure: Option<Vec<RawEigenvalue>>,
    #[serde(default)]
    zero_structure: bool,
    #[serde(default)]
    baseline: Option<Figures>,
    #[serde(default)]
    reference: Option<Figures>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpecFile {
    #[serde(default)]
    structure: Option<Vec<RawEigenvalue>>,
    #[serde(default)]
    zero_structure: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCoordsFile {
    coords: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFeedbackFile {
    f: Vec<Vec<f64>>,
}

/// Where the requested eigenstructure comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum StructureSource {
    Explicit(EigStructure),
    /// All eigenvalues at zero, one mini-block per controllability index.
    ZeroByControllabilityIndices,
    Absent,
}

impl StructureSource {
    pub fn resolve(&self, sys: &System, tol: &ToleranceConfig) -> Result<EigStructure, Error> {
        match self {
            StructureSource::Explicit(s) => Ok(s.clone()),
            StructureSource::ZeroByControllabilityIndices => zero_structure(sys, tol),
            StructureSource::Absent => Err(Error::Dimension("no eigenstructure given".into())),
        }
    }
}

/// Every eigenvalue at zero with Jordan blocks sized by the controllability indices.
pub fn zero_structure(sys: &System, tol: &ToleranceConfig) -> Result<EigStructure, Error> {
    let c = controllability_indices(sys, tol)?;
    EigStructure::new(vec![EigenGroup::real(0.0, c)])
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemFile {
    pub name: String,
    pub provenance: Option<String>,
    pub system: System,
    pub structure: StructureSource,
    pub baseline: Option<Figures>,
    pub reference: Option<Figures>,
}

fn read(path: &Path) -> Result<String, LoadError> {
    std::fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> Result<T, LoadError> {
    toml::from_str(text).map_err(|e| LoadError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn matrix(path: &Path, field: &'static str, rows: &[Vec<f64>]) -> Result<RMat, LoadError> {
    let invalid = |msg: String| LoadError::Invalid {
        path: path.to_path_buf(),
        field,
        source: Error::Dimension(msg),
    };
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 {
        return Err(invalid("matrix is empty".into()));
    }
    if let Some(i) = rows.iter().position(|row| row.len() != c) {
        return Err(invalid(format!(
            "row {} has {} entries, expected {c}",
            i + 1,
            rows[i].len()
        )));
    }
    Ok(RMat::from_fn(r, c, |i, j| rows[i][j]))
}

fn structure(
    path: &Path,
    raw: Option<Vec<RawEigenvalue>>,
    zero: bool,
) -> Result<StructureSource, LoadError> {
    match (raw, zero) {
        (Some(_), true) => Err(LoadError::Invalid {
            path: path.to_path_buf(),
            field: "structure",
            source: Error::Dimension(
                "`structure` and `zero_structure` are mutually exclusive".into(),
            ),
        }),
        (Some(list), false) => {
            let groups = list
                .into_iter()
                .map(|e| EigenGroup::new(Complex64::new(e.re, e.im), e.blocks))
                .collect();
            EigStructure::with_conjugates(groups)
                .map(StructureSource::Explicit)
                .map_err(|source| LoadError::Invalid {
                    path: path.to_path_buf(),
                    field: "structure",
                    source,
                })
        }
        (None, true) => Ok(StructureSource::ZeroByControllabilityIndices),
        (None, false) => Ok(StructureSource::Absent),
    }
}

pub fn parse_system(path: &Path, text: &str) -> Result<SystemFile, LoadError> {
    let raw: RawSystemFile = parse(path, text)?;
    let a = matrix(path, "a", &raw.a)?;
    let b = matrix(path, "b", &raw.b)?;
    let system = System::new(a, b).map_err(|source| LoadError::Invalid {
        path: path.to_path_buf(),
        field: "a/b",
        source,
    })?;
    let structure = structure(path, raw.structure, raw.zero_structure)?;
    if let StructureSource::Explicit(s) = &structure {
        s.validate_for(system.n(), system.m())
            .map_err(|source| LoadError::Invalid {
                path: path.to_path_buf(),
                field: "structure",
                source,
            })?;
    }
    Ok(SystemFile {
        name: raw.name,
        provenance: raw.provenance,
        system,
        structure,
        baseline: raw.baseline,
        reference: raw.reference,
    })
}

pub fn load_system(path: &Path) -> Result<SystemFile, LoadError> {
    parse_system(path, &read(path)?)
}

/// Reads a structure-only file (`structure` records or `zero_structure`).
pub fn load_structure(path: &Path) -> Result<StructureSource, LoadError> {
    let raw: RawSpecFile = parse(path, &read(path)?)?;
    structure(path, raw.structure, raw.zero_structure)
}

/// Reads `coords = [...]`, the free real coordinates of a parameter matrix.
pub fn load_coords(path: &Path) -> Result<Vec<f64>, LoadError> {
    let raw: RawCoordsFile = parse(path, &read(path)?)?;
    Ok(raw.coords)
}

/// Reads `f = [[...], ...]`, a feedback matrix.
pub fn load_feedback(path: &Path) -> Result<RMat, LoadError> {
    let raw: RawFeedbackFile = parse(path, &read(path)?)?;
    matrix(path, "f", &raw.f)
}

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{x:e}")
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Entry {
    Field(String, String),
    Real(String, RMat),
    Complex(String, CMat),
}

/// Line-oriented report: `key: value` fields followed by matrix blocks.
///
/// ```text
/// report: eigenplace/1
/// command: place
/// residual: 3.1e-16
/// matrix F 1 2
/// -2e0 -3e0
/// end
/// cmatrix X 2 2
/// 1e0,0e0 0e0,0e0
/// 0e0,0e0 1e0,0e0
/// end
/// ```
///
/// Numbers use the shortest round-trip exponent form; complex entries are
/// written `re,im`. Fields keep insertion order and matrices follow all fields.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    entries: Vec<Entry>,
}

pub const REPORT_HEADER: &str = "report: eigenplace/1";

impl Report {
    pub fn new(command: &str) -> Self {
        let mut r = Self {
            entries: Vec::new(),
        };
        r.field("command", command);
        r
    }

    pub fn field(&mut self, key: &str, value: impl Display) -> &mut Self {
        self.entries
            .push(Entry::Field(key.into(), value.to_string()));
        self
    }

    pub fn num(&mut self, key: &str, value: f64) -> &mut Self {
        self.field(key, fmt_num(value))
    }

    pub fn nums(&mut self, key: &str, values: &[f64]) -> &mut Self {
        let s: Vec<String> = values.iter().map(|&v| fmt_num(v)).collect();
        self.field(key, s.join(" "))
    }

    pub fn matrix(&mut self, name: &str, m: &RMat) -> &mut Self {
        self.entries.push(Entry::Real(name.into(), m.clone()));
        self
    }

    pub fn cmatrix(&mut self, name: &str, m: &CMat) -> &mut Self {
        self.entries.push(Entry::Complex(name.into(), m.clone()));
        self
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(REPORT_HEADER);
        out.push('\n');
        for e in &self.entries {
            if let Entry::Field(k, v) = e {
                out.push_str(&format!("{k}: {v}\n"));
            }
        }
        for e in &self.entries {
            match e {
                Entry::Field(..) => {}
                Entry::Real(name, m) => {
                    out.push_str(&format!("matrix {name} {} {}\n", m.nrows(), m.ncols()));
                    for row in m.row_iter() {
                        let cells: Vec<String> = row.iter().map(|&x| fmt_num(x)).collect();
                        out.push_str(&cells.join(" "));
                        out.push('\n');
                    }
                    out.push_str("end\n");
                }
                Entry::Complex(name, m) => {
                    out.push_str(&format!("cmatrix {name} {} {}\n", m.nrows(), m.ncols()));
                    for row in m.row_iter() {
                        let cells: Vec<String> = row
                            .iter()
                            .map(|z| format!("{},{}", fmt_num(z.re), fmt_num(z.im)))
                            .collect();
                        out.push_str(&cells.join(" "));
                        out.push('\n');
                    }
                    out.push_str("end\n");
                }
            }
        }
        out
    }
}

/// Parsed view of a rendered report.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedReport {
    pub fields: BTreeMap<String, String>,
    pub matrices: BTreeMap<String, RMat>,
}

impl ParsedReport {
    pub fn num(&self, key: &str) -> Option<f64> {
        self.fields.get(key).and_then(|v| v.parse().ok())
    }
}

/// Reads back the fields and real matrices of a report. Complex blocks are skipped.
pub fn parse_report(text: &str) -> Result<ParsedReport, String> {
    let mut lines = text.lines();
    if lines.next() != Some(REPORT_HEADER) {
        return Err("missing report header".into());
    }
    let mut out = ParsedReport::default();
    while let Some(line) = lines.next() {
        let head: Vec<&str> = line.split_whitespace().collect();
        match head.first().copied() {
            Some(kind @ ("matrix" | "cmatrix")) if head.len() == 4 => {
                let (r, c): (usize, usize) = (
                    head[2]
                        .parse()
                        .map_err(|_| format!("bad row count in {line:?}"))?,
                    head[3]
                        .parse()
                        .map_err(|_| format!("bad column count in {line:?}"))?,
                );
                let mut vals = Vec::with_capacity(r * c);
                for _ in 0..r {
                    let row = lines.next().ok_or("truncated matrix")?;
                    if kind == "matrix" {
                        for cell in row.split_whitespace() {
                            vals.push(cell.parse::<f64>().map_err(|e| format!("{cell:?}: {e}"))?);
                        }
                    }
                }
                if lines.next() != Some("end") {
                    return Err(format!("matrix {} not terminated", head[1]));
                }
                if kind == "matrix" {
                    if vals.len() != r * c {
                        return Err(format!(
                            "matrix {} has {} entries, expected {}",
                            head[1],
                            vals.len(),
                            r * c
                        ));
                    }
                    out.matrices
                        .insert(head[1].to_string(), RMat::from_row_slice(r, c, &vals));
                }
            }
            _ => {
                let (k, v) = line
                    .split_once(": ")
                    .ok_or_else(|| format!("malformed line {line:?}"))?;
                out.fields.insert(k.to_string(), v.to_string());
            }
        }
    }
    Ok(out)
}
