//! Benchmark harness: runs the optimizer over a corpus and tabulates results.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use crate::eigstructure::{check_admissible, EigStructure, EigenGroup};
use crate::error::Error;
use crate::io::{
    fmt_num, load_system, zero_structure, Figures, LoadError, StructureSource, SystemFile,
};
use crate::linalg::ToleranceConfig;
use crate::optimize::{minimize, ObjectiveSpec, OptOptions};
use crate::placement::residual_bound;
use crate::system::System;
use crate::Complex64;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchSettings {
    pub objectives: Vec<ObjectiveSpec>,
    pub opts: OptOptions,
    pub tol: ToleranceConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RowStatus {
    Ok,
    Failed(String),
}

impl RowStatus {
    pub fn is_ok(&self) -> bool {
        matches!(self, RowStatus::Ok)
    }

    pub fn label(&self) -> String {
        match self {
            RowStatus::Ok => "ok".into(),
            RowStatus::Failed(msg) => {
                // table cells hold one line; pipes would split markdown columns
                let flat: Vec<&str> = msg
                    .lines()
                    .map(str::trim)
                    .filter(|l| !l.is_empty())
                    .collect();
                format!("failed: {}", flat.join(" ").replace('|', "/"))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub id: String,
    pub method: String,
    pub status: RowStatus,
    pub kappa_fro: Option<f64>,
    pub gain_fro: Option<f64>,
    pub delta_fro: Option<f64>,
    pub residual: Option<f64>,
    pub runtime_s: f64,
    pub baseline: Option<Figures>,
    pub reference: Option<Figures>,
}

/// One corpus example: either a parsed file or a load failure kept for reporting.
#[derive(Debug)]
pub enum CorpusEntry {
    Loaded(SystemFile),
    Broken { id: String, error: LoadError },
}

impl CorpusEntry {
    pub fn id(&self) -> &str {
        match self {
            CorpusEntry::Loaded(f) => &f.name,
            CorpusEntry::Broken { id, .. } => id,
        }
    }
}

/// The two synthetic systems the harness can always run.
pub fn builtin_corpus() -> Vec<SystemFile> {
    let scalar = System::from_rows(1, 1, &[0.0], &[1.0]).expect("valid");
    let di = System::from_rows(2, 1, &[0.0, 1.0, 0.0, 0.0], &[0.0, 1.0]).expect("valid");
    let spec = |vals: &[f64]| {
        EigStructure::new(
            vals.iter()
                .map(|&v| EigenGroup::simple(Complex64::new(v, 0.0)))
                .collect(),
        )
        .expect("valid")
    };
    vec![
        SystemFile {
            name: "builtin-scalar".into(),
            provenance: Some("synthetic".into()),
            system: scalar,
            structure: StructureSource::Explicit(spec(&[-1.0])),
            baseline: None,
            reference: None,
        },
        SystemFile {
            name: "builtin-double-integrator".into(),
            provenance: Some("synthetic".into()),
            system: di,
            structure: StructureSource::Explicit(spec(&[-1.0, -2.0])),
            baseline: None,
            reference: None,
        },
    ]
}

/// Loads every `*.toml` file in `dir` (not recursive), in file-name order.
pub fn load_corpus(dir: &Path) -> std::io::Result<Vec<CorpusEntry>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    paths.sort();
    Ok(paths
        .into_iter()
        .map(|p| match load_system(&p) {
            Ok(f) => CorpusEntry::Loaded(f),
            Err(error) => CorpusEntry::Broken {
                id: p
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default(),
                error,
            },
        })
        .collect())
}

pub fn method_label(o: &ObjectiveSpec) -> String {
    format!("{}(alpha={})", o.method, o.alpha)
}

fn failed(
    id: &str,
    method: String,
    msg: String,
    file: Option<&SystemFile>,
    runtime_s: f64,
) -> BenchRow {
    BenchRow {
        id: id.to_string(),
        method,
        status: RowStatus::Failed(msg),
        kappa_fro: None,
        gain_fro: None,
        delta_fro: None,
        residual: None,
        runtime_s,
        baseline: file.and_then(|f| f.baseline.clone()),
        reference: file.and_then(|f| f.reference.clone()),
    }
}

/// Entries without an explicit structure get all eigenvalues at zero with
/// blocks sized by the controllability indices.
fn bench_structure(file: &SystemFile, tol: &ToleranceConfig) -> Result<EigStructure, Error> {
    match &file.structure {
        StructureSource::Explicit(s) => Ok(s.clone()),
        _ => zero_structure(&file.system, tol),
    }
}

fn run_one(file: &SystemFile, objective: &ObjectiveSpec, settings: &BenchSettings) -> BenchRow {
    let start = Instant::now();
    let method = method_label(objective);
    let tol = &settings.tol;
    let outcome = (|| {
        let spec = bench_structure(file, tol)?;
        let report = check_admissible(&spec, &file.system, tol)?;
        if !report.satisfied {
            return Err(Error::Inadmissible {
                degrees: report.invariant_degrees,
                indices: report.controllability_indices,
            });
        }
        minimize(&file.system, &spec, *objective, &settings.opts, tol)
    })();
    let runtime_s = start.elapsed().as_secs_f64();
    match outcome {
        Err(e) => failed(&file.name, method, e.to_string(), Some(file), runtime_s),
        Ok(res) => {
            let p = &res.placement;
            let ok = p.residual <= residual_bound(&file.system, &p.f, tol);
            BenchRow {
                id: file.name.clone(),
                method,
                status: if ok {
                    RowStatus::Ok
                } else {
                    RowStatus::Failed("residual above tolerance".into())
                },
                kappa_fro: Some(res.metrics.kappa_fro_x),
                gain_fro: Some(res.metrics.gain_fro),
                delta_fro: Some(res.metrics.delta_fro),
                residual: Some(p.residual),
                runtime_s,
                baseline: file.baseline.clone(),
                reference: file.reference.clone(),
            }
        }
    }
}

/// One row per entry and objective, sorted by example id then method label.
pub fn run(entries: &[CorpusEntry], settings: &BenchSettings) -> Vec<BenchRow> {
    let jobs: Vec<(&CorpusEntry, &ObjectiveSpec)> = entries
        .iter()
        .flat_map(|e| settings.objectives.iter().map(move |o| (e, o)))
        .collect();
    let mut rows: Vec<BenchRow> = jobs
        .into_par_iter()
        .map(|(entry, objective)| match entry {
            CorpusEntry::Loaded(f) => run_one(f, objective, settings),
            CorpusEntry::Broken { id, error } => {
                failed(id, method_label(objective), error.to_string(), None, 0.0)
            }
        })
        .collect();
    rows.sort_by(|a, b| a.id.cmp(&b.id).then_with(|| a.method.cmp(&b.method)));
    rows
}

/// Rounds to four significant figures and prints without trailing exponent noise.
pub fn sig4(x: f64) -> String {
    if !x.is_finite() {
        return fmt_num(x);
    }
    if x == 0.0 {
        return "0".into();
    }
    let rounded: f64 = format!("{x:.3e}").parse().expect("float");
    let exp = rounded.abs().log10().floor() as i32;
    if (-3..6).contains(&exp) {
        let decimals = (3 - exp).max(0) as usize;
        format!("{rounded:.decimals$}")
    } else {
        format!("{rounded:.3e}")
    }
}

const COLUMNS: [&str; 13] = [
    "id",
    "method",
    "status",
    "kappa_fro",
    "gain_fro",
    "delta_fro",
    "residual",
    "baseline_kappa_fro",
    "baseline_gain_fro",
    "baseline_delta_fro",
    "reference_kappa_fro",
    "reference_gain_fro",
    "reference_delta_fro",
];

fn cells(row: &BenchRow, num: fn(f64) -> String, empty: &str) -> Vec<String> {
    let opt = |v: Option<f64>| v.map_or_else(|| empty.to_string(), num);
    let fig =
        |f: &Option<Figures>, pick: fn(&Figures) -> Option<f64>| opt(f.as_ref().and_then(pick));
    vec![
        row.id.clone(),
        row.method.clone(),
        row.status.label(),
        opt(row.kappa_fro),
        opt(row.gain_fro),
        opt(row.delta_fro),
        opt(row.residual),
        fig(&row.baseline, |f| f.kappa_fro),
        fig(&row.baseline, |f| f.gain_fro),
        fig(&row.baseline, |f| f.delta_fro),
        fig(&row.reference, |f| f.kappa_fro),
        fig(&row.reference, |f| f.gain_fro),
        fig(&row.reference, |f| f.delta_fro),
    ]
}

/// Markdown table at four significant figures. Wall-clock time is only
/// included on request since it varies from run to run.
pub fn to_markdown(rows: &[BenchRow], timing: bool) -> String {
    let mut header: Vec<String> = COLUMNS.iter().map(|s| s.to_string()).collect();
    if timing {
        header.push("runtime_s".into());
    }
    let mut out = format!("| {} |\n", header.join(" | "));
    out.push_str(&format!("|{}\n", "---|".repeat(header.len())));
    for row in rows {
        let mut c = cells(row, sig4, "-");
        if timing {
            c.push(sig4(row.runtime_s));
        }
        let c: Vec<String> = c.into_iter().map(|s| s.replace('|', "/")).collect();
        out.push_str(&format!("| {} |\n", c.join(" | ")));
    }
    out
}

/// CSV at full round-trip precision.
pub fn to_csv(rows: &[BenchRow], timing: bool) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = COLUMNS.to_vec();
    if timing {
        header.push("runtime_s");
    }
    w.write_record(&header).expect("in-memory write");
    for row in rows {
        let mut c = cells(row, fmt_num, "");
        if timing {
            c.push(fmt_num(row.runtime_s));
        }
        w.write_record(&c).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}
