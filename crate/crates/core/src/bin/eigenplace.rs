use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use eigenplace::bench::{self, BenchSettings, CorpusEntry};
use eigenplace::io::{self, LoadError, Report, StructureSource, SystemFile};
use eigenplace::metrics::Metrics;
use eigenplace::optimize::{minimize, Method, ObjectiveSpec, OptOptions};
use eigenplace::placement::{
    place_random, residual_bound, ParameterMatrix, PlacementResult, Placer,
};
use eigenplace::{check_admissible, EigStructure, Error, ToleranceConfig};

/// Redraws of K allowed before `place` gives up on a singular V_K.
const PLACE_MAX_DRAWS: usize = 20;

#[derive(Parser)]
#[command(
    name = "eigenplace",
    version,
    about = "Eigenstructure assignment by state feedback"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Report controllability indices, invariant degrees and admissibility.
    Check(CheckArgs),
    /// Place the requested structure with one parameter matrix.
    Place(PlaceArgs),
    /// Search the parameter space for a robust or low-gain feedback.
    Optimize(OptimizeArgs),
    /// Run the optimizer over a corpus and print a results table.
    Bench(BenchArgs),
    /// Recover the parameter coordinates that reproduce a given feedback.
    Recover(RecoverArgs),
}

#[derive(Args)]
struct Common {
    /// System file (TOML).
    #[arg(long)]
    system: PathBuf,
    /// Structure file overriding the structure in the system file.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Relative residual tolerance.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct PlaceArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// File with `coords = [...]`; replaces the random draw.
    #[arg(long)]
    k_file: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct SearchArgs {
    #[arg(long, value_enum, default_value_t = MethodArg::Condition)]
    method: MethodArg,
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct OptimizeArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    search: SearchArgs,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
}

#[derive(Args)]
struct BenchArgs {
    /// Directory of system files; the built-in systems are used when absent.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[command(flatten)]
    search: SearchArgs,
    /// Weight; repeat to add one row per value.
    #[arg(long, default_values_t = [1.0])]
    alpha: Vec<f64>,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, value_enum, default_value_t = Format::Md)]
    format: Format,
    /// Add a wall-clock column.
    #[arg(long)]
    timing: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RecoverArgs {
    #[command(flatten)]
    common: Common,
    /// File with `f = [[...], ...]`.
    #[arg(long)]
    feedback: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Condition,
    Normality,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Condition => Method::Condition,
            MethodArg::Normality => Method::Normality,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Md,
    Csv,
}

/// Failure carrying its process exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Inadmissible { .. } | Error::TooManyBlocks { .. } => 2,
            Error::NotReachable { .. } | Error::NotReachableAt { .. } => 3,
            Error::SingularV { .. } | Error::Singular { .. } | Error::NoInitialPoint { .. } => 4,
            _ => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<LoadError> for Failure {
    fn from(e: LoadError) -> Self {
        let code = e.model_error().map_or(1, |m| Failure::from(m.clone()).code);
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

fn tolerance(tol: f64) -> Result<ToleranceConfig, Failure> {
    let t = ToleranceConfig {
        residual_tol: tol,
        ..ToleranceConfig::default()
    };
    t.validate()?;
    Ok(t)
}

struct Loaded {
    file: SystemFile,
    spec: EigStructure,
    tol: ToleranceConfig,
}

fn load(common: &Common) -> Result<Loaded, Failure> {
    let tol = tolerance(common.tol)?;
    let file = io::load_system(&common.system)?;
    let source = match &common.spec {
        Some(p) => io::load_structure(p)?,
        None => file.structure.clone(),
    };
    if source == StructureSource::Absent {
        return Err(usage(
            "no eigenstructure: add `structure` to the system file or pass --spec",
        ));
    }
    let spec = source.resolve(&file.system, &tol)?;
    Ok(Loaded { file, spec, tol })
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| usage(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn spectrum_field(spec: &EigStructure) -> String {
    spec.groups()
        .iter()
        .map(|g| {
            let blocks: Vec<String> = g.blocks.iter().map(usize::to_string).collect();
            format!(
                "{},{}:[{}]",
                io::fmt_num(g.value.re),
                io::fmt_num(g.value.im),
                blocks.join(",")
            )
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn join_usize(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
}

fn check(args: &CheckArgs) -> Result<u8, Failure> {
    let l = load(&args.common)?;
    let mut r = Report::new("check");
    r.field("system", &l.file.name)
        .field("structure", spectrum_field(&l.spec));
    let code = match check_admissible(&l.spec, &l.file.system, &l.tol) {
        Ok(a) => {
            r.field(
                "controllability_indices",
                join_usize(&a.controllability_indices),
            )
            .field("invariant_degrees", join_usize(&a.invariant_degrees))
            .field(
                "verdict",
                if a.satisfied {
                    "admissible"
                } else {
                    "inadmissible"
                },
            );
            if let Some(k) = a.failing_index {
                r.field("failing_index", k);
            }
            if a.satisfied {
                0
            } else {
                2
            }
        }
        Err(e @ Error::TooManyBlocks { .. }) => {
            r.field("verdict", "inadmissible").field("reason", &e);
            2
        }
        Err(e) => return Err(e.into()),
    };
    emit(&r.render(), args.common.out.as_deref())?;
    Ok(code)
}

fn require_admissible(l: &Loaded) -> Result<(), Failure> {
    let a = check_admissible(&l.spec, &l.file.system, &l.tol)?;
    if a.satisfied {
        Ok(())
    } else {
        Err(Error::Inadmissible {
            degrees: a.invariant_degrees,
            indices: a.controllability_indices,
        }
        .into())
    }
}

/// Shared placement section; returns whether the residual check passed.
fn placement_section(r: &mut Report, l: &Loaded, p: &PlacementResult) -> Result<bool, Failure> {
    let metrics = Metrics::of(&l.file.system, p, &l.tol)?;
    let bound = residual_bound(&l.file.system, &p.f, &l.tol);
    let ok = p.residual <= bound;
    r.field("status", if ok { "ok" } else { "residual-failed" })
        .num("residual", p.residual)
        .num("residual_bound", bound)
        .num("kappa_fro", metrics.kappa_fro_x)
        .num("kappa_2", metrics.kappa_2_v)
        .num("kappa_fro_v", metrics.kappa_fro_v)
        .num("delta_fro", metrics.delta_fro)
        .num("gain_fro", metrics.gain_fro)
        .matrix("F", &p.f)
        .matrix("V", &p.v)
        .cmatrix("X", &p.x);
    Ok(ok)
}

fn place(args: &PlaceArgs) -> Result<u8, Failure> {
    let l = load(&args.common)?;
    require_admissible(&l)?;
    let placer = Placer::new(&l.file.system, &l.spec, &l.tol)?;
    let (k, p) = match &args.k_file {
        Some(path) => {
            let coords = io::load_coords(path)?;
            let k = ParameterMatrix::from_coords(&l.spec, l.file.system.m(), &coords)?;
            let p = placer.place(&k)?;
            (k, p)
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
            place_random(&placer, &mut rng, PLACE_MAX_DRAWS)?
        }
    };
    let mut r = Report::new("place");
    r.field("system", &l.file.name)
        .field("structure", spectrum_field(&l.spec));
    match &args.k_file {
        Some(p) => r.field("k_source", p.display()),
        None => r.field("k_source", format!("seed {}", args.seed)),
    };
    r.nums("k_coords", &k.to_coords(&l.spec));
    let ok = placement_section(&mut r, &l, &p)?;
    emit(&r.render(), args.common.out.as_deref())?;
    Ok(if ok { 0 } else { 5 })
}

fn options(s: &SearchArgs) -> OptOptions {
    OptOptions {
        restarts: s.restarts,
        max_iters: s.max_iters,
        seed: s.seed,
        ..OptOptions::default()
    }
}

fn optimize(args: &OptimizeArgs) -> Result<u8, Failure> {
    let l = load(&args.common)?;
    require_admissible(&l)?;
    let objective = ObjectiveSpec::new(args.search.method.into(), args.alpha)?;
    let opts = options(&args.search);
    let res = minimize(&l.file.system, &l.spec, objective, &opts, &l.tol)?;
    let mut r = Report::new("optimize");
    r.field("system", &l.file.name)
        .field("structure", spectrum_field(&l.spec))
        .field("method", objective.method)
        .num("alpha", objective.alpha)
        .field("seed", opts.seed)
        .field("restarts", opts.restarts)
        .field("max_iters", opts.max_iters)
        .num("best_value", res.best_value)
        .field("best_restart", res.best_restart)
        .nums("k_coords", &res.best_coords);
    for (i, t) in res.restarts.iter().enumerate() {
        r.field(
            &format!("restart.{i}"),
            format!(
                "value {} iterations {} stop {} draws {}",
                io::fmt_num(t.final_value()),
                t.iterations,
                t.stop,
                t.initial_draws
            ),
        );
    }
    let ok = placement_section(&mut r, &l, &res.placement)?;
    emit(&r.render(), args.common.out.as_deref())?;
    Ok(if ok { 0 } else { 5 })
}

fn run_bench(args: &BenchArgs) -> Result<u8, Failure> {
    let tol = tolerance(args.tol)?;
    let objectives = args
        .alpha
        .iter()
        .map(|&a| ObjectiveSpec::new(args.search.method.into(), a))
        .collect::<Result<Vec<_>, _>>()?;
    let settings = BenchSettings {
        objectives,
        opts: options(&args.search),
        tol,
    };
    settings.opts.validate()?;
    let entries = match &args.corpus {
        Some(dir) => {
            bench::load_corpus(dir).map_err(|e| usage(format!("{}: {e}", dir.display())))?
        }
        None => bench::builtin_corpus()
            .into_iter()
            .map(CorpusEntry::Loaded)
            .collect(),
    };
    let rows = bench::run(&entries, &settings);
    let text = match args.format {
        Format::Md => bench::to_markdown(&rows, args.timing),
        Format::Csv => bench::to_csv(&rows, args.timing),
    };
    emit(&text, args.out.as_deref())?;
    Ok(0)
}

fn recover(args: &RecoverArgs) -> Result<u8, Failure> {
    let l = load(&args.common)?;
    require_admissible(&l)?;
    let f = io::load_feedback(&args.feedback)?;
    let sys = &l.file.system;
    if f.nrows() != sys.m() || f.ncols() != sys.n() {
        return Err(Error::Dimension(format!(
            "F is {}x{}, expected {}x{}",
            f.nrows(),
            f.ncols(),
            sys.m(),
            sys.n()
        ))
        .into());
    }
    let placer = Placer::new(sys, &l.spec, &l.tol)?;
    let chains = placer.chains_from_feedback(&f)?;
    let k = placer.recover(&chains)?;
    let p = placer.place(&k)?;
    let mut r = Report::new("recover");
    r.field("system", &l.file.name)
        .field("structure", spectrum_field(&l.spec))
        .nums("k_coords", &k.to_coords(&l.spec))
        .num("feedback_mismatch", (&p.f - &f).norm() / f.norm().max(1.0));
    let ok = placement_section(&mut r, &l, &p)?;
    emit(&r.render(), args.common.out.as_deref())?;
    Ok(if ok { 0 } else { 5 })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let outcome = match &cli.command {
        Command::Check(a) => check(a),
        Command::Place(a) => place(a),
        Command::Optimize(a) => optimize(a),
        Command::Bench(a) => run_bench(a),
        Command::Recover(a) => recover(a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
