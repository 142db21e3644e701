//! `sgf`: run, sweep and study sparse geometric factorization preconditioners.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::Serialize;
use thiserror::Error;

use sgf::bench::{
    csv_string, eig_error_study, run_problem, sweep, write_csv, BenchRecord, CsvRow, ModeKind, ProblemSpec, RunConfig,
};
use sgf::factor::{FactorStats, RankTrace, Scheme};
use sgf::problems::{write_coords, write_mtx};
use sgf::SgfError;

const MEMORY_NOTE: &str = "peak_blocks_bytes is the peak total size of live factor blocks. \
It tracks the memory of the factorization but is not the resident size of the process.";

#[derive(Parser)]
#[command(
    name = "sgf",
    version,
    about = "Hierarchical approximate Cholesky preconditioners with polynomial compression"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Factorize and solve one problem; prints one CSV row.
    #[command(after_help = MEMORY_NOTE)]
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Write residual history, per-level statistics and ranks as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Run over a ladder of problem sizes; prints one CSV row per run.
    #[command(after_help = MEMORY_NOTE)]
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        /// Problem sizes (grid points per axis, or refinement for elasticity).
        #[arg(long, value_delimiter = ',')]
        ladder: Vec<usize>,
        /// Write the growth ratio and log-log slopes as JSON.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Backward errors of the compressed operator on the extreme Poisson eigenvectors.
    EigStudy {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Write a generated problem as a Matrix Market file plus vertex coordinates.
    GenProblem {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long)]
        out_matrix: PathBuf,
        #[arg(long)]
        out_coords: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Poisson,
    Darcy,
    Elasticity,
    Mtx,
}

#[derive(Args, Default)]
struct ProblemArgs {
    #[arg(long, value_enum)]
    problem: Option<Family>,
    /// `N` for a cube or `NX,NY,NZ`.
    #[arg(long)]
    dims: Option<String>,
    /// Elasticity mesh refinement.
    #[arg(long)]
    refinement: Option<usize>,
    #[arg(long)]
    contrast: Option<f64>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    field_seed: Option<u64>,
    /// Permeability field file instead of the synthetic field.
    #[arg(long)]
    field: Option<PathBuf>,
    /// Periodic tiling of the field, `TX,TY,TZ`.
    #[arg(long)]
    tile: Option<String>,
    /// Matrix Market input (with --problem mtx).
    #[arg(long)]
    matrix: Option<PathBuf>,
    /// Coordinates input (with --problem mtx).
    #[arg(long)]
    coords: Option<PathBuf>,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML or JSON file holding a run configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    problem: ProblemArgs,
    /// nest-all-all, nest-2-all, nest-2-2 or gen-all-all.
    #[arg(long)]
    scheme: Option<Scheme>,
    #[arg(long)]
    degree: Option<usize>,
    #[arg(long)]
    b: Option<usize>,
    #[arg(long)]
    skip_first_levels: Option<usize>,
    /// polynomial, lowrank-equiv or exact.
    #[arg(long)]
    mode: Option<ModeKind>,
    /// Written by polynomial runs, read by lowrank-equiv runs.
    #[arg(long)]
    rank_trace: Option<PathBuf>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    maxit: Option<usize>,
    /// Seed of the right-hand side.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; stdout when absent.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{stage}: {source}")]
    Stage { stage: &'static str, source: SgfError },
    #[error("solve: no convergence after {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::NotConverged { .. } => 3,
            CliError::Stage { stage: "config", source: SgfError::Io(_) } => 4,
            CliError::Stage { stage: "config", .. } => 2,
            CliError::Stage { source, .. } => match source {
                SgfError::Io(_) | SgfError::Csv(_) | SgfError::Parse(_) | SgfError::CountMismatch { .. } => 4,
                SgfError::Config(_)
                | SgfError::GridTooSmall(_)
                | SgfError::TraceMismatch(_)
                | SgfError::DimensionMismatch(_)
                | SgfError::NonPositiveField { .. }
                | SgfError::Serde(_) => 2,
                SgfError::NotSpd { .. }
                | SgfError::ShapeMismatch(_)
                | SgfError::NonFinite
                | SgfError::NonSymmetricPattern { .. }
                | SgfError::NotSymmetric(_)
                | SgfError::IndefiniteDetected(_) => 3,
            },
        }
    }
}

fn at(stage: &'static str) -> impl FnOnce(SgfError) -> CliError {
    move |source| CliError::Stage { stage, source }
}

fn parse_triple(flag: &str, s: &str) -> Result<[usize; 3], CliError> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Usage(format!("--{flag} {s:?}: {e}")))?;
    match parts[..] {
        [n] => Ok([n; 3]),
        [x, y, z] => Ok([x, y, z]),
        _ => Err(CliError::Usage(format!("--{flag} takes N or NX,NY,NZ, got {s:?}"))),
    }
}

fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| at("config")(e.into()))?;
    let is_toml = path.extension().is_some_and(|e| e == "toml");
    if is_toml {
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    } else {
        RunConfig::from_json(&text).map_err(at("config"))
    }
}

impl ProblemArgs {
    fn is_empty(&self) -> bool {
        self.problem.is_none()
            && self.dims.is_none()
            && self.refinement.is_none()
            && self.contrast.is_none()
            && self.layers.is_none()
            && self.field_seed.is_none()
            && self.field.is_none()
            && self.tile.is_none()
            && self.matrix.is_none()
            && self.coords.is_none()
    }

    /// Applies the flags to `base`, or to a fresh spec of the `--problem` family.
    /// Without `sized` the size comes from elsewhere (a sweep ladder).
    fn resolve(&self, base: Option<ProblemSpec>, sized: bool) -> Result<ProblemSpec, CliError> {
        let mut spec = match (self.problem, base) {
            (Some(Family::Poisson), _) => ProblemSpec::Poisson { dims: [0; 3] },
            (Some(Family::Darcy), _) => ProblemSpec::darcy(0, 1e5),
            (Some(Family::Elasticity), _) => ProblemSpec::elasticity(0),
            (Some(Family::Mtx), _) => ProblemSpec::Mtx { matrix: PathBuf::new(), coords: PathBuf::new() },
            (None, Some(b)) => b,
            (None, None) => return Err(CliError::Usage("no problem given (use --problem or --config)".into())),
        };
        let family = spec.family();
        let reject = |flag: &str| CliError::Usage(format!("--{flag} does not apply to the {family} problem"));
        let dims = self.dims.as_deref().map(|d| parse_triple("dims", d)).transpose()?;
        let tile = self.tile.as_deref().map(|t| parse_triple("tile", t)).transpose()?;
        match &mut spec {
            ProblemSpec::Poisson { dims: d } => {
                if let Some(v) = dims {
                    *d = v;
                }
                if self.refinement.is_some() {
                    return Err(reject("refinement"));
                }
                if self.contrast.is_some() || self.layers.is_some() || self.field_seed.is_some() {
                    return Err(reject("contrast/layers/field-seed"));
                }
            }
            ProblemSpec::Darcy { dims: d, contrast, layers, field_seed, field, tile: t } => {
                if let Some(v) = dims {
                    *d = v;
                }
                if self.refinement.is_some() {
                    return Err(reject("refinement"));
                }
                if let Some(v) = self.contrast {
                    *contrast = v;
                }
                if let Some(v) = self.layers {
                    *layers = v;
                }
                if let Some(v) = self.field_seed {
                    *field_seed = v;
                }
                if let Some(v) = &self.field {
                    *field = Some(v.clone());
                }
                if tile.is_some() {
                    *t = tile;
                }
            }
            ProblemSpec::Elasticity { refinement, .. } => {
                if dims.is_some() {
                    return Err(reject("dims"));
                }
                if let Some(v) = self.refinement {
                    *refinement = v;
                }
            }
            ProblemSpec::Mtx { matrix, coords } => {
                if let Some(v) = &self.matrix {
                    *matrix = v.clone();
                }
                if let Some(v) = &self.coords {
                    *coords = v.clone();
                }
            }
        }
        if !matches!(spec, ProblemSpec::Darcy { .. })
            && (self.field.is_some() || self.tile.is_some() || self.contrast.is_some() || self.layers.is_some())
        {
            return Err(reject("contrast/layers/field/tile"));
        }
        if !matches!(spec, ProblemSpec::Mtx { .. }) && (self.matrix.is_some() || self.coords.is_some()) {
            return Err(reject("matrix/coords"));
        }
        match &spec {
            ProblemSpec::Poisson { dims } | ProblemSpec::Darcy { dims, field: None, .. }
                if sized && dims.contains(&0) =>
            {
                Err(CliError::Usage(format!("the {family} problem needs --dims")))
            }
            ProblemSpec::Elasticity { refinement: 0, .. } if sized => {
                Err(CliError::Usage("the elasticity problem needs --refinement".into()))
            }
            ProblemSpec::Mtx { matrix, coords } if matrix.as_os_str().is_empty() || coords.as_os_str().is_empty() => {
                Err(CliError::Usage("the mtx problem needs --matrix and --coords".into()))
            }
            _ => Ok(spec),
        }
    }
}

impl ConfigArgs {
    /// Merges the config file (if any) with the flags.
    fn resolve(&self, sized: bool) -> Result<RunConfig, CliError> {
        let base = self.config.as_deref().map(load_config).transpose()?;
        let problem = if self.problem.is_empty() {
            match &base {
                Some(b) => b.problem.clone(),
                None => return Err(CliError::Usage("no problem given (use --problem or --config)".into())),
            }
        } else {
            self.problem.resolve(base.as_ref().map(|b| b.problem.clone()), sized)?
        };
        let mut c = base.unwrap_or_else(|| RunConfig::new(problem.clone(), Scheme::NestAllAll, 0));
        c.problem = problem;
        if let Some(v) = self.scheme {
            c.scheme = v;
        }
        if let Some(v) = self.degree {
            c.degree = v;
        }
        if self.b.is_some() {
            c.b = self.b;
        }
        if self.skip_first_levels.is_some() {
            c.skip_first_levels = self.skip_first_levels;
        }
        if let Some(v) = self.mode {
            c.mode = v;
        }
        if self.rank_trace.is_some() {
            c.rank_trace = self.rank_trace.clone();
        }
        if let Some(v) = self.tol {
            c.tol = v;
        }
        if let Some(v) = self.maxit {
            c.maxit = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if self.output.is_some() {
            c.output = self.output.clone();
        }
        Ok(c)
    }
}

fn validate(c: &RunConfig) -> Result<(), CliError> {
    c.validate().map_err(|e| CliError::Usage(e.to_string()))
}

fn emit(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| at("output")(e.into())),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| at("output")(e.into())),
    }
}

fn emit_rows(path: Option<&Path>, rows: &[CsvRow]) -> Result<(), CliError> {
    match path {
        Some(p) => write_csv(p, rows).map_err(at("output")),
        None => emit(None, &csv_string(rows).map_err(at("output"))?),
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(v).map(|s| s + "\n").map_err(|e| at("output")(e.into()))
}

#[derive(Serialize)]
struct RunDetail<'a> {
    config: &'a RunConfig,
    record: &'a BenchRecord,
    residual_history: &'a [f64],
    factorization: &'a FactorStats,
    ranks: &'a RankTrace,
}

fn trace_path(c: &RunConfig) -> PathBuf {
    match (&c.rank_trace, &c.output) {
        (Some(p), _) => p.clone(),
        (None, Some(out)) => out.with_extension("ranks.json"),
        (None, None) => PathBuf::from("rank_trace.json"),
    }
}

fn cmd_run(args: &ConfigArgs, json: Option<&Path>) -> Result<(), CliError> {
    let c = args.resolve(true)?;
    validate(&c)?;
    let trace = match (c.mode, &c.rank_trace) {
        (ModeKind::LowrankEquiv, Some(p)) => Some(RankTrace::read(p).map_err(at("rank trace"))?),
        _ => None,
    };
    let problem = c.problem.build().map_err(at("problem"))?;
    let out = run_problem(&problem, &c, trace).map_err(at("factorize/solve"))?;
    emit_rows(c.output.as_deref(), &[CsvRow::ok(&out.record, None)])?;
    if c.mode == ModeKind::Polynomial {
        let path = trace_path(&c);
        out.trace.write(&path).map_err(at("rank trace"))?;
        info!("rank trace written to {}", path.display());
    }
    if let Some(path) = json {
        let detail = RunDetail {
            config: &c,
            record: &out.record,
            residual_history: &out.report.residual_history,
            factorization: out.precond.stats(),
            ranks: &out.trace,
        };
        emit(Some(path), &to_json(&detail)?)?;
    }
    if !out.record.converged {
        return Err(CliError::NotConverged { iterations: out.record.it_c, residual: out.record.final_rel_residual });
    }
    Ok(())
}

fn cmd_sweep(args: &ConfigArgs, ladder: &[usize], summary: Option<&Path>) -> Result<(), CliError> {
    let c = args.resolve(false)?;
    // traces are produced per size inside the sweep
    validate(&RunConfig { mode: ModeKind::Polynomial, ..c.clone() })?;
    let result = sweep(&c, ladder);
    emit_rows(c.output.as_deref(), &result.rows)?;
    let text = to_json(&result.summary)?;
    match summary {
        Some(p) => emit(Some(p), &text)?,
        None => eprint!("{text}"),
    }
    Ok(())
}

fn cmd_eig_study(args: &ConfigArgs) -> Result<(), CliError> {
    let c = args.resolve(true)?;
    validate(&RunConfig { mode: ModeKind::Polynomial, ..c.clone() })?;
    let report = eig_error_study(&c).map_err(at("eig-study"))?;
    emit(c.output.as_deref(), &to_json(&report)?)
}

fn cmd_gen_problem(config: Option<&Path>, args: &ProblemArgs, matrix: &Path, coords: &Path) -> Result<(), CliError> {
    let base = config.map(load_config).transpose()?.map(|c| c.problem);
    let spec = if args.is_empty() {
        base.ok_or_else(|| CliError::Usage("no problem given (use --problem or --config)".into()))?
    } else {
        args.resolve(base, true)?
    };
    let problem = spec.build().map_err(at("problem"))?;
    write_mtx(matrix, &problem.matrix).map_err(at("output"))?;
    write_coords(coords, &problem.coords).map_err(at("output"))?;
    info!("{}: n = {}, nnz = {}", problem.label, problem.dim(), problem.matrix.nnz());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config, json } => cmd_run(config, json.as_deref()),
        Command::Sweep { config, ladder, summary } => cmd_sweep(config, ladder, summary.as_deref()),
        Command::EigStudy { config } => cmd_eig_study(config),
        Command::GenProblem { config, problem, out_matrix, out_coords } => {
            cmd_gen_problem(config.as_deref(), problem, out_matrix, out_coords)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sgf: {e}");
            ExitCode::from(e.code())
        }
    }
}
