//! Benchmark harness: configured runs, dimension sweeps and the eigenvector error study.

use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SgfError};
use crate::factor::{factorize, CompressionMode, Degree, FactorOptions, Preconditioner, RankTrace, Scheme};
use crate::krylov::{pcg, InverseOf, SolveReport, DEFAULT_MAXIT};
use crate::problems::{
    darcy_tpfa, elasticity_hex_beam, poisson7, random_rhs, read_mtx, read_perm_field, synth_perm_field, tile_field,
    Face, Lame, ProblemInstance,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum ProblemSpec {
    /// Unit cube with `dims` interior vertices per axis.
    Poisson {
        dims: [usize; 3],
    },
    Darcy {
        dims: [usize; 3],
        #[serde(default = "default_contrast")]
        contrast: f64,
        #[serde(default = "default_layers")]
        layers: usize,
        #[serde(default)]
        field_seed: u64,
        /// Read the field from a file instead of synthesizing it.
        #[serde(default)]
        field: Option<PathBuf>,
        #[serde(default)]
        tile: Option<[usize; 3]>,
    },
    Elasticity {
        refinement: usize,
        #[serde(default = "default_lame_left")]
        left: Lame,
        #[serde(default = "default_lame_right")]
        right: Lame,
    },
    Mtx {
        matrix: PathBuf,
        coords: PathBuf,
    },
}

fn default_contrast() -> f64 {
    1e5
}

fn default_layers() -> usize {
    4
}

fn default_lame_left() -> Lame {
    Lame::new(1.0, 1.0)
}

fn default_lame_right() -> Lame {
    Lame::new(50.0, 50.0)
}

impl ProblemSpec {
    pub fn poisson(n: usize) -> Self {
        ProblemSpec::Poisson { dims: [n; 3] }
    }

    pub fn darcy(n: usize, contrast: f64) -> Self {
        ProblemSpec::Darcy { dims: [n; 3], contrast, layers: default_layers(), field_seed: 0, field: None, tile: None }
    }

    pub fn elasticity(refinement: usize) -> Self {
        ProblemSpec::Elasticity { refinement, left: default_lame_left(), right: default_lame_right() }
    }

    pub fn family(&self) -> &'static str {
        match self {
            ProblemSpec::Poisson { .. } => "poisson",
            ProblemSpec::Darcy { .. } => "darcy",
            ProblemSpec::Elasticity { .. } => "elasticity",
            ProblemSpec::Mtx { .. } => "mtx",
        }
    }

    /// Same problem family at ladder size `d`.
    pub fn with_size(&self, d: usize) -> Result<Self> {
        let mut s = self.clone();
        match &mut s {
            ProblemSpec::Poisson { dims } | ProblemSpec::Darcy { dims, .. } => *dims = [d; 3],
            ProblemSpec::Elasticity { refinement, .. } => *refinement = d,
            ProblemSpec::Mtx { .. } => return Err(SgfError::Config("matrix-file problems have no size ladder".into())),
        }
        Ok(s)
    }

    pub fn build(&self) -> Result<ProblemInstance> {
        match self {
            ProblemSpec::Poisson { dims } => {
                let [nx, ny, nz] = *dims;
                poisson7(nx, ny, nz, dims.map(|d| 1.0 / (d as f64 + 1.0)))
            }
            ProblemSpec::Darcy { dims, contrast, layers, field_seed, field, tile } => {
                let mut f = match field {
                    Some(path) => read_perm_field(path)?,
                    None => synth_perm_field(*dims, *layers, *contrast, *field_seed)?,
                };
                if let Some(reps) = tile {
                    f = tile_field(&f, *reps)?;
                }
                let spacing = f.dims.map(|d| 1.0 / d as f64);
                darcy_tpfa(&f, spacing, Face::XMin)
            }
            ProblemSpec::Elasticity { refinement, left, right } => elasticity_hex_beam(*refinement, *left, *right),
            ProblemSpec::Mtx { matrix, coords } => read_mtx(matrix, coords),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeKind {
    Polynomial,
    LowrankEquiv,
    Exact,
}

impl std::str::FromStr for ModeKind {
    type Err = SgfError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "polynomial" => Ok(ModeKind::Polynomial),
            "lowrank-equiv" => Ok(ModeKind::LowrankEquiv),
            "exact" => Ok(ModeKind::Exact),
            _ => Err(SgfError::Config(format!("unknown mode {s:?}"))),
        }
    }
}

impl std::fmt::Display for ModeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModeKind::Polynomial => "polynomial",
            ModeKind::LowrankEquiv => "lowrank-equiv",
            ModeKind::Exact => "exact",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub scheme: Scheme,
    #[serde(default)]
    pub degree: usize,
    #[serde(default)]
    pub b: Option<usize>,
    #[serde(default)]
    pub skip_first_levels: Option<usize>,
    #[serde(default = "default_mode")]
    pub mode: ModeKind,
    #[serde(default)]
    pub rank_trace: Option<PathBuf>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_maxit")]
    pub maxit: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn default_mode() -> ModeKind {
    ModeKind::Polynomial
}

fn default_tol() -> f64 {
    1e-10
}

fn default_maxit() -> usize {
    DEFAULT_MAXIT
}

impl RunConfig {
    pub fn new(problem: ProblemSpec, scheme: Scheme, degree: usize) -> Self {
        Self {
            problem,
            scheme,
            degree,
            b: None,
            skip_first_levels: None,
            mode: ModeKind::Polynomial,
            rank_trace: None,
            tol: default_tol(),
            maxit: default_maxit(),
            seed: 0,
            output: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        Degree::from_usize(self.degree)?;
        if let Some(b) = self.b {
            if b < 2 {
                return Err(SgfError::Config(format!("b must be at least 2, got {b}")));
            }
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(SgfError::Config(format!("tol must lie in (0, 1), got {}", self.tol)));
        }
        if self.maxit == 0 {
            return Err(SgfError::Config("maxit must be positive".into()));
        }
        if self.mode == ModeKind::LowrankEquiv && self.rank_trace.is_none() {
            return Err(SgfError::Config("lowrank-equiv mode requires a rank trace from a polynomial run".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn factor_options(&self, trace: Option<RankTrace>) -> Result<FactorOptions> {
        let mode = match (self.mode, trace) {
            (ModeKind::Polynomial, _) => CompressionMode::Polynomial,
            (ModeKind::Exact, _) => CompressionMode::Exact,
            (ModeKind::LowrankEquiv, Some(t)) => CompressionMode::LowRankEquivalent(t),
            (ModeKind::LowrankEquiv, None) => {
                return Err(SgfError::Config("lowrank-equiv mode requires a rank trace".into()))
            }
        };
        Ok(FactorOptions {
            b: self.b,
            skip_first_levels: self.skip_first_levels,
            mode,
            ..FactorOptions::new(self.scheme, Degree::from_usize(self.degree)?)
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub problem: String,
    pub n: usize,
    pub scheme: Scheme,
    pub degree: usize,
    pub mode: ModeKind,
    pub seed: u64,
    pub it_c: usize,
    pub converged: bool,
    pub final_rel_residual: f64,
    pub t_f: f64,
    pub t_s: f64,
    pub peak_blocks_bytes: usize,
    pub flops_factorize: u64,
    pub flops_apply: u64,
    pub max_node_size: usize,
    pub levels: usize,
}

/// One CSV line; numeric fields are empty when the run failed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub problem: String,
    pub size: Option<usize>,
    pub n: Option<usize>,
    pub scheme: Scheme,
    pub degree: usize,
    pub mode: ModeKind,
    pub seed: u64,
    pub it_c: Option<usize>,
    pub converged: Option<bool>,
    pub final_rel_residual: Option<f64>,
    pub t_f: Option<f64>,
    pub t_s: Option<f64>,
    pub peak_blocks_bytes: Option<usize>,
    pub flops_factorize: Option<u64>,
    pub flops_apply: Option<u64>,
    pub max_node_size: Option<usize>,
    pub levels: Option<usize>,
    pub status: String,
}

impl CsvRow {
    pub fn ok(r: &BenchRecord, size: Option<usize>) -> Self {
        Self {
            problem: r.problem.clone(),
            size,
            n: Some(r.n),
            scheme: r.scheme,
            degree: r.degree,
            mode: r.mode,
            seed: r.seed,
            it_c: Some(r.it_c),
            converged: Some(r.converged),
            final_rel_residual: Some(r.final_rel_residual),
            t_f: Some(r.t_f),
            t_s: Some(r.t_s),
            peak_blocks_bytes: Some(r.peak_blocks_bytes),
            flops_factorize: Some(r.flops_factorize),
            flops_apply: Some(r.flops_apply),
            max_node_size: Some(r.max_node_size),
            levels: Some(r.levels),
            status: "ok".into(),
        }
    }

    pub fn failed(config: &RunConfig, size: Option<usize>, err: &SgfError) -> Self {
        Self {
            problem: config.problem.family().into(),
            size,
            n: None,
            scheme: config.scheme,
            degree: config.degree,
            mode: config.mode,
            seed: config.seed,
            it_c: None,
            converged: None,
            final_rel_residual: None,
            t_f: None,
            t_s: None,
            peak_blocks_bytes: None,
            flops_factorize: None,
            flops_apply: None,
            max_node_size: None,
            levels: None,
            status: format!("failed: {err}"),
        }
    }
}

pub fn write_csv(path: impl AsRef<Path>, rows: &[CsvRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    write_rows(&mut w, rows)?;
    Ok(())
}

pub fn csv_string(rows: &[CsvRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    write_rows(&mut w, rows)?;
    let bytes = w.into_inner().map_err(|e| SgfError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn write_rows<W: std::io::Write>(w: &mut csv::Writer<W>, rows: &[CsvRow]) -> Result<()> {
    if rows.is_empty() {
        w.write_record(CSV_HEADER)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub const CSV_HEADER: [&str; 18] = [
    "problem",
    "size",
    "n",
    "scheme",
    "degree",
    "mode",
    "seed",
    "it_c",
    "converged",
    "final_rel_residual",
    "t_f",
    "t_s",
    "peak_blocks_bytes",
    "flops_factorize",
    "flops_apply",
    "max_node_size",
    "levels",
    "status",
];

/// Everything a run produces.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub record: BenchRecord,
    pub report: SolveReport,
    pub trace: RankTrace,
    pub solution: Vec<f64>,
    pub precond: Preconditioner,
}

/// Factorizes and solves an already built problem with the benchmark rhs.
pub fn run_problem(problem: &ProblemInstance, config: &RunConfig, trace: Option<RankTrace>) -> Result<RunOutcome> {
    let options = config.factor_options(trace)?;
    let t0 = Instant::now();
    let precond = factorize(problem, options)?;
    let t_f = t0.elapsed().as_secs_f64();
    let rhs = random_rhs(problem.dim(), config.seed);
    let (solution, report) = pcg(&problem.matrix, &rhs, &InverseOf(&precond), config.tol, config.maxit)?;
    let stats = precond.stats();
    let record = BenchRecord {
        problem: problem.label.clone(),
        n: problem.dim(),
        scheme: config.scheme,
        degree: config.degree,
        mode: config.mode,
        seed: config.seed,
        it_c: report.iterations,
        converged: report.converged,
        final_rel_residual: report.final_rel_residual,
        t_f,
        t_s: report.wall_time,
        peak_blocks_bytes: stats.peak_blocks_bytes,
        flops_factorize: stats.flops_factorize,
        flops_apply: precond.flops_apply(),
        max_node_size: stats.max_node_size,
        levels: stats.levels,
    };
    info!("{} n={} it_C={} t_F={:.3}s t_S={:.3}s", record.problem, record.n, record.it_c, t_f, record.t_s);
    Ok(RunOutcome { record, report, trace: precond.rank_trace().clone(), solution, precond })
}

/// Builds the problem, reads the rank trace if needed, and runs.
pub fn run(config: &RunConfig) -> Result<RunOutcome> {
    config.validate()?;
    let trace = match (&config.mode, &config.rank_trace) {
        (ModeKind::LowrankEquiv, Some(p)) => Some(RankTrace::read(p)?),
        _ => None,
    };
    let problem = config.problem.build()?;
    run_problem(&problem, config, trace)
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> =
        points.iter().filter(|(x, y)| *x > 0.0 && *y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SweepSummary {
    pub runs: usize,
    pub failures: usize,
    /// `it_C(last) / it_C(first)` over successful rows.
    pub it_ratio: Option<f64>,
    pub flops_factorize_slope: Option<f64>,
    pub flops_apply_slope: Option<f64>,
    pub peak_bytes_slope: Option<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct SweepResult {
    pub rows: Vec<CsvRow>,
    pub summary: SweepSummary,
}

pub fn summarize(rows: &[CsvRow]) -> SweepSummary {
    let ok: Vec<&CsvRow> = rows.iter().filter(|r| r.status == "ok").collect();
    let series = |f: &dyn Fn(&CsvRow) -> Option<f64>| -> Vec<(f64, f64)> {
        ok.iter().filter_map(|r| Some((r.n? as f64, f(r)?))).collect()
    };
    let it_ratio = match (ok.first().and_then(|r| r.it_c), ok.last().and_then(|r| r.it_c)) {
        (Some(a), Some(b)) if ok.len() >= 2 && a > 0 => Some(b as f64 / a as f64),
        _ => None,
    };
    SweepSummary {
        runs: rows.len(),
        failures: rows.len() - ok.len(),
        it_ratio,
        flops_factorize_slope: loglog_slope(&series(&|r| r.flops_factorize.map(|v| v as f64))),
        flops_apply_slope: loglog_slope(&series(&|r| r.flops_apply.map(|v| v as f64))),
        peak_bytes_slope: loglog_slope(&series(&|r| r.peak_blocks_bytes.map(|v| v as f64))),
    }
}

/// Runs `base` at every ladder size. In lowrank-equiv mode each size first runs
/// the polynomial variant to obtain its trace, and both rows are emitted.
/// Failures become rows with a status and the sweep continues.
pub fn sweep(base: &RunConfig, ladder: &[usize]) -> SweepResult {
    let mut rows = Vec::new();
    for &d in ladder {
        let cfg = match base.problem.with_size(d) {
            Ok(problem) => RunConfig { problem, ..base.clone() },
            Err(e) => {
                rows.push(CsvRow::failed(base, Some(d), &e));
                continue;
            }
        };
        let result = (|| -> Result<Vec<BenchRecord>> {
            let problem = cfg.problem.build()?;
            if cfg.mode == ModeKind::LowrankEquiv {
                let poly_cfg = RunConfig { mode: ModeKind::Polynomial, ..cfg.clone() };
                let poly = run_problem(&problem, &poly_cfg, None)?;
                let lr = run_problem(&problem, &cfg, Some(poly.trace))?;
                Ok(vec![poly.record, lr.record])
            } else {
                Ok(vec![run_problem(&problem, &cfg, None)?.record])
            }
        })();
        match result {
            Ok(recs) => rows.extend(recs.iter().map(|r| CsvRow::ok(r, Some(d)))),
            Err(e) => {
                warn!("sweep size {d} failed: {e}");
                rows.push(CsvRow::failed(&cfg, Some(d), &e));
            }
        }
    }
    let summary = summarize(&rows);
    SweepResult { rows, summary }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EigErrorReport {
    pub n: usize,
    /// Largest eigenvalue.
    pub lambda_1: f64,
    /// Smallest eigenvalue.
    pub lambda_n: f64,
    /// `‖(A − A_ℓ)v‖/λ` of the configured operator (polynomial or exact).
    pub e1: f64,
    pub en: f64,
    /// Same errors of the low-rank equivalent operator; absent in exact mode.
    pub e1_lowrank: Option<f64>,
    pub en_lowrank: Option<f64>,
    pub en_ratio: Option<f64>,
}

/// Analytic eigenpair of the Dirichlet 7-point Laplacian with wave numbers `k` (1-based).
pub fn poisson_eigenpair(problem: &ProblemInstance, k: [usize; 3]) -> (f64, Vec<f64>) {
    let dims = problem.grid.dims;
    let h = problem.grid.spacing;
    let pi = std::f64::consts::PI;
    let lambda: f64 = (0..3)
        .map(|a| {
            let s = (k[a] as f64 * pi / (2.0 * (dims[a] as f64 + 1.0))).sin();
            4.0 * s * s / (h[a] * h[a])
        })
        .sum();
    let mut v: Vec<f64> = (0..problem.grid.num_vertices())
        .map(|u| {
            let idx = problem.grid.vertex_index(u);
            (0..3).map(|a| (k[a] as f64 * pi * (idx[a] + 1) as f64 / (dims[a] as f64 + 1.0)).sin()).product()
        })
        .collect();
    let nrm = crate::dense::dot(&v, &v).sqrt();
    v.iter_mut().for_each(|x| *x /= nrm);
    (lambda, v)
}

fn backward_error(problem: &ProblemInstance, p: &Preconditioner, lambda: f64, v: &[f64]) -> Result<f64> {
    let av = problem.matrix.matvec(v);
    let alv = p.apply_operator(v)?;
    let d: f64 = av.iter().zip(&alv).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    Ok(d / lambda)
}

/// Backward errors of `A_ℓ` on the largest (`v_1`) and smallest (`v_n`) analytic eigenvectors of the Poisson problem.
pub fn eig_error_study(config: &RunConfig) -> Result<EigErrorReport> {
    if !matches!(config.problem, ProblemSpec::Poisson { .. }) {
        return Err(SgfError::Config("the eigenvector study needs the poisson problem".into()));
    }
    let problem = config.problem.build()?;
    let dims = problem.grid.dims;
    let (l1, v1) = poisson_eigenpair(&problem, dims);
    let (ln, vn) = poisson_eigenpair(&problem, [1, 1, 1]);
    let mode = if config.mode == ModeKind::Exact { ModeKind::Exact } else { ModeKind::Polynomial };
    let main_cfg = RunConfig { mode, ..config.clone() };
    let p = factorize(&problem, main_cfg.factor_options(None)?)?;
    let e1 = backward_error(&problem, &p, l1, &v1)?;
    let en = backward_error(&problem, &p, ln, &vn)?;
    let (e1_lowrank, en_lowrank) = if mode == ModeKind::Exact {
        (None, None)
    } else {
        let lr_cfg = RunConfig { mode: ModeKind::LowrankEquiv, ..config.clone() };
        let q = factorize(&problem, lr_cfg.factor_options(Some(p.rank_trace().clone()))?)?;
        (Some(backward_error(&problem, &q, l1, &v1)?), Some(backward_error(&problem, &q, ln, &vn)?))
    };
    Ok(EigErrorReport {
        n: problem.dim(),
        lambda_1: l1,
        lambda_n: ln,
        e1,
        en,
        e1_lowrank,
        en_lowrank,
        en_ratio: en_lowrank.map(|l| en / l),
    })
}
