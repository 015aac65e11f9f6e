//! Seeded experiment sweeps comparing BPGe against BPG.
//!
//! An [`ExperimentSpec`] (JSON) names a problem family, a grid of sizes,
//! step-size rules and `ρ` values, and the solvers to run. Every cell of the
//! grid gets its own instance, seeded from the master seed and the cell
//! coordinates, and all solvers in a cell share that instance and its
//! starting point. Output is plain CSV: one trace per run, a per-run summary
//! and a comparison table with time and iteration ratios.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use ndarray::Array1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plip::PlipInstance;
use crate::problems::SmoothTerm;
use crate::qip::QipInstance;
use crate::solvers::{
    bpg_solve, bpge_solve, ExitMode, ExitReason, IterationRecord, LineSearchConfig, SolveResult,
    SolverConfig,
};

/// CSV columns holding wall-clock measurements; everything else is
/// reproducible bit-for-bit.
pub const TIMING_COLUMNS: &[&str] = &["cum_time_s", "time_s", "t_bpge", "t_bpg", "t_ratio"];

pub const TRACE_HEADER: &[&str] = &[
    "iter",
    "psi",
    "psi_gap",
    "dh_step",
    "lyapunov",
    "beta",
    "shrinks",
    "residual",
    "cum_time_s",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Plip,
    Qip,
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProblemKind::Plip => "plip",
            ProblemKind::Qip => "qip",
        })
    }
}

impl FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plip" => Ok(ProblemKind::Plip),
            "qip" => Ok(ProblemKind::Qip),
            other => Err(Error::InvalidConfig(format!(
                "unknown problem '{other}' (plip, qip)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Bpg,
    Bpge,
    Pg,
    Pge,
}

impl SolverKind {
    fn needs_lipschitz_gradient(self) -> bool {
        matches!(self, SolverKind::Pg | SolverKind::Pge)
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverKind::Bpg => "bpg",
            SolverKind::Bpge => "bpge",
            SolverKind::Pg => "pg",
            SolverKind::Pge => "pge",
        })
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bpg" => Ok(SolverKind::Bpg),
            "bpge" => Ok(SolverKind::Bpge),
            "pg" => Ok(SolverKind::Pg),
            "pge" => Ok(SolverKind::Pge),
            other => Err(Error::InvalidConfig(format!(
                "unknown solver '{other}' (bpg, bpge, pg, pge)"
            ))),
        }
    }
}

/// Step size as a fraction of `1/L`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LambdaRule {
    #[serde(rename = "1/L")]
    Full,
    #[serde(rename = "1/2L")]
    Half,
    #[serde(rename = "1/3L")]
    Third,
}

impl LambdaRule {
    pub fn divisor(self) -> f64 {
        match self {
            LambdaRule::Full => 1.0,
            LambdaRule::Half => 2.0,
            LambdaRule::Third => 3.0,
        }
    }

    pub fn step(self, smad_constant: f64) -> f64 {
        1.0 / (self.divisor() * smad_constant)
    }

    fn tag(self) -> &'static str {
        match self {
            LambdaRule::Full => "lam1L",
            LambdaRule::Half => "lam2L",
            LambdaRule::Third => "lam3L",
        }
    }
}

impl fmt::Display for LambdaRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LambdaRule::Full => "1/L",
            LambdaRule::Half => "1/2L",
            LambdaRule::Third => "1/3L",
        })
    }
}

impl FromStr for LambdaRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1/L" => Ok(LambdaRule::Full),
            "1/2L" => Ok(LambdaRule::Half),
            "1/3L" => Ok(LambdaRule::Third),
            other => Err(Error::InvalidConfig(format!(
                "unknown lambda rule '{other}' (1/L, 1/2L, 1/3L)"
            ))),
        }
    }
}

/// Knobs of instance generation that are not part of the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceOptions {
    /// ℓ1 weight for QIP.
    pub theta: f64,
    /// Replace PLIP data by a Poisson draw around `A x_true`.
    pub poisson_noise: bool,
    /// Standard deviation of additive Gaussian noise on QIP data.
    pub qip_noise_std: f64,
}

impl Default for InstanceOptions {
    fn default() -> Self {
        Self {
            theta: 1.0,
            poisson_noise: false,
            qip_noise_std: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Instance {
    Plip(PlipInstance),
    Qip(QipInstance),
}

impl Instance {
    pub fn problem(&self) -> ProblemKind {
        match self {
            Instance::Plip(_) => ProblemKind::Plip,
            Instance::Qip(_) => ProblemKind::Qip,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Instance::Plip(p) => p.d,
            Instance::Qip(q) => q.d,
        }
    }

    pub fn smad_constant(&self) -> f64 {
        match self {
            Instance::Plip(p) => p.smad_constant(),
            Instance::Qip(q) => q.smad_constant(),
        }
    }

    pub fn initial_point(&self) -> Array1<f64> {
        match self {
            Instance::Plip(p) => p.initial_point(),
            Instance::Qip(q) => q.initial_point(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        match self {
            Instance::Plip(p) => p.to_json(),
            Instance::Qip(q) => q.to_json(),
        }
    }
}

/// Deterministic instance for `(problem, m, d, seed)` with default options.
pub fn generate_instance(problem: ProblemKind, m: usize, d: usize, seed: u64) -> Result<Instance> {
    generate_instance_with(problem, m, d, seed, &InstanceOptions::default())
}

pub fn generate_instance_with(
    problem: ProblemKind,
    m: usize,
    d: usize,
    seed: u64,
    opts: &InstanceOptions,
) -> Result<Instance> {
    Ok(match problem {
        ProblemKind::Plip => {
            Instance::Plip(PlipInstance::generate(m, d, seed, opts.poisson_noise)?)
        }
        ProblemKind::Qip => Instance::Qip(QipInstance::generate(
            m,
            d,
            seed,
            opts.theta,
            opts.qip_noise_std,
        )?),
    })
}

fn reject_euclidean_solver(problem: ProblemKind, solver: SolverKind) -> Result<()> {
    if solver.needs_lipschitz_gradient() {
        return Err(Error::InvalidConfig(format!(
            "{solver} requires a globally Lipschitz gradient, which the {problem} data term \
             does not have; use bpg or bpge"
        )));
    }
    Ok(())
}

/// Runs one solver on one instance from `x0`.
pub fn solve_instance(
    instance: &Instance,
    solver: SolverKind,
    x0: &Array1<f64>,
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    reject_euclidean_solver(instance.problem(), solver)?;
    let extrapolate = solver == SolverKind::Bpge;
    match instance {
        Instance::Plip(p) => {
            let obj = p.objective();
            if extrapolate {
                bpge_solve(&obj, x0.view(), cfg)
            } else {
                bpg_solve(&obj, x0.view(), cfg)
            }
        }
        Instance::Qip(q) => {
            let obj = q.objective();
            if extrapolate {
                bpge_solve(&obj, x0.view(), cfg)
            } else {
                bpg_solve(&obj, x0.view(), cfg)
            }
        }
    }
}

fn default_repetitions() -> usize {
    1
}
fn default_tol() -> f64 {
    SolverConfig::DEFAULT_TOL
}
fn default_k_max() -> usize {
    SolverConfig::DEFAULT_K_MAX
}
fn default_exit_mode() -> ExitMode {
    ExitMode::IterateRelative
}
fn default_line_search() -> LineSearchConfig {
    LineSearchConfig::default()
}
fn default_instance_options() -> InstanceOptions {
    InstanceOptions::default()
}

/// A sweep over `sizes × lambdas × rhos × repetitions`, each cell running
/// every listed solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub problem: ProblemKind,
    /// `(m, d)` pairs.
    pub sizes: Vec<(usize, usize)>,
    pub lambdas: Vec<LambdaRule>,
    pub rhos: Vec<f64>,
    pub solvers: Vec<SolverKind>,
    pub seed: u64,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    #[serde(default = "default_exit_mode")]
    pub exit_mode: ExitMode,
    /// `beta0`, `eta` and `max_shrinks`; `rho` here is overridden per cell.
    #[serde(default = "default_line_search")]
    pub line_search: LineSearchConfig,
    #[serde(default = "default_instance_options")]
    pub instance: InstanceOptions,
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(Error::InvalidConfig(msg));
        if self.sizes.is_empty() || self.lambdas.is_empty() || self.rhos.is_empty() {
            return invalid("sizes, lambdas and rhos must be nonempty".into());
        }
        if self.solvers.is_empty() {
            return invalid("at least one solver is required".into());
        }
        if let Some((m, d)) = self.sizes.iter().find(|(m, d)| *m == 0 || *d == 0) {
            return invalid(format!("size ({m}, {d}) must have m, d >= 1"));
        }
        for &solver in &self.solvers {
            reject_euclidean_solver(self.problem, solver)?;
        }
        if self.repetitions == 0 {
            return invalid("repetitions must be positive".into());
        }
        for &rho in &self.rhos {
            LineSearchConfig {
                rho,
                ..self.line_search
            }
            .validate()?;
        }
        SolverConfig {
            tol: self.tol,
            k_max: self.k_max,
            ..SolverConfig::new(1.0)
        }
        .validate(1.0)?;
        Ok(())
    }

    fn solver_config(&self, lambda: f64, rho: f64) -> SolverConfig {
        SolverConfig {
            lambda,
            line_search: LineSearchConfig {
                rho,
                ..self.line_search
            },
            tol: self.tol,
            k_max: self.k_max,
            exit_mode: self.exit_mode,
            lyapunov_m: None,
            keep_iterates: false,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of one grid cell, mixed from the master seed and cell coordinates.
pub fn cell_seed(
    master: u64,
    m: usize,
    d: usize,
    lambda_index: usize,
    rho_index: usize,
    repetition: usize,
) -> u64 {
    [m, d, lambda_index, rho_index, repetition]
        .iter()
        .fold(splitmix64(master), |acc, &v| splitmix64(acc ^ v as u64))
}

/// Coordinates of one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    pub m: usize,
    pub d: usize,
    pub lambda_rule: LambdaRule,
    pub rho: f64,
    pub repetition: usize,
    pub seed: u64,
}

impl Cell {
    fn file_stem(&self, problem: ProblemKind) -> String {
        format!(
            "{problem}_m{}_d{}_{}_rho{}_rep{}",
            self.m,
            self.d,
            self.lambda_rule.tag(),
            self.rho,
            self.repetition
        )
    }
}

/// One solver run inside a sweep.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub cell: Cell,
    pub solver: SolverKind,
    pub lambda: f64,
    /// Seconds spent inside the solve call.
    pub time_s: f64,
    pub result: SolveResult,
}

/// A row of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub m: usize,
    pub d: usize,
    pub lambda_rule: LambdaRule,
    pub rho: f64,
    pub repetition: usize,
    pub seed: u64,
    pub t_bpge: f64,
    pub t_ratio: f64,
    pub n_bpge: usize,
    pub n_ratio: f64,
    pub exit_bpge: ExitReason,
    pub exit_bpg: ExitReason,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub problem: ProblemKind,
    pub runs: Vec<RunRecord>,
    /// Present for cells where both bpg and bpge ran.
    pub rows: Vec<ComparisonRow>,
}

/// Runs every cell of the sweep, in parallel over cells when `jobs != 1`
/// (`jobs == 0` uses all cores). Runs come back in grid order.
pub fn run_comparison(spec: &ExperimentSpec, jobs: usize) -> Result<SweepOutcome> {
    spec.validate()?;
    let mut cells = Vec::new();
    for &(m, d) in &spec.sizes {
        for (li, &lambda_rule) in spec.lambdas.iter().enumerate() {
            for (ri, &rho) in spec.rhos.iter().enumerate() {
                for repetition in 0..spec.repetitions {
                    let seed = cell_seed(spec.seed, m, d, li, ri, repetition);
                    cells.push(Cell {
                        m,
                        d,
                        lambda_rule,
                        rho,
                        repetition,
                        seed,
                    });
                }
            }
        }
    }

    let run_cell = |cell: &Cell| -> Result<Vec<RunRecord>> {
        let instance =
            generate_instance_with(spec.problem, cell.m, cell.d, cell.seed, &spec.instance)?;
        let x0 = instance.initial_point();
        let lambda = cell.lambda_rule.step(instance.smad_constant());
        let cfg = spec.solver_config(lambda, cell.rho);
        spec.solvers
            .iter()
            .map(|&solver| {
                let start = Instant::now();
                let result = solve_instance(&instance, solver, &x0, &cfg)?;
                let time_s = start.elapsed().as_secs_f64();
                log::info!(
                    "{} m={} d={} {} rho={} rep={}: {} after {} iterations",
                    solver,
                    cell.m,
                    cell.d,
                    cell.lambda_rule,
                    cell.rho,
                    cell.repetition,
                    result.exit_reason,
                    result.iterations
                );
                Ok(RunRecord {
                    cell: cell.clone(),
                    solver,
                    lambda,
                    time_s,
                    result,
                })
            })
            .collect()
    };

    let per_cell: Vec<Result<Vec<RunRecord>>> = if jobs == 1 {
        cells.iter().map(run_cell).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
        pool.install(|| cells.par_iter().map(run_cell).collect())
    };

    let mut runs = Vec::new();
    let mut rows = Vec::new();
    for cell_runs in per_cell {
        let cell_runs = cell_runs?;
        let find = |kind| cell_runs.iter().find(|r| r.solver == kind);
        if let (Some(e), Some(p)) = (find(SolverKind::Bpge), find(SolverKind::Bpg)) {
            rows.push(ComparisonRow {
                m: e.cell.m,
                d: e.cell.d,
                lambda_rule: e.cell.lambda_rule,
                rho: e.cell.rho,
                repetition: e.cell.repetition,
                seed: e.cell.seed,
                t_bpge: e.time_s,
                t_ratio: e.time_s / p.time_s,
                n_bpge: e.result.iterations,
                n_ratio: e.result.iterations as f64 / p.result.iterations.max(1) as f64,
                exit_bpge: e.result.exit_reason,
                exit_bpg: p.result.exit_reason,
            });
        }
        runs.extend(cell_runs);
    }
    Ok(SweepOutcome {
        problem: spec.problem,
        runs,
        rows,
    })
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

/// Writes a convergence trace: one row per iteration, with
/// `psi_gap = |Ψ(x^k) - Ψ(x^final)|` measured against the run's own last
/// objective value.
pub fn write_trace_csv<W: std::io::Write>(writer: W, trace: &[IterationRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TRACE_HEADER)?;
    let psi_final = trace.last().map_or(0.0, |r| r.psi);
    for r in trace {
        w.write_record([
            r.k.to_string(),
            num(r.psi),
            num((r.psi - psi_final).abs()),
            num(r.dh_step),
            num(r.lyapunov),
            num(r.beta_accepted),
            r.shrink_count.to_string(),
            num(r.residual),
            num(r.wall_time),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One trace CSV per run in `dir`; returns the written paths in run order.
pub fn emit_convergence_curves(outcome: &SweepOutcome, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    outcome
        .runs
        .iter()
        .map(|run| {
            let path = dir.join(format!(
                "{}_{}.csv",
                run.cell.file_stem(outcome.problem),
                run.solver
            ));
            write_trace_csv(fs::File::create(&path)?, &run.result.trace)?;
            Ok(path)
        })
        .collect()
}

pub fn write_runs_csv<W: std::io::Write>(writer: W, outcome: &SweepOutcome) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "problem",
        "m",
        "d",
        "lambda_rule",
        "rho",
        "repetition",
        "seed",
        "solver",
        "lambda",
        "iterations",
        "exit_reason",
        "psi_initial",
        "psi_final",
        "fallbacks",
        "time_s",
    ])?;
    for run in &outcome.runs {
        let c = &run.cell;
        w.write_record([
            outcome.problem.to_string(),
            c.m.to_string(),
            c.d.to_string(),
            c.lambda_rule.to_string(),
            c.rho.to_string(),
            c.repetition.to_string(),
            c.seed.to_string(),
            run.solver.to_string(),
            num(run.lambda),
            run.result.iterations.to_string(),
            run.result.exit_reason.to_string(),
            num(run.result.psi_initial),
            num(run.result.psi_final),
            run.result.fallback_count().to_string(),
            num(run.time_s),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_comparison_csv<W: std::io::Write>(writer: W, rows: &[ComparisonRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "m",
        "d",
        "lambda_rule",
        "rho",
        "repetition",
        "seed",
        "t_bpge",
        "t_ratio",
        "n_bpge",
        "n_ratio",
        "exit_bpge",
        "exit_bpg",
    ])?;
    for r in rows {
        w.write_record([
            r.m.to_string(),
            r.d.to_string(),
            r.lambda_rule.to_string(),
            r.rho.to_string(),
            r.repetition.to_string(),
            r.seed.to_string(),
            num(r.t_bpge),
            num(r.t_ratio),
            r.n_bpge.to_string(),
            num(r.n_ratio),
            r.exit_bpge.to_string(),
            r.exit_bpg.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Files written by [`write_sweep`].
#[derive(Debug, Clone)]
pub struct SweepFiles {
    pub comparison: PathBuf,
    pub runs: PathBuf,
    pub traces: Vec<PathBuf>,
}

/// Writes `comparison.csv`, `runs.csv` and `traces/*.csv` under `dir`.
pub fn write_sweep(outcome: &SweepOutcome, dir: &Path) -> Result<SweepFiles> {
    fs::create_dir_all(dir)?;
    let comparison = dir.join("comparison.csv");
    write_comparison_csv(fs::File::create(&comparison)?, &outcome.rows)?;
    let runs = dir.join("runs.csv");
    write_runs_csv(fs::File::create(&runs)?, outcome)?;
    let traces = emit_convergence_curves(outcome, &dir.join("traces"))?;
    Ok(SweepFiles {
        comparison,
        runs,
        traces,
    })
}

/// Drops the [`TIMING_COLUMNS`] from CSV text, leaving the reproducible part.
pub fn strip_timing_columns(text: &str) -> Result<String> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let keep: Vec<usize> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| !TIMING_COLUMNS.contains(h))
        .map(|(i, _)| i)
        .collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(keep.iter().map(|&i| &headers[i]))?;
    for rec in reader.records() {
        let rec = rec?;
        w.write_record(keep.iter().map(|&i| &rec[i]))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Summary of a single solve, written as JSON by `bregopt solve`.
#[derive(Debug, Clone, Serialize)]
pub struct ResultSummary {
    pub problem: ProblemKind,
    pub solver: SolverKind,
    pub m: usize,
    pub d: usize,
    pub seed: u64,
    pub lambda: f64,
    pub rho: f64,
    pub iterations: usize,
    pub exit_reason: ExitReason,
    pub failure: Option<String>,
    pub psi_initial: f64,
    pub psi_final: f64,
    pub final_residual: Option<f64>,
    pub line_search_fallbacks: usize,
    pub x_final: Vec<f64>,
}

impl ResultSummary {
    pub fn new(
        problem: ProblemKind,
        solver: SolverKind,
        (m, d, seed): (usize, usize, u64),
        result: &SolveResult,
    ) -> Self {
        Self {
            problem,
            solver,
            m,
            d,
            seed,
            lambda: result.lambda,
            rho: result.rho,
            iterations: result.iterations,
            exit_reason: result.exit_reason,
            failure: result.failure.clone(),
            psi_initial: result.psi_initial,
            psi_final: result.psi_final,
            final_residual: result.trace.last().map(|r| r.residual),
            line_search_fallbacks: result.fallback_count(),
            x_final: result.x_final.to_vec(),
        }
    }
}
