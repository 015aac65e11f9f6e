use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use bregopt::checks::run_checks;
use bregopt::harness::{
    generate_instance_with, run_comparison, solve_instance, write_sweep, write_trace_csv,
    ExperimentSpec, InstanceOptions, LambdaRule, ProblemKind, ResultSummary, SolverKind,
};
use bregopt::solvers::{ExitMode, ExitReason, LineSearchConfig, SolverConfig};
use bregopt::Error;

#[derive(Parser)]
#[command(
    name = "bregopt",
    version,
    about = "Bregman proximal gradient solvers and benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded instance as JSON.
    Generate {
        #[command(flatten)]
        instance: InstanceArgs,
        /// Directory for instance.json; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one solver on one instance; writes trace.csv and result.json.
    Solve {
        #[command(flatten)]
        instance: InstanceArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run an experiment spec (JSON) and write CSV tables and traces.
    Sweep {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Run the invariant suite on a seeded instance.
    Check {
        #[command(flatten)]
        instance: InstanceArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ProblemArg {
    Plip,
    Qip,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Bpg,
    Bpge,
    Pg,
    Pge,
}

#[derive(Clone, Copy, ValueEnum)]
enum LambdaArg {
    #[value(name = "1/L")]
    Full,
    #[value(name = "1/2L")]
    Half,
    #[value(name = "1/3L")]
    Third,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExitModeArg {
    Iterate,
    Objective,
}

#[derive(Args)]
struct InstanceArgs {
    #[arg(long, value_enum)]
    problem: ProblemArg,
    #[arg(long)]
    m: usize,
    #[arg(long)]
    d: usize,
    #[arg(long)]
    seed: u64,
    /// ℓ1 weight (qip only).
    #[arg(long, default_value_t = 1.0)]
    theta: f64,
    /// Poisson-distributed data (plip only).
    #[arg(long)]
    poisson_noise: bool,
    /// Gaussian noise level on the data (qip only).
    #[arg(long, default_value_t = 0.0)]
    noise_std: f64,
}

#[derive(Args)]
struct SolverArgs {
    #[arg(long, value_enum, default_value = "bpge")]
    solver: SolverArg,
    #[arg(long, value_enum, default_value = "1/L")]
    lambda_rule: LambdaArg,
    #[arg(long, default_value_t = 0.99)]
    rho: f64,
    #[arg(long, default_value_t = 0.99)]
    beta0: f64,
    #[arg(long, default_value_t = 0.5)]
    eta: f64,
    #[arg(long, default_value_t = SolverConfig::DEFAULT_TOL)]
    tol: f64,
    #[arg(long, default_value_t = SolverConfig::DEFAULT_K_MAX)]
    kmax: usize,
    #[arg(long, value_enum, default_value = "iterate")]
    exit_mode: ExitModeArg,
}

impl InstanceArgs {
    fn problem(&self) -> ProblemKind {
        match self.problem {
            ProblemArg::Plip => ProblemKind::Plip,
            ProblemArg::Qip => ProblemKind::Qip,
        }
    }

    fn options(&self) -> InstanceOptions {
        InstanceOptions {
            theta: self.theta,
            poisson_noise: self.poisson_noise,
            qip_noise_std: self.noise_std,
        }
    }
}

impl SolverArgs {
    fn kind(&self) -> SolverKind {
        match self.solver {
            SolverArg::Bpg => SolverKind::Bpg,
            SolverArg::Bpge => SolverKind::Bpge,
            SolverArg::Pg => SolverKind::Pg,
            SolverArg::Pge => SolverKind::Pge,
        }
    }

    fn lambda_rule(&self) -> LambdaRule {
        match self.lambda_rule {
            LambdaArg::Full => LambdaRule::Full,
            LambdaArg::Half => LambdaRule::Half,
            LambdaArg::Third => LambdaRule::Third,
        }
    }

    fn config(&self, smad_constant: f64) -> SolverConfig {
        SolverConfig {
            line_search: LineSearchConfig {
                beta0: self.beta0,
                eta: self.eta,
                rho: self.rho,
                ..LineSearchConfig::default()
            },
            tol: self.tol,
            k_max: self.kmax,
            exit_mode: match self.exit_mode {
                ExitModeArg::Iterate => ExitMode::IterateRelative,
                ExitModeArg::Objective => ExitMode::ObjectiveRelative,
            },
            ..SolverConfig::new(self.lambda_rule().step(smad_constant))
        }
    }
}

enum Failure {
    Validation(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Domain(_) | Error::NumericalFailure(_) => Failure::Numerical(e.to_string()),
            other => Failure::Validation(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Validation(e.to_string())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("BREGOPT_LOG", "error")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Generate { instance, out } => {
            let inst = generate_instance_with(
                instance.problem(),
                instance.m,
                instance.d,
                instance.seed,
                &instance.options(),
            )?;
            let json = inst.to_json()?;
            match out {
                Some(dir) => {
                    fs::create_dir_all(&dir)?;
                    let path = dir.join("instance.json");
                    fs::write(&path, json)?;
                    println!("{}", path.display());
                }
                None => println!("{json}"),
            }
        }
        Command::Solve {
            instance,
            solver,
            out,
        } => {
            let problem = instance.problem();
            let inst = generate_instance_with(
                problem,
                instance.m,
                instance.d,
                instance.seed,
                &instance.options(),
            )?;
            let cfg = solver.config(inst.smad_constant());
            cfg.validate(inst.smad_constant())?;
            let result = solve_instance(&inst, solver.kind(), &inst.initial_point(), &cfg)?;
            write_outputs(
                &out,
                &result.trace,
                &ResultSummary::new(
                    problem,
                    solver.kind(),
                    (instance.m, instance.d, instance.seed),
                    &result,
                ),
            )?;
            println!(
                "{} after {} iterations, psi = {:e}",
                result.exit_reason, result.iterations, result.psi_final
            );
            if result.exit_reason == ExitReason::NumericalFailure {
                return Err(Failure::Numerical(result.failure.unwrap_or_default()));
            }
        }
        Command::Sweep { spec, out, jobs } => {
            let text = fs::read_to_string(&spec)
                .map_err(|e| Failure::Validation(format!("{}: {e}", spec.display())))?;
            let spec = ExperimentSpec::from_json(&text)
                .map_err(|e| Failure::Validation(format!("{}: {e}", spec.display())))?;
            let outcome = run_comparison(&spec, jobs)?;
            let files = write_sweep(&outcome, &out)?;
            println!(
                "{} runs, {} comparison rows -> {}",
                outcome.runs.len(),
                outcome.rows.len(),
                files.comparison.display()
            );
            let failed = outcome
                .runs
                .iter()
                .filter(|r| r.result.exit_reason == ExitReason::NumericalFailure)
                .count();
            if failed > 0 {
                return Err(Failure::Numerical(format!(
                    "{failed} runs ended in numerical failure"
                )));
            }
        }
        Command::Check { instance } => {
            let inst = generate_instance_with(
                instance.problem(),
                instance.m,
                instance.d,
                instance.seed,
                &instance.options(),
            )?;
            let report = run_checks(&inst, instance.seed)?;
            print!("{report}");
            if !report.passed() {
                return Err(Failure::Numerical("invariant checks failed".into()));
            }
        }
    }
    Ok(())
}

fn write_outputs(
    dir: &Path,
    trace: &[bregopt::IterationRecord],
    summary: &ResultSummary,
) -> Result<(), Failure> {
    fs::create_dir_all(dir)?;
    write_trace_csv(fs::File::create(dir.join("trace.csv"))?, trace)?;
    let json = serde_json::to_string_pretty(summary).map_err(Error::from)?;
    fs::write(dir.join("result.json"), json)?;
    Ok(())
}
