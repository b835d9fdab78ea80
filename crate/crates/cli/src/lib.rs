//! Command-line interface: `solve`, `generate`, `convert-snl`, `bench` and
//! `verify`.
//!
//! Exit codes: 0 success (for `solve`: gradient convergence), 1 runtime
//! error or failed verification, 2 budget exhausted (`solve`), 64 invalid
//! command line, 65 unreadable or inconsistent input data.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use schur_elim::bench::{self, BenchSpec};
use schur_elim::io::{
    self, convert_to_snl, generate_bipartite_sfm, generate_grid_pgo, Dataset, GridSpec, Noise,
    ReportFormat, SfmSpec,
};
use schur_elim::schur::RecoverMode;
use schur_elim::solver::{solve, Method, Problem, SolverConfig, Termination};
use schur_elim::verify::{run_verify, VerifyConfig};
use schur_elim::{Error, Real};

pub const EXIT_OK: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_BUDGET: u8 = 2;
pub const EXIT_USAGE: u8 = 64;
pub const EXIT_DATA: u8 = 65;

#[derive(Debug, Parser)]
#[command(
    name = "schur-elim",
    version,
    about = "Schur-complement elimination for quadratic perception problems"
)]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve a g2o dataset with one method.
    Solve(SolveArgs),
    /// Write a synthetic dataset as g2o.
    #[command(subcommand)]
    Generate(GenerateCommand),
    /// Convert a pose dataset to a range-only (SNL) dataset.
    ConvertSnl(ConvertArgs),
    /// Run every method on every dataset for several random initializations.
    Bench(BenchArgs),
    /// Check the elimination operator against dense and finite-difference references.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Precision {
    F32,
    F64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse::<Method>().map_err(|e| e.to_string())
}

fn parse_recover(s: &str) -> Result<RecoverMode, String> {
    s.parse::<RecoverMode>().map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// ours, original or original-varpro.
    #[arg(long, value_parser = parse_method)]
    pub method: Method,
    /// Seed of the random initialization.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Iteration trace output; CSV unless the extension is .json or --format says otherwise.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    #[arg(long)]
    pub grad_tol: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Wall-clock budget in seconds.
    #[arg(long)]
    pub time_limit: Option<f64>,
    /// anchored or min-norm.
    #[arg(long, value_parser = parse_recover)]
    pub recover_mode: Option<RecoverMode>,
    #[arg(long, value_enum, default_value = "f64")]
    pub precision: Precision,
}

#[derive(Debug, Args)]
pub struct NoiseArgs {
    #[arg(long, default_value_t = 0.0)]
    pub rot_sigma: f64,
    #[arg(long, default_value_t = 0.0)]
    pub trans_sigma: f64,
}

impl NoiseArgs {
    fn noise(&self) -> Noise {
        Noise {
            rot_sigma: self.rot_sigma,
            trans_sigma: self.trans_sigma,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum GenerateCommand {
    /// Grid pose graph (planar, or stacked layers in 3D).
    Grid {
        #[arg(long)]
        rows: usize,
        #[arg(long)]
        cols: usize,
        /// Number of layers; implies 3D when greater than one.
        #[arg(long, default_value_t = 1)]
        layers: usize,
        /// Ambient dimension (2 or 3).
        #[arg(long)]
        dim: Option<usize>,
        #[command(flatten)]
        noise: NoiseArgs,
        #[arg(long, default_value_t = 0.3)]
        loop_prob: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Frames observing landmarks (bipartite translation graph).
    Sfm {
        #[arg(long)]
        frames: usize,
        #[arg(long)]
        points: usize,
        #[arg(long, default_value_t = 5)]
        obs_per_point: usize,
        #[arg(long, default_value_t = 3)]
        dim: usize,
        #[command(flatten)]
        noise: NoiseArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// g2o datasets (repeatable).
    #[arg(long = "input")]
    pub inputs: Vec<PathBuf>,
    /// Comma-separated methods.
    #[arg(long, value_delimiter = ',', value_parser = parse_method, default_value = "ours,original,original-varpro")]
    pub methods: Vec<Method>,
    #[arg(long, default_value_t = 5)]
    pub seeds: usize,
    /// Per-run wall-clock budget in seconds.
    #[arg(long, default_value_t = 600.0)]
    pub time_limit: f64,
    /// A run converged if its cost is within this percentage of the best cost.
    #[arg(long, default_value_t = 1.0)]
    pub convergence_pct: f64,
    /// Absolute slack of the convergence test.
    #[arg(long, default_value_t = 1e-8)]
    pub abs_tol: f64,
    #[arg(long)]
    pub grad_tol: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Run trials concurrently (timings become less reliable).
    #[arg(long)]
    pub parallel: bool,
    /// Per-run records output.
    #[arg(long)]
    pub runs_out: Option<PathBuf>,
    /// Summary table output (also printed to stdout).
    #[arg(long)]
    pub summary_out: Option<PathBuf>,
    /// Re-aggregate an existing per-run CSV instead of solving.
    #[arg(long, conflicts_with = "inputs")]
    pub from_runs: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub perturbations: usize,
    /// Add a +1/+1 row to the first instance (must be detected).
    #[arg(long)]
    pub inject_nonincidence: bool,
}

/// Exit code for a library error.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Parse { .. }
        | Error::InvalidLayout(_)
        | Error::DuplicateBlock(_)
        | Error::DanglingBlock { .. }
        | Error::EndpointMismatch { .. }
        | Error::NonPositiveConcentration { .. }
        | Error::NoMeasurements
        | Error::NonIncidence { .. }
        | Error::OffManifold(_) => EXIT_DATA,
        Error::InvalidArgument(_) => EXIT_USAGE,
        _ => EXIT_ERROR,
    }
}

fn fail(err: Error) -> u8 {
    eprintln!("error: {err}");
    exit_code(&err)
}

/// Parses arguments and runs the selected command.
pub fn run<I, S>(args: I) -> ExitCode
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).try_init();
    let code = match cli.command {
        Command::Solve(args) => match args.precision {
            Precision::F64 => cmd_solve::<f64>(&args),
            Precision::F32 => cmd_solve::<f32>(&args),
        },
        Command::Generate(g) => cmd_generate(&g),
        Command::ConvertSnl(args) => cmd_convert_snl(&args),
        Command::Bench(args) => cmd_bench(&args),
        Command::Verify(args) => cmd_verify(&args),
    };
    ExitCode::from(code)
}

fn load<T: Real>(path: &Path) -> Result<Dataset<T>, Error> {
    io::read_g2o(path)
}

fn solver_config(
    grad_tol: Option<f64>,
    max_iters: Option<usize>,
    time_limit: Option<f64>,
) -> SolverConfig {
    let mut config = SolverConfig::default();
    if let Some(v) = grad_tol {
        config.grad_tol = v;
    }
    if let Some(v) = max_iters {
        config.max_outer_iters = v;
    }
    if let Some(v) = time_limit {
        config.max_time = v;
    }
    config
}

pub fn cmd_solve<T: Real>(args: &SolveArgs) -> u8 {
    let mut config = solver_config(args.grad_tol, args.max_iters, args.time_limit);
    config.seed = args.seed;
    if let Some(mode) = args.recover_mode {
        config.recover_mode = mode;
    }
    if let Err(e) = config.validate() {
        return fail(e);
    }
    let dataset: Dataset<T> = match load(&args.input) {
        Ok(ds) => ds,
        Err(e) => return fail(e),
    };
    let problem = match dataset
        .assemble()
        .and_then(|model| Problem::for_methods(model, &[args.method], config.precond_cond_cap))
    {
        Ok(p) => p,
        Err(e) => return fail(e),
    };
    let x0 = problem.initial_point(args.method, args.seed);
    let report = match solve(&problem, args.method, &x0, &config) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    println!("dataset: {}", dataset.name);
    println!("method: {}", args.method);
    println!("final cost: {:.12e}", report.final_cost);
    println!("iterations: {}", report.iterations());
    println!("wall time: {:.6} s", report.elapsed_s());
    println!("termination: {}", report.termination);
    if let Some(out) = &args.out {
        let format = match args.format {
            Some(FormatArg::Csv) => ReportFormat::Csv,
            Some(FormatArg::Json) => ReportFormat::Json,
            None => ReportFormat::from_path(out),
        };
        if let Err(e) = io::write_report(&report, format, out) {
            return fail(e);
        }
    }
    match report.termination {
        Termination::Gradient => EXIT_OK,
        Termination::MaxIters | Termination::Timeout => EXIT_BUDGET,
    }
}

pub fn cmd_generate(cmd: &GenerateCommand) -> u8 {
    let (dataset, out) = match cmd {
        GenerateCommand::Grid {
            rows,
            cols,
            layers,
            dim,
            noise,
            loop_prob,
            seed,
            out,
        } => {
            let d = dim.unwrap_or(if *layers > 1 { 3 } else { 2 });
            let spec = GridSpec {
                rows: *rows,
                cols: *cols,
                layers: *layers,
                d,
                noise: noise.noise(),
                loop_prob: *loop_prob,
                seed: *seed,
            };
            (generate_grid_pgo::<f64>(&spec), out)
        }
        GenerateCommand::Sfm {
            frames,
            points,
            obs_per_point,
            dim,
            noise,
            seed,
            out,
        } => {
            let spec = SfmSpec {
                n_frames: *frames,
                n_points: *points,
                obs_per_point: *obs_per_point,
                d: *dim,
                noise: noise.noise(),
                seed: *seed,
            };
            (generate_bipartite_sfm::<f64>(&spec), out)
        }
    };
    match dataset.and_then(|ds| io::write_g2o_file(&ds, out).map(|_| ds)) {
        Ok(ds) => {
            println!(
                "wrote {} ({} variable rows, {} measurements) to {}",
                ds.name,
                ds.layout.n(),
                ds.measurements.len(),
                out.display()
            );
            EXIT_OK
        }
        Err(e) => fail(e),
    }
}

pub fn cmd_convert_snl(args: &ConvertArgs) -> u8 {
    let result = load::<f64>(&args.input)
        .and_then(|ds| convert_to_snl(&ds))
        .and_then(|snl| io::write_g2o_file(&snl, &args.out).map(|_| snl));
    match result {
        Ok(snl) => {
            println!(
                "wrote {} ({} ranges) to {}",
                snl.name,
                snl.measurements.len(),
                args.out.display()
            );
            EXIT_OK
        }
        Err(e) => fail(e),
    }
}

fn write_file(
    path: &Path,
    write: impl FnOnce(&mut std::fs::File) -> Result<(), Error>,
) -> Result<(), Error> {
    let mut file = std::fs::File::create(path)?;
    write(&mut file)
}

pub fn cmd_bench(args: &BenchArgs) -> u8 {
    let mut solver = SolverConfig::default();
    if let Some(v) = args.grad_tol {
        solver.grad_tol = v;
    }
    if let Some(v) = args.max_iters {
        solver.max_outer_iters = v;
    }
    let spec = BenchSpec {
        methods: args.methods.clone(),
        seeds: args.seeds,
        time_limit_s: args.time_limit,
        convergence_pct: args.convergence_pct,
        abs_tol: args.abs_tol,
        parallel: args.parallel,
        solver,
    };
    if let Err(e) = spec.validate() {
        return fail(e);
    }

    let runs = if let Some(path) = &args.from_runs {
        match std::fs::File::open(path)
            .map_err(Error::from)
            .and_then(bench::read_runs_csv)
        {
            Ok(runs) => runs,
            Err(e) => return fail(e),
        }
    } else {
        if args.inputs.is_empty() {
            return fail(Error::InvalidArgument(
                "bench needs at least one --input or --from-runs".into(),
            ));
        }
        let mut datasets = Vec::new();
        for path in &args.inputs {
            match load::<f64>(path) {
                Ok(ds) => datasets.push(ds),
                Err(e) => return fail(e),
            }
        }
        match bench::run_bench(&datasets, &spec) {
            Ok(outcome) => outcome.runs,
            Err(e) => return fail(e),
        }
    };
    let summary = bench::aggregate(&runs, &spec.methods, spec.convergence_pct, spec.abs_tol);

    if let Some(path) = &args.runs_out {
        if let Err(e) = write_file(path, |f| bench::write_runs_csv(&runs, f)) {
            return fail(e);
        }
    }
    if let Some(path) = &args.summary_out {
        if let Err(e) = write_file(path, |f| bench::write_summary_csv(&summary, f)) {
            return fail(e);
        }
    }
    println!(
        "# reference cost per dataset: best final cost over all runs; converged = within {}% (+{:e})",
        spec.convergence_pct, spec.abs_tol
    );
    match bench::summary_csv_string(&summary) {
        Ok(text) => print!("{text}"),
        Err(e) => return fail(e),
    }
    EXIT_OK
}

pub fn cmd_verify(args: &VerifyArgs) -> u8 {
    let cfg = VerifyConfig {
        trials: args.trials,
        seed: args.seed,
        perturbations: args.perturbations,
        inject_nonincidence: args.inject_nonincidence,
    };
    let report = match run_verify(&cfg) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    println!(
        "{:<40} {:>12} {:>10} {:>6}",
        "check", "max error", "tolerance", "count"
    );
    for s in &report.stats {
        println!(
            "{:<40} {:>12.3e} {:>10.0e} {:>6}",
            s.check.name(),
            s.max_error,
            s.tolerance,
            s.evaluations
        );
    }
    if report.passed() {
        println!("all checks passed over {} instances", report.trials);
        EXIT_OK
    } else {
        for f in &report.failures {
            eprintln!(
                "FAILED {} on trial {} (instance seed {}, d={}, poses={}, landmarks={}, components={}): {}",
                f.check.name(),
                f.trial,
                f.instance.seed,
                f.instance.d,
                f.instance.poses,
                f.instance.landmarks,
                f.instance.components,
                f.detail
            );
        }
        EXIT_ERROR
    }
}
