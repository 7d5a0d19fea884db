use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use bmc_core::harness::export::{export_run, ExportOptions};
use bmc_core::harness::moments::{compare_moments, TestFunction};
use bmc_core::harness::stats::ks_critical_value;
use bmc_core::tree_sim::write_trajectory_csv;
use bmc_core::{
    admissible_bandwidth, check_assumptions, density_estimate, run_clt_experiment,
    simulate_generations, with_threads, BandwidthSchedule, BarModel, Error, Execution,
    ExperimentConfig, GaussianInitial, InitialSpec, QuadratureRule, ReplicateSeed, Result, Scope,
    SmoothingKernel,
};

#[derive(Parser)]
#[command(
    name = "bmc",
    version,
    about = "Bifurcating Markov chain simulation and density-estimator CLT checks"
)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the model assumption report and bandwidth regime report as JSON.
    Check(CheckArgs),
    /// Simulate one tree and write its trajectory as CSV.
    Simulate(SimulateArgs),
    /// Simulate one tree and print density estimates at the query points.
    Estimate(EstimateArgs),
    /// Run a CLT experiment and export samples and summary.
    Clt(CltArgs),
    /// Compare exact generation-sum moments with Monte Carlo.
    Moments(MomentsArgs),
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, allow_negative_numbers = true)]
    a: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
}

impl ModelArgs {
    fn model(&self) -> Result<BarModel> {
        BarModel::new(self.a, self.sigma)
    }
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    gamma: f64,
    /// Kernel order.
    #[arg(long, default_value_t = 2.0)]
    s: f64,
    #[arg(long, default_value_t = 1)]
    dim: usize,
    /// Root mean; with --rho0 replaces the stationary root law.
    #[arg(long, allow_negative_numbers = true, requires = "rho0")]
    m0: Option<f64>,
    #[arg(long, requires = "m0")]
    rho0: Option<f64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    n: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "stationary")]
    initial: InitialSpec,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    dump: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    n: u32,
    #[arg(long)]
    gamma: f64,
    /// Comma-separated query points.
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        required = true
    )]
    x: Vec<f64>,
    #[arg(long, default_value = "gen")]
    scope: Scope,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "gaussian")]
    kernel: String,
    #[arg(long, default_value = "stationary")]
    initial: InitialSpec,
}

#[derive(Args)]
struct CltArgs {
    /// TOML (or .json) experiment file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    a: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    n: Option<u32>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    x: Option<f64>,
    #[arg(long)]
    n0: Option<usize>,
    #[arg(long)]
    scope: Option<Scope>,
    #[arg(long)]
    kernel_name: Option<String>,
    #[arg(long)]
    master_seed: Option<u64>,
    #[arg(long)]
    initial: Option<InitialSpec>,
    #[arg(long)]
    record_previous_generation: bool,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Also write histogram.csv; 0 picks ⌈√n0⌉ bins.
    #[arg(long)]
    histogram: Option<usize>,
    /// Also write ecdf.csv.
    #[arg(long)]
    ecdf: bool,
}

impl CltArgs {
    /// File values (or the sub-critical reference setup) with flags applied on top.
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::reference(0),
        };
        macro_rules! apply {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field.clone() {
                    cfg.$field = v;
                })*
            };
        }
        apply!(
            a,
            sigma,
            n,
            gamma,
            x,
            n0,
            scope,
            kernel_name,
            master_seed,
            initial
        );
        if self.record_previous_generation {
            cfg.record_previous_generation = true;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct MomentsArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    f: TestFunction,
    #[arg(long)]
    n: u32,
    #[arg(long, allow_negative_numbers = true)]
    x: f64,
    /// Second generation for the cross moment `E[M_Gn(f) M_Gm(f)]`.
    #[arg(long)]
    m: Option<u32>,
    #[arg(long, default_value_t = 100_000)]
    replicates: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn check(args: &CheckArgs) -> Result<String> {
    let model = args.model.model()?;
    let initial = match (args.m0, args.rho0) {
        (Some(m0), Some(rho0)) => GaussianInitial::new(m0, rho0)?,
        _ => model.stationary(),
    };
    let assumptions = check_assumptions(&model, &initial, &QuadratureRule::default())?;
    let schedule = BandwidthSchedule {
        gamma: args.gamma,
        dim: args.dim,
    };
    let regime = admissible_bandwidth(&schedule, args.s, model.alpha());
    let report = json!({ "assumptions": assumptions, "regime": regime });
    Ok(serde_json::to_string_pretty(&report).expect("reports serialise") + "\n")
}

fn simulate(args: &SimulateArgs) -> Result<String> {
    let model = args.model.model()?;
    let initial = args.initial.resolve(&model);
    let stream = simulate_generations(
        &model,
        &initial,
        args.n,
        ReplicateSeed::new(args.seed, 0),
        Execution::Parallel,
    )?;
    match &args.dump {
        Some(path) => {
            let file = File::create(path).map_err(|e| io_error(path, e))?;
            write_trajectory_csv(stream, BufWriter::new(file)).map_err(|e| csv_error(path, e))?;
        }
        None => write_trajectory_csv(stream, io::stdout().lock())
            .map_err(|e| csv_error(Path::new(STDOUT), e))?,
    }
    Ok(String::new())
}

fn estimate(args: &EstimateArgs) -> Result<String> {
    let model = args.model.model()?;
    let kernel = SmoothingKernel::by_name(&args.kernel)?;
    let schedule = BandwidthSchedule::new(args.gamma, kernel.dim())?;
    let h = schedule.bandwidth(args.n);
    let initial = args.initial.resolve(&model);
    let stream = simulate_generations(
        &model,
        &initial,
        args.n,
        ReplicateSeed::new(args.seed, 0),
        Execution::Parallel,
    )?;
    let pool: Vec<f64> = match args.scope {
        Scope::Generation => stream
            .last()
            .map(|g| g.states().to_vec())
            .unwrap_or_default(),
        Scope::Tree => stream.flat_map(|g| g.states().to_vec()).collect(),
    };
    let mu_hat = density_estimate(&pool, &args.x, h, &kernel)?;
    let mut out = String::from("x,mu_hat,mu,h\n");
    for (x, m) in args.x.iter().zip(&mu_hat) {
        let _ = writeln!(out, "{x},{m},{},{h}", model.invariant_density(*x));
    }
    Ok(out)
}

fn clt(args: &CltArgs) -> Result<String> {
    let cfg = args.config()?;
    let result = run_clt_experiment(&cfg)?;
    let files = export_run(
        &result,
        &args.out,
        ExportOptions {
            histogram_bins: args.histogram,
            ecdf: args.ecdf,
        },
    )?;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "theoretical variance {:.6}  sample mean {:.4}  sample variance {:.6}",
        result.theoretical.variance, result.sample_mean, result.sample_variance
    );
    let _ = writeln!(
        out,
        "ks distance {:.4}  critical {:.4}  {}  admissible bandwidth: {}",
        result.ks_distance,
        ks_critical_value(result.samples.len()),
        if result.ks_passes() { "PASS" } else { "FAIL" },
        result.admissibility.admissible
    );
    if cfg.record_previous_generation {
        let r = result.independence()?;
        let _ = match r.correlation {
            Some(c) => writeln!(
                out,
                "corr(zeta_n, zeta_n-1) {c:.4}  threshold {:.4}",
                r.threshold
            ),
            None => writeln!(out, "corr(zeta_n, zeta_n-1) undefined"),
        };
    }
    for f in files {
        let _ = writeln!(out, "wrote {}", f.display());
    }
    Ok(out)
}

fn moments(args: &MomentsArgs) -> Result<String> {
    let model = args.model.model()?;
    let rows = compare_moments(
        &model,
        args.f,
        args.n,
        args.m,
        args.x,
        args.replicates,
        args.seed,
        Execution::Parallel,
    )?;
    let mut out = format!(
        "{:<28} {:>16} {:>16} {:>12} {:>8}\n",
        "quantity", "oracle", "monte_carlo", "std_error", "z"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<28} {:>16.8} {:>16.8} {:>12.3e} {:>8.2}",
            r.quantity, r.oracle, r.monte_carlo, r.standard_error, r.z_score
        );
    }
    Ok(out)
}

const STDOUT: &str = "<stdout>";

fn io_error(path: &Path, e: io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => io_error(path, io),
        other => Error::Format {
            path: path.to_path_buf(),
            message: format!("{other:?}"),
        },
    }
}

fn dispatch(command: &Command) -> Result<()> {
    let text = match command {
        Command::Check(a) => check(a),
        Command::Simulate(a) => simulate(a),
        Command::Estimate(a) => estimate(a),
        Command::Clt(a) => clt(a),
        Command::Moments(a) => moments(a),
    }?;
    let mut stdout = io::stdout().lock();
    stdout
        .write_all(text.as_bytes())
        .and_then(|_| stdout.flush())
        .map_err(|e| io_error(Path::new(STDOUT), e))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.threads {
        Some(t) => with_threads(t, || dispatch(&cli.command)),
        None => dispatch(&cli.command),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        // a closed pipe on stdout is a normal way for readers to stop
        Err(Error::Io { source, .. }) if source.kind() == io::ErrorKind::BrokenPipe => {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
