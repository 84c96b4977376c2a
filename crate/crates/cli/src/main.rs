//! `fofreg` command-line front end.

mod commands;
mod config;
mod error;
mod heatmap;
mod ingest;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fofreg::draws::Method;

use crate::error::{invalid, CliResult};

#[derive(Parser)]
#[command(name = "fofreg", version, about = "Wavelet function-on-function regression and windows of susceptibility")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the wavelet function-on-function model and store posterior draws.
    FitFfr(FitArgs),
    /// Fit the distributed-lag baseline, one site at a time.
    FitDlm(FitArgs),
    /// BFDR and SimBaS inference on stored draws.
    Infer(InferArgs),
    /// Run a simulation scenario and store its metrics.
    Simulate(SimulateArgs),
    /// Render tables and heatmaps from stored metrics.
    Report(ReportArgs),
}

#[derive(Args)]
struct Common {
    /// JSON configuration file; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed (ignored by commands that draw no random numbers).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    y: Option<PathBuf>,
    #[arg(long)]
    x: Option<PathBuf>,
    #[arg(long)]
    w: Option<PathBuf>,
    #[arg(long)]
    w_kinds: Option<PathBuf>,
    /// Treat the outcome as proportions and convert to M-values.
    #[arg(long)]
    m_values: bool,
}

#[derive(Args)]
struct InferArgs {
    #[command(flatten)]
    common: Common,
    /// Draws manifest or the directory holding it.
    #[arg(long)]
    draws: Option<PathBuf>,
    /// Effect-size thresholds; pass the flag with no values for SimBaS only.
    #[arg(long, num_args = 0.., value_delimiter = ',')]
    delta: Option<Vec<f64>>,
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    replicates: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    common: Common,
    /// Metrics files or directories holding `metrics.json`.
    #[arg(long, num_args = 1..)]
    metrics: Vec<PathBuf>,
}

fn init_threads(cli: Option<usize>, config: Option<usize>) -> CliResult<()> {
    let Some(n) = cli.or(config) else { return Ok(()) };
    if n == 0 {
        return Err(invalid("--threads must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| invalid(format!("thread pool: {e}")))
}

fn fit(method: Method, args: FitArgs) -> CliResult<()> {
    let mut cfg = config::load_fit(args.common.config.as_deref())?;
    let overrides = [(&mut cfg.y, args.y), (&mut cfg.x, args.x), (&mut cfg.w, args.w), (&mut cfg.w_kinds, args.w_kinds)];
    for (slot, flag) in overrides {
        if flag.is_some() {
            *slot = flag;
        }
    }
    cfg.m_values |= args.m_values;
    if let Some(seed) = args.common.seed {
        cfg.mcmc.seed = seed;
    }
    if args.common.out.is_some() {
        cfg.out = args.common.out;
    }
    init_threads(args.common.threads, cfg.threads)?;
    let out = commands::fit(method, &cfg)?;
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn infer(args: InferArgs) -> CliResult<()> {
    let mut cfg = config::load_infer(args.common.config.as_deref())?;
    if args.draws.is_some() {
        cfg.draws = args.draws;
    }
    if let Some(d) = args.delta {
        cfg.deltas = d;
    }
    if let Some(a) = args.alpha {
        cfg.alpha = a;
    }
    if args.common.out.is_some() {
        cfg.out = args.common.out;
    }
    init_threads(args.common.threads, cfg.threads)?;
    let out = commands::infer(&cfg)?;
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn simulate(args: SimulateArgs) -> CliResult<()> {
    let path = args.common.config.as_deref().ok_or_else(|| invalid("simulate needs a scenario file (--config)"))?;
    if !path.exists() {
        return Err(invalid(format!("scenario file not found: {}", path.display())));
    }
    let mut scenario = config::load_scenario(path)?;
    if let Some(r) = args.replicates {
        scenario.replicates = r;
    }
    if let Some(seed) = args.common.seed {
        scenario.seed = seed;
        scenario.mcmc.seed = seed;
    }
    init_threads(args.common.threads, None)?;
    let (out, report) = commands::simulate(&scenario, &args.common.out)?;
    if let Some(r) = report.rmse_reduction {
        eprintln!("{}: RMSE reduction {:.1}%", report.scenario, 100.0 * r);
    }
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn report(args: ReportArgs) -> CliResult<()> {
    let mut cfg = config::load_report(args.common.config.as_deref())?;
    if !args.metrics.is_empty() {
        cfg.metrics = args.metrics;
    }
    if args.common.out.is_some() {
        cfg.out = args.common.out;
    }
    init_threads(args.common.threads, None)?;
    let out = report::report(&cfg)?;
    eprintln!("wrote {}", out.join("report.md").display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::FitFfr(a) => fit(Method::Ffr, a),
        Command::FitDlm(a) => fit(Method::Dlm, a),
        Command::Infer(a) => infer(a),
        Command::Simulate(a) => simulate(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
