//! Command-line front end: `run` one spec, `sweep` a grid over one axis,
//! `plot` summary CSVs to SVG, `selftest` the invariant suites.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime failure.

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use tldp::config::ConfigFile;
use tldp::env::ScenarioId;
use tldp::harness::{
    self, selftest, ExperimentSpec, PolicyKind, RunResult, SweepAxis,
};
use tldp::plot;

#[derive(Parser)]
#[command(
    name = "tldp",
    about = "Transfer-learning contextual dynamic pricing experiments",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one experiment spec and write summary/curve CSVs.
    Run(RunArgs),
    /// Run a grid over one axis and write a combined summary CSV.
    Sweep(SweepArgs),
    /// Render a summary CSV as an SVG line chart.
    Plot(PlotArgs),
    /// Run the invariant self-test suite.
    Selftest(SelftestArgs),
}

#[derive(Args, Clone)]
struct SpecArgs {
    /// Flat `key = value` config file; flags override file values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scenario: s1c1, s1c2, s2c1 or s2c2.
    #[arg(long)]
    scenario: Option<String>,
    /// Policy: tldp or target_only.
    #[arg(long)]
    policy: Option<String>,
    /// Target horizon.
    #[arg(long = "n-q")]
    n_q: Option<u64>,
    /// Source dataset size (default: 2 * n_Q for tldp, ignored by target_only).
    #[arg(long = "n-p")]
    n_p: Option<u64>,
    /// Transfer exponent of the source covariate law.
    #[arg(long)]
    gamma: Option<f64>,
    /// Exploration coefficient of the source price density.
    #[arg(long)]
    kappa: Option<f64>,
    /// Index constant.
    #[arg(long = "c-i")]
    c_index: Option<f64>,
    /// Exploration radius constant.
    #[arg(long = "c-r")]
    c_radius: Option<f64>,
    /// Overrides the computed smallest exploration radius.
    #[arg(long = "min-radius")]
    min_radius: Option<f64>,
    /// Replications per spec.
    #[arg(long)]
    reps: Option<u32>,
    /// Base seed; replication i uses base_seed + i.
    #[arg(long)]
    seed: Option<u64>,
    /// Output base path (suffixes .summary.csv / .curve.csv are appended).
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    spec: SpecArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    spec: SpecArgs,
    /// Axis to sweep: n-p, n-q, gamma, kappa, c-i or c-r.
    #[arg(long)]
    axis: Option<String>,
    /// Grid values (comma separated); defaults to the stock grid of the axis.
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<f64>>,
}

#[derive(Args)]
struct PlotArgs {
    /// Summary CSV files to plot (series are grouped by scenario and policy).
    #[arg(long, num_args = 1.., required = true)]
    input: Vec<PathBuf>,
    /// Axis column for the x axis: n-p, n-q, gamma, kappa, c-i or c-r.
    #[arg(long)]
    axis: String,
    /// Output SVG path.
    #[arg(long)]
    out: PathBuf,
    /// Chart title.
    #[arg(long)]
    title: Option<String>,
}

#[derive(Args)]
struct SelftestArgs {
    /// Seeded episodes per (scenario, source-size) combination.
    #[arg(long, default_value_t = 50)]
    episodes: u32,
    /// Horizon of each instrumented episode.
    #[arg(long = "n-q", default_value_t = 2000)]
    n_q: u64,
    /// Source size of the transfer variant.
    #[arg(long = "n-p", default_value_t = 4000)]
    n_p: u64,
}

enum AppError {
    Usage(String),
    Runtime(String),
}

impl<E: std::error::Error> From<E> for AppError {
    fn from(e: E) -> Self {
        AppError::Runtime(format!("{e}"))
    }
}

fn usage(msg: impl Into<String>) -> AppError {
    AppError::Usage(msg.into())
}

/// Resolved spec plus the output base and whether n_p was given explicitly.
struct ResolvedSpec {
    spec: ExperimentSpec,
    out: String,
    n_p_pinned: bool,
}

fn resolve_spec(args: &SpecArgs, default_out: &str) -> Result<ResolvedSpec, AppError> {
    let file = match &args.config {
        Some(path) => ConfigFile::load(path).map_err(|e| usage(e.to_string()))?,
        None => ConfigFile::empty(),
    };
    let bad = |e: tldp::config::ConfigError| usage(e.to_string());

    let scenario: ScenarioId = args
        .scenario
        .as_deref()
        .or_else(|| file.get_str("scenario"))
        .unwrap_or("s1c1")
        .parse()
        .map_err(usage)?;
    let policy: PolicyKind = args
        .policy
        .as_deref()
        .or_else(|| file.get_str("policy"))
        .unwrap_or("tldp")
        .parse()
        .map_err(usage)?;
    let n_q = match args.n_q.or(file.get_u64("n_q").map_err(bad)?) {
        Some(v) => v,
        None => 10_000,
    };
    let file_n_p = file.get_u64("n_p").map_err(bad)?;
    let n_p_pinned = args.n_p.is_some() || file_n_p.is_some();
    let n_p = args.n_p.or(file_n_p).unwrap_or(2 * n_q);
    let spec = ExperimentSpec {
        scenario,
        policy,
        n_q,
        n_p,
        gamma: args.gamma.or(file.get_f64("gamma").map_err(bad)?).unwrap_or(1.0),
        kappa: args.kappa.or(file.get_f64("kappa").map_err(bad)?).unwrap_or(0.6),
        c_index: args
            .c_index
            .or(file.get_f64("c_i").map_err(bad)?)
            .unwrap_or(1.0),
        c_radius: args
            .c_radius
            .or(file.get_f64("c_r").map_err(bad)?)
            .unwrap_or(0.25),
        min_radius_override: args
            .min_radius
            .or(file.get_f64("min_radius").map_err(bad)?),
        replications: args.reps.or(file.get_u32("reps").map_err(bad)?).unwrap_or(20),
        base_seed: args.seed.or(file.get_u64("seed").map_err(bad)?).unwrap_or(0),
    };
    spec.validate().map_err(|e| usage(e.to_string()))?;
    let out = args
        .out
        .clone()
        .or_else(|| file.get_str("out").map(String::from))
        .unwrap_or_else(|| default_out.to_string());
    Ok(ResolvedSpec {
        spec,
        out,
        n_p_pinned,
    })
}

fn print_result(result: &RunResult) {
    println!(
        "{}: mean regret {:.3} (sd {:.3}) over {} replications",
        result.spec.config_id(),
        result.mean_regret,
        result.sd_regret,
        result.spec.replications
    );
}

fn cmd_run(args: &RunArgs) -> Result<(), AppError> {
    let resolved = resolve_spec(&args.spec, "tldp_run")?;
    let result = harness::run_experiment(&resolved.spec)?;
    print_result(&result);
    harness::write_csv(&result, &resolved.out)?;
    println!(
        "wrote {0}.summary.csv and {0}.curve.csv",
        resolved.out
    );
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), AppError> {
    let resolved = resolve_spec(&args.spec, "tldp_sweep")?;
    let file = match &args.spec.config {
        Some(path) => ConfigFile::load(path).map_err(|e| usage(e.to_string()))?,
        None => ConfigFile::empty(),
    };
    let axis_str = args
        .axis
        .clone()
        .or_else(|| file.get_str("axis").map(String::from))
        .ok_or_else(|| usage("sweep needs --axis (n-p, n-q, gamma, kappa, c-i or c-r)"))?;
    let axis = SweepAxis::from_str(&axis_str).map_err(usage)?;
    let values = match &args.values {
        Some(v) => v.clone(),
        None => file
            .get_f64_list("values")
            .map_err(|e| usage(e.to_string()))?
            .unwrap_or_else(|| axis.default_grid()),
    };
    if values.is_empty() {
        return Err(usage("sweep needs at least one grid value"));
    }
    if matches!(axis, SweepAxis::SourceSize | SweepAxis::TargetHorizon)
        && values.iter().any(|v| *v < 0.0 || v.fract() != 0.0)
    {
        return Err(usage(format!(
            "axis {axis} takes nonnegative integer values, got {values:?}"
        )));
    }

    let results = harness::run_sweep(&resolved.spec, axis, &values, resolved.n_p_pinned)?;
    for r in &results {
        print_result(r);
    }
    let path = format!("{}.summary.csv", resolved.out);
    harness::write_summary_csv(&results, path.as_ref())?;
    println!("wrote {path} ({} rows)", results.len());
    Ok(())
}

fn cmd_plot(args: &PlotArgs) -> Result<(), AppError> {
    let mut rows = Vec::new();
    for path in &args.input {
        rows.extend(plot::read_summary_csv(path)?);
    }
    let title = args
        .title
        .clone()
        .unwrap_or_else(|| format!("mean cumulative regret vs {}", args.axis));
    let svg = match plot::render_summary_svg(&rows, &args.axis, &title) {
        Err(plot::PlotError::UnknownAxis(a)) => return Err(usage(format!("unknown axis '{a}'"))),
        other => other?,
    };
    plot::write_svg(&args.out, &svg)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_selftest(args: &SelftestArgs) -> Result<(), AppError> {
    let opts = selftest::SelfTestOptions {
        episodes: args.episodes,
        n_q: args.n_q,
        n_p: args.n_p,
        ..Default::default()
    };
    let started = std::time::Instant::now();
    let report = selftest::run_invariant_suite(&opts);
    print!("{}", report.render());
    println!("selftest: elapsed                 {:.1?}", started.elapsed());
    if report.all_passed() {
        Ok(())
    } else {
        Err(AppError::Runtime("invariant suite failed".into()))
    }
}

fn dispatch(cli: Cli) -> Result<(), AppError> {
    match cli.cmd {
        Cmd::Run(args) => cmd_run(&args),
        Cmd::Sweep(args) => cmd_sweep(&args),
        Cmd::Plot(args) => cmd_plot(&args),
        Cmd::Selftest(args) => cmd_selftest(&args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(AppError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(1)
        }
        Err(AppError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
