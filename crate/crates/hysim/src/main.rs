use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hysim::{ExperimentConfig, HarnessError, RunPlan, Sweep};

#[derive(Parser)]
#[command(name = "hysim", version, about = "Diffusion in randomly switching environments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Run an experiment and write its artifacts.
    Run(RunArgs),
    /// Check a config file and print the resolved settings.
    Validate {
        config: PathBuf,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    /// Experiment config (JSON).
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; enables the Monte Carlo route.
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo paths.
    #[arg(long)]
    paths: Option<usize>,
    /// Interior grid nodes per axis.
    #[arg(long)]
    n: Option<usize>,
    /// neural, insect, thermostat, interface, gated or custom.
    #[arg(long)]
    experiment: Option<String>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    /// Skip the Monte Carlo route.
    #[arg(long, conflicts_with = "no_bvp")]
    no_mc: bool,
    /// Skip the deterministic route.
    #[arg(long)]
    no_bvp: bool,
    /// Do not write SVG plots.
    #[arg(long)]
    no_plots: bool,
    /// Parameter sweep, `name=from..to[:points[:geometric|arithmetic]]`.
    #[arg(long)]
    sweep: Option<Sweep>,
    /// Open fraction(s) for the insect sweep, comma separated.
    #[arg(long, value_delimiter = ',')]
    rho: Option<Vec<f64>>,
}

fn plan_from(args: RunArgs) -> Result<RunPlan, HarnessError> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::from_path(path)?,
        None => ExperimentConfig::default(),
    };
    macro_rules! set {
        ($($field:ident),*) => {$(if args.$field.is_some() { cfg.$field = args.$field; })*};
    }
    set!(out, seed, paths, n, experiment, dt, horizon, sweep, rho);
    if args.no_mc {
        cfg.run_mc = Some(false);
        cfg.run_xval = Some(false);
    }
    if args.no_bvp {
        cfg.run_bvp = Some(false);
        cfg.run_xval = Some(false);
    }
    if args.no_plots {
        cfg.plots = Some(false);
    }
    RunPlan::resolve(cfg)
}

fn execute(cli: Cli) -> Result<bool, HarnessError> {
    match cli.command {
        Command::Validate { config } => {
            let plan = hysim::validate(&config)?;
            println!("{}", serde_json::to_string_pretty(&plan)?);
            Ok(true)
        }
        Command::Run(args) => {
            let plan = plan_from(args)?;
            let report = hysim::run(&plan)?;
            for c in &report.checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if let Some(x) = &report.xval {
                let worst = x.rows.iter().map(|r| r.z.abs()).fold(0.0, f64::max);
                println!(
                    "{} cross-validation: {} probes, max |z| = {worst:.2}",
                    if x.verdict { "PASS" } else { "FAIL" },
                    x.rows.len()
                );
                for r in x.failures() {
                    println!("  {} {}: bvp {} mc {} se {} z {:.2}", r.statistic, r.probe, r.bvp, r.mc, r.std_error, r.z);
                }
            }
            println!("verdict: {} ({})", if report.verdict { "pass" } else { "fail" }, plan.out.display());
            Ok(report.verdict)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("hysim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
