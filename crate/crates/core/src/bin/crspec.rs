use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use crspec_core::harness::{self, emit, log_grid, verify, Format, Scenario, ScenarioConfig};

#[derive(Parser)]
#[command(name = "crspec", version, about = "Transmit spectra for a secondary MIMO link under interference caps")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a Monte-Carlo scenario and write a result table.
    Run(RunArgs),
    /// Run the acceptance checks; exits with 2 if any fails.
    Verify {
        /// Monte-Carlo draws for the curve-shape checks.
        #[arg(long, default_value_t = 200)]
        trials: usize,
    },
}

#[derive(Args)]
struct RunArgs {
    /// fig2 | fig3 | fig4 | fig5 | fig6 | custom (long names such as fig3-svd also work).
    #[arg(long)]
    scenario: Option<Scenario>,
    /// JSON file with any ScenarioConfig fields; command-line flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    format: Format,
    #[arg(long)]
    pt_min: Option<f64>,
    #[arg(long)]
    pt_max: Option<f64>,
    #[arg(long)]
    pt_points: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    mts: Option<usize>,
    #[arg(long)]
    mrs: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
}

fn build_config(a: &RunArgs) -> crspec_core::Result<ScenarioConfig> {
    let mut cfg = match &a.config {
        Some(path) => {
            let mut c = ScenarioConfig::from_json(&std::fs::read_to_string(path)?)?;
            c.scenario = a.scenario.unwrap_or(c.scenario);
            c
        }
        None => ScenarioConfig::preset(a.scenario.unwrap_or(Scenario::Custom)),
    };
    if a.pt_min.is_some() || a.pt_max.is_some() || a.pt_points.is_some() {
        let lo = a.pt_min.unwrap_or(cfg.pt_grid[0]);
        let hi = a.pt_max.unwrap_or(*cfg.pt_grid.last().unwrap_or(&lo));
        cfg.pt_grid = log_grid(lo, hi, a.pt_points.unwrap_or(cfg.pt_grid.len().max(2)));
    }
    cfg.trials = a.trials.unwrap_or(cfg.trials);
    cfg.seed = a.seed.unwrap_or(cfg.seed);
    cfg.gamma = a.gamma.unwrap_or(cfg.gamma);
    cfg.mts = a.mts.unwrap_or(cfg.mts);
    cfg.mrs = a.mrs.unwrap_or(cfg.mrs);
    cfg.k = a.k.unwrap_or(cfg.k);
    cfg.validate()?;
    Ok(cfg)
}

fn run(a: &RunArgs) -> crspec_core::Result<()> {
    let cfg = build_config(a)?;
    let report = harness::run_scenario(&cfg)?;
    for w in &report.warnings {
        log::warn!("{w}");
    }
    match &a.out {
        Some(path) => emit::emit(&report.rows, a.format, path)?,
        None => {
            let out = io::stdout().lock();
            match a.format {
                Format::Csv => emit::write_csv(&report.rows, out)?,
                Format::Json => emit::write_json(&report.rows, out)?,
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().cmd {
        Cmd::Run(a) => match run(&a) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("crspec: {e}");
                ExitCode::from(1)
            }
        },
        Cmd::Verify { trials } => {
            let outcomes = verify::run_all(trials);
            let mut out = io::stdout().lock();
            for o in &outcomes {
                let _ = writeln!(out, "{o}");
            }
            let failed = outcomes.iter().filter(|o| !o.passed).count();
            let _ = writeln!(out, "{} of {} criteria passed", outcomes.len() - failed, outcomes.len());
            if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(2) }
        }
    }
}
