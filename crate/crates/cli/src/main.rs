//! `regarch`: realized EGARCH tail-risk pipeline.

mod commands;
mod config;
mod output;
mod report;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use config::RunConfig;
use output::Outputs;
use std::path::PathBuf;
use std::process::ExitCode;

pub const OUTPUT_DIR_ENV: &str = "REGARCH_OUTPUT_DIR";

#[derive(Parser)]
#[command(name = "regarch", version, about = "Realized EGARCH VaR/ES estimation, forecasting and backtesting")]
struct Cli {
    /// TOML run configuration; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory; overrides $REGARCH_OUTPUT_DIR and the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the realized-measure panel from intraday and daily bars.
    Measures(MeasuresArgs),
    /// Simulate returns and realized measures from the model.
    Simulate(SimulateArgs),
    /// Bayesian estimation by adaptive MCMC.
    Estimate(EstimateArgs),
    /// Maximum-likelihood estimation.
    FitMl(FitMlArgs),
    /// Rolling one-step-ahead VaR/ES forecasts.
    Forecast(ForecastArgs),
    /// VaR and ES backtests and losses.
    Backtest(BacktestArgs),
    /// Model confidence set on the AL log score.
    Mcs(McsArgs),
    /// Summary tables from forecasts, backtests and MCS results.
    Report(ReportArgs),
}

#[derive(Args)]
pub struct DataArgs {
    /// CSV `date,return`.
    #[arg(long)]
    pub returns: Option<PathBuf>,
    /// CSV `date,open,high,low,close`; used for returns when --returns is absent.
    #[arg(long)]
    pub daily: Option<PathBuf>,
    /// Realized-measure panel CSV `date,<measure>...`.
    #[arg(long)]
    pub panel: Option<PathBuf>,
}

#[derive(Args)]
pub struct MeasuresArgs {
    #[arg(long)]
    pub intraday: Option<PathBuf>,
    #[arg(long)]
    pub daily: Option<PathBuf>,
    /// CSV `date,measure_name,value` of externally computed measures.
    #[arg(long)]
    pub precomputed: Option<PathBuf>,
    /// Intraday bar interval in minutes.
    #[arg(long)]
    pub interval: Option<u32>,
    /// Comma-separated measures, e.g. `rvss,rrss,rk`.
    #[arg(long)]
    pub measures: Option<String>,
    /// Add the squared overnight gap to unscaled measures.
    #[arg(long)]
    pub overnight: bool,
}

#[derive(Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub n: Option<usize>,
    /// Return error: `nn`, `tn` or `skn`.
    #[arg(long)]
    pub dist: Option<String>,
    /// Comma-separated labels of the simulated measures.
    #[arg(long)]
    pub measures: Option<String>,
    #[arg(long)]
    pub h0: Option<f64>,
}

#[derive(Args)]
pub struct McmcArgs {
    #[arg(long)]
    pub n_burn: Option<usize>,
    #[arg(long)]
    pub n_samp: Option<usize>,
    /// Parameter blocks: 1 or 4.
    #[arg(long)]
    pub blocks: Option<u8>,
    #[arg(long)]
    pub chains: Option<usize>,
    /// Initial log variance of the filter (default: log sample variance).
    #[arg(long, allow_hyphen_values = true)]
    pub log_h0: Option<f64>,
}

#[derive(Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Model id, e.g. `RE-RVSS-RK-SkN`.
    #[arg(long)]
    pub model: Option<String>,
    #[command(flatten)]
    pub mcmc: McmcArgs,
}

#[derive(Args)]
pub struct FitMlArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub max_evals: Option<usize>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub log_h0: Option<f64>,
}

#[derive(Args)]
pub struct ForecastArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Comma-separated model ids.
    #[arg(long)]
    pub models: Option<String>,
    #[arg(long)]
    pub in_sample: Option<usize>,
    #[arg(long)]
    pub n_forecasts: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
    /// Forecast with every k-th posterior draw.
    #[arg(long)]
    pub thin: Option<usize>,
    /// Comma-separated VaR levels.
    #[arg(long)]
    pub alphas: Option<String>,
    #[command(flatten)]
    pub mcmc: McmcArgs,
}

#[derive(Args)]
pub struct BacktestArgs {
    #[arg(long)]
    pub forecasts: Option<PathBuf>,
    /// VaR grid CSV for the multi-quantile ES test.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub skip_es_tests: bool,
}

#[derive(Args)]
pub struct McsArgs {
    #[arg(long)]
    pub forecasts: Option<PathBuf>,
    /// Comma-separated methods: `R`, `SQ`.
    #[arg(long)]
    pub methods: Option<String>,
    /// Comma-separated confidence levels.
    #[arg(long)]
    pub levels: Option<String>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub block: Option<usize>,
}

#[derive(Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub forecasts: Option<PathBuf>,
    #[arg(long)]
    pub backtest: Option<PathBuf>,
    #[arg(long)]
    pub mcs: Option<PathBuf>,
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Measures(_) => "measures",
        Command::Simulate(_) => "simulate",
        Command::Estimate(_) => "estimate",
        Command::FitMl(_) => "fit-ml",
        Command::Forecast(_) => "forecast",
        Command::Backtest(_) => "backtest",
        Command::Mcs(_) => "mcs",
        Command::Report(_) => "report",
    }
}

fn output_dir(cli: &Cli, cfg: &RunConfig) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("regarch-out"))
}

fn run(cli: Cli, outputs: &mut Option<Outputs>) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    }
    let out = outputs.insert(Outputs::new(output_dir(&cli, &cfg)));
    match cli.cmd {
        Command::Measures(a) => commands::measures(a, cfg, out),
        Command::Simulate(a) => commands::simulate(a, cfg, out),
        Command::Estimate(a) => commands::estimate(a, cfg, out),
        Command::FitMl(a) => commands::fit_ml(a, cfg, out),
        Command::Forecast(a) => commands::forecast(a, cfg, out),
        Command::Backtest(a) => commands::backtest(a, cfg, out),
        Command::Mcs(a) => commands::mcs(a, cfg, out),
        Command::Report(a) => report::report(a, cfg, out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let name = command_name(&cli.cmd);
    let mut outputs = None;
    match run(cli, &mut outputs) {
        Ok(()) => {
            if let Some(o) = &outputs {
                for f in o.written() {
                    println!("{}", f.display());
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            if let Some(o) = outputs.as_mut() {
                o.remove_all();
            }
            let causes: Vec<String> = e.chain().skip(1).map(|c| c.to_string()).collect();
            let msg = serde_json::json!({
                "status": "error",
                "command": name,
                "message": e.to_string(),
                "causes": causes,
            });
            eprintln!("{msg}");
            ExitCode::FAILURE
        }
    }
}
