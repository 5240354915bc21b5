use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use fcwq_core::evaluation::write_loss_series_csv;
use fcwq_core::{
    build_report, load_config, load_prices, load_returns, load_series_input, run, run_from_panel, simulate,
    write_run, write_simulation_csv, Dgp, DgpKind, PipelineConfig, QuantileLevel, QuantilePanel, ReturnSeries,
};

#[derive(Parser)]
#[command(name = "fcwq", version, about = "VaR/ES forecasting by forecast combination and weighted quantiles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rolling-window forecasts for one return series.
    Run {
        /// TOML configuration; defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// CSV with a date column and a price (or return) column.
        #[arg(long)]
        input: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// The input column already holds percentage log returns.
        #[arg(long)]
        returns: bool,
        /// Value column (default: "price", or "return" with --returns).
        #[arg(long)]
        column: Option<String>,
        /// Reuse a saved quantile panel instead of refitting the universe.
        #[arg(long)]
        panel: Option<PathBuf>,
        /// Overrides optimizer.seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Backtest report for one or more forecast files.
    Evaluate {
        /// forecasts.csv from `run`; repeat for several series.
        #[arg(long, required = true)]
        forecasts: Vec<PathBuf>,
        /// Return CSV per forecasts file, or a single file shared by all.
        #[arg(long, required = true)]
        returns: Vec<PathBuf>,
        /// Series names (default: parent directory of each forecasts file).
        #[arg(long)]
        name: Vec<String>,
        /// Return column in the returns files.
        #[arg(long, default_value = "return")]
        column: String,
        /// The returns files hold prices.
        #[arg(long)]
        prices: bool,
        #[arg(long, default_value_t = 0.025)]
        alpha: f64,
        /// JSON report path.
        #[arg(long)]
        out: PathBuf,
        /// Per-time loss CSV (default: `<out stem>_losses.csv`).
        #[arg(long)]
        losses: Option<PathBuf>,
    },
    /// Simulated returns with the true conditional VaR and ES.
    Simulate {
        /// gjr-t, egarch-t or iid-t.
        #[arg(long, default_value = "gjr-t")]
        dgp: String,
        #[arg(long, default_value_t = 3000)]
        t: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Levels for the truth columns.
        #[arg(long, value_delimiter = ',', default_values_t = [0.005, 0.015, 0.025])]
        levels: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Run { config, input, out, returns, column, panel, seed } => {
            cmd_run(config, &input, &out, returns, column, panel, seed)
        }
        Command::Evaluate { forecasts, returns, name, column, prices, alpha, out, losses } => {
            cmd_evaluate(&forecasts, &returns, &name, &column, prices, alpha, &out, losses)
        }
        Command::Simulate { dgp, t, seed, levels, out } => cmd_simulate(&dgp, t, seed, &levels, &out),
    }
}

fn load_series(path: &Path, column: &str, prices: bool) -> Result<ReturnSeries> {
    let series = if prices { load_prices(path, column) } else { load_returns(path, column) };
    series.with_context(|| format!("reading {}", path.display()))
}

fn cmd_run(
    config: Option<PathBuf>,
    input: &Path,
    out: &Path,
    returns: bool,
    column: Option<String>,
    panel: Option<PathBuf>,
    seed: Option<u64>,
) -> Result<()> {
    let mut cfg = match &config {
        Some(p) => load_config(p).with_context(|| format!("reading config {}", p.display()))?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = seed {
        cfg.optimizer.seed = s;
    }
    cfg.validate()?;
    let column = column.unwrap_or_else(|| if returns { "return" } else { "price" }.to_string());
    let series = load_series(input, &column, !returns)?;
    log::info!("{} returns from {} to {}", series.len(), series.dates()[0], series.dates()[series.len() - 1]);

    let output = match panel {
        Some(p) => {
            let panel = QuantilePanel::read_csv(&p).with_context(|| format!("reading panel {}", p.display()))?;
            run_from_panel(panel, &series, &cfg)?
        }
        None => run(&cfg, &series)?,
    };
    write_run(out, &output)?;
    std::fs::write(out.join("config.toml"), fcwq_core::config::to_toml(&cfg)?)?;

    let n_diag = output.universe.diagnostics.len() + output.pipeline.diagnostics.len();
    println!("wrote {} forecast origins to {} ({n_diag} diagnostics)", output.universe.panel.t() - output.universe.panel.in_sample_n(), out.display());
    for v in &cfg.pipeline.variants {
        if let Some(last) = output.pipeline.variant(*v).last() {
            println!("{v}: last VaR {:.4}, ES {:.4} for {}", last.var_forecast, last.es_forecast, last.date);
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_evaluate(
    forecasts: &[PathBuf],
    returns: &[PathBuf],
    names: &[String],
    column: &str,
    prices: bool,
    alpha: f64,
    out: &Path,
    losses: Option<PathBuf>,
) -> Result<()> {
    if returns.len() != 1 && returns.len() != forecasts.len() {
        bail!("give one --returns file or one per --forecasts file");
    }
    if !names.is_empty() && names.len() != forecasts.len() {
        bail!("give one --name per --forecasts file");
    }
    let mut inputs = Vec::with_capacity(forecasts.len());
    for (k, f) in forecasts.iter().enumerate() {
        let series = load_series(&returns[k.min(returns.len() - 1)], column, prices)?;
        let name = names.get(k).cloned().unwrap_or_else(|| default_name(f, k));
        inputs.push(load_series_input(&name, f, &series).with_context(|| format!("reading {}", f.display()))?);
    }
    let report = build_report(&inputs, QuantileLevel::new(alpha)?)?;
    std::fs::write(out, serde_json::to_string_pretty(&report)?).with_context(|| format!("writing {}", out.display()))?;
    let losses = losses.unwrap_or_else(|| {
        let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
        out.with_file_name(format!("{stem}_losses.csv"))
    });
    write_loss_series_csv(&losses, &report)?;

    println!("{:<22} {:>8} {:>12} {:>12}", "model", "MAD", "avg QL", "avg joint");
    for row in &report.summary {
        let joint = row.avg_joint_loss.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into());
        println!("{:<22} {:>8.4} {:>12.3} {:>12}", row.model, row.mad, row.avg_quantile_loss, joint);
    }
    println!("report: {}, losses: {}", out.display(), losses.display());
    Ok(())
}

fn default_name(path: &Path, k: usize) -> String {
    path.parent()
        .and_then(|p| p.file_name())
        .and_then(|s| s.to_str())
        .map(str::to_string)
        .unwrap_or_else(|| format!("series{}", k + 1))
}

fn cmd_simulate(dgp: &str, t: usize, seed: u64, levels: &[f64], out: &Path) -> Result<()> {
    let kind: DgpKind = dgp.parse()?;
    for l in levels {
        QuantileLevel::new(*l)?;
    }
    let sim = simulate(&Dgp::new(kind, t, seed), levels)?;
    write_simulation_csv(out, &sim)?;
    println!("wrote {t} {kind} returns (seed {seed}) to {}", out.display());
    Ok(())
}
