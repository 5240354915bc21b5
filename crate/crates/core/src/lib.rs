//! Tail-risk forecasting by forecast combination and weighted quantiles.
//!
//! VaR forecasts from a universe of volatility and quantile-regression models
//! are combined level by level over a grid of tail probabilities; the
//! combined quantiles are then Beta-weighted into an ES forecast fitted on
//! the AL joint score. Backtesting and simulation utilities are included.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod combiner;
pub mod config;
pub mod data;
pub mod dist;
pub mod error;
pub mod evaluation;
pub mod models;
pub mod optimizer;
pub mod panel;
pub mod pipeline;
pub mod scoring;
pub mod simulation;
pub mod wq_es;

pub use combiner::{combine, estimate_combination_weights, make_grid, monotonize, CombinationWeights, QuantileGrid};
pub use config::{load_config, parse_config};
pub use data::{load_prices, load_returns, rolling_windows, ReturnSeries, Window, WindowSpec};
pub use error::{FcwqError, Result};
pub use evaluation::{build_report, load_series_input, BacktestReport};
pub use models::{forecast_universe, ModelKind, UniverseSettings, UniverseState};
pub use optimizer::OptimizerSettings;
pub use panel::QuantilePanel;
pub use pipeline::{
    quantile_universe, run, run_from_panel, run_on_panel, write_run, ForecastRecord, PipelineConfig, RunOutput, Variant,
};
pub use scoring::{al_joint_score, quantile_loss, QuantileLevel, RiskForecast};
pub use simulation::{simulate, write_simulation_csv, Dgp, DgpKind, Simulation};
pub use wq_es::{beta_weights, es_from_weights, estimate_wq_params, simple_average_es, WqParams, WqWeights};
