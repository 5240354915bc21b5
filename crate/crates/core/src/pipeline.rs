//! Rolling two-step forecasting: build the quantile universe window by
//! window, then at every origin re-estimate the combination weights and the
//! WQ parameters and emit the one-step VaR/ES forecasts.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combiner::{
    combine_with, estimate_combination_weights, make_grid, monotonize, CombinationWeights, QuantileGrid,
};
use crate::data::{window_at, ReturnSeries, WindowSpec};
use crate::error::{FcwqError, Result};
use crate::models::care::CareSettings;
use crate::models::caviar::CaviarSettings;
use crate::models::tail::DEFAULT_THRESHOLD_FRAC;
use crate::models::{forecast_universe, BenchmarkForecast, ModelKind, UniverseSettings, UniverseState};
use crate::optimizer::{derive_seed, OptimizerSettings};
use crate::panel::{CellFlag, QuantilePanel};
use crate::scoring::QuantileLevel;
use crate::wq_es::{estimate_wq_params, simple_average_es, WqFit, DEFAULT_WQ_STARTS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Variant {
    FcWq,
    FcSa,
    WqSingle,
    SaSingle,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::FcWq, Variant::FcSa, Variant::WqSingle, Variant::SaSingle];

    pub fn name(self) -> &'static str {
        match self {
            Variant::FcWq => "FC-WQ",
            Variant::FcSa => "FC-SA",
            Variant::WqSingle => "WQ-single",
            Variant::SaSingle => "SA-single",
        }
    }

    fn single(self) -> bool {
        matches!(self, Variant::WqSingle | Variant::SaSingle)
    }

    fn weighted(self) -> bool {
        matches!(self, Variant::FcWq | Variant::WqSingle)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = FcwqError;
    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .iter()
            .copied()
            .find(|v| v.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| FcwqError::Config(format!("unknown variant '{s}'")))
    }
}

impl TryFrom<String> for Variant {
    type Error = FcwqError;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Variant> for String {
    fn from(v: Variant) -> String {
        v.name().to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub alpha: f64,
    pub alpha1: f64,
    pub m: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { alpha: QuantileLevel::TARGET.value(), alpha1: 0.005, m: 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    pub in_sample_n: usize,
    /// Out-of-sample length; all remaining observations when absent.
    pub out_sample_h: Option<usize>,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self { in_sample_n: 1000, out_sample_h: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UniverseConfig {
    pub models: Vec<ModelKind>,
    pub es_benchmarks: bool,
}

impl Default for UniverseConfig {
    fn default() -> Self {
        Self { models: ModelKind::ALL.to_vec(), es_benchmarks: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PotConfig {
    pub threshold_frac: f64,
}

impl Default for PotConfig {
    fn default() -> Self {
        Self { threshold_frac: DEFAULT_THRESHOLD_FRAC }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub variants: Vec<Variant>,
    /// Re-estimate step-1 and step-2 parameters every `k` origins.
    pub reestimate_every: usize,
    /// Random starts for the step-2 fit on a cold start.
    pub wq_starts: usize,
}

impl Default for PipelineSection {
    fn default() -> Self {
        Self {
            variants: vec![Variant::FcWq, Variant::FcSa],
            reestimate_every: 1,
            wq_starts: DEFAULT_WQ_STARTS,
        }
    }
}

/// Full run configuration; mirrors the TOML file layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub grid: GridConfig,
    pub window: WindowConfig,
    pub universe: UniverseConfig,
    pub pot: PotConfig,
    pub care: CareSettings,
    pub caviar: CaviarSettings,
    pub optimizer: OptimizerSettings,
    pub pipeline: PipelineSection,
}

impl PipelineConfig {
    pub fn quantile_grid(&self) -> Result<QuantileGrid> {
        make_grid(QuantileLevel::new(self.grid.alpha)?, self.grid.alpha1, self.grid.m)
    }

    pub fn universe_settings(&self) -> UniverseSettings {
        UniverseSettings {
            models: self.universe.models.clone(),
            pot_threshold_frac: self.pot.threshold_frac,
            caviar: self.caviar,
            care: self.care,
            es_benchmarks: self.universe.es_benchmarks,
        }
    }

    pub fn window_spec(&self, series_len: usize) -> Result<WindowSpec> {
        let n = self.window.in_sample_n;
        let spec = match self.window.out_sample_h {
            Some(h) => WindowSpec::new(n, h)?,
            None => WindowSpec::for_series(n, series_len)?,
        };
        spec.validate(series_len)?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.quantile_grid()?;
        self.universe_settings().validate()?;
        if self.pipeline.variants.is_empty() {
            return Err(FcwqError::Config("pipeline.variants is empty".into()));
        }
        if self.pipeline.reestimate_every == 0 {
            return Err(FcwqError::Config("pipeline.reestimate_every must be at least 1".into()));
        }
        if self.pipeline.variants.iter().any(|v| v.single()) && self.universe.models.len() != 1 {
            return Err(FcwqError::Config(
                "single-model variants need exactly one model in universe.models".into(),
            ));
        }
        Ok(())
    }
}

/// A non-fatal event recorded during a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub date: NaiveDate,
    /// 1-based forecast origin.
    pub origin: usize,
    pub stage: String,
    pub subject: String,
    pub message: String,
}

/// Universe output over the whole sample.
#[derive(Debug, Clone, PartialEq)]
pub struct UniverseRun {
    pub panel: QuantilePanel,
    /// Target-level ES forecast per origin and model, where defined.
    pub model_es: Vec<Vec<Option<f64>>>,
    pub benchmarks: Vec<Vec<BenchmarkForecast>>,
    pub diagnostics: Vec<Diagnostic>,
}

/// Builds the `T x M x n_mod` quantile universe: window 1's in-sample
/// estimates fill rows `1..=N`; window `h`'s forecast fills row `N + h`.
pub fn quantile_universe(series: &ReturnSeries, config: &PipelineConfig) -> Result<UniverseRun> {
    config.validate()?;
    let grid = config.quantile_grid()?;
    let spec = config.window_spec(series.len())?;
    let settings = config.universe_settings();
    let (n, h_total, m) = (spec.in_sample_n, spec.out_sample_h, grid.m());
    let t_total = n + h_total;
    let mut panel = QuantilePanel::new(
        series.dates()[..t_total].to_vec(),
        grid.values(),
        settings.models.clone(),
        n,
    );
    let mut state = UniverseState::new();
    let mut model_es = Vec::with_capacity(h_total);
    let mut benchmarks = Vec::with_capacity(h_total);
    let mut diagnostics = Vec::new();

    for h in 1..=h_total {
        let w = window_at(series, n, h);
        let out = forecast_universe(w.returns, grid.levels(), &settings, &config.optimizer, h as u64, &mut state, h == 1)
            .map_err(|e| FcwqError::Pipeline { origin: h, stage: "universe", source: Box::new(e) })?;
        let row = n + h - 1;
        let date = series.dates()[row];
        for (i, f) in out.models.iter().enumerate() {
            if h == 1 {
                let paths = f.insample.as_ref().expect("paths requested on the first window");
                for (j, path) in paths.iter().enumerate() {
                    for (t, v) in path.iter().enumerate() {
                        panel.set(t, j, i, *v);
                    }
                }
            }
            for j in 0..m {
                panel.set(row, j, i, f.var[j]);
            }
            if let Some(msg) = &f.flag {
                panel.set_flag(row, i, CellFlag::Carried);
                diagnostics.push(Diagnostic {
                    date,
                    origin: h,
                    stage: "universe".into(),
                    subject: f.model.name().into(),
                    message: msg.clone(),
                });
            }
        }
        for b in &out.benchmarks {
            if let Some(msg) = &b.flag {
                diagnostics.push(Diagnostic {
                    date,
                    origin: h,
                    stage: "benchmark".into(),
                    subject: b.name.clone(),
                    message: msg.clone(),
                });
            }
        }
        model_es.push(out.models.iter().map(|f| f.es.as_ref().map(|e| e[m - 1])).collect());
        benchmarks.push(out.benchmarks);
        if h % 50 == 0 {
            log::info!("universe: {h}/{h_total} windows");
        }
    }
    Ok(UniverseRun { panel, model_es, benchmarks, diagnostics })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    pub date: NaiveDate,
    /// 1-based forecast origin `h`; the record forecasts observation `N + h`.
    pub origin: usize,
    pub variant: Variant,
    pub var_forecast: f64,
    pub es_forecast: f64,
    /// Monotonized combined quantiles across the grid.
    pub combined: Vec<f64>,
    pub wq: Option<WqFit>,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OriginWeights {
    pub date: NaiveDate,
    pub origin: usize,
    /// Whether the combination is the regression (`true`) or the identity.
    pub regression: bool,
    pub combination: Vec<CombinationWeights>,
    pub wq: Option<WqFit>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PipelineOutput {
    pub records: Vec<ForecastRecord>,
    pub weights: Vec<OriginWeights>,
    pub diagnostics: Vec<Diagnostic>,
}

impl PipelineOutput {
    pub fn variant(&self, v: Variant) -> Vec<&ForecastRecord> {
        self.records.iter().filter(|r| r.variant == v).collect()
    }
}

/// State of one combination stream (regression or identity) across origins.
struct Stream {
    regression: bool,
    variants: Vec<Variant>,
    weights: Option<Vec<CombinationWeights>>,
    wq: Option<WqFit>,
}

/// Re-estimation at origin `o` (0-based) happens when `o % k == 0`.
pub fn reestimate_every(o: usize, k: usize) -> bool {
    o % k.max(1) == 0
}

/// Runs both estimation steps over a prebuilt panel. `returns` must align
/// with the panel rows.
pub fn run_on_panel(panel: &QuantilePanel, returns: &[f64], config: &PipelineConfig) -> Result<PipelineOutput> {
    config.pipeline.variants.iter().try_for_each(|v| {
        if v.single() && panel.n_models() != 1 {
            Err(FcwqError::Config(format!("{v} needs a one-model panel, got {} models", panel.n_models())))
        } else {
            Ok(())
        }
    })?;
    if returns.len() != panel.t() {
        return Err(FcwqError::DimensionMismatch { expected: panel.t(), got: returns.len() });
    }
    if panel.t() == panel.in_sample_n() {
        return Ok(PipelineOutput::default());
    }
    if !panel.is_complete() {
        return Err(FcwqError::InvalidInput("panel has missing cells".into()));
    }
    let grid_levels: Vec<QuantileLevel> =
        panel.levels().iter().map(|a| QuantileLevel::new(*a)).collect::<Result<_>>()?;
    let target = *grid_levels.last().ok_or_else(|| FcwqError::InvalidInput("panel has no levels".into()))?;
    let (n, m, n_mod) = (panel.in_sample_n(), panel.m(), panel.n_models());
    let h_total = panel.t() - n;
    let opt = &config.optimizer;
    let k = config.pipeline.reestimate_every;

    let mut streams: Vec<Stream> = Vec::new();
    for regression in [true, false] {
        let variants: Vec<Variant> = config
            .pipeline
            .variants
            .iter()
            .copied()
            .filter(|v| v.single() != regression)
            .collect();
        if !variants.is_empty() {
            streams.push(Stream { regression, variants, weights: None, wq: None });
        }
    }

    let mut out = PipelineOutput::default();
    for o in 0..h_total {
        let origin = o + 1;
        let (start, end, target_row) = (o, o + n, n + o);
        let date = panel.dates()[target_row];
        let refit = reestimate_every(o, k);
        let window_returns = &returns[start..end];
        let carried: Vec<String> = (0..n_mod)
            .filter(|&i| panel.flag(target_row, i) == CellFlag::Carried)
            .map(|i| format!("carried:{}", panel.models()[i]))
            .collect();

        for (si, stream) in streams.iter_mut().enumerate() {
            if refit || stream.weights.is_none() {
                let weights: Vec<CombinationWeights> = if stream.regression {
                    let prev = stream.weights.take();
                    (0..m)
                        .into_par_iter()
                        .map(|j| {
                            let x = panel.level_block(start, end, j);
                            let seed = derive_seed(opt.seed, &[100, o as u64, j as u64]);
                            let warm = prev.as_ref().map(|p| p[j].coefficients.as_slice());
                            estimate_combination_weights(&x, n_mod, window_returns, grid_levels[j], opt, seed, o, warm)
                        })
                        .collect::<Result<_>>()
                        .map_err(|e| FcwqError::Pipeline { origin, stage: "combination", source: Box::new(e) })?
                } else {
                    grid_levels.iter().map(|l| CombinationWeights::identity(l.value(), o)).collect()
                };
                stream.weights = Some(weights);
            }
            let weights = stream.weights.as_ref().expect("estimated");

            let combined_row = |t: usize| -> Vec<f64> {
                let raw: Vec<f64> = (0..m).map(|j| combine_with(panel.row(t, j), &weights[j].coefficients)).collect();
                monotonize(&raw)
            };
            let forecast_row = combined_row(target_row);

            let needs_wq = stream.variants.iter().any(|v| v.weighted());
            if needs_wq && (refit || stream.wq.is_none()) {
                let window: Vec<f64> = (start..end).flat_map(combined_row).collect();
                let seed = derive_seed(opt.seed, &[200, o as u64, si as u64]);
                let warm = stream.wq.as_ref().map(|f| f.params);
                let fit = estimate_wq_params(
                    &window,
                    m,
                    window_returns,
                    target,
                    opt,
                    config.pipeline.wq_starts,
                    seed,
                    warm.as_ref(),
                )
                .map_err(|e| FcwqError::Pipeline { origin, stage: "wq", source: Box::new(e) })?;
                if !fit.converged {
                    out.diagnostics.push(Diagnostic {
                        date,
                        origin,
                        stage: "wq".into(),
                        subject: if stream.regression { "FC" } else { "single" }.into(),
                        message: format!("stopped with |grad| = {:.3e}", fit.grad_norm),
                    });
                }
                stream.wq = Some(fit);
            }

            for &variant in &stream.variants {
                let var = forecast_row[m - 1];
                let (es, wq) = if variant.weighted() {
                    let fit = stream.wq.clone().expect("estimated");
                    let w = fit.params.weights(m)?;
                    let es = w.w0 + forecast_row.iter().zip(&w.w).map(|(q, wj)| q * wj).sum::<f64>();
                    (es, Some(fit))
                } else {
                    (simple_average_es(&forecast_row), None)
                };
                let mut flags = carried.clone();
                if es > var {
                    flags.push("es_above_var".into());
                }
                if wq.as_ref().is_some_and(|f| !f.converged) {
                    flags.push("wq_not_converged".into());
                }
                out.records.push(ForecastRecord {
                    date,
                    origin,
                    variant,
                    var_forecast: var,
                    es_forecast: es,
                    combined: forecast_row.clone(),
                    wq,
                    flags,
                });
            }
            if refit {
                out.weights.push(OriginWeights {
                    date,
                    origin,
                    regression: stream.regression,
                    combination: weights.clone(),
                    wq: stream.wq.clone().filter(|_| needs_wq),
                });
            }
        }
        if origin % 50 == 0 {
            log::info!("combination: {origin}/{h_total} origins");
        }
    }
    Ok(out)
}

/// Everything a full run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub universe: UniverseRun,
    pub pipeline: PipelineOutput,
}

/// Universe construction followed by both estimation steps.
pub fn run(config: &PipelineConfig, series: &ReturnSeries) -> Result<RunOutput> {
    let universe = quantile_universe(series, config)?;
    let t = universe.panel.t();
    let pipeline = run_on_panel(&universe.panel, &series.returns()[..t], config)?;
    Ok(RunOutput { universe, pipeline })
}

/// Reruns both estimation steps on a saved panel. Returns are looked up in
/// `series` by the panel dates; per-model ES and benchmarks are not
/// available in this mode.
pub fn run_from_panel(panel: QuantilePanel, series: &ReturnSeries, config: &PipelineConfig) -> Result<RunOutput> {
    let returns = panel
        .dates()
        .iter()
        .map(|d| {
            series
                .dates()
                .binary_search(d)
                .map(|i| series.returns()[i])
                .map_err(|_| FcwqError::InvalidInput(format!("no return for panel date {d}")))
        })
        .collect::<Result<Vec<f64>>>()?;
    let pipeline = run_on_panel(&panel, &returns, config)?;
    let h = panel.t() - panel.in_sample_n();
    let universe = UniverseRun {
        model_es: vec![vec![None; panel.n_models()]; h],
        benchmarks: vec![Vec::new(); h],
        diagnostics: Vec::new(),
        panel,
    };
    Ok(RunOutput { universe, pipeline })
}

fn opt_num(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `date,model,var_forecast,es_forecast,w0,a,b,flag` for the combined
/// variants, every universe model and the ES-CAViaR benchmarks.
pub fn write_forecasts_csv(path: impl AsRef<Path>, run: &RunOutput) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["date", "model", "var_forecast", "es_forecast", "w0", "a", "b", "flag"])?;
    let panel = &run.universe.panel;
    let (n, m) = (panel.in_sample_n(), panel.m());
    let mut records = run.pipeline.records.iter().peekable();
    for o in 0..panel.t() - n {
        let row = n + o;
        let date = panel.dates()[row].to_string();
        while let Some(r) = records.next_if(|r| r.origin == o + 1) {
            let p = r.wq.as_ref().map(|f| f.params);
            w.write_record([
                date.clone(),
                r.variant.name().to_string(),
                r.var_forecast.to_string(),
                r.es_forecast.to_string(),
                opt_num(p.map(|p| p.w0)),
                opt_num(p.map(|p| p.a)),
                opt_num(p.map(|p| p.b)),
                r.flags.join(";"),
            ])?;
        }
        for (i, model) in panel.models().iter().enumerate() {
            let flag = if panel.flag(row, i) == CellFlag::Carried { "carried" } else { "" };
            w.write_record([
                date.clone(),
                model.name().to_string(),
                panel.get(row, m - 1, i).to_string(),
                opt_num(run.universe.model_es[o][i]),
                String::new(),
                String::new(),
                String::new(),
                flag.to_string(),
            ])?;
        }
        for b in &run.universe.benchmarks[o] {
            w.write_record([
                date.clone(),
                b.name.clone(),
                b.var.to_string(),
                b.es.to_string(),
                String::new(),
                String::new(),
                String::new(),
                if b.flag.is_some() { "carried" } else { "" }.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `date,origin,stream,level,coefficients,w0,a,b` with coefficients as a
/// JSON array.
pub fn write_weights_csv(path: impl AsRef<Path>, out: &PipelineOutput) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["date", "origin", "stream", "level", "coefficients", "w0", "a", "b"])?;
    for ow in &out.weights {
        let p = ow.wq.as_ref().map(|f| f.params);
        for c in &ow.combination {
            w.write_record([
                ow.date.to_string(),
                ow.origin.to_string(),
                if ow.regression { "regression" } else { "identity" }.to_string(),
                c.level.to_string(),
                serde_json::to_string(&c.coefficients)?,
                opt_num(p.map(|p| p.w0)),
                opt_num(p.map(|p| p.a)),
                opt_num(p.map(|p| p.b)),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `date,variant,level,value` for the monotonized combined forecasts.
pub fn write_combined_csv(path: impl AsRef<Path>, out: &PipelineOutput, levels: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["date", "variant", "level", "value"])?;
    for r in &out.records {
        for (level, v) in levels.iter().zip(&r.combined) {
            w.write_record([r.date.to_string(), r.variant.name().to_string(), level.to_string(), v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_diagnostics_csv(path: impl AsRef<Path>, diagnostics: &[Diagnostic]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["date", "origin", "stage", "subject", "message"])?;
    for d in diagnostics {
        w.write_record([
            d.date.to_string(),
            d.origin.to_string(),
            d.stage.clone(),
            d.subject.clone(),
            d.message.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes forecasts.csv, panel.csv, weights.csv, combined.csv and
/// diagnostics.csv into `dir`.
pub fn write_run(dir: impl AsRef<Path>, run: &RunOutput) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    write_forecasts_csv(dir.join("forecasts.csv"), run)?;
    run.universe.panel.write_csv(dir.join("panel.csv"))?;
    write_weights_csv(dir.join("weights.csv"), &run.pipeline)?;
    write_combined_csv(dir.join("combined.csv"), &run.pipeline, run.universe.panel.levels())?;
    let mut diags = run.universe.diagnostics.clone();
    diags.extend(run.pipeline.diagnostics.iter().cloned());
    diags.sort_by_key(|d| d.origin);
    write_diagnostics_csv(dir.join("diagnostics.csv"), &diags)?;
    Ok(())
}
