//! The forecasting universe: GARCH-type models with parametric, POT and
//! filtered-historical-simulation tails, CAViaR-AS and CARE-AS, plus the
//! ES-CAViaR benchmarks.

pub mod care;
pub mod caviar;
pub mod es_caviar;
pub mod garch;
pub mod tail;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FcwqError, Result};
use crate::optimizer::{derive_seed, OptimizerSettings};
use crate::scoring::QuantileLevel;
use care::{fit_care_as, CareSettings};
use caviar::{fit_caviar_as, CaviarFit, CaviarSettings};
use es_caviar::{fit_es_caviar, EsRelation};
use garch::{fit_garch, parametric_var_es_at, GarchFit, GarchKind, GarchParams};
use tail::{fhs_tail, pot_tail, TailFit, DEFAULT_THRESHOLD_FRAC};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ModelKind {
    GjrGarchT,
    EgarchT,
    PotGjrGarchT,
    PotEgarchT,
    GjrGarchTHs,
    EgarchTHs,
    CaviarAs,
    CareAs,
}

impl ModelKind {
    pub const ALL: [ModelKind; 8] = [
        ModelKind::GjrGarchT,
        ModelKind::EgarchT,
        ModelKind::PotGjrGarchT,
        ModelKind::PotEgarchT,
        ModelKind::GjrGarchTHs,
        ModelKind::EgarchTHs,
        ModelKind::CaviarAs,
        ModelKind::CareAs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::GjrGarchT => "GJR-GARCH-t",
            ModelKind::EgarchT => "EGARCH-t",
            ModelKind::PotGjrGarchT => "POT-GJR-GARCH-t",
            ModelKind::PotEgarchT => "POT-EGARCH-t",
            ModelKind::GjrGarchTHs => "GJR-GARCH-t-HS",
            ModelKind::EgarchTHs => "EGARCH-t-HS",
            ModelKind::CaviarAs => "CAViaR-AS",
            ModelKind::CareAs => "CARE-AS",
        }
    }

    /// Volatility model the forecaster is built on, if any.
    pub fn volatility(self) -> Option<GarchKind> {
        match self {
            ModelKind::GjrGarchT | ModelKind::PotGjrGarchT | ModelKind::GjrGarchTHs => Some(GarchKind::Gjr),
            ModelKind::EgarchT | ModelKind::PotEgarchT | ModelKind::EgarchTHs => Some(GarchKind::Egarch),
            ModelKind::CaviarAs | ModelKind::CareAs => None,
        }
    }

    pub fn produces_es(self) -> bool {
        self != ModelKind::CaviarAs
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = FcwqError;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .iter()
            .copied()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| FcwqError::Config(format!("unknown model '{s}'")))
    }
}

impl TryFrom<String> for ModelKind {
    type Error = FcwqError;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ModelKind> for String {
    fn from(m: ModelKind) -> String {
        m.name().to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UniverseSettings {
    pub models: Vec<ModelKind>,
    pub pot_threshold_frac: f64,
    pub caviar: CaviarSettings,
    pub care: CareSettings,
    /// Also fit the ES-CAViaR benchmarks at the target level.
    pub es_benchmarks: bool,
}

impl Default for UniverseSettings {
    fn default() -> Self {
        Self {
            models: ModelKind::ALL.to_vec(),
            pot_threshold_frac: DEFAULT_THRESHOLD_FRAC,
            caviar: CaviarSettings::default(),
            care: CareSettings::default(),
            es_benchmarks: false,
        }
    }
}

impl UniverseSettings {
    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(FcwqError::Config("universe.models is empty".into()));
        }
        let mut seen = self.models.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.models.len() {
            return Err(FcwqError::Config("universe.models lists a model twice".into()));
        }
        Ok(())
    }
}

/// One model's output on one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelForecast {
    pub model: ModelKind,
    /// One-step-ahead VaR per grid level.
    pub var: Vec<f64>,
    /// One-step-ahead ES per grid level, when the model defines it.
    pub es: Option<Vec<f64>>,
    /// In-sample VaR paths, `[level][t]`, when requested.
    pub insample: Option<Vec<Vec<f64>>>,
    /// Set when the fit failed and the previous window's forecast was reused.
    pub flag: Option<String>,
}

/// ES-CAViaR benchmark at the target level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkForecast {
    pub name: String,
    pub var: f64,
    pub es: f64,
    pub flag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniverseForecast {
    pub models: Vec<ModelForecast>,
    pub benchmarks: Vec<BenchmarkForecast>,
}

/// Estimates carried between consecutive windows: warm starts and the
/// last successful forecasts.
#[derive(Debug, Clone, Default)]
pub struct UniverseState {
    garch: Vec<(GarchKind, GarchParams)>,
    caviar: Vec<Option<[f64; 4]>>,
    care: Vec<Option<Vec<[f64; 4]>>>,
    es_caviar: [Option<[f64; 5]>; 2],
    last: Option<UniverseForecast>,
}

impl UniverseState {
    pub fn new() -> Self {
        Self::default()
    }

    fn garch_warm(&self, kind: GarchKind) -> Option<&GarchParams> {
        self.garch.iter().find(|(k, _)| *k == kind).map(|(_, p)| p)
    }
}

pub const BENCHMARK_NAMES: [&str; 2] = ["ES-CAViaR-Add-AS", "ES-CAViaR-Mult-AS"];

enum Fitted {
    Garch(GarchKind, Result<GarchFit>),
    Caviar(usize, Result<CaviarFit>),
    Care(usize, Result<care::CareFit>),
}

fn level_values(levels: &[QuantileLevel]) -> Vec<f64> {
    levels.iter().map(|l| l.value()).collect()
}

fn volatility_forecast(
    model: ModelKind,
    fit: &GarchFit,
    returns: &[f64],
    levels: &[f64],
    settings: &UniverseSettings,
    with_paths: bool,
) -> Result<(Vec<f64>, Vec<f64>, Option<Vec<Vec<f64>>>)> {
    let tail: TailFit = match model {
        ModelKind::GjrGarchT | ModelKind::EgarchT => {
            let unit = parametric_var_es_at(1.0, fit.df(), levels);
            TailFit {
                method: tail::TailMethod::ParametricT,
                levels: levels.to_vec(),
                q: unit.iter().map(|p| p.0).collect(),
                c: unit.iter().map(|p| p.1).collect(),
                gpd: None,
            }
        }
        ModelKind::PotGjrGarchT | ModelKind::PotEgarchT => pot_tail(fit, returns, levels, settings.pot_threshold_frac)?,
        ModelKind::GjrGarchTHs | ModelKind::EgarchTHs => fhs_tail(fit, returns, levels)?,
        _ => unreachable!("not a volatility model"),
    };
    let scaled = tail.scaled(fit.sigma_forecast);
    let paths = with_paths.then(|| {
        tail.q
            .iter()
            .map(|q| fit.sigma_path.iter().map(|s| s * q).collect())
            .collect()
    });
    Ok((scaled.iter().map(|p| p.0).collect(), scaled.iter().map(|p| p.1).collect(), paths))
}

/// Fits every selected model on one window and forecasts one step ahead at
/// every level. A model that fails reuses its previous-window forecast and
/// is flagged; failing on the first window is an error.
pub fn forecast_universe(
    returns: &[f64],
    levels: &[QuantileLevel],
    settings: &UniverseSettings,
    opt: &OptimizerSettings,
    window_index: u64,
    state: &mut UniverseState,
    with_paths: bool,
) -> Result<UniverseForecast> {
    settings.validate()?;
    let lv = level_values(levels);
    let m = levels.len();
    if state.caviar.len() != m {
        state.caviar = vec![None; m];
        state.care = vec![None; m];
    }
    let target = *levels.last().ok_or_else(|| FcwqError::InvalidInput("empty level grid".into()))?;

    let mut garch_kinds: Vec<GarchKind> = settings.models.iter().filter_map(|m| m.volatility()).collect();
    garch_kinds.sort_by_key(|k| *k as u8);
    garch_kinds.dedup();
    let want_caviar = settings.models.contains(&ModelKind::CaviarAs);
    let want_care = settings.models.contains(&ModelKind::CareAs);

    let mut jobs: Vec<u8> = Vec::new();
    // job encoding: 0/1 = GARCH kinds, 10+j = CAViaR level j, 100+j = CARE level j
    for k in &garch_kinds {
        jobs.push(*k as u8);
    }
    if want_caviar || settings.es_benchmarks {
        jobs.extend((0..m).map(|j| 10 + j as u8).filter(|&c| want_caviar || c as usize - 10 == m - 1));
    }
    if want_care {
        jobs.extend((0..m).map(|j| 100 + j as u8));
    }

    let snapshot = state.clone();
    let fitted: Vec<Fitted> = jobs
        .par_iter()
        .map(|&job| match job {
            0 | 1 => {
                let kind = if job == 0 { GarchKind::Gjr } else { GarchKind::Egarch };
                Fitted::Garch(kind, fit_garch(returns, kind, opt, snapshot.garch_warm(kind)))
            }
            10..=99 => {
                let j = (job - 10) as usize;
                let seed = derive_seed(opt.seed, &[window_index, 6, j as u64]);
                Fitted::Caviar(
                    j,
                    fit_caviar_as(returns, levels[j], &settings.caviar, opt, seed, snapshot.caviar[j].as_ref()),
                )
            }
            _ => {
                let j = (job - 100) as usize;
                let seed = derive_seed(opt.seed, &[window_index, 7, j as u64]);
                Fitted::Care(
                    j,
                    fit_care_as(returns, levels[j], &settings.care, opt, seed, snapshot.care[j].as_deref()),
                )
            }
        })
        .collect();

    let mut garch_fits: Vec<(GarchKind, Result<GarchFit>)> = Vec::new();
    let mut caviar_fits: Vec<Option<Result<CaviarFit>>> = (0..m).map(|_| None).collect();
    let mut care_fits: Vec<Option<Result<care::CareFit>>> = (0..m).map(|_| None).collect();
    for f in fitted {
        match f {
            Fitted::Garch(k, r) => garch_fits.push((k, r)),
            Fitted::Caviar(j, r) => caviar_fits[j] = Some(r),
            Fitted::Care(j, r) => care_fits[j] = Some(r),
        }
    }

    for (k, r) in &garch_fits {
        if let Ok(fit) = r {
            state.garch.retain(|(kk, _)| kk != k);
            state.garch.push((*k, fit.params));
        }
    }
    for j in 0..m {
        if let Some(Ok(fit)) = &caviar_fits[j] {
            state.caviar[j] = Some(fit.betas);
        }
        if let Some(Ok(fit)) = &care_fits[j] {
            state.care[j] = Some(fit.tau_betas.clone());
        }
    }

    let mut models = Vec::with_capacity(settings.models.len());
    for &model in &settings.models {
        let outcome: Result<ModelForecast> = match model.volatility() {
            Some(kind) => {
                let (_, fit) = garch_fits.iter().find(|(k, _)| *k == kind).expect("fitted");
                match fit {
                    Ok(fit) => volatility_forecast(model, fit, returns, &lv, settings, with_paths).map(|(var, es, paths)| {
                        ModelForecast { model, var, es: Some(es), insample: paths, flag: None }
                    }),
                    Err(e) => Err(e.clone_shallow()),
                }
            }
            None if model == ModelKind::CaviarAs => {
                let fits: Result<Vec<&CaviarFit>> = caviar_fits
                    .iter()
                    .map(|f| match f.as_ref().expect("fitted") {
                        Ok(fit) => Ok(fit),
                        Err(e) => Err(e.clone_shallow()),
                    })
                    .collect();
                fits.map(|fits| ModelForecast {
                    model,
                    var: fits.iter().map(|f| f.q_forecast).collect(),
                    es: None,
                    insample: with_paths.then(|| fits.iter().map(|f| f.q_path.clone()).collect()),
                    flag: None,
                })
            }
            None => {
                let fits: Result<Vec<&care::CareFit>> = care_fits
                    .iter()
                    .map(|f| match f.as_ref().expect("fitted") {
                        Ok(fit) => Ok(fit),
                        Err(e) => Err(e.clone_shallow()),
                    })
                    .collect();
                fits.map(|fits| ModelForecast {
                    model,
                    var: fits.iter().map(|f| f.var_forecast).collect(),
                    es: Some(fits.iter().map(|f| f.es_forecast).collect()),
                    insample: with_paths.then(|| fits.iter().map(|f| f.mu_path.clone()).collect()),
                    flag: None,
                })
            }
        };
        models.push(match outcome {
            Ok(f) => f,
            Err(e) => carry_forward(state, model, &e, window_index)?,
        });
    }

    let mut benchmarks = Vec::new();
    if settings.es_benchmarks {
        let base = caviar_fits[m - 1].as_ref().expect("fitted");
        for (i, relation) in [EsRelation::Additive, EsRelation::Multiplicative].into_iter().enumerate() {
            let seed = derive_seed(opt.seed, &[window_index, 8, i as u64]);
            let res = match base {
                Ok(c) => fit_es_caviar(returns, target, relation, c, opt, seed, state.es_caviar[i].as_ref()),
                Err(e) => Err(e.clone_shallow()),
            };
            benchmarks.push(match res {
                Ok(fit) => {
                    state.es_caviar[i] = Some(fit.params());
                    BenchmarkForecast {
                        name: BENCHMARK_NAMES[i].into(),
                        var: fit.var_forecast,
                        es: fit.es_forecast,
                        flag: None,
                    }
                }
                Err(e) => {
                    let prev = state
                        .last
                        .as_ref()
                        .and_then(|l| l.benchmarks.get(i).cloned())
                        .ok_or_else(|| FcwqError::ModelFit(format!("{} failed on window {window_index}: {e}", BENCHMARK_NAMES[i])))?;
                    log::warn!("{} failed on window {window_index}, carrying forward: {e}", BENCHMARK_NAMES[i]);
                    BenchmarkForecast { flag: Some(e.to_string()), ..prev }
                }
            });
        }
    }

    let out = UniverseForecast { models, benchmarks };
    state.last = Some(UniverseForecast {
        models: out
            .models
            .iter()
            .map(|f| ModelForecast { insample: None, ..f.clone() })
            .collect(),
        benchmarks: out.benchmarks.clone(),
    });
    Ok(out)
}

fn carry_forward(state: &UniverseState, model: ModelKind, err: &FcwqError, window_index: u64) -> Result<ModelForecast> {
    let prev = state
        .last
        .as_ref()
        .and_then(|l| l.models.iter().find(|f| f.model == model))
        .ok_or_else(|| FcwqError::ModelFit(format!("{model} failed on window {window_index}: {err}")))?;
    log::warn!("{model} failed on window {window_index}, carrying forward: {err}");
    Ok(ModelForecast {
        flag: Some(err.to_string()),
        insample: None,
        ..prev.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for m in ModelKind::ALL {
            assert_eq!(m.name().parse::<ModelKind>().unwrap(), m);
            let json = serde_json::to_string(&m).unwrap();
            assert_eq!(serde_json::from_str::<ModelKind>(&json).unwrap(), m);
        }
        assert!("GARCH".parse::<ModelKind>().is_err());
    }

    #[test]
    fn duplicate_models_rejected() {
        let s = UniverseSettings { models: vec![ModelKind::CaviarAs, ModelKind::CaviarAs], ..Default::default() };
        assert!(s.validate().is_err());
    }
}
