//! Synthetic return series with known conditional VaR and ES.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StudentT;
use serde::{Deserialize, Serialize};

use crate::data::{business_days, ReturnSeries};
use crate::dist::{sample_std_t, std_t_abs_mean};
use crate::error::{FcwqError, Result};
use crate::models::garch::{egarch_step, gjr_step, parametric_var_es_at, GarchKind, GarchParams};

const BURN_IN: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DgpKind {
    GjrT,
    EgarchT,
    IidT,
}

impl DgpKind {
    pub fn name(self) -> &'static str {
        match self {
            DgpKind::GjrT => "gjr-t",
            DgpKind::EgarchT => "egarch-t",
            DgpKind::IidT => "iid-t",
        }
    }
}

impl fmt::Display for DgpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DgpKind {
    type Err = FcwqError;
    fn from_str(s: &str) -> Result<Self> {
        [DgpKind::GjrT, DgpKind::EgarchT, DgpKind::IidT]
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| FcwqError::Config(format!("unknown DGP '{s}' (gjr-t, egarch-t, iid-t)")))
    }
}

/// Data-generating process. For `IidT`, `omega` is the constant variance and
/// the dynamic parameters are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dgp {
    pub kind: DgpKind,
    pub params: GarchParams,
    pub seed: u64,
    pub t: usize,
}

impl Dgp {
    pub fn default_params(kind: DgpKind) -> GarchParams {
        match kind {
            DgpKind::GjrT => GarchParams { omega: 0.02, alpha1: 0.05, gamma: 0.10, beta: 0.88, nu: 8.0 },
            DgpKind::EgarchT => GarchParams { omega: 0.0, alpha1: 0.12, gamma: -0.08, beta: 0.97, nu: 8.0 },
            DgpKind::IidT => GarchParams { omega: 1.0, alpha1: 0.0, gamma: 0.0, beta: 0.0, nu: 5.0 },
        }
    }

    pub fn new(kind: DgpKind, t: usize, seed: u64) -> Self {
        Self { kind, params: Self::default_params(kind), seed, t }
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        let ok = match self.kind {
            DgpKind::GjrT => p.is_valid(GarchKind::Gjr),
            DgpKind::EgarchT => p.is_valid(GarchKind::Egarch),
            DgpKind::IidT => p.omega > 0.0 && p.nu > 2.0,
        };
        if !ok || self.t == 0 {
            return Err(FcwqError::InvalidInput(format!("invalid {} parameters {p:?} (T = {})", self.kind, self.t)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub series: ReturnSeries,
    /// Conditional standard deviation of each return.
    pub sigma: Vec<f64>,
    pub levels: Vec<f64>,
    /// True VaR per level, `[level][t]`.
    pub var: Vec<Vec<f64>>,
    /// True ES per level, `[level][t]`.
    pub es: Vec<Vec<f64>>,
}

impl Simulation {
    pub fn level_index(&self, alpha: f64) -> Option<usize> {
        self.levels.iter().position(|l| (l - alpha).abs() < 1e-12)
    }
}

/// True `(VaR, ES)` per level given a conditional s.d. path.
pub fn truth_from_sigma(sigma: &[f64], nu: f64, levels: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let unit = parametric_var_es_at(1.0, nu, levels);
    let var = unit.iter().map(|(q, _)| sigma.iter().map(|s| s * q).collect()).collect();
    let es = unit.iter().map(|(_, c)| sigma.iter().map(|s| s * c).collect()).collect();
    (var, es)
}

/// Simulates `r_t = sigma_t z_t` with unit-variance Student-t `z_t`.
pub fn simulate(dgp: &Dgp, levels: &[f64]) -> Result<Simulation> {
    dgp.validate()?;
    let p = dgp.params;
    let mut rng = ChaCha8Rng::seed_from_u64(dgp.seed);
    let t_dist = StudentT::new(p.nu).map_err(|e| FcwqError::InvalidInput(e.to_string()))?;
    let total = dgp.t + if dgp.kind == DgpKind::IidT { 0 } else { BURN_IN };
    let mut returns = Vec::with_capacity(total);
    let mut sigma = Vec::with_capacity(total);
    match dgp.kind {
        DgpKind::IidT => {
            let s = p.omega.sqrt();
            for _ in 0..total {
                sigma.push(s);
                returns.push(s * sample_std_t(&mut rng, &t_dist, p.nu));
            }
        }
        DgpKind::GjrT => {
            let mut var = p.omega / (1.0 - p.alpha1 - 0.5 * p.gamma - p.beta);
            for _ in 0..total {
                let s = var.sqrt();
                let r = s * sample_std_t(&mut rng, &t_dist, p.nu);
                sigma.push(s);
                returns.push(r);
                var = gjr_step(&p, var, r);
            }
        }
        DgpKind::EgarchT => {
            let m = std_t_abs_mean(p.nu);
            let mut lv = p.omega / (1.0 - p.beta);
            for _ in 0..total {
                let s = (0.5 * lv).exp();
                let r = s * sample_std_t(&mut rng, &t_dist, p.nu);
                sigma.push(s);
                returns.push(r);
                lv = egarch_step(&p, lv, r, m);
            }
        }
    }
    let skip = total - dgp.t;
    let returns = returns.split_off(skip);
    let sigma = sigma.split_off(skip);
    let dates = business_days(NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date"), dgp.t);
    let series = ReturnSeries::new(dates, returns)?;
    let (var, es) = truth_from_sigma(&sigma, p.nu, levels);
    Ok(Simulation { series, sigma, levels: levels.to_vec(), var, es })
}

/// `date,return,sigma,var_<level>...,es_<level>...`
pub fn write_simulation_csv(path: impl AsRef<Path>, sim: &Simulation) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["date".to_string(), "return".to_string(), "sigma".to_string()];
    header.extend(sim.levels.iter().map(|l| format!("var_{l}")));
    header.extend(sim.levels.iter().map(|l| format!("es_{l}")));
    w.write_record(&header)?;
    for t in 0..sim.series.len() {
        let mut rec = vec![
            sim.series.dates()[t].to_string(),
            sim.series.returns()[t].to_string(),
            sim.sigma[t].to_string(),
        ];
        rec.extend(sim.var.iter().map(|v| v[t].to_string()));
        rec.extend(sim.es.iter().map(|v| v[t].to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::std_t_quantile;

    #[test]
    fn iid_t_violation_rate() {
        let sim = simulate(&Dgp::new(DgpKind::IidT, 100_000, 17), &[0.025]).unwrap();
        let q = std_t_quantile(0.025, 5.0);
        assert!(sim.var[0].iter().all(|v| *v == q));
        let hits = sim.series.returns().iter().filter(|r| **r < q).count() as f64 / 1e5;
        assert!((hits - 0.025).abs() < 0.002, "{hits}");
    }

    #[test]
    fn truth_scales_with_sigma() {
        let s: Vec<f64> = vec![0.7, 1.3, 2.0];
        let s2: Vec<f64> = s.iter().map(|v| 2.0 * v).collect();
        let (v1, e1) = truth_from_sigma(&s, 8.0, &[0.025]);
        let (v2, e2) = truth_from_sigma(&s2, 8.0, &[0.025]);
        for t in 0..3 {
            assert!((v2[0][t] - 2.0 * v1[0][t]).abs() < 1e-12);
            assert!((e2[0][t] - 2.0 * e1[0][t]).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_and_ordered() {
        for kind in [DgpKind::GjrT, DgpKind::EgarchT, DgpKind::IidT] {
            let a = simulate(&Dgp::new(kind, 800, 5), &[0.005, 0.025]).unwrap();
            let b = simulate(&Dgp::new(kind, 800, 5), &[0.005, 0.025]).unwrap();
            assert_eq!(a, b);
            for t in 0..800 {
                assert!(a.es[1][t] < a.var[1][t] && a.var[1][t] < 0.0);
            }
        }
        let mut bad = Dgp::new(DgpKind::GjrT, 100, 1);
        bad.params.beta = 0.99;
        assert!(simulate(&bad, &[0.025]).is_err());
        assert_eq!("GJR-T".parse::<DgpKind>().unwrap(), DgpKind::GjrT);
    }
}
