//! ES-CAViaR: a CAViaR-AS quantile recursion with ES tied to the quantile by
//! an additive (`ES = Q - exp(g)`) or multiplicative (`ES = (1 + exp(g)) Q`)
//! link, all parameters fitted jointly on the AL score.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::caviar::{caviar_path, caviar_step, CaviarFit};
use super::garch::MIN_WINDOW;
use crate::error::{FcwqError, Result};
use crate::optimizer::{minimize_nonsmooth, OptimizeProblem, OptimizerSettings};
use crate::scoring::{al_joint_score_unchecked, QuantileLevel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EsRelation {
    Additive,
    Multiplicative,
}

impl EsRelation {
    #[inline]
    pub fn es(self, q: f64, gamma0: f64) -> f64 {
        match self {
            EsRelation::Additive => q - gamma0.exp(),
            EsRelation::Multiplicative => (1.0 + gamma0.exp()) * q,
        }
    }
}

/// Random `gamma0` values scored before the joint refinement.
pub const GAMMA_CANDIDATES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EsCaviarFit {
    pub relation: EsRelation,
    pub level: f64,
    pub betas: [f64; 4],
    pub gamma0: f64,
    pub q_init: f64,
    pub q_path: Vec<f64>,
    pub es_path: Vec<f64>,
    pub var_forecast: f64,
    pub es_forecast: f64,
    pub mean_score: f64,
}

impl EsCaviarFit {
    pub fn params(&self) -> [f64; 5] {
        let b = self.betas;
        [b[0], b[1], b[2], b[3], self.gamma0]
    }
}

/// Mean AL score of the joint recursion; `+inf` if ES leaves the negative
/// half-line or the path explodes.
pub fn es_caviar_objective(p: &[f64], relation: EsRelation, returns: &[f64], q_init: f64, alpha: f64) -> f64 {
    let b = [p[0], p[1], p[2], p[3]];
    let mut q = q_init;
    let mut acc = 0.0;
    for &r in returns {
        let es = relation.es(q, p[4]);
        if !(es < 0.0) || !(q.abs() < 1e8) {
            return f64::INFINITY;
        }
        acc += al_joint_score_unchecked(r, q, es, alpha);
        q = caviar_step(&b, q, r);
    }
    acc / returns.len() as f64
}

/// Fits ES-CAViaR starting from a CAViaR-AS fit at the same level.
pub fn fit_es_caviar(
    returns: &[f64],
    level: QuantileLevel,
    relation: EsRelation,
    caviar: &CaviarFit,
    opt: &OptimizerSettings,
    seed: u64,
    warm: Option<&[f64; 5]>,
) -> Result<EsCaviarFit> {
    if returns.len() < MIN_WINDOW {
        return Err(FcwqError::InvalidInput(format!(
            "ES-CAViaR window has {} observations, need at least {MIN_WINDOW}",
            returns.len()
        )));
    }
    let alpha = level.value();
    let q_init = caviar.q_init;
    let obj = |p: &[f64]| es_caviar_objective(p, relation, returns, q_init, alpha);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = caviar.betas;
    let mut scored: Vec<(f64, f64)> = (0..GAMMA_CANDIDATES)
        .map(|_| {
            let g: f64 = match relation {
                EsRelation::Additive => rng.random_range(-4.0..2.0),
                EsRelation::Multiplicative => rng.random_range(-4.0..1.0),
            };
            (obj(&[b[0], b[1], b[2], b[3], g]), g)
        })
        .filter(|(v, _)| v.is_finite())
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut starts: Vec<Vec<f64>> = Vec::new();
    if let Some(w) = warm {
        starts.push(w.to_vec());
    }
    starts.extend(scored.iter().take(2).map(|&(_, g)| vec![b[0], b[1], b[2], b[3], g]));
    let problem = OptimizeProblem::new(obj, 5, starts).with_bounds(vec![
        (-1e3, 1e3),
        (-0.999, 0.999),
        (-50.0, 50.0),
        (-50.0, 50.0),
        (-20.0, 10.0),
    ]);
    let res = minimize_nonsmooth(&problem, opt.nonsmooth_tol, opt.max_iter)?;
    if !res.value.is_finite() {
        return Err(FcwqError::Optimization {
            msg: "ES-CAViaR objective not finite at optimum".into(),
            best_point: res.argmin,
            best_value: res.value,
        });
    }
    let p = &res.argmin;
    let betas = [p[0], p[1], p[2], p[3]];
    let gamma0 = p[4];
    let (q_path, var_forecast) = caviar_path(&betas, returns, q_init);
    let es_path = q_path.iter().map(|&q| relation.es(q, gamma0)).collect();
    Ok(EsCaviarFit {
        relation,
        level: alpha,
        betas,
        gamma0,
        q_init,
        q_path,
        es_path,
        var_forecast,
        es_forecast: relation.es(var_forecast, gamma0),
        mean_score: res.value,
    })
}
