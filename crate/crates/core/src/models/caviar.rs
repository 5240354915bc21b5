//! CAViaR with asymmetric slope:
//! `Q_t = b0 + b1 Q_{t-1} + (b2 I(r_{t-1} >= 0) + b3 I(r_{t-1} < 0)) |r_{t-1}|`,
//! fitted by minimizing the mean quantile loss with a screened multi-start
//! simplex search.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::garch::MIN_WINDOW;
use crate::dist::empirical_quantile;
use crate::error::{FcwqError, Result};
use crate::optimizer::{minimize_nonsmooth, OptimizeProblem, OptimizerSettings};
use crate::scoring::{quantile_loss, QuantileLevel};

/// Observations used to initialize the recursion at the empirical quantile.
pub const INIT_OBS: usize = 100;
const EXPLOSION: f64 = 1e8;

/// Multi-start budget for the quantile-regression fits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CaviarSettings {
    /// Random parameter vectors scored on a cold start.
    pub starts: usize,
    /// Best candidates refined by the simplex search on a cold start.
    pub refine: usize,
    /// Random candidates scored when a previous window's estimate is available.
    pub warm_starts: usize,
    /// Candidates refined (besides the previous estimate) on a warm start.
    pub warm_refine: usize,
}

impl Default for CaviarSettings {
    fn default() -> Self {
        Self {
            starts: 10_000,
            refine: 10,
            warm_starts: 500,
            warm_refine: 1,
        }
    }
}

#[inline]
pub fn caviar_step(b: &[f64; 4], q_prev: f64, r_prev: f64) -> f64 {
    let slope = if r_prev >= 0.0 { b[2] } else { b[3] };
    b[0] + b[1] * q_prev + slope * r_prev.abs()
}

/// Runs the recursion from `q_init`; returns the in-sample path and the
/// one-step-ahead value past the last return.
pub fn caviar_path(b: &[f64; 4], returns: &[f64], q_init: f64) -> (Vec<f64>, f64) {
    let mut path = Vec::with_capacity(returns.len());
    let mut q = q_init;
    for &r in returns {
        path.push(q);
        q = caviar_step(b, q, r);
    }
    (path, q)
}

/// Mean quantile loss of the recursion; `+inf` if the path explodes.
pub fn caviar_objective(b: &[f64; 4], returns: &[f64], q_init: f64, alpha: f64) -> f64 {
    let a = QuantileLevel::new(alpha).expect("valid level");
    let mut q = q_init;
    let mut acc = 0.0;
    for &r in returns {
        if !(q.abs() < EXPLOSION) {
            return f64::INFINITY;
        }
        acc += quantile_loss(r, q, a);
        q = caviar_step(b, q, r);
    }
    acc / returns.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaviarFit {
    pub level: f64,
    pub betas: [f64; 4],
    pub q_init: f64,
    pub q_path: Vec<f64>,
    pub q_forecast: f64,
    pub mean_loss: f64,
    /// In-sample quantiles above zero (unexpected for tail levels).
    pub positive_quantiles: usize,
}

pub(crate) fn to_array4(x: &[f64]) -> [f64; 4] {
    [x[0], x[1], x[2], x[3]]
}

/// Draws a candidate whose implied unconditional level is near `q_hat`.
pub(crate) fn random_candidate(rng: &mut ChaCha8Rng, q_hat: f64, mean_abs: f64) -> [f64; 4] {
    let b1 = rng.random_range(0.0..0.99);
    let b2 = rng.random_range(-0.6..0.1);
    let b3 = rng.random_range(-1.0..0.1);
    let b0 = (q_hat * (1.0 - b1) - 0.5 * (b2 + b3) * mean_abs) * rng.random_range(0.5..1.5);
    [b0, b1, b2, b3]
}

/// Scores `n_candidates` random vectors with `objective` and returns the
/// `keep` best, ordered by value.
pub(crate) fn screen_candidates<F>(
    objective: F,
    n_candidates: usize,
    keep: usize,
    mut draw: impl FnMut() -> Vec<f64>,
) -> Vec<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    let mut scored: Vec<(f64, usize, Vec<f64>)> = (0..n_candidates)
        .map(|i| {
            let c = draw();
            (objective(&c), i, c)
        })
        .filter(|(v, _, _)| v.is_finite())
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    scored.into_iter().take(keep).map(|(_, _, c)| c).collect()
}

/// Fits CAViaR-AS at one level on a window of returns.
pub fn fit_caviar_as(
    returns: &[f64],
    level: QuantileLevel,
    settings: &CaviarSettings,
    opt: &OptimizerSettings,
    seed: u64,
    warm: Option<&[f64; 4]>,
) -> Result<CaviarFit> {
    if returns.len() < MIN_WINDOW {
        return Err(FcwqError::InvalidInput(format!(
            "CAViaR window has {} observations, need at least {MIN_WINDOW}",
            returns.len()
        )));
    }
    let alpha = level.value();
    let q_init = empirical_quantile(&returns[..INIT_OBS.min(returns.len())], alpha);
    let q_hat = empirical_quantile(returns, alpha);
    let mean_abs = returns.iter().map(|r| r.abs()).sum::<f64>() / returns.len() as f64;
    let obj = |x: &[f64]| caviar_objective(&to_array4(x), returns, q_init, alpha);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n_cand, keep) = match warm {
        Some(_) => (settings.warm_starts, settings.warm_refine),
        None => (settings.starts, settings.refine),
    };
    let mut starts = Vec::new();
    if let Some(w) = warm {
        starts.push(w.to_vec());
    }
    starts.extend(screen_candidates(obj, n_cand, keep, || {
        random_candidate(&mut rng, q_hat, mean_abs).to_vec()
    }));
    if starts.is_empty() {
        // constant-quantile fallback
        starts.push(vec![q_hat * 0.1, 0.9, 0.0, 0.0]);
    }

    let problem = OptimizeProblem::new(obj, 4, starts)
        .with_bounds(vec![(-1e3, 1e3), (-0.999, 0.999), (-50.0, 50.0), (-50.0, 50.0)]);
    let res = minimize_nonsmooth(&problem, opt.nonsmooth_tol, opt.max_iter)?;
    if !res.value.is_finite() {
        return Err(FcwqError::Optimization {
            msg: "CAViaR objective not finite at optimum".into(),
            best_point: res.argmin,
            best_value: res.value,
        });
    }
    let betas = to_array4(&res.argmin);
    let (q_path, q_forecast) = caviar_path(&betas, returns, q_init);
    let positive_quantiles = if alpha < 0.5 { q_path.iter().filter(|q| **q > 0.0).count() } else { 0 };
    if positive_quantiles > 0 {
        log::warn!("CAViaR level {alpha}: {positive_quantiles} positive in-sample quantiles");
    }
    Ok(CaviarFit {
        level: alpha,
        betas,
        q_init,
        q_path,
        q_forecast,
        mean_loss: res.value,
        positive_quantiles,
    })
}
