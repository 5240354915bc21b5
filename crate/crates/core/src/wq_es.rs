//! Step 2: ES as an intercept plus a Beta-weighted average of combined
//! quantiles, fitted on the rolling mean AL score. Also the simple-average
//! baseline.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{FcwqError, Result};
use crate::optimizer::{minimize_smooth, multi_start_grid, OptimizeProblem, OptimizerSettings};
use crate::scoring::{al_joint_score_unchecked, QuantileLevel};

/// Bound on `|ln a|` and `|ln b|` during estimation.
pub const LOG_SHAPE_BOUND: f64 = 6.0;
/// Random starts around the uniform-weight center on a cold start.
pub const DEFAULT_WQ_STARTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WqParams {
    pub w0: f64,
    pub a: f64,
    pub b: f64,
}

impl WqParams {
    pub const CENTER: WqParams = WqParams { w0: 0.0, a: 1.0, b: 1.0 };

    fn to_free(self) -> [f64; 3] {
        [self.w0, self.a.ln(), self.b.ln()]
    }

    fn from_free(x: &[f64]) -> Self {
        Self { w0: x[0], a: x[1].exp(), b: x[2].exp() }
    }

    pub fn weights(&self, m: usize) -> Result<WqWeights> {
        Ok(WqWeights { w0: self.w0, w: beta_weights(self.a, self.b, m)? })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WqWeights {
    pub w0: f64,
    pub w: Vec<f64>,
}

/// Beta density `x^(a-1) (1-x)^(b-1) / B(a, b)`.
pub fn beta_density(x: f64, a: f64, b: f64) -> f64 {
    ((a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() + ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b)).exp()
}

/// Beta density at `j / (m + 1)`, `j = 1..=m`, normalized to unit sum.
pub fn beta_weights(a: f64, b: f64, m: usize) -> Result<Vec<f64>> {
    if !(a > 0.0 && b > 0.0) {
        return Err(FcwqError::Domain(format!("Beta weights need a, b > 0, got ({a}, {b})")));
    }
    if m < 2 {
        return Err(FcwqError::InvalidInput(format!("need at least 2 grid levels, got {m}")));
    }
    // normalizing in logs keeps extreme shapes finite
    let ln_raw: Vec<f64> = (1..=m)
        .map(|j| {
            let x = j as f64 / (m + 1) as f64;
            (a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln()
        })
        .collect();
    let top = ln_raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = ln_raw.iter().map(|v| (v - top).exp()).collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|v| v / total).collect())
}

pub fn es_from_weights(row: &[f64], weights: &WqWeights) -> Result<f64> {
    if row.len() != weights.w.len() {
        return Err(FcwqError::DimensionMismatch { expected: weights.w.len(), got: row.len() });
    }
    Ok(weights.w0 + row.iter().zip(&weights.w).map(|(q, w)| q * w).sum::<f64>())
}

pub fn simple_average_es(row: &[f64]) -> f64 {
    row.iter().sum::<f64>() / row.len() as f64
}

/// Mean AL score of the WQ ES path; the target-level column (last) is the
/// VaR. `+inf` if any ES is non-negative.
pub fn wq_objective(params: &WqParams, combined: &[f64], m: usize, returns: &[f64], alpha: f64) -> f64 {
    let Ok(w) = beta_weights(params.a, params.b, m) else {
        return f64::INFINITY;
    };
    let mut acc = 0.0;
    for (row, &r) in combined.chunks_exact(m).zip(returns) {
        let es = params.w0 + row.iter().zip(&w).map(|(q, wj)| q * wj).sum::<f64>();
        if !(es < 0.0) {
            return f64::INFINITY;
        }
        acc += al_joint_score_unchecked(r, row[m - 1], es, alpha);
    }
    acc / returns.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WqFit {
    pub params: WqParams,
    pub mean_score: f64,
    pub converged: bool,
    pub grad_norm: f64,
}

/// Estimates `(w0, a, b)` over `(w0, ln a, ln b)` by BFGS.
///
/// `combined` is row-major with `m` columns (monotonized combined quantiles).
/// Cold start: the center `(0, 1, 1)` plus `n_random` perturbations. Warm:
/// the previous estimate, the center and `opt.warm_starts` perturbations.
pub fn estimate_wq_params(
    combined: &[f64],
    m: usize,
    returns: &[f64],
    alpha: QuantileLevel,
    opt: &OptimizerSettings,
    n_random: usize,
    seed: u64,
    warm: Option<&WqParams>,
) -> Result<WqFit> {
    if m < 2 || combined.len() != m * returns.len() {
        return Err(FcwqError::DimensionMismatch { expected: m * returns.len(), got: combined.len() });
    }
    if returns.is_empty() {
        return Err(FcwqError::InvalidInput("empty WQ window".into()));
    }
    let a = alpha.value();
    let obj = |x: &[f64]| wq_objective(&WqParams::from_free(x), combined, m, returns, a);
    let center = WqParams::CENTER.to_free();
    let scale = [0.5, 1.5, 1.5];
    let warm = warm.filter(|w| w.w0.is_finite() && w.a > 0.0 && w.b > 0.0);
    let mut starts = Vec::new();
    if let Some(w) = warm {
        starts.push(w.to_free().to_vec());
        starts.extend(multi_start_grid(&center, opt.warm_starts, &scale, seed));
    } else {
        starts.extend(multi_start_grid(&center, n_random, &scale, seed));
    }
    // a start with non-negative ES is shifted down until the score is finite
    for s in starts.iter_mut() {
        let mut k = 0;
        while !obj(s).is_finite() && k < 60 {
            s[0] -= 0.1 * 2f64.powi(k / 4);
            k += 1;
        }
    }
    let bound = LOG_SHAPE_BOUND;
    let problem =
        OptimizeProblem::new(obj, 3, starts).with_bounds(vec![(-1e3, 1e3), (-bound, bound), (-bound, bound)]);
    let res = minimize_smooth(&problem, opt.tol, opt.max_iter)?;
    if !res.value.is_finite() {
        return Err(FcwqError::Optimization {
            msg: "no WQ parameters with negative ES on the whole window".into(),
            best_point: res.argmin,
            best_value: res.value,
        });
    }
    // a stalled fit is returned with `converged = false`; callers flag it
    Ok(WqFit {
        params: WqParams::from_free(&res.argmin),
        mean_score: res.value,
        converged: res.converged,
        grad_norm: res.grad_norm,
    })
}
