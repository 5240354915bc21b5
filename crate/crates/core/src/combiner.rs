//! Step 1: per-level linear combination of VaR forecasts, fitted by
//! minimizing the mean quantile loss over a rolling window, and the
//! rearrangement that removes quantile crossing.

use serde::{Deserialize, Serialize};

use crate::error::{FcwqError, Result};
use crate::optimizer::{minimize_nonsmooth, multi_start_grid, OptimizeProblem, OptimizerSettings};
use crate::scoring::{quantile_loss, QuantileLevel};

/// Equally spaced quantile levels ending at the target level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileGrid {
    levels: Vec<QuantileLevel>,
}

impl QuantileGrid {
    pub fn levels(&self) -> &[QuantileLevel] {
        &self.levels
    }

    pub fn values(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.value()).collect()
    }

    pub fn m(&self) -> usize {
        self.levels.len()
    }

    pub fn eta(&self) -> f64 {
        let v = self.values();
        (v[v.len() - 1] - v[0]) / (v.len() - 1) as f64
    }

    pub fn target(&self) -> QuantileLevel {
        self.levels[self.levels.len() - 1]
    }
}

pub fn make_grid(alpha: QuantileLevel, alpha1: f64, m: usize) -> Result<QuantileGrid> {
    let a = alpha.value();
    if !(alpha1 > 0.0 && alpha1 < a) {
        return Err(FcwqError::InvalidInput(format!(
            "grid lower bound {alpha1} must lie in (0, {a})"
        )));
    }
    if m < 2 {
        return Err(FcwqError::InvalidInput(format!("grid size {m} must be at least 2")));
    }
    let eta = (a - alpha1) / (m - 1) as f64;
    let mut levels = (0..m - 1)
        .map(|j| QuantileLevel::new(alpha1 + eta * j as f64))
        .collect::<Result<Vec<_>>>()?;
    levels.push(alpha);
    Ok(QuantileGrid { levels })
}

/// Intercept followed by one coefficient per model, for one level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinationWeights {
    pub level: f64,
    pub coefficients: Vec<f64>,
    /// Zero-based forecast origin the weights were estimated for.
    pub origin: usize,
    pub mean_loss: f64,
}

impl CombinationWeights {
    /// `(0, 1)` for a single model: the model's own quantile.
    pub fn identity(level: f64, origin: usize) -> Self {
        Self {
            level,
            coefficients: vec![0.0, 1.0],
            origin,
            mean_loss: f64::NAN,
        }
    }

    pub fn n_models(&self) -> usize {
        self.coefficients.len() - 1
    }
}

#[inline]
pub fn combine_with(row: &[f64], c: &[f64]) -> f64 {
    c[0] + row.iter().zip(&c[1..]).map(|(x, w)| x * w).sum::<f64>()
}

pub fn combine(row: &[f64], weights: &CombinationWeights) -> Result<f64> {
    if row.len() != weights.n_models() {
        return Err(FcwqError::DimensionMismatch {
            expected: weights.n_models(),
            got: row.len(),
        });
    }
    Ok(combine_with(row, &weights.coefficients))
}

/// Mean quantile loss of the combined predictor over rows of `x`
/// (row-major, `n_models` columns).
pub fn combination_objective(x: &[f64], n_models: usize, returns: &[f64], c: &[f64], alpha: QuantileLevel) -> f64 {
    let mut acc = 0.0;
    for (row, &r) in x.chunks_exact(n_models).zip(returns) {
        acc += quantile_loss(r, combine_with(row, c), alpha);
    }
    acc / returns.len() as f64
}

/// Fits unconstrained combination coefficients for one level.
///
/// Starts at zero intercept and equal weights plus `opt.n_starts` random
/// perturbations; with `warm`, the previous estimate, the equal-weight start
/// and `opt.warm_starts` perturbations are used instead.
pub fn estimate_combination_weights(
    x: &[f64],
    n_models: usize,
    returns: &[f64],
    level: QuantileLevel,
    opt: &OptimizerSettings,
    seed: u64,
    origin: usize,
    warm: Option<&[f64]>,
) -> Result<CombinationWeights> {
    if n_models == 0 || x.len() != n_models * returns.len() {
        return Err(FcwqError::DimensionMismatch {
            expected: n_models.max(1) * returns.len(),
            got: x.len(),
        });
    }
    if returns.is_empty() {
        return Err(FcwqError::InvalidInput("empty combination window".into()));
    }
    let dim = n_models + 1;
    let mut center = vec![1.0 / n_models as f64; dim];
    center[0] = 0.0;
    let mean_abs = x.iter().map(|v| v.abs()).sum::<f64>() / x.len() as f64;
    let mut scale = vec![0.5; dim];
    scale[0] = 0.25 * mean_abs.max(1e-3);
    let warm = warm.filter(|w| w.len() == dim && w.iter().all(|v| v.is_finite()));
    let starts = match warm {
        Some(w) => {
            let mut s = vec![w.to_vec()];
            s.extend(multi_start_grid(&center, opt.warm_starts, &scale, seed));
            s
        }
        None => multi_start_grid(&center, opt.n_starts, &scale, seed),
    };
    let obj = |c: &[f64]| combination_objective(x, n_models, returns, c, level);
    let problem = OptimizeProblem::new(obj, dim, starts);
    let res = minimize_nonsmooth(&problem, opt.nonsmooth_tol, opt.max_iter)?;
    Ok(CombinationWeights {
        level: level.value(),
        coefficients: res.argmin,
        origin,
        mean_loss: res.value,
    })
}

/// Sorted (ascending) rearrangement of a row of quantiles.
pub fn monotonize(row: &[f64]) -> Vec<f64> {
    let mut out = row.to_vec();
    out.sort_by(f64::total_cmp);
    out
}
