//! Semi-parametric error tails for volatility-filtered returns:
//! peaks-over-threshold (GPD) and filtered historical simulation.

use serde::{Deserialize, Serialize};

use super::garch::GarchFit;
use crate::dist::{empirical_quantile_sorted, Gpd};
use crate::error::{FcwqError, Result};

/// Default fraction of standardized residuals treated as the left tail.
pub const DEFAULT_THRESHOLD_FRAC: f64 = 0.10;
/// Minimum number of threshold exceedances for a GPD fit.
pub const MIN_EXCEEDANCES: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TailMethod {
    ParametricT,
    Pot,
    Fhs,
}

/// GPD fit to the left tail of standardized residuals (as positive losses).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpdTail {
    pub xi: f64,
    pub beta: f64,
    /// Threshold on the standardized-residual scale (negative for the left tail).
    pub threshold: f64,
    pub exceedances: usize,
    pub sample_size: usize,
}

/// Per-level standardized quantiles `q` and tail means `c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub method: TailMethod,
    pub levels: Vec<f64>,
    pub q: Vec<f64>,
    pub c: Vec<f64>,
    pub gpd: Option<GpdTail>,
}

impl TailFit {
    /// Scales the standardized tail by a volatility forecast: `(sigma q, sigma c)` per level.
    pub fn scaled(&self, sigma: f64) -> Vec<(f64, f64)> {
        self.q.iter().zip(&self.c).map(|(q, c)| (sigma * q, sigma * c)).collect()
    }
}

/// Fits a GPD to exceedances of `-z` over the `threshold_frac` empirical
/// quantile of `z` and maps every level to a quantile and tail mean.
pub fn pot_tail_standardized(z: &[f64], levels: &[f64], threshold_frac: f64) -> Result<TailFit> {
    if !(threshold_frac > 0.05 && threshold_frac <= 0.2) {
        return Err(FcwqError::InvalidInput(format!(
            "POT threshold fraction {threshold_frac} outside (0.05, 0.2]"
        )));
    }
    let mut sorted = z.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let u = empirical_quantile_sorted(&sorted, threshold_frac);
    let excesses: Vec<f64> = sorted.iter().take_while(|&&v| v < u).map(|&v| u - v).collect();
    let nu = excesses.len();
    if nu < MIN_EXCEEDANCES {
        return Err(FcwqError::ModelFit(format!(
            "only {nu} exceedances below the threshold, need {MIN_EXCEEDANCES}"
        )));
    }
    let rate = nu as f64 / n as f64;
    if let Some(a) = levels.iter().find(|&&a| a >= rate) {
        return Err(FcwqError::InvalidInput(format!(
            "level {a} is not inside the POT tail (exceedance rate {rate:.4})"
        )));
    }
    let gpd = Gpd::fit(&excesses)?;
    if gpd.xi >= 1.0 {
        return Err(FcwqError::ModelFit(format!(
            "GPD shape {} >= 1 implies an infinite tail mean",
            gpd.xi
        )));
    }
    let loss_threshold = -u;
    let mut q = Vec::with_capacity(levels.len());
    let mut c = Vec::with_capacity(levels.len());
    for &a in levels {
        let var_loss = loss_threshold + gpd.excess_quantile(a / rate);
        let es_loss = (var_loss + gpd.beta - gpd.xi * loss_threshold) / (1.0 - gpd.xi);
        q.push(-var_loss);
        c.push(-es_loss);
    }
    Ok(TailFit {
        method: TailMethod::Pot,
        levels: levels.to_vec(),
        q,
        c,
        gpd: Some(GpdTail {
            xi: gpd.xi,
            beta: gpd.beta,
            threshold: u,
            exceedances: nu,
            sample_size: n,
        }),
    })
}

/// POT tail of the returns standardized by a fitted volatility path.
pub fn pot_tail(fit: &GarchFit, returns: &[f64], levels: &[f64], threshold_frac: f64) -> Result<TailFit> {
    pot_tail_standardized(&fit.standardized(returns), levels, threshold_frac)
}

/// Empirical quantiles and tail averages of standardized residuals.
///
/// `q` is the `ceil(alpha n)`-th order statistic; `c` averages every residual
/// at or below it.
pub fn fhs_tail_standardized(z: &[f64], levels: &[f64]) -> Result<TailFit> {
    let mut sorted = z.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut q = Vec::with_capacity(levels.len());
    let mut c = Vec::with_capacity(levels.len());
    for &a in levels {
        let qa = empirical_quantile_sorted(&sorted, a);
        let tail: Vec<f64> = sorted.iter().copied().take_while(|v| *v <= qa).collect();
        if tail.len() < 2 {
            return Err(FcwqError::ModelFit(format!(
                "level {a}: {} observation(s) in the tail, need 2",
                tail.len()
            )));
        }
        q.push(qa);
        c.push(tail.iter().sum::<f64>() / tail.len() as f64);
    }
    Ok(TailFit {
        method: TailMethod::Fhs,
        levels: levels.to_vec(),
        q,
        c,
        gpd: None,
    })
}

pub fn fhs_tail(fit: &GarchFit, returns: &[f64], levels: &[f64]) -> Result<TailFit> {
    fhs_tail_standardized(&fit.standardized(returns), levels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::std_t_quantile;
    use rand::SeedableRng;

    #[test]
    fn fhs_on_equally_spaced_points() {
        let z: Vec<f64> = (0..200).map(|i| -2.0 + 4.0 * i as f64 / 199.0).collect();
        let t = fhs_tail_standardized(&z, &[0.025]).unwrap();
        assert_eq!(t.q[0], z[4]);
        let expect = z[..5].iter().sum::<f64>() / 5.0;
        assert!((t.c[0] - expect).abs() < 1e-12);
        assert!(t.c[0] < t.q[0]);

        let z2: Vec<f64> = z.iter().map(|v| 2.0 * v).collect();
        let t2 = fhs_tail_standardized(&z2, &[0.025]).unwrap();
        assert!((t2.q[0] - 2.0 * t.q[0]).abs() < 1e-12 && (t2.c[0] - 2.0 * t.c[0]).abs() < 1e-12);

        let a = t.scaled(1.5);
        let b = t.scaled(3.0);
        assert!((b[0].0 - 2.0 * a[0].0).abs() < 1e-12 && (b[0].1 - 2.0 * a[0].1).abs() < 1e-12);
    }

    #[test]
    fn fhs_needs_two_tail_points() {
        let z: Vec<f64> = (0..50).map(|i| i as f64).collect();
        assert!(fhs_tail_standardized(&z, &[0.005]).is_err());
    }

    #[test]
    fn pot_recovers_t5_tail_quantile() {
        let nu = 5.0;
        let exact = std_t_quantile(0.005, nu);
        let dist = rand_distr::StudentT::new(nu).unwrap();
        let mut rel_errors = Vec::new();
        for seed in 0..8u64 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let z: Vec<f64> = (0..10_000)
                .map(|_| crate::dist::sample_std_t(&mut rng, &dist, nu))
                .collect();
            let t = pot_tail_standardized(&z, &[0.005, 0.025], 0.10).unwrap();
            for (q, c) in t.q.iter().zip(&t.c) {
                assert!(c < q);
            }
            assert!(t.q[0] < t.q[1]);
            let g = t.gpd.unwrap();
            assert!(g.beta > 0.0 && g.exceedances == 999);
            rel_errors.push(((t.q[0] - exact) / exact).abs());
        }
        // single-sample sd of the estimate is about 2.5%
        let mean = rel_errors.iter().sum::<f64>() / rel_errors.len() as f64;
        assert!(mean < 0.05, "{rel_errors:?}");
        assert!(rel_errors.iter().filter(|e| **e < 0.05).count() >= 6, "{rel_errors:?}");
    }

    #[test]
    fn pot_guards() {
        let z: Vec<f64> = (0..200).map(|i| (i as f64 - 100.0) / 30.0).collect();
        // 10% of 200 gives 19 exceedances
        assert!(matches!(pot_tail_standardized(&z, &[0.005], 0.10), Err(FcwqError::ModelFit(_))));
        assert!(pot_tail_standardized(&z, &[0.005], 0.5).is_err());
    }
}
