//! CARE with asymmetric slope: an expectile recursion of the CAViaR form,
//! fitted by asymmetric least squares over a grid of expectile levels.
//! The level whose in-sample violation rate is closest to the target
//! quantile level supplies the VaR.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::caviar::{caviar_path, caviar_step, random_candidate, screen_candidates, to_array4, INIT_OBS};
use super::garch::MIN_WINDOW;
use crate::dist::empirical_expectile;
use crate::error::{FcwqError, Result};
use crate::optimizer::{minimize_smooth, OptimizeProblem, OptimizerSettings};
use crate::scoring::QuantileLevel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CareSettings {
    /// Number of expectile levels searched in `(0, alpha]`.
    pub grid_size: usize,
    /// Random candidates screened for the first expectile level on a cold start.
    pub starts: usize,
    /// Candidates refined on a cold start.
    pub refine: usize,
}

impl Default for CareSettings {
    fn default() -> Self {
        Self {
            grid_size: 100,
            starts: 10_000,
            refine: 10,
        }
    }
}

/// Asymmetric squared loss `|tau - I(r < mu)| (r - mu)^2`.
#[inline]
pub fn als_loss(r: f64, mu: f64, tau: f64) -> f64 {
    let w = if r < mu { 1.0 - tau } else { tau };
    w * (r - mu) * (r - mu)
}

/// Mean ALS of the recursion divided by `tau` (same minimizer, better scaled
/// for small levels); `+inf` if the path explodes.
pub fn care_objective(b: &[f64; 4], returns: &[f64], mu_init: f64, tau: f64) -> f64 {
    let mut mu = mu_init;
    let mut acc = 0.0;
    for &r in returns {
        if !(mu.abs() < 1e8) {
            return f64::INFINITY;
        }
        acc += als_loss(r, mu, tau);
        mu = caviar_step(b, mu, r);
    }
    acc / returns.len() as f64 / tau
}

/// Expectile levels `alpha k / n`, `k = 1..=n`.
pub fn tau_grid(alpha: f64, n: usize) -> Vec<f64> {
    (1..=n).map(|k| alpha * k as f64 / n as f64).collect()
}

/// Index of the level whose violation rate is closest to `alpha`
/// (ties go to the smaller level). Levels with no violations are skipped.
pub fn select_tau(taus: &[f64], vrates: &[f64], alpha: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, (&tau, &v)) in taus.iter().zip(vrates).enumerate() {
        if v <= 0.0 {
            continue;
        }
        let d = (v - alpha).abs();
        match best {
            Some((j, bd)) if d > bd || (d == bd && tau >= taus[j]) => {}
            _ => best = Some((i, d)),
        }
    }
    best.map(|(i, _)| i)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CareFit {
    pub level: f64,
    pub tau_star: f64,
    pub betas: [f64; 4],
    pub mu_init: f64,
    pub mu_path: Vec<f64>,
    pub var_forecast: f64,
    pub es_forecast: f64,
    pub taus: Vec<f64>,
    pub violation_rates: Vec<f64>,
    /// Fitted parameters for every grid level, reusable as warm starts.
    pub tau_betas: Vec<[f64; 4]>,
}

fn fit_one_tau(
    returns: &[f64],
    tau: f64,
    mu_init: f64,
    starts: Vec<Vec<f64>>,
    opt: &OptimizerSettings,
) -> Result<[f64; 4]> {
    let obj = |x: &[f64]| care_objective(&to_array4(x), returns, mu_init, tau);
    let problem = OptimizeProblem::new(obj, 4, starts)
        .with_bounds(vec![(-1e3, 1e3), (-0.999, 0.999), (-50.0, 50.0), (-50.0, 50.0)]);
    let res = minimize_smooth(&problem, opt.tol, opt.max_iter)?;
    if !res.value.is_finite() {
        return Err(FcwqError::Optimization {
            msg: format!("CARE objective not finite at tau = {tau}"),
            best_point: res.argmin,
            best_value: res.value,
        });
    }
    Ok(to_array4(&res.argmin))
}

/// Fits CARE-AS at one quantile level. `warm` holds per-grid-level
/// parameters from a previous window.
pub fn fit_care_as(
    returns: &[f64],
    level: QuantileLevel,
    settings: &CareSettings,
    opt: &OptimizerSettings,
    seed: u64,
    warm: Option<&[[f64; 4]]>,
) -> Result<CareFit> {
    if returns.len() < MIN_WINDOW {
        return Err(FcwqError::InvalidInput(format!(
            "CARE window has {} observations, need at least {MIN_WINDOW}",
            returns.len()
        )));
    }
    if settings.grid_size == 0 {
        return Err(FcwqError::Config("care.grid_size must be positive".into()));
    }
    let alpha = level.value();
    let taus = tau_grid(alpha, settings.grid_size);
    let warm = warm.filter(|w| w.len() == taus.len());
    let head = &returns[..INIT_OBS.min(returns.len())];
    let n = returns.len() as f64;
    let mean_abs = returns.iter().map(|r| r.abs()).sum::<f64>() / n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // largest level first; each smaller level starts from its neighbour
    let mut tau_betas = vec![[0.0; 4]; taus.len()];
    let mut prev: Option<[f64; 4]> = None;
    for k in (0..taus.len()).rev() {
        let tau = taus[k];
        let mu_init = empirical_expectile(head, tau);
        let mut starts: Vec<Vec<f64>> = Vec::new();
        if let Some(w) = warm {
            starts.push(w[k].to_vec());
        }
        if let Some(p) = prev {
            starts.push(p.to_vec());
        }
        if starts.is_empty() {
            let e_hat = empirical_expectile(returns, tau);
            let obj = |x: &[f64]| care_objective(&to_array4(x), returns, mu_init, tau);
            starts = screen_candidates(obj, settings.starts, settings.refine, || {
                random_candidate(&mut rng, e_hat, mean_abs).to_vec()
            });
            if starts.is_empty() {
                starts.push(vec![e_hat * 0.1, 0.9, 0.0, 0.0]);
            }
        }
        let b = fit_one_tau(returns, tau, mu_init, starts, opt)?;
        tau_betas[k] = b;
        prev = Some(b);
    }

    let violation_rates: Vec<f64> = taus
        .iter()
        .zip(&tau_betas)
        .map(|(&tau, b)| {
            let (path, _) = caviar_path(b, returns, empirical_expectile(head, tau));
            returns.iter().zip(&path).filter(|(r, m)| r < m).count() as f64 / n
        })
        .collect();
    let k = select_tau(&taus, &violation_rates, alpha).ok_or_else(|| {
        FcwqError::ModelFit(format!("no expectile level in (0, {alpha}] produces a violation"))
    })?;

    let tau_star = taus[k];
    let betas = tau_betas[k];
    let mu_init = empirical_expectile(head, tau_star);
    let (mu_path, var_forecast) = caviar_path(&betas, returns, mu_init);
    let tail: Vec<f64> = returns.iter().zip(&mu_path).filter(|(r, m)| r < m).map(|(r, _)| *r).collect();
    let tail_mean = tail.iter().sum::<f64>() / tail.len() as f64;
    let mu_mean = mu_path.iter().sum::<f64>() / n;
    let es_forecast = tail_mean / mu_mean * var_forecast;
    Ok(CareFit {
        level: alpha,
        tau_star,
        betas,
        mu_init,
        mu_path,
        var_forecast,
        es_forecast,
        taus,
        violation_rates,
        tau_betas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_als_is_half_ols() {
        let r = [-2.0, -0.5, 0.3, 1.1, 2.5, -1.7];
        let mu = 0.4;
        let als: f64 = r.iter().map(|&x| als_loss(x, mu, 0.5)).sum();
        let ols: f64 = r.iter().map(|&x| (x - mu) * (x - mu)).sum();
        assert!((als - 0.5 * ols).abs() < 1e-12);
    }

    #[test]
    fn constant_half_expectile_is_the_mean() {
        let r: Vec<f64> = (0..300).map(|i| ((i * 37 % 101) as f64 - 40.0) / 17.0).collect();
        let mean = r[1..].iter().sum::<f64>() / (r.len() - 1) as f64;
        let obj = |x: &[f64]| care_objective(&[x[0], 0.0, 0.0, 0.0], &r, 0.0, 0.5);
        let problem = OptimizeProblem::new(obj, 1, vec![vec![0.0]]);
        let res = minimize_smooth(&problem, 1e-10, 1000).unwrap();
        assert!((res.argmin[0] - mean).abs() < 1e-6, "{} vs {mean}", res.argmin[0]);
    }

    #[test]
    fn tau_selection_picks_closest_rate() {
        let taus = tau_grid(0.025, 5);
        assert!((taus[1] - 0.01).abs() < 1e-15);
        // the level 0.01 reproduces alpha exactly
        let v = [0.0, 0.025, 0.03, 0.04, 0.05];
        assert_eq!(select_tau(&taus, &v, 0.025), Some(1));
        // ties go to the smaller level (dyadic values give exact distances)
        let v = [0.0, 0.015625, 0.046875, 0.0625, 0.078125];
        assert_eq!(select_tau(&taus, &v, 0.03125), Some(1));
        assert_eq!(select_tau(&taus, &[0.0; 5], 0.025), None);
    }

    #[test]
    fn fit_selects_from_grid_and_replays() {
        use rand_distr::{Distribution, StudentT};
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t = StudentT::new(5.0).unwrap();
        let r: Vec<f64> = (0..400).map(|_| t.sample(&mut rng)).collect();
        let settings = CareSettings { grid_size: 10, starts: 300, refine: 2 };
        let fit = fit_care_as(&r, QuantileLevel::new(0.025).unwrap(), &settings, &OptimizerSettings::default(), 3, None)
            .unwrap();
        assert!(fit.tau_star > 0.0 && fit.tau_star <= 0.025);
        let k = fit.taus.iter().position(|t| *t == fit.tau_star).unwrap();
        let d = (fit.violation_rates[k] - 0.025).abs();
        for v in fit.violation_rates.iter().filter(|v| **v > 0.0) {
            assert!(d <= (v - 0.025).abs());
        }
        let (p, f) = caviar_path(&fit.betas, &r, fit.mu_init);
        assert_eq!(p, fit.mu_path);
        assert_eq!(f, fit.var_forecast);
        assert!(fit.es_forecast < fit.var_forecast);
    }
}
