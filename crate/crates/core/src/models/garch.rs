//! GJR-GARCH(1,1) and EGARCH(1,1) with unit-variance Student-t errors,
//! estimated by (quasi) maximum likelihood under a zero conditional mean.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::dist::{std_t_abs_mean, std_t_quantile, std_t_tail_mean};
use crate::error::{FcwqError, Result};
use crate::optimizer::{minimize_smooth, OptimizeProblem, OptimizeResult, OptimizerSettings};

/// Minimum window length accepted by the volatility fits.
pub const MIN_WINDOW: usize = 250;
const NU_MAX: f64 = 500.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GarchKind {
    Gjr,
    Egarch,
}

/// `(omega, alpha1, gamma, beta)` plus the t degrees of freedom `nu`.
///
/// GJR: `s2_t = omega + (alpha1 + gamma I(r_{t-1} < 0)) r_{t-1}^2 + beta s2_{t-1}`.
/// EGARCH: `ln s2_t = omega + beta ln s2_{t-1} + alpha1 (|z_{t-1}| - E|z|) + gamma z_{t-1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GarchParams {
    pub omega: f64,
    pub alpha1: f64,
    pub gamma: f64,
    pub beta: f64,
    pub nu: f64,
}

impl GarchParams {
    pub fn as_array(&self) -> [f64; 5] {
        [self.omega, self.alpha1, self.gamma, self.beta, self.nu]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        Self {
            omega: a[0],
            alpha1: a[1],
            gamma: a[2],
            beta: a[3],
            nu: a[4],
        }
    }

    /// Checks the admissible region of `kind`.
    pub fn is_valid(&self, kind: GarchKind) -> bool {
        if !(self.nu > 2.0 && self.nu <= NU_MAX) {
            return false;
        }
        match kind {
            GarchKind::Gjr => {
                self.omega > 0.0
                    && self.alpha1 >= 0.0
                    && self.alpha1 + self.gamma >= 0.0
                    && self.beta >= 0.0
                    && self.alpha1 + 0.5 * self.gamma + self.beta < 1.0
            }
            GarchKind::Egarch => self.beta.abs() < 1.0 && self.omega.is_finite(),
        }
    }

    /// Within `1e-3` of the stationarity edge or the degrees-of-freedom cap.
    pub fn near_boundary(&self, kind: GarchKind) -> bool {
        let edge = match kind {
            GarchKind::Gjr => self.alpha1 + 0.5 * self.gamma + self.beta > 1.0 - 1e-3,
            GarchKind::Egarch => self.beta.abs() > 1.0 - 1e-3,
        };
        edge || self.nu > NU_MAX * (1.0 - 1e-3)
    }
}

/// One GJR variance update.
#[inline]
pub fn gjr_step(p: &GarchParams, prev_var: f64, prev_r: f64) -> f64 {
    let lev = if prev_r < 0.0 { p.gamma } else { 0.0 };
    p.omega + (p.alpha1 + lev) * prev_r * prev_r + p.beta * prev_var
}

/// One EGARCH log-variance update; `abs_mean` is `E|z|` under the error law.
#[inline]
pub fn egarch_step(p: &GarchParams, prev_log_var: f64, prev_r: f64, abs_mean: f64) -> f64 {
    let z = prev_r / (0.5 * prev_log_var).exp();
    p.omega + p.beta * prev_log_var + p.alpha1 * (z.abs() - abs_mean) + p.gamma * z
}

/// Runs the variance recursion over `returns`, starting from `initial_var`.
/// Returns the in-sample variance path and the one-step-ahead variance.
pub fn variance_path(kind: GarchKind, p: &GarchParams, returns: &[f64], initial_var: f64) -> (Vec<f64>, f64) {
    let mut path = Vec::with_capacity(returns.len());
    let mut var = initial_var;
    match kind {
        GarchKind::Gjr => {
            for &r in returns {
                path.push(var);
                var = gjr_step(p, var, r);
            }
        }
        GarchKind::Egarch => {
            let abs_mean = std_t_abs_mean(p.nu);
            let mut lv = initial_var.ln();
            for &r in returns {
                path.push(lv.exp());
                lv = egarch_step(p, lv, r, abs_mean);
            }
            var = lv.exp();
        }
    }
    (path, var)
}

/// Sample variance about zero (the zero-mean convention).
pub fn initial_variance(returns: &[f64]) -> f64 {
    returns.iter().map(|r| r * r).sum::<f64>() / returns.len() as f64
}

/// Mean negative Student-t log-likelihood of `returns` under `p`.
pub fn neg_log_likelihood(kind: GarchKind, p: &GarchParams, returns: &[f64], initial_var: f64) -> f64 {
    if !p.is_valid(kind) {
        return f64::INFINITY;
    }
    let nu = p.nu;
    let c = ln_gamma((nu + 1.0) / 2.0) - ln_gamma(nu / 2.0) - 0.5 * (std::f64::consts::PI * (nu - 2.0)).ln();
    let k = 0.5 * (nu + 1.0);
    let inv = 1.0 / (nu - 2.0);
    let mut acc = 0.0;
    let mut var = initial_var;
    let abs_mean = if kind == GarchKind::Egarch { std_t_abs_mean(nu) } else { 0.0 };
    let mut lv = initial_var.ln();
    for &r in returns {
        let (v, lnv) = match kind {
            GarchKind::Gjr => (var, var.ln()),
            GarchKind::Egarch => (lv.exp(), lv),
        };
        if !(v > 0.0 && v.is_finite()) {
            return f64::INFINITY;
        }
        acc += c - 0.5 * lnv - k * (r * r * inv / v).ln_1p();
        match kind {
            GarchKind::Gjr => var = gjr_step(p, var, r),
            GarchKind::Egarch => lv = egarch_step(p, lv, r, abs_mean),
        }
    }
    let out = -acc / returns.len() as f64;
    if out.is_finite() {
        out
    } else {
        f64::INFINITY
    }
}

/// Unconstrained coordinates used by the optimizer.
fn to_free(kind: GarchKind, p: &GarchParams) -> Vec<f64> {
    let nu = (p.nu - 2.0).max(1e-6).ln();
    match kind {
        GarchKind::Gjr => vec![
            p.omega.max(1e-12).ln(),
            p.alpha1.max(1e-8).ln(),
            (p.alpha1 + p.gamma).max(1e-8).ln(),
            p.beta.max(1e-8).ln(),
            nu,
        ],
        GarchKind::Egarch => vec![p.omega, p.alpha1, p.gamma, p.beta.clamp(-0.999_999, 0.999_999).atanh(), nu],
    }
}

fn from_free(kind: GarchKind, x: &[f64]) -> GarchParams {
    let nu = 2.0 + x[4].exp();
    match kind {
        GarchKind::Gjr => {
            let alpha1 = x[1].exp();
            GarchParams {
                omega: x[0].exp(),
                alpha1,
                gamma: x[2].exp() - alpha1,
                beta: x[3].exp(),
                nu,
            }
        }
        GarchKind::Egarch => GarchParams {
            omega: x[0],
            alpha1: x[1],
            gamma: x[2],
            beta: x[3].tanh(),
            nu,
        },
    }
}

fn default_start(kind: GarchKind, var: f64) -> GarchParams {
    match kind {
        GarchKind::Gjr => GarchParams {
            omega: 0.04 * var,
            alpha1: 0.03,
            gamma: 0.10,
            beta: 0.88,
            nu: 8.0,
        },
        GarchKind::Egarch => GarchParams {
            omega: 0.03 * var.ln(),
            alpha1: 0.12,
            gamma: -0.08,
            beta: 0.97,
            nu: 8.0,
        },
    }
}

/// A fitted volatility model over one estimation window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GarchFit {
    pub kind: GarchKind,
    pub params: GarchParams,
    pub initial_var: f64,
    /// In-sample conditional standard deviations.
    pub sigma_path: Vec<f64>,
    pub sigma_forecast: f64,
    pub mean_neg_log_likelihood: f64,
}

impl GarchFit {
    pub fn df(&self) -> f64 {
        self.params.nu
    }

    /// Returns standardized by the in-sample volatility path.
    pub fn standardized(&self, returns: &[f64]) -> Vec<f64> {
        returns.iter().zip(&self.sigma_path).map(|(r, s)| r / s).collect()
    }

    /// Asymptotic standard errors of `(omega, alpha1, gamma, beta, nu)` from the
    /// inverse numerical Hessian of the log-likelihood.
    pub fn standard_errors(&self, returns: &[f64]) -> Result<[f64; 5]> {
        let n = returns.len() as f64;
        let x0 = self.params.as_array();
        let f = |x: &[f64]| {
            let p = GarchParams::from_array([x[0], x[1], x[2], x[3], x[4]]);
            neg_log_likelihood(self.kind, &p, returns, self.initial_var)
        };
        let h: Vec<f64> = x0.iter().map(|v| 1e-4 * v.abs().max(1e-2)).collect();
        let mut hess = DMatrix::<f64>::zeros(5, 5);
        let f0 = f(&x0);
        for i in 0..5 {
            for j in i..5 {
                let mut pp = x0;
                let mut pm = x0;
                let mut mp = x0;
                let mut mm = x0;
                pp[i] += h[i];
                pp[j] += h[j];
                pm[i] += h[i];
                pm[j] -= h[j];
                mp[i] -= h[i];
                mp[j] += h[j];
                mm[i] -= h[i];
                mm[j] -= h[j];
                let v = if i == j {
                    let mut p1 = x0;
                    let mut m1 = x0;
                    p1[i] += h[i];
                    m1[i] -= h[i];
                    (f(&p1) - 2.0 * f0 + f(&m1)) / (h[i] * h[i])
                } else {
                    (f(&pp) - f(&pm) - f(&mp) + f(&mm)) / (4.0 * h[i] * h[j])
                };
                hess[(i, j)] = v * n;
                hess[(j, i)] = v * n;
            }
        }
        let cov = hess
            .try_inverse()
            .ok_or_else(|| FcwqError::Singular("GARCH information matrix".into()))?;
        let mut se = [0.0; 5];
        for (i, s) in se.iter_mut().enumerate() {
            *s = cov[(i, i)].max(0.0).sqrt();
        }
        Ok(se)
    }
}

/// Fits a GARCH-type model on one window by BFGS over transformed parameters.
/// `warm` (e.g. the previous window's estimate) is tried first; the default
/// starts are used when it is absent or does not converge.
pub fn fit_garch(returns: &[f64], kind: GarchKind, opt: &OptimizerSettings, warm: Option<&GarchParams>) -> Result<GarchFit> {
    if returns.len() < MIN_WINDOW {
        return Err(FcwqError::InvalidInput(format!(
            "GARCH window has {} observations, need at least {MIN_WINDOW}",
            returns.len()
        )));
    }
    let v0 = initial_variance(returns);
    let mut starts = vec![to_free(kind, &default_start(kind, v0))];
    let mut alt = default_start(kind, v0);
    alt.nu = 5.0;
    if kind == GarchKind::Gjr {
        alt.beta = 0.80;
        alt.omega = 0.1 * v0;
    } else {
        alt.beta = 0.9;
        alt.omega = 0.1 * v0.ln();
    }
    starts.push(to_free(kind, &alt));

    let obj = |x: &[f64]| {
        let p = from_free(kind, x);
        if p.nu > NU_MAX {
            return f64::INFINITY;
        }
        neg_log_likelihood(kind, &p, returns, v0)
    };
    let accepted =
        |r: &OptimizeResult| r.converged || r.grad_norm <= 1e-3 || from_free(kind, &r.argmin).near_boundary(kind);
    // The warm start runs alone; the default starts are the fallback.
    let warm_res = match warm.filter(|w| w.is_valid(kind)) {
        Some(w) => minimize_smooth(&OptimizeProblem::new(&obj, 5, vec![to_free(kind, w)]), opt.tol, opt.max_iter).ok(),
        None => None,
    };
    let res = match warm_res {
        Some(r) if accepted(&r) => r,
        _ => minimize_smooth(&OptimizeProblem::new(&obj, 5, starts), opt.tol, opt.max_iter)?,
    };
    let params = from_free(kind, &res.argmin);
    // Stalls close to a stationary point or on the boundary are accepted.
    if !accepted(&res) {
        return Err(FcwqError::Optimization {
            msg: format!("{kind:?} likelihood did not converge (|grad| = {:.3e})", res.grad_norm),
            best_point: params.as_array().to_vec(),
            best_value: res.value,
        });
    }
    let (var_path, next_var) = variance_path(kind, &params, returns, v0);
    Ok(GarchFit {
        kind,
        params,
        initial_var: v0,
        sigma_path: var_path.iter().map(|v| v.sqrt()).collect(),
        sigma_forecast: next_var.sqrt(),
        mean_neg_log_likelihood: res.value,
    })
}

/// Per-level `(VaR, ES)` implied by the fitted Student-t errors.
pub fn parametric_var_es(fit: &GarchFit, levels: &[f64]) -> Vec<(f64, f64)> {
    parametric_var_es_at(fit.sigma_forecast, fit.df(), levels)
}

/// `(sigma q_p, sigma c_p)` for the unit-variance t with `nu` degrees of freedom.
pub fn parametric_var_es_at(sigma: f64, nu: f64, levels: &[f64]) -> Vec<(f64, f64)> {
    levels
        .iter()
        .map(|&a| (sigma * std_t_quantile(a, nu), sigma * std_t_tail_mean(a, nu)))
        .collect()
}
