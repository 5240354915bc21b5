//! Distribution helpers: unit-variance Student-t, empirical tail statistics,
//! chi-square tail probability.
//!
//! The t quantile starts from the inverse regularized incomplete beta
//! function and is polished with Newton steps on the exact CDF.

use statrs::function::beta::{beta_reg, inv_beta_reg};
use statrs::function::gamma::{gamma_ur, ln_gamma};

use crate::error::{FcwqError, Result};

/// CDF of the standard (unit-scale) Student-t with `nu` degrees of freedom.
pub fn t_cdf(x: f64, nu: f64) -> f64 {
    let h = nu / (nu + x * x);
    let ib = 0.5 * beta_reg(nu / 2.0, 0.5, h);
    if x <= 0.0 {
        ib
    } else {
        1.0 - ib
    }
}

pub fn t_ln_pdf(x: f64, nu: f64) -> f64 {
    ln_gamma((nu + 1.0) / 2.0) - ln_gamma(nu / 2.0) - 0.5 * (nu * std::f64::consts::PI).ln()
        - (nu + 1.0) / 2.0 * (1.0 + x * x / nu).ln()
}

pub fn t_pdf(x: f64, nu: f64) -> f64 {
    t_ln_pdf(x, nu).exp()
}

/// Quantile of the standard Student-t.
pub fn t_quantile(p: f64, nu: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0 && nu > 0.0);
    if p == 0.5 {
        return 0.0;
    }
    let tail = p.min(1.0 - p);
    let y = inv_beta_reg(0.5 * nu, 0.5, 2.0 * tail);
    let mut x = -(nu * (1.0 - y) / y).sqrt();
    for _ in 0..50 {
        let step = (t_cdf(x, nu) - tail) / t_pdf(x, nu);
        if !step.is_finite() {
            break;
        }
        x -= step;
        if step.abs() <= 1e-15 * x.abs().max(1.0) {
            break;
        }
    }
    if p < 0.5 {
        x
    } else {
        -x
    }
}

/// Scale that maps a standard t(nu) draw to unit variance.
#[inline]
pub fn unit_variance_scale(nu: f64) -> f64 {
    ((nu - 2.0) / nu).sqrt()
}

/// Quantile of the unit-variance Student-t.
pub fn std_t_quantile(p: f64, nu: f64) -> f64 {
    t_quantile(p, nu) * unit_variance_scale(nu)
}

/// Lower tail mean `E[z | z <= q_p]` of the unit-variance Student-t.
///
/// For the standard t: `-(f(t_p) / p) (nu + t_p^2) / (nu - 1)`.
pub fn std_t_tail_mean(p: f64, nu: f64) -> f64 {
    let tp = t_quantile(p, nu);
    -(t_pdf(tp, nu) / p) * (nu + tp * tp) / (nu - 1.0) * unit_variance_scale(nu)
}

/// Log density of the unit-variance Student-t.
pub fn std_t_ln_pdf(z: f64, nu: f64) -> f64 {
    let s = unit_variance_scale(nu);
    t_ln_pdf(z / s, nu) - s.ln()
}

/// `E|z|` for the unit-variance Student-t.
pub fn std_t_abs_mean(nu: f64) -> f64 {
    2.0 * (nu - 2.0).sqrt() * (ln_gamma((nu + 1.0) / 2.0) - ln_gamma(nu / 2.0)).exp()
        / (std::f64::consts::PI.sqrt() * (nu - 1.0))
}

/// Draws a unit-variance Student-t variate.
pub fn sample_std_t<R: rand::Rng + ?Sized>(rng: &mut R, dist: &rand_distr::StudentT<f64>, nu: f64) -> f64 {
    use rand_distr::Distribution;
    dist.sample(rng) * unit_variance_scale(nu)
}

/// Empirical quantile as the `ceil(p n)`-th order statistic of sorted data.
pub fn empirical_quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let k = ((p * n as f64).ceil() as usize).clamp(1, n);
    sorted[k - 1]
}

pub fn empirical_quantile(data: &[f64], p: f64) -> f64 {
    let mut s = data.to_vec();
    s.sort_by(f64::total_cmp);
    empirical_quantile_sorted(&s, p)
}

/// Sample tau-expectile (asymmetric least squares location) by fixed-point iteration.
pub fn empirical_expectile(data: &[f64], tau: f64) -> f64 {
    let mut mu = data.iter().sum::<f64>() / data.len() as f64;
    for _ in 0..200 {
        let (mut num, mut den) = (0.0, 0.0);
        for &r in data {
            let w = if r < mu { 1.0 - tau } else { tau };
            num += w * r;
            den += w;
        }
        let next = num / den;
        if (next - mu).abs() < 1e-14 * mu.abs().max(1.0) {
            return next;
        }
        mu = next;
    }
    mu
}

/// Upper tail probability of a chi-square variate with `k` degrees of freedom.
pub fn chi_square_sf(x: f64, k: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    gamma_ur(k / 2.0, x / 2.0)
}

/// Generalized Pareto tail of excesses `y > 0` with shape `xi` and scale `beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gpd {
    pub xi: f64,
    pub beta: f64,
}

impl Gpd {
    /// `|xi|` below this uses the exponential limit.
    pub const XI_EPS: f64 = 1e-9;

    pub fn ln_pdf(&self, y: f64) -> f64 {
        if y < 0.0 || self.beta <= 0.0 {
            return f64::NEG_INFINITY;
        }
        if self.xi.abs() < Self::XI_EPS {
            return -self.beta.ln() - y / self.beta;
        }
        let arg = 1.0 + self.xi * y / self.beta;
        if arg <= 0.0 {
            return f64::NEG_INFINITY;
        }
        -self.beta.ln() - (1.0 + 1.0 / self.xi) * arg.ln()
    }

    pub fn neg_log_likelihood(&self, excesses: &[f64]) -> f64 {
        -excesses.iter().map(|&y| self.ln_pdf(y)).sum::<f64>()
    }

    /// Excess over the threshold reached with exceedance probability `ratio`
    /// (tail probability divided by the threshold exceedance rate).
    pub fn excess_quantile(&self, ratio: f64) -> f64 {
        if self.xi.abs() < Self::XI_EPS {
            -self.beta * ratio.ln()
        } else {
            self.beta / self.xi * (ratio.powf(-self.xi) - 1.0)
        }
    }

    /// Maximum-likelihood fit, starting from probability-weighted moments.
    pub fn fit(excesses: &[f64]) -> Result<Self> {
        use crate::optimizer::{minimize_smooth, OptimizeProblem};
        if excesses.len() < 2 {
            return Err(FcwqError::ModelFit("too few excesses for a GPD fit".into()));
        }
        let n = excesses.len() as f64;
        let mean = excesses.iter().sum::<f64>() / n;
        let var = excesses.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let xi0 = (0.5 * (1.0 - mean * mean / var)).clamp(-0.4, 0.8);
        let beta0 = (mean * (1.0 - xi0)).max(1e-6);
        let obj = |p: &[f64]| {
            let g = Gpd { xi: p[0], beta: p[1].exp() };
            g.neg_log_likelihood(excesses) / n
        };
        let starts = vec![vec![xi0, beta0.ln()], vec![0.1, mean.ln()], vec![0.0, mean.ln()]];
        let problem = OptimizeProblem::new(obj, 2, starts).with_bounds(vec![(-0.9, 3.0), (-30.0, 30.0)]);
        let res = minimize_smooth(&problem, 1e-8, 2000)?;
        if !res.value.is_finite() {
            return Err(FcwqError::ModelFit("GPD likelihood not finite".into()));
        }
        Ok(Gpd {
            xi: res.argmin[0],
            beta: res.argmin[1].exp(),
        })
    }
}
