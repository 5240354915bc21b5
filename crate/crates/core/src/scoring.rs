//! Loss and scoring functions for VaR and (VaR, ES) forecasts.
//!
//! The violation indicator is `I(r < Q)` with a strict inequality; a return
//! exactly at the quantile is not a violation.

use serde::{Deserialize, Serialize};

use crate::error::{FcwqError, Result};

/// A tail probability strictly inside `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct QuantileLevel(f64);

impl QuantileLevel {
    /// The regulatory 2.5% level.
    pub const TARGET: QuantileLevel = QuantileLevel(0.025);

    pub fn new(alpha: f64) -> Result<Self> {
        if alpha > 0.0 && alpha < 1.0 {
            Ok(Self(alpha))
        } else {
            Err(FcwqError::InvalidInput(format!(
                "quantile level {alpha} is not in (0, 1)"
            )))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for QuantileLevel {
    fn default() -> Self {
        Self::TARGET
    }
}

impl TryFrom<f64> for QuantileLevel {
    type Error = FcwqError;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<QuantileLevel> for f64 {
    fn from(q: QuantileLevel) -> f64 {
        q.0
    }
}

/// A joint (VaR, ES) forecast in return units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskForecast {
    pub var: f64,
    pub es: f64,
}

impl RiskForecast {
    pub fn new(var: f64, es: f64) -> Self {
        Self { var, es }
    }
}

#[inline]
fn violation(r: f64, q: f64) -> f64 {
    if r < q {
        1.0
    } else {
        0.0
    }
}

/// Check (pinball) loss `(alpha - I(r < q)) (r - q)`.
#[inline]
pub fn quantile_loss(r: f64, q: f64, alpha: QuantileLevel) -> f64 {
    (alpha.0 - violation(r, q)) * (r - q)
}

/// Negative asymmetric-Laplace log-likelihood of a joint (VaR, ES) forecast.
///
/// `S = -ln((alpha - 1) / ES) - (r - Q)(alpha - I(r < Q)) / (alpha ES)`,
/// defined only for `ES < 0`.
pub fn al_joint_score(r: f64, f: RiskForecast, alpha: QuantileLevel) -> Result<f64> {
    if !(f.es < 0.0) {
        return Err(FcwqError::Domain(format!(
            "AL score needs ES < 0, got {}",
            f.es
        )));
    }
    Ok(al_joint_score_unchecked(r, f.var, f.es, alpha.0))
}

/// Same as [`al_joint_score`] without the sign check; callers guarantee `es < 0`.
#[inline]
pub(crate) fn al_joint_score_unchecked(r: f64, var: f64, es: f64, alpha: f64) -> f64 {
    let ind = violation(r, var);
    -((alpha - 1.0) / es).ln() - (r - var) * (alpha - ind) / (alpha * es)
}

/// Choice functions of a Fissler–Ziegel joint score.
///
/// Requirements: `g1` increasing, `g2` strictly increasing and strictly
/// convex with `g2 = h'` and `g2(x) -> 0` as `x -> -inf`.
pub trait FzFamily {
    fn g1(&self, x: f64) -> f64;
    fn g2(&self, x: f64) -> Result<f64>;
    fn h(&self, x: f64) -> Result<f64>;
    fn a(&self, r: f64) -> f64;
}

/// The choices that recover the AL score: `G1 = 0`, `G2 = -1/x`,
/// `H = -ln(-x)`, `a = 1 - ln(1 - alpha)`.
#[derive(Debug, Clone, Copy)]
pub struct AlFamily {
    pub alpha: QuantileLevel,
}

impl FzFamily for AlFamily {
    fn g1(&self, _x: f64) -> f64 {
        0.0
    }
    fn g2(&self, x: f64) -> Result<f64> {
        if x < 0.0 {
            Ok(-1.0 / x)
        } else {
            Err(FcwqError::Domain(format!("G2(x) = -1/x needs x < 0, got {x}")))
        }
    }
    fn h(&self, x: f64) -> Result<f64> {
        if x < 0.0 {
            Ok(-(-x).ln())
        } else {
            Err(FcwqError::Domain(format!("H(x) = -ln(-x) needs x < 0, got {x}")))
        }
    }
    fn a(&self, _r: f64) -> f64 {
        1.0 - (1.0 - self.alpha.value()).ln()
    }
}

/// `G1(x) = x`, `G2 = H = exp`, `a = 0`; defined on the whole real line.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExpFamily;

impl FzFamily for ExpFamily {
    fn g1(&self, x: f64) -> f64 {
        x
    }
    fn g2(&self, x: f64) -> Result<f64> {
        Ok(x.exp())
    }
    fn h(&self, x: f64) -> Result<f64> {
        Ok(x.exp())
    }
    fn a(&self, _r: f64) -> f64 {
        0.0
    }
}

/// General Fissler–Ziegel score
/// `(I - alpha) G1(Q) - I G1(r) + G2(ES)(ES - Q + I (Q - r) / alpha) - H(ES) + a(r)`.
pub fn fz_score<F: FzFamily + ?Sized>(
    r: f64,
    f: RiskForecast,
    alpha: QuantileLevel,
    family: &F,
) -> Result<f64> {
    let a = alpha.value();
    let ind = violation(r, f.var);
    let g2 = family.g2(f.es)?;
    let h = family.h(f.es)?;
    Ok((ind - a) * family.g1(f.var) - ind * family.g1(r)
        + g2 * (f.es - f.var + ind * (f.var - r) / a)
        - h
        + family.a(r))
}

/// Arithmetic mean of a non-empty score sample.
pub fn mean_score(scores: &[f64]) -> Result<f64> {
    if scores.is_empty() {
        return Err(FcwqError::InvalidInput("mean of empty score series".into()));
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}
