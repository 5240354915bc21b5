//! Backtesting: violation rates, aggregated losses, regression-based VaR and
//! ES calibration tests with Newey-West covariance, and report assembly.

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::ReturnSeries;
use crate::dist::chi_square_sf;
use crate::error::{FcwqError, Result};
use crate::scoring::{al_joint_score_unchecked, quantile_loss, QuantileLevel};

/// Published results on proprietary index data; kept for reference only.
pub const REFERENCE_MAD: f64 = 0.0028;
pub const REFERENCE_AVG_QL: f64 = 164.2;
pub const REFERENCE_AVG_JOINT_LOSS: f64 = 4257.6;

pub const NW_LAGS: usize = 20;
/// Minimum out-of-sample length for the calibration tests.
pub const MIN_TEST_LENGTH: usize = 51;

pub const CALIBRATION_NOTE: &str = "Calibration p-values use substitute regression forms: \
VaR residual u_t = alpha - I(r_t <= VaR_t) on [1, VaR_t, u_(t-1)]; \
ES residual e_t = I(r_t <= VaR_t)(r_t - ES_t)/(alpha |ES_t|) on [1, ES_t, e_(t-1)]; \
Wald chi-square(3) with Newey-West (Bartlett, 20 lags) covariance.";

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(FcwqError::DimensionMismatch { expected: a, got: b });
    }
    if a == 0 {
        return Err(FcwqError::InvalidInput("empty out-of-sample period".into()));
    }
    Ok(())
}

/// Fraction of returns strictly below the VaR forecast.
pub fn vrate(returns: &[f64], var: &[f64]) -> Result<f64> {
    check_len(returns.len(), var.len())?;
    Ok(returns.iter().zip(var).filter(|(r, q)| r < q).count() as f64 / returns.len() as f64)
}

pub fn aggregate_quantile_loss(returns: &[f64], var: &[f64], alpha: QuantileLevel) -> Result<f64> {
    check_len(returns.len(), var.len())?;
    Ok(returns.iter().zip(var).map(|(&r, &q)| quantile_loss(r, q, alpha)).sum())
}

/// Indices with a non-negative ES forecast.
pub fn nonnegative_es(es: &[f64]) -> Vec<usize> {
    es.iter().enumerate().filter(|(_, e)| !(**e < 0.0)).map(|(i, _)| i).collect()
}

/// Sum of AL joint scores over the out-of-sample period.
pub fn aggregate_joint_loss(returns: &[f64], var: &[f64], es: &[f64], alpha: QuantileLevel) -> Result<f64> {
    check_len(returns.len(), var.len())?;
    check_len(returns.len(), es.len())?;
    let bad = nonnegative_es(es);
    if !bad.is_empty() {
        return Err(FcwqError::Domain(format!("ES >= 0 at positions {bad:?}")));
    }
    Ok((0..returns.len())
        .map(|t| al_joint_score_unchecked(returns[t], var[t], es[t], alpha.value()))
        .sum())
}

/// Same as [`aggregate_joint_loss`] but names offending dates.
pub fn aggregate_joint_loss_dated(
    dates: &[NaiveDate],
    returns: &[f64],
    var: &[f64],
    es: &[f64],
    alpha: QuantileLevel,
) -> Result<f64> {
    check_len(dates.len(), es.len())?;
    let bad = nonnegative_es(es);
    if !bad.is_empty() {
        let list: Vec<String> = bad.iter().map(|&i| dates[i].to_string()).collect();
        return Err(FcwqError::Domain(format!("ES >= 0 on {}", list.join(", "))));
    }
    aggregate_joint_loss(returns, var, es, alpha)
}

/// OLS coefficients and residuals.
pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
    let xtx = x.transpose() * x;
    let inv = invert(&xtx)?;
    let beta = &inv * x.transpose() * y;
    let resid = y - x * &beta;
    Ok((beta, resid))
}

fn invert(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let scale = a.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let chol = a.clone().cholesky().ok_or_else(|| FcwqError::Singular("X'X is not positive definite".into()))?;
    let l = chol.l();
    let min_pivot = l.diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v * v));
    if !(min_pivot > 1e-12 * scale.max(1e-300)) {
        return Err(FcwqError::Singular("regressors are collinear".into()));
    }
    Ok(chol.inverse())
}

/// Newey-West HAC covariance of OLS coefficients,
/// `(X'X)^-1 S (X'X)^-1` with Bartlett weights `1 - l/(lags+1)`.
pub fn newey_west_cov(x: &DMatrix<f64>, resid: &DVector<f64>, lags: usize) -> Result<DMatrix<f64>> {
    let (n, k) = x.shape();
    if n <= k {
        return Err(FcwqError::InvalidInput(format!("{n} observations for {k} regressors")));
    }
    if resid.len() != n {
        return Err(FcwqError::DimensionMismatch { expected: n, got: resid.len() });
    }
    let bread = invert(&(x.transpose() * x))?;
    // scores g_t = x_t u_t
    let g = DMatrix::from_fn(n, k, |t, j| x[(t, j)] * resid[t]);
    let mut s = g.transpose() * &g;
    for l in 1..=lags.min(n - 1) {
        let w = 1.0 - l as f64 / (lags as f64 + 1.0);
        let head = g.rows(l, n - l);
        let tail = g.rows(0, n - l);
        let gamma = head.transpose() * tail;
        s += (&gamma + gamma.transpose()) * w;
    }
    let v = &bread * s * &bread;
    Ok((&v + v.transpose()) * 0.5)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTest {
    pub coefficients: Vec<f64>,
    pub statistic: f64,
    pub p_value: f64,
}

/// Regresses `y_t` on `[1, z_t, y_(t-1)]` and Wald-tests all coefficients at zero.
fn lagged_wald(y: &[f64], z: &[f64]) -> Result<CalibrationTest> {
    let n = y.len() - 1;
    let x = DMatrix::from_fn(n, 3, |t, j| match j {
        0 => 1.0,
        1 => z[t + 1],
        _ => y[t],
    });
    let yv = DVector::from_iterator(n, y[1..].iter().copied());
    let (beta, resid) = ols(&x, &yv)?;
    let v = newey_west_cov(&x, &resid, NW_LAGS)?;
    let vinv = invert(&v)?;
    let statistic = (beta.transpose() * vinv * &beta)[(0, 0)];
    Ok(CalibrationTest {
        coefficients: beta.iter().copied().collect(),
        statistic,
        p_value: chi_square_sf(statistic, 3.0).clamp(0.0, 1.0),
    })
}

fn check_test_length(h: usize) -> Result<()> {
    if h < MIN_TEST_LENGTH {
        return Err(FcwqError::InvalidInput(format!(
            "calibration tests need more than 50 observations, got {h}"
        )));
    }
    Ok(())
}

/// VaR calibration: `u_t = alpha - I(r_t <= VaR_t)` on `[1, VaR_t, u_(t-1)]`.
pub fn var_calibration_test(returns: &[f64], var: &[f64], alpha: QuantileLevel) -> Result<CalibrationTest> {
    check_len(returns.len(), var.len())?;
    check_test_length(returns.len())?;
    let a = alpha.value();
    let u: Vec<f64> = returns.iter().zip(var).map(|(r, q)| a - if r <= q { 1.0 } else { 0.0 }).collect();
    lagged_wald(&u, var)
}

/// ES calibration: `e_t = I(r_t <= VaR_t)(r_t - ES_t) / (alpha |ES_t|)` on
/// `[1, ES_t, e_(t-1)]`.
pub fn es_calibration_test(returns: &[f64], var: &[f64], es: &[f64], alpha: QuantileLevel) -> Result<CalibrationTest> {
    check_len(returns.len(), var.len())?;
    check_len(returns.len(), es.len())?;
    check_test_length(returns.len())?;
    let bad = nonnegative_es(es);
    if !bad.is_empty() {
        return Err(FcwqError::Domain(format!("ES >= 0 at positions {bad:?}")));
    }
    let a = alpha.value();
    let e: Vec<f64> = (0..returns.len())
        .map(|t| {
            if returns[t] <= var[t] {
                (returns[t] - es[t]) / (a * es[t].abs())
            } else {
                0.0
            }
        })
        .collect();
    lagged_wald(&e, es)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rank {
    Best,
    Second,
}

/// Best and second-best markers for "lower is better" values; ties share a
/// marker. Missing values get no marker.
pub fn rank_markers(values: &[Option<f64>]) -> Vec<Option<Rank>> {
    let mut distinct: Vec<f64> = values.iter().flatten().copied().filter(|v| v.is_finite()).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    values
        .iter()
        .map(|v| match v {
            Some(v) if distinct.first() == Some(v) => Some(Rank::Best),
            Some(v) if distinct.get(1) == Some(v) => Some(Rank::Second),
            _ => None,
        })
        .collect()
}

/// One model's out-of-sample forecasts on one series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSeries {
    pub model: String,
    pub var: Vec<f64>,
    pub es: Option<Vec<f64>>,
}

/// Out-of-sample returns of one series and every model's forecasts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesInput {
    pub name: String,
    pub dates: Vec<NaiveDate>,
    pub returns: Vec<f64>,
    pub models: Vec<ModelSeries>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRow {
    pub model: String,
    pub vrate: f64,
    pub vrate_ratio: f64,
    pub quantile_loss: f64,
    pub joint_loss: Option<f64>,
    pub var_p_value: Option<f64>,
    pub es_p_value: Option<f64>,
    pub vrate_rank: Option<Rank>,
    pub quantile_loss_rank: Option<Rank>,
    pub joint_loss_rank: Option<Rank>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesReport {
    pub name: String,
    pub rows: Vec<ModelRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub model: String,
    /// Mean over series of `|VRate - alpha|`.
    pub mad: f64,
    pub avg_quantile_loss: f64,
    pub avg_joint_loss: Option<f64>,
    pub mad_rank: Option<Rank>,
    pub quantile_loss_rank: Option<Rank>,
    pub joint_loss_rank: Option<Rank>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub series: String,
    pub date: NaiveDate,
    pub model: String,
    pub ql: f64,
    pub joint_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceValues {
    pub mad: f64,
    pub avg_quantile_loss: f64,
    pub avg_joint_loss: f64,
    pub note: String,
}

impl Default for ReferenceValues {
    fn default() -> Self {
        Self {
            mad: REFERENCE_MAD,
            avg_quantile_loss: REFERENCE_AVG_QL,
            avg_joint_loss: REFERENCE_AVG_JOINT_LOSS,
            note: "reference FC-WQ values from proprietary data; not reproducible here".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub alpha: f64,
    pub series: Vec<SeriesReport>,
    pub summary: Vec<SummaryRow>,
    pub calibration_note: String,
    pub reference: ReferenceValues,
    #[serde(skip)]
    pub loss_series: Vec<LossPoint>,
}

fn model_row(input: &SeriesInput, m: &ModelSeries, alpha: QuantileLevel, losses: &mut Vec<LossPoint>) -> Result<ModelRow> {
    let r = &input.returns;
    let a = alpha.value();
    let v = vrate(r, &m.var)?;
    let ql = aggregate_quantile_loss(r, &m.var, alpha)?;
    let mut notes = Vec::new();
    let var_p = match var_calibration_test(r, &m.var, alpha) {
        Ok(t) => Some(t.p_value),
        Err(e) => {
            notes.push(format!("VaR test: {e}"));
            None
        }
    };
    let (joint, es_p) = match &m.es {
        Some(es) => {
            check_len(r.len(), es.len())?;
            let joint = match aggregate_joint_loss_dated(&input.dates, r, &m.var, es, alpha) {
                Ok(j) => Some(j),
                Err(e) => {
                    notes.push(format!("joint loss: {e}"));
                    None
                }
            };
            let p = match es_calibration_test(r, &m.var, es, alpha) {
                Ok(t) => Some(t.p_value),
                Err(e) => {
                    notes.push(format!("ES test: {e}"));
                    None
                }
            };
            (joint, p)
        }
        None => (None, None),
    };
    for t in 0..r.len() {
        let jl = m
            .es
            .as_ref()
            .filter(|es| es[t] < 0.0)
            .map(|es| al_joint_score_unchecked(r[t], m.var[t], es[t], a));
        losses.push(LossPoint {
            series: input.name.clone(),
            date: input.dates[t],
            model: m.model.clone(),
            ql: quantile_loss(r[t], m.var[t], alpha),
            joint_loss: jl,
        });
    }
    Ok(ModelRow {
        model: m.model.clone(),
        vrate: v,
        vrate_ratio: v / a,
        quantile_loss: ql,
        joint_loss: joint,
        var_p_value: var_p,
        es_p_value: es_p,
        vrate_rank: None,
        quantile_loss_rank: None,
        joint_loss_rank: None,
        notes,
    })
}

/// Per-series metrics with rank markers, cross-series summary and per-time
/// loss series.
pub fn build_report(inputs: &[SeriesInput], alpha: QuantileLevel) -> Result<BacktestReport> {
    let a = alpha.value();
    let mut losses = Vec::new();
    let mut series = Vec::with_capacity(inputs.len());
    for input in inputs {
        check_len(input.returns.len(), input.dates.len())?;
        let mut rows = input
            .models
            .iter()
            .map(|m| model_row(input, m, alpha, &mut losses))
            .collect::<Result<Vec<_>>>()?;
        let vr = rank_markers(&rows.iter().map(|r| Some((r.vrate - a).abs())).collect::<Vec<_>>());
        let ql = rank_markers(&rows.iter().map(|r| Some(r.quantile_loss)).collect::<Vec<_>>());
        let jl = rank_markers(&rows.iter().map(|r| r.joint_loss).collect::<Vec<_>>());
        for (i, row) in rows.iter_mut().enumerate() {
            row.vrate_rank = vr[i];
            row.quantile_loss_rank = ql[i];
            row.joint_loss_rank = jl[i];
        }
        series.push(SeriesReport { name: input.name.clone(), rows });
    }

    let mut names: Vec<String> = Vec::new();
    for s in &series {
        for r in &s.rows {
            if !names.contains(&r.model) {
                names.push(r.model.clone());
            }
        }
    }
    let mut summary: Vec<SummaryRow> = names
        .iter()
        .map(|name| {
            let rows: Vec<&ModelRow> = series.iter().filter_map(|s| s.rows.iter().find(|r| &r.model == name)).collect();
            let k = rows.len() as f64;
            let joint: Option<Vec<f64>> = rows.iter().map(|r| r.joint_loss).collect();
            SummaryRow {
                model: name.clone(),
                mad: rows.iter().map(|r| (r.vrate - a).abs()).sum::<f64>() / k,
                avg_quantile_loss: rows.iter().map(|r| r.quantile_loss).sum::<f64>() / k,
                avg_joint_loss: joint.map(|j| j.iter().sum::<f64>() / k),
                mad_rank: None,
                quantile_loss_rank: None,
                joint_loss_rank: None,
            }
        })
        .collect();
    let mr = rank_markers(&summary.iter().map(|s| Some(s.mad)).collect::<Vec<_>>());
    let qr = rank_markers(&summary.iter().map(|s| Some(s.avg_quantile_loss)).collect::<Vec<_>>());
    let jr = rank_markers(&summary.iter().map(|s| s.avg_joint_loss).collect::<Vec<_>>());
    for (i, s) in summary.iter_mut().enumerate() {
        s.mad_rank = mr[i];
        s.quantile_loss_rank = qr[i];
        s.joint_loss_rank = jr[i];
    }

    Ok(BacktestReport {
        alpha: a,
        series,
        summary,
        calibration_note: CALIBRATION_NOTE.into(),
        reference: ReferenceValues::default(),
        loss_series: losses,
    })
}

/// `series,date,model,ql,joint_loss` for plotting.
pub fn write_loss_series_csv(path: impl AsRef<std::path::Path>, report: &BacktestReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["series", "date", "model", "ql", "joint_loss"])?;
    for p in &report.loss_series {
        w.write_record([
            p.series.clone(),
            p.date.to_string(),
            p.model.clone(),
            p.ql.to_string(),
            p.joint_loss.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a forecasts file (`date,model,var_forecast,es_forecast,...`) and
/// aligns every model with `returns` by date. Models keep their
/// first-appearance order; a model has ES only if every row carries one.
pub fn load_series_input(
    name: &str,
    forecasts: impl AsRef<std::path::Path>,
    returns: &ReturnSeries,
) -> Result<SeriesInput> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(forecasts)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| FcwqError::InvalidInput(format!("forecasts file has no {name:?} column")))
    };
    let (di, mi, vi, ei) = (col("date")?, col("model")?, col("var_forecast")?, col("es_forecast")?);
    let mut models: Vec<(String, Vec<NaiveDate>, Vec<f64>, Vec<Option<f64>>)> = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 2;
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let date: NaiveDate =
            field(di).parse().map_err(|e| FcwqError::Parse { row, msg: format!("bad date {:?}: {e}", field(di)) })?;
        let var: f64 =
            field(vi).parse().map_err(|_| FcwqError::Parse { row, msg: format!("bad VaR {:?}", field(vi)) })?;
        let es = match field(ei) {
            "" => None,
            v => Some(v.parse::<f64>().map_err(|_| FcwqError::Parse { row, msg: format!("bad ES {v:?}") })?),
        };
        let model = field(mi).to_string();
        let slot = match models.iter().position(|m| m.0 == model) {
            Some(i) => i,
            None => {
                models.push((model, Vec::new(), Vec::new(), Vec::new()));
                models.len() - 1
            }
        };
        let m = &mut models[slot];
        m.1.push(date);
        m.2.push(var);
        m.3.push(es);
    }
    let Some(first) = models.first() else {
        return Err(FcwqError::InvalidInput("forecasts file is empty".into()));
    };
    let dates = first.1.clone();
    for m in &models {
        if m.1 != dates {
            return Err(FcwqError::InvalidInput(format!("model {} covers different dates than {}", m.0, first.0)));
        }
    }
    let aligned = dates
        .iter()
        .map(|d| {
            returns
                .dates()
                .binary_search(d)
                .map(|i| returns.returns()[i])
                .map_err(|_| FcwqError::InvalidInput(format!("no return for forecast date {d}")))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(SeriesInput {
        name: name.to_string(),
        dates,
        returns: aligned,
        models: models
            .into_iter()
            .map(|(model, _, var, es)| ModelSeries { model, var, es: es.into_iter().collect() })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    const A: f64 = 0.025;

    fn lvl() -> QuantileLevel {
        QuantileLevel::new(A).unwrap()
    }

    #[test]
    fn vrate_examples() {
        let r: Vec<f64> = (0..2000).map(|i| if i % 40 == 0 { -5.0 } else { 0.0 }).collect();
        let q = vec![-1.0; 2000];
        let v = vrate(&r, &q).unwrap();
        assert!((v / A - 1.0).abs() < 1e-12);
        assert_eq!(vrate(&[0.0, 1.0], &[-1.0, -1.0]).unwrap(), 0.0);
        assert!(vrate(&[0.0], &[1.0, 2.0]).is_err());
        // ties are not violations
        assert_eq!(vrate(&[-1.0], &[-1.0]).unwrap(), 0.0);
    }

    #[test]
    fn loss_examples() {
        assert!((aggregate_quantile_loss(&[-3.0], &[-2.0], lvl()).unwrap() - 0.975).abs() < 1e-12);
        assert_eq!(aggregate_quantile_loss(&[-1.0, 2.0], &[-1.0, 2.0], lvl()).unwrap(), 0.0);
        let j = aggregate_joint_loss(&[-3.0, 1.0], &[-2.0, -2.0], &[-4.0, -4.0], lvl()).unwrap();
        assert!((j - 13.32322).abs() < 1e-5, "{j}");
        assert!(aggregate_joint_loss(&[-3.0, 1.0], &[-2.0, -2.0], &[-4.0, 0.5], lvl()).is_err());
        let d = crate::data::business_days(NaiveDate::from_ymd_opt(2021, 3, 1).unwrap(), 2);
        let err = aggregate_joint_loss_dated(&d, &[-3.0, 1.0], &[-2.0, -2.0], &[-4.0, 0.5], lvl()).unwrap_err();
        assert!(err.to_string().contains("2021-03-02"));
    }

    #[test]
    fn newey_west_properties() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let nd = Normal::new(0.0, 1.0).unwrap();
        let n = 5000;
        let x = DMatrix::from_fn(n, 2, |_, j| if j == 0 { 1.0 } else { nd.sample(&mut rng) });
        let y = DVector::from_fn(n, |t, _| 0.5 + 0.2 * x[(t, 1)] + nd.sample(&mut rng));
        let (_, u) = ols(&x, &y).unwrap();
        // lags = 0 is the White estimator
        let white = newey_west_cov(&x, &u, 0).unwrap();
        let bread = (x.transpose() * &x).try_inverse().unwrap();
        let mut meat = DMatrix::zeros(2, 2);
        for t in 0..n {
            let xt = x.row(t).transpose();
            meat += &xt * xt.transpose() * (u[t] * u[t]);
        }
        let direct = &bread * meat * &bread;
        assert!((white - &direct).abs().max() < 1e-12);
        // iid errors: close to the classical covariance up to kernel noise
        let s2 = u.dot(&u) / (n - 2) as f64;
        let classical = &bread * s2;
        let nw = newey_west_cov(&x, &u, 20).unwrap();
        for i in 0..2 {
            let ratio = nw[(i, i)] / classical[(i, i)];
            assert!((ratio - 1.0).abs() < 0.25, "{ratio}");
        }
        assert!((&nw - nw.transpose()).abs().max() < 1e-15);
        assert!(nw.clone().symmetric_eigenvalues().iter().all(|e| *e >= -1e-15));
        let collinear = DMatrix::from_fn(100, 2, |_, _| 1.0);
        assert!(matches!(newey_west_cov(&collinear, &DVector::zeros(100), 5), Err(FcwqError::Singular(_))));
    }

    #[test]
    fn calibration_guards() {
        let r = vec![-1.0; 50];
        let q = vec![-2.0; 50];
        assert!(var_calibration_test(&r, &q, lvl()).is_err());
        let r = vec![0.1; 100];
        let es = vec![0.5; 100];
        assert!(matches!(es_calibration_test(&r, &vec![-1.0; 100], &es, lvl()), Err(FcwqError::Domain(_))));
    }

    #[test]
    fn rank_markers_with_ties() {
        let m = rank_markers(&[Some(2.0), Some(1.0), Some(1.0), Some(3.0), None]);
        assert_eq!(m, vec![Some(Rank::Second), Some(Rank::Best), Some(Rank::Best), None, None]);
        assert_eq!(rank_markers(&[Some(5.0)]), vec![Some(Rank::Best)]);
    }

    #[test]
    fn report_single_and_dominating() {
        let dates = crate::data::business_days(NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(), 200);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let nd = Normal::new(0.0, 1.0).unwrap();
        let returns: Vec<f64> = (0..200).map(|_| nd.sample(&mut rng)).collect();
        let good = ModelSeries { model: "good".into(), var: vec![-1.96; 200], es: Some(vec![-2.34; 200]) };
        let bad = ModelSeries { model: "bad".into(), var: vec![-6.0; 200], es: Some(vec![-9.0; 200]) };
        let one = SeriesInput { name: "s".into(), dates: dates.clone(), returns: returns.clone(), models: vec![good.clone()] };
        let rep = build_report(&[one], lvl()).unwrap();
        assert_eq!(rep.summary.len(), 1);
        assert_eq!(rep.series[0].rows[0].quantile_loss_rank, Some(Rank::Best));
        assert_eq!(rep.loss_series.len(), 200);
        assert!(rep.calibration_note.contains("substitute"));

        let two = SeriesInput { name: "s".into(), dates, returns, models: vec![bad, good] };
        let rep = build_report(&[two.clone(), SeriesInput { name: "t".into(), ..two }], lvl()).unwrap();
        let rows = &rep.series[0].rows;
        assert_eq!(rows[1].quantile_loss_rank, Some(Rank::Best));
        assert_eq!(rows[1].joint_loss_rank, Some(Rank::Best));
        assert_eq!(rows[0].quantile_loss_rank, Some(Rank::Second));
        assert_eq!(rep.summary[1].quantile_loss_rank, Some(Rank::Best));
        assert_eq!(rep.summary[1].joint_loss_rank, Some(Rank::Best));
        for r in rows {
            for p in [r.var_p_value, r.es_p_value].into_iter().flatten() {
                assert!((0.0..=1.0).contains(&p));
            }
        }
    }

    #[test]
    fn mad_zero_when_on_target() {
        let dates = crate::data::business_days(NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(), 80);
        let r: Vec<f64> = (0..80).map(|i| if i % 40 == 0 { -5.0 } else { 0.5 }).collect();
        let m = ModelSeries { model: "x".into(), var: vec![-1.0; 80], es: None };
        let s = SeriesInput { name: "a".into(), dates, returns: r, models: vec![m] };
        let rep = build_report(&[s.clone(), SeriesInput { name: "b".into(), ..s }], lvl()).unwrap();
        assert!(rep.summary[0].mad.abs() < 1e-15);
        assert!((rep.series[0].rows[0].vrate_ratio - 1.0).abs() < 1e-12);
    }
}
