//! The quantile universe: VaR values indexed by (time, level, model), with
//! in-sample estimates in the first `N` rows and one-step forecasts after.

use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{FcwqError, Result};
use crate::models::ModelKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellFlag {
    Insample,
    Forecast,
    /// Forecast reused from the previous window after a failed fit.
    Carried,
}

impl CellFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            CellFlag::Insample => "insample",
            CellFlag::Forecast => "forecast",
            CellFlag::Carried => "carried",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "insample" => Some(CellFlag::Insample),
            "forecast" => Some(CellFlag::Forecast),
            "carried" => Some(CellFlag::Carried),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantilePanel {
    dates: Vec<NaiveDate>,
    levels: Vec<f64>,
    models: Vec<ModelKind>,
    in_sample_n: usize,
    values: Vec<f64>,
    /// One flag per (time, model).
    flags: Vec<CellFlag>,
}

impl QuantilePanel {
    pub fn new(dates: Vec<NaiveDate>, levels: Vec<f64>, models: Vec<ModelKind>, in_sample_n: usize) -> Self {
        let t = dates.len();
        let (m, n) = (levels.len(), models.len());
        let flags = (0..t * n)
            .map(|k| if k / n < in_sample_n { CellFlag::Insample } else { CellFlag::Forecast })
            .collect();
        Self {
            values: vec![f64::NAN; t * m * n],
            dates,
            levels,
            models,
            in_sample_n,
            flags,
        }
    }

    pub fn t(&self) -> usize {
        self.dates.len()
    }

    pub fn m(&self) -> usize {
        self.levels.len()
    }

    pub fn n_models(&self) -> usize {
        self.models.len()
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.t(), self.m(), self.n_models())
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn models(&self) -> &[ModelKind] {
        &self.models
    }

    pub fn in_sample_n(&self) -> usize {
        self.in_sample_n
    }

    #[inline]
    fn idx(&self, t: usize, j: usize, i: usize) -> usize {
        (t * self.m() + j) * self.n_models() + i
    }

    pub fn get(&self, t: usize, j: usize, i: usize) -> f64 {
        self.values[self.idx(t, j, i)]
    }

    pub fn set(&mut self, t: usize, j: usize, i: usize, v: f64) {
        let k = self.idx(t, j, i);
        self.values[k] = v;
    }

    /// Model values at time `t` and level `j`.
    pub fn row(&self, t: usize, j: usize) -> &[f64] {
        let k = self.idx(t, j, 0);
        &self.values[k..k + self.n_models()]
    }

    /// Rows `start..end` at level `j`, row-major with one column per model.
    pub fn level_block(&self, start: usize, end: usize, j: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity((end - start) * self.n_models());
        for t in start..end {
            out.extend_from_slice(self.row(t, j));
        }
        out
    }

    pub fn flag(&self, t: usize, i: usize) -> CellFlag {
        self.flags[t * self.n_models() + i]
    }

    pub fn set_flag(&mut self, t: usize, i: usize, f: CellFlag) {
        let n = self.n_models();
        self.flags[t * n + i] = f;
    }

    /// Panel restricted to one model.
    pub fn select_model(&self, model: ModelKind) -> Result<QuantilePanel> {
        let i = self
            .models
            .iter()
            .position(|m| *m == model)
            .ok_or_else(|| FcwqError::InvalidInput(format!("model {model} not in panel")))?;
        let mut out = QuantilePanel::new(self.dates.clone(), self.levels.clone(), vec![model], self.in_sample_n);
        for t in 0..self.t() {
            for j in 0..self.m() {
                out.set(t, j, 0, self.get(t, j, i));
            }
            out.set_flag(t, 0, self.flag(t, i));
        }
        Ok(out)
    }

    pub fn is_complete(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Flat CSV: `date,level,model,var_insample_or_forecast,flag`, values
    /// written in shortest round-trip form.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["date", "level", "model", "var_insample_or_forecast", "flag"])?;
        for t in 0..self.t() {
            let date = self.dates[t].to_string();
            for j in 0..self.m() {
                let level = self.levels[j].to_string();
                for (i, model) in self.models.iter().enumerate() {
                    w.write_record([
                        date.as_str(),
                        level.as_str(),
                        model.name(),
                        &self.get(t, j, i).to_string(),
                        self.flag(t, i).as_str(),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a panel written by [`QuantilePanel::write_csv`]. Dates, levels
    /// and models keep their first-appearance order.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<QuantilePanel> {
        let mut rdr = csv::Reader::from_path(path)?;
        let mut dates: Vec<NaiveDate> = Vec::new();
        let mut levels: Vec<f64> = Vec::new();
        let mut models: Vec<ModelKind> = Vec::new();
        let mut cells: Vec<(usize, usize, usize, f64, CellFlag)> = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let row = k + 2;
            let rec = rec?;
            if rec.len() != 5 {
                return Err(FcwqError::Parse { row, msg: format!("expected 5 fields, found {}", rec.len()) });
            }
            let parse_err = |msg: String| FcwqError::Parse { row, msg };
            let date: NaiveDate = rec[0].parse().map_err(|e| parse_err(format!("bad date '{}': {e}", &rec[0])))?;
            let level: f64 = rec[1].parse().map_err(|e| parse_err(format!("bad level '{}': {e}", &rec[1])))?;
            let model: ModelKind = rec[2].parse().map_err(|e: FcwqError| parse_err(e.to_string()))?;
            let value: f64 = rec[3].parse().map_err(|e| parse_err(format!("bad value '{}': {e}", &rec[3])))?;
            let flag = CellFlag::parse(&rec[4]).ok_or_else(|| parse_err(format!("bad flag '{}'", &rec[4])))?;
            let ti = match dates.last() {
                Some(d) if *d == date => dates.len() - 1,
                Some(d) if *d > date => return Err(parse_err(format!("date {date} out of order"))),
                _ => {
                    dates.push(date);
                    dates.len() - 1
                }
            };
            let ji = levels.iter().position(|l| *l == level).unwrap_or_else(|| {
                levels.push(level);
                levels.len() - 1
            });
            let ii = models.iter().position(|m| *m == model).unwrap_or_else(|| {
                models.push(model);
                models.len() - 1
            });
            cells.push((ti, ji, ii, value, flag));
        }
        let (t, m, n) = (dates.len(), levels.len(), models.len());
        if cells.len() != t * m * n {
            return Err(FcwqError::DimensionMismatch { expected: t * m * n, got: cells.len() });
        }
        let in_sample_n = cells.iter().filter(|c| c.4 == CellFlag::Insample).count() / (m * n).max(1);
        let mut panel = QuantilePanel::new(dates, levels, models, in_sample_n);
        for (ti, ji, ii, v, f) in cells {
            panel.set(ti, ji, ii, v);
            panel.set_flag(ti, ii, f);
        }
        if !panel.is_complete() {
            return Err(FcwqError::InvalidInput("panel has missing cells".into()));
        }
        Ok(panel)
    }
}
