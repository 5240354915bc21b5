//! Return series construction and rolling-window views.
//!
//! Returns are percentage log-returns, `100 * ln(P_t / P_{t-1})`, with a
//! zero conditional mean assumed downstream (no demeaning happens here).
//! Non-trading days are simply absent rows.

use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{FcwqError, Result};

/// Daily percentage log-returns aligned with calendar dates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnSeries {
    dates: Vec<NaiveDate>,
    returns: Vec<f64>,
}

impl ReturnSeries {
    /// Builds a series, checking that dates strictly increase and every return is finite.
    pub fn new(dates: Vec<NaiveDate>, returns: Vec<f64>) -> Result<Self> {
        if dates.len() != returns.len() {
            return Err(FcwqError::DimensionMismatch {
                expected: dates.len(),
                got: returns.len(),
            });
        }
        for (i, w) in dates.windows(2).enumerate() {
            if w[1] <= w[0] {
                return Err(FcwqError::Parse {
                    row: i + 2,
                    msg: format!("date {} does not follow {}", w[1], w[0]),
                });
            }
        }
        if let Some(i) = returns.iter().position(|r| !r.is_finite()) {
            return Err(FcwqError::Parse {
                row: i + 1,
                msg: "non-finite return".into(),
            });
        }
        Ok(Self { dates, returns })
    }

    /// Converts a price path into percentage log-returns. The first price is
    /// consumed; each return carries the date of its closing price.
    pub fn from_prices(dates: &[NaiveDate], prices: &[f64]) -> Result<Self> {
        if dates.len() != prices.len() {
            return Err(FcwqError::DimensionMismatch {
                expected: dates.len(),
                got: prices.len(),
            });
        }
        if prices.len() < 2 {
            return Err(FcwqError::InvalidInput(
                "at least two prices are required".into(),
            ));
        }
        for (i, p) in prices.iter().enumerate() {
            if !(p.is_finite() && *p > 0.0) {
                return Err(FcwqError::Parse {
                    row: i + 1,
                    msg: format!("price {p} is not a positive finite number"),
                });
            }
        }
        let returns = prices
            .windows(2)
            .map(|w| 100.0 * (w[1] / w[0]).ln())
            .collect();
        Self::new(dates[1..].to_vec(), returns)
    }

    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn returns(&self) -> &[f64] {
        &self.returns
    }

    /// Returns a copy with a single observation replaced.
    pub fn with_return(&self, index: usize, value: f64) -> Result<Self> {
        let mut returns = self.returns.clone();
        *returns
            .get_mut(index)
            .ok_or_else(|| FcwqError::InvalidInput(format!("index {index} out of range")))? = value;
        Self::new(self.dates.clone(), returns)
    }

    /// Leading sub-series of length `n`.
    pub fn truncate(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            dates: self.dates[..n].to_vec(),
            returns: self.returns[..n].to_vec(),
        }
    }
}

/// Fixed-size rolling estimation scheme: `N` in-sample rows, `H` one-step forecasts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub in_sample_n: usize,
    pub out_sample_h: usize,
}

impl WindowSpec {
    pub fn new(in_sample_n: usize, out_sample_h: usize) -> Result<Self> {
        if in_sample_n == 0 {
            return Err(FcwqError::InvalidInput(
                "in-sample size must be positive".into(),
            ));
        }
        Ok(Self {
            in_sample_n,
            out_sample_h,
        })
    }

    /// Uses every observation after the first `N` as out-of-sample.
    pub fn for_series(in_sample_n: usize, series_len: usize) -> Result<Self> {
        if in_sample_n > series_len {
            return Err(FcwqError::InvalidInput(format!(
                "in-sample size {in_sample_n} exceeds series length {series_len}"
            )));
        }
        Self::new(in_sample_n, series_len - in_sample_n)
    }

    pub fn validate(&self, series_len: usize) -> Result<()> {
        if self.in_sample_n == 0 {
            return Err(FcwqError::InvalidInput(
                "in-sample size must be positive".into(),
            ));
        }
        if self.in_sample_n + self.out_sample_h > series_len {
            return Err(FcwqError::InvalidInput(format!(
                "N + H = {} exceeds series length {series_len}",
                self.in_sample_n + self.out_sample_h
            )));
        }
        Ok(())
    }
}

/// Borrowed view of one estimation window.
#[derive(Debug, Clone, Copy)]
pub struct Window<'a> {
    /// 1-based window number `h`; its one-step forecast targets observation `N + h`.
    pub h: usize,
    /// 0-based index of the first observation in the window.
    pub start: usize,
    pub dates: &'a [NaiveDate],
    pub returns: &'a [f64],
}

impl Window<'_> {
    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }

    /// 0-based index of the observation this window forecasts.
    pub fn target_index(&self) -> usize {
        self.start + self.returns.len()
    }
}

/// Window `h` (1-based) covers observations `h ..= N+h-1`, i.e. 0-based `h-1 .. N+h-1`.
pub fn rolling_windows<'a>(series: &'a ReturnSeries, spec: &WindowSpec) -> Result<Vec<Window<'a>>> {
    spec.validate(series.len())?;
    let n = spec.in_sample_n;
    Ok((1..=spec.out_sample_h)
        .map(|h| window_at(series, n, h))
        .collect())
}

pub(crate) fn window_at(series: &ReturnSeries, n: usize, h: usize) -> Window<'_> {
    let start = h - 1;
    Window {
        h,
        start,
        dates: &series.dates[start..start + n],
        returns: &series.returns[start..start + n],
    }
}

fn parse_date(raw: &str, row: usize) -> Result<NaiveDate> {
    let s = raw.trim();
    let head = s.get(..10).unwrap_or(s);
    NaiveDate::parse_from_str(head, "%Y-%m-%d").map_err(|e| FcwqError::Parse {
        row,
        msg: format!("bad date {s:?}: {e}"),
    })
}

fn read_column(path: &Path, column: &str) -> Result<(Vec<NaiveDate>, Vec<f64>)> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let date_idx = headers
        .iter()
        .position(|h| h.eq_ignore_ascii_case("date"))
        .unwrap_or(0);
    let value_idx = headers
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| FcwqError::InvalidInput(format!("column {column:?} not found")))?;

    let mut dates = Vec::new();
    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        // header is row 1
        let row = i + 2;
        let record = record?;
        let date = parse_date(record.get(date_idx).unwrap_or(""), row)?;
        let raw = record.get(value_idx).unwrap_or("");
        let value: f64 = raw.parse().map_err(|_| FcwqError::Parse {
            row,
            msg: format!("unparsable value {raw:?} in column {column:?}"),
        })?;
        if !value.is_finite() {
            return Err(FcwqError::Parse {
                row,
                msg: format!("non-finite value in column {column:?}"),
            });
        }
        dates.push(date);
        values.push(value);
    }
    for (i, w) in dates.windows(2).enumerate() {
        if w[1] <= w[0] {
            return Err(FcwqError::Parse {
                row: i + 3,
                msg: format!("dates not strictly increasing ({} after {})", w[1], w[0]),
            });
        }
    }
    Ok((dates, values))
}

/// Reads closing prices from `column` of a CSV file and converts them to returns.
pub fn load_prices(path: impl AsRef<Path>, column: &str) -> Result<ReturnSeries> {
    let (dates, prices) = read_column(path.as_ref(), column)?;
    if prices.len() < 2 {
        return Err(FcwqError::InvalidInput(
            "price file needs at least two rows".into(),
        ));
    }
    ReturnSeries::from_prices(&dates, &prices)
}

/// Reads pre-computed percentage returns from `column` of a CSV file.
pub fn load_returns(path: impl AsRef<Path>, column: &str) -> Result<ReturnSeries> {
    let (dates, returns) = read_column(path.as_ref(), column)?;
    ReturnSeries::new(dates, returns)
}

/// Consecutive weekdays starting at `start`; used for synthetic series.
pub fn business_days(start: NaiveDate, count: usize) -> Vec<NaiveDate> {
    use chrono::{Datelike, Weekday};
    let mut out = Vec::with_capacity(count);
    let mut d = start;
    while out.len() < count {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d.succ_opt().expect("date overflow");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn days(n: usize) -> Vec<NaiveDate> {
        business_days(NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(), n)
    }

    #[test]
    fn flat_prices_give_zero_return() {
        let s = ReturnSeries::from_prices(&days(2), &[100.0, 100.0]).unwrap();
        assert_eq!(s.returns(), &[0.0]);
    }

    #[test]
    fn log_returns_are_scaled_by_100() {
        let s = ReturnSeries::from_prices(&days(2), &[100.0, 110.0]).unwrap();
        assert!((s.returns()[0] - 9.531_017_980_432_49).abs() < 1e-9);
        let s = ReturnSeries::from_prices(&days(3), &[100.0, 90.0, 99.0]).unwrap();
        assert!((s.returns()[0] + 10.536_051_565_782_63).abs() < 1e-9);
        assert!((s.returns()[1] - 9.531_017_980_432_49).abs() < 1e-9);
        assert_eq!(s.dates()[0], days(3)[1]);
    }

    #[test]
    fn windows_follow_rolling_origin() {
        let s = ReturnSeries::new(days(5), vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let w = rolling_windows(&s, &WindowSpec::new(3, 2).unwrap()).unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!(w[0].returns, &[1.0, 2.0, 3.0]);
        assert_eq!(w[1].returns, &[2.0, 3.0, 4.0]);
        assert_eq!(w[1].target_index(), 4);

        let empty = rolling_windows(&s, &WindowSpec::new(5, 0).unwrap()).unwrap();
        assert!(empty.is_empty());

        let short = ReturnSeries::new(days(4), vec![1.0; 4]).unwrap();
        assert!(rolling_windows(&short, &WindowSpec::new(3, 2).unwrap()).is_err());
    }

    #[test]
    fn window_tails_reproduce_returns() {
        let r: Vec<f64> = (0..20).map(|i| i as f64 * 0.5 - 3.0).collect();
        let s = ReturnSeries::new(days(20), r.clone()).unwrap();
        let w = rolling_windows(&s, &WindowSpec::new(8, 12).unwrap()).unwrap();
        let last: Vec<f64> = w.iter().map(|w| *w.returns.last().unwrap()).collect();
        assert_eq!(last, r[7..19].to_vec());
    }

    #[test]
    fn rejects_non_increasing_dates() {
        let d = vec![
            NaiveDate::from_ymd_opt(2020, 1, 2).unwrap(),
            NaiveDate::from_ymd_opt(2020, 1, 2).unwrap(),
        ];
        assert!(ReturnSeries::new(d, vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn csv_errors_name_the_row() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "date,close\n2020-01-01,100\n2020-01-02,abc\n2020-01-03,101").unwrap();
        match load_prices(f.path(), "close") {
            Err(FcwqError::Parse { row, .. }) => assert_eq!(row, 3),
            other => panic!("unexpected {other:?}"),
        }

        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "date,close\n2020-01-02,100\n2020-01-01,101").unwrap();
        assert!(matches!(load_prices(f.path(), "close"), Err(FcwqError::Parse { .. })));
    }

    #[test]
    fn csv_round_trip_of_synthetic_prices() {
        let r = [0.3, -1.2, 2.5, -0.7, 0.05];
        let mut p = vec![1000.0];
        for x in r {
            let last = *p.last().unwrap();
            p.push(last * (x / 100.0f64).exp());
        }
        let d = days(p.len());
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "date,close").unwrap();
        for (d, p) in d.iter().zip(&p) {
            writeln!(f, "{d},{p}").unwrap();
        }
        let s = load_prices(f.path(), "close").unwrap();
        for (a, b) in s.returns().iter().zip(r) {
            assert!(((a - b) / b).abs() < 1e-12);
        }
    }
}
