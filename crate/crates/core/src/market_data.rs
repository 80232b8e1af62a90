//! Historical price series and the volatility estimate derived from them.
//!
//! Prices are read from a `date,close` CSV with ISO-8601 dates. Returns are
//! taken between consecutive rows regardless of the calendar gap, so weekends
//! and holidays simply do not appear.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DEFAULT_TRADING_DAYS: u32 = 252;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriceFormat {
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub date: NaiveDate,
    pub close: f64,
}

/// Daily closes, strictly increasing in date, every close positive.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    observations: Vec<Observation>,
}

impl PriceSeries {
    /// Sorts by date and validates. Duplicate dates and non-positive closes
    /// are rejected.
    pub fn new(mut observations: Vec<Observation>) -> Result<Self> {
        for obs in &observations {
            if !(obs.close > 0.0) || !obs.close.is_finite() {
                return Err(Error::invalid(format!(
                    "close on {} must be positive, got {}",
                    obs.date, obs.close
                )));
            }
        }
        observations.sort_by_key(|o| o.date);
        if let Some(w) = observations.windows(2).find(|w| w[0].date == w[1].date) {
            return Err(Error::invalid(format!("duplicate date {}", w[0].date)));
        }
        Ok(Self { observations })
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn closes(&self) -> Vec<f64> {
        self.observations.iter().map(|o| o.close).collect()
    }

    /// Close on `date`, if that day is in the series.
    pub fn close_on(&self, date: NaiveDate) -> Option<f64> {
        self.observations
            .binary_search_by_key(&date, |o| o.date)
            .ok()
            .map(|i| self.observations[i].close)
    }

    /// Volatility from the `window` returns ending at `date` (inclusive).
    /// `None` when fewer than `window + 1` closes are available up to that day.
    pub fn trailing_volatility(
        &self,
        date: NaiveDate,
        window: usize,
        trading_days_per_year: u32,
    ) -> Option<VolEstimate> {
        let end = self.observations.partition_point(|o| o.date <= date);
        if window < 2 || end < window + 1 {
            return None;
        }
        let closes: Vec<f64> = self.observations[end - window - 1..end]
            .iter()
            .map(|o| o.close)
            .collect();
        let returns = returns_from_closes(&closes);
        historical_volatility(&returns, trading_days_per_year).ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolEstimate {
    pub sigma_annual: f64,
    pub window_days: usize,
}

#[derive(Debug, Deserialize)]
struct PriceRow {
    date: String,
    close: String,
}

pub fn load_price_series(path: impl AsRef<Path>, format: PriceFormat) -> Result<PriceSeries> {
    let path = path.as_ref();
    match format {
        PriceFormat::Csv => load_csv(path),
    }
}

fn load_csv(path: &Path) -> Result<PriceSeries> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_owned(),
        line,
        message,
    };

    let mut observations = Vec::new();
    let mut seen_line = std::collections::HashMap::new();
    for record in reader.deserialize::<PriceRow>() {
        let row = match record {
            Ok(row) => row,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                return Err(parse_err(line, e.to_string()));
            }
        };
        let line = observations.len() as u64 + 2;
        let date = NaiveDate::parse_from_str(&row.date, "%Y-%m-%d")
            .map_err(|e| parse_err(line, format!("bad date {:?}: {e}", row.date)))?;
        let close: f64 = row
            .close
            .parse()
            .map_err(|_| parse_err(line, format!("bad close {:?}", row.close)))?;
        if !(close > 0.0) || !close.is_finite() {
            return Err(parse_err(
                line,
                format!("close must be positive, got {close}"),
            ));
        }
        if let Some(first) = seen_line.insert(date, line) {
            return Err(parse_err(
                line,
                format!("duplicate date {date} (first seen on line {first})"),
            ));
        }
        observations.push(Observation { date, close });
    }
    PriceSeries::new(observations)
}

/// Writes the series in the same `date,close` format [`load_price_series`] reads.
pub fn write_price_series(series: &PriceSeries, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io_err = |source| Error::Io {
        path: path.to_owned(),
        source,
    };
    let mut file = std::io::BufWriter::new(File::create(path).map_err(io_err)?);
    writeln!(file, "date,close").map_err(io_err)?;
    for obs in series.observations() {
        // `{}` on f64 prints the shortest representation that parses back exactly.
        writeln!(file, "{},{}", obs.date.format("%Y-%m-%d"), obs.close).map_err(io_err)?;
    }
    file.flush().map_err(io_err)
}

/// ln(close[i+1] / close[i]) for each consecutive pair.
pub fn log_returns(series: &PriceSeries) -> Result<Vec<f64>> {
    if series.len() < 2 {
        return Err(Error::invalid(format!(
            "log returns need at least 2 closes, got {}",
            series.len()
        )));
    }
    Ok(returns_from_closes(&series.closes()))
}

fn returns_from_closes(closes: &[f64]) -> Vec<f64> {
    closes.windows(2).map(|w| (w[1] / w[0]).ln()).collect()
}

/// Sample standard deviation (n - 1 denominator) of the returns, annualized by
/// `sqrt(trading_days_per_year)`.
pub fn historical_volatility(returns: &[f64], trading_days_per_year: u32) -> Result<VolEstimate> {
    let n = returns.len();
    if n < 2 {
        return Err(Error::invalid(format!(
            "historical volatility needs at least 2 returns, got {n}"
        )));
    }
    if trading_days_per_year == 0 {
        return Err(Error::invalid("trading_days_per_year must be positive"));
    }
    let mean = returns.iter().sum::<f64>() / n as f64;
    let ss: f64 = returns.iter().map(|x| (x - mean).powi(2)).sum();
    let daily = (ss / (n - 1) as f64).sqrt();
    Ok(VolEstimate {
        sigma_annual: daily * f64::from(trading_days_per_year).sqrt(),
        window_days: n,
    })
}
