//! Theoretical-versus-market evaluation over a quote history.
//!
//! Each quote is priced with the volatility estimated from the trailing
//! window of underlying closes up to the quote date, and a fixed rate.
//! Residuals are `theoretical − market` in price units and pooled across all
//! quotes for RMSE and MAE.

use std::collections::HashMap;
use std::fs::File;
use std::path::Path;
use std::time::Instant;

use chrono::{Datelike, NaiveDate, Weekday};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{HestonParams, VasicekParams};
use crate::market_data::{Observation, PriceSeries, DEFAULT_TRADING_DAYS};
use crate::pde::{
    bs_closed_form, default_s_max, degenerate_params, Grid4D, OptionContract, OptionKind,
    PdeSolver, Scheme,
};
use crate::{Error, Result};

pub const DEFAULT_VOL_WINDOW: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketQuote {
    pub quote_id: String,
    pub date: NaiveDate,
    pub strike: f64,
    /// Years to expiry.
    pub maturity: f64,
    pub kind: OptionKind,
    pub market_price: f64,
    pub underlying_close: f64,
}

impl MarketQuote {
    pub fn contract(&self) -> Result<OptionContract> {
        OptionContract::new(self.kind, self.strike, self.maturity)
    }

    pub fn validate(&self) -> Result<()> {
        self.contract()?;
        if !(self.market_price >= 0.0 && self.market_price.is_finite()) {
            return Err(Error::invalid(format!(
                "quote {}: market price must be >= 0, got {}",
                self.quote_id, self.market_price
            )));
        }
        if !(self.underlying_close > 0.0 && self.underlying_close.is_finite()) {
            return Err(Error::invalid(format!(
                "quote {}: underlying close must be > 0, got {}",
                self.quote_id, self.underlying_close
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
struct QuoteRow {
    #[serde(default)]
    quote_id: Option<String>,
    date: String,
    strike: f64,
    maturity_years: f64,
    kind: String,
    market_price: f64,
    underlying_close: f64,
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_owned(),
        source,
    }
}

/// Reads `date,strike,maturity_years,kind,market_price,underlying_close`.
/// An optional `quote_id` column names each quote; without it the id is the
/// zero-based data row index.
pub fn load_quotes(path: impl AsRef<Path>) -> Result<Vec<MarketQuote>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_error(path))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut quotes = Vec::new();
    for (index, record) in reader.deserialize::<QuoteRow>().enumerate() {
        let line = index as u64 + 2;
        let parse_err = |message: String| Error::Parse {
            path: path.to_owned(),
            line,
            message,
        };
        let row = record.map_err(|e| parse_err(e.to_string()))?;
        let quote = MarketQuote {
            quote_id: row
                .quote_id
                .filter(|s| !s.is_empty())
                .unwrap_or_else(|| index.to_string()),
            date: NaiveDate::parse_from_str(&row.date, "%Y-%m-%d")
                .map_err(|e| parse_err(format!("bad date {:?}: {e}", row.date)))?,
            strike: row.strike,
            maturity: row.maturity_years,
            kind: row
                .kind
                .parse()
                .map_err(|e: Error| parse_err(e.to_string()))?,
            market_price: row.market_price,
            underlying_close: row.underlying_close,
        };
        quote.validate().map_err(|e| parse_err(e.to_string()))?;
        quotes.push(quote);
    }
    Ok(quotes)
}

pub fn write_quotes(quotes: &[MarketQuote], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(io_error(path))?;
    let mut w = csv::Writer::from_writer(file);
    let csv_err = |e: csv::Error| Error::invalid(format!("csv write failed: {e}"));
    w.write_record([
        "quote_id",
        "date",
        "strike",
        "maturity_years",
        "kind",
        "market_price",
        "underlying_close",
    ])
    .map_err(csv_err)?;
    for q in quotes {
        w.write_record(&[
            q.quote_id.clone(),
            q.date.format("%Y-%m-%d").to_string(),
            q.strike.to_string(),
            q.maturity.to_string(),
            q.kind.to_string(),
            q.market_price.to_string(),
            q.underlying_close.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(io_error(path))
}

/// Market inputs handed to a pricer for one quote.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PricingInputs {
    pub sigma: f64,
    pub rate: f64,
}

pub trait Pricer: Sync {
    fn name(&self) -> &str;
    fn price(&self, quote: &MarketQuote, inputs: PricingInputs) -> Result<f64>;
}

/// Returns the market price: a perfect model.
#[derive(Debug, Clone, Copy, Default)]
pub struct PassthroughPricer;

impl Pricer for PassthroughPricer {
    fn name(&self) -> &str {
        "passthrough"
    }

    fn price(&self, quote: &MarketQuote, _: PricingInputs) -> Result<f64> {
        Ok(quote.market_price)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ClosedFormPricer;

impl Pricer for ClosedFormPricer {
    fn name(&self) -> &str {
        "black_scholes"
    }

    fn price(&self, quote: &MarketQuote, inputs: PricingInputs) -> Result<f64> {
        bs_closed_form(
            &quote.contract()?,
            quote.underlying_close,
            inputs.sigma,
            inputs.rate,
        )
    }
}

/// Wraps a closure as a [`Pricer`].
pub struct FnPricer<F> {
    name: String,
    f: F,
}

impl<F> FnPricer<F>
where
    F: Fn(&MarketQuote, PricingInputs) -> Result<f64> + Sync,
{
    pub fn new(name: impl Into<String>, f: F) -> Self {
        Self {
            name: name.into(),
            f,
        }
    }
}

impl<F> Pricer for FnPricer<F>
where
    F: Fn(&MarketQuote, PricingInputs) -> Result<f64> + Sync,
{
    fn name(&self) -> &str {
        &self.name
    }

    fn price(&self, quote: &MarketQuote, inputs: PricingInputs) -> Result<f64> {
        (self.f)(quote, inputs)
    }
}

/// Finite-difference pricer.
///
/// Without `dynamics` every quote gets a single-node grid at its own (σ, r),
/// i.e. plain Black-Scholes by finite differences. With `dynamics` the full
/// σ/r grid is solved and the surface is read at the quote's (S, σ, r).
#[derive(Debug, Clone)]
pub struct PdePricer {
    pub n_s: usize,
    /// Lower bound on time steps; raised as needed for explicit stability.
    pub min_n_t: usize,
    pub scheme: Scheme,
    pub dynamics: Option<ExtendedDynamics>,
}

#[derive(Debug, Clone)]
pub struct ExtendedDynamics {
    pub heston: HestonParams,
    pub vasicek: VasicekParams,
    pub sigma_nodes: Vec<f64>,
    pub r_nodes: Vec<f64>,
}

impl Default for PdePricer {
    fn default() -> Self {
        Self {
            n_s: 200,
            min_n_t: 200,
            scheme: Scheme::Explicit,
            dynamics: None,
        }
    }
}

impl PdePricer {
    pub fn price_contract(
        &self,
        contract: &OptionContract,
        s0: f64,
        sigma: f64,
        rate: f64,
    ) -> Result<f64> {
        let s_max = default_s_max(contract, s0);
        let (grid, h, v) = match &self.dynamics {
            None => {
                let (h, v) = degenerate_params(sigma, rate);
                (
                    Grid4D::degenerate(s_max, self.n_s, self.min_n_t, sigma, rate)?,
                    h,
                    v,
                )
            }
            Some(d) => (
                Grid4D::new(
                    s_max,
                    self.n_s,
                    self.min_n_t,
                    d.sigma_nodes.clone(),
                    d.r_nodes.clone(),
                )?,
                d.heston,
                d.vasicek,
            ),
        };
        let grid = match self.scheme {
            Scheme::Explicit => grid.with_stable_steps(contract, &h, &v),
            Scheme::Implicit => grid,
        };
        PdeSolver::new(self.scheme)
            .solve(contract, &grid, &h, &v)?
            .lookup(s0, sigma, rate)
    }
}

impl Pricer for PdePricer {
    fn name(&self) -> &str {
        match self.dynamics {
            None => "pde_black_scholes",
            Some(_) => "pde_extended",
        }
    }

    fn price(&self, quote: &MarketQuote, inputs: PricingInputs) -> Result<f64> {
        self.price_contract(
            &quote.contract()?,
            quote.underlying_close,
            inputs.sigma,
            inputs.rate,
        )
    }
}

/// Where each quote's volatility comes from.
#[derive(Debug, Clone, Copy)]
pub enum VolSource<'a> {
    /// Historical volatility over the `window` returns ending on the quote
    /// date.
    Trailing {
        series: &'a PriceSeries,
        window: usize,
        trading_days_per_year: u32,
    },
    Constant(f64),
}

impl<'a> VolSource<'a> {
    pub fn trailing(series: &'a PriceSeries) -> Self {
        VolSource::Trailing {
            series,
            window: DEFAULT_VOL_WINDOW,
            trading_days_per_year: DEFAULT_TRADING_DAYS,
        }
    }

    pub fn sigma_for(&self, date: NaiveDate) -> Option<f64> {
        match *self {
            VolSource::Trailing {
                series,
                window,
                trading_days_per_year,
            } => series
                .trailing_volatility(date, window, trading_days_per_year)
                .map(|v| v.sigma_annual),
            VolSource::Constant(sigma) => Some(sigma),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuoteResidual {
    pub quote_id: String,
    pub theoretical: f64,
    pub market: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub model_name: String,
    pub rmse: f64,
    pub mae: f64,
    pub n_quotes: usize,
    pub skipped: usize,
    pub wall_time_seconds: f64,
    #[serde(default)]
    pub residuals: Vec<QuoteResidual>,
}

impl BacktestReport {
    /// Aggregates residuals into a report. An empty residual list yields
    /// `rmse = mae = 0` with `n_quotes = 0`.
    pub fn from_residuals(
        model_name: impl Into<String>,
        residuals: Vec<QuoteResidual>,
        skipped: usize,
        wall_time_seconds: f64,
    ) -> Self {
        let n = residuals.len();
        let (rmse, mae) = if n == 0 {
            (0.0, 0.0)
        } else {
            let sq = residuals
                .iter()
                .map(|r| r.residual * r.residual)
                .sum::<f64>();
            let abs = residuals.iter().map(|r| r.residual.abs()).sum::<f64>();
            ((sq / n as f64).sqrt(), abs / n as f64)
        };
        Self {
            model_name: model_name.into(),
            rmse,
            mae,
            n_quotes: n,
            skipped,
            wall_time_seconds,
            residuals,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn mean_market_price(&self) -> f64 {
        if self.residuals.is_empty() {
            return 0.0;
        }
        self.residuals.iter().map(|r| r.market).sum::<f64>() / self.residuals.len() as f64
    }

    pub fn priced_ids(&self) -> impl Iterator<Item = &str> {
        self.residuals.iter().map(|r| r.quote_id.as_str())
    }
}

fn check_pair(predicted: &[f64], actual: &[f64]) -> Result<()> {
    if predicted.len() != actual.len() {
        return Err(Error::invalid(format!(
            "length mismatch: {} predictions, {} actuals",
            predicted.len(),
            actual.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::invalid("empty series"));
    }
    Ok(())
}

pub fn rmse(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    check_pair(predicted, actual)?;
    let sq: f64 = predicted
        .iter()
        .zip(actual)
        .map(|(p, a)| (p - a) * (p - a))
        .sum();
    Ok((sq / predicted.len() as f64).sqrt())
}

pub fn mae(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    check_pair(predicted, actual)?;
    let abs: f64 = predicted
        .iter()
        .zip(actual)
        .map(|(p, a)| (p - a).abs())
        .sum();
    Ok(abs / predicted.len() as f64)
}

/// Prices every quote, skipping those whose volatility window cannot be
/// filled. Pricing errors abort the run.
pub fn run_backtest(
    quotes: &[MarketQuote],
    pricer: &dyn Pricer,
    vol_source: &VolSource<'_>,
    r0: f64,
) -> Result<BacktestReport> {
    if quotes.is_empty() {
        return Err(Error::invalid("no quotes to backtest"));
    }
    let start = Instant::now();
    let priced: Vec<Option<QuoteResidual>> = quotes
        .par_iter()
        .map(|q| -> Result<Option<QuoteResidual>> {
            let Some(sigma) = vol_source.sigma_for(q.date) else {
                return Ok(None);
            };
            let theoretical = pricer.price(q, PricingInputs { sigma, rate: r0 })?;
            if !theoretical.is_finite() {
                return Err(Error::NonFinite(format!("price for quote {}", q.quote_id)));
            }
            Ok(Some(QuoteResidual {
                quote_id: q.quote_id.clone(),
                theoretical,
                market: q.market_price,
                residual: theoretical - q.market_price,
            }))
        })
        .collect::<Result<_>>()?;
    let elapsed = start.elapsed().as_secs_f64();
    let skipped = priced.iter().filter(|p| p.is_none()).count();
    let residuals = priced.into_iter().flatten().collect();
    Ok(BacktestReport::from_residuals(
        pricer.name(),
        residuals,
        skipped,
        elapsed,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub median_seconds: f64,
    pub p95_seconds: f64,
    pub min_seconds: f64,
    pub max_seconds: f64,
    pub repetitions: usize,
    pub workload_size: usize,
    /// Sum of all prices from the last repetition; keeps the work observable.
    pub checksum: f64,
}

/// Wall-clock timing of pricing `workload` once per repetition.
pub fn timing_benchmark<F>(
    mut pricer: F,
    workload: &[OptionContract],
    repetitions: usize,
) -> Result<TimingStats>
where
    F: FnMut(&OptionContract) -> Result<f64>,
{
    if repetitions < 3 {
        return Err(Error::invalid(format!(
            "timing needs at least 3 repetitions, got {repetitions}"
        )));
    }
    let mut times = Vec::with_capacity(repetitions);
    let mut checksum = 0.0;
    for _ in 0..repetitions {
        let start = Instant::now();
        let mut sum = 0.0;
        for c in workload {
            sum += std::hint::black_box(pricer(c)?);
        }
        times.push(start.elapsed().as_secs_f64());
        checksum = sum;
    }
    times.sort_by(f64::total_cmp);
    let n = times.len();
    let median = if n % 2 == 1 {
        times[n / 2]
    } else {
        0.5 * (times[n / 2 - 1] + times[n / 2])
    };
    // nearest-rank percentile
    let p95 = times[((0.95 * n as f64).ceil() as usize).clamp(1, n) - 1];
    Ok(TimingStats {
        median_seconds: median,
        p95_seconds: p95,
        min_seconds: times[0],
        max_seconds: times[n - 1],
        repetitions,
        workload_size: workload.len(),
        checksum,
    })
}

/// Reads `quote_id,predicted_price`.
pub fn load_predictions(path: impl AsRef<Path>) -> Result<HashMap<String, f64>> {
    #[derive(Deserialize)]
    struct Row {
        quote_id: String,
        predicted_price: f64,
    }
    let path = path.as_ref();
    let file = File::open(path).map_err(io_error(path))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut out = HashMap::new();
    for (index, record) in reader.deserialize::<Row>().enumerate() {
        let line = index as u64 + 2;
        let row = record.map_err(|e| Error::Parse {
            path: path.to_owned(),
            line,
            message: e.to_string(),
        })?;
        if out
            .insert(row.quote_id.clone(), row.predicted_price)
            .is_some()
        {
            return Err(Error::Parse {
                path: path.to_owned(),
                line,
                message: format!("duplicate quote_id {}", row.quote_id),
            });
        }
    }
    Ok(out)
}

/// Scores external predictions on exactly the quotes `reference` priced.
/// Every such quote must have a prediction.
pub fn report_from_predictions(
    model_name: &str,
    reference: &BacktestReport,
    predictions: &HashMap<String, f64>,
) -> Result<BacktestReport> {
    let residuals = reference
        .residuals
        .iter()
        .map(|r| {
            let predicted = predictions.get(&r.quote_id).copied().ok_or_else(|| {
                Error::invalid(format!("no prediction for quote_id {}", r.quote_id))
            })?;
            Ok(QuoteResidual {
                quote_id: r.quote_id.clone(),
                theoretical: predicted,
                market: r.market,
                residual: predicted - r.market,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BacktestReport::from_residuals(
        model_name,
        residuals,
        reference.skipped,
        0.0,
    ))
}

/// PDE report, optional second report, and `rmse_pde − rmse_other`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub pde: BacktestReport,
    pub lstm: Option<BacktestReport>,
    pub rmse_delta: Option<f64>,
    pub notice: Option<String>,
}

impl ComparisonSummary {
    pub fn new(pde: BacktestReport, lstm: Option<BacktestReport>) -> Self {
        let rmse_delta = lstm.as_ref().map(|l| pde.rmse - l.rmse);
        let notice = lstm
            .is_none()
            .then(|| "LSTM predictions not available; PDE report only".to_owned());
        Self {
            pde,
            lstm,
            rmse_delta,
            notice,
        }
    }
}

/// Rows of `quote_id,date,close,sigma,r,strike,maturity_years,kind,market_price`,
/// one per quote, for the sequence model. `sigma` is empty where the trailing
/// window cannot be filled.
pub fn write_features_csv(
    quotes: &[MarketQuote],
    vol_source: &VolSource<'_>,
    r0: f64,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(io_error(path))?;
    let mut w = csv::Writer::from_writer(file);
    let csv_err = |e: csv::Error| Error::invalid(format!("csv write failed: {e}"));
    w.write_record([
        "quote_id",
        "date",
        "close",
        "sigma",
        "r",
        "strike",
        "maturity_years",
        "kind",
        "market_price",
    ])
    .map_err(csv_err)?;
    for q in quotes {
        let sigma = vol_source
            .sigma_for(q.date)
            .map(|s| s.to_string())
            .unwrap_or_default();
        w.write_record(&[
            q.quote_id.clone(),
            q.date.format("%Y-%m-%d").to_string(),
            q.underlying_close.to_string(),
            sigma,
            r0.to_string(),
            q.strike.to_string(),
            q.maturity.to_string(),
            q.kind.to_string(),
            q.market_price.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(io_error(path))
}

/// Synthetic stand-in for a historical price and option-quote history.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FixtureConfig {
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub s0: f64,
    /// Annual drift of the underlying.
    pub mu: f64,
    /// Annual volatility of the underlying.
    pub sigma: f64,
    pub r0: f64,
    /// Quotes are generated every `quote_every` trading days once the
    /// volatility window is full.
    pub quote_every: usize,
    pub maturity: f64,
    pub kind: OptionKind,
    /// Relative noise added to generated quote prices (0 for exact).
    pub price_noise: f64,
    pub vol_window: usize,
    pub seed: u64,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        Self {
            start: NaiveDate::from_ymd_opt(2019, 5, 1).expect("valid date"),
            end: NaiveDate::from_ymd_opt(2024, 5, 31).expect("valid date"),
            s0: 100.0,
            mu: 0.08,
            sigma: 0.25,
            r0: 0.03,
            quote_every: 5,
            maturity: 0.25,
            kind: OptionKind::Call,
            price_noise: 0.0,
            vol_window: DEFAULT_VOL_WINDOW,
            seed: 2019,
        }
    }
}

/// Weekday-only geometric Brownian motion closes, and at-the-money quotes
/// priced by the closed form at each date's trailing historical volatility.
pub fn synthetic_fixture(cfg: &FixtureConfig) -> Result<(PriceSeries, Vec<MarketQuote>)> {
    if cfg.end <= cfg.start {
        return Err(Error::invalid("fixture end must be after start"));
    }
    if cfg.quote_every == 0 || cfg.vol_window < 2 {
        return Err(Error::invalid(
            "quote_every must be >= 1 and vol_window >= 2",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dt = 1.0 / f64::from(DEFAULT_TRADING_DAYS);
    let drift = (cfg.mu - 0.5 * cfg.sigma * cfg.sigma) * dt;
    let diffusion = cfg.sigma * dt.sqrt();

    let mut observations = Vec::new();
    let mut close = cfg.s0;
    let mut date = cfg.start;
    while date <= cfg.end {
        if !matches!(date.weekday(), Weekday::Sat | Weekday::Sun) {
            if !observations.is_empty() {
                let z: f64 = StandardNormal.sample(&mut rng);
                close *= (drift + diffusion * z).exp();
            }
            observations.push(Observation { date, close });
        }
        date = date.succ_opt().expect("date in range");
    }
    let series = PriceSeries::new(observations)?;

    let vol = VolSource::Trailing {
        series: &series,
        window: cfg.vol_window,
        trading_days_per_year: DEFAULT_TRADING_DAYS,
    };
    let mut quotes = Vec::new();
    for obs in series
        .observations()
        .iter()
        .skip(cfg.vol_window)
        .step_by(cfg.quote_every)
    {
        let sigma = vol.sigma_for(obs.date).expect("window filled");
        let strike = obs.close.round().max(1.0);
        let contract = OptionContract::new(cfg.kind, strike, cfg.maturity)?;
        let mut price = bs_closed_form(&contract, obs.close, sigma, cfg.r0)?;
        if cfg.price_noise > 0.0 {
            let z: f64 = StandardNormal.sample(&mut rng);
            price = (price * (1.0 + cfg.price_noise * z)).max(0.0);
        }
        quotes.push(MarketQuote {
            quote_id: format!("q{:05}", quotes.len()),
            date: obs.date,
            strike,
            maturity: cfg.maturity,
            kind: cfg.kind,
            market_price: price,
            underlying_close: obs.close,
        });
    }
    Ok((series, quotes))
}
