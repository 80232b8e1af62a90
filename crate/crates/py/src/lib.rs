//! Python bindings: contracts, dynamics parameters, the PDE solver, the
//! closed-form and Monte Carlo oracles, market data and the backtest runner.

use chrono::NaiveDate;
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;

use stochbs_core::backtest::{
    load_quotes, run_backtest as core_run_backtest, ClosedFormPricer, PassthroughPricer, PdePricer,
    Pricer, VolSource,
};
use stochbs_core::market_data::{self, load_price_series, Observation, PriceFormat};
use stochbs_core::pde::{self, PdeSolver};
use stochbs_core::{mc, Error};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        e if e.is_numerical() => PyArithmeticError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn parse_date(s: &str) -> PyResult<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map_err(|e| PyValueError::new_err(format!("bad date {s:?}: {e}")))
}

fn parse_scheme(s: &str) -> PyResult<pde::Scheme> {
    s.parse().map_err(to_py)
}

#[pyclass(name = "OptionContract", frozen, from_py_object)]
#[derive(Clone)]
struct PyOptionContract(pde::OptionContract);

#[pymethods]
impl PyOptionContract {
    #[new]
    fn new(kind: &str, strike: f64, maturity: f64) -> PyResult<Self> {
        let kind = kind.parse().map_err(to_py)?;
        Ok(Self(
            pde::OptionContract::new(kind, strike, maturity).map_err(to_py)?,
        ))
    }

    #[getter]
    fn kind(&self) -> String {
        self.0.kind.to_string()
    }

    #[getter]
    fn strike(&self) -> f64 {
        self.0.strike
    }

    #[getter]
    fn maturity(&self) -> f64 {
        self.0.maturity
    }

    fn payoff(&self, s: f64) -> PyResult<f64> {
        pde::payoff(&self.0, s).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!(
            "OptionContract('{}', strike={}, maturity={})",
            self.0.kind, self.0.strike, self.0.maturity
        )
    }
}

#[pyclass(name = "HestonParams", frozen, from_py_object)]
#[derive(Clone)]
struct PyHestonParams(stochbs_core::HestonParams);

#[pymethods]
impl PyHestonParams {
    #[new]
    fn new(kappa: f64, theta: f64, xi: f64) -> PyResult<Self> {
        Ok(Self(
            stochbs_core::HestonParams::new(kappa, theta, xi).map_err(to_py)?,
        ))
    }

    #[getter]
    fn kappa(&self) -> f64 {
        self.0.kappa
    }

    #[getter]
    fn theta(&self) -> f64 {
        self.0.theta
    }

    #[getter]
    fn xi(&self) -> f64 {
        self.0.xi
    }

    fn __repr__(&self) -> String {
        format!(
            "HestonParams(kappa={}, theta={}, xi={})",
            self.0.kappa, self.0.theta, self.0.xi
        )
    }
}

#[pyclass(name = "VasicekParams", frozen, from_py_object)]
#[derive(Clone)]
struct PyVasicekParams(stochbs_core::VasicekParams);

#[pymethods]
impl PyVasicekParams {
    #[new]
    fn new(a: f64, b: f64, s: f64) -> PyResult<Self> {
        Ok(Self(
            stochbs_core::VasicekParams::new(a, b, s).map_err(to_py)?,
        ))
    }

    #[getter]
    fn a(&self) -> f64 {
        self.0.a
    }

    #[getter]
    fn b(&self) -> f64 {
        self.0.b
    }

    #[getter]
    fn s(&self) -> f64 {
        self.0.s
    }

    fn __repr__(&self) -> String {
        format!(
            "VasicekParams(a={}, b={}, s={})",
            self.0.a, self.0.b, self.0.s
        )
    }
}

/// Zero-drift parameters for a single-node grid at (sigma, r).
#[pyfunction]
fn degenerate_params(sigma: f64, r: f64) -> (PyHestonParams, PyVasicekParams) {
    let (h, v) = pde::degenerate_params(sigma, r);
    (PyHestonParams(h), PyVasicekParams(v))
}

#[pyclass(name = "Grid", frozen, from_py_object)]
#[derive(Clone)]
struct PyGrid(pde::Grid4D);

#[pymethods]
impl PyGrid {
    #[new]
    fn new(
        s_max: f64,
        n_s: usize,
        n_t: usize,
        sigma_nodes: Vec<f64>,
        r_nodes: Vec<f64>,
    ) -> PyResult<Self> {
        Ok(Self(
            pde::Grid4D::new(s_max, n_s, n_t, sigma_nodes, r_nodes).map_err(to_py)?,
        ))
    }

    #[staticmethod]
    fn degenerate(s_max: f64, n_s: usize, n_t: usize, sigma: f64, r: f64) -> PyResult<Self> {
        Ok(Self(
            pde::Grid4D::degenerate(s_max, n_s, n_t, sigma, r).map_err(to_py)?,
        ))
    }

    #[staticmethod]
    #[pyo3(signature = (contract, s0, n_s, n_t, n_sigma=3, n_r=3))]
    fn with_defaults(
        contract: &PyOptionContract,
        s0: f64,
        n_s: usize,
        n_t: usize,
        n_sigma: usize,
        n_r: usize,
    ) -> PyResult<Self> {
        Ok(Self(
            pde::Grid4D::with_defaults(&contract.0, s0, n_s, n_t, n_sigma, n_r).map_err(to_py)?,
        ))
    }

    /// Copy with n_t raised to the explicit stability limit.
    fn with_stable_steps(
        &self,
        contract: &PyOptionContract,
        heston: &PyHestonParams,
        vasicek: &PyVasicekParams,
    ) -> Self {
        Self(
            self.0
                .clone()
                .with_stable_steps(&contract.0, &heston.0, &vasicek.0),
        )
    }

    #[getter]
    fn s_max(&self) -> f64 {
        self.0.s_max
    }

    #[getter]
    fn n_s(&self) -> usize {
        self.0.n_s
    }

    #[getter]
    fn n_t(&self) -> usize {
        self.0.n_t
    }

    #[getter]
    fn sigma_nodes(&self) -> Vec<f64> {
        self.0.sigma_nodes.clone()
    }

    #[getter]
    fn r_nodes(&self) -> Vec<f64> {
        self.0.r_nodes.clone()
    }

    fn s_nodes(&self) -> Vec<f64> {
        self.0.s_nodes()
    }

    fn __repr__(&self) -> String {
        format!(
            "Grid(s_max={}, n_s={}, n_t={}, n_sigma={}, n_r={})",
            self.0.s_max,
            self.0.n_s,
            self.0.n_t,
            self.0.n_sigma(),
            self.0.n_r()
        )
    }
}

#[pyclass(name = "PriceSurface", frozen)]
struct PyPriceSurface(pde::PriceSurface);

#[pymethods]
impl PyPriceSurface {
    /// Trilinear interpolation at (s0, sigma0, r0).
    fn lookup(&self, s0: f64, sigma0: f64, r0: f64) -> PyResult<f64> {
        self.0.lookup(s0, sigma0, r0).map_err(to_py)
    }

    fn value(&self, j: usize, k: usize, l: usize) -> PyResult<f64> {
        let g = &self.0.grid;
        if j >= g.n_s || k >= g.n_sigma() || l >= g.n_r() {
            return Err(PyValueError::new_err("node index out of range"));
        }
        Ok(self.0.value(j, k, l))
    }

    /// S profile at sigma node k and r node l.
    fn slice(&self, k: usize, l: usize) -> PyResult<Vec<f64>> {
        if k >= self.0.grid.n_sigma() || l >= self.0.grid.n_r() {
            return Err(PyValueError::new_err("node index out of range"));
        }
        Ok(self.0.slice(k, l).to_vec())
    }

    fn values(&self) -> Vec<f64> {
        self.0.values().to_vec()
    }

    #[getter]
    fn grid(&self) -> PyGrid {
        PyGrid(self.0.grid.clone())
    }

    fn write_csv(&self, path: &str) -> PyResult<()> {
        self.0.write_csv_file(path).map_err(to_py)
    }
}

#[pyfunction]
fn bs_closed_form(contract: &PyOptionContract, s0: f64, sigma: f64, r: f64) -> PyResult<f64> {
    pde::bs_closed_form(&contract.0, s0, sigma, r).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (contract, grid, heston, vasicek, scheme="explicit"))]
fn solve(
    py: Python<'_>,
    contract: &PyOptionContract,
    grid: &PyGrid,
    heston: &PyHestonParams,
    vasicek: &PyVasicekParams,
    scheme: &str,
) -> PyResult<PyPriceSurface> {
    let solver = PdeSolver::new(parse_scheme(scheme)?);
    let (c, g, h, v) = (contract.0, grid.0.clone(), heston.0, vasicek.0);
    py.detach(|| solver.solve(&c, &g, &h, &v))
        .map(PyPriceSurface)
        .map_err(to_py)
}

/// PDE price on a single-node (sigma, r) grid, i.e. plain Black-Scholes.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (contract, s0, sigma, r, n_s=200, n_t=2000, scheme="explicit"))]
fn pde_price(
    py: Python<'_>,
    contract: &PyOptionContract,
    s0: f64,
    sigma: f64,
    r: f64,
    n_s: usize,
    n_t: usize,
    scheme: &str,
) -> PyResult<f64> {
    let scheme = parse_scheme(scheme)?;
    let c = contract.0;
    py.detach(|| {
        let grid = pde::Grid4D::degenerate(pde::default_s_max(&c, s0), n_s, n_t, sigma, r)?;
        let (h, v) = pde::degenerate_params(sigma, r);
        PdeSolver::new(scheme)
            .solve(&c, &grid, &h, &v)?
            .lookup(s0, sigma, r)
    })
    .map_err(to_py)
}

#[pyfunction]
fn max_stable_dt(grid: &PyGrid, heston: &PyHestonParams, vasicek: &PyVasicekParams) -> f64 {
    pde::max_stable_dt(&grid.0, &heston.0, &vasicek.0)
}

#[pyclass(name = "McEstimate", frozen, get_all)]
struct PyMcEstimate {
    price: f64,
    std_error: f64,
    n_paths: usize,
    seed: u64,
}

#[pymethods]
impl PyMcEstimate {
    fn __repr__(&self) -> String {
        format!(
            "McEstimate(price={}, std_error={}, n_paths={}, seed={})",
            self.price, self.std_error, self.n_paths, self.seed
        )
    }
}

#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (contract, s0, variance0, r0, heston, vasicek, n_paths, seed, steps=None))]
fn mc_price(
    py: Python<'_>,
    contract: &PyOptionContract,
    s0: f64,
    variance0: f64,
    r0: f64,
    heston: &PyHestonParams,
    vasicek: &PyVasicekParams,
    n_paths: usize,
    seed: u64,
    steps: Option<usize>,
) -> PyResult<PyMcEstimate> {
    let init = stochbs_core::PathState::new(s0, variance0, r0).map_err(to_py)?;
    let c = contract.0;
    let steps = steps.unwrap_or_else(|| mc::default_steps(c.maturity));
    let (h, v) = (heston.0, vasicek.0);
    let est = py
        .detach(|| mc::mc_price(&c, &init, &h, &v, steps, n_paths, seed))
        .map_err(to_py)?;
    Ok(PyMcEstimate {
        price: est.price,
        std_error: est.std_error,
        n_paths: est.n_paths,
        seed: est.seed,
    })
}

#[pyclass(name = "PriceSeries", frozen)]
struct PyPriceSeries(stochbs_core::PriceSeries);

#[pymethods]
impl PyPriceSeries {
    /// Dates as `YYYY-MM-DD` strings, one per close.
    #[new]
    fn new(dates: Vec<String>, closes: Vec<f64>) -> PyResult<Self> {
        if dates.len() != closes.len() {
            return Err(PyValueError::new_err("dates and closes differ in length"));
        }
        let observations = dates
            .iter()
            .zip(closes)
            .map(|(d, close)| {
                Ok(Observation {
                    date: parse_date(d)?,
                    close,
                })
            })
            .collect::<PyResult<Vec<_>>>()?;
        Ok(Self(
            stochbs_core::PriceSeries::new(observations).map_err(to_py)?,
        ))
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self(
            load_price_series(path, PriceFormat::Csv).map_err(to_py)?,
        ))
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn dates(&self) -> Vec<String> {
        self.0
            .observations()
            .iter()
            .map(|o| o.date.format("%Y-%m-%d").to_string())
            .collect()
    }

    fn closes(&self) -> Vec<f64> {
        self.0.closes()
    }

    fn log_returns(&self) -> PyResult<Vec<f64>> {
        market_data::log_returns(&self.0).map_err(to_py)
    }

    /// Annualized volatility of the `window` returns ending on `date`, or
    /// None when the history is too short.
    #[pyo3(signature = (date, window=30, trading_days=252))]
    fn trailing_volatility(
        &self,
        date: &str,
        window: usize,
        trading_days: u32,
    ) -> PyResult<Option<f64>> {
        Ok(self
            .0
            .trailing_volatility(parse_date(date)?, window, trading_days)
            .map(|v| v.sigma_annual))
    }

    fn save(&self, path: &str) -> PyResult<()> {
        market_data::write_price_series(&self.0, path).map_err(to_py)
    }
}

#[pyfunction]
#[pyo3(signature = (returns, trading_days=252))]
fn historical_volatility(returns: Vec<f64>, trading_days: u32) -> PyResult<f64> {
    market_data::historical_volatility(&returns, trading_days)
        .map(|v| v.sigma_annual)
        .map_err(to_py)
}

#[pyfunction]
fn rmse(predicted: Vec<f64>, actual: Vec<f64>) -> PyResult<f64> {
    stochbs_core::backtest::rmse(&predicted, &actual).map_err(to_py)
}

#[pyfunction]
fn mae(predicted: Vec<f64>, actual: Vec<f64>) -> PyResult<f64> {
    stochbs_core::backtest::mae(&predicted, &actual).map_err(to_py)
}

#[pyclass(name = "BacktestReport", frozen)]
struct PyBacktestReport(stochbs_core::BacktestReport);

#[pymethods]
impl PyBacktestReport {
    #[getter]
    fn model_name(&self) -> String {
        self.0.model_name.clone()
    }

    #[getter]
    fn rmse(&self) -> f64 {
        self.0.rmse
    }

    #[getter]
    fn mae(&self) -> f64 {
        self.0.mae
    }

    #[getter]
    fn n_quotes(&self) -> usize {
        self.0.n_quotes
    }

    #[getter]
    fn skipped(&self) -> usize {
        self.0.skipped
    }

    #[getter]
    fn wall_time_seconds(&self) -> f64 {
        self.0.wall_time_seconds
    }

    /// `(quote_id, theoretical, market)` per priced quote.
    fn residuals(&self) -> Vec<(String, f64, f64)> {
        self.0
            .residuals
            .iter()
            .map(|r| (r.quote_id.clone(), r.theoretical, r.market))
            .collect()
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().map_err(to_py)
    }
}

/// Prices every quote in `quotes_path` with `pricer` ("pde", "closed-form"
/// or "passthrough") at trailing historical volatility from `prices_path`.
#[pyfunction]
#[pyo3(signature = (prices_path, quotes_path, r0, pricer="pde", vol_window=30))]
fn run_backtest(
    py: Python<'_>,
    prices_path: &str,
    quotes_path: &str,
    r0: f64,
    pricer: &str,
    vol_window: usize,
) -> PyResult<PyBacktestReport> {
    let series = load_price_series(prices_path, PriceFormat::Csv).map_err(to_py)?;
    let quotes = load_quotes(quotes_path).map_err(to_py)?;
    let pde_pricer = PdePricer::default();
    let pricer: &dyn Pricer = match pricer {
        "pde" => &pde_pricer,
        "closed-form" => &ClosedFormPricer,
        "passthrough" => &PassthroughPricer,
        other => return Err(PyValueError::new_err(format!("unknown pricer {other:?}"))),
    };
    let vol = VolSource::Trailing {
        series: &series,
        window: vol_window,
        trading_days_per_year: market_data::DEFAULT_TRADING_DAYS,
    };
    py.detach(|| core_run_backtest(&quotes, pricer, &vol, r0))
        .map(PyBacktestReport)
        .map_err(to_py)
}

#[pymodule]
pub fn stochbs(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyOptionContract>()?;
    m.add_class::<PyHestonParams>()?;
    m.add_class::<PyVasicekParams>()?;
    m.add_class::<PyGrid>()?;
    m.add_class::<PyPriceSurface>()?;
    m.add_class::<PyMcEstimate>()?;
    m.add_class::<PyPriceSeries>()?;
    m.add_class::<PyBacktestReport>()?;
    m.add_function(wrap_pyfunction!(degenerate_params, m)?)?;
    m.add_function(wrap_pyfunction!(bs_closed_form, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(pde_price, m)?)?;
    m.add_function(wrap_pyfunction!(max_stable_dt, m)?)?;
    m.add_function(wrap_pyfunction!(mc_price, m)?)?;
    m.add_function(wrap_pyfunction!(historical_volatility, m)?)?;
    m.add_function(wrap_pyfunction!(rmse, m)?)?;
    m.add_function(wrap_pyfunction!(mae, m)?)?;
    m.add_function(wrap_pyfunction!(run_backtest, m)?)?;
    Ok(())
}
