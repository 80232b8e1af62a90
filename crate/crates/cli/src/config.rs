use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stochbs_core::backtest::FixtureConfig;
use stochbs_core::pde::{default_s_max, degenerate_params, linspace};
use stochbs_core::{Grid4D, HestonParams, OptionContract, OptionKind, Scheme, VasicekParams};

use crate::args::ModelArgs;
use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// One JSON document. Every section is optional and falls back to the
/// defaults below; command-line flags win over file values.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub contract: ContractConfig,
    pub market: MarketConfig,
    pub grid: GridConfig,
    pub scheme: Scheme,
    /// Absent means the zero-drift parameters for (σ₀, r₀).
    pub heston: Option<HestonParams>,
    pub vasicek: Option<VasicekParams>,
    pub mc: McConfig,
    pub surface: SurfaceConfig,
    pub data: DataConfig,
    pub backtest: BacktestConfig,
    pub fixture: FixtureConfig,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            contract: ContractConfig::default(),
            market: MarketConfig::default(),
            grid: GridConfig::default(),
            scheme: Scheme::Explicit,
            heston: None,
            vasicek: None,
            mc: McConfig::default(),
            surface: SurfaceConfig::default(),
            data: DataConfig::default(),
            backtest: BacktestConfig::default(),
            fixture: FixtureConfig::default(),
            seed: 42,
            out: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContractConfig {
    pub kind: OptionKind,
    pub strike: f64,
    pub maturity: f64,
}

impl Default for ContractConfig {
    fn default() -> Self {
        Self {
            kind: OptionKind::Call,
            strike: 100.0,
            maturity: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarketConfig {
    pub s0: f64,
    pub sigma0: f64,
    pub r0: f64,
}

impl Default for MarketConfig {
    fn default() -> Self {
        Self {
            s0: 100.0,
            sigma0: 0.2,
            r0: 0.05,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Defaults to `3·max(S₀, K)`.
    pub s_max: Option<f64>,
    pub n_s: usize,
    pub n_t: usize,
    /// One node means the σ axis collapses to σ₀.
    pub n_sigma: usize,
    pub n_r: usize,
    pub sigma_range: [f64; 2],
    pub r_range: [f64; 2],
    /// Raise `n_t` to the explicit stability limit instead of failing.
    pub auto_steps: bool,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            s_max: None,
            n_s: 200,
            n_t: 2000,
            n_sigma: 1,
            n_r: 1,
            sigma_range: [0.05, 0.8],
            r_range: [0.0, 0.1],
            auto_steps: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McConfig {
    pub n_paths: usize,
    /// Defaults to `ceil(250·T)`.
    pub steps: Option<usize>,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            n_paths: 200_000,
            steps: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SurfaceMode {
    /// Full (S, σ, r) surface at t = 0.
    Grid,
    /// One solve per strike, priced at (S₀, σ₀, r₀).
    Strike,
    /// S profile at each saved time level.
    Time,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurfaceConfig {
    pub mode: SurfaceMode,
    pub k_min: f64,
    pub k_max: f64,
    pub k_step: f64,
    /// Time-mode spacing in steps; defaults to `n_t/20`.
    pub snapshot_every: Option<usize>,
}

impl Default for SurfaceConfig {
    fn default() -> Self {
        Self {
            mode: SurfaceMode::Grid,
            k_min: 50.0,
            k_max: 150.0,
            k_step: 10.0,
            snapshot_every: None,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub prices: Option<PathBuf>,
    pub quotes: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum PricerChoice {
    Pde,
    ClosedForm,
    Passthrough,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BacktestConfig {
    pub pricer: PricerChoice,
    pub vol_window: usize,
    pub n_s: usize,
    pub min_n_t: usize,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            pricer: PricerChoice::Pde,
            vol_window: 30,
            n_s: 200,
            min_n_t: 200,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        match value.get("schema_version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(SCHEMA_VERSION) => {}
            Some(v) => {
                return Err(CliError::Config(format!(
                    "{}: unsupported schema_version {v} (expected {SCHEMA_VERSION})",
                    path.display()
                )))
            }
            None => {
                return Err(CliError::Config(format!(
                    "{}: missing schema_version",
                    path.display()
                )))
            }
        }
        serde_json::from_value(value)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn apply(&mut self, m: &ModelArgs) {
        fn set<T: Copy>(dst: &mut T, src: Option<T>) {
            if let Some(v) = src {
                *dst = v;
            }
        }
        set(&mut self.contract.kind, m.kind);
        set(&mut self.contract.strike, m.strike);
        set(&mut self.contract.maturity, m.maturity);
        set(&mut self.market.s0, m.s0);
        set(&mut self.market.sigma0, m.sigma);
        set(&mut self.market.r0, m.r0);
        if m.s_max.is_some() {
            self.grid.s_max = m.s_max;
        }
        set(&mut self.grid.n_s, m.n_s);
        set(&mut self.grid.n_t, m.n_t);
        set(&mut self.grid.n_sigma, m.n_sigma);
        set(&mut self.grid.n_r, m.n_r);
        set(&mut self.scheme, m.scheme);
        if m.auto_steps {
            self.grid.auto_steps = true;
        }
        if m.kappa.is_some() || m.theta.is_some() || m.xi.is_some() {
            let mut h = self.heston();
            set(&mut h.kappa, m.kappa);
            set(&mut h.theta, m.theta);
            set(&mut h.xi, m.xi);
            self.heston = Some(h);
        }
        if m.rate_speed.is_some() || m.rate_mean.is_some() || m.rate_vol.is_some() {
            let mut v = self.vasicek();
            set(&mut v.a, m.rate_speed);
            set(&mut v.b, m.rate_mean);
            set(&mut v.s, m.rate_vol);
            self.vasicek = Some(v);
        }
    }

    /// Checks everything a command might touch. Referenced input files must
    /// exist; the predictions file is checked by `compare` itself.
    pub fn validate(&self) -> Result<(), CliError> {
        self.contract()?;
        let m = &self.market;
        if !(m.s0 > 0.0 && m.s0.is_finite()) {
            return Err(CliError::Config(format!("s0 must be > 0, got {}", m.s0)));
        }
        if !(m.sigma0 > 0.0 && m.sigma0.is_finite()) {
            return Err(CliError::Config(format!(
                "sigma0 must be > 0, got {}",
                m.sigma0
            )));
        }
        if !m.r0.is_finite() {
            return Err(CliError::Config("r0 must be finite".into()));
        }
        self.heston().validate()?;
        self.vasicek().validate()?;
        self.grid()?;
        if self.mc.n_paths < 2 {
            return Err(CliError::Config(format!(
                "mc.n_paths must be >= 2, got {}",
                self.mc.n_paths
            )));
        }
        if self.backtest.vol_window < 2 {
            return Err(CliError::Config("backtest.vol_window must be >= 2".into()));
        }
        for path in [&self.data.prices, &self.data.quotes].into_iter().flatten() {
            if !path.exists() {
                return Err(CliError::Config(format!(
                    "{} does not exist",
                    path.display()
                )));
            }
        }
        Ok(())
    }

    pub fn contract(&self) -> Result<OptionContract, CliError> {
        let c = &self.contract;
        Ok(OptionContract::new(c.kind, c.strike, c.maturity)?)
    }

    pub fn heston(&self) -> HestonParams {
        self.heston
            .unwrap_or_else(|| degenerate_params(self.market.sigma0, self.market.r0).0)
    }

    pub fn vasicek(&self) -> VasicekParams {
        self.vasicek
            .unwrap_or_else(|| degenerate_params(self.market.sigma0, self.market.r0).1)
    }

    pub fn is_degenerate(&self) -> bool {
        self.grid.n_sigma == 1 && self.grid.n_r == 1
    }

    /// The configured grid for `contract`, with `n_t` raised for stability
    /// when `auto_steps` is set and the scheme is explicit.
    pub fn grid_for(&self, contract: &OptionContract) -> Result<Grid4D, CliError> {
        let g = &self.grid;
        let m = &self.market;
        let sigma_nodes = match g.n_sigma {
            1 => vec![m.sigma0],
            n => linspace(g.sigma_range[0], g.sigma_range[1], n)?,
        };
        let r_nodes = match g.n_r {
            1 => vec![m.r0],
            n => linspace(g.r_range[0], g.r_range[1], n)?,
        };
        let s_max = g.s_max.unwrap_or_else(|| default_s_max(contract, m.s0));
        let grid = Grid4D::new(s_max, g.n_s, g.n_t, sigma_nodes, r_nodes)?;
        if g.auto_steps && self.scheme == Scheme::Explicit {
            Ok(grid.with_stable_steps(contract, &self.heston(), &self.vasicek()))
        } else {
            Ok(grid)
        }
    }

    pub fn grid(&self) -> Result<Grid4D, CliError> {
        self.grid_for(&self.contract()?)
    }
}
