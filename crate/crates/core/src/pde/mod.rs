//! Finite-difference solver for the extended Black-Scholes equation
//!
//! ```text
//! ∂V/∂t + ½σ²S² ∂²V/∂S² + rS ∂V/∂S − rV + μ_σ(σ) ∂V/∂σ + μ_r(r) ∂V/∂r = 0
//! ```
//!
//! on a (t, S, σ, r) grid, where the advection speeds are the deterministic
//! drifts of the volatility and rate processes: μ_σ = κ(θ − σ²)/(2σ) and
//! μ_r = a(b − r). There is no diffusion in σ or r.
//!
//! Time runs backward from the payoff at `t = T` (step index `n_t`) to `t = 0`.
//! Each (σ_k, r_l) pair is a one-dimensional slice in S. The S operator uses
//! central differences; the σ and r advection terms use first-order upwind
//! differences taken from the previous time level. The explicit scheme
//! advances everything from the previous level. The implicit scheme solves a
//! tridiagonal system in S per slice with an iterative solver and keeps the
//! advection explicit.

mod black_scholes;
mod linalg;
mod stencil;

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{HestonParams, VasicekParams};
use crate::{Error, Result};

pub use black_scholes::bs_closed_form;
pub use linalg::{
    iterative_solve, iterative_solve_from, thomas_solve, IterativeMethod, SolveOutcome,
    SolverSettings, Tridiagonal,
};
pub use stencil::{
    assemble_tridiagonal, explicit_step, max_stable_dt, required_time_steps, SliceSystem,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptionKind {
    Call,
    Put,
}

impl std::str::FromStr for OptionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "call" | "c" => Ok(OptionKind::Call),
            "put" | "p" => Ok(OptionKind::Put),
            other => Err(Error::invalid(format!("unknown option kind {other:?}"))),
        }
    }
}

impl std::fmt::Display for OptionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OptionKind::Call => "call",
            OptionKind::Put => "put",
        })
    }
}

/// European option; maturity in years (ACT/365).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptionContract {
    pub kind: OptionKind,
    pub strike: f64,
    pub maturity: f64,
}

impl OptionContract {
    pub fn new(kind: OptionKind, strike: f64, maturity: f64) -> Result<Self> {
        let c = Self {
            kind,
            strike,
            maturity,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn call(strike: f64, maturity: f64) -> Result<Self> {
        Self::new(OptionKind::Call, strike, maturity)
    }

    pub fn put(strike: f64, maturity: f64) -> Result<Self> {
        Self::new(OptionKind::Put, strike, maturity)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.strike > 0.0 && self.strike.is_finite()) {
            return Err(Error::invalid(format!(
                "strike must be > 0, got {}",
                self.strike
            )));
        }
        if !(self.maturity > 0.0 && self.maturity.is_finite()) {
            return Err(Error::invalid(format!(
                "maturity must be > 0, got {}",
                self.maturity
            )));
        }
        Ok(())
    }
}

pub fn payoff(contract: &OptionContract, s: f64) -> Result<f64> {
    if !(s >= 0.0) {
        return Err(Error::invalid(format!("spot must be >= 0, got {s}")));
    }
    Ok(intrinsic(contract, s))
}

#[inline]
fn intrinsic(contract: &OptionContract, s: f64) -> f64 {
    match contract.kind {
        OptionKind::Call => (s - contract.strike).max(0.0),
        OptionKind::Put => (contract.strike - s).max(0.0),
    }
}

/// Dirichlet values at S = 0 and S = s_max for time `t` and rate `r`.
///
/// Calls are worthless at S = 0 and grow linearly at the top (floored at zero
/// for grids that end below the discounted strike); puts are worth the
/// discounted strike at S = 0 and nothing at the top.
pub fn boundary_values(
    contract: &OptionContract,
    grid: &Grid4D,
    t: f64,
    r: f64,
) -> Result<(f64, f64)> {
    let tau = contract.maturity - t;
    // allow a few ulps of slack from accumulated i·dt
    if !(tau >= -1e-12 * contract.maturity) || t < -1e-12 * contract.maturity {
        return Err(Error::invalid(format!(
            "t = {t} outside [0, {}]",
            contract.maturity
        )));
    }
    Ok(boundary_unchecked(contract, grid.s_max, tau.max(0.0), r))
}

#[inline]
fn boundary_unchecked(contract: &OptionContract, s_max: f64, tau: f64, r: f64) -> (f64, f64) {
    let discounted = contract.strike * (-r * tau).exp();
    match contract.kind {
        OptionKind::Call => (0.0, (s_max - discounted).max(0.0)),
        OptionKind::Put => (discounted, 0.0),
    }
}

/// Discretization of (t, S, σ, r).
///
/// S nodes are `j·ΔS` for `j = 0..n_s` with `ΔS = s_max/(n_s − 1)`. Time steps
/// are `Δt = T/n_t`, with `T` taken from the contract being solved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid4D {
    pub s_max: f64,
    pub n_s: usize,
    pub n_t: usize,
    pub sigma_nodes: Vec<f64>,
    pub r_nodes: Vec<f64>,
}

pub const DEFAULT_SIGMA_RANGE: (f64, f64) = (0.05, 0.8);
pub const DEFAULT_RATE_RANGE: (f64, f64) = (0.0, 0.10);

impl Grid4D {
    pub fn new(
        s_max: f64,
        n_s: usize,
        n_t: usize,
        sigma_nodes: Vec<f64>,
        r_nodes: Vec<f64>,
    ) -> Result<Self> {
        let g = Self {
            s_max,
            n_s,
            n_t,
            sigma_nodes,
            r_nodes,
        };
        g.validate()?;
        Ok(g)
    }

    /// Single σ node and single r node: the advection terms vanish and the
    /// problem reduces to constant-coefficient Black-Scholes.
    pub fn degenerate(s_max: f64, n_s: usize, n_t: usize, sigma: f64, r: f64) -> Result<Self> {
        Self::new(s_max, n_s, n_t, vec![sigma], vec![r])
    }

    /// Default extents: `s_max = 3·max(S₀, K)`, σ uniform on [0.05, 0.8],
    /// r uniform on [0, 0.10].
    pub fn with_defaults(
        contract: &OptionContract,
        s0: f64,
        n_s: usize,
        n_t: usize,
        n_sigma: usize,
        n_r: usize,
    ) -> Result<Self> {
        Self::new(
            default_s_max(contract, s0),
            n_s,
            n_t,
            linspace(DEFAULT_SIGMA_RANGE.0, DEFAULT_SIGMA_RANGE.1, n_sigma)?,
            linspace(DEFAULT_RATE_RANGE.0, DEFAULT_RATE_RANGE.1, n_r)?,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s_max > 0.0 && self.s_max.is_finite()) {
            return Err(Error::invalid(format!(
                "s_max must be > 0, got {}",
                self.s_max
            )));
        }
        if self.n_s < 3 {
            return Err(Error::invalid(format!(
                "n_s must be >= 3, got {}",
                self.n_s
            )));
        }
        if self.n_t < 1 {
            return Err(Error::invalid("n_t must be >= 1"));
        }
        if self.sigma_nodes.is_empty() || self.r_nodes.is_empty() {
            return Err(Error::invalid("sigma and r node lists must be nonempty"));
        }
        if !self.sigma_nodes.iter().all(|s| *s > 0.0 && s.is_finite()) {
            return Err(Error::invalid("sigma nodes must be positive and finite"));
        }
        if !self.r_nodes.iter().all(|r| r.is_finite()) {
            return Err(Error::invalid("r nodes must be finite"));
        }
        if !strictly_ascending(&self.sigma_nodes) {
            return Err(Error::invalid("sigma nodes must be strictly ascending"));
        }
        if !strictly_ascending(&self.r_nodes) {
            return Err(Error::invalid("r nodes must be strictly ascending"));
        }
        Ok(())
    }

    pub fn ds(&self) -> f64 {
        self.s_max / (self.n_s - 1) as f64
    }

    pub fn dt(&self, contract: &OptionContract) -> f64 {
        contract.maturity / self.n_t as f64
    }

    pub fn s_node(&self, j: usize) -> f64 {
        j as f64 * self.ds()
    }

    pub fn s_nodes(&self) -> Vec<f64> {
        (0..self.n_s).map(|j| self.s_node(j)).collect()
    }

    pub fn n_sigma(&self) -> usize {
        self.sigma_nodes.len()
    }

    pub fn n_r(&self) -> usize {
        self.r_nodes.len()
    }

    pub fn len(&self) -> usize {
        self.n_s * self.n_sigma() * self.n_r()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat index of node (j, k, l); S is the fastest-varying axis.
    #[inline]
    pub fn index(&self, j: usize, k: usize, l: usize) -> usize {
        (k * self.n_r() + l) * self.n_s + j
    }

    /// Same grid with `n_t` raised, if needed, to the smallest step count the
    /// explicit scheme accepts.
    pub fn with_stable_steps(
        mut self,
        contract: &OptionContract,
        h: &HestonParams,
        v: &VasicekParams,
    ) -> Self {
        self.n_t = self.n_t.max(required_time_steps(&self, contract, h, v));
        self
    }
}

pub fn default_s_max(contract: &OptionContract, s0: f64) -> f64 {
    3.0 * s0.max(contract.strike)
}

fn strictly_ascending(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[0] < w[1])
}

/// `n` evenly spaced points on [lo, hi]; `n = 1` gives `[lo]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    match n {
        0 => Err(Error::invalid("node count must be >= 1")),
        1 => Ok(vec![lo]),
        _ => Ok((0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    #[default]
    Explicit,
    Implicit,
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "explicit" => Ok(Scheme::Explicit),
            "implicit" => Ok(Scheme::Implicit),
            other => Err(Error::invalid(format!("unknown scheme {other:?}"))),
        }
    }
}

/// Option values at t = 0 over every (S, σ, r) node.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSurface {
    values: Vec<f64>,
    pub grid: Grid4D,
    pub contract: OptionContract,
}

impl PriceSurface {
    pub fn from_values(values: Vec<f64>, grid: Grid4D, contract: OptionContract) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::invalid(format!(
                "surface has {} values but grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self {
            values,
            grid,
            contract,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, j: usize, k: usize, l: usize) -> f64 {
        self.values[self.grid.index(j, k, l)]
    }

    /// The S-row for slice (k, l).
    pub fn slice(&self, k: usize, l: usize) -> &[f64] {
        let start = self.grid.index(0, k, l);
        &self.values[start..start + self.grid.n_s]
    }

    /// Trilinear interpolation in (S, σ, r). Exact at nodes. An axis with a
    /// single node only accepts that node's value.
    pub fn lookup(&self, s0: f64, sigma0: f64, r0: f64) -> Result<f64> {
        let g = &self.grid;
        if !(0.0..=g.s_max).contains(&s0) {
            return Err(Error::OutOfBounds {
                what: "S",
                value: s0,
                lo: 0.0,
                hi: g.s_max,
            });
        }
        let (j0, ws) = {
            let x = s0 / g.ds();
            let j = (x.floor() as usize).min(g.n_s - 2);
            (j, x - j as f64)
        };
        let (k0, wk) = bracket(&g.sigma_nodes, sigma0, "sigma")?;
        let (l0, wl) = bracket(&g.r_nodes, r0, "r")?;
        let k1 = (k0 + 1).min(g.n_sigma() - 1);
        let l1 = (l0 + 1).min(g.n_r() - 1);

        let mut acc = 0.0;
        for (k, wk) in [(k0, 1.0 - wk), (k1, wk)] {
            for (l, wl) in [(l0, 1.0 - wl), (l1, wl)] {
                for (j, wj) in [(j0, 1.0 - ws), (j0 + 1, ws)] {
                    let w = wk * wl * wj;
                    if w != 0.0 {
                        acc += w * self.value(j, k, l);
                    }
                }
            }
        }
        Ok(acc)
    }

    /// Writes `s,sigma,r,value` rows, one per node.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let to_err = |e: csv::Error| Error::invalid(format!("csv write failed: {e}"));
        w.write_record(["s", "sigma", "r", "value"])
            .map_err(to_err)?;
        for (k, sigma) in self.grid.sigma_nodes.iter().enumerate() {
            for (l, r) in self.grid.r_nodes.iter().enumerate() {
                for j in 0..self.grid.n_s {
                    w.write_record(&[
                        self.grid.s_node(j).to_string(),
                        sigma.to_string(),
                        r.to_string(),
                        self.value(j, k, l).to_string(),
                    ])
                    .map_err(to_err)?;
                }
            }
        }
        w.flush()
            .map_err(|e| Error::invalid(format!("csv write failed: {e}")))
    }

    pub fn write_csv_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Lower bracketing index and weight of `x` in ascending `nodes`.
fn bracket(nodes: &[f64], x: f64, what: &'static str) -> Result<(usize, f64)> {
    let (lo, hi) = (nodes[0], nodes[nodes.len() - 1]);
    if !(lo..=hi).contains(&x) {
        return Err(Error::OutOfBounds {
            what,
            value: x,
            lo,
            hi,
        });
    }
    if nodes.len() == 1 {
        return Ok((0, 0.0));
    }
    let i = nodes.partition_point(|n| *n <= x).clamp(1, nodes.len() - 1) - 1;
    Ok((i, (x - nodes[i]) / (nodes[i + 1] - nodes[i])))
}

/// Values over the whole (S, σ, r) grid at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSlice {
    pub step: usize,
    pub t: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PdeSolver {
    pub scheme: Scheme,
    pub solver: SolverSettings,
    /// Keep every n-th time level (plus t = T and t = 0) when solving with
    /// history.
    pub snapshot_every: Option<usize>,
}

impl Default for PdeSolver {
    fn default() -> Self {
        Self {
            scheme: Scheme::Explicit,
            solver: SolverSettings::default(),
            snapshot_every: None,
        }
    }
}

impl PdeSolver {
    pub fn new(scheme: Scheme) -> Self {
        Self {
            scheme,
            ..Self::default()
        }
    }

    pub fn solve(
        &self,
        contract: &OptionContract,
        grid: &Grid4D,
        h: &HestonParams,
        v: &VasicekParams,
    ) -> Result<PriceSurface> {
        self.solve_with_history(contract, grid, h, v)
            .map(|(s, _)| s)
    }

    /// Backward march from the payoff. Snapshots come back ordered from
    /// maturity toward t = 0.
    pub fn solve_with_history(
        &self,
        contract: &OptionContract,
        grid: &Grid4D,
        h: &HestonParams,
        v: &VasicekParams,
    ) -> Result<(PriceSurface, Vec<TimeSlice>)> {
        contract.validate()?;
        grid.validate()?;
        h.validate()?;
        v.validate()?;
        if self.scheme == Scheme::Explicit {
            stencil::check_stability(grid, contract, h, v)?;
        }
        self.solver.validate()?;

        let dt = grid.dt(contract);
        let mut current = terminal_values(contract, grid);
        let mut next = vec![0.0; current.len()];
        let mut history = Vec::new();
        let keep = |step: usize| match self.snapshot_every {
            Some(every) if every > 0 => step.is_multiple_of(every) || step == grid.n_t || step == 0,
            _ => false,
        };
        if keep(grid.n_t) {
            history.push(TimeSlice {
                step: grid.n_t,
                t: contract.maturity,
                values: current.clone(),
            });
        }

        let systems = match self.scheme {
            Scheme::Implicit => Some(stencil::slice_systems(grid, dt)),
            Scheme::Explicit => None,
        };

        for step in (0..grid.n_t).rev() {
            let t = step as f64 * dt;
            match &systems {
                None => stencil::explicit_step_into(&current, &mut next, grid, contract, h, v, t)?,
                Some(systems) => stencil::implicit_step_into(
                    &current,
                    &mut next,
                    grid,
                    contract,
                    h,
                    v,
                    t,
                    systems,
                    &self.solver,
                )?,
            }
            std::mem::swap(&mut current, &mut next);
            if keep(step) {
                history.push(TimeSlice {
                    step,
                    t,
                    values: current.clone(),
                });
            }
        }

        if let Some(bad) = current.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!(
                "surface value at flat index {bad}"
            )));
        }
        Ok((
            PriceSurface::from_values(current, grid.clone(), *contract)?,
            history,
        ))
    }
}

/// Payoff at every node; identical across the σ and r axes.
pub fn terminal_values(contract: &OptionContract, grid: &Grid4D) -> Vec<f64> {
    let row: Vec<f64> = (0..grid.n_s)
        .map(|j| intrinsic(contract, grid.s_node(j)))
        .collect();
    let mut values = vec![0.0; grid.len()];
    values
        .par_chunks_mut(grid.n_s)
        .for_each(|chunk| chunk.copy_from_slice(&row));
    values
}

/// Solves with default solver settings.
pub fn solve_extended_pde(
    contract: &OptionContract,
    grid: &Grid4D,
    h: &HestonParams,
    v: &VasicekParams,
    scheme: Scheme,
) -> Result<PriceSurface> {
    PdeSolver::new(scheme).solve(contract, grid, h, v)
}

/// Solves and interpolates at (S₀, σ₀, r₀).
pub fn surface_lookup(surface: &PriceSurface, s0: f64, sigma0: f64, r0: f64) -> Result<f64> {
    surface.lookup(s0, sigma0, r0)
}

/// Parameters under which a single-node grid has zero σ and r drift:
/// θ = σ², b = r, no diffusion.
pub fn degenerate_params(sigma: f64, r: f64) -> (HestonParams, VasicekParams) {
    (
        HestonParams {
            kappa: 1.0,
            theta: sigma * sigma,
            xi: 0.0,
        },
        VasicekParams {
            a: 1.0,
            b: r,
            s: 0.0,
        },
    )
}
