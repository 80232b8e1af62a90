//! Heston variance and Vasicek short-rate dynamics.
//!
//! ```text
//! dσ² = κ(θ − σ²) dt + ξ √σ² dW_σ
//! dr  = a(b − r) dt + s dW_r
//! dS  = r S dt + σ S dW_S
//! ```
//!
//! The three Brownian motions are independent. Paths are stepped with
//! Euler–Maruyama: the stock in log space (so it stays positive), the variance
//! with a full-truncation floor at zero, the rate directly.
//!
//! Each path draws from its own ChaCha8 stream, seeded with the run seed and
//! selected by the path index, so an ensemble does not depend on how paths
//! are scheduled across threads. Normal draws use `rand_distr::StandardNormal`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HestonParams {
    /// Mean-reversion speed, per year.
    pub kappa: f64,
    /// Long-run variance.
    pub theta: f64,
    /// Volatility of variance.
    pub xi: f64,
}

impl HestonParams {
    /// `theta = 0` is accepted so the zero-volatility limit can be expressed.
    pub fn new(kappa: f64, theta: f64, xi: f64) -> Result<Self> {
        let p = Self { kappa, theta, xi };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::invalid(format!(
                "kappa must be > 0, got {}",
                self.kappa
            )));
        }
        if !(self.theta >= 0.0 && self.theta.is_finite()) {
            return Err(Error::invalid(format!(
                "theta must be >= 0, got {}",
                self.theta
            )));
        }
        if !(self.xi >= 0.0 && self.xi.is_finite()) {
            return Err(Error::invalid(format!("xi must be >= 0, got {}", self.xi)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VasicekParams {
    /// Mean-reversion speed, per year.
    pub a: f64,
    /// Long-run rate.
    pub b: f64,
    /// Rate volatility.
    pub s: f64,
}

impl VasicekParams {
    pub fn new(a: f64, b: f64, s: f64) -> Result<Self> {
        let p = Self { a, b, s };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a.is_finite()) {
            return Err(Error::invalid(format!("a must be > 0, got {}", self.a)));
        }
        if !self.b.is_finite() {
            return Err(Error::invalid(format!("b must be finite, got {}", self.b)));
        }
        if !(self.s >= 0.0 && self.s.is_finite()) {
            return Err(Error::invalid(format!("s must be >= 0, got {}", self.s)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathState {
    pub stock: f64,
    /// Instantaneous variance σ².
    pub variance: f64,
    pub rate: f64,
}

impl PathState {
    pub fn new(stock: f64, variance: f64, rate: f64) -> Result<Self> {
        let s = Self {
            stock,
            variance,
            rate,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.stock > 0.0 && self.stock.is_finite()) {
            return Err(Error::invalid(format!(
                "stock must be > 0, got {}",
                self.stock
            )));
        }
        if !(self.variance >= 0.0 && self.variance.is_finite()) {
            return Err(Error::invalid(format!(
                "variance must be >= 0, got {}",
                self.variance
            )));
        }
        if !self.rate.is_finite() {
            return Err(Error::invalid(format!(
                "rate must be finite, got {}",
                self.rate
            )));
        }
        Ok(())
    }

    pub fn volatility(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// Standard-normal shocks for one step, one per Brownian driver.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Shocks {
    pub stock: f64,
    pub variance: f64,
    pub rate: f64,
}

/// κ(θ − σ²).
pub fn variance_drift(p: &HestonParams, variance: f64) -> Result<f64> {
    if variance < 0.0 {
        return Err(Error::invalid(format!(
            "variance must be >= 0, got {variance}"
        )));
    }
    Ok(p.kappa * (p.theta - variance))
}

/// a(b − r).
pub fn rate_drift(p: &VasicekParams, rate: f64) -> f64 {
    p.a * (p.b - rate)
}

/// Drift of σ itself, κ(θ − σ²)/(2σ), from the variance drift by the chain
/// rule. This is the coefficient the PDE engine puts on ∂V/∂σ.
pub fn volatility_drift(p: &HestonParams, sigma: f64) -> f64 {
    p.kappa * (p.theta - sigma * sigma) / (2.0 * sigma)
}

pub fn euler_step(
    state: &PathState,
    h: &HestonParams,
    v: &VasicekParams,
    dt: f64,
    z: Shocks,
) -> Result<PathState> {
    if !(dt > 0.0) {
        return Err(Error::invalid(format!("dt must be > 0, got {dt}")));
    }
    Ok(step_unchecked(state, h, v, dt, dt.sqrt(), z))
}

#[inline]
fn step_unchecked(
    state: &PathState,
    h: &HestonParams,
    v: &VasicekParams,
    dt: f64,
    sqrt_dt: f64,
    z: Shocks,
) -> PathState {
    let var = state.variance;
    let vol_dt = (var * dt).sqrt();
    let stock = state.stock * ((state.rate - 0.5 * var) * dt + vol_dt * z.stock).exp();
    let variance = (var + h.kappa * (h.theta - var) * dt + h.xi * vol_dt * z.variance).max(0.0);
    let rate = state.rate + v.a * (v.b - state.rate) * dt + v.s * sqrt_dt * z.rate;
    PathState {
        stock,
        variance,
        rate,
    }
}

/// Terminal state of one simulated path plus the left-endpoint integral of
/// the short rate along it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathOutcome {
    pub terminal: PathState,
    pub rate_integral: f64,
}

impl PathOutcome {
    pub fn discount_factor(&self) -> f64 {
        (-self.rate_integral).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationSpec {
    pub horizon: f64,
    pub steps: usize,
    pub n_paths: usize,
    pub seed: u64,
}

/// RNG for path `index` of a run seeded with `seed`.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn simulate_one(
    initial: &PathState,
    h: &HestonParams,
    v: &VasicekParams,
    dt: f64,
    steps: usize,
    rng: &mut ChaCha8Rng,
) -> PathOutcome {
    let sqrt_dt = dt.sqrt();
    let mut state = *initial;
    let mut rate_integral = 0.0;
    for _ in 0..steps {
        rate_integral += state.rate * dt;
        let z = Shocks {
            stock: StandardNormal.sample(rng),
            variance: StandardNormal.sample(rng),
            rate: StandardNormal.sample(rng),
        };
        state = step_unchecked(&state, h, v, dt, sqrt_dt, z);
    }
    PathOutcome {
        terminal: state,
        rate_integral,
    }
}

/// Simulates `n_paths` independent paths of `steps` Euler steps each over
/// `horizon` years. Output order is path-index order.
pub fn simulate_paths(
    initial: &PathState,
    h: &HestonParams,
    v: &VasicekParams,
    spec: SimulationSpec,
) -> Result<Vec<PathOutcome>> {
    initial.validate()?;
    h.validate()?;
    v.validate()?;
    if spec.steps == 0 || spec.n_paths == 0 {
        return Err(Error::invalid(
            "simulation needs at least one step and one path",
        ));
    }
    if !(spec.horizon > 0.0 && spec.horizon.is_finite()) {
        return Err(Error::invalid(format!(
            "horizon must be > 0, got {}",
            spec.horizon
        )));
    }
    let dt = spec.horizon / spec.steps as f64;
    Ok((0..spec.n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(spec.seed, i);
            simulate_one(initial, h, v, dt, spec.steps, &mut rng)
        })
        .collect())
}
