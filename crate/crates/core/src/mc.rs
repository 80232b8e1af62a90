//! Monte Carlo pricing under the Heston/Vasicek dynamics, and the PDE
//! cross-check built on it.
//!
//! Each path is discounted by its own `exp(−∫r dt)`. Payoffs are collected in
//! path order and reduced sequentially with Welford's update, so the estimate
//! is bit-identical regardless of thread scheduling, and a run where every
//! path is identical has a standard error of exactly zero.

use serde::{Deserialize, Serialize};

use crate::dynamics::{simulate_paths, HestonParams, PathState, SimulationSpec, VasicekParams};
use crate::pde::{payoff, Grid4D, OptionContract, PdeSolver, Scheme};
use crate::{Error, Result};

pub const STEPS_PER_YEAR: f64 = 250.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub price: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub seed: u64,
}

/// Roughly daily steps: `ceil(250·T)`.
pub fn default_steps(maturity: f64) -> usize {
    (STEPS_PER_YEAR * maturity).ceil().max(1.0) as usize
}

pub fn mc_price(
    contract: &OptionContract,
    initial: &PathState,
    h: &HestonParams,
    v: &VasicekParams,
    steps: usize,
    n_paths: usize,
    seed: u64,
) -> Result<McEstimate> {
    contract.validate()?;
    if n_paths < 2 {
        return Err(Error::invalid(format!(
            "Monte Carlo needs at least 2 paths, got {n_paths}"
        )));
    }
    let paths = simulate_paths(
        initial,
        h,
        v,
        SimulationSpec {
            horizon: contract.maturity,
            steps,
            n_paths,
            seed,
        },
    )?;

    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (i, p) in paths.iter().enumerate() {
        let x = p.discount_factor() * payoff(contract, p.terminal.stock)?;
        let delta = x - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (x - mean);
    }
    let variance = (m2 / (n_paths - 1) as f64).max(0.0);
    Ok(McEstimate {
        price: mean,
        std_error: (variance / n_paths as f64).sqrt(),
        n_paths,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McSettings {
    /// Time steps per path; `None` means [`default_steps`].
    pub steps: Option<usize>,
    pub n_paths: usize,
    pub seed: u64,
}

impl McSettings {
    pub fn steps_for(&self, contract: &OptionContract) -> usize {
        self.steps
            .unwrap_or_else(|| default_steps(contract.maturity))
    }
}

/// Everything one engine needs to price a contract.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineInputs {
    pub contract: OptionContract,
    pub initial: PathState,
    pub heston: HestonParams,
    pub vasicek: VasicekParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparisonMode {
    /// `z = (pde − mc)/std_error`.
    ZScore,
    /// The MC run was deterministic (zero standard error); compare by
    /// absolute and relative difference instead.
    ExactDifference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRecord {
    pub pde: f64,
    pub mc: f64,
    pub std_error: f64,
    /// `None` in [`ComparisonMode::ExactDifference`].
    pub z: Option<f64>,
    pub n_paths: usize,
    pub seed: u64,
    pub mode: ComparisonMode,
    pub abs_diff: f64,
    pub rel_diff: f64,
    pub mismatched_inputs: bool,
}

impl ComparisonRecord {
    pub fn new(pde: f64, mc: &McEstimate, mismatched_inputs: bool) -> Self {
        let abs_diff = (pde - mc.price).abs();
        let rel_diff = if mc.price != 0.0 {
            abs_diff / mc.price.abs()
        } else {
            abs_diff
        };
        let (mode, z) = if mc.std_error > 0.0 {
            (
                ComparisonMode::ZScore,
                Some((pde - mc.price) / mc.std_error),
            )
        } else {
            (ComparisonMode::ExactDifference, None)
        };
        Self {
            pde,
            mc: mc.price,
            std_error: mc.std_error,
            z,
            n_paths: mc.n_paths,
            seed: mc.seed,
            mode,
            abs_diff,
            rel_diff,
            mismatched_inputs,
        }
    }

    /// Agreement within `max(z_bound` standard errors, `rel_tol` relative`)`.
    pub fn agrees(&self, z_bound: f64, rel_tol: f64) -> bool {
        let within_rel = self.rel_diff <= rel_tol;
        match self.z {
            Some(z) => z.abs() <= z_bound || within_rel,
            None => within_rel,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Prices `pde_side` on `grid` and `mc_side` by simulation, then compares at
/// the PDE lookup point (S₀, √σ²₀, r₀). Differing inputs are allowed and
/// flagged in the record.
pub fn mc_vs_pde_report(
    pde_side: &EngineInputs,
    mc_side: &EngineInputs,
    grid: &Grid4D,
    scheme: Scheme,
    settings: &McSettings,
) -> Result<ComparisonRecord> {
    let surface = PdeSolver::new(scheme).solve(
        &pde_side.contract,
        grid,
        &pde_side.heston,
        &pde_side.vasicek,
    )?;
    let init = &pde_side.initial;
    let pde = surface.lookup(init.stock, init.volatility(), init.rate)?;
    let mc = mc_price(
        &mc_side.contract,
        &mc_side.initial,
        &mc_side.heston,
        &mc_side.vasicek,
        settings.steps_for(&mc_side.contract),
        settings.n_paths,
        settings.seed,
    )?;
    Ok(ComparisonRecord::new(pde, &mc, pde_side != mc_side))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::{bs_closed_form, degenerate_params};
    use approx::assert_relative_eq;

    #[test]
    fn zero_volatility_is_deterministic() {
        let c = OptionContract::call(100.0, 1.0).unwrap();
        let h = HestonParams::new(2.0, 0.0, 0.0).unwrap();
        let v = VasicekParams::new(0.5, 0.05, 0.0).unwrap();
        let init = PathState::new(100.0, 0.0, 0.05).unwrap();
        let est = mc_price(&c, &init, &h, &v, 250, 1000, 7).unwrap();
        assert_eq!(est.std_error, 0.0);
        assert_relative_eq!(
            est.price,
            100.0 - 100.0 * (-0.05f64).exp(),
            max_relative = 1e-10
        );
    }

    #[test]
    fn needs_two_paths() {
        let c = OptionContract::call(100.0, 1.0).unwrap();
        let (h, v) = degenerate_params(0.2, 0.05);
        let init = PathState::new(100.0, 0.04, 0.05).unwrap();
        assert!(mc_price(&c, &init, &h, &v, 10, 1, 0).is_err());
    }

    #[test]
    fn same_seed_same_estimate() {
        let c = OptionContract::put(95.0, 0.5).unwrap();
        let h = HestonParams::new(1.5, 0.05, 0.3).unwrap();
        let v = VasicekParams::new(0.4, 0.03, 0.01).unwrap();
        let init = PathState::new(100.0, 0.04, 0.02).unwrap();
        let a = mc_price(&c, &init, &h, &v, 50, 5000, 99).unwrap();
        let b = mc_price(&c, &init, &h, &v, 50, 5000, 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn constant_parameters_match_closed_form() {
        let c = OptionContract::call(100.0, 1.0).unwrap();
        let (h, v) = degenerate_params(0.2, 0.05);
        let init = PathState::new(100.0, 0.04, 0.05).unwrap();
        let est = mc_price(&c, &init, &h, &v, 50, 50_000, 1).unwrap();
        let bs = bs_closed_form(&c, 100.0, 0.2, 0.05).unwrap();
        assert!(
            (est.price - bs).abs() < 3.0 * est.std_error,
            "{est:?} vs {bs}"
        );
    }

    #[test]
    fn zero_strike_call_is_discounted_stock() {
        // K → 0: payoff is S_T, and e^{−rT}S_T is a martingale. Strike must be
        // positive, so use a tiny one.
        let c = OptionContract::call(1e-12, 1.0).unwrap();
        let (h, v) = degenerate_params(0.3, 0.04);
        let init = PathState::new(100.0, 0.09, 0.04).unwrap();
        let est = mc_price(&c, &init, &h, &v, 100, 40_000, 5).unwrap();
        assert!((est.price - 100.0).abs() < 3.0 * est.std_error, "{est:?}");
    }

    #[test]
    fn std_error_shrinks_like_root_n() {
        let c = OptionContract::call(100.0, 1.0).unwrap();
        let h = HestonParams::new(2.0, 0.04, 0.3).unwrap();
        let v = VasicekParams::new(0.5, 0.05, 0.01).unwrap();
        let init = PathState::new(100.0, 0.04, 0.05).unwrap();
        for seed in 0..4 {
            let a = mc_price(&c, &init, &h, &v, 50, 20_000, seed).unwrap();
            let b = mc_price(&c, &init, &h, &v, 50, 40_000, seed + 100).unwrap();
            let ratio = a.std_error / b.std_error;
            assert!(
                (ratio / 2f64.sqrt() - 1.0).abs() < 0.10,
                "seed {seed}: ratio {ratio}"
            );
        }
    }

    #[test]
    fn record_modes() {
        let est = McEstimate {
            price: 10.0,
            std_error: 0.1,
            n_paths: 100,
            seed: 1,
        };
        let rec = ComparisonRecord::new(10.2, &est, false);
        assert_eq!(rec.mode, ComparisonMode::ZScore);
        assert_relative_eq!(rec.z.unwrap(), 2.0, max_relative = 1e-12);
        assert!(rec.agrees(3.0, 0.0));

        let det = McEstimate {
            std_error: 0.0,
            ..est
        };
        let rec = ComparisonRecord::new(10.04, &det, false);
        assert_eq!(rec.mode, ComparisonMode::ExactDifference);
        assert!(rec.z.is_none());
        assert!(rec.agrees(3.0, 0.005));
        assert!(!rec.agrees(3.0, 0.001));

        let json: serde_json::Value = serde_json::from_str(&rec.to_json().unwrap()).unwrap();
        for key in ["pde", "mc", "std_error", "z", "n_paths", "seed"] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
    }

    #[test]
    fn mismatched_strike_flagged() {
        let (h, v) = degenerate_params(0.2, 0.05);
        let init = PathState::new(100.0, 0.04, 0.05).unwrap();
        let pde_side = EngineInputs {
            contract: OptionContract::call(100.0, 1.0).unwrap(),
            initial: init,
            heston: h,
            vasicek: v,
        };
        let mc_side = EngineInputs {
            contract: OptionContract::call(110.0, 1.0).unwrap(),
            ..pde_side
        };
        let grid = Grid4D::degenerate(300.0, 100, 1000, 0.2, 0.05).unwrap();
        let settings = McSettings {
            steps: Some(20),
            n_paths: 20_000,
            seed: 3,
        };
        let rec =
            mc_vs_pde_report(&pde_side, &mc_side, &grid, Scheme::Explicit, &settings).unwrap();
        assert!(rec.mismatched_inputs);
        let z = rec.z.unwrap();
        assert_relative_eq!(z, (rec.pde - rec.mc) / rec.std_error, max_relative = 1e-12);
        assert!(z > 3.0, "strike gap should show up: z = {z}");
    }
}
