use statrs::distribution::{ContinuousCDF, Normal};

use super::{OptionContract, OptionKind};
use crate::{Error, Result};

/// Closed-form Black-Scholes value with constant volatility and rate.
///
/// `sigma = 0` returns the deterministic limit, e.g. `max(S₀ − K e^{−rT}, 0)`
/// for a call.
pub fn bs_closed_form(contract: &OptionContract, s0: f64, sigma: f64, r: f64) -> Result<f64> {
    contract.validate()?;
    if !(s0 > 0.0 && s0.is_finite()) {
        return Err(Error::invalid(format!("spot must be > 0, got {s0}")));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("sigma must be >= 0, got {sigma}")));
    }
    let k = contract.strike;
    let t = contract.maturity;
    let df = (-r * t).exp();

    let vol_t = sigma * t.sqrt();
    if vol_t == 0.0 {
        return Ok(match contract.kind {
            OptionKind::Call => (s0 - k * df).max(0.0),
            OptionKind::Put => (k * df - s0).max(0.0),
        });
    }

    let n = Normal::standard();
    let d1 = ((s0 / k).ln() + (r + 0.5 * sigma * sigma) * t) / vol_t;
    let d2 = d1 - vol_t;
    Ok(match contract.kind {
        OptionKind::Call => s0 * n.cdf(d1) - k * df * n.cdf(d2),
        OptionKind::Put => k * df * n.cdf(-d2) - s0 * n.cdf(-d1),
    })
}
