//! Option pricing under an extended Black-Scholes model in which the
//! volatility follows a Heston variance process and the short rate follows
//! a Vasicek process.
//!
//! The pricing PDE carries first-order advection terms in σ and r on top of
//! the usual Black-Scholes operator in S. It is solved on a (t, S, σ, r) grid
//! by explicit or implicit finite differences ([`pde`]), cross-checked by the
//! closed-form Black-Scholes price ([`pde::bs_closed_form`]) and by Monte Carlo
//! ([`mc`]). [`market_data`] and [`backtest`] cover the historical evaluation
//! loop.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backtest;
pub mod dynamics;
mod error;
pub mod market_data;
pub mod mc;
pub mod pde;

pub use error::{Error, Result};

pub use backtest::{BacktestReport, MarketQuote};
pub use dynamics::{HestonParams, PathState, VasicekParams};
pub use market_data::{PriceSeries, VolEstimate};
pub use mc::McEstimate;
pub use pde::{Grid4D, OptionContract, OptionKind, PriceSurface, Scheme};
