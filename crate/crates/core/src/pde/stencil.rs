//! Per-node stencils, time steps and the explicit stability bound.
//!
//! With S_j = jΔS the Black-Scholes operator at node j is
//! `a_j V_{j−1} + b_j V_j + c_j V_{j+1}` where
//!
//! ```text
//! a_j = ½(σ²j² − r j)    b_j = −(σ²j² + r)    c_j = ½(σ²j² + r j)
//! ```
//!
//! (central first difference, three-point second difference).

use rayon::prelude::*;

use super::linalg::{iterative_solve_from, SolverSettings, Tridiagonal};
use super::{boundary_unchecked, Grid4D, OptionContract};
use crate::dynamics::{rate_drift, volatility_drift, HestonParams, VasicekParams};
use crate::{Error, Result};

#[inline]
fn coefficients(sigma: f64, r: f64, j: usize) -> (f64, f64, f64) {
    let j = j as f64;
    let diff = sigma * sigma * j * j;
    let conv = r * j;
    (0.5 * (diff - conv), -(diff + r), 0.5 * (diff + conv))
}

/// First-order upwind difference along an axis with node coordinates
/// `nodes`, at index `i`, for advection speed `speed` in the backward-time
/// equation. Positive speed reads the node above; negative reads the node
/// below. At an edge where the upwind neighbour is missing the one-sided
/// difference to the nearest interior node is used.
#[inline]
fn upwind(nodes: &[f64], i: usize, speed: f64, value_at: impl Fn(usize) -> f64) -> f64 {
    let n = nodes.len();
    if n == 1 || speed == 0.0 {
        return 0.0;
    }
    let forward = |i: usize| (value_at(i + 1) - value_at(i)) / (nodes[i + 1] - nodes[i]);
    if speed > 0.0 {
        if i + 1 < n {
            forward(i)
        } else {
            forward(i - 1)
        }
    } else if i > 0 {
        forward(i - 1)
    } else {
        forward(0)
    }
}

/// μ_σ ∂V/∂σ + μ_r ∂V/∂r at node (j, k, l) of `values`.
#[inline]
fn advection(
    values: &[f64],
    grid: &Grid4D,
    mu_sigma: f64,
    mu_r: f64,
    j: usize,
    k: usize,
    l: usize,
) -> f64 {
    let d_sigma = upwind(&grid.sigma_nodes, k, mu_sigma, |kk| {
        values[grid.index(j, kk, l)]
    });
    let d_r = upwind(&grid.r_nodes, l, mu_r, |ll| values[grid.index(j, k, ll)]);
    mu_sigma * d_sigma + mu_r * d_r
}

fn min_spacing(nodes: &[f64], i: usize) -> Option<f64> {
    let below = (i > 0).then(|| nodes[i] - nodes[i - 1]);
    let above = (i + 1 < nodes.len()).then(|| nodes[i + 1] - nodes[i]);
    match (below, above) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    }
}

/// Largest stable Δt for slice (k, l): the reciprocal of
/// `σ²J² + |r|J + |r|` (J = n_s − 1, i.e. ΔS²/(σ²s_max² + |r|s_max ΔS + |r|ΔS²))
/// plus the advection CFL rates |μ_σ|/Δσ and |μ_r|/Δr.
fn slice_max_dt(grid: &Grid4D, h: &HestonParams, v: &VasicekParams, k: usize, l: usize) -> f64 {
    let sigma = grid.sigma_nodes[k];
    let r = grid.r_nodes[l];
    let big_j = (grid.n_s - 1) as f64;
    let mut rate = sigma * sigma * big_j * big_j + r.abs() * big_j + r.abs();
    if let Some(hs) = min_spacing(&grid.sigma_nodes, k) {
        rate += volatility_drift(h, sigma).abs() / hs;
    }
    if let Some(hr) = min_spacing(&grid.r_nodes, l) {
        rate += rate_drift(v, r).abs() / hr;
    }
    if rate == 0.0 {
        f64::INFINITY
    } else {
        1.0 / rate
    }
}

fn slices(grid: &Grid4D) -> impl Iterator<Item = (usize, usize)> + '_ {
    (0..grid.n_sigma()).flat_map(move |k| (0..grid.n_r()).map(move |l| (k, l)))
}

/// Largest Δt the explicit scheme accepts on this grid.
pub fn max_stable_dt(grid: &Grid4D, h: &HestonParams, v: &VasicekParams) -> f64 {
    slices(grid)
        .map(|(k, l)| slice_max_dt(grid, h, v, k, l))
        .fold(f64::INFINITY, f64::min)
}

/// Smallest `n_t` for which the explicit scheme is stable.
pub fn required_time_steps(
    grid: &Grid4D,
    contract: &OptionContract,
    h: &HestonParams,
    v: &VasicekParams,
) -> usize {
    let max_dt = max_stable_dt(grid, h, v);
    if max_dt.is_infinite() {
        1
    } else {
        ((contract.maturity / max_dt) * (1.0 + 1e-12))
            .ceil()
            .max(1.0) as usize
    }
}

pub(super) fn check_stability(
    grid: &Grid4D,
    contract: &OptionContract,
    h: &HestonParams,
    v: &VasicekParams,
) -> Result<()> {
    let dt = grid.dt(contract);
    let worst = slices(grid)
        .map(|(k, l)| (k, l, slice_max_dt(grid, h, v, k, l)))
        .min_by(|a, b| a.2.total_cmp(&b.2));
    match worst {
        Some((k, l, max_dt)) if dt > max_dt => Err(Error::Unstable {
            dt,
            max_dt,
            sigma: grid.sigma_nodes[k],
            rate: grid.r_nodes[l],
            required_steps: required_time_steps(grid, contract, h, v),
        }),
        _ => Ok(()),
    }
}

/// One explicit backward step: from the values at `t + Δt` (`next_level`)
/// to the values at `t`. Boundary nodes in S are set from
/// [`super::boundary_values`].
pub fn explicit_step(
    next_level: &[f64],
    grid: &Grid4D,
    contract: &OptionContract,
    h: &HestonParams,
    v: &VasicekParams,
    t: f64,
) -> Result<Vec<f64>> {
    grid.validate()?;
    contract.validate()?;
    if next_level.len() != grid.len() {
        return Err(Error::invalid(format!(
            "level has {} values, grid has {} nodes",
            next_level.len(),
            grid.len()
        )));
    }
    if let Some(i) = next_level.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("input value at flat index {i}")));
    }
    super::boundary_values(contract, grid, t, grid.r_nodes[0])?;
    check_stability(grid, contract, h, v)?;
    let mut out = vec![0.0; grid.len()];
    explicit_step_into(next_level, &mut out, grid, contract, h, v, t)?;
    Ok(out)
}

pub(super) fn explicit_step_into(
    prev: &[f64],
    out: &mut [f64],
    grid: &Grid4D,
    contract: &OptionContract,
    h: &HestonParams,
    v: &VasicekParams,
    t: f64,
) -> Result<()> {
    let dt = grid.dt(contract);
    let tau = (contract.maturity - t).max(0.0);
    let n_s = grid.n_s;
    let n_r = grid.n_r();
    out.par_chunks_mut(n_s)
        .enumerate()
        .for_each(|(slice, row)| {
            let (k, l) = (slice / n_r, slice % n_r);
            let sigma = grid.sigma_nodes[k];
            let r = grid.r_nodes[l];
            let mu_sigma = volatility_drift(h, sigma);
            let mu_r = rate_drift(v, r);
            let base = grid.index(0, k, l);
            let p = &prev[base..base + n_s];
            for j in 1..n_s - 1 {
                let (a, b, c) = coefficients(sigma, r, j);
                let bs = a * p[j - 1] + b * p[j] + c * p[j + 1];
                let adv = advection(prev, grid, mu_sigma, mu_r, j, k, l);
                row[j] = p[j] + dt * (bs + adv);
            }
            let (lo, hi) = boundary_unchecked(contract, grid.s_max, tau, r);
            row[0] = lo;
            row[n_s - 1] = hi;
        });
    Ok(())
}

/// Implicit-in-S system for one (σ, r) slice over the interior nodes
/// `j = 1..n_s−1`: row j is `−Δt a_j, 1 − Δt b_j, −Δt c_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceSystem {
    pub matrix: Tridiagonal,
    /// Δt·a_1, multiplies the S = 0 boundary value.
    pub lower_coupling: f64,
    /// Δt·c_{n_s−2}, multiplies the S = s_max boundary value.
    pub upper_coupling: f64,
}

impl SliceSystem {
    /// Right-hand side for the interior nodes: `explicit_part` (previous
    /// level plus any explicit terms) with the boundary values folded into the
    /// first and last equations.
    pub fn rhs(&self, explicit_part: &[f64], boundary: (f64, f64)) -> Vec<f64> {
        let mut rhs = explicit_part.to_vec();
        let last = rhs.len() - 1;
        rhs[0] += self.lower_coupling * boundary.0;
        rhs[last] += self.upper_coupling * boundary.1;
        rhs
    }
}

pub fn assemble_tridiagonal(grid: &Grid4D, sigma: f64, r: f64, dt: f64) -> Result<SliceSystem> {
    grid.validate()?;
    if !(dt > 0.0) {
        return Err(Error::invalid(format!("dt must be > 0, got {dt}")));
    }
    let m = grid.n_s - 2;
    let mut lower = vec![0.0; m];
    let mut diag = vec![0.0; m];
    let mut upper = vec![0.0; m];
    for i in 0..m {
        let (a, b, c) = coefficients(sigma, r, i + 1);
        lower[i] = if i == 0 { 0.0 } else { -dt * a };
        diag[i] = 1.0 - dt * b;
        upper[i] = if i + 1 == m { 0.0 } else { -dt * c };
    }
    let (a1, _, _) = coefficients(sigma, r, 1);
    let (_, _, c_last) = coefficients(sigma, r, grid.n_s - 2);
    Ok(SliceSystem {
        matrix: Tridiagonal { lower, diag, upper },
        lower_coupling: dt * a1,
        upper_coupling: dt * c_last,
    })
}

pub(super) fn slice_systems(grid: &Grid4D, dt: f64) -> Vec<SliceSystem> {
    slices(grid)
        .map(|(k, l)| {
            assemble_tridiagonal(grid, grid.sigma_nodes[k], grid.r_nodes[l], dt)
                .expect("grid validated by caller")
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
pub(super) fn implicit_step_into(
    prev: &[f64],
    out: &mut [f64],
    grid: &Grid4D,
    contract: &OptionContract,
    h: &HestonParams,
    v: &VasicekParams,
    t: f64,
    systems: &[SliceSystem],
    settings: &SolverSettings,
) -> Result<()> {
    let dt = grid.dt(contract);
    let tau = (contract.maturity - t).max(0.0);
    let n_s = grid.n_s;
    let n_r = grid.n_r();
    out.par_chunks_mut(n_s)
        .enumerate()
        .try_for_each(|(slice, row)| -> Result<()> {
            let (k, l) = (slice / n_r, slice % n_r);
            let sigma = grid.sigma_nodes[k];
            let r = grid.r_nodes[l];
            let mu_sigma = volatility_drift(h, sigma);
            let mu_r = rate_drift(v, r);
            let base = grid.index(0, k, l);
            let p = &prev[base..base + n_s];

            let explicit_part: Vec<f64> = (1..n_s - 1)
                .map(|j| p[j] + dt * advection(prev, grid, mu_sigma, mu_r, j, k, l))
                .collect();
            let boundary = boundary_unchecked(contract, grid.s_max, tau, r);
            let system = &systems[slice];
            let rhs = system.rhs(&explicit_part, boundary);
            let solved =
                iterative_solve_from(&system.matrix, &rhs, p[1..n_s - 1].to_vec(), settings)?;

            row[0] = boundary.0;
            row[1..n_s - 1].copy_from_slice(&solved.x);
            row[n_s - 1] = boundary.1;
            Ok(())
        })
}
