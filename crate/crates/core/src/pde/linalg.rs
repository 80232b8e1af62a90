//! Tridiagonal systems: Gauss-Seidel / SOR iteration and direct Thomas
//! elimination.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Row `i` reads `lower[i]·x[i−1] + diag[i]·x[i] + upper[i]·x[i+1]`.
/// `lower[0]` and `upper[n−1]` are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn new(lower: Vec<f64>, diag: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != diag.len() || upper.len() != diag.len() {
            return Err(Error::invalid(format!(
                "band lengths differ: {} / {} / {}",
                lower.len(),
                diag.len(),
                upper.len()
            )));
        }
        if diag.is_empty() {
            return Err(Error::invalid("empty tridiagonal system"));
        }
        Ok(Self { lower, diag, upper })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            lower: vec![0.0; n],
            diag: vec![1.0; n],
            upper: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    #[inline]
    fn lo(&self, i: usize) -> f64 {
        if i == 0 {
            0.0
        } else {
            self.lower[i]
        }
    }

    #[inline]
    fn up(&self, i: usize) -> f64 {
        if i + 1 == self.len() {
            0.0
        } else {
            self.upper[i]
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut acc = self.diag[i] * x[i];
                if i > 0 {
                    acc += self.lower[i] * x[i - 1];
                }
                if i + 1 < n {
                    acc += self.upper[i] * x[i + 1];
                }
                acc
            })
            .collect()
    }

    /// max_i |(A x − rhs)_i|
    pub fn residual(&self, x: &[f64], rhs: &[f64]) -> f64 {
        let n = self.len();
        let mut worst = 0.0f64;
        for i in 0..n {
            let mut acc = self.diag[i] * x[i] - rhs[i];
            if i > 0 {
                acc += self.lower[i] * x[i - 1];
            }
            if i + 1 < n {
                acc += self.upper[i] * x[i + 1];
            }
            worst = worst.max(acc.abs());
        }
        worst
    }

    /// Weak row diagonal dominance: |d_i| >= |l_i| + |u_i| for every row.
    pub fn is_diagonally_dominant(&self) -> bool {
        (0..self.len()).all(|i| self.diag[i].abs() >= self.lo(i).abs() + self.up(i).abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IterativeMethod {
    GaussSeidel,
    Sor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub method: IterativeMethod,
    /// Relaxation factor; ignored for Gauss-Seidel.
    pub omega: f64,
    /// Bound on the max-norm residual.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            method: IterativeMethod::Sor,
            omega: 1.2,
            tol: 1e-8,
            max_iters: 10_000,
        }
    }
}

impl SolverSettings {
    pub fn gauss_seidel(tol: f64, max_iters: usize) -> Self {
        Self {
            method: IterativeMethod::GaussSeidel,
            omega: 1.0,
            tol,
            max_iters,
        }
    }

    pub fn sor(omega: f64, tol: f64, max_iters: usize) -> Self {
        Self {
            method: IterativeMethod::Sor,
            omega,
            tol,
            max_iters,
        }
    }

    fn relaxation(&self) -> f64 {
        match self.method {
            IterativeMethod::GaussSeidel => 1.0,
            IterativeMethod::Sor => self.omega,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let omega = self.relaxation();
        if !(omega > 0.0 && omega < 2.0) {
            return Err(Error::invalid(format!(
                "omega must be in (0, 2), got {omega}"
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid(format!("tol must be > 0, got {}", self.tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub x: Vec<f64>,
    /// Number of full sweeps performed.
    pub iterations: usize,
    /// Max-norm residual of the returned `x`.
    pub residual: f64,
}

/// Iterates from a zero initial guess.
pub fn iterative_solve(
    system: &Tridiagonal,
    rhs: &[f64],
    settings: &SolverSettings,
) -> Result<SolveOutcome> {
    iterative_solve_from(system, rhs, vec![0.0; system.len()], settings)
}

/// Gauss-Seidel (ω = 1) or SOR sweeps starting from `x0` until the max-norm
/// residual is at most `tol`.
pub fn iterative_solve_from(
    system: &Tridiagonal,
    rhs: &[f64],
    mut x: Vec<f64>,
    settings: &SolverSettings,
) -> Result<SolveOutcome> {
    settings.validate()?;
    let n = system.len();
    if rhs.len() != n || x.len() != n {
        return Err(Error::invalid(format!(
            "system has {n} rows but rhs has {} and guess has {}",
            rhs.len(),
            x.len()
        )));
    }
    if let Some(i) = system.diag.iter().position(|d| *d == 0.0) {
        return Err(Error::invalid(format!("zero diagonal in row {i}")));
    }
    let omega = settings.relaxation();

    let mut residual = system.residual(&x, rhs);
    let mut iterations = 0;
    while residual > settings.tol {
        if iterations == settings.max_iters {
            return Err(Error::NotConverged {
                iterations,
                residual,
            });
        }
        for i in 0..n {
            let mut sigma = rhs[i];
            if i > 0 {
                sigma -= system.lower[i] * x[i - 1];
            }
            if i + 1 < n {
                sigma -= system.upper[i] * x[i + 1];
            }
            let gs = sigma / system.diag[i];
            x[i] += omega * (gs - x[i]);
        }
        iterations += 1;
        residual = system.residual(&x, rhs);
        if !residual.is_finite() {
            return Err(Error::NotConverged {
                iterations,
                residual,
            });
        }
    }
    Ok(SolveOutcome {
        x,
        iterations,
        residual,
    })
}

/// Direct elimination (Thomas algorithm). No pivoting.
pub fn thomas_solve(system: &Tridiagonal, rhs: &[f64]) -> Result<Vec<f64>> {
    let n = system.len();
    if rhs.len() != n {
        return Err(Error::invalid(format!(
            "system has {n} rows but rhs has {}",
            rhs.len()
        )));
    }
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut denom = system.diag[0];
    if denom == 0.0 {
        return Err(Error::invalid("zero pivot in row 0"));
    }
    c[0] = system.up(0) / denom;
    d[0] = rhs[0] / denom;
    for i in 1..n {
        denom = system.diag[i] - system.lower[i] * c[i - 1];
        if denom == 0.0 {
            return Err(Error::invalid(format!("zero pivot in row {i}")));
        }
        c[i] = system.up(i) / denom;
        d[i] = (rhs[i] - system.lower[i] * d[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Ok(d)
}
