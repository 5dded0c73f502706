//! Parameter sets of the switching Hawkes model and the maps between the
//! continuous-time and discrete-time parameterizations.
//!
//! The discrete model is
//!
//! ```text
//! Z ~ MC(nu, pi)
//! Y_k | Z_k, Y_1..Y_{k-1} ~ Poisson(mu[Z_k] + alpha * sum_{h>=1} beta^(h-1) Y_{k-h})
//! ```
//!
//! and its continuous analogue has intensity
//! `m[Z(t)] + sum_{T_l < t} a exp(-b (t - T_l))` with `Z` a Markov jump
//! process of rate matrix `R`. Binning with width `delta` maps one onto the
//! other through `mu = m delta`, `alpha = (a/b)(1 - exp(-b delta))` and
//! `beta = exp(-b delta)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on probability vectors summing to one.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Full parameter set `(nu, pi, mu, alpha, beta)` of the discrete model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteParams {
    /// Initial state distribution.
    pub nu: Vec<f64>,
    /// Row-stochastic transition matrix.
    pub pi: Vec<Vec<f64>>,
    /// Per-state baseline rate, in events per bin.
    pub mu: Vec<f64>,
    /// Weight of the most recent bin in the excitation.
    pub alpha: f64,
    /// Geometric decay of the excitation.
    pub beta: f64,
}

impl DiscreteParams {
    /// Single-state parameters.
    pub fn homogeneous(mu: f64, alpha: f64, beta: f64) -> Self {
        DiscreteParams {
            nu: vec![1.0],
            pi: vec![vec![1.0]],
            mu: vec![mu],
            alpha,
            beta,
        }
    }

    pub fn n_states(&self) -> usize {
        self.mu.len()
    }

    /// `alpha / (1 - beta)`, the expected number of direct offspring per event.
    pub fn branching_ratio(&self) -> f64 {
        branching_ratio(self.alpha, self.beta)
    }

    /// Checks every invariant of the parameter space.
    pub fn validate(&self) -> Result<()> {
        let q = self.n_states();
        if q == 0 {
            return Err(Error::InvalidRange("at least one state is required".into()));
        }
        check_simplex("nu", &self.nu, q)?;
        if self.pi.len() != q {
            return Err(Error::InvalidSimplex(format!(
                "pi has {} rows, expected {q}",
                self.pi.len()
            )));
        }
        for (i, row) in self.pi.iter().enumerate() {
            check_simplex(&format!("pi row {i}"), row, q)?;
        }
        for (i, &m) in self.mu.iter().enumerate() {
            if !(m >= 0.0) || !m.is_finite() {
                return Err(Error::InvalidRange(format!("mu[{i}] = {m} must be finite and >= 0")));
            }
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidRange(format!("alpha = {} must be >= 0", self.alpha)));
        }
        if !(self.beta >= 0.0 && self.beta < 1.0) {
            return Err(Error::InvalidRange(format!("beta = {} must lie in [0, 1)", self.beta)));
        }
        let ratio = self.branching_ratio();
        if ratio >= 1.0 {
            return Err(Error::Supercritical { ratio });
        }
        Ok(())
    }

    /// Relabels states: new state `i` is old state `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        DiscreteParams {
            nu: perm.iter().map(|&p| self.nu[p]).collect(),
            pi: perm
                .iter()
                .map(|&p| perm.iter().map(|&r| self.pi[p][r]).collect())
                .collect(),
            mu: perm.iter().map(|&p| self.mu[p]).collect(),
            alpha: self.alpha,
            beta: self.beta,
        }
    }
}

pub fn branching_ratio(alpha: f64, beta: f64) -> f64 {
    alpha / (1.0 - beta)
}

fn check_simplex(name: &str, v: &[f64], len: usize) -> Result<()> {
    if v.len() != len {
        return Err(Error::InvalidSimplex(format!(
            "{name} has length {}, expected {len}",
            v.len()
        )));
    }
    if let Some(x) = v.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(Error::InvalidSimplex(format!("{name} has entry {x} outside [0, 1]")));
    }
    let s: f64 = v.iter().sum();
    if (s - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::InvalidSimplex(format!("{name} sums to {s}")));
    }
    Ok(())
}

/// Continuous-time simulation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousParams {
    /// Initial law of the hidden jump process.
    pub p0: Vec<f64>,
    /// Generator of the hidden jump process; rows sum to zero.
    pub rates: Vec<Vec<f64>>,
    /// Per-state baseline intensity, in events per unit time.
    pub m: Vec<f64>,
    /// Jump of the intensity at each event.
    pub a: f64,
    /// Exponential decay rate of the excitation.
    pub b: f64,
}

impl ContinuousParams {
    pub fn n_states(&self) -> usize {
        self.m.len()
    }

    pub fn validate(&self) -> Result<()> {
        let q = self.n_states();
        if q == 0 {
            return Err(Error::InvalidRange("at least one state is required".into()));
        }
        check_simplex("p0", &self.p0, q)?;
        if self.rates.len() != q {
            return Err(Error::InvalidRange(format!(
                "rate matrix has {} rows, expected {q}",
                self.rates.len()
            )));
        }
        for (i, row) in self.rates.iter().enumerate() {
            if row.len() != q {
                return Err(Error::InvalidRange(format!("rate matrix row {i} has wrong length")));
            }
            for (j, &r) in row.iter().enumerate() {
                if !r.is_finite() || (i != j && r < 0.0) {
                    return Err(Error::InvalidRange(format!("rate R[{i}][{j}] = {r}")));
                }
            }
            let s: f64 = row.iter().sum();
            if s.abs() > SIMPLEX_TOL * row.iter().map(|r| r.abs()).sum::<f64>().max(1.0) {
                return Err(Error::InvalidRange(format!("rate matrix row {i} sums to {s}")));
            }
        }
        for (i, &m) in self.m.iter().enumerate() {
            if !(m >= 0.0) || !m.is_finite() {
                return Err(Error::InvalidRange(format!("m[{i}] = {m} must be >= 0")));
            }
        }
        if !(self.a >= 0.0) || !self.a.is_finite() {
            return Err(Error::InvalidRange(format!("a = {} must be >= 0", self.a)));
        }
        if !(self.b > 0.0) || !self.b.is_finite() {
            return Err(Error::InvalidRange(format!("b = {} must be > 0", self.b)));
        }
        let ratio = self.a / self.b;
        if ratio >= 1.0 {
            return Err(Error::Supercritical { ratio });
        }
        Ok(())
    }

    /// Multiplies the baseline rates by the intensity factor `l`; the
    /// excitation kernel is unchanged.
    pub fn scaled(&self, l: f64) -> Self {
        ContinuousParams {
            m: self.m.iter().map(|m| m * l).collect(),
            ..self.clone()
        }
    }
}

/// The `(mu, alpha, beta)` part of a discrete parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteRates {
    pub mu: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
}

/// Continuous `(m, a, b)` recovered from discrete rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousRates {
    pub m: Vec<f64>,
    pub a: f64,
    pub b: f64,
}

/// Discrete rates of the process binned with width `delta`.
pub fn cont_to_disc(c: &ContinuousParams, delta: f64) -> Result<DiscreteRates> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::NonPositiveDelta(delta));
    }
    let beta = (-c.b * delta).exp();
    // 1 - exp(-x) without cancellation for small x.
    let alpha = c.a / c.b * -(-c.b * delta).exp_m1();
    Ok(DiscreteRates {
        mu: c.m.iter().map(|m| m * delta).collect(),
        alpha,
        beta,
    })
}

/// Inverse of [`cont_to_disc`].
pub fn disc_to_cont(mu: &[f64], alpha: f64, beta: f64, delta: f64) -> Result<ContinuousRates> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::NonPositiveDelta(delta));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::BetaOutOfRange(beta));
    }
    let b = -beta.ln() / delta;
    let a = alpha * b / (1.0 - beta);
    Ok(ContinuousRates {
        m: mu.iter().map(|m| m / delta).collect(),
        a,
        b,
    })
}

/// Transition matrix `exp(R delta)` of the hidden jump process observed on a
/// grid of width `delta`.
pub fn transition_matrix(rates: &[Vec<f64>], delta: f64) -> Vec<Vec<f64>> {
    let q = rates.len();
    let norm = rates
        .iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
        * delta;
    // Scaling and squaring with a Taylor series on the reduced matrix.
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as u32 } else { 0 };
    let scale = delta / 2f64.powi(squarings as i32);
    let a: Vec<Vec<f64>> = rates
        .iter()
        .map(|r| r.iter().map(|x| x * scale).collect())
        .collect();
    let mut result = identity(q);
    let mut term = identity(q);
    for k in 1..=20 {
        term = matmul(&term, &a);
        for row in term.iter_mut() {
            for x in row.iter_mut() {
                *x /= k as f64;
            }
        }
        for (r, t) in result.iter_mut().zip(&term) {
            for (x, y) in r.iter_mut().zip(t) {
                *x += y;
            }
        }
    }
    for _ in 0..squarings {
        result = matmul(&result, &result);
    }
    // Rows must be exact probability vectors for validation.
    for row in result.iter_mut() {
        for x in row.iter_mut() {
            *x = x.clamp(0.0, 1.0);
        }
        let s: f64 = row.iter().sum();
        for x in row.iter_mut() {
            *x /= s;
        }
    }
    result
}

/// Full discrete parameter set matching a continuous one at bin width `delta`.
pub fn discretize_params(c: &ContinuousParams, delta: f64) -> Result<DiscreteParams> {
    let rates = cont_to_disc(c, delta)?;
    Ok(DiscreteParams {
        nu: c.p0.clone(),
        pi: transition_matrix(&c.rates, delta),
        mu: rates.mu,
        alpha: rates.alpha,
        beta: rates.beta,
    })
}

fn identity(q: usize) -> Vec<Vec<f64>> {
    (0..q)
        .map(|i| (0..q).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

fn matmul(x: &[Vec<f64>], y: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let q = y.len();
    x.iter()
        .map(|row| {
            (0..y[0].len())
                .map(|j| (0..q).map(|k| row[k] * y[k][j]).sum())
                .collect()
        })
        .collect()
}
