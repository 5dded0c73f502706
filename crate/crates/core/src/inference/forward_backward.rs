//! Forward filtering and backward smoothing for the hidden chain.
//!
//! Given the excitation path `U`, the emission at bin `k` under state `l` is
//! `Poisson(mu[l] + U[k])`, so the usual scaled recursions apply with
//! time-varying emissions.

use crate::error::{Error, Result};
use crate::model::DiscreteParams;
use crate::poisson::log_pmf_unchecked;
use crate::series::{auxiliary_path, AuxiliaryPath, BinnedSeries};

/// Filtered probabilities `F[k][q] = P(Z_k = q | Y_1..Y_k)`, row-major.
#[derive(Debug, Clone)]
pub struct Forward {
    n_states: usize,
    filtered: Vec<f64>,
    pub log_lik: f64,
}

impl Forward {
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_bins(&self) -> usize {
        self.filtered.len() / self.n_states
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.filtered[k * self.n_states..(k + 1) * self.n_states]
    }
}

/// Smoothed state marginals and pairwise marginals.
///
/// `tau(k)[q] = P(Z_k = q | Y)` and
/// `eta(k)[q * Q + l] = P(Z_k = q, Z_{k+1} = l | Y)` for `k < n - 1`.
#[derive(Debug, Clone)]
pub struct Posterior {
    n_states: usize,
    tau: Vec<f64>,
    eta: Vec<f64>,
    pub log_lik: f64,
}

impl Posterior {
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_bins(&self) -> usize {
        self.tau.len() / self.n_states
    }

    pub fn tau(&self, k: usize) -> &[f64] {
        &self.tau[k * self.n_states..(k + 1) * self.n_states]
    }

    pub fn eta(&self, k: usize) -> &[f64] {
        let qq = self.n_states * self.n_states;
        &self.eta[k * qq..(k + 1) * qq]
    }

    pub fn tau_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.tau.chunks(self.n_states)
    }

    /// `tau` as an `n x Q` matrix.
    pub fn tau_matrix(&self) -> Vec<Vec<f64>> {
        self.tau_rows().map(<[f64]>::to_vec).collect()
    }

    /// Expected transition counts `sum_k eta(k)`, as a `Q x Q` matrix.
    pub fn transition_counts(&self) -> Vec<Vec<f64>> {
        let q = self.n_states;
        let mut out = vec![vec![0.0; q]; q];
        for block in self.eta.chunks(q * q) {
            for (i, row) in out.iter_mut().enumerate() {
                for (j, x) in row.iter_mut().enumerate() {
                    *x += block[i * q + j];
                }
            }
        }
        out
    }

    /// Total posterior weight of each state, `sum_k tau(k)`.
    pub fn state_weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.n_states];
        for row in self.tau_rows() {
            for (a, b) in w.iter_mut().zip(row) {
                *a += b;
            }
        }
        w
    }

    /// Largest absolute difference between the `tau` of two posteriors.
    pub fn max_tau_change(&self, other: &Posterior) -> f64 {
        self.tau
            .iter()
            .zip(&other.tau)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Scaled forward recursion; the log-likelihood is the sum of the log
/// normalizers.
pub fn forward(y: &BinnedSeries, u: &AuxiliaryPath, theta: &DiscreteParams) -> Result<Forward> {
    let q = theta.n_states();
    let counts = y.counts();
    let n = counts.len();
    if u.u.len() != n {
        return Err(Error::LengthMismatch {
            left: u.u.len(),
            right: n,
        });
    }
    let mut filtered = vec![0.0; n * q];
    let mut log_emit = vec![0.0; q];
    let mut log_lik = 0.0;
    for k in 0..n {
        for (l, e) in log_emit.iter_mut().enumerate() {
            *e = log_pmf_unchecked(counts[k], theta.mu[l] + u.u[k]);
        }
        let top = log_emit.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if top == f64::NEG_INFINITY || top.is_nan() {
            return Err(Error::NumericalUnderflow {
                bin: k,
                context: format!("count {} has zero probability under every state", counts[k]),
            });
        }
        let (prev, cur) = filtered.split_at_mut(k * q);
        let cur = &mut cur[..q];
        if k == 0 {
            for l in 0..q {
                cur[l] = theta.nu[l] * (log_emit[l] - top).exp();
            }
        } else {
            let prev = &prev[(k - 1) * q..];
            for l in 0..q {
                let pred: f64 = (0..q).map(|j| prev[j] * theta.pi[j][l]).sum();
                cur[l] = pred * (log_emit[l] - top).exp();
            }
        }
        let c: f64 = cur.iter().sum();
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::NumericalUnderflow {
                bin: k,
                context: "predicted state law is orthogonal to the emissions".into(),
            });
        }
        cur.iter_mut().for_each(|x| *x /= c);
        log_lik += c.ln() + top;
    }
    Ok(Forward {
        n_states: q,
        filtered,
        log_lik,
    })
}

/// Backward smoothing from the filtered probabilities.
pub fn backward_smooth(fwd: &Forward, theta: &DiscreteParams) -> Posterior {
    let q = fwd.n_states();
    let n = fwd.n_bins();
    let mut tau = vec![0.0; n * q];
    let mut eta = vec![0.0; n.saturating_sub(1) * q * q];
    tau[(n - 1) * q..].copy_from_slice(fwd.row(n - 1));
    let mut ratio = vec![0.0; q];
    for k in (0..n - 1).rev() {
        let f = fwd.row(k);
        for l in 0..q {
            let g: f64 = (0..q).map(|j| f[j] * theta.pi[j][l]).sum();
            let next = tau[(k + 1) * q + l];
            ratio[l] = if g > 0.0 { next / g } else { 0.0 };
        }
        let block = &mut eta[k * q * q..(k + 1) * q * q];
        for i in 0..q {
            let mut s = 0.0;
            for l in 0..q {
                let v = f[i] * theta.pi[i][l] * ratio[l];
                block[i * q + l] = v;
                s += v;
            }
            tau[k * q + i] = s;
        }
    }
    Posterior {
        n_states: q,
        tau,
        eta,
        log_lik: fwd.log_lik,
    }
}

/// Recomputes the excitation under `theta` and runs both passes.
pub fn e_step(y: &BinnedSeries, theta: &DiscreteParams) -> Result<Posterior> {
    let u = auxiliary_path(y, theta.alpha, theta.beta);
    let fwd = forward(y, &u, theta)?;
    Ok(backward_smooth(&fwd, theta))
}

/// Marginal log-likelihood `log p(Y)` under `theta`.
pub fn log_likelihood(y: &BinnedSeries, theta: &DiscreteParams) -> Result<f64> {
    let u = auxiliary_path(y, theta.alpha, theta.beta);
    Ok(forward(y, &u, theta)?.log_lik)
}
