//! The expected complete log-likelihood `Q(theta | theta_h)` and its gradient
//! in `(mu, alpha, beta)`.
//!
//! With `Lambda_kq = mu_q + U_k(alpha, beta)`,
//!
//! ```text
//! dQ/dmu_q  = sum_k tau_kq (Y_k / Lambda_kq - 1)
//! dQ/dalpha = sum_k sum_q tau_kq (Y_k / Lambda_kq - 1) dU_k/dalpha
//! dQ/dbeta  = sum_k sum_q tau_kq (Y_k / Lambda_kq - 1) dU_k/dbeta
//! ```
//!
//! where the sensitivities follow `dU_k/dalpha = Y_{k-1} + beta dU_{k-1}/dalpha`
//! and `dU_k/dbeta = U_{k-1} + beta dU_{k-1}/dbeta`, both zero at `k = 0`.


use super::Posterior;
use crate::model::DiscreteParams;
use crate::poisson::log_pmf_unchecked;
use crate::series::BinnedSeries;

/// Gradient of `Q` with respect to the emission parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct QGradient {
    pub d_alpha: f64,
    pub d_beta: f64,
    pub d_mu: Vec<f64>,
}

fn xlogy(w: f64, p: f64) -> f64 {
    if w == 0.0 {
        0.0
    } else {
        w * p.ln()
    }
}

/// `Q(theta | theta_h)` for the posterior `post` computed under `theta_h`.
///
/// Returns `-inf` when `theta` gives zero probability to something the
/// posterior weights, e.g. `nu_q = 0` with `tau(0)[q] > 0`.
pub fn q_function(theta: &DiscreteParams, post: &Posterior, y: &BinnedSeries) -> f64 {
    let q = theta.n_states();
    let mut total: f64 = (0..q).map(|i| xlogy(post.tau(0)[i], theta.nu[i])).sum();
    let counts = post.transition_counts();
    for i in 0..q {
        for l in 0..q {
            total += xlogy(counts[i][l], theta.pi[i][l]);
        }
    }
    let mut u = 0.0;
    for (k, &c) in y.counts().iter().enumerate() {
        for (i, &w) in post.tau(k).iter().enumerate() {
            if w != 0.0 {
                total += w * log_pmf_unchecked(c, theta.mu[i] + u);
            }
        }
        u = theta.alpha * c as f64 + theta.beta * u;
    }
    total
}

/// Analytic gradient of [`q_function`] in `(alpha, beta, mu)`.
pub fn grad_q(theta: &DiscreteParams, post: &Posterior, y: &BinnedSeries) -> QGradient {
    let obj = EmissionObjective::new(post, y);
    let (_, g) = obj.value_grad(&theta.mu, theta.alpha, theta.beta);
    g
}

/// The emission part of `Q`, up to the constant `-sum_k ln(Y_k!)`, prepared
/// for repeated evaluation during the M-step.
pub(crate) struct EmissionObjective<'a> {
    post: &'a Posterior,
    counts: &'a [u64],
    weights: Vec<f64>,
}

impl<'a> EmissionObjective<'a> {
    pub(crate) fn new(post: &'a Posterior, y: &'a BinnedSeries) -> Self {
        EmissionObjective {
            post,
            counts: y.counts(),
            weights: post.state_weights(),
        }
    }

    pub(crate) fn value(&self, mu: &[f64], alpha: f64, beta: f64) -> f64 {
        let mut val = 0.0;
        let mut u = 0.0;
        let mut sum_u = 0.0;
        for (k, &c) in self.counts.iter().enumerate() {
            if c > 0 {
                let yk = c as f64;
                for (i, &w) in self.post.tau(k).iter().enumerate() {
                    if w != 0.0 {
                        val += w * yk * (mu[i] + u).ln();
                    }
                }
            }
            sum_u += u;
            u = alpha * c as f64 + beta * u;
        }
        val - sum_u - mu.iter().zip(&self.weights).map(|(m, w)| m * w).sum::<f64>()
    }

    pub(crate) fn value_grad(&self, mu: &[f64], alpha: f64, beta: f64) -> (f64, QGradient) {
        let q = mu.len();
        let mut val = 0.0;
        let mut d_mu = vec![0.0; q];
        let (mut d_alpha, mut d_beta) = (0.0, 0.0);
        let (mut u, mut du_a, mut du_b) = (0.0, 0.0, 0.0);
        let (mut sum_u, mut sum_du_a, mut sum_du_b) = (0.0, 0.0, 0.0);
        for (k, &c) in self.counts.iter().enumerate() {
            let yk = c as f64;
            if c > 0 {
                let mut s = 0.0;
                for (i, &w) in self.post.tau(k).iter().enumerate() {
                    if w != 0.0 {
                        let lambda = mu[i] + u;
                        val += w * yk * lambda.ln();
                        let g = w * yk / lambda;
                        d_mu[i] += g;
                        s += g;
                    }
                }
                d_alpha += s * du_a;
                d_beta += s * du_b;
            }
            sum_u += u;
            sum_du_a += du_a;
            sum_du_b += du_b;
            let next_u = alpha * yk + beta * u;
            du_a = yk + beta * du_a;
            du_b = u + beta * du_b;
            u = next_u;
        }
        for (d, w) in d_mu.iter_mut().zip(&self.weights) {
            *d -= w;
        }
        val -= sum_u + mu.iter().zip(&self.weights).map(|(m, w)| m * w).sum::<f64>();
        (
            val,
            QGradient {
                d_alpha: d_alpha - sum_du_a,
                d_beta: d_beta - sum_du_b,
                d_mu,
            },
        )
    }
}
