//! Maximum-likelihood inference by EM on the hidden-Markov representation.
//!
//! Once the excitation `U_k = alpha Y_{k-1} + beta U_{k-1}` is fixed, the
//! counts are a hidden Markov model with Poisson emissions of rate
//! `mu[Z_k] + U_k`. The E-step is a forward-backward pass with those
//! time-varying emissions. The M-step updates `nu` and `pi` in closed form
//! and improves `(mu, alpha, beta)` by gradient ascent, recomputing `U` along
//! the way.

mod em;
pub mod exact;
mod forward_backward;
mod init;
mod mstep;
mod objective;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use em::{fit_em, fit_em_from};
pub use exact::{complete_log_lik, exact_log_lik};
pub use forward_backward::{backward_smooth, e_step, forward, log_likelihood, Forward, Posterior};
pub use init::{fit_homogeneous, init_params, init_params_with, poisson_hmm_start};
pub(crate) use init::quantile_sorted;
pub use mstep::{m_step, m_step_detailed, MStepOutcome};
pub use objective::{grad_q, q_function, QGradient};

use crate::error::{Error, Result};
use crate::model::DiscreteParams;
use crate::select::ModelKind;

/// Settings for [`fit_em`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EMConfig {
    pub max_iter: usize,
    /// Stop once `max |tau_new - tau_old|` falls to this value.
    pub tau_tol: f64,
    pub mstep_max_steps: usize,
    pub mstep_grad_tol: f64,
    pub seed: u64,
    /// Fix `alpha = beta = 0`, turning the model into a Poisson HMM.
    pub pin_alpha_zero: bool,
    /// Upper bound on the branching ratio `alpha / (1 - beta)` during the ascent.
    pub branching_cap: f64,
    /// Lower bound on every `mu_q` during the ascent.
    pub mu_floor: f64,
    /// Number of initializations; the best log-likelihood wins.
    pub restarts: usize,
}

impl Default for EMConfig {
    fn default() -> Self {
        EMConfig {
            max_iter: 500,
            tau_tol: 1e-6,
            mstep_max_steps: 50,
            mstep_grad_tol: 1e-8,
            seed: 0,
            pin_alpha_zero: false,
            branching_cap: 0.999,
            mu_floor: 1e-10,
            restarts: 1,
        }
    }
}

impl EMConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 || self.mstep_max_steps == 0 || self.restarts == 0 {
            return Err(Error::InvalidRange(
                "max_iter, mstep_max_steps and restarts must be >= 1".into(),
            ));
        }
        for (name, v) in [
            ("tau_tol", self.tau_tol),
            ("mstep_grad_tol", self.mstep_grad_tol),
            ("mu_floor", self.mu_floor),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidRange(format!("{name} = {v} must be > 0")));
            }
        }
        if !(self.branching_cap > 0.0 && self.branching_cap < 1.0) {
            return Err(Error::InvalidRange(format!(
                "branching_cap = {} must lie in (0, 1)",
                self.branching_cap
            )));
        }
        Ok(())
    }

    /// Same settings with `alpha` pinned to zero.
    pub fn poisson(&self) -> Self {
        EMConfig {
            pin_alpha_zero: true,
            ..self.clone()
        }
    }
}

/// Result of one EM fit.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub kind: ModelKind,
    pub theta_hat: DiscreteParams,
    /// Final marginal log-likelihood.
    pub log_lik: f64,
    pub aic: f64,
    /// Number of M-steps performed.
    pub n_iter: usize,
    pub converged: bool,
    /// Smoothed state probabilities under `theta_hat`, `n x Q`.
    pub tau: Vec<Vec<f64>>,
    pub init_theta: DiscreteParams,
    pub delta: f64,
    /// Log-likelihood at the initial point and after every iteration.
    pub log_lik_trace: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct FitReportJson {
    #[serde(rename = "Q")]
    q: usize,
    nu: Vec<f64>,
    pi: Vec<Vec<f64>>,
    mu: Vec<f64>,
    alpha: f64,
    beta: f64,
    log_lik: f64,
    aic: f64,
    n_iter: usize,
    converged: bool,
    delta: f64,
}

impl FitReport {
    pub fn n_states(&self) -> usize {
        self.theta_hat.n_states()
    }

    /// JSON object with the fitted parameters and fit diagnostics.
    pub fn to_json_value(&self) -> serde_json::Value {
        let t = &self.theta_hat;
        serde_json::to_value(FitReportJson {
            q: t.n_states(),
            nu: t.nu.clone(),
            pi: t.pi.clone(),
            mu: t.mu.clone(),
            alpha: t.alpha,
            beta: t.beta,
            log_lik: self.log_lik,
            aic: self.aic,
            n_iter: self.n_iter,
            converged: self.converged,
            delta: self.delta,
        })
        .expect("plain data serializes")
    }

    /// Writes `tau` as CSV: a `tau_1,...,tau_Q` header then one row per bin.
    pub fn write_tau_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let q = self.n_states();
        let header: Vec<String> = (1..=q).map(|i| format!("tau_{i}")).collect();
        writeln!(w, "{}", header.join(","))?;
        for row in &self.tau {
            let cells: Vec<String> = row.iter().map(|x| format!("{x:?}")).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }
}
