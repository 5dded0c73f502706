use rand::Rng as _;

use super::init::{fit_homogeneous, init_params_with};
use super::mstep::m_step_detailed;
use super::{e_step, EMConfig, FitReport};
use crate::error::{Error, Result};
use crate::model::DiscreteParams;
use crate::rng::{derive_seed, rng_from_seed};
use crate::select::{aic, ModelKind};
use crate::series::BinnedSeries;

/// Fits the `q`-state model by EM from the default initialization.
///
/// With `cfg.restarts > 1`, further runs start from seeded perturbations of
/// that initialization and the highest final log-likelihood is kept.
pub fn fit_em(y: &BinnedSeries, q: usize, cfg: &EMConfig) -> Result<FitReport> {
    cfg.validate()?;
    if q == 0 {
        return Err(Error::InvalidRange("number of states must be >= 1".into()));
    }
    let homog = if cfg.pin_alpha_zero || q == 1 {
        None
    } else {
        Some(fit_homogeneous(y, cfg)?.theta_hat)
    };
    let theta0 = init_params_with(y, q, cfg, homog.as_ref())?;
    let mut best = fit_em_from(y, &theta0, cfg)?;
    for r in 1..cfg.restarts {
        let start = perturb(&theta0, derive_seed(cfg.seed, &[q as u64, r as u64]), cfg);
        // A failed restart does not invalidate the primary fit.
        if let Ok(fit) = fit_em_from(y, &start, cfg) {
            if fit.log_lik > best.log_lik {
                best = fit;
            }
        }
    }
    Ok(best)
}

/// Runs EM from `theta0` until `max |tau_h - tau_{h-1}| <= cfg.tau_tol` with
/// a converged inner M-step, or until `cfg.max_iter` iterations.
pub fn fit_em_from(y: &BinnedSeries, theta0: &DiscreteParams, cfg: &EMConfig) -> Result<FitReport> {
    cfg.validate()?;
    let mut theta = theta0.clone();
    if cfg.pin_alpha_zero {
        theta.alpha = 0.0;
        theta.beta = 0.0;
    }
    theta.validate()?;
    let q = theta.n_states();
    let mut post = e_step(y, &theta).map_err(|e| context(e, 0))?;
    let mut trace = vec![post.log_lik];
    let mut converged = false;
    let mut n_iter = 0;
    while n_iter < cfg.max_iter {
        n_iter += 1;
        let step = m_step_detailed(&post, y, &theta, cfg);
        let next_post = e_step(y, &step.theta).map_err(|e| context(e, n_iter))?;
        let change = next_post.max_tau_change(&post);
        theta = step.theta;
        post = next_post;
        trace.push(post.log_lik);
        if change <= cfg.tau_tol && step.converged {
            converged = true;
            break;
        }
    }
    let kind = ModelKind::for_fit(q, cfg.pin_alpha_zero);
    Ok(FitReport {
        kind,
        log_lik: post.log_lik,
        aic: aic(post.log_lik, q, kind),
        n_iter,
        converged,
        tau: post.tau_matrix(),
        init_theta: theta0.clone(),
        delta: y.delta(),
        log_lik_trace: trace,
        theta_hat: theta,
    })
}

fn context(e: Error, iter: usize) -> Error {
    match e {
        Error::NumericalUnderflow { bin, context } => Error::NumericalUnderflow {
            bin,
            context: format!("{context} (EM iteration {iter})"),
        },
        other => other,
    }
}

fn perturb(theta: &DiscreteParams, seed: u64, cfg: &EMConfig) -> DiscreteParams {
    let mut rng = rng_from_seed(seed);
    let q = theta.n_states();
    let mu = theta
        .mu
        .iter()
        .map(|m| (m * (rng.random::<f64>() - 0.5).exp()).max(cfg.mu_floor))
        .collect();
    let pi = theta
        .pi
        .iter()
        .map(|row| {
            let noise: Vec<f64> = (0..q).map(|_| rng.random::<f64>()).collect();
            let s: f64 = noise.iter().sum();
            row.iter().zip(&noise).map(|(p, e)| 0.8 * p + 0.2 * e / s).collect()
        })
        .collect();
    let alpha = if cfg.pin_alpha_zero {
        0.0
    } else {
        theta.alpha * (0.5 + 0.5 * rng.random::<f64>())
    };
    DiscreteParams {
        nu: vec![1.0 / q as f64; q],
        pi,
        mu,
        alpha,
        beta: theta.beta,
    }
}
