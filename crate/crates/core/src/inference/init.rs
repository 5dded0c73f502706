//! Starting values for EM.
//!
//! `alpha` and `beta` come from a single-state Hawkes fit. `nu`, `pi` and `mu`
//! come from a Poisson HMM fit (`alpha` pinned to zero) started at quantiles
//! of the locally averaged counts; its rates already include the average
//! excitation, so they are shrunk by `1 - alpha / (1 - beta)`.

use rand::Rng as _;

use super::em::fit_em_from;
use super::{log_likelihood, EMConfig, FitReport};
use crate::error::Result;
use crate::model::DiscreteParams;
use crate::rng::rng_from_seed;
use crate::series::BinnedSeries;

/// Relative jitter applied to the initial Poisson HMM rates.
pub const MU_JITTER: f64 = 0.05;

/// Initial parameters for a `q`-state fit with default settings and `seed`.
pub fn init_params(y: &BinnedSeries, q: usize, seed: u64) -> Result<DiscreteParams> {
    let cfg = EMConfig {
        seed,
        ..EMConfig::default()
    };
    init_params_with(y, q, &cfg, None)
}

/// Initial parameters for a `q`-state fit. `homog` is a previously fitted
/// single-state model to reuse; it is fitted here when absent.
pub fn init_params_with(
    y: &BinnedSeries,
    q: usize,
    cfg: &EMConfig,
    homog: Option<&DiscreteParams>,
) -> Result<DiscreteParams> {
    if cfg.pin_alpha_zero {
        return Ok(poisson_hmm_start(y, q, cfg.seed));
    }
    let homog = match homog {
        Some(h) => h.clone(),
        None => fit_homogeneous(y, cfg)?.theta_hat,
    };
    if q == 1 {
        return Ok(homog);
    }
    let poisson = fit_em_from(y, &poisson_hmm_start(y, q, cfg.seed), &cfg.poisson())?.theta_hat;
    let shrink = 1.0 - homog.branching_ratio();
    Ok(DiscreteParams {
        nu: poisson.nu,
        pi: poisson.pi,
        mu: poisson.mu.iter().map(|m| (m * shrink).max(cfg.mu_floor)).collect(),
        alpha: homog.alpha,
        beta: homog.beta,
    })
}

/// Maximum-likelihood single-state Hawkes fit, started from the best point
/// of a coarse grid over branching ratio and decay.
pub fn fit_homogeneous(y: &BinnedSeries, cfg: &EMConfig) -> Result<FitReport> {
    if cfg.pin_alpha_zero {
        return fit_em_from(y, &DiscreteParams::homogeneous(y.mean(), 0.0, 0.0), cfg);
    }
    let mean = y.mean();
    let mut best: Option<(f64, DiscreteParams)> = None;
    for r in [0.05, 0.2, 0.4, 0.6, 0.8] {
        for beta in [0.05, 0.3, 0.6, 0.85, 0.95] {
            let theta = DiscreteParams::homogeneous((mean * (1.0 - r)).max(cfg.mu_floor), r * (1.0 - beta), beta);
            let Ok(ll) = log_likelihood(y, &theta) else { continue };
            if best.as_ref().is_none_or(|(b, _)| ll > *b) {
                best = Some((ll, theta));
            }
        }
    }
    let start = best.map_or_else(|| DiscreteParams::homogeneous(mean.max(cfg.mu_floor), 0.0, 0.0), |(_, t)| t);
    fit_em_from(y, &start, cfg)
}

/// Poisson HMM starting point: rates at the `(2i + 1) / 2q` quantiles of a
/// centred moving average of the counts, with relative jitter of
/// `MU_JITTER`, sorted ascending; uniform `nu` and a sticky `pi`.
///
/// The averaging window spans about two expected events, which keeps the
/// quantiles informative when most bins are empty.
pub fn poisson_hmm_start(y: &BinnedSeries, q: usize, seed: u64) -> DiscreteParams {
    let counts = y.counts();
    let n = counts.len();
    let mean = y.mean();
    let window = if mean > 0.0 { (2.0 / mean).ceil() as usize } else { 1 };
    let window = window.clamp(1, (n / (4 * q)).max(1));
    let smoothed = moving_average(counts, window);
    let mut sorted = smoothed.clone();
    sorted.sort_by(f64::total_cmp);
    let eps = 0.01 * mean + 1e-8;
    let mut rng = rng_from_seed(seed);
    let mut mu: Vec<f64> = (0..q)
        .map(|i| {
            let level = quantile_sorted(&sorted, (2 * i + 1) as f64 / (2 * q) as f64);
            let jitter = MU_JITTER * (2.0 * rng.random::<f64>() - 1.0);
            (level + eps) * (1.0 + jitter)
        })
        .collect();
    mu.sort_by(f64::total_cmp);
    let stay = if q == 1 { 1.0 } else { 0.9 };
    let pi = (0..q)
        .map(|i| {
            (0..q)
                .map(|j| if i == j { stay } else { (1.0 - stay) / (q - 1) as f64 })
                .collect()
        })
        .collect();
    DiscreteParams {
        nu: vec![1.0 / q as f64; q],
        pi,
        mu,
        alpha: 0.0,
        beta: 0.0,
    }
}

fn moving_average(counts: &[u64], window: usize) -> Vec<f64> {
    let n = counts.len();
    let half = window / 2;
    let mut prefix = vec![0u64; n + 1];
    for (i, &c) in counts.iter().enumerate() {
        prefix[i + 1] = prefix[i] + c;
    }
    (0..n)
        .map(|k| {
            let lo = k.saturating_sub(half);
            let hi = (lo + window).min(n);
            let lo = hi.saturating_sub(window);
            (prefix[hi] - prefix[lo]) as f64 / (hi - lo) as f64
        })
        .collect()
}

/// Linear-interpolation quantile of sorted data.
pub(crate) fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}
