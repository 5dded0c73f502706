//! Choosing the number of hidden states by AIC, decoding hidden paths, and
//! scoring decoded paths against a reference up to relabeling.
//!
//! AIC here is `log p(Y) - D`, to be maximized, with `D` the number of free
//! parameters: `Q^2 + 2` for the switching Hawkes model.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{fit_em_from, fit_homogeneous, init_params_with, EMConfig, FitReport};
use crate::model::DiscreteParams;
use crate::poisson::log_pmf_unchecked;
use crate::series::BinnedSeries;

/// The four nested models. The declaration order is the tie-break order,
/// simplest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    PoissonHomog,
    PoissonHmm,
    HawkesHomog,
    HawkesHmm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::PoissonHomog,
        ModelKind::PoissonHmm,
        ModelKind::HawkesHomog,
        ModelKind::HawkesHmm,
    ];

    /// Number of free parameters with `q` states.
    pub fn n_params(self, q: usize) -> usize {
        match self {
            ModelKind::HawkesHmm => q * q + 2,
            ModelKind::PoissonHmm => q * q,
            ModelKind::HawkesHomog => 3,
            ModelKind::PoissonHomog => 1,
        }
    }

    pub(crate) fn for_fit(q: usize, pinned: bool) -> Self {
        match (q, pinned) {
            (1, true) => ModelKind::PoissonHomog,
            (_, true) => ModelKind::PoissonHmm,
            (1, false) => ModelKind::HawkesHomog,
            (_, false) => ModelKind::HawkesHmm,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::PoissonHomog => "PoissonHomog",
            ModelKind::PoissonHmm => "PoissonHMM",
            ModelKind::HawkesHomog => "HawkesHomog",
            ModelKind::HawkesHmm => "HawkesHMM",
        }
    }
}

/// `log_lik - D` for the given model.
pub fn aic(log_lik: f64, q: usize, kind: ModelKind) -> f64 {
    log_lik - kind.n_params(q) as f64
}

/// Outcome of the fit with `q` states inside [`select_q`].
#[derive(Debug, Clone)]
pub struct QFit {
    pub q: usize,
    pub fit: std::result::Result<FitReport, String>,
}

#[derive(Debug, Clone)]
pub struct SelectionResult {
    pub per_q: Vec<QFit>,
    pub q_hat: usize,
    pub best: FitReport,
}

impl SelectionResult {
    pub fn to_json_value(&self) -> serde_json::Value {
        let per_q: Vec<serde_json::Value> = self
            .per_q
            .iter()
            .map(|f| match &f.fit {
                Ok(r) => serde_json::json!({
                    "Q": f.q,
                    "status": "ok",
                    "log_lik": r.log_lik,
                    "aic": r.aic,
                    "fit": r.to_json_value(),
                }),
                Err(msg) => serde_json::json!({ "Q": f.q, "status": msg }),
            })
            .collect();
        serde_json::json!({
            "q_hat": self.q_hat,
            "per_q": per_q,
            "best": self.best.to_json_value(),
        })
    }

    /// `(Q, log_lik, aic)` for every successful fit.
    pub fn aic_table(&self) -> Vec<(usize, f64, f64)> {
        self.per_q
            .iter()
            .filter_map(|f| f.fit.as_ref().ok().map(|r| (f.q, r.log_lik, r.aic)))
            .collect()
    }
}

/// Fits `Q = 1..=q_max` and keeps the largest AIC, ties to the smaller `Q`.
///
/// The single-state fit that initializes `alpha` and `beta` is shared by all
/// `Q`. A failing `Q` is recorded and skipped.
pub fn select_q(y: &BinnedSeries, q_max: usize, cfg: &EMConfig) -> Result<SelectionResult> {
    if q_max == 0 {
        return Err(Error::InvalidRange("q_max must be >= 1".into()));
    }
    cfg.validate()?;
    let homog = if cfg.pin_alpha_zero {
        None
    } else {
        Some(fit_homogeneous(y, cfg)?)
    };
    let per_q: Vec<QFit> = (1..=q_max)
        .into_par_iter()
        .map(|q| {
            let fit = match (&homog, q) {
                (Some(h), 1) => Ok(h.clone()),
                _ => init_params_with(y, q, cfg, homog.as_ref().map(|h| &h.theta_hat))
                    .and_then(|theta0| fit_em_from(y, &theta0, cfg)),
            };
            QFit {
                q,
                fit: fit.map_err(|e| e.to_string()),
            }
        })
        .collect();
    let mut best: Option<&FitReport> = None;
    for f in &per_q {
        if let Ok(r) = &f.fit {
            if best.is_none_or(|b| r.aic > b.aic) {
                best = Some(r);
            }
        }
    }
    let best = best
        .cloned()
        .ok_or_else(|| Error::InvalidRange("every fit failed".into()))?;
    Ok(SelectionResult {
        q_hat: best.n_states(),
        best,
        per_q,
    })
}

/// Per-bin argmax of the posterior; ties go to the lower state.
pub fn map_decode(tau: &[Vec<f64>]) -> Vec<usize> {
    tau.iter().map(|row| argmax(row)).collect()
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Most probable hidden path in log space, with the same time-varying
/// emissions as the forward pass. Ties go to the lower state.
pub fn viterbi(y: &BinnedSeries, theta: &DiscreteParams) -> Vec<usize> {
    let q = theta.n_states();
    let n = y.len();
    let log_pi: Vec<Vec<f64>> = theta
        .pi
        .iter()
        .map(|r| r.iter().map(|p| p.ln()).collect())
        .collect();
    let mut back = vec![0usize; n * q];
    let mut score: Vec<f64> = Vec::with_capacity(q);
    let mut next = vec![0.0; q];
    let mut u = 0.0;
    for (k, &c) in y.counts().iter().enumerate() {
        if k == 0 {
            score.extend((0..q).map(|l| theta.nu[l].ln() + log_pmf_unchecked(c, theta.mu[l] + u)));
        } else {
            for l in 0..q {
                let mut arg = 0;
                let mut top = score[0] + log_pi[0][l];
                for j in 1..q {
                    let v = score[j] + log_pi[j][l];
                    if v > top {
                        top = v;
                        arg = j;
                    }
                }
                back[k * q + l] = arg;
                next[l] = top + log_pmf_unchecked(c, theta.mu[l] + u);
            }
            score.copy_from_slice(&next);
        }
        u = theta.alpha * c as f64 + theta.beta * u;
    }
    let mut path = vec![0; n];
    path[n - 1] = argmax(&score);
    for k in (1..n).rev() {
        path[k - 1] = back[k * q + path[k]];
    }
    path
}

/// Largest fraction of bins on which `sigma(z_hat) == z_true` over all
/// permutations `sigma` of `0..q`, with the maximizing permutation
/// (`sigma[i]` is the reference label of decoded label `i`). Ties go to the
/// lexicographically smallest permutation.
pub fn aligned_accuracy(z_hat: &[usize], z_true: &[usize], q: usize) -> Result<(f64, Vec<usize>)> {
    if z_hat.len() != z_true.len() {
        return Err(Error::LengthMismatch {
            left: z_hat.len(),
            right: z_true.len(),
        });
    }
    if q == 0 || q > 8 {
        return Err(Error::InvalidRange(format!("label count {q} must be in 1..=8")));
    }
    if let Some(&bad) = z_hat.iter().chain(z_true).find(|&&z| z >= q) {
        return Err(Error::InvalidRange(format!("label {bad} outside 0..{q}")));
    }
    if z_hat.is_empty() {
        return Ok((1.0, (0..q).collect()));
    }
    let mut confusion = vec![vec![0usize; q]; q];
    for (&a, &b) in z_hat.iter().zip(z_true) {
        confusion[a][b] += 1;
    }
    let mut best = (0usize, Vec::new());
    let mut perm = Vec::with_capacity(q);
    let mut used = vec![false; q];
    search(&confusion, &mut perm, &mut used, 0, &mut best);
    Ok((best.0 as f64 / z_hat.len() as f64, best.1))
}

fn search(
    confusion: &[Vec<usize>],
    perm: &mut Vec<usize>,
    used: &mut [bool],
    score: usize,
    best: &mut (usize, Vec<usize>),
) {
    let q = confusion.len();
    if perm.len() == q {
        if best.1.is_empty() || score > best.0 {
            *best = (score, perm.clone());
        }
        return;
    }
    let i = perm.len();
    for j in 0..q {
        if !used[j] {
            used[j] = true;
            perm.push(j);
            search(confusion, perm, used, score + confusion[i][j], best);
            perm.pop();
            used[j] = false;
        }
    }
}

/// Writes `bin,map,viterbi` rows with 1-based bins and states.
pub fn write_decoded_csv<W: Write>(mut w: W, map: &[usize], vit: &[usize]) -> Result<()> {
    if map.len() != vit.len() {
        return Err(Error::LengthMismatch {
            left: map.len(),
            right: vit.len(),
        });
    }
    writeln!(w, "bin,map,viterbi")?;
    for (k, (a, b)) in map.iter().zip(vit).enumerate() {
        writeln!(w, "{},{},{}", k + 1, a + 1, b + 1)?;
    }
    Ok(())
}
