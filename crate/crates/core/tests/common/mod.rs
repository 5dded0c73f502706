//! Reference implementations used as test oracles. They are written from the
//! model definition and share no code with the library beyond its types.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use swhawkes::{BinnedSeries, DiscreteParams};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_simplex(rng: &mut ChaCha8Rng, q: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..q).map(|_| 0.05 + rng.random::<f64>()).collect();
    let s: f64 = w.iter().sum();
    let mut v: Vec<f64> = w.iter().map(|x| x / s).collect();
    // Make the sum exact so validation at 1e-12 never trips.
    let head: f64 = v[..q - 1].iter().sum();
    v[q - 1] = 1.0 - head;
    v
}

/// Random valid parameters with `q` states.
pub fn random_params(rng: &mut ChaCha8Rng, q: usize) -> DiscreteParams {
    let beta = 0.05 + 0.9 * rng.random::<f64>();
    let ratio = 0.05 + 0.85 * rng.random::<f64>();
    DiscreteParams {
        nu: random_simplex(rng, q),
        pi: (0..q).map(|_| random_simplex(rng, q)).collect(),
        mu: (0..q).map(|_| 0.05 + 3.0 * rng.random::<f64>()).collect(),
        alpha: ratio * (1.0 - beta),
        beta,
    }
}

/// Random instance with `n <= max_n` bins and `q <= max_q` states.
pub fn random_instance(rng: &mut ChaCha8Rng, max_n: usize, max_q: usize) -> (BinnedSeries, DiscreteParams) {
    let n = rng.random_range(1..=max_n);
    let q = rng.random_range(1..=max_q);
    let counts = (0..n).map(|_| rng.random_range(0..6u64)).collect();
    (
        BinnedSeries::new(counts, 0.1).unwrap(),
        random_params(rng, q),
    )
}

fn ln_fact(y: u64) -> f64 {
    (2..=y).map(|i| (i as f64).ln()).sum()
}

pub fn oracle_log_pmf(y: u64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return if y == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    y as f64 * lambda.ln() - lambda - ln_fact(y)
}

/// Excitation from the closed form `U_k = sum_{j<k} alpha beta^(k-1-j) Y_j`.
pub fn oracle_excitation(y: &[u64], alpha: f64, beta: f64) -> Vec<f64> {
    (0..y.len())
        .map(|k| {
            (0..k)
                .map(|j| alpha * beta.powi((k - 1 - j) as i32) * y[j] as f64)
                .sum()
        })
        .collect()
}

/// `log p(Z = path, Y)`.
pub fn oracle_complete(y: &BinnedSeries, theta: &DiscreteParams, path: &[usize]) -> f64 {
    let u = oracle_excitation(y.counts(), theta.alpha, theta.beta);
    let mut s = theta.nu[path[0]].ln();
    for k in 1..path.len() {
        s += theta.pi[path[k - 1]][path[k]].ln();
    }
    for (k, &c) in y.counts().iter().enumerate() {
        s += oracle_log_pmf(c, theta.mu[path[k]] + u[k]);
    }
    s
}

/// All hidden paths of length `n` over `q` states, lexicographically.
pub fn all_paths(n: usize, q: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..q).map(move |s| {
                    let mut p = p.clone();
                    p.push(s);
                    p
                })
            })
            .collect();
    }
    out
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `log p(Y)` by summing over every hidden path.
pub fn oracle_log_lik(y: &BinnedSeries, theta: &DiscreteParams) -> f64 {
    let scores: Vec<f64> = all_paths(y.len(), theta.n_states())
        .iter()
        .map(|p| oracle_complete(y, theta, p))
        .collect();
    log_sum_exp(&scores)
}

/// Smoothed marginals `P(Z_k = q | Y)` by enumeration.
pub fn oracle_posterior(y: &BinnedSeries, theta: &DiscreteParams) -> Vec<Vec<f64>> {
    let q = theta.n_states();
    let paths = all_paths(y.len(), q);
    let scores: Vec<f64> = paths.iter().map(|p| oracle_complete(y, theta, p)).collect();
    let total = log_sum_exp(&scores);
    let mut tau = vec![vec![0.0; q]; y.len()];
    for (p, s) in paths.iter().zip(&scores) {
        let w = (s - total).exp();
        for (k, &z) in p.iter().enumerate() {
            tau[k][z] += w;
        }
    }
    tau
}

/// Highest-scoring path and its score.
pub fn oracle_best_path(y: &BinnedSeries, theta: &DiscreteParams) -> (Vec<usize>, f64) {
    let mut best = (vec![], f64::NEG_INFINITY);
    for p in all_paths(y.len(), theta.n_states()) {
        let s = oracle_complete(y, theta, &p);
        if s > best.1 {
            best = (p, s);
        }
    }
    best
}

/// Textbook Baum-Welch for a Poisson HMM with per-step normalization.
/// Returns the parameters and log-likelihood after `iters` iterations.
pub fn baum_welch_poisson(
    y: &[u64],
    mut nu: Vec<f64>,
    mut pi: Vec<Vec<f64>>,
    mut mu: Vec<f64>,
    iters: usize,
) -> (Vec<f64>, Vec<Vec<f64>>, Vec<f64>, f64) {
    let n = y.len();
    let q = nu.len();
    let mut ll = 0.0;
    for it in 0..=iters {
        let e: Vec<Vec<f64>> = y
            .iter()
            .map(|&c| mu.iter().map(|&m| oracle_log_pmf(c, m).exp()).collect())
            .collect();
        let mut a = vec![vec![0.0; q]; n];
        let mut scale = vec![0.0; n];
        for k in 0..n {
            for j in 0..q {
                let prior = if k == 0 {
                    nu[j]
                } else {
                    (0..q).map(|i| a[k - 1][i] * pi[i][j]).sum()
                };
                a[k][j] = prior * e[k][j];
            }
            scale[k] = a[k].iter().sum();
            for j in 0..q {
                a[k][j] /= scale[k];
            }
        }
        ll = scale.iter().map(|s| s.ln()).sum();
        if it == iters {
            break;
        }
        let mut b = vec![vec![1.0; q]; n];
        for k in (0..n - 1).rev() {
            for i in 0..q {
                b[k][i] = (0..q).map(|j| pi[i][j] * e[k + 1][j] * b[k + 1][j]).sum::<f64>() / scale[k + 1];
            }
        }
        let gamma: Vec<Vec<f64>> = (0..n)
            .map(|k| (0..q).map(|i| a[k][i] * b[k][i]).collect())
            .collect();
        let mut xi = vec![vec![0.0; q]; q];
        for k in 0..n - 1 {
            for i in 0..q {
                for j in 0..q {
                    xi[i][j] += a[k][i] * pi[i][j] * e[k + 1][j] * b[k + 1][j] / scale[k + 1];
                }
            }
        }
        nu = gamma[0].clone();
        pi = xi
            .iter()
            .map(|row| {
                let s: f64 = row.iter().sum();
                row.iter().map(|x| x / s).collect()
            })
            .collect();
        mu = (0..q)
            .map(|i| {
                let w: f64 = gamma.iter().map(|g| g[i]).sum();
                gamma.iter().zip(y).map(|(g, &c)| g[i] * c as f64).sum::<f64>() / w
            })
            .collect();
    }
    (nu, pi, mu, ll)
}

/// Nelder-Mead minimization of `f` from `x0` with initial step `step`.
pub fn nelder_mead(f: impl Fn(&[f64]) -> f64, x0: &[f64], step: f64, iters: usize) -> (Vec<f64>, f64) {
    let d = x0.len();
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..d {
        let mut x = x0.to_vec();
        x[i] += step;
        simplex.push(x);
    }
    let mut vals: Vec<f64> = simplex.iter().map(|x| f(x)).collect();
    for _ in 0..iters {
        let mut idx: Vec<usize> = (0..=d).collect();
        idx.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        simplex = idx.iter().map(|&i| simplex[i].clone()).collect();
        vals = idx.iter().map(|&i| vals[i]).collect();
        let centroid: Vec<f64> = (0..d)
            .map(|j| simplex[..d].iter().map(|x| x[j]).sum::<f64>() / d as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            (0..d)
                .map(|j| centroid[j] + t * (simplex[d][j] - centroid[j]))
                .collect()
        };
        let xr = along(-1.0);
        let fr = f(&xr);
        if fr < vals[0] {
            let xe = along(-2.0);
            let fe = f(&xe);
            if fe < fr {
                simplex[d] = xe;
                vals[d] = fe;
            } else {
                simplex[d] = xr;
                vals[d] = fr;
            }
        } else if fr < vals[d - 1] {
            simplex[d] = xr;
            vals[d] = fr;
        } else {
            let xc = along(0.5);
            let fc = f(&xc);
            if fc < vals[d] {
                simplex[d] = xc;
                vals[d] = fc;
            } else {
                for i in 1..=d {
                    simplex[i] = (0..d)
                        .map(|j| simplex[0][j] + 0.5 * (simplex[i][j] - simplex[0][j]))
                        .collect();
                    vals[i] = f(&simplex[i]);
                }
            }
        }
    }
    let best = (0..=d).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    (simplex[best].clone(), vals[best])
}
