//! Brute-force quantities obtained by enumerating every hidden path.
//!
//! These serve as reference values for the recursions on small instances and
//! deliberately share no code with them beyond the Poisson mass.

use crate::error::{Error, Result};
use crate::model::DiscreteParams;
use crate::poisson::log_pmf_unchecked;
use crate::series::BinnedSeries;

/// Longest series accepted by the enumerators.
pub const MAX_BINS: usize = 12;
/// Largest number of paths accepted by the enumerators.
pub const MAX_PATHS: usize = 1_000_000;

/// `log p(Z = path, Y)`: the complete log-likelihood of one hidden path.
pub fn complete_log_lik(y: &BinnedSeries, theta: &DiscreteParams, path: &[usize]) -> f64 {
    let mut total = 0.0;
    let mut u = 0.0;
    for (k, (&c, &z)) in y.counts().iter().zip(path).enumerate() {
        total += if k == 0 {
            theta.nu[z].ln()
        } else {
            theta.pi[path[k - 1]][z].ln()
        };
        total += log_pmf_unchecked(c, theta.mu[z] + u);
        u = theta.alpha * c as f64 + theta.beta * u;
    }
    total
}

fn check_size(n: usize, q: usize) -> Result<usize> {
    if n > MAX_BINS {
        return Err(Error::TooLarge(format!("{n} bins exceeds {MAX_BINS}")));
    }
    let paths = (q as f64).powi(n as i32);
    if paths > MAX_PATHS as f64 {
        return Err(Error::TooLarge(format!("{q}^{n} paths exceeds {MAX_PATHS}")));
    }
    Ok(paths as usize)
}

/// Calls `f` on every path in `{0..q}^n`, in lexicographic order.
fn for_each_path(n: usize, q: usize, mut f: impl FnMut(&[usize])) {
    let mut path = vec![0usize; n];
    loop {
        f(&path);
        let mut i = n;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            path[i] += 1;
            if path[i] < q {
                break;
            }
            path[i] = 0;
        }
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let top = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return top;
    }
    top + xs.iter().map(|x| (x - top).exp()).sum::<f64>().ln()
}

/// `log p(Y)` by summing the complete likelihood over all `Q^n` paths.
pub fn exact_log_lik(y: &BinnedSeries, theta: &DiscreteParams) -> Result<f64> {
    let q = theta.n_states();
    let total = check_size(y.len(), q)?;
    let mut terms = Vec::with_capacity(total);
    for_each_path(y.len(), q, |p| terms.push(complete_log_lik(y, theta, p)));
    Ok(log_sum_exp(&terms))
}

/// Posterior marginals by enumeration: `(tau, eta)` with `tau[k][q]` and
/// `eta[k][q][l]` as in [`super::Posterior`].
#[allow(clippy::type_complexity)]
pub fn exact_posterior(
    y: &BinnedSeries,
    theta: &DiscreteParams,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<Vec<f64>>>)> {
    let q = theta.n_states();
    let n = y.len();
    check_size(n, q)?;
    let log_z = exact_log_lik(y, theta)?;
    let mut tau = vec![vec![0.0; q]; n];
    let mut eta = vec![vec![vec![0.0; q]; q]; n.saturating_sub(1)];
    for_each_path(n, q, |p| {
        let w = (complete_log_lik(y, theta, p) - log_z).exp();
        for k in 0..n {
            tau[k][p[k]] += w;
            if k + 1 < n {
                eta[k][p[k]][p[k + 1]] += w;
            }
        }
    });
    Ok((tau, eta))
}

/// The path maximizing the complete log-likelihood; ties go to the
/// lexicographically smallest path.
pub fn exact_best_path(y: &BinnedSeries, theta: &DiscreteParams) -> Result<(Vec<usize>, f64)> {
    let q = theta.n_states();
    check_size(y.len(), q)?;
    let mut best = (vec![0; y.len()], f64::NEG_INFINITY);
    for_each_path(y.len(), q, |p| {
        let s = complete_log_lik(y, theta, p);
        if s > best.1 {
            best = (p.to_vec(), s);
        }
    });
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poisson::log_poisson_pmf;

    #[test]
    fn single_bin_is_a_poisson_mixture() {
        let theta = DiscreteParams {
            nu: vec![0.25, 0.75],
            pi: vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            mu: vec![0.5, 4.0],
            alpha: 0.3,
            beta: 0.2,
        };
        let y = BinnedSeries::new(vec![3], 1.0).unwrap();
        let mix = 0.25 * log_poisson_pmf(3, 0.5).unwrap().exp() + 0.75 * log_poisson_pmf(3, 4.0).unwrap().exp();
        assert!((exact_log_lik(&y, &theta).unwrap() - mix.ln()).abs() < 1e-14);
    }

    #[test]
    fn guard() {
        let theta = DiscreteParams::homogeneous(1.0, 0.0, 0.0);
        let y = BinnedSeries::new(vec![1; 13], 1.0).unwrap();
        assert!(matches!(exact_log_lik(&y, &theta), Err(Error::TooLarge(_))));
        let theta = DiscreteParams {
            nu: vec![0.25; 4],
            pi: vec![vec![0.25; 4]; 4],
            mu: vec![1.0; 4],
            alpha: 0.0,
            beta: 0.0,
        };
        let y = BinnedSeries::new(vec![1; 11], 1.0).unwrap();
        assert!(matches!(exact_log_lik(&y, &theta), Err(Error::TooLarge(_))));
    }

    #[test]
    fn enumerates_all_paths() {
        let mut seen = Vec::new();
        for_each_path(2, 3, |p| seen.push(p.to_vec()));
        assert_eq!(seen.len(), 9);
        assert_eq!(seen[0], vec![0, 0]);
        assert_eq!(seen[8], vec![2, 2]);
    }
}
