//! M-step: closed-form `nu` and `pi`, then a quasi-Newton ascent on the
//! emission part of `Q` over `(mu, alpha, beta)`.
//!
//! The ascent runs in unconstrained coordinates
//!
//! ```text
//! mu_q  = mu_floor + exp(x_q)
//! beta  = sigmoid(x_b)
//! alpha = cap * sigmoid(x_r) * (1 - beta)
//! ```
//!
//! so every iterate satisfies `alpha / (1 - beta) < cap < 1`. Steps come from
//! a BFGS inverse-Hessian estimate with Armijo backtracking by halving. The
//! result never lowers `Q`: if the ascent ends below the starting value the
//! previous `(mu, alpha, beta)` are returned.

use super::objective::{EmissionObjective, QGradient};
use super::{EMConfig, Posterior};
use crate::model::DiscreteParams;
use crate::series::BinnedSeries;

const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;
const MAX_COORD_STEP: f64 = 5.0;

/// Outcome of one M-step.
#[derive(Debug, Clone)]
pub struct MStepOutcome {
    pub theta: DiscreteParams,
    /// The inner ascent met its gradient tolerance or stalled at machine
    /// precision.
    pub converged: bool,
    pub steps: usize,
}

/// Updated parameters; see [`m_step_detailed`].
pub fn m_step(post: &Posterior, y: &BinnedSeries, current: &DiscreteParams, cfg: &EMConfig) -> DiscreteParams {
    m_step_detailed(post, y, current, cfg).theta
}

pub fn m_step_detailed(
    post: &Posterior,
    y: &BinnedSeries,
    current: &DiscreteParams,
    cfg: &EMConfig,
) -> MStepOutcome {
    let q = current.n_states();
    let nu = normalized(post.tau(0)).unwrap_or_else(|| vec![1.0 / q as f64; q]);
    let pi = post
        .transition_counts()
        .iter()
        .map(|row| normalized(row).unwrap_or_else(|| vec![1.0 / q as f64; q]))
        .collect();

    let obj = EmissionObjective::new(post, y);
    let coords = Coords {
        q,
        pinned: cfg.pin_alpha_zero,
        cap: cfg.branching_cap,
        floor: cfg.mu_floor,
    };
    let (alpha0, beta0) = if cfg.pin_alpha_zero {
        (0.0, 0.0)
    } else {
        (current.alpha, current.beta)
    };
    let old_value = obj.value(&current.mu, alpha0, beta0);
    let x0 = coords.to_x(&current.mu, alpha0, beta0);
    let ascent = maximize(&obj, &coords, x0, cfg.mstep_max_steps, cfg.mstep_grad_tol);
    let (mu, alpha, beta) = coords.from_x(&ascent.x);
    let improved = ascent.value.is_finite() && (ascent.value >= old_value || old_value.is_nan());
    let (mu, alpha, beta) = if improved {
        (mu, alpha, beta)
    } else {
        (current.mu.clone(), alpha0, beta0)
    };
    MStepOutcome {
        theta: DiscreteParams {
            nu,
            pi,
            mu,
            alpha,
            beta,
        },
        converged: ascent.converged,
        steps: ascent.steps,
    }
}

fn normalized(v: &[f64]) -> Option<Vec<f64>> {
    let s: f64 = v.iter().sum();
    if s > 0.0 && s.is_finite() {
        Some(v.iter().map(|x| (x / s).clamp(0.0, 1.0)).collect())
    } else {
        None
    }
}

fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Map between unconstrained coordinates and `(mu, alpha, beta)`.
struct Coords {
    q: usize,
    pinned: bool,
    cap: f64,
    floor: f64,
}

impl Coords {
    fn to_x(&self, mu: &[f64], alpha: f64, beta: f64) -> Vec<f64> {
        let mut x: Vec<f64> = mu.iter().map(|&m| (m - self.floor).max(self.floor).ln()).collect();
        if !self.pinned {
            let beta = beta.clamp(1e-6, 1.0 - 1e-9);
            let r = (alpha / (1.0 - beta) / self.cap).clamp(1e-6, 1.0 - 1e-9);
            x.push(logit(r));
            x.push(logit(beta));
        }
        x
    }

    fn from_x(&self, x: &[f64]) -> (Vec<f64>, f64, f64) {
        let mu = x[..self.q].iter().map(|&v| self.floor + v.exp()).collect();
        if self.pinned {
            return (mu, 0.0, 0.0);
        }
        let beta = sigmoid(x[self.q + 1]);
        let alpha = self.cap * sigmoid(x[self.q]) * (1.0 - beta);
        (mu, alpha, beta)
    }

    /// Gradient in `x` from the gradient in `(mu, alpha, beta)`.
    fn chain(&self, x: &[f64], g: &QGradient) -> Vec<f64> {
        let mut out: Vec<f64> = x[..self.q]
            .iter()
            .zip(&g.d_mu)
            .map(|(&v, &d)| d * v.exp())
            .collect();
        if !self.pinned {
            let sr = sigmoid(x[self.q]);
            let beta = sigmoid(x[self.q + 1]);
            let r = self.cap * sr;
            let dbeta_dx = beta * (1.0 - beta);
            out.push(g.d_alpha * r * (1.0 - sr) * (1.0 - beta));
            out.push(g.d_beta * dbeta_dx - g.d_alpha * r * dbeta_dx);
        }
        out
    }
}

struct Ascent {
    x: Vec<f64>,
    value: f64,
    converged: bool,
    steps: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn scaled_identity(d: usize, s: f64) -> Vec<Vec<f64>> {
    (0..d)
        .map(|i| (0..d).map(|j| if i == j { s } else { 0.0 }).collect())
        .collect()
}

fn maximize(obj: &EmissionObjective<'_>, coords: &Coords, x0: Vec<f64>, max_steps: usize, grad_tol: f64) -> Ascent {
    let eval = |x: &[f64]| {
        let (mu, alpha, beta) = coords.from_x(x);
        let (v, g) = obj.value_grad(&mu, alpha, beta);
        (v, coords.chain(x, &g))
    };
    let d = x0.len();
    let mut x = x0;
    let (mut f, mut g) = eval(&x);
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Ascent {
            x,
            value: f,
            converged: false,
            steps: 0,
        };
    }
    let initial_scale = |g: &[f64]| 1.0 / inf_norm(g).max(1.0);
    let mut h = scaled_identity(d, initial_scale(&g));
    let mut fresh = true;
    let mut converged = false;
    let mut steps = 0;
    while steps < max_steps {
        if inf_norm(&g) <= grad_tol {
            converged = true;
            break;
        }
        steps += 1;
        // Ascent direction p = H g.
        let mut p: Vec<f64> = h.iter().map(|row| dot(row, &g)).collect();
        if dot(&p, &g) <= 0.0 {
            h = scaled_identity(d, initial_scale(&g));
            fresh = true;
            p = h.iter().map(|row| dot(row, &g)).collect();
        }
        let pmax = inf_norm(&p);
        if pmax > MAX_COORD_STEP {
            p.iter_mut().for_each(|v| *v *= MAX_COORD_STEP / pmax);
        }
        let slope = dot(&p, &g);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let xn: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a + t * b).collect();
            let (fn_, gn) = eval(&xn);
            if fn_.is_finite() && gn.iter().all(|v| v.is_finite()) && fn_ >= f + ARMIJO * t * slope {
                accepted = Some((xn, fn_, gn));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else {
            if fresh {
                // No ascent along the gradient: stationary to working precision.
                converged = true;
                break;
            }
            h = scaled_identity(d, initial_scale(&g));
            fresh = true;
            continue;
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        // Curvature pair for the minimization of -f.
        let yv: Vec<f64> = g.iter().zip(&gn).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&yv, &yv).sqrt() {
            if fresh {
                h = scaled_identity(d, sy / dot(&yv, &yv));
                fresh = false;
            }
            bfgs_update(&mut h, &s, &yv, sy);
        }
        let gain = fn_ - f;
        x = xn;
        f = fn_;
        g = gn;
        if gain <= 1e-15 * f.abs().max(1.0) {
            converged = true;
            break;
        }
    }
    if !converged && inf_norm(&g) <= grad_tol {
        converged = true;
    }
    Ascent {
        x,
        value: f,
        converged,
        steps,
    }
}

/// `H <- (I - rho s y') H (I - rho y s') + rho s s'` with `rho = 1 / (s'y)`.
fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let d = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = h.iter().map(|row| dot(row, y)).collect();
    let yhy = dot(y, &hy);
    for i in 0..d {
        for j in 0..d {
            h[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::{e_step, q_function};

    fn cfg() -> EMConfig {
        EMConfig::default()
    }

    #[test]
    fn coordinates_round_trip() {
        let c = Coords {
            q: 2,
            pinned: false,
            cap: 0.999,
            floor: 1e-10,
        };
        let x = c.to_x(&[0.3, 2.0], 0.2, 0.5);
        let (mu, a, b) = c.from_x(&x);
        assert!((mu[0] - 0.3).abs() < 1e-12 && (mu[1] - 2.0).abs() < 1e-12);
        assert!((a - 0.2).abs() < 1e-12 && (b - 0.5).abs() < 1e-12);
    }

    #[test]
    fn chain_rule_matches_finite_differences() {
        let y = BinnedSeries::new(vec![0, 2, 1, 0, 5, 3, 0, 1, 1, 0], 0.1).unwrap();
        let theta = DiscreteParams {
            nu: vec![0.4, 0.6],
            pi: vec![vec![0.9, 0.1], vec![0.2, 0.8]],
            mu: vec![0.2, 1.1],
            alpha: 0.3,
            beta: 0.35,
        };
        let post = e_step(&y, &theta).unwrap();
        let obj = EmissionObjective::new(&post, &y);
        let c = Coords {
            q: 2,
            pinned: false,
            cap: 0.999,
            floor: 1e-10,
        };
        let x = c.to_x(&theta.mu, theta.alpha, theta.beta);
        let (mu, a, b) = c.from_x(&x);
        let (_, g) = obj.value_grad(&mu, a, b);
        let gx = c.chain(&x, &g);
        for i in 0..x.len() {
            let h = 1e-6;
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            let (mp, ap, bp) = c.from_x(&xp);
            let (mm, am, bm) = c.from_x(&xm);
            let fd = (obj.value(&mp, ap, bp) - obj.value(&mm, am, bm)) / (2.0 * h);
            assert!((fd - gx[i]).abs() < 1e-6 * fd.abs().max(1.0), "coord {i}: {fd} vs {}", gx[i]);
        }
    }

    #[test]
    fn pure_self_transitions_give_identity() {
        let theta = DiscreteParams {
            nu: vec![0.5, 0.5],
            pi: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            mu: vec![0.1, 5.0],
            alpha: 0.1,
            beta: 0.2,
        };
        let y = BinnedSeries::new(vec![0, 0, 1, 0, 0, 0], 1.0).unwrap();
        let post = e_step(&y, &theta).unwrap();
        let next = m_step(&post, &y, &theta, &cfg());
        assert_eq!(next.pi, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
    }

    #[test]
    fn poisson_mle_recovered_by_ascent() {
        let y = BinnedSeries::new(vec![3, 0, 1, 4, 2, 2, 0, 5, 1], 1.0).unwrap();
        let theta = DiscreteParams::homogeneous(0.5, 0.0, 0.0);
        let cfg = EMConfig {
            pin_alpha_zero: true,
            ..cfg()
        };
        let post = e_step(&y, &theta).unwrap();
        let out = m_step_detailed(&post, &y, &theta, &cfg);
        assert!((out.theta.mu[0] - y.mean()).abs() < 1e-8, "{}", out.theta.mu[0]);
        assert_eq!((out.theta.alpha, out.theta.beta), (0.0, 0.0));
        assert!(out.converged);
    }

    #[test]
    fn never_decreases_q() {
        let y = BinnedSeries::new(vec![0, 2, 1, 0, 5, 3, 0, 1, 1, 0, 0, 7, 2], 0.1).unwrap();
        let theta = DiscreteParams {
            nu: vec![0.4, 0.6],
            pi: vec![vec![0.9, 0.1], vec![0.2, 0.8]],
            mu: vec![0.2, 1.1],
            alpha: 0.3,
            beta: 0.35,
        };
        let post = e_step(&y, &theta).unwrap();
        let next = m_step(&post, &y, &theta, &cfg());
        next.validate().unwrap();
        assert!(q_function(&next, &post, &y) >= q_function(&theta, &post, &y) - 1e-12);
    }
}
