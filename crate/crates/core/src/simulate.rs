//! Samplers for the continuous-time switching Hawkes process and for the
//! discrete model, plus the binning that turns event times into counts.

use rand::Rng as _;
use rand_distr::{Distribution, Exp1, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ContinuousParams, DiscreteParams};
use crate::rng::{rng_from_seed, Rng};
use crate::series::{BinnedSeries, EventSequence};

/// Default cap on simulated events.
pub const DEFAULT_MAX_EVENTS: usize = 10_000_000;

/// Piecewise-constant path of the hidden jump process on `[0, horizon]`.
///
/// States are 0-based indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatePath {
    pub jump_times: Vec<f64>,
    pub states: Vec<usize>,
    pub horizon: f64,
}

impl StatePath {
    /// Number of state changes.
    pub fn n_jumps(&self) -> usize {
        self.states.len() - 1
    }

    /// End of segment `i`.
    pub fn segment_end(&self, i: usize) -> f64 {
        self.jump_times.get(i + 1).copied().unwrap_or(self.horizon)
    }

    pub fn state_at(&self, t: f64) -> usize {
        let i = self.jump_times.partition_point(|&s| s <= t).saturating_sub(1);
        self.states[i]
    }
}

/// Simulated events together with the hidden path that drove them.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub events: EventSequence,
    pub z_path: StatePath,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct SimOutputJson {
    times: Vec<f64>,
    horizon: f64,
    z_jump_times: Vec<f64>,
    z_states: Vec<usize>,
    seed: u64,
}

impl SimOutput {
    /// JSON export; hidden states are written 1-based.
    pub fn to_json(&self) -> Result<String> {
        let j = SimOutputJson {
            times: self.events.times().to_vec(),
            horizon: self.events.horizon(),
            z_jump_times: self.z_path.jump_times.clone(),
            z_states: self.z_path.states.iter().map(|s| s + 1).collect(),
            seed: self.seed,
        };
        Ok(serde_json::to_string_pretty(&j)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let j: SimOutputJson = serde_json::from_str(s)?;
        if j.z_states.iter().any(|&s| s == 0) {
            return Err(Error::InvalidRange("hidden states are 1-based".into()));
        }
        Ok(SimOutput {
            events: EventSequence::new(j.times, j.horizon)?,
            z_path: StatePath {
                jump_times: j.z_jump_times,
                states: j.z_states.into_iter().map(|s| s - 1).collect(),
                horizon: j.horizon,
            },
            seed: j.seed,
        })
    }
}

fn categorical(rng: &mut Rng, weights: impl Iterator<Item = f64> + Clone) -> usize {
    let total: f64 = weights.clone().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        if w > 0.0 {
            acc += w;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

fn exponential(rng: &mut Rng, rate: f64) -> f64 {
    let e: f64 = Exp1.sample(rng);
    e / rate
}

/// Samples the hidden Markov jump process up to `horizon`.
pub fn sample_ctmc(p0: &[f64], rates: &[Vec<f64>], horizon: f64, seed: u64) -> Result<StatePath> {
    check_ctmc(p0, rates, horizon)?;
    Ok(ctmc_with(&mut rng_from_seed(seed), p0, rates, horizon))
}

fn check_ctmc(p0: &[f64], rates: &[Vec<f64>], horizon: f64) -> Result<()> {
    let c = ContinuousParams {
        p0: p0.to_vec(),
        rates: rates.to_vec(),
        m: vec![0.0; p0.len()],
        a: 0.0,
        b: 1.0,
    };
    c.validate()?;
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidRange(format!("horizon {horizon} must be > 0")));
    }
    Ok(())
}

fn ctmc_with(rng: &mut Rng, p0: &[f64], rates: &[Vec<f64>], horizon: f64) -> StatePath {
    let mut state = categorical(rng, p0.iter().copied());
    let mut t = 0.0;
    let mut jump_times = vec![0.0];
    let mut states = vec![state];
    loop {
        let exit = -rates[state][state];
        if exit <= 0.0 {
            break;
        }
        t += exponential(rng, exit);
        if t >= horizon {
            break;
        }
        let from = state;
        state = categorical(
            rng,
            rates[from]
                .iter()
                .enumerate()
                .map(move |(j, &r)| if j == from { 0.0 } else { r }),
        );
        jump_times.push(t);
        states.push(state);
    }
    StatePath {
        jump_times,
        states,
        horizon,
    }
}

/// Options for [`sample_switching_hawkes_with`].
#[derive(Debug, Clone, Copy)]
pub struct SimOptions {
    pub max_events: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            max_events: DEFAULT_MAX_EVENTS,
        }
    }
}

/// Samples the switching Hawkes process on `[0, horizon]` by Ogata thinning.
pub fn sample_switching_hawkes(c: &ContinuousParams, horizon: f64, seed: u64) -> Result<SimOutput> {
    sample_switching_hawkes_with(c, horizon, seed, SimOptions::default())
}

pub fn sample_switching_hawkes_with(
    c: &ContinuousParams,
    horizon: f64,
    seed: u64,
    opts: SimOptions,
) -> Result<SimOutput> {
    c.validate()?;
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidRange(format!("horizon {horizon} must be > 0")));
    }
    let mut rng = rng_from_seed(seed);
    let z_path = ctmc_with(&mut rng, &c.p0, &c.rates, horizon);

    let mut times = Vec::new();
    // Excitation sum_{T < t} a exp(-b (t - T)) at the current time.
    let mut excitation = 0.0;
    let mut t = 0.0;
    for (seg, &state) in z_path.states.iter().enumerate() {
        let end = z_path.segment_end(seg);
        let base = c.m[state];
        loop {
            // Intensity only decreases between events within a segment, so
            // the current value dominates until the next event or jump.
            let bound = base + excitation;
            if bound <= 0.0 {
                break;
            }
            let w = exponential(&mut rng, bound);
            if t + w >= end {
                break;
            }
            t += w;
            excitation *= (-c.b * w).exp();
            let intensity = base + excitation;
            if rng.random::<f64>() * bound <= intensity {
                times.push(t);
                excitation += c.a;
                if times.len() > opts.max_events {
                    return Err(Error::ExplosionGuard {
                        cap: opts.max_events,
                        time: t,
                    });
                }
            }
        }
        excitation *= (-c.b * (end - t)).exp();
        t = end;
    }
    // Exponential waiting times can collide in floating point at extreme rates.
    times.dedup();
    Ok(SimOutput {
        events: EventSequence::new(times, horizon)?,
        z_path,
        seed,
    })
}

/// Draws `n` bins of the discrete model. Returns counts and 0-based states.
pub fn sample_discrete(theta: &DiscreteParams, n: usize, seed: u64) -> Result<(Vec<u64>, Vec<usize>)> {
    theta.validate()?;
    if n == 0 {
        return Err(Error::InvalidRange("n must be >= 1".into()));
    }
    let mut rng = rng_from_seed(seed);
    let mut counts = Vec::with_capacity(n);
    let mut states = Vec::with_capacity(n);
    let mut state = categorical(&mut rng, theta.nu.iter().copied());
    let mut u = 0.0;
    for k in 0..n {
        if k > 0 {
            state = categorical(&mut rng, theta.pi[state].iter().copied());
        }
        let lambda = theta.mu[state] + u;
        let y = if lambda > 0.0 {
            // lambda is finite and positive here, so construction cannot fail.
            Poisson::new(lambda).expect("positive finite rate").sample(&mut rng) as u64
        } else {
            0
        };
        counts.push(y);
        states.push(state);
        u = theta.alpha * y as f64 + theta.beta * u;
    }
    Ok((counts, states))
}

/// Bins events into `n = max(1, round(coef_c * N))` intervals of the horizon.
pub fn discretize(e: &EventSequence, coef_c: f64) -> Result<BinnedSeries> {
    if e.is_empty() {
        return Err(Error::EmptySequence);
    }
    if !(coef_c > 0.0) || !coef_c.is_finite() {
        return Err(Error::InvalidRange(format!("coefficient C = {coef_c} must be > 0")));
    }
    let n = ((coef_c * e.len() as f64).round() as usize).max(1);
    bin_events(e, n)
}

/// Bins events into `n` equal intervals `((k-1) delta, k delta]`, the first
/// one closed at 0.
pub fn bin_events(e: &EventSequence, n: usize) -> Result<BinnedSeries> {
    if n == 0 {
        return Err(Error::InvalidRange("n must be >= 1".into()));
    }
    let horizon = e.horizon();
    let mut counts = vec![0u64; n];
    for &t in e.times() {
        let k = ((t / horizon * n as f64).ceil() as usize).clamp(1, n) - 1;
        counts[k] += 1;
    }
    BinnedSeries::new(counts, horizon / n as f64)
}

/// Per bin, the state occupying the largest share of the bin; ties go to the
/// lower index.
pub fn bin_state_majority(z: &StatePath, n: usize) -> Vec<usize> {
    let q = z.states.iter().max().map_or(1, |m| m + 1);
    let width = z.horizon / n as f64;
    let mut out = Vec::with_capacity(n);
    let mut seg = 0;
    let mut occupancy = vec![0.0; q];
    for k in 0..n {
        let lo = k as f64 * width;
        let hi = if k + 1 == n { z.horizon } else { (k + 1) as f64 * width };
        occupancy.iter_mut().for_each(|o| *o = 0.0);
        while seg + 1 < z.states.len() && z.jump_times[seg + 1] <= lo {
            seg += 1;
        }
        let mut s = seg;
        while s < z.states.len() && z.jump_times[s] < hi {
            let a = z.jump_times[s].max(lo);
            let b = z.segment_end(s).min(hi);
            if b > a {
                occupancy[z.states[s]] += b - a;
            }
            s += 1;
        }
        let tol = 1e-12 * width;
        let mut best = 0;
        for i in 1..q {
            if occupancy[i] > occupancy[best] + tol {
                best = i;
            }
        }
        out.push(best);
    }
    out
}
