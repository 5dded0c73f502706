//! Observed data: event times, binned counts and the auxiliary excitation path.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered event times on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSequence {
    times: Vec<f64>,
    horizon: f64,
}

impl EventSequence {
    /// Builds a sequence, rejecting unsorted or out-of-window times.
    pub fn new(times: Vec<f64>, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidRange(format!("horizon {horizon} must be > 0")));
        }
        for (i, &t) in times.iter().enumerate() {
            if !(0.0..=horizon).contains(&t) {
                return Err(Error::InvalidRange(format!(
                    "event {i} at {t} outside [0, {horizon}]"
                )));
            }
            if i > 0 && t <= times[i - 1] {
                return Err(Error::InvalidRange(format!(
                    "event times not strictly increasing at index {i}"
                )));
            }
        }
        Ok(EventSequence { times, horizon })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Reads the text format: a `# horizon=<T>` header then one time per line.
    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut horizon = None;
        let mut times = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(v) = rest.trim().strip_prefix("horizon=") {
                    let h: f64 = v.trim().parse().map_err(|_| Error::Parse {
                        line: i + 1,
                        msg: format!("bad horizon {v:?}"),
                    })?;
                    horizon = Some(h);
                }
                continue;
            }
            let t: f64 = line.parse().map_err(|_| Error::Parse {
                line: i + 1,
                msg: format!("bad event time {line:?}"),
            })?;
            if let Some(&prev) = times.last() {
                if t <= prev {
                    return Err(Error::Parse {
                        line: i + 1,
                        msg: format!("event time {t} is not after {prev}"),
                    });
                }
            }
            times.push(t);
        }
        let horizon = horizon.ok_or(Error::Parse {
            line: 1,
            msg: "missing '# horizon=<T>' header".into(),
        })?;
        EventSequence::new(times, horizon)
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# horizon={}", self.horizon)?;
        for t in &self.times {
            writeln!(w, "{t}")?;
        }
        Ok(())
    }
}

/// Counts per bin of width `delta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedSeries {
    counts: Vec<u64>,
    delta: f64,
}

impl BinnedSeries {
    pub fn new(counts: Vec<u64>, delta: f64) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::InvalidRange("a binned series needs at least one bin".into()));
        }
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::NonPositiveDelta(delta));
        }
        Ok(BinnedSeries { counts, delta })
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.total() as f64 / self.len() as f64
    }

    /// Reads one nonnegative integer count per line; `#` starts a comment line.
    pub fn read<R: BufRead>(reader: R, delta: f64) -> Result<Self> {
        let mut counts = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let c: u64 = line.parse().map_err(|_| Error::Parse {
                line: i + 1,
                msg: format!("bad count {line:?}"),
            })?;
            counts.push(c);
        }
        BinnedSeries::new(counts, delta)
    }
}

/// The excitation carried into each bin: `u[0] = 0`,
/// `u[k] = alpha y[k-1] + beta u[k-1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxiliaryPath {
    pub u: Vec<f64>,
}

/// Runs the excitation recursion over the counts.
pub fn auxiliary_path(y: &BinnedSeries, alpha: f64, beta: f64) -> AuxiliaryPath {
    AuxiliaryPath {
        u: excitation(y.counts(), alpha, beta),
    }
}

pub(crate) fn excitation(counts: &[u64], alpha: f64, beta: f64) -> Vec<f64> {
    let mut u = Vec::with_capacity(counts.len());
    let mut cur = 0.0;
    for &c in counts {
        u.push(cur);
        cur = alpha * c as f64 + beta * cur;
    }
    u
}
