//! Simulation study and four-model comparison.
//!
//! A study simulates one continuous path per `(Q*, L, replicate)`, bins it at
//! every discretization coefficient `C`, fits `Q = 1..=q_max` and scores the
//! decoded paths against the majority state of each bin.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{fit_homogeneous, quantile_sorted, EMConfig, FitReport};
use crate::model::{cont_to_disc, ContinuousParams};
use crate::poisson::log_pmf_unchecked;
use crate::rng::derive_seed;
use crate::select::{aligned_accuracy, map_decode, select_q, viterbi, ModelKind, SelectionResult};
use crate::series::BinnedSeries;
use crate::simulate::{bin_state_majority, discretize, sample_switching_hawkes};

/// Jump size of the excitation in every design.
pub const DESIGN_A: f64 = 40.0;
/// Decay rate of the excitation in every design.
pub const DESIGN_B: f64 = 160.0;

/// Unscaled benchmark design with `q_star` hidden states on `[0, 1]`.
///
/// Use [`ContinuousParams::scaled`] to apply an intensity factor `L`.
pub fn default_design(q_star: usize) -> Result<ContinuousParams> {
    let (rates, m): (Vec<Vec<f64>>, Vec<f64>) = match q_star {
        1 => (vec![vec![0.0]], vec![60.0]),
        2 => (vec![vec![-25.0, 25.0], vec![25.0, -25.0]], vec![1.0, 400.0]),
        3 => {
            let s = 50.0 / 3.0;
            (
                vec![
                    vec![-2.0 * s, s, s],
                    vec![s, -2.0 * s, s],
                    vec![s, s, -2.0 * s],
                ],
                vec![1.0, 200.0, 1000.0],
            )
        }
        other => return Err(Error::UnsupportedQStar(other)),
    };
    Ok(ContinuousParams {
        p0: vec![1.0 / q_star as f64; q_star],
        rates,
        m,
        a: DESIGN_A,
        b: DESIGN_B,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub q_stars: Vec<usize>,
    pub intensities: Vec<f64>,
    pub coefs: Vec<f64>,
    pub replicates: usize,
    pub q_max: usize,
    pub seed: u64,
    pub horizon: f64,
    pub em: EMConfig,
    /// Record wall-clock seconds per selection. Off by default so that
    /// output files are reproducible byte for byte.
    pub timing: bool,
}

impl StudyConfig {
    /// Reduced grid: `L` and `C` in `{1, 2}`, 20 replicates, `Q <= 4`.
    pub fn desk() -> Self {
        StudyConfig {
            q_stars: vec![1, 2, 3],
            intensities: vec![1.0, 2.0],
            coefs: vec![1.0, 2.0],
            replicates: 20,
            q_max: 4,
            seed: 0,
            horizon: 1.0,
            em: EMConfig::default(),
            timing: false,
        }
    }

    /// Full grid: four intensities, four coefficients, 100 replicates, `Q <= 5`.
    pub fn paper() -> Self {
        StudyConfig {
            intensities: vec![0.5, 1.0, 1.5, 2.0],
            coefs: vec![0.5, 1.0, 2.0, 4.0],
            replicates: 100,
            q_max: 5,
            ..StudyConfig::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.q_stars.is_empty() || self.intensities.is_empty() || self.coefs.is_empty() {
            return Err(Error::InvalidRange("study grid has an empty axis".into()));
        }
        if self.replicates == 0 {
            return Err(Error::InvalidRange("replicates must be >= 1".into()));
        }
        for &q in &self.q_stars {
            default_design(q)?;
        }
        let top = self.q_stars.iter().copied().max().unwrap_or(1);
        if self.q_max < top {
            return Err(Error::InvalidRange(format!(
                "q_max = {} is below the largest Q* = {top}",
                self.q_max
            )));
        }
        if let Some(l) = self.intensities.iter().find(|l| !(**l > 0.0) || !l.is_finite()) {
            return Err(Error::InvalidRange(format!("intensity L = {l} must be > 0")));
        }
        if let Some(c) = self.coefs.iter().find(|c| !(**c > 0.0) || !c.is_finite()) {
            return Err(Error::InvalidRange(format!("coefficient C = {c} must be > 0")));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::InvalidRange(format!("horizon {} must be > 0", self.horizon)));
        }
        self.em.validate()
    }

    /// Number of rows [`run_study`] returns.
    pub fn n_rows(&self) -> usize {
        self.q_stars.len() * self.intensities.len() * self.coefs.len() * self.replicates * self.q_max
    }
}

/// One fit of the study. `delta` and `alignment` are kept in memory for
/// [`summarize`] but are not part of the CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub q_star: usize,
    pub l: f64,
    pub c: f64,
    pub rep: usize,
    pub seed: u64,
    pub n_events: usize,
    pub n_bins: usize,
    pub q_fit: usize,
    pub log_lik: f64,
    pub aic: f64,
    pub alpha_hat: f64,
    pub beta_hat: f64,
    pub mu_hat: Vec<f64>,
    pub acc_map: f64,
    pub acc_vit: f64,
    pub q_hat_aic: usize,
    pub cpu_seconds: Option<f64>,
    /// `ok`, or the reason the fit is missing.
    pub status: String,
    pub delta: f64,
    /// Decoded label `i` corresponds to true state `alignment[i]`.
    pub alignment: Vec<usize>,
}

impl StudyRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

pub const STUDY_HEADER: &str = "q_star,L,C,rep,seed,n_events,n_bins,Q_fit,log_lik,aic,alpha_hat,beta_hat,mu_hat,acc_map,acc_vit,q_hat_aic,cpu_seconds,status";

/// Progress of [`run_study_with`], reported once per `(Q*, L, replicate)`.
#[derive(Debug, Clone, Copy)]
pub struct Progress {
    pub done: usize,
    pub total: usize,
    pub q_star: usize,
    pub l: f64,
    pub rep: usize,
}

pub fn run_study(cfg: &StudyConfig) -> Result<Vec<StudyRow>> {
    run_study_with(cfg, |_| {})
}

/// Runs the whole grid. Cells run in parallel on the current rayon pool; the
/// returned rows are sorted by `(Q*, L, C, rep, Q_fit)` in grid order.
///
/// The simulation seed of a cell is `derive_seed(cfg.seed, [Q*, L index,
/// rep])`; all `C` reuse that path. Failures become rows with a non-`ok`
/// status.
pub fn run_study_with<F>(cfg: &StudyConfig, progress: F) -> Result<Vec<StudyRow>>
where
    F: Fn(Progress) + Sync,
{
    cfg.validate()?;
    let mut cells = Vec::new();
    for &q_star in &cfg.q_stars {
        for li in 0..cfg.intensities.len() {
            for rep in 0..cfg.replicates {
                cells.push((q_star, li, rep));
            }
        }
    }
    let total = cells.len();
    let done = std::sync::atomic::AtomicUsize::new(0);
    let mut rows: Vec<(usize, usize, usize, usize, StudyRow)> = cells
        .par_iter()
        .flat_map_iter(|&(q_star, li, rep)| {
            let out = run_cell(cfg, q_star, li, rep);
            let n = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
            progress(Progress {
                done: n,
                total,
                q_star,
                l: cfg.intensities[li],
                rep,
            });
            out.into_iter()
                .map(move |(ci, row)| (q_star, li, ci, rep, row))
        })
        .collect();
    let order = |q: usize| cfg.q_stars.iter().position(|&x| x == q).unwrap_or(usize::MAX);
    rows.sort_by_key(|(q, li, ci, rep, row)| (order(*q), *li, *ci, *rep, row.q_fit));
    Ok(rows.into_iter().map(|r| r.4).collect())
}

fn run_cell(cfg: &StudyConfig, q_star: usize, li: usize, rep: usize) -> Vec<(usize, StudyRow)> {
    let l = cfg.intensities[li];
    let seed = derive_seed(cfg.seed, &[q_star as u64, li as u64, rep as u64]);
    let template = StudyRow {
        q_star,
        l,
        c: 0.0,
        rep,
        seed,
        n_events: 0,
        n_bins: 0,
        q_fit: 0,
        log_lik: f64::NAN,
        aic: f64::NAN,
        alpha_hat: f64::NAN,
        beta_hat: f64::NAN,
        mu_hat: Vec::new(),
        acc_map: f64::NAN,
        acc_vit: f64::NAN,
        q_hat_aic: 0,
        cpu_seconds: None,
        status: String::new(),
        delta: f64::NAN,
        alignment: Vec::new(),
    };
    let failed = |ci: usize, status: String, base: &StudyRow| {
        (1..=cfg.q_max)
            .map(|q_fit| {
                (
                    ci,
                    StudyRow {
                        c: cfg.coefs[ci],
                        q_fit,
                        status: status.clone(),
                        ..base.clone()
                    },
                )
            })
            .collect::<Vec<_>>()
    };
    let sim = default_design(q_star).and_then(|d| sample_switching_hawkes(&d.scaled(l), cfg.horizon, seed));
    let sim = match sim {
        Ok(s) => s,
        Err(e) => {
            return (0..cfg.coefs.len())
                .flat_map(|ci| failed(ci, format!("simulation failed: {e}"), &template))
                .collect()
        }
    };
    let mut out = Vec::new();
    for (ci, &c) in cfg.coefs.iter().enumerate() {
        let y = match discretize(&sim.events, c) {
            Ok(y) => y,
            Err(e) => {
                out.extend(failed(ci, format!("discretization failed: {e}"), &template));
                continue;
            }
        };
        let base = StudyRow {
            c,
            n_events: sim.events.len(),
            n_bins: y.len(),
            delta: y.delta(),
            ..template.clone()
        };
        let truth = bin_state_majority(&sim.z_path, y.len());
        let start = Instant::now();
        let selection = select_q(&y, cfg.q_max, &cfg.em);
        let cpu = cfg.timing.then(|| start.elapsed().as_secs_f64());
        match selection {
            Ok(sel) => out.extend(rows_from_selection(&sel, &y, &truth, q_star, cpu, &base).into_iter().map(|r| (ci, r))),
            Err(e) => out.extend(failed(ci, format!("selection failed: {e}"), &base)),
        }
    }
    out
}

fn rows_from_selection(
    sel: &SelectionResult,
    y: &BinnedSeries,
    truth: &[usize],
    q_star: usize,
    cpu: Option<f64>,
    base: &StudyRow,
) -> Vec<StudyRow> {
    sel.per_q
        .iter()
        .map(|f| {
            let mut row = StudyRow {
                q_fit: f.q,
                q_hat_aic: sel.q_hat,
                cpu_seconds: cpu,
                ..base.clone()
            };
            match &f.fit {
                Ok(fit) => fill_fit(&mut row, fit, y, truth, q_star),
                Err(msg) => row.status = msg.clone(),
            }
            row
        })
        .collect()
}

fn fill_fit(row: &mut StudyRow, fit: &FitReport, y: &BinnedSeries, truth: &[usize], q_star: usize) {
    let t = &fit.theta_hat;
    row.log_lik = fit.log_lik;
    row.aic = fit.aic;
    row.alpha_hat = t.alpha;
    row.beta_hat = t.beta;
    row.mu_hat = t.mu.clone();
    let k = fit.n_states().max(q_star);
    let map = map_decode(&fit.tau);
    let vit = viterbi(y, t);
    let scored = aligned_accuracy(&map, truth, k).and_then(|(acc_map, perm)| {
        aligned_accuracy(&vit, truth, k).map(|(acc_vit, _)| (acc_map, acc_vit, perm))
    });
    match scored {
        Ok((acc_map, acc_vit, perm)) => {
            row.acc_map = acc_map;
            row.acc_vit = acc_vit;
            row.alignment = perm;
            row.status = "ok".into();
        }
        Err(e) => row.status = format!("scoring failed: {e}"),
    }
}

fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

/// Writes rows as CSV under [`STUDY_HEADER`].
pub fn write_study_csv<W: Write>(mut w: W, rows: &[StudyRow]) -> Result<()> {
    writeln!(w, "{STUDY_HEADER}")?;
    for r in rows {
        let mu: Vec<String> = r.mu_hat.iter().map(|m| fmt_f64(*m)).collect();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.q_star,
            fmt_f64(r.l),
            fmt_f64(r.c),
            r.rep,
            r.seed,
            r.n_events,
            r.n_bins,
            r.q_fit,
            fmt_f64(r.log_lik),
            fmt_f64(r.aic),
            fmt_f64(r.alpha_hat),
            fmt_f64(r.beta_hat),
            mu.join(";"),
            fmt_f64(r.acc_map),
            fmt_f64(r.acc_vit),
            r.q_hat_aic,
            r.cpu_seconds.map(fmt_f64).unwrap_or_default(),
            csv_field(&r.status),
        )?;
    }
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\"").replace('\n', " "))
    } else {
        s.to_string()
    }
}

/// One fitted model in [`compare_models`].
#[derive(Debug, Clone)]
pub struct ModelFit {
    pub kind: ModelKind,
    /// Number of hidden states of the retained fit.
    pub q: usize,
    pub log_lik: f64,
    pub aic: f64,
    /// `ok`, or the reason the model could not be fitted.
    pub status: String,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    /// One entry per model, simplest first.
    pub fits: Vec<ModelFit>,
    pub best: ModelKind,
}

impl Comparison {
    /// Writes `model,Q,log_lik,aic,status` rows then a `# winner=` line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "model,Q,log_lik,aic,status")?;
        for f in &self.fits {
            writeln!(
                w,
                "{},{},{},{},{}",
                f.kind.name(),
                f.q,
                fmt_f64(f.log_lik),
                fmt_f64(f.aic),
                csv_field(&f.status)
            )?;
        }
        writeln!(w, "# winner={}", self.best.name())?;
        Ok(())
    }
}

/// Fits the homogeneous Poisson model (closed form), the Poisson HMM and the
/// Hawkes HMM with `2 <= Q <= q_max` chosen by AIC, and the homogeneous
/// Hawkes model. The largest AIC wins; ties go to the simpler model.
pub fn compare_models(y: &BinnedSeries, q_max: usize, cfg: &EMConfig) -> Result<Comparison> {
    if y.is_empty() {
        return Err(Error::EmptySequence);
    }
    cfg.validate()?;
    let rate = y.mean();
    let ll: f64 = y.counts().iter().map(|&c| log_pmf_unchecked(c, rate)).sum();
    let mut fits = vec![ModelFit {
        kind: ModelKind::PoissonHomog,
        q: 1,
        log_lik: ll,
        aic: crate::select::aic(ll, 1, ModelKind::PoissonHomog),
        status: "ok".into(),
    }];
    fits.push(best_hmm(y, q_max, &cfg.poisson(), ModelKind::PoissonHmm));
    fits.push(match fit_homogeneous(y, cfg) {
        Ok(r) => ModelFit {
            kind: ModelKind::HawkesHomog,
            q: 1,
            log_lik: r.log_lik,
            aic: r.aic,
            status: "ok".into(),
        },
        Err(e) => missing(ModelKind::HawkesHomog, e.to_string()),
    });
    fits.push(best_hmm(y, q_max, cfg, ModelKind::HawkesHmm));
    let mut best = &fits[0];
    for f in &fits[1..] {
        if f.status == "ok" && f.aic > best.aic {
            best = f;
        }
    }
    Ok(Comparison {
        best: best.kind,
        fits,
    })
}

fn missing(kind: ModelKind, status: String) -> ModelFit {
    ModelFit {
        kind,
        q: 0,
        log_lik: f64::NAN,
        aic: f64::NAN,
        status,
    }
}

fn best_hmm(y: &BinnedSeries, q_max: usize, cfg: &EMConfig, kind: ModelKind) -> ModelFit {
    if q_max < 2 {
        return missing(kind, "skipped: q_max < 2".into());
    }
    match select_q(y, q_max, cfg) {
        Ok(sel) => {
            let mut best: Option<&FitReport> = None;
            for f in &sel.per_q[1..] {
                if let Ok(r) = &f.fit {
                    if best.is_none_or(|b| r.aic > b.aic) {
                        best = Some(r);
                    }
                }
            }
            match best {
                Some(r) => ModelFit {
                    kind,
                    q: r.n_states(),
                    log_lik: r.log_lik,
                    aic: r.aic,
                    status: "ok".into(),
                },
                None => missing(kind, "every fit with Q >= 2 failed".into()),
            }
        }
        Err(e) => missing(kind, e.to_string()),
    }
}

/// Five-number summary with linearly interpolated quartiles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quartiles {
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl Quartiles {
    /// `None` when no value is finite; non-finite values are dropped.
    pub fn of(values: &[f64]) -> Option<Self> {
        let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        Some(Quartiles {
            n: v.len(),
            min: v[0],
            q1: quantile_sorted(&v, 0.25),
            median: quantile_sorted(&v, 0.5),
            q3: quantile_sorted(&v, 0.75),
            max: v[v.len() - 1],
        })
    }
}

/// Grid cell of a summary table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub q_star: usize,
    pub l: f64,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatRow {
    pub cell: Cell,
    /// Parameter name (`alpha`, `beta`, `mu_1`, ...) or accuracy method.
    pub label: String,
    pub stats: Quartiles,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountRow {
    pub cell: Cell,
    pub q_hat: usize,
    pub count: usize,
}

/// Tables produced by [`summarize`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Summary {
    /// Estimate minus discretized truth, from fits with `Q = Q*`.
    pub bias: Vec<StatRow>,
    /// Selected number of states, one count per replicate.
    pub q_hat: Vec<CountRow>,
    /// Accuracy at `Q = Q*` (`map`, `viterbi`, `abs_diff`) and at the
    /// selected `Q` (`map_at_qhat`, `viterbi_at_qhat`).
    pub accuracy: Vec<StatRow>,
    /// Seconds per selection; empty without timing.
    pub cpu: Vec<StatRow>,
}

/// Summary tables per `(Q*, L, C)`, in the order cells first appear.
pub fn summarize(rows: &[StudyRow]) -> Summary {
    let mut cells: Vec<Cell> = Vec::new();
    let mut groups: BTreeMap<usize, Vec<&StudyRow>> = BTreeMap::new();
    for r in rows {
        let cell = Cell {
            q_star: r.q_star,
            l: r.l,
            c: r.c,
        };
        let idx = match cells.iter().position(|c| *c == cell) {
            Some(i) => i,
            None => {
                cells.push(cell);
                cells.len() - 1
            }
        };
        groups.entry(idx).or_default().push(r);
    }
    let mut out = Summary::default();
    for (idx, group) in groups {
        let cell = cells[idx];
        summarize_cell(cell, &group, &mut out);
    }
    out
}

fn summarize_cell(cell: Cell, group: &[&StudyRow], out: &mut Summary) {
    let at_truth: Vec<&StudyRow> = group
        .iter()
        .copied()
        .filter(|r| r.is_ok() && r.q_fit == cell.q_star)
        .collect();
    let push = |dst: &mut Vec<StatRow>, label: String, values: &[f64]| {
        if let Some(stats) = Quartiles::of(values) {
            dst.push(StatRow { cell, label, stats });
        }
    };

    let mut bias: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    if let Ok(design) = default_design(cell.q_star) {
        let design = design.scaled(cell.l);
        for r in &at_truth {
            let Ok(truth) = cont_to_disc(&design, r.delta) else { continue };
            bias.entry("alpha".into()).or_default().push(r.alpha_hat - truth.alpha);
            bias.entry("beta".into()).or_default().push(r.beta_hat - truth.beta);
            for (i, &m) in r.mu_hat.iter().enumerate() {
                let j = r.alignment.get(i).copied().unwrap_or(i);
                if let Some(t) = truth.mu.get(j) {
                    bias.entry(format!("mu_{}", j + 1)).or_default().push(m - t);
                }
            }
        }
    }
    for (label, values) in bias {
        push(&mut out.bias, label, &values);
    }

    let map: Vec<f64> = at_truth.iter().map(|r| r.acc_map).collect();
    let vit: Vec<f64> = at_truth.iter().map(|r| r.acc_vit).collect();
    let diff: Vec<f64> = at_truth.iter().map(|r| (r.acc_map - r.acc_vit).abs()).collect();
    push(&mut out.accuracy, "map".into(), &map);
    push(&mut out.accuracy, "viterbi".into(), &vit);
    push(&mut out.accuracy, "abs_diff".into(), &diff);

    // One entry per replicate: the row fitted at the selected Q.
    let mut per_rep: BTreeMap<usize, &StudyRow> = BTreeMap::new();
    for r in group {
        if r.q_hat_aic > 0 {
            let e = per_rep.entry(r.rep).or_insert(r);
            if r.q_fit == r.q_hat_aic {
                *e = r;
            }
        }
    }
    let at_hat: Vec<&StudyRow> = per_rep
        .values()
        .copied()
        .filter(|r| r.is_ok() && r.q_fit == r.q_hat_aic)
        .collect();
    push(&mut out.accuracy, "map_at_qhat".into(), &at_hat.iter().map(|r| r.acc_map).collect::<Vec<_>>());
    push(&mut out.accuracy, "viterbi_at_qhat".into(), &at_hat.iter().map(|r| r.acc_vit).collect::<Vec<_>>());

    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for r in per_rep.values() {
        *counts.entry(r.q_hat_aic).or_default() += 1;
    }
    for (q_hat, count) in counts {
        out.q_hat.push(CountRow { cell, q_hat, count });
    }

    let cpu: Vec<f64> = per_rep.values().filter_map(|r| r.cpu_seconds).collect();
    push(&mut out.cpu, "select".into(), &cpu);
}

fn write_stat_csv<W: Write>(mut w: W, label: &str, rows: &[StatRow]) -> Result<()> {
    writeln!(w, "q_star,L,C,{label},n,min,q1,median,q3,max")?;
    for r in rows {
        let s = r.stats;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            r.cell.q_star,
            fmt_f64(r.cell.l),
            fmt_f64(r.cell.c),
            r.label,
            s.n,
            fmt_f64(s.min),
            fmt_f64(s.q1),
            fmt_f64(s.median),
            fmt_f64(s.q3),
            fmt_f64(s.max)
        )?;
    }
    Ok(())
}

impl Summary {
    /// Writes `bias.csv`, `qhat.csv`, `accuracy.csv` and `cpu.csv` into `dir`.
    pub fn write_csvs(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let mut file = |name: &str| -> Result<(PathBuf, std::io::BufWriter<fs::File>)> {
            let p = dir.join(name);
            written.push(p.clone());
            Ok((p.clone(), std::io::BufWriter::new(fs::File::create(p)?)))
        };
        let (_, w) = file("bias.csv")?;
        write_stat_csv(w, "parameter", &self.bias)?;
        let (_, w) = file("accuracy.csv")?;
        write_stat_csv(w, "method", &self.accuracy)?;
        let (_, w) = file("cpu.csv")?;
        write_stat_csv(w, "quantity", &self.cpu)?;
        let (_, mut w) = file("qhat.csv")?;
        writeln!(w, "q_star,L,C,Q_hat,count")?;
        for r in &self.q_hat {
            writeln!(w, "{},{},{},{},{}", r.cell.q_star, fmt_f64(r.cell.l), fmt_f64(r.cell.c), r.q_hat, r.count)?;
        }
        w.flush()?;
        Ok(written)
    }

    /// Writes one boxplot per bias parameter and accuracy method, and a
    /// histogram of the selected `Q`, as SVG files in `dir`.
    pub fn write_svgs(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for (prefix, table) in [("bias", &self.bias), ("accuracy", &self.accuracy)] {
            let mut labels: Vec<&str> = table.iter().map(|r| r.label.as_str()).collect();
            labels.sort_unstable();
            labels.dedup();
            for label in labels {
                let boxes: Vec<(String, Quartiles)> = table
                    .iter()
                    .filter(|r| r.label == label)
                    .map(|r| (cell_name(&r.cell), r.stats))
                    .collect();
                let p = dir.join(format!("{prefix}_{label}.svg"));
                fs::write(&p, boxplot_svg(&format!("{prefix}: {label}"), &boxes))?;
                written.push(p);
            }
        }
        let bars: Vec<(String, usize)> = self
            .q_hat
            .iter()
            .map(|r| (format!("{} Q={}", cell_name(&r.cell), r.q_hat), r.count))
            .collect();
        let p = dir.join("qhat.svg");
        fs::write(&p, histogram_svg("selected Q", &bars))?;
        written.push(p);
        Ok(written)
    }
}

fn cell_name(c: &Cell) -> String {
    format!("Q*={} L={} C={}", c.q_star, c.l, c.c)
}

const SVG_W: f64 = 40.0;
const SVG_H: f64 = 300.0;
const SVG_PAD: f64 = 40.0;

fn svg_frame(title: &str, n: usize, body: &str) -> String {
    let width = SVG_PAD * 2.0 + SVG_W * n.max(1) as f64;
    let height = SVG_H + SVG_PAD * 2.0 + 160.0;
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" font-family=\"sans-serif\" font-size=\"10\">\n\
<text x=\"{SVG_PAD}\" y=\"20\" font-size=\"14\">{}</text>\n{body}</svg>\n",
        xml_escape(title)
    )
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn label_svg(x: f64, text: &str) -> String {
    let y = SVG_PAD + SVG_H + 10.0;
    format!(
        "<text x=\"{x}\" y=\"{y}\" transform=\"rotate(60 {x} {y})\">{}</text>\n",
        xml_escape(text)
    )
}

fn boxplot_svg(title: &str, boxes: &[(String, Quartiles)]) -> String {
    let lo = boxes.iter().map(|b| b.1.min).fold(f64::INFINITY, f64::min).min(0.0);
    let hi = boxes.iter().map(|b| b.1.max).fold(f64::NEG_INFINITY, f64::max).max(0.0);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let y = |v: f64| SVG_PAD + SVG_H * (hi - v) / span;
    let mut body = format!(
        "<line x1=\"{SVG_PAD}\" x2=\"{}\" y1=\"{z}\" y2=\"{z}\" stroke=\"green\" stroke-dasharray=\"4\"/>\n",
        SVG_PAD + SVG_W * boxes.len() as f64,
        z = y(0.0)
    );
    for (i, (name, s)) in boxes.iter().enumerate() {
        let cx = SVG_PAD + SVG_W * (i as f64 + 0.5);
        let (l, r) = (cx - SVG_W * 0.3, cx + SVG_W * 0.3);
        body += &format!(
            "<line x1=\"{cx}\" x2=\"{cx}\" y1=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
<rect x=\"{l}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"lightblue\" stroke=\"black\"/>\n\
<line x1=\"{l}\" x2=\"{r}\" y1=\"{m}\" y2=\"{m}\" stroke=\"black\" stroke-width=\"2\"/>\n",
            y(s.max),
            y(s.min),
            y(s.q3),
            r - l,
            (y(s.q1) - y(s.q3)).max(0.5),
            m = y(s.median)
        );
        body += &label_svg(cx, name);
    }
    svg_frame(title, boxes.len(), &body)
}

fn histogram_svg(title: &str, bars: &[(String, usize)]) -> String {
    let top = bars.iter().map(|b| b.1).max().unwrap_or(1).max(1) as f64;
    let mut body = String::new();
    for (i, (name, count)) in bars.iter().enumerate() {
        let h = SVG_H * *count as f64 / top;
        let x = SVG_PAD + SVG_W * i as f64 + SVG_W * 0.1;
        body += &format!(
            "<rect x=\"{x}\" y=\"{}\" width=\"{}\" height=\"{h}\" fill=\"steelblue\"/>\n",
            SVG_PAD + SVG_H - h,
            SVG_W * 0.8
        );
        body += &label_svg(x + SVG_W * 0.4, name);
    }
    svg_frame(title, bars.len(), &body)
}
