use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use swhawkes::study::{run_study_with, write_study_csv, Progress};
use swhawkes::{
    compare_models, default_design, discretize, fit_em, map_decode, sample_switching_hawkes, select_q,
    summarize, viterbi, BinnedSeries, ContinuousParams, EMConfig, EventSequence, StudyConfig,
};

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Model(swhawkes::Error),
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("EM did not converge after {0} iterations")]
    NotConverged(usize),
}

impl From<swhawkes::Error> for CliError {
    fn from(e: swhawkes::Error) -> Self {
        match e {
            swhawkes::Error::Io(source) => CliError::Io {
                path: "<stream>".into(),
                source,
            },
            other => CliError::Model(other),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) | CliError::Model(_) => 2,
            CliError::NotConverged(_) => 3,
            CliError::Io { .. } => 4,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Simulate, fit and compare Markov-switching Hawkes models for event counts.
#[derive(Parser)]
#[command(name = "swhawkes", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the continuous-time switching Hawkes process.
    Simulate(SimulateArgs),
    /// Fit a model with a fixed number of hidden states.
    Fit(FitArgs),
    /// Choose the number of hidden states by AIC.
    Select(SelectArgs),
    /// Compare homogeneous and switching Poisson and Hawkes models.
    Compare(CompareArgs),
    /// Run the simulation study.
    Study(StudyArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Built-in design with this many hidden states (1, 2 or 3).
    #[arg(long, conflicts_with_all = ["rates", "baselines", "a", "b", "p0"])]
    design: Option<usize>,
    /// Generator matrix, rows separated by ';' and entries by ','.
    #[arg(long, requires_all = ["baselines", "a", "b"], allow_hyphen_values = true)]
    rates: Option<String>,
    /// Baseline rate of each state, comma separated.
    #[arg(long, value_delimiter = ',')]
    baselines: Option<Vec<f64>>,
    /// Jump of the intensity at each event.
    #[arg(long)]
    a: Option<f64>,
    /// Decay rate of the excitation.
    #[arg(long)]
    b: Option<f64>,
    /// Initial state law, comma separated (uniform by default).
    #[arg(long, value_delimiter = ',')]
    p0: Option<Vec<f64>>,
    /// Multiplier of the baseline rates.
    #[arg(long = "L", default_value_t = 1.0)]
    l: f64,
    #[arg(long, env = "SWHAWKES_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    horizon: f64,
    /// Output directory for events.txt and truth.json.
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct InputArgs {
    /// Event times, one per line, with a `# horizon=T` header.
    #[arg(long, conflicts_with_all = ["counts", "delta"], required_unless_present = "counts")]
    events: Option<PathBuf>,
    /// Bins per event when binning `--events`.
    #[arg(long, default_value_t = 2.0, conflicts_with = "counts")]
    coef: f64,
    /// Binned counts, one integer per line.
    #[arg(long, requires = "delta")]
    counts: Option<PathBuf>,
    /// Bin width of `--counts`.
    #[arg(long)]
    delta: Option<f64>,
}

#[derive(Args)]
struct EmArgs {
    /// Stop when the largest change of a posterior probability is below this.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
    /// Fix alpha = beta = 0 (Poisson HMM).
    #[arg(long)]
    pin_alpha_zero: bool,
    #[arg(long, env = "SWHAWKES_SEED", default_value_t = 0)]
    seed: u64,
}

impl EmArgs {
    fn config(&self) -> CliResult<EMConfig> {
        let cfg = EMConfig {
            tau_tol: self.tol,
            max_iter: self.max_iter,
            pin_alpha_zero: self.pin_alpha_zero,
            seed: self.seed,
            ..EMConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    em: EmArgs,
    /// Number of hidden states.
    #[arg(long = "Q", value_parser = positive)]
    q: usize,
    /// Write the posterior state probabilities as CSV.
    #[arg(long)]
    tau_out: Option<PathBuf>,
    /// Exit with status 3 if EM does not converge.
    #[arg(long)]
    strict: bool,
    /// Report file (standard output by default).
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SelectArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    em: EmArgs,
    #[arg(long, default_value_t = 5, value_parser = positive)]
    q_max: usize,
    /// Exit with status 3 if the selected fit did not converge.
    #[arg(long)]
    strict: bool,
    /// Write MAP and Viterbi paths of the selected fit as CSV.
    #[arg(long)]
    decoded_out: Option<PathBuf>,
    /// Selection report file.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    em: EmArgs,
    #[arg(long, default_value_t = 5, value_parser = positive)]
    q_max: usize,
    /// Comparison CSV (standard output by default).
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Desk,
    Paper,
}

#[derive(Args)]
struct StudyArgs {
    /// Grid to start from; the options below override single axes.
    #[arg(long, value_enum, default_value = "desk")]
    preset: Preset,
    /// True numbers of states, comma separated.
    #[arg(long, value_delimiter = ',')]
    q_stars: Option<Vec<usize>>,
    /// Intensity factors, comma separated.
    #[arg(long = "L", value_delimiter = ',')]
    intensities: Option<Vec<f64>>,
    /// Bins per event, comma separated.
    #[arg(long = "C", value_delimiter = ',')]
    coefs: Option<Vec<f64>>,
    #[arg(long)]
    replicates: Option<usize>,
    /// Largest number of states fitted to each series.
    #[arg(long)]
    q_max: Option<usize>,
    #[arg(long, env = "SWHAWKES_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
    /// Worker threads (all cores by default).
    #[arg(long)]
    jobs: Option<usize>,
    /// Fill the cpu_seconds column; makes the output machine dependent.
    #[arg(long)]
    timing: bool,
    /// Also render summary plots as SVG.
    #[arg(long)]
    svg: bool,
    /// Output directory.
    #[arg(short, long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Select(a) => cmd_select(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Study(a) => cmd_study(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

/// Writes through `f` to `path`, attributing I/O failures to it.
fn write_file(path: &Path, f: impl FnOnce(&mut dyn Write) -> swhawkes::Result<()>) -> CliResult<()> {
    let mut w = create(path)?;
    f(&mut w).map_err(|e| match e {
        swhawkes::Error::Io(source) => CliError::Io {
            path: path.display().to_string(),
            source,
        },
        other => CliError::Model(other),
    })?;
    w.flush().map_err(io_err(path))
}

fn write_json(out: Option<&Path>, value: &serde_json::Value) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Model(e.into()))? + "\n";
    match out {
        Some(p) => fs::write(p, text).map_err(io_err(p)),
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(io_err(Path::new("<stdout>"))),
    }
}

fn parse_matrix(s: &str) -> CliResult<Vec<Vec<f64>>> {
    s.split(';')
        .map(|row| {
            row.split(',')
                .map(|x| {
                    x.trim()
                        .parse::<f64>()
                        .map_err(|_| CliError::Invalid(format!("bad number '{x}' in --rates")))
                })
                .collect()
        })
        .collect()
}

fn cmd_simulate(a: SimulateArgs) -> CliResult<()> {
    let params = match a.design {
        Some(q) => default_design(q)?,
        None => {
            let (Some(rates), Some(m), Some(ja), Some(jb)) = (&a.rates, &a.baselines, a.a, a.b) else {
                return Err(CliError::Invalid(
                    "give --design or all of --rates, --baselines, --a and --b".into(),
                ));
            };
            let q = m.len();
            ContinuousParams {
                p0: a.p0.clone().unwrap_or_else(|| vec![1.0 / q as f64; q]),
                rates: parse_matrix(rates)?,
                m: m.clone(),
                a: ja,
                b: jb,
            }
        }
    };
    if !(a.l > 0.0) || !a.l.is_finite() {
        return Err(CliError::Invalid(format!("--L {} must be > 0", a.l)));
    }
    let params = params.scaled(a.l);
    let sim = sample_switching_hawkes(&params, a.horizon, a.seed)?;
    fs::create_dir_all(&a.out).map_err(io_err(&a.out))?;
    write_file(&a.out.join("events.txt"), |w| sim.events.write(w))?;
    let mut truth: serde_json::Value = serde_json::from_str(&sim.to_json()?).map_err(|e| CliError::Model(e.into()))?;
    truth["params"] = serde_json::to_value(&params).map_err(|e| CliError::Model(e.into()))?;
    truth["L"] = a.l.into();
    write_json(Some(&a.out.join("truth.json")), &truth)?;
    println!("{}", sim.events.len());
    Ok(())
}

fn load_input(input: &InputArgs) -> CliResult<BinnedSeries> {
    if let Some(path) = &input.events {
        let file = File::open(path).map_err(io_err(path))?;
        let events = EventSequence::read(BufReader::new(file))?;
        Ok(discretize(&events, input.coef)?)
    } else if let (Some(path), Some(delta)) = (&input.counts, input.delta) {
        let file = File::open(path).map_err(io_err(path))?;
        Ok(BinnedSeries::read(BufReader::new(file), delta)?)
    } else {
        Err(CliError::Invalid("give --events or --counts with --delta".into()))
    }
}

fn cmd_fit(a: FitArgs) -> CliResult<()> {
    let y = load_input(&a.input)?;
    let cfg = a.em.config()?;
    let report = fit_em(&y, a.q, &cfg)?;
    write_json(a.out.as_deref(), &report.to_json_value())?;
    if let Some(p) = &a.tau_out {
        write_file(p, |w| report.write_tau_csv(w))?;
    }
    if a.strict && !report.converged {
        return Err(CliError::NotConverged(report.n_iter));
    }
    Ok(())
}

fn cmd_select(a: SelectArgs) -> CliResult<()> {
    let y = load_input(&a.input)?;
    let cfg = a.em.config()?;
    let sel = select_q(&y, a.q_max, &cfg)?;
    println!("Q_hat = {}", sel.q_hat);
    println!("Q,log_lik,aic,status");
    for f in &sel.per_q {
        match &f.fit {
            Ok(r) => println!("{},{},{},ok", f.q, r.log_lik, r.aic),
            Err(msg) => println!("{},,,{}", f.q, msg.replace(',', ";")),
        }
    }
    if let Some(p) = &a.out {
        write_json(Some(p), &sel.to_json_value())?;
    }
    if let Some(p) = &a.decoded_out {
        let map = map_decode(&sel.best.tau);
        let vit = viterbi(&y, &sel.best.theta_hat);
        write_file(p, |w| swhawkes::select::write_decoded_csv(w, &map, &vit))?;
    }
    if a.strict && !sel.best.converged {
        return Err(CliError::NotConverged(sel.best.n_iter));
    }
    Ok(())
}

fn cmd_compare(a: CompareArgs) -> CliResult<()> {
    let y = load_input(&a.input)?;
    let cfg = a.em.config()?;
    let cmp = compare_models(&y, a.q_max, &cfg)?;
    match &a.out {
        Some(p) => write_file(p, |w| cmp.write_csv(w))?,
        None => cmp
            .write_csv(io::stdout().lock())
            .map_err(|e| CliError::from(e))?,
    }
    println!("winner: {}", cmp.best.name());
    Ok(())
}

fn cmd_study(a: StudyArgs) -> CliResult<()> {
    let base = match a.preset {
        Preset::Desk => StudyConfig::desk(),
        Preset::Paper => StudyConfig::paper(),
    };
    let cfg = StudyConfig {
        q_stars: a.q_stars.unwrap_or(base.q_stars),
        intensities: a.intensities.unwrap_or(base.intensities),
        coefs: a.coefs.unwrap_or(base.coefs),
        replicates: a.replicates.unwrap_or(base.replicates),
        q_max: a.q_max.unwrap_or(base.q_max),
        seed: a.seed,
        timing: a.timing,
        em: EMConfig {
            tau_tol: a.tol,
            max_iter: a.max_iter,
            ..base.em
        },
        ..base
    };
    cfg.validate()?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = a.jobs {
        if j == 0 {
            return Err(CliError::Invalid("--jobs must be >= 1".into()));
        }
        pool = pool.num_threads(j);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Invalid(format!("cannot start worker pool: {e}")))?;
    let progress = |p: Progress| {
        eprintln!("[{}/{}] Q*={} L={} rep={}", p.done, p.total, p.q_star, p.l, p.rep);
    };
    let rows = pool.install(|| run_study_with(&cfg, progress))?;
    let failed = rows.iter().filter(|r| !r.is_ok()).count();
    if failed > 0 {
        eprintln!("{failed} of {} fits failed; see the status column", rows.len());
    }
    fs::create_dir_all(&a.out).map_err(io_err(&a.out))?;
    write_file(&a.out.join("study.csv"), |w| write_study_csv(w, &rows))?;
    let summary = summarize(&rows);
    summary.write_csvs(&a.out).map_err(|e| match e {
        swhawkes::Error::Io(source) => CliError::Io {
            path: a.out.display().to_string(),
            source,
        },
        other => CliError::Model(other),
    })?;
    if a.svg {
        summary.write_svgs(&a.out.join("plots")).map_err(CliError::from)?;
    }
    println!("{} rows written to {}", rows.len(), a.out.join("study.csv").display());
    Ok(())
}

fn positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}
