//! `stemprolif`: simulate cohorts, estimate parameters, run sweeps and
//! ingest division event logs.
//!
//! Exit codes: 0 success, 1 runtime or estimation failure, 2 usage or
//! configuration error.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use stemprolif::estimation::{run_pipeline, PipelineOptions, TimeAssignment};
use stemprolif::io::{
    aggregate_events, read_counts, read_event_log, starting_cells, subsample, write_counts_to, write_series_to,
    EventTiming,
};
use stemprolif::metrics::median;
use stemprolif::model::{ProbGenConfig, ProliferationCoeffs, RateConstant};
use stemprolif::regression::FitMethod;
use stemprolif::simulator::{
    generate_cohort, plan_run, HorizonReason, SampleSchedule, SimConfig, DEFAULT_DECAY_FRACTION,
    DEFAULT_HORIZON_CAP, DEFAULT_MAX_EVENTS,
};
use stemprolif::sweep::{run_sweep, SweepSpec};

#[derive(Parser)]
#[command(name = "stemprolif", version, about = "Stem-cell proliferation simulator and estimator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Qr,
    Wls,
}

#[derive(Clone, Copy, ValueEnum)]
enum Assign {
    Left,
    Mid,
}

#[derive(Clone, Copy, ValueEnum)]
enum Timing {
    Last,
    Midpoint,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a cohort from a JSON configuration.
    Simulate {
        config: PathBuf,
        /// Counts table to write; metadata goes to `<out>.meta.json`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        k: Option<f64>,
    },
    /// Estimate rate, initial population and proliferation function.
    Estimate {
        cohort: PathBuf,
        /// Report JSON; the plotting table goes to `<out stem>.trajectory.csv`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "qr")]
        method: Method,
        #[arg(long)]
        euler_k: Option<usize>,
        #[arg(long, value_enum)]
        time_assignment: Option<Assign>,
    },
    /// Run a simulation sweep from a JSON spec.
    Sweep {
        spec: PathBuf,
        /// Summary table.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        k: Option<f64>,
        #[arg(long, value_enum)]
        method: Option<Method>,
        #[arg(long)]
        euler_k: Option<usize>,
        #[arg(long, value_enum)]
        time_assignment: Option<Assign>,
    },
    /// Aggregate a division event log into a subsampled counts table.
    Ingest {
        log: PathBuf,
        /// Counts table; the full event-ordered series goes to `<out stem>.series.csv`.
        #[arg(long)]
        out: PathBuf,
        /// Sampling interval in hours.
        #[arg(long)]
        interval: f64,
        /// Starting MEP count; defaults to the number of generation-1 MEPs.
        #[arg(long)]
        start_count: Option<u64>,
        #[arg(long, value_enum, default_value = "last")]
        timing: Timing,
    },
    /// Print the version.
    Version,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Runtime(m) => m,
        }
    }
}

fn usage(m: impl std::fmt::Display) -> Failure {
    Failure::Usage(m.to_string())
}

fn runtime(m: impl std::fmt::Display) -> Failure {
    Failure::Runtime(m.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Simulate { config, out, seed, k } => simulate(&config, &out, seed, k),
        Command::Estimate {
            cohort,
            out,
            method,
            euler_k,
            time_assignment,
        } => {
            let mut opts = PipelineOptions::default();
            apply_pipeline_flags(&mut opts, Some(method), euler_k, time_assignment);
            estimate(&cohort, &out, &opts)
        }
        Command::Sweep {
            spec,
            out,
            seed,
            k,
            method,
            euler_k,
            time_assignment,
        } => sweep(&spec, &out, seed, k, method, euler_k, time_assignment),
        Command::Ingest {
            log,
            out,
            interval,
            start_count,
            timing,
        } => ingest(&log, &out, interval, start_count, timing),
        Command::Version => {
            println!("stemprolif {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn apply_pipeline_flags(opts: &mut PipelineOptions, method: Option<Method>, euler_k: Option<usize>, assign: Option<Assign>) {
    if let Some(m) = method {
        opts.method = match m {
            Method::Qr => FitMethod::Qr,
            Method::Wls => FitMethod::Wls,
        };
    }
    if let Some(k) = euler_k {
        opts.euler.k = k;
    }
    if let Some(a) = assign {
        opts.time_assignment = match a {
            Assign::Left => TimeAssignment::Left,
            Assign::Mid => TimeAssignment::Mid,
        };
    }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(runtime)?;
    fs::write(path, text + "\n").map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))
}

/// `<dir>/<stem>.<suffix>` next to `path`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map_or_else(|| "out".into(), |s| s.to_string_lossy().into_owned());
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn default_k() -> f64 {
    3.0
}
fn default_decay() -> f64 {
    DEFAULT_DECAY_FRACTION
}
fn default_max_events() -> u64 {
    DEFAULT_MAX_EVENTS
}

/// Simulation configuration document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateConfig {
    s0: u64,
    r: f64,
    coeffs: ProliferationCoeffs,
    #[serde(default = "default_k")]
    k: f64,
    /// Nonviable share.
    #[serde(default)]
    s: f64,
    n_subjects: usize,
    /// Number of equally spaced sampling times; ignored with `schedule`.
    #[serde(default)]
    t_points: Option<usize>,
    /// Explicit sampling times.
    #[serde(default)]
    schedule: Option<Vec<f64>>,
    /// Fixed horizon; chosen by the decay rule when absent.
    #[serde(default)]
    horizon: Option<f64>,
    #[serde(default = "default_decay")]
    decay_fraction: f64,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_max_events")]
    max_events: u64,
}

#[derive(Serialize)]
struct SimulateMetadata<'a> {
    config: &'a SimulateConfig,
    seed: u64,
    horizon: f64,
    horizon_reason: Option<HorizonReason>,
    k_used: f64,
    schedule: &'a [f64],
    truth: Truth,
    rng: &'static str,
    version: &'static str,
}

#[derive(Serialize)]
struct Truth {
    s0: u64,
    r: f64,
    coeffs: ProliferationCoeffs,
    probgen: ProbGenConfig,
}

fn simulate(config: &Path, out: &Path, seed: Option<u64>, k: Option<f64>) -> Result<(), Failure> {
    let mut cfg: SimulateConfig =
        serde_json::from_str(&read_text(config)?).map_err(|e| usage(format!("{}: {e}", config.display())))?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(k) = k {
        cfg.k = k;
    }
    let rate = RateConstant::new(cfg.r).map_err(|e| usage(format!("r: {e}")))?;
    if cfg.n_subjects < 1 {
        return Err(usage("n_subjects: must be at least 1"));
    }
    ProbGenConfig::new(cfg.k, cfg.s).map_err(|e| usage(format!("k/s: {e}")))?;

    let (schedule, horizon, reason, probgen) = match (&cfg.schedule, cfg.t_points, cfg.horizon) {
        (Some(times), _, h) => {
            let schedule = SampleSchedule::new(times.clone()).map_err(|e| usage(format!("schedule: {e}")))?;
            let last = *schedule.times().last().unwrap_or(&0.0);
            let horizon = h.unwrap_or(last);
            if horizon < last {
                return Err(usage("horizon: earlier than the last schedule time"));
            }
            (schedule, horizon, None, ProbGenConfig::new(cfg.k, cfg.s).map_err(usage)?)
        }
        (None, Some(t), Some(h)) => (
            SampleSchedule::equally_spaced(h, t).map_err(|e| usage(format!("t_points/horizon: {e}")))?,
            h,
            None,
            ProbGenConfig::new(cfg.k, cfg.s).map_err(usage)?,
        ),
        (None, Some(t), None) => {
            if !(cfg.decay_fraction > 0.0 && cfg.decay_fraction < 1.0) {
                return Err(usage("decay_fraction: must lie in (0, 1)"));
            }
            let plan = plan_run(&cfg.coeffs, cfg.r, cfg.k, cfg.s, cfg.decay_fraction, DEFAULT_HORIZON_CAP)
                .map_err(|e| usage(format!("coeffs: {e}")))?;
            let h = plan.horizon.horizon;
            (
                SampleSchedule::equally_spaced(h, t).map_err(|e| usage(format!("t_points: {e}")))?,
                h,
                Some(plan.horizon.reason),
                plan.probgen,
            )
        }
        (None, None, _) => return Err(usage("t_points: required unless schedule is given")),
    };

    let sim = SimConfig {
        s0: cfg.s0,
        r: rate,
        coeffs: cfg.coeffs,
        probgen,
        horizon,
        max_events: cfg.max_events,
        seed: cfg.seed,
    };
    sim.validate().map_err(usage)?;
    let cohort = generate_cohort(&sim, &schedule, cfg.n_subjects, cfg.seed).map_err(runtime)?;
    write_counts_to(&cohort, create(out)?).map_err(runtime)?;
    let meta = SimulateMetadata {
        config: &cfg,
        seed: cfg.seed,
        horizon,
        horizon_reason: reason,
        k_used: probgen.k,
        schedule: schedule.times(),
        truth: Truth {
            s0: cfg.s0,
            r: cfg.r,
            coeffs: cfg.coeffs,
            probgen,
        },
        rng: "ChaCha8Rng::seed_from_u64(seed), subject i on stream i",
        version: env!("CARGO_PKG_VERSION"),
    };
    let mut meta_path = out.as_os_str().to_owned();
    meta_path.push(".meta.json");
    write_json(Path::new(&meta_path), &meta)
}

fn estimate(cohort_path: &Path, out: &Path, opts: &PipelineOptions) -> Result<(), Failure> {
    let cohort = read_counts(cohort_path).map_err(|e| usage(format!("{}: {e}", cohort_path.display())))?;
    let report = run_pipeline(&cohort, opts).map_err(runtime)?;
    write_json(out, &report)?;

    let mut w = csv::Writer::from_writer(create(&sibling(out, "trajectory.csv"))?);
    w.write_record(["t", "s_star_hat", "f_hat", "s_star_obs_median", "f_obs_median"])
        .map_err(runtime)?;
    for p in &report.predicted {
        let at: Vec<_> = cohort
            .subjects
            .iter()
            .flat_map(|s| s.observations.iter().filter(|o| o.t == p.t))
            .collect();
        let (s_obs, f_obs) = if at.is_empty() {
            (String::new(), String::new())
        } else {
            let s: Vec<f64> = at.iter().map(|o| o.s_star as f64).collect();
            let f: Vec<f64> = at.iter().map(|o| o.f as f64).collect();
            (median(&s).to_string(), median(&f).to_string())
        };
        w.write_record([p.t.to_string(), p.s_star.to_string(), p.f.to_string(), s_obs, f_obs])
            .map_err(runtime)?;
    }
    w.flush().map_err(runtime)?;
    eprintln!(
        "r_hat = {:.6}, S0_hat = {:.1}, coefficients = ({:.6}, {:.6}, {:.6})",
        report.r_hat, report.s0_hat, report.coeffs_hat.a0, report.coeffs_hat.a1, report.coeffs_hat.a2
    );
    Ok(())
}

fn sweep(
    spec_path: &Path,
    out: &Path,
    seed: Option<u64>,
    k: Option<f64>,
    method: Option<Method>,
    euler_k: Option<usize>,
    assign: Option<Assign>,
) -> Result<(), Failure> {
    let mut spec: SweepSpec =
        serde_json::from_str(&read_text(spec_path)?).map_err(|e| usage(format!("{}: {e}", spec_path.display())))?;
    if let Some(seed) = seed {
        spec.base_seed = seed;
    }
    if let Some(k) = k {
        spec.k = k;
    }
    apply_pipeline_flags(&mut spec.pipeline, method, euler_k, assign);
    spec.validate().map_err(usage)?;
    let outcome = run_sweep(&spec).map_err(runtime)?;
    outcome.write_csv(create(out)?).map_err(runtime)?;
    for row in outcome.rows.iter().filter(|r| r.error.is_some() && r.replicate.is_some()) {
        eprintln!(
            "config {} replicate {}: {}",
            row.config,
            row.replicate.unwrap_or_default(),
            row.error.as_deref().unwrap_or_default()
        );
    }
    if outcome.failures > 0 {
        return Err(runtime(format!("{} replicate(s) failed", outcome.failures)));
    }
    Ok(())
}

fn ingest(log_path: &Path, out: &Path, interval: f64, start: Option<u64>, timing: Timing) -> Result<(), Failure> {
    if !(interval > 0.0 && interval.is_finite()) {
        return Err(usage(format!("interval: must be positive, got {interval}")));
    }
    let log = read_event_log(log_path).map_err(|e| usage(format!("{}: {e}", log_path.display())))?;
    let start = match start {
        Some(s) => s,
        None => starting_cells(&log) as u64,
    };
    if start < 1 {
        return Err(usage("start_count: no generation-1 MEP cells found; pass --start-count"));
    }
    let timing = match timing {
        Timing::Last => EventTiming::LastObserved,
        Timing::Midpoint => EventTiming::WindowMidpoint,
    };
    let series = aggregate_events(&log, start, timing).map_err(runtime)?;
    let cohort = subsample(&series, interval).map_err(usage)?;
    write_counts_to(&cohort, create(out)?).map_err(runtime)?;
    write_series_to(&series, create(&sibling(out, "series.csv"))?).map_err(runtime)?;
    eprintln!(
        "{} starting cells, {} events, {} sampled points",
        start,
        series.len() - 1,
        cohort.subjects.first().map_or(0, |s| s.observations.len())
    );
    Ok(())
}
