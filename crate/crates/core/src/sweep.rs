//! Simulation sweeps: every combination of the listed settings is simulated,
//! estimated and scored, replicate by replicate.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimation::{run_pipeline, PipelineOptions};
use crate::metrics::{median, ratio_metrics};
use crate::model::{ProbGenConfig, ProliferationCoeffs, RateConstant};
use crate::simulator::{
    generate_cohort, plan_run, HorizonChoice, HorizonReason, RunPlan, SampleSchedule, SimConfig,
    DEFAULT_DECAY_FRACTION, DEFAULT_HORIZON_CAP, DEFAULT_MAX_EVENTS,
};

/// Reference proliferation triples used by the default sweep.
pub const REFERENCE_TRIPLES: [ProliferationCoeffs; 3] = [
    ProliferationCoeffs::new(0.8, -0.06, 0.05),
    ProliferationCoeffs::new(1.2, -0.03, 0.005),
    ProliferationCoeffs::new(1.2, -0.11, 0.005),
];

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid sweep spec: {0}")]
    InvalidSpec(String),
    #[error("cannot parse sweep spec: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn default_n() -> Vec<usize> {
    vec![5, 25]
}
fn default_r() -> Vec<f64> {
    vec![0.01, 0.05, 0.1, 0.2]
}
fn default_t() -> Vec<usize> {
    vec![6, 12]
}
fn default_s0() -> Vec<u64> {
    vec![1000]
}
fn default_s() -> Vec<f64> {
    vec![0.01]
}
fn default_coeffs() -> Vec<ProliferationCoeffs> {
    REFERENCE_TRIPLES.to_vec()
}
fn default_k() -> f64 {
    3.0
}
fn default_replicates() -> usize {
    60
}
fn default_decay() -> f64 {
    DEFAULT_DECAY_FRACTION
}
fn default_cap() -> f64 {
    DEFAULT_HORIZON_CAP
}

/// Settings crossed by a sweep. Every field has a default, so `{}` is the
/// full reference grid at one initial size and nonviable share.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default = "default_n")]
    pub n: Vec<usize>,
    #[serde(default = "default_r")]
    pub r: Vec<f64>,
    /// Number of sampling times.
    #[serde(default = "default_t")]
    pub t_points: Vec<usize>,
    #[serde(default = "default_s0")]
    pub s0: Vec<u64>,
    #[serde(default = "default_s")]
    pub s: Vec<f64>,
    #[serde(default = "default_coeffs")]
    pub coeffs: Vec<ProliferationCoeffs>,
    #[serde(default = "default_k")]
    pub k: f64,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_decay")]
    pub decay_fraction: f64,
    #[serde(default = "default_cap")]
    pub horizon_cap: f64,
    /// Fixed horizon for every configuration instead of the decay rule.
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub pipeline: PipelineOptions,
}

impl Default for SweepSpec {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl SweepSpec {
    pub fn from_json(text: &str) -> Result<Self, SweepError> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), SweepError> {
        let bad = |m: String| Err(SweepError::InvalidSpec(m));
        for (name, len) in [
            ("n", self.n.len()),
            ("r", self.r.len()),
            ("t_points", self.t_points.len()),
            ("s0", self.s0.len()),
            ("s", self.s.len()),
            ("coeffs", self.coeffs.len()),
        ] {
            if len == 0 {
                return bad(format!("{name}: list is empty"));
            }
        }
        if self.replicates < 1 {
            return bad("replicates: must be at least 1".into());
        }
        if let Some(n) = self.n.iter().find(|&&n| n < 1) {
            return bad(format!("n: {n} is not a positive sample size"));
        }
        if let Some(t) = self.t_points.iter().find(|&&t| t < 2) {
            return bad(format!("t_points: {t} is fewer than 2 sampling times"));
        }
        if let Some(r) = self.r.iter().find(|&&r| RateConstant::new(r).is_err()) {
            return bad(format!("r: {r} is not a positive rate"));
        }
        if let Some(s0) = self.s0.iter().find(|&&s0| s0 < 1) {
            return bad(format!("s0: {s0} is not a positive count"));
        }
        for &s in &self.s {
            if let Err(e) = ProbGenConfig::new(self.k, s) {
                return bad(format!("k/s: {e}"));
            }
        }
        if !(self.decay_fraction > 0.0 && self.decay_fraction < 1.0) {
            return bad(format!("decay_fraction: {} is outside (0, 1)", self.decay_fraction));
        }
        if !(self.horizon_cap > 0.0) {
            return bad(format!("horizon_cap: {} is not positive", self.horizon_cap));
        }
        if let Some(h) = self.horizon {
            if !(h > 0.0 && h.is_finite()) {
                return bad(format!("horizon: {h} is not a positive time"));
            }
        }
        Ok(())
    }

    /// Configurations in output order: coefficients, then r, T, n, S0, s.
    pub fn configurations(&self) -> Vec<SweepConfig> {
        let mut out = Vec::new();
        for &coeffs in &self.coeffs {
            for &r in &self.r {
                for &t_points in &self.t_points {
                    for &n in &self.n {
                        for &s0 in &self.s0 {
                            for &s in &self.s {
                                out.push(SweepConfig {
                                    index: out.len(),
                                    coeffs,
                                    r,
                                    t_points,
                                    n,
                                    s0,
                                    s,
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Horizon and probability construction for `cfg`.
    pub fn plan(&self, cfg: &SweepConfig) -> Result<RunPlan, String> {
        match self.horizon {
            None => plan_run(&cfg.coeffs, cfg.r, self.k, cfg.s, self.decay_fraction, self.horizon_cap)
                .map_err(|e| e.to_string()),
            Some(h) => Ok(RunPlan {
                horizon: HorizonChoice {
                    horizon: h,
                    reason: HorizonReason::Cap,
                },
                probgen: ProbGenConfig::new(self.k, cfg.s).map_err(|e| e.to_string())?,
                k_requested: self.k,
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub index: usize,
    pub coeffs: ProliferationCoeffs,
    pub r: f64,
    pub t_points: usize,
    pub n: usize,
    pub s0: u64,
    pub s: f64,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Cohort seed for replicate `replicate` of configuration `config`.
pub fn cell_seed(base_seed: u64, config: usize, replicate: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(base_seed) ^ config as u64) ^ replicate as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    Replicate,
    Median,
}

/// One output line: a replicate, or the per-configuration medians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub row: RowKind,
    pub config: usize,
    pub replicate: Option<usize>,
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
    pub r: f64,
    pub t_points: usize,
    pub n: usize,
    pub s0: u64,
    pub s: f64,
    pub k: f64,
    pub horizon: f64,
    pub seed: Option<u64>,
    pub f_hat: f64,
    pub s_hat: f64,
    pub s_hat_viable: f64,
    pub r_hat: f64,
    pub s0_hat: f64,
    /// Replicates that failed (median rows) or 1 for a failed replicate.
    pub failures: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Scores {
    f_hat: f64,
    s_hat: f64,
    s_hat_viable: f64,
    r_hat: f64,
    s0_hat: f64,
}

fn run_replicate(cfg: &SweepConfig, plan: &RunPlan, opts: &PipelineOptions, seed: u64) -> Result<Scores, String> {
    let sim = SimConfig {
        s0: cfg.s0,
        r: RateConstant::new(cfg.r).map_err(|e| e.to_string())?,
        coeffs: cfg.coeffs,
        probgen: plan.probgen,
        horizon: plan.horizon.horizon,
        max_events: DEFAULT_MAX_EVENTS,
        seed,
    };
    let schedule = SampleSchedule::equally_spaced(plan.horizon.horizon, cfg.t_points).map_err(|e| e.to_string())?;
    let cohort = generate_cohort(&sim, &schedule, cfg.n, seed).map_err(|e| e.to_string())?;
    let report = run_pipeline(&cohort, opts).map_err(|e| e.to_string())?;
    let m = ratio_metrics(&cohort, &report.predicted).map_err(|e| e.to_string())?;
    Ok(Scores {
        f_hat: m.f_hat,
        s_hat: m.s_hat,
        s_hat_viable: m.s_hat_viable.unwrap_or(f64::NAN),
        r_hat: report.r_hat,
        s0_hat: report.s0_hat,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    /// Failed replicates over the whole sweep.
    pub failures: usize,
}

impl SweepOutcome {
    pub fn medians(&self) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(|r| r.row == RowKind::Median)
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<(), SweepError> {
        let mut w = csv::Writer::from_writer(writer);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs every configuration and replicate. Output holds, per configuration
/// in order, its replicate rows followed by its median row; failures are
/// recorded on their rows and the sweep carries on.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepOutcome, SweepError> {
    spec.validate()?;
    let configs = spec.configurations();
    let plans: Vec<Result<RunPlan, String>> = configs.iter().map(|c| spec.plan(c)).collect();
    let jobs: Vec<(usize, usize)> = (0..configs.len())
        .flat_map(|c| (0..spec.replicates).map(move |r| (c, r)))
        .collect();
    let results: Vec<Result<Scores, String>> = jobs
        .par_iter()
        .map(|&(c, rep)| {
            let plan = plans[c].as_ref().map_err(Clone::clone)?;
            run_replicate(&configs[c], plan, &spec.pipeline, cell_seed(spec.base_seed, c, rep))
        })
        .collect();

    let mut rows = Vec::with_capacity(jobs.len() + configs.len());
    let mut failures = 0;
    for (c, cfg) in configs.iter().enumerate() {
        let (k, horizon) = match &plans[c] {
            Ok(p) => (p.probgen.k, p.horizon.horizon),
            Err(_) => (spec.k, f64::NAN),
        };
        let base = SweepRow {
            row: RowKind::Replicate,
            config: c,
            replicate: None,
            a0: cfg.coeffs.a0,
            a1: cfg.coeffs.a1,
            a2: cfg.coeffs.a2,
            r: cfg.r,
            t_points: cfg.t_points,
            n: cfg.n,
            s0: cfg.s0,
            s: cfg.s,
            k,
            horizon,
            seed: None,
            f_hat: f64::NAN,
            s_hat: f64::NAN,
            s_hat_viable: f64::NAN,
            r_hat: f64::NAN,
            s0_hat: f64::NAN,
            failures: 0,
            error: None,
        };
        let mut ok: Vec<Scores> = Vec::new();
        let mut first_error = None;
        for rep in 0..spec.replicates {
            let mut row = SweepRow {
                replicate: Some(rep),
                seed: Some(cell_seed(spec.base_seed, c, rep)),
                ..base.clone()
            };
            match &results[c * spec.replicates + rep] {
                Ok(s) => {
                    ok.push(*s);
                    row.f_hat = s.f_hat;
                    row.s_hat = s.s_hat;
                    row.s_hat_viable = s.s_hat_viable;
                    row.r_hat = s.r_hat;
                    row.s0_hat = s.s0_hat;
                }
                Err(e) => {
                    failures += 1;
                    row.failures = 1;
                    row.error = Some(e.clone());
                    first_error.get_or_insert_with(|| e.clone());
                }
            }
            rows.push(row);
        }
        let med = |f: fn(&Scores) -> f64| median(&ok.iter().map(f).collect::<Vec<_>>());
        let viable: Vec<f64> = ok.iter().map(|s| s.s_hat_viable).filter(|v| !v.is_nan()).collect();
        rows.push(SweepRow {
            row: RowKind::Median,
            f_hat: med(|s| s.f_hat),
            s_hat: med(|s| s.s_hat),
            s_hat_viable: median(&viable),
            r_hat: med(|s| s.r_hat),
            s0_hat: med(|s| s.s0_hat),
            failures: spec.replicates - ok.len(),
            error: first_error,
            ..base
        });
    }
    Ok(SweepOutcome { rows, failures })
}
