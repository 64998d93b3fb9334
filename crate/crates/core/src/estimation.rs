//! Estimation of the division rate, the initial stem population and the
//! proliferation coefficients from a cohort of sparse count series.
//!
//! The pipeline works on finite differences between consecutive samples of
//! each subject:
//!
//! 1. `y_i = Δn / Δt` is regressed on the stem count; the slope is `r̂`.
//! 2. `Δn / ΔF` estimates `1 / q(t_i)`, so `z_i = 1 / (2 - q_obs)` is a
//!    quadratic in `t` whose coefficients are `(a0, a1, a2)`.
//! 3. The total count is stepped backwards with Euler's method from the first
//!    sample to `t = 0`, where every cell is a viable stem cell, giving `Ŝ(0)`.
//! 4. Trajectories follow from the fitted triple through the closed forms in
//!    [`crate::trajectory`].

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelError, ProliferationCoeffs};
use crate::regression::{
    median_fit, ols_fit, wls_fit, FitMethod, Matrix, RegressionError, RegressionProblem,
};
use crate::simulator::Cohort;
use crate::trajectory::{net_growth_integral, trajectory, TrajectoryPoint};

/// Default clipping margin below 2 applied to observed `q` before the
/// reciprocal transform.
pub const DEFAULT_EPS_CLIP: f64 = 1e-3;
/// Default number of backward-Euler grid points.
pub const DEFAULT_EULER_K: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimationError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("degenerate rate design: stem counts are constant across observations")]
    DegenerateDesign,
    #[error("every q observation was dropped ({0} candidates)")]
    AllDropped(usize),
    #[error("need at least 3 usable q points at 3 distinct times, got {points} points at {times} times")]
    InsufficientPoints { points: usize, times: usize },
    #[error("fitted P(t) = {p} is not positive at t = {t}")]
    DegenerateFit { t: f64, p: f64 },
    #[error("invalid option: {0}")]
    InvalidOption(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Regression(#[from] RegressionError),
}

/// Pipeline stage, used to tag errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    FiniteDifferences,
    EstimateRate,
    ObservedQ,
    FitCoefficients,
    EstimateS0,
    Predict,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::FiniteDifferences => "finite_differences",
            Stage::EstimateRate => "estimate_rate",
            Stage::ObservedQ => "observed_q",
            Stage::FitCoefficients => "fit_prolif_coeffs",
            Stage::EstimateS0 => "estimate_s0",
            Stage::Predict => "predict",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{stage}: {source}")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub source: EstimationError,
}

trait StageExt<T> {
    fn stage(self, stage: Stage) -> Result<T, PipelineError>;
}

impl<T, E: Into<EstimationError>> StageExt<T> for Result<T, E> {
    fn stage(self, stage: Stage) -> Result<T, PipelineError> {
        self.map_err(|e| PipelineError {
            stage,
            source: e.into(),
        })
    }
}

/// Time (and stem regressor) attached to each difference observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeAssignment {
    /// Left endpoint `t_i` and `S*(t_i)`.
    Left,
    /// Interval midpoint and the mean of the endpoint stem counts.
    #[default]
    Mid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Median,
    Mean,
}

/// Stand-in for the unobserved stem count on `[0, first sample]` during the
/// backward-Euler reconstruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HiddenStem {
    /// `S*(τ) ≈ n̂(τ)`.
    TotalCount,
    /// `S*(τ)` held at the aggregated stem count of the first sample.
    FirstObserved,
    /// `S*(τ)` propagated back from the first sample along the fitted
    /// proliferation function: `S*(t1) exp(r̂ ∫_{t1}^{τ} (1 - q̂))`.
    #[default]
    FittedShape,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EulerConfig {
    /// Grid points on `[0, first sample time]`.
    pub k: usize,
    pub aggregation: Aggregation,
    pub hidden_stem: HiddenStem,
}

impl Default for EulerConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_EULER_K,
            aggregation: Aggregation::Median,
            hidden_stem: HiddenStem::default(),
        }
    }
}

/// How the q-curve fit weights points under WLS.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WlsWeighting {
    /// Each point weighs the number of pooled points sharing its time.
    #[default]
    PointsPerTime,
    Unit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineOptions {
    pub method: FitMethod,
    pub euler: EulerConfig,
    pub time_assignment: TimeAssignment,
    pub eps_clip: f64,
    pub wls_weighting: WlsWeighting,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            method: FitMethod::Qr,
            euler: EulerConfig::default(),
            time_assignment: TimeAssignment::default(),
            eps_clip: DEFAULT_EPS_CLIP,
            wls_weighting: WlsWeighting::default(),
        }
    }
}

/// Increment between two consecutive samples of one subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifferenceObservation {
    pub subject: String,
    pub t_i: f64,
    pub t_next: f64,
    /// `Δn / Δt`, cells per hour.
    pub y_i: f64,
    pub s_star_i: u64,
    pub s_star_next: u64,
    pub d_f: f64,
    pub d_n: f64,
}

impl DifferenceObservation {
    pub fn time(&self, assign: TimeAssignment) -> f64 {
        match assign {
            TimeAssignment::Left => self.t_i,
            TimeAssignment::Mid => 0.5 * (self.t_i + self.t_next),
        }
    }

    pub fn stem_regressor(&self, assign: TimeAssignment) -> f64 {
        match assign {
            TimeAssignment::Left => self.s_star_i as f64,
            TimeAssignment::Mid => 0.5 * (self.s_star_i as f64 + self.s_star_next as f64),
        }
    }
}

/// Pools consecutive-sample differences over all subjects. Observations are
/// ordered by time within each subject first.
pub fn finite_differences(cohort: &Cohort) -> Result<Vec<DifferenceObservation>, EstimationError> {
    let mut out = Vec::new();
    for subject in &cohort.subjects {
        let mut obs = subject.observations.clone();
        obs.sort_by(|a, b| a.t.total_cmp(&b.t));
        for w in obs.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b.t <= a.t {
                continue;
            }
            let d_n = b.total() as f64 - a.total() as f64;
            out.push(DifferenceObservation {
                subject: subject.id.clone(),
                t_i: a.t,
                t_next: b.t,
                y_i: d_n / (b.t - a.t),
                s_star_i: a.s_star,
                s_star_next: b.s_star,
                d_f: b.f as f64 - a.f as f64,
                d_n,
            });
        }
    }
    if out.is_empty() {
        return Err(EstimationError::InsufficientData(
            "no subject has two or more time points".into(),
        ));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub intercept: f64,
    pub slope: f64,
}

/// OLS of `y_i` on an intercept and the stem count; returns the full line,
/// whose slope is `r̂`.
pub fn fit_rate(diffs: &[DifferenceObservation], assign: TimeAssignment) -> Result<RateFit, EstimationError> {
    let x: Vec<f64> = diffs.iter().map(|d| d.stem_regressor(assign)).collect();
    let first = x.first().copied().unwrap_or(0.0);
    if x.iter().all(|&v| v == first) {
        return Err(EstimationError::DegenerateDesign);
    }
    let y: Vec<f64> = diffs.iter().map(|d| d.y_i).collect();
    let problem = RegressionProblem::new(Matrix::polynomial(&x, 1), y, None)?;
    let fit = ols_fit(&problem)?;
    Ok(RateFit {
        intercept: fit.coefficients[0],
        slope: fit.coefficients[1],
    })
}

/// `r̂`, the slope of [`fit_rate`].
pub fn estimate_rate(diffs: &[DifferenceObservation], assign: TimeAssignment) -> Result<f64, EstimationError> {
    Ok(fit_rate(diffs, assign)?.slope)
}

fn aggregate(values: &[f64], how: Aggregation) -> f64 {
    match how {
        Aggregation::Mean => values.iter().sum::<f64>() / values.len() as f64,
        Aggregation::Median => crate::metrics::median(values),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct S0Estimate {
    pub value: f64,
    /// Value before clamping at zero.
    pub raw: f64,
    pub clamped: bool,
    pub first_time: f64,
    pub n_first: f64,
    pub s_star_first: f64,
}

/// Backward-Euler reconstruction of `S(0)` from the earliest sample:
/// `n̂(τ_{k-1}) = n̂(τ_k) - r̂ S*(τ_k) dτ` on `K` points spanning
/// `[0, t_first]`, with `S*` on that hidden interval supplied by
/// `cfg.hidden_stem`. `fitted` is required for [`HiddenStem::FittedShape`].
pub fn estimate_s0(
    r_hat: f64,
    cohort: &Cohort,
    cfg: &EulerConfig,
    fitted: Option<&ProliferationCoeffs>,
) -> Result<S0Estimate, EstimationError> {
    if !r_hat.is_finite() {
        return Err(EstimationError::InvalidOption(format!("r_hat is not finite ({r_hat})")));
    }
    if cfg.k < 2 {
        return Err(EstimationError::InvalidOption(format!("Euler K must be >= 2, got {}", cfg.k)));
    }
    let first_time = cohort
        .subjects
        .iter()
        .flat_map(|s| s.observations.iter().map(|o| o.t))
        .fold(f64::INFINITY, f64::min);
    if !first_time.is_finite() {
        return Err(EstimationError::InsufficientData("cohort has no observations".into()));
    }
    if !(first_time > 0.0) {
        return Err(EstimationError::InsufficientData(format!(
            "first sample time must be positive, got {first_time}"
        )));
    }
    let (totals, stems): (Vec<f64>, Vec<f64>) = cohort
        .subjects
        .iter()
        .filter_map(|s| s.observations.iter().find(|o| o.t == first_time))
        .map(|o| (o.total() as f64, o.s_star as f64))
        .unzip();
    let n_first = aggregate(&totals, cfg.aggregation);
    let s_star_first = aggregate(&stems, cfg.aggregation);

    let dtau = first_time / (cfg.k - 1) as f64;
    let shape = match cfg.hidden_stem {
        HiddenStem::FittedShape => {
            let c = fitted.ok_or_else(|| {
                EstimationError::InvalidOption("fitted coefficients required for the fitted-shape stand-in".into())
            })?;
            Some((c, net_growth_integral(c, first_time)?))
        }
        _ => None,
    };
    let mut n = n_first;
    for k in (1..cfg.k).rev() {
        let tau = k as f64 * dtau;
        let stem = match (cfg.hidden_stem, shape) {
            (HiddenStem::TotalCount, _) => n,
            (HiddenStem::FirstObserved, _) => s_star_first,
            (HiddenStem::FittedShape, Some((c, g_first))) => {
                s_star_first * (r_hat * (net_growth_integral(c, tau)? - g_first)).exp()
            }
            (HiddenStem::FittedShape, None) => unreachable!("checked above"),
        };
        n -= r_hat * stem * dtau;
    }
    Ok(S0Estimate {
        value: n.max(0.0),
        raw: n,
        clamped: n < 0.0,
        first_time,
        n_first,
        s_star_first,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QPoint {
    pub subject: String,
    pub t: f64,
    pub q_obs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    NoIncrease,
    NegativeDifferentiated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedPoint {
    pub subject: String,
    pub t: f64,
    pub d_n: f64,
    pub d_f: f64,
    pub reason: DropReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedQ {
    pub points: Vec<QPoint>,
    pub dropped: Vec<DroppedPoint>,
}

/// `q_obs = ΔF / Δn` per difference; `Δn <= 0` or `ΔF < 0` are dropped and
/// logged.
pub fn observed_q(diffs: &[DifferenceObservation], assign: TimeAssignment) -> Result<ObservedQ, EstimationError> {
    let mut out = ObservedQ {
        points: Vec::new(),
        dropped: Vec::new(),
    };
    for d in diffs {
        let t = d.time(assign);
        let reason = if d.d_n <= 0.0 {
            Some(DropReason::NoIncrease)
        } else if d.d_f < 0.0 {
            Some(DropReason::NegativeDifferentiated)
        } else {
            None
        };
        match reason {
            Some(reason) => out.dropped.push(DroppedPoint {
                subject: d.subject.clone(),
                t,
                d_n: d.d_n,
                d_f: d.d_f,
                reason,
            }),
            None => out.points.push(QPoint {
                subject: d.subject.clone(),
                t,
                q_obs: d.d_f / d.d_n,
            }),
        }
    }
    if out.points.is_empty() {
        return Err(EstimationError::AllDropped(diffs.len()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipRecord {
    pub subject: String,
    pub t: f64,
    pub q_obs: f64,
    pub clipped_to: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoeffFit {
    pub coeffs: ProliferationCoeffs,
    pub method: FitMethod,
    pub objective: f64,
    pub clipped: Vec<ClipRecord>,
}

/// Fits `z = 1 / (2 - q_obs)` on `(1, t, t^2)` by median regression (`Qr`)
/// or weighted least squares (`Wls`), after clipping `q_obs` into
/// `[0, 2 - eps_clip]`. Fails if the fitted `P` is not positive on
/// `[0, max t]`.
pub fn fit_prolif_coeffs(
    points: &[QPoint],
    method: FitMethod,
    eps_clip: f64,
    weighting: WlsWeighting,
) -> Result<CoeffFit, EstimationError> {
    if !(eps_clip > 0.0 && eps_clip < 2.0) {
        return Err(EstimationError::InvalidOption(format!("eps_clip must lie in (0, 2), got {eps_clip}")));
    }
    let hi = 2.0 - eps_clip;
    let mut clipped = Vec::new();
    let mut ts = Vec::with_capacity(points.len());
    let mut zs = Vec::with_capacity(points.len());
    let mut usable = 0;
    for p in points {
        let q = p.q_obs.clamp(0.0, hi);
        if q != p.q_obs {
            clipped.push(ClipRecord {
                subject: p.subject.clone(),
                t: p.t,
                q_obs: p.q_obs,
                clipped_to: q,
            });
        }
        if p.q_obs < hi {
            usable += 1;
        }
        ts.push(p.t);
        zs.push(1.0 / (2.0 - q));
    }
    let mut distinct = ts.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if usable < 3 || distinct.len() < 3 {
        return Err(EstimationError::InsufficientPoints {
            points: usable,
            times: distinct.len(),
        });
    }

    let design = Matrix::polynomial(&ts, 2);
    let fit = match method {
        FitMethod::Qr => median_fit(&RegressionProblem::new(design, zs, None)?)?,
        FitMethod::Wls => {
            let weights = match weighting {
                WlsWeighting::Unit => vec![1.0; ts.len()],
                WlsWeighting::PointsPerTime => ts
                    .iter()
                    .map(|t| ts.iter().filter(|u| *u == t).count() as f64)
                    .collect(),
            };
            wls_fit(&RegressionProblem::new(design, zs, Some(weights))?)?
        }
        FitMethod::Ols => ols_fit(&RegressionProblem::new(design, zs, None)?)?,
    };
    let coeffs = ProliferationCoeffs::new(fit.coefficients[0], fit.coefficients[1], fit.coefficients[2]);
    let t_max = distinct.last().copied().unwrap_or(0.0);
    let (p_min, at) = coeffs.min_p_on(0.0, t_max);
    if !(p_min > 0.0) {
        return Err(EstimationError::DegenerateFit { t: at, p: p_min });
    }
    Ok(CoeffFit {
        coeffs,
        method,
        objective: fit.objective,
        clipped,
    })
}

/// Predicted `(t, Ŝ*, F̂)` on `grid` for a fitted triple.
pub fn predict(
    r_hat: f64,
    s0_hat: f64,
    coeffs: &ProliferationCoeffs,
    grid: &[f64],
) -> Result<Vec<TrajectoryPoint>, EstimationError> {
    Ok(trajectory(coeffs, r_hat, s0_hat, grid)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub n_differences: usize,
    pub rate_fit: RateFit,
    pub s0: S0Estimate,
    pub dropped: Vec<DroppedPoint>,
    pub clipped: Vec<ClipRecord>,
    pub q_fit_objective: f64,
    /// Times where the fitted `q` leaves `[0, 2]`.
    pub q_range_warnings: Vec<f64>,
    pub notes: Vec<String>,
}

/// Everything the pipeline produced for one cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub r_hat: f64,
    pub s0_hat: f64,
    pub coeffs_hat: ProliferationCoeffs,
    pub method: FitMethod,
    pub options: PipelineOptions,
    pub q_points: Vec<QPoint>,
    pub predicted: Vec<TrajectoryPoint>,
    pub diagnostics: Diagnostics,
}

impl EstimateReport {
    pub fn predict(&self, grid: &[f64]) -> Result<Vec<TrajectoryPoint>, EstimationError> {
        predict(self.r_hat, self.s0_hat, &self.coeffs_hat, grid)
    }
}

/// Full estimation: differences, rate, observed `q`, coefficient fit,
/// initial population, then predictions at every sample time.
pub fn run_pipeline(cohort: &Cohort, opts: &PipelineOptions) -> Result<EstimateReport, PipelineError> {
    let diffs = finite_differences(cohort).stage(Stage::FiniteDifferences)?;
    let rate_fit = fit_rate(&diffs, opts.time_assignment).stage(Stage::EstimateRate)?;
    let r_hat = rate_fit.slope;
    let q = observed_q(&diffs, opts.time_assignment).stage(Stage::ObservedQ)?;
    let coeff_fit =
        fit_prolif_coeffs(&q.points, opts.method, opts.eps_clip, opts.wls_weighting).stage(Stage::FitCoefficients)?;
    let s0 = estimate_s0(r_hat, cohort, &opts.euler, Some(&coeff_fit.coeffs)).stage(Stage::EstimateS0)?;

    let mut notes = Vec::new();
    match opts.euler.hidden_stem {
        HiddenStem::TotalCount => notes.push(
            "hidden-interval stem count approximated by the reconstructed total count".to_string(),
        ),
        HiddenStem::FirstObserved => {
            notes.push("hidden-interval stem count held at the first observed value".to_string())
        }
        HiddenStem::FittedShape => notes.push(
            "hidden-interval stem count propagated back along the fitted proliferation function".to_string(),
        ),
    }
    if s0.clamped {
        notes.push(format!("backward Euler went negative ({}); clamped to 0", s0.raw));
    }
    if r_hat <= 0.0 {
        notes.push(format!("non-positive rate estimate {r_hat}"));
    }

    let mut grid = vec![0.0];
    grid.extend(cohort.times());
    let predicted = predict(r_hat, s0.value, &coeff_fit.coeffs, &grid).stage(Stage::Predict)?;
    let q_range_warnings = grid
        .iter()
        .copied()
        .filter(|&t| coeff_fit.coeffs.eval_q(t).map(|v| v.range_warning).unwrap_or(true))
        .collect();

    Ok(EstimateReport {
        r_hat,
        s0_hat: s0.value,
        coeffs_hat: coeff_fit.coeffs,
        method: opts.method,
        options: *opts,
        q_points: q.points,
        predicted,
        diagnostics: Diagnostics {
            n_differences: diffs.len(),
            rate_fit,
            s0,
            dropped: q.dropped,
            clipped: coeff_fit.clipped,
            q_fit_objective: coeff_fit.objective,
            q_range_warnings,
            notes,
        },
    })
}
