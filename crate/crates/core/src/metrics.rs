//! Median ratio metrics comparing observed and predicted counts.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simulator::Cohort;
use crate::trajectory::TrajectoryPoint;

/// Added to numerator and denominator so zero counts give finite ratios.
pub const RATIO_OFFSET: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("no prediction for subject {subject} at t = {t}")]
    MissingPrediction { subject: String, t: f64 },
    #[error("cohort has no observations")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CountKind {
    F,
    S,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRatio {
    pub subject: String,
    pub t: f64,
    pub kind: CountKind,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioSummary {
    pub f_hat: f64,
    pub s_hat: f64,
    /// Viable stem count against `Ŝ*`, when the cohort carries hidden truth.
    pub s_hat_viable: Option<f64>,
    pub per_point_ratios: Vec<PointRatio>,
}

/// Median with the mean of the two central values for even lengths. NaN for
/// an empty slice.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

pub fn offset_ratio(observed: f64, predicted: f64) -> f64 {
    (RATIO_OFFSET + observed) / (RATIO_OFFSET + predicted)
}

/// Per subject-time ratios `(0.5 + observed) / (0.5 + predicted)` for `F` and
/// `S*`, and their medians over every subject and time. Predictions are
/// shared by all subjects and looked up by exact time.
pub fn ratio_metrics(cohort: &Cohort, predictions: &[TrajectoryPoint]) -> Result<RatioSummary, MetricsError> {
    let lookup = |subject: &str, t: f64| {
        predictions
            .iter()
            .find(|p| p.t == t)
            .ok_or_else(|| MetricsError::MissingPrediction { subject: subject.to_string(), t })
    };
    let mut per_point = Vec::new();
    let mut f_ratios = Vec::new();
    let mut s_ratios = Vec::new();
    let mut viable = Vec::new();
    let mut all_truth = true;
    for subject in &cohort.subjects {
        match &subject.truth {
            Some(truth) if truth.len() == subject.observations.len() => {}
            _ => all_truth = false,
        }
        for (i, obs) in subject.observations.iter().enumerate() {
            let pred = lookup(&subject.id, obs.t)?;
            let f = offset_ratio(obs.f as f64, pred.f);
            let s = offset_ratio(obs.s_star as f64, pred.s_star);
            f_ratios.push(f);
            s_ratios.push(s);
            if let Some(h) = subject.truth.as_ref().and_then(|tr| tr.get(i)) {
                viable.push(offset_ratio(h.s as f64, pred.s_star));
            }
            per_point.push(PointRatio { subject: subject.id.clone(), t: obs.t, kind: CountKind::F, ratio: f });
            per_point.push(PointRatio { subject: subject.id.clone(), t: obs.t, kind: CountKind::S, ratio: s });
        }
    }
    if f_ratios.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(RatioSummary {
        f_hat: median(&f_ratios),
        s_hat: median(&s_ratios),
        s_hat_viable: (all_truth && !viable.is_empty()).then(|| median(&viable)),
        per_point_ratios: per_point,
    })
}
