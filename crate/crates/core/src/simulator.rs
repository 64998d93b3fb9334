//! Event-driven stochastic simulation of the division process and
//! generation of sampled cohorts.
//!
//! Every viable stem cell divides at rate `r`, so the waiting time to the next
//! division is exponential with rate `r S(t)`. Between divisions `S` is
//! constant, which makes the waiting-time law exact; the kind of division is
//! drawn from the division probabilities evaluated at the event time.
//!
//! # Random streams
//!
//! All randomness comes from `ChaCha8Rng`. A run seeded with `seed` uses
//! `ChaCha8Rng::seed_from_u64(seed)` on stream 0; subject `i` of a cohort
//! generated from `base_seed` uses the same key on stream `i`. Each event
//! consumes two `f64` draws (waiting time, then kind). Results are therefore
//! bit-identical across platforms and independent of thread scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    division_probs_at, DivisionKind, ModelError, PopulationState, ProbGenConfig,
    ProliferationCoeffs, RateConstant,
};
use crate::trajectory::stem_trajectory;

pub const DEFAULT_MAX_EVENTS: u64 = 5_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("invalid sample schedule: {0}")]
    InvalidSchedule(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub s0: u64,
    pub r: RateConstant,
    pub coeffs: ProliferationCoeffs,
    pub probgen: ProbGenConfig,
    pub horizon: f64,
    pub max_events: u64,
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.s0 == 0 {
            return Err(SimError::InvalidConfig("s0 must be at least 1".into()));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(SimError::InvalidConfig(format!(
                "horizon must be positive and finite, got {}",
                self.horizon
            )));
        }
        self.probgen.validate()?;
        let (q_lo, q_hi) = self.coeffs.q_range_on(0.0, self.horizon)?;
        let q_min = self.probgen.min_valid_q();
        if q_lo < q_min - 1e-12 || q_hi > 2.0 + 1e-12 {
            return Err(SimError::InvalidConfig(format!(
                "q(t) spans [{q_lo}, {q_hi}] on [0, {}], outside the valid range [{q_min}, 2] for k = {}",
                self.horizon, self.probgen.k
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub t: f64,
    pub kind: DivisionKind,
    pub state_after: PopulationState,
}

/// A realised run: the starting state and every division in time order.
#[derive(Debug, Clone, PartialEq)]
pub struct SimRun {
    pub initial: PopulationState,
    pub events: Vec<EventRecord>,
    /// Set when the run stopped on `max_events` rather than extinction or
    /// the horizon.
    pub truncated: bool,
}

impl SimRun {
    pub fn final_state(&self) -> PopulationState {
        self.events.last().map_or(self.initial, |e| e.state_after)
    }
}

/// Stream `stream` of the generator keyed by `seed`.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Core event loop. Calls `on_event` for every division and returns the
/// final state plus whether the event cap was hit.
fn drive(
    cfg: &SimConfig,
    rng: &mut ChaCha8Rng,
    mut on_event: impl FnMut(&EventRecord),
) -> Result<(PopulationState, bool), SimError> {
    let r = cfg.r.get();
    let mut state = PopulationState::initial(cfg.s0);
    let mut t = 0.0;
    let mut events = 0u64;
    while state.s > 0 {
        if events >= cfg.max_events {
            return Ok((state, true));
        }
        let u: f64 = rng.random();
        let wait = -(1.0 - u).ln() / (r * state.s as f64);
        t += wait;
        if t >= cfg.horizon {
            break;
        }
        let q = cfg.coeffs.eval_q(t)?.value;
        let probs = division_probs_at(q, &cfg.probgen, t)?;
        let kind = probs.pick(rng.random());
        state = state.apply_division(kind)?.at(t);
        events += 1;
        on_event(&EventRecord {
            t,
            kind,
            state_after: state,
        });
    }
    Ok((state, false))
}

/// Simulates one realisation on stream 0 of `cfg.seed`.
pub fn gillespie_run(cfg: &SimConfig) -> Result<SimRun, SimError> {
    cfg.validate()?;
    let mut rng = rng_for(cfg.seed, 0);
    let mut events = Vec::new();
    let (_, truncated) = drive(cfg, &mut rng, |e| events.push(*e))?;
    Ok(SimRun {
        initial: PopulationState::initial(cfg.s0),
        events,
        truncated,
    })
}

/// Strictly increasing, positive sampling times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SampleSchedule {
    times: Vec<f64>,
}

impl SampleSchedule {
    pub fn new(times: Vec<f64>) -> Result<Self, SimError> {
        if times.len() < 2 {
            return Err(SimError::InvalidSchedule(format!(
                "need at least 2 times, got {}",
                times.len()
            )));
        }
        if !(times[0] > 0.0) {
            return Err(SimError::InvalidSchedule("first time must be positive".into()));
        }
        if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SimError::InvalidSchedule("times must be finite and strictly increasing".into()));
        }
        Ok(Self { times })
    }

    /// `count` equally spaced times `horizon * i / count`, `i = 1..=count`.
    pub fn equally_spaced(horizon: f64, count: usize) -> Result<Self, SimError> {
        Self::new((1..=count).map(|i| horizon * i as f64 / count as f64).collect())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

impl TryFrom<Vec<f64>> for SampleSchedule {
    type Error = SimError;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<SampleSchedule> for Vec<f64> {
    fn from(s: SampleSchedule) -> Self {
        s.times
    }
}

/// Observable counts of one subject at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub t: f64,
    pub s_star: u64,
    pub f: u64,
}

impl Observation {
    pub fn total(&self) -> u64 {
        self.s_star + self.f
    }
}

/// Hidden split of the observed stem count, kept from simulations only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HiddenTruth {
    pub s: u64,
    pub d: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    pub id: String,
    pub observations: Vec<Observation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<Vec<HiddenTruth>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Cohort {
    pub subjects: Vec<Subject>,
}

impl Cohort {
    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    /// Sorted union of all observation times.
    pub fn times(&self) -> Vec<f64> {
        let mut ts: Vec<f64> = self
            .subjects
            .iter()
            .flat_map(|s| s.observations.iter().map(|o| o.t))
            .collect();
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        ts
    }
}

fn subject_from_states(id: String, states: &[(f64, PopulationState)]) -> Subject {
    Subject {
        id,
        observations: states
            .iter()
            .map(|(t, st)| Observation {
                t: *t,
                s_star: st.s_star(),
                f: st.f,
            })
            .collect(),
        truth: Some(states.iter().map(|(_, st)| HiddenTruth { s: st.s, d: st.d }).collect()),
    }
}

/// State at each schedule time, taken from the last event at or before it.
pub fn sample_at_times(run: &SimRun, schedule: &SampleSchedule, id: impl Into<String>) -> Subject {
    let mut states = Vec::with_capacity(schedule.len());
    let mut current = run.initial;
    let mut next_event = run.events.iter().peekable();
    for &t in schedule.times() {
        while let Some(e) = next_event.next_if(|e| e.t <= t) {
            current = e.state_after;
        }
        states.push((t, current));
    }
    subject_from_states(id.into(), &states)
}

/// Runs `cfg` on `rng` and samples on the fly without storing events.
fn run_sampled(
    cfg: &SimConfig,
    rng: &mut ChaCha8Rng,
    schedule: &SampleSchedule,
    id: String,
) -> Result<Subject, SimError> {
    let times = schedule.times();
    let mut states = Vec::with_capacity(times.len());
    let mut current = PopulationState::initial(cfg.s0);
    drive(cfg, rng, |e| {
        while states.len() < times.len() && times[states.len()] < e.t {
            states.push((times[states.len()], current));
        }
        current = e.state_after;
    })?;
    while states.len() < times.len() {
        states.push((times[states.len()], current));
    }
    Ok(subject_from_states(id, &states))
}

/// `n_subjects` independent realisations of `cfg` (its `seed` is ignored in
/// favour of `base_seed`), sampled on `schedule`. Subject `i` uses stream
/// `i` of `base_seed`.
pub fn generate_cohort(
    cfg: &SimConfig,
    schedule: &SampleSchedule,
    n_subjects: usize,
    base_seed: u64,
) -> Result<Cohort, SimError> {
    if n_subjects == 0 {
        return Err(SimError::InvalidConfig("n_subjects must be at least 1".into()));
    }
    cfg.validate()?;
    let subjects = (0..n_subjects)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(base_seed, i as u64);
            run_sampled(cfg, &mut rng, schedule, format!("subject_{}", i + 1))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Cohort { subjects })
}

/// Noise-free cohort: `n_subjects` copies of the deterministic trajectory,
/// rounded to whole cells on `schedule`.
pub fn expected_cohort(
    coeffs: &ProliferationCoeffs,
    r: f64,
    s0: f64,
    schedule: &SampleSchedule,
    n_subjects: usize,
) -> Result<Cohort, SimError> {
    let points = crate::trajectory::trajectory(coeffs, r, s0, schedule.times())?;
    let observations: Vec<Observation> = points
        .iter()
        .map(|p| Observation {
            t: p.t,
            s_star: p.s_star.round().max(0.0) as u64,
            f: p.f.round().max(0.0) as u64,
        })
        .collect();
    Ok(Cohort {
        subjects: (0..n_subjects)
            .map(|i| Subject {
                id: format!("subject_{}", i + 1),
                observations: observations.clone(),
                truth: None,
            })
            .collect(),
    })
}

/// Why a horizon was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HorizonReason {
    /// Deterministic `S*` fell to the requested fraction of its running peak.
    Decay,
    /// The probability construction becomes invalid beyond this time.
    ValidityLimit,
    /// Neither happened before the cap.
    Cap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonChoice {
    pub horizon: f64,
    pub reason: HorizonReason,
}

/// Decay fraction used to place sampling horizons unless overridden.
pub const DEFAULT_DECAY_FRACTION: f64 = 0.25;
/// Longest horizon considered, in hours.
pub const DEFAULT_HORIZON_CAP: f64 = 2000.0;

/// Horizon and probability construction for one simulated configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunPlan {
    pub horizon: HorizonChoice,
    pub probgen: ProbGenConfig,
    /// Shape parameter asked for; `probgen.k` is lower when that was invalid.
    pub k_requested: f64,
}

/// Chooses the horizon with the most permissive shape (`k = 2`), then the
/// largest `k <= k_requested` whose construction stays valid for every `q`
/// on `[0, horizon]`.
pub fn plan_run(
    coeffs: &ProliferationCoeffs,
    r: f64,
    k_requested: f64,
    s: f64,
    decay_fraction: f64,
    cap: f64,
) -> Result<RunPlan, SimError> {
    ProbGenConfig::new(k_requested, s)?;
    let horizon = choose_horizon(coeffs, r, &ProbGenConfig::new(2.0, s)?, decay_fraction, cap)?;
    let (q_min, _) = coeffs.q_range_on(0.0, horizon.horizon)?;
    let k = if q_min >= 1.0 {
        k_requested
    } else {
        k_requested.min((2.0 - q_min) / (1.0 - q_min)).max(2.0)
    };
    Ok(RunPlan {
        horizon,
        probgen: ProbGenConfig::new(k, s)?,
        k_requested,
    })
}

/// Scan step for [`choose_horizon`].
const HORIZON_STEP: f64 = 0.01;

/// Earliest time at which the deterministic `S*` has fallen to
/// `decay_fraction` of its running peak. Stops early where `q` leaves the
/// valid range for `probgen` (or `P` vanishes), and at `cap`.
pub fn choose_horizon(
    coeffs: &ProliferationCoeffs,
    r: f64,
    probgen: &ProbGenConfig,
    decay_fraction: f64,
    cap: f64,
) -> Result<HorizonChoice, SimError> {
    let q_min = probgen.min_valid_q();
    let valid = |t: f64| {
        let p = coeffs.eval_p(t);
        p > 0.0 && {
            let q = 2.0 - 1.0 / p;
            q >= q_min - 1e-12 && q <= 2.0
        }
    };
    if !valid(0.0) {
        return Err(SimError::InvalidConfig(format!(
            "q(0) is outside the valid range [{q_min}, 2]"
        )));
    }
    let step = HORIZON_STEP / r.max(1e-12);
    let step = step.min(0.1);
    let mut peak = 1.0;
    let mut t_prev = 0.0;
    let mut i = 1u64;
    loop {
        let t = (i as f64 * step).min(cap);
        if !valid(t) {
            // last valid instant, by bisection
            let (mut a, mut b) = (t_prev, t);
            for _ in 0..100 {
                let m = 0.5 * (a + b);
                if valid(m) {
                    a = m;
                } else {
                    b = m;
                }
            }
            return Ok(HorizonChoice {
                horizon: a,
                reason: HorizonReason::ValidityLimit,
            });
        }
        let s = stem_trajectory(coeffs, r, 1.0, t)?;
        peak = f64::max(peak, s);
        if s <= decay_fraction * peak {
            return Ok(HorizonChoice {
                horizon: t,
                reason: HorizonReason::Decay,
            });
        }
        if t >= cap {
            return Ok(HorizonChoice {
                horizon: cap,
                reason: HorizonReason::Cap,
            });
        }
        t_prev = t;
        i += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(coeffs: ProliferationCoeffs, k: f64, s: f64) -> SimConfig {
        SimConfig {
            s0: 10,
            r: RateConstant::new(0.1).unwrap(),
            coeffs,
            probgen: ProbGenConfig::new(k, s).unwrap(),
            horizon: 50.0,
            max_events: DEFAULT_MAX_EVENTS,
            seed: 7,
        }
    }

    #[test]
    fn q_zero_never_differentiates() {
        let mut cfg = config(ProliferationCoeffs::new(0.5, 0.0, 0.0), 2.0, 0.2);
        cfg.max_events = 20_000;
        let run = gillespie_run(&cfg).unwrap();
        let end = run.final_state();
        assert_eq!(end.f, 0);
        assert!(end.d > 0);
        assert!(run.events.iter().all(|e| matches!(
            e.kind,
            DivisionKind::SymmetricRenewal | DivisionKind::ViableNonviablePair
        )));
    }

    #[test]
    fn q_two_is_absorbing_differentiation() {
        let coeffs = ProliferationCoeffs::new(1e300, 0.0, 0.0);
        let mut cfg = config(coeffs, 2.0, 0.0);
        cfg.horizon = 1e9;
        let run = gillespie_run(&cfg).unwrap();
        assert_eq!(run.events.len(), 10);
        assert!(run.events.iter().all(|e| e.kind == DivisionKind::SymmetricDifferentiation));
        let end = run.final_state();
        assert_eq!((end.s, end.d, end.f), (0, 0, 20));
    }

    #[test]
    fn events_are_ordered_and_replayable() {
        let cfg = SimConfig {
            s0: 200,
            ..config(ProliferationCoeffs::new(1.2, -0.03, 0.005), 3.0, 0.05)
        };
        let run = gillespie_run(&cfg).unwrap();
        assert!(!run.events.is_empty());
        let mut state = run.initial;
        let mut last_t = 0.0;
        for (j, e) in run.events.iter().enumerate() {
            assert!(e.t > last_t);
            last_t = e.t;
            state = state.apply_division(e.kind).unwrap().at(e.t);
            assert_eq!(state, e.state_after);
            assert_eq!(state.total(), 200 + j as u64 + 1);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let cfg = config(ProliferationCoeffs::new(1.2, -0.03, 0.005), 3.0, 0.05);
        assert_eq!(gillespie_run(&cfg).unwrap(), gillespie_run(&cfg).unwrap());
        let other = SimConfig { seed: 8, ..cfg };
        assert_ne!(gillespie_run(&cfg).unwrap(), gillespie_run(&other).unwrap());
    }

    #[test]
    fn max_events_truncates() {
        let mut cfg = config(ProliferationCoeffs::new(0.5, 0.0, 0.0), 2.0, 0.0);
        cfg.max_events = 25;
        let run = gillespie_run(&cfg).unwrap();
        assert!(run.truncated);
        assert_eq!(run.events.len(), 25);
    }

    #[test]
    fn invalid_configs_rejected() {
        // q dips below (k-2)/(k-1) = 0.5 for k = 3
        let cfg = config(ProliferationCoeffs::new(0.6, 0.0, 0.0), 3.0, 0.0);
        assert!(matches!(gillespie_run(&cfg), Err(SimError::InvalidConfig(_))));
        let cfg = SimConfig { s0: 0, ..config(ProliferationCoeffs::new(1.0, 0.0, 0.0), 3.0, 0.0) };
        assert!(gillespie_run(&cfg).is_err());
        let cfg = SimConfig { horizon: 0.0, ..config(ProliferationCoeffs::new(1.0, 0.0, 0.0), 3.0, 0.0) };
        assert!(gillespie_run(&cfg).is_err());
    }

    #[test]
    fn sampling_examples() {
        let schedule = SampleSchedule::new(vec![1.0, 2.0]).unwrap();
        let empty = SimRun { initial: PopulationState::initial(10), events: vec![], truncated: false };
        let subj = sample_at_times(&empty, &schedule, "a");
        assert_eq!(subj.observations.iter().map(|o| (o.s_star, o.f)).collect::<Vec<_>>(), vec![(10, 0), (10, 0)]);

        let after = PopulationState::initial(10).apply_division(DivisionKind::SymmetricRenewal).unwrap().at(1.5);
        let one = SimRun {
            initial: PopulationState::initial(10),
            events: vec![EventRecord { t: 1.5, kind: DivisionKind::SymmetricRenewal, state_after: after }],
            truncated: false,
        };
        let subj = sample_at_times(&one, &schedule, "a");
        assert_eq!(subj.observations.iter().map(|o| (o.s_star, o.f)).collect::<Vec<_>>(), vec![(10, 0), (11, 0)]);
    }

    #[test]
    fn event_exactly_on_sample_time_counts() {
        let schedule = SampleSchedule::new(vec![1.5, 2.0]).unwrap();
        let after = PopulationState::initial(3).apply_division(DivisionKind::AsymmetricDivision).unwrap().at(1.5);
        let run = SimRun {
            initial: PopulationState::initial(3),
            events: vec![EventRecord { t: 1.5, kind: DivisionKind::AsymmetricDivision, state_after: after }],
            truncated: false,
        };
        assert_eq!(sample_at_times(&run, &schedule, "x").observations[0].f, 1);
    }

    #[test]
    fn cohort_of_one_equals_single_run() {
        let cfg = SimConfig { s0: 300, ..config(ProliferationCoeffs::new(1.2, -0.03, 0.005), 3.0, 0.05) };
        let schedule = SampleSchedule::equally_spaced(40.0, 8).unwrap();
        let cohort = generate_cohort(&cfg, &schedule, 1, cfg.seed).unwrap();
        let run = gillespie_run(&cfg).unwrap();
        assert_eq!(cohort.subjects[0], sample_at_times(&run, &schedule, "subject_1"));
        assert_eq!(cohort, generate_cohort(&cfg, &schedule, 1, cfg.seed).unwrap());
    }

    #[test]
    fn zero_subjects_rejected() {
        let cfg = config(ProliferationCoeffs::new(1.2, -0.03, 0.005), 3.0, 0.05);
        let schedule = SampleSchedule::equally_spaced(40.0, 8).unwrap();
        assert!(generate_cohort(&cfg, &schedule, 0, 1).is_err());
    }

    #[test]
    fn schedule_validation() {
        assert!(SampleSchedule::new(vec![1.0]).is_err());
        assert!(SampleSchedule::new(vec![0.0, 1.0]).is_err());
        assert!(SampleSchedule::new(vec![1.0, 1.0]).is_err());
        assert_eq!(SampleSchedule::equally_spaced(12.0, 4).unwrap().times(), &[3.0, 6.0, 9.0, 12.0]);
    }

    #[test]
    fn horizon_by_decay() {
        let probgen = ProbGenConfig::new(3.0, 0.0).unwrap();
        let c = ProliferationCoeffs::new(1.25, -0.055, 0.004);
        let h = choose_horizon(&c, 0.15, &probgen, 0.05, 5000.0).unwrap();
        assert_eq!(h.reason, HorizonReason::Decay);
        let s = stem_trajectory(&c, 0.15, 1.0, h.horizon).unwrap();
        assert!(s <= 0.05 && s > 0.049, "{s}");
    }

    #[test]
    fn horizon_by_validity() {
        let probgen = ProbGenConfig::new(3.0, 0.001).unwrap();
        let c = ProliferationCoeffs::new(1.2, -0.237, 0.005);
        let h = choose_horizon(&c, 0.3, &probgen, 0.05, 5000.0).unwrap();
        assert_eq!(h.reason, HorizonReason::ValidityLimit);
        // q = 0.5 where P = 2/3
        assert!((c.eval_p(h.horizon) - 2.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn plan_lowers_k_only_when_needed() {
        let c = ProliferationCoeffs::new(0.8, -0.06, 0.05);
        let plan = plan_run(&c, 0.2, 3.0, 0.01, DEFAULT_DECAY_FRACTION, DEFAULT_HORIZON_CAP).unwrap();
        assert_eq!(plan.probgen.k, 3.0);
        assert_eq!(plan.horizon.reason, HorizonReason::Decay);

        // q dips to about 0.32, so k = 3 (needing q >= 0.5) must give way
        let c = ProliferationCoeffs::new(1.2, -0.11, 0.005);
        let plan = plan_run(&c, 0.2, 3.0, 0.01, DEFAULT_DECAY_FRACTION, DEFAULT_HORIZON_CAP).unwrap();
        assert!(plan.probgen.k > 2.0 && plan.probgen.k < 3.0);
        assert_eq!(plan.k_requested, 3.0);
        let cfg = SimConfig {
            s0: 100,
            r: RateConstant::new(0.2).unwrap(),
            coeffs: c,
            probgen: plan.probgen,
            horizon: plan.horizon.horizon,
            max_events: DEFAULT_MAX_EVENTS,
            seed: 1,
        };
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn plan_stops_where_q_turns_negative() {
        let c = ProliferationCoeffs::new(1.2, -0.237, 0.005);
        let plan = plan_run(&c, 0.05, 3.0, 0.001, DEFAULT_DECAY_FRACTION, DEFAULT_HORIZON_CAP).unwrap();
        assert_eq!(plan.horizon.reason, HorizonReason::ValidityLimit);
        assert!((c.eval_p(plan.horizon.horizon) - 0.5).abs() < 1e-9);
        assert_eq!(plan.probgen.k, 2.0);
    }

    #[test]
    fn expected_cohort_rounds_trajectory() {
        let c = ProliferationCoeffs::new(1.0, 0.0, 0.0);
        let sched = SampleSchedule::new(vec![1.0, 2.0]).unwrap();
        let cohort = expected_cohort(&c, 0.1, 100.0, &sched, 3).unwrap();
        assert_eq!(cohort.subjects.len(), 3);
        assert_eq!(cohort.subjects[2].id, "subject_3");
        let o = cohort.subjects[0].observations[1];
        assert_eq!((o.s_star, o.f), (100, 20));
    }
}
