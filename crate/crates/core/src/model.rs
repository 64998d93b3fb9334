//! Division model: proliferation function, division probabilities and the
//! per-division state transitions.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance used for the probability identities.
pub const PROB_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("q(t) undefined at t = {t}: P(t) = {p} is not positive")]
    Domain { t: f64, p: f64 },
    #[error("P(t) has a real root at t = {root} inside [{lo}, {hi}]")]
    RootInDomain { root: f64, lo: f64, hi: f64 },
    #[error("invalid probability configuration: {0}")]
    InvalidConfig(String),
    #[error("no viable stem cells left to divide")]
    NoViableCells,
    #[error("rate must be positive and finite, got {0}")]
    InvalidRate(f64),
    #[error("integrator failed to converge after {halvings} step halvings")]
    StepSize { halvings: u32 },
}

/// Coefficients of the inverse-quadratic proliferation function
/// `q(t) = 2 - 1 / (a0 + a1 t + a2 t^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProliferationCoeffs {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
}

/// Value of `q(t)` together with a flag raised when it leaves `[0, 2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QValue {
    pub value: f64,
    pub range_warning: bool,
}

impl ProliferationCoeffs {
    pub const fn new(a0: f64, a1: f64, a2: f64) -> Self {
        Self { a0, a1, a2 }
    }

    /// Constant proliferation function `q(t) = q`.
    pub fn constant(q: f64) -> Self {
        Self::new(1.0 / (2.0 - q), 0.0, 0.0)
    }

    pub fn eval_p(&self, t: f64) -> f64 {
        self.a0 + t * (self.a1 + t * self.a2)
    }

    /// `q(t)`; values outside `[0, 2]` are returned unclamped with
    /// `range_warning` set.
    pub fn eval_q(&self, t: f64) -> Result<QValue, ModelError> {
        let p = self.eval_p(t);
        if !(p > 0.0) {
            return Err(ModelError::Domain { t, p });
        }
        let value = 2.0 - 1.0 / p;
        Ok(QValue {
            value,
            range_warning: !(0.0..=2.0).contains(&value),
        })
    }

    /// `4 a0 a2 - a1^2`.
    pub fn discriminant(&self) -> f64 {
        4.0 * self.a0 * self.a2 - self.a1 * self.a1
    }

    /// Smallest value of `P` on `[lo, hi]` and where it is attained.
    pub fn min_p_on(&self, lo: f64, hi: f64) -> (f64, f64) {
        let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        let mut best = (self.eval_p(lo), lo);
        let end = self.eval_p(hi);
        if end < best.0 {
            best = (end, hi);
        }
        if self.a2 > 0.0 {
            let vertex = -self.a1 / (2.0 * self.a2);
            if vertex > lo && vertex < hi {
                let v = self.eval_p(vertex);
                if v < best.0 {
                    best = (v, vertex);
                }
            }
        }
        best
    }

    /// Largest value of `P` on `[lo, hi]`.
    pub fn max_p_on(&self, lo: f64, hi: f64) -> f64 {
        let neg = Self::new(-self.a0, -self.a1, -self.a2);
        -neg.min_p_on(lo, hi).0
    }

    /// Fails when `P` is not strictly positive somewhere on `[lo, hi]`.
    pub fn check_domain(&self, lo: f64, hi: f64) -> Result<(), ModelError> {
        let (p, at) = self.min_p_on(lo, hi);
        if p > 0.0 {
            Ok(())
        } else {
            Err(ModelError::RootInDomain {
                root: self.first_root_near(at, lo.min(hi)),
                lo: lo.min(hi),
                hi: lo.max(hi),
            })
        }
    }

    // Root of P closest to `lo` on the way to `at`; only used for reporting.
    fn first_root_near(&self, at: f64, lo: f64) -> f64 {
        if self.eval_p(lo) <= 0.0 {
            return lo;
        }
        let (mut a, mut b) = (lo, at);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if self.eval_p(m) > 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        b
    }

    /// Range of `q` over `[lo, hi]`, assuming `P > 0` there.
    pub fn q_range_on(&self, lo: f64, hi: f64) -> Result<(f64, f64), ModelError> {
        self.check_domain(lo, hi)?;
        let p_min = self.min_p_on(lo, hi).0;
        let p_max = self.max_p_on(lo, hi);
        Ok((2.0 - 1.0 / p_min, 2.0 - 1.0 / p_max))
    }
}

/// The four kinds of stem-cell division.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DivisionKind {
    /// S -> S + S
    SymmetricRenewal,
    /// S -> S + F
    AsymmetricDivision,
    /// S -> F + F
    SymmetricDifferentiation,
    /// S -> S + D
    ViableNonviablePair,
}

impl DivisionKind {
    pub const ALL: [DivisionKind; 4] = [
        DivisionKind::SymmetricRenewal,
        DivisionKind::AsymmetricDivision,
        DivisionKind::SymmetricDifferentiation,
        DivisionKind::ViableNonviablePair,
    ];

    pub fn index(self) -> usize {
        match self {
            DivisionKind::SymmetricRenewal => 0,
            DivisionKind::AsymmetricDivision => 1,
            DivisionKind::SymmetricDifferentiation => 2,
            DivisionKind::ViableNonviablePair => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivisionProbabilities {
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
    pub p4: f64,
    pub t: f64,
}

impl DivisionProbabilities {
    pub fn as_array(&self) -> [f64; 4] {
        [self.p1, self.p2, self.p3, self.p4]
    }

    /// Expected number of new differentiated cells per division.
    pub fn q(&self) -> f64 {
        self.p2 + 2.0 * self.p3
    }

    /// Maps a uniform draw in `[0, 1)` to a division kind by inversion.
    pub fn pick(&self, u: f64) -> DivisionKind {
        let mut acc = self.p1;
        if u < acc {
            return DivisionKind::SymmetricRenewal;
        }
        acc += self.p2;
        if u < acc {
            return DivisionKind::AsymmetricDivision;
        }
        acc += self.p3;
        if u < acc || self.p4 <= 0.0 {
            return DivisionKind::SymmetricDifferentiation;
        }
        DivisionKind::ViableNonviablePair
    }
}

/// Shape parameter `k` and nonviable fraction `s` used to turn `q(t)` into
/// four division probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbGenConfig {
    pub k: f64,
    pub s: f64,
}

impl ProbGenConfig {
    pub fn new(k: f64, s: f64) -> Result<Self, ModelError> {
        let cfg = Self { k, s };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.k >= 2.0) || !self.k.is_finite() {
            return Err(ModelError::InvalidConfig(format!("k must be >= 2, got {}", self.k)));
        }
        if !(0.0..1.0).contains(&self.s) {
            return Err(ModelError::InvalidConfig(format!("s must lie in [0, 1), got {}", self.s)));
        }
        Ok(())
    }

    /// Smallest `q` for which `p3 >= 0`.
    pub fn min_valid_q(&self) -> f64 {
        (self.k - 2.0) / (self.k - 1.0)
    }
}

/// Division probabilities for proliferation value `q`:
/// `p1 = (2-q)(1-s)/k`, `p2 = (2-q)(k-2)/k`, `p3 = (2-k+(k-1)q)/k`,
/// `p4 = (2-q)s/k`.
pub fn division_probs(q: f64, cfg: &ProbGenConfig) -> Result<DivisionProbabilities, ModelError> {
    division_probs_at(q, cfg, f64::NAN)
}

/// As [`division_probs`], stamping the instant `t` the probabilities apply to.
pub fn division_probs_at(
    q: f64,
    cfg: &ProbGenConfig,
    t: f64,
) -> Result<DivisionProbabilities, ModelError> {
    cfg.validate()?;
    if !q.is_finite() {
        return Err(ModelError::InvalidConfig(format!("q is not finite ({q})")));
    }
    let k = cfg.k;
    let rest = 2.0 - q;
    let raw = [
        ("p1", rest / k * (1.0 - cfg.s)),
        ("p2", rest * (k - 2.0) / k),
        ("p3", (2.0 - k + (k - 1.0) * q) / k),
        ("p4", rest / k * cfg.s),
    ];
    let mut p = [0.0; 4];
    for (slot, (name, v)) in p.iter_mut().zip(raw) {
        if v < -PROB_TOL {
            let why = if name == "p3" {
                format!(
                    "p3 = {v:e} < 0: q = {q} is below (k-2)/(k-1) = {}",
                    cfg.min_valid_q()
                )
            } else {
                format!("{name} = {v:e} < 0: q = {q} exceeds 2")
            };
            return Err(ModelError::InvalidConfig(why));
        }
        *slot = v.max(0.0);
    }
    Ok(DivisionProbabilities {
        p1: p[0],
        p2: p[1],
        p3: p[2],
        p4: p[3],
        t,
    })
}

/// Cell counts at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationState {
    pub t: f64,
    /// Viable stem cells.
    pub s: u64,
    /// Nonviable stem cells.
    pub d: u64,
    /// Differentiated cells.
    pub f: u64,
}

impl PopulationState {
    pub fn initial(s0: u64) -> Self {
        Self {
            t: 0.0,
            s: s0,
            d: 0,
            f: 0,
        }
    }

    /// Observable stem count `S + D`.
    pub fn s_star(&self) -> u64 {
        self.s + self.d
    }

    pub fn total(&self) -> u64 {
        self.s + self.d + self.f
    }

    pub fn apply_division(&self, kind: DivisionKind) -> Result<Self, ModelError> {
        if self.s == 0 {
            return Err(ModelError::NoViableCells);
        }
        let mut next = *self;
        match kind {
            DivisionKind::SymmetricRenewal => next.s += 1,
            DivisionKind::AsymmetricDivision => next.f += 1,
            DivisionKind::SymmetricDifferentiation => {
                next.s -= 1;
                next.f += 2;
            }
            DivisionKind::ViableNonviablePair => next.d += 1,
        }
        Ok(next)
    }

    pub fn at(mut self, t: f64) -> Self {
        self.t = t;
        self
    }
}

/// Divisions per viable stem cell per hour.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct RateConstant(f64);

impl RateConstant {
    pub fn new(r: f64) -> Result<Self, ModelError> {
        if r > 0.0 && r.is_finite() {
            Ok(Self(r))
        } else {
            Err(ModelError::InvalidRate(r))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for RateConstant {
    type Error = ModelError;

    fn try_from(r: f64) -> Result<Self, Self::Error> {
        Self::new(r)
    }
}

impl From<RateConstant> for f64 {
    fn from(r: RateConstant) -> f64 {
        r.0
    }
}
