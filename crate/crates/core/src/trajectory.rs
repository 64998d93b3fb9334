//! Deterministic mean trajectories of the observable system
//! `dS*/dt = r (1 - q) S*`, `dF/dt = r q S*`.
//!
//! `S*` has a closed form through the antiderivative `Q` of `q`; `F` is
//! integrated with adaptive composite Simpson.

use crate::model::{ModelError, ProliferationCoeffs};

/// Simpson panels used on the first pass.
pub const SIMPSON_START_PANELS: usize = 512;
/// Panel cap for the doubling loop.
pub const SIMPSON_MAX_PANELS: usize = 16_384;
/// Relative change between successive doublings that ends the loop.
pub const SIMPSON_REL_TOL: f64 = 1e-8;

/// Which closed form of `∫ dt / P(t)` applies to a coefficient triple.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AntiderivativeBranch {
    /// `a1 = a2 = 0`.
    Constant,
    /// `a2 = 0`, `a1 != 0`.
    Linear,
    /// Positive discriminant: arctan form.
    Arctan { sqrt_disc: f64 },
    /// Zero discriminant: `-2 / (a1 + 2 a2 t)`.
    DoubleRoot,
    /// Negative discriminant: partial-fraction log form.
    Log { sqrt_neg_disc: f64 },
}

impl AntiderivativeBranch {
    pub fn of(c: &ProliferationCoeffs) -> Self {
        if c.a2 == 0.0 {
            return if c.a1 == 0.0 { Self::Constant } else { Self::Linear };
        }
        let disc = c.discriminant();
        let scale = (c.a1 * c.a1).max((4.0 * c.a0 * c.a2).abs());
        if disc.abs() <= 1e-12 * scale {
            Self::DoubleRoot
        } else if disc > 0.0 {
            Self::Arctan { sqrt_disc: disc.sqrt() }
        } else {
            Self::Log { sqrt_neg_disc: (-disc).sqrt() }
        }
    }
}

// ∫ dt / P(t) with zero constant. Caller guarantees P has no root in range.
fn inverse_p_integral(c: &ProliferationCoeffs, t: f64) -> f64 {
    match AntiderivativeBranch::of(c) {
        AntiderivativeBranch::Constant => t / c.a0,
        AntiderivativeBranch::Linear => (c.a0 + c.a1 * t).abs().ln() / c.a1,
        AntiderivativeBranch::Arctan { sqrt_disc } => {
            2.0 / sqrt_disc * ((c.a1 + 2.0 * c.a2 * t) / sqrt_disc).atan()
        }
        AntiderivativeBranch::DoubleRoot => -2.0 / (c.a1 + 2.0 * c.a2 * t),
        AntiderivativeBranch::Log { sqrt_neg_disc } => {
            let u = 2.0 * c.a2 * t + c.a1;
            ((u - sqrt_neg_disc) / (u + sqrt_neg_disc)).abs().ln() / sqrt_neg_disc
        }
    }
}

/// `Q(t) = ∫ q`, with zero integration constant. Rejects `t` when `P`
/// vanishes anywhere between 0 and `t`.
pub fn antiderivative_q(c: &ProliferationCoeffs, t: f64) -> Result<f64, ModelError> {
    c.check_domain(0.0, t)?;
    Ok(2.0 * t - inverse_p_integral(c, t))
}

/// `t - Q(t) + Q(0)`, i.e. `∫_0^t (1 - q)`.
pub fn net_growth_integral(c: &ProliferationCoeffs, t: f64) -> Result<f64, ModelError> {
    c.check_domain(0.0, t)?;
    Ok(inverse_p_integral(c, t) - inverse_p_integral(c, 0.0) - t)
}

/// Closed-form `S*(t) = S0 exp(r [t - Q(t) + Q(0)])`.
pub fn stem_trajectory(c: &ProliferationCoeffs, r: f64, s0: f64, t: f64) -> Result<f64, ModelError> {
    if t == 0.0 {
        return Ok(s0);
    }
    Ok(s0 * (r * net_growth_integral(c, t)?).exp())
}

/// `F(t) = r ∫_0^t q(u) S*(u) du`.
pub fn diff_trajectory(c: &ProliferationCoeffs, r: f64, s0: f64, t: f64) -> Result<f64, ModelError> {
    if t == 0.0 {
        return Ok(0.0);
    }
    c.check_domain(0.0, t)?;
    let g0 = inverse_p_integral(c, 0.0);
    let integrand = |u: f64| {
        let p = c.eval_p(u);
        let growth = inverse_p_integral(c, u) - g0 - u;
        (2.0 - 1.0 / p) * (r * growth).exp()
    };
    Ok(r * s0 * simpson_adaptive(integrand, 0.0, t))
}

/// Composite Simpson with panel doubling.
pub fn simpson_adaptive(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let mut panels = SIMPSON_START_PANELS;
    let mut prev = simpson(&f, a, b, panels);
    while panels < SIMPSON_MAX_PANELS {
        panels *= 2;
        let next = simpson(&f, a, b, panels);
        let done = (next - prev).abs() <= SIMPSON_REL_TOL * next.abs();
        prev = next;
        if done {
            break;
        }
    }
    prev
}

/// Composite Simpson with an even number of panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let n = panels + panels % 2;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// One point on a mean trajectory.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub s_star: f64,
    pub f: f64,
}

/// Closed-form `S*` and quadrature `F` at every grid time.
pub fn trajectory(
    c: &ProliferationCoeffs,
    r: f64,
    s0: f64,
    grid: &[f64],
) -> Result<Vec<TrajectoryPoint>, ModelError> {
    grid.iter()
        .map(|&t| {
            Ok(TrajectoryPoint {
                t,
                s_star: stem_trajectory(c, r, s0, t)?,
                f: diff_trajectory(c, r, s0, t)?,
            })
        })
        .collect()
}
