//! Fixed-step RK4 integration of the observable system, used as an
//! independent check on the closed-form trajectories.

use crate::model::{ModelError, ProliferationCoeffs};
use crate::trajectory::TrajectoryPoint;

/// Step halvings attempted before giving up.
pub const MAX_HALVINGS: u32 = 12;
/// Relative agreement between a step and its half that counts as converged.
pub const CONVERGED_REL: f64 = 1e-10;

#[derive(Debug, Clone, Copy)]
struct State {
    s_star: f64,
    f: f64,
}

fn rhs(c: &ProliferationCoeffs, r: f64, t: f64, y: State) -> State {
    let q = 2.0 - 1.0 / c.eval_p(t);
    State {
        s_star: r * (1.0 - q) * y.s_star,
        f: r * q * y.s_star,
    }
}

fn rk4_step(c: &ProliferationCoeffs, r: f64, t: f64, y: State, h: f64) -> State {
    let add = |y: State, k: State, w: f64| State {
        s_star: y.s_star + w * k.s_star,
        f: y.f + w * k.f,
    };
    let k1 = rhs(c, r, t, y);
    let k2 = rhs(c, r, t + 0.5 * h, add(y, k1, 0.5 * h));
    let k3 = rhs(c, r, t + 0.5 * h, add(y, k2, 0.5 * h));
    let k4 = rhs(c, r, t + h, add(y, k3, h));
    State {
        s_star: y.s_star + h / 6.0 * (k1.s_star + 2.0 * k2.s_star + 2.0 * k3.s_star + k4.s_star),
        f: y.f + h / 6.0 * (k1.f + 2.0 * k2.f + 2.0 * k3.f + k4.f),
    }
}

/// Integrates from `(S*, F) = (S0, 0)` at `t = 0` through `grid` (sorted,
/// non-negative) taking at most `max_step` per RK4 step.
pub fn integrate_fixed(
    c: &ProliferationCoeffs,
    r: f64,
    s0: f64,
    grid: &[f64],
    max_step: f64,
) -> Vec<TrajectoryPoint> {
    let mut out = Vec::with_capacity(grid.len());
    let mut t = 0.0;
    let mut y = State { s_star: s0, f: 0.0 };
    for &target in grid {
        let span = target - t;
        if span > 0.0 {
            let steps = (span / max_step).ceil().max(1.0) as usize;
            let h = span / steps as f64;
            for i in 0..steps {
                y = rk4_step(c, r, t + i as f64 * h, y, h);
            }
            t = target;
        }
        out.push(TrajectoryPoint {
            t: target,
            s_star: y.s_star,
            f: y.f,
        });
    }
    out
}

/// RK4 solution on `grid`, halving the step until two successive solutions
/// agree to [`CONVERGED_REL`].
pub fn ode_reference(
    c: &ProliferationCoeffs,
    r: f64,
    s0: f64,
    grid: &[f64],
) -> Result<Vec<TrajectoryPoint>, ModelError> {
    if grid.windows(2).any(|w| w[1] < w[0]) || grid.iter().any(|&t| !(t >= 0.0)) {
        return Err(ModelError::InvalidConfig("grid must be sorted and non-negative".into()));
    }
    let t_max = grid.last().copied().unwrap_or(0.0);
    c.check_domain(0.0, t_max)?;

    let mut step = (0.05 / r.abs().max(1e-12)).min(0.25).min(t_max.max(1e-9));
    let mut prev = integrate_fixed(c, r, s0, grid, step);
    for _ in 0..MAX_HALVINGS {
        step *= 0.5;
        let next = integrate_fixed(c, r, s0, grid, step);
        let worst = prev
            .iter()
            .zip(&next)
            .map(|(a, b)| rel_diff(a.s_star, b.s_star).max(rel_diff(a.f, b.f)))
            .fold(0.0, f64::max);
        prev = next;
        if worst < CONVERGED_REL {
            return Ok(prev);
        }
    }
    Err(ModelError::StepSize {
        halvings: MAX_HALVINGS,
    })
}

fn rel_diff(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}
