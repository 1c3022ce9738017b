//! Two-dimensional linear programs over velocity space.
//!
//! [`solve_lp2`] finds the velocity closest to a preferred velocity inside
//! the intersection of ORCA half-planes and the speed disc. Constraints are
//! added in index order; when the running optimum violates a new constraint
//! the problem is re-solved on that constraint's boundary line against all
//! earlier constraints. The objective is strictly convex, so the optimum is
//! unique and no tie-breaking is needed.
//!
//! [`solve_lp3`] is the fallback for infeasible prefixes: it minimizes the
//! largest signed violation, and among the minimizers picks the one closest
//! to the caller's current velocity.

use alloc::vec::Vec;

use crate::error::GeometryError;
use crate::geometry::{HalfPlane, Vec2};
use crate::math;

/// Denominators below this are treated as parallel lines.
const PARALLEL_EPS: f64 = 1e-12;

/// Outcome of [`solve_lp2`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpSolution {
    pub velocity: Vec2,
    /// Index of the first constraint that could not be satisfied together
    /// with its predecessors. `velocity` is then valid for `..fail_index`.
    pub fail_index: Option<usize>,
}

impl LpSolution {
    pub fn is_feasible(&self) -> bool {
        self.fail_index.is_none()
    }
}

fn validate(constraints: &[HalfPlane], v: Vec2, max_speed: f64) -> Result<(), GeometryError> {
    if !max_speed.is_finite() || !v.is_finite() || constraints.iter().any(|c| !c.is_finite()) {
        return Err(GeometryError::NonFinite("linear program"));
    }
    if max_speed <= 0.0 {
        return Err(GeometryError::NonPositiveSpeed(max_speed));
    }
    Ok(())
}

/// Closest velocity to `v_pref` satisfying every half-plane with
/// `||v|| <= max_speed`.
pub fn solve_lp2(
    constraints: &[HalfPlane],
    v_pref: Vec2,
    max_speed: f64,
) -> Result<LpSolution, GeometryError> {
    validate(constraints, v_pref, max_speed)?;
    Ok(lp2(constraints, max_speed, v_pref, false))
}

/// Least-bad velocity on the speed disc for an infeasible prefix: minimizes
/// `max_i (point_i - v) . normal_i` over `constraints[..=fail_index]`, ties
/// broken toward `current`. Constraints after `fail_index` are ignored.
pub fn solve_lp3(
    constraints: &[HalfPlane],
    fail_index: usize,
    current: Vec2,
    max_speed: f64,
) -> Result<Vec2, GeometryError> {
    let end = (fail_index + 1).min(constraints.len());
    let prefix = &constraints[..end];
    validate(prefix, current, max_speed)?;
    if prefix.is_empty() {
        return Ok(current);
    }
    Ok(least_violation(prefix, end - 1, current, max_speed))
}

/// Full solve used by the motion model: [`solve_lp2`], and when that fails,
/// the least-violation velocity over every constraint, continuing
/// incrementally from the failing index.
pub fn solve_with_fallback(
    constraints: &[HalfPlane],
    v_pref: Vec2,
    max_speed: f64,
) -> Result<Vec2, GeometryError> {
    validate(constraints, v_pref, max_speed)?;
    let sol = lp2(constraints, max_speed, v_pref, false);
    Ok(match sol.fail_index {
        None => sol.velocity,
        Some(fail) => least_violation(constraints, fail, sol.velocity, max_speed),
    })
}

/// Optimum on the boundary of `lines[index]` against `lines[..index]` and the
/// disc. With `optimize_direction`, `target` is a unit direction to push
/// along; otherwise it is the point to approach.
fn lp1(
    lines: &[HalfPlane],
    index: usize,
    radius: f64,
    target: Vec2,
    optimize_direction: bool,
) -> Option<Vec2> {
    let line = &lines[index];
    let p = line.point;
    let d = line.direction();
    let dot = p.dot(d);
    let discriminant = dot * dot + radius * radius - p.length_squared();
    if discriminant < 0.0 {
        // The boundary line misses the speed disc.
        return None;
    }
    let s = math::sqrt(discriminant);
    let mut t_left = -dot - s;
    let mut t_right = -dot + s;

    for other in &lines[..index] {
        // Need t * denom >= numer along p + t d.
        let denom = d.dot(other.normal);
        let numer = (other.point - p).dot(other.normal);
        if denom.abs() <= PARALLEL_EPS {
            if numer > 0.0 {
                return None;
            }
            continue;
        }
        let t = numer / denom;
        if denom > 0.0 {
            t_left = t_left.max(t);
        } else {
            t_right = t_right.min(t);
        }
        if t_left > t_right {
            return None;
        }
    }

    let t = if optimize_direction {
        if target.dot(d) > 0.0 {
            t_right
        } else {
            t_left
        }
    } else {
        d.dot(target - p).clamp(t_left, t_right)
    };
    Some(p + d * t)
}

fn lp2(lines: &[HalfPlane], radius: f64, target: Vec2, optimize_direction: bool) -> LpSolution {
    let mut result = if optimize_direction {
        target * radius
    } else if target.length_squared() > radius * radius {
        target.normalize().unwrap_or(Vec2::ZERO) * radius
    } else {
        target
    };

    for i in 0..lines.len() {
        if lines[i].violation(result) > 0.0 {
            match lp1(lines, i, radius, target, optimize_direction) {
                Some(v) => result = v,
                None => {
                    return LpSolution {
                        velocity: result,
                        fail_index: Some(i),
                    }
                }
            }
        }
    }
    LpSolution {
        velocity: result,
        fail_index: None,
    }
}

/// Incremental minimax over `lines`, starting at `begin` from a `current`
/// velocity that already satisfies `lines[..begin]`.
fn least_violation(lines: &[HalfPlane], begin: usize, current: Vec2, radius: f64) -> Vec2 {
    let mut result = current;
    let mut distance = 0.0_f64;
    let mut projected: Vec<HalfPlane> = Vec::with_capacity(lines.len());

    for i in begin..lines.len() {
        let li = &lines[i];
        if li.violation(result) <= distance {
            continue;
        }
        // Keep every earlier constraint at most as violated as this one:
        // (p_j - v).n_j <= (p_i - v).n_i  <=>  v.(n_j - n_i) >= p_j.n_j - p_i.n_i
        projected.clear();
        for lj in &lines[..i] {
            let diff = lj.normal - li.normal;
            let len = diff.length();
            if len <= PARALLEL_EPS {
                // Same orientation: the violation gap is constant and already
                // in favour of line i.
                continue;
            }
            let normal = diff / len;
            let offset = (lj.point.dot(lj.normal) - li.point.dot(li.normal)) / len;
            projected.push(HalfPlane {
                point: normal * offset,
                normal,
            });
        }
        let sol = lp2(&projected, radius, li.normal, true);
        if sol.is_feasible() {
            result = sol.velocity;
        }
        distance = li.violation(result);
    }

    closest_at_level(lines, result, current, radius)
}

/// Among velocities whose violation of every line is at most that of
/// `minimizer`, the one closest to `anchor`.
fn closest_at_level(lines: &[HalfPlane], minimizer: Vec2, anchor: Vec2, radius: f64) -> Vec2 {
    let level = lines
        .iter()
        .map(|l| l.violation(minimizer))
        .fold(0.0_f64, f64::max);
    let slack = 1e-12 * radius.max(1.0);
    let relaxed: Vec<HalfPlane> = lines
        .iter()
        .map(|l| HalfPlane {
            point: l.point - l.normal * (level + slack),
            normal: l.normal,
        })
        .collect();
    let sol = lp2(&relaxed, radius, anchor, false);
    if sol.is_feasible() {
        sol.velocity
    } else {
        minimizer
    }
}

/// Largest signed violation over `constraints`, floored at zero.
pub fn max_violation(constraints: &[HalfPlane], v: Vec2) -> f64 {
    constraints
        .iter()
        .map(|c| c.violation(v))
        .fold(0.0_f64, f64::max)
}
