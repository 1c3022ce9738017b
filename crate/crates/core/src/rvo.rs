//! ORCA multi-agent motion model.
//!
//! Each neighbor contributes one half-plane of permitted velocities; the new
//! velocity is the permitted velocity closest to the preferred one. The same
//! step drives the ground-truth simulation and the filters' transition.

use alloc::vec::Vec;

use crate::error::{Error, GeometryError};
use crate::geometry::{HalfPlane, Vec2};
use crate::lp;
use crate::math;

/// Offset applied to an agent whose center coincides with a neighbor's.
const COINCIDENT_SHIFT: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentState {
    pub id: u32,
    pub position: Vec2,
    pub velocity: Vec2,
    pub radius: f64,
    pub pref_speed: f64,
    pub goal: Vec2,
    pub max_speed: f64,
}

impl AgentState {
    /// Goal-directed velocity at `pref_speed`, zero once within
    /// `goal_tolerance` of the goal.
    pub fn preferred_velocity(&self, goal_tolerance: f64) -> Vec2 {
        let to_goal = self.goal - self.position;
        let dist = to_goal.length();
        if dist <= goal_tolerance || dist == 0.0 {
            Vec2::ZERO
        } else {
            to_goal * (self.pref_speed / dist)
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !(self.position.is_finite() && self.velocity.is_finite() && self.goal.is_finite()) {
            return Err(GeometryError::NonFinite("agent state").into());
        }
        if !(self.radius > 0.0 && self.radius <= 2.0) {
            return Err(Error::Config("agent radius must lie in (0, 2] m"));
        }
        if !(self.pref_speed.is_finite() && self.pref_speed >= 0.0) {
            return Err(Error::Config("pref_speed must be finite and non-negative"));
        }
        if !(self.max_speed.is_finite()
            && self.max_speed > 0.0
            && self.max_speed >= self.pref_speed)
        {
            return Err(Error::Config(
                "max_speed must be positive and at least pref_speed",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RvoConfig {
    /// Look-ahead horizon of the velocity obstacle (s).
    pub time_horizon: f64,
    /// Simulation step (s).
    pub dt: f64,
    pub neighbor_dist: f64,
    pub max_neighbors: usize,
    pub goal_tolerance: f64,
}

impl Default for RvoConfig {
    fn default() -> Self {
        RvoConfig {
            time_horizon: 2.0,
            dt: 0.04,
            neighbor_dist: 5.0,
            max_neighbors: 10,
            goal_tolerance: 0.1,
        }
    }
}

impl RvoConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config("dt must be positive"));
        }
        if !(self.time_horizon >= self.dt && self.time_horizon.is_finite()) {
            return Err(Error::Config("time_horizon must be at least dt"));
        }
        if self.neighbor_dist.is_nan() || self.neighbor_dist <= 0.0 {
            return Err(Error::Config("neighbor_dist must be positive"));
        }
        if self.max_neighbors == 0 {
            return Err(Error::Config("max_neighbors must be at least 1"));
        }
        if self.goal_tolerance.is_nan() || self.goal_tolerance < 0.0 {
            return Err(Error::Config("goal_tolerance must be non-negative"));
        }
        Ok(())
    }
}

/// All agents of one frame, in a stable order.
#[derive(Debug, Clone, PartialEq)]
pub struct Crowd {
    pub agents: Vec<AgentState>,
    pub frame_index: u64,
}

impl Crowd {
    pub fn new(agents: Vec<AgentState>) -> Result<Self, Error> {
        for (i, a) in agents.iter().enumerate() {
            a.validate()?;
            if agents[..i].iter().any(|b| b.id == a.id) {
                return Err(Error::Config("agent ids must be unique"));
            }
        }
        Ok(Crowd {
            agents,
            frame_index: 0,
        })
    }

    pub fn get(&self, id: u32) -> Option<&AgentState> {
        self.agents.iter().find(|a| a.id == id)
    }
}

/// ORCA half-plane on `me`'s velocity induced by `other`.
///
/// `u` is the smallest change of relative velocity that leaves the velocity
/// obstacle truncated at `time_horizon` (or, for overlapping agents, at
/// `dt`). `me` takes half of it.
pub fn compute_orca_halfplane(
    me: &AgentState,
    other: &AgentState,
    time_horizon: f64,
    dt: f64,
) -> Result<HalfPlane, GeometryError> {
    let rel_pos = other.position - me.position;
    let rel_vel = me.velocity - other.velocity;
    let dist_sq = rel_pos.length_squared();
    if dist_sq == 0.0 {
        return Err(GeometryError::CoincidentAgents(me.id, other.id));
    }
    let r = me.radius + other.radius;
    let r_sq = r * r;

    let (u, normal) = if dist_sq > r_sq {
        let inv_tau = 1.0 / time_horizon;
        // Relative velocity seen from the cutoff circle's center.
        let w = rel_vel - rel_pos * inv_tau;
        let w_len_sq = w.length_squared();
        let dot = w.dot(rel_pos);
        if dot < 0.0 && dot * dot > r_sq * w_len_sq {
            // Closest boundary point lies on the cutoff arc.
            let w_len = math::sqrt(w_len_sq);
            let unit_w = w / w_len;
            (unit_w * (r * inv_tau - w_len), unit_w)
        } else {
            // Closest boundary point lies on one of the cone's legs.
            let leg = math::sqrt(dist_sq - r_sq);
            let (dir, normal) = if rel_pos.det(w) > 0.0 {
                let left = Vec2::new(
                    rel_pos.x * leg - rel_pos.y * r,
                    rel_pos.x * r + rel_pos.y * leg,
                ) / dist_sq;
                (left, left.perp())
            } else {
                let right = Vec2::new(
                    rel_pos.x * leg + rel_pos.y * r,
                    -rel_pos.x * r + rel_pos.y * leg,
                ) / dist_sq;
                (right, -right.perp())
            };
            (dir * rel_vel.dot(dir) - rel_vel, normal)
        }
    } else {
        // Already overlapping: separate within one step.
        let inv_dt = 1.0 / dt;
        let w = rel_vel - rel_pos * inv_dt;
        let w_len = w.length();
        let unit_w = if w_len > 0.0 {
            w / w_len
        } else {
            -rel_pos / math::sqrt(dist_sq)
        };
        (unit_w * (r * inv_dt - w_len), unit_w)
    };

    let point = me.velocity + u * 0.5;
    if !point.is_finite() || !normal.is_finite() {
        return Err(GeometryError::NonFinite("ORCA half-plane"));
    }
    Ok(HalfPlane { point, normal })
}

/// Half-plane for a neighbor pair, separating coincident centers by a fixed
/// tiny offset. The axis is chosen by the parity of the id difference, so
/// both agents of the pair shift symmetrically.
fn orca_line(
    me: &AgentState,
    other: &AgentState,
    cfg: &RvoConfig,
) -> Result<HalfPlane, GeometryError> {
    match compute_orca_halfplane(me, other, cfg.time_horizon, cfg.dt) {
        Err(GeometryError::CoincidentAgents(..)) => {
            let diff = i64::from(me.id) - i64::from(other.id);
            let sign = if diff > 0 { 1.0 } else { -1.0 };
            let axis = if diff.rem_euclid(2) == 0 {
                Vec2::new(1.0, 0.0)
            } else {
                Vec2::new(0.0, 1.0)
            };
            let mut shifted = *me;
            shifted.position += axis * (sign * COINCIDENT_SHIFT);
            compute_orca_halfplane(&shifted, other, cfg.time_horizon, cfg.dt)
        }
        other => other,
    }
}

/// Indices into `candidates` of the `max_neighbors` nearest agents strictly
/// within `neighbor_dist` of `center`, nearest first, ties by id. The agent
/// with `self_id` is skipped.
pub fn select_neighbors(
    center: Vec2,
    self_id: u32,
    candidates: &[AgentState],
    cfg: &RvoConfig,
) -> Vec<usize> {
    let range_sq = cfg.neighbor_dist * cfg.neighbor_dist;
    let mut found: Vec<(f64, u32, usize)> = candidates
        .iter()
        .enumerate()
        .filter(|(_, a)| a.id != self_id)
        .filter_map(|(i, a)| {
            let d = a.position.distance_squared(center);
            (d < range_sq).then_some((d, a.id, i))
        })
        .collect();
    found.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    found.truncate(cfg.max_neighbors);
    found.into_iter().map(|(_, _, i)| i).collect()
}

/// New velocity toward an explicit preferred velocity.
pub fn compute_new_velocity_with_pref<'a, I>(
    me: &AgentState,
    v_pref: Vec2,
    neighbors: I,
    cfg: &RvoConfig,
) -> Result<Vec2, GeometryError>
where
    I: IntoIterator<Item = &'a AgentState>,
{
    let lines = neighbors
        .into_iter()
        .map(|n| orca_line(me, n, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    lp::solve_with_fallback(&lines, v_pref, me.max_speed)
}

/// New velocity for `me` given its selected `neighbors`.
pub fn compute_new_velocity(
    me: &AgentState,
    neighbors: &[AgentState],
    cfg: &RvoConfig,
) -> Result<Vec2, GeometryError> {
    compute_new_velocity_with_pref(
        me,
        me.preferred_velocity(cfg.goal_tolerance),
        neighbors,
        cfg,
    )
}

fn velocity_for(
    index: usize,
    agents: &[AgentState],
    cfg: &RvoConfig,
) -> Result<Vec2, GeometryError> {
    let me = &agents[index];
    let neighbors = select_neighbors(me.position, me.id, agents, cfg);
    compute_new_velocity_with_pref(
        me,
        me.preferred_velocity(cfg.goal_tolerance),
        neighbors.iter().map(|&i| &agents[i]),
        cfg,
    )
}

/// Advances every agent by one `cfg.dt`. All new velocities are computed
/// from the frame-start snapshot before any agent moves.
pub fn step(crowd: &Crowd, cfg: &RvoConfig) -> Result<Crowd, Error> {
    let agents = &crowd.agents;

    #[cfg(feature = "parallel")]
    let velocities: Vec<Vec2> = {
        use rayon::prelude::*;
        (0..agents.len())
            .into_par_iter()
            .map(|i| velocity_for(i, agents, cfg))
            .collect::<Result<_, _>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let velocities: Vec<Vec2> = (0..agents.len())
        .map(|i| velocity_for(i, agents, cfg))
        .collect::<Result<_, _>>()?;

    let next = agents
        .iter()
        .zip(&velocities)
        .map(|(a, &v)| AgentState {
            position: a.position + v * cfg.dt,
            velocity: v,
            ..*a
        })
        .collect();
    Ok(Crowd {
        agents: next,
        frame_index: crowd.frame_index + 1,
    })
}
