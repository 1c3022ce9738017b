//! Brute-force reference implementations used to check the engine.
//!
//! Nothing here shares code with the solvers it checks: velocities come
//! from exhaustive grids, ORCA half-planes from a separate geometric
//! construction, and the Kalman filter from dense `nalgebra` matrices.

use std::fmt;

use crowdtrack_core::adapt;
use crowdtrack_core::learn::{self, Ensemble, MotionParams};
use crowdtrack_core::lp;
use crowdtrack_core::pipeline::{self, TelemetryRecord};
use crowdtrack_core::rng::{self, SimRng};
use crowdtrack_core::rvo::{self, AgentState, Crowd, RvoConfig};
use crowdtrack_core::tracker::{Particle, ParticleSet, Pedestrian};
use crowdtrack_core::{HalfPlane, Mat2, Vec2};
use nalgebra as na;
use rand::Rng;
use rand_distr::StandardNormal;

/// Stream tag for oracle test data.
const ORACLE_STREAM: u64 = 0x4f52_434c;

/// Result of a velocity-grid search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridOptimum {
    pub velocity: Vec2,
    /// Largest constraint violation at `velocity`, zero when feasible.
    pub violation: f64,
}

fn violation(c: &HalfPlane, v: Vec2) -> f64 {
    (c.point.x - v.x) * c.normal.x + (c.point.y - v.y) * c.normal.y
}

/// Visits every grid point `(i, j) * step` inside the speed disc.
fn for_each_grid_point(max_speed: f64, step: f64, mut f: impl FnMut(Vec2)) {
    let n = (max_speed / step).floor() as i64;
    let r2 = max_speed * max_speed;
    for j in -n..=n {
        let y = j as f64 * step;
        for i in -n..=n {
            let x = i as f64 * step;
            if x * x + y * y <= r2 {
                f(Vec2::new(x, y));
            }
        }
    }
}

/// Grid point inside the speed disc closest to `v_pref` among those
/// satisfying every constraint. Without such a point, the point of least
/// maximum violation, ties within `step` broken by distance to `v_pref`.
pub fn grid_velocity(
    constraints: &[HalfPlane],
    v_pref: Vec2,
    max_speed: f64,
    step: f64,
) -> GridOptimum {
    let mut best_feasible: Option<(f64, Vec2)> = None;
    let mut least = f64::INFINITY;
    for_each_grid_point(max_speed, step, |v| {
        let worst = constraints
            .iter()
            .map(|c| violation(c, v))
            .fold(0.0_f64, f64::max);
        if worst <= 0.0 {
            let d = (v.x - v_pref.x).powi(2) + (v.y - v_pref.y).powi(2);
            if best_feasible.is_none_or(|(bd, _)| d < bd) {
                best_feasible = Some((d, v));
            }
        }
        least = least.min(worst);
    });
    if let Some((_, v)) = best_feasible {
        return GridOptimum {
            velocity: v,
            violation: 0.0,
        };
    }
    let mut best: Option<(f64, Vec2, f64)> = None;
    for_each_grid_point(max_speed, step, |v| {
        let worst = constraints
            .iter()
            .map(|c| violation(c, v))
            .fold(0.0_f64, f64::max);
        if worst <= least + step {
            let d = (v.x - v_pref.x).powi(2) + (v.y - v_pref.y).powi(2);
            if best.is_none_or(|(bd, _, _)| d < bd) {
                best = Some((d, v, worst));
            }
        }
    });
    let (_, velocity, violation) = best.expect("the grid always contains the origin");
    GridOptimum {
        velocity,
        violation,
    }
}

/// Grid point of least maximum violation, ties by grid order.
pub fn grid_minimax(constraints: &[HalfPlane], max_speed: f64, step: f64) -> GridOptimum {
    let mut best = GridOptimum {
        velocity: Vec2::ZERO,
        violation: f64::INFINITY,
    };
    for_each_grid_point(max_speed, step, |v| {
        let worst = constraints
            .iter()
            .map(|c| violation(c, v))
            .fold(f64::NEG_INFINITY, f64::max);
        if worst < best.violation {
            best = GridOptimum {
                velocity: v,
                violation: worst,
            };
        }
    });
    best
}

/// Exact optimum by enumerating every point where a 2D optimum can sit:
/// the preference itself, its projections onto each line and onto the
/// speed circle, pairwise line intersections and line-circle intersections
/// for the feasible case; disc tangents, ridge-circle intersections and
/// triple ridge points for the least-violation case. Ties within `1e-12`
/// go to the candidate closest to `anchor`.
pub fn exact_velocity(
    constraints: &[HalfPlane],
    v_pref: Vec2,
    max_speed: f64,
    anchor: Vec2,
) -> GridOptimum {
    let lines: Vec<(na::Vector2<f64>, f64)> = constraints
        .iter()
        .map(|c| (to_na(c.normal), to_na(c.point).dot(&to_na(c.normal))))
        .collect();
    let pref = to_na(v_pref);
    let worst = |v: &na::Vector2<f64>| {
        lines
            .iter()
            .map(|(n, c)| c - n.dot(v))
            .fold(0.0_f64, f64::max)
    };
    let in_disc = |v: &na::Vector2<f64>| v.norm() <= max_speed * (1.0 + 1e-12);
    // Points of a line `n . v = c` on the speed circle.
    let circle_hits = |n: na::Vector2<f64>, c: f64| -> Vec<na::Vector2<f64>> {
        let len = n.norm();
        if len == 0.0 {
            return Vec::new();
        }
        let (n, c) = (n / len, c / len);
        let h2 = max_speed * max_speed - c * c;
        if h2 < 0.0 {
            return Vec::new();
        }
        let t = na::Vector2::new(-n.y, n.x);
        vec![n * c + t * h2.sqrt(), n * c - t * h2.sqrt()]
    };
    let solve =
        |a: na::Vector2<f64>, ca: f64, b: na::Vector2<f64>, cb: f64| -> Option<na::Vector2<f64>> {
            let m = na::Matrix2::new(a.x, a.y, b.x, b.y);
            if m.determinant().abs() < 1e-14 {
                return None;
            }
            m.try_inverse().map(|inv| inv * na::Vector2::new(ca, cb))
        };

    let mut feasible: Vec<na::Vector2<f64>> = vec![pref];
    if pref.norm() > 0.0 {
        feasible.push(pref.normalize() * max_speed);
    }
    for (i, &(n, c)) in lines.iter().enumerate() {
        feasible.push(pref + n * (c - n.dot(&pref)));
        feasible.extend(circle_hits(n, c));
        for &(m, d) in &lines[..i] {
            feasible.extend(solve(n, c, m, d));
        }
    }
    let tol = 1e-9 * max_speed.max(1.0);
    let best = feasible
        .iter()
        .filter(|v| in_disc(v) && worst(v) <= tol)
        .min_by(|a, b| (*a - pref).norm().total_cmp(&(*b - pref).norm()));
    if let Some(v) = best {
        return GridOptimum {
            velocity: from_na(*v),
            violation: 0.0,
        };
    }

    let mut minimax: Vec<na::Vector2<f64>> = Vec::new();
    for (i, &(n, c)) in lines.iter().enumerate() {
        minimax.push(n * max_speed);
        for (j, &(m, d)) in lines[..i].iter().enumerate() {
            minimax.extend(circle_hits(n - m, c - d));
            for &(l, e) in &lines[..j] {
                minimax.extend(solve(n - m, c - d, n - l, c - e));
            }
        }
    }
    let candidates: Vec<(na::Vector2<f64>, f64)> = minimax
        .into_iter()
        .filter(|v| in_disc(v))
        .map(|v| (v, worst(&v)))
        .collect();
    let level = candidates.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    let anchor = to_na(anchor);
    let (v, w) = candidates
        .into_iter()
        .filter(|c| c.1 <= level + 1e-12)
        .min_by(|a, b| (a.0 - anchor).norm().total_cmp(&(b.0 - anchor).norm()))
        .expect("every program has a disc tangent candidate");
    GridOptimum {
        velocity: from_na(v),
        violation: w,
    }
}

/// Grid search and exact enumeration of the same program.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BruteForce {
    pub grid: GridOptimum,
    pub exact: GridOptimum,
}

impl BruteForce {
    /// Gap, in grid steps, between the grid's objective and the exact one.
    /// Small values mean the enumeration found the optimum the grid sees.
    pub fn objective_gap(&self, v_pref: Vec2, step: f64) -> f64 {
        let (g, e) = (self.grid, self.exact);
        match (g.violation > 0.0, e.violation > 0.0) {
            (false, false) => (g.velocity.distance(v_pref) - e.velocity.distance(v_pref)) / step,
            (true, true) => (g.violation - e.violation) / step,
            // A feasible sliver thinner than the grid spacing.
            (true, false) => g.violation / step,
            // The grid found a feasible point the enumeration missed.
            (false, true) => f64::NEG_INFINITY,
        }
    }
}

pub fn brute_force_velocity(
    constraints: &[HalfPlane],
    v_pref: Vec2,
    max_speed: f64,
    step: f64,
) -> BruteForce {
    BruteForce {
        grid: grid_velocity(constraints, v_pref, max_speed, step),
        exact: exact_velocity(constraints, v_pref, max_speed, v_pref),
    }
}

fn to_na(v: Vec2) -> na::Vector2<f64> {
    na::Vector2::new(v.x, v.y)
}

fn from_na(v: na::Vector2<f64>) -> Vec2 {
    Vec2::new(v.x, v.y)
}

/// Whether relative velocity `v` brings two discs of combined radius `r`
/// at offset `p` into contact within `horizon`.
pub fn collides_within(p: Vec2, v: Vec2, r: f64, horizon: f64) -> bool {
    let (p, v) = (to_na(p), to_na(v));
    if p.norm() < r {
        return true;
    }
    // |v t - p|^2 = r^2
    let a = v.norm_squared();
    let b = -2.0 * v.dot(&p);
    let c = p.norm_squared() - r * r;
    let disc = b * b - 4.0 * a * c;
    if a == 0.0 || disc < 0.0 {
        return false;
    }
    let t = (-b - disc.sqrt()) / (2.0 * a);
    t > 0.0 && t <= horizon
}

/// Closest boundary point of the velocity obstacle truncated at `horizon`
/// (disc of radius `r` at offset `p`) to `v`, with the outward normal there.
/// `p` must lie outside the disc.
pub fn vo_boundary_nearest(p: Vec2, v: Vec2, r: f64, horizon: f64) -> (Vec2, Vec2) {
    let (p, v) = (to_na(p), to_na(v));
    let dist = p.norm();
    let axis = p / dist;
    let half_angle = (r / dist).asin();
    let center = p / horizon;
    let small = r / horizon;

    let mut candidates: Vec<(na::Vector2<f64>, na::Vector2<f64>)> = Vec::with_capacity(3);
    // Right leg first: an exact head-on tie goes to the right.
    for side in [-1.0, 1.0] {
        let rot = na::Rotation2::new(side * half_angle);
        let dir = rot * axis;
        // The leg starts where it touches the cutoff circle.
        let start = dir * (dist * half_angle.cos() / horizon);
        let t = (v - start).dot(&dir).max(0.0);
        let q = start + dir * t;
        let outward = na::Rotation2::new(side * std::f64::consts::FRAC_PI_2) * dir;
        candidates.push((q, outward));
    }
    // The cutoff arc is the part of the small circle facing the origin.
    let w = v - center;
    if w.norm() > 0.0 {
        let q = center + w.normalize() * small;
        let toward_origin = -axis;
        let arc_limit = std::f64::consts::FRAC_PI_2 - half_angle;
        if (q - center).normalize().dot(&toward_origin) >= arc_limit.cos() - 1e-12 {
            candidates.push((q, (q - center).normalize()));
        }
    }
    let best = candidates
        .iter()
        .map(|c| (c.0 - v).norm())
        .fold(f64::INFINITY, f64::min);
    let (q, n) = candidates
        .into_iter()
        .find(|c| (c.0 - v).norm() <= best + 1e-12)
        .unwrap();
    (from_na(q), from_na(n))
}

/// ORCA half-plane for `me` induced by `other`, built from the obstacle
/// geometry directly.
pub fn orca_halfplane(
    me: &AgentState,
    other: &AgentState,
    time_horizon: f64,
    dt: f64,
) -> HalfPlane {
    let p = other.position - me.position;
    let v = me.velocity - other.velocity;
    let r = me.radius + other.radius;
    let (u, n) = if p.length() > r {
        let (q, n) = vo_boundary_nearest(p, v, r, time_horizon);
        (q - v, n)
    } else {
        // Overlap: leave the disc scaled by one time step.
        let center = to_na(p) / dt;
        let w = to_na(v) - center;
        let n = if w.norm() > 0.0 {
            w.normalize()
        } else {
            -to_na(p).normalize()
        };
        (from_na(center + n * (r / dt) - to_na(v)), from_na(n))
    };
    HalfPlane {
        point: me.velocity + u * 0.5,
        normal: n,
    }
}

/// Brute-force ORCA velocity of `me` against `neighbors`.
pub fn orca_velocity(
    me: &AgentState,
    neighbors: &[AgentState],
    cfg: &RvoConfig,
    step: f64,
) -> BruteForce {
    let planes: Vec<HalfPlane> = neighbors
        .iter()
        .map(|n| orca_halfplane(me, n, cfg.time_horizon, cfg.dt))
        .collect();
    brute_force_velocity(
        &planes,
        me.preferred_velocity(cfg.goal_tolerance),
        me.max_speed,
        step,
    )
}

/// Kalman filter for a pedestrian whose velocity always equals its
/// preferred velocity. State `[px, py, vx, vy, pref_x, pref_y]`; the
/// preferred velocity takes a random-walk step before each move.
#[derive(Debug, Clone)]
pub struct PrefKalman {
    pub x: na::SVector<f64, 6>,
    pub p: na::SMatrix<f64, 6, 6>,
    f: na::SMatrix<f64, 6, 6>,
    q: na::SMatrix<f64, 6, 6>,
    h: na::SMatrix<f64, 2, 6>,
    r: na::Matrix2<f64>,
}

impl PrefKalman {
    /// Prior: position `N(z0, r_var I)`, preferred velocity
    /// `N(0, pref_sigma^2 I)` and velocity equal to it.
    pub fn new(
        z0: Vec2,
        r_var: f64,
        pref_sigma: f64,
        q_var: f64,
        pref_diffusion: f64,
        dt: f64,
    ) -> Self {
        let x = na::SVector::<f64, 6>::from([z0.x, z0.y, 0.0, 0.0, 0.0, 0.0]);
        let mut p = na::SMatrix::<f64, 6, 6>::zeros();
        p[(0, 0)] = r_var;
        p[(1, 1)] = r_var;
        let s2 = pref_sigma * pref_sigma;
        for axis in 0..2 {
            for i in [2 + axis, 4 + axis] {
                for j in [2 + axis, 4 + axis] {
                    p[(i, j)] = s2;
                }
            }
        }
        let mut f = na::SMatrix::<f64, 6, 6>::zeros();
        let mut g = na::SMatrix::<f64, 6, 2>::zeros();
        for axis in 0..2 {
            f[(axis, axis)] = 1.0;
            f[(axis, 4 + axis)] = dt;
            f[(2 + axis, 4 + axis)] = 1.0;
            f[(4 + axis, 4 + axis)] = 1.0;
            g[(axis, axis)] = dt;
            g[(2 + axis, axis)] = 1.0;
            g[(4 + axis, axis)] = 1.0;
        }
        let mut q = g * g.transpose() * (pref_diffusion * pref_diffusion);
        q[(0, 0)] += q_var;
        q[(1, 1)] += q_var;
        let mut h = na::SMatrix::<f64, 2, 6>::zeros();
        h[(0, 0)] = 1.0;
        h[(1, 1)] = 1.0;
        PrefKalman {
            x,
            p,
            f,
            q,
            h,
            r: na::Matrix2::identity() * r_var,
        }
    }

    pub fn predict(&mut self) {
        self.x = self.f * self.x;
        self.p = self.f * self.p * self.f.transpose() + self.q;
    }

    pub fn update(&mut self, z: Vec2) {
        let s = self.h * self.p * self.h.transpose() + self.r;
        let k = self.p
            * self.h.transpose()
            * s.try_inverse()
                .expect("innovation covariance is positive definite");
        self.x += k * (to_na(z) - self.h * self.x);
        self.p = (na::SMatrix::<f64, 6, 6>::identity() - k * self.h) * self.p;
    }

    pub fn std(&self, i: usize) -> f64 {
        self.p[(i, i)].sqrt()
    }
}

/// Accuracy by a direct double loop over frames and pedestrians.
pub fn naive_accuracy(telemetry: &[TelemetryRecord], truth: &[Crowd], eps: f64) -> f64 {
    let mut hits = 0u64;
    let mut total = 0u64;
    for crowd in truth {
        for agent in &crowd.agents {
            for rec in telemetry {
                if rec.frame == crowd.frame_index && rec.id == agent.id {
                    total += 1;
                    let dx = rec.estimate.x - agent.position.x;
                    let dy = rec.estimate.y - agent.position.y;
                    if (dx * dx + dy * dy).sqrt() <= eps {
                        hits += 1;
                    }
                }
            }
        }
    }
    if total == 0 {
        1.0
    } else {
        hits as f64 / total as f64
    }
}

/// Indices of weights below `threshold`, by re-filtering.
pub fn naive_prune(weights: &[f64], threshold: f64) -> Vec<usize> {
    let mut out = Vec::new();
    for (i, w) in weights.iter().enumerate() {
        if *w < threshold {
            out.push(i);
        }
    }
    out
}

fn uniform_in_disc(rng: &mut SimRng, radius: f64) -> Vec2 {
    loop {
        let v = Vec2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if v.length_squared() <= 1.0 {
            return v * radius;
        }
    }
}

fn unit(rng: &mut SimRng) -> Vec2 {
    let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    Vec2::new(a.cos(), a.sin())
}

/// Agreement of an engine result with its oracle over a batch of cases.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Agreement {
    pub cases: usize,
    pub failures: usize,
    /// Largest deviation of the engine from the reference.
    pub worst: f64,
    /// Largest amount, in the check's units, by which the grid reference
    /// trails the enumerated one.
    pub worst_reference_gap: f64,
    pub tolerance: f64,
}

impl Agreement {
    fn record(&mut self, deviation: f64) {
        self.cases += 1;
        self.worst = self.worst.max(deviation);
        if deviation.is_nan() || deviation > self.tolerance {
            self.failures += 1;
        }
    }

    /// The grid can only be worse than the enumeration; a grid point that
    /// beats it means the enumeration missed the optimum.
    fn record_gap(&mut self, gap: f64) {
        self.worst_reference_gap = self.worst_reference_gap.max(gap);
        if gap < -1e-6 {
            self.failures += 1;
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Random agents for one ORCA case: 2 to 5 non-overlapping agents in a
/// 4 m box with random velocities, speeds and goals.
pub fn random_orca_case(seed: u64, case: u64) -> Vec<AgentState> {
    let mut rng = rng::substream(seed, ORACLE_STREAM, case);
    let n = rng.random_range(2..=5usize);
    let mut agents: Vec<AgentState> = Vec::with_capacity(n);
    while agents.len() < n {
        let radius = rng.random_range(0.2..0.5);
        let position = Vec2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        if agents
            .iter()
            .any(|a| a.position.distance(position) < a.radius + radius)
        {
            continue;
        }
        let max_speed = rng.random_range(1.0..2.0);
        agents.push(AgentState {
            id: agents.len() as u32,
            position,
            velocity: uniform_in_disc(&mut rng, max_speed),
            radius,
            pref_speed: rng.random_range(0.5..=1.0) * max_speed,
            goal: Vec2::new(rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0)),
            max_speed,
        });
    }
    agents
}

/// `compute_new_velocity` against the brute-force oracle on `cases`
/// random configurations, every agent of each. The deviation is the
/// distance to the enumerated optimum in grid steps of `1e-3 * max_speed`.
/// A grid point that beats the enumeration also counts as a failure.
pub fn orca_agreement(cases: usize, seed: u64) -> anyhow::Result<Agreement> {
    let cfg = RvoConfig::default();
    let mut out = Agreement {
        tolerance: 2.0,
        ..Agreement::default()
    };
    for case in 0..cases as u64 {
        let agents = random_orca_case(seed, case);
        for me in &agents {
            let neighbors: Vec<AgentState> =
                rvo::select_neighbors(me.position, me.id, &agents, &cfg)
                    .into_iter()
                    .map(|i| agents[i])
                    .collect();
            let got = rvo::compute_new_velocity(me, &neighbors, &cfg)?;
            let step = 1e-3 * me.max_speed;
            let want = orca_velocity(me, &neighbors, &cfg, step);
            let gap = want.objective_gap(me.preferred_velocity(cfg.goal_tolerance), step);
            out.record(got.distance(want.exact.velocity) / step);
            out.record_gap(gap);
        }
    }
    Ok(out)
}

/// Engine half-planes against [`orca_halfplane`] on random pairs, in
/// absolute units.
pub fn halfplane_agreement(cases: usize, seed: u64) -> anyhow::Result<Agreement> {
    let cfg = RvoConfig::default();
    let mut out = Agreement {
        tolerance: 1e-9,
        ..Agreement::default()
    };
    for case in 0..cases as u64 {
        let agents = random_orca_case(seed ^ 0x5a5a, case);
        let (a, b) = (&agents[0], &agents[1]);
        let got = rvo::compute_orca_halfplane(a, b, cfg.time_horizon, cfg.dt)?;
        let want = orca_halfplane(a, b, cfg.time_horizon, cfg.dt);
        out.record(
            got.point
                .distance(want.point)
                .max(got.normal.distance(want.normal)),
        );
    }
    Ok(out)
}

/// `solve_lp2` on random feasible programs of up to 10 constraints,
/// against [`brute_force_velocity`]; deviation in grid steps.
pub fn lp2_agreement(cases: usize, seed: u64) -> anyhow::Result<Agreement> {
    let mut out = Agreement {
        tolerance: 2.0,
        ..Agreement::default()
    };
    for case in 0..cases as u64 {
        let mut rng = rng::substream(seed, ORACLE_STREAM ^ 1, case);
        let max_speed = rng.random_range(0.5..2.0);
        let inside = uniform_in_disc(&mut rng, 0.8 * max_speed);
        let count = rng.random_range(1..=10usize);
        let planes: Vec<HalfPlane> = (0..count)
            .map(|_| {
                let n = unit(&mut rng);
                let slack = rng.random_range(0.0..0.5) * max_speed;
                HalfPlane {
                    point: inside - n * slack,
                    normal: n,
                }
            })
            .collect();
        let v_pref = uniform_in_disc(&mut rng, 1.5 * max_speed);
        let got = lp::solve_lp2(&planes, v_pref, max_speed)?;
        anyhow::ensure!(got.is_feasible(), "feasible program reported infeasible");
        let step = 1e-3 * max_speed;
        let want = brute_force_velocity(&planes, v_pref, max_speed, step);
        let gap = want.objective_gap(v_pref, step);
        out.record(got.velocity.distance(want.exact.velocity) / step);
        out.record_gap(gap);
    }
    Ok(out)
}

/// `solve_lp3` on random infeasible programs over the constraints up to
/// the failing one: location against [`exact_velocity`], minimax level
/// against [`grid_minimax`], both in grid steps.
pub fn lp3_agreement(cases: usize, seed: u64) -> anyhow::Result<Agreement> {
    let mut out = Agreement {
        tolerance: 2.0,
        ..Agreement::default()
    };
    let mut case = 0u64;
    while out.cases < cases {
        case += 1;
        let mut rng = rng::substream(seed, ORACLE_STREAM ^ 2, case);
        let max_speed = rng.random_range(0.5..2.0);
        let count = rng.random_range(1..=6usize);
        let planes: Vec<HalfPlane> = (0..count)
            .map(|_| {
                let n = unit(&mut rng);
                let reach = rng.random_range(0.3..1.6) * max_speed;
                HalfPlane {
                    point: n * reach,
                    normal: n,
                }
            })
            .collect();
        let v_pref = uniform_in_disc(&mut rng, max_speed);
        let sol = lp::solve_lp2(&planes, v_pref, max_speed)?;
        let Some(fail) = sol.fail_index else { continue };
        let got = lp::solve_lp3(&planes, fail, sol.velocity, max_speed)?;
        let prefix = &planes[..=fail];
        let step = 1e-3 * max_speed;
        let grid = grid_minimax(prefix, max_speed, step);
        let exact = exact_velocity(prefix, v_pref, max_speed, sol.velocity);
        anyhow::ensure!(
            exact.violation > 0.0,
            "enumeration found a failed prefix feasible"
        );
        out.record(got.distance(exact.velocity) / step);
        out.record_gap((grid.violation - exact.violation) / step);
    }
    Ok(out)
}

/// Largest `|EnKF mean - KF mean| / KF std` over all six state components
/// and `frames` frames, for a pedestrian walking at constant velocity
/// `(1, 0.5)` m/s observed with 0.1 m noise. The speed limit is set high
/// enough that the ORCA step is linear.
pub fn enkf_vs_kf(
    seed: u64,
    members: usize,
    frames: usize,
    q_sigma: f64,
    pref_diffusion: f64,
) -> anyhow::Result<f64> {
    let cfg = RvoConfig::default();
    let dt = cfg.dt;
    let r_var: f64 = 0.01;
    let pref_sigma = 1.0;
    let ped = Pedestrian {
        id: 0,
        radius: 0.25,
        max_speed: 100.0,
    };
    let mut rng = rng::substream(seed, ORACLE_STREAM ^ 3, 0);
    let mut obs_rng = rng::substream(seed, ORACLE_STREAM ^ 3, 1);
    let mut observe = |f: usize| {
        let x: f64 = obs_rng.sample(StandardNormal);
        let y: f64 = obs_rng.sample(StandardNormal);
        Vec2::new(f as f64 * dt, 0.5 * f as f64 * dt) + Vec2::new(x, y) * r_var.sqrt()
    };
    let z0 = observe(0);
    let r = Mat2::scaled_identity(r_var);
    let mut e = Ensemble::around(0, members, z0, r, Vec2::ZERO, pref_sigma, &mut rng);
    let params = MotionParams {
        pref_velocity_est: Vec2::ZERO,
        q: Mat2::scaled_identity(q_sigma * q_sigma),
        r,
        retrain_interval: 50,
    };
    let mut kf = PrefKalman::new(z0, r_var, pref_sigma, q_sigma * q_sigma, pref_diffusion, dt);
    let mut worst = 0.0_f64;
    for f in 1..=frames {
        let z = observe(f);
        learn::enkf_predict(&mut e, &params, &ped, &[], &cfg, pref_diffusion, &mut rng)?;
        learn::enkf_update(&mut e, z, r, &mut rng);
        kf.predict();
        kf.update(z);
        let m = e.mean();
        let got = [
            m.position.x,
            m.position.y,
            m.velocity.x,
            m.velocity.y,
            m.pref.x,
            m.pref.y,
        ];
        for (i, g) in got.iter().enumerate() {
            worst = worst.max((g - kf.x[i]).abs() / kf.std(i));
        }
    }
    Ok(worst)
}

/// Engine accuracy against [`naive_accuracy`] on random telemetry.
pub fn accuracy_agreement(cases: usize, seed: u64) -> anyhow::Result<Agreement> {
    let mut out = Agreement {
        tolerance: 1e-12,
        ..Agreement::default()
    };
    for case in 0..cases as u64 {
        let mut rng = rng::substream(seed, ORACLE_STREAM ^ 4, case);
        let ids = rng.random_range(1..6u32);
        let frames = rng.random_range(1..20u64);
        let truth: Vec<Crowd> = (0..frames)
            .map(|f| Crowd {
                agents: (0..ids)
                    .map(|id| AgentState {
                        id,
                        position: uniform_in_disc(&mut rng, 5.0),
                        velocity: Vec2::ZERO,
                        radius: 0.25,
                        pref_speed: 1.0,
                        goal: Vec2::ZERO,
                        max_speed: 2.0,
                    })
                    .collect(),
                frame_index: f,
            })
            .collect();
        let telemetry: Vec<TelemetryRecord> = truth
            .iter()
            .flat_map(|c| c.agents.iter().map(move |a| (c.frame_index, a)))
            .map(|(frame, a)| TelemetryRecord {
                frame,
                id: a.id,
                estimate: a.position + uniform_in_disc(&mut rng, 1.0),
                k: 100,
                d: 0.0,
                ess: 100.0,
                low_confidence: false,
            })
            .collect();
        let eps = rng.random_range(0.1..1.0);
        let got = pipeline::accuracy(&telemetry, &truth, eps)?;
        out.record((got - naive_accuracy(&telemetry, &truth, eps)).abs());
    }
    Ok(out)
}

/// Engine pruning against [`naive_prune`]; deviation is the number of
/// mismatched sets.
pub fn prune_agreement(cases: usize, seed: u64) -> Agreement {
    let mut out = Agreement::default();
    for case in 0..cases as u64 {
        let mut rng = rng::substream(seed, ORACLE_STREAM ^ 5, case);
        let k = rng.random_range(1..300usize);
        let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>().powi(8)).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let threshold = rng.random_range(0.0..2.0) / k as f64;
        let got = adapt::propagation_reliability(&weights, threshold, 100);
        out.record(if got.prune == naive_prune(&weights, threshold) {
            0.0
        } else {
            1.0
        });
    }
    out
}

/// Weighted-mean estimate against a plain re-summation.
pub fn estimate_agreement(cases: usize, seed: u64) -> Agreement {
    let mut out = Agreement {
        tolerance: 1e-12,
        ..Agreement::default()
    };
    for case in 0..cases as u64 {
        let mut rng = rng::substream(seed, ORACLE_STREAM ^ 6, case);
        let k = rng.random_range(1..200usize);
        let mut set = ParticleSet {
            pedestrian_id: 0,
            particles: (0..k)
                .map(|_| Particle {
                    position: uniform_in_disc(&mut rng, 10.0),
                    velocity: Vec2::ZERO,
                    weight: rng.random::<f64>(),
                })
                .collect(),
        };
        set.normalize();
        let (mut sx, mut sy) = (0.0, 0.0);
        for p in &set.particles {
            sx += p.weight * p.position.x;
            sy += p.weight * p.position.y;
        }
        out.record(set.estimate().distance(Vec2::new(sx, sy)));
    }
    out
}

/// Outcome of one named oracle check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn from_agreement(name: &'static str, a: Agreement) -> Check {
        Check {
            name,
            passed: a.passed(),
            detail: format!(
                "{} cases, {} outside tolerance {:.0e}, worst {:.3e}",
                a.cases, a.failures, a.tolerance, a.worst
            ),
        }
    }

    fn from_grid(name: &'static str, a: Agreement) -> Check {
        let mut c = Check::from_agreement(name, a);
        c.detail += &format!(
            ", grid trails enumeration by at most {:.3e}",
            a.worst_reference_gap
        );
        c
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{status} {}: {}", self.name, self.detail)
    }
}

/// Every oracle comparison; `cases` sets the size of the expensive grid
/// batches.
pub fn check_all(cases: usize, seed: u64) -> anyhow::Result<Vec<Check>> {
    let kf = enkf_vs_kf(seed, 512, 100, 0.006, 0.002)?;
    Ok(vec![
        Check::from_grid("lp2 vs grid (steps)", lp2_agreement(cases, seed)?),
        Check::from_grid("lp3 vs grid minimax (steps)", lp3_agreement(cases, seed)?),
        Check::from_agreement(
            "orca half-plane vs geometry",
            halfplane_agreement(10 * cases, seed)?,
        ),
        Check::from_grid(
            "orca velocity vs grid (steps)",
            orca_agreement(cases, seed)?,
        ),
        Check {
            name: "enkf vs kalman (std units)",
            passed: kf <= 0.05,
            detail: format!("worst {kf:.3e}, tolerance 5e-2"),
        },
        Check::from_agreement("accuracy vs double loop", accuracy_agreement(cases, seed)?),
        Check::from_agreement("pruning vs re-filter", prune_agreement(10 * cases, seed)),
        Check::from_agreement(
            "estimate vs re-summation",
            estimate_agreement(10 * cases, seed),
        ),
    ])
}
