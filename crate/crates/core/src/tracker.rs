//! Per-pedestrian particle filter.
//!
//! Each particle is a position/velocity hypothesis. Prediction pushes every
//! particle through the transition (constant velocity or one ORCA step
//! against the neighbors' current estimates) and adds Gaussian process
//! noise; the observation reweights them with an isotropic Gaussian
//! likelihood.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::adapt::BudgetParams;
use crate::error::{Error, GeometryError};
use crate::geometry::Vec2;
use crate::math;
use crate::rvo::{self, AgentState, RvoConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MotionModel {
    /// Constant velocity.
    Lin,
    /// One ORCA step toward the learned preferred velocity.
    Rvo,
}

impl MotionModel {
    pub fn name(self) -> &'static str {
        match self {
            MotionModel::Lin => "LIN",
            MotionModel::Rvo => "RVO",
        }
    }
}

impl fmt::Display for MotionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MotionModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "lin" => Ok(MotionModel::Lin),
            "rvo" => Ok(MotionModel::Rvo),
            _ => Err(Error::Config("unknown motion model")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerConfig {
    pub motion_model: MotionModel,
    /// Adaptive budget (MLPF). When false the filter keeps `p_max`
    /// particles throughout (SLPF).
    pub adaptive: bool,
    /// Process noise on velocity (m/s); position gets `q_sigma * dt`.
    pub process_noise_sigma: f64,
    /// Observation noise assumed by the likelihood (m).
    pub obs_noise_sigma: f64,
    pub budget: BudgetParams,
    /// Normalized weight below which an adaptive filter drops a particle.
    pub w_threshold: f64,
    /// Share of a particle's deviation from the preferred velocity that
    /// carries over into its next RVO step; 0 steers every particle by the
    /// shared preferred velocity alone.
    pub velocity_persistence: f64,
    /// A visible observation farther than this many `obs_noise_sigma` from
    /// every particle counts as a lost track, and the filter restarts
    /// around the observation. Infinite disables the check.
    pub reacquire_gate: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            motion_model: MotionModel::Rvo,
            adaptive: true,
            process_noise_sigma: 0.15,
            obs_noise_sigma: 0.1,
            budget: BudgetParams::default(),
            w_threshold: 1e-6,
            velocity_persistence: 0.8,
            reacquire_gate: 5.0,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<(), Error> {
        self.budget.validate()?;
        if !(self.process_noise_sigma.is_finite() && self.process_noise_sigma >= 0.0) {
            return Err(Error::Config(
                "process_noise_sigma must be finite and non-negative",
            ));
        }
        if !(self.obs_noise_sigma.is_finite() && self.obs_noise_sigma > 0.0) {
            return Err(Error::Config("obs_noise_sigma must be finite and positive"));
        }
        if !(self.w_threshold.is_finite() && self.w_threshold >= 0.0) {
            return Err(Error::Config("w_threshold must be finite and non-negative"));
        }
        if self.reacquire_gate.is_nan() || self.reacquire_gate <= 0.0 {
            return Err(Error::Config("reacquire_gate must be positive"));
        }
        if !(0.0..=1.0).contains(&self.velocity_persistence) {
            return Err(Error::Config("velocity_persistence must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Budget a new filter starts with.
    pub fn initial_k(&self) -> usize {
        if self.adaptive {
            self.budget.p_min
        } else {
            self.budget.p_max
        }
    }
}

/// Static body parameters of a tracked pedestrian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pedestrian {
    pub id: u32,
    pub radius: f64,
    pub max_speed: f64,
}

impl Pedestrian {
    pub fn from_agent(a: &AgentState) -> Self {
        Pedestrian {
            id: a.id,
            radius: a.radius,
            max_speed: a.max_speed,
        }
    }

    /// Agent with this body at the given kinematic state. The goal sits at
    /// the position, so the preferred velocity must be supplied explicitly.
    pub fn agent(&self, position: Vec2, velocity: Vec2) -> AgentState {
        AgentState {
            id: self.id,
            position,
            velocity,
            radius: self.radius,
            pref_speed: 0.0,
            goal: position,
            max_speed: self.max_speed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    pub position: Vec2,
    pub velocity: Vec2,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet {
    pub pedestrian_id: u32,
    pub particles: Vec<Particle>,
}

fn gaussian<R: Rng>(rng: &mut R, sigma: f64) -> Vec2 {
    let x: f64 = rng.sample(StandardNormal);
    let y: f64 = rng.sample(StandardNormal);
    Vec2::new(x, y) * sigma
}

impl ParticleSet {
    /// `k` equally weighted particles drawn around a position and velocity.
    pub fn gaussian<R: Rng>(
        pedestrian_id: u32,
        k: usize,
        position: Vec2,
        position_sigma: f64,
        velocity: Vec2,
        velocity_sigma: f64,
        rng: &mut R,
    ) -> Self {
        let w = 1.0 / k as f64;
        let particles = (0..k)
            .map(|_| Particle {
                position: position + gaussian(rng, position_sigma),
                velocity: velocity + gaussian(rng, velocity_sigma),
                weight: w,
            })
            .collect();
        ParticleSet {
            pedestrian_id,
            particles,
        }
    }

    /// Distance from `z` to the nearest particle.
    pub fn nearest_distance(&self, z: Vec2) -> f64 {
        let d2 = self
            .particles
            .iter()
            .map(|p| p.position.distance_squared(z))
            .fold(f64::INFINITY, f64::min);
        math::sqrt(d2)
    }

    pub fn k(&self) -> usize {
        self.particles.len()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.particles.iter().map(|p| p.weight).collect()
    }

    /// Advances every particle by one frame of `model` and adds process
    /// noise. `pref` is the preferred velocity used by the ORCA transition;
    /// `neighbors` are the other pedestrians' current estimates.
    #[allow(clippy::too_many_arguments)]
    pub fn predict<R: Rng>(
        &mut self,
        me: &Pedestrian,
        pref: Vec2,
        neighbors: &[AgentState],
        cfg: &RvoConfig,
        tc: &TrackerConfig,
        rng: &mut R,
    ) -> Result<(), GeometryError> {
        let dt = cfg.dt;
        let q_sigma = tc.process_noise_sigma;
        for p in &mut self.particles {
            match tc.motion_model {
                MotionModel::Lin => p.position += p.velocity * dt,
                MotionModel::Rvo => {
                    let agent = me.agent(p.position, p.velocity);
                    let own = pref + (p.velocity - pref) * tc.velocity_persistence;
                    let overlaps =
                        |n: &AgentState| n.position.distance(p.position) < n.radius + me.radius;
                    let v = if neighbors.iter().any(overlaps) {
                        let apart: Vec<AgentState> =
                            neighbors.iter().filter(|n| !overlaps(n)).copied().collect();
                        rvo::compute_new_velocity_with_pref(&agent, own, &apart, cfg)?
                    } else {
                        rvo::compute_new_velocity_with_pref(&agent, own, neighbors, cfg)?
                    };
                    p.velocity = v;
                    p.position += v * dt;
                }
            }
            if q_sigma > 0.0 {
                p.velocity += gaussian(rng, q_sigma);
                p.position += gaussian(rng, q_sigma * dt);
            }
        }
        Ok(())
    }

    /// Multiplies weights by the Gaussian likelihood of `obs` and
    /// renormalizes. Computed in the log domain so that a far observation
    /// cannot underflow every weight at once. Returns `false` when the
    /// weights were unusable and had to be reset to uniform.
    pub fn weight_update(&mut self, obs: Option<Vec2>, r_sigma: f64) -> bool {
        let Some(z) = obs else {
            return true;
        };
        let inv = 1.0 / (2.0 * r_sigma * r_sigma);
        let logs: Vec<f64> = self
            .particles
            .iter()
            .map(|p| math::ln(p.weight) - p.position.distance_squared(z) * inv)
            .collect();
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max.is_finite() {
            let mut sum = 0.0;
            for (p, &l) in self.particles.iter_mut().zip(&logs) {
                p.weight = math::exp(l - max);
                sum += p.weight;
            }
            if sum.is_finite() && sum > 0.0 {
                for p in &mut self.particles {
                    p.weight /= sum;
                }
                return true;
            }
        }
        self.reset_uniform();
        false
    }

    pub fn reset_uniform(&mut self) {
        let w = 1.0 / self.k() as f64;
        for p in &mut self.particles {
            p.weight = w;
        }
    }

    /// Rescales weights to sum to one; uniform if they sum to zero.
    pub fn normalize(&mut self) {
        let sum: f64 = self.particles.iter().map(|p| p.weight).sum();
        if sum > 0.0 && sum.is_finite() {
            for p in &mut self.particles {
                p.weight /= sum;
            }
        } else {
            self.reset_uniform();
        }
    }

    /// Effective sample size `1 / sum(w^2)`.
    pub fn ess(&self) -> f64 {
        let s: f64 = self.particles.iter().map(|p| p.weight * p.weight).sum();
        1.0 / s
    }

    /// Weighted mean position.
    pub fn estimate(&self) -> Vec2 {
        self.particles
            .iter()
            .fold(Vec2::ZERO, |acc, p| acc + p.position * p.weight)
    }

    /// Weighted mean velocity.
    pub fn velocity_estimate(&self) -> Vec2 {
        self.particles
            .iter()
            .fold(Vec2::ZERO, |acc, p| acc + p.velocity * p.weight)
    }

    /// Systematic resampling to `count` equally weighted particles.
    pub fn resample<R: Rng>(&mut self, count: usize, rng: &mut R) {
        let u: f64 = rng.random::<f64>() / count as f64;
        let picks = systematic_indices(&self.weights(), count, u);
        let w = 1.0 / count as f64;
        self.particles = picks
            .into_iter()
            .map(|i| Particle {
                weight: w,
                ..self.particles[i]
            })
            .collect();
    }

    /// Keeps the particles whose index is not in `drop` (ascending) and
    /// renormalizes.
    pub fn remove(&mut self, drop: &[usize]) {
        let mut it = drop.iter().peekable();
        let mut i = 0;
        self.particles.retain(|_| {
            let gone = it.peek() == Some(&&i);
            if gone {
                it.next();
            }
            i += 1;
            !gone
        });
        self.normalize();
    }

    /// Drops the `count` lowest-weight particles (ties: higher index first)
    /// and renormalizes.
    pub fn remove_lightest(&mut self, count: usize) {
        let count = count.min(self.k().saturating_sub(1));
        let mut order: Vec<usize> = (0..self.k()).collect();
        order.sort_by(|&a, &b| {
            self.particles[a]
                .weight
                .total_cmp(&self.particles[b].weight)
                .then(b.cmp(&a))
        });
        let mut drop = order[..count].to_vec();
        drop.sort_unstable();
        self.remove(&drop);
    }
}

/// Indices chosen by systematic resampling with offset `u` in `[0, 1/count)`:
/// pointer `i` sits at `u + i / count` on the cumulative weight axis.
pub fn systematic_indices(weights: &[f64], count: usize, u: f64) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let mut picks = Vec::with_capacity(count);
    let mut j = 0;
    let mut cumulative = weights.first().copied().unwrap_or(0.0) / total;
    let last = weights.len().saturating_sub(1);
    for i in 0..count {
        let pointer = u + i as f64 / count as f64;
        while pointer >= cumulative && j < last {
            j += 1;
            cumulative += weights[j] / total;
        }
        picks.push(j);
    }
    picks
}
