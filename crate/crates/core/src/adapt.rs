//! Confidence estimation: how far the filter has drifted from the motion
//! model, how the particle budget responds, and which particles are too
//! light to keep.

use alloc::vec::Vec;

use crate::error::Error;
use crate::geometry::Vec2;
use crate::math;

/// Normalized disagreement between the filtered position and the motion
/// model's prediction.
pub fn motion_model_reliability(t_pf: Vec2, t_rvo: Vec2, scale: f64) -> f64 {
    t_pf.distance(t_rvo) / scale
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetParams {
    pub p_min: usize,
    pub p_max: usize,
    pub p_add: usize,
    pub hold_frames: u32,
    pub decay_fraction: f64,
    pub d_threshold: f64,
}

impl Default for BudgetParams {
    fn default() -> Self {
        BudgetParams {
            p_min: 100,
            p_max: 1000,
            p_add: 100,
            hold_frames: 10,
            decay_fraction: 0.1,
            d_threshold: 3.0,
        }
    }
}

impl BudgetParams {
    pub fn validate(&self) -> Result<(), Error> {
        if self.p_min == 0 || self.p_min > self.p_max {
            return Err(Error::Config("need 0 < p_min <= p_max"));
        }
        if self.p_add == 0 {
            return Err(Error::Config("p_add must be at least 1"));
        }
        if !(self.decay_fraction > 0.0 && self.decay_fraction < 1.0) {
            return Err(Error::Config("decay_fraction must lie in (0, 1)"));
        }
        if !(self.d_threshold.is_finite() && self.d_threshold >= 0.0) {
            return Err(Error::Config("d_threshold must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Particle budget of one pedestrian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetController {
    pub k: usize,
    pub hold_remaining: u32,
    pub params: BudgetParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BudgetUpdate {
    pub k: usize,
    pub resample: bool,
}

impl BudgetController {
    pub fn new(params: BudgetParams, k: usize) -> Self {
        BudgetController {
            k: k.clamp(params.p_min, params.p_max),
            hold_remaining: 0,
            params,
        }
    }

    /// Number of particles a decay step removes from a budget of `k`.
    pub fn decay_amount(&self, k: usize) -> usize {
        math::ceil(self.params.decay_fraction * k as f64) as usize
    }

    /// One frame of the budget schedule. A confidence drop (`d` above the
    /// threshold) adds `p_add` particles and restarts the hold even while a
    /// hold is running; otherwise the hold counts down, and once it is over
    /// the budget decays toward `p_min`.
    pub fn update(self, d: f64) -> (BudgetController, BudgetUpdate) {
        let p = self.params;
        let mut next = self;
        let resample = if d > p.d_threshold {
            next.k = (self.k + p.p_add).min(p.p_max);
            next.hold_remaining = p.hold_frames;
            true
        } else if self.hold_remaining > 0 {
            next.hold_remaining -= 1;
            false
        } else {
            next.k = self
                .k
                .saturating_sub(self.decay_amount(self.k))
                .max(p.p_min);
            false
        };
        (
            next,
            BudgetUpdate {
                k: next.k,
                resample,
            },
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PruneDecision {
    /// Ascending indices of the particles to drop.
    pub prune: Vec<usize>,
    /// Fewer than `min_survivors` particles remain.
    pub resample: bool,
}

/// Marks normalized weights below `w_threshold` for removal.
pub fn propagation_reliability(
    weights: &[f64],
    w_threshold: f64,
    min_survivors: usize,
) -> PruneDecision {
    let prune: Vec<usize> = weights
        .iter()
        .enumerate()
        .filter(|(_, &w)| w < w_threshold)
        .map(|(i, _)| i)
        .collect();
    let survivors = weights.len() - prune.len();
    PruneDecision {
        resample: survivors < min_survivors,
        prune,
    }
}
