//! Observation model: isotropic Gaussian position noise plus per-agent
//! occlusion windows.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Error;
use crate::geometry::Vec2;
use crate::rng::{self, stream, SimRng};
use crate::rvo::Crowd;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObsModel {
    /// Standard deviation of the per-axis position noise (m).
    pub noise_sigma: f64,
    /// Probability that a visible agent starts an occlusion window at a
    /// given frame.
    pub occlusion_rate: f64,
    pub occlusion_min: u32,
    pub occlusion_max: u32,
    pub seed: u64,
}

impl Default for ObsModel {
    fn default() -> Self {
        ObsModel {
            noise_sigma: 0.1,
            occlusion_rate: 0.05,
            occlusion_min: 5,
            occlusion_max: 15,
            seed: 0,
        }
    }
}

impl ObsModel {
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config("noise_sigma must be finite and non-negative"));
        }
        if !(0.0..=1.0).contains(&self.occlusion_rate) {
            return Err(Error::Config("occlusion_rate must lie in [0, 1]"));
        }
        if self.occlusion_min > self.occlusion_max {
            return Err(Error::Config("occlusion_min must not exceed occlusion_max"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservationEntry {
    pub id: u32,
    /// `None` while the agent is occluded.
    pub position: Option<Vec2>,
}

impl ObservationEntry {
    pub fn visible(&self) -> bool {
        self.position.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationFrame {
    pub frame_index: u64,
    pub entries: Vec<ObservationEntry>,
}

impl ObservationFrame {
    pub fn get(&self, id: u32) -> Option<&ObservationEntry> {
        self.entries.iter().find(|e| e.id == id)
    }
}

/// Per-agent visibility as a renewal process: each visible frame starts an
/// occlusion window with probability `occlusion_rate`, of a length drawn
/// uniformly from `occlusion_min..=occlusion_max`. The frame after a window
/// is always visible.
#[derive(Debug, Clone)]
pub struct OcclusionProcess {
    rng: SimRng,
    rate: f64,
    min: u32,
    max: u32,
    hidden_left: u32,
    reappear: bool,
}

impl OcclusionProcess {
    pub fn new(model: &ObsModel, id: u32) -> Self {
        OcclusionProcess {
            rng: rng::substream(model.seed, stream::OCCLUSION, u64::from(id)),
            rate: model.occlusion_rate,
            min: model.occlusion_min,
            max: model.occlusion_max,
            hidden_left: 0,
            reappear: false,
        }
    }

    /// Visibility of the next frame.
    pub fn next_visible(&mut self) -> bool {
        if self.hidden_left > 0 {
            self.hidden_left -= 1;
            self.reappear = self.hidden_left == 0;
            return false;
        }
        if self.reappear {
            self.reappear = false;
            return true;
        }
        let u: f64 = self.rng.random();
        if u < self.rate {
            let len = self.rng.random_range(self.min..=self.max);
            if len == 0 {
                return true;
            }
            self.hidden_left = len - 1;
            self.reappear = self.hidden_left == 0;
            return false;
        }
        true
    }
}

fn noisy_position(truth: Vec2, model: &ObsModel, id: u32, frame_index: u64) -> Vec2 {
    if model.noise_sigma == 0.0 {
        return truth;
    }
    let key = rng::mix(model.seed, stream::NOISE, u64::from(id));
    let mut rng = rng::substream(key, stream::NOISE, frame_index);
    let nx: f64 = rng.sample(StandardNormal);
    let ny: f64 = rng.sample(StandardNormal);
    truth + Vec2::new(nx, ny) * model.noise_sigma
}

fn frame_from(
    truth: &Crowd,
    model: &ObsModel,
    frame_index: u64,
    visible: impl Fn(usize) -> bool,
) -> ObservationFrame {
    let entries = truth
        .agents
        .iter()
        .enumerate()
        .map(|(i, a)| ObservationEntry {
            id: a.id,
            position: visible(i).then(|| noisy_position(a.position, model, a.id, frame_index)),
        })
        .collect();
    ObservationFrame {
        frame_index,
        entries,
    }
}

/// Observation of one frame. Occlusion state is replayed from frame 0, so
/// the result depends only on `(truth, model, frame_index)`.
pub fn observe(truth: &Crowd, model: &ObsModel, frame_index: u64) -> ObservationFrame {
    let visibility: Vec<bool> = truth
        .agents
        .iter()
        .map(|a| {
            let mut p = OcclusionProcess::new(model, a.id);
            let mut v = true;
            for _ in 0..=frame_index {
                v = p.next_visible();
            }
            v
        })
        .collect();
    frame_from(truth, model, frame_index, |i| visibility[i])
}

/// Streaming observer for a whole trajectory. Frame `i` of the output equals
/// `observe(&truth[i], model, i)`.
pub fn observe_sequence(truth: &[Crowd], model: &ObsModel) -> Vec<ObservationFrame> {
    let Some(first) = truth.first() else {
        return Vec::new();
    };
    let mut processes: Vec<OcclusionProcess> = first
        .agents
        .iter()
        .map(|a| OcclusionProcess::new(model, a.id))
        .collect();
    truth
        .iter()
        .enumerate()
        .map(|(f, crowd)| {
            let visibility: Vec<bool> = processes.iter_mut().map(|p| p.next_visible()).collect();
            frame_from(crowd, model, f as u64, |i| visibility[i])
        })
        .collect()
}
