//! Frame-by-frame tracking session tying the three levels together.
//!
//! A session first consumes a training window of observations: every
//! pedestrian's track is initialized from a least-squares line through its
//! visible positions, and RVO variants also train their motion models on
//! the window. Each later frame then runs, per pedestrian, prediction,
//! reweighting, the budget hook, conditional resampling and estimation,
//! followed by the learning update. Neighbor information always comes from
//! the previous frame's estimates, so pedestrians can be processed in any
//! order or in parallel with identical results.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::adapt::{self, BudgetController};
use crate::error::{Error, GeometryError};
use crate::geometry::{Mat2, Vec2};
use crate::learn::{LearnConfig, PedestrianModel};
use crate::math;
use crate::observe::ObservationFrame;
use crate::rng::{self, stream, SimRng};
use crate::rvo::{self, AgentState, Crowd, RvoConfig};
use crate::tracker::{MotionModel, Particle, ParticleSet, Pedestrian, TrackerConfig};

/// One of the four tracker configurations compared by the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Variant {
    pub adaptive: bool,
    pub motion_model: MotionModel,
}

impl Variant {
    pub const SLPF_LIN: Variant = Variant {
        adaptive: false,
        motion_model: MotionModel::Lin,
    };
    pub const SLPF_RVO: Variant = Variant {
        adaptive: false,
        motion_model: MotionModel::Rvo,
    };
    pub const MLPF_LIN: Variant = Variant {
        adaptive: true,
        motion_model: MotionModel::Lin,
    };
    pub const MLPF_RVO: Variant = Variant {
        adaptive: true,
        motion_model: MotionModel::Rvo,
    };

    /// Report order: the adaptive RVO tracker first.
    pub const ALL: [Variant; 4] = [
        Variant::MLPF_RVO,
        Variant::SLPF_RVO,
        Variant::MLPF_LIN,
        Variant::SLPF_LIN,
    ];

    pub fn name(self) -> &'static str {
        match (self.adaptive, self.motion_model) {
            (true, MotionModel::Rvo) => "MLPF-RVO",
            (false, MotionModel::Rvo) => "SLPF-RVO",
            (true, MotionModel::Lin) => "MLPF-LIN",
            (false, MotionModel::Lin) => "SLPF-LIN",
        }
    }

    /// `base` with this variant's model and budget mode.
    pub fn apply(self, base: TrackerConfig) -> TrackerConfig {
        TrackerConfig {
            adaptive: self.adaptive,
            motion_model: self.motion_model,
            ..base
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or(Error::Config("unknown variant"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SessionConfig {
    pub rvo: RvoConfig,
    pub tracker: TrackerConfig,
    pub learn: LearnConfig,
    pub seed: u64,
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), Error> {
        self.rvo.validate()?;
        self.tracker.validate()?;
        self.learn.validate()
    }

    fn uses_learning(&self) -> bool {
        self.tracker.motion_model == MotionModel::Rvo
    }

    fn obs_cov(&self) -> Mat2 {
        let r = self.tracker.obs_noise_sigma;
        Mat2::scaled_identity(r * r)
    }
}

/// Per-pedestrian, per-frame output of [`Session::step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TelemetryRecord {
    pub frame: u64,
    pub id: u32,
    pub estimate: Vec2,
    /// Particle count after this frame's budget update.
    pub k: usize,
    pub d: f64,
    /// Effective sample size after reweighting.
    pub ess: f64,
    /// Weights had to be reset, or too few particles survived pruning.
    pub low_confidence: bool,
}

/// Position and velocity at the end of a training window from a
/// least-squares line, with the standard errors of both.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub position: Vec2,
    pub velocity: Vec2,
    pub position_se: f64,
    pub velocity_se: f64,
}

/// Fits `z = a + b (t - t_end)` to visible `(frame, position)` samples.
/// `None` without samples.
pub fn fit_line(
    samples: &[(u64, Vec2)],
    t_end: u64,
    dt: f64,
    fallback_sigma: f64,
    max_speed: f64,
) -> Option<LineFit> {
    let n = samples.len();
    let (&(_, last), rest) = samples.split_last()?;
    if rest.is_empty() {
        return Some(LineFit {
            position: last,
            velocity: Vec2::ZERO,
            position_se: fallback_sigma,
            velocity_se: 0.5 * max_speed,
        });
    }
    let rel = |t: u64| t as f64 - t_end as f64;
    let nf = n as f64;
    let t_mean = samples.iter().map(|&(t, _)| rel(t)).sum::<f64>() / nf;
    let z_mean = samples.iter().fold(Vec2::ZERO, |a, &(_, z)| a + z) / nf;
    let mut sxx = 0.0;
    let mut sxz = Vec2::ZERO;
    for &(t, z) in samples {
        let dt_i = rel(t) - t_mean;
        sxx += dt_i * dt_i;
        sxz += (z - z_mean) * dt_i;
    }
    let slope = sxz / sxx;
    let position = z_mean - slope * t_mean;
    let (position_se, velocity_se) = if n > 2 {
        let rss: f64 = samples
            .iter()
            .map(|&(t, z)| z.distance_squared(position + slope * rel(t)))
            .sum();
        let s = math::sqrt(rss / (2.0 * (nf - 2.0)));
        (
            s * math::sqrt(1.0 / nf + t_mean * t_mean / sxx),
            s / math::sqrt(sxx) / dt,
        )
    } else {
        (fallback_sigma, fallback_sigma / math::sqrt(sxx) / dt)
    };
    Some(LineFit {
        position,
        velocity: slope / dt,
        position_se,
        velocity_se,
    })
}

#[derive(Debug, Clone)]
struct Track {
    pedestrian: Pedestrian,
    particles: ParticleSet,
    controller: BudgetController,
    model: Option<PedestrianModel>,
    estimate: Vec2,
    velocity: Vec2,
}

impl Track {
    fn snapshot(&self) -> AgentState {
        self.pedestrian.agent(self.estimate, self.velocity)
    }
}

fn gaussian(rng: &mut SimRng, sigma: f64) -> Vec2 {
    let x: f64 = rng.sample(StandardNormal);
    let y: f64 = rng.sample(StandardNormal);
    Vec2::new(x, y) * sigma
}

fn tracker_rng(seed: u64, id: u32, frame: u64) -> SimRng {
    rng::substream(
        rng::mix(seed, stream::TRACKER, u64::from(id)),
        stream::TRACKER,
        frame,
    )
}

fn learn_rng(seed: u64, id: u32, frame: u64) -> SimRng {
    rng::substream(
        rng::mix(seed, stream::LEARN, u64::from(id)),
        stream::LEARN,
        frame,
    )
}

fn neighbors_of(
    id: u32,
    center: Vec2,
    snapshot: &[AgentState],
    cfg: &RvoConfig,
) -> Vec<AgentState> {
    rvo::select_neighbors(center, id, snapshot, cfg)
        .into_iter()
        .map(|i| snapshot[i])
        .collect()
}

/// All tracks of one run.
#[derive(Debug, Clone)]
pub struct Session {
    cfg: SessionConfig,
    tracks: Vec<Track>,
    next_frame: u64,
    propagations: u64,
}

impl Session {
    /// Initializes one track per pedestrian from the `history` frames and,
    /// for RVO variants, trains the motion models on them.
    pub fn start(
        pedestrians: &[Pedestrian],
        history: &[ObservationFrame],
        cfg: SessionConfig,
    ) -> Result<Session, Error> {
        cfg.validate()?;
        let last = history
            .last()
            .ok_or(Error::Config("training window is empty"))?
            .frame_index;
        let models = if cfg.uses_learning() {
            Some(train(pedestrians, history, &cfg)?)
        } else {
            None
        };

        let mut tracks = Vec::with_capacity(pedestrians.len());
        for (i, ped) in pedestrians.iter().enumerate() {
            let samples: Vec<(u64, Vec2)> = history
                .iter()
                .filter_map(|f| Some((f.frame_index, f.get(ped.id)?.position?)))
                .collect();
            let fit = fit_line(
                &samples,
                last,
                cfg.rvo.dt,
                cfg.tracker.obs_noise_sigma,
                ped.max_speed,
            )
            .ok_or(Error::Unobserved(ped.id))?;
            let mut rng = tracker_rng(cfg.seed, ped.id, last);
            let particles = ParticleSet::gaussian(
                ped.id,
                cfg.tracker.initial_k(),
                fit.position,
                fit.position_se,
                fit.velocity,
                fit.velocity_se,
                &mut rng,
            );
            tracks.push(Track {
                pedestrian: *ped,
                controller: BudgetController::new(cfg.tracker.budget, cfg.tracker.initial_k()),
                model: models.as_ref().map(|m| m[i].clone()),
                estimate: particles.estimate(),
                velocity: particles.velocity_estimate(),
                particles,
            });
        }
        Ok(Session {
            cfg,
            tracks,
            next_frame: last + 1,
            propagations: 0,
        })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.cfg
    }

    /// Total particle propagations so far.
    pub fn propagations(&self) -> u64 {
        self.propagations
    }

    /// Current `(id, position)` estimates in pedestrian order.
    pub fn estimates(&self) -> Vec<(u32, Vec2)> {
        self.tracks
            .iter()
            .map(|t| (t.pedestrian.id, t.estimate))
            .collect()
    }

    pub fn budgets(&self) -> Vec<usize> {
        self.tracks.iter().map(|t| t.particles.k()).collect()
    }

    /// Processes one observation frame; returns one record per pedestrian.
    pub fn step(&mut self, obs: &ObservationFrame) -> Result<Vec<TelemetryRecord>, Error> {
        let frame = obs.frame_index;
        let snapshot: Vec<AgentState> = self.tracks.iter().map(Track::snapshot).collect();
        let cfg = &self.cfg;

        #[cfg(feature = "parallel")]
        let results: Vec<Result<(TelemetryRecord, u64), Error>> = {
            use rayon::prelude::*;
            self.tracks
                .par_iter_mut()
                .map(|t| step_track(t, obs, frame, &snapshot, cfg))
                .collect()
        };
        #[cfg(not(feature = "parallel"))]
        let results: Vec<Result<(TelemetryRecord, u64), Error>> = self
            .tracks
            .iter_mut()
            .map(|t| step_track(t, obs, frame, &snapshot, cfg))
            .collect();

        let mut records = Vec::with_capacity(results.len());
        for r in results {
            let (rec, propagated) = r?;
            self.propagations += propagated;
            records.push(rec);
        }
        self.next_frame = frame + 1;
        Ok(records)
    }
}

fn step_track(
    track: &mut Track,
    obs: &ObservationFrame,
    frame: u64,
    snapshot: &[AgentState],
    cfg: &SessionConfig,
) -> Result<(TelemetryRecord, u64), Error> {
    let tc = &cfg.tracker;
    let id = track.pedestrian.id;
    let z = obs.get(id).and_then(|e| e.position);
    let neighbors = neighbors_of(id, track.estimate, snapshot, &cfg.rvo);
    let mut rng = tracker_rng(cfg.seed, id, frame);

    let (t_rvo, pref) = match &track.model {
        Some(m) => (m.t_rvo(&neighbors, &cfg.rvo)?, m.ensemble.mean().pref),
        None => (raw_rvo_step(track, &neighbors, &cfg.rvo)?, Vec2::ZERO),
    };

    let k_old = track.particles.k();
    track
        .particles
        .predict(&track.pedestrian, pref, &neighbors, &cfg.rvo, tc, &mut rng)?;
    let lost = z.is_some_and(|z| {
        track.particles.nearest_distance(z) > tc.reacquire_gate * tc.obs_noise_sigma
    });
    if let (true, Some(z)) = (lost, z) {
        let velocity = track.particles.velocity_estimate();
        track.particles = ParticleSet::gaussian(
            id,
            k_old,
            z,
            tc.obs_noise_sigma,
            velocity,
            tc.process_noise_sigma,
            &mut rng,
        );
    }
    let weights_ok = track.particles.weight_update(z, tc.obs_noise_sigma);
    let ess = track.particles.ess();
    let t_pf = track.particles.estimate();
    let d = adapt::motion_model_reliability(t_pf, t_rvo, tc.obs_noise_sigma);
    let low_ess = ess < k_old as f64 / 2.0;

    let mut starved = false;
    if tc.adaptive {
        let decision = adapt::propagation_reliability(
            &track.particles.weights(),
            tc.w_threshold,
            tc.budget.p_min,
        );
        starved = decision.resample;
        let pruned = !decision.prune.is_empty() && decision.prune.len() < k_old;
        if pruned {
            track.particles.remove(&decision.prune);
        }
        let (controller, update) = track.controller.update(d);
        track.controller = controller;
        let k_new = update.k;
        let kept = k_new.min(k_old);
        if track.particles.k() > kept {
            let extra = track.particles.k() - kept;
            track.particles.remove_lightest(extra);
        }
        if pruned || starved || update.resample || k_new != k_old || low_ess {
            track.particles.resample(kept, &mut rng);
        }
        if k_new > kept {
            let center = z.unwrap_or(t_pf);
            let velocity = track.particles.velocity_estimate();
            for _ in kept..k_new {
                track.particles.particles.push(Particle {
                    position: center + gaussian(&mut rng, tc.obs_noise_sigma),
                    velocity: velocity + gaussian(&mut rng, tc.process_noise_sigma),
                    weight: 0.0,
                });
            }
            track.particles.reset_uniform();
        }
    } else if low_ess {
        track.particles.resample(k_old, &mut rng);
    }

    track.estimate = track.particles.estimate();
    track.velocity = track.particles.velocity_estimate();

    if let Some(model) = &mut track.model {
        let mut lrng = learn_rng(cfg.seed, id, frame);
        model.step(&neighbors, z, &cfg.rvo, &cfg.learn, &mut lrng)?;
    }

    Ok((
        TelemetryRecord {
            frame,
            id,
            estimate: track.estimate,
            k: track.particles.k(),
            d,
            ess,
            low_confidence: lost || !weights_ok || starved,
        },
        k_old as u64,
    ))
}

/// Position after one ORCA step from the current estimate, keeping the
/// estimated velocity as the preferred one.
fn raw_rvo_step(
    track: &Track,
    neighbors: &[AgentState],
    cfg: &RvoConfig,
) -> Result<Vec2, GeometryError> {
    let me = track.snapshot();
    let v = rvo::compute_new_velocity_with_pref(&me, track.velocity, neighbors, cfg)?;
    Ok(track.estimate + v * cfg.dt)
}

/// Trains one motion model per pedestrian on `history`, stepping all
/// pedestrians frame by frame with the previous frame's ensemble means as
/// neighbors.
pub fn train(
    pedestrians: &[Pedestrian],
    history: &[ObservationFrame],
    cfg: &SessionConfig,
) -> Result<Vec<PedestrianModel>, Error> {
    let r = cfg.obs_cov();
    let mut models: Vec<Option<PedestrianModel>> = alloc::vec![None; pedestrians.len()];
    for frame in history {
        let snapshot: Vec<AgentState> = models
            .iter()
            .flatten()
            .map(|m| {
                let mean = m.mean();
                m.pedestrian.agent(mean.position, mean.velocity)
            })
            .collect();
        let step_one = |(ped, slot): (&Pedestrian, &mut Option<PedestrianModel>)| -> Result<(), GeometryError> {
            let z = frame.get(ped.id).and_then(|e| e.position);
            let mut rng = learn_rng(cfg.seed, ped.id, frame.frame_index);
            match slot {
                Some(model) => {
                    let center = model.mean().position;
                    let neighbors = neighbors_of(ped.id, center, &snapshot, &cfg.rvo);
                    model.step(&neighbors, z, &cfg.rvo, &cfg.learn, &mut rng)
                }
                None => {
                    if let Some(z) = z {
                        *slot = Some(PedestrianModel::new(*ped, z, r, &cfg.learn, &mut rng));
                    }
                    Ok(())
                }
            }
        };
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            pedestrians
                .par_iter()
                .zip(models.par_iter_mut())
                .map(step_one)
                .collect::<Result<(), _>>()?;
        }
        #[cfg(not(feature = "parallel"))]
        pedestrians
            .iter()
            .zip(models.iter_mut())
            .try_for_each(step_one)?;
    }
    pedestrians
        .iter()
        .zip(models)
        .map(|(p, m)| {
            let mut m = m.ok_or(Error::Unobserved(p.id))?;
            m.retrain();
            Ok(m)
        })
        .collect()
}

/// Output of [`run_tracking`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingRun {
    pub telemetry: Vec<TelemetryRecord>,
    pub propagations: u64,
    /// First tracked frame; earlier frames form the training window.
    pub first_frame: u64,
}

/// Starts a session on the first `cfg.learn.window` frames and tracks the
/// rest.
pub fn run_tracking(
    pedestrians: &[Pedestrian],
    observations: &[ObservationFrame],
    cfg: SessionConfig,
) -> Result<TrackingRun, Error> {
    let window = cfg.learn.window;
    if observations.len() <= window {
        return Err(Error::Config("need more frames than the training window"));
    }
    let (history, rest) = observations.split_at(window);
    let mut session = Session::start(pedestrians, history, cfg)?;
    let mut telemetry = Vec::with_capacity(rest.len() * pedestrians.len());
    for frame in rest {
        telemetry.extend(session.step(frame)?);
    }
    Ok(TrackingRun {
        telemetry,
        propagations: session.propagations(),
        first_frame: rest[0].frame_index,
    })
}

/// Tracking accuracy of `telemetry` against `truth` (indexed by frame).
pub fn accuracy(telemetry: &[TelemetryRecord], truth: &[Crowd], eps: f64) -> Result<f64, Error> {
    let mut pairs = Vec::with_capacity(telemetry.len());
    for rec in telemetry {
        let agent = truth
            .get(rec.frame as usize)
            .and_then(|c| c.get(rec.id))
            .ok_or(Error::UnknownPedestrian(rec.id))?;
        pairs.push((rec.estimate, agent.position));
    }
    Ok(crate::metrics::accuracy(
        pairs.iter().map(|(e, t)| (e, t)),
        eps,
    ))
}
