//! Motion-parameter learning with an ensemble Kalman filter.
//!
//! Each pedestrian has an ensemble over the augmented state
//! `[position, velocity, preferred velocity]`. Members move by one ORCA step
//! toward their own preferred velocity, so the preferred velocity is
//! learned through its effect on the observed positions. An EM step
//! re-estimates the process-noise covariance from the innovation history.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, GeometryError};
use crate::geometry::{Mat2, Vec2};
use crate::math;
use crate::rvo::{self, AgentState, RvoConfig};
use crate::tracker::Pedestrian;

/// Added to a singular innovation covariance.
pub const REGULARIZATION: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnConfig {
    pub ensemble_size: usize,
    /// Frames of observations used for the initial training.
    pub window: usize,
    pub retrain_interval: u32,
    /// Spread of the initial preferred-velocity samples (m/s).
    pub pref_prior_sigma: f64,
    /// Initial per-axis position process noise (m per frame).
    pub initial_q_sigma: f64,
    /// Random-walk step of each member's preferred velocity (m/s per frame).
    pub pref_diffusion: f64,
}

impl Default for LearnConfig {
    fn default() -> Self {
        LearnConfig {
            ensemble_size: 64,
            window: 50,
            retrain_interval: 50,
            pref_prior_sigma: 1.0,
            initial_q_sigma: 0.006,
            pref_diffusion: 0.002,
        }
    }
}

impl LearnConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if self.ensemble_size < 2 {
            return Err(Error::Config("ensemble_size must be at least 2"));
        }
        if self.window < 2 {
            return Err(Error::Config("training window must be at least 2 frames"));
        }
        if self.retrain_interval == 0 {
            return Err(Error::Config("retrain_interval must be at least 1"));
        }
        for s in [
            self.pref_prior_sigma,
            self.initial_q_sigma,
            self.pref_diffusion,
        ] {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::Config(
                    "learning noise levels must be finite and non-negative",
                ));
            }
        }
        Ok(())
    }
}

/// Learned motion parameters of one pedestrian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionParams {
    pub pref_velocity_est: Vec2,
    /// Position process-noise covariance per frame.
    pub q: Mat2,
    /// Observation noise covariance.
    pub r: Mat2,
    pub retrain_interval: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Member {
    pub position: Vec2,
    pub velocity: Vec2,
    pub pref: Vec2,
}

impl Member {
    fn to_array(self) -> [f64; 6] {
        [
            self.position.x,
            self.position.y,
            self.velocity.x,
            self.velocity.y,
            self.pref.x,
            self.pref.y,
        ]
    }

    fn from_array(a: [f64; 6]) -> Self {
        Member {
            position: Vec2::new(a[0], a[1]),
            velocity: Vec2::new(a[2], a[3]),
            pref: Vec2::new(a[4], a[5]),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub pedestrian_id: u32,
    pub members: Vec<Member>,
}

fn normal2<R: Rng>(rng: &mut R) -> Vec2 {
    let x: f64 = rng.sample(StandardNormal);
    let y: f64 = rng.sample(StandardNormal);
    Vec2::new(x, y)
}

/// Orthonormal basis of the span of the all-ones vector and `columns`, by
/// modified Gram-Schmidt. Columns that are (numerically) dependent on the
/// earlier ones are skipped.
fn member_basis(n: usize, columns: impl IntoIterator<Item = Vec<f64>>) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let ones = alloc::vec![1.0; n];
    for mut c in core::iter::once(ones).chain(columns) {
        let norm0 = math::sqrt(c.iter().map(|v| v * v).sum());
        if norm0 == 0.0 {
            continue;
        }
        for _ in 0..2 {
            for b in &basis {
                let dot: f64 = c.iter().zip(b).map(|(x, y)| x * y).sum();
                for (x, y) in c.iter_mut().zip(b) {
                    *x -= dot * y;
                }
            }
        }
        let norm = math::sqrt(c.iter().map(|v| v * v).sum());
        if norm > 1e-9 * norm0 {
            c.iter_mut().for_each(|x| *x /= norm);
            basis.push(c);
        }
    }
    basis
}

fn anomaly_columns(members: &[Member]) -> Vec<Vec<f64>> {
    let n = members.len() as f64;
    let mut cols: Vec<Vec<f64>> = (0..6).map(|_| Vec::with_capacity(members.len())).collect();
    for m in members {
        for (c, v) in cols.iter_mut().zip(m.to_array()) {
            c.push(v);
        }
    }
    for c in &mut cols {
        let mean = c.iter().sum::<f64>() / n;
        c.iter_mut().for_each(|v| *v -= mean);
    }
    cols
}

/// `n` draws from `N(0, cov)` adjusted so that their sample mean is zero,
/// their sample covariance is exactly `cov` and they are uncorrelated with
/// every `basis` vector. Falls back to merely centered draws when too few
/// degrees of freedom remain.
fn matched_noise<R: Rng>(n: usize, cov: Mat2, basis: &[Vec<f64>], rng: &mut R) -> Vec<Vec2> {
    let mut draws: Vec<Vec2> = (0..n).map(|_| normal2(rng)).collect();
    if cov == Mat2::ZERO || n < 2 {
        return alloc::vec![Vec2::ZERO; n];
    }
    let target = cov.cholesky_psd();
    let fallback = |draws: &[Vec2]| {
        let mean = draws.iter().fold(Vec2::ZERO, |a, &d| a + d) / n as f64;
        draws.iter().map(|&d| target.mul_vec(d - mean)).collect()
    };
    if n < basis.len() + 3 {
        return fallback(&draws);
    }
    let raw = draws.clone();
    for _ in 0..2 {
        for b in basis {
            let dot = draws
                .iter()
                .zip(b)
                .fold(Vec2::ZERO, |a, (&d, &w)| a + d * w);
            for (d, &w) in draws.iter_mut().zip(b) {
                *d -= dot * w;
            }
        }
    }
    let sample = draws
        .iter()
        .fold(Mat2::ZERO, |a, &d| a + Mat2::outer(d, d))
        .scale(1.0 / (n as f64 - 1.0));
    let l = sample.cholesky_psd();
    match l.inverse() {
        Some(l_inv) if l.m[0][0] > 1e-12 && l.m[1][1] > 1e-12 => {
            let map = target.matmul(l_inv);
            draws.into_iter().map(|d| map.mul_vec(d)).collect()
        }
        _ => fallback(&raw),
    }
}

impl Ensemble {
    /// Members around `position` with preferred velocities drawn around
    /// `pref_mean`; each member's velocity equals its preferred velocity.
    /// The sample moments match the requested ones exactly.
    pub fn around<R: Rng>(
        pedestrian_id: u32,
        size: usize,
        position: Vec2,
        position_cov: Mat2,
        pref_mean: Vec2,
        pref_sigma: f64,
        rng: &mut R,
    ) -> Self {
        let ones = member_basis(size, []);
        let pos_noise = matched_noise(size, position_cov, &ones, rng);
        let basis = member_basis(
            size,
            [
                pos_noise.iter().map(|v| v.x).collect(),
                pos_noise.iter().map(|v| v.y).collect(),
            ],
        );
        let pref_cov = Mat2::scaled_identity(pref_sigma * pref_sigma);
        let pref_noise = matched_noise(size, pref_cov, &basis, rng);
        let members = pos_noise
            .into_iter()
            .zip(pref_noise)
            .map(|(dp, dv)| {
                let pref = pref_mean + dv;
                Member {
                    position: position + dp,
                    velocity: pref,
                    pref,
                }
            })
            .collect();
        Ensemble {
            pedestrian_id,
            members,
        }
    }

    /// Sample covariance of member positions.
    pub fn position_cov(&self) -> Mat2 {
        let n = self.members.len() as f64;
        let mean = self.members.iter().fold(Vec2::ZERO, |a, m| a + m.position) / n;
        self.members
            .iter()
            .fold(Mat2::ZERO, |acc, m| {
                acc + Mat2::outer(m.position - mean, m.position - mean)
            })
            .scale(1.0 / (n - 1.0))
    }

    pub fn mean(&self) -> Member {
        let mut acc = [0.0; 6];
        for m in &self.members {
            for (a, v) in acc.iter_mut().zip(m.to_array()) {
                *a += v;
            }
        }
        let n = self.members.len() as f64;
        Member::from_array(acc.map(|a| a / n))
    }
}

/// Moves every member one ORCA step toward its own preferred velocity and
/// adds `N(0, Q)` to its position. With `pref_diffusion > 0` each preferred
/// velocity first takes a Gaussian random-walk step. Both perturbations are
/// drawn with exact sample moments and no sample correlation with the
/// current anomalies.
pub fn enkf_predict<R: Rng>(
    e: &mut Ensemble,
    params: &MotionParams,
    me: &Pedestrian,
    neighbors: &[AgentState],
    cfg: &RvoConfig,
    pref_diffusion: f64,
    rng: &mut R,
) -> Result<(), GeometryError> {
    let n = e.members.len();
    if pref_diffusion > 0.0 {
        let basis = member_basis(n, anomaly_columns(&e.members));
        let cov = Mat2::scaled_identity(pref_diffusion * pref_diffusion);
        for (m, d) in e.members.iter_mut().zip(matched_noise(n, cov, &basis, rng)) {
            m.pref += d;
        }
    }
    for m in &mut e.members {
        m.pref = m.pref.clamp_length(me.max_speed);
        let agent = me.agent(m.position, m.velocity);
        let v = rvo::compute_new_velocity_with_pref(&agent, m.pref, neighbors, cfg)?;
        m.velocity = v;
        m.position += v * cfg.dt;
    }
    if params.q != Mat2::ZERO {
        let basis = member_basis(n, anomaly_columns(&e.members));
        for (m, w) in e
            .members
            .iter_mut()
            .zip(matched_noise(n, params.q, &basis, rng))
        {
            m.position += w;
        }
    }
    Ok(())
}

/// Stochastic EnKF analysis with a position observation `z`. Each member
/// moves toward its own perturbed copy of `z`. The perturbations have zero
/// sample mean, sample covariance exactly `R` and no sample correlation with
/// the forecast anomalies, so for linear dynamics the analysis mean and
/// covariance equal the Kalman filter's. Returns `true` when the innovation
/// covariance was singular and had to be regularized.
pub fn enkf_update<R: Rng>(e: &mut Ensemble, z: Vec2, r: Mat2, rng: &mut R) -> bool {
    let n = e.members.len();
    let mean = e.mean().to_array();
    let h_mean = Vec2::new(mean[0], mean[1]);
    let scale = 1.0 / (n as f64 - 1.0);

    let mut p_xh = [[0.0; 2]; 6];
    let mut p_hh = Mat2::ZERO;
    for m in &e.members {
        let a = m.to_array();
        let b = m.position - h_mean;
        for (row, (&ai, &mi)) in p_xh.iter_mut().zip(a.iter().zip(&mean)) {
            row[0] += (ai - mi) * b.x;
            row[1] += (ai - mi) * b.y;
        }
        p_hh = p_hh + Mat2::outer(b, b);
    }
    for row in &mut p_xh {
        row[0] *= scale;
        row[1] *= scale;
    }
    let mut s = (p_hh.scale(scale) + r).symmetrize();
    let mut regularized = false;
    let tiny = f64::EPSILON * s.trace() * s.trace();
    if s.det() <= tiny {
        s = s + Mat2::scaled_identity(REGULARIZATION);
        regularized = true;
    }
    let s_inv = s.inverse().unwrap_or(Mat2::ZERO);
    // Rows of K = P_xh S^-1; S is symmetric.
    let gain: [Vec2; 6] = p_xh.map(|row| s_inv.mul_vec(Vec2::new(row[0], row[1])));

    let basis = member_basis(n, anomaly_columns(&e.members));
    let perturbations = matched_noise(n, r, &basis, rng);

    for (m, eps) in e.members.iter_mut().zip(perturbations) {
        let innovation = z + eps - m.position;
        let mut a = m.to_array();
        for (ai, g) in a.iter_mut().zip(&gain) {
            *ai += g.dot(innovation);
        }
        *m = Member::from_array(a);
    }
    regularized
}

/// Process-noise covariance from a window of innovations: their sample
/// covariance minus `R`, projected onto the PSD cone. `None` for fewer than
/// two innovations.
pub fn em_update(innovations: &[Vec2], r: Mat2) -> Option<Mat2> {
    if innovations.len() < 2 {
        return None;
    }
    let n = innovations.len() as f64;
    let mean = innovations.iter().fold(Vec2::ZERO, |a, &v| a + v) / n;
    let cov = innovations
        .iter()
        .fold(Mat2::ZERO, |acc, &v| acc + Mat2::outer(v - mean, v - mean))
        .scale(1.0 / (n - 1.0));
    Some((cov - r).psd_projection())
}

/// One deterministic ORCA step from `state` toward the learned preferred
/// velocity; returns the predicted position.
pub fn predict_t_rvo(
    params: &MotionParams,
    me: &Pedestrian,
    state: &Member,
    neighbors: &[AgentState],
    cfg: &RvoConfig,
) -> Result<Vec2, GeometryError> {
    let agent = me.agent(state.position, state.velocity);
    let v = rvo::compute_new_velocity_with_pref(&agent, params.pref_velocity_est, neighbors, cfg)?;
    Ok(state.position + v * cfg.dt)
}

/// Ensemble, parameters and innovation window of one pedestrian.
#[derive(Debug, Clone, PartialEq)]
pub struct PedestrianModel {
    pub pedestrian: Pedestrian,
    pub ensemble: Ensemble,
    pub params: MotionParams,
    innovations: Vec<Vec2>,
    /// Forecast position spread at each innovation.
    spreads: Vec<Mat2>,
    window: usize,
    since_retrain: u32,
    /// Number of analyses that needed regularization.
    pub regularized: u32,
}

impl PedestrianModel {
    /// Starts a model at the first observed position of a pedestrian.
    pub fn new<R: Rng>(
        pedestrian: Pedestrian,
        first_obs: Vec2,
        r: Mat2,
        lcfg: &LearnConfig,
        rng: &mut R,
    ) -> Self {
        let ensemble = Ensemble::around(
            pedestrian.id,
            lcfg.ensemble_size,
            first_obs,
            r,
            Vec2::ZERO,
            lcfg.pref_prior_sigma,
            rng,
        );
        let q_var = lcfg.initial_q_sigma * lcfg.initial_q_sigma;
        PedestrianModel {
            pedestrian,
            ensemble,
            params: MotionParams {
                pref_velocity_est: Vec2::ZERO,
                q: Mat2::scaled_identity(q_var),
                r,
                retrain_interval: lcfg.retrain_interval,
            },
            innovations: Vec::new(),
            spreads: Vec::new(),
            window: lcfg.window,
            since_retrain: 0,
            regularized: 0,
        }
    }

    pub fn mean(&self) -> Member {
        self.ensemble.mean()
    }

    /// Predicted position for the next frame from the current mean state.
    pub fn t_rvo(&self, neighbors: &[AgentState], cfg: &RvoConfig) -> Result<Vec2, GeometryError> {
        predict_t_rvo(&self.params, &self.pedestrian, &self.mean(), neighbors, cfg)
    }

    /// One frame: forecast, then analysis when `obs` is present. Every
    /// `retrain_interval` frames the EM step refreshes `Q` and the
    /// preferred-velocity estimate.
    pub fn step<R: Rng>(
        &mut self,
        neighbors: &[AgentState],
        obs: Option<Vec2>,
        cfg: &RvoConfig,
        lcfg: &LearnConfig,
        rng: &mut R,
    ) -> Result<(), GeometryError> {
        enkf_predict(
            &mut self.ensemble,
            &self.params,
            &self.pedestrian,
            neighbors,
            cfg,
            lcfg.pref_diffusion,
            rng,
        )?;
        if let Some(z) = obs {
            let forecast = self.ensemble.mean().position;
            if self.innovations.len() == self.window {
                self.innovations.remove(0);
                self.spreads.remove(0);
            }
            self.innovations.push(z - forecast);
            self.spreads.push(self.ensemble.position_cov());
            if enkf_update(&mut self.ensemble, z, self.params.r, rng) {
                self.regularized += 1;
            }
        }
        self.since_retrain += 1;
        if self.since_retrain >= self.params.retrain_interval {
            self.retrain();
        }
        Ok(())
    }

    /// EM step and preferred-velocity refresh. The forecast spread already
    /// carries the current `Q`; only the part of the innovation covariance
    /// the ensemble did not anticipate is added to it, so a consistent
    /// filter keeps its `Q`. Excess below the sampling error of the window
    /// covariance is treated as noise rather than model error.
    pub fn retrain(&mut self) {
        let n = self.spreads.len().max(1) as f64;
        let spread = self
            .spreads
            .iter()
            .fold(Mat2::ZERO, |a, &s| a + s)
            .scale(1.0 / n);
        let expected = self.params.r + spread - self.params.q;
        let sampling = 0.5 * expected.trace() * math::sqrt(2.0 / (n - 1.0).max(1.0));
        if let Some(q) = em_update(
            &self.innovations,
            expected + Mat2::scaled_identity(sampling),
        ) {
            self.params.q = q;
        }
        self.params.pref_velocity_est = self.ensemble.mean().pref;
        self.since_retrain = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SimRng;
    use rand::SeedableRng;

    fn walker() -> Pedestrian {
        Pedestrian {
            id: 0,
            radius: 0.25,
            max_speed: 2.0,
        }
    }

    fn params(q: Mat2) -> MotionParams {
        MotionParams {
            pref_velocity_est: Vec2::new(1.0, 0.0),
            q,
            r: Mat2::ZERO,
            retrain_interval: 50,
        }
    }

    #[test]
    fn identical_members_follow_the_deterministic_step() {
        let mut rng = SimRng::seed_from_u64(1);
        let mut e = Ensemble::around(
            0,
            8,
            Vec2::new(1.0, 1.0),
            Mat2::ZERO,
            Vec2::new(0.5, 0.2),
            0.0,
            &mut rng,
        );
        let cfg = RvoConfig::default();
        let p = params(Mat2::ZERO);
        let before = e.mean();
        enkf_predict(&mut e, &p, &walker(), &[], &cfg, 0.0, &mut rng).unwrap();
        let expected = before.position + Vec2::new(0.5, 0.2) * cfg.dt;
        assert!(e.members.iter().all(|m| m == &e.members[0]));
        assert!(e.members[0].position.distance(expected) < 1e-15);
    }

    #[test]
    fn huge_r_leaves_members_alone() {
        let mut rng = SimRng::seed_from_u64(2);
        let mut e = Ensemble::around(
            0,
            32,
            Vec2::ZERO,
            Mat2::scaled_identity(0.01),
            Vec2::ZERO,
            0.3,
            &mut rng,
        );
        let before = e.clone();
        enkf_update(
            &mut e,
            Vec2::new(1.0, 1.0),
            Mat2::scaled_identity(1e12),
            &mut rng,
        );
        for (a, b) in e.members.iter().zip(&before.members) {
            assert!(a.position.distance(b.position) < 1e-5);
        }
    }

    #[test]
    fn certain_prior_ignores_observation() {
        let mut rng = SimRng::seed_from_u64(3);
        let mut e = Ensemble::around(
            0,
            16,
            Vec2::ZERO,
            Mat2::ZERO,
            Vec2::new(1.0, 0.0),
            0.0,
            &mut rng,
        );
        let before = e.clone();
        enkf_update(
            &mut e,
            Vec2::new(0.5, 0.0),
            Mat2::scaled_identity(0.01),
            &mut rng,
        );
        assert_eq!(e, before);
    }

    #[test]
    fn em_on_zero_innovations_is_zero() {
        let q = em_update(&[Vec2::ZERO; 10], Mat2::scaled_identity(0.01)).unwrap();
        assert_eq!(q, Mat2::ZERO);
        assert!(em_update(&[Vec2::ZERO], Mat2::ZERO).is_none());
    }

    #[test]
    fn noiseless_training_recovers_pref() {
        let cfg = RvoConfig::default();
        let lcfg = LearnConfig {
            initial_q_sigma: 0.0,
            pref_diffusion: 0.0,
            ..LearnConfig::default()
        };
        let mut rng = SimRng::seed_from_u64(4);
        let mut m = PedestrianModel::new(walker(), Vec2::ZERO, Mat2::ZERO, &lcfg, &mut rng);
        for f in 1..100 {
            let z = Vec2::new(f as f64 * cfg.dt, 0.0);
            m.step(&[], Some(z), &cfg, &lcfg, &mut rng).unwrap();
        }
        m.retrain();
        let err = m.params.pref_velocity_est.distance(Vec2::new(1.0, 0.0));
        assert!(err < 1e-6, "{:?}", m.params.pref_velocity_est);
    }
}
