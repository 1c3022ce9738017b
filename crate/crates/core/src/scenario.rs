//! Synthetic crowd scenarios and their ground-truth trajectories.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;

use crate::error::Error;
use crate::geometry::Vec2;
use crate::math;
use crate::rng::{self, stream};
use crate::rvo::{self, AgentState, Crowd, RvoConfig};

pub const DEFAULT_RADIUS: f64 = 0.25;
pub const DEFAULT_PREF_SPEED: f64 = 1.3;
pub const DEFAULT_MAX_SPEED: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScenarioKind {
    /// Agents on a circle walking to the antipodal point.
    Circle,
    /// Two perpendicular streams meeting at the origin.
    Crossing,
    /// Two opposing streams in a corridor.
    Hallway,
    /// Uniform placements and goals.
    Random,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 4] = [
        ScenarioKind::Circle,
        ScenarioKind::Crossing,
        ScenarioKind::Hallway,
        ScenarioKind::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Circle => "circle",
            ScenarioKind::Crossing => "crossing",
            ScenarioKind::Hallway => "hallway",
            ScenarioKind::Random => "random",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or(Error::Config("unknown scenario kind"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub agents: Vec<AgentState>,
    pub cfg: RvoConfig,
    pub frames: u64,
    pub seed: u64,
}

impl Scenario {
    /// Checks configuration, agent validity, unique ids and that no two
    /// agents overlap at t = 0.
    pub fn validate(&self) -> Result<(), Error> {
        if self.frames < 1 {
            return Err(Error::Config("scenario needs at least one frame"));
        }
        self.cfg.validate()?;
        Crowd::new(self.agents.clone())?;
        for (i, a) in self.agents.iter().enumerate() {
            for b in &self.agents[i + 1..] {
                if a.position.distance(b.position) < a.radius + b.radius {
                    return Err(Error::Config("agents overlap at t = 0"));
                }
            }
        }
        Ok(())
    }

    pub fn initial_crowd(&self) -> Result<Crowd, Error> {
        Crowd::new(self.agents.clone())
    }
}

fn make_agent(id: usize, position: Vec2, goal: Vec2) -> AgentState {
    AgentState {
        id: id as u32,
        position,
        velocity: Vec2::ZERO,
        radius: DEFAULT_RADIUS,
        pref_speed: DEFAULT_PREF_SPEED,
        goal,
        max_speed: DEFAULT_MAX_SPEED,
    }
}

/// Builds a scenario of `kind` with `n_agents` agents. Deterministic in
/// `seed`.
pub fn generate_scenario(
    kind: ScenarioKind,
    n_agents: usize,
    frames: u64,
    seed: u64,
    cfg: RvoConfig,
) -> Result<Scenario, Error> {
    if n_agents == 0 {
        return Err(Error::Config("n_agents must be at least 1"));
    }
    cfg.validate()?;
    let mut rng = rng::substream(seed, stream::SCENARIO, kind as u64);
    let agents = match kind {
        ScenarioKind::Circle => circle(n_agents),
        ScenarioKind::Crossing => crossing(n_agents, &mut rng),
        ScenarioKind::Hallway => hallway(n_agents, &mut rng),
        ScenarioKind::Random => random(n_agents, &mut rng)?,
    };
    let scenario = Scenario {
        name: kind.name().to_string(),
        agents,
        cfg,
        frames,
        seed,
    };
    scenario.validate()?;
    Ok(scenario)
}

fn circle(n: usize) -> Vec<AgentState> {
    // Keep at least 2 r + 0.4 m of arc between neighbors.
    let spacing = 2.0 * DEFAULT_RADIUS + 0.4;
    let radius = (n as f64 * spacing / core::f64::consts::TAU).max(4.0);
    (0..n)
        .map(|i| {
            let angle = core::f64::consts::TAU * i as f64 / n as f64;
            let p = Vec2::new(radius * math::cos(angle), radius * math::sin(angle));
            make_agent(i, p, -p)
        })
        .collect()
}

/// Block of positions on a jittered grid, `depth` columns deep along
/// `forward`, centered on the line through `origin` along `forward`.
fn stream_block<R: Rng>(
    count: usize,
    lanes: usize,
    origin: Vec2,
    forward: Vec2,
    spacing: f64,
    rng: &mut R,
) -> Vec<Vec2> {
    let lateral = forward.perp();
    let jitter = 0.2 * spacing;
    (0..count)
        .map(|k| {
            let lane = k % lanes;
            let col = k / lanes;
            let offset = (lane as f64 - (lanes as f64 - 1.0) / 2.0) * spacing;
            let jx = rng.random_range(-jitter..=jitter);
            let jy = rng.random_range(-jitter..=jitter);
            origin - forward * (col as f64 * spacing) + lateral * offset + Vec2::new(jx, jy)
        })
        .collect()
}

fn crossing<R: Rng>(n: usize, rng: &mut R) -> Vec<AgentState> {
    let first = n.div_ceil(2);
    let second = n - first;
    let lanes = (math::ceil(math::sqrt(first as f64)) as usize).max(1);
    let spacing = 1.2;
    let approach = 4.0;
    let depth = first.div_ceil(lanes) as f64 * spacing;
    let travel = 2.0 * approach + depth + 4.0;

    let east = Vec2::new(1.0, 0.0);
    let north = Vec2::new(0.0, 1.0);
    let mut agents = Vec::with_capacity(n);
    for (k, p) in stream_block(first, lanes, east * -approach, east, spacing, rng)
        .into_iter()
        .enumerate()
    {
        agents.push(make_agent(k, p, p + east * travel));
    }
    for (k, p) in stream_block(second, lanes, north * -approach, north, spacing, rng)
        .into_iter()
        .enumerate()
    {
        agents.push(make_agent(first + k, p, p + north * travel));
    }
    agents
}

fn hallway<R: Rng>(n: usize, rng: &mut R) -> Vec<AgentState> {
    let first = n.div_ceil(2);
    let second = n - first;
    let lanes = first.clamp(1, 4);
    let spacing = 1.0;
    let approach = 3.0;
    let depth = first.div_ceil(lanes) as f64 * spacing;
    let travel = 2.0 * approach + depth + 4.0;

    let east = Vec2::new(1.0, 0.0);
    let west = -east;
    let mut agents = Vec::with_capacity(n);
    for (k, p) in stream_block(first, lanes, west * approach, east, spacing, rng)
        .into_iter()
        .enumerate()
    {
        agents.push(make_agent(k, p, p + east * travel));
    }
    for (k, p) in stream_block(second, lanes, east * approach, west, spacing, rng)
        .into_iter()
        .enumerate()
    {
        agents.push(make_agent(first + k, p, p + west * travel));
    }
    agents
}

fn random<R: Rng>(n: usize, rng: &mut R) -> Result<Vec<AgentState>, Error> {
    // Roughly 0.15 agents per square meter.
    let half = 0.5 * math::sqrt(n as f64 / 0.15).max(4.0);
    let min_sep = 2.0 * DEFAULT_RADIUS;
    let budget = 10 * n;

    let place = |rng: &mut R| -> Result<Vec<Vec2>, Error> {
        let mut points: Vec<Vec2> = Vec::with_capacity(n);
        let mut attempts = 0;
        while points.len() < n {
            if attempts >= budget {
                return Err(Error::Capacity {
                    placed: points.len(),
                    requested: n,
                    attempts,
                });
            }
            attempts += 1;
            let p = Vec2::new(rng.random_range(-half..half), rng.random_range(-half..half));
            if points.iter().all(|q| q.distance(p) >= min_sep) {
                points.push(p);
            }
        }
        Ok(points)
    };
    let starts = place(rng)?;
    let goals = place(rng)?;
    Ok(starts
        .into_iter()
        .zip(goals)
        .enumerate()
        .map(|(i, (p, g))| make_agent(i, p, g))
        .collect())
}

/// Runs the scenario: element 0 is the initial crowd and element `i` is the
/// crowd after `i` steps; the result has `frames` elements.
pub fn simulate_ground_truth(s: &Scenario) -> Result<Vec<Crowd>, Error> {
    s.validate()?;
    let mut frames = Vec::with_capacity(s.frames as usize);
    let mut crowd = s.initial_crowd()?;
    for _ in 1..s.frames {
        let next = rvo::step(&crowd, &s.cfg)?;
        frames.push(core::mem::replace(&mut crowd, next));
    }
    frames.push(crowd);
    Ok(frames)
}
