//! Line-oriented text formats for scenarios, trajectories, observations,
//! telemetry and learned motion parameters.
//!
//! Every file starts with a `version,1` line followed by one comma-separated
//! record per line. Floats are written in Rust's shortest round-trip form,
//! so `parse(format(x)) == x` bit for bit. Blank lines and lines starting
//! with `#` are ignored on input.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crowdtrack_core::learn::MotionParams;
use crowdtrack_core::observe::{ObservationEntry, ObservationFrame};
use crowdtrack_core::pipeline::TelemetryRecord;
use crowdtrack_core::rvo::{AgentState, Crowd, RvoConfig};
use crowdtrack_core::scenario::Scenario;
use crowdtrack_core::{Mat2, Vec2};
use thiserror::Error;

pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}, field `{field}`: cannot parse {value:?}")]
    Field {
        line: usize,
        field: &'static str,
        value: String,
    },
    #[error("unsupported version {0}")]
    Version(String),
    #[error("missing `{0}` record")]
    Missing(&'static str),
    #[error(transparent)]
    Invalid(#[from] crowdtrack_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One split record with its 1-based line number.
struct Record<'a> {
    line: usize,
    fields: Vec<&'a str>,
}

impl<'a> Record<'a> {
    fn expect_len(&self, names: &[&'static str]) -> Result<(), FormatError> {
        if self.fields.len() != names.len() {
            return Err(FormatError::Malformed {
                line: self.line,
                message: format!(
                    "expected {} fields ({}), found {}",
                    names.len(),
                    names.join(","),
                    self.fields.len()
                ),
            });
        }
        Ok(())
    }

    fn parse<T: FromStr>(&self, idx: usize, field: &'static str) -> Result<T, FormatError> {
        let raw = self.fields[idx];
        raw.trim().parse().map_err(|_| FormatError::Field {
            line: self.line,
            field,
            value: raw.to_string(),
        })
    }

    fn float(&self, idx: usize, field: &'static str) -> Result<f64, FormatError> {
        let v: f64 = self.parse(idx, field)?;
        if !v.is_finite() {
            return Err(FormatError::Field {
                line: self.line,
                field,
                value: self.fields[idx].to_string(),
            });
        }
        Ok(v)
    }

    fn vec2(&self, idx: usize, fx: &'static str, fy: &'static str) -> Result<Vec2, FormatError> {
        Ok(Vec2::new(self.float(idx, fx)?, self.float(idx + 1, fy)?))
    }
}

/// Splits `text` into records after checking the version header.
fn records(text: &str) -> Result<Vec<Record<'_>>, FormatError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (_, header) = lines.next().ok_or(FormatError::Missing("version"))?;
    match header.split_once(',') {
        Some(("version", v)) if v.trim() == VERSION.to_string() => {}
        Some(("version", v)) => return Err(FormatError::Version(v.to_string())),
        _ => return Err(FormatError::Missing("version")),
    }
    Ok(lines
        .map(|(line, l)| Record {
            line,
            fields: l.split(',').collect(),
        })
        .collect())
}

fn header() -> String {
    format!("version,{VERSION}\n")
}

pub fn format_scenario(s: &Scenario) -> String {
    let mut out = header();
    let c = &s.cfg;
    writeln!(out, "name,{}", s.name).unwrap();
    writeln!(
        out,
        "config,{},{},{},{},{},{},{}",
        c.time_horizon, c.dt, c.neighbor_dist, c.max_neighbors, c.goal_tolerance, s.frames, s.seed
    )
    .unwrap();
    for a in &s.agents {
        writeln!(
            out,
            "agent,{},{},{},{},{},{},{},{},{},{}",
            a.id,
            a.position.x,
            a.position.y,
            a.velocity.x,
            a.velocity.y,
            a.radius,
            a.pref_speed,
            a.max_speed,
            a.goal.x,
            a.goal.y
        )
        .unwrap();
    }
    out
}

const AGENT_FIELDS: [&str; 11] = [
    "agent",
    "id",
    "px",
    "py",
    "vx",
    "vy",
    "radius",
    "pref_speed",
    "max_speed",
    "gx",
    "gy",
];
const CONFIG_FIELDS: [&str; 8] = [
    "config",
    "tau",
    "dt",
    "neighbor_dist",
    "max_neighbors",
    "goal_tolerance",
    "frames",
    "seed",
];

/// Parses and validates a scenario.
pub fn parse_scenario(text: &str) -> Result<Scenario, FormatError> {
    let mut name = None;
    let mut config = None;
    let mut agents = Vec::new();
    for r in records(text)? {
        match r.fields[0] {
            "name" => {
                r.expect_len(&["name", "value"])?;
                name = Some(r.fields[1].to_string());
            }
            "config" => {
                r.expect_len(&CONFIG_FIELDS)?;
                let cfg = RvoConfig {
                    time_horizon: r.float(1, "tau")?,
                    dt: r.float(2, "dt")?,
                    neighbor_dist: r.float(3, "neighbor_dist")?,
                    max_neighbors: r.parse(4, "max_neighbors")?,
                    goal_tolerance: r.float(5, "goal_tolerance")?,
                };
                config = Some((
                    cfg,
                    r.parse::<u64>(6, "frames")?,
                    r.parse::<u64>(7, "seed")?,
                ));
            }
            "agent" => {
                r.expect_len(&AGENT_FIELDS)?;
                agents.push(AgentState {
                    id: r.parse(1, "id")?,
                    position: r.vec2(2, "px", "py")?,
                    velocity: r.vec2(4, "vx", "vy")?,
                    radius: r.float(6, "radius")?,
                    pref_speed: r.float(7, "pref_speed")?,
                    max_speed: r.float(8, "max_speed")?,
                    goal: r.vec2(9, "gx", "gy")?,
                });
            }
            other => {
                return Err(FormatError::Malformed {
                    line: r.line,
                    message: format!("unknown record type {other:?}"),
                })
            }
        }
    }
    let (cfg, frames, seed) = config.ok_or(FormatError::Missing("config"))?;
    let s = Scenario {
        name: name.unwrap_or_default(),
        agents,
        cfg,
        frames,
        seed,
    };
    s.validate()?;
    Ok(s)
}

/// One line of a trajectory file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRecord {
    pub frame: u64,
    pub id: u32,
    pub position: Vec2,
    pub velocity: Vec2,
}

pub fn trajectory_records(truth: &[Crowd]) -> Vec<TrajectoryRecord> {
    truth
        .iter()
        .flat_map(|c| {
            c.agents.iter().map(|a| TrajectoryRecord {
                frame: c.frame_index,
                id: a.id,
                position: a.position,
                velocity: a.velocity,
            })
        })
        .collect()
}

pub fn format_trajectories(truth: &[Crowd]) -> String {
    let mut out = header();
    for r in trajectory_records(truth) {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.frame, r.id, r.position.x, r.position.y, r.velocity.x, r.velocity.y
        )
        .unwrap();
    }
    out
}

pub fn parse_trajectories(text: &str) -> Result<Vec<TrajectoryRecord>, FormatError> {
    records(text)?
        .iter()
        .map(|r| {
            r.expect_len(&["frame", "id", "px", "py", "vx", "vy"])?;
            Ok(TrajectoryRecord {
                frame: r.parse(0, "frame")?,
                id: r.parse(1, "id")?,
                position: r.vec2(2, "px", "py")?,
                velocity: r.vec2(4, "vx", "vy")?,
            })
        })
        .collect()
}

pub fn format_observations(frames: &[ObservationFrame]) -> String {
    let mut out = header();
    for f in frames {
        for e in &f.entries {
            match e.position {
                Some(p) => writeln!(out, "{},{},1,{},{}", f.frame_index, e.id, p.x, p.y),
                None => writeln!(out, "{},{},0,,", f.frame_index, e.id),
            }
            .unwrap();
        }
    }
    out
}

/// Parses observation records; consecutive records with the same frame
/// index form one frame.
pub fn parse_observations(text: &str) -> Result<Vec<ObservationFrame>, FormatError> {
    let mut frames: Vec<ObservationFrame> = Vec::new();
    for r in records(text)? {
        r.expect_len(&["frame", "id", "visible", "ox", "oy"])?;
        let frame: u64 = r.parse(0, "frame")?;
        let id: u32 = r.parse(1, "id")?;
        let position = match r.fields[2].trim() {
            "1" => Some(r.vec2(3, "ox", "oy")?),
            "0" if r.fields[3].trim().is_empty() && r.fields[4].trim().is_empty() => None,
            "0" => {
                return Err(FormatError::Malformed {
                    line: r.line,
                    message: "occluded entry carries a position".into(),
                })
            }
            v => {
                return Err(FormatError::Field {
                    line: r.line,
                    field: "visible",
                    value: v.to_string(),
                })
            }
        };
        let entry = ObservationEntry { id, position };
        match frames.last_mut() {
            Some(f) if f.frame_index == frame => f.entries.push(entry),
            Some(f) if f.frame_index > frame => {
                return Err(FormatError::Malformed {
                    line: r.line,
                    message: format!("frame {frame} after frame {}", f.frame_index),
                })
            }
            _ => frames.push(ObservationFrame {
                frame_index: frame,
                entries: vec![entry],
            }),
        }
    }
    Ok(frames)
}

pub fn format_telemetry(records: &[TelemetryRecord]) -> String {
    let mut out = header();
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.frame, r.id, r.estimate.x, r.estimate.y, r.k, r.d, r.ess
        )
        .unwrap();
    }
    out
}

/// Parses telemetry. The file carries no confidence flag, so
/// `low_confidence` is always `false`.
pub fn parse_telemetry(text: &str) -> Result<Vec<TelemetryRecord>, FormatError> {
    records(text)?
        .iter()
        .map(|r| {
            r.expect_len(&["frame", "id", "est_x", "est_y", "k", "d", "ess"])?;
            Ok(TelemetryRecord {
                frame: r.parse(0, "frame")?,
                id: r.parse(1, "id")?,
                estimate: r.vec2(2, "est_x", "est_y")?,
                k: r.parse(4, "k")?,
                d: r.float(5, "d")?,
                ess: r.float(6, "ess")?,
                low_confidence: false,
            })
        })
        .collect()
}

pub fn format_motion_params(params: &[(u32, MotionParams)]) -> String {
    let mut out = header();
    for (id, p) in params {
        let [[q00, q01], [q10, q11]] = p.q.m;
        let [[r00, r01], [r10, r11]] = p.r.m;
        writeln!(
            out,
            "params,{id},{},{},{q00},{q01},{q10},{q11},{r00},{r01},{r10},{r11},{}",
            p.pref_velocity_est.x, p.pref_velocity_est.y, p.retrain_interval
        )
        .unwrap();
    }
    out
}

pub fn parse_motion_params(text: &str) -> Result<Vec<(u32, MotionParams)>, FormatError> {
    const FIELDS: [&str; 14] = [
        "params",
        "id",
        "pref_x",
        "pref_y",
        "q00",
        "q01",
        "q10",
        "q11",
        "r00",
        "r01",
        "r10",
        "r11",
        "retrain_interval",
        "",
    ];
    records(text)?
        .iter()
        .map(|r| {
            r.expect_len(&FIELDS[..13])?;
            if r.fields[0] != "params" {
                return Err(FormatError::Malformed {
                    line: r.line,
                    message: format!("unknown record type {:?}", r.fields[0]),
                });
            }
            let mat = |i: usize, names: [&'static str; 4]| -> Result<Mat2, FormatError> {
                Ok(Mat2::new(
                    r.float(i, names[0])?,
                    r.float(i + 1, names[1])?,
                    r.float(i + 2, names[2])?,
                    r.float(i + 3, names[3])?,
                ))
            };
            Ok((
                r.parse(1, "id")?,
                MotionParams {
                    pref_velocity_est: r.vec2(2, "pref_x", "pref_y")?,
                    q: mat(4, ["q00", "q01", "q10", "q11"])?,
                    r: mat(8, ["r00", "r01", "r10", "r11"])?,
                    retrain_interval: r.parse(12, "retrain_interval")?,
                },
            ))
        })
        .collect()
}

pub fn save(path: &Path, text: &str) -> Result<(), FormatError> {
    fs::write(path, text)?;
    Ok(())
}

pub fn save_scenario(path: &Path, s: &Scenario) -> Result<(), FormatError> {
    save(path, &format_scenario(s))
}

pub fn load_scenario(path: &Path) -> Result<Scenario, FormatError> {
    parse_scenario(&fs::read_to_string(path)?)
}

pub fn save_trajectories(path: &Path, truth: &[Crowd]) -> Result<(), FormatError> {
    save(path, &format_trajectories(truth))
}

pub fn load_trajectories(path: &Path) -> Result<Vec<TrajectoryRecord>, FormatError> {
    parse_trajectories(&fs::read_to_string(path)?)
}

pub fn load_observations(path: &Path) -> Result<Vec<ObservationFrame>, FormatError> {
    parse_observations(&fs::read_to_string(path)?)
}
