//! Four-variant comparison harness and throughput measurement.
//!
//! Timing covers [`Session::step`] only; scenario generation, ground truth,
//! observation synthesis, training and file I/O are excluded. Every variant
//! of a comparison consumes the same observation stream, identified by the
//! SHA-256 digest of its serialized form.

use std::fmt::Write as _;
use std::time::Instant;

use crowdtrack_core::observe::{self, ObsModel, ObservationFrame};
use crowdtrack_core::pipeline::{self, Session, SessionConfig, TelemetryRecord, Variant};
use crowdtrack_core::rvo::Crowd;
use crowdtrack_core::scenario::{self, Scenario};
use crowdtrack_core::tracker::Pedestrian;
use sha2::{Digest, Sha256};

use crate::io::{self, FormatError};

/// Scenario, ground truth and one observation stream.
#[derive(Debug, Clone)]
pub struct Workload {
    pub scenario: Scenario,
    pub truth: Vec<Crowd>,
    pub observations: Vec<ObservationFrame>,
    pub obs_seed: u64,
    /// Hex SHA-256 of the serialized observations.
    pub digest: String,
}

impl Workload {
    pub fn new(scenario: Scenario, obs: &ObsModel) -> anyhow::Result<Self> {
        obs.validate()?;
        let truth = scenario::simulate_ground_truth(&scenario)?;
        let observations = observe::observe_sequence(&truth, obs);
        Ok(Self::from_parts(scenario, truth, observations, obs.seed))
    }

    pub fn from_parts(
        scenario: Scenario,
        truth: Vec<Crowd>,
        observations: Vec<ObservationFrame>,
        obs_seed: u64,
    ) -> Self {
        let digest = stream_digest(&observations);
        Workload {
            scenario,
            truth,
            observations,
            obs_seed,
            digest,
        }
    }

    pub fn pedestrians(&self) -> Vec<Pedestrian> {
        self.scenario
            .agents
            .iter()
            .map(Pedestrian::from_agent)
            .collect()
    }
}

pub fn stream_digest(observations: &[ObservationFrame]) -> String {
    let hash = Sha256::digest(io::format_observations(observations).as_bytes());
    hash.iter().fold(String::with_capacity(64), |mut s, b| {
        write!(s, "{b:02x}").unwrap();
        s
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchConfig {
    /// Tracker, learning and RVO settings; the variant overrides the motion
    /// model and budget mode.
    pub session: SessionConfig,
    /// Accuracy radius (m).
    pub eps: f64,
    pub reps: usize,
    /// Tracked frames excluded from timing at the start of each repetition.
    pub warmup: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            session: SessionConfig::default(),
            eps: 0.5,
            reps: 3,
            warmup: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub scenario: String,
    pub variant: Variant,
    pub accuracy: f64,
    /// Median over repetitions of timed frames per second.
    pub mean_fps: f64,
    pub mean_k: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub propagations: u64,
    /// Tracked frames, excluding the training window.
    pub frames: usize,
    pub pedestrians: usize,
    pub scenario_seed: u64,
    pub obs_seed: u64,
    pub tracker_seed: u64,
    pub digest: String,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx]
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Trains on the first `learn.window` frames, then tracks the rest
/// `reps` times. Metrics come from the first repetition; later ones must
/// reproduce its telemetry exactly.
pub fn run_benchmark(
    w: &Workload,
    variant: Variant,
    cfg: &BenchConfig,
) -> anyhow::Result<(BenchReport, Vec<TelemetryRecord>)> {
    anyhow::ensure!(cfg.reps >= 1, "need at least one repetition");
    anyhow::ensure!(cfg.eps > 0.0, "eps must be positive");
    let session_cfg = SessionConfig {
        tracker: variant.apply(cfg.session.tracker),
        rvo: w.scenario.cfg,
        ..cfg.session
    };
    let window = session_cfg.learn.window;
    anyhow::ensure!(
        w.observations.len() > window,
        "scenario has {} frames, need more than the {window}-frame training window",
        w.observations.len()
    );
    let (history, rest) = w.observations.split_at(window);
    let peds = w.pedestrians();
    let warmup = cfg.warmup.min(rest.len() - 1);

    let mut first: Option<(Vec<TelemetryRecord>, u64)> = None;
    let mut fps = Vec::with_capacity(cfg.reps);
    let mut latencies = Vec::with_capacity(cfg.reps * (rest.len() - warmup));
    for _ in 0..cfg.reps {
        let mut session = Session::start(&peds, history, session_cfg)?;
        let mut telemetry = Vec::with_capacity(rest.len() * peds.len());
        let mut timed = 0.0;
        for (i, frame) in rest.iter().enumerate() {
            let start = Instant::now();
            let records = session.step(frame)?;
            let elapsed = start.elapsed().as_secs_f64();
            if i >= warmup {
                timed += elapsed;
                latencies.push(elapsed * 1e3);
            }
            telemetry.extend(records);
        }
        fps.push((rest.len() - warmup) as f64 / timed.max(f64::MIN_POSITIVE));
        match &first {
            None => first = Some((telemetry, session.propagations())),
            Some((t, _)) => anyhow::ensure!(*t == telemetry, "repetitions diverged for {variant}"),
        }
    }
    let (telemetry, propagations) = first.unwrap();
    latencies.sort_by(f64::total_cmp);
    let mean_k = telemetry.iter().map(|r| r.k as f64).sum::<f64>() / telemetry.len().max(1) as f64;
    let report = BenchReport {
        scenario: w.scenario.name.clone(),
        variant,
        accuracy: pipeline::accuracy(&telemetry, &w.truth, cfg.eps)?,
        mean_fps: median(fps),
        mean_k,
        p50_ms: percentile(&latencies, 0.5),
        p95_ms: percentile(&latencies, 0.95),
        propagations,
        frames: rest.len(),
        pedestrians: peds.len(),
        scenario_seed: w.scenario.seed,
        obs_seed: w.obs_seed,
        tracker_seed: session_cfg.seed,
        digest: w.digest.clone(),
    };
    Ok((report, telemetry))
}

/// Runs every variant in report order on the same observations.
pub fn compare_variants(
    w: &Workload,
    cfg: &BenchConfig,
) -> anyhow::Result<Vec<(BenchReport, Vec<TelemetryRecord>)>> {
    Variant::ALL
        .iter()
        .map(|&v| run_benchmark(w, v, cfg))
        .collect()
}

pub const REPORT_HEADER: &str = "scenario,variant,accuracy,mean_fps,mean_k,p50_ms,p95_ms,propagations,frames,pedestrians,scenario_seed,obs_seed,tracker_seed,obs_sha256";
pub const METRICS_HEADER: &str =
    "scenario,variant,accuracy,mean_k,propagations,frames,pedestrians,scenario_seed,obs_seed,tracker_seed,obs_sha256";

/// Full report with timing columns.
pub fn format_report(reports: &[BenchReport]) -> String {
    let mut out = String::from("# tracking-only throughput: times cover the per-frame tracker step, not detection, simulation or I/O\n");
    out.push_str(REPORT_HEADER);
    out.push('\n');
    for r in reports {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.scenario,
            r.variant,
            r.accuracy,
            r.mean_fps,
            r.mean_k,
            r.p50_ms,
            r.p95_ms,
            r.propagations,
            r.frames,
            r.pedestrians,
            r.scenario_seed,
            r.obs_seed,
            r.tracker_seed,
            r.digest
        )
        .unwrap();
    }
    out
}

/// Deterministic columns only, for byte comparison across runs.
pub fn format_metrics(reports: &[BenchReport]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in reports {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.scenario,
            r.variant,
            r.accuracy,
            r.mean_k,
            r.propagations,
            r.frames,
            r.pedestrians,
            r.scenario_seed,
            r.obs_seed,
            r.tracker_seed,
            r.digest
        )
        .unwrap();
    }
    out
}

/// Parses the output of [`format_report`].
pub fn parse_report(text: &str) -> Result<Vec<BenchReport>, FormatError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    match lines.next() {
        Some((_, h)) if h == REPORT_HEADER => {}
        _ => return Err(FormatError::Missing("report header")),
    }
    lines
        .map(|(line, l)| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 14 {
                return Err(FormatError::Malformed {
                    line,
                    message: format!("expected 14 fields, found {}", f.len()),
                });
            }
            fn field<T: std::str::FromStr>(
                line: usize,
                raw: &str,
                name: &'static str,
            ) -> Result<T, FormatError> {
                raw.parse().map_err(|_| FormatError::Field {
                    line,
                    field: name,
                    value: raw.to_string(),
                })
            }
            Ok(BenchReport {
                scenario: f[0].to_string(),
                variant: field(line, f[1], "variant")?,
                accuracy: field(line, f[2], "accuracy")?,
                mean_fps: field(line, f[3], "mean_fps")?,
                mean_k: field(line, f[4], "mean_k")?,
                p50_ms: field(line, f[5], "p50_ms")?,
                p95_ms: field(line, f[6], "p95_ms")?,
                propagations: field(line, f[7], "propagations")?,
                frames: field(line, f[8], "frames")?,
                pedestrians: field(line, f[9], "pedestrians")?,
                scenario_seed: field(line, f[10], "scenario_seed")?,
                obs_seed: field(line, f[11], "obs_seed")?,
                tracker_seed: field(line, f[12], "tracker_seed")?,
                digest: f[13].to_string(),
            })
        })
        .collect()
}

/// Runs `f` on a dedicated pool of `threads` workers, or on the global
/// pool when `None`.
pub fn with_threads<T: Send>(
    threads: Option<usize>,
    f: impl FnOnce() -> T + Send,
) -> anyhow::Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            anyhow::ensure!(n >= 1, "thread count must be at least 1");
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build()?;
            Ok(pool.install(f))
        }
    }
}
