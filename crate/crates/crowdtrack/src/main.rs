use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use crowdtrack::bench::{self, BenchConfig, Workload};
use crowdtrack::io;
use crowdtrack::oracle;
use crowdtrack_core::adapt::BudgetParams;
use crowdtrack_core::learn::LearnConfig;
use crowdtrack_core::observe::ObsModel;
use crowdtrack_core::pipeline::{self, SessionConfig, Variant};
use crowdtrack_core::rvo::RvoConfig;
use crowdtrack_core::scenario::{self, ScenarioKind};
use crowdtrack_core::tracker::TrackerConfig;

#[derive(Parser)]
#[command(
    name = "crowdtrack",
    version,
    about = "Crowd tracking with RVO motion models and adaptive particle filters"
)]
struct Cli {
    /// Worker threads for per-pedestrian work (default: all cores).
    #[arg(long, global = true, env = "CROWDTRACK_THREADS")]
    threads: Option<usize>,
    /// Master seed: scenario seed for `gen`, tracker seed elsewhere.
    #[arg(long, global = true, env = "CROWDTRACK_SEED", default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a scenario file.
    Gen(GenArgs),
    /// Track one variant and write telemetry.
    Track(TrackArgs),
    /// Compare tracker variants.
    Bench(BenchArgs),
    /// Check the solvers against brute-force oracles.
    OracleCheck(OracleArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value = "crossing")]
    kind: ScenarioKind,
    #[arg(long, default_value_t = 50)]
    n: usize,
    #[arg(long, default_value_t = 300)]
    frames: u64,
    #[command(flatten)]
    rvo: RvoArgs,
    #[arg(short, long)]
    output: PathBuf,
    /// Also write the ground-truth trajectories.
    #[arg(long)]
    trajectories: Option<PathBuf>,
}

#[derive(Args)]
struct RvoArgs {
    #[arg(long, default_value_t = 2.0)]
    time_horizon: f64,
    #[arg(long, default_value_t = 0.04)]
    dt: f64,
    #[arg(long, default_value_t = 5.0)]
    neighbor_dist: f64,
    #[arg(long, default_value_t = 10)]
    max_neighbors: usize,
    #[arg(long, default_value_t = 0.1)]
    goal_tolerance: f64,
}

impl RvoArgs {
    fn config(&self) -> RvoConfig {
        RvoConfig {
            time_horizon: self.time_horizon,
            dt: self.dt,
            neighbor_dist: self.neighbor_dist,
            max_neighbors: self.max_neighbors,
            goal_tolerance: self.goal_tolerance,
        }
    }
}

#[derive(Args)]
struct ObsArgs {
    #[arg(long, default_value_t = 0.1)]
    noise_sigma: f64,
    #[arg(long, default_value_t = 0.05)]
    occlusion_rate: f64,
    #[arg(long, default_value_t = 5)]
    occlusion_min: u32,
    #[arg(long, default_value_t = 15)]
    occlusion_max: u32,
    /// Observation seed (default: the master seed).
    #[arg(long)]
    obs_seed: Option<u64>,
    /// Read observations from this file instead of synthesizing them.
    #[arg(long)]
    observations: Option<PathBuf>,
    /// Write the observation stream used.
    #[arg(long)]
    save_observations: Option<PathBuf>,
}

impl ObsArgs {
    fn model(&self, seed: u64) -> ObsModel {
        ObsModel {
            noise_sigma: self.noise_sigma,
            occlusion_rate: self.occlusion_rate,
            occlusion_min: self.occlusion_min,
            occlusion_max: self.occlusion_max,
            seed: self.obs_seed.unwrap_or(seed),
        }
    }

    fn workload(&self, scenario_path: &Path, seed: u64) -> anyhow::Result<Workload> {
        let scenario = io::load_scenario(scenario_path)
            .with_context(|| format!("reading {}", scenario_path.display()))?;
        let model = self.model(seed);
        let w = match &self.observations {
            None => Workload::new(scenario, &model)?,
            Some(path) => {
                let obs = io::load_observations(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                let truth = scenario::simulate_ground_truth(&scenario)?;
                anyhow::ensure!(
                    obs.len() == truth.len(),
                    "observation file has {} frames, scenario has {}",
                    obs.len(),
                    truth.len()
                );
                Workload::from_parts(scenario, truth, obs, model.seed)
            }
        };
        if let Some(path) = &self.save_observations {
            io::save(path, &io::format_observations(&w.observations))?;
        }
        Ok(w)
    }
}

#[derive(Args)]
struct TrackerArgs {
    #[arg(long, default_value_t = 0.15)]
    process_noise_sigma: f64,
    /// Observation noise assumed by the filter (m).
    #[arg(long, default_value_t = 0.1)]
    obs_noise_sigma: f64,
    #[arg(long, default_value_t = 100)]
    p_min: usize,
    #[arg(long, default_value_t = 1000)]
    p_max: usize,
    #[arg(long, default_value_t = 100)]
    p_add: usize,
    #[arg(long, default_value_t = 10)]
    hold_frames: u32,
    #[arg(long, default_value_t = 0.1)]
    decay_fraction: f64,
    #[arg(long, default_value_t = 3.0)]
    d_threshold: f64,
    #[arg(long, default_value_t = 1e-6)]
    w_threshold: f64,
    #[arg(long, default_value_t = 0.8)]
    velocity_persistence: f64,
    #[arg(long, default_value_t = 5.0)]
    reacquire_gate: f64,
    #[arg(long, default_value_t = 64)]
    ensemble_size: usize,
    #[arg(long, default_value_t = 50)]
    window: usize,
    #[arg(long, default_value_t = 50)]
    retrain_interval: u32,
    #[arg(long, default_value_t = 1.0)]
    pref_prior_sigma: f64,
    #[arg(long, default_value_t = 0.006)]
    initial_q_sigma: f64,
    #[arg(long, default_value_t = 0.002)]
    pref_diffusion: f64,
}

impl TrackerArgs {
    fn session(&self, seed: u64) -> SessionConfig {
        SessionConfig {
            rvo: RvoConfig::default(),
            tracker: TrackerConfig {
                process_noise_sigma: self.process_noise_sigma,
                obs_noise_sigma: self.obs_noise_sigma,
                budget: BudgetParams {
                    p_min: self.p_min,
                    p_max: self.p_max,
                    p_add: self.p_add,
                    hold_frames: self.hold_frames,
                    decay_fraction: self.decay_fraction,
                    d_threshold: self.d_threshold,
                },
                w_threshold: self.w_threshold,
                velocity_persistence: self.velocity_persistence,
                reacquire_gate: self.reacquire_gate,
                ..TrackerConfig::default()
            },
            learn: LearnConfig {
                ensemble_size: self.ensemble_size,
                window: self.window,
                retrain_interval: self.retrain_interval,
                pref_prior_sigma: self.pref_prior_sigma,
                initial_q_sigma: self.initial_q_sigma,
                pref_diffusion: self.pref_diffusion,
            },
            seed,
        }
    }
}

#[derive(Args)]
struct TrackArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value = "mlpf-rvo")]
    variant: Variant,
    #[command(flatten)]
    obs: ObsArgs,
    #[command(flatten)]
    tracker: TrackerArgs,
    #[arg(long, default_value_t = 0.5)]
    eps: f64,
    /// Telemetry output.
    #[arg(short, long)]
    output: PathBuf,
    /// Write the motion parameters learned on the training window.
    #[arg(long)]
    params: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Run all four variants.
    #[arg(long, conflicts_with = "variant")]
    all_variants: bool,
    #[arg(long, default_value = "mlpf-rvo")]
    variant: Variant,
    #[arg(long, default_value_t = 3)]
    reps: usize,
    #[arg(long, default_value_t = 50)]
    warmup: usize,
    #[arg(long, default_value_t = 0.5)]
    eps: f64,
    #[command(flatten)]
    obs: ObsArgs,
    #[command(flatten)]
    tracker: TrackerArgs,
    /// Report with timing columns.
    #[arg(short, long)]
    output: PathBuf,
    /// Report without timing columns.
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Directory for per-variant telemetry (k and d traces).
    #[arg(long)]
    traces: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    /// Random ORCA configurations to check.
    #[arg(long, default_value_t = 100)]
    cases: usize,
}

fn gen(args: &GenArgs, seed: u64) -> anyhow::Result<()> {
    let s = scenario::generate_scenario(args.kind, args.n, args.frames, seed, args.rvo.config())?;
    io::save_scenario(&args.output, &s)?;
    if let Some(path) = &args.trajectories {
        io::save_trajectories(path, &scenario::simulate_ground_truth(&s)?)?;
    }
    Ok(())
}

fn track(args: &TrackArgs, seed: u64) -> anyhow::Result<()> {
    let w = args.obs.workload(&args.scenario, seed)?;
    let cfg = SessionConfig {
        rvo: w.scenario.cfg,
        tracker: args.variant.apply(args.tracker.session(seed).tracker),
        ..args.tracker.session(seed)
    };
    let peds = w.pedestrians();
    let run = pipeline::run_tracking(&peds, &w.observations, cfg)?;
    io::save(&args.output, &io::format_telemetry(&run.telemetry))?;
    if let Some(path) = &args.params {
        let models = pipeline::train(&peds, &w.observations[..cfg.learn.window], &cfg)?;
        let params: Vec<_> = models.iter().map(|m| (m.pedestrian.id, m.params)).collect();
        io::save(path, &io::format_motion_params(&params))?;
    }
    let acc = pipeline::accuracy(&run.telemetry, &w.truth, args.eps)?;
    println!(
        "variant,{},accuracy,{acc},propagations,{}",
        args.variant, run.propagations
    );
    Ok(())
}

fn bench_cmd(args: &BenchArgs, seed: u64) -> anyhow::Result<()> {
    let w = args.obs.workload(&args.scenario, seed)?;
    let cfg = BenchConfig {
        session: args.tracker.session(seed),
        eps: args.eps,
        reps: args.reps,
        warmup: args.warmup,
    };
    let runs = if args.all_variants {
        bench::compare_variants(&w, &cfg)?
    } else {
        vec![bench::run_benchmark(&w, args.variant, &cfg)?]
    };
    let reports: Vec<_> = runs.iter().map(|(r, _)| r.clone()).collect();
    io::save(&args.output, &bench::format_report(&reports))?;
    if let Some(path) = &args.metrics {
        io::save(path, &bench::format_metrics(&reports))?;
    }
    if let Some(dir) = &args.traces {
        fs::create_dir_all(dir)?;
        for (r, telemetry) in &runs {
            let name = format!("{}.csv", r.variant.name().to_ascii_lowercase());
            io::save(&dir.join(name), &io::format_telemetry(telemetry))?;
        }
    }
    print!("{}", bench::format_report(&reports));
    Ok(())
}

fn oracle_check(args: &OracleArgs, seed: u64) -> anyhow::Result<()> {
    let results = oracle::check_all(args.cases, seed)?;
    let mut failed = 0;
    for r in &results {
        println!("{}", r);
        if !r.passed {
            failed += 1;
        }
    }
    anyhow::ensure!(failed == 0, "{failed} oracle checks failed");
    Ok(())
}

/// Short machine-readable category of an error.
fn kind(e: &anyhow::Error) -> &'static str {
    for cause in e.chain() {
        if let Some(f) = cause.downcast_ref::<io::FormatError>() {
            return match f {
                io::FormatError::Io(_) => "io",
                io::FormatError::Invalid(_) => "config",
                _ => "format",
            };
        }
        if let Some(c) = cause.downcast_ref::<crowdtrack_core::Error>() {
            return match c {
                crowdtrack_core::Error::Geometry(_) => "geometry",
                crowdtrack_core::Error::Capacity { .. } => "capacity",
                _ => "config",
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return "io";
        }
    }
    "runtime"
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let seed = cli.seed;
    let result = bench::with_threads(cli.threads, || match &cli.command {
        Command::Gen(a) => gen(a, seed),
        Command::Track(a) => track(a, seed),
        Command::Bench(a) => bench_cmd(a, seed),
        Command::OracleCheck(a) => oracle_check(a, seed),
    })
    .and_then(|r| r);
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error,{},{msg}", kind(&e));
            ExitCode::FAILURE
        }
    }
}
