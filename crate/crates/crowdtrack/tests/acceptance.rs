//! Acceptance suite. Runs every criterion in order, prints one line per
//! criterion and exits nonzero if any fails.

use std::process::ExitCode;
use std::time::Instant;

use crowdtrack::bench::{self, BenchConfig, Workload};
use crowdtrack::oracle;
use crowdtrack_core::adapt::{BudgetController, BudgetParams};
use crowdtrack_core::observe::ObsModel;
use crowdtrack_core::pipeline::{self, SessionConfig, Variant};
use crowdtrack_core::rvo::{AgentState, RvoConfig};
use crowdtrack_core::scenario::{self, Scenario, ScenarioKind};
use crowdtrack_core::tracker::{self, TrackerConfig};
use crowdtrack_core::Vec2;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> anyhow::Result<Outcome> {
    Ok(Outcome { passed, detail })
}

fn orca_oracle() -> anyhow::Result<Outcome> {
    let start = Instant::now();
    let a = oracle::orca_agreement(1000, 1)?;
    let secs = start.elapsed().as_secs_f64();
    outcome(
        a.passed() && secs < 300.0,
        format!(
            "{} agents in 1000 configurations, worst {:.2e} grid steps (limit 2), {} over, {secs:.0} s",
            a.cases, a.worst, a.failures
        ),
    )
}

fn collision_free() -> anyhow::Result<Outcome> {
    let mut worst = f64::INFINITY;
    let mut penetrations = 0usize;
    for seed in 0..100 {
        let s = scenario::generate_scenario(
            ScenarioKind::Random,
            20,
            1000,
            seed,
            RvoConfig::default(),
        )?;
        for crowd in scenario::simulate_ground_truth(&s)? {
            let agents = &crowd.agents;
            for (i, a) in agents.iter().enumerate() {
                for b in &agents[i + 1..] {
                    let gap = a.position.distance(b.position) - (a.radius + b.radius);
                    worst = worst.min(gap);
                    if gap < -1e-3 {
                        penetrations += 1;
                    }
                }
            }
        }
    }
    outcome(
        penetrations == 0,
        format!("100 scenarios x 1000 steps, {penetrations} penetrations beyond 1e-3 m, smallest gap {worst:.2e} m"),
    )
}

/// Four pedestrians walking parallel tracks 8 m apart, so none ever
/// enters another's neighborhood and every path is a straight line.
fn parallel_walkers(frames: u64) -> anyhow::Result<Scenario> {
    let agents = (0..4u32)
        .map(|i| {
            let y = 8.0 * i as f64;
            AgentState {
                id: i,
                position: Vec2::new(0.0, y),
                velocity: Vec2::ZERO,
                radius: 0.25,
                pref_speed: 1.0 + 0.1 * i as f64,
                goal: Vec2::new(1000.0, y),
                max_speed: 2.0,
            }
        })
        .collect();
    let s = Scenario {
        name: "parallel".into(),
        agents,
        cfg: RvoConfig::default(),
        frames,
        seed: 0,
    };
    s.validate()?;
    Ok(s)
}

fn particle_filter_sanity() -> anyhow::Result<Outcome> {
    let clean = ObsModel {
        noise_sigma: 0.0,
        occlusion_rate: 0.0,
        ..ObsModel::default()
    };
    let w = Workload::new(parallel_walkers(200)?, &clean)?;
    let mut worst = 0.0_f64;
    for variant in [Variant::SLPF_LIN, Variant::MLPF_LIN] {
        let cfg = SessionConfig {
            rvo: w.scenario.cfg,
            tracker: variant.apply(TrackerConfig {
                process_noise_sigma: 0.0,
                ..TrackerConfig::default()
            }),
            seed: 3,
            ..SessionConfig::default()
        };
        let run = pipeline::run_tracking(&w.pedestrians(), &w.observations, cfg)?;
        for r in &run.telemetry {
            let truth = w.truth[r.frame as usize].get(r.id).unwrap().position;
            worst = worst.max(r.estimate.distance(truth));
        }
    }

    // Weights (0.75, 0.25), four draws: the offset u in [0, 1/4) picks
    // cumulative positions u, u + 1/4, u + 1/2, u + 3/4, of which exactly
    // three fall below 0.75 for every u.
    let mut resample_ok = true;
    for i in 0..10_000 {
        let u = 0.25 * i as f64 / 10_000.0;
        let picks = tracker::systematic_indices(&[0.75, 0.25], 4, u);
        resample_ok &= picks == [0, 0, 0, 1];
    }
    outcome(
        worst <= 1e-9 && resample_ok,
        format!(
            "noiseless LIN worst error {worst:.2e} m (limit 1e-9); (0.75, 0.25) resampling exact over 10000 offsets: {resample_ok}"
        ),
    )
}

fn enkf_vs_kf() -> anyhow::Result<Outcome> {
    let mut worst = 0.0_f64;
    for seed in 0..10 {
        worst = worst.max(oracle::enkf_vs_kf(seed, 512, 100, 0.006, 0.002)?);
        worst = worst.max(oracle::enkf_vs_kf(seed, 512, 100, 0.0, 0.0)?);
    }
    outcome(
        worst <= 0.05,
        format!(
            "M = 512, 100 frames, 20 runs: worst |EnKF - KF| = {worst:.2e} KF std (limit 0.05)"
        ),
    )
}

fn budget_step_response() -> anyhow::Result<Outcome> {
    let params = BudgetParams::default();
    let mut c = BudgetController::new(params, params.p_min);
    let trace: Vec<f64> = (0..60)
        .map(|t| {
            if t == 5 {
                2.0 * params.d_threshold
            } else {
                0.0
            }
        })
        .collect();
    let ks: Vec<usize> = trace
        .iter()
        .map(|&d| {
            let (next, up) = c.update(d);
            c = next;
            up.k
        })
        .collect();

    // Expected schedule, written out independently.
    let mut expected = vec![100; 5];
    expected.extend([200; 11]);
    let mut k = 200usize;
    while expected.len() < trace.len() {
        k = (k - (k as f64 * 0.1).ceil() as usize).max(100);
        expected.push(k);
    }
    let jumps = ks.windows(2).filter(|w| w[1] > w[0]).count();
    let held = ks.iter().filter(|&&k| k == 200).count();
    outcome(
        ks == expected && jumps == 1 && held >= 10 && *ks.last().unwrap() == params.p_min,
        format!(
            "{jumps} jump of +{}, {held} frames at 200, decay {:?}, final k {}",
            ks[5] - ks[4],
            &ks[16..22],
            ks.last().unwrap()
        ),
    )
}

fn crossing(seed: u64) -> anyhow::Result<Scenario> {
    Ok(scenario::generate_scenario(
        ScenarioKind::Crossing,
        50,
        300,
        seed,
        RvoConfig::default(),
    )?)
}

fn speed_accuracy() -> anyhow::Result<Outcome> {
    let w = Workload::new(
        crossing(1)?,
        &ObsModel {
            seed: 2,
            ..ObsModel::default()
        },
    )?;
    let cfg = BenchConfig::default();
    let start = Instant::now();
    let (mlpf, _) = bench::run_benchmark(&w, Variant::MLPF_RVO, &cfg)?;
    let mlpf_secs = start.elapsed().as_secs_f64();
    let start = Instant::now();
    let (slpf, _) = bench::run_benchmark(&w, Variant::SLPF_RVO, &cfg)?;
    let slpf_secs = start.elapsed().as_secs_f64();
    let speedup = mlpf.mean_fps / slpf.mean_fps;
    let gap = (mlpf.accuracy - slpf.accuracy).abs();
    outcome(
        speedup >= 1.5 && gap <= 0.05 && mlpf_secs.max(slpf_secs) < 120.0,
        format!(
            "MLPF-RVO {:.1} fps acc {:.4} mean k {:.0}; SLPF-RVO {:.1} fps acc {:.4} k {:.0}; speedup {speedup:.2}x (min 1.5), gap {:.2} points (max 5); {mlpf_secs:.0} s / {slpf_secs:.0} s",
            mlpf.mean_fps, mlpf.accuracy, mlpf.mean_k, slpf.mean_fps, slpf.accuracy, slpf.mean_k, 100.0 * gap
        ),
    )
}

fn motion_model() -> anyhow::Result<Outcome> {
    let cfg = BenchConfig {
        reps: 1,
        warmup: 0,
        ..BenchConfig::default()
    };
    let mut passed = true;
    let mut rows = Vec::new();
    for obs_seed in [4, 6, 9, 11] {
        let obs = ObsModel {
            noise_sigma: 0.1,
            occlusion_rate: 0.02,
            occlusion_min: 25,
            occlusion_max: 75,
            seed: obs_seed,
        };
        let w = Workload::new(crossing(1)?, &obs)?;
        let acc = |v| -> anyhow::Result<f64> { Ok(bench::run_benchmark(&w, v, &cfg)?.0.accuracy) };
        let (mr, sr) = (acc(Variant::MLPF_RVO)?, acc(Variant::SLPF_RVO)?);
        let (ml, sl) = (acc(Variant::MLPF_LIN)?, acc(Variant::SLPF_LIN)?);
        passed &= mr > ml && sr > sl;
        rows.push(format!(
            "seed {obs_seed}: MLPF {mr:.3}/{ml:.3}, SLPF {sr:.3}/{sl:.3}"
        ));
    }
    outcome(
        passed,
        format!(
            "RVO/LIN accuracy, 25-75 frame occlusions: {}",
            rows.join("; ")
        ),
    )
}

fn determinism() -> anyhow::Result<Outcome> {
    let s = scenario::generate_scenario(ScenarioKind::Crossing, 20, 150, 5, RvoConfig::default())?;
    let w = Workload::new(
        s,
        &ObsModel {
            seed: 7,
            ..ObsModel::default()
        },
    )?;
    let cfg = BenchConfig {
        reps: 1,
        warmup: 0,
        session: SessionConfig {
            seed: 11,
            ..SessionConfig::default()
        },
        ..BenchConfig::default()
    };
    let run = |threads| -> anyhow::Result<(String, String)> {
        let runs = bench::with_threads(threads, || bench::compare_variants(&w, &cfg))??;
        let reports: Vec<_> = runs.iter().map(|(r, _)| r.clone()).collect();
        let traces: String = runs
            .iter()
            .map(|(_, t)| crowdtrack::io::format_telemetry(t))
            .collect();
        Ok((bench::format_metrics(&reports), traces))
    };
    let reference = run(Some(1))?;
    let mut identical = true;
    for threads in [Some(1), Some(2), Some(4), None] {
        identical &= run(threads)? == reference;
    }
    outcome(
        identical,
        format!("metrics and telemetry CSVs byte-identical across 1, 2, 4 and default threads: {identical}"),
    )
}

type Criterion = fn() -> anyhow::Result<Outcome>;

fn main() -> ExitCode {
    let criteria: [(&str, Criterion); 8] = [
        ("ORCA oracle equivalence", orca_oracle),
        ("collision-freeness", collision_free),
        ("particle-filter sanity", particle_filter_sanity),
        ("EnKF vs Kalman filter", enkf_vs_kf),
        ("budget step response", budget_step_response),
        ("MLPF speed at equal accuracy", speed_accuracy),
        ("RVO beats LIN", motion_model),
        ("determinism across threads", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let (passed, detail) = match check() {
            Ok(o) => (o.passed, o.detail),
            Err(e) => (false, format!("error: {e:#}")),
        };
        let status = if passed { "PASS" } else { "FAIL" };
        println!("criterion {} {status} {name}: {detail}", i + 1);
        if !passed {
            failed += 1;
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
