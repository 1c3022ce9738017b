use crowdtrack::bench::{self, BenchConfig, Workload};
use crowdtrack::oracle;
use crowdtrack_core::observe::ObsModel;
use crowdtrack_core::pipeline::{self, TelemetryRecord, Variant};
use crowdtrack_core::rvo::{self, AgentState, RvoConfig};
use crowdtrack_core::scenario::{self, ScenarioKind};
use crowdtrack_core::Vec2;

fn workload() -> Workload {
    let s = scenario::generate_scenario(ScenarioKind::Crossing, 8, 120, 4, RvoConfig::default())
        .unwrap();
    Workload::new(
        s,
        &ObsModel {
            seed: 4,
            ..ObsModel::default()
        },
    )
    .unwrap()
}

fn quick() -> BenchConfig {
    BenchConfig {
        reps: 1,
        warmup: 0,
        ..BenchConfig::default()
    }
}

#[test]
fn adaptive_budget_propagates_fewer_particles() {
    let w = workload();
    let (mlpf, _) = bench::run_benchmark(&w, Variant::MLPF_RVO, &quick()).unwrap();
    let (slpf, _) = bench::run_benchmark(&w, Variant::SLPF_RVO, &quick()).unwrap();
    assert!(mlpf.propagations < slpf.propagations);
    let p = quick().session.tracker.budget;
    assert_eq!(slpf.mean_k, p.p_max as f64);
    assert!(mlpf.mean_k >= p.p_min as f64 && mlpf.mean_k <= p.p_max as f64);
    assert_eq!(
        slpf.propagations,
        (p.p_max * slpf.frames * slpf.pedestrians) as u64
    );
}

#[test]
fn fixed_budget_lin_keeps_k_constant() {
    let (r, telemetry) = bench::run_benchmark(&workload(), Variant::SLPF_LIN, &quick()).unwrap();
    let k = quick().session.tracker.budget.p_max;
    assert!(telemetry.iter().all(|t| t.k == k));
    assert_eq!(r.mean_k, k as f64);
}

#[test]
fn comparison_matches_single_runs() {
    let w = workload();
    let cfg = quick();
    let all = bench::compare_variants(&w, &cfg).unwrap();
    assert_eq!(all.len(), 4);
    for ((report, telemetry), variant) in all.iter().zip(Variant::ALL) {
        let (single, t) = bench::run_benchmark(&w, variant, &cfg).unwrap();
        assert_eq!(report.variant, variant);
        assert_eq!(&t, telemetry);
        assert_eq!(
            bench::format_metrics(&[single]),
            bench::format_metrics(std::slice::from_ref(report))
        );
        assert_eq!(report.digest, w.digest);
        assert_eq!(
            report.accuracy,
            pipeline::accuracy(telemetry, &w.truth, cfg.eps).unwrap()
        );
    }
    assert_eq!(w.digest, bench::stream_digest(&w.observations));
    assert_eq!(w.digest.len(), 64);
}

#[test]
fn repetitions_reproduce_and_timing_is_sane() {
    let cfg = BenchConfig {
        reps: 2,
        warmup: 10,
        ..BenchConfig::default()
    };
    let (r, _) = bench::run_benchmark(&workload(), Variant::MLPF_LIN, &cfg).unwrap();
    assert!(r.mean_fps > 0.0 && r.mean_fps.is_finite());
    assert!(r.p50_ms <= r.p95_ms);
    assert_eq!(r.frames, 120 - cfg.session.learn.window);
}

#[test]
fn report_csv_round_trips() {
    let reports: Vec<_> = bench::compare_variants(&workload(), &quick())
        .unwrap()
        .into_iter()
        .map(|(r, _)| r)
        .collect();
    let text = bench::format_report(&reports);
    assert!(text.lines().any(|l| l == bench::REPORT_HEADER));
    assert_eq!(bench::parse_report(&text).unwrap(), reports);
    assert!(bench::format_metrics(&reports)
        .lines()
        .any(|l| l == bench::METRICS_HEADER));
    assert!(!bench::METRICS_HEADER.contains("fps"));
}

#[test]
fn bad_bench_config_is_rejected() {
    let cfg = BenchConfig { reps: 0, ..quick() };
    assert!(bench::run_benchmark(&workload(), Variant::MLPF_RVO, &cfg).is_err());
}

#[test]
fn head_on_halfplane_matches_sampled_velocity_obstacle() {
    let a = AgentState {
        id: 0,
        position: Vec2::new(-1.0, 0.0),
        velocity: Vec2::new(1.0, 0.0),
        radius: 0.3,
        pref_speed: 1.0,
        goal: Vec2::new(5.0, 0.0),
        max_speed: 2.0,
    };
    let b = AgentState {
        id: 1,
        position: Vec2::new(1.0, 0.0),
        velocity: Vec2::new(-1.0, 0.0),
        goal: Vec2::new(-5.0, 0.0),
        ..a
    };
    let cfg = RvoConfig::default();
    let p = b.position - a.position;
    let v_rel = a.velocity - b.velocity;
    let r = a.radius + b.radius;
    assert!(oracle::collides_within(p, v_rel, r, cfg.time_horizon));

    // Nearest velocity that avoids the obstacle, by dense sampling.
    let h = 2e-3;
    let mut nearest = f64::INFINITY;
    for i in -1500..=1500 {
        for j in -1500..=1500 {
            let v = v_rel + Vec2::new(i as f64 * h, j as f64 * h);
            let d = v.distance(v_rel);
            if d < nearest && !oracle::collides_within(p, v, r, cfg.time_horizon) {
                nearest = d;
            }
        }
    }
    let (point, normal) = oracle::vo_boundary_nearest(p, v_rel, r, cfg.time_horizon);
    let u = point - v_rel;
    assert!(
        (u.length() - nearest).abs() < 2.0 * h,
        "|u| {} sampled {nearest}",
        u.length()
    );
    assert!(u.dot(normal) > 0.0);

    // The engine splits the correction evenly: a's plane passes through
    // v_a + u / 2 with normal along u.
    let hp = rvo::compute_orca_halfplane(&a, &b, cfg.time_horizon, cfg.dt).unwrap();
    let want = oracle::orca_halfplane(&a, &b, cfg.time_horizon, cfg.dt);
    assert!(hp.point.distance(a.velocity + u * 0.5) < 1e-9);
    assert!(hp.point.distance(want.point) < 1e-9 && hp.normal.distance(want.normal) < 1e-9);
}

#[test]
fn circle_swap_step_matches_the_oracle() {
    let cfg = RvoConfig::default();
    // Exact coordinates, so opposite agents are exactly head-on.
    let corners = [(2.0, 0.0), (0.0, 2.0), (-2.0, 0.0), (0.0, -2.0)];
    let agents: Vec<AgentState> = (0..4u32)
        .map(|i| {
            let (x, y) = corners[i as usize];
            let at = Vec2::new(x, y);
            AgentState {
                id: i,
                position: at,
                velocity: -at * 0.5,
                radius: 0.3,
                pref_speed: 1.0,
                goal: -at,
                max_speed: 1.5,
            }
        })
        .collect();
    let mut speeds = Vec::new();
    for me in &agents {
        let others: Vec<AgentState> = agents.iter().filter(|o| o.id != me.id).copied().collect();
        let got = rvo::compute_new_velocity(me, &others, &cfg).unwrap();
        let step = 1e-3 * me.max_speed;
        let want = oracle::orca_velocity(me, &others, &cfg, step);
        assert!(
            got.distance(want.exact.velocity) < 2.0 * step,
            "{got:?} vs {:?}",
            want.exact.velocity
        );
        assert!(want.objective_gap(me.preferred_velocity(cfg.goal_tolerance), step) >= -1e-6);
        speeds.push(got.length());
    }
    // Rotational symmetry of the setup carries over to the speeds.
    assert!(
        speeds.iter().all(|s| (s - speeds[0]).abs() < 1e-9),
        "{speeds:?}"
    );
}

#[test]
fn mixed_accuracy_counts_each_record() {
    let s =
        scenario::generate_scenario(ScenarioKind::Circle, 4, 3, 0, RvoConfig::default()).unwrap();
    let truth = scenario::simulate_ground_truth(&s).unwrap();
    let offsets = [0.0, 0.49, 0.51, 3.0];
    let telemetry: Vec<TelemetryRecord> = (0..4u32)
        .map(|id| TelemetryRecord {
            frame: 2,
            id,
            estimate: truth[2].get(id).unwrap().position + Vec2::new(offsets[id as usize], 0.0),
            k: 100,
            d: 0.0,
            ess: 100.0,
            low_confidence: false,
        })
        .collect();
    assert_eq!(pipeline::accuracy(&telemetry, &truth, 0.5).unwrap(), 0.5);
    assert_eq!(oracle::naive_accuracy(&telemetry, &truth, 0.5), 0.5);
}

#[test]
fn quick_oracle_sweep_passes() {
    for check in oracle::check_all(30, 7).unwrap() {
        assert!(check.passed, "{check}");
    }
}
