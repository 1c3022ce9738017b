use crowdtrack_core::adapt::{self, BudgetController, BudgetParams};
use crowdtrack_core::metrics;
use crowdtrack_core::observe::{self, ObsModel};
use crowdtrack_core::rvo::RvoConfig;
use crowdtrack_core::scenario::{self, ScenarioKind};
use crowdtrack_core::Vec2;
use proptest::prelude::*;

fn budget() -> impl Strategy<Value = BudgetParams> {
    (
        1usize..200,
        0usize..800,
        1usize..150,
        0u32..20,
        0.01..0.9f64,
        0.0..5.0f64,
    )
        .prop_map(
            |(p_min, extra, p_add, hold_frames, decay_fraction, d_threshold)| BudgetParams {
                p_min,
                p_max: p_min + extra,
                p_add,
                hold_frames,
                decay_fraction,
                d_threshold,
            },
        )
}

proptest! {
    #[test]
    fn budget_moves_in_bounded_steps(params in budget(), ds in prop::collection::vec(0.0..8.0f64, 1..100)) {
        let mut c = BudgetController::new(params, params.p_min);
        for d in ds {
            let k = c.k;
            let (next, up) = c.update(d);
            prop_assert_eq!(up.k, next.k);
            prop_assert!((params.p_min..=params.p_max).contains(&up.k));
            if d > params.d_threshold {
                prop_assert!(up.resample);
                prop_assert_eq!(up.k, (k + params.p_add).min(params.p_max));
            } else {
                prop_assert!(!up.resample);
                prop_assert!(up.k <= k && k - up.k <= c.decay_amount(k));
            }
            // Same state and input, same answer.
            prop_assert_eq!(c.update(d), (next, up));
            c = next;
        }
    }

    #[test]
    fn pruning_marks_exactly_the_light_particles(ws in prop::collection::vec(0.0..1.0f64, 0..50), t in 0.0..1.0f64, min in 0usize..20) {
        let d = adapt::propagation_reliability(&ws, t, min);
        let expected: Vec<usize> = (0..ws.len()).filter(|&i| ws[i] < t).collect();
        prop_assert_eq!(&d.prune, &expected);
        prop_assert_eq!(d.resample, ws.len() - expected.len() < min);
    }

    #[test]
    fn accuracy_is_monotone_in_eps(raw in prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64), 0..40), e0 in 0.0..2.0f64, de in 0.0..2.0f64) {
        let est: Vec<Vec2> = raw.iter().map(|&(x, y)| Vec2::new(x, y)).collect();
        let truth = vec![Vec2::ZERO; est.len()];
        let a = metrics::accuracy(est.iter().zip(&truth), e0);
        let b = metrics::accuracy(est.iter().zip(&truth), e0 + de);
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!(a <= b);
    }

    #[test]
    fn reliability_is_distance_over_scale(ax in -5.0..5.0f64, ay in -5.0..5.0f64, bx in -5.0..5.0f64, by in -5.0..5.0f64, s in 0.01..2.0f64) {
        let (a, b) = (Vec2::new(ax, ay), Vec2::new(bx, by));
        let d = adapt::motion_model_reliability(a, b, s);
        prop_assert!((d * s - a.distance(b)).abs() < 1e-12);
        prop_assert_eq!(d, adapt::motion_model_reliability(b, a, s));
    }
}

#[test]
fn scenarios_are_deterministic_and_valid() {
    for kind in ScenarioKind::ALL {
        let a = scenario::generate_scenario(kind, 16, 50, 3, RvoConfig::default()).unwrap();
        let b = scenario::generate_scenario(kind, 16, 50, 3, RvoConfig::default()).unwrap();
        assert_eq!(a, b);
        a.validate().unwrap();
        assert_eq!(a.agents.len(), 16);
        let truth = scenario::simulate_ground_truth(&a).unwrap();
        assert_eq!(truth.len(), 50);
        assert_eq!(truth, scenario::simulate_ground_truth(&b).unwrap());
    }
    let a =
        scenario::generate_scenario(ScenarioKind::Random, 16, 50, 3, RvoConfig::default()).unwrap();
    let c =
        scenario::generate_scenario(ScenarioKind::Random, 16, 50, 4, RvoConfig::default()).unwrap();
    assert_ne!(a.agents, c.agents);
}

#[test]
fn observations_replay_and_respect_the_model() {
    let s = scenario::generate_scenario(ScenarioKind::Hallway, 10, 200, 1, RvoConfig::default())
        .unwrap();
    let truth = scenario::simulate_ground_truth(&s).unwrap();
    let model = ObsModel {
        occlusion_rate: 0.05,
        occlusion_min: 5,
        occlusion_max: 15,
        seed: 6,
        ..ObsModel::default()
    };
    let seq = observe::observe_sequence(&truth, &model);
    assert_eq!(seq, observe::observe_sequence(&truth, &model));
    for i in [0usize, 17, 120, 199] {
        assert_eq!(seq[i], observe::observe(&truth[i], &model, i as u64));
    }

    // Every hidden run lasts between occlusion_min and occlusion_max frames,
    // apart from runs cut off by the end of the sequence.
    for a in &s.agents {
        let vis: Vec<bool> = seq.iter().map(|f| f.get(a.id).unwrap().visible()).collect();
        let mut run = 0;
        for (t, &v) in vis.iter().enumerate() {
            if v {
                if run > 0 {
                    assert!(
                        (5..=15).contains(&run),
                        "agent {} hidden {run} frames ending {t}",
                        a.id
                    );
                }
                run = 0;
            } else {
                run += 1;
            }
        }
    }

    let clean = ObsModel {
        noise_sigma: 0.0,
        occlusion_rate: 0.0,
        ..model
    };
    for (frame, crowd) in observe::observe_sequence(&truth, &clean).iter().zip(&truth) {
        for (e, a) in frame.entries.iter().zip(&crowd.agents) {
            assert_eq!(e.position, Some(a.position));
        }
    }
}
