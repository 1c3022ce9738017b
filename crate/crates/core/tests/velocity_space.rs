use crowdtrack_core::lp::{self, max_violation};
use crowdtrack_core::rvo::{self, AgentState, Crowd, RvoConfig};
use crowdtrack_core::{HalfPlane, Vec2};
use proptest::prelude::*;

fn plane() -> impl Strategy<Value = HalfPlane> {
    (-2.0..2.0f64, -2.0..2.0f64, 0.0..std::f64::consts::TAU)
        .prop_map(|(x, y, a)| HalfPlane::new(Vec2::new(x, y), Vec2::new(a.cos(), a.sin())).unwrap())
}

fn mirror(planes: &[HalfPlane]) -> Vec<HalfPlane> {
    planes.iter().map(HalfPlane::reflect_x).collect()
}

proptest! {
    #[test]
    fn lp2_success_is_feasible(planes in prop::collection::vec(plane(), 0..10), px in -3.0..3.0f64, py in -3.0..3.0f64, speed in 0.1..3.0f64) {
        let sol = lp::solve_lp2(&planes, Vec2::new(px, py), speed).unwrap();
        if sol.is_feasible() {
            prop_assert!(max_violation(&planes, sol.velocity) <= 1e-7);
            prop_assert!(sol.velocity.length() <= speed + 1e-9);
        }
    }

    #[test]
    fn lp2_mirror_symmetry(planes in prop::collection::vec(plane(), 0..8), px in -3.0..3.0f64, py in -3.0..3.0f64, speed in 0.1..3.0f64) {
        let a = lp::solve_lp2(&planes, Vec2::new(px, py), speed).unwrap();
        let b = lp::solve_lp2(&mirror(&planes), Vec2::new(px, -py), speed).unwrap();
        prop_assert_eq!(a.fail_index, b.fail_index);
        prop_assert_eq!(a.velocity.reflect_x(), b.velocity);
    }

    #[test]
    fn lp3_ignores_constraints_after_failure(planes in prop::collection::vec(plane(), 1..8), extra in prop::collection::vec(plane(), 1..4), speed in 0.1..2.0f64) {
        let sol = lp::solve_lp2(&planes, Vec2::ZERO, speed).unwrap();
        if let Some(fail) = sol.fail_index {
            let prefix: Vec<HalfPlane> = planes[..=fail].to_vec();
            let mut longer = prefix.clone();
            longer.extend(extra);
            let a = lp::solve_lp3(&prefix, fail, sol.velocity, speed).unwrap();
            let b = lp::solve_lp3(&longer, fail, sol.velocity, speed).unwrap();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn fallback_respects_the_speed_disc(planes in prop::collection::vec(plane(), 0..10), px in -3.0..3.0f64, py in -3.0..3.0f64, speed in 0.1..3.0f64) {
        let v = lp::solve_with_fallback(&planes, Vec2::new(px, py), speed).unwrap();
        prop_assert!(v.length() <= speed + 1e-9);
    }
}

fn agent(id: u32, x: f64, y: f64, gx: f64, gy: f64) -> AgentState {
    AgentState {
        id,
        position: Vec2::new(x, y),
        velocity: Vec2::ZERO,
        radius: 0.3,
        pref_speed: 1.3,
        goal: Vec2::new(gx, gy),
        max_speed: 2.0,
    }
}

fn small_crowd() -> impl Strategy<Value = Vec<AgentState>> {
    prop::collection::vec(
        (-4.0..4.0f64, -4.0..4.0f64, -6.0..6.0f64, -6.0..6.0f64),
        2..8,
    )
    .prop_filter_map("agents overlap", |raw| {
        let agents: Vec<AgentState> = raw
            .into_iter()
            .enumerate()
            .map(|(i, (x, y, gx, gy))| agent(i as u32, x, y, gx, gy))
            .collect();
        Crowd::new(agents.clone()).ok()?;
        for (i, a) in agents.iter().enumerate() {
            for b in &agents[i + 1..] {
                if a.position.distance(b.position) < a.radius + b.radius {
                    return None;
                }
            }
        }
        Some(agents)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn translation_invariance(agents in small_crowd(), dx in -10.0..10.0f64, dy in -10.0..10.0f64) {
        let cfg = RvoConfig::default();
        // Whole-metre offsets keep the translated arithmetic close enough
        // to compare trajectories tightly.
        let shift = Vec2::new(dx.round(), dy.round());
        let moved: Vec<AgentState> = agents
            .iter()
            .map(|a| AgentState { position: a.position + shift, goal: a.goal + shift, ..*a })
            .collect();
        let mut a = Crowd::new(agents).unwrap();
        let mut b = Crowd::new(moved).unwrap();
        for _ in 0..50 {
            a = rvo::step(&a, &cfg).unwrap();
            b = rvo::step(&b, &cfg).unwrap();
        }
        for (x, y) in a.agents.iter().zip(&b.agents) {
            prop_assert!((x.position + shift).distance(y.position) < 1e-9);
        }
    }

    #[test]
    fn reordering_does_not_change_velocities(agents in small_crowd()) {
        let cfg = RvoConfig::default();
        let forward = rvo::step(&Crowd::new(agents.clone()).unwrap(), &cfg).unwrap();
        let mut reversed = agents;
        reversed.reverse();
        let backward = rvo::step(&Crowd::new(reversed).unwrap(), &cfg).unwrap();
        for a in &forward.agents {
            prop_assert_eq!(a, backward.get(a.id).unwrap());
        }
    }

    #[test]
    fn speeds_never_exceed_the_limit(agents in small_crowd()) {
        let cfg = RvoConfig::default();
        let mut c = Crowd::new(agents).unwrap();
        for _ in 0..100 {
            c = rvo::step(&c, &cfg).unwrap();
            for a in &c.agents {
                prop_assert!(a.velocity.length() <= a.max_speed + 1e-9);
            }
        }
    }
}

#[test]
fn head_on_pair_stays_apart_for_500_steps() {
    let cfg = RvoConfig::default();
    let mut c = Crowd::new(vec![
        agent(0, -5.0, 0.0, 5.0, 0.0),
        agent(1, 5.0, 0.0, -5.0, 0.0),
    ])
    .unwrap();
    let mut closest = f64::INFINITY;
    for _ in 0..500 {
        c = rvo::step(&c, &cfg).unwrap();
        closest = closest.min(c.agents[0].position.distance(c.agents[1].position));
    }
    assert!(closest >= 0.6 - 1e-3, "closest approach {closest}");
    // Both reach their goals.
    assert!(c.agents[0].position.distance(Vec2::new(5.0, 0.0)) < 0.2);
}

#[test]
fn single_half_plane_example() {
    let hp = HalfPlane::new(Vec2::new(0.0, 0.5), Vec2::new(0.0, 1.0)).unwrap();
    let sol = lp::solve_lp2(&[hp], Vec2::new(1.0, 0.0), 2.0).unwrap();
    assert!(sol.velocity.distance(Vec2::new(1.0, 0.5)) < 1e-12);
}

#[test]
fn symmetric_surround_falls_back_to_rest() {
    // Three constraints 120 degrees apart, each demanding speed 3 inside a
    // disc of radius 1. Standing still balances the violations.
    let planes: Vec<HalfPlane> = (0..3)
        .map(|i| {
            let a = std::f64::consts::TAU * i as f64 / 3.0;
            let n = Vec2::new(a.cos(), a.sin());
            HalfPlane::new(n * 3.0, n).unwrap()
        })
        .collect();
    let v = lp::solve_with_fallback(&planes, Vec2::new(0.5, 0.0), 1.0).unwrap();
    assert!(v.length() < 1e-9, "{v:?}");
    assert!((max_violation(&planes, v) - 3.0).abs() < 1e-9);
}
