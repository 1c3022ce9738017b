use crowdtrack::io::{self, FormatError};
use crowdtrack_core::learn::MotionParams;
use crowdtrack_core::observe::{self, ObsModel};
use crowdtrack_core::pipeline::TelemetryRecord;
use crowdtrack_core::rvo::RvoConfig;
use crowdtrack_core::scenario::{self, ScenarioKind};
use crowdtrack_core::{Mat2, Vec2};
use proptest::prelude::*;

#[test]
fn scenarios_round_trip_for_every_kind() {
    for kind in ScenarioKind::ALL {
        let s = scenario::generate_scenario(kind, 9, 40, 2, RvoConfig::default()).unwrap();
        let text = io::format_scenario(&s);
        assert!(text.starts_with("version,1\n"));
        assert_eq!(io::parse_scenario(&text).unwrap(), s);
    }
}

#[test]
fn files_round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let s =
        scenario::generate_scenario(ScenarioKind::Circle, 6, 30, 0, RvoConfig::default()).unwrap();
    let truth = scenario::simulate_ground_truth(&s).unwrap();
    io::save_scenario(&dir.path().join("s.csv"), &s).unwrap();
    io::save_trajectories(&dir.path().join("t.csv"), &truth).unwrap();
    assert_eq!(io::load_scenario(&dir.path().join("s.csv")).unwrap(), s);
    assert_eq!(
        io::load_trajectories(&dir.path().join("t.csv")).unwrap(),
        io::trajectory_records(&truth)
    );

    let obs = observe::observe_sequence(
        &truth,
        &ObsModel {
            occlusion_rate: 0.2,
            ..ObsModel::default()
        },
    );
    io::save(&dir.path().join("o.csv"), &io::format_observations(&obs)).unwrap();
    assert_eq!(
        io::load_observations(&dir.path().join("o.csv")).unwrap(),
        obs
    );
    assert!(obs.iter().flat_map(|f| &f.entries).any(|e| !e.visible()));

    assert!(matches!(
        io::load_scenario(&dir.path().join("missing.csv")),
        Err(FormatError::Io(_))
    ));
}

#[test]
fn comments_and_blank_lines_are_skipped() {
    let s =
        scenario::generate_scenario(ScenarioKind::Hallway, 3, 10, 1, RvoConfig::default()).unwrap();
    let text = io::format_scenario(&s).replace('\n', "\n\n# note\n");
    assert_eq!(io::parse_scenario(&text).unwrap(), s);
}

#[test]
fn telemetry_and_params_round_trip() {
    let records = vec![
        TelemetryRecord {
            frame: 51,
            id: 3,
            estimate: Vec2::new(0.1, -2.5),
            k: 140,
            d: 0.37,
            ess: 88.25,
            low_confidence: false,
        },
        TelemetryRecord {
            frame: 52,
            id: 3,
            estimate: Vec2::new(1e-300, 7.0),
            k: 100,
            d: 12.0,
            ess: 1.0,
            low_confidence: false,
        },
    ];
    assert_eq!(
        io::parse_telemetry(&io::format_telemetry(&records)).unwrap(),
        records
    );

    let params = vec![(
        4,
        MotionParams {
            pref_velocity_est: Vec2::new(1.25, -0.125),
            q: Mat2::new(3.6e-5, 1e-7, 1e-7, 2.2e-5),
            r: Mat2::scaled_identity(0.01),
            retrain_interval: 50,
        },
    )];
    assert_eq!(
        io::parse_motion_params(&io::format_motion_params(&params)).unwrap(),
        params
    );
}

fn finite() -> impl Strategy<Value = f64> {
    prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO
}

proptest! {
    #[test]
    fn floats_round_trip_bit_exactly(x in finite(), y in finite(), d in finite(), ess in finite()) {
        let r = TelemetryRecord { frame: 0, id: 0, estimate: Vec2::new(x, y), k: 1, d, ess, low_confidence: false };
        let back = io::parse_telemetry(&io::format_telemetry(&[r])).unwrap();
        prop_assert_eq!(back[0].estimate.x.to_bits(), x.to_bits());
        prop_assert_eq!(back[0].estimate.y.to_bits(), y.to_bits());
        prop_assert_eq!(back[0].d.to_bits(), d.to_bits());
        prop_assert_eq!(back[0].ess.to_bits(), ess.to_bits());
    }
}

#[test]
fn malformed_input_reports_where() {
    let s =
        scenario::generate_scenario(ScenarioKind::Random, 3, 10, 1, RvoConfig::default()).unwrap();
    let text = io::format_scenario(&s);

    let bad_number = text.replacen("agent,0,", "agent,zero,", 1);
    let err = io::parse_scenario(&bad_number).unwrap_err();
    assert!(matches!(err, FormatError::Field { .. }), "{err}");
    assert!(err.to_string().contains("line"), "{err}");

    let short = text.lines().take(4).collect::<Vec<_>>().join("\n") + "\nagent,1,2\n";
    let err = io::parse_scenario(&short).unwrap_err();
    assert!(err.to_string().starts_with("line 5"), "{err}");

    let err = io::parse_scenario(&text.replacen("version,1", "version,9", 1)).unwrap_err();
    assert!(matches!(err, FormatError::Version(_)), "{err}");

    let no_config: String = text
        .lines()
        .filter(|l| !l.starts_with("config"))
        .map(|l| format!("{l}\n"))
        .collect();
    assert!(matches!(
        io::parse_scenario(&no_config),
        Err(FormatError::Missing(_))
    ));

    assert!(io::parse_observations("version,1\n2,0,1,0.5,0.5\n1,0,1,0.5,0.5\n").is_err());
    assert!(io::parse_observations("version,1\n0,0,0,0.5,0.5\n").is_err());
    let ok = io::parse_observations("version,1\n0,0,1,0.5,0.5\n0,1,0,,\n").unwrap();
    assert_eq!(ok[0].entries[1].position, None);
}

#[test]
fn invalid_scenarios_are_rejected_after_parsing() {
    let s =
        scenario::generate_scenario(ScenarioKind::Circle, 4, 10, 1, RvoConfig::default()).unwrap();
    let mut overlapping = s.clone();
    overlapping.agents[1].position = overlapping.agents[0].position;
    let err = io::parse_scenario(&io::format_scenario(&overlapping)).unwrap_err();
    assert!(matches!(err, FormatError::Invalid(_)), "{err}");
}
