mod common;

use proptest::prelude::*;
use vidrules_core::constraints::Measured;
use vidrules_core::matcher::{explain_mismatch, match_state};
use vidrules_core::rules::{parse_events, Constraint};
use vidrules_core::{BBox, BodyPart, FrameElements, GeometryConfig, Keypoint, ObjectDetection, PersonDetection, Point};

const SERVE_FRONT: &str = include_str!("../../../fixtures/serve_front.pdl");

proptest! {
    #![proptest_config(ProptestConfig { cases: 500, ..ProptestConfig::default() })]

    #[test]
    fn dropping_a_constraint_never_loses_embeddings(
        fe in common::frame(8),
        state in common::state(4, 4),
        pick in any::<prop::sample::Index>(),
    ) {
        let g = common::graph_of(&fe);
        let cfg = GeometryConfig::default();
        let before = match_state(&state, &g, &cfg, None);
        let mut relaxed = state.clone();
        if !relaxed.constraints.is_empty() {
            relaxed.constraints.remove(pick.index(state.constraints.len()));
        }
        let after = match_state(&relaxed, &g, &cfg, None);
        for e in &before {
            prop_assert!(after.contains(e));
        }
    }

    #[test]
    fn repeated_calls_agree(fe in common::frame(8), state in common::state(4, 4)) {
        let g = common::graph_of(&fe);
        let cfg = GeometryConfig::default();
        prop_assert_eq!(match_state(&state, &g, &cfg, None), match_state(&state, &g, &cfg, None));
        prop_assert_eq!(explain_mismatch(&state, &g, &cfg), explain_mismatch(&state, &g, &cfg));
    }

    #[test]
    fn report_empty_iff_matched(fe in common::frame(8), state in common::state(4, 4)) {
        let g = common::graph_of(&fe);
        let cfg = GeometryConfig::default();
        let matched = !match_state(&state, &g, &cfg, None).is_empty();
        prop_assert_eq!(explain_mismatch(&state, &g, &cfg).is_empty(), matched);
    }

    #[test]
    fn fixed_signature_filters(fe in common::frame(8), state in common::state(4, 4), pick in any::<prop::sample::Index>()) {
        let g = common::graph_of(&fe);
        let cfg = GeometryConfig::default();
        let all = match_state(&state, &g, &cfg, None);
        let fixed = match all.len() {
            0 => Default::default(),
            n => all[pick.index(n)].signature.clone(),
        };
        let pinned = match_state(&state, &g, &cfg, Some(&fixed));
        let expected: Vec<_> = all.iter().filter(|e| fixed.iter().all(|(k, v)| e.signature.get(k) == Some(v))).cloned().collect();
        prop_assert_eq!(pinned, expected);
    }
}

fn player(bbox: BBox, head: Point, wrist: Point) -> PersonDetection {
    let keypoints = BodyPart::ALL
        .iter()
        .map(|&part| {
            let at = match part {
                BodyPart::Nose => Some(head),
                BodyPart::RightWrist => Some(wrist),
                _ => None,
            };
            match at {
                Some(p) => Keypoint { part, x: p.x, y: p.y, score: 0.9, present: true },
                None => Keypoint { part, x: 0.0, y: 0.0, score: 0.0, present: false },
            }
        })
        .collect();
    PersonDetection { bbox, score: 0.9, keypoints }
}

/// Far player holding the ball at `deg` around the head, near player and table in place.
fn hold_scene(deg: f64, with_table: bool) -> FrameElements {
    let head = Point::new(560.0, 120.0);
    let rad = deg.to_radians();
    let ball = Point::new(head.x + 70.0 * rad.cos(), head.y + 70.0 * rad.sin());
    let far = player(BBox::new(520.0, 100.0, 80.0, 200.0).unwrap(), head, ball);
    let near = player(BBox::new(680.0, 430.0, 80.0, 200.0).unwrap(), Point::new(720.0, 450.0), Point::new(760.0, 520.0));
    let mut objects = vec![ObjectDetection { label: "ball".into(), bbox: BBox::centered(ball, 20.0).unwrap(), score: 0.9 }];
    if with_table {
        objects.push(ObjectDetection { label: "table".into(), bbox: BBox::new(440.0, 280.0, 400.0, 120.0).unwrap(), score: 0.9 });
    }
    FrameElements { frame_index: 0, persons: vec![far, near], objects }
}

#[test]
fn explain_reports_the_failing_direction() {
    let ev = parse_events(SERVE_FRONT).unwrap().remove(0);
    let hold = ev.state("hold").unwrap();
    let cfg = GeometryConfig::default();

    let ok = common::graph_of(&hold_scene(130.0, true));
    assert_eq!(match_state(hold, &ok, &cfg, None).len(), 1);
    let report = explain_mismatch(hold, &ok, &cfg);
    assert!(report.is_empty());

    let off = common::graph_of(&hold_scene(175.0, true));
    assert!(match_state(hold, &off, &cfg, None).is_empty());
    let report = explain_mismatch(hold, &off, &cfg);
    assert!(report.missing_types.is_empty());
    assert_eq!(report.failures.len(), 1);
    let f = &report.failures[0];
    assert!(matches!(&f.constraint, Constraint::Direction { anchor, target, .. } if anchor == "H" && target == "B"));
    assert!(!f.passed);
    let Some(Measured::Angle { degrees }) = f.measured else { panic!("no angle measured: {f:?}") };
    assert!((degrees - 175.0).abs() < 1e-9);
}

#[test]
fn explain_reports_missing_table() {
    let ev = parse_events(SERVE_FRONT).unwrap().remove(0);
    let hold = ev.state("hold").unwrap();
    let g = common::graph_of(&hold_scene(130.0, false));
    let report = explain_mismatch(hold, &g, &GeometryConfig::default());
    assert_eq!(report.missing_types, vec!["table".to_string()]);
}
