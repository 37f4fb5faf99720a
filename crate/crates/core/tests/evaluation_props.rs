use proptest::prelude::*;
use vidrules_core::evaluation::{dataset_stats, frame_precision, instance_recall, GroundTruthInterval};
use vidrules_core::FrameLabel;

fn label() -> impl Strategy<Value = FrameLabel> {
    (0usize..2, 0u32..200, 1u32..3, 1u32..20).prop_map(|(v, frame, state, instance_id)| FrameLabel {
        video_id: ["v1", "v2"][v].into(),
        frame,
        event_id: "e".into(),
        state,
        instance_id,
    })
}

fn gt() -> impl Strategy<Value = GroundTruthInterval> {
    (0usize..2, 0u32..200, 0u32..30).prop_map(|(v, start, len)| GroundTruthInterval {
        video_id: ["v1", "v2"][v].into(),
        action_label: "serve".into(),
        t_l: start,
        t_r: start + len,
    })
}

proptest! {
    #[test]
    fn recall_never_drops_when_labels_are_added(
        labels in prop::collection::vec(label(), 0..30),
        more in prop::collection::vec(label(), 0..30),
        gts in prop::collection::vec(gt(), 1..8),
    ) {
        let before = instance_recall(&labels, &gts, "serve").unwrap();
        let mut all = labels.clone();
        all.extend(more);
        prop_assert!(instance_recall(&all, &gts, "serve").unwrap() >= before);
    }

    #[test]
    fn metrics_ignore_instance_ids(
        labels in prop::collection::vec(label(), 1..30),
        gts in prop::collection::vec(gt(), 1..8),
        shift in 1u32..100,
    ) {
        let renumbered: Vec<_> = labels.iter().cloned().map(|mut l| { l.instance_id += shift; l }).collect();
        prop_assert_eq!(frame_precision(&labels, &gts, "serve"), frame_precision(&renumbered, &gts, "serve"));
        prop_assert_eq!(instance_recall(&labels, &gts, "serve"), instance_recall(&renumbered, &gts, "serve"));
        let p = frame_precision(&labels, &gts, "serve").unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
    }

    #[test]
    fn precision_is_one_inside_ground_truth(gts in prop::collection::vec(gt(), 1..8), picks in prop::collection::vec(any::<prop::sample::Index>(), 1..20)) {
        let labels: Vec<_> = picks
            .iter()
            .map(|i| {
                let g = &gts[i.index(gts.len())];
                FrameLabel { video_id: g.video_id.clone(), frame: g.t_l + (g.t_r - g.t_l) / 2, event_id: "e".into(), state: 1, instance_id: 1 }
            })
            .collect();
        prop_assert_eq!(frame_precision(&labels, &gts, "serve"), Ok(1.0));
    }

    #[test]
    fn stats_tally_labels(labels in prop::collection::vec(label(), 0..40)) {
        let s = dataset_stats(&labels, &["v1", "v2"]).unwrap();
        prop_assert_eq!(s.total(), labels.len());
        for v in &s.videos {
            prop_assert!(v.positions.windows(2).all(|w| w[0] <= w[1]));
            prop_assert_eq!(v.count, labels.iter().filter(|l| l.video_id == v.video_id).count());
        }
    }
}
