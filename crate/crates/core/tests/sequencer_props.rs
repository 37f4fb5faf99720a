use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use vidrules_core::matcher::Embedding;
use vidrules_core::rules::{ElementDecl, KeyEvent, StateDef};
use vidrules_core::sequencer::{collapse_runs, detect_instances, generate_labels, SequencerConfig, Signature, StateRun};
use vidrules_core::TrackId;

const FPS: f64 = 25.0;

fn event(n: usize, intervals: Vec<f64>) -> KeyEvent {
    let states = (0..n)
        .map(|k| StateDef {
            name: format!("s{k}"),
            elements: vec![ElementDecl::person("P"), ElementDecl::object("ball", "B")],
            constraints: vec![],
        })
        .collect();
    KeyEvent { event_id: "e".into(), action_label: "a".into(), states, intervals }
}

fn sig(p: u32, b: u32) -> Signature {
    [("B".to_string(), TrackId(b)), ("P".to_string(), TrackId(p))].into_iter().collect()
}

/// Per state: frame -> matched signatures, over 60 frames and 2x2 identities.
type Matches = Vec<BTreeMap<u32, Vec<Embedding>>>;

fn matches(n: usize) -> impl Strategy<Value = Matches> {
    prop::collection::vec(prop::collection::btree_map(0u32..60, prop::collection::btree_set((0u32..2, 2u32..4), 1..3), 0..30), n)
        .prop_map(|per_state| {
            per_state
                .into_iter()
                .enumerate()
                .map(|(k, frames)| {
                    frames
                        .into_iter()
                        .map(|(f, sigs)| {
                            let es = sigs
                                .into_iter()
                                .map(|(p, b)| Embedding {
                                    state: format!("s{k}"),
                                    frame_index: f,
                                    assignment: BTreeMap::new(),
                                    signature: sig(p, b),
                                })
                                .collect();
                            (f, es)
                        })
                        .collect()
                })
                .collect()
        })
}

fn case() -> impl Strategy<Value = (KeyEvent, Matches, SequencerConfig)> {
    (1usize..=3)
        .prop_flat_map(|n| {
            (
                prop::collection::vec((1u32..=20).prop_map(|k| k as f64 * 0.05), n - 1),
                matches(n),
                prop::option::of((-4i32..=4).prop_map(|k| k as f64 * 0.05)),
            )
        })
        .prop_map(|(thr, m, min)| (event(thr.len() + 1, thr), m, SequencerConfig { min_delay_s: min }))
}

fn runs_of(ev: &KeyEvent, m: &Matches) -> Vec<Vec<StateRun>> {
    ev.states.iter().zip(m).map(|(s, m)| collapse_runs(&s.name, m)).collect()
}

fn has(m: &BTreeMap<u32, Vec<Embedding>>, frame: u32, s: &Signature) -> bool {
    m.get(&frame).is_some_and(|es| es.iter().any(|e| &e.signature == s))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 500, ..ProptestConfig::default() })]

    #[test]
    fn runs_are_maximal_and_exact((ev, m, _) in case()) {
        for (state, runs) in runs_of(&ev, &m).iter().zip(&m) {
            let mut covered = BTreeSet::new();
            for r in state {
                prop_assert!(r.start_frame <= r.end_frame);
                for f in r.start_frame..=r.end_frame {
                    prop_assert!(has(runs, f, &r.signature));
                    prop_assert!(covered.insert((f, r.signature.clone())));
                }
                prop_assert!(r.start_frame == 0 || !has(runs, r.start_frame - 1, &r.signature));
                prop_assert!(!has(runs, r.end_frame + 1, &r.signature));
            }
            let total: usize = runs.values().map(|es| es.len()).sum();
            prop_assert_eq!(covered.len(), total);
        }
    }

    #[test]
    fn instances_respect_order_thresholds_and_identity((ev, m, cfg) in case()) {
        let runs = runs_of(&ev, &m);
        let instances = detect_instances(&ev, "v", &runs, FPS, &cfg, 1);
        prop_assert_eq!(&instances, &detect_instances(&ev, "v", &runs, FPS, &cfg, 1));

        let mut used = BTreeSet::new();
        for (i, inst) in instances.iter().enumerate() {
            prop_assert_eq!(inst.instance_id, i as u32 + 1);
            prop_assert_eq!(inst.runs.len(), ev.states.len());
            for (k, r) in inst.runs.iter().enumerate() {
                prop_assert!(used.insert((k, r.clone())), "run reused");
                for (var, t) in &r.signature {
                    prop_assert_eq!(inst.signature.get(var), Some(t));
                }
            }
            for (k, pair) in inst.runs.windows(2).enumerate() {
                prop_assert!(pair[0].start_frame < pair[1].start_frame);
                let delay = (pair[1].start_frame as f64 - pair[0].end_frame as f64) / FPS;
                prop_assert!(delay <= ev.intervals[k]);
                if let Some(min) = cfg.min_delay_s {
                    prop_assert!(delay >= min);
                }
            }
        }

        for l in generate_labels(&instances) {
            let inst = &instances[l.instance_id as usize - 1];
            let k = l.state as usize - 1;
            let run = &inst.runs[k];
            prop_assert!(run.start_frame <= l.frame && l.frame <= run.end_frame);
            prop_assert!(has(&m[k], l.frame, &run.signature));
        }
    }

    #[test]
    fn single_state_coverage_grows_with_matches((_, m, cfg) in case(), extra in matches(1)) {
        let ev = event(1, vec![]);
        let small = vec![m[0].clone()];
        let mut big = small.clone();
        for (f, es) in &extra[0] {
            let slot = big[0].entry(*f).or_default();
            for e in es {
                if !slot.iter().any(|x| x.signature == e.signature) {
                    slot.push(e.clone());
                }
            }
        }
        let frames = |m: &Matches| -> BTreeSet<(u32, Signature)> {
            let inst = detect_instances(&ev, "v", &runs_of(&ev, m), FPS, &cfg, 1);
            inst.iter().flat_map(|i| (i.runs[0].start_frame..=i.runs[0].end_frame).map(move |f| (f, i.signature.clone()))).collect()
        };
        prop_assert!(frames(&small).is_subset(&frames(&big)));
    }
}

fn run(state: &str, a: u32, b: u32) -> StateRun {
    StateRun { state: state.into(), signature: sig(0, 2), start_frame: a, end_frame: b }
}

/// Extra matches can merge two runs into one, leaving a single instance
/// where there were two.
#[test]
fn merging_runs_can_merge_instances() {
    let ev = event(2, vec![0.2]);
    let cfg = SequencerConfig::default();
    let apart = [vec![run("s0", 0, 2), run("s0", 4, 5)], vec![run("s1", 3, 3), run("s1", 6, 6)]];
    assert_eq!(detect_instances(&ev, "v", &apart, FPS, &cfg, 1).len(), 2);
    let merged = [vec![run("s0", 0, 5)], vec![run("s1", 3, 3), run("s1", 6, 6)]];
    assert_eq!(detect_instances(&ev, "v", &merged, FPS, &cfg, 1).len(), 1);
}

#[test]
fn disjoint_instances_label_independently() {
    let ev = event(2, vec![0.3]);
    let a = [vec![run("s0", 10, 12)], vec![run("s1", 18, 18)]];
    let b = [vec![run("s0", 100, 101)], vec![run("s1", 104, 106)]];
    let both = [vec![run("s0", 10, 12), run("s0", 100, 101)], vec![run("s1", 18, 18), run("s1", 104, 106)]];
    let cfg = SequencerConfig::default();
    let la = generate_labels(&detect_instances(&ev, "v", &a, FPS, &cfg, 1));
    let lb = generate_labels(&detect_instances(&ev, "v", &b, FPS, &cfg, 2));
    let all = generate_labels(&detect_instances(&ev, "v", &both, FPS, &cfg, 1));
    assert_eq!(la.len() + lb.len(), all.len());
    let mut union = la;
    union.extend(lb);
    union.sort();
    assert_eq!(union, all);
}
