//! Random valid key events for DSL round-trip tests.

use proptest::prelude::*;
use vidrules_core::rules::{has_errors, validate_event, Constraint, ElementDecl, ElementKind, KeyEvent, PartName, StateDef};
use vidrules_core::BodyPart;

fn part_name() -> impl Strategy<Value = PartName> {
    prop_oneof![
        1 => Just(PartName::Head),
        8 => (0..BodyPart::ALL.len()).prop_map(|i| PartName::Joint(BodyPart::ALL[i])),
    ]
}

fn class_name() -> impl Strategy<Value = String> {
    prop_oneof![
        Just("ball".to_string()),
        Just("table".to_string()),
        Just("racket \"pro\"".to_string()),
        Just("a\\b\tc\nd".to_string()),
        "[a-z ]{1,8}".prop_filter("non-empty", |s| !s.trim().is_empty()),
    ]
}

// Degrees in half-steps so that every value prints exactly.
fn degrees() -> impl Strategy<Value = f64> {
    (0u32..720).prop_map(|h| h as f64 / 2.0)
}

fn threshold() -> impl Strategy<Value = f64> {
    prop_oneof![(1u32..100).prop_map(|k| k as f64 / 10.0), Just(0.3), Just(1e-3), Just(12.75)]
}

/// A pool of declarations shared by every state of the event, so that
/// variables named alike agree across states.
fn pool() -> impl Strategy<Value = Vec<ElementDecl>> {
    (1usize..=3, prop::collection::vec(class_name(), 0..3), prop::collection::vec((part_name(), 0usize..3), 0..4)).prop_map(
        |(np, classes, parts)| {
            let mut decls: Vec<ElementDecl> = (0..np).map(|i| ElementDecl::person(format!("P{i}"))).collect();
            for (i, c) in classes.into_iter().enumerate() {
                decls.push(ElementDecl::object(c, format!("O{i}")));
            }
            for (i, (p, owner)) in parts.into_iter().enumerate() {
                decls.push(ElementDecl::part(p, format!("K{i}"), format!("P{}", owner % np)));
            }
            decls
        },
    )
}

fn constraint(vars: Vec<String>) -> BoxedStrategy<Constraint> {
    let n = vars.len();
    let v = vars.clone();
    let dir = (0..n, 1..n.max(2), degrees(), degrees()).prop_map(move |(a, off, lo, hi)| Constraint::Direction {
        anchor: v[a].clone(),
        target: v[(a + off) % n].clone(),
        deg_min: lo,
        deg_max: hi,
    });
    let v = vars.clone();
    let contact = (0..n, 1..n.max(2), prop::option::of(0u32..=20)).prop_map(move |(a, off, t)| Constraint::Contact {
        a: v[a].clone(),
        b: v[(a + off) % n].clone(),
        iou_min: t.map(|t| t as f64 / 20.0),
    });
    let v = vars;
    let closer = (0..n, 1..n.max(2), 0..n, 1..n.max(2)).prop_map(move |(a, x, b, y)| Constraint::DistanceOrder {
        lesser: (v[a].clone(), v[(a + x) % n].clone()),
        greater: (v[b].clone(), v[(b + y) % n].clone()),
    });
    prop_oneof![dir, contact, closer].boxed()
}

/// Picks a subset of the pool for one state, pulling in owners of chosen parts.
fn state(name: String, pool: Vec<ElementDecl>) -> BoxedStrategy<StateDef> {
    let n = pool.len();
    prop::collection::vec(any::<bool>(), n)
        .prop_flat_map(move |mask| {
            let mut chosen: Vec<bool> = mask.clone();
            if !chosen.iter().any(|&b| b) {
                chosen[0] = true;
            }
            for (i, d) in pool.iter().enumerate() {
                if let (true, ElementKind::BodyPart { owner, .. }) = (chosen[i], &d.kind) {
                    let j = pool.iter().position(|p| &p.var == owner).unwrap();
                    chosen[j] = true;
                }
            }
            let elements: Vec<ElementDecl> =
                pool.iter().zip(&chosen).filter(|(_, &c)| c).map(|(d, _)| d.clone()).collect();
            let vars: Vec<String> = elements.iter().map(|d| d.var.clone()).collect();
            let name = name.clone();
            let cons = if vars.len() >= 2 {
                prop::collection::vec(constraint(vars), 0..4).boxed()
            } else {
                Just(Vec::new()).boxed()
            };
            cons.prop_map(move |constraints| StateDef { name: name.clone(), elements: elements.clone(), constraints })
        })
        .boxed()
}

pub fn event() -> impl Strategy<Value = KeyEvent> {
    (pool(), 1usize..=3, "[a-z][a-z0-9_]{0,6}", "[ -~]{1,12}")
        .prop_flat_map(|(pool, ns, id, action)| {
            let states: Vec<_> = (0..ns).map(|k| state(format!("s{k}"), pool.clone())).collect();
            (states, prop::collection::vec(threshold(), ns - 1), Just(id), Just(action))
        })
        .prop_map(|(states, intervals, id, action)| KeyEvent { event_id: id, action_label: action, states, intervals })
        .prop_filter("valid events only", |ev| !has_errors(&validate_event(ev)))
}
