//! Random small frames and states, plus a brute-force reference matcher.

#![allow(dead_code)]

pub mod dsl;

use std::collections::BTreeMap;

use proptest::prelude::*;
use vidrules_core::constraints::{eval_constraint, GeometryConfig};
use vidrules_core::matcher::{build_frame_graph, FrameGraph, NodeType};
use vidrules_core::rules::{has_errors, validate_event, Constraint, ElementDecl, ElementKind, KeyEvent, PartName, StateDef};
use vidrules_core::{BBox, BodyPart, FrameElements, IngestConfig, Keypoint, ObjectDetection, PersonDetection, TrackSet};

pub const PARTS: [BodyPart; 3] = [BodyPart::Nose, BodyPart::LeftWrist, BodyPart::RightWrist];
pub const CLASSES: [&str; 2] = ["ball", "table"];

fn coord(max: i32) -> impl Strategy<Value = f64> {
    (0..=max).prop_map(|v| v as f64)
}

fn bbox() -> impl Strategy<Value = BBox> {
    (coord(40), coord(40), 1..=20i32, 1..=20i32).prop_map(|(x, y, w, h)| BBox::new(x, y, w as f64, h as f64).unwrap())
}

fn person() -> impl Strategy<Value = PersonDetection> {
    (bbox(), prop::collection::vec(prop::option::weighted(0.6, (coord(60), coord(60))), PARTS.len())).prop_map(
        |(bbox, kps)| {
            let keypoints = BodyPart::ALL
                .iter()
                .map(|&part| match PARTS.iter().position(|&p| p == part).and_then(|i| kps[i]) {
                    Some((x, y)) => Keypoint { part, x, y, score: 0.9, present: true },
                    None => Keypoint { part, x: 0.0, y: 0.0, score: 0.0, present: false },
                })
                .collect();
            PersonDetection { bbox, score: 0.9, keypoints }
        },
    )
}

fn object() -> impl Strategy<Value = ObjectDetection> {
    (0..CLASSES.len(), bbox()).prop_map(|(c, bbox)| ObjectDetection { label: CLASSES[c].into(), bbox, score: 0.9 })
}

/// Frames of at most `max_nodes` graph nodes with small integer coordinates.
pub fn frame(max_nodes: usize) -> impl Strategy<Value = FrameElements> {
    (prop::collection::vec(person(), 0..=2), prop::collection::vec(object(), 0..=4)).prop_map(move |(persons, objects)| {
        let mut fe = FrameElements { frame_index: 0, persons, objects };
        while graph_size(&fe) > max_nodes {
            if fe.objects.pop().is_none() {
                fe.persons.pop();
            }
        }
        fe
    })
}

fn graph_size(fe: &FrameElements) -> usize {
    fe.objects.len() + fe.persons.iter().map(|p| 1 + p.keypoints.iter().filter(|k| k.present).count()).sum::<usize>()
}

pub fn graph_of(fe: &FrameElements) -> FrameGraph {
    build_frame_graph("v", fe, &TrackSet::singletons(fe), &IngestConfig::default()).unwrap()
}

fn half_degrees() -> impl Strategy<Value = f64> {
    (0u32..360).prop_map(|d| d as f64 + 0.5)
}

fn constraint(vars: Vec<String>) -> BoxedStrategy<Constraint> {
    let n = vars.len();
    let v = vars.clone();
    let dir = (0..n, 1..n, half_degrees(), half_degrees()).prop_map(move |(a, off, lo, hi)| Constraint::Direction {
        anchor: v[a].clone(),
        target: v[(a + off) % n].clone(),
        deg_min: lo,
        deg_max: hi,
    });
    let v = vars.clone();
    let contact = (0..n, 1..n, prop::option::of(prop::sample::select(vec![0.05, 0.123456, 0.3, 0.77])))
        .prop_map(move |(a, off, iou_min)| Constraint::Contact { a: v[a].clone(), b: v[(a + off) % n].clone(), iou_min });
    let v = vars;
    let closer = (0..n, 1..n, 0..n, 1..n).prop_map(move |(a, x, b, y)| Constraint::DistanceOrder {
        lesser: (v[a].clone(), v[(a + x) % n].clone()),
        greater: (v[b].clone(), v[(b + y) % n].clone()),
    });
    prop_oneof![dir, contact, closer].boxed()
}

/// Valid states with 1 to `max_elements` elements and up to `max_constraints` constraints.
pub fn state(max_elements: usize, max_constraints: usize) -> impl Strategy<Value = StateDef> {
    let decl = prop_oneof![
        Just(None),
        (0..CLASSES.len()).prop_map(|c| Some(ElementKind::Object { class: CLASSES[c].into() })),
        (0..4usize).prop_map(|p| {
            let part = if p == 3 { PartName::Head } else { PartName::Joint(PARTS[p]) };
            Some(ElementKind::BodyPart { part, owner: String::new() })
        }),
    ];
    (0..=2usize, prop::collection::vec((decl, any::<prop::sample::Index>()), 0..=max_elements))
        .prop_map(move |(np, rest)| {
            let mut elements: Vec<ElementDecl> = (0..np).map(|i| ElementDecl::person(format!("P{i}"))).collect();
            for (i, (kind, owner)) in rest.into_iter().enumerate() {
                if elements.len() >= max_elements {
                    break;
                }
                let var = format!("X{i}");
                match kind {
                    None if np == 0 => elements.push(ElementDecl::person(var)),
                    None => {}
                    Some(ElementKind::BodyPart { part, .. }) if np > 0 => {
                        elements.push(ElementDecl::part(part, var, format!("P{}", owner.index(np))))
                    }
                    Some(ElementKind::BodyPart { .. }) => {}
                    Some(kind) => elements.push(ElementDecl { var, kind }),
                }
            }
            if elements.is_empty() {
                elements.push(ElementDecl::object("ball", "B"));
            }
            elements
        })
        .prop_flat_map(move |elements| {
            let vars: Vec<String> = elements.iter().map(|e| e.var.clone()).collect();
            let cons = if vars.len() >= 2 {
                prop::collection::vec(constraint(vars), 0..=max_constraints).boxed()
            } else {
                Just(Vec::new()).boxed()
            };
            (Just(elements), cons)
        })
        .prop_map(|(elements, constraints)| StateDef { name: "s".into(), elements, constraints })
        .prop_filter("valid state", |s| {
            let ev = KeyEvent { event_id: "e".into(), action_label: "a".into(), states: vec![s.clone()], intervals: vec![] };
            !has_errors(&validate_event(&ev))
        })
}

fn node_fits(state: &StateDef, var: usize, node: usize, g: &FrameGraph, bound: &[usize]) -> bool {
    let n = &g.nodes[node];
    match &state.elements[var].kind {
        ElementKind::Person => n.node_type == NodeType::Person,
        ElementKind::Object { class } => n.node_type == NodeType::Object(class.clone()),
        ElementKind::BodyPart { part, owner } => {
            let owner_var = state.elements.iter().position(|e| &e.var == owner).unwrap();
            n.node_type == NodeType::BodyPart(part.keypoint()) && n.owner == Some(bound[owner_var])
        }
    }
}

/// Every embedding by exhaustive enumeration, as node indices in declaration
/// order, in lexicographic order.
pub fn brute_force(state: &StateDef, g: &FrameGraph, cfg: &GeometryConfig) -> Vec<Vec<usize>> {
    fn rec(k: usize, cur: &mut Vec<usize>, state: &StateDef, g: &FrameGraph, cfg: &GeometryConfig, out: &mut Vec<Vec<usize>>) {
        if k == state.elements.len() {
            let types_ok = (0..k).all(|v| node_fits(state, v, cur[v], g, cur));
            let binding: BTreeMap<&str, usize> = state.elements.iter().map(|e| e.var.as_str()).zip(cur.iter().copied()).collect();
            let lookup = |v: &str| binding.get(v).map(|&i| &g.nodes[i].element);
            if types_ok && state.constraints.iter().all(|c| eval_constraint(c, lookup, cfg).passed) {
                out.push(cur.clone());
            }
            return;
        }
        for node in 0..g.nodes.len() {
            if !cur.contains(&node) {
                cur.push(node);
                rec(k + 1, cur, state, g, cfg, out);
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    rec(0, &mut Vec::new(), state, g, cfg, &mut out);
    out
}
