//! Frame graphs and the state matcher.
//!
//! A frame graph holds one node per detected person, surviving keypoint and
//! object. Relations between nodes are not materialized; the matcher
//! evaluates them on demand while it searches for embeddings of a state
//! graph. The search binds state variables one at a time, most constrained
//! first, and checks every constraint as soon as all of its variables are
//! bound.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::{
    check_direction, check_distance_order, contact, ConstraintOutcome, Element, Evaluation, GeometryConfig,
};
use crate::elements::{BodyPart, FrameElements, IngestConfig, KEYPOINT_COUNT};
use crate::rules::{Constraint, ElementKind, StateDef};
use crate::tracker::{DetectionRef, TrackId, TrackKind, TrackSet};

/// Default bound on embeddings returned per frame and state.
pub const DEFAULT_MAX_EMBEDDINGS: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", content = "type", rename_all = "snake_case")]
pub enum NodeType {
    Person,
    BodyPart(BodyPart),
    Object(String),
}

impl NodeType {
    pub fn type_name(&self) -> &str {
        match self {
            NodeType::Person => "person",
            NodeType::BodyPart(p) => p.name(),
            NodeType::Object(label) => label,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub node_type: NodeType,
    pub element: Element,
    /// For body parts, the owner's track.
    pub track: TrackId,
    /// Index of the owning person node, for body parts.
    pub owner: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameGraph {
    pub video_id: String,
    pub frame_index: u32,
    pub nodes: Vec<Node>,
    /// Per node: keypoint nodes owned by it (persons only).
    #[serde(skip)]
    parts: Vec<Option<[Option<u32>; KEYPOINT_COUNT]>>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("frame {frame}: {kind:?} detection {index} has no track")]
    MissingTrack { frame: u32, kind: TrackKind, index: usize },
}

impl FrameGraph {
    pub fn empty(video_id: impl Into<String>, frame_index: u32) -> Self {
        FrameGraph { video_id: video_id.into(), frame_index, nodes: Vec::new(), parts: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn push_person(&mut self, bbox: crate::geom::BBox, track: TrackId) -> usize {
        self.nodes.push(Node { node_type: NodeType::Person, element: Element::boxed(bbox), track, owner: None });
        self.parts.push(Some([None; KEYPOINT_COUNT]));
        self.nodes.len() - 1
    }

    /// Adds a keypoint node for `owner`, which must be a person node.
    pub fn push_part(&mut self, owner: usize, part: BodyPart, at: crate::geom::Point) -> usize {
        let n = &self.nodes[owner];
        let crate::constraints::Extent::Box(owner_box) = n.element.extent else {
            panic!("owner node {owner} is not a person");
        };
        let track = n.track;
        let idx = self.nodes.len();
        self.nodes.push(Node {
            node_type: NodeType::BodyPart(part),
            element: Element::keypoint(at, Some(owner_box)),
            track,
            owner: Some(owner),
        });
        self.parts.push(None);
        if let Some(slots) = self.parts[owner].as_mut() {
            slots[part.index()] = Some(idx as u32);
        }
        idx
    }

    pub fn push_object(&mut self, label: impl Into<String>, bbox: crate::geom::BBox, track: TrackId) -> usize {
        self.nodes.push(Node { node_type: NodeType::Object(label.into()), element: Element::boxed(bbox), track, owner: None });
        self.parts.push(None);
        self.nodes.len() - 1
    }

    /// The keypoint node of `part` owned by person node `person`.
    pub fn part_of(&self, person: usize, part: BodyPart) -> Option<usize> {
        self.parts.get(person)?.as_ref()?[part.index()].map(|i| i as usize)
    }

    /// Applies `f` to every element, e.g. to translate or rescale the frame.
    pub fn map_elements(&self, f: impl Fn(&Element) -> Element) -> FrameGraph {
        let mut g = self.clone();
        for n in &mut g.nodes {
            n.element = f(&n.element);
        }
        g
    }
}

/// Builds the element graph of one frame.
///
/// Person nodes are followed by their surviving keypoints in canonical order;
/// objects come last.
pub fn build_frame_graph(
    video_id: &str,
    fe: &FrameElements,
    tracks: &TrackSet,
    cfg: &IngestConfig,
) -> Result<FrameGraph, GraphError> {
    let mut g = FrameGraph::empty(video_id, fe.frame_index);
    let track = |kind, index| {
        tracks
            .track_of(DetectionRef { frame: fe.frame_index, kind, index })
            .ok_or(GraphError::MissingTrack { frame: fe.frame_index, kind, index })
    };
    for (i, p) in fe.persons.iter().enumerate() {
        let owner = g.push_person(p.bbox, track(TrackKind::Person, i)?);
        for k in &p.keypoints {
            if k.present && k.score >= cfg.keypoint_score_min {
                g.push_part(owner, k.part, k.position());
            }
        }
    }
    for (i, o) in fe.objects.iter().enumerate() {
        g.push_object(o.label.clone(), o.bbox, track(TrackKind::Object, i)?);
    }
    Ok(g)
}

/// A witness that a state occurs in a frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Embedding {
    pub state: String,
    pub frame_index: u32,
    /// Variable -> node index.
    pub assignment: BTreeMap<String, usize>,
    /// Person and object variables -> track.
    pub signature: BTreeMap<String, TrackId>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchOutcome {
    pub embeddings: Vec<Embedding>,
    /// True when the search stopped at the embedding cap.
    pub truncated: bool,
}

/// Why a state does not occur in a frame.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MismatchReport {
    /// Largest number of variables bound consistently by any partial assignment.
    pub best_partial: usize,
    /// Failing constraints at the deepest point the search reached.
    pub failures: Vec<ConstraintOutcome>,
    /// Element types the frame lacks (or lacks often enough).
    pub missing_types: Vec<String>,
}

impl MismatchReport {
    pub fn is_empty(&self) -> bool {
        self.failures.is_empty() && self.missing_types.is_empty()
    }
}

#[derive(Debug, Clone)]
enum VarType {
    Person,
    Object(String),
    Part { part: BodyPart, owner: usize },
}

impl VarType {
    fn accepts(&self, t: &NodeType) -> bool {
        match (self, t) {
            (VarType::Person, NodeType::Person) => true,
            (VarType::Object(c), NodeType::Object(l)) => c == l,
            (VarType::Part { part, .. }, NodeType::BodyPart(p)) => part == p,
            _ => false,
        }
    }

    fn type_name(&self) -> &str {
        match self {
            VarType::Person => "person",
            VarType::Object(c) => c,
            VarType::Part { part, .. } => part.name(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Check {
    Direction { anchor: usize, target: usize, deg_min: f64, deg_max: f64 },
    Contact { a: usize, b: usize, iou_min: Option<f64> },
    Distance { l0: usize, l1: usize, g0: usize, g1: usize },
}

impl Check {
    fn vars(&self) -> [usize; 4] {
        match *self {
            Check::Direction { anchor, target, .. } => [anchor, target, anchor, target],
            Check::Contact { a, b, .. } => [a, b, a, b],
            Check::Distance { l0, l1, g0, g1 } => [l0, l1, g0, g1],
        }
    }

    fn eval(&self, bound: &[usize], g: &FrameGraph, cfg: &GeometryConfig) -> Evaluation {
        let el = |v: usize| &g.nodes[bound[v]].element;
        match *self {
            Check::Direction { anchor, target, deg_min, deg_max } => check_direction(el(anchor), el(target), deg_min, deg_max),
            Check::Contact { a, b, iou_min } => contact(el(a), el(b), cfg, iou_min),
            Check::Distance { l0, l1, g0, g1 } => check_distance_order(el(l0), el(l1), el(g0), el(g1)),
        }
    }
}

/// A state resolved to variable indices, reusable across frames.
#[derive(Debug, Clone)]
pub struct CompiledState<'s> {
    state: &'s StateDef,
    vars: Vec<VarType>,
    checks: Vec<Check>,
}

const UNBOUND: usize = usize::MAX;

struct Plan {
    order: Vec<usize>,
    /// Candidate nodes per variable (unused for parts, which follow their owner).
    candidates: Vec<Vec<usize>>,
    /// Checks that become decidable after binding `order[d]`.
    checks_at: Vec<Vec<usize>>,
}

struct Search<'a, 'g> {
    cs: &'a CompiledState<'a>,
    g: &'g FrameGraph,
    cfg: &'a GeometryConfig,
    plan: &'a Plan,
    bound: Vec<usize>,
    used: Vec<bool>,
    cap: usize,
    found: Vec<Vec<usize>>,
    truncated: bool,
    explain: Option<Explain>,
}

#[derive(Default)]
struct Explain {
    best_depth: usize,
    failure_depth: usize,
    failures: BTreeMap<usize, Evaluation>,
    assoc_misses: BTreeSet<String>,
    budget: usize,
}

impl<'s> CompiledState<'s> {
    /// Resolves variable names to indices. The state should have passed validation;
    /// references to undeclared variables panic.
    pub fn new(state: &'s StateDef) -> Self {
        let index = |v: &str| {
            state
                .elements
                .iter()
                .position(|e| e.var == v)
                .unwrap_or_else(|| panic!("state `{}` references undeclared `{v}`", state.name))
        };
        let vars = state
            .elements
            .iter()
            .map(|e| match &e.kind {
                ElementKind::Person => VarType::Person,
                ElementKind::Object { class } => VarType::Object(class.clone()),
                ElementKind::BodyPart { part, owner } => VarType::Part { part: part.keypoint(), owner: index(owner) },
            })
            .collect();
        let checks = state
            .constraints
            .iter()
            .map(|c| match c {
                Constraint::Direction { anchor, target, deg_min, deg_max } => Check::Direction {
                    anchor: index(anchor),
                    target: index(target),
                    deg_min: *deg_min,
                    deg_max: *deg_max,
                },
                Constraint::Contact { a, b, iou_min } => Check::Contact { a: index(a), b: index(b), iou_min: *iou_min },
                Constraint::DistanceOrder { lesser, greater } => Check::Distance {
                    l0: index(&lesser.0),
                    l1: index(&lesser.1),
                    g0: index(&greater.0),
                    g1: index(&greater.1),
                },
            })
            .collect();
        CompiledState { state, vars, checks }
    }

    pub fn state(&self) -> &StateDef {
        self.state
    }

    fn plan(&self, g: &FrameGraph, fixed: Option<&BTreeMap<String, TrackId>>) -> Plan {
        let n = self.vars.len();
        let candidates: Vec<Vec<usize>> = self
            .vars
            .iter()
            .enumerate()
            .map(|(v, ty)| {
                if matches!(ty, VarType::Part { .. }) {
                    return Vec::new();
                }
                let pinned = fixed.and_then(|f| f.get(&self.state.elements[v].var)).copied();
                (0..g.nodes.len())
                    .filter(|&i| ty.accepts(&g.nodes[i].node_type) && pinned.is_none_or(|t| g.nodes[i].track == t))
                    .collect()
            })
            .collect();

        // Owners before their parts; otherwise fewest candidates first, ties by declaration order.
        let mut order = Vec::with_capacity(n);
        let mut placed = vec![false; n];
        while order.len() < n {
            let next = (0..n)
                .filter(|&v| !placed[v])
                .filter_map(|v| match self.vars[v] {
                    VarType::Part { owner, .. } => placed[owner].then_some((1, v)),
                    _ => Some((candidates[v].len(), v)),
                })
                .min()
                .map(|(_, v)| v)
                .expect("owners are persons, so some variable is always placeable");
            placed[next] = true;
            order.push(next);
        }

        let mut depth_of = vec![0; n];
        for (d, &v) in order.iter().enumerate() {
            depth_of[v] = d;
        }
        let mut checks_at = vec![Vec::new(); n];
        for (ci, c) in self.checks.iter().enumerate() {
            let d = c.vars().iter().map(|&v| depth_of[v]).max().unwrap_or(0);
            checks_at[d].push(ci);
        }
        Plan { order, candidates, checks_at }
    }

    /// All embeddings of the state into `g`, up to `cap`, sorted by the node
    /// indices of the variables in declaration order.
    pub fn search(
        &self,
        g: &FrameGraph,
        cfg: &GeometryConfig,
        fixed: Option<&BTreeMap<String, TrackId>>,
        cap: usize,
    ) -> MatchOutcome {
        if self.vars.is_empty() || cap == 0 {
            return MatchOutcome::default();
        }
        let plan = self.plan(g, fixed);
        let mut s = Search::new(self, g, cfg, &plan, cap, None);
        s.descend(0);
        let mut found = s.found;
        found.sort();
        MatchOutcome { embeddings: found.into_iter().map(|b| self.embedding(g, &b)).collect(), truncated: s.truncated }
    }

    /// Whether at least one embedding exists.
    pub fn matches(&self, g: &FrameGraph, cfg: &GeometryConfig) -> bool {
        !self.search(g, cfg, None, 1).embeddings.is_empty()
    }

    pub fn explain(&self, g: &FrameGraph, cfg: &GeometryConfig) -> MismatchReport {
        if self.matches(g, cfg) {
            return MismatchReport { best_partial: self.vars.len(), ..Default::default() };
        }

        let mut missing_types = Vec::new();
        let mut needed: BTreeMap<(u8, &str), usize> = BTreeMap::new();
        for ty in &self.vars {
            let key = match ty {
                VarType::Person => 0,
                VarType::Part { .. } => 1,
                VarType::Object(_) => 2,
            };
            *needed.entry((key, ty.type_name())).or_default() += 1;
        }
        for ((_, name), count) in &needed {
            let probe = self.vars.iter().find(|t| t.type_name() == *name).expect("counted from vars");
            let have = g.nodes.iter().filter(|n| probe.accepts(&n.node_type)).count();
            if have < *count {
                missing_types.push(name.to_string());
            }
        }

        let plan = self.plan(g, None);
        let explain = Explain { budget: 200_000, ..Default::default() };
        let mut s = Search::new(self, g, cfg, &plan, 1, Some(explain));
        s.descend(0);
        let ex = s.explain.take().expect("explain mode");

        if missing_types.is_empty() && ex.failures.is_empty() {
            missing_types.extend(ex.assoc_misses);
        }
        MismatchReport {
            best_partial: ex.best_depth,
            failures: ex
                .failures
                .into_iter()
                .map(|(ci, e)| ConstraintOutcome::new(&self.state.constraints[ci], e))
                .collect(),
            missing_types,
        }
    }

    fn embedding(&self, g: &FrameGraph, bound: &[usize]) -> Embedding {
        let mut assignment = BTreeMap::new();
        let mut signature = BTreeMap::new();
        for (v, decl) in self.state.elements.iter().enumerate() {
            assignment.insert(decl.var.clone(), bound[v]);
            if decl.is_tracked() {
                signature.insert(decl.var.clone(), g.nodes[bound[v]].track);
            }
        }
        Embedding { state: self.state.name.clone(), frame_index: g.frame_index, assignment, signature }
    }
}

impl<'a, 'g> Search<'a, 'g> {
    fn new(
        cs: &'a CompiledState<'a>,
        g: &'g FrameGraph,
        cfg: &'a GeometryConfig,
        plan: &'a Plan,
        cap: usize,
        explain: Option<Explain>,
    ) -> Self {
        Search {
            cs,
            g,
            cfg,
            plan,
            bound: vec![UNBOUND; cs.vars.len()],
            used: vec![false; g.nodes.len()],
            cap,
            found: Vec::new(),
            truncated: false,
            explain,
        }
    }

    /// Returns false once the search should stop.
    fn descend(&mut self, depth: usize) -> bool {
        if depth == self.plan.order.len() {
            self.found.push(self.bound.clone());
            if self.found.len() >= self.cap {
                self.truncated = self.explain.is_none();
                return false;
            }
            return true;
        }
        let v = self.plan.order[depth];
        let single;
        let cands: &[usize] = match self.cs.vars[v] {
            VarType::Part { part, owner } => match self.g.part_of(self.bound[owner], part) {
                Some(n) => {
                    single = [n];
                    &single
                }
                None => {
                    if let Some(ex) = self.explain.as_mut() {
                        let d = &self.cs.state.elements;
                        ex.assoc_misses.insert(format!("{} of {}", part.name(), d[owner].var));
                    }
                    &[]
                }
            },
            _ => &self.plan.candidates[v],
        };

        for &node in cands {
            if self.used[node] {
                if let (Some(ex), VarType::Part { part, owner }) = (self.explain.as_mut(), &self.cs.vars[v]) {
                    let d = &self.cs.state.elements;
                    ex.assoc_misses.insert(format!("another {} of {}", part.name(), d[*owner].var));
                }
                continue;
            }
            if let Some(ex) = self.explain.as_mut() {
                if ex.budget == 0 {
                    return false;
                }
                ex.budget -= 1;
            }
            self.bound[v] = node;
            self.used[node] = true;

            let mut ok = true;
            for &ci in &self.plan.checks_at[depth] {
                let e = self.cs.checks[ci].eval(&self.bound, self.g, self.cfg);
                if !e.passed {
                    ok = false;
                    match self.explain.as_mut() {
                        Some(ex) if depth + 1 > ex.failure_depth => {
                            ex.failure_depth = depth + 1;
                            ex.failures.clear();
                            ex.failures.insert(ci, e);
                        }
                        Some(ex) if depth + 1 == ex.failure_depth => {
                            ex.failures.entry(ci).or_insert(e);
                        }
                        Some(_) => {}
                        None => break,
                    }
                }
            }
            if ok {
                if let Some(ex) = self.explain.as_mut() {
                    ex.best_depth = ex.best_depth.max(depth + 1);
                }
            }
            let keep_going = !ok || self.descend(depth + 1);
            self.used[node] = false;
            self.bound[v] = UNBOUND;
            if !keep_going {
                return false;
            }
        }
        true
    }
}

/// Every embedding of `state` in `g` (uncapped), optionally restricted to
/// signatures extending `fixed`.
pub fn match_state(
    state: &StateDef,
    g: &FrameGraph,
    cfg: &GeometryConfig,
    fixed: Option<&BTreeMap<String, TrackId>>,
) -> Vec<Embedding> {
    CompiledState::new(state).search(g, cfg, fixed, usize::MAX).embeddings
}

pub fn explain_mismatch(state: &StateDef, g: &FrameGraph, cfg: &GeometryConfig) -> MismatchReport {
    CompiledState::new(state).explain(g, cfg)
}
