//! Geometric evaluation of single constraints against concrete elements.
//!
//! Every element is reduced to an anchor point (keypoint location for body
//! parts, box centre for persons and objects) and, for contact tests, a box.
//! Angles follow image coordinates: 0° points right, 90° points down, and
//! angles grow clockwise on screen.

use alloc::string::String;

use serde::{Deserialize, Serialize};

use crate::geom::{iou, normalize_degrees, BBox, Point};
use crate::rules::Constraint;

pub type AnchorPoint = Point;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeometryConfig {
    pub contact_iou_min: f64,
    /// Side of the box synthesized around a keypoint, as a fraction of the
    /// owner's box height.
    pub keypoint_box_scale: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig { contact_iou_min: 0.1, keypoint_box_scale: 0.1 }
    }
}

impl GeometryConfig {
    pub fn is_valid(&self) -> bool {
        self.contact_iou_min > 0.0
            && self.contact_iou_min <= 1.0
            && self.keypoint_box_scale > 0.0
            && self.keypoint_box_scale.is_finite()
    }
}

/// Spatial extent used by contact tests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extent {
    Box(BBox),
    /// A keypoint; its box is synthesized from the owner's box height.
    Keypoint { owner_box: Option<BBox> },
}

/// An element reduced to what the constraints need.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Element {
    pub anchor: AnchorPoint,
    pub extent: Extent,
}

impl Element {
    pub fn boxed(bbox: BBox) -> Self {
        Element { anchor: bbox.center(), extent: Extent::Box(bbox) }
    }

    pub fn keypoint(at: Point, owner_box: Option<BBox>) -> Self {
        Element { anchor: at, extent: Extent::Keypoint { owner_box } }
    }

    pub fn contact_box(&self, cfg: &GeometryConfig) -> Option<BBox> {
        match self.extent {
            Extent::Box(b) => Some(b),
            Extent::Keypoint { owner_box } => {
                let side = cfg.keypoint_box_scale * owner_box?.h;
                BBox::centered(self.anchor, side).ok()
            }
        }
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Element {
        let extent = match self.extent {
            Extent::Box(b) => Extent::Box(b.translated(dx, dy)),
            Extent::Keypoint { owner_box } => Extent::Keypoint { owner_box: owner_box.map(|b| b.translated(dx, dy)) },
        };
        Element { anchor: Point::new(self.anchor.x + dx, self.anchor.y + dy), extent }
    }

    pub fn scaled(&self, s: f64) -> Element {
        let extent = match self.extent {
            Extent::Box(b) => Extent::Box(b.scaled(s)),
            Extent::Keypoint { owner_box } => Extent::Keypoint { owner_box: owner_box.map(|b| b.scaled(s)) },
        };
        Element { anchor: Point::new(self.anchor.x * s, self.anchor.y * s), extent }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Measured {
    Angle { degrees: f64 },
    Iou { ratio: f64 },
    Distances { lesser: f64, greater: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailReason {
    UndefinedDirection,
    ElementAbsent(String),
    OwnerBoxMissing,
}

/// Result of one geometric test, without the constraint it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub passed: bool,
    pub measured: Option<Measured>,
    pub reason: Option<FailReason>,
}

impl Evaluation {
    fn measured(passed: bool, m: Measured) -> Self {
        Evaluation { passed, measured: Some(m), reason: None }
    }

    fn failed(reason: FailReason) -> Self {
        Evaluation { passed: false, measured: None, reason: Some(reason) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintOutcome {
    pub constraint: Constraint,
    pub passed: bool,
    pub measured: Option<Measured>,
    pub reason: Option<FailReason>,
}

impl ConstraintOutcome {
    pub fn new(constraint: &Constraint, e: Evaluation) -> Self {
        ConstraintOutcome { constraint: constraint.clone(), passed: e.passed, measured: e.measured, reason: e.reason }
    }
}

/// Angle of the vector `anchor -> target` in `[0, 360)`, `None` for coincident points.
pub fn direction_angle(anchor: AnchorPoint, target: AnchorPoint) -> Option<f64> {
    let (dx, dy) = (target.x - anchor.x, target.y - anchor.y);
    if dx == 0.0 && dy == 0.0 {
        return None;
    }
    Some(normalize_degrees(libm::atan2(dy, dx).to_degrees()))
}

/// True iff `angle` lies on the closed clockwise arc from `deg_min` to
/// `deg_max`, wrapping through 0 when `deg_min > deg_max`.
pub fn angle_in_range(angle: f64, deg_min: f64, deg_max: f64) -> bool {
    let width = normalize_degrees(deg_max - deg_min);
    normalize_degrees(angle - deg_min) <= width
}

pub fn check_direction(anchor: &Element, target: &Element, deg_min: f64, deg_max: f64) -> Evaluation {
    match direction_angle(anchor.anchor, target.anchor) {
        Some(a) => Evaluation::measured(angle_in_range(a, deg_min, deg_max), Measured::Angle { degrees: a }),
        None => Evaluation::failed(FailReason::UndefinedDirection),
    }
}

/// Contact test: passes iff the IoU of the two boxes reaches the threshold
/// (`iou_override`, else `cfg.contact_iou_min`).
pub fn contact(a: &Element, b: &Element, cfg: &GeometryConfig, iou_override: Option<f64>) -> Evaluation {
    let (Some(ba), Some(bb)) = (a.contact_box(cfg), b.contact_box(cfg)) else {
        return Evaluation::failed(FailReason::OwnerBoxMissing);
    };
    let v = iou(&ba, &bb);
    Evaluation::measured(v >= iou_override.unwrap_or(cfg.contact_iou_min), Measured::Iou { ratio: v })
}

fn squared(a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    dx * dx + dy * dy
}

/// Strict order of anchor distances: `|l0 l1| < |g0 g1|`. Ties fail.
pub fn check_distance_order(l0: &Element, l1: &Element, g0: &Element, g1: &Element) -> Evaluation {
    let lesser = squared(l0.anchor, l1.anchor);
    let greater = squared(g0.anchor, g1.anchor);
    Evaluation::measured(
        lesser < greater,
        Measured::Distances { lesser: libm::sqrt(lesser), greater: libm::sqrt(greater) },
    )
}

/// Evaluates `c` with variables resolved through `lookup`.
pub fn eval_constraint<'a>(
    c: &Constraint,
    lookup: impl Fn(&str) -> Option<&'a Element>,
    cfg: &GeometryConfig,
) -> ConstraintOutcome {
    let get = |v: &str| lookup(v).ok_or_else(|| FailReason::ElementAbsent(String::from(v)));
    let eval = (|| -> Result<Evaluation, FailReason> {
        Ok(match c {
            Constraint::Direction { anchor, target, deg_min, deg_max } => {
                check_direction(get(anchor)?, get(target)?, *deg_min, *deg_max)
            }
            Constraint::Contact { a, b, iou_min } => contact(get(a)?, get(b)?, cfg, *iou_min),
            Constraint::DistanceOrder { lesser, greater } => {
                check_distance_order(get(&lesser.0)?, get(&lesser.1)?, get(&greater.0)?, get(&greater.1)?)
            }
        })
    })()
    .unwrap_or_else(Evaluation::failed);
    ConstraintOutcome::new(c, eval)
}
