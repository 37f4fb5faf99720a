//! Key-event definitions: the data model, the rule DSL, and validation.
//!
//! ```text
//! event serve_front {
//!   action "serve"
//!   state hold {
//!     person P1
//!     object "ball" B
//!     part head H of P1
//!     dir(H -> B) in [95 deg, 165 deg]
//!   }
//!   state toss { ... }
//!   interval hold -> toss max 0.3 s
//! }
//! ```

mod parse;
mod print;
mod validate;

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::elements::BodyPart;

pub use parse::{parse_events, ParseError};
pub use print::{serialize_events, write_event};
pub use validate::{has_errors, is_identifier, validate_event};

/// An ordered chain of states with a maximum delay between neighbours.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyEvent {
    pub event_id: String,
    pub action_label: String,
    pub states: Vec<StateDef>,
    /// Seconds; entry `k` bounds the delay from state `k` to state `k + 1`.
    pub intervals: Vec<f64>,
}

impl KeyEvent {
    pub fn state(&self, name: &str) -> Option<&StateDef> {
        self.states.iter().find(|s| s.name == name)
    }

    pub fn state_mut(&mut self, name: &str) -> Option<&mut StateDef> {
        self.states.iter_mut().find(|s| s.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDef {
    pub name: String,
    pub elements: Vec<ElementDecl>,
    pub constraints: Vec<Constraint>,
}

impl StateDef {
    pub fn decl(&self, var: &str) -> Option<&ElementDecl> {
        self.elements.iter().find(|e| e.var == var)
    }

    pub fn persons(&self) -> impl Iterator<Item = &str> {
        self.elements.iter().filter(|e| e.kind == ElementKind::Person).map(|e| e.var.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementDecl {
    pub var: String,
    pub kind: ElementKind,
}

impl ElementDecl {
    pub fn person(var: impl Into<String>) -> Self {
        ElementDecl { var: var.into(), kind: ElementKind::Person }
    }

    pub fn object(class: impl Into<String>, var: impl Into<String>) -> Self {
        ElementDecl { var: var.into(), kind: ElementKind::Object { class: class.into() } }
    }

    pub fn part(part: PartName, var: impl Into<String>, owner: impl Into<String>) -> Self {
        ElementDecl { var: var.into(), kind: ElementKind::BodyPart { part, owner: owner.into() } }
    }

    /// True for variables that bind a track (persons and objects).
    pub fn is_tracked(&self) -> bool {
        !matches!(self.kind, ElementKind::BodyPart { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ElementKind {
    Person,
    Object { class: String },
    BodyPart { part: PartName, owner: String },
}

/// A body part as written in rules.
///
/// `head` is accepted besides the 17 joint names and resolves to the nose
/// keypoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PartName {
    Joint(BodyPart),
    Head,
}

impl PartName {
    pub fn keypoint(self) -> BodyPart {
        match self {
            PartName::Joint(p) => p,
            PartName::Head => BodyPart::Nose,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PartName::Joint(p) => p.name(),
            PartName::Head => "head",
        }
    }

    pub fn from_name(s: &str) -> Option<PartName> {
        if s == "head" {
            Some(PartName::Head)
        } else {
            BodyPart::from_name(s).map(PartName::Joint)
        }
    }
}

impl fmt::Display for PartName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for PartName {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for PartName {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        PartName::from_name(&s).ok_or_else(|| serde::de::Error::custom(alloc::format!("unknown body part `{s}`")))
    }
}

/// A relation between declared variables of one state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Constraint {
    /// Angle of `anchor -> target` on the clockwise arc `[deg_min, deg_max]`.
    Direction { anchor: String, target: String, deg_min: f64, deg_max: f64 },
    Contact {
        a: String,
        b: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        iou_min: Option<f64>,
    },
    /// `dist(lesser) < dist(greater)`, strictly.
    DistanceOrder { lesser: (String, String), greater: (String, String) },
}

impl Constraint {
    pub fn vars(&self) -> Vec<&str> {
        match self {
            Constraint::Direction { anchor, target, .. } => alloc::vec![anchor.as_str(), target.as_str()],
            Constraint::Contact { a, b, .. } => alloc::vec![a.as_str(), b.as_str()],
            Constraint::DistanceOrder { lesser, greater } => {
                alloc::vec![lesser.0.as_str(), lesser.1.as_str(), greater.0.as_str(), greater.1.as_str()]
            }
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Constraint::Direction { .. } => "direction",
            Constraint::Contact { .. } => "contact",
            Constraint::DistanceOrder { .. } => "distance_order",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleDiagnostic {
    pub severity: Severity,
    /// Path such as `serve_front/hold/constraint[1]`.
    pub location: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column: Option<u32>,
}

impl RuleDiagnostic {
    pub fn error(location: impl Into<String>, message: impl Into<String>) -> Self {
        RuleDiagnostic { severity: Severity::Error, location: location.into(), message: message.into(), line: None, column: None }
    }

    pub fn warning(location: impl Into<String>, message: impl Into<String>) -> Self {
        RuleDiagnostic { severity: Severity::Warning, ..RuleDiagnostic::error(location, message) }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for RuleDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{sev}")?;
        if let (Some(l), Some(c)) = (self.line, self.column) {
            write!(f, " at {l}:{c}")?;
        }
        if !self.location.is_empty() {
            write!(f, " [{}]", self.location)?;
        }
        write!(f, ": {}", self.message)
    }
}

/// Clockwise width of the arc `[deg_min, deg_max]`, in `[0, 360)`.
pub fn arc_width(deg_min: f64, deg_max: f64) -> f64 {
    crate::geom::normalize_degrees(deg_max - deg_min)
}
