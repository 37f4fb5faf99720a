//! Rule engine for weak temporal-action labels over pre-extracted video detections.
//!
//! A key event is an ordered chain of states. Each state is a small attributed
//! graph of visual elements (persons, body parts, objects) plus geometric
//! relations between them (direction ranges, contact, relative distance order).
//! The engine matches every state against per-frame element graphs, chains the
//! matching frames into key-event instances that respect the inter-state time
//! thresholds, and emits sparse frame-wise labels.
//!
//! The crate is `no_std` (with `alloc`) and does no I/O. File formats, the
//! project service and the CLI live in the `vidrules` crate.
//!
//! Pipeline, per video:
//!
//! 1. [`elements`]: detections per frame ([`elements::FrameElements`]).
//! 2. [`tracker::track_video`]: stable identities across frames.
//! 3. [`matcher::build_frame_graph`] and [`matcher::CompiledState`]: embeddings per frame and state.
//! 4. [`sequencer`]: runs, instances, labels.
//! 5. [`evaluation`]: precision/recall against ground truth, label statistics.

#![no_std]

extern crate alloc;

pub mod constraints;
pub mod elements;
pub mod evaluation;
pub mod geom;
pub mod matcher;
pub mod pipeline;
pub mod rules;
pub mod sequencer;
pub mod tracker;

pub use constraints::{ConstraintOutcome, GeometryConfig};
pub use elements::{BodyPart, FrameElements, IngestConfig, Keypoint, ObjectDetection, PersonDetection};
pub use geom::{iou, BBox, Point};
pub use matcher::{build_frame_graph, explain_mismatch, match_state, Embedding, FrameGraph, MismatchReport};
pub use pipeline::LabelingConfig;
pub use sequencer::{FrameLabel, KeyEventInstance, StateRun};

pub use rules::{Constraint, ElementDecl, ElementKind, KeyEvent, RuleDiagnostic, StateDef};

pub use tracker::{Track, TrackId, TrackSet, TrackerConfig};
