//! Synthetic table-tennis detections for tests, demos and benchmarks.
//!
//! Two 600-frame videos at 50 fps with a fixed camera: a table, a far-side
//! player facing the camera, a near-side player with their back to it, an
//! umpire, and a ball. Serves are scripted ball trajectories around the
//! server's head; everything else the ball does is distractor motion.
//!
//! A front serve starting at frame `s` produces, under the default settings,
//! a `hold` run over `s..=s+18` and a `toss` run over `s+25..=s+38`: 33
//! labelled frames per serve. Ground truth for it is `[s-5, s+45]`.

use std::path::Path;

use vidrules_core::evaluation::GroundTruthInterval;
use vidrules_core::{BBox, BodyPart, FrameElements, Keypoint, ObjectDetection, PersonDetection, Point};

use crate::ingest::{write_detections, DatasetManifest, VideoMeta};
use crate::project::{pretty_json, write_atomic, ProjectError, EVENTS_FILE, GROUND_TRUTH_FILE, MANIFEST_FILE};

pub const FPS: f64 = 50.0;
pub const FRAMES: u32 = 600;
pub const BALL: f64 = 24.0;
pub const SERVE_LABELS: usize = 33;

pub const FRONT_SERVE: &str = include_str!("../../../fixtures/serve_front.pdl");
pub const BACK_SERVE: &str = include_str!("../../../fixtures/serve_back.pdl");

const TABLE: (f64, f64, f64, f64) = (440.0, 280.0, 400.0, 120.0);
const FAR: (f64, f64, f64, f64) = (520.0, 100.0, 80.0, 200.0);
const NEAR: (f64, f64, f64, f64) = (680.0, 430.0, 80.0, 200.0);
const UMPIRE: (f64, f64, f64, f64) = (150.0, 300.0, 80.0, 200.0);
const SPECTATOR: (f64, f64, f64, f64) = (1100.0, 300.0, 80.0, 200.0);

/// Keypoint positions as fractions of the person box, in detector order.
const POSE: [(f64, f64); 17] = [
    (0.5, 0.1),
    (0.45, 0.08),
    (0.55, 0.08),
    (0.4, 0.1),
    (0.6, 0.1),
    (0.2, 0.25),
    (0.8, 0.25),
    (0.15, 0.4),
    (0.85, 0.4),
    (0.1, 0.55),
    (0.9, 0.55),
    (0.3, 0.55),
    (0.7, 0.55),
    (0.3, 0.75),
    (0.7, 0.75),
    (0.3, 0.95),
    (0.7, 0.95),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// Far-side server facing the camera.
    Front,
    /// Near-side server, back to the camera.
    Back,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pattern {
    Serve(Side),
    /// Hold, then the toss pauses for 20 frames before completing: too slow.
    LateToss(Side),
    /// Hold, then the ball drops out of the hand.
    FakeHold,
    /// Ball bouncing over the table, away from every hand. Carries an end frame.
    Rally(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Four serves, four ground-truth intervals.
    Base,
    /// Base plus one unannotated front serve in `v2`.
    FalsePositive,
    /// Base detections; ground truth has five intervals, only one of them on a serve.
    OneOfFive,
}

#[derive(Debug, Clone)]
pub struct Script {
    pub video_id: &'static str,
    pub spectator: bool,
    pub patterns: Vec<(u32, Pattern)>,
}

pub fn scripts(variant: Variant) -> Vec<Script> {
    use Pattern::*;
    let mut v2 = vec![(30, Serve(Side::Back)), (100, Rally(220)), (300, Serve(Side::Front)), (420, LateToss(Side::Back))];
    if variant == Variant::FalsePositive {
        v2.push((520, Serve(Side::Front)));
    }
    vec![
        Script {
            video_id: "v1",
            spectator: false,
            patterns: vec![
                (40, Serve(Side::Front)),
                (110, Rally(250)),
                (280, LateToss(Side::Front)),
                (380, Serve(Side::Back)),
                (480, FakeHold),
            ],
        },
        Script { video_id: "v2", spectator: true, patterns: v2 },
    ]
}

pub fn serve_gt(video: &str, start: u32) -> GroundTruthInterval {
    GroundTruthInterval { video_id: video.into(), action_label: "serve".into(), t_l: start - 5, t_r: start + 45 }
}

pub fn ground_truth(variant: Variant) -> Vec<GroundTruthInterval> {
    match variant {
        Variant::Base | Variant::FalsePositive => {
            vec![serve_gt("v1", 40), serve_gt("v1", 380), serve_gt("v2", 30), serve_gt("v2", 300)]
        }
        Variant::OneOfFive => vec![
            serve_gt("v1", 40),
            serve_gt("v1", 150),
            serve_gt("v1", 280),
            serve_gt("v1", 480),
            serve_gt("v2", 420),
        ],
    }
}

fn bbox((x, y, w, h): (f64, f64, f64, f64)) -> BBox {
    BBox::new(x, y, w, h).expect("scene boxes are valid")
}

fn person(b: (f64, f64, f64, f64), right_wrist: Option<Point>) -> PersonDetection {
    let keypoints = BodyPart::ALL
        .iter()
        .zip(POSE)
        .map(|(&part, (fx, fy))| {
            let (x, y) = match right_wrist {
                Some(p) if part == BodyPart::RightWrist => (p.x, p.y),
                _ => (b.0 + fx * b.2, b.1 + fy * b.3),
            };
            Keypoint { part, x, y, score: 0.9, present: true }
        })
        .collect();
    PersonDetection { bbox: bbox(b), score: 0.95, keypoints }
}

fn head(b: (f64, f64, f64, f64)) -> Point {
    Point::new(b.0 + POSE[0].0 * b.2, b.1 + POSE[0].1 * b.3)
}

fn object(label: &str, c: Point, side: f64, score: f64) -> ObjectDetection {
    ObjectDetection { label: label.into(), bbox: BBox::centered(c, side).expect("positive side"), score }
}

/// Where the ball is and whether the server's right wrist holds it.
#[derive(Debug, Clone, Copy)]
struct BallState {
    at: Point,
    server: Option<Side>,
    in_hand: bool,
}

fn polar(side: Side, deg: f64, r: f64) -> Point {
    let (deg, h) = match side {
        Side::Front => (deg, head(FAR)),
        Side::Back => (180.0 - deg, head(NEAR)),
    };
    let rad = deg.to_radians();
    Point::new(h.x + r * rad.cos(), h.y + r * rad.sin())
}

/// Serve trajectory by frame offset, angles given for a front serve.
/// `pause` holds the ball at 180 degrees for that many extra frames.
fn serve_ball(side: Side, t: u32, pause: u32) -> Option<BallState> {
    let at = |deg: f64, r: f64, in_hand: bool| Some(BallState { at: polar(side, deg, r), server: Some(side), in_hand });
    if t < 12 {
        return at(130.0, 70.0, true);
    }
    let mut i = t - 11;
    if i > 10 {
        if i <= 10 + pause {
            return at(180.0, 70.0 + 25.0 * 10.0 / 21.0, false);
        }
        i -= pause;
    }
    if i <= 21 {
        let deg = 130.0 + 5.0 * f64::from(i);
        return at(deg, 70.0 + 25.0 * f64::from(i) / 21.0, deg <= 165.0);
    }
    if i <= 27 {
        return at(235.0, 95.0, false);
    }
    None
}

fn triangle(t: u32, period: u32) -> f64 {
    let p = f64::from(t % period) / f64::from(period);
    if p < 0.5 {
        2.0 * p
    } else {
        2.0 - 2.0 * p
    }
}

fn ball_at(pattern: Pattern, t: u32) -> Option<BallState> {
    match pattern {
        Pattern::Serve(side) => serve_ball(side, t, 0),
        Pattern::LateToss(side) => serve_ball(side, t, 20),
        Pattern::FakeHold => {
            let held = polar(Side::Front, 130.0, 70.0);
            match t {
                0..12 => Some(BallState { at: held, server: Some(Side::Front), in_hand: true }),
                12..28 => Some(BallState {
                    at: Point::new(held.x, held.y + 10.0 * f64::from(t - 11)),
                    server: Some(Side::Front),
                    in_hand: false,
                }),
                _ => None,
            }
        }
        Pattern::Rally(_) => {
            let at = Point::new(480.0 + 320.0 * triangle(t, 80), 300.0 + 80.0 * triangle(t, 40));
            Some(BallState { at, server: None, in_hand: false })
        }
    }
}

fn active(script: &Script, frame: u32) -> Option<BallState> {
    script.patterns.iter().rev().find(|(s, _)| *s <= frame).and_then(|&(s, p)| match p {
        Pattern::Rally(end) if frame > end => None,
        _ => ball_at(p, frame - s),
    })
}

/// Renders one video's detections.
pub fn render(script: &Script) -> Vec<FrameElements> {
    (0..FRAMES)
        .map(|frame| {
            let ball = active(script, frame);
            let wrist = |side: Side| ball.filter(|b| b.in_hand && b.server == Some(side)).map(|b| b.at);
            let mut persons =
                vec![person(FAR, wrist(Side::Front)), person(NEAR, wrist(Side::Back)), person(UMPIRE, None)];
            if script.spectator {
                persons.push(person(SPECTATOR, None));
            }
            let mut objects = vec![ObjectDetection { label: "table".into(), bbox: bbox(TABLE), score: 0.99 }];
            if let Some(b) = ball {
                objects.push(object("ball", b.at, BALL, 0.8));
            }
            // Low-confidence clutter the ingest gates drop.
            if frame % 7 == 3 {
                objects.push(object("ball", Point::new(300.0, 620.0), BALL, 0.2));
            }
            FrameElements { frame_index: frame, persons, objects }
        })
        .collect()
}

/// Writes a complete project: manifest, detections, both serve events and
/// ground truth.
pub fn write_project(root: &Path, variant: Variant) -> Result<DatasetManifest, ProjectError> {
    let det_dir = root.join("detections");
    std::fs::create_dir_all(&det_dir).map_err(|e| ProjectError::io(&det_dir, e))?;
    let mut manifest = DatasetManifest::default();
    for script in scripts(variant) {
        let rel = Path::new("detections").join(format!("{}.jsonl", script.video_id));
        let mut buf = Vec::new();
        write_detections(&mut buf, &render(&script)).map_err(|e| ProjectError::io(&rel, e))?;
        write_atomic(&root.join(&rel), &buf)?;
        manifest.videos.push(VideoMeta {
            video_id: script.video_id.into(),
            fps: FPS,
            frame_count: FRAMES,
            detections_path: rel,
            frames_dir: None,
        });
    }
    write_atomic(&root.join(MANIFEST_FILE), pretty_json(&manifest).as_bytes())?;
    write_atomic(&root.join(EVENTS_FILE), format!("{FRONT_SERVE}{BACK_SERVE}").as_bytes())?;
    write_atomic(&root.join(GROUND_TRUTH_FILE), pretty_json(&ground_truth(variant)).as_bytes())?;
    Ok(manifest)
}

/// Frames with exactly 20 elements each (2 persons, 8 confident keypoints
/// apiece, ball, table) for throughput measurements. The ball sweeps around
/// the far player's head so that `hold` matches in some frames only.
pub fn dense_frames(n: u32) -> Vec<FrameElements> {
    const KEEP: [BodyPart; 8] = [
        BodyPart::Nose,
        BodyPart::LeftShoulder,
        BodyPart::RightShoulder,
        BodyPart::LeftElbow,
        BodyPart::RightElbow,
        BodyPart::LeftWrist,
        BodyPart::RightWrist,
        BodyPart::LeftHip,
    ];
    (0..n)
        .map(|frame| {
            let deg = 100.0 + f64::from(frame % 36) * 5.0;
            let at = polar(Side::Front, deg, 70.0);
            let mut persons = vec![person(FAR, Some(at)), person(NEAR, None)];
            for p in &mut persons {
                for k in &mut p.keypoints {
                    if !KEEP.contains(&k.part) {
                        k.score = 0.1;
                    }
                }
            }
            let objects = vec![
                ObjectDetection { label: "table".into(), bbox: bbox(TABLE), score: 0.99 },
                object("ball", at, BALL, 0.8),
            ];
            FrameElements { frame_index: frame, persons, objects }
        })
        .collect()
}
