//! Greedy IoU tracker that threads person and object detections across frames.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::elements::FrameElements;
use crate::geom::{iou, BBox};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TrackId(pub u32);

impl fmt::Display for TrackId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackKind {
    Person,
    Object,
}

/// Identifies one detection within one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DetectionRef {
    pub frame: u32,
    pub kind: TrackKind,
    /// Index into `persons` or `objects` of the frame.
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub track_id: TrackId,
    pub kind: TrackKind,
    /// `"person"` for person tracks, the object class otherwise.
    pub label: String,
    pub spans: BTreeMap<u32, BBox>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    pub iou_min: f64,
    /// Number of consecutive missing frames a track survives.
    pub max_gap_frames: u32,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig { iou_min: 0.3, max_gap_frames: 5 }
    }
}

impl TrackerConfig {
    pub fn is_valid(&self) -> bool {
        (0.0..=1.0).contains(&self.iou_min)
    }
}

/// All tracks of one video plus the detection-to-track assignment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrackSet {
    pub tracks: Vec<Track>,
    assignment: BTreeMap<DetectionRef, TrackId>,
}

impl TrackSet {
    pub fn track_of(&self, det: DetectionRef) -> Option<TrackId> {
        self.assignment.get(&det).copied()
    }

    pub fn get(&self, id: TrackId) -> Option<&Track> {
        // ids are dense and allocated in order
        self.tracks.get(id.0 as usize).filter(|t| t.track_id == id)
    }

    pub fn len(&self) -> usize {
        self.tracks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }

    pub fn span_count(&self) -> usize {
        self.tracks.iter().map(|t| t.spans.len()).sum()
    }

    /// Assigns a fresh track to every detection of a single frame.
    pub fn singletons(frame: &FrameElements) -> TrackSet {
        track_video(core::slice::from_ref(frame), &TrackerConfig { iou_min: 1.0, max_gap_frames: 0 })
    }
}

struct Active {
    id: TrackId,
    last_frame: u32,
    last_box: BBox,
}

/// Links detections of consecutive frames by greedy descending IoU.
///
/// `frames` must be sorted by `frame_index`. A track missing from up to
/// `max_gap_frames` frames can still be extended, anchored on its last box.
pub fn track_video(frames: &[FrameElements], cfg: &TrackerConfig) -> TrackSet {
    let mut set = TrackSet::default();
    let mut active: Vec<Active> = Vec::new();

    for fe in frames {
        let f = fe.frame_index;
        active.retain(|a| f.saturating_sub(a.last_frame) <= cfg.max_gap_frames.saturating_add(1));

        let dets: Vec<(TrackKind, usize, &str, BBox)> = fe
            .persons
            .iter()
            .enumerate()
            .map(|(i, p)| (TrackKind::Person, i, "person", p.bbox))
            .chain(fe.objects.iter().enumerate().map(|(i, o)| (TrackKind::Object, i, o.label.as_str(), o.bbox)))
            .collect();

        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for (d, (kind, _, label, bbox)) in dets.iter().enumerate() {
            for (a, act) in active.iter().enumerate() {
                let track = &set.tracks[act.id.0 as usize];
                if track.kind != *kind || track.label != *label {
                    continue;
                }
                let v = iou(bbox, &act.last_box);
                if v >= cfg.iou_min {
                    pairs.push((v, d, a));
                }
            }
        }
        pairs.sort_by(|x, y| {
            y.0.partial_cmp(&x.0)
                .unwrap_or(Ordering::Equal)
                .then(x.1.cmp(&y.1))
                .then(active[x.2].id.cmp(&active[y.2].id))
        });

        let mut det_track: Vec<Option<TrackId>> = alloc::vec![None; dets.len()];
        let mut used = alloc::vec![false; active.len()];
        for (_, d, a) in pairs {
            if det_track[d].is_some() || used[a] {
                continue;
            }
            used[a] = true;
            det_track[d] = Some(active[a].id);
            active[a].last_frame = f;
            active[a].last_box = dets[d].3;
        }

        for (d, (kind, index, label, bbox)) in dets.iter().enumerate() {
            let id = match det_track[d] {
                Some(id) => id,
                None => {
                    let id = TrackId(set.tracks.len() as u32);
                    set.tracks.push(Track { track_id: id, kind: *kind, label: label.to_string(), spans: BTreeMap::new() });
                    active.push(Active { id, last_frame: f, last_box: *bbox });
                    id
                }
            };
            set.tracks[id.0 as usize].spans.insert(f, *bbox);
            set.assignment.insert(DetectionRef { frame: f, kind: *kind, index: *index }, id);
        }
    }
    set
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elements::{BodyPart, Keypoint, ObjectDetection, PersonDetection};
    use alloc::vec;

    fn person_at(x: f64, y: f64) -> PersonDetection {
        PersonDetection {
            bbox: BBox::new(x, y, 40.0, 100.0).unwrap(),
            score: 0.9,
            keypoints: BodyPart::ALL
                .iter()
                .map(|&part| Keypoint { part, x: x + 20.0, y: y + 10.0, score: 0.9, present: true })
                .collect(),
        }
    }

    fn frame(i: u32, persons: Vec<PersonDetection>) -> FrameElements {
        FrameElements { frame_index: i, persons, objects: vec![] }
    }

    #[test]
    fn stationary_person_single_track() {
        let frames: Vec<_> = (0..3).map(|i| frame(i, vec![person_at(10.0, 10.0)])).collect();
        let set = track_video(&frames, &TrackerConfig::default());
        assert_eq!(set.len(), 1);
        assert_eq!(set.tracks[0].spans.len(), 3);
    }

    #[test]
    fn swap_with_zero_overlap_opens_new_tracks() {
        // Two persons jump to positions with no overlap to any previous box.
        let mut frames = vec![
            frame(0, vec![person_at(0.0, 0.0), person_at(200.0, 0.0)]),
            frame(1, vec![person_at(0.0, 0.0), person_at(200.0, 0.0)]),
        ];
        frames.push(frame(2, vec![person_at(400.0, 0.0), person_at(600.0, 0.0)]));
        let set = track_video(&frames, &TrackerConfig::default());
        assert_eq!(set.len(), 4);
        assert_eq!(set.tracks[0].spans.keys().copied().collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(set.tracks[2].spans.keys().copied().collect::<Vec<_>>(), vec![2]);
    }

    #[test]
    fn gap_within_tolerance_keeps_identity() {
        // Frames 3,4,5 have no record. Box shifted by 4px: IoU 36*100/(2*4000-3600)
        let frames = vec![
            frame(0, vec![person_at(0.0, 0.0)]),
            frame(1, vec![person_at(0.0, 0.0)]),
            frame(2, vec![person_at(0.0, 0.0)]),
            frame(6, vec![person_at(4.0, 0.0)]),
        ];
        let v = iou(&person_at(0.0, 0.0).bbox, &person_at(4.0, 0.0).bbox);
        assert!((v - 0.8181818181818182).abs() < 1e-12);
        let set = track_video(&frames, &TrackerConfig::default());
        assert_eq!(set.len(), 1);
        assert_eq!(set.tracks[0].spans.len(), 4);

        let strict = TrackerConfig { max_gap_frames: 2, ..Default::default() };
        assert_eq!(track_video(&frames, &strict).len(), 2);
    }

    #[test]
    fn labels_never_mix() {
        let ball = ObjectDetection { label: "ball".into(), bbox: BBox::new(0.0, 0.0, 10.0, 10.0).unwrap(), score: 0.9 };
        let cup = ObjectDetection { label: "cup".into(), ..ball.clone() };
        let frames = vec![
            FrameElements { frame_index: 0, persons: vec![], objects: vec![ball] },
            FrameElements { frame_index: 1, persons: vec![], objects: vec![cup] },
        ];
        let set = track_video(&frames, &TrackerConfig::default());
        assert_eq!(set.len(), 2);
        assert_eq!(set.tracks[1].label, "cup");
    }

    #[test]
    fn greedy_prefers_higher_iou_then_lower_index() {
        let frames = vec![
            frame(0, vec![person_at(0.0, 0.0)]),
            // both overlap the previous box; the second overlaps more
            frame(1, vec![person_at(10.0, 0.0), person_at(2.0, 0.0)]),
        ];
        let set = track_video(&frames, &TrackerConfig::default());
        let t = |i| set.track_of(DetectionRef { frame: 1, kind: TrackKind::Person, index: i }).unwrap();
        assert_eq!(t(1), TrackId(0));
        assert_eq!(t(0), TrackId(1));
    }
}
