//! Per-frame visual elements as produced by upstream pose and object detectors.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{BBox, GeomError, Point};

/// The 17-joint pose vocabulary, in canonical detector output order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BodyPart {
    Nose,
    LeftEye,
    RightEye,
    LeftEar,
    RightEar,
    LeftShoulder,
    RightShoulder,
    LeftElbow,
    RightElbow,
    LeftWrist,
    RightWrist,
    LeftHip,
    RightHip,
    LeftKnee,
    RightKnee,
    LeftAnkle,
    RightAnkle,
}

pub const KEYPOINT_COUNT: usize = 17;

impl BodyPart {
    pub const ALL: [BodyPart; KEYPOINT_COUNT] = [
        BodyPart::Nose,
        BodyPart::LeftEye,
        BodyPart::RightEye,
        BodyPart::LeftEar,
        BodyPart::RightEar,
        BodyPart::LeftShoulder,
        BodyPart::RightShoulder,
        BodyPart::LeftElbow,
        BodyPart::RightElbow,
        BodyPart::LeftWrist,
        BodyPart::RightWrist,
        BodyPart::LeftHip,
        BodyPart::RightHip,
        BodyPart::LeftKnee,
        BodyPart::RightKnee,
        BodyPart::LeftAnkle,
        BodyPart::RightAnkle,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            BodyPart::Nose => "nose",
            BodyPart::LeftEye => "left_eye",
            BodyPart::RightEye => "right_eye",
            BodyPart::LeftEar => "left_ear",
            BodyPart::RightEar => "right_ear",
            BodyPart::LeftShoulder => "left_shoulder",
            BodyPart::RightShoulder => "right_shoulder",
            BodyPart::LeftElbow => "left_elbow",
            BodyPart::RightElbow => "right_elbow",
            BodyPart::LeftWrist => "left_wrist",
            BodyPart::RightWrist => "right_wrist",
            BodyPart::LeftHip => "left_hip",
            BodyPart::RightHip => "right_hip",
            BodyPart::LeftKnee => "left_knee",
            BodyPart::RightKnee => "right_knee",
            BodyPart::LeftAnkle => "left_ankle",
            BodyPart::RightAnkle => "right_ankle",
        }
    }

    pub fn from_name(name: &str) -> Option<BodyPart> {
        BodyPart::ALL.iter().copied().find(|p| p.name() == name)
    }
}

impl fmt::Display for BodyPart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub part: BodyPart,
    pub x: f64,
    pub y: f64,
    pub score: f64,
    /// False once the keypoint fell below the confidence gate.
    pub present: bool,
}

impl Keypoint {
    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonDetection {
    pub bbox: BBox,
    pub score: f64,
    /// Always 17 entries in [`BodyPart::ALL`] order.
    pub keypoints: Vec<Keypoint>,
}

impl PersonDetection {
    pub fn keypoint(&self, part: BodyPart) -> Option<&Keypoint> {
        self.keypoints.get(part.index()).filter(|k| k.present)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectDetection {
    pub label: String,
    pub bbox: BBox,
    pub score: f64,
}

/// Everything detected in one frame.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FrameElements {
    pub frame_index: u32,
    pub persons: Vec<PersonDetection>,
    pub objects: Vec<ObjectDetection>,
}

impl FrameElements {
    pub fn empty(frame_index: u32) -> Self {
        FrameElements { frame_index, ..Default::default() }
    }

    pub fn detection_count(&self) -> usize {
        self.persons.len() + self.objects.len()
    }

    /// Drops detections below their class threshold and gates keypoints.
    pub fn apply_thresholds(&mut self, cfg: &IngestConfig) {
        self.persons.retain(|p| p.score >= cfg.person_score_min);
        for p in &mut self.persons {
            for k in &mut p.keypoints {
                k.present = k.present && k.score >= cfg.keypoint_score_min;
            }
        }
        self.objects.retain(|o| o.score >= cfg.object_score_min);
    }
}

/// Confidence gates applied while loading detections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestConfig {
    pub keypoint_score_min: f64,
    pub person_score_min: f64,
    pub object_score_min: f64,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig { keypoint_score_min: 0.3, person_score_min: 0.5, object_score_min: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ElementError {
    #[error("{field} must lie in [0, 1] (got {value})")]
    OutOfUnitRange { field: &'static str, value: f64 },
    #[error("person has {0} keypoints, expected 17")]
    KeypointCount(usize),
    #[error("keypoint {index} is labelled {found}, expected {expected}")]
    KeypointOrder { index: usize, expected: BodyPart, found: BodyPart },
    #[error("keypoint {0} has non-finite coordinates")]
    KeypointNonFinite(BodyPart),
    #[error("object label is empty")]
    EmptyLabel,
    #[error(transparent)]
    Geometry(#[from] GeomError),
}

fn unit(field: &'static str, value: f64) -> Result<(), ElementError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(ElementError::OutOfUnitRange { field, value })
    }
}

impl IngestConfig {
    pub fn validate(&self) -> Result<(), ElementError> {
        unit("keypoint_score_min", self.keypoint_score_min)?;
        unit("person_score_min", self.person_score_min)?;
        unit("object_score_min", self.object_score_min)
    }
}

impl PersonDetection {
    pub fn validate(&self) -> Result<(), ElementError> {
        self.bbox.check()?;
        unit("person score", self.score)?;
        if self.keypoints.len() != KEYPOINT_COUNT {
            return Err(ElementError::KeypointCount(self.keypoints.len()));
        }
        for (index, (k, expected)) in self.keypoints.iter().zip(BodyPart::ALL).enumerate() {
            if k.part != expected {
                return Err(ElementError::KeypointOrder { index, expected, found: k.part });
            }
            if !k.position().is_finite() {
                return Err(ElementError::KeypointNonFinite(k.part));
            }
            unit("keypoint score", k.score)?;
        }
        Ok(())
    }
}

impl ObjectDetection {
    pub fn validate(&self) -> Result<(), ElementError> {
        if self.label.is_empty() {
            return Err(ElementError::EmptyLabel);
        }
        self.bbox.check()?;
        unit("object score", self.score)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn person(score: f64, kp_score: f64) -> PersonDetection {
        PersonDetection {
            bbox: BBox::new(0.0, 0.0, 10.0, 20.0).unwrap(),
            score,
            keypoints: BodyPart::ALL
                .iter()
                .map(|&part| Keypoint { part, x: 1.0, y: 2.0, score: kp_score, present: true })
                .collect(),
        }
    }

    #[test]
    fn names_round_trip() {
        for p in BodyPart::ALL {
            assert_eq!(BodyPart::from_name(p.name()), Some(p));
        }
        assert_eq!(BodyPart::from_name("head"), None);
        assert_eq!(BodyPart::RightWrist.index(), 10);
    }

    #[test]
    fn low_score_object_dropped() {
        let mut fe = FrameElements {
            frame_index: 0,
            persons: vec![],
            objects: vec![
                ObjectDetection { label: "ball".to_string(), bbox: BBox::new(0.0, 0.0, 1.0, 1.0).unwrap(), score: 0.4 },
                ObjectDetection { label: "table".to_string(), bbox: BBox::new(0.0, 0.0, 1.0, 1.0).unwrap(), score: 0.9 },
            ],
        };
        fe.apply_thresholds(&IngestConfig::default());
        assert_eq!(fe.objects.len(), 1);
        assert_eq!(fe.objects[0].label, "table");
    }

    #[test]
    fn low_score_keypoint_marked_absent() {
        let mut p = person(0.9, 0.9);
        p.keypoints[BodyPart::LeftWrist.index()].score = 0.1;
        let mut fe = FrameElements { frame_index: 0, persons: vec![p], objects: vec![] };
        fe.apply_thresholds(&IngestConfig::default());
        assert_eq!(fe.persons.len(), 1);
        assert!(fe.persons[0].keypoint(BodyPart::LeftWrist).is_none());
        assert!(fe.persons[0].keypoint(BodyPart::RightWrist).is_some());
    }

    #[test]
    fn validation_catches_bad_order() {
        let mut p = person(0.9, 0.9);
        assert!(p.validate().is_ok());
        p.keypoints.swap(0, 1);
        assert!(matches!(p.validate(), Err(ElementError::KeypointOrder { index: 0, .. })));
        p.keypoints.pop();
        assert_eq!(p.validate(), Err(ElementError::KeypointCount(16)));
    }

    #[test]
    fn config_bounds() {
        let cfg = IngestConfig { person_score_min: 1.5, ..Default::default() };
        assert!(cfg.validate().is_err());
        assert!(IngestConfig::default().validate().is_ok());
    }
}
