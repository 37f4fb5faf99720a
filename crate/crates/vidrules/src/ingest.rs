//! Dataset manifests and per-frame detection files.
//!
//! Detections are JSON lines, one record per frame:
//!
//! ```text
//! {"frame": 12, "persons": [{"bbox": [x, y, w, h], "score": s, "keypoints": [[x, y, s], ...]}],
//!  "objects": [{"label": "ball", "bbox": [x, y, w, h], "score": s}]}
//! ```
//!
//! Keypoints come in the canonical 17-part order. Unknown fields are ignored,
//! and frames without a record are simply empty.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use vidrules_core::pipeline::LabelingConfig;
use vidrules_core::sequencer::SequencerConfig;
use vidrules_core::{
    BBox, BodyPart, FrameElements, GeometryConfig, IngestConfig, Keypoint, ObjectDetection, PersonDetection, TrackerConfig,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoMeta {
    pub video_id: String,
    pub fps: f64,
    pub frame_count: u32,
    pub detections_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames_dir: Option<PathBuf>,
}

fn default_version() -> u32 {
    MANIFEST_VERSION
}

fn default_cap() -> usize {
    vidrules_core::matcher::DEFAULT_MAX_EMBEDDINGS
}

/// Contents of `manifest.json`: the videos plus every engine setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    #[serde(default = "default_version")]
    pub version: u32,
    #[serde(default)]
    pub videos: Vec<VideoMeta>,
    #[serde(default)]
    pub thresholds: IngestConfig,
    #[serde(default)]
    pub tracker: TrackerConfig,
    #[serde(default)]
    pub geometry: GeometryConfig,
    #[serde(default)]
    pub sequencer: SequencerConfig,
    #[serde(default = "default_cap")]
    pub max_embeddings_per_frame: usize,
    /// User frame markers per video.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub markers: BTreeMap<String, Vec<u32>>,
}

impl Default for DatasetManifest {
    fn default() -> Self {
        DatasetManifest {
            version: MANIFEST_VERSION,
            videos: Vec::new(),
            thresholds: IngestConfig::default(),
            tracker: TrackerConfig::default(),
            geometry: GeometryConfig::default(),
            sequencer: SequencerConfig::default(),
            max_embeddings_per_frame: default_cap(),
            markers: BTreeMap::new(),
        }
    }
}

impl DatasetManifest {
    pub fn video(&self, id: &str) -> Option<&VideoMeta> {
        self.videos.iter().find(|v| v.video_id == id)
    }

    pub fn labeling_config(&self) -> LabelingConfig {
        LabelingConfig {
            ingest: self.thresholds,
            tracker: self.tracker,
            geometry: self.geometry,
            sequencer: self.sequencer,
            max_embeddings_per_frame: self.max_embeddings_per_frame,
        }
    }

    pub fn set_labeling_config(&mut self, cfg: &LabelingConfig) {
        self.thresholds = cfg.ingest;
        self.tracker = cfg.tracker;
        self.geometry = cfg.geometry;
        self.sequencer = cfg.sequencer;
        self.max_embeddings_per_frame = cfg.max_embeddings_per_frame;
    }

    /// Checks every invariant that does not need the file system.
    pub fn check(&self) -> Result<(), IngestError> {
        if self.version != MANIFEST_VERSION {
            return Err(IngestError::Version { found: self.version, expected: MANIFEST_VERSION });
        }
        let config = |field: &'static str, message: String| IngestError::Config { field, message };
        self.thresholds.validate().map_err(|e| config("thresholds", e.to_string()))?;
        if !self.tracker.is_valid() {
            return Err(config("tracker", "iou_min must lie in [0, 1]".into()));
        }
        if !self.geometry.is_valid() {
            return Err(config("geometry", "contact_iou_min must lie in (0, 1] and keypoint_box_scale be positive".into()));
        }
        if self.sequencer.min_delay_s.is_some_and(|m| !m.is_finite()) {
            return Err(config("sequencer", "min_delay_s must be finite".into()));
        }
        let mut ids = BTreeSet::new();
        for v in &self.videos {
            let bad = |field: &'static str, message: &str| IngestError::Video {
                video_id: v.video_id.clone(),
                field,
                message: message.into(),
            };
            if v.video_id.is_empty() {
                return Err(bad("video_id", "must not be empty"));
            }
            if !ids.insert(v.video_id.as_str()) {
                return Err(bad("video_id", "duplicate video id"));
            }
            if !(v.fps.is_finite() && v.fps > 0.0) {
                return Err(bad("fps", &format!("must be positive (got {})", v.fps)));
            }
        }
        Ok(())
    }

    /// Copy with video paths under `root` made relative to it.
    pub fn relative_to(&self, root: &Path) -> DatasetManifest {
        let rel = |p: &Path| p.strip_prefix(root).map(Path::to_path_buf).unwrap_or_else(|_| p.to_path_buf());
        let mut m = self.clone();
        for v in &mut m.videos {
            v.detections_path = rel(&v.detections_path);
            v.frames_dir = v.frames_dir.as_deref().map(rel);
        }
        m
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: malformed manifest: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("manifest version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("config `{field}`: {message}")]
    Config { field: &'static str, message: String },
    #[error("video `{video_id}`, field `{field}`: {message}")]
    Video { video_id: String, field: &'static str, message: String },
    #[error("video `{video_id}`, line {line}: {message}")]
    Record { video_id: String, line: usize, message: String },
}

impl IngestError {
    /// Whether the error comes from the file system rather than file contents.
    pub fn is_io(&self) -> bool {
        matches!(self, IngestError::Io { .. })
    }

    fn io(path: &Path, source: io::Error) -> Self {
        IngestError::Io { path: path.to_path_buf(), source }
    }
}

/// Reads and validates a manifest. Relative video paths are resolved against
/// the manifest's directory.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest, IngestError> {
    let text = fs::read_to_string(path).map_err(|e| IngestError::io(path, e))?;
    let mut m: DatasetManifest = serde_json::from_str(&text)
        .map_err(|e| IngestError::Manifest { path: path.to_path_buf(), message: e.to_string() })?;
    let base = path.parent().unwrap_or(Path::new("."));
    for v in &mut m.videos {
        v.detections_path = base.join(&v.detections_path);
        v.frames_dir = v.frames_dir.as_ref().map(|d| base.join(d));
    }
    m.check()?;
    for v in &m.videos {
        if !v.detections_path.is_file() {
            return Err(IngestError::Video {
                video_id: v.video_id.clone(),
                field: "detections_path",
                message: format!("{} does not exist", v.detections_path.display()),
            });
        }
    }
    Ok(m)
}

#[derive(Debug, Serialize, Deserialize)]
struct PersonRecord {
    bbox: [f64; 4],
    score: f64,
    keypoints: Vec<[f64; 3]>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ObjectRecord {
    label: String,
    bbox: [f64; 4],
    score: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct FrameRecord {
    frame: u32,
    #[serde(default)]
    persons: Vec<PersonRecord>,
    #[serde(default)]
    objects: Vec<ObjectRecord>,
}

fn to_elements(r: FrameRecord) -> Result<FrameElements, String> {
    let bbox = |b: [f64; 4]| BBox::new(b[0], b[1], b[2], b[3]).map_err(|e| e.to_string());
    let mut persons = Vec::with_capacity(r.persons.len());
    for (i, p) in r.persons.into_iter().enumerate() {
        let keypoints = p
            .keypoints
            .iter()
            .zip(BodyPart::ALL)
            .map(|(k, part)| Keypoint { part, x: k[0], y: k[1], score: k[2], present: true })
            .collect();
        let det = PersonDetection { bbox: bbox(p.bbox).map_err(|e| format!("person {i}: {e}"))?, score: p.score, keypoints };
        if p.keypoints.len() != BodyPart::ALL.len() {
            return Err(format!("person {i}: {} keypoints, expected 17", p.keypoints.len()));
        }
        det.validate().map_err(|e| format!("person {i}: {e}"))?;
        persons.push(det);
    }
    let mut objects = Vec::with_capacity(r.objects.len());
    for (i, o) in r.objects.into_iter().enumerate() {
        let det = ObjectDetection { label: o.label, bbox: bbox(o.bbox).map_err(|e| format!("object {i}: {e}"))?, score: o.score };
        det.validate().map_err(|e| format!("object {i}: {e}"))?;
        objects.push(det);
    }
    Ok(FrameElements { frame_index: r.frame, persons, objects })
}

/// Parses a detections stream without applying confidence gates. Output is
/// sorted by frame index.
pub fn parse_detections(reader: impl BufRead, meta: &VideoMeta) -> Result<Vec<FrameElements>, IngestError> {
    let mut frames = Vec::new();
    let mut seen = BTreeMap::new();
    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(|e| IngestError::io(&meta.detections_path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = |message: String| IngestError::Record { video_id: meta.video_id.clone(), line: line_no, message };
        let r: FrameRecord = serde_json::from_str(&line).map_err(|e| record(e.to_string()))?;
        if r.frame >= meta.frame_count {
            return Err(record(format!("frame {} is outside the video ({} frames)", r.frame, meta.frame_count)));
        }
        if let Some(first) = seen.insert(r.frame, line_no) {
            return Err(record(format!("frame {} already recorded on line {first}", r.frame)));
        }
        frames.push(to_elements(r).map_err(record)?);
    }
    frames.sort_by_key(|f| f.frame_index);
    Ok(frames)
}

/// Loads one video's detections and applies the confidence gates.
pub fn load_detections(meta: &VideoMeta, cfg: &IngestConfig) -> Result<Vec<FrameElements>, IngestError> {
    let file = fs::File::open(&meta.detections_path).map_err(|e| IngestError::io(&meta.detections_path, e))?;
    let mut frames = parse_detections(BufReader::new(file), meta)?;
    for f in &mut frames {
        f.apply_thresholds(cfg);
    }
    Ok(frames)
}

/// Writes frames in the detections format. Keypoints are written with their
/// scores whether or not they were gated.
pub fn write_detections(mut out: impl Write, frames: &[FrameElements]) -> io::Result<()> {
    for f in frames {
        let r = FrameRecord {
            frame: f.frame_index,
            persons: f
                .persons
                .iter()
                .map(|p| PersonRecord {
                    bbox: [p.bbox.x, p.bbox.y, p.bbox.w, p.bbox.h],
                    score: p.score,
                    keypoints: p.keypoints.iter().map(|k| [k.x, k.y, k.score]).collect(),
                })
                .collect(),
            objects: f
                .objects
                .iter()
                .map(|o| ObjectRecord { label: o.label.clone(), bbox: [o.bbox.x, o.bbox.y, o.bbox.w, o.bbox.h], score: o.score })
                .collect(),
        };
        serde_json::to_writer(&mut out, &r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
