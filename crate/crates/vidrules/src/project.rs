//! On-disk projects.
//!
//! ```text
//! project/
//!   manifest.json
//!   events.pdl          rule source, canonical form
//!   events.json         structured copy of the same events
//!   groundtruth.json    optional
//!   runs/<id>/{events.pdl, labels.jsonl, stats.json, report.json}
//!   frames/<video>/<frame>.jpg   optional
//! ```
//!
//! Every file is replaced by writing a sibling temporary file and renaming it
//! over the target, so readers never observe a half-written file.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use vidrules_core::evaluation::GroundTruthInterval;
use vidrules_core::rules::{has_errors, parse_events, serialize_events, validate_event, RuleDiagnostic};
use vidrules_core::matcher::{build_frame_graph, FrameGraph};
use vidrules_core::tracker::track_video;
use vidrules_core::KeyEvent;
use thiserror::Error;

use crate::ingest::{load_detections, load_manifest, DatasetManifest, IngestError};
use crate::run::RunRecord;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const EVENTS_FILE: &str = "events.pdl";
pub const EVENTS_JSON_FILE: &str = "events.json";
pub const GROUND_TRUTH_FILE: &str = "groundtruth.json";
pub const RUNS_DIR: &str = "runs";

#[derive(Debug, Error)]
pub enum ProjectError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("rules have {} error(s); fix them first", .0.iter().filter(|d| d.is_error()).count())]
    RuleErrors(Vec<RuleDiagnostic>),
}

impl ProjectError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        ProjectError::Io { path: path.to_path_buf(), source }
    }
}

/// Replaces `path` with `bytes` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ProjectError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("file");
    let tmp = dir.join(format!(".{name}.tmp"));
    let write = || -> io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        ProjectError::io(path, e)
    })
}

/// Parses and validates rule source. Errors come back as diagnostics, with
/// line and column for syntax problems.
pub fn check_rules(src: &str) -> Result<(Vec<KeyEvent>, Vec<RuleDiagnostic>), Vec<RuleDiagnostic>> {
    let events = parse_events(src).map_err(|e| vec![RuleDiagnostic::from(e)])?;
    let diags = validate_all(&events);
    if has_errors(&diags) {
        Err(diags)
    } else {
        Ok((events, diags))
    }
}

/// Per-event validation plus checks across events.
pub fn validate_all(events: &[KeyEvent]) -> Vec<RuleDiagnostic> {
    let mut out = Vec::new();
    for (i, ev) in events.iter().enumerate() {
        if events[..i].iter().any(|o| o.event_id == ev.event_id) {
            out.push(RuleDiagnostic::error(ev.event_id.clone(), format!("duplicate event id `{}`", ev.event_id)));
        }
        out.extend(validate_event(ev));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Project {
    pub root: PathBuf,
    pub manifest: DatasetManifest,
    pub events: Vec<KeyEvent>,
    /// Diagnostics of the current rules; any error blocks runs and saving.
    pub diagnostics: Vec<RuleDiagnostic>,
    pub ground_truth: Option<Vec<GroundTruthInterval>>,
    pub runs: Vec<RunRecord>,
}

pub(crate) fn pretty_json<T: serde::Serialize + ?Sized>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("plain data serializes");
    s.push('\n');
    s
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ProjectError> {
    let text = fs::read_to_string(path).map_err(|e| ProjectError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| ProjectError::Format { path: path.to_path_buf(), message: e.to_string() })
}

impl Project {
    /// A project over `manifest` with no events yet. Nothing is written.
    pub fn new(root: impl Into<PathBuf>, manifest: DatasetManifest) -> Self {
        Project { root: root.into(), manifest, events: Vec::new(), diagnostics: Vec::new(), ground_truth: None, runs: Vec::new() }
    }

    pub fn open(root: impl Into<PathBuf>) -> Result<Project, ProjectError> {
        let root: PathBuf = root.into();
        let manifest = load_manifest(&root.join(MANIFEST_FILE))?;

        let pdl = root.join(EVENTS_FILE);
        let json = root.join(EVENTS_JSON_FILE);
        let (events, diagnostics) = if pdl.is_file() {
            let src = fs::read_to_string(&pdl).map_err(|e| ProjectError::io(&pdl, e))?;
            match parse_events(&src) {
                Ok(events) => {
                    let d = validate_all(&events);
                    (events, d)
                }
                Err(e) => (Vec::new(), vec![RuleDiagnostic::from(e)]),
            }
        } else if json.is_file() {
            let events: Vec<KeyEvent> = read_json(&json)?;
            let d = validate_all(&events);
            (events, d)
        } else {
            (Vec::new(), Vec::new())
        };

        let gt = root.join(GROUND_TRUTH_FILE);
        let ground_truth = if gt.is_file() { Some(read_json(&gt)?) } else { None };

        let runs_dir = root.join(RUNS_DIR);
        fs::create_dir_all(&runs_dir).map_err(|e| ProjectError::io(&runs_dir, e))?;
        let runs = crate::run::load_run_records(&runs_dir)?;

        Ok(Project { root, manifest, events, diagnostics, ground_truth, runs })
    }

    /// Rules with errors make the project read-only.
    pub fn is_read_only(&self) -> bool {
        has_errors(&self.diagnostics)
    }

    pub fn save(&self) -> Result<(), ProjectError> {
        if self.is_read_only() {
            return Err(ProjectError::RuleErrors(self.diagnostics.clone()));
        }
        fs::create_dir_all(self.root.join(RUNS_DIR)).map_err(|e| ProjectError::io(&self.root, e))?;
        write_atomic(&self.root.join(MANIFEST_FILE), pretty_json(&self.manifest.relative_to(&self.root)).as_bytes())?;
        let dsl = serialize_events(&self.events).map_err(ProjectError::RuleErrors)?;
        write_atomic(&self.root.join(EVENTS_FILE), dsl.as_bytes())?;
        write_atomic(&self.root.join(EVENTS_JSON_FILE), pretty_json(&self.events).as_bytes())?;
        if let Some(gt) = &self.ground_truth {
            write_atomic(&self.root.join(GROUND_TRUTH_FILE), pretty_json(gt).as_bytes())?;
        }
        Ok(())
    }

    /// Replaces the rules with `src` and saves. On rule errors nothing changes.
    pub fn set_rules(&mut self, src: &str) -> Result<&[RuleDiagnostic], ProjectError> {
        let (events, diags) = check_rules(src).map_err(ProjectError::RuleErrors)?;
        self.replace_events(events, diags)
    }

    /// Same as [`Project::set_rules`] for already structured events.
    pub fn set_events(&mut self, events: Vec<KeyEvent>) -> Result<&[RuleDiagnostic], ProjectError> {
        let diags = validate_all(&events);
        if has_errors(&diags) {
            return Err(ProjectError::RuleErrors(diags));
        }
        self.replace_events(events, diags)
    }

    fn replace_events(&mut self, events: Vec<KeyEvent>, diags: Vec<RuleDiagnostic>) -> Result<&[RuleDiagnostic], ProjectError> {
        let old = std::mem::replace(&mut self.events, events);
        let old_diags = std::mem::replace(&mut self.diagnostics, diags);
        if let Err(e) = self.save() {
            self.events = old;
            self.diagnostics = old_diags;
            return Err(e);
        }
        Ok(&self.diagnostics)
    }

    pub fn rules_source(&self) -> Option<String> {
        serialize_events(&self.events).ok()
    }

    pub fn event(&self, id: &str) -> Option<&KeyEvent> {
        self.events.iter().find(|e| e.event_id == id)
    }

    pub fn run(&self, id: u32) -> Option<&RunRecord> {
        self.runs.iter().find(|r| r.run_id == id)
    }

    pub fn run_dir(&self, id: u32) -> PathBuf {
        self.root.join(RUNS_DIR).join(id.to_string())
    }

    /// Element graph of one frame, with track ids from tracking the whole
    /// video. `None` for an unknown video or a frame past its end.
    pub fn frame_graph(&self, video: &str, frame: u32) -> Result<Option<FrameGraph>, ProjectError> {
        let Some(meta) = self.manifest.video(video) else { return Ok(None) };
        if frame >= meta.frame_count {
            return Ok(None);
        }
        let cfg = self.manifest.labeling_config();
        let frames = load_detections(meta, &cfg.ingest)?;
        let tracks = track_video(&frames, &cfg.tracker);
        let g = match frames.iter().find(|f| f.frame_index == frame) {
            Some(fe) => build_frame_graph(video, fe, &tracks, &cfg.ingest)
                .map_err(|e| ProjectError::Format { path: meta.detections_path.clone(), message: e.to_string() })?,
            None => FrameGraph::empty(video, frame),
        };
        Ok(Some(g))
    }

    /// Directory holding still images of `video`, if any.
    pub fn frames_dir(&self, video: &str) -> Option<PathBuf> {
        let v = self.manifest.video(video)?;
        let dir = v.frames_dir.clone().unwrap_or_else(|| self.root.join("frames").join(video));
        dir.is_dir().then_some(dir)
    }
}
