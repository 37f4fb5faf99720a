//! Labeling runs: detections in, `runs/<id>/` out.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use vidrules_core::evaluation::dataset_stats;
use vidrules_core::matcher::{build_frame_graph, MatchOutcome};
use vidrules_core::pipeline::{compile_event, match_frame, sequence_event, LabelingConfig};
use vidrules_core::rules::{has_errors, serialize_events};
use vidrules_core::sequencer::{generate_labels, KeyEventInstance};
use vidrules_core::tracker::track_video;
use vidrules_core::{FrameLabel, KeyEvent};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ingest::{load_detections, DatasetManifest, IngestError, VideoMeta};
use crate::project::{pretty_json, write_atomic, Project, ProjectError, RUNS_DIR};

pub const LABELS_FILE: &str = "labels.jsonl";
pub const STATS_FILE: &str = "stats.json";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Progress {
    pub completed: usize,
    pub total: usize,
}

/// Output paths, relative to the project root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOutputs {
    pub labels: PathBuf,
    pub stats: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoFailure {
    pub video_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: u32,
    pub events: Vec<String>,
    pub status: RunStatus,
    pub progress: Progress,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<RunOutputs>,
    /// Milliseconds since the Unix epoch.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub started_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_ms: Option<u64>,
    #[serde(default)]
    pub failures: Vec<VideoFailure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default)]
    pub instances: usize,
    #[serde(default)]
    pub labels: usize,
    /// (frame, state) searches that hit the embedding cap.
    #[serde(default)]
    pub truncated_searches: usize,
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

/// Shared view of a run in flight. Progress only ever grows.
#[derive(Debug)]
pub struct RunHandle {
    record: Mutex<RunRecord>,
    completed: AtomicUsize,
}

impl RunHandle {
    fn new(record: RunRecord) -> Self {
        RunHandle { record: Mutex::new(record), completed: AtomicUsize::new(0) }
    }

    pub fn snapshot(&self) -> RunRecord {
        let mut r = self.record.lock().unwrap().clone();
        r.progress.completed = r.progress.completed.max(self.completed.load(Ordering::SeqCst));
        r
    }

    pub fn run_id(&self) -> u32 {
        self.record.lock().unwrap().run_id
    }

    fn update(&self, f: impl FnOnce(&mut RunRecord)) {
        f(&mut self.record.lock().unwrap());
    }
}

/// Everything a run needs, detached from the project so that it can execute
/// on another thread.
#[derive(Debug)]
pub struct RunPlan {
    pub root: PathBuf,
    pub dir: PathBuf,
    pub manifest: DatasetManifest,
    pub events: Vec<KeyEvent>,
    pub handle: std::sync::Arc<RunHandle>,
}

/// Checks the project, allocates the next run id and snapshots the selected
/// events (all of them when `event_ids` is `None`) into `runs/<id>/`.
pub fn prepare_run(project: &Project, event_ids: Option<&[String]>) -> Result<RunPlan, ProjectError> {
    if has_errors(&project.diagnostics) {
        return Err(ProjectError::RuleErrors(project.diagnostics.clone()));
    }
    let events: Vec<KeyEvent> = match event_ids {
        None => project.events.clone(),
        Some(ids) => ids
            .iter()
            .map(|id| {
                project.event(id).cloned().ok_or_else(|| {
                    ProjectError::RuleErrors(vec![vidrules_core::RuleDiagnostic::error(id.clone(), format!("unknown event `{id}`"))])
                })
            })
            .collect::<Result<_, _>>()?,
    };

    let runs_dir = project.root.join(RUNS_DIR);
    fs::create_dir_all(&runs_dir).map_err(|e| ProjectError::io(&runs_dir, e))?;
    let on_disk = load_run_records(&runs_dir)?.iter().map(|r| r.run_id).max().unwrap_or(0);
    let in_memory = project.runs.iter().map(|r| r.run_id).max().unwrap_or(0);
    let run_id = on_disk.max(in_memory).max(highest_run_dir(&runs_dir)) + 1;
    let dir = runs_dir.join(run_id.to_string());
    fs::create_dir_all(&dir).map_err(|e| ProjectError::io(&dir, e))?;

    let source = serialize_events(&events).map_err(ProjectError::RuleErrors)?;
    write_atomic(&dir.join(crate::project::EVENTS_FILE), source.as_bytes())?;

    let record = RunRecord {
        run_id,
        events: events.iter().map(|e| e.event_id.clone()).collect(),
        status: RunStatus::Queued,
        progress: Progress { completed: 0, total: if events.is_empty() { 0 } else { project.manifest.videos.len() } },
        outputs: None,
        started_ms: None,
        finished_ms: None,
        failures: Vec::new(),
        error: None,
        instances: 0,
        labels: 0,
        truncated_searches: 0,
    };
    write_atomic(&dir.join(REPORT_FILE), pretty_json(&record).as_bytes())?;
    Ok(RunPlan {
        root: project.root.clone(),
        dir,
        manifest: project.manifest.clone(),
        events,
        handle: std::sync::Arc::new(RunHandle::new(record)),
    })
}

fn highest_run_dir(runs_dir: &Path) -> u32 {
    fs::read_dir(runs_dir)
        .into_iter()
        .flatten()
        .flatten()
        .filter_map(|e| e.file_name().to_str()?.parse::<u32>().ok())
        .max()
        .unwrap_or(0)
}

pub(crate) fn load_run_records(runs_dir: &Path) -> Result<Vec<RunRecord>, ProjectError> {
    let mut out = Vec::new();
    let entries = match fs::read_dir(runs_dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(out),
        Err(e) => return Err(ProjectError::io(runs_dir, e)),
    };
    for entry in entries.flatten() {
        let report = entry.path().join(REPORT_FILE);
        if report.is_file() {
            let text = fs::read_to_string(&report).map_err(|e| ProjectError::io(&report, e))?;
            let r: RunRecord = serde_json::from_str(&text)
                .map_err(|e| ProjectError::Format { path: report.clone(), message: e.to_string() })?;
            out.push(r);
        }
    }
    out.sort_by_key(|r| r.run_id);
    Ok(out)
}

struct VideoResult {
    instances: Vec<KeyEventInstance>,
    truncated: usize,
}

fn label_frames(
    video_id: &str,
    fps: f64,
    frames: &[vidrules_core::FrameElements],
    events: &[KeyEvent],
    cfg: &LabelingConfig,
) -> Result<VideoResult, vidrules_core::matcher::GraphError> {
    let tracks = track_video(frames, &cfg.tracker);
    let graphs = frames
        .par_iter()
        .map(|fe| build_frame_graph(video_id, fe, &tracks, &cfg.ingest))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = VideoResult { instances: Vec::new(), truncated: 0 };
    for ev in events {
        let states = compile_event(ev);
        let outcomes: Vec<Vec<MatchOutcome>> = graphs.par_iter().map(|g| match_frame(&states, g, cfg)).collect();
        out.truncated += outcomes.iter().flatten().filter(|o| o.truncated).count();
        let per_frame = graphs.iter().zip(&outcomes).map(|(g, o)| (g.frame_index, o.as_slice()));
        let first = out.instances.len() as u32 + 1;
        out.instances.extend(sequence_event(ev, video_id, fps, per_frame, &cfg.sequencer, first));
    }
    Ok(out)
}

/// Executes a prepared run to completion and writes its outputs.
///
/// A video whose detections are malformed is recorded as a failure and
/// skipped. Failing to read a detections file, or to write outputs, fails
/// the whole run.
pub fn execute(plan: &RunPlan) -> RunRecord {
    let h = &plan.handle;
    h.update(|r| {
        r.status = RunStatus::Running;
        r.started_ms = Some(now_ms());
    });
    let _ = write_atomic(&plan.dir.join(REPORT_FILE), pretty_json(&h.snapshot()).as_bytes());

    let result = run_videos(plan);
    let finished = match result {
        Ok(()) => RunStatus::Done,
        Err(e) => {
            h.update(|r| r.error = Some(e));
            RunStatus::Failed
        }
    };
    h.update(|r| {
        r.status = finished;
        r.finished_ms = Some(now_ms());
        r.progress.completed = h.completed.load(Ordering::SeqCst);
    });
    let record = h.snapshot();
    if let Err(e) = write_atomic(&plan.dir.join(REPORT_FILE), pretty_json(&record).as_bytes()) {
        h.update(|r| {
            r.status = RunStatus::Failed;
            r.error = Some(e.to_string());
        });
    }
    h.snapshot()
}

fn run_videos(plan: &RunPlan) -> Result<(), String> {
    let h = &plan.handle;
    let cfg = plan.manifest.labeling_config();
    let videos: &[VideoMeta] = if plan.events.is_empty() { &[] } else { &plan.manifest.videos };

    let results: Vec<Result<VideoResult, IngestError>> = videos
        .par_iter()
        .map(|meta| {
            let r = load_detections(meta, &cfg.ingest).and_then(|frames| {
                label_frames(&meta.video_id, meta.fps, &frames, &plan.events, &cfg).map_err(|e| IngestError::Record {
                    video_id: meta.video_id.clone(),
                    line: 0,
                    message: e.to_string(),
                })
            });
            h.completed.fetch_add(1, Ordering::SeqCst);
            r
        })
        .collect();

    let mut instances = Vec::new();
    let mut failures = Vec::new();
    let mut truncated = 0;
    for (meta, r) in videos.iter().zip(results) {
        match r {
            Ok(v) => {
                truncated += v.truncated;
                instances.extend(v.instances);
            }
            Err(e) if e.is_io() => return Err(format!("video `{}`: {e}", meta.video_id)),
            Err(e) => failures.push(VideoFailure { video_id: meta.video_id.clone(), error: e.to_string() }),
        }
    }
    // Run-wide instance ids in (video, event, onset) order.
    for (i, inst) in instances.iter_mut().enumerate() {
        inst.instance_id = i as u32 + 1;
    }
    let labels = generate_labels(&instances);

    let ids: Vec<&str> = plan.manifest.videos.iter().map(|v| v.video_id.as_str()).collect();
    let stats = dataset_stats(&labels, &ids).map_err(|e| e.to_string())?;
    let labels_path = plan.dir.join(LABELS_FILE);
    let stats_path = plan.dir.join(STATS_FILE);
    write_atomic(&labels_path, labels_jsonl(&labels).as_bytes()).map_err(|e| e.to_string())?;
    write_atomic(&stats_path, pretty_json(&stats).as_bytes()).map_err(|e| e.to_string())?;

    let rel = |p: &Path| p.strip_prefix(&plan.root).map(Path::to_path_buf).unwrap_or_else(|_| p.to_path_buf());
    h.update(|r| {
        r.outputs = Some(RunOutputs { labels: rel(&labels_path), stats: rel(&stats_path) });
        r.failures = failures;
        r.instances = instances.len();
        r.labels = labels.len();
        r.truncated_searches = truncated;
    });
    Ok(())
}

pub fn labels_jsonl(labels: &[FrameLabel]) -> String {
    let mut s = String::new();
    for l in labels {
        s.push_str(&serde_json::to_string(l).expect("labels serialize"));
        s.push('\n');
    }
    s
}

pub fn read_labels(path: &Path) -> Result<Vec<FrameLabel>, ProjectError> {
    let text = fs::read_to_string(path).map_err(|e| ProjectError::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| ProjectError::Format { path: path.to_path_buf(), message: format!("line {}: {e}", i + 1) })
        })
        .collect()
}

/// Prepares and executes a run synchronously, recording it in the project.
pub fn run_labeling(project: &mut Project, event_ids: Option<&[String]>) -> Result<RunRecord, ProjectError> {
    let plan = prepare_run(project, event_ids)?;
    let record = execute(&plan);
    project.runs.push(record.clone());
    Ok(record)
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("unknown run {0}")]
    UnknownRun(u32),
    #[error("run {0} has not finished")]
    NotDone(u32),
    #[error("no ground truth")]
    NoGroundTruth,
    #[error("{0}")]
    Action(String),
    #[error(transparent)]
    Metric(#[from] vidrules_core::evaluation::MetricError),
    #[error(transparent)]
    Project(#[from] ProjectError),
}

/// The record of `run_id`, provided the run completed.
pub fn finished_run(project: &Project, run_id: u32) -> Result<&RunRecord, EvalError> {
    let r = project.run(run_id).ok_or(EvalError::UnknownRun(run_id))?;
    match (&r.status, &r.outputs) {
        (RunStatus::Done, Some(_)) => Ok(r),
        _ => Err(EvalError::NotDone(run_id)),
    }
}

/// Labels of a finished run, optionally restricted to one video.
pub fn run_labels(project: &Project, run_id: u32, video: Option<&str>) -> Result<Vec<FrameLabel>, EvalError> {
    let r = finished_run(project, run_id)?;
    let path = project.root.join(&r.outputs.as_ref().expect("checked").labels);
    let mut labels = read_labels(&path)?;
    if let Some(v) = video {
        labels.retain(|l| l.video_id == v);
    }
    Ok(labels)
}

/// Event definitions as they were when the run started.
pub fn run_events(project: &Project, run_id: u32) -> Result<Vec<KeyEvent>, EvalError> {
    let path = project.run_dir(run_id).join(crate::project::EVENTS_FILE);
    let src = fs::read_to_string(&path).map_err(|e| ProjectError::io(&path, e))?;
    vidrules_core::rules::parse_events(&src)
        .map_err(|e| ProjectError::Format { path, message: e.to_string() }.into())
}

/// Scores a finished run against the project's ground truth. Without
/// `action`, the run's events must share a single action label.
pub fn evaluate_run(project: &Project, run_id: u32, action: Option<&str>) -> Result<vidrules_core::evaluation::Metrics, EvalError> {
    let gt = project.ground_truth.as_deref().ok_or(EvalError::NoGroundTruth)?;
    finished_run(project, run_id)?;
    let events = run_events(project, run_id)?;
    let action = match action {
        Some(a) => a.to_string(),
        None => {
            let mut actions: Vec<&str> = events.iter().map(|e| e.action_label.as_str()).collect();
            actions.sort_unstable();
            actions.dedup();
            match actions.as_slice() {
                [one] => one.to_string(),
                [] => return Err(EvalError::Action("run has no events".into())),
                _ => return Err(EvalError::Action(format!("run covers several actions ({}); pick one", actions.join(", ")))),
            }
        }
    };
    let labels = vidrules_core::evaluation::labels_for_action(&run_labels(project, run_id, None)?, &events, &action);
    Ok(vidrules_core::evaluation::evaluate(&labels, gt, &action)?)
}
