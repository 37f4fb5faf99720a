//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 invalid input (rules, manifest,
//! detections, missing ground truth), 3 runtime failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use vidrules_core::rules::serialize_events;

use crate::ingest::load_detections;
use crate::project::{pretty_json, write_atomic, Project, ProjectError};
use crate::run::{evaluate_run, run_events, run_labeling, EvalError, RunStatus, REPORT_FILE, STATS_FILE};
use crate::synth::{write_project, Variant};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandOutcome {
    pub exit_code: i32,
    pub summary: String,
    /// Machine-readable report written by the command, if any.
    pub report_path: Option<PathBuf>,
}

impl CommandOutcome {
    fn ok(summary: impl Into<String>) -> Self {
        CommandOutcome { exit_code: EXIT_OK, summary: summary.into(), report_path: None }
    }

    fn fail(exit_code: i32, summary: impl Into<String>) -> Self {
        CommandOutcome { exit_code, summary: summary.into(), report_path: None }
    }

    fn with_report(mut self, path: PathBuf) -> Self {
        self.report_path = Some(path);
        self
    }
}

#[derive(Debug, Parser)]
#[command(name = "vidrules", version, about = "Rule-based weak labeling of key events in videos")]
struct Cli {
    /// Project directory.
    #[arg(short, long, global = true, default_value = ".")]
    project: PathBuf,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

/// Settings that override the manifest for this invocation only.
#[derive(Debug, Args, Default)]
struct Overrides {
    #[arg(long, global = true)]
    keypoint_score_min: Option<f64>,
    #[arg(long, global = true)]
    person_score_min: Option<f64>,
    #[arg(long, global = true)]
    object_score_min: Option<f64>,
    /// Minimum IoU to continue a track.
    #[arg(long, global = true)]
    track_iou_min: Option<f64>,
    #[arg(long, global = true)]
    max_gap_frames: Option<u32>,
    #[arg(long, global = true)]
    contact_iou_min: Option<f64>,
    #[arg(long, global = true)]
    keypoint_box_scale: Option<f64>,
    /// Minimum delay between consecutive states, in seconds.
    #[arg(long, global = true, allow_hyphen_values = true)]
    min_delay: Option<f64>,
    #[arg(long, global = true)]
    max_embeddings: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ExportFormat {
    Dsl,
    Json,
    /// Labels of a run, one JSON object per line.
    Labels,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SynthVariant {
    Base,
    FalsePositive,
    OneOfFive,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the manifest and every detections file.
    Ingest,
    /// Check the rules.
    Validate,
    /// Run the labeling engine.
    Label {
        /// Comma-separated event ids; all events when omitted.
        #[arg(long, value_delimiter = ',')]
        events: Option<Vec<String>>,
    },
    /// Score a run against the ground truth.
    Eval {
        /// Run id; the latest run when omitted.
        #[arg(long)]
        run: Option<u32>,
        #[arg(long)]
        action: Option<String>,
    },
    /// Label counts per video.
    Stats {
        #[arg(long)]
        run: Option<u32>,
    },
    /// Start the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
    },
    /// Write the rules, or a run's rules or labels, to a file.
    Export {
        #[arg(long)]
        run: Option<u32>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "dsl")]
        format: ExportFormat,
    },
    /// Generate the synthetic table-tennis project into `--project`.
    Synth {
        #[arg(long, value_enum, default_value = "base")]
        variant: SynthVariant,
    },
}

/// Parses `argv` (program name first) and runs the command.
pub fn dispatch<I, T>(argv: I) -> CommandOutcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            return CommandOutcome::fail(code, e.render().to_string().trim_end());
        }
    };
    match cli.command {
        Command::Synth { variant } => synth(&cli.project, variant),
        Command::Ingest => ingest(&cli.project, &cli.overrides),
        cmd => match open(&cli.project, &cli.overrides) {
            Ok(p) => run_command(p, cmd),
            Err(o) => o,
        },
    }
}

fn project_failure(e: ProjectError) -> CommandOutcome {
    let code = match &e {
        ProjectError::Ingest(i) if !i.is_io() => EXIT_INVALID,
        ProjectError::RuleErrors(_) | ProjectError::Format { .. } => EXIT_INVALID,
        _ => EXIT_RUNTIME,
    };
    let mut msg = e.to_string();
    if let ProjectError::RuleErrors(diags) = &e {
        for d in diags.iter().filter(|d| d.is_error()) {
            let _ = write!(msg, "\n  {d}");
        }
    }
    CommandOutcome::fail(code, msg)
}

fn eval_failure(e: EvalError) -> CommandOutcome {
    match e {
        EvalError::Project(p) => project_failure(p),
        other => CommandOutcome::fail(EXIT_INVALID, other.to_string()),
    }
}

fn apply(o: &Overrides, p: &mut Project) -> Result<(), CommandOutcome> {
    let mut cfg = p.manifest.labeling_config();
    let set = |slot: &mut f64, v: Option<f64>| {
        if let Some(v) = v {
            *slot = v;
        }
    };
    set(&mut cfg.ingest.keypoint_score_min, o.keypoint_score_min);
    set(&mut cfg.ingest.person_score_min, o.person_score_min);
    set(&mut cfg.ingest.object_score_min, o.object_score_min);
    set(&mut cfg.tracker.iou_min, o.track_iou_min);
    set(&mut cfg.geometry.contact_iou_min, o.contact_iou_min);
    set(&mut cfg.geometry.keypoint_box_scale, o.keypoint_box_scale);
    if let Some(g) = o.max_gap_frames {
        cfg.tracker.max_gap_frames = g;
    }
    if o.min_delay.is_some() {
        cfg.sequencer.min_delay_s = o.min_delay;
    }
    if let Some(m) = o.max_embeddings {
        cfg.max_embeddings_per_frame = m;
    }
    p.manifest.set_labeling_config(&cfg);
    p.manifest.check().map_err(|e| CommandOutcome::fail(EXIT_INVALID, e.to_string()))
}

fn open(root: &Path, o: &Overrides) -> Result<Project, CommandOutcome> {
    let mut p = Project::open(root).map_err(project_failure)?;
    apply(o, &mut p)?;
    Ok(p)
}

fn run_command(mut p: Project, cmd: Command) -> CommandOutcome {
    match cmd {
        Command::Validate => validate(&p),
        Command::Label { events } => label(&mut p, events.as_deref()),
        Command::Eval { run, action } => eval(&p, run, action.as_deref()),
        Command::Stats { run } => stats(&p, run),
        Command::Serve { bind } => serve(p, bind),
        Command::Export { run, out, format } => export(&p, run, &out, format),
        Command::Ingest | Command::Synth { .. } => unreachable!("handled before opening the project"),
    }
}

fn ingest(root: &Path, o: &Overrides) -> CommandOutcome {
    let manifest_path = root.join(crate::project::MANIFEST_FILE);
    let mut manifest = match crate::ingest::load_manifest(&manifest_path) {
        Ok(m) => m,
        Err(e) => return CommandOutcome::fail(if e.is_io() { EXIT_RUNTIME } else { EXIT_INVALID }, e.to_string()),
    };
    let mut p = Project::new(root, manifest.clone());
    if let Err(out) = apply(o, &mut p) {
        return out;
    }
    manifest = p.manifest;
    let cfg = manifest.labeling_config();
    let mut lines = Vec::new();
    let mut worst = EXIT_OK;
    let (mut frames, mut detections) = (0, 0);
    for v in &manifest.videos {
        match load_detections(v, &cfg.ingest) {
            Ok(f) => {
                let d: usize = f.iter().map(|fe| fe.detection_count()).sum();
                lines.push(format!("{}: {} frames with detections, {} detections kept", v.video_id, f.len(), d));
                frames += f.len();
                detections += d;
            }
            Err(e) => {
                worst = worst.max(if e.is_io() { EXIT_RUNTIME } else { EXIT_INVALID });
                lines.push(format!("{}: {e}", v.video_id));
            }
        }
    }
    lines.push(format!("{} videos, {frames} frames, {detections} detections", manifest.videos.len()));
    CommandOutcome::fail(worst, lines.join("\n"))
}

fn validate(p: &Project) -> CommandOutcome {
    let errors = p.diagnostics.iter().filter(|d| d.is_error()).count();
    let warnings = p.diagnostics.len() - errors;
    let mut lines: Vec<String> = p.diagnostics.iter().map(|d| d.to_string()).collect();
    lines.push(format!("{errors} errors, {warnings} warnings"));
    CommandOutcome::fail(if errors > 0 { EXIT_INVALID } else { EXIT_OK }, lines.join("\n"))
}

fn label(p: &mut Project, events: Option<&[String]>) -> CommandOutcome {
    let r = match run_labeling(p, events) {
        Ok(r) => r,
        Err(e) => return project_failure(e),
    };
    let report = p.run_dir(r.run_id).join(REPORT_FILE);
    let mut lines = Vec::new();
    for f in &r.failures {
        lines.push(format!("video {}: {}", f.video_id, f.error));
    }
    if r.status == RunStatus::Failed {
        lines.push(format!("run {} failed: {}", r.run_id, r.error.as_deref().unwrap_or("unknown error")));
        return CommandOutcome::fail(EXIT_RUNTIME, lines.join("\n")).with_report(report);
    }
    let labels = r.outputs.as_ref().map(|o| o.labels.display().to_string()).unwrap_or_default();
    lines.push(format!("run {}: {} instances, {} labels -> {labels}", r.run_id, r.instances, r.labels));
    if r.truncated_searches > 0 {
        lines.push(format!("{} frame searches hit the embedding cap", r.truncated_searches));
    }
    let code = if r.failures.is_empty() { EXIT_OK } else { EXIT_RUNTIME };
    CommandOutcome::fail(code, lines.join("\n")).with_report(report)
}

fn pick_run(p: &Project, run: Option<u32>) -> Result<u32, CommandOutcome> {
    run.or_else(|| p.runs.last().map(|r| r.run_id))
        .ok_or_else(|| CommandOutcome::fail(EXIT_INVALID, "project has no runs"))
}

fn eval(p: &Project, run: Option<u32>, action: Option<&str>) -> CommandOutcome {
    if p.ground_truth.is_none() {
        return CommandOutcome::fail(EXIT_INVALID, "no ground truth");
    }
    let id = match pick_run(p, run) {
        Ok(id) => id,
        Err(o) => return o,
    };
    let m = match evaluate_run(p, id, action) {
        Ok(m) => m,
        Err(e) => return eval_failure(e),
    };
    let path = p.run_dir(id).join("metrics.json");
    if let Err(e) = write_atomic(&path, pretty_json(&m).as_bytes()) {
        return project_failure(e);
    }
    CommandOutcome::ok(format!(
        "run {id}: frame precision {:.3}, instance recall {:.3} ({}/{} instances hit, {} labeled frames)",
        m.frame_precision, m.instance_recall, m.hit_instances, m.gt_instances, m.labeled_frames
    ))
    .with_report(path)
}

fn stats(p: &Project, run: Option<u32>) -> CommandOutcome {
    let id = match pick_run(p, run) {
        Ok(id) => id,
        Err(o) => return o,
    };
    if let Err(e) = crate::run::finished_run(p, id) {
        return eval_failure(e);
    }
    let path = p.run_dir(id).join(STATS_FILE);
    let stats: vidrules_core::evaluation::LabelStats =
        match std::fs::read_to_string(&path).map_err(|e| e.to_string()).and_then(|t| serde_json::from_str(&t).map_err(|e| e.to_string())) {
            Ok(s) => s,
            Err(e) => return CommandOutcome::fail(EXIT_RUNTIME, format!("{}: {e}", path.display())),
        };
    let mut lines: Vec<String> = stats.videos.iter().map(|v| format!("{}: {} labels", v.video_id, v.count)).collect();
    lines.push(format!("total: {} labels", stats.total()));
    CommandOutcome::ok(lines.join("\n")).with_report(path)
}

fn serve(p: Project, bind: SocketAddr) -> CommandOutcome {
    let rt = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => return CommandOutcome::fail(EXIT_RUNTIME, e.to_string()),
    };
    eprintln!("listening on http://{bind}");
    match rt.block_on(crate::http::serve(p, bind)) {
        Ok(()) => CommandOutcome::ok("server stopped"),
        Err(e) => CommandOutcome::fail(EXIT_RUNTIME, format!("{bind}: {e}")),
    }
}

fn export(p: &Project, run: Option<u32>, out: &Path, format: ExportFormat) -> CommandOutcome {
    let events = match run {
        Some(id) if p.run(id).is_none() => return CommandOutcome::fail(EXIT_INVALID, format!("unknown run {id}")),
        Some(id) => match run_events(p, id) {
            Ok(e) => e,
            Err(e) => return eval_failure(e),
        },
        None => p.events.clone(),
    };
    let body = match format {
        ExportFormat::Dsl => match serialize_events(&events) {
            Ok(s) => s,
            Err(d) => return project_failure(ProjectError::RuleErrors(d)),
        },
        ExportFormat::Json => pretty_json(&events),
        ExportFormat::Labels => {
            let Some(id) = run else {
                return CommandOutcome::fail(EXIT_USAGE, "--format labels needs --run");
            };
            match crate::run::run_labels(p, id, None) {
                Ok(l) => crate::run::labels_jsonl(&l),
                Err(e) => return eval_failure(e),
            }
        }
    };
    match write_atomic(out, body.as_bytes()) {
        Ok(()) => CommandOutcome::ok(format!("wrote {}", out.display())).with_report(out.to_path_buf()),
        Err(e) => project_failure(e),
    }
}

fn synth(root: &Path, variant: SynthVariant) -> CommandOutcome {
    let v = match variant {
        SynthVariant::Base => Variant::Base,
        SynthVariant::FalsePositive => Variant::FalsePositive,
        SynthVariant::OneOfFive => Variant::OneOfFive,
    };
    if let Err(e) = std::fs::create_dir_all(root) {
        return CommandOutcome::fail(EXIT_RUNTIME, format!("{}: {e}", root.display()));
    }
    match write_project(root, v) {
        Ok(m) => CommandOutcome::ok(format!("wrote {} videos to {}", m.videos.len(), root.display())),
        Err(e) => project_failure(e),
    }
}
