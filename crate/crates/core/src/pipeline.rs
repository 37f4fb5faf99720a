//! Per-video composition of tracking, matching and sequencing.
//!
//! [`label_video`] runs everything sequentially. Callers that want to spread
//! frames over threads can use the pieces ([`match_frame`],
//! [`sequence_event`]) directly; the results are identical.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::constraints::GeometryConfig;
use crate::elements::{FrameElements, IngestConfig};
use crate::matcher::{build_frame_graph, CompiledState, FrameGraph, GraphError, MatchOutcome, DEFAULT_MAX_EMBEDDINGS};
use crate::rules::KeyEvent;
use crate::sequencer::{collapse_runs, detect_instances, KeyEventInstance, SequencerConfig};
use crate::tracker::{track_video, TrackerConfig};

fn default_cap() -> usize {
    DEFAULT_MAX_EMBEDDINGS
}

/// Every tunable of a labeling run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelingConfig {
    #[serde(default)]
    pub ingest: IngestConfig,
    #[serde(default)]
    pub tracker: TrackerConfig,
    #[serde(default)]
    pub geometry: GeometryConfig,
    #[serde(default)]
    pub sequencer: SequencerConfig,
    #[serde(default = "default_cap")]
    pub max_embeddings_per_frame: usize,
}

impl Default for LabelingConfig {
    fn default() -> Self {
        LabelingConfig {
            ingest: IngestConfig::default(),
            tracker: TrackerConfig::default(),
            geometry: GeometryConfig::default(),
            sequencer: SequencerConfig::default(),
            max_embeddings_per_frame: DEFAULT_MAX_EMBEDDINGS,
        }
    }
}

/// Compiled states of one event.
pub fn compile_event(event: &KeyEvent) -> Vec<CompiledState<'_>> {
    event.states.iter().map(CompiledState::new).collect()
}

/// Matches every state of an event against one frame graph.
pub fn match_frame(states: &[CompiledState<'_>], g: &FrameGraph, cfg: &LabelingConfig) -> Vec<MatchOutcome> {
    states.iter().map(|s| s.search(g, &cfg.geometry, None, cfg.max_embeddings_per_frame)).collect()
}

/// Turns per-frame match outcomes (one entry per state, per frame) into instances.
pub fn sequence_event<'a>(
    event: &KeyEvent,
    video_id: &str,
    fps: f64,
    per_frame: impl IntoIterator<Item = (u32, &'a [MatchOutcome])>,
    cfg: &SequencerConfig,
    first_id: u32,
) -> Vec<KeyEventInstance> {
    let mut per_state: Vec<BTreeMap<u32, Vec<crate::matcher::Embedding>>> = alloc::vec![BTreeMap::new(); event.states.len()];
    for (frame, outcomes) in per_frame {
        for (k, o) in outcomes.iter().enumerate() {
            if !o.embeddings.is_empty() {
                per_state[k].insert(frame, o.embeddings.clone());
            }
        }
    }
    let runs: Vec<_> = event.states.iter().zip(&per_state).map(|(s, m)| collapse_runs(&s.name, m)).collect();
    detect_instances(event, video_id, &runs, fps, cfg, first_id)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VideoLabels {
    pub instances: Vec<KeyEventInstance>,
    /// Number of (frame, state) searches cut off at the embedding cap.
    pub truncated: usize,
}

/// Tracks, matches and sequences every event over one video. Instance ids
/// are assigned consecutively from `first_id` in event order.
pub fn label_video(
    video_id: &str,
    fps: f64,
    frames: &[FrameElements],
    events: &[KeyEvent],
    cfg: &LabelingConfig,
    first_id: u32,
) -> Result<VideoLabels, GraphError> {
    let tracks = track_video(frames, &cfg.tracker);
    let graphs = frames
        .iter()
        .map(|fe| build_frame_graph(video_id, fe, &tracks, &cfg.ingest))
        .collect::<Result<Vec<_>, _>>()?;

    let mut out = VideoLabels::default();
    let mut next_id = first_id;
    for ev in events {
        let states = compile_event(ev);
        let outcomes: Vec<Vec<MatchOutcome>> = graphs.iter().map(|g| match_frame(&states, g, cfg)).collect();
        out.truncated += outcomes.iter().flatten().filter(|o| o.truncated).count();
        let per_frame = graphs.iter().zip(&outcomes).map(|(g, o)| (g.frame_index, o.as_slice()));
        let found = sequence_event(ev, video_id, fps, per_frame, &cfg.sequencer, next_id);
        next_id += found.len() as u32;
        out.instances.extend(found);
    }
    Ok(out)
}
