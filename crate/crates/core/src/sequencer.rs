//! From per-frame state matches to key-event instances and frame labels.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::matcher::Embedding;
use crate::rules::KeyEvent;
use crate::tracker::TrackId;

pub type Signature = BTreeMap<String, TrackId>;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SequencerConfig {
    /// Smallest admissible delay between a state's run end and the next
    /// state's onset, in seconds. Negative values allow overlap; `None`
    /// means unbounded.
    pub min_delay_s: Option<f64>,
}

/// A maximal stretch of consecutive frames where one signature matches a state.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StateRun {
    pub state: String,
    pub signature: Signature,
    pub start_frame: u32,
    /// Inclusive.
    pub end_frame: u32,
}

impl StateRun {
    pub fn frame_count(&self) -> u32 {
        self.end_frame - self.start_frame + 1
    }
}

/// Groups per-frame embeddings of one state into runs, ordered by `(start, signature)`.
pub fn collapse_runs(state: &str, matches: &BTreeMap<u32, Vec<Embedding>>) -> Vec<StateRun> {
    let mut frames_by_sig: BTreeMap<&Signature, BTreeSet<u32>> = BTreeMap::new();
    for (&frame, es) in matches {
        for e in es {
            frames_by_sig.entry(&e.signature).or_default().insert(frame);
        }
    }
    let mut runs = Vec::new();
    for (sig, frames) in frames_by_sig {
        let mut it = frames.into_iter();
        let Some(first) = it.next() else { continue };
        let (mut start, mut end) = (first, first);
        for f in it {
            if f == end + 1 {
                end = f;
            } else {
                runs.push(StateRun { state: state.into(), signature: sig.clone(), start_frame: start, end_frame: end });
                start = f;
                end = f;
            }
        }
        runs.push(StateRun { state: state.into(), signature: sig.clone(), start_frame: start, end_frame: end });
    }
    runs.sort_by(|a, b| (a.start_frame, &a.signature).cmp(&(b.start_frame, &b.signature)));
    runs
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyEventInstance {
    pub event_id: String,
    pub video_id: String,
    pub instance_id: u32,
    /// One run per state, in state order.
    pub runs: Vec<StateRun>,
    /// Union of the run signatures.
    pub signature: Signature,
}

impl KeyEventInstance {
    pub fn onsets(&self) -> impl Iterator<Item = u32> + '_ {
        self.runs.iter().map(|r| r.start_frame)
    }
}

fn compatible(unified: &Signature, sig: &Signature) -> bool {
    sig.iter().all(|(var, t)| unified.get(var).is_none_or(|u| u == t))
}

/// Chains runs into key-event instances.
///
/// State-1 runs are scanned in start order. Each is extended greedily by the
/// earliest unconsumed run of the next state that agrees on shared variables,
/// starts strictly later, and follows within the interval threshold (delay is
/// measured from the end of the previous run, so overlap gives a negative
/// delay). Runs used by an emitted instance are consumed. Instance ids count
/// up from `first_id`.
pub fn detect_instances(
    event: &KeyEvent,
    video_id: &str,
    runs_per_state: &[Vec<StateRun>],
    fps: f64,
    cfg: &SequencerConfig,
    first_id: u32,
) -> Vec<KeyEventInstance> {
    let n = event.states.len();
    if n == 0 || runs_per_state.len() != n {
        return Vec::new();
    }
    let mut consumed: Vec<Vec<bool>> = runs_per_state.iter().map(|r| alloc::vec![false; r.len()]).collect();
    let mut out = Vec::new();

    for head in 0..runs_per_state[0].len() {
        if consumed[0][head] {
            continue;
        }
        let first = &runs_per_state[0][head];
        let mut chain = alloc::vec![head];
        let mut unified = first.signature.clone();
        let mut prev = first;

        for k in 1..n {
            let thr = event.intervals[k - 1];
            let next = runs_per_state[k].iter().enumerate().find(|(i, r)| {
                let delay = (r.start_frame as f64 - prev.end_frame as f64) / fps;
                !consumed[k][*i]
                    && r.start_frame > prev.start_frame
                    && delay <= thr
                    && cfg.min_delay_s.is_none_or(|m| delay >= m)
                    && compatible(&unified, &r.signature)
            });
            let Some((i, r)) = next else { break };
            unified.extend(r.signature.iter().map(|(k, v)| (k.clone(), *v)));
            chain.push(i);
            prev = r;
        }

        if chain.len() == n {
            for (k, &i) in chain.iter().enumerate() {
                consumed[k][i] = true;
            }
            out.push(KeyEventInstance {
                event_id: event.event_id.clone(),
                video_id: video_id.into(),
                instance_id: first_id + out.len() as u32,
                runs: chain.iter().enumerate().map(|(k, &i)| runs_per_state[k][i].clone()).collect(),
                signature: unified,
            });
        }
    }
    out
}

/// One weak label: a frame inside the run of state `state` (1-based) of an instance.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FrameLabel {
    #[serde(rename = "video")]
    pub video_id: String,
    pub frame: u32,
    #[serde(rename = "event")]
    pub event_id: String,
    pub state: u32,
    #[serde(rename = "instance")]
    pub instance_id: u32,
}

/// Labels every frame of every run of every instance, sorted by
/// `(video, frame, event, state, instance)`.
pub fn generate_labels(instances: &[KeyEventInstance]) -> Vec<FrameLabel> {
    let mut out: Vec<FrameLabel> = instances
        .iter()
        .flat_map(|inst| {
            inst.runs.iter().enumerate().flat_map(move |(k, r)| {
                (r.start_frame..=r.end_frame).map(move |frame| FrameLabel {
                    video_id: inst.video_id.clone(),
                    frame,
                    event_id: inst.event_id.clone(),
                    state: k as u32 + 1,
                    instance_id: inst.instance_id,
                })
            })
        })
        .collect();
    out.sort();
    out
}
