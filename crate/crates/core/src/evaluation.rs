//! Label quality metrics and label statistics.
//!
//! Precision is counted per labeled frame: the share of labels that fall
//! inside a ground-truth interval of the action. Recall is counted per
//! ground-truth interval: the share of intervals that contain at least one
//! label. Key-event labels cover only a small part of each action, so a
//! frame-level recall would be tiny by construction.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rules::KeyEvent;
use crate::sequencer::FrameLabel;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthInterval {
    #[serde(rename = "video")]
    pub video_id: String,
    #[serde(rename = "action")]
    pub action_label: String,
    /// Inclusive.
    #[serde(rename = "start")]
    pub t_l: u32,
    /// Inclusive.
    #[serde(rename = "end")]
    pub t_r: u32,
}

impl GroundTruthInterval {
    pub fn contains(&self, video_id: &str, frame: u32) -> bool {
        self.video_id == video_id && self.t_l <= frame && frame <= self.t_r
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("precision is undefined without labels")]
    NoLabels,
    #[error("recall is undefined: no ground-truth intervals for action `{0}`")]
    NoGroundTruth(String),
    #[error("label references unknown video `{0}`")]
    UnknownVideo(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub frame_precision: f64,
    pub instance_recall: f64,
    pub labeled_frames: usize,
    pub gt_instances: usize,
    pub hit_instances: usize,
}

fn intervals_for<'a>(gt: &'a [GroundTruthInterval], action: &'a str) -> impl Iterator<Item = &'a GroundTruthInterval> {
    gt.iter().filter(move |g| g.action_label == action)
}

/// Share of labels lying inside some ground-truth interval of `action`.
pub fn frame_precision(labels: &[FrameLabel], gt: &[GroundTruthInterval], action: &str) -> Result<f64, MetricError> {
    if labels.is_empty() {
        return Err(MetricError::NoLabels);
    }
    let inside = labels
        .iter()
        .filter(|l| intervals_for(gt, action).any(|g| g.contains(&l.video_id, l.frame)))
        .count();
    Ok(inside as f64 / labels.len() as f64)
}

fn hits(labels: &[FrameLabel], gt: &[GroundTruthInterval], action: &str) -> (usize, usize) {
    let mut total = 0;
    let mut hit = 0;
    for g in intervals_for(gt, action) {
        total += 1;
        if labels.iter().any(|l| g.contains(&l.video_id, l.frame)) {
            hit += 1;
        }
    }
    (hit, total)
}

/// Share of ground-truth intervals of `action` containing at least one label.
pub fn instance_recall(labels: &[FrameLabel], gt: &[GroundTruthInterval], action: &str) -> Result<f64, MetricError> {
    match hits(labels, gt, action) {
        (_, 0) => Err(MetricError::NoGroundTruth(action.into())),
        (hit, total) => Ok(hit as f64 / total as f64),
    }
}

/// Both metrics for one action. `labels` should already be restricted to
/// events of that action (see [`labels_for_action`]).
pub fn evaluate(labels: &[FrameLabel], gt: &[GroundTruthInterval], action: &str) -> Result<Metrics, MetricError> {
    let frame_precision = frame_precision(labels, gt, action)?;
    let instance_recall = instance_recall(labels, gt, action)?;
    let (hit_instances, gt_instances) = hits(labels, gt, action);
    Ok(Metrics { frame_precision, instance_recall, labeled_frames: labels.len(), gt_instances, hit_instances })
}

/// Labels produced by events whose action label is `action`.
pub fn labels_for_action(labels: &[FrameLabel], events: &[KeyEvent], action: &str) -> Vec<FrameLabel> {
    labels
        .iter()
        .filter(|l| events.iter().any(|e| e.event_id == l.event_id && e.action_label == action))
        .cloned()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoLabelStats {
    pub video_id: String,
    pub count: usize,
    /// Sorted; a frame labeled twice appears twice.
    pub positions: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LabelStats {
    pub videos: Vec<VideoLabelStats>,
}

impl LabelStats {
    pub fn video(&self, id: &str) -> Option<&VideoLabelStats> {
        self.videos.iter().find(|v| v.video_id == id)
    }

    pub fn total(&self) -> usize {
        self.videos.iter().map(|v| v.count).sum()
    }
}

/// Label counts and positions per video, in the order of `video_ids`.
pub fn dataset_stats<S: AsRef<str>>(labels: &[FrameLabel], video_ids: &[S]) -> Result<LabelStats, MetricError> {
    let mut by_video: BTreeMap<&str, Vec<u32>> = video_ids.iter().map(|v| (v.as_ref(), Vec::new())).collect();
    for l in labels {
        by_video
            .get_mut(l.video_id.as_str())
            .ok_or_else(|| MetricError::UnknownVideo(l.video_id.clone()))?
            .push(l.frame);
    }
    let videos = video_ids
        .iter()
        .map(|v| {
            let mut positions = by_video.remove(v.as_ref()).unwrap_or_default();
            positions.sort_unstable();
            VideoLabelStats { video_id: v.as_ref().into(), count: positions.len(), positions }
        })
        .collect();
    Ok(LabelStats { videos })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn label(video: &str, frame: u32) -> FrameLabel {
        FrameLabel { video_id: video.into(), frame, event_id: "e".into(), state: 1, instance_id: 1 }
    }

    fn gt(video: &str, a: u32, b: u32) -> GroundTruthInterval {
        GroundTruthInterval { video_id: video.into(), action_label: "serve".into(), t_l: a, t_r: b }
    }

    #[test]
    fn precision_counts() {
        let g = vec![gt("v1", 0, 10)];
        let all_in: Vec<_> = [1, 2, 3, 4].iter().map(|&f| label("v1", f)).collect();
        assert_eq!(frame_precision(&all_in, &g, "serve"), Ok(1.0));
        let mut four_of_five = all_in.clone();
        four_of_five.push(label("v1", 50));
        assert_eq!(frame_precision(&four_of_five, &g, "serve"), Ok(0.8));
        assert_eq!(frame_precision(&[], &g, "serve"), Err(MetricError::NoLabels));
        // a label in the right frame range of another video does not count
        assert_eq!(frame_precision(&[label("v2", 5)], &g, "serve"), Ok(0.0));
        // inclusive bounds
        assert_eq!(frame_precision(&[label("v1", 0), label("v1", 10)], &g, "serve"), Ok(1.0));
    }

    #[test]
    fn recall_counts() {
        let two = vec![gt("v1", 0, 10), gt("v1", 20, 30)];
        assert_eq!(instance_recall(&[label("v1", 5), label("v1", 25)], &two, "serve"), Ok(1.0));
        assert_eq!(instance_recall(&[label("v1", 5)], &two, "serve"), Ok(0.5));
        let five: Vec<_> = (0..5).map(|i| gt("v1", i * 100, i * 100 + 10)).collect();
        assert_eq!(instance_recall(&[label("v1", 205)], &five, "serve"), Ok(0.2));
        assert_eq!(instance_recall(&[label("v1", 5)], &two, "jump"), Err(MetricError::NoGroundTruth("jump".into())));
    }

    #[test]
    fn stats_per_video() {
        let labels: Vec<_> = [12, 10, 20, 11].iter().map(|&f| label("v1", f)).collect();
        let s = dataset_stats(&labels, &["v1", "v2"]).unwrap();
        assert_eq!(s.video("v1").unwrap().positions, vec![10, 11, 12, 20]);
        assert_eq!(s.video("v1").unwrap().count, 4);
        assert_eq!(s.video("v2").unwrap().count, 0);

        let empty = dataset_stats(&[], &["v1", "v2"]).unwrap();
        assert_eq!(empty.total(), 0);
        assert_eq!(empty.videos.len(), 2);

        assert_eq!(dataset_stats(&labels, &["v2"]), Err(MetricError::UnknownVideo("v1".into())));
    }
}
