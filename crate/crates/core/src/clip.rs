//! Duration policy: which part of a video's longest scene becomes the clip.
//!
//! Scenes shorter than the minimum are rejected, scenes within the band are
//! kept whole, and longer scenes are cut down to the fixed-length window that
//! holds the most person-positive frames. Candidate windows start at the scene
//! start and advance in `step` increments; a frame counts towards a window only
//! when its whole display interval `[i/fps, (i+1)/fps)` lies inside it.

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::model::{ClipRecord, PresenceSample, RejectReason, SceneSpan, Seconds, VideoAsset};
use crate::presence::{qualifies, Gate, HumanPresenceSummary};
use crate::scene::longest_scene;

const FRAME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DurationPolicy {
    pub min_clip: Seconds,
    pub max_clip: Seconds,
    pub step: Seconds,
}

impl DurationPolicy {
    pub fn from_config(config: &PipelineConfig) -> Self {
        DurationPolicy {
            min_clip: config.min_clip(),
            max_clip: config.max_clip(),
            step: config.window_step(),
        }
    }
}

impl Default for DurationPolicy {
    fn default() -> Self {
        DurationPolicy::from_config(&PipelineConfig::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClipDecision {
    pub accepted: bool,
    pub clip_start_s: Option<Seconds>,
    pub clip_end_s: Option<Seconds>,
    pub reject_reason: RejectReason,
}

impl ClipDecision {
    fn accept(start: Seconds, end: Seconds) -> Self {
        ClipDecision {
            accepted: true,
            clip_start_s: Some(start),
            clip_end_s: Some(end),
            reject_reason: RejectReason::None,
        }
    }

    fn reject(reason: RejectReason) -> Self {
        ClipDecision {
            accepted: false,
            clip_start_s: None,
            clip_end_s: None,
            reject_reason: reason,
        }
    }
}

/// Expands sparse samples to one flag per scene frame using the nearest
/// sample (the earlier one on ties).
pub fn interpolate_presence(scene: SceneSpan, samples: &[PresenceSample]) -> Result<Vec<bool>> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no presence samples to interpolate".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by_key(|s| s.frame_index);
    Ok((scene.start_frame..scene.end_frame)
        .map(|frame| {
            let after = sorted.partition_point(|s| s.frame_index < frame);
            let next = sorted.get(after);
            let prev = after.checked_sub(1).map(|i| &sorted[i]);
            match (prev, next) {
                (Some(p), Some(n)) => {
                    if frame - p.frame_index <= n.frame_index - frame {
                        p.person
                    } else {
                        n.person
                    }
                }
                (Some(p), None) => p.person,
                (None, Some(n)) => n.person,
                (None, None) => unreachable!("samples is non-empty"),
            }
        })
        .collect())
}

/// Absolute frame range `[first, end)` whose display intervals fit inside `[start, end)`.
fn frames_within(start: Seconds, end: Seconds, frame_rate: f64) -> (u64, u64) {
    let first = (start.millis() as f64 * frame_rate / 1000.0 - FRAME_EPS).ceil().max(0.0);
    let end = (end.millis() as f64 * frame_rate / 1000.0 + FRAME_EPS).floor().max(0.0);
    (first as u64, end as u64)
}

/// Candidate window starts for a scene longer than the window.
pub fn window_starts(scene_start: Seconds, scene_end: Seconds, policy: &DurationPolicy) -> Vec<Seconds> {
    let step = policy.step.millis().max(1);
    let mut starts = Vec::new();
    let mut ws = scene_start.millis();
    while ws + policy.max_clip.millis() <= scene_end.millis() {
        starts.push(Seconds::from_millis(ws));
        ws += step;
    }
    starts
}

/// Applies the duration policy to `scene`; `presence` has one flag per scene frame.
pub fn apply_duration_policy(
    scene: SceneSpan,
    frame_rate: f64,
    presence: &[bool],
    policy: &DurationPolicy,
) -> Result<ClipDecision> {
    if presence.is_empty() {
        return Err(Error::InvalidArgument("empty presence vector".into()));
    }
    if presence.len() as u64 != scene.len() {
        return Err(Error::InvalidArgument(format!(
            "presence covers {} frames but the scene has {}",
            presence.len(),
            scene.len()
        )));
    }
    if !(frame_rate.is_finite() && frame_rate > 0.0) {
        return Err(Error::InvalidArgument(format!("frame rate {frame_rate} is not positive")));
    }

    let (start, end) = scene.bounds(frame_rate);
    let len = end.saturating_sub(start);
    if len < policy.min_clip {
        return Ok(ClipDecision::reject(RejectReason::TooShort));
    }
    if len <= policy.max_clip {
        return Ok(ClipDecision::accept(start, end));
    }

    let mut prefix = Vec::with_capacity(presence.len() + 1);
    prefix.push(0u64);
    for &p in presence {
        prefix.push(prefix.last().unwrap() + p as u64);
    }
    let count = |ws: Seconds, we: Seconds| {
        let (first, last) = frames_within(ws, we, frame_rate);
        let lo = first.clamp(scene.start_frame, scene.end_frame) - scene.start_frame;
        let hi = last.clamp(scene.start_frame, scene.end_frame) - scene.start_frame;
        if hi > lo {
            prefix[hi as usize] - prefix[lo as usize]
        } else {
            0
        }
    };

    let mut best: Option<(u64, Seconds)> = None;
    for ws in window_starts(start, end, policy) {
        let we = Seconds::from_millis(ws.millis() + policy.max_clip.millis());
        let c = count(ws, we);
        if best.is_none_or(|(b, _)| c > b) {
            best = Some((c, ws));
        }
    }
    let (_, ws) = best.expect("scene longer than the window has at least one candidate");
    Ok(ClipDecision::accept(
        ws,
        Seconds::from_millis(ws.millis() + policy.max_clip.millis()),
    ))
}

/// Runs every gate for one video and produces its single record.
///
/// Gate order: download permission, human presence, duration policy. The
/// first failing gate determines the reject reason.
pub fn decide_video(
    asset: &VideoAsset,
    spans: &[SceneSpan],
    summary: &HumanPresenceSummary,
    samples: &[PresenceSample],
    config: &PipelineConfig,
) -> Result<ClipRecord> {
    let id = asset.video_id.as_str();
    if !asset.download_permitted {
        return Ok(ClipRecord::rejected(id, RejectReason::NoPermission, 0.0));
    }
    let scene = longest_scene(spans).map_err(|e| e.in_video(id))?;
    let ratio = summary.presence_ratio;
    if let Gate::Reject(reason) = qualifies(summary, config.presence_threshold) {
        return Ok(ClipRecord::rejected(id, reason, ratio));
    }
    let flags = interpolate_presence(scene, samples).map_err(|e| e.in_video(id))?;
    let decision = apply_duration_policy(scene, asset.frame_rate, &flags, &DurationPolicy::from_config(config))
        .map_err(|e| e.in_video(id))?;
    Ok(match (decision.clip_start_s, decision.clip_end_s) {
        (Some(start), Some(end)) if decision.accepted => ClipRecord::accepted(id, start, end, ratio),
        _ => ClipRecord::rejected(id, decision.reject_reason, ratio),
    })
}
