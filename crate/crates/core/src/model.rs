//! Domain types shared by every pipeline stage.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Shortest clip the corpus admits.
pub const MIN_CLIP: Seconds = Seconds::from_millis(3_500);
/// Longest clip the corpus admits.
pub const MAX_CLIP: Seconds = Seconds::from_millis(10_000);

/// A non-negative duration or timestamp with millisecond resolution.
///
/// Serialized as a JSON number with exactly three fractional digits so that
/// manifests round-trip byte for byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Seconds(u64);

impl Seconds {
    pub const ZERO: Seconds = Seconds(0);

    pub const fn from_millis(ms: u64) -> Self {
        Seconds(ms)
    }

    pub const fn millis(self) -> u64 {
        self.0
    }

    /// Rounds to the nearest millisecond. Negative and non-finite values are rejected.
    pub fn from_secs_f64(secs: f64) -> Result<Self> {
        if !secs.is_finite() || secs < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "seconds must be finite and non-negative, got {secs}"
            )));
        }
        Ok(Seconds((secs * 1000.0).round() as u64))
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1000.0
    }

    pub fn saturating_sub(self, other: Seconds) -> Seconds {
        Seconds(self.0.saturating_sub(other.0))
    }
}

impl fmt::Display for Seconds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:03}", self.0 / 1000, self.0 % 1000)
    }
}

impl Serialize for Seconds {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let raw = serde_json::value::RawValue::from_string(self.to_string())
            .map_err(serde::ser::Error::custom)?;
        raw.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Seconds {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let secs = f64::deserialize(deserializer)?;
        Seconds::from_secs_f64(secs).map_err(serde::de::Error::custom)
    }
}

/// A detected scene as a half-open frame interval `[start_frame, end_frame)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SceneSpan {
    pub start_frame: u64,
    pub end_frame: u64,
}

impl SceneSpan {
    pub fn new(start_frame: u64, end_frame: u64) -> Result<Self> {
        if end_frame <= start_frame {
            return Err(Error::invariant(
                None,
                format!("scene span [{start_frame}, {end_frame}) is empty"),
            ));
        }
        Ok(SceneSpan {
            start_frame,
            end_frame,
        })
    }

    pub fn len(&self) -> u64 {
        self.end_frame - self.start_frame
    }

    pub fn is_empty(&self) -> bool {
        self.end_frame <= self.start_frame
    }

    /// Start and end in milliseconds at the given frame rate.
    pub fn bounds(&self, frame_rate: f64) -> (Seconds, Seconds) {
        (
            frame_time(self.start_frame, frame_rate),
            frame_time(self.end_frame, frame_rate),
        )
    }
}

/// Presentation time of a frame boundary, rounded to the millisecond.
pub fn frame_time(frame: u64, frame_rate: f64) -> Seconds {
    Seconds::from_millis((frame as f64 * 1000.0 / frame_rate).round() as u64)
}

/// Whether a sampled frame held at least one qualifying person detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PresenceSample {
    pub frame_index: u64,
    pub person: bool,
}

/// Per-video analysis results accumulated by the scan and filter stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoAnalysis {
    pub total_frames: u64,
    /// The frame count was derived from duration and frame rate because the
    /// container did not declare one.
    pub frame_count_fallback: bool,
    /// Full scene distribution, sorted and covering `[0, total_frames)`.
    pub scenes: Vec<SceneSpan>,
    /// Detector verdicts for the sampled frames; empty until filtered.
    #[serde(default)]
    pub samples: Vec<PresenceSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoAsset {
    pub video_id: String,
    pub hashtag: String,
    pub duration_s: Seconds,
    pub frame_rate: f64,
    /// Local media file, relative to the manifest's directory unless absolute.
    #[serde(default)]
    pub media_path: Option<String>,
    pub download_permitted: bool,
    #[serde(default)]
    pub source_meta: BTreeMap<String, String>,
    #[serde(default)]
    pub analysis: Option<VideoAnalysis>,
    /// Logical clock of the last stage that touched this video.
    #[serde(default)]
    pub revision: u64,
}

impl VideoAsset {
    pub fn validate(&self) -> Result<()> {
        let id = Some(self.video_id.as_str());
        if self.video_id.is_empty() {
            return Err(Error::invariant(None, "video_id is empty"));
        }
        if self.hashtag.is_empty() || self.hashtag.starts_with('#') {
            return Err(Error::invariant(
                id,
                format!("hashtag {:?} is not normalized", self.hashtag),
            ));
        }
        if self.duration_s == Seconds::ZERO {
            return Err(Error::invariant(id, "duration_s must be > 0"));
        }
        if !(self.frame_rate.is_finite() && self.frame_rate > 0.0) {
            return Err(Error::invariant(id, "frame_rate must be > 0"));
        }
        if let Some(analysis) = &self.analysis {
            validate_partition(&analysis.scenes, analysis.total_frames)
                .map_err(|msg| Error::invariant(id, msg))?;
        }
        Ok(())
    }

    /// Longest scene, when the video has been scanned.
    pub fn longest_scene(&self) -> Option<SceneSpan> {
        self.analysis
            .as_ref()
            .and_then(|a| crate::scene::longest_scene(&a.scenes).ok())
    }
}

fn validate_partition(spans: &[SceneSpan], total: u64) -> std::result::Result<(), String> {
    let mut cursor = 0;
    for span in spans {
        if span.is_empty() {
            return Err(format!(
                "scene [{}, {}) is empty",
                span.start_frame, span.end_frame
            ));
        }
        if span.start_frame != cursor {
            return Err(format!(
                "scenes do not partition the video: gap or overlap at frame {cursor}"
            ));
        }
        cursor = span.end_frame;
    }
    if !spans.is_empty() && cursor != total {
        return Err(format!("scenes end at frame {cursor}, video has {total}"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    None,
    TooShort,
    InsufficientHumans,
    NoPermission,
}

impl RejectReason {
    pub const ALL: [RejectReason; 4] = [
        RejectReason::None,
        RejectReason::TooShort,
        RejectReason::InsufficientHumans,
        RejectReason::NoPermission,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::None => "none",
            RejectReason::TooShort => "too_short",
            RejectReason::InsufficientHumans => "insufficient_humans",
            RejectReason::NoPermission => "no_permission",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RejectReason {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RejectReason::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown reject reason {s:?}")))
    }
}

/// The per-video outcome of the curation pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipRecord {
    pub video_id: String,
    pub clip_start_s: Option<Seconds>,
    pub clip_end_s: Option<Seconds>,
    pub presence_ratio: f64,
    pub accepted: bool,
    pub reject_reason: RejectReason,
}

impl ClipRecord {
    pub fn accepted(video_id: &str, start: Seconds, end: Seconds, presence_ratio: f64) -> Self {
        ClipRecord {
            video_id: video_id.to_owned(),
            clip_start_s: Some(start),
            clip_end_s: Some(end),
            presence_ratio,
            accepted: true,
            reject_reason: RejectReason::None,
        }
    }

    pub fn rejected(video_id: &str, reason: RejectReason, presence_ratio: f64) -> Self {
        ClipRecord {
            video_id: video_id.to_owned(),
            clip_start_s: None,
            clip_end_s: None,
            presence_ratio,
            accepted: false,
            reject_reason: reason,
        }
    }

    /// Clip length, when both bounds are present.
    pub fn clip_len(&self) -> Option<Seconds> {
        match (self.clip_start_s, self.clip_end_s) {
            (Some(start), Some(end)) => Some(end.saturating_sub(start)),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let id = Some(self.video_id.as_str());
        if !(0.0..=1.0).contains(&self.presence_ratio) {
            return Err(Error::invariant(
                id,
                format!("presence_ratio {} outside [0, 1]", self.presence_ratio),
            ));
        }
        if self.accepted != (self.reject_reason == RejectReason::None) {
            return Err(Error::invariant(
                id,
                "reject_reason must be `none` exactly when the record is accepted",
            ));
        }
        if let (Some(start), Some(end)) = (self.clip_start_s, self.clip_end_s) {
            if end <= start {
                return Err(Error::invariant(id, "clip_end_s must exceed clip_start_s"));
            }
        }
        if self.accepted {
            let len = self
                .clip_len()
                .ok_or_else(|| Error::invariant(id, "accepted record without clip bounds"))?;
            if len < MIN_CLIP || len > MAX_CLIP {
                return Err(Error::invariant(
                    id,
                    format!("accepted clip length {len}s outside [{MIN_CLIP}, {MAX_CLIP}]"),
                ));
            }
        }
        Ok(())
    }

    pub(crate) fn sort_key(&self) -> (&str, Option<Seconds>) {
        (&self.video_id, self.clip_start_s)
    }
}

/// One executed pipeline stage.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ProvenanceEntry {
    /// Logical timestamp: strictly greater than every entry the stage saw.
    pub clock: u64,
    pub stage: String,
    pub config_digest: String,
    #[serde(default)]
    pub notes: Vec<String>,
}
