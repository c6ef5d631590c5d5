//! Content-based shot-boundary detection.
//!
//! Each frame is reduced to its mean hue, saturation and value (0-255 scale)
//! after decimating it to at most [`MAX_ANALYSIS_WIDTH`] pixels wide. The
//! content score between consecutive frames is the average absolute change of
//! the three means; a cut is declared where the score exceeds the threshold and
//! the previous cut is at least `min_scene_len` frames back.

use crate::error::{Error, Result};
use crate::model::SceneSpan;

pub const MAX_ANALYSIS_WIDTH: u32 = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameFeature {
    pub frame_index: u64,
    pub mean_hue: f64,
    pub mean_sat: f64,
    pub mean_luma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContentScore {
    /// Index of the later frame of the pair.
    pub frame_index: u64,
    pub score: f64,
}

/// Hue, saturation and value of one RGB pixel, each scaled to 0-255.
pub fn rgb_to_hsv(r: u8, g: u8, b: u8) -> (f64, f64, f64) {
    let (r, g, b) = (r as f64, g as f64, b as f64);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let sat = if max == 0.0 { 0.0 } else { 255.0 * delta / max };
    let hue_deg = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    (hue_deg * 255.0 / 360.0, sat, max)
}

impl FrameFeature {
    /// Extracts channel means from an interleaved RGB24 frame.
    ///
    /// Frames wider than [`MAX_ANALYSIS_WIDTH`] are decimated by the smallest
    /// integer stride that brings them under the limit, in both axes.
    pub fn from_rgb(frame_index: u64, width: u32, height: u32, rgb: &[u8]) -> Result<Self> {
        let (w, h) = (width as usize, height as usize);
        if w == 0 || h == 0 || rgb.len() != w * h * 3 {
            return Err(Error::InvalidArgument(format!(
                "frame {frame_index}: {} bytes do not match {width}x{height} rgb24",
                rgb.len()
            )));
        }
        let stride = (w as u32).div_ceil(MAX_ANALYSIS_WIDTH).max(1) as usize;
        let (mut hue, mut sat, mut val, mut n) = (0.0, 0.0, 0.0, 0usize);
        for y in (0..h).step_by(stride) {
            let row = &rgb[y * w * 3..(y + 1) * w * 3];
            for x in (0..w).step_by(stride) {
                let px = &row[x * 3..x * 3 + 3];
                let (hh, ss, vv) = rgb_to_hsv(px[0], px[1], px[2]);
                hue += hh;
                sat += ss;
                val += vv;
                n += 1;
            }
        }
        let n = n as f64;
        Ok(FrameFeature {
            frame_index,
            mean_hue: hue / n,
            mean_sat: sat / n,
            mean_luma: val / n,
        })
    }
}

fn in_channel_range(v: f64) -> bool {
    (0.0..=255.0).contains(&v)
}

/// Scores every consecutive pair of frames.
pub fn compute_content_scores(features: &[FrameFeature]) -> Result<Vec<ContentScore>> {
    if features.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "content scoring needs at least 2 frames, got {}",
            features.len()
        )));
    }
    for f in features {
        if !(in_channel_range(f.mean_hue) && in_channel_range(f.mean_sat) && in_channel_range(f.mean_luma)) {
            return Err(Error::InvalidArgument(format!(
                "frame {}: channel means outside [0, 255]",
                f.frame_index
            )));
        }
    }
    features
        .windows(2)
        .map(|pair| {
            let (prev, cur) = (pair[0], pair[1]);
            if cur.frame_index <= prev.frame_index {
                return Err(Error::InvalidArgument(format!(
                    "frame indices not strictly increasing at {}",
                    cur.frame_index
                )));
            }
            let score = ((cur.mean_hue - prev.mean_hue).abs()
                + (cur.mean_sat - prev.mean_sat).abs()
                + (cur.mean_luma - prev.mean_luma).abs())
                / 3.0;
            Ok(ContentScore {
                frame_index: cur.frame_index,
                score,
            })
        })
        .collect()
}

/// Frame indices that start a new scene.
pub fn detect_cuts(scores: &[ContentScore], cut_threshold: f64, min_scene_len_frames: u64) -> Vec<u64> {
    let min_len = min_scene_len_frames.max(1);
    let mut last_cut = 0u64;
    let mut cuts = Vec::new();
    for s in scores {
        if s.score > cut_threshold && s.frame_index >= last_cut + min_len {
            cuts.push(s.frame_index);
            last_cut = s.frame_index;
        }
    }
    cuts
}

/// Partitions `[0, total_frames)` at the given cuts.
pub fn scenes_from_cuts(total_frames: u64, cuts: &[u64]) -> Result<Vec<SceneSpan>> {
    if total_frames == 0 {
        return Err(Error::InvalidArgument("video has no frames".into()));
    }
    let mut spans = Vec::with_capacity(cuts.len() + 1);
    let mut start = 0;
    for &cut in cuts {
        if cut == 0 || cut >= total_frames {
            return Err(Error::InvalidArgument(format!(
                "cut {cut} outside (0, {total_frames})"
            )));
        }
        if cut <= start {
            return Err(Error::InvalidArgument(format!(
                "cuts not strictly increasing at {cut}"
            )));
        }
        spans.push(SceneSpan {
            start_frame: start,
            end_frame: cut,
        });
        start = cut;
    }
    spans.push(SceneSpan {
        start_frame: start,
        end_frame: total_frames,
    });
    Ok(spans)
}

/// The longest span; the earliest one wins ties.
pub fn longest_scene(spans: &[SceneSpan]) -> Result<SceneSpan> {
    let mut best: Option<SceneSpan> = None;
    for &span in spans {
        let better = match best {
            None => true,
            Some(b) => span.len() > b.len() || (span.len() == b.len() && span.start_frame < b.start_frame),
        };
        if better {
            best = Some(span);
        }
    }
    best.ok_or_else(|| Error::InvalidArgument("no scenes to choose from".into()))
}

/// Scene detection parameters.
#[derive(Debug, Clone, Copy)]
pub struct CutParams {
    pub threshold: f64,
    pub min_scene_len_frames: u64,
}

/// Runs the whole detector over a feature sequence covering every frame of a video.
pub fn detect_scenes(features: &[FrameFeature], params: CutParams) -> Result<Vec<SceneSpan>> {
    let total = features.len() as u64;
    if total < 2 {
        return scenes_from_cuts(total, &[]);
    }
    let scores = compute_content_scores(features)?;
    let cuts = detect_cuts(&scores, params.threshold, params.min_scene_len_frames);
    scenes_from_cuts(total, &cuts)
}
