//! Uniform frame subsampling for detector input.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::media;
use crate::model::SceneSpan;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameIndexPlan {
    pub video_id: String,
    pub total_frames: u64,
    /// Absolute frame indices, strictly increasing.
    pub indices: Vec<u64>,
}

/// `min(k, total_frames)` indices at regular intervals anchored at frame 0:
/// index `i` is `floor(i * total_frames / k)`.
pub fn plan_indices(total_frames: u64, k: u64) -> Result<Vec<u64>> {
    if total_frames == 0 || k == 0 {
        return Err(Error::InvalidArgument(format!(
            "plan_indices needs positive arguments, got total_frames={total_frames}, k={k}"
        )));
    }
    if total_frames <= k {
        return Ok((0..total_frames).collect());
    }
    Ok((0..k)
        .map(|i| (i as u128 * total_frames as u128 / k as u128) as u64)
        .collect())
}

impl FrameIndexPlan {
    /// Samples `k` frames inside `scene`.
    pub fn for_scene(video_id: &str, total_frames: u64, scene: SceneSpan, k: u64) -> Result<Self> {
        if scene.end_frame > total_frames || scene.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "scene [{}, {}) does not fit a {total_frames}-frame video",
                scene.start_frame, scene.end_frame
            )));
        }
        let indices = plan_indices(scene.len(), k)?
            .into_iter()
            .map(|i| scene.start_frame + i)
            .collect();
        Ok(FrameIndexPlan {
            video_id: video_id.to_owned(),
            total_frames,
            indices,
        })
    }
}

/// `frames/<video_id>/<index>.png` under `root`.
pub fn frame_image_path(root: &Path, video_id: &str, index: u64) -> PathBuf {
    root.join("frames").join(video_id).join(format!("{index}.png"))
}

/// Decodes the media once and writes the planned frames as PNG files.
pub fn extract_frames(
    media_path: &Path,
    plan: &FrameIndexPlan,
    root: &Path,
    config: &PipelineConfig,
) -> Result<Vec<PathBuf>> {
    let wanted: BTreeSet<u64> = plan.indices.iter().copied().collect();
    let last = plan.indices.last().copied();
    let mut written = Vec::with_capacity(plan.indices.len());
    media::for_each_frame(media_path, config, |index, frame| {
        if wanted.contains(&index) {
            let path = frame_image_path(root, &plan.video_id, index);
            frame.save_png(&path)?;
            written.push(path);
        }
        Ok(())
    })?;
    if written.len() != plan.indices.len() {
        return Err(Error::Media {
            path: media_path.to_owned(),
            msg: format!(
                "planned frames up to {} but media yielded only {} of them",
                last.unwrap_or(0),
                written.len()
            ),
        });
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hundred_frames_ten_samples() {
        assert_eq!(
            plan_indices(100, 10).unwrap(),
            vec![0, 10, 20, 30, 40, 50, 60, 70, 80, 90]
        );
    }

    #[test]
    fn ninety_five_frames() {
        assert_eq!(
            plan_indices(95, 10).unwrap(),
            vec![0, 9, 19, 28, 38, 47, 57, 66, 76, 85]
        );
    }

    #[test]
    fn fewer_frames_than_k() {
        assert_eq!(plan_indices(7, 10).unwrap(), vec![0, 1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn zero_arguments_rejected() {
        assert!(plan_indices(0, 10).is_err());
        assert!(plan_indices(10, 0).is_err());
    }

    #[test]
    fn scene_plan_is_offset() {
        let scene = SceneSpan { start_frame: 50, end_frame: 150 };
        let plan = FrameIndexPlan::for_scene("v", 300, scene, 10).unwrap();
        assert_eq!(plan.indices[0], 50);
        assert_eq!(plan.indices[9], 140);
        assert!(FrameIndexPlan::for_scene("v", 100, scene, 10).is_err());
    }

    proptest! {
        #[test]
        fn regular_interval_property(n in 1u64..100_000, k in 1u64..64) {
            let idx = plan_indices(n, k).unwrap();
            prop_assert_eq!(idx.len() as u64, n.min(k));
            prop_assert!(idx.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(*idx.last().unwrap() < n);
            let gaps: Vec<u64> = idx.windows(2).map(|w| w[1] - w[0]).collect();
            if let (Some(lo), Some(hi)) = (gaps.iter().min(), gaps.iter().max()) {
                prop_assert!(hi - lo <= 1);
            }
        }
    }
}
