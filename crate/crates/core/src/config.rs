//! Pipeline configuration.
//!
//! Config files are TOML. Every key is optional and falls back to its default;
//! unknown keys are rejected.
//!
//! ```toml
//! cut_threshold = 27.0          # content-score units, 0-255 scale
//! min_scene_len_frames = 15
//! sample_count = 10             # frames sampled per video for detection
//! presence_threshold = 0.5      # fraction of sampled frames with a person
//! min_clip_s = 3.5
//! max_clip_s = 10.0
//! min_views = 5000000
//! per_hashtag_cap = 900
//! min_det_score = 0.25
//! window_step_s = 0.5
//! analysis_width = 256
//! analysis_height = 144
//! decoder_cmd = "ffmpeg -v error -i {input} -vf scale={width}:{height} -f rawvideo -pix_fmt rgb24 -"
//! probe_cmd = "ffprobe -v error -select_streams v:0 -show_entries stream=nb_frames -of default=nokey=1:noprint_wrappers=1 {input}"
//! rate_per_s = 10.0
//! rate_capacity = 20
//! page_size = 100
//! detector_timeout_s = 30.0
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{Seconds, MAX_CLIP, MIN_CLIP};

pub const DEFAULT_DECODER_CMD: &str =
    "ffmpeg -v error -i {input} -vf scale={width}:{height} -f rawvideo -pix_fmt rgb24 -";
pub const DEFAULT_PROBE_CMD: &str = "ffprobe -v error -select_streams v:0 -show_entries stream=nb_frames -of default=nokey=1:noprint_wrappers=1 {input}";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub cut_threshold: f64,
    pub min_scene_len_frames: u64,
    pub sample_count: u64,
    pub presence_threshold: f64,
    pub min_clip_s: f64,
    pub max_clip_s: f64,
    pub min_views: u64,
    pub per_hashtag_cap: usize,
    pub min_det_score: f64,
    pub window_step_s: f64,
    pub analysis_width: u32,
    pub analysis_height: u32,
    pub decoder_cmd: String,
    pub probe_cmd: String,
    pub rate_per_s: f64,
    pub rate_capacity: u32,
    pub page_size: usize,
    pub detector_timeout_s: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            cut_threshold: 27.0,
            min_scene_len_frames: 15,
            sample_count: 10,
            presence_threshold: 0.5,
            min_clip_s: 3.5,
            max_clip_s: 10.0,
            min_views: 5_000_000,
            per_hashtag_cap: 900,
            min_det_score: 0.25,
            window_step_s: 0.5,
            analysis_width: 256,
            analysis_height: 144,
            decoder_cmd: DEFAULT_DECODER_CMD.into(),
            probe_cmd: DEFAULT_PROBE_CMD.into(),
            rate_per_s: 10.0,
            rate_capacity: 20,
            page_size: 100,
            detector_timeout_s: 30.0,
        }
    }
}

fn positive(field: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::config(field, format!("must be positive, got {value}")))
    }
}

fn nonzero(field: &str, value: u64) -> Result<()> {
    if value > 0 {
        Ok(())
    } else {
        Err(Error::config(field, "must be positive, got 0"))
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: PipelineConfig = toml::from_str(text).map_err(|e| {
            let field = e
                .message()
                .split('`')
                .nth(1)
                .unwrap_or("<file>")
                .to_owned();
            Error::Config {
                field,
                msg: e.message().trim().to_owned(),
            }
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        positive("cut_threshold", self.cut_threshold)?;
        nonzero("min_scene_len_frames", self.min_scene_len_frames)?;
        nonzero("sample_count", self.sample_count)?;
        if !(self.presence_threshold > 0.0 && self.presence_threshold <= 1.0) {
            return Err(Error::config(
                "presence_threshold",
                format!("must be in (0, 1], got {}", self.presence_threshold),
            ));
        }
        positive("min_clip_s", self.min_clip_s)?;
        positive("max_clip_s", self.max_clip_s)?;
        if self.min_clip_s >= self.max_clip_s {
            return Err(Error::config(
                "min_clip_s",
                format!(
                    "must be below max_clip_s ({} >= {})",
                    self.min_clip_s, self.max_clip_s
                ),
            ));
        }
        if self.min_clip_s < MIN_CLIP.as_secs_f64() {
            return Err(Error::config(
                "min_clip_s",
                format!("may not go below the corpus minimum {MIN_CLIP}s"),
            ));
        }
        if self.max_clip_s > MAX_CLIP.as_secs_f64() {
            return Err(Error::config(
                "max_clip_s",
                format!("may not exceed the corpus maximum {MAX_CLIP}s"),
            ));
        }
        nonzero("min_views", self.min_views)?;
        nonzero("per_hashtag_cap", self.per_hashtag_cap as u64)?;
        if !(0.0..=1.0).contains(&self.min_det_score) {
            return Err(Error::config(
                "min_det_score",
                format!("must be in [0, 1], got {}", self.min_det_score),
            ));
        }
        positive("window_step_s", self.window_step_s)?;
        nonzero("analysis_width", self.analysis_width as u64)?;
        nonzero("analysis_height", self.analysis_height as u64)?;
        positive("rate_per_s", self.rate_per_s)?;
        nonzero("rate_capacity", self.rate_capacity as u64)?;
        nonzero("page_size", self.page_size as u64)?;
        positive("detector_timeout_s", self.detector_timeout_s)?;
        Ok(())
    }

    pub fn min_clip(&self) -> Seconds {
        Seconds::from_secs_f64(self.min_clip_s).expect("validated")
    }

    pub fn max_clip(&self) -> Seconds {
        Seconds::from_secs_f64(self.max_clip_s).expect("validated")
    }

    pub fn window_step(&self) -> Seconds {
        Seconds::from_secs_f64(self.window_step_s).expect("validated")
    }

    /// Short stable digest of the effective configuration, recorded in provenance.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        let hash = Sha256::digest(&canonical);
        hex::encode(&hash[..8])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let config = PipelineConfig::default();
        config.validate().unwrap();
        assert_eq!(config.sample_count, 10);
        assert_eq!(config.min_views, 5_000_000);
        assert_eq!(config.per_hashtag_cap, 900);
        assert_eq!(config.max_clip(), Seconds::from_millis(10_000));
    }

    #[test]
    fn empty_file_is_default() {
        assert_eq!(
            PipelineConfig::from_toml_str("").unwrap(),
            PipelineConfig::default()
        );
    }

    #[test]
    fn theta_out_of_range_names_field() {
        let err = PipelineConfig::from_toml_str("presence_threshold = 1.5").unwrap_err();
        match err {
            Error::Config { field, .. } => assert_eq!(field, "presence_threshold"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_key_rejected() {
        let err = PipelineConfig::from_toml_str("cut_treshold = 30.0").unwrap_err();
        assert!(err.to_string().contains("cut_treshold"), "{err}");
    }

    #[test]
    fn clip_bounds_ordered() {
        let err = PipelineConfig::from_toml_str("min_clip_s = 6.0\nmax_clip_s = 5.0").unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "min_clip_s"));
    }

    #[test]
    fn digest_tracks_content() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        assert_eq!(a.digest(), b.digest());
        b.cut_threshold = 30.0;
        assert_ne!(a.digest(), b.digest());
    }
}
