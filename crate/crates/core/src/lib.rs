//! Curation pipeline that turns raw short-form videos and hashtag metadata
//! into a filtered, trimmed action-recognition pre-training corpus.
//!
//! Stages exchange [`manifest::DatasetManifest`] files on disk:
//! ingest → scan (scene detection) → filter (human presence) → trim
//! (duration policy) → stats.

pub mod clip;
pub mod config;
pub mod detector;
pub mod error;
pub mod experiments;
pub mod hashtags;
pub mod ingest;
pub mod manifest;
pub mod media;
pub mod model;
pub mod pipeline;
pub mod presence;
pub mod sampler;
pub mod scene;
pub mod stats;
pub mod synth;

pub use config::PipelineConfig;
pub use error::{Error, Result};
pub use manifest::{merge_manifests, read_manifest, write_manifest, DatasetManifest};
pub use model::{ClipRecord, RejectReason, SceneSpan, Seconds, VideoAsset};
