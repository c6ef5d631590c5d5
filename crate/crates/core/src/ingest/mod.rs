//! Client side of the short-video source API: paginated listing per hashtag,
//! permission-gated media download and a shared rate limiter.

mod http;
mod limiter;
pub mod mock;

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use http::{HttpSource, RetryPolicy, TOKEN_ENV};
pub use limiter::RateLimiter;

use crate::error::{Error, Result, SourceError};
use crate::model::{RejectReason, VideoAsset};

/// One page of `GET /videos`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourcePage {
    pub items: Vec<VideoAsset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub next_cursor: Option<String>,
}

pub trait SourceApi: Send + Sync {
    fn list_page(&self, hashtag: &str, cursor: Option<&str>) -> Result<SourcePage>;
    fn fetch_media(&self, video_id: &str) -> Result<Vec<u8>>;
}

/// Follows cursors until `cap` distinct assets are collected or the last page is reached.
pub fn list_videos(hashtag: &str, cap: usize, client: &dyn SourceApi) -> Result<Vec<VideoAsset>> {
    if cap == 0 {
        return Err(Error::InvalidArgument("per-hashtag cap must be at least 1".into()));
    }
    let mut out = Vec::new();
    let mut seen_ids = HashSet::new();
    let mut seen_cursors = HashSet::new();
    let mut cursor: Option<String> = None;
    loop {
        let page = client.list_page(hashtag, cursor.as_deref())?;
        for asset in page.items {
            asset.validate()?;
            if seen_ids.insert(asset.video_id.clone()) {
                out.push(asset);
                if out.len() == cap {
                    return Ok(out);
                }
            }
        }
        match page.next_cursor {
            None => return Ok(out),
            Some(next) => {
                if !seen_cursors.insert(next.clone()) {
                    return Err(SourceError::Malformed {
                        url: format!("/videos?hashtag={hashtag}"),
                        msg: format!("cursor {next:?} repeats"),
                    }
                    .into());
                }
                cursor = Some(next);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DownloadOutcome {
    Downloaded { path: PathBuf, sha256: String },
    Skipped(RejectReason),
}

/// File name used for a downloaded video inside the media directory.
pub fn media_file_name(video_id: &str) -> String {
    format!("{video_id}.bin")
}

/// Fetches media only for assets with download permission; others are
/// skipped without touching the media endpoint.
pub fn download_if_permitted(asset: &VideoAsset, client: &dyn SourceApi, media_dir: &Path) -> Result<DownloadOutcome> {
    if !asset.download_permitted {
        return Ok(DownloadOutcome::Skipped(RejectReason::NoPermission));
    }
    let bytes = client
        .fetch_media(&asset.video_id)
        .map_err(|e| e.in_video(&asset.video_id))?;
    fs::create_dir_all(media_dir).map_err(|e| Error::io(media_dir, e))?;
    let path = media_dir.join(media_file_name(&asset.video_id));
    let tmp = path.with_extension("part");
    fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
    Ok(DownloadOutcome::Downloaded {
        path,
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}
