use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;
use std::time::{Duration, Instant};

use sha2::{Digest, Sha256};

use clipforge_core::error::{Error, SourceError};
use clipforge_core::ingest::mock::{Fault, MockFixture, MockServer};
use clipforge_core::ingest::{
    download_if_permitted, list_videos, DownloadOutcome, HttpSource, RateLimiter, RetryPolicy, SourceApi,
};
use clipforge_core::model::{RejectReason, Seconds, VideoAsset};

fn asset(id: String, tag: &str, permitted: bool) -> VideoAsset {
    VideoAsset {
        video_id: id,
        hashtag: tag.into(),
        duration_s: Seconds::from_millis(7_000),
        frame_rate: 30.0,
        media_path: None,
        download_permitted: permitted,
        source_meta: BTreeMap::new(),
        analysis: None,
        revision: 0,
    }
}

fn fixture(tag: &str, n: usize) -> MockFixture {
    let mut f = MockFixture::new((0..n).map(|i| asset(format!("{tag}{i:05}"), tag, i % 3 != 0)).collect());
    for a in &f.assets.clone() {
        f.media.insert(a.video_id.clone(), format!("bytes of {}", a.video_id).into_bytes());
    }
    f
}

fn client(server: &MockServer) -> HttpSource {
    HttpSource::new(server.url(), None, Arc::new(RateLimiter::new(1000, 10_000.0).unwrap())).with_retry(RetryPolicy {
        attempts: 3,
        base_delay: Duration::from_millis(5),
    })
}

#[test]
fn cap_of_900_out_of_2000() {
    let server = MockServer::start(fixture("dance", 2000)).unwrap();
    let got = list_videos("dance", 900, &client(&server)).unwrap();
    assert_eq!(got.len(), 900);
    let ids: HashSet<_> = got.iter().map(|a| a.video_id.clone()).collect();
    assert_eq!(ids.len(), 900);
    assert_eq!(got[0].video_id, "dance00000");
    assert_eq!(server.requests().len(), 9);
}

#[test]
fn small_tag_is_exhausted() {
    let server = MockServer::start(fixture("sax", 12)).unwrap();
    assert_eq!(list_videos("sax", 900, &client(&server)).unwrap().len(), 12);
    assert!(list_videos("nothing", 900, &client(&server)).unwrap().is_empty());
}

#[test]
fn server_error_on_page_two_is_retried() {
    let server = MockServer::start(fixture("dance", 250)).unwrap();
    server.inject(Fault::page(Some("100"), 500, 1));
    let got = list_videos("dance", 900, &client(&server)).unwrap();
    assert_eq!(got.len(), 250);
    let statuses: Vec<u16> = server.requests().iter().map(|r| r.status).collect();
    assert_eq!(statuses, [200, 500, 200, 200]);
}

#[test]
fn persistent_errors_surface_after_three_attempts() {
    let server = MockServer::start(fixture("dance", 10)).unwrap();
    server.inject(Fault::page(None, 503, 10));
    let err = list_videos("dance", 900, &client(&server)).unwrap_err();
    assert!(matches!(err, Error::Source(SourceError::Status { status: 503, .. })));
    assert_eq!(server.requests().len(), 3);
}

#[test]
fn auth_failure_is_not_retried() {
    let mut f = fixture("dance", 10);
    f.token = Some("secret".into());
    let server = MockServer::start(f).unwrap();
    let err = list_videos("dance", 900, &client(&server)).unwrap_err();
    assert!(matches!(err, Error::Source(SourceError::Auth { status: 401 })));
    assert_eq!(server.requests().len(), 1);

    let limiter = Arc::new(RateLimiter::new(10, 100.0).unwrap());
    let ok = HttpSource::new(server.url(), Some("secret".into()), limiter);
    assert_eq!(list_videos("dance", 900, &ok).unwrap().len(), 10);
}

#[test]
fn permitted_download_matches_server_digest() {
    let f = fixture("dance", 3);
    let server = MockServer::start(f.clone()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let a = f.assets.iter().find(|a| a.download_permitted).unwrap();
    match download_if_permitted(a, &client(&server), dir.path()).unwrap() {
        DownloadOutcome::Downloaded { path, sha256 } => {
            let expected = hex::encode(Sha256::digest(&f.media[&a.video_id]));
            assert_eq!(sha256, expected);
            assert_eq!(hex::encode(Sha256::digest(std::fs::read(path).unwrap())), expected);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn non_permitted_assets_never_hit_media_endpoint() {
    let f = fixture("dance", 30);
    let server = MockServer::start(f.clone()).unwrap();
    let c = client(&server);
    let dir = tempfile::tempdir().unwrap();
    let listed = list_videos("dance", 900, &c).unwrap();
    let mut skipped = HashSet::new();
    for a in &listed {
        if let DownloadOutcome::Skipped(reason) = download_if_permitted(a, &c, dir.path()).unwrap() {
            assert_eq!(reason, RejectReason::NoPermission);
            skipped.insert(format!("/media/{}", a.video_id));
        }
    }
    assert_eq!(skipped.len(), 10);
    let media = server.media_requests();
    assert_eq!(media.len(), 20);
    assert!(media.iter().all(|r| !skipped.contains(&r.path)));
}

#[test]
fn missing_media_errors_after_retries() {
    let mut f = fixture("dance", 1);
    f.assets[0].download_permitted = true;
    f.media.clear();
    let server = MockServer::start(f.clone()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let err = download_if_permitted(&f.assets[0], &client(&server), dir.path()).unwrap_err();
    assert_eq!(err.video_id(), Some("dance00000"));
    assert!(matches!(err.root(), Error::Source(SourceError::Status { status: 404, .. })));
    assert_eq!(server.media_requests().len(), 3);
}

#[test]
fn limiter_paces_requests() {
    let server = MockServer::start(fixture("dance", 5)).unwrap();
    let start = Instant::now();
    let limiter = Arc::new(RateLimiter::new(10, 10.0).unwrap());
    let c = HttpSource::new(server.url(), None, limiter);
    for _ in 0..20 {
        c.list_page("dance", None).unwrap();
    }
    assert!(start.elapsed() >= Duration::from_secs(1));
}

#[test]
fn fixture_dir_round_trip() {
    let f = fixture("mop", 4);
    let dir = tempfile::tempdir().unwrap();
    f.save_dir(dir.path()).unwrap();
    let back = MockFixture::from_dir(dir.path()).unwrap();
    assert_eq!(back.assets, f.assets);
    assert_eq!(back.media, f.media);
}
