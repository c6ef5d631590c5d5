//! Stage drivers. Every stage takes a manifest, appends one provenance entry
//! and stamps the videos it touched with that entry's clock.
//!
//! Media and frame paths inside a manifest are relative to the directory the
//! manifest lives in.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Component, Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use log::info;

use crate::clip::decide_video;
use crate::config::PipelineConfig;
use crate::detector::Detector;
use crate::error::{Error, Result};
use crate::hashtags::HashtagSpec;
use crate::ingest::{download_if_permitted, list_videos, DownloadOutcome, SourceApi};
use crate::manifest::{write_manifest, DatasetManifest};
use crate::media::{for_each_frame, probe_frame_count};
use crate::model::{ClipRecord, PresenceSample, ProvenanceEntry, RejectReason, VideoAnalysis, VideoAsset};
use crate::presence::{person_samples, qualifies, Gate, HumanPresenceSummary};
use crate::sampler::{extract_frames, FrameIndexPlan};
use crate::scene::{detect_scenes, CutParams, FrameFeature};
use crate::stats::{emit_report, DurationMode};

pub const MEDIA_DIR: &str = "media";

/// Builds one detector per worker.
pub type DetectorFactory<'a> = dyn Fn() -> Result<Box<dyn Detector>> + Sync + 'a;

pub fn default_workers() -> usize {
    thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Maps `f` over `items` on up to `workers` threads, each with its own state
/// from `init`. Results keep input order; the first failing item (by
/// position) determines the error.
pub fn par_map_with<T, S, R>(
    items: &[T],
    workers: usize,
    init: impl Fn() -> Result<S> + Sync,
    f: impl Fn(&mut S, &T) -> Result<R> + Sync,
) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
{
    if items.is_empty() {
        return Ok(Vec::new());
    }
    let workers = workers.clamp(1, items.len());
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<R>>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    let init_error: Mutex<Option<Error>> = Mutex::new(None);
    thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| {
                let mut state = match init() {
                    Ok(state) => state,
                    Err(e) => {
                        init_error.lock().unwrap().get_or_insert(e);
                        return;
                    }
                };
                loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= items.len() {
                        break;
                    }
                    let r = f(&mut state, &items[i]);
                    slots.lock().unwrap()[i] = Some(r);
                }
            });
        }
    });
    let slots = slots.into_inner().unwrap();
    let mut out = Vec::with_capacity(items.len());
    for slot in slots {
        match slot {
            Some(Ok(r)) => out.push(r),
            Some(Err(e)) => return Err(e),
            None => {
                return Err(init_error
                    .into_inner()
                    .unwrap()
                    .unwrap_or_else(|| Error::InvalidArgument("worker pool stopped early".into())))
            }
        }
    }
    Ok(out)
}

pub fn par_map<T: Sync, R: Send>(items: &[T], workers: usize, f: impl Fn(&T) -> Result<R> + Sync) -> Result<Vec<R>> {
    par_map_with(items, workers, || Ok(()), |_, item| f(item))
}

fn push_provenance(m: &mut DatasetManifest, stage: &str, config: &PipelineConfig, notes: Vec<String>) -> u64 {
    let clock = m.next_clock();
    m.provenance.push(ProvenanceEntry {
        clock,
        stage: stage.into(),
        config_digest: config.digest(),
        notes,
    });
    clock
}

/// Resolves a manifest-relative path.
pub fn resolve(dir: &Path, path: &str) -> PathBuf {
    let p = Path::new(path);
    if p.is_absolute() {
        p.to_owned()
    } else {
        dir.join(p)
    }
}

fn lexical_normalize(path: &Path) -> PathBuf {
    let mut out = PathBuf::new();
    for c in path.components() {
        match c {
            Component::CurDir => {}
            Component::ParentDir => {
                if !out.pop() {
                    out.push("..");
                }
            }
            other => out.push(other),
        }
    }
    out
}

fn absolute(path: &Path) -> PathBuf {
    let joined = if path.is_absolute() {
        path.to_owned()
    } else {
        std::env::current_dir().unwrap_or_default().join(path)
    };
    lexical_normalize(&joined)
}

/// Rewrites media paths so a manifest read from `from` stays valid when written into `to`.
pub fn rebase_media_paths(m: &mut DatasetManifest, from: &Path, to: &Path) {
    let (from, to) = (absolute(from), absolute(to));
    if from == to {
        return;
    }
    for asset in m.assets.values_mut() {
        if let Some(p) = &asset.media_path {
            let full = lexical_normalize(&resolve(&from, p));
            asset.media_path = Some(match full.strip_prefix(&to) {
                Ok(rel) => rel.to_string_lossy().into_owned(),
                Err(_) => full.to_string_lossy().into_owned(),
            });
        }
    }
}

/// Directory a manifest file's relative paths refer to.
pub fn manifest_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_owned(),
        _ => PathBuf::from("."),
    }
}

fn replace_records(m: &mut DatasetManifest, touched: &BTreeSet<String>, new: Vec<ClipRecord>) {
    m.records.retain(|r| !touched.contains(&r.video_id));
    m.records.extend(new);
    m.sort_records();
}

/// Lists every hashtag (in parallel), then downloads permitted media into
/// `out_dir/media`. Videos listed under several hashtags keep the first.
pub fn ingest(
    client: &dyn SourceApi,
    hashtags: &[HashtagSpec],
    out_dir: &Path,
    config: &PipelineConfig,
    workers: usize,
) -> Result<DatasetManifest> {
    let media_dir = out_dir.join(MEDIA_DIR);
    let per_tag = par_map(hashtags, workers, |spec| {
        let assets = list_videos(&spec.tag, config.per_hashtag_cap, client)?;
        let mut out = Vec::with_capacity(assets.len());
        for mut asset in assets {
            asset.hashtag = spec.tag.clone();
            let outcome = download_if_permitted(&asset, client, &media_dir)?;
            if let DownloadOutcome::Downloaded { path, sha256 } = &outcome {
                let name = path.file_name().expect("file path").to_string_lossy();
                asset.media_path = Some(format!("{MEDIA_DIR}/{name}"));
                asset.source_meta.insert("media_sha256".into(), sha256.clone());
            } else {
                asset.media_path = None;
            }
            out.push((asset, outcome));
        }
        info!("#{}: {} videos listed", spec.tag, out.len());
        Ok(out)
    })?;

    let mut m = DatasetManifest::new();
    let (mut listed, mut downloaded, mut skipped, mut duplicates) = (0, 0, 0, 0);
    let mut records = Vec::new();
    for (asset, outcome) in per_tag.into_iter().flatten() {
        listed += 1;
        if m.assets.contains_key(&asset.video_id) {
            duplicates += 1;
            continue;
        }
        match outcome {
            DownloadOutcome::Downloaded { .. } => downloaded += 1,
            DownloadOutcome::Skipped(reason) => {
                skipped += 1;
                records.push(ClipRecord::rejected(&asset.video_id, reason, 0.0));
            }
        }
        m.assets.insert(asset.video_id.clone(), asset);
    }
    let notes = vec![
        format!("hashtags={}", hashtags.len()),
        format!("listed={listed}"),
        format!("downloaded={downloaded}"),
        format!("skipped_no_permission={skipped}"),
        format!("duplicates={duplicates}"),
    ];
    let clock = push_provenance(&mut m, "ingest", config, notes);
    for a in m.assets.values_mut() {
        a.revision = clock;
    }
    m.records = records;
    m.sort_records();
    m.validate()?;
    Ok(m)
}

fn media_of(asset: &VideoAsset) -> Result<&str> {
    asset
        .media_path
        .as_deref()
        .ok_or_else(|| Error::invariant(Some(&asset.video_id), "permitted video has no media file"))
}

fn scan_one(asset: &VideoAsset, media_root: &Path, config: &PipelineConfig) -> Result<(VideoAnalysis, Option<String>)> {
    let media = resolve(media_root, media_of(asset)?);
    let probe = probe_frame_count(asset, &media, config)?;
    let mut features = Vec::with_capacity(probe.frames as usize);
    let decoded = for_each_frame(&media, config, |i, frame| {
        features.push(FrameFeature::from_rgb(i, frame.width, frame.height, &frame.data)?);
        Ok(())
    })?;
    if decoded == 0 {
        return Err(Error::Media {
            path: media,
            msg: "no frames decoded".into(),
        });
    }
    let id = &asset.video_id;
    let note = match (probe.fallback, decoded == probe.frames) {
        (false, true) => None,
        (true, true) => Some(format!("{id}: frame count missing, using round(duration*fps)={decoded}")),
        (true, false) => Some(format!(
            "{id}: frame count missing, estimate {} replaced by {decoded} decoded frames",
            probe.frames
        )),
        (false, false) => Some(format!(
            "{id}: container declares {} frames, decoded {decoded}",
            probe.frames
        )),
    };
    let scenes = detect_scenes(
        &features,
        CutParams {
            threshold: config.cut_threshold,
            min_scene_len_frames: config.min_scene_len_frames,
        },
    )?;
    Ok((
        VideoAnalysis {
            total_frames: decoded,
            frame_count_fallback: probe.fallback,
            scenes,
            samples: Vec::new(),
        },
        note,
    ))
}

/// Scene detection for every permitted video.
pub fn scan(mut m: DatasetManifest, media_root: &Path, config: &PipelineConfig, workers: usize) -> Result<DatasetManifest> {
    let todo: Vec<&VideoAsset> = m.assets.values().filter(|a| a.download_permitted).collect();
    let results = par_map(&todo, workers, |asset| {
        let r = scan_one(asset, media_root, config).map_err(|e| e.in_video(&asset.video_id))?;
        info!("{}: {} scenes", asset.video_id, r.0.scenes.len());
        Ok((asset.video_id.clone(), r))
    })?;
    let mut notes = vec![format!("scanned={}", results.len())];
    let mut analyses = BTreeMap::new();
    for (id, (analysis, note)) in results {
        notes.extend(note);
        analyses.insert(id, analysis);
    }
    let clock = push_provenance(&mut m, "scan", config, notes);
    let touched: BTreeSet<String> = analyses.keys().cloned().collect();
    for (id, analysis) in analyses {
        let asset = m.assets.get_mut(&id).expect("scanned asset");
        asset.analysis = Some(analysis);
        asset.revision = clock;
    }
    replace_records(&mut m, &touched, Vec::new());
    m.validate()?;
    Ok(m)
}

fn sample_one(
    detector: &mut dyn Detector,
    asset: &VideoAsset,
    media_root: &Path,
    frames_root: &Path,
    config: &PipelineConfig,
) -> Result<Vec<PresenceSample>> {
    let id = asset.video_id.as_str();
    let analysis = asset
        .analysis
        .as_ref()
        .ok_or_else(|| Error::invariant(Some(id), "video has not been scanned"))?;
    let scene = asset
        .longest_scene()
        .ok_or_else(|| Error::invariant(Some(id), "video has no scenes"))?;
    let plan = FrameIndexPlan::for_scene(id, analysis.total_frames, scene, config.sample_count)?;
    let media = resolve(media_root, media_of(asset)?);
    let paths = extract_frames(&media, &plan, frames_root, config)?;
    let detections = detector.detect_batch(&paths)?;
    if detections.len() != paths.len()
        || detections
            .iter()
            .zip(&plan.indices)
            .any(|(d, &i)| d.video_id != id || d.frame_index != i)
    {
        return Err(Error::invariant(Some(id), "detector results do not match the requested frames"));
    }
    person_samples(&detections, config.min_det_score)
}

/// Samples frames from each video's longest scene, runs the detector and
/// stores per-frame person verdicts. Videos below the presence threshold get
/// an `insufficient_humans` record.
pub fn filter(
    mut m: DatasetManifest,
    media_root: &Path,
    frames_root: &Path,
    config: &PipelineConfig,
    workers: usize,
    detectors: &DetectorFactory,
) -> Result<DatasetManifest> {
    let todo: Vec<&VideoAsset> = m.assets.values().filter(|a| a.download_permitted).collect();
    let results = par_map_with(
        &todo,
        workers,
        detectors,
        |detector, asset| {
            let samples = sample_one(detector.as_mut(), asset, media_root, frames_root, config)
                .map_err(|e| e.in_video(&asset.video_id))?;
            Ok((asset.video_id.clone(), samples))
        },
    )?;
    let mut rejected = Vec::new();
    let mut touched = BTreeSet::new();
    let mut updates = Vec::new();
    for (id, samples) in results {
        let summary = HumanPresenceSummary::from_samples(&id, &samples)?;
        if let Gate::Reject(reason) = qualifies(&summary, config.presence_threshold) {
            rejected.push(ClipRecord::rejected(&id, reason, summary.presence_ratio));
        }
        touched.insert(id.clone());
        updates.push((id, samples));
    }
    let notes = vec![
        format!("sampled={}", updates.len()),
        format!("insufficient_humans={}", rejected.len()),
        format!("presence_threshold={}", config.presence_threshold),
    ];
    let clock = push_provenance(&mut m, "filter", config, notes);
    for (id, samples) in updates {
        let asset = m.assets.get_mut(&id).expect("filtered asset");
        if let Some(a) = asset.analysis.as_mut() {
            a.samples = samples;
        }
        asset.revision = clock;
    }
    replace_records(&mut m, &touched, rejected);
    m.validate()?;
    Ok(m)
}

/// Final per-video decision: permission, presence, then duration policy.
pub fn trim(mut m: DatasetManifest, config: &PipelineConfig) -> Result<DatasetManifest> {
    let mut records = Vec::with_capacity(m.assets.len());
    for asset in m.assets.values() {
        let id = asset.video_id.as_str();
        let record = if !asset.download_permitted {
            ClipRecord::rejected(id, RejectReason::NoPermission, 0.0)
        } else {
            let analysis = asset
                .analysis
                .as_ref()
                .filter(|a| !a.samples.is_empty())
                .ok_or_else(|| Error::invariant(Some(id), "video has not been through the presence filter"))?;
            let summary = HumanPresenceSummary::from_samples(id, &analysis.samples)?;
            decide_video(asset, &analysis.scenes, &summary, &analysis.samples, config)?
        };
        records.push(record);
    }
    let mut counts: BTreeMap<&str, usize> = RejectReason::ALL.iter().map(|r| (r.as_str(), 0)).collect();
    for r in &records {
        *counts.get_mut(r.reject_reason.as_str()).expect("known reason") += 1;
    }
    let notes = counts.iter().map(|(k, v)| format!("{k}={v}")).collect();
    let clock = push_provenance(&mut m, "trim", config, notes);
    for a in m.assets.values_mut() {
        a.revision = clock;
    }
    m.records = records;
    m.sort_records();
    m.validate()?;
    Ok(m)
}

/// Writes the report files into `report_dir` and records the stage.
pub fn stats(mut m: DatasetManifest, report_dir: &Path, config: &PipelineConfig, mode: DurationMode) -> Result<DatasetManifest> {
    emit_report(&m, mode, report_dir)?;
    let notes = vec![
        format!("accepted={}", m.accepted_count()),
        format!("records={}", m.records.len()),
    ];
    push_provenance(&mut m, "stats", config, notes);
    m.validate()?;
    Ok(m)
}

pub const INGEST_MANIFEST: &str = "ingest.manifest";
pub const SCAN_MANIFEST: &str = "scan.manifest";
pub const FILTER_MANIFEST: &str = "filter.manifest";
pub const TRIM_MANIFEST: &str = "trim.manifest";
pub const FINAL_MANIFEST: &str = "final.manifest";
pub const REPORT_DIR: &str = "report";

/// ingest → scan → filter → trim → stats, each stage's manifest written into `out_dir`.
pub fn run_all(
    client: &dyn SourceApi,
    hashtags: &[HashtagSpec],
    out_dir: &Path,
    config: &PipelineConfig,
    workers: usize,
    detectors: &DetectorFactory,
) -> Result<DatasetManifest> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let m = ingest(client, hashtags, out_dir, config, workers)?;
    write_manifest(&m, &out_dir.join(INGEST_MANIFEST))?;
    let m = scan(m, out_dir, config, workers)?;
    write_manifest(&m, &out_dir.join(SCAN_MANIFEST))?;
    let m = filter(m, out_dir, out_dir, config, workers, detectors)?;
    write_manifest(&m, &out_dir.join(FILTER_MANIFEST))?;
    let m = trim(m, config)?;
    write_manifest(&m, &out_dir.join(TRIM_MANIFEST))?;
    let m = stats(m, &out_dir.join(REPORT_DIR), config, DurationMode::default())?;
    write_manifest(&m, &out_dir.join(FINAL_MANIFEST))?;
    Ok(m)
}
