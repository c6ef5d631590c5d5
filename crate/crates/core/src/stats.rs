//! Corpus statistics: per-hashtag video counts and the clip-duration histogram,
//! plus plot-ready report files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::manifest::DatasetManifest;
use crate::model::{RejectReason, Seconds};

pub const STATS_FORMAT: &str = "stats.v1";
pub const STATS_FILE: &str = "stats.v1.json";
pub const PER_TAG_FILE: &str = "per_tag.csv";
pub const BUCKETS_FILE: &str = "buckets.csv";

/// Ranges of videos-per-hashtag, half-open. `<200` only appears when some tag falls below 200.
const COUNT_RANGES: [(&str, u64, u64); 4] = [
    ("200-400", 200, 400),
    ("400-600", 400, 600),
    ("600-800", 600, 800),
    ("800+", 800, u64::MAX),
];
const BELOW_RANGES: &str = "<200";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TagCount {
    pub tag: String,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BucketShare {
    pub range: String,
    pub count: u64,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HashtagCountSummary {
    pub per_tag: BTreeMap<String, u64>,
    /// Mean videos per tag, rounded to one decimal.
    pub mean: f64,
    pub min_tag: TagCount,
    pub max_tag: TagCount,
    pub bucket_shares: Vec<BucketShare>,
}

impl HashtagCountSummary {
    pub fn total(&self) -> u64 {
        self.per_tag.values().sum()
    }

    pub fn share(&self, range: &str) -> Option<f64> {
        self.bucket_shares.iter().find(|b| b.range == range).map(|b| b.share)
    }
}

/// Accepted clips per hashtag, joined through each record's asset.
fn accepted_per_tag(manifest: &DatasetManifest) -> Result<BTreeMap<String, u64>> {
    let mut per_tag = BTreeMap::new();
    for r in manifest.records.iter().filter(|r| r.accepted) {
        let asset = manifest
            .assets
            .get(&r.video_id)
            .ok_or_else(|| Error::invariant(Some(&r.video_id), "record has no asset"))?;
        *per_tag.entry(asset.hashtag.clone()).or_insert(0u64) += 1;
    }
    Ok(per_tag)
}

pub fn summarize_hashtags(manifest: &DatasetManifest) -> Result<HashtagCountSummary> {
    let per_tag = accepted_per_tag(manifest)?;
    if per_tag.is_empty() {
        return Err(Error::InvalidArgument("manifest has no accepted clips to summarize".into()));
    }
    let pick = |better: fn(u64, u64) -> bool| {
        let mut best: Option<(&String, u64)> = None;
        for (tag, &n) in &per_tag {
            if best.is_none_or(|(_, b)| better(n, b)) {
                best = Some((tag, n));
            }
        }
        let (tag, count) = best.expect("non-empty");
        TagCount { tag: tag.clone(), count }
    };
    let min_tag = pick(|n, b| n < b);
    let max_tag = pick(|n, b| n > b);

    let tags = per_tag.len() as u64;
    let total: u64 = per_tag.values().sum();
    let mean = (total as f64 / tags as f64 * 10.0).round() / 10.0;

    let below = per_tag.values().filter(|&&n| n < COUNT_RANGES[0].1).count() as u64;
    let mut bucket_shares = Vec::new();
    if below > 0 {
        bucket_shares.push(BucketShare {
            range: BELOW_RANGES.into(),
            count: below,
            share: below as f64 / tags as f64,
        });
    }
    for (label, lo, hi) in COUNT_RANGES {
        let count = per_tag.values().filter(|&&n| n >= lo && n < hi).count() as u64;
        bucket_shares.push(BucketShare {
            range: label.into(),
            count,
            share: count as f64 / tags as f64,
        });
    }
    Ok(HashtagCountSummary {
        per_tag,
        mean,
        min_tag,
        max_tag,
        bucket_shares,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DurationMode {
    /// Source scene length the clip was cut from.
    PreTrim,
    /// Length of the trimmed clip.
    #[default]
    PostTrim,
}

impl std::str::FromStr for DurationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pre_trim" | "pre" => Ok(DurationMode::PreTrim),
            "post_trim" | "post" => Ok(DurationMode::PostTrim),
            other => Err(Error::InvalidArgument(format!("unknown duration mode {other:?}"))),
        }
    }
}

pub const DURATION_BUCKETS: [&str; 3] = ["3.5-5", "5-10", "10+"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct DurationHistogram {
    pub mode: DurationMode,
    /// Counts for [3.5, 5), [5, 10) and [10, ∞) seconds.
    pub buckets: [u64; 3],
}

impl DurationHistogram {
    pub fn total(&self) -> u64 {
        self.buckets.iter().sum()
    }

    pub fn shares(&self) -> [f64; 3] {
        let total = self.total();
        if total == 0 {
            return [0.0; 3];
        }
        self.buckets.map(|n| n as f64 / total as f64)
    }

    fn add(&mut self, len: Seconds) -> std::result::Result<(), Seconds> {
        let slot = match len.millis() {
            0..3_500 => return Err(len),
            3_500..5_000 => 0,
            5_000..10_000 => 1,
            _ => 2,
        };
        self.buckets[slot] += 1;
        Ok(())
    }
}

/// Buckets accepted records by clip length (post-trim) or by the length of
/// the longest scene of their source video (pre-trim).
pub fn duration_histogram(manifest: &DatasetManifest, mode: DurationMode) -> Result<DurationHistogram> {
    let mut hist = DurationHistogram { mode, buckets: [0; 3] };
    for r in manifest.records.iter().filter(|r| r.accepted) {
        let id = Some(r.video_id.as_str());
        let len = match mode {
            DurationMode::PostTrim => r
                .clip_len()
                .ok_or_else(|| Error::invariant(id, "accepted record without clip bounds"))?,
            DurationMode::PreTrim => {
                let asset = manifest
                    .assets
                    .get(&r.video_id)
                    .ok_or_else(|| Error::invariant(id, "record has no asset"))?;
                match asset.longest_scene() {
                    Some(scene) => {
                        let (start, end) = scene.bounds(asset.frame_rate);
                        end.saturating_sub(start)
                    }
                    None => asset.duration_s,
                }
            }
        };
        hist.add(len)
            .map_err(|len| Error::invariant(id, format!("accepted duration {len}s is below 3.5s")))?;
    }
    Ok(hist)
}

#[derive(Serialize)]
struct Report<'a> {
    format: &'static str,
    assets: usize,
    records: usize,
    accepted: u64,
    reject_counts: BTreeMap<&'static str, u64>,
    hashtags: HashtagSection<'a>,
    durations: DurationSection,
}

#[derive(Serialize)]
struct HashtagSection<'a> {
    tags: usize,
    mean: f64,
    min: Option<&'a TagCount>,
    max: Option<&'a TagCount>,
    buckets: Vec<BucketShare>,
}

#[derive(Serialize)]
struct DurationSection {
    mode: DurationMode,
    buckets: Vec<BucketShare>,
}

fn empty_buckets() -> Vec<BucketShare> {
    COUNT_RANGES
        .iter()
        .map(|(label, _, _)| BucketShare {
            range: (*label).into(),
            count: 0,
            share: 0.0,
        })
        .collect()
}

/// Writes `stats.v1.json`, `per_tag.csv` (`tag,count`) and `buckets.csv`
/// (`range,share`) into `dest`. An empty corpus yields explicit zeros.
pub fn emit_report(manifest: &DatasetManifest, mode: DurationMode, dest: &Path) -> Result<()> {
    let summary = if manifest.accepted_count() == 0 {
        None
    } else {
        Some(summarize_hashtags(manifest)?)
    };
    let hist = duration_histogram(manifest, mode)?;

    let mut reject_counts: BTreeMap<&'static str, u64> =
        RejectReason::ALL.iter().map(|r| (r.as_str(), 0)).collect();
    for r in &manifest.records {
        *reject_counts.get_mut(r.reject_reason.as_str()).expect("all reasons") += 1;
    }
    let shares = hist.shares();
    let report = Report {
        format: STATS_FORMAT,
        assets: manifest.assets.len(),
        records: manifest.records.len(),
        accepted: hist.total(),
        reject_counts,
        hashtags: HashtagSection {
            tags: summary.as_ref().map_or(0, |s| s.per_tag.len()),
            mean: summary.as_ref().map_or(0.0, |s| s.mean),
            min: summary.as_ref().map(|s| &s.min_tag),
            max: summary.as_ref().map(|s| &s.max_tag),
            buckets: summary.as_ref().map_or_else(empty_buckets, |s| s.bucket_shares.clone()),
        },
        durations: DurationSection {
            mode,
            buckets: DURATION_BUCKETS
                .iter()
                .zip(hist.buckets)
                .zip(shares)
                .map(|((range, count), share)| BucketShare {
                    range: (*range).into(),
                    count,
                    share,
                })
                .collect(),
        },
    };

    fs::create_dir_all(dest).map_err(|e| Error::io(dest, e))?;
    let mut json = serde_json::to_string_pretty(&report).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    json.push('\n');
    write_file(&dest.join(STATS_FILE), &json)?;

    let mut per_tag = String::from("tag,count\n");
    if let Some(s) = &summary {
        for (tag, n) in &s.per_tag {
            let _ = writeln!(per_tag, "{tag},{n}");
        }
    }
    write_file(&dest.join(PER_TAG_FILE), &per_tag)?;

    let mut buckets = String::from("range,share\n");
    for b in &report.hashtags.buckets {
        let _ = writeln!(buckets, "{},{:.6}", b.range, b.share);
    }
    write_file(&dest.join(BUCKETS_FILE), &buckets)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
