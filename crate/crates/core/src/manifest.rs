//! The line-oriented manifest exchanged between pipeline stages.
//!
//! File layout (UTF-8):
//!
//! ```text
//! clipforge-manifest v1
//! {"kind":"provenance","clock":1,"stage":"ingest","config_digest":"…","notes":[]}
//! {"kind":"asset","video_id":"…",…}
//! {"kind":"record","video_id":"…",…}
//! ```
//!
//! The first line is the version header. Every following line is one JSON
//! object tagged by `kind`. Writers emit provenance entries in chain order,
//! then assets sorted by `video_id`, then records sorted by `video_id` and
//! clip start. Fields appear in a fixed order and seconds carry exactly three
//! fractional digits, so identical manifests serialize to identical bytes.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ClipRecord, ProvenanceEntry, VideoAsset};

pub const MANIFEST_HEADER: &str = "clipforge-manifest v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ManifestLine {
    Provenance(ProvenanceEntry),
    Asset(VideoAsset),
    Record(ClipRecord),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetManifest {
    pub provenance: Vec<ProvenanceEntry>,
    pub assets: BTreeMap<String, VideoAsset>,
    pub records: Vec<ClipRecord>,
}

impl DatasetManifest {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty() && self.assets.is_empty()
    }

    /// Checks every type invariant plus the manifest-level ones.
    pub fn validate(&self) -> Result<()> {
        for (key, asset) in &self.assets {
            if key != &asset.video_id {
                return Err(Error::invariant(
                    Some(&asset.video_id),
                    format!("asset stored under key {key:?}"),
                ));
            }
            asset.validate()?;
        }
        let mut seen = HashSet::new();
        let mut prev: Option<&str> = None;
        for record in &self.records {
            record.validate()?;
            if !self.assets.contains_key(&record.video_id) {
                return Err(Error::invariant(
                    Some(&record.video_id),
                    "record has no matching asset",
                ));
            }
            if let Some(prev) = prev {
                if record.video_id.as_str() < prev {
                    return Err(Error::invariant(
                        Some(&record.video_id),
                        "records not sorted by video_id",
                    ));
                }
            }
            prev = Some(&record.video_id);
            if !seen.insert(record.sort_key()) {
                return Err(Error::invariant(
                    Some(&record.video_id),
                    "duplicate (video_id, clip_start_s) record",
                ));
            }
        }
        Ok(())
    }

    /// Restores canonical record order.
    pub fn sort_records(&mut self) {
        self.records.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    }

    /// Records belonging to one video.
    pub fn records_for<'a>(&'a self, video_id: &'a str) -> impl Iterator<Item = &'a ClipRecord> {
        let start = self
            .records
            .partition_point(|r| r.video_id.as_str() < video_id);
        self.records[start..]
            .iter()
            .take_while(move |r| r.video_id == video_id)
    }

    pub fn has_record(&self, video_id: &str) -> bool {
        self.records_for(video_id).next().is_some()
    }

    /// Clock value for the next provenance entry.
    pub fn next_clock(&self) -> u64 {
        self.provenance.iter().map(|p| p.clock).max().unwrap_or(0) + 1
    }

    pub fn accepted_count(&self) -> usize {
        self.records.iter().filter(|r| r.accepted).count()
    }

    /// A manifest holding only accepted records and the assets they reference.
    pub fn accepted_view(&self) -> DatasetManifest {
        let records: Vec<ClipRecord> = self.records.iter().filter(|r| r.accepted).cloned().collect();
        let ids: BTreeSet<&str> = records.iter().map(|r| r.video_id.as_str()).collect();
        let assets = self
            .assets
            .iter()
            .filter(|(id, _)| ids.contains(id.as_str()))
            .map(|(id, a)| (id.clone(), a.clone()))
            .collect();
        DatasetManifest {
            provenance: self.provenance.clone(),
            assets,
            records,
        }
    }

    pub fn lines(&self) -> impl Iterator<Item = ManifestLine> + '_ {
        self.provenance
            .iter()
            .cloned()
            .map(ManifestLine::Provenance)
            .chain(self.assets.values().cloned().map(ManifestLine::Asset))
            .chain(self.records.iter().cloned().map(ManifestLine::Record))
    }
}

/// Streams manifest lines to any writer.
pub struct ManifestWriter<W: Write> {
    out: W,
}

impl<W: Write> ManifestWriter<W> {
    pub fn new(mut out: W) -> std::io::Result<Self> {
        writeln!(out, "{MANIFEST_HEADER}")?;
        Ok(ManifestWriter { out })
    }

    pub fn write_line(&mut self, line: &ManifestLine) -> std::io::Result<()> {
        serde_json::to_writer(&mut self.out, line)?;
        self.out.write_all(b"\n")
    }

    pub fn finish(mut self) -> std::io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

/// Serializes a validated manifest to bytes.
pub fn manifest_to_bytes(manifest: &DatasetManifest) -> Result<Vec<u8>> {
    manifest.validate()?;
    let mut writer = ManifestWriter::new(Vec::new()).expect("writing to memory");
    for line in manifest.lines() {
        writer.write_line(&line).expect("writing to memory");
    }
    Ok(writer.finish().expect("writing to memory"))
}

pub fn write_manifest(manifest: &DatasetManifest, dest: &Path) -> Result<()> {
    manifest.validate()?;
    let file = File::create(dest).map_err(|e| Error::io(dest, e))?;
    let mut writer = ManifestWriter::new(BufWriter::new(file)).map_err(|e| Error::io(dest, e))?;
    for line in manifest.lines() {
        writer.write_line(&line).map_err(|e| Error::io(dest, e))?;
    }
    writer.finish().map_err(|e| Error::io(dest, e))?;
    Ok(())
}

/// Streams `(line_number, ManifestLine)` pairs out of a manifest source.
pub struct ManifestReader<R: BufRead> {
    lines: std::io::Lines<R>,
    location: String,
    line_no: usize,
}

impl<R: BufRead> ManifestReader<R> {
    pub fn new(input: R, location: impl Into<String>) -> Result<Self> {
        let location = location.into();
        let mut lines = input.lines();
        let header = lines
            .next()
            .transpose()
            .map_err(|e| Error::io(&location, e))?
            .ok_or_else(|| Error::Parse {
                location: location.clone(),
                line: 1,
                msg: "missing manifest header".into(),
            })?;
        if header.trim_end() != MANIFEST_HEADER {
            return Err(Error::Parse {
                location,
                line: 1,
                msg: format!("expected header {MANIFEST_HEADER:?}, found {header:?}"),
            });
        }
        Ok(ManifestReader {
            lines,
            location,
            line_no: 1,
        })
    }

    fn parse_error(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            location: self.location.clone(),
            line: self.line_no,
            msg: msg.into(),
        }
    }
}

impl<R: BufRead> Iterator for ManifestReader<R> {
    type Item = Result<(usize, ManifestLine)>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(line) => line,
                Err(e) => return Some(Err(Error::io(&self.location, e))),
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            let parsed = serde_json::from_str::<ManifestLine>(&line)
                .map_err(|e| self.parse_error(e.to_string()))
                .and_then(|l| {
                    let check = match &l {
                        ManifestLine::Asset(a) => a.validate(),
                        ManifestLine::Record(r) => r.validate(),
                        ManifestLine::Provenance(_) => Ok(()),
                    };
                    check.map(|_| l).map_err(|e| self.parse_error(e.to_string()))
                });
            return Some(parsed.map(|l| (self.line_no, l)));
        }
    }
}

pub fn read_manifest_from<R: BufRead>(input: R, location: &str) -> Result<DatasetManifest> {
    let reader = ManifestReader::new(input, location)?;
    let mut manifest = DatasetManifest::new();
    for item in reader {
        let (line, entry) = item?;
        let at = |msg: String| Error::Parse {
            location: location.to_owned(),
            line,
            msg,
        };
        match entry {
            ManifestLine::Provenance(p) => manifest.provenance.push(p),
            ManifestLine::Asset(a) => {
                if manifest.assets.contains_key(&a.video_id) {
                    return Err(at(format!("duplicate video_id {:?}", a.video_id)));
                }
                manifest.assets.insert(a.video_id.clone(), a);
            }
            ManifestLine::Record(r) => {
                if let Some(prev) = manifest.records.last() {
                    if r.sort_key() < prev.sort_key() {
                        return Err(at(format!("records not sorted at video_id {:?}", r.video_id)));
                    }
                }
                manifest.records.push(r);
            }
        }
    }
    manifest.validate()?;
    Ok(manifest)
}

pub fn read_manifest(src: &Path) -> Result<DatasetManifest> {
    let file = File::open(src).map_err(|e| Error::io(src, e))?;
    read_manifest_from(BufReader::new(file), &src.display().to_string())
}

/// Union of two manifests.
///
/// The merge unit is a video: its asset together with all of its records. When
/// both sides know a video, the side whose asset carries the higher revision
/// (the provenance clock of the stage that last touched it) wins; equal
/// revisions resolve to `b`. Provenance entries are unioned.
pub fn merge_manifests(a: &DatasetManifest, b: &DatasetManifest) -> Result<DatasetManifest> {
    let mut out = DatasetManifest::new();

    let provenance: BTreeSet<ProvenanceEntry> =
        a.provenance.iter().chain(&b.provenance).cloned().collect();
    out.provenance = provenance.into_iter().collect();

    let ids: BTreeSet<&String> = a.assets.keys().chain(b.assets.keys()).collect();
    for id in ids {
        let winner = match (a.assets.get(id), b.assets.get(id)) {
            (Some(x), Some(y)) => {
                if x.duration_s != y.duration_s {
                    return Err(Error::Conflict {
                        video_id: id.clone(),
                        msg: format!("duration_s {} vs {}", x.duration_s, y.duration_s),
                    });
                }
                if x.revision > y.revision {
                    a
                } else {
                    b
                }
            }
            (Some(_), None) => a,
            (None, _) => b,
        };
        out.assets.insert(id.clone(), winner.assets[id].clone());
        out.records.extend(winner.records_for(id).cloned());
    }
    out.sort_records();
    out.validate()?;
    Ok(out)
}
