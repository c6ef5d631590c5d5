//! Scaling-experiment support: seeded subset manifests, a stratified
//! high-quality subset sampler and a diminishing-returns analyzer over
//! externally produced accuracy results.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::manifest::{write_manifest, DatasetManifest};
use crate::model::{ClipRecord, ProvenanceEntry};

pub const GENERATOR: &str = "ChaCha8Rng";
pub const SCALING_FORMAT: &str = "scaling.v1";
pub const SCALING_FILE: &str = "scaling.v1.json";
const EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub sizes: Vec<usize>,
    pub runs_per_size: u32,
    pub master_seed: u64,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        ExperimentPlan {
            sizes: vec![1000, 2000, 3000, 4000, 5000, 6000],
            runs_per_size: 3,
            master_seed: 0,
        }
    }
}

impl ExperimentPlan {
    pub fn validate(&self, corpus_size: usize) -> Result<()> {
        if self.sizes.is_empty() {
            return Err(Error::InvalidArgument("plan has no subset sizes".into()));
        }
        if self.sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("subset sizes must be strictly increasing".into()));
        }
        if self.sizes[0] == 0 {
            return Err(Error::InvalidArgument("subset sizes must be positive".into()));
        }
        if self.runs_per_size == 0 {
            return Err(Error::InvalidArgument("runs_per_size must be at least 1".into()));
        }
        let largest = *self.sizes.last().expect("non-empty");
        if largest > corpus_size {
            return Err(Error::Infeasible(format!(
                "subset size {largest} exceeds the {corpus_size} accepted clips"
            )));
        }
        Ok(())
    }
}

/// ChaCha8 seeded with sha256 over the little-endian encodings of the parts.
pub fn derived_rng(parts: &[u64]) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    for p in parts {
        hasher.update(p.to_le_bytes());
    }
    ChaCha8Rng::from_seed(hasher.finalize().into())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subset {
    pub size: usize,
    pub run_id: u32,
    pub manifest: DatasetManifest,
}

impl Subset {
    pub fn file_name(&self) -> String {
        subset_file_name(self.size, self.run_id)
    }
}

pub fn subset_file_name(size: usize, run_id: u32) -> String {
    format!("subset_{size}_{run_id}.manifest")
}

fn accepted(manifest: &DatasetManifest) -> Vec<&ClipRecord> {
    let mut records: Vec<&ClipRecord> = manifest.records.iter().filter(|r| r.accepted).collect();
    records.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    records
}

fn build_subset(
    source: &DatasetManifest,
    picked: Vec<ClipRecord>,
    stage: &str,
    digest: String,
    notes: Vec<String>,
) -> DatasetManifest {
    let ids: BTreeSet<&str> = picked.iter().map(|r| r.video_id.as_str()).collect();
    let assets = source
        .assets
        .iter()
        .filter(|(id, _)| ids.contains(id.as_str()))
        .map(|(id, a)| (id.clone(), a.clone()))
        .collect();
    let mut provenance = source.provenance.clone();
    provenance.push(ProvenanceEntry {
        clock: source.next_clock(),
        stage: stage.into(),
        config_digest: digest,
        notes,
    });
    let mut m = DatasetManifest {
        provenance,
        assets,
        records: picked,
    };
    m.sort_records();
    m
}

fn digest_of<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("plain data serializes");
    hex::encode(&Sha256::digest(bytes)[..8])
}

/// One manifest per (size, run), drawn without replacement from accepted
/// records. Run ids start at 1.
pub fn sample_subsets(manifest: &DatasetManifest, plan: &ExperimentPlan) -> Result<Vec<Subset>> {
    let pool = accepted(manifest);
    plan.validate(pool.len())?;
    let digest = digest_of(plan);
    let mut out = Vec::new();
    for &size in &plan.sizes {
        for run_id in 1..=plan.runs_per_size {
            let mut rng = derived_rng(&[plan.master_seed, size as u64, run_id as u64]);
            let picked = index::sample(&mut rng, pool.len(), size)
                .into_iter()
                .map(|i| pool[i].clone())
                .collect();
            let notes = vec![
                format!("generator={GENERATOR}"),
                format!("master_seed={}", plan.master_seed),
                format!("size={size}"),
                format!("run_id={run_id}"),
            ];
            out.push(Subset {
                size,
                run_id,
                manifest: build_subset(manifest, picked, "sample", digest.clone(), notes),
            });
        }
    }
    Ok(out)
}

pub fn write_subsets(subsets: &[Subset], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    subsets
        .iter()
        .map(|s| {
            let path = dir.join(s.file_name());
            write_manifest(&s.manifest, &path)?;
            Ok(path)
        })
        .collect()
}

/// Splits `total` over groups of the given sizes: one item per group, the
/// rest proportionally to each group's spare capacity (`size - 1`) with
/// largest-remainder rounding. Ties go to the earlier group.
pub fn allocate_largest_remainder(sizes: &[u64], total: u64) -> Result<Vec<u64>> {
    let k = sizes.len() as u64;
    if sizes.contains(&0) {
        return Err(Error::Infeasible("cannot allocate to an empty group".into()));
    }
    let capacity: u64 = sizes.iter().sum();
    if total < k || total > capacity {
        return Err(Error::Infeasible(format!(
            "cannot place {total} items in {k} groups holding {capacity}"
        )));
    }
    let spare = capacity - k;
    let rest = total - k;
    let mut alloc: Vec<u64> = vec![1; sizes.len()];
    if rest == 0 {
        return Ok(alloc);
    }
    let mut remainders = Vec::with_capacity(sizes.len());
    let mut given = 0;
    for (i, &s) in sizes.iter().enumerate() {
        let num = rest as u128 * (s - 1) as u128;
        let q = (num / spare as u128) as u64;
        alloc[i] += q;
        given += q;
        remainders.push((num % spare as u128, i));
    }
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in remainders.iter().take((rest - given) as usize) {
        alloc[i] += 1;
    }
    Ok(alloc)
}

/// Picks `n_hashtags` tags uniformly at random, then `n_clips` accepted
/// records spread over them by [`allocate_largest_remainder`].
pub fn sample_stratified(manifest: &DatasetManifest, n_clips: usize, n_hashtags: usize, seed: u64) -> Result<DatasetManifest> {
    if n_hashtags == 0 {
        return Err(Error::Infeasible("n_hashtags must be at least 1".into()));
    }
    let mut by_tag: BTreeMap<&str, Vec<&ClipRecord>> = BTreeMap::new();
    for r in accepted(manifest) {
        let asset = manifest
            .assets
            .get(&r.video_id)
            .ok_or_else(|| Error::invariant(Some(&r.video_id), "record has no asset"))?;
        by_tag.entry(asset.hashtag.as_str()).or_default().push(r);
    }
    if by_tag.len() < n_hashtags {
        return Err(Error::Infeasible(format!(
            "corpus has {} hashtags with accepted clips, {n_hashtags} requested",
            by_tag.len()
        )));
    }
    let mut rng = derived_rng(&[seed, n_clips as u64, n_hashtags as u64]);
    let tags: Vec<&str> = by_tag.keys().copied().collect();
    let mut chosen: Vec<&str> = index::sample(&mut rng, tags.len(), n_hashtags)
        .into_iter()
        .map(|i| tags[i])
        .collect();
    chosen.sort_unstable();
    let sizes: Vec<u64> = chosen.iter().map(|t| by_tag[t].len() as u64).collect();
    let alloc = allocate_largest_remainder(&sizes, n_clips as u64)?;

    let mut picked = Vec::with_capacity(n_clips);
    for (tag, &n) in chosen.iter().zip(&alloc) {
        let pool = &by_tag[tag];
        picked.extend(index::sample(&mut rng, pool.len(), n as usize).into_iter().map(|i| pool[i].clone()));
    }
    let notes = vec![
        format!("generator={GENERATOR}"),
        format!("seed={seed}"),
        format!("n_clips={n_clips}"),
        format!("n_hashtags={n_hashtags}"),
    ];
    let digest = digest_of(&(n_clips, n_hashtags, seed));
    Ok(build_subset(manifest, picked, "sample_stratified", digest, notes))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub size: u64,
    pub run_id: u32,
    pub top1: f64,
    pub top5: f64,
}

impl ScalingPoint {
    pub fn validate(&self) -> std::result::Result<(), String> {
        for (name, v) in [("top1", self.top1), ("top5", self.top5)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} {v} outside [0, 1]"));
            }
        }
        if self.top5 < self.top1 {
            return Err(format!("top5 {} below top1 {}", self.top5, self.top1));
        }
        Ok(())
    }
}

/// Reads a `size,run_id,top1,top5` results file.
pub fn read_results(path: &Path) -> Result<Vec<ScalingPoint>> {
    let err = |line: usize, msg: String| Error::Parse {
        location: path.display().to_string(),
        line,
        msg,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| err(1, e.to_string()))?;
    let headers = reader.headers().map_err(|e| err(1, e.to_string()))?;
    if headers.iter().collect::<Vec<_>>() != ["size", "run_id", "top1", "top5"] {
        return Err(err(1, "expected header size,run_id,top1,top5".into()));
    }
    let mut points = Vec::new();
    for (i, row) in reader.deserialize::<ScalingPoint>().enumerate() {
        let point = row.map_err(|e| err(i + 2, e.to_string()))?;
        point.validate().map_err(|m| err(i + 2, m))?;
        points.push(point);
    }
    Ok(points)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingAnalysis {
    pub format: &'static str,
    pub sizes: Vec<u64>,
    pub mean_top1: Vec<f64>,
    pub mean_top5: Vec<f64>,
    pub marginal_gains: Vec<f64>,
    pub diminishing: bool,
    pub knee_size: Option<u64>,
}

fn order_free_mean(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

/// Mean top-1 per size and the gains between consecutive sizes.
///
/// Returns are diminishing when some gain is non-positive, or when every gain
/// from some point on is strictly below the largest earlier gain. The knee is
/// the size after which the gain drops the most (or the first size whose
/// successor brings no gain).
pub fn analyze_scaling(points: &[ScalingPoint]) -> Result<ScalingAnalysis> {
    let mut by_size: BTreeMap<u64, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for p in points {
        p.validate().map_err(Error::InvalidArgument)?;
        let e = by_size.entry(p.size).or_default();
        e.0.push(p.top1);
        e.1.push(p.top5);
    }
    if by_size.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "scaling analysis needs at least 3 sizes, got {}",
            by_size.len()
        )));
    }
    let sizes: Vec<u64> = by_size.keys().copied().collect();
    let (mean_top1, mean_top5): (Vec<f64>, Vec<f64>) = by_size
        .into_values()
        .map(|(mut t1, mut t5)| (order_free_mean(&mut t1), order_free_mean(&mut t5)))
        .unzip();
    let gains: Vec<f64> = mean_top1.windows(2).map(|w| w[1] - w[0]).collect();

    let (diminishing, knee_size) = if let Some(i) = gains.iter().position(|&g| g <= EPS) {
        (true, Some(sizes[i]))
    } else {
        let mut best_earlier = f64::NEG_INFINITY;
        let mut found = false;
        for j in 1..gains.len() {
            best_earlier = best_earlier.max(gains[j - 1]);
            if gains[j..].iter().all(|&g| g < best_earlier - EPS) {
                found = true;
                break;
            }
        }
        let knee = found.then(|| {
            let mut best = 1;
            for i in 2..gains.len() {
                if gains[i - 1] - gains[i] > gains[best - 1] - gains[best] + EPS {
                    best = i;
                }
            }
            sizes[best]
        });
        (found, knee)
    };

    Ok(ScalingAnalysis {
        format: SCALING_FORMAT,
        sizes,
        mean_top1,
        mean_top5,
        marginal_gains: gains,
        diminishing,
        knee_size,
    })
}

pub fn write_scaling(analysis: &ScalingAnalysis, dest: &Path) -> Result<()> {
    let mut json = serde_json::to_string_pretty(analysis).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    json.push('\n');
    fs::write(dest, json).map_err(|e| Error::io(dest, e))
}
