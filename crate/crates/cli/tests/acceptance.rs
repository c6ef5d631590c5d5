//! Acceptance suite: one PASS/FAIL line per criterion.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::{Duration, Instant};

use clipforge_core::clip::{apply_duration_policy, DurationPolicy};
use clipforge_core::detector::{stub_detector, DetectionBox, DetectionFrame, Detector};
use clipforge_core::experiments::{analyze_scaling, sample_subsets, write_subsets, ExperimentPlan, ScalingPoint};
use clipforge_core::hashtags::{consolidate, filter_by_views, Category, HashtagSpec};
use clipforge_core::ingest::mock::MockServer;
use clipforge_core::ingest::{HttpSource, RateLimiter};
use clipforge_core::model::{RejectReason, SceneSpan, Seconds};
use clipforge_core::pipeline::run_all;
use clipforge_core::presence::{qualifies, summarize_presence};
use clipforge_core::sampler::plan_indices;
use clipforge_core::scene::{detect_scenes, CutParams, FrameFeature};
use clipforge_core::stats::{duration_histogram, summarize_hashtags, DurationMode};
use clipforge_core::synth::{corpus_profile_manifest, fixture_corpus, random_cut_video, PROFILE_DURATIONS};
use clipforge_core::PipelineConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

/// Cuts where the mean absolute RGB difference between consecutive frames jumps.
fn mad_oracle_cuts(frames: &[Vec<u8>]) -> Vec<u64> {
    frames
        .windows(2)
        .enumerate()
        .filter(|(_, w)| {
            let sum: u64 = w[0].iter().zip(&w[1]).map(|(a, b)| a.abs_diff(*b) as u64).sum();
            sum as f64 / w[0].len() as f64 > 20.0
        })
        .map(|(i, _)| i as u64 + 1)
        .collect()
}

fn shot_detection() -> Outcome {
    let config = PipelineConfig::default();
    let params = CutParams {
        threshold: config.cut_threshold,
        min_scene_len_frames: config.min_scene_len_frames,
    };
    let started = Instant::now();
    let mut total_cuts = 0;
    for seed in 0..20 {
        let video = random_cut_video(seed, 300, config.min_scene_len_frames);
        ensure!(video.total_frames() <= 300, "video {seed} has {} frames", video.total_frames());
        let frames: Vec<_> = video.frames().collect();
        let truth = video.cuts();
        let oracle = mad_oracle_cuts(&frames.iter().map(|f| f.data.clone()).collect::<Vec<_>>());
        ensure!(oracle == truth, "video {seed}: oracle {oracle:?} disagrees with construction {truth:?}");
        let features = frames
            .iter()
            .enumerate()
            .map(|(i, f)| FrameFeature::from_rgb(i as u64, f.width, f.height, &f.data))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        let spans = detect_scenes(&features, params).map_err(|e| e.to_string())?;
        let found: Vec<u64> = spans.iter().skip(1).map(|s| s.start_frame).collect();
        ensure!(found.len() == oracle.len(), "video {seed}: found {found:?}, expected {oracle:?}");
        for (f, o) in found.iter().zip(&oracle) {
            ensure!(f.abs_diff(*o) <= 1, "video {seed}: cut {f} vs {o}");
        }
        total_cuts += oracle.len();
    }
    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    Ok(format!("20 videos, {total_cuts} cuts matched in {elapsed:.2?}"))
}

fn sampling_formula() -> Outcome {
    let k = 10u64;
    for n in 1..=10_000u64 {
        let idx = plan_indices(n, k).map_err(|e| e.to_string())?;
        ensure!(idx.len() as u64 == n.min(k), "N={n}: {} indices", idx.len());
        ensure!(idx[0] == 0, "N={n}: starts at {}", idx[0]);
        ensure!(idx.windows(2).all(|w| w[0] < w[1]), "N={n}: not increasing");
        ensure!(*idx.last().unwrap() < n, "N={n}: index out of range");
        if n >= k {
            let (lo, hi) = (n / k, n.div_ceil(k));
            ensure!(
                idx.windows(2).all(|w| (lo..=hi).contains(&(w[1] - w[0]))),
                "N={n}: irregular gaps {idx:?}"
            );
        }
    }
    let a = plan_indices(100, 10).map_err(|e| e.to_string())?;
    ensure!(a == [0, 10, 20, 30, 40, 50, 60, 70, 80, 90], "(100,10) -> {a:?}");
    let b = plan_indices(95, 10).map_err(|e| e.to_string())?;
    ensure!(b == [0, 9, 19, 28, 38, 47, 57, 66, 76, 85], "(95,10) -> {b:?}");
    Ok("N in 1..=10000 with K=10, spot values match".into())
}

fn human_filter() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let labels = ["person", "dog", "car", "bicycle"];
    let min_score = 0.25;
    let mut passes = 0;
    for case in 0..1000 {
        let n = rng.random_range(1..=30u64);
        let frames: Vec<DetectionFrame> = (0..n)
            .map(|i| DetectionFrame {
                video_id: "v".into(),
                frame_index: i * 7,
                boxes: (0..rng.random_range(0..4))
                    .map(|_| DetectionBox {
                        label: labels[rng.random_range(0..labels.len())].into(),
                        ..DetectionBox::person(1.0, 1.0, 4.0, 8.0, rng.random_range(0.0..1.0))
                    })
                    .collect(),
            })
            .collect();
        let theta_num = rng.random_range(1..=20u64);
        let theta = theta_num as f64 / 20.0;

        let mut persons = 0u64;
        for f in &frames {
            let mut hit = false;
            for b in &f.boxes {
                if b.label == "person" && b.score >= min_score {
                    hit = true;
                }
            }
            persons += hit as u64;
        }
        let oracle_pass = persons * 20 >= theta_num * n;

        let s = summarize_presence(&frames, min_score).map_err(|e| e.to_string())?;
        ensure!((s.sampled, s.person_frames) == (n, persons), "case {case}: counts {s:?}, oracle {persons}/{n}");
        ensure!(qualifies(&s, theta).passed() == oracle_pass, "case {case}: gate disagrees at theta {theta}");
        passes += oracle_pass as u32;
    }
    Ok(format!("1000 tables agree ({passes} qualified)"))
}

/// Best 10 s window by brute force: every candidate start, frames counted one by one.
fn exhaustive_window(scene: SceneSpan, fps: u64, presence: &[bool], step_ms: u64) -> (u64, u64, usize) {
    let (start, end) = scene.bounds(fps as f64);
    let mut best = (0, start.millis(), 0);
    let mut ws = start.millis();
    let mut first = true;
    while ws + 10_000 <= end.millis() {
        let we = ws + 10_000;
        let count = (scene.start_frame..scene.end_frame)
            .filter(|&f| f * 1000 >= ws * fps && (f + 1) * 1000 <= we * fps)
            .filter(|&f| presence[(f - scene.start_frame) as usize])
            .count() as u64;
        if first || count > best.0 {
            best = (count, ws, 1);
            first = false;
        } else if count == best.0 {
            best.2 += 1;
        }
        ws += step_ms;
    }
    best
}

fn window_selection() -> Outcome {
    let policy = DurationPolicy::default();
    let step_ms = policy.step.millis();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut trimmed = 0;
    let mut tied = 0;
    for case in 0..600 {
        let fps = [10u64, 24, 25, 30][rng.random_range(0..4)];
        let len = rng.random_range(10 * fps + 1..=600);
        let offset = rng.random_range(0..100u64);
        let scene = SceneSpan::new(offset, offset + len).map_err(|e| e.to_string())?;
        let density: f64 = match case % 4 {
            0 => [0.0, 1.0][rng.random_range(0..2)],
            _ => rng.random_range(0.0..=1.0),
        };
        let presence: Vec<bool> = (0..len).map(|_| rng.random_bool(density)).collect();
        let d = apply_duration_policy(scene, fps as f64, &presence, &policy).map_err(|e| e.to_string())?;
        ensure!(d.accepted, "case {case}: rejected as {:?}", d.reject_reason);
        let (_, want, ties) = exhaustive_window(scene, fps, &presence, step_ms);
        let (got_start, got_end) = (d.clip_start_s.unwrap(), d.clip_end_s.unwrap());
        ensure!(
            got_start == Seconds::from_millis(want),
            "case {case}: fps {fps} len {len} chose {got_start:?}, exhaustive search {want} ms"
        );
        ensure!(got_end.millis() - got_start.millis() == 10_000, "case {case}: window is not 10 s");
        tied += usize::from(ties > 1);
        trimmed += 1;
    }
    for len in [1u64, 20, 34, 35, 60, 100] {
        let scene = SceneSpan::new(0, len).unwrap();
        let d = apply_duration_policy(scene, 10.0, &vec![true; len as usize], &policy).map_err(|e| e.to_string())?;
        let want_short = len < 35;
        ensure!(
            (d.reject_reason == RejectReason::TooShort) == want_short,
            "len {len} at 10 fps: {:?}",
            d.reject_reason
        );
    }
    Ok(format!("{trimmed} windows optimal, {tied} tied cases took the earliest start"))
}

fn duration_table() -> Outcome {
    let h = duration_histogram(&corpus_profile_manifest(), DurationMode::PostTrim).map_err(|e| e.to_string())?;
    ensure!(h.buckets == PROFILE_DURATIONS, "counts {:?}", h.buckets);
    let shares = h.shares();
    for (got, want) in shares.iter().zip([0.106, 0.287, 0.607]) {
        ensure!((got - want).abs() <= 0.001, "share {got} vs {want}");
    }
    Ok(format!(
        "counts {:?}, shares {:.3}/{:.3}/{:.3}",
        h.buckets, shares[0], shares[1], shares[2]
    ))
}

fn hashtag_profile() -> Outcome {
    let s = summarize_hashtags(&corpus_profile_manifest()).map_err(|e| e.to_string())?;
    ensure!((s.mean - 735.0).abs() <= 1.0, "mean {}", s.mean);
    ensure!(s.max_tag.count == 938, "max {:?}", s.max_tag);
    ensure!(s.min_tag.count == 325, "min {:?}", s.min_tag);
    let share = s.share("600-800").unwrap_or(0.0);
    ensure!((share - 0.534).abs() <= 0.002, "600-800 share {share}");
    Ok(format!(
        "mean {}, max {} {}, min {} {}, 600-800 share {:.4}",
        s.mean, s.max_tag.tag, s.max_tag.count, s.min_tag.tag, s.min_tag.count, share
    ))
}

fn hashtag_rules() -> Outcome {
    let spec = |t: &str, v: u64| HashtagSpec::new(t, v, Category::SocialCultural).map_err(|e| e.to_string());
    let table = [spec("piano", 44_400_000_000)?, spec("playingpiano", 29_400_000)?, spec("rarepiano", 4_999_999)?];
    let kept: Vec<String> = filter_by_views(&table, 5_000_000).into_iter().map(|s| s.tag).collect();
    ensure!(kept == ["piano", "playingpiano"], "view floor kept {kept:?}");

    let group = [spec("cuttingcakes", 9_000_000)?, spec("cutfruit", 2_000_000)?, spec("applecutting", 1_000_000)?];
    let map = group.iter().map(|s| (s.tag.clone(), "cutting".to_string())).collect();
    let (merged, _) = consolidate(&group, &map);
    let tags: Vec<&str> = merged.iter().map(|s| s.tag.as_str()).collect();
    ensure!(tags == ["cuttingcakes"], "consolidation kept {tags:?}");
    Ok("view floor and consolidation hold".into())
}

fn experiment_protocol() -> Outcome {
    let corpus = corpus_profile_manifest();
    let plan = ExperimentPlan::default();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut written = Vec::new();
    for d in &dirs {
        let subsets = sample_subsets(&corpus, &plan).map_err(|e| e.to_string())?;
        written.push(write_subsets(&subsets, d.path()).map_err(|e| e.to_string())?);
    }
    ensure!(written[0].len() == 18, "{} subsets", written[0].len());
    for (a, b) in written[0].iter().zip(&written[1]) {
        ensure!(fs::read(a).unwrap() == fs::read(b).unwrap(), "{} differs across reruns", a.display());
    }

    let curve = |accs: [f64; 6]| -> Vec<ScalingPoint> {
        let mut pts = Vec::new();
        for (i, acc) in accs.iter().enumerate() {
            for run in 1..=3u32 {
                let jitter = (run as f64 - 2.0) * 0.002;
                pts.push(ScalingPoint {
                    size: 1000 * (i as u64 + 1),
                    run_id: run,
                    top1: acc + jitter,
                    top5: acc + 0.2 + jitter,
                });
            }
        }
        pts
    };
    let concave = analyze_scaling(&curve([0.20, 0.30, 0.38, 0.40, 0.41, 0.42])).map_err(|e| e.to_string())?;
    ensure!(concave.diminishing && concave.knee_size == Some(3000), "concave: {concave:?}");
    let linear = analyze_scaling(&curve([0.20, 0.25, 0.30, 0.35, 0.40, 0.45])).map_err(|e| e.to_string())?;
    ensure!(!linear.diminishing, "linear flagged: {linear:?}");
    Ok("18 bit-identical subsets, knee at 3000, linear curve not flagged".into())
}

fn ethics_gate() -> Outcome {
    let corpus = fixture_corpus();
    let server = MockServer::start(corpus.server.clone()).map_err(|e| e.to_string())?;
    let client = HttpSource::new(server.url(), None, Arc::new(RateLimiter::new(50, 500.0).unwrap()));
    let dir = tempfile::tempdir().unwrap();
    let stub = corpus.stub.clone();
    let factory = move || Ok(Box::new(stub_detector(stub.clone())) as Box<dyn Detector>);
    let m = run_all(&client, &corpus.hashtags, dir.path(), &PipelineConfig::default(), 3, &factory)
        .map_err(|e| e.to_string())?;
    let blocked: Vec<&str> = corpus
        .server
        .assets
        .iter()
        .filter(|a| !a.download_permitted)
        .map(|a| a.video_id.as_str())
        .collect();
    ensure!(!blocked.is_empty(), "fixture has no blocked assets");
    let media = server.media_requests();
    ensure!(!media.is_empty(), "no media was fetched at all");
    for req in &media {
        ensure!(
            !blocked.iter().any(|id| req.path == format!("/media/{id}")),
            "blocked media requested: {}",
            req.path
        );
    }
    let rejected = m.records.iter().filter(|r| r.reject_reason == RejectReason::NoPermission).count();
    ensure!(rejected == blocked.len(), "{rejected} no_permission records for {} blocked", blocked.len());
    Ok(format!("{} media requests, none for {blocked:?}", media.len()))
}

fn read_tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    let report = root.join("report");
    for entry in fs::read_dir(&report).unwrap() {
        let path = entry.unwrap().path();
        files.insert(format!("report/{}", path.file_name().unwrap().to_string_lossy()), fs::read(&path).unwrap());
    }
    files.insert("final.manifest".into(), fs::read(root.join("final.manifest")).unwrap());
    files
}

fn determinism() -> Outcome {
    let corpus = fixture_corpus();
    let dir = tempfile::tempdir().unwrap();
    corpus.write_to(dir.path()).map_err(|e| e.to_string())?;
    let server = MockServer::start(corpus.server.clone()).map_err(|e| e.to_string())?;
    let started = Instant::now();
    let mut trees = Vec::new();
    for run in ["run1", "run2"] {
        let out = dir.path().join(run);
        let status = Command::new(env!("CARGO_BIN_EXE_clipforge"))
            .arg("run-all")
            .arg("--in")
            .arg(dir.path().join("hashtags.csv"))
            .arg("--out")
            .arg(&out)
            .arg("--api-url")
            .arg(server.url())
            .arg("--stub-detector")
            .arg(dir.path().join("stub.json"))
            .env_remove("CLIPFORGE_API_TOKEN")
            .output()
            .map_err(|e| e.to_string())?;
        ensure!(status.status.success(), "{run}: {}", String::from_utf8_lossy(&status.stderr));
        trees.push(read_tree(&out));
    }
    let elapsed = started.elapsed();
    ensure!(trees[0].len() >= 4, "report incomplete: {:?}", trees[0].keys());
    for (name, bytes) in &trees[0] {
        ensure!(trees[1].get(name) == Some(bytes), "{name} differs between runs");
    }
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    Ok(format!("{} files byte-identical, two runs in {elapsed:.2?}", trees[0].len()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("shot detection oracle", shot_detection),
        ("sampling formula", sampling_formula),
        ("human filter equivalence", human_filter),
        ("window selection optimality", window_selection),
        ("duration histogram", duration_table),
        ("hashtag count profile", hashtag_profile),
        ("hashtag rules", hashtag_rules),
        ("experiment protocol", experiment_protocol),
        ("download permission gate", ethics_gate),
        ("run-all determinism", determinism),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
