use std::collections::BTreeMap;
use std::io::Cursor;
use std::time::Instant;

use proptest::prelude::*;

use clipforge_core::manifest::{manifest_to_bytes, read_manifest_from};
use clipforge_core::model::{PresenceSample, ProvenanceEntry, VideoAnalysis};
use clipforge_core::synth::{corpus_profile_manifest, PROFILE_CLIPS};
use clipforge_core::{merge_manifests, read_manifest, write_manifest, ClipRecord, DatasetManifest, RejectReason, SceneSpan, Seconds, VideoAsset};

fn duration_for(id: &str) -> Seconds {
    Seconds::from_millis(1_000 + id.bytes().map(u64::from).sum::<u64>() * 37)
}

fn analysis() -> impl Strategy<Value = Option<VideoAnalysis>> {
    prop::option::of(
        (prop::collection::vec(1u64..40, 1..5), any::<bool>(), prop::collection::vec(any::<bool>(), 0..10)).prop_map(
            |(lens, fallback, flags)| {
                let mut scenes = Vec::new();
                let mut at = 0;
                for n in lens {
                    scenes.push(SceneSpan { start_frame: at, end_frame: at + n });
                    at += n;
                }
                let samples = flags
                    .iter()
                    .enumerate()
                    .map(|(i, &person)| PresenceSample { frame_index: i as u64 * at / 10, person })
                    .collect();
                VideoAnalysis { total_frames: at, frame_count_fallback: fallback, scenes, samples }
            },
        ),
    )
}

fn asset(id: String) -> impl Strategy<Value = VideoAsset> {
    (
        "[a-z]{1,8}",
        prop_oneof![Just(30.0), Just(29.97), Just(24.0), 1.0f64..120.0],
        prop::option::of("[a-z/]{1,12}\\.bin"),
        any::<bool>(),
        prop::collection::btree_map("[a-z_]{1,6}", "\\PC{0,12}", 0..3),
        analysis(),
        0u64..4,
    )
        .prop_map(move |(hashtag, fps, media_path, permitted, meta, analysis, revision)| VideoAsset {
            duration_s: duration_for(&id),
            video_id: id.clone(),
            hashtag,
            frame_rate: fps,
            media_path,
            download_permitted: permitted,
            source_meta: meta,
            analysis,
            revision,
        })
}

fn records_for(id: String) -> impl Strategy<Value = Vec<ClipRecord>> {
    prop_oneof![
        Just(Vec::new()),
        (0usize..3, 0.0f64..=1.0).prop_map({
            let id = id.clone();
            move |(r, ratio)| {
                let reason = [RejectReason::TooShort, RejectReason::InsufficientHumans, RejectReason::NoPermission][r];
                vec![ClipRecord::rejected(&id, reason, ratio)]
            }
        }),
        prop::collection::btree_map(0u64..60_000, 3_500u64..=10_000, 1..3).prop_map(move |clips| {
            clips
                .into_iter()
                .map(|(start, len)| {
                    ClipRecord::accepted(&id, Seconds::from_millis(start), Seconds::from_millis(start + len), 0.75)
                })
                .collect()
        }),
    ]
}

prop_compose! {
    fn provenance()(clock in 1u64..6, stage in prop::sample::select(vec!["ingest", "scan", "filter", "trim", "stats"]), note in prop::option::of("[ -~]{0,10}")) -> ProvenanceEntry {
        ProvenanceEntry { clock, stage: stage.into(), config_digest: format!("{clock:016x}"), notes: note.into_iter().collect() }
    }
}

fn manifest() -> impl Strategy<Value = DatasetManifest> {
    (prop::collection::btree_set(0u8..12, 0..8), prop::collection::btree_set(provenance(), 0..4))
        .prop_flat_map(|(ids, prov)| {
            let ids: Vec<String> = ids.into_iter().map(|i| format!("v{i:02}")).collect();
            let assets: Vec<_> = ids.iter().cloned().map(asset).collect();
            let records: Vec<_> = ids.iter().cloned().map(records_for).collect();
            (assets, records, Just(prov))
        })
        .prop_map(|(assets, records, prov)| {
            let mut m = DatasetManifest {
                provenance: prov.into_iter().collect(),
                assets: assets.into_iter().map(|a| (a.video_id.clone(), a)).collect::<BTreeMap<_, _>>(),
                records: records.into_iter().flatten().collect(),
            };
            m.sort_records();
            m
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn write_then_read_is_identity(m in manifest()) {
        m.validate().unwrap();
        let bytes = manifest_to_bytes(&m).unwrap();
        let back = read_manifest_from(Cursor::new(&bytes), "mem").unwrap();
        prop_assert_eq!(&back, &m);
        prop_assert_eq!(manifest_to_bytes(&back).unwrap(), bytes);
    }

    #[test]
    fn merge_is_idempotent_and_associative(a in manifest(), b in manifest(), c in manifest()) {
        prop_assert_eq!(&merge_manifests(&a, &a).unwrap(), &a);
        prop_assert_eq!(&merge_manifests(&a, &DatasetManifest::new()).unwrap(), &a);
        let left = merge_manifests(&merge_manifests(&a, &b).unwrap(), &c).unwrap();
        let right = merge_manifests(&a, &merge_manifests(&b, &c).unwrap()).unwrap();
        prop_assert_eq!(left, right);
    }
}

#[test]
fn full_corpus_manifest_loads_and_validates() {
    let m = corpus_profile_manifest();
    assert_eq!(m.records.len() as u64, PROFILE_CLIPS);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("corpus.manifest");
    write_manifest(&m, &path).unwrap();
    let start = Instant::now();
    let back = read_manifest(&path).unwrap();
    eprintln!("loaded {} records in {:?}", back.records.len(), start.elapsed());
    back.validate().unwrap();
    assert_eq!(back, m);
}
