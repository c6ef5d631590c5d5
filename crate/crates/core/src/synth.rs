//! Synthetic media with known hard cuts, plus a small end-to-end fixture
//! corpus whose per-video outcomes are fixed by construction.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::detector::{DetectionBox, FrameBoxes, StubSpec};
use crate::error::{Error, Result};
use crate::hashtags::{write_hashtag_list, Category, HashtagSpec};
use crate::ingest::mock::MockFixture;
use crate::media::{encode_raw_dump, RawHeader, RgbFrame};
use crate::model::{RejectReason, Seconds, VideoAsset};

/// Scene colors; every pair differs by a content score well above the default cut threshold.
pub const PALETTE: [[u8; 3]; 5] = [
    [220, 30, 30],
    [30, 200, 60],
    [40, 60, 230],
    [40, 40, 40],
    [235, 235, 235],
];

const NOISE: i16 = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthVideo {
    pub width: u32,
    pub height: u32,
    pub fps: f64,
    /// Scene lengths in frames with their base colors.
    pub scenes: Vec<(u64, [u8; 3])>,
    /// Write the frame count into the raw header (`false` writes `frames=?`).
    pub declare_frames: bool,
    pub seed: u64,
}

impl SynthVideo {
    pub fn new(fps: f64, scenes: Vec<(u64, [u8; 3])>) -> Self {
        SynthVideo {
            width: 32,
            height: 18,
            fps,
            scenes,
            declare_frames: true,
            seed: 0,
        }
    }

    /// Scenes cycling through the palette.
    pub fn from_lengths(fps: f64, lengths: &[u64]) -> Self {
        let scenes = lengths
            .iter()
            .enumerate()
            .map(|(i, &n)| (n, PALETTE[i % PALETTE.len()]))
            .collect();
        Self::new(fps, scenes)
    }

    pub fn total_frames(&self) -> u64 {
        self.scenes.iter().map(|(n, _)| n).sum()
    }

    pub fn duration(&self) -> Seconds {
        Seconds::from_millis((self.total_frames() as f64 / self.fps * 1000.0).round() as u64)
    }

    /// First frame of every scene after the first.
    pub fn cuts(&self) -> Vec<u64> {
        let mut at = 0;
        let mut cuts = Vec::new();
        for (i, (n, _)) in self.scenes.iter().enumerate() {
            if i > 0 {
                cuts.push(at);
            }
            at += n;
        }
        cuts
    }

    /// Base color plus per-pixel brightness noise.
    pub fn frame(&self, index: u64) -> RgbFrame {
        let mut at = 0;
        let color = self
            .scenes
            .iter()
            .find_map(|&(n, c)| {
                at += n;
                (index < at).then_some(c)
            })
            .unwrap_or(PALETTE[0]);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut frame = RgbFrame::filled(self.width, self.height, color);
        for px in frame.data.chunks_exact_mut(3) {
            let n = rng.random_range(-NOISE..=NOISE);
            for v in px {
                *v = (*v as i16 + n).clamp(0, 255) as u8;
            }
        }
        frame
    }

    pub fn frames(&self) -> impl Iterator<Item = RgbFrame> + '_ {
        (0..self.total_frames()).map(|i| self.frame(i))
    }

    pub fn header(&self) -> RawHeader {
        RawHeader {
            width: self.width,
            height: self.height,
            fps: self.fps,
            frames: self.declare_frames.then(|| self.total_frames()),
        }
    }

    pub fn to_raw_bytes(&self) -> Vec<u8> {
        let frames: Vec<RgbFrame> = self.frames().collect();
        let mut out = Vec::new();
        encode_raw_dump(&mut out, self.header(), &frames).expect("in-memory write");
        out
    }

    pub fn write_raw(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_raw_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Random video of at most `max_frames` frames whose scenes are at least
/// `min_len` frames long, with adjacent scenes in different colors.
pub fn random_cut_video(seed: u64, max_frames: u64, min_len: u64) -> SynthVideo {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = rng.random_range(max_frames / 2..=max_frames);
    let mut scenes = Vec::new();
    let mut total = 0;
    let mut color = rng.random_range(0..PALETTE.len());
    while total < target {
        let remaining = target - total;
        let mut len = rng.random_range(min_len..=min_len * 5);
        if remaining < len + min_len {
            len = remaining;
        }
        scenes.push((len, PALETTE[color]));
        total += len;
        color = (color + rng.random_range(1..PALETTE.len())) % PALETTE.len();
    }
    SynthVideo {
        width: 64,
        height: 36,
        fps: 30.0,
        scenes,
        declare_frames: true,
        seed,
    }
}

/// What the fixture expects for one video after `trim`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Expected {
    pub reject_reason: RejectReason,
    pub clip: Option<(Seconds, Seconds)>,
}

pub struct FixtureCorpus {
    pub server: MockFixture,
    pub stub: StubSpec,
    pub hashtags: Vec<HashtagSpec>,
    pub expected: BTreeMap<String, Expected>,
}

pub const FIXTURE_FPS: f64 = 10.0;

/// id, hashtag, scene lengths, permission, person table override, outcome.
type Row = (&'static str, &'static str, Vec<u64>, bool, Option<FrameBoxes>, Expected);

fn person() -> Vec<DetectionBox> {
    vec![DetectionBox::person(4.0, 2.0, 10.0, 14.0, 0.9)]
}

fn person_frames(ranges: &[(u64, u64)]) -> FrameBoxes {
    let mut map = BTreeMap::new();
    for &(lo, hi) in ranges {
        for i in lo..=hi {
            map.insert(i, person());
        }
    }
    FrameBoxes(map)
}

/// Twelve videos at 10 fps over three hashtags:
///
/// | id  | scenes (s)  | permission | persons            | outcome                |
/// |-----|-------------|------------|--------------------|------------------------|
/// | v01 | 12          | yes        | all                | accepted [0, 10]       |
/// | v02 | 3, 8        | yes        | all                | accepted [3, 11]       |
/// | v03 | 6           | no         | all                | no_permission          |
/// | v04 | 3, 3        | yes        | all                | too_short              |
/// | v05 | 6           | yes        | none               | insufficient_humans    |
/// | v06 | 6           | yes        | all                | accepted [0, 6]        |
/// | v07 | 5           | no         | all                | no_permission          |
/// | v08 | 8           | yes        | 4 of 10 samples    | insufficient_humans    |
/// | v09 | 5           | yes        | 5 of 10 samples    | accepted [0, 5]        |
/// | v10 | 25          | yes        | frames 120..249    | accepted [11.5, 21.5]  |
/// | v11 | 6, no count | yes        | all                | accepted [0, 6]        |
/// | v12 | 4, 7, 2     | yes        | all                | accepted [4, 11]       |
pub fn fixture_corpus() -> FixtureCorpus {
    let ms = Seconds::from_millis;
    let accept = |a: u64, b: u64| Expected {
        reject_reason: RejectReason::None,
        clip: Some((ms(a), ms(b))),
    };
    let reject = |r: RejectReason| Expected {
        reject_reason: r,
        clip: None,
    };
    let secs = |s: &[u64]| s.iter().map(|x| x * 10).collect::<Vec<_>>();
    #[rustfmt::skip]
    let table: Vec<Row> = vec![
        ("v01", "dance", secs(&[12]), true, None, accept(0, 10_000)),
        ("v02", "dance", secs(&[3, 8]), true, None, accept(3_000, 11_000)),
        ("v03", "dance", secs(&[6]), false, None, reject(RejectReason::NoPermission)),
        ("v04", "dance", secs(&[3, 3]), true, None, reject(RejectReason::TooShort)),
        ("v05", "sax", secs(&[6]), true, Some(FrameBoxes::default()), reject(RejectReason::InsufficientHumans)),
        ("v06", "sax", secs(&[6]), true, None, accept(0, 6_000)),
        ("v07", "sax", secs(&[5]), false, None, reject(RejectReason::NoPermission)),
        ("v08", "sax", secs(&[8]), true, Some(person_frames(&[(0, 31)])), reject(RejectReason::InsufficientHumans)),
        ("v09", "mopping", secs(&[5]), true, Some(person_frames(&[(0, 24)])), accept(0, 5_000)),
        ("v10", "mopping", secs(&[25]), true, Some(person_frames(&[(120, 249)])), accept(11_500, 21_500)),
        ("v11", "mopping", secs(&[6]), true, None, accept(0, 6_000)),
        ("v12", "mopping", secs(&[4, 7, 2]), true, None, accept(4_000, 11_000)),
    ];

    let mut server = MockFixture::new(Vec::new());
    server.page_size = 2;
    let mut stub = StubSpec {
        model: "stub".into(),
        frames: person_frames(&[(0, 299)]),
        videos: BTreeMap::new(),
    };
    let mut expected = BTreeMap::new();
    for (i, (id, tag, lengths, permitted, boxes, outcome)) in table.into_iter().enumerate() {
        let mut video = SynthVideo::from_lengths(FIXTURE_FPS, &lengths);
        video.seed = i as u64;
        video.declare_frames = id != "v11";
        server.assets.push(VideoAsset {
            video_id: id.into(),
            hashtag: tag.into(),
            duration_s: video.duration(),
            frame_rate: FIXTURE_FPS,
            media_path: None,
            download_permitted: permitted,
            source_meta: BTreeMap::from([
                ("title".to_string(), format!("{tag} clip {id}")),
                ("views".to_string(), (1000 * (i + 1)).to_string()),
            ]),
            analysis: None,
            revision: 0,
        });
        server.media.insert(id.into(), video.to_raw_bytes());
        if let Some(b) = boxes {
            stub.videos.insert(id.into(), b);
        }
        expected.insert(id.to_string(), outcome);
    }
    let hashtags = vec![
        HashtagSpec::new("dance", 1_200_000_000, Category::Dance).expect("valid tag"),
        HashtagSpec::new("sax", 310_000_000, Category::Kinetics).expect("valid tag"),
        HashtagSpec::new("mopping", 48_000_000, Category::SocialCultural).expect("valid tag"),
    ];
    FixtureCorpus {
        server,
        stub,
        hashtags,
        expected,
    }
}

impl FixtureCorpus {
    /// Writes `server/` (mock server fixture), `stub.json` and `hashtags.csv` under `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        self.server.save_dir(&dir.join("server"))?;
        let stub = dir.join("stub.json");
        let text = serde_json::to_string_pretty(&self.stub).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        fs::write(&stub, text).map_err(|e| Error::io(&stub, e))?;
        write_hashtag_list(&self.hashtags, &dir.join("hashtags.csv"))
    }
}

/// Tags in the corpus profile.
pub const PROFILE_TAGS: usize = 386;
/// Accepted clips in the corpus profile.
pub const PROFILE_CLIPS: u64 = 283_582;
/// Clips per duration bucket [3.5, 5), [5, 10), [10, ∞) in the corpus profile.
pub const PROFILE_DURATIONS: [u64; 3] = [30_103, 81_356, 172_123];

fn ramp(n: u64, lo: u64, hi: u64) -> impl Iterator<Item = u64> {
    (0..n).map(move |i| lo + i * (hi - lo) / (n - 1))
}

/// Clips per hashtag for the corpus profile: 386 tags, 283,582 clips, the
/// largest tag `sax` at 938, the smallest `mopping` at 325 and 206 tags in
/// the 600-800 range.
pub fn corpus_profile_counts() -> Vec<(String, u64)> {
    let mut counts = vec![("sax".to_string(), 938), ("mopping".to_string(), 325)];
    let mut next = 0;
    let mut push = |counts: &mut Vec<(String, u64)>, n: u64| {
        next += 1;
        counts.push((format!("action{next:03}"), n));
    };
    for n in ramp(13, 330, 390) {
        push(&mut counts, n);
    }
    for n in ramp(45, 420, 590) {
        push(&mut counts, n);
    }
    for n in ramp(206, 650, 799) {
        push(&mut counts, n);
    }
    let so_far: u64 = counts.iter().map(|(_, n)| n).sum();
    let high = (PROFILE_TAGS - counts.len()) as u64;
    let rest = PROFILE_CLIPS - so_far;
    let (base, extra) = (rest / high, rest % high);
    for i in 0..high {
        let swing = (i / 2) * 50 / (high / 2 - 1);
        let n = base + u64::from(i < extra);
        push(&mut counts, if i % 2 == 0 { n + swing } else { n - swing });
    }
    counts
}

/// An accepted-only manifest with the corpus-profile tag counts. Clip
/// lengths follow [`PROFILE_DURATIONS`] in record order.
pub fn corpus_profile_manifest() -> crate::manifest::DatasetManifest {
    use crate::model::ClipRecord;
    let mut m = crate::manifest::DatasetManifest::new();
    for (tag, n) in corpus_profile_counts() {
        for i in 0..n {
            let id = format!("{tag}-{i:04}");
            m.assets.insert(
                id.clone(),
                VideoAsset {
                    video_id: id,
                    hashtag: tag.clone(),
                    duration_s: Seconds::from_millis(12_000),
                    frame_rate: 30.0,
                    media_path: None,
                    download_permitted: true,
                    source_meta: BTreeMap::new(),
                    analysis: None,
                    revision: 1,
                },
            );
        }
    }
    let [short, mid, _] = PROFILE_DURATIONS;
    m.records = m
        .assets
        .keys()
        .enumerate()
        .map(|(k, id)| {
            let k = k as u64;
            let len = if k < short {
                3_500 + (k % 15) * 100
            } else if k < short + mid {
                5_000 + (k % 50) * 100
            } else {
                10_000
            };
            ClipRecord::accepted(id, Seconds::ZERO, Seconds::from_millis(len), 1.0)
        })
        .collect();
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{compute_content_scores, FrameFeature};

    fn score(a: [u8; 3], b: [u8; 3]) -> f64 {
        let f = |i, c: [u8; 3]| {
            let f = RgbFrame::filled(4, 4, c);
            FrameFeature::from_rgb(i, 4, 4, &f.data).unwrap()
        };
        compute_content_scores(&[f(0, a), f(1, b)]).unwrap()[0].score
    }

    #[test]
    fn palette_pairs_are_far_apart() {
        for (i, a) in PALETTE.iter().enumerate() {
            for b in &PALETTE[i + 1..] {
                assert!(score(*a, *b) > 35.0, "{a:?} {b:?} {}", score(*a, *b));
            }
        }
    }

    #[test]
    fn random_videos_respect_bounds() {
        for seed in 0..50 {
            let v = random_cut_video(seed, 300, 15);
            assert!(v.total_frames() <= 300);
            assert!(v.scenes.iter().all(|(n, _)| *n >= 15));
            assert!(v.scenes.windows(2).all(|w| w[0].1 != w[1].1));
        }
    }

    #[test]
    fn profile_counts_match_their_targets() {
        let counts = corpus_profile_counts();
        assert_eq!(counts.len(), PROFILE_TAGS);
        assert_eq!(counts.iter().map(|(_, n)| n).sum::<u64>(), PROFILE_CLIPS);
        assert_eq!(PROFILE_DURATIONS.iter().sum::<u64>(), PROFILE_CLIPS);
        let max = counts.iter().max_by_key(|(_, n)| *n).unwrap();
        let min = counts.iter().min_by_key(|(_, n)| *n).unwrap();
        assert_eq!((max.0.as_str(), max.1), ("sax", 938));
        assert_eq!((min.0.as_str(), min.1), ("mopping", 325));
        assert_eq!(counts.iter().filter(|(_, n)| *n == 938).count(), 1);
        assert_eq!(counts.iter().filter(|(_, n)| (600..800).contains(n)).count(), 206);
        assert!(counts.iter().all(|(_, n)| *n >= 200));
    }

    #[test]
    fn stub_serializes_back() {
        let corpus = fixture_corpus();
        let text = serde_json::to_string(&corpus.stub).unwrap();
        assert_eq!(StubSpec::from_json_str(&text).unwrap(), corpus.stub);
        assert_eq!(corpus.expected.len(), 12);
    }
}
