//! Human-presence aggregation over sampled frames.

use std::collections::BTreeSet;

use crate::detector::DetectionFrame;
use crate::error::{Error, Result};
use crate::model::{PresenceSample, RejectReason};

#[derive(Debug, Clone, PartialEq)]
pub struct HumanPresenceSummary {
    pub video_id: String,
    pub sampled: u64,
    pub person_frames: u64,
    pub presence_ratio: f64,
}

impl HumanPresenceSummary {
    pub fn new(video_id: &str, sampled: u64, person_frames: u64) -> Result<Self> {
        if sampled == 0 || person_frames > sampled {
            return Err(Error::invariant(
                Some(video_id),
                format!("{person_frames} person frames out of {sampled} sampled"),
            ));
        }
        Ok(HumanPresenceSummary {
            video_id: video_id.to_owned(),
            sampled,
            person_frames,
            presence_ratio: person_frames as f64 / sampled as f64,
        })
    }

    /// Rebuilds the summary from stored per-frame verdicts.
    pub fn from_samples(video_id: &str, samples: &[PresenceSample]) -> Result<Self> {
        let persons = samples.iter().filter(|s| s.person).count() as u64;
        Self::new(video_id, samples.len() as u64, persons)
    }
}

/// Outcome of a pipeline gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Pass,
    Reject(RejectReason),
}

impl Gate {
    pub fn passed(self) -> bool {
        self == Gate::Pass
    }

    pub fn reject_reason(self) -> RejectReason {
        match self {
            Gate::Pass => RejectReason::None,
            Gate::Reject(r) => r,
        }
    }
}

fn frame_has_person(frame: &DetectionFrame, min_det_score: f64) -> bool {
    frame
        .boxes
        .iter()
        .any(|b| b.is_person() && b.score >= min_det_score)
}

fn check_frames(detections: &[DetectionFrame]) -> Result<&str> {
    let first = detections
        .first()
        .ok_or_else(|| Error::InvalidArgument("no detections to summarize".into()))?;
    let mut seen = BTreeSet::new();
    for f in detections {
        if f.video_id != first.video_id {
            return Err(Error::InvalidArgument(format!(
                "detections mix videos {} and {}",
                first.video_id, f.video_id
            )));
        }
        if !seen.insert(f.frame_index) {
            return Err(Error::invariant(
                Some(&f.video_id),
                format!("duplicate detections for frame {}", f.frame_index),
            ));
        }
    }
    Ok(&first.video_id)
}

/// Per-frame person verdicts, sorted by frame index.
pub fn person_samples(detections: &[DetectionFrame], min_det_score: f64) -> Result<Vec<PresenceSample>> {
    check_frames(detections)?;
    let mut samples: Vec<PresenceSample> = detections
        .iter()
        .map(|f| PresenceSample {
            frame_index: f.frame_index,
            person: frame_has_person(f, min_det_score),
        })
        .collect();
    samples.sort_by_key(|s| s.frame_index);
    Ok(samples)
}

/// Counts frames holding at least one `person` box scoring `>= min_det_score`.
pub fn summarize_presence(detections: &[DetectionFrame], min_det_score: f64) -> Result<HumanPresenceSummary> {
    let video_id = check_frames(detections)?;
    let persons = detections
        .iter()
        .filter(|f| frame_has_person(f, min_det_score))
        .count() as u64;
    HumanPresenceSummary::new(video_id, detections.len() as u64, persons)
}

/// Passes when the presence ratio reaches `theta` (inclusive).
pub fn qualifies(summary: &HumanPresenceSummary, theta: f64) -> Gate {
    if summary.presence_ratio >= theta {
        Gate::Pass
    } else {
        Gate::Reject(RejectReason::InsufficientHumans)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::DetectionBox;
    use proptest::prelude::*;

    fn frames(persons: &[bool]) -> Vec<DetectionFrame> {
        persons
            .iter()
            .enumerate()
            .map(|(i, &p)| DetectionFrame {
                video_id: "v".into(),
                frame_index: i as u64 * 10,
                boxes: if p {
                    vec![DetectionBox::person(0.0, 0.0, 5.0, 9.0, 0.9)]
                } else {
                    vec![]
                },
            })
            .collect()
    }

    #[test]
    fn seven_of_ten() {
        let mut flags = [true; 10];
        flags[7..].fill(false);
        let s = summarize_presence(&frames(&flags), 0.25).unwrap();
        assert_eq!((s.sampled, s.person_frames), (10, 7));
        assert_eq!(s.presence_ratio, 0.7);
        assert!(qualifies(&s, 0.5).passed());
    }

    #[test]
    fn all_empty() {
        let s = summarize_presence(&frames(&[false; 10]), 0.25).unwrap();
        assert_eq!(s.presence_ratio, 0.0);
        assert_eq!(qualifies(&s, 0.5), Gate::Reject(RejectReason::InsufficientHumans));
    }

    #[test]
    fn boundary_is_inclusive() {
        let s = HumanPresenceSummary::new("v", 10, 5).unwrap();
        assert!(qualifies(&s, 0.5).passed());
    }

    #[test]
    fn low_scores_and_other_labels_ignored() {
        let mut f = frames(&[false, false]);
        f[0].boxes.push(DetectionBox::person(0.0, 0.0, 1.0, 1.0, 0.2));
        f[1].boxes.push(DetectionBox { label: "dog".into(), ..DetectionBox::person(0.0, 0.0, 1.0, 1.0, 0.99) });
        assert_eq!(summarize_presence(&f, 0.25).unwrap().person_frames, 0);
    }

    #[test]
    fn errors() {
        assert!(summarize_presence(&[], 0.25).is_err());
        let mut f = frames(&[true, true]);
        f[1].frame_index = f[0].frame_index;
        assert!(summarize_presence(&f, 0.25).is_err());
    }

    proptest! {
        #[test]
        fn adding_person_never_rejects(flags in prop::collection::vec(any::<bool>(), 1..20), pick in any::<prop::sample::Index>(), theta in 0.01f64..=1.0) {
            let before = summarize_presence(&frames(&flags), 0.25).unwrap();
            let mut more = frames(&flags);
            let i = pick.index(more.len());
            more[i].boxes.push(DetectionBox::person(1.0, 1.0, 3.0, 3.0, 0.95));
            let after = summarize_presence(&more, 0.25).unwrap();
            prop_assert!(!(qualifies(&before, theta).passed() && !qualifies(&after, theta).passed()));
        }

        #[test]
        fn monotone_in_theta(person in 0u64..=10, a in 0.01f64..=1.0, b in 0.01f64..=1.0) {
            let s = HumanPresenceSummary::new("v", 10, person).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(qualifies(&s, hi).passed() <= qualifies(&s, lo).passed());
        }
    }
}
