//! Annotation intervals, frame sampling and the dataset manifest.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::taxonomy::ActivityClass;

/// Default sampling stride: one frame per second at 30 fps.
pub const DEFAULT_INTERVAL_FRAMES: u32 = 30;

/// A labeled time span `[start_s, end_s)` of one video.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub video_id: String,
    pub start_s: f64,
    pub end_s: f64,
    pub activity: ActivityClass,
}

impl AnnotationRecord {
    /// Half-open membership test.
    pub fn contains(&self, t: f64) -> bool {
        self.start_s <= t && t < self.end_s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum AnnotationError {
    /// Negative start, non-finite times or `end_s <= start_s`.
    EmptyInterval { video_id: String, start_s: f64, end_s: f64 },
    Overlap { video_id: String, first_end_s: f64, second_start_s: f64 },
}

impl fmt::Display for AnnotationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnnotationError::EmptyInterval { video_id, start_s, end_s } => {
                write!(f, "{video_id}: invalid interval [{start_s}, {end_s})")
            }
            AnnotationError::Overlap { video_id, first_end_s, second_start_s } => write!(
                f,
                "{video_id}: interval starting at {second_start_s}s overlaps one ending at {first_end_s}s"
            ),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for AnnotationError {}

pub(crate) fn check_interval(video_id: &str, start_s: f64, end_s: f64) -> Result<(), AnnotationError> {
    if start_s.is_finite() && end_s.is_finite() && start_s >= 0.0 && end_s > start_s {
        Ok(())
    } else {
        Err(AnnotationError::EmptyInterval { video_id: video_id.into(), start_s, end_s })
    }
}

fn by_video_then_start(a: &AnnotationRecord, b: &AnnotationRecord) -> Ordering {
    a.video_id
        .cmp(&b.video_id)
        .then(a.start_s.total_cmp(&b.start_s))
        .then(a.end_s.total_cmp(&b.end_s))
}

/// Sorts records by `(video_id, start_s)` and rejects empty or overlapping
/// intervals within a video.
pub fn validate_records(
    mut records: Vec<AnnotationRecord>,
) -> Result<Vec<AnnotationRecord>, AnnotationError> {
    for r in &records {
        check_interval(&r.video_id, r.start_s, r.end_s)?;
    }
    records.sort_by(by_video_then_start);
    for pair in records.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if a.video_id == b.video_id && b.start_s < a.end_s {
            return Err(AnnotationError::Overlap {
                video_id: a.video_id.clone(),
                first_end_s: a.end_s,
                second_start_s: b.start_s,
            });
        }
    }
    Ok(records)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl core::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

/// Per-video facts needed to place sampled frames.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoMeta {
    pub video_id: String,
    pub fps: f64,
    pub duration_s: f64,
    pub width_px: u32,
    pub height_px: u32,
}

/// One labeled frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameSample {
    pub frame_id: String,
    pub video_id: String,
    pub timestamp_s: f64,
    /// Path of the frame image relative to the frames directory.
    pub image_ref: String,
    pub class_index: ActivityClass,
    pub height_px: u32,
    pub width_px: u32,
}

impl FrameSample {
    pub fn activity(&self) -> ActivityClass {
        self.class_index
    }
}

pub fn frame_id(video_id: &str, frame_index: u64) -> String {
    format!("{video_id}_f{frame_index:07}")
}

pub fn image_ref(video_id: &str, frame_index: u64) -> String {
    format!("{video_id}/frame_{frame_index:07}.jpg")
}

/// Emits one sample every `interval_frames` frames (starting at frame 0)
/// whose timestamp falls in an annotation interval of this video.
///
/// Frames in annotation gaps or past `duration_s` are skipped. Records for
/// other videos are ignored. Returns an empty list for `interval_frames == 0`
/// or a non-positive frame rate.
pub fn sample_frames(
    video: &VideoMeta,
    records: &[AnnotationRecord],
    interval_frames: u32,
) -> Vec<FrameSample> {
    let mut out = Vec::new();
    if interval_frames == 0 || !(video.fps.is_finite() && video.fps > 0.0) {
        return out;
    }
    let mut spans: Vec<&AnnotationRecord> =
        records.iter().filter(|r| r.video_id == video.video_id).collect();
    spans.sort_by(|a, b| by_video_then_start(a, b));
    let Some(last_end) = spans.iter().map(|r| r.end_s).reduce(f64::max) else {
        return out;
    };
    let horizon = if video.duration_s > 0.0 { last_end.min(video.duration_s) } else { last_end };

    let step = interval_frames as u64;
    let mut cursor = 0usize;
    let mut frame = 0u64;
    loop {
        let t = frame as f64 / video.fps;
        if t >= horizon {
            break;
        }
        while cursor < spans.len() && spans[cursor].end_s <= t {
            cursor += 1;
        }
        if let Some(span) = spans.get(cursor).filter(|s| s.contains(t)) {
            out.push(FrameSample {
                frame_id: frame_id(&video.video_id, frame),
                video_id: video.video_id.clone(),
                timestamp_s: t,
                image_ref: image_ref(&video.video_id, frame),
                class_index: span.activity,
                height_px: video.height_px,
                width_px: video.width_px,
            });
        }
        frame += step;
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub enum ManifestError {
    DuplicateFrameId(String),
    ZeroFrameSize(String),
}

impl fmt::Display for ManifestError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ManifestError::DuplicateFrameId(id) => write!(f, "duplicate frame_id {id}"),
            ManifestError::ZeroFrameSize(id) => write!(f, "frame {id} has zero width or height"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for ManifestError {}

/// Ordered, duplicate-free list of samples for one split.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub split: Split,
    pub fps: f64,
    pub sampling_interval_frames: u32,
    samples: Vec<FrameSample>,
}

impl DatasetManifest {
    /// Sorts samples by `(video_id, timestamp_s)` and checks frame ids.
    pub fn new(
        split: Split,
        fps: f64,
        sampling_interval_frames: u32,
        mut samples: Vec<FrameSample>,
    ) -> Result<Self, ManifestError> {
        samples.sort_by(|a, b| {
            a.video_id
                .cmp(&b.video_id)
                .then(a.timestamp_s.total_cmp(&b.timestamp_s))
                .then_with(|| a.frame_id.cmp(&b.frame_id))
        });
        let mut ids: Vec<&str> = samples.iter().map(|s| s.frame_id.as_str()).collect();
        ids.sort_unstable();
        if let Some(pair) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(ManifestError::DuplicateFrameId(pair[0].into()));
        }
        if let Some(s) = samples.iter().find(|s| s.width_px == 0 || s.height_px == 0) {
            return Err(ManifestError::ZeroFrameSize(s.frame_id.clone()));
        }
        Ok(Self { split, fps, sampling_interval_frames, samples })
    }

    pub fn samples(&self) -> &[FrameSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn rec(video: &str, start: f64, end: f64, class: usize) -> AnnotationRecord {
        AnnotationRecord {
            video_id: video.into(),
            start_s: start,
            end_s: end,
            activity: ActivityClass::from_index(class).unwrap(),
        }
    }

    fn video(fps: f64, duration: f64) -> VideoMeta {
        VideoMeta { video_id: "v1".into(), fps, duration_s: duration, width_px: 1920, height_px: 1080 }
    }

    #[test]
    fn ten_seconds_at_one_hertz() {
        let s = sample_frames(&video(30.0, 600.0), &[rec("v1", 0.0, 10.0, 1)], 30);
        assert_eq!(s.len(), 10);
        for (i, f) in s.iter().enumerate() {
            assert_eq!(f.timestamp_s, i as f64);
        }
    }

    #[test]
    fn single_frame_interval() {
        let s = sample_frames(&video(30.0, 600.0), &[rec("v1", 1.0, 1.0 + 1.0 / 30.0, 2)], 1);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].frame_id, "v1_f0000030");
        assert_eq!(s[0].class_index.index(), 2);
    }

    #[test]
    fn no_annotations_no_samples() {
        assert!(sample_frames(&video(30.0, 600.0), &[], 30).is_empty());
        assert!(sample_frames(&video(30.0, 600.0), &[rec("v1", 0.0, 5.0, 1)], 0).is_empty());
    }

    #[test]
    fn boundary_frame_goes_to_later_interval() {
        let records = [rec("v1", 0.0, 2.0, 1), rec("v1", 2.0, 4.0, 5)];
        let s = sample_frames(&video(30.0, 600.0), &records, 30);
        assert_eq!(s.len(), 4);
        assert_eq!(s[2].timestamp_s, 2.0);
        assert_eq!(s[2].class_index.index(), 5);
    }

    #[test]
    fn gaps_and_duration_are_respected() {
        let records = [rec("v1", 0.0, 1.5, 1), rec("v1", 3.0, 4.0, 2), rec("v2", 0.0, 9.0, 3)];
        let s = sample_frames(&video(30.0, 3.5), &records, 15);
        let times: Vec<f64> = s.iter().map(|f| f.timestamp_s).collect();
        assert_eq!(times, vec![0.0, 0.5, 1.0, 3.0]);
    }

    #[test]
    fn validation_sorts_and_rejects() {
        let sorted =
            validate_records(vec![rec("b", 0.0, 1.0, 1), rec("a", 5.0, 6.0, 2), rec("a", 0.0, 5.0, 3)])
                .unwrap();
        let keys: Vec<(&str, f64)> = sorted.iter().map(|r| (r.video_id.as_str(), r.start_s)).collect();
        assert_eq!(keys, vec![("a", 0.0), ("a", 5.0), ("b", 0.0)]);

        assert!(matches!(
            validate_records(vec![rec("a", 1.0, 1.0, 1)]),
            Err(AnnotationError::EmptyInterval { .. })
        ));
        assert!(matches!(
            validate_records(vec![rec("a", 0.0, 2.0, 1), rec("a", 1.0, 3.0, 1)]),
            Err(AnnotationError::Overlap { .. })
        ));
    }

    #[test]
    fn manifest_rejects_duplicates() {
        let s = sample_frames(&video(30.0, 600.0), &[rec("v1", 0.0, 2.0, 1)], 30);
        let doubled: Vec<FrameSample> = s.iter().chain(s.iter()).cloned().collect();
        assert!(matches!(
            DatasetManifest::new(Split::Train, 30.0, 30, doubled),
            Err(ManifestError::DuplicateFrameId(_))
        ));
    }

    proptest::proptest! {
        #[test]
        fn every_sample_lies_in_exactly_one_interval(
            cuts in proptest::collection::vec(0.0f64..120.0, 2..12),
            classes in proptest::collection::vec(1usize..=18, 12),
            fps in proptest::sample::select(vec![10.0, 25.0, 29.97, 30.0]),
            interval in 1u32..45,
        ) {
            let mut cuts = cuts;
            cuts.sort_by(f64::total_cmp);
            cuts.dedup();
            // every other gap is left unannotated
            let records: Vec<AnnotationRecord> = cuts
                .windows(2)
                .enumerate()
                .filter(|(i, _)| i % 3 != 2)
                .map(|(i, w)| rec("v1", w[0], w[1], classes[i % classes.len()]))
                .collect();
            let samples = sample_frames(&video(fps, 200.0), &records, interval);
            for s in &samples {
                let hits: Vec<&AnnotationRecord> =
                    records.iter().filter(|r| r.contains(s.timestamp_s)).collect();
                proptest::prop_assert_eq!(hits.len(), 1);
                proptest::prop_assert_eq!(hits[0].activity, s.class_index);
            }
            // brute-force count over the frame grid
            let mut expected = 0usize;
            let mut frame = 0u64;
            while (frame as f64 / fps) < 200.0 {
                let t = frame as f64 / fps;
                if records.iter().any(|r| r.contains(t)) {
                    expected += 1;
                }
                frame += interval as u64;
            }
            proptest::prop_assert_eq!(samples.len(), expected);
        }
    }
}
