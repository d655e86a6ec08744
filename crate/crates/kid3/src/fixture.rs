//! Synthetic dataset with a known amount of signal in each branch.
//!
//! Every video contains each of the 18 activities once, in a random order,
//! separated by short unannotated gaps. Per-frame inputs are generated from
//! the class:
//!
//! * image embeddings are the synthetic backbone output plus a faint class
//!   prototype, so the image branch alone is a weak classifier;
//! * scene graphs come from templates shared by small groups of related
//!   classes (plus distractor triplets and occasional template swaps), so
//!   the graph separates groups but not the classes inside a group;
//! * skeletons and detections follow per-class pose profiles that separate
//!   the classes inside each group.

use std::fs;
use std::path::{Path, PathBuf};

use kid3_core::annotation::{AnnotationRecord, DatasetManifest, FrameSample, Split};
use kid3_core::embedding::{synthetic_embedding, ImageEmbedding};
use kid3_core::graph::Triplet;
use kid3_core::pose::{DetectionBox, Joint, PoseSkeleton};
use kid3_core::rng;
use kid3_core::taxonomy::{ActivityClass, NUM_CLASSES};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formats::{DetectionRecord, PoseRecord, SceneGraphRecord};
use crate::ingest::{build_manifest, write_manifest, write_videos, VideoRow};
use crate::jsonl;
use crate::store::EmbeddingStore;

pub const FRAME_WIDTH: u32 = 1920;
pub const FRAME_HEIGHT: u32 = 1080;
const FPS: f64 = 30.0;
const INTERVAL_FRAMES: u32 = 30;
/// Samples taken from each activity interval (one per second).
const SAMPLES_PER_INTERVAL: usize = 10;
const GAP_S: f64 = 2.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixtureConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    /// Scale of the frame-specific backbone output in the image embedding.
    pub image_noise: f64,
    /// Scale of the class prototype added to the image embedding.
    pub image_signal: f64,
    /// Probability that a frame's scene graph uses another group's template.
    pub graph_swap_rate: f64,
    /// Standard deviation of the hand-face distance (normalized units).
    pub distance_noise: f64,
    /// Standard deviation of the eye-neck angle (degrees).
    pub angle_noise: f64,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        Self {
            n_train: 1800,
            n_test: 360,
            seed: 2024,
            image_noise: 0.05,
            image_signal: 0.003,
            graph_swap_rate: 0.08,
            distance_noise: 0.02,
            angle_noise: 1.5,
        }
    }
}

/// Graph template group of each class (index `class - 1`).
const GROUP: [usize; NUM_CLASSES] = [0, 1, 2, 3, 4, 2, 3, 5, 6, 7, 8, 8, 9, 6, 1, 5, 0, 0];

const TEMPLATES: [&[(&str, &str, &str)]; 10] = [
    &[("man", "holding", "steering_wheel"), ("hand", "on", "steering_wheel"), ("man", "looking_at", "road")],
    &[("man", "has", "mouth"), ("hand", "near", "face"), ("face", "of", "man")],
    &[("man", "holding", "phone"), ("phone", "in", "right_hand"), ("right_hand", "of", "man")],
    &[("man", "holding", "phone"), ("phone", "in", "left_hand"), ("left_hand", "of", "man")],
    &[("man", "eating", "sandwich"), ("man", "holding", "food"), ("food", "near", "mouth")],
    &[("hand", "on", "head"), ("man", "touching", "hair"), ("hair", "on", "head")],
    &[("man", "turning", "head"), ("man", "looking_at", "back_seat"), ("arm", "behind", "seat")],
    &[("hand", "touching", "screen"), ("screen", "on", "dashboard"), ("man", "looking_at", "screen")],
    &[("man", "bending_to", "floor"), ("hand", "near", "floor_mat"), ("floor_mat", "under", "seat")],
    &[("man", "looking_at", "passenger"), ("passenger", "sitting_on", "seat"), ("man", "next_to", "passenger")],
];

const DISTRACTORS: [(&str, &str, &str); 6] = [
    ("man", "wearing", "shirt"),
    ("man", "sitting_on", "seat"),
    ("window", "behind", "man"),
    ("man", "wearing", "glasses"),
    ("man", "wearing", "hat"),
    ("mirror", "above", "dashboard"),
];

/// Hand-face distance, eye-neck angle (degrees), and hand-phone /
/// hand-bottle distances when the object is in view.
struct PoseProfile {
    hand_face: f64,
    angle: f64,
    phone: Option<f64>,
    bottle: Option<f64>,
}

const fn profile(hand_face: f64, angle: f64, phone: Option<f64>, bottle: Option<f64>) -> PoseProfile {
    PoseProfile { hand_face, angle, phone, bottle }
}

const PROFILES: [PoseProfile; NUM_CLASSES] = [
    profile(0.40, 20.0, None, None),
    profile(0.08, 20.0, None, Some(0.03)),
    profile(0.06, 20.0, Some(0.03), None),
    profile(0.06, 20.0, Some(0.03), None),
    profile(0.10, 20.0, None, None),
    profile(0.30, 14.0, Some(0.03), None),
    profile(0.30, 14.0, Some(0.03), None),
    profile(0.12, 25.0, None, None),
    profile(0.50, 10.0, None, None),
    profile(0.45, 18.0, None, None),
    profile(0.62, 16.0, None, None),
    profile(0.48, 10.0, None, None),
    profile(0.40, 7.0, None, None),
    profile(0.38, 5.0, None, None),
    profile(0.07, 20.0, None, None),
    profile(0.26, 20.0, None, None),
    profile(0.40, 32.0, None, None),
    profile(0.22, 20.0, None, None),
];

/// Spellings used in the generated annotation table, to exercise label
/// normalization the same way hand-written annotations would.
fn label_spelling(class: ActivityClass, rng: &mut rng::Rng) -> String {
    match rng.random_range(0..4) {
        0 => class.display_name().to_string(),
        1 => class.canonical_name().to_string(),
        2 => class.display_name().to_uppercase(),
        _ => format!("  {}  ", class.display_name().to_lowercase()),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnnotationRow {
    pub video_id: String,
    pub start_s: f64,
    pub end_s: f64,
    pub label: String,
}

#[derive(Clone, Debug)]
pub struct Fixture {
    pub config: FixtureConfig,
    pub videos: Vec<VideoRow>,
    pub annotations: Vec<AnnotationRow>,
    pub train: DatasetManifest,
    pub test: DatasetManifest,
    pub embeddings: Vec<ImageEmbedding>,
    pub scene_graphs: Vec<SceneGraphRecord>,
    pub poses: Vec<PoseRecord>,
    pub detections: Vec<DetectionRecord>,
}

/// Relative file names used by [`Fixture::write`].
pub struct FixtureLayout;

impl FixtureLayout {
    pub const ANNOTATIONS: &'static str = "annotations.csv";
    pub const VIDEOS: &'static str = "videos.csv";
    pub const TRAIN_MANIFEST: &'static str = "train.jsonl";
    pub const TEST_MANIFEST: &'static str = "test.jsonl";
    pub const EMBEDDINGS: &'static str = "embeddings";
    pub const SCENE_GRAPHS: &'static str = "scene_graphs.jsonl";
    pub const POSES: &'static str = "poses.jsonl";
    pub const DETECTIONS: &'static str = "detections.jsonl";
    pub const FRAMES: &'static str = "frames";
    pub const CONFIG: &'static str = "kid3.toml";
}

/// Per-class sample counts for `n` frames, as even as possible.
fn class_counts(n: usize) -> [usize; NUM_CLASSES] {
    core::array::from_fn(|k| n / NUM_CLASSES + usize::from(k < n % NUM_CLASSES))
}

fn split_videos(split: Split, n: usize, seed: u64) -> (Vec<VideoRow>, Vec<AnnotationRecord>, Vec<AnnotationRow>) {
    let mut rng = rng::keyed(&format!("fixture/{}/schedule", split.as_str()), seed);
    let mut remaining = class_counts(n);
    let mut videos = Vec::new();
    let mut records = Vec::new();
    let mut rows = Vec::new();
    let mut v = 0;
    while remaining.iter().any(|&r| r > 0) {
        let video_id = format!("{}_{:03}", split.as_str(), v);
        let mut order: Vec<ActivityClass> = ActivityClass::all().collect();
        order.shuffle(&mut rng);
        let mut t = GAP_S;
        for class in order {
            let k = remaining[class.model_index()].min(SAMPLES_PER_INTERVAL);
            if k == 0 {
                continue;
            }
            remaining[class.model_index()] -= k;
            let end = t + k as f64;
            records.push(AnnotationRecord { video_id: video_id.clone(), start_s: t, end_s: end, activity: class });
            rows.push(AnnotationRow {
                video_id: video_id.clone(),
                start_s: t,
                end_s: end,
                label: label_spelling(class, &mut rng),
            });
            t = end + GAP_S;
        }
        videos.push(VideoRow {
            video_id,
            fps: FPS,
            duration_s: t,
            width_px: FRAME_WIDTH,
            height_px: FRAME_HEIGHT,
            split,
        });
        v += 1;
    }
    (videos, records, rows)
}

fn prototypes(seed: u64) -> Vec<Vec<f32>> {
    ActivityClass::all()
        .map(|c| synthetic_embedding(&format!("fixture/prototype/{}", c.index()), seed).vector)
        .collect()
}

fn image_embedding(frame: &FrameSample, prototypes: &[Vec<f32>], config: &FixtureConfig) -> ImageEmbedding {
    let mut e = synthetic_embedding(&frame.frame_id, config.seed);
    let proto = &prototypes[frame.class_index.model_index()];
    for (v, p) in e.vector.iter_mut().zip(proto) {
        *v = (config.image_noise * *v as f64 + config.image_signal * *p as f64) as f32;
    }
    e
}

fn scene_graph(frame: &FrameSample, config: &FixtureConfig) -> SceneGraphRecord {
    let mut rng = rng::keyed(&format!("fixture/graph/{}", frame.frame_id), config.seed);
    let mut group = GROUP[frame.class_index.model_index()];
    if rng.random_bool(config.graph_swap_rate) {
        group = (group + rng.random_range(1..TEMPLATES.len())) % TEMPLATES.len();
    }
    let score = |rng: &mut rng::Rng| Some((rng.random_range(0.5..1.0f64) * 1000.0).round() / 1000.0);
    let mut triplets: Vec<Triplet> = TEMPLATES[group]
        .iter()
        .map(|&(s, p, o)| Triplet { score: score(&mut rng), ..Triplet::new(s, p, o) })
        .collect();
    let extra = rng.random_range(0..=3);
    for &(s, p, o) in DISTRACTORS.choose_multiple(&mut rng, extra) {
        triplets.push(Triplet { score: score(&mut rng), ..Triplet::new(s, p, o) });
    }
    triplets.shuffle(&mut rng);
    SceneGraphRecord { frame_id: frame.frame_id.clone(), triplets }
}

fn to_px(p: (f64, f64)) -> (f64, f64) {
    (p.0 * FRAME_WIDTH as f64, p.1 * FRAME_HEIGHT as f64)
}

fn offset(from: (f64, f64), distance: f64, angle: f64) -> (f64, f64) {
    (from.0 + distance * angle.cos(), from.1 + distance * angle.sin())
}

fn object_box(label: &str, center: (f64, f64), score: f64) -> DetectionBox {
    let (cx, cy) = to_px(center);
    DetectionBox::new(label, cx - 30.0, cy - 25.0, cx + 30.0, cy + 25.0, score)
}

/// Skeleton and detections in pixel coordinates. Geometry is laid out in
/// normalized coordinates so the features land on the class profile.
fn pose_and_boxes(frame: &FrameSample, config: &FixtureConfig) -> (PoseRecord, DetectionRecord) {
    let mut rng = rng::keyed(&format!("fixture/pose/{}", frame.frame_id), config.seed);
    let profile = &PROFILES[frame.class_index.model_index()];
    let jitter = Normal::new(0.0, 0.01).expect("finite std");
    let distance_noise = Normal::new(0.0, config.distance_noise).expect("finite std");
    let angle_noise = Normal::new(0.0, config.angle_noise).expect("finite std");

    let neck = (0.5 + jitter.sample(&mut rng), 0.6 + jitter.sample(&mut rng));
    let half = (profile.angle + angle_noise.sample(&mut rng)).clamp(1.0, 179.0).to_radians() / 2.0;
    let r = 0.12;
    let left_eye = (neck.0 + r * half.sin(), neck.1 - r * half.cos());
    let right_eye = (neck.0 - r * half.sin(), neck.1 - r * half.cos());
    let nose = (neck.0, neck.1 - 0.1);

    let reach = (profile.hand_face + distance_noise.sample(&mut rng)).max(0.0);
    let near_hand = offset(nose, reach, rng.random_range(0.0..std::f64::consts::PI));
    let far_hand = offset(nose, reach + rng.random_range(0.1..0.3), rng.random_range(0.0..std::f64::consts::PI));
    let (right_wrist, left_wrist) = if rng.random_bool(0.5) { (near_hand, far_hand) } else { (far_hand, near_hand) };

    let mut skeleton = PoseSkeleton::new(&frame.frame_id);
    let mut place = |joint: Joint, p: (f64, f64), rng: &mut rng::Rng| {
        // Occasionally a keypoint is detected with too little confidence to use.
        let confidence = if rng.random_bool(0.03) { 0.05 } else { rng.random_range(0.5..1.0) };
        let (x, y) = to_px(p);
        skeleton = std::mem::take(&mut skeleton).with(joint, x, y, confidence);
    };
    place(Joint::Neck, neck, &mut rng);
    place(Joint::Nose, nose, &mut rng);
    place(Joint::LeftEye, left_eye, &mut rng);
    place(Joint::RightEye, right_eye, &mut rng);
    place(Joint::RightWrist, right_wrist, &mut rng);
    place(Joint::LeftWrist, left_wrist, &mut rng);
    place(Joint::RightElbow, ((right_wrist.0 + neck.0) / 2.0, neck.1 + 0.15), &mut rng);
    place(Joint::LeftElbow, ((left_wrist.0 + neck.0) / 2.0, neck.1 + 0.15), &mut rng);

    let mut boxes = vec![DetectionBox::new("person", 600.0, 150.0, 1400.0, 1080.0, 0.98)];
    let mut held = |label: &str, distance: Option<f64>, rng: &mut rng::Rng| {
        if let Some(d) = distance {
            let d = (d + distance_noise.sample(rng) / 2.0).abs();
            let center = offset(near_hand, d, rng.random_range(0.0..std::f64::consts::TAU));
            boxes.push(object_box(label, center, rng.random_range(0.6..0.99)));
        } else if rng.random_bool(0.15) {
            // The object is in view but not in hand, e.g. lying on the dashboard.
            boxes.push(object_box(label, (rng.random_range(0.05..0.95), 0.95), rng.random_range(0.3..0.9)));
        }
    };
    held("cell phone", profile.phone, &mut rng);
    held("bottle", profile.bottle, &mut rng);

    (PoseRecord::from_skeleton(&skeleton), DetectionRecord { frame_id: frame.frame_id.clone(), boxes })
}

impl Fixture {
    pub fn generate(config: &FixtureConfig) -> Result<Self> {
        if config.n_train < NUM_CLASSES || config.n_test < NUM_CLASSES {
            return Err(Error::Config(format!("fixture needs n_train and n_test of at least {NUM_CLASSES}")));
        }
        let (mut videos, mut records, mut annotations) = split_videos(Split::Train, config.n_train, config.seed);
        let (v, r, a) = split_videos(Split::Test, config.n_test, config.seed);
        videos.extend(v);
        records.extend(r);
        annotations.extend(a);

        let train = build_manifest(Split::Train, &videos, &records, INTERVAL_FRAMES)?;
        let test = build_manifest(Split::Test, &videos, &records, INTERVAL_FRAMES)?;
        debug_assert_eq!((train.len(), test.len()), (config.n_train, config.n_test));

        let protos = prototypes(config.seed);
        let frames = || train.samples().iter().chain(test.samples());
        let embeddings = frames().map(|f| image_embedding(f, &protos, config)).collect();
        let scene_graphs = frames().map(|f| scene_graph(f, config)).collect();
        let (poses, detections) = frames().map(|f| pose_and_boxes(f, config)).unzip();
        Ok(Self {
            config: config.clone(),
            videos,
            annotations,
            train,
            test,
            embeddings,
            scene_graphs,
            poses,
            detections,
        })
    }

    /// Writes every fixture file plus a `kid3.toml` pointing at them.
    /// Returns the config path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir).map_err(Error::unwritable(dir))?;
        let path = |name: &str| dir.join(name);

        let annotations = path(FixtureLayout::ANNOTATIONS);
        let mut w = csv::Writer::from_path(&annotations).map_err(|e| csv_error(&annotations, e))?;
        w.write_record(["video_id", "start_s", "end_s", "label"]).map_err(|e| csv_error(&annotations, e))?;
        for row in &self.annotations {
            w.write_record([&row.video_id, &row.start_s.to_string(), &row.end_s.to_string(), &row.label])
                .map_err(|e| csv_error(&annotations, e))?;
        }
        w.flush().map_err(Error::unwritable(&annotations))?;

        write_videos(&path(FixtureLayout::VIDEOS), &self.videos)?;
        write_manifest(&path(FixtureLayout::TRAIN_MANIFEST), &self.train)?;
        write_manifest(&path(FixtureLayout::TEST_MANIFEST), &self.test)?;
        EmbeddingStore::from_embeddings(&self.embeddings)?.write(&path(FixtureLayout::EMBEDDINGS))?;
        jsonl::write(&path(FixtureLayout::SCENE_GRAPHS), &self.scene_graphs)?;
        jsonl::write(&path(FixtureLayout::POSES), &self.poses)?;
        jsonl::write(&path(FixtureLayout::DETECTIONS), &self.detections)?;

        let frames = path(FixtureLayout::FRAMES);
        fs::create_dir_all(&frames).map_err(Error::unwritable(&frames))?;

        let config_path = path(FixtureLayout::CONFIG);
        let config = crate::config::ExperimentConfig::for_fixture_dir(Path::new("."));
        fs::write(&config_path, config.to_toml()).map_err(Error::unwritable(&config_path))?;
        Ok(config_path)
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::UnwritablePath { path: path.to_path_buf(), source: std::io::Error::other(e.to_string()) }
}
