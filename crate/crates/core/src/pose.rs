//! Engineered pose features: hand-to-face distance, the eye angle at the
//! neck, and hand-to-object distances, each paired with a presence flag.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

/// Keypoints of the 25-point body skeleton, in the pose tool's index order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Joint {
    Nose,
    Neck,
    RightShoulder,
    RightElbow,
    RightWrist,
    LeftShoulder,
    LeftElbow,
    LeftWrist,
    MidHip,
    RightHip,
    RightKnee,
    RightAnkle,
    LeftHip,
    LeftKnee,
    LeftAnkle,
    RightEye,
    LeftEye,
    RightEar,
    LeftEar,
    LeftBigToe,
    LeftSmallToe,
    LeftHeel,
    RightBigToe,
    RightSmallToe,
    RightHeel,
}

impl Joint {
    pub const ALL: [Joint; 25] = [
        Joint::Nose,
        Joint::Neck,
        Joint::RightShoulder,
        Joint::RightElbow,
        Joint::RightWrist,
        Joint::LeftShoulder,
        Joint::LeftElbow,
        Joint::LeftWrist,
        Joint::MidHip,
        Joint::RightHip,
        Joint::RightKnee,
        Joint::RightAnkle,
        Joint::LeftHip,
        Joint::LeftKnee,
        Joint::LeftAnkle,
        Joint::RightEye,
        Joint::LeftEye,
        Joint::RightEar,
        Joint::LeftEar,
        Joint::LeftBigToe,
        Joint::LeftSmallToe,
        Joint::LeftHeel,
        Joint::RightBigToe,
        Joint::RightSmallToe,
        Joint::RightHeel,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Joint::Nose => "nose",
            Joint::Neck => "neck",
            Joint::RightShoulder => "right_shoulder",
            Joint::RightElbow => "right_elbow",
            Joint::RightWrist => "right_wrist",
            Joint::LeftShoulder => "left_shoulder",
            Joint::LeftElbow => "left_elbow",
            Joint::LeftWrist => "left_wrist",
            Joint::MidHip => "mid_hip",
            Joint::RightHip => "right_hip",
            Joint::RightKnee => "right_knee",
            Joint::RightAnkle => "right_ankle",
            Joint::LeftHip => "left_hip",
            Joint::LeftKnee => "left_knee",
            Joint::LeftAnkle => "left_ankle",
            Joint::RightEye => "right_eye",
            Joint::LeftEye => "left_eye",
            Joint::RightEar => "right_ear",
            Joint::LeftEar => "left_ear",
            Joint::LeftBigToe => "left_big_toe",
            Joint::LeftSmallToe => "left_small_toe",
            Joint::LeftHeel => "left_heel",
            Joint::RightBigToe => "right_big_toe",
            Joint::RightSmallToe => "right_small_toe",
            Joint::RightHeel => "right_heel",
        }
    }
}

impl FromStr for Joint {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Joint::ALL.into_iter().find(|j| j.name() == s).ok_or(())
    }
}

fn alias_key(name: &str) -> String {
    name.chars().filter(|c| c.is_ascii_alphanumeric()).map(|c| c.to_ascii_lowercase()).collect()
}

/// Maps keypoint names as written by a pose tool onto [`Joint`]s.
///
/// Matching ignores case and punctuation, so `left_wrist`, `LeftWrist` and
/// `left-wrist` are the same name. The default table also knows the
/// abbreviated `LWrist`/`REye` spellings.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JointAliases {
    map: BTreeMap<String, Joint>,
}

impl Default for JointAliases {
    fn default() -> Self {
        let mut map = BTreeMap::new();
        for joint in Joint::ALL {
            map.insert(alias_key(joint.name()), joint);
            let short = joint
                .name()
                .strip_prefix("right_")
                .map(|rest| ["r", rest].concat())
                .or_else(|| joint.name().strip_prefix("left_").map(|rest| ["l", rest].concat()));
            if let Some(short) = short {
                map.insert(alias_key(&short), joint);
            }
        }
        Self { map }
    }
}

impl JointAliases {
    pub fn empty() -> Self {
        Self { map: BTreeMap::new() }
    }

    pub fn insert(&mut self, name: &str, joint: Joint) {
        self.map.insert(alias_key(name), joint);
    }

    pub fn resolve(&self, name: &str) -> Option<Joint> {
        self.map.get(&alias_key(name)).copied()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

impl Keypoint {
    pub fn new(x: f64, y: f64, confidence: f64) -> Self {
        Self { x, y, confidence }
    }

    fn point(&self) -> (f64, f64) {
        (self.x, self.y)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PoseSkeleton {
    pub frame_id: String,
    pub keypoints: BTreeMap<Joint, Keypoint>,
}

impl PoseSkeleton {
    pub fn new(frame_id: &str) -> Self {
        Self { frame_id: frame_id.into(), keypoints: BTreeMap::new() }
    }

    pub fn with(mut self, joint: Joint, x: f64, y: f64, confidence: f64) -> Self {
        self.keypoints.insert(joint, Keypoint::new(x, y, confidence));
        self
    }

    pub fn get(&self, joint: Joint) -> Option<(f64, f64)> {
        self.keypoints.get(&joint).map(Keypoint::point)
    }
}

/// Object class a detection box is matched against.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObjectKind {
    Phone,
    Bottle,
}

impl ObjectKind {
    pub fn matches(self, label: &str) -> bool {
        let key = alias_key(label);
        match self {
            ObjectKind::Phone => {
                matches!(key.as_str(), "phone" | "cellphone" | "mobilephone" | "smartphone")
            }
            ObjectKind::Bottle => matches!(key.as_str(), "bottle" | "waterbottle"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionBox {
    pub label: String,
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    pub score: f64,
}

impl DetectionBox {
    pub fn new(label: &str, x1: f64, y1: f64, x2: f64, y2: f64, score: f64) -> Self {
        Self { label: label.into(), x1, y1, x2, y2, score }
    }

    pub fn is_valid(&self) -> bool {
        self.x2 > self.x1 && self.y2 > self.y1 && (0.0..=1.0).contains(&self.score)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMode {
    #[default]
    BoxCenter,
    NearestEdge,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseConfig {
    pub confidence_threshold: f64,
    pub distance_mode: DistanceMode,
}

impl Default for PoseConfig {
    fn default() -> Self {
        Self { confidence_threshold: 0.1, distance_mode: DistanceMode::BoxCenter }
    }
}

/// A feature value and its presence flag. Absent features are `(0, 0)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Masked {
    pub value: f64,
    pub present: bool,
}

impl Masked {
    pub const ABSENT: Masked = Masked { value: 0.0, present: false };

    fn some(value: f64) -> Self {
        Masked { value, present: true }
    }

    pub fn flag(self) -> f64 {
        if self.present {
            1.0
        } else {
            0.0
        }
    }
}

pub const POSE_FEATURE_COUNT: usize = 4;
pub const POSE_FEATURE_LEN: usize = 2 * POSE_FEATURE_COUNT;
pub const POSE_FEATURE_NAMES: [&str; POSE_FEATURE_COUNT] =
    ["hand_face_distance", "eye_neck_angle", "hand_phone_distance", "hand_bottle_distance"];

/// Feature values followed by one presence flag per feature.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseFeatureVector {
    pub values: [f64; POSE_FEATURE_LEN],
}

impl PoseFeatureVector {
    pub const ZERO: PoseFeatureVector = PoseFeatureVector { values: [0.0; POSE_FEATURE_LEN] };

    pub fn from_features(features: [Masked; POSE_FEATURE_COUNT]) -> Self {
        let mut values = [0.0; POSE_FEATURE_LEN];
        for (i, f) in features.iter().enumerate() {
            values[i] = if f.present { f.value } else { 0.0 };
            values[POSE_FEATURE_COUNT + i] = f.flag();
        }
        Self { values }
    }

    pub fn feature(&self, i: usize) -> Masked {
        Masked { value: self.values[i], present: self.values[POSE_FEATURE_COUNT + i] == 1.0 }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

impl fmt::Display for PoseFeatureVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, name) in POSE_FEATURE_NAMES.iter().enumerate() {
            let m = self.feature(i);
            if i > 0 {
                f.write_str(", ")?;
            }
            if m.present {
                write!(f, "{name}={:.4}", m.value)?;
            } else {
                write!(f, "{name}=absent")?;
            }
        }
        Ok(())
    }
}

fn unit(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    libm::hypot(a.0 - b.0, a.1 - b.1)
}

/// Scales coordinates into `[0, 1]` by the frame size and drops keypoints
/// below the confidence threshold. Coordinates outside the frame are clamped.
pub fn normalize_keypoints(skeleton: &PoseSkeleton, width_px: f64, height_px: f64, threshold: f64) -> PoseSkeleton {
    let keypoints = skeleton
        .keypoints
        .iter()
        .filter(|(_, k)| k.confidence >= threshold && k.x.is_finite() && k.y.is_finite())
        .map(|(&joint, k)| (joint, Keypoint::new(unit(k.x / width_px), unit(k.y / height_px), k.confidence)))
        .collect();
    PoseSkeleton { frame_id: skeleton.frame_id.clone(), keypoints }
}

/// Hand position per side: the wrist, or the elbow when the wrist is missing.
fn hands(skeleton: &PoseSkeleton) -> Vec<(f64, f64)> {
    [(Joint::LeftWrist, Joint::LeftElbow), (Joint::RightWrist, Joint::RightElbow)]
        .into_iter()
        .filter_map(|(wrist, elbow)| skeleton.get(wrist).or_else(|| skeleton.get(elbow)))
        .collect()
}

/// Nose, else the midpoint of whichever eyes are present.
fn face_anchor(skeleton: &PoseSkeleton) -> Option<(f64, f64)> {
    if let Some(nose) = skeleton.get(Joint::Nose) {
        return Some(nose);
    }
    let eyes: Vec<(f64, f64)> =
        [Joint::LeftEye, Joint::RightEye].into_iter().filter_map(|j| skeleton.get(j)).collect();
    if eyes.is_empty() {
        return None;
    }
    let n = eyes.len() as f64;
    Some((eyes.iter().map(|p| p.0).sum::<f64>() / n, eyes.iter().map(|p| p.1).sum::<f64>() / n))
}

fn min_distance(points: &[(f64, f64)], targets: &[(f64, f64)], metric: impl Fn((f64, f64), (f64, f64)) -> f64) -> Masked {
    points
        .iter()
        .flat_map(|&p| targets.iter().map(move |&t| (p, t)))
        .map(|(p, t)| metric(p, t))
        .reduce(f64::min)
        .map_or(Masked::ABSENT, Masked::some)
}

/// Closest hand to the face anchor, on a normalized skeleton.
pub fn hand_face_distance(skeleton: &PoseSkeleton) -> Masked {
    match face_anchor(skeleton) {
        Some(face) => min_distance(&hands(skeleton), &[face], dist),
        None => Masked::ABSENT,
    }
}

/// Angle in degrees at the neck between the rays to the left and right eye.
pub fn eye_neck_angle(skeleton: &PoseSkeleton) -> Masked {
    let (Some(neck), Some(left), Some(right)) =
        (skeleton.get(Joint::Neck), skeleton.get(Joint::LeftEye), skeleton.get(Joint::RightEye))
    else {
        return Masked::ABSENT;
    };
    let a = (left.0 - neck.0, left.1 - neck.1);
    let b = (right.0 - neck.0, right.1 - neck.1);
    if (a.0 == 0.0 && a.1 == 0.0) || (b.0 == 0.0 && b.1 == 0.0) {
        return Masked::ABSENT;
    }
    let cross = a.0 * b.1 - a.1 * b.0;
    let dot = a.0 * b.0 + a.1 * b.1;
    Masked::some(libm::atan2(libm::fabs(cross), dot).to_degrees())
}

/// Box corners scaled into the unit square.
fn normalized_box(b: &DetectionBox, width_px: f64, height_px: f64) -> (f64, f64, f64, f64) {
    (unit(b.x1 / width_px), unit(b.y1 / height_px), unit(b.x2 / width_px), unit(b.y2 / height_px))
}

/// Closest hand to any detected object of `kind`.
pub fn hand_object_distance(
    skeleton: &PoseSkeleton,
    boxes: &[DetectionBox],
    kind: ObjectKind,
    width_px: f64,
    height_px: f64,
    mode: DistanceMode,
) -> Masked {
    let rects: Vec<(f64, f64, f64, f64)> = boxes
        .iter()
        .filter(|b| kind.matches(&b.label))
        .map(|b| normalized_box(b, width_px, height_px))
        .collect();
    let hands = hands(skeleton);
    hands
        .iter()
        .flat_map(|&h| rects.iter().map(move |&r| (h, r)))
        .map(|(h, (x1, y1, x2, y2))| match mode {
            DistanceMode::BoxCenter => dist(h, ((x1 + x2) / 2.0, (y1 + y2) / 2.0)),
            DistanceMode::NearestEdge => dist(h, (h.0.clamp(x1, x2), h.1.clamp(y1, y2))),
        })
        .reduce(f64::min)
        .map_or(Masked::ABSENT, Masked::some)
}

/// Normalizes the skeleton and assembles the full feature vector.
pub fn extract_pose_features(
    skeleton: &PoseSkeleton,
    boxes: &[DetectionBox],
    width_px: f64,
    height_px: f64,
    config: &PoseConfig,
) -> PoseFeatureVector {
    let normalized = normalize_keypoints(skeleton, width_px, height_px, config.confidence_threshold);
    let object = |kind| hand_object_distance(&normalized, boxes, kind, width_px, height_px, config.distance_mode);
    PoseFeatureVector::from_features([
        hand_face_distance(&normalized),
        eye_neck_angle(&normalized),
        object(ObjectKind::Phone),
        object(ObjectKind::Bottle),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn normalization_scales_and_filters() {
        let s = PoseSkeleton::new("f").with(Joint::Nose, 960.0, 540.0, 0.9).with(Joint::Neck, 10.0, 10.0, 0.0);
        let n = normalize_keypoints(&s, 1920.0, 1080.0, 0.1);
        assert_eq!(n.get(Joint::Nose), Some((0.5, 0.5)));
        assert_eq!(n.get(Joint::Neck), None);
        assert!(normalize_keypoints(&PoseSkeleton::new("e"), 1920.0, 1080.0, 0.1).keypoints.is_empty());
    }

    #[test]
    fn hand_face() {
        let s = PoseSkeleton::new("f").with(Joint::LeftWrist, 0.0, 0.0, 1.0).with(Joint::Nose, 0.3, 0.4, 1.0);
        assert_eq!(hand_face_distance(&s), Masked { value: 0.5, present: true });

        let s = PoseSkeleton::new("f")
            .with(Joint::Nose, 0.5, 0.5, 1.0)
            .with(Joint::LeftWrist, 0.5, 1.0, 1.0)
            .with(Joint::RightWrist, 0.5, 0.7, 1.0);
        assert!(close(hand_face_distance(&s).value, 0.2));

        let s = PoseSkeleton::new("f").with(Joint::LeftWrist, 0.0, 0.0, 1.0);
        assert_eq!(hand_face_distance(&s), Masked::ABSENT);
    }

    #[test]
    fn face_anchor_and_hand_fallbacks() {
        let s = PoseSkeleton::new("f")
            .with(Joint::LeftEye, 0.2, 0.2, 1.0)
            .with(Joint::RightEye, 0.4, 0.2, 1.0)
            .with(Joint::RightElbow, 0.3, 0.6, 1.0);
        assert!(close(hand_face_distance(&s).value, 0.4));
        let s = s.with(Joint::RightWrist, 0.3, 0.3, 1.0);
        assert!(close(hand_face_distance(&s).value, 0.1));
    }

    #[test]
    fn eye_angle() {
        let s = PoseSkeleton::new("f")
            .with(Joint::Neck, 0.5, 0.5, 1.0)
            .with(Joint::LeftEye, 0.4, 0.6, 1.0)
            .with(Joint::RightEye, 0.6, 0.6, 1.0);
        assert!(close(eye_neck_angle(&s).value, 90.0));
        assert!(eye_neck_angle(&s).present);

        let degenerate = s.clone().with(Joint::LeftEye, 0.5, 0.5, 1.0);
        assert_eq!(eye_neck_angle(&degenerate), Masked::ABSENT);

        let collinear = s.clone().with(Joint::LeftEye, 0.6, 0.6, 1.0).with(Joint::RightEye, 0.7, 0.7, 1.0);
        assert_eq!(eye_neck_angle(&collinear), Masked { value: 0.0, present: true });

        let opposite = s.with(Joint::LeftEye, 0.4, 0.5, 1.0).with(Joint::RightEye, 0.6, 0.5, 1.0);
        assert!(close(eye_neck_angle(&opposite).value, 180.0));
    }

    #[test]
    fn hand_object() {
        let s = PoseSkeleton::new("f").with(Joint::LeftWrist, 0.0, 0.0, 1.0);
        let phone = DetectionBox::new("phone", 50.0, 70.0, 70.0, 90.0, 0.9);
        let d = hand_object_distance(&s, core::slice::from_ref(&phone), ObjectKind::Phone, 100.0, 100.0, DistanceMode::BoxCenter);
        assert!(close(d.value, 1.0) && d.present);

        assert_eq!(
            hand_object_distance(&s, &[], ObjectKind::Phone, 100.0, 100.0, DistanceMode::BoxCenter),
            Masked::ABSENT
        );
        let bottle = DetectionBox::new("bottle", 0.0, 0.0, 10.0, 10.0, 0.9);
        assert_eq!(
            hand_object_distance(&s, &[bottle], ObjectKind::Phone, 100.0, 100.0, DistanceMode::BoxCenter),
            Masked::ABSENT
        );

        let far = DetectionBox::new("cell phone", 44.0, 62.0, 64.0, 82.0, 0.5); // center (0.54, 0.72), 0.9 away
        let near = DetectionBox::new("phone", 8.0, 14.0, 28.0, 34.0, 0.5); // center (0.18, 0.24), 0.3 away
        let d = hand_object_distance(&s, &[far, near.clone()], ObjectKind::Phone, 100.0, 100.0, DistanceMode::BoxCenter);
        assert!(close(d.value, 0.3));

        let edge = hand_object_distance(&s, &[near], ObjectKind::Phone, 100.0, 100.0, DistanceMode::NearestEdge);
        assert!(close(edge.value, libm::hypot(0.08, 0.14)));

        let no_hands = PoseSkeleton::new("f").with(Joint::Nose, 0.5, 0.5, 1.0);
        assert_eq!(
            hand_object_distance(&no_hands, &[phone], ObjectKind::Phone, 100.0, 100.0, DistanceMode::BoxCenter),
            Masked::ABSENT
        );
    }

    #[test]
    fn missing_everything_is_all_zeros() {
        let v = extract_pose_features(&PoseSkeleton::new("f"), &[], 1920.0, 1080.0, &PoseConfig::default());
        assert_eq!(v, PoseFeatureVector::ZERO);
    }

    #[test]
    fn components_concatenate_positionally() {
        let s = PoseSkeleton::new("f")
            .with(Joint::LeftWrist, 0.0, 0.0, 1.0)
            .with(Joint::Nose, 30.0, 40.0, 1.0)
            .with(Joint::Neck, 50.0, 50.0, 1.0)
            .with(Joint::LeftEye, 40.0, 60.0, 1.0)
            .with(Joint::RightEye, 60.0, 60.0, 1.0);
        let boxes = vec![DetectionBox::new("phone", 50.0, 70.0, 70.0, 90.0, 0.9)];
        let v = extract_pose_features(&s, &boxes, 100.0, 100.0, &PoseConfig::default());
        let want = [0.5, 90.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0];
        for (got, want) in v.values.iter().zip(want) {
            assert!(close(*got, want), "{v}");
        }
    }

    #[test]
    fn aliases() {
        let aliases = JointAliases::default();
        assert_eq!(aliases.resolve("LWrist"), Some(Joint::LeftWrist));
        assert_eq!(aliases.resolve("right_eye"), Some(Joint::RightEye));
        assert_eq!(aliases.resolve("REye"), Some(Joint::RightEye));
        assert_eq!(aliases.resolve("Nose"), Some(Joint::Nose));
        assert_eq!(aliases.resolve("tail"), None);
        assert!(ObjectKind::Phone.matches("Cell Phone"));
        assert!(!ObjectKind::Bottle.matches("cup"));
    }
}
