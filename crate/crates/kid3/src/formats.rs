//! Per-frame record formats for scene graphs, poses and detections.
//!
//! Each file is JSON Lines, one object per sampled frame keyed by `frame_id`.

use std::collections::BTreeMap;
use std::path::Path;

use kid3_core::graph::{Triplet, Vocabulary};
use kid3_core::pose::{DetectionBox, JointAliases, PoseSkeleton};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneGraphRecord {
    pub frame_id: String,
    pub triplets: Vec<Triplet>,
}

/// Keypoints as `name -> [x_px, y_px, confidence]`. Names are resolved
/// through [`JointAliases`]; unrecognised names are ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub frame_id: String,
    pub keypoints: BTreeMap<String, [f64; 3]>,
}

impl PoseRecord {
    pub fn from_skeleton(skeleton: &PoseSkeleton) -> Self {
        let keypoints = skeleton
            .keypoints
            .iter()
            .map(|(joint, k)| (joint.name().to_string(), [k.x, k.y, k.confidence]))
            .collect();
        Self { frame_id: skeleton.frame_id.clone(), keypoints }
    }

    pub fn to_skeleton(&self, aliases: &JointAliases) -> PoseSkeleton {
        let mut skeleton = PoseSkeleton::new(&self.frame_id);
        for (name, [x, y, c]) in &self.keypoints {
            if let Some(joint) = aliases.resolve(name) {
                skeleton = skeleton.with(joint, *x, *y, *c);
            }
        }
        skeleton
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub frame_id: String,
    pub boxes: Vec<DetectionBox>,
}

/// Reads a per-frame file into a map, rejecting repeated frame ids.
pub fn read_by_frame<T, F>(path: &Path, frame_id: F) -> Result<BTreeMap<String, T>>
where
    T: serde::de::DeserializeOwned,
    F: Fn(&T) -> &str,
{
    let mut out = BTreeMap::new();
    for record in jsonl::read::<T>(path)? {
        let id = frame_id(&record).to_string();
        if out.contains_key(&id) {
            return Err(Error::DuplicateFrameId(id));
        }
        out.insert(id, record);
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct VocabularyFile {
    unk_index: usize,
    labels: Vec<String>,
}

/// Writes the vocabulary as `{"unk_index": 0, "labels": [...]}`, where
/// `labels[i]` is the label with index `i + 1`.
pub fn write_vocabulary(path: &Path, vocab: &Vocabulary) -> Result<()> {
    let json = vocabulary_json(vocab);
    std::fs::write(path, json + "\n").map_err(Error::unwritable(path))
}

pub fn vocabulary_json(vocab: &Vocabulary) -> String {
    let file = VocabularyFile {
        unk_index: Vocabulary::UNK_INDEX,
        labels: vocab.entries().map(|(l, _)| l.to_string()).collect(),
    };
    serde_json::to_string_pretty(&file).expect("vocabulary serializes")
}

pub fn parse_vocabulary(text: &str) -> std::result::Result<Vocabulary, String> {
    let file: VocabularyFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
    if file.unk_index != Vocabulary::UNK_INDEX {
        return Err(format!("unk_index must be {}", Vocabulary::UNK_INDEX));
    }
    Vocabulary::from_ordered(file.labels)
}

pub fn read_vocabulary(path: &Path) -> Result<Vocabulary> {
    let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
    parse_vocabulary(&text).map_err(|message| Error::Parse { path: path.to_path_buf(), line: 0, message })
}
