//! Experiment configuration: TOML file, `--set section.key=value` overrides,
//! and the resolved echo written next to every run's outputs.

use std::path::{Path, PathBuf};

use kid3_core::annotation::DEFAULT_INTERVAL_FRAMES;
use kid3_core::fusion::{Activation, MethodVariant, MlpConfig, ModelConfig};
use kid3_core::graph::{DEFAULT_ENCODING_DIM, DEFAULT_INPUT_DIM};
use kid3_core::optim::OptimizerKind;
use kid3_core::pose::{DistanceMode, PoseConfig};
use kid3_core::train::TrainConfig;
use kid3_core::EMBEDDING_DIM;
use serde::{Deserialize, Serialize};

use crate::backbone::BackboneKind;
use crate::error::{Error, Result};
use crate::fixture::{FixtureConfig, FixtureLayout};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub annotations: PathBuf,
    pub videos: PathBuf,
    pub train_manifest: PathBuf,
    pub test_manifest: PathBuf,
    pub sampling_interval_frames: u32,
    pub backbone: BackboneKind,
    /// Embedding store directory, for the recorded backbone.
    pub embeddings: PathBuf,
    /// Program and arguments, for the external backbone.
    pub backbone_command: Vec<String>,
    /// Root that manifest `image_ref`s are relative to.
    pub frames_dir: PathBuf,
    /// Seed of the synthetic backbone.
    pub synthetic_seed: u64,
    pub scene_graphs: PathBuf,
    pub poses: PathBuf,
    pub detections: PathBuf,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            annotations: "annotations.csv".into(),
            videos: "videos.csv".into(),
            train_manifest: "train.jsonl".into(),
            test_manifest: "test.jsonl".into(),
            sampling_interval_frames: DEFAULT_INTERVAL_FRAMES,
            backbone: BackboneKind::Recorded,
            embeddings: "embeddings".into(),
            backbone_command: Vec::new(),
            frames_dir: "frames".into(),
            synthetic_seed: 0,
            scene_graphs: "scene_graphs.jsonl".into(),
            poses: "poses.jsonl".into(),
            detections: "detections.jsonl".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneGraphConfig {
    pub input_dim: usize,
    pub encoding_dim: usize,
    /// Triplets scoring below this are dropped. 0 keeps everything.
    pub min_score: f64,
}

impl Default for SceneGraphConfig {
    fn default() -> Self {
        Self { input_dim: DEFAULT_INPUT_DIM, encoding_dim: DEFAULT_ENCODING_DIM, min_score: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoseSection {
    pub confidence_threshold: f64,
    pub distance_mode: DistanceMode,
}

impl Default for PoseSection {
    fn default() -> Self {
        let d = PoseConfig::default();
        Self { confidence_threshold: d.confidence_threshold, distance_mode: d.distance_mode }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for ModelSection {
    fn default() -> Self {
        let d = MlpConfig::default();
        Self { hidden: d.hidden, activation: d.activation }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub momentum: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            epochs: d.epochs,
            batch_size: d.batch_size,
            learning_rate: d.learning_rate,
            optimizer: d.optimizer,
            momentum: d.momentum,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub methods: Vec<MethodVariant>,
    pub seeds: Vec<u64>,
    /// Train the (method, seed) runs on a thread pool.
    pub parallel: bool,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self { methods: MethodVariant::ALL.to_vec(), seeds: (1..=5).collect(), parallel: true }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub scene_graph: SceneGraphConfig,
    pub pose: PoseSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub experiment: ExperimentSection,
    pub fixture: FixtureConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Loads a config file and resolves its relative data paths against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
        let mut config = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.data.resolve(base);
        Ok(config)
    }

    /// A config whose data paths are the fixture files under `dir`.
    pub fn for_fixture_dir(dir: &Path) -> Self {
        let mut config = Self::default();
        let d = &mut config.data;
        d.annotations = dir.join(FixtureLayout::ANNOTATIONS);
        d.videos = dir.join(FixtureLayout::VIDEOS);
        d.train_manifest = dir.join(FixtureLayout::TRAIN_MANIFEST);
        d.test_manifest = dir.join(FixtureLayout::TEST_MANIFEST);
        d.embeddings = dir.join(FixtureLayout::EMBEDDINGS);
        d.frames_dir = dir.join(FixtureLayout::FRAMES);
        d.scene_graphs = dir.join(FixtureLayout::SCENE_GRAPHS);
        d.poses = dir.join(FixtureLayout::POSES);
        d.detections = dir.join(FixtureLayout::DETECTIONS);
        config
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    /// Applies a `key=value` override. `key` is `section.field`, or a bare
    /// field name when exactly one section has it. `value` is read as a TOML
    /// value, falling back to a plain string.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
        let key = key.trim();
        let raw = raw.trim();
        let mut table = toml::Table::try_from(&*self).expect("config serializes to a table");
        let (section, field) = match key.split_once('.') {
            Some((s, f)) => (s.to_string(), f.to_string()),
            None => {
                let owners: Vec<&String> = table
                    .iter()
                    .filter(|(_, v)| v.as_table().is_some_and(|t| t.contains_key(key)))
                    .map(|(s, _)| s)
                    .collect();
                match owners.as_slice() {
                    [one] => ((*one).clone(), key.to_string()),
                    [] => return Err(Error::Config(format!("unknown config key {key:?}"))),
                    _ => return Err(Error::Config(format!("ambiguous config key {key:?}, qualify it with a section"))),
                }
            }
        };
        let slot = table
            .get_mut(&section)
            .and_then(toml::Value::as_table_mut)
            .filter(|t| t.contains_key(&field))
            .ok_or_else(|| Error::Config(format!("unknown config key {key:?}")))?;
        let value = parse_value(raw);
        slot.insert(field, value);
        let updated: Self = table.try_into().map_err(|e: toml::de::Error| {
            Error::Config(format!("bad value for {key}: {}", e.message()))
        })?;
        *self = updated;
        Ok(())
    }

    /// Checks the invariants training and the harness rely on.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.experiment.seeds.is_empty() {
            return fail("experiment.seeds must list at least one seed");
        }
        if self.experiment.methods.is_empty() {
            return fail("experiment.methods must list at least one method");
        }
        if self.train.epochs == 0 {
            return fail("train.epochs must be at least 1");
        }
        if self.train.batch_size == 0 {
            return fail("train.batch_size must be at least 1");
        }
        if !(self.train.learning_rate > 0.0 && self.train.learning_rate.is_finite()) {
            return fail("train.learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.train.momentum) {
            return fail("train.momentum must be in [0, 1)");
        }
        if self.scene_graph.input_dim == 0 || self.scene_graph.encoding_dim == 0 {
            return fail("scene_graph widths must be positive");
        }
        if self.data.sampling_interval_frames == 0 {
            return fail("data.sampling_interval_frames must be at least 1");
        }
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            image_dim: EMBEDDING_DIM,
            graph_input_dim: self.scene_graph.input_dim,
            graph_encoding_dim: self.scene_graph.encoding_dim,
            mlp: MlpConfig { hidden: self.model.hidden.clone(), activation: self.model.activation },
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            learning_rate: self.train.learning_rate,
            optimizer: self.train.optimizer,
            momentum: self.train.momentum,
        }
    }

    pub fn pose_config(&self) -> PoseConfig {
        PoseConfig {
            confidence_threshold: self.pose.confidence_threshold,
            distance_mode: self.pose.distance_mode,
        }
    }

    pub fn min_score(&self) -> Option<f64> {
        (self.scene_graph.min_score > 0.0).then_some(self.scene_graph.min_score)
    }
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

impl DataConfig {
    fn resolve(&mut self, base: &Path) {
        for p in [
            &mut self.annotations,
            &mut self.videos,
            &mut self.train_manifest,
            &mut self.test_manifest,
            &mut self.embeddings,
            &mut self.frames_dir,
            &mut self.scene_graphs,
            &mut self.poses,
            &mut self.detections,
        ] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}
