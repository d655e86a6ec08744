//! Joins manifests with per-frame features and produces training examples.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use kid3_core::annotation::{DatasetManifest, FrameSample, Split};
use kid3_core::fusion::{Branch, MethodVariant};
use kid3_core::graph::{IndexedGraph, SceneGraph, Vocabulary};
use kid3_core::pose::{extract_pose_features, JointAliases, PoseFeatureVector};
use kid3_core::taxonomy::ActivityClass;
use kid3_core::train::Example;

use crate::backbone::{Backbone, BackboneKind};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::formats::{read_by_frame, DetectionRecord, PoseRecord, SceneGraphRecord};
use crate::fixture::Fixture;
use crate::ingest::read_manifest;
use crate::store::EmbeddingStore;

/// Both splits with the features of every branch that was loaded.
pub struct Dataset {
    pub train: DatasetManifest,
    pub test: DatasetManifest,
    images: BTreeMap<String, Arc<[f32]>>,
    graphs: BTreeMap<String, SceneGraph>,
    poses: BTreeMap<String, PoseFeatureVector>,
}

fn needs(variants: &[MethodVariant], branch: Branch) -> bool {
    variants.iter().any(|v| v.includes(branch))
}

impl Dataset {
    /// Reads the manifests and the feature files the given variants need.
    pub fn load(config: &ExperimentConfig, variants: &[MethodVariant]) -> Result<Self> {
        let d = &config.data;
        let train = read_manifest(&d.train_manifest, Split::Train, d.sampling_interval_frames)?;
        let test = read_manifest(&d.test_manifest, Split::Test, d.sampling_interval_frames)?;
        let mut sources = Sources::default();
        if needs(variants, Branch::Image) {
            sources.backbone = Some(match d.backbone {
                BackboneKind::Recorded => Backbone::recorded(&d.embeddings)?,
                BackboneKind::Synthetic => Backbone::Synthetic { seed: d.synthetic_seed },
                BackboneKind::External => Backbone::external(&d.backbone_command, &d.frames_dir)?,
            });
        }
        if needs(variants, Branch::Graph) {
            require(&d.scene_graphs, &train, Branch::Graph)?;
            sources.scene_graphs = Some(read_by_frame(&d.scene_graphs, |r: &SceneGraphRecord| &r.frame_id)?);
        }
        if needs(variants, Branch::Pose) {
            require(&d.poses, &train, Branch::Pose)?;
            require(&d.detections, &train, Branch::Pose)?;
            sources.poses = Some(read_by_frame(&d.poses, |r: &PoseRecord| &r.frame_id)?);
            sources.detections = Some(read_by_frame(&d.detections, |r: &DetectionRecord| &r.frame_id)?);
        }
        Self::assemble(config, train, test, sources)
    }

    /// The in-memory equivalent of writing `fixture` to disk and loading it
    /// with a config pointing there.
    pub fn from_fixture(fixture: &Fixture, config: &ExperimentConfig) -> Result<Self> {
        let store = EmbeddingStore::from_embeddings(&fixture.embeddings)?;
        let sources = Sources {
            backbone: Some(Backbone::Recorded(store)),
            scene_graphs: Some(index(&fixture.scene_graphs, |r| &r.frame_id)?),
            poses: Some(index(&fixture.poses, |r| &r.frame_id)?),
            detections: Some(index(&fixture.detections, |r| &r.frame_id)?),
        };
        Self::assemble(config, fixture.train.clone(), fixture.test.clone(), sources)
    }

    fn assemble(config: &ExperimentConfig, train: DatasetManifest, test: DatasetManifest, sources: Sources) -> Result<Self> {
        let frames: Vec<&FrameSample> = train.samples().iter().chain(test.samples()).collect();

        let mut images = BTreeMap::new();
        if let Some(backbone) = &sources.backbone {
            for f in &frames {
                images.insert(f.frame_id.clone(), Arc::from(backbone.embed(f)?));
            }
        }

        let mut graphs = BTreeMap::new();
        if let Some(records) = &sources.scene_graphs {
            for f in &frames {
                let record = records.get(&f.frame_id).ok_or_else(|| missing(f, Branch::Graph))?;
                let graph = SceneGraph::from_triplets_min_score(&record.triplets, config.min_score());
                graphs.insert(f.frame_id.clone(), graph);
            }
        }

        let mut poses = BTreeMap::new();
        if let (Some(skeletons), Some(detections)) = (&sources.poses, &sources.detections) {
            let aliases = JointAliases::default();
            let pose_config = config.pose_config();
            for f in &frames {
                let (Some(skeleton), Some(boxes)) = (skeletons.get(&f.frame_id), detections.get(&f.frame_id)) else {
                    return Err(missing(f, Branch::Pose));
                };
                let features = extract_pose_features(
                    &skeleton.to_skeleton(&aliases),
                    &boxes.boxes,
                    f.width_px as f64,
                    f.height_px as f64,
                    &pose_config,
                );
                poses.insert(f.frame_id.clone(), features);
            }
        }

        Ok(Self { train, test, images, graphs, poses })
    }

    pub fn manifest(&self, split: Split) -> &DatasetManifest {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
        }
    }

    /// Graph-branch vocabulary: the node labels of the training split.
    pub fn vocabulary(&self) -> Vocabulary {
        let train = &self.graphs;
        Vocabulary::from_graphs(self.train.samples().iter().filter_map(|f| train.get(&f.frame_id)))
    }

    /// Examples carrying exactly the branches of `variant`.
    pub fn examples(&self, split: Split, variant: MethodVariant, vocab: &Vocabulary) -> Result<Vec<Example>> {
        self.manifest(split)
            .samples()
            .iter()
            .map(|f| {
                let lookup = |branch: Branch| -> Result<bool> {
                    let loaded = match branch {
                        Branch::Image => self.images.contains_key(&f.frame_id),
                        Branch::Graph => self.graphs.contains_key(&f.frame_id),
                        Branch::Pose => self.poses.contains_key(&f.frame_id),
                    };
                    match (variant.includes(branch), loaded) {
                        (false, _) => Ok(false),
                        (true, true) => Ok(true),
                        (true, false) => Err(missing(f, branch)),
                    }
                };
                Ok(Example {
                    frame_id: f.frame_id.clone(),
                    image: if lookup(Branch::Image)? { Some(self.images[&f.frame_id].clone()) } else { None },
                    graph: if lookup(Branch::Graph)? {
                        Some(IndexedGraph::new(&self.graphs[&f.frame_id], vocab))
                    } else {
                        None
                    },
                    pose: if lookup(Branch::Pose)? { Some(self.poses[&f.frame_id]) } else { None },
                    label: f.class_index,
                })
            })
            .collect()
    }
}

impl Dataset {
    /// Model-free feature vectors of one branch with their labels: the raw
    /// embedding, a bag of node labels over `vocab`, or the pose features.
    pub fn branch_features(
        &self,
        split: Split,
        branch: Branch,
        vocab: &Vocabulary,
    ) -> Result<Vec<(Vec<f64>, ActivityClass)>> {
        self.manifest(split)
            .samples()
            .iter()
            .map(|f| {
                let id = &f.frame_id;
                let features = match branch {
                    Branch::Image => self.images.get(id).map(|e| e.iter().map(|&v| v as f64).collect()),
                    Branch::Graph => self.graphs.get(id).map(|g| {
                        let mut bag = vec![0.0; vocab.len()];
                        for label in g.node_labels() {
                            bag[vocab.lookup(label)] += 1.0;
                        }
                        bag
                    }),
                    Branch::Pose => self.poses.get(id).map(|p| p.values.to_vec()),
                };
                Ok((features.ok_or_else(|| missing(f, branch))?, f.class_index))
            })
            .collect()
    }
}

#[derive(Default)]
struct Sources {
    backbone: Option<Backbone>,
    scene_graphs: Option<BTreeMap<String, SceneGraphRecord>>,
    poses: Option<BTreeMap<String, PoseRecord>>,
    detections: Option<BTreeMap<String, DetectionRecord>>,
}

fn index<T: Clone>(records: &[T], frame_id: impl Fn(&T) -> &str) -> Result<BTreeMap<String, T>> {
    let mut out = BTreeMap::new();
    for r in records {
        if out.insert(frame_id(r).to_string(), r.clone()).is_some() {
            return Err(Error::DuplicateFrameId(frame_id(r).to_string()));
        }
    }
    Ok(out)
}

/// An absent feature file leaves every frame uncovered; report the first.
fn require(path: &Path, manifest: &DatasetManifest, branch: Branch) -> Result<()> {
    match manifest.samples().first() {
        Some(f) if !path.exists() => Err(missing(f, branch)),
        _ => Ok(()),
    }
}

fn missing(frame: &FrameSample, branch: Branch) -> Error {
    Error::MissingFeature { frame_id: frame.frame_id.clone(), branch }
}
