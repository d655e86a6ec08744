use std::path::Path;

use kid3::config::ExperimentConfig;
use kid3::error::Error;
use kid3_core::fusion::MethodVariant;
use kid3_core::optim::OptimizerKind;

fn config_error(result: Result<(), Error>) -> String {
    match result {
        Err(e @ Error::Config(_)) => {
            assert_eq!(e.exit_code(), 2);
            e.to_string()
        }
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn qualified_and_bare_overrides() {
    let mut c = ExperimentConfig::default();
    c.apply_override("train.learning_rate=0.01").unwrap();
    c.apply_override("epochs = 4").unwrap();
    c.apply_override("optimizer=sgd").unwrap();
    c.apply_override("experiment.methods=[\"M1\", \"M3\"]").unwrap();
    c.apply_override("hidden=[64, 32]").unwrap();
    c.apply_override("data.frames_dir=/tmp/frames").unwrap();
    assert_eq!(c.train.learning_rate, 0.01);
    assert_eq!(c.train.epochs, 4);
    assert_eq!(c.train.optimizer, OptimizerKind::Sgd);
    assert_eq!(c.experiment.methods, [MethodVariant::M1, MethodVariant::M3]);
    assert_eq!(c.model.hidden, [64, 32]);
    assert_eq!(c.data.frames_dir, Path::new("/tmp/frames"));
    assert!(c.to_toml().contains("learning_rate = 0.01"));
}

#[test]
fn bad_overrides_are_config_errors() {
    let mut c = ExperimentConfig::default();
    assert!(config_error(c.apply_override("train.lerning_rate=1")).contains("unknown"));
    assert!(config_error(c.apply_override("nosuchkey=1")).contains("unknown"));
    assert!(config_error(c.apply_override("nosection.epochs=1")).contains("unknown"));
    assert!(config_error(c.apply_override("epochs=many")).contains("epochs"));
    config_error(c.apply_override("epochs"));
    assert_eq!(c, ExperimentConfig::default());
}

#[test]
fn toml_round_trip_and_unknown_fields() {
    let mut c = ExperimentConfig::default();
    c.apply_override("fixture.n_train=90").unwrap();
    c.apply_override("scene_graph.min_score=0.25").unwrap();
    assert_eq!(ExperimentConfig::from_toml(&c.to_toml()).unwrap(), c);
    assert_eq!(c.min_score(), Some(0.25));
    assert_eq!(ExperimentConfig::default().min_score(), None);
    assert!(matches!(ExperimentConfig::from_toml("[train]\nepoch = 3\n"), Err(Error::Config(_))));
    let partial = ExperimentConfig::from_toml("[train]\nepochs = 3\n").unwrap();
    assert_eq!(partial.train.epochs, 3);
    assert_eq!(partial.model, ExperimentConfig::default().model);
}

#[test]
fn load_resolves_paths_against_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exp.toml");
    std::fs::write(&path, "[data]\nannotations = \"raw/labels.csv\"\nvideos = \"/abs/videos.csv\"\n").unwrap();
    let c = ExperimentConfig::load(&path).unwrap();
    assert_eq!(c.data.annotations, dir.path().join("raw/labels.csv"));
    assert_eq!(c.data.videos, Path::new("/abs/videos.csv"));
    assert_eq!(c.data.poses, dir.path().join("poses.jsonl"));
    assert!(matches!(ExperimentConfig::load(&dir.path().join("missing.toml")), Err(Error::Io { .. })));
}

#[test]
fn validation() {
    ExperimentConfig::default().validate().unwrap();
    for bad in [
        "experiment.seeds=[]",
        "experiment.methods=[]",
        "train.epochs=0",
        "train.batch_size=0",
        "train.learning_rate=0.0",
        "train.learning_rate=-1.0",
        "train.momentum=1.0",
        "scene_graph.encoding_dim=0",
        "data.sampling_interval_frames=0",
    ] {
        let mut c = ExperimentConfig::default();
        c.apply_override(bad).unwrap();
        config_error(c.validate());
    }
}
