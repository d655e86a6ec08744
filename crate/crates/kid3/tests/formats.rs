use std::fs;

use kid3::backbone::{decode_plugin_output, Backbone};
use kid3::checkpoint::{Checkpoint, MAGIC};
use kid3::error::Error;
use kid3::formats::{read_by_frame, read_vocabulary, write_vocabulary, SceneGraphRecord};
use kid3::jsonl;
use kid3::store::{EmbeddingStore, DATA_FILE, INDEX_FILE};
use kid3_core::annotation::FrameSample;
use kid3_core::embedding::ImageEmbedding;
use kid3_core::fusion::{Kid3Model, MethodVariant, ModelConfig};
use kid3_core::graph::{Triplet, Vocabulary};
use kid3_core::{ActivityClass, MlpConfig, EMBEDDING_DIM};

fn embedding(id: &str, fill: f32) -> ImageEmbedding {
    ImageEmbedding { frame_id: id.into(), vector: (0..EMBEDDING_DIM).map(|i| fill + i as f32 * 1e-3).collect() }
}

fn frame(id: &str) -> FrameSample {
    FrameSample {
        frame_id: id.into(),
        video_id: "v".into(),
        timestamp_s: 0.0,
        image_ref: format!("v/{id}.jpg"),
        class_index: ActivityClass::from_index(1).unwrap(),
        height_px: 480,
        width_px: 640,
    }
}

#[test]
fn store_round_trip_and_lookup() {
    let dir = tempfile::tempdir().unwrap();
    let store = EmbeddingStore::from_embeddings(&[embedding("b", 2.0), embedding("a", -1.5)]).unwrap();
    store.write(dir.path()).unwrap();
    let back = EmbeddingStore::open(dir.path()).unwrap();
    assert_eq!(back.len(), 2);
    assert_eq!(back.frame_ids().collect::<Vec<_>>(), ["a", "b"]);
    assert_eq!(back.get("b").unwrap(), embedding("b", 2.0).vector.as_slice());
    assert!(back.get("c").is_none());
    let data = fs::read(dir.path().join(DATA_FILE)).unwrap();
    assert_eq!(data.len(), 2 * EMBEDDING_DIM * 4);
}

#[test]
fn store_rejects_bad_input() {
    let short = ImageEmbedding { frame_id: "x".into(), vector: vec![0.0; 10] };
    assert!(matches!(EmbeddingStore::from_embeddings(&[short]), Err(Error::EmbeddingWidth { actual: 10, .. })));
    assert!(matches!(
        EmbeddingStore::from_embeddings(&[embedding("x", 0.0), embedding("x", 1.0)]),
        Err(Error::DuplicateFrameId(_))
    ));

    let dir = tempfile::tempdir().unwrap();
    EmbeddingStore::from_embeddings(&[embedding("a", 0.0)]).unwrap().write(dir.path()).unwrap();
    let data = dir.path().join(DATA_FILE);
    let mut bytes = fs::read(&data).unwrap();
    bytes.pop();
    fs::write(&data, &bytes).unwrap();
    assert!(matches!(EmbeddingStore::open(dir.path()), Err(Error::Parse { .. })));
    fs::write(dir.path().join(INDEX_FILE), "{\"a\": 3}").unwrap();
    bytes.truncate(EMBEDDING_DIM * 4);
    fs::write(&data, &bytes).unwrap();
    assert!(matches!(EmbeddingStore::open(dir.path()), Err(Error::Parse { .. })));
}

#[test]
fn recorded_backbone_reports_missing_frames() {
    let store = EmbeddingStore::from_embeddings(&[embedding("a", 0.0)]).unwrap();
    let backbone = Backbone::Recorded(store);
    assert_eq!(backbone.embed(&frame("a")).unwrap().len(), EMBEDDING_DIM);
    assert!(matches!(backbone.embed(&frame("zz")), Err(Error::MissingEmbedding(id)) if id == "zz"));
}

#[test]
fn plugin_output_decoding() {
    assert_eq!(decode_plugin_output(b" [1, 2.5, -3]\n").unwrap(), vec![1.0, 2.5, -3.0]);
    let mut raw = 2u32.to_le_bytes().to_vec();
    raw.extend_from_slice(&0.5f32.to_le_bytes());
    raw.extend_from_slice(&(-2.0f32).to_le_bytes());
    assert_eq!(decode_plugin_output(&raw).unwrap(), vec![0.5, -2.0]);
    raw.pop();
    assert!(decode_plugin_output(&raw).is_err());
}

#[cfg(unix)]
#[test]
fn external_backbone_runs_a_program_per_frame() {
    let dir = tempfile::tempdir().unwrap();
    let script = format!("printf '['; for i in $(seq 1 {}); do printf '0.25,'; done; printf '0.25]'", EMBEDDING_DIM - 1);
    let ok = Backbone::external(&["sh".into(), "-c".into(), script, "plugin".into()], dir.path()).unwrap();
    let v = ok.embed(&frame("a")).unwrap();
    assert_eq!(v.len(), EMBEDDING_DIM);
    assert!(v.iter().all(|&x| x == 0.25));

    let failing = Backbone::external(&["sh".into(), "-c".into(), "exit 3".into()], dir.path()).unwrap();
    assert!(matches!(failing.embed(&frame("a")), Err(Error::PluginFailure { .. })));
    let short = Backbone::external(&["sh".into(), "-c".into(), "echo '[1,2]'".into()], dir.path()).unwrap();
    assert!(short.embed(&frame("a")).is_err());
    assert!(matches!(Backbone::external(&[], dir.path()), Err(Error::Config(_))));
}

#[test]
fn vocabulary_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let vocab = Vocabulary::build(["wheel", "cell phone", "man", "man"]);
    let path = dir.path().join("vocab.json");
    write_vocabulary(&path, &vocab).unwrap();
    let back = read_vocabulary(&path).unwrap();
    assert_eq!(back, vocab);
    assert_eq!(back.lookup("cell phone"), vocab.lookup("cell phone"));
    assert_eq!(back.lookup("never seen"), 0);
    fs::write(&path, r#"{"unk_index": 0, "labels": ["a", "a"]}"#).unwrap();
    assert!(read_vocabulary(&path).is_err());
}

#[test]
fn jsonl_errors_carry_line_numbers_and_duplicates_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.jsonl");
    let records = vec![
        SceneGraphRecord { frame_id: "a".into(), triplets: vec![Triplet::new("man", "holding", "cup")] },
        SceneGraphRecord { frame_id: "b".into(), triplets: vec![] },
    ];
    jsonl::write(&path, &records).unwrap();
    let map = read_by_frame(&path, |r: &SceneGraphRecord| &r.frame_id).unwrap();
    assert_eq!(map["a"], records[0]);

    let mut text = fs::read_to_string(&path).unwrap();
    text.push_str("\n{\"frame_id\": \"a\", \"triplets\": []}\n");
    fs::write(&path, &text).unwrap();
    assert!(matches!(read_by_frame(&path, |r: &SceneGraphRecord| &r.frame_id), Err(Error::DuplicateFrameId(id)) if id == "a"));

    fs::write(&path, "{\"frame_id\": \"a\", \"triplets\": []}\n{oops\n").unwrap();
    assert!(matches!(jsonl::read::<SceneGraphRecord>(&path), Err(Error::Parse { line: 2, .. })));
}

fn small_model(variant: MethodVariant) -> Kid3Model {
    let config = ModelConfig { image_dim: 5, graph_input_dim: 3, graph_encoding_dim: 4, mlp: MlpConfig { hidden: vec![6], ..Default::default() } };
    Kid3Model::new(variant, config, Vocabulary::build(["man", "cup"]), 42)
}

#[test]
fn checkpoint_round_trip_and_corruption() {
    let dir = tempfile::tempdir().unwrap();
    for variant in MethodVariant::ALL {
        let model = small_model(variant);
        let ckpt = Checkpoint::new(&model, "[train]\nepochs = 3\n");
        let path = dir.path().join("m.kid3ckpt");
        ckpt.write(&path).unwrap();
        let back = Checkpoint::read(&path).unwrap();
        assert_eq!(back.model, model.rounded_to_f32());
        assert_eq!(back.config_echo, "[train]\nepochs = 3\n");
        assert_eq!(back.to_bytes(), fs::read(&path).unwrap());
    }

    let bytes = Checkpoint::new(&small_model(MethodVariant::M3), "").to_bytes();
    assert_eq!(&bytes[..8], MAGIC);
    assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    let mut wrong_version = bytes.clone();
    wrong_version[8] = 99;
    assert!(Checkpoint::from_bytes(&wrong_version).unwrap_err().contains("version"));
    let mut trailing = bytes.clone();
    trailing.push(0);
    assert!(Checkpoint::from_bytes(&trailing).is_err());
    assert!(Checkpoint::from_bytes(b"NOTACKPT").is_err());

    let path = dir.path().join("bad.kid3ckpt");
    fs::write(&path, b"garbage").unwrap();
    assert!(matches!(Checkpoint::read(&path), Err(Error::Checkpoint { .. })));
}
