//! Sources of image embeddings.

use std::path::{Path, PathBuf};
use std::process::Command;

use kid3_core::annotation::FrameSample;
use kid3_core::embedding::synthetic_embedding;
use kid3_core::EMBEDDING_DIM;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::EmbeddingStore;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackboneKind {
    /// Precomputed vectors read from an embedding store.
    #[default]
    Recorded,
    /// Deterministic pseudo-random vectors keyed by frame id; for testing.
    Synthetic,
    /// An external program invoked once per frame with the image path as its
    /// last argument. It prints either a JSON array of 4096 numbers, or a
    /// little-endian `u32` count followed by that many `f32`.
    External,
}

pub enum Backbone {
    Recorded(EmbeddingStore),
    Synthetic { seed: u64 },
    External { program: String, args: Vec<String>, frames_dir: PathBuf },
}

impl Backbone {
    pub fn recorded(dir: &Path) -> Result<Self> {
        Ok(Backbone::Recorded(EmbeddingStore::open(dir)?))
    }

    pub fn external(command: &[String], frames_dir: &Path) -> Result<Self> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| Error::Config("external backbone needs a command".into()))?;
        Ok(Backbone::External {
            program: program.clone(),
            args: args.to_vec(),
            frames_dir: frames_dir.to_path_buf(),
        })
    }

    /// The 4096-d embedding of one sampled frame.
    pub fn embed(&self, frame: &FrameSample) -> Result<Vec<f32>> {
        match self {
            Backbone::Recorded(store) => store
                .get(&frame.frame_id)
                .map(<[f32]>::to_vec)
                .ok_or_else(|| Error::MissingEmbedding(frame.frame_id.clone())),
            Backbone::Synthetic { seed } => Ok(synthetic_embedding(&frame.frame_id, *seed).vector),
            Backbone::External { program, args, frames_dir } => {
                let fail = |message: String| Error::PluginFailure { frame_id: frame.frame_id.clone(), message };
                let output = Command::new(program)
                    .args(args)
                    .arg(frames_dir.join(&frame.image_ref))
                    .output()
                    .map_err(|e| fail(format!("cannot run {program}: {e}")))?;
                if !output.status.success() {
                    let stderr = String::from_utf8_lossy(&output.stderr);
                    return Err(fail(format!("{program} exited with {}: {}", output.status, stderr.trim())));
                }
                let vector = decode_plugin_output(&output.stdout).map_err(fail)?;
                if vector.len() != EMBEDDING_DIM {
                    return Err(Error::EmbeddingWidth {
                        frame_id: frame.frame_id.clone(),
                        expected: EMBEDDING_DIM,
                        actual: vector.len(),
                    });
                }
                Ok(vector)
            }
        }
    }
}

pub fn decode_plugin_output(bytes: &[u8]) -> Result<Vec<f32>, String> {
    let text_start = bytes.iter().position(|b| !b.is_ascii_whitespace());
    if text_start.is_some_and(|i| bytes[i] == b'[') {
        let values: Vec<f64> = serde_json::from_slice(bytes).map_err(|e| format!("bad JSON output: {e}"))?;
        return Ok(values.into_iter().map(|v| v as f32).collect());
    }
    let (head, body) = bytes.split_first_chunk::<4>().ok_or("output shorter than its length prefix")?;
    let n = u32::from_le_bytes(*head) as usize;
    if body.len() != n * 4 {
        return Err(format!("length prefix says {n} floats but {} bytes follow", body.len()));
    }
    Ok(body.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
}
