//! On-disk embedding store: `index.json` maps frame ids to row numbers and
//! `embeddings.f32` holds the rows as little-endian `f32`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use kid3_core::embedding::ImageEmbedding;
use kid3_core::EMBEDDING_DIM;

use crate::error::{Error, Result};

pub const INDEX_FILE: &str = "index.json";
pub const DATA_FILE: &str = "embeddings.f32";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EmbeddingStore {
    index: BTreeMap<String, usize>,
    data: Vec<f32>,
}

impl EmbeddingStore {
    /// Builds a store, keeping the input order as the row order.
    pub fn from_embeddings(embeddings: &[ImageEmbedding]) -> Result<Self> {
        let mut index = BTreeMap::new();
        let mut data = Vec::with_capacity(embeddings.len() * EMBEDDING_DIM);
        for (row, e) in embeddings.iter().enumerate() {
            if e.vector.len() != EMBEDDING_DIM {
                return Err(Error::EmbeddingWidth {
                    frame_id: e.frame_id.clone(),
                    expected: EMBEDDING_DIM,
                    actual: e.vector.len(),
                });
            }
            if index.insert(e.frame_id.clone(), row).is_some() {
                return Err(Error::DuplicateFrameId(e.frame_id.clone()));
            }
            data.extend_from_slice(&e.vector);
        }
        Ok(Self { index, data })
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn get(&self, frame_id: &str) -> Option<&[f32]> {
        let row = *self.index.get(frame_id)?;
        Some(&self.data[row * EMBEDDING_DIM..(row + 1) * EMBEDDING_DIM])
    }

    pub fn frame_ids(&self) -> impl Iterator<Item = &str> {
        self.index.keys().map(String::as_str)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(Error::unwritable(dir))?;
        let index_path = dir.join(INDEX_FILE);
        let json = serde_json::to_string_pretty(&self.index).expect("string keys always serialize");
        fs::write(&index_path, json + "\n").map_err(Error::unwritable(&index_path))?;
        let mut bytes = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let data_path = dir.join(DATA_FILE);
        fs::write(&data_path, bytes).map_err(Error::unwritable(&data_path))
    }

    pub fn open(dir: &Path) -> Result<Self> {
        let index_path = dir.join(INDEX_FILE);
        let text = fs::read_to_string(&index_path).map_err(Error::io(&index_path))?;
        let index: BTreeMap<String, usize> = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: index_path.clone(),
            line: e.line(),
            message: e.to_string(),
        })?;
        let data_path = dir.join(DATA_FILE);
        let bytes = fs::read(&data_path).map_err(Error::io(&data_path))?;
        let row_bytes = EMBEDDING_DIM * 4;
        if bytes.len() % row_bytes != 0 {
            return Err(Error::Parse {
                path: data_path,
                line: 0,
                message: format!("{} bytes is not a whole number of {EMBEDDING_DIM}-float rows", bytes.len()),
            });
        }
        let rows = bytes.len() / row_bytes;
        if let Some((id, &row)) = index.iter().find(|(_, &row)| row >= rows) {
            return Err(Error::Parse {
                path: index_path,
                line: 0,
                message: format!("frame {id} points at row {row}, but the data file has {rows} rows"),
            });
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Self { index, data })
    }
}
