//! Binary model checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "KID3CKPT"  u32 version  u32 section_count
//! per section: u32 name_len  name (UTF-8)  u64 payload_len  payload
//! ```
//!
//! Sections, in this order: `meta` (JSON: variant, seed, model widths),
//! `config` (TOML echo of the run, may be empty), `vocabulary` (JSON), then
//! one `tensor:<name>` per trainable tensor holding `u32 rows, u32 cols` and
//! `rows * cols` f32 values in row-major order.

use std::fs;
use std::path::Path;

use kid3_core::fusion::{Kid3Model, MethodVariant, ModelConfig};
use kid3_core::linalg::Matrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formats::{parse_vocabulary, vocabulary_json};

pub const MAGIC: &[u8; 8] = b"KID3CKPT";
pub const VERSION: u32 = 1;
const TENSOR_PREFIX: &str = "tensor:";

#[derive(Serialize, Deserialize)]
struct Meta {
    variant: MethodVariant,
    seed: u64,
    model: ModelConfig,
}

/// A model as stored on disk, plus the config echo of the run that made it.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    /// Parameters are exactly representable in f32.
    pub model: Kid3Model,
    pub config_echo: String,
}

impl Checkpoint {
    pub fn new(model: &Kid3Model, config_echo: impl Into<String>) -> Self {
        Self { model: model.rounded_to_f32(), config_echo: config_echo.into() }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let m = &self.model;
        let meta = Meta { variant: m.variant, seed: m.seed, model: m.config.clone() };
        let mut sections: Vec<(String, Vec<u8>)> = vec![
            ("meta".into(), serde_json::to_vec(&meta).expect("meta serializes")),
            ("config".into(), self.config_echo.clone().into_bytes()),
            ("vocabulary".into(), vocabulary_json(&m.vocabulary).into_bytes()),
        ];
        for t in m.trainable_parameters() {
            let mut payload = Vec::with_capacity(8 + 4 * t.tensor.as_slice().len());
            payload.extend_from_slice(&(t.tensor.rows() as u32).to_le_bytes());
            payload.extend_from_slice(&(t.tensor.cols() as u32).to_le_bytes());
            for &v in t.tensor.as_slice() {
                payload.extend_from_slice(&(v as f32).to_le_bytes());
            }
            sections.push((format!("{TENSOR_PREFIX}{}", t.name), payload));
        }

        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(sections.len() as u32).to_le_bytes());
        for (name, payload) in &sections {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
            out.extend_from_slice(payload);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err("not a checkpoint file".into());
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(format!("unsupported version {version}, expected {VERSION}"));
        }
        let count = r.u32()?;
        let mut sections = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?).map_err(|_| "section name is not UTF-8")?;
            let len = usize::try_from(r.u64()?).map_err(|_| "section too large")?;
            sections.push((name.to_string(), r.take(len)?));
        }
        if r.pos != bytes.len() {
            return Err(format!("{} trailing bytes", bytes.len() - r.pos));
        }
        let section = |name: &str| {
            sections.iter().find(|(n, _)| n == name).map(|(_, p)| *p).ok_or(format!("missing section {name:?}"))
        };

        let meta: Meta = serde_json::from_slice(section("meta")?).map_err(|e| format!("meta: {e}"))?;
        let config_echo = String::from_utf8(section("config")?.to_vec()).map_err(|_| "config is not UTF-8")?;
        let vocab_text = std::str::from_utf8(section("vocabulary")?).map_err(|_| "vocabulary is not UTF-8")?;
        let vocabulary = parse_vocabulary(vocab_text).map_err(|e| format!("vocabulary: {e}"))?;

        let mut model = Kid3Model::new(meta.variant, meta.model, vocabulary, meta.seed);
        let expected = model.trainable_parameters().len();
        let stored = sections.iter().filter(|(n, _)| n.starts_with(TENSOR_PREFIX)).count();
        if stored != expected {
            return Err(format!("{stored} tensors stored, model has {expected}"));
        }
        for (name, tensor) in model.trainable_parameters_mut() {
            let payload = section(&format!("{TENSOR_PREFIX}{name}"))?;
            *tensor = decode_tensor(payload, tensor.shape()).map_err(|e| format!("{name}: {e}"))?;
        }
        Ok(Self { model, config_echo })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(Error::unwritable(path))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(Error::io(path))?;
        Self::from_bytes(&bytes).map_err(|message| Error::Checkpoint { path: path.to_path_buf(), message })
    }
}

fn decode_tensor(payload: &[u8], shape: (usize, usize)) -> std::result::Result<Matrix, String> {
    let mut r = Reader { bytes: payload, pos: 0 };
    let (rows, cols) = (r.u32()? as usize, r.u32()? as usize);
    if (rows, cols) != shape {
        return Err(format!("shape {rows}x{cols}, expected {}x{}", shape.0, shape.1));
    }
    let raw = r.take(rows * cols * 4)?;
    if r.pos != payload.len() {
        return Err("payload size does not match shape".into());
    }
    let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect();
    Ok(Matrix::from_vec(rows, cols, data))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or("truncated file")?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
