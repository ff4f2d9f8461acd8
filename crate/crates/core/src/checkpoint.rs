//! Single-file checkpoint container.
//!
//! ```text
//! magic   8 bytes   "BDIFCKPT"
//! hlen    u64 LE    length of the JSON header
//! header  hlen bytes JSON (format version, schema, schedule, configs, tensor table)
//! blobs   little-endian f32 tensors, concatenated in tensor-table order
//! ```
//! Tensor names are prefixed `model.` (live parameters) or `ema.` (shadow).

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::denoiser::{Denoiser, DenoiserConfig};
use crate::error::{Error, Result};
use crate::noise::NoiseSchedule;
use crate::schema::TableSchema;
use crate::trainer::TrainConfig;

pub const MAGIC: &[u8; 8] = b"BDIFCKPT";
pub const FORMAT_VERSION: u32 = 1;

/// Where the training rows came from, so evaluation can verify it uses the same split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataProvenance {
    pub source_sha256: String,
    pub split_seed: u64,
    pub train_fraction: String,
    pub train_split_sha256: String,
    pub test_split_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the blob section.
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    schema: TableSchema,
    schedule: NoiseSchedule,
    train_config: TrainConfig,
    model_config: DenoiserConfig,
    steps_completed: u64,
    provenance: Option<DataProvenance>,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub schema: TableSchema,
    pub schedule: NoiseSchedule,
    pub train_config: TrainConfig,
    pub model: Denoiser<f32>,
    pub ema: Denoiser<f32>,
    pub steps_completed: u64,
    pub provenance: Option<DataProvenance>,
}

impl Checkpoint {
    pub fn new(
        schema: TableSchema,
        schedule: NoiseSchedule,
        train_config: TrainConfig,
        model: Denoiser<f32>,
        ema: Denoiser<f32>,
        steps_completed: u64,
        provenance: Option<DataProvenance>,
    ) -> Self {
        Self {
            schema,
            schedule,
            train_config,
            model,
            ema,
            steps_completed,
            provenance,
        }
    }

    pub fn model_config(&self) -> DenoiserConfig {
        self.model.config
    }

    /// The network used for sampling.
    pub fn denoiser(&self, use_ema: bool) -> &Denoiser<f32> {
        if use_ema {
            &self.ema
        } else {
            &self.model
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut tensors = Vec::new();
        let mut blob = Vec::new();
        for (prefix, net) in [("model", &self.model), ("ema", &self.ema)] {
            for (name, shape, values) in net.named_tensors() {
                tensors.push(TensorEntry {
                    name: format!("{prefix}.{name}"),
                    shape,
                    offset: blob.len() as u64,
                });
                for v in values {
                    blob.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        let header = Header {
            format_version: FORMAT_VERSION,
            schema: self.schema.clone(),
            schedule: self.schedule,
            train_config: self.train_config.clone(),
            model_config: self.model.config,
            steps_completed: self.steps_completed,
            provenance: self.provenance.clone(),
            tensors,
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(16 + json.len() + blob.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&blob);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: String| Error::Checkpoint(m);
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file (bad magic)".into()));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let header_end = 16usize
            .checked_add(hlen)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| bad("truncated header".into()))?;
        let header: Header = serde_json::from_slice(&bytes[16..header_end])?;
        if header.format_version != FORMAT_VERSION {
            return Err(bad(format!("unsupported format version {}", header.format_version)));
        }
        header.schema.validate()?;
        header.model_config.validate()?;
        if header.model_config.data_dim != header.schema.total_bits
            || header.model_config.cond_dim != header.schema.cond_dim()
        {
            return Err(bad("model shape disagrees with schema".into()));
        }
        let blob = &bytes[header_end..];
        let mut entries = header.tensors.iter();
        let mut load = |prefix: &str| -> Result<Denoiser<f32>> {
            let mut net = Denoiser::<f32>::zeros(header.model_config);
            let expected: Vec<(String, Vec<usize>)> = net
                .named_tensors()
                .into_iter()
                .map(|(n, s, _)| (n, s))
                .collect();
            for ((name, shape), dst) in expected.into_iter().zip(net.param_slices_mut()) {
                let entry = entries
                    .next()
                    .ok_or_else(|| bad(format!("missing tensor {prefix}.{name}")))?;
                if entry.name != format!("{prefix}.{name}") || entry.shape != shape {
                    return Err(bad(format!(
                        "tensor {} {:?} where {prefix}.{name} {shape:?} expected",
                        entry.name, entry.shape
                    )));
                }
                let start = entry.offset as usize;
                let end = start + 4 * dst.len();
                let src = blob
                    .get(start..end)
                    .ok_or_else(|| bad(format!("tensor {} out of bounds", entry.name)))?;
                for (d, chunk) in dst.iter_mut().zip(src.chunks_exact(4)) {
                    *d = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
                }
            }
            Ok(net)
        };
        let model = load("model")?;
        let ema = load("ema")?;
        Ok(Self {
            schema: header.schema,
            schedule: header.schedule,
            train_config: header.train_config,
            model,
            ema,
            steps_completed: header.steps_completed,
            provenance: header.provenance,
        })
    }

    /// Writes to a temporary file next to `path`, then renames it into place.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<String> {
        let bytes = self.to_bytes()?;
        write_atomic(path.as_ref(), &bytes)?;
        Ok(sha256_hex(&bytes))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn sha256(&self) -> Result<String> {
        Ok(sha256_hex(&self.to_bytes()?))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Atomic replace: write a sibling temp file, fsync, rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}
