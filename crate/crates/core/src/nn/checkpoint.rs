//! Binary model file.
//!
//! Layout (little-endian): magic `DCMD`, version u16, u32 length + JSON with
//! the model config and channel selection, u32 length + `DCNS` norm stats
//! block, τ as f64, u32 parameter count, then per parameter: u16 name length,
//! name, u8 rank, u32 dims, f64 values.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::model::{self, ModelConfig, ModelParams, Param};
use super::tensor::Tensor;
use super::NnError;
use crate::pipeline::{self, ChannelSelection, ImageTensor, NormStats};

const MAGIC: &[u8; 4] = b"DCMD";
pub const CHECKPOINT_VERSION: u16 = 1;

/// Everything needed to turn an image into descriptors.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub selection: ChannelSelection,
    pub norm: NormStats,
    pub params: ModelParams,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    selection: ChannelSelection,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| NnError::CorruptCheckpoint("truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, NnError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, NnError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, NnError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + 8 * self.params.num_values());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let header = serde_json::to_vec(&Header { config: self.config.clone(), selection: self.selection.clone() })
            .expect("config serializes");
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        let norm = self.norm.to_bytes();
        out.extend_from_slice(&(norm.len() as u32).to_le_bytes());
        out.extend_from_slice(&norm);
        out.extend_from_slice(&self.params.tau.to_le_bytes());
        out.extend_from_slice(&(self.params.params.len() as u32).to_le_bytes());
        for p in &self.params.params {
            out.extend_from_slice(&(p.name.len() as u16).to_le_bytes());
            out.extend_from_slice(p.name.as_bytes());
            out.push(p.value.shape.len() as u8);
            for &d in &p.value.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in &p.value.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NnError> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(4).ok() != Some(MAGIC.as_slice()) {
            return Err(NnError::CorruptCheckpoint("not a model file".into()));
        }
        let version = r.u16()?;
        if version != CHECKPOINT_VERSION {
            return Err(NnError::VersionMismatch { found: version, expected: CHECKPOINT_VERSION });
        }
        let hlen = r.u32()? as usize;
        let header: Header = serde_json::from_slice(r.take(hlen)?)
            .map_err(|e| NnError::CorruptCheckpoint(format!("header: {e}")))?;
        let nlen = r.u32()? as usize;
        let norm = NormStats::from_bytes(r.take(nlen)?).map_err(|e| NnError::CorruptCheckpoint(e.to_string()))?;
        let tau = r.f64()?;
        let count = r.u32()? as usize;
        let mut params = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let name_len = r.u16()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| NnError::CorruptCheckpoint("parameter name is not UTF-8".into()))?;
            let rank = r.u8()? as usize;
            let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
            let n: usize = shape.iter().product();
            let raw = r.take(n.checked_mul(8).ok_or_else(|| NnError::CorruptCheckpoint("tensor size".into()))?)?;
            let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            params.push(Param { name, value: Tensor::from_vec(&shape, data) });
        }
        if r.pos != bytes.len() {
            return Err(NnError::CorruptCheckpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        let ckpt = Checkpoint { config: header.config, selection: header.selection, norm, params: ModelParams { params, tau } };
        ckpt.config.validate().map_err(|e| NnError::CorruptCheckpoint(e.to_string()))?;
        ckpt.params.check_shapes(&ckpt.config).map_err(|e| NnError::CorruptCheckpoint(e.to_string()))?;
        if ckpt.norm.mean.len() != ckpt.config.input_channels {
            return Err(NnError::CorruptCheckpoint("norm stats do not match input channels".into()));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NnError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NnError> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// SHA-256 of the serialized checkpoint.
    pub fn hash(&self) -> [u8; 32] {
        Sha256::digest(self.to_bytes()).into()
    }

    /// Errors with `ShapeMismatch` unless this checkpoint's parameters fit `cfg`.
    pub fn ensure_compatible(&self, cfg: &ModelConfig) -> Result<(), NnError> {
        if self.config.input != cfg.input || self.config.input_channels != cfg.input_channels {
            return Err(NnError::ShapeMismatch(format!(
                "checkpoint input {:?}x{}, expected {:?}x{}",
                self.config.input, self.config.input_channels, cfg.input, cfg.input_channels
            )));
        }
        self.params.check_shapes(cfg)
    }

    /// Normalized network input `[1, C, H, W]` for an image at its own size.
    pub fn input_for(&self, image: &ImageTensor) -> Result<Tensor, NnError> {
        let mut t = model::raw_input(image, &self.config, &self.selection)?;
        model::normalize_input(&mut t, &self.norm)?;
        Ok(Tensor::stack(&[t]))
    }

    /// Normalized input straight from a cube (must carry the selected channels
    /// or a superset of them).
    pub fn input_for_cube(&self, cube: &pipeline::DctCube) -> Result<Tensor, NnError> {
        if self.config.input != model::InputKind::Dct {
            return Err(NnError::ShapeMismatch("RGB model cannot consume a DCT cube".into()));
        }
        let sel = pipeline::select_channels(cube, &self.selection)?;
        let mut t = model::cube_tensor(&sel);
        model::normalize_input(&mut t, &self.norm)?;
        Ok(Tensor::stack(&[t]))
    }
}
