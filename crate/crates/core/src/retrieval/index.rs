//! Gallery index file.
//!
//! Layout (little-endian): magic `DCIR`, version u16, model hash (32 bytes),
//! global dim u32, local dim u32, channel selection bytes, image count u64,
//! ids (u16 length + UTF-8 each), packed f32 global vectors, then per image a
//! u16 feature count followed by `x, y, scale, attention` and the descriptor,
//! all f32.

use std::collections::HashSet;
use std::path::Path;

use rayon::prelude::*;

use super::{extract_jpeg, ImageFeatures, LocalFeature, RetrievalConfig, RetrievalError};
use crate::jpeg::JpegImage;
use crate::nn::Checkpoint;
use crate::pipeline::ChannelSelection;

const MAGIC: &[u8; 4] = b"DCIR";
pub const INDEX_VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct RetrievalIndex {
    /// Hash of the checkpoint that produced the features.
    pub model_hash: [u8; 32],
    pub global_dim: usize,
    pub local_dim: usize,
    pub selection: ChannelSelection,
    pub ids: Vec<String>,
    pub features: Vec<ImageFeatures>,
}

/// Extract every gallery image in parallel; output keeps input order.
pub fn build_index(ckpt: &Checkpoint, gallery: &[(String, JpegImage)], cfg: &RetrievalConfig) -> Result<RetrievalIndex, RetrievalError> {
    if gallery.is_empty() {
        return Err(RetrievalError::EmptyGallery);
    }
    let features = gallery.par_iter().map(|(_, img)| extract_jpeg(ckpt, img, cfg)).collect::<Result<Vec<_>, _>>()?;
    RetrievalIndex::new(ckpt, gallery.iter().map(|(id, _)| id.clone()).collect(), features)
}

impl RetrievalIndex {
    pub fn new(ckpt: &Checkpoint, ids: Vec<String>, features: Vec<ImageFeatures>) -> Result<Self, RetrievalError> {
        let index = RetrievalIndex {
            model_hash: ckpt.hash(),
            global_dim: ckpt.config.global_dim,
            local_dim: ckpt.config.shallow_width(),
            selection: ckpt.selection.clone(),
            ids,
            features,
        };
        index.validate()?;
        Ok(index)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn global(&self, i: usize) -> &[f32] {
        &self.features[i].global
    }

    /// Ids unique, dims consistent, gallery nonempty.
    pub fn validate(&self) -> Result<(), RetrievalError> {
        if self.ids.is_empty() {
            return Err(RetrievalError::EmptyGallery);
        }
        if self.ids.len() != self.features.len() {
            return Err(RetrievalError::CorruptIndex("id and feature counts differ".into()));
        }
        let mut seen = HashSet::new();
        for id in &self.ids {
            if !seen.insert(id.as_str()) {
                return Err(RetrievalError::DuplicateId(id.clone()));
            }
            if id.len() > u16::MAX as usize {
                return Err(RetrievalError::CorruptIndex("id too long".into()));
            }
        }
        for f in &self.features {
            if f.global.len() != self.global_dim || f.locals.iter().any(|l| l.descriptor.len() != self.local_dim) {
                return Err(RetrievalError::CorruptIndex("descriptor dims disagree with header".into()));
            }
            if f.locals.len() > u16::MAX as usize {
                return Err(RetrievalError::CorruptIndex("too many local features".into()));
            }
        }
        Ok(())
    }

    /// Errors with `ChecksumMismatch` unless `ckpt` produced this index.
    pub fn check_model(&self, ckpt: &Checkpoint) -> Result<(), RetrievalError> {
        if ckpt.hash() != self.model_hash || ckpt.selection != self.selection {
            return Err(RetrievalError::ChecksumMismatch);
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&INDEX_VERSION.to_le_bytes());
        out.extend_from_slice(&self.model_hash);
        out.extend_from_slice(&(self.global_dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.local_dim as u32).to_le_bytes());
        out.extend_from_slice(&self.selection.to_bytes());
        out.extend_from_slice(&(self.ids.len() as u64).to_le_bytes());
        for id in &self.ids {
            out.extend_from_slice(&(id.len() as u16).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
        }
        let put = |out: &mut Vec<u8>, v: f32| out.extend_from_slice(&v.to_le_bytes());
        for f in &self.features {
            f.global.iter().for_each(|v| put(&mut out, *v));
        }
        for f in &self.features {
            out.extend_from_slice(&(f.locals.len() as u16).to_le_bytes());
            for l in &f.locals {
                for v in [l.x, l.y, l.scale, l.attention] {
                    put(&mut out, v);
                }
                l.descriptor.iter().for_each(|v| put(&mut out, *v));
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, RetrievalError> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(4).ok() != Some(MAGIC.as_slice()) {
            return Err(RetrievalError::CorruptIndex("not an index file".into()));
        }
        let version = u16::from_le_bytes(r.array()?);
        if version != INDEX_VERSION {
            return Err(RetrievalError::VersionMismatch { found: version, expected: INDEX_VERSION });
        }
        let model_hash: [u8; 32] = r.array()?;
        let global_dim = u32::from_le_bytes(r.array()?) as usize;
        let local_dim = u32::from_le_bytes(r.array()?) as usize;
        let (selection, used) =
            ChannelSelection::from_bytes(&bytes[r.pos..]).map_err(|e| RetrievalError::CorruptIndex(e.to_string()))?;
        r.pos += used;
        let count = u64::from_le_bytes(r.array()?) as usize;
        // each image needs at least a u16 id length and a u16 feature count
        if count > bytes.len() / 4 {
            return Err(RetrievalError::CorruptIndex("image count exceeds file size".into()));
        }
        let mut ids = Vec::with_capacity(count);
        for _ in 0..count {
            let len = u16::from_le_bytes(r.array()?) as usize;
            let id = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| RetrievalError::CorruptIndex("id is not UTF-8".into()))?;
            ids.push(id);
        }
        let mut globals = Vec::with_capacity(count);
        for _ in 0..count {
            globals.push(r.f32s(global_dim)?);
        }
        let mut features = Vec::with_capacity(count);
        for global in globals {
            let n = u16::from_le_bytes(r.array()?) as usize;
            let mut locals = Vec::with_capacity(n);
            for _ in 0..n {
                let h = r.f32s(4)?;
                locals.push(LocalFeature { x: h[0], y: h[1], scale: h[2], attention: h[3], descriptor: r.f32s(local_dim)? });
            }
            features.push(ImageFeatures { global, locals });
        }
        if r.pos != bytes.len() {
            return Err(RetrievalError::CorruptIndex(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        let index = RetrievalIndex { model_hash, global_dim, local_dim, selection, ids, features };
        index.validate()?;
        Ok(index)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), RetrievalError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RetrievalError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], RetrievalError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| RetrievalError::CorruptIndex("truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], RetrievalError> {
        Ok(self.take(N)?.try_into().unwrap())
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>, RetrievalError> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| RetrievalError::CorruptIndex("vector size".into()))?)?;
        Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }
}
