use serde::{Deserialize, Serialize};

use super::{RetrievalConfig, RetrievalError};
use crate::jpeg::{self, JpegImage};
use crate::nn::model::{self, InputKind};
use crate::nn::{Checkpoint, Tensor};
use crate::pipeline::{self, ImageTensor};

/// One attended location of the shallow feature map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalFeature {
    /// Pixel coordinates in the original image.
    pub x: f32,
    pub y: f32,
    pub scale: f32,
    pub attention: f32,
    /// Unit-norm shallow feature vector.
    pub descriptor: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageFeatures {
    /// Unit-norm global descriptor.
    pub global: Vec<f32>,
    pub locals: Vec<LocalFeature>,
}

/// L2-normalize and narrow to f32. A zero vector stays zero.
pub fn normalize_descriptor(v: &[f64]) -> Vec<f32> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let inv = if n > 0.0 { 1.0 / n } else { 0.0 };
    v.iter().map(|x| (x * inv) as f32).collect()
}

struct Candidate {
    attention: f64,
    x: f64,
    y: f64,
    scale: f64,
    descriptor: Vec<f32>,
}

fn scaled(image: &ImageTensor, s: f64) -> ImageTensor {
    if s == 1.0 {
        return image.clone();
    }
    let w = ((image.width as f64 * s).round() as usize).max(1);
    let h = ((image.height as f64 * s).round() as usize).max(1);
    pipeline::resize_bilinear(image, w, h)
}

/// Extract from decoded pixels.
pub fn extract(ckpt: &Checkpoint, image: &ImageTensor, cfg: &RetrievalConfig) -> Result<ImageFeatures, RetrievalError> {
    run(ckpt, cfg, image.width, image.height, None, || Ok(image.clone()))
}

/// Extract from a parsed JPEG. For DCT models the scale-1 pass (and with it
/// the global descriptor) reads the dequantized coefficients directly; other
/// pyramid levels need pixels and decode the image once.
pub fn extract_jpeg(ckpt: &Checkpoint, image: &JpegImage, cfg: &RetrievalConfig) -> Result<ImageFeatures, RetrievalError> {
    let native = match ckpt.config.input {
        InputKind::Dct => Some(ckpt.input_for_cube(&pipeline::cube_from_jpeg(image)?)?),
        InputKind::Rgb => None,
    };
    let decode = || Ok(ImageTensor::from_rgb(&jpeg::decode_pixels(image)?));
    run(ckpt, cfg, image.width, image.height, native, decode)
}

fn run(
    ckpt: &Checkpoint,
    cfg: &RetrievalConfig,
    width: usize,
    height: usize,
    native: Option<Tensor>,
    pixels: impl FnOnce() -> Result<ImageTensor, RetrievalError>,
) -> Result<ImageFeatures, RetrievalError> {
    cfg.validate()?;
    let needs_pixels = native.is_none() || cfg.scales.iter().any(|&s| s != 1.0);
    let image = if needs_pixels { Some(pixels()?) } else { None };
    let stride = ckpt.config.shallow_stride_pixels() as f64;
    // stored attentions are f32, so the threshold is applied at that precision
    let tau = ckpt.params.tau as f32;

    let mut global = None;
    let mut candidates = Vec::new();
    // scale 1 first so the global head runs exactly once
    let mut order: Vec<f64> = cfg.scales.iter().copied().filter(|&s| s != 1.0).collect();
    order.insert(0, 1.0);
    for &s in &order {
        let input = match (&native, s == 1.0) {
            (Some(t), true) => t.clone(),
            _ => ckpt.input_for(&scaled(image.as_ref().expect("pixels decoded"), s))?,
        };
        let out = model::forward(&ckpt.params, &ckpt.config, &input)?;
        if s == 1.0 {
            global = Some(normalize_descriptor(&out.global.data));
            if !cfg.scales.contains(&1.0) {
                continue;
            }
        }
        let (_, c, h, w) = out.shallow.dims4();
        let plane = h * w;
        for r in 0..h {
            for col in 0..w {
                let a = out.attention.data[r * w + col];
                if (a as f32) < tau {
                    continue;
                }
                let desc: Vec<f64> = (0..c).map(|ch| out.shallow.data[ch * plane + r * w + col]).collect();
                candidates.push(Candidate {
                    attention: a,
                    x: ((col as f64 + 0.5) * stride / s).min(width as f64),
                    y: ((r as f64 + 0.5) * stride / s).min(height as f64),
                    scale: s,
                    descriptor: normalize_descriptor(&desc),
                });
            }
        }
    }
    // stable: equal attention keeps scale, row, column order
    candidates.sort_by(|a, b| b.attention.total_cmp(&a.attention));
    candidates.truncate(cfg.max_local_features);
    let locals = candidates
        .into_iter()
        .map(|c| LocalFeature { x: c.x as f32, y: c.y as f32, scale: c.scale as f32, attention: c.attention as f32, descriptor: c.descriptor })
        .collect();
    Ok(ImageFeatures { global: global.expect("scale 1 always runs"), locals })
}
