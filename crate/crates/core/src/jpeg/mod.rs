//! Baseline sequential JPEG: parse to quantized coefficients (no inverse DCT),
//! encode coefficient planes or RGB pixels back to JFIF.

mod decoder;
mod encoder;
pub mod huffman;
mod markers;

pub use decoder::parse_jpeg;
pub use encoder::{encode_jpeg, encode_rgb, rgb_to_jpeg_image, Subsampling};
pub use huffman::{HuffmanTable, TableClass};
pub use markers::{marker_name, scan_markers, MarkerInfo};

use crate::dct::{self, CoeffBlock, Plane, QuantTable, QuantizedBlock};
use crate::image::RgbImage;

#[derive(Debug, thiserror::Error)]
pub enum JpegError {
    #[error("unsupported JPEG format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt JPEG stream: {0}")]
    CorruptStream(String),
    #[error("truncated JPEG input")]
    TruncatedInput,
    #[error("invalid dimensions {width}x{height}")]
    InvalidDimensions { width: usize, height: usize },
    #[error("coefficient out of baseline range: {0}")]
    CoefficientOutOfRange(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub enum ComponentKind {
    Y,
    Cb,
    Cr,
}

/// One colour component's quantized block grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ComponentPlane {
    pub kind: ComponentKind,
    /// Component identifier as written in SOF/SOS.
    pub id: u8,
    pub h: u8,
    pub v: u8,
    pub quant_table: u8,
    pub dc_table: u8,
    pub ac_table: u8,
    pub blocks_wide: usize,
    pub blocks_high: usize,
    /// Row-major block grid, natural coefficient order.
    pub blocks: Vec<QuantizedBlock>,
}

impl ComponentPlane {
    pub fn block(&self, row: usize, col: usize) -> &QuantizedBlock {
        &self.blocks[row * self.blocks_wide + col]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct JpegImage {
    pub width: usize,
    pub height: usize,
    pub components: Vec<ComponentPlane>,
    pub quant_tables: [Option<QuantTable>; 4],
    pub huffman_tables: Vec<HuffmanTable>,
    pub restart_interval: Option<u16>,
}

impl JpegImage {
    pub fn max_sampling(&self) -> (u8, u8) {
        let h = self.components.iter().map(|c| c.h).max().unwrap_or(1);
        let v = self.components.iter().map(|c| c.v).max().unwrap_or(1);
        (h, v)
    }

    /// Pixel dimensions of a component (`ceil(W·h/hmax)`, `ceil(H·v/vmax)`).
    pub fn component_dims(&self, index: usize) -> (usize, usize) {
        let (hmax, vmax) = self.max_sampling();
        let c = &self.components[index];
        component_dims(self.width, self.height, c.h, c.v, hmax, vmax)
    }

    pub fn quant_table_for(&self, index: usize) -> Result<&QuantTable, JpegError> {
        let id = self.components[index].quant_table as usize;
        self.quant_tables
            .get(id)
            .and_then(|t| t.as_ref())
            .ok_or_else(|| JpegError::CorruptStream(format!("missing quantization table {id}")))
    }

    /// True for a 3-component image with 2×2 luma sampling and 1×1 chroma.
    pub fn is_420(&self) -> bool {
        self.components.len() == 3
            && (self.components[0].h, self.components[0].v) == (2, 2)
            && self.components[1..].iter().all(|c| (c.h, c.v) == (1, 1))
    }
}

pub(crate) fn component_dims(width: usize, height: usize, h: u8, v: u8, hmax: u8, vmax: u8) -> (usize, usize) {
    (
        (width * h as usize).div_ceil(hmax as usize),
        (height * v as usize).div_ceil(vmax as usize),
    )
}

/// Per-component block grids as real coefficients, optionally dequantized.
pub fn coefficient_planes(image: &JpegImage, dequantized: bool) -> Result<Vec<CoeffGrid>, JpegError> {
    image
        .components
        .iter()
        .enumerate()
        .map(|(i, comp)| {
            let table = if dequantized { *image.quant_table_for(i)? } else { QuantTable::ones() };
            Ok(CoeffGrid {
                blocks_wide: comp.blocks_wide,
                blocks_high: comp.blocks_high,
                blocks: comp.blocks.iter().map(|b| dct::dequantize(b, &table)).collect(),
            })
        })
        .collect()
}

/// A grid of real-valued coefficient blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct CoeffGrid {
    pub blocks_wide: usize,
    pub blocks_high: usize,
    pub blocks: Vec<CoeffBlock>,
}

impl CoeffGrid {
    pub fn block(&self, row: usize, col: usize) -> &CoeffBlock {
        &self.blocks[row * self.blocks_wide + col]
    }

    /// Inverse-transforms every block into a sample plane of `width × height`
    /// (level shift not applied).
    pub fn to_plane(&self, width: usize, height: usize) -> Plane {
        let mut plane = Plane::new(width, height);
        for r in 0..self.blocks_high {
            for c in 0..self.blocks_wide {
                plane.put_block(r, c, &dct::inverse_dct(self.block(r, c)));
            }
        }
        plane
    }
}

/// Decodes component sample planes at their native resolution: dequantize,
/// inverse DCT, +128, rounded and clamped to 8 bits.
pub fn component_sample_planes(image: &JpegImage) -> Result<Vec<Plane>, JpegError> {
    let grids = coefficient_planes(image, true)?;
    Ok(grids
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let (w, h) = image.component_dims(i);
            let mut p = g.to_plane(w, h);
            for s in &mut p.data {
                *s = (*s + 128.0).round().clamp(0.0, 255.0);
            }
            p
        })
        .collect())
}

/// Decoded component samples at full image resolution. Chroma planes are
/// brought to luma resolution with centered bilinear (triangle) upsampling;
/// values are not rounded after upsampling.
pub fn decode_ycbcr(image: &JpegImage) -> Result<Vec<Plane>, JpegError> {
    let planes = component_sample_planes(image)?;
    let (w, h) = (image.width, image.height);
    let (hmax, vmax) = image.max_sampling();
    planes
        .iter()
        .zip(&image.components)
        .map(|(p, c)| upsample_to(p, hmax / c.h, vmax / c.v, w, h))
        .collect()
}

/// Full decode to 8-bit RGB via [`decode_ycbcr`] and the JFIF inverse matrix.
pub fn decode_pixels(image: &JpegImage) -> Result<RgbImage, JpegError> {
    let full = decode_ycbcr(image)?;
    let (w, h) = (image.width, image.height);
    let mut out = RgbImage::new(w, h);
    for i in 0..w * h {
        let px = if full.len() == 1 {
            let y = full[0].data[i];
            [y, y, y]
        } else {
            let (r, g, b) = dct::ycbcr_to_rgb(full[0].data[i], full[1].data[i], full[2].data[i]);
            [r, g, b]
        };
        for (k, v) in px.iter().enumerate() {
            out.data[i * 3 + k] = v.round().clamp(0.0, 255.0) as u8;
        }
    }
    Ok(out)
}

fn upsample_to(p: &Plane, fx: u8, fy: u8, w: usize, h: usize) -> Result<Plane, JpegError> {
    match (fx, fy) {
        (1, 1) => Ok(Plane::from_fn(w, h, |r, c| p.at(r, c))),
        (2, 2) => Ok(dct::upsample2(p, w, h)),
        (2, 1) => Ok(Plane::from_fn(w, h, |r, c| {
            let s = (c / 2) as isize;
            let n = if c % 2 == 0 { s - 1 } else { s + 1 };
            0.75 * p.at_clamped(r as isize, s) + 0.25 * p.at_clamped(r as isize, n)
        })),
        (1, 2) => Ok(Plane::from_fn(w, h, |r, c| {
            let s = (r / 2) as isize;
            let n = if r % 2 == 0 { s - 1 } else { s + 1 };
            0.75 * p.at_clamped(s, c as isize) + 0.25 * p.at_clamped(n, c as isize)
        })),
        _ => Err(JpegError::UnsupportedFormat(format!("sampling ratio {fx}x{fy}"))),
    }
}
