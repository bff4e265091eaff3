//! Spatial preprocessing and the frequency-major DCT cube fed to the network.
//!
//! A cube regroups the 8×8 block transforms of an image so that channel
//! `(component, k)` holds zig-zag coefficient `k` of every block of that
//! component, laid out on the block grid. The full cube has 3 × 64 = 192
//! channels in component-major order (Y₀..Y₆₃, Cb₀..Cb₆₃, Cr₀..Cr₆₃).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dct::{self, CoeffBlock, PixelBlock, Plane};
use crate::image::RgbImage;
use crate::jpeg::{self, JpegError, JpegImage};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid channel selection: {0}")]
    InvalidSelection(String),
    #[error("normalization statistics need at least one training cube")]
    EmptyTrainingSet,
    #[error("image {width}x{height} is smaller than the {min}px minimum")]
    ImageTooSmall { width: usize, height: usize, min: usize },
    #[error("channel layout mismatch: {0}")]
    ChannelMismatch(String),
    #[error(transparent)]
    Codec(#[from] JpegError),
}

/// RGB image with real-valued samples in `[0, 255]`, interleaved `H × W × 3`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageTensor {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl ImageTensor {
    pub fn new(width: usize, height: usize) -> Self {
        ImageTensor { width, height, data: vec![0.0; width * height * 3] }
    }

    pub fn from_rgb(img: &RgbImage) -> Self {
        ImageTensor {
            width: img.width,
            height: img.height,
            data: img.data.iter().map(|&v| v as f64).collect(),
        }
    }

    pub fn to_rgb(&self) -> RgbImage {
        RgbImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect(),
        }
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize, ch: usize) -> f64 {
        self.data[(row * self.width + col) * 3 + ch]
    }

    /// Bilinear sample at continuous pixel coordinates (pixel centers at
    /// integers), replicating edges.
    fn sample(&self, y: f64, x: f64, out: &mut [f64; 3]) {
        let y = y.clamp(0.0, (self.height - 1) as f64);
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let (y0, x0) = (y.floor() as usize, x.floor() as usize);
        let (y1, x1) = ((y0 + 1).min(self.height - 1), (x0 + 1).min(self.width - 1));
        let (fy, fx) = (y - y0 as f64, x - x0 as f64);
        for (ch, o) in out.iter_mut().enumerate() {
            let top = self.at(y0, x0, ch) * (1.0 - fx) + self.at(y0, x1, ch) * fx;
            let bot = self.at(y1, x0, ch) * (1.0 - fx) + self.at(y1, x1, ch) * fx;
            *o = top * (1.0 - fy) + bot * fy;
        }
    }

    /// Builds an image by mapping each output pixel center to a source coordinate.
    fn remap(&self, width: usize, height: usize, map: impl Fn(usize, usize) -> (f64, f64)) -> ImageTensor {
        let mut out = ImageTensor::new(width, height);
        let mut px = [0.0; 3];
        for r in 0..height {
            for c in 0..width {
                let (y, x) = map(r, c);
                self.sample(y, x, &mut px);
                out.data[(r * width + c) * 3..(r * width + c) * 3 + 3].copy_from_slice(&px);
            }
        }
        out
    }

    /// Cuts a sub-rectangle, clamped to the image bounds.
    pub fn crop(&self, x1: usize, y1: usize, x2: usize, y2: usize) -> ImageTensor {
        let x2 = x2.min(self.width).max(x1.min(self.width - 1) + 1);
        let y2 = y2.min(self.height).max(y1.min(self.height - 1) + 1);
        let (x1, y1) = (x1.min(x2 - 1), y1.min(y2 - 1));
        let mut out = ImageTensor::new(x2 - x1, y2 - y1);
        for r in y1..y2 {
            for c in x1..x2 {
                for ch in 0..3 {
                    out.data[((r - y1) * out.width + (c - x1)) * 3 + ch] = self.at(r, c, ch);
                }
            }
        }
        out
    }
}

/// Bilinear resize with half-pixel centers. Resizing to the same size is exact.
pub fn resize_bilinear(img: &ImageTensor, width: usize, height: usize) -> ImageTensor {
    let sx = img.width as f64 / width as f64;
    let sy = img.height as f64 / height as f64;
    img.remap(width, height, |r, c| ((r as f64 + 0.5) * sy - 0.5, (c as f64 + 0.5) * sx - 0.5))
}

/// Random choices of one training-time augmentation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentParams {
    /// Horizontal stretch factor, uniform in `[3/4, 4/3]`.
    pub aspect: f64,
    pub flip: bool,
    /// Relative offset of the square crop along its free axis, in `[0, 1]`.
    pub offset: f64,
}

pub const ASPECT_RANGE: (f64, f64) = (0.75, 4.0 / 3.0);

pub fn sample_augment(seed: u64) -> AugmentParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    AugmentParams {
        aspect: rng.gen_range(ASPECT_RANGE.0..=ASPECT_RANGE.1),
        flip: rng.gen_bool(0.5),
        offset: rng.gen_range(0.0..=1.0),
    }
}

pub const MIN_AUGMENT_SIDE: usize = 32;

/// Training augmentation: stretch the width by a random aspect factor, take a
/// randomly placed maximal square, flip horizontally with probability 1/2 and
/// resize to `size × size`. Deterministic per seed.
pub fn augment(image: &ImageTensor, seed: u64, size: usize) -> Result<ImageTensor, PipelineError> {
    if image.width < MIN_AUGMENT_SIDE || image.height < MIN_AUGMENT_SIDE {
        return Err(PipelineError::ImageTooSmall { width: image.width, height: image.height, min: MIN_AUGMENT_SIDE });
    }
    Ok(apply_augment(image, &sample_augment(seed), size))
}

pub fn apply_augment(image: &ImageTensor, p: &AugmentParams, size: usize) -> ImageTensor {
    let stretched_w = image.width as f64 * p.aspect;
    let h = image.height as f64;
    let side = stretched_w.min(h);
    let (ox, oy) = ((stretched_w - side) * p.offset, (h - side) * p.offset);
    let step = side / size as f64;
    image.remap(size, size, |r, c| {
        let c = if p.flip { size - 1 - c } else { c };
        let xs = ox + (c as f64 + 0.5) * step;
        let ys = oy + (r as f64 + 0.5) * step;
        (ys - 0.5, xs / p.aspect - 0.5)
    })
}

/// Evaluation path: plain resize, no jitter or flip.
pub fn eval_resize(image: &ImageTensor, size: usize) -> ImageTensor {
    if image.width == size && image.height == size {
        return image.clone();
    }
    resize_bilinear(image, size, size)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Component {
    Y = 0,
    Cb = 1,
    Cr = 2,
}

impl Component {
    pub const ALL: [Component; 3] = [Component::Y, Component::Cb, Component::Cr];
}

/// Identifies one cube channel: a colour component and a zig-zag frequency.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChannelId {
    pub component: Component,
    pub zigzag: u8,
}

/// Frequency-major regrouping of block DCT coefficients, stored channel-first
/// (`channels × blocks_high × blocks_wide`).
#[derive(Clone, Debug, PartialEq)]
pub struct DctCube {
    pub blocks_high: usize,
    pub blocks_wide: usize,
    pub channels: Vec<ChannelId>,
    pub data: Vec<f64>,
}

impl DctCube {
    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn plane_len(&self) -> usize {
        self.blocks_high * self.blocks_wide
    }

    pub fn channel(&self, index: usize) -> &[f64] {
        let n = self.plane_len();
        &self.data[index * n..(index + 1) * n]
    }

    pub fn at(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.data[channel * self.plane_len() + row * self.blocks_wide + col]
    }

    /// Coefficient block of one component at a grid position, undoing the
    /// zig-zag regrouping. Requires all 64 channels of the component.
    pub fn block(&self, component: Component, row: usize, col: usize) -> Option<CoeffBlock> {
        let mut zz = [0.0; 64];
        let mut found = 0;
        for (i, ch) in self.channels.iter().enumerate() {
            if ch.component == component {
                zz[ch.zigzag as usize] = self.at(row, col, i);
                found += 1;
            }
        }
        (found == 64).then(|| CoeffBlock(dct::zigzag_unscan(&zz)))
    }

    /// Assembles a full 192-channel cube from three per-component block grids
    /// of equal dimensions.
    fn from_component_blocks(blocks_wide: usize, blocks_high: usize, comps: [Vec<CoeffBlock>; 3]) -> DctCube {
        let n = blocks_wide * blocks_high;
        let mut data = vec![0.0; 192 * n];
        for (ci, blocks) in comps.iter().enumerate() {
            debug_assert_eq!(blocks.len(), n);
            for (pos, b) in blocks.iter().enumerate() {
                let zz = dct::zigzag_scan(&b.0);
                for (k, v) in zz.iter().enumerate() {
                    data[(ci * 64 + k) * n + pos] = *v;
                }
            }
        }
        DctCube { blocks_high, blocks_wide, channels: full_layout(), data }
    }
}

pub fn full_layout() -> Vec<ChannelId> {
    Component::ALL
        .iter()
        .flat_map(|&component| (0..64).map(move |zigzag| ChannelId { component, zigzag }))
        .collect()
}

/// JFIF RGB → YCbCr matrix (offsets excluded).
const YCC_MATRIX: [[f64; 3]; 3] = [
    [0.299, 0.587, 0.114],
    [-0.168_736, -0.331_264, 0.5],
    [0.5, -0.418_688, -0.081_312],
];

/// Unclamped YCbCr with the −128 level shift already applied.
#[inline]
fn to_shifted_ycbcr(rgb: &[f64]) -> [f64; 3] {
    let m = &YCC_MATRIX;
    let row = |k: usize| m[k][0] * rgb[0] + m[k][1] * rgb[1] + m[k][2] * rgb[2];
    [row(0) - 128.0, row(1), row(2)]
}

/// Exact inverse of a 3×3 matrix by cofactors. The rounded JFIF inverse
/// constants are off by ~1e-5, too coarse for an exact round trip.
fn invert3(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let cof = |r: usize, c: usize| {
        let (r0, r1) = ((r + 1) % 3, (r + 2) % 3);
        let (c0, c1) = ((c + 1) % 3, (c + 2) % 3);
        m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0]
    };
    let det = m[0][0] * cof(0, 0) + m[0][1] * cof(0, 1) + m[0][2] * cof(0, 2);
    let mut out = [[0.0; 3]; 3];
    for (r, row) in out.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = cof(c, r) / det;
        }
    }
    out
}

/// RGB → YCbCr (unclamped JFIF matrix) → −128 → blockwise DCT → regroup.
/// Sizes that are not multiples of 8 are padded by edge replication.
pub fn to_dct_cube(image: &ImageTensor) -> DctCube {
    let (bw, bh) = (image.width.div_ceil(8), image.height.div_ceil(8));
    let mut planes = [Plane::new(image.width, image.height), Plane::new(image.width, image.height), Plane::new(image.width, image.height)];
    for i in 0..image.width * image.height {
        let ycc = to_shifted_ycbcr(&image.data[i * 3..i * 3 + 3]);
        for (p, v) in planes.iter_mut().zip(ycc) {
            p.data[i] = v;
        }
    }
    let comps = planes.map(|p| {
        let mut blocks = Vec::with_capacity(bw * bh);
        for r in 0..bh {
            for c in 0..bw {
                blocks.push(dct::forward_dct(&p.block(r, c)));
            }
        }
        blocks
    });
    DctCube::from_component_blocks(bw, bh, comps)
}

/// Inverse of [`to_dct_cube`] on a full cube: unscan, inverse DCT, +128,
/// YCbCr → RGB. Returns the padded image (block-grid size).
pub fn cube_to_image(cube: &DctCube) -> Result<ImageTensor, PipelineError> {
    if cube.num_channels() != 192 {
        return Err(PipelineError::ChannelMismatch("inverse needs all 192 channels".into()));
    }
    let (w, h) = (cube.blocks_wide * 8, cube.blocks_high * 8);
    let mut planes = [Plane::new(w, h), Plane::new(w, h), Plane::new(w, h)];
    for (ci, comp) in Component::ALL.iter().enumerate() {
        for r in 0..cube.blocks_high {
            for c in 0..cube.blocks_wide {
                let b = cube.block(*comp, r, c).expect("full cube");
                planes[ci].put_block(r, c, &dct::inverse_dct(&b));
            }
        }
    }
    let inv = invert3(&YCC_MATRIX);
    let mut out = ImageTensor::new(w, h);
    for i in 0..w * h {
        // chroma offsets cancel the level shift, so only luma gets +128
        let v = [planes[0].data[i] + 128.0, planes[1].data[i], planes[2].data[i]];
        for (k, row) in inv.iter().enumerate() {
            out.data[i * 3 + k] = row[0] * v[0] + row[1] * v[1] + row[2] * v[2];
        }
    }
    Ok(out)
}

/// Builds the cube straight from parsed JPEG coefficients (dequantized, never
/// inverse-transformed for 4:4:4). Subsampled chroma is brought to the luma
/// block grid by inverse DCT → centered bilinear upsampling → forward DCT.
/// Grayscale images get all-zero chroma channels.
pub fn cube_from_jpeg(image: &JpegImage) -> Result<DctCube, PipelineError> {
    let grids = jpeg::coefficient_planes(image, true)?;
    let (bw, bh) = (grids[0].blocks_wide, grids[0].blocks_high);
    let (hmax, vmax) = image.max_sampling();
    let mut comps: Vec<Vec<CoeffBlock>> = vec![grids[0].blocks.clone()];
    for (i, grid) in grids.iter().enumerate().skip(1) {
        let c = &image.components[i];
        if (c.h, c.v) == (hmax, vmax) {
            comps.push(grid.blocks.clone());
            continue;
        }
        if (hmax / c.h, vmax / c.v) != (2, 2) {
            return Err(PipelineError::Codec(JpegError::UnsupportedFormat(format!(
                "chroma sampling {}x{} against luma {}x{}",
                c.h, c.v, hmax, vmax
            ))));
        }
        let (cw, ch) = image.component_dims(i);
        let plane = grid.to_plane(cw, ch);
        let up = dct::upsample2(&plane, bw * 8, bh * 8);
        let mut blocks = Vec::with_capacity(bw * bh);
        for r in 0..bh {
            for col in 0..bw {
                blocks.push(dct::forward_dct(&up.block(r, col)));
            }
        }
        comps.push(blocks);
    }
    while comps.len() < 3 {
        comps.push(vec![CoeffBlock::zeros(); bw * bh]);
    }
    let comps: [Vec<CoeffBlock>; 3] = comps.try_into().unwrap();
    Ok(DctCube::from_component_blocks(bw, bh, comps))
}

/// Zig-zag indices kept per component. Lists are sorted and duplicate-free.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelSelection {
    pub y: Vec<u8>,
    pub cb: Vec<u8>,
    pub cr: Vec<u8>,
}

impl ChannelSelection {
    pub fn new(y: Vec<u8>, cb: Vec<u8>, cr: Vec<u8>) -> Result<Self, PipelineError> {
        let mut lists = [y, cb, cr];
        for (list, name) in lists.iter_mut().zip(["Y", "Cb", "Cr"]) {
            if let Some(bad) = list.iter().find(|&&k| k > 63) {
                return Err(PipelineError::InvalidSelection(format!("{name} index {bad} out of range")));
            }
            list.sort_unstable();
            if list.windows(2).any(|w| w[0] == w[1]) {
                return Err(PipelineError::InvalidSelection(format!("duplicate {name} index")));
            }
        }
        if lists[0].is_empty() {
            return Err(PipelineError::InvalidSelection("luma selection is empty".into()));
        }
        let [y, cb, cr] = lists;
        Ok(ChannelSelection { y, cb, cr })
    }

    /// The lowest `y`, `cb`, `cr` zig-zag frequencies of each component.
    pub fn lowest(y: u8, cb: u8, cr: u8) -> Result<Self, PipelineError> {
        if y > 64 || cb > 64 || cr > 64 {
            return Err(PipelineError::InvalidSelection("more than 64 channels per component".into()));
        }
        Self::new((0..y).collect(), (0..cb).collect(), (0..cr).collect())
    }

    pub fn all() -> Self {
        Self::lowest(64, 64, 64).unwrap()
    }

    pub fn count(&self) -> usize {
        self.y.len() + self.cb.len() + self.cr.len()
    }

    pub fn channel_ids(&self) -> Vec<ChannelId> {
        [(Component::Y, &self.y), (Component::Cb, &self.cb), (Component::Cr, &self.cr)]
            .into_iter()
            .flat_map(|(component, ks)| ks.iter().map(move |&zigzag| ChannelId { component, zigzag }))
            .collect()
    }

    /// Compact binary form: per component a count byte then the indices.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(3 + self.count());
        for list in [&self.y, &self.cb, &self.cr] {
            out.push(list.len() as u8);
            out.extend_from_slice(list);
        }
        out
    }

    /// Parses [`Self::to_bytes`], returning the selection and bytes consumed.
    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, usize), PipelineError> {
        let mut pos = 0;
        let mut lists: Vec<Vec<u8>> = Vec::with_capacity(3);
        for _ in 0..3 {
            let n = *bytes.get(pos).ok_or_else(|| PipelineError::InvalidSelection("truncated".into()))? as usize;
            let list = bytes
                .get(pos + 1..pos + 1 + n)
                .ok_or_else(|| PipelineError::InvalidSelection("truncated".into()))?;
            lists.push(list.to_vec());
            pos += 1 + n;
        }
        let cr = lists.pop().unwrap();
        let cb = lists.pop().unwrap();
        let y = lists.pop().unwrap();
        Ok((Self::new(y, cb, cr)?, pos))
    }
}

impl Default for ChannelSelection {
    /// 64 channels: Y 0..31, Cb 0..15, Cr 0..15.
    fn default() -> Self {
        Self::lowest(32, 16, 16).unwrap()
    }
}

/// Keeps the selected channels, component-major and zig-zag ascending.
pub fn select_channels(cube: &DctCube, sel: &ChannelSelection) -> Result<DctCube, PipelineError> {
    let n = cube.plane_len();
    let wanted = sel.channel_ids();
    let mut data = Vec::with_capacity(wanted.len() * n);
    for id in &wanted {
        let idx = cube.channels.iter().position(|c| c == id).ok_or_else(|| {
            PipelineError::InvalidSelection(format!("{:?} channel {} not present in cube", id.component, id.zigzag))
        })?;
        data.extend_from_slice(cube.channel(idx));
    }
    Ok(DctCube { blocks_high: cube.blocks_high, blocks_wide: cube.blocks_wide, channels: wanted, data })
}

pub const NORM_EPS: f64 = 1e-6;

/// Per-channel mean and (population) variance over a training set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl NormStats {
    /// Stats that leave a cube unchanged (up to the ε floor).
    pub fn identity(channels: usize) -> Self {
        NormStats { mean: vec![0.0; channels], var: vec![1.0 - NORM_EPS; channels] }
    }
}

const NORM_MAGIC: &[u8; 4] = b"DCNS";
const NORM_VERSION: u16 = 1;

impl NormStats {
    /// `DCNS`, version u16, channel count u32, then (mean, variance) f64 pairs,
    /// all little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(10 + 16 * self.mean.len());
        out.extend_from_slice(NORM_MAGIC);
        out.extend_from_slice(&NORM_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.mean.len() as u32).to_le_bytes());
        for (m, v) in self.mean.iter().zip(&self.var) {
            out.extend_from_slice(&m.to_le_bytes());
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PipelineError> {
        let bad = |why: &str| PipelineError::ChannelMismatch(format!("norm stats file: {why}"));
        if bytes.len() < 10 || &bytes[..4] != NORM_MAGIC {
            return Err(bad("bad magic"));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != NORM_VERSION {
            return Err(bad(&format!("version {version}")));
        }
        let n = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
        if bytes.len() != 10 + 16 * n {
            return Err(bad("length does not match channel count"));
        }
        let f = |i: usize| f64::from_le_bytes(bytes[i..i + 8].try_into().unwrap());
        let mean = (0..n).map(|k| f(10 + 16 * k)).collect();
        let var = (0..n).map(|k| f(18 + 16 * k)).collect();
        Ok(NormStats { mean, var })
    }
}

pub fn compute_norm_stats(cubes: &[DctCube]) -> Result<NormStats, PipelineError> {
    let first = cubes.first().ok_or(PipelineError::EmptyTrainingSet)?;
    let channels = first.num_channels();
    if let Some(bad) = cubes.iter().find(|c| c.channels != first.channels) {
        return Err(PipelineError::ChannelMismatch(format!(
            "{} channels vs {}",
            bad.num_channels(),
            channels
        )));
    }
    let mut mean = vec![0.0; channels];
    let mut count = 0usize;
    for cube in cubes {
        for (ch, m) in mean.iter_mut().enumerate() {
            *m += cube.channel(ch).iter().sum::<f64>();
        }
        count += cube.plane_len();
    }
    mean.iter_mut().for_each(|m| *m /= count as f64);
    let mut var = vec![0.0; channels];
    for cube in cubes {
        for (ch, v) in var.iter_mut().enumerate() {
            *v += cube.channel(ch).iter().map(|x| (x - mean[ch]).powi(2)).sum::<f64>();
        }
    }
    var.iter_mut().for_each(|v| *v /= count as f64);
    Ok(NormStats { mean, var })
}

/// `(x − mean) / sqrt(var + ε)` per channel.
pub fn normalize(cube: &DctCube, stats: &NormStats) -> Result<DctCube, PipelineError> {
    if stats.mean.len() != cube.num_channels() {
        return Err(PipelineError::ChannelMismatch(format!(
            "stats for {} channels, cube has {}",
            stats.mean.len(),
            cube.num_channels()
        )));
    }
    let n = cube.plane_len();
    let mut out = cube.clone();
    for ch in 0..cube.num_channels() {
        let inv = 1.0 / (stats.var[ch] + NORM_EPS).sqrt();
        for v in &mut out.data[ch * n..(ch + 1) * n] {
            *v = (*v - stats.mean[ch]) * inv;
        }
    }
    Ok(out)
}

/// Spatial image → normalized network input, the evaluation-time flow.
pub fn prepare_cube(image: &ImageTensor, sel: &ChannelSelection, stats: &NormStats) -> Result<DctCube, PipelineError> {
    normalize(&select_channels(&to_dct_cube(image), sel)?, stats)
}

/// Compressed-domain flow: parsed JPEG → normalized network input.
pub fn prepare_cube_from_jpeg(image: &JpegImage, sel: &ChannelSelection, stats: &NormStats) -> Result<DctCube, PipelineError> {
    normalize(&select_channels(&cube_from_jpeg(image)?, sel)?, stats)
}

/// Pixel block helper for tests and tools: block `(row, col)` of one
/// component after colour conversion and level shift.
pub fn component_block(image: &ImageTensor, component: Component, row: usize, col: usize) -> PixelBlock {
    let mut out = [0.0; 64];
    for x in 0..8 {
        for y in 0..8 {
            let r = (row * 8 + x).min(image.height - 1);
            let c = (col * 8 + y).min(image.width - 1);
            let i = (r * image.width + c) * 3;
            out[x * 8 + y] = to_shifted_ycbcr(&image.data[i..i + 3])[component as usize];
        }
    }
    PixelBlock(out)
}
