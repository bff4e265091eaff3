//! 8×8 block transform primitives shared by the codec and the feature pipeline.
//!
//! Everything here runs in double precision. Level shifting (±128) is left to
//! callers so that [`forward_dct`] and [`inverse_dct`] stay pure transforms.

use std::f64::consts::PI;
use std::sync::OnceLock;

/// An 8×8 block of spatial samples, row-major (`x` = row, `y` = column).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelBlock(pub [f64; 64]);

/// An 8×8 block of DCT coefficients, row-major in natural order.
///
/// Index `u * 8 + v`: `u` is the vertical frequency, `v` the horizontal one.
/// Entry 0 is the DC term.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoeffBlock(pub [f64; 64]);

/// Quantized coefficients in natural (row-major) order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct QuantizedBlock(pub [i32; 64]);

/// Per-frequency quantization divisors, natural order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QuantTable(pub [u16; 64]);

impl PixelBlock {
    pub fn zeros() -> Self {
        PixelBlock([0.0; 64])
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.0[x * 8 + y]
    }

    pub fn mean(&self) -> f64 {
        self.0.iter().sum::<f64>() / 64.0
    }
}

impl CoeffBlock {
    pub fn zeros() -> Self {
        CoeffBlock([0.0; 64])
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.0[u * 8 + v]
    }

    pub fn dc(&self) -> f64 {
        self.0[0]
    }
}

impl QuantizedBlock {
    pub fn zeros() -> Self {
        QuantizedBlock([0; 64])
    }

    pub fn dc(&self) -> i32 {
        self.0[0]
    }

    pub fn ac_is_zero(&self) -> bool {
        self.0[1..].iter().all(|&c| c == 0)
    }
}

impl Default for QuantizedBlock {
    fn default() -> Self {
        Self::zeros()
    }
}

/// Annex K luminance table, natural order.
pub const STD_LUMA_QUANT: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

/// Annex K chrominance table, natural order.
pub const STD_CHROMA_QUANT: [u16; 64] = [
    17, 18, 24, 47, 99, 99, 99, 99, //
    18, 21, 26, 66, 99, 99, 99, 99, //
    24, 26, 56, 99, 99, 99, 99, 99, //
    47, 66, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99,
];

impl QuantTable {
    pub fn ones() -> Self {
        QuantTable([1; 64])
    }

    /// Builds a table, rejecting entries outside `1..=255`.
    pub fn new(entries: [u16; 64]) -> Option<Self> {
        entries
            .iter()
            .all(|&e| (1..=255).contains(&e))
            .then_some(QuantTable(entries))
    }

    /// Scales a base table by the usual linear quality rule
    /// (`5000/q` below 50, `200 - 2q` otherwise), clamped to `1..=255`.
    pub fn scaled(base: &[u16; 64], quality: u8) -> Self {
        let q = quality.clamp(1, 100) as u32;
        let scale = if q < 50 { 5000 / q } else { 200 - 2 * q };
        let mut out = [0u16; 64];
        for (o, &b) in out.iter_mut().zip(base) {
            let v = (b as u32 * scale + 50) / 100;
            *o = v.clamp(1, 255) as u16;
        }
        QuantTable(out)
    }

    pub fn luma(quality: u8) -> Self {
        Self::scaled(&STD_LUMA_QUANT, quality)
    }

    pub fn chroma(quality: u8) -> Self {
        Self::scaled(&STD_CHROMA_QUANT, quality)
    }
}

/// Zig-zag index → natural index.
pub const ZIGZAG_TO_NATURAL: [usize; 64] = [
    0, 1, 8, 16, 9, 2, 3, 10, //
    17, 24, 32, 25, 18, 11, 4, 5, //
    12, 19, 26, 33, 40, 48, 41, 34, //
    27, 20, 13, 6, 7, 14, 21, 28, //
    35, 42, 49, 56, 57, 50, 43, 36, //
    29, 22, 15, 23, 30, 37, 44, 51, //
    58, 59, 52, 45, 38, 31, 39, 46, //
    53, 60, 61, 54, 47, 55, 62, 63,
];

/// Natural index → zig-zag index.
pub const NATURAL_TO_ZIGZAG: [usize; 64] = {
    let mut table = [0usize; 64];
    let mut i = 0;
    while i < 64 {
        table[ZIGZAG_TO_NATURAL[i]] = i;
        i += 1;
    }
    table
};

/// `(u, v)` position of zig-zag index `k`.
pub fn zigzag_position(k: usize) -> (usize, usize) {
    let n = ZIGZAG_TO_NATURAL[k];
    (n / 8, n % 8)
}

pub fn zigzag_scan<T: Copy>(natural: &[T; 64]) -> [T; 64] {
    std::array::from_fn(|k| natural[ZIGZAG_TO_NATURAL[k]])
}

pub fn zigzag_unscan<T: Copy>(scanned: &[T; 64]) -> [T; 64] {
    std::array::from_fn(|n| scanned[NATURAL_TO_ZIGZAG[n]])
}

/// `basis[u][x] = C_u / 2 · cos((2x+1)uπ/16)`; the 2-D transform is `B f Bᵀ`.
fn basis() -> &'static [[f64; 8]; 8] {
    static BASIS: OnceLock<[[f64; 8]; 8]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut b = [[0.0; 8]; 8];
        for (u, row) in b.iter_mut().enumerate() {
            let c = if u == 0 { std::f64::consts::FRAC_1_SQRT_2 } else { 1.0 };
            for (x, e) in row.iter_mut().enumerate() {
                *e = 0.5 * c * ((2 * x + 1) as f64 * u as f64 * PI / 16.0).cos();
            }
        }
        b
    })
}

pub fn forward_dct(block: &PixelBlock) -> CoeffBlock {
    let b = basis();
    let f = &block.0;
    // tmp[u][y] = Σ_x b[u][x] f[x][y]
    let mut tmp = [0.0f64; 64];
    for u in 0..8 {
        for x in 0..8 {
            let w = b[u][x];
            for y in 0..8 {
                tmp[u * 8 + y] += w * f[x * 8 + y];
            }
        }
    }
    let mut out = [0.0f64; 64];
    for u in 0..8 {
        for v in 0..8 {
            let mut acc = 0.0;
            for y in 0..8 {
                acc += tmp[u * 8 + y] * b[v][y];
            }
            out[u * 8 + v] = acc;
        }
    }
    CoeffBlock(out)
}

pub fn inverse_dct(coeffs: &CoeffBlock) -> PixelBlock {
    let b = basis();
    let c = &coeffs.0;
    // tmp[x][v] = Σ_u b[u][x] F[u][v]
    let mut tmp = [0.0f64; 64];
    for x in 0..8 {
        for u in 0..8 {
            let w = b[u][x];
            for v in 0..8 {
                tmp[x * 8 + v] += w * c[u * 8 + v];
            }
        }
    }
    let mut out = [0.0f64; 64];
    for x in 0..8 {
        for y in 0..8 {
            let mut acc = 0.0;
            for v in 0..8 {
                acc += tmp[x * 8 + v] * b[v][y];
            }
            out[x * 8 + y] = acc;
        }
    }
    PixelBlock(out)
}

/// Rounds half away from zero, which is what `f64::round` does.
pub fn quantize(coeffs: &CoeffBlock, table: &QuantTable) -> QuantizedBlock {
    QuantizedBlock(std::array::from_fn(|i| {
        (coeffs.0[i] / table.0[i] as f64).round() as i32
    }))
}

pub fn dequantize(q: &QuantizedBlock, table: &QuantTable) -> CoeffBlock {
    CoeffBlock(std::array::from_fn(|i| q.0[i] as f64 * table.0[i] as f64))
}

/// JFIF RGB → YCbCr, clamped to `[0, 255]`.
pub fn rgb_to_ycbcr(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let y = 0.299 * r + 0.587 * g + 0.114 * b;
    let cb = -0.168_736 * r - 0.331_264 * g + 0.5 * b + 128.0;
    let cr = 0.5 * r - 0.418_688 * g - 0.081_312 * b + 128.0;
    (y.clamp(0.0, 255.0), cb.clamp(0.0, 255.0), cr.clamp(0.0, 255.0))
}

/// JFIF YCbCr → RGB, unclamped.
pub fn ycbcr_to_rgb(y: f64, cb: f64, cr: f64) -> (f64, f64, f64) {
    let cb = cb - 128.0;
    let cr = cr - 128.0;
    (
        y + 1.402 * cr,
        y - 0.344_136 * cb - 0.714_136 * cr,
        y + 1.772 * cb,
    )
}

/// A single-channel sample grid, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize) -> Self {
        Plane { width, height, data: vec![0.0; width * height] }
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Plane { width, height, data: vec![value; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Plane { width, height, data }
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    /// Sample with edge replication for out-of-range coordinates.
    #[inline]
    pub fn at_clamped(&self, row: isize, col: isize) -> f64 {
        let r = row.clamp(0, self.height as isize - 1) as usize;
        let c = col.clamp(0, self.width as isize - 1) as usize;
        self.at(r, c)
    }

    /// Extends the plane to `width × height` by replicating the last row/column.
    pub fn pad_replicate(&self, width: usize, height: usize) -> Plane {
        Plane::from_fn(width, height, |r, c| self.at_clamped(r as isize, c as isize))
    }

    /// Copies the 8×8 block whose top-left corner is `(8·brow, 8·bcol)`,
    /// replicating edges past the plane bounds.
    pub fn block(&self, brow: usize, bcol: usize) -> PixelBlock {
        let mut out = [0.0; 64];
        for x in 0..8 {
            for y in 0..8 {
                out[x * 8 + y] = self.at_clamped((brow * 8 + x) as isize, (bcol * 8 + y) as isize);
            }
        }
        PixelBlock(out)
    }

    pub fn put_block(&mut self, brow: usize, bcol: usize, block: &PixelBlock) {
        for x in 0..8 {
            let r = brow * 8 + x;
            if r >= self.height {
                break;
            }
            for y in 0..8 {
                let c = bcol * 8 + y;
                if c >= self.width {
                    break;
                }
                self.data[r * self.width + c] = block.0[x * 8 + y];
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResampleDirection {
    Down,
    Up,
}

/// Factor-2 chroma resampling.
///
/// `Down` is a 2×2 box average (odd sizes are edge-replicated first). `Up` is
/// centered bilinear interpolation to twice the size: output sample `i` sits at
/// input coordinate `(i + 0.5) / 2 - 0.5`, giving the 3/4–1/4 triangle weights.
pub fn chroma_resample(plane: &Plane, direction: ResampleDirection) -> Plane {
    match direction {
        ResampleDirection::Down => {
            let w = plane.width.div_ceil(2);
            let h = plane.height.div_ceil(2);
            Plane::from_fn(w, h, |r, c| {
                let (r2, c2) = (2 * r as isize, 2 * c as isize);
                (plane.at_clamped(r2, c2)
                    + plane.at_clamped(r2, c2 + 1)
                    + plane.at_clamped(r2 + 1, c2)
                    + plane.at_clamped(r2 + 1, c2 + 1))
                    / 4.0
            })
        }
        ResampleDirection::Up => upsample2(plane, plane.width * 2, plane.height * 2),
    }
}

/// Centered bilinear 2× upsampling cropped to `width × height`.
pub fn upsample2(plane: &Plane, width: usize, height: usize) -> Plane {
    // Each output index maps to (nearest source, neighbour, 3/4 and 1/4 weights).
    let taps = |i: usize| -> (isize, isize) {
        let s = (i / 2) as isize;
        if i % 2 == 0 {
            (s, s - 1)
        } else {
            (s, s + 1)
        }
    };
    Plane::from_fn(width, height, |r, c| {
        let (r0, r1) = taps(r);
        let (c0, c1) = taps(c);
        let top = 0.75 * plane.at_clamped(r0, c0) + 0.25 * plane.at_clamped(r0, c1);
        let bot = 0.75 * plane.at_clamped(r1, c0) + 0.25 * plane.at_clamped(r1, c1);
        0.75 * top + 0.25 * bot
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(k: usize) -> f64 {
        if k == 0 {
            std::f64::consts::FRAC_1_SQRT_2
        } else {
            1.0
        }
    }

    /// Literal quadruple loop of the defining sum.
    fn oracle_forward(f: &PixelBlock) -> CoeffBlock {
        let mut out = [0.0; 64];
        for u in 0..8 {
            for v in 0..8 {
                let mut s = 0.0;
                for x in 0..8 {
                    for y in 0..8 {
                        s += f.get(x, y)
                            * ((PI * (2 * x + 1) as f64 * u as f64) / 16.0).cos()
                            * ((PI * (2 * y + 1) as f64 * v as f64) / 16.0).cos();
                    }
                }
                out[u * 8 + v] = c(u) * c(v) / 4.0 * s;
            }
        }
        CoeffBlock(out)
    }

    fn oracle_inverse(f: &CoeffBlock) -> PixelBlock {
        let mut out = [0.0; 64];
        for x in 0..8 {
            for y in 0..8 {
                let mut s = 0.0;
                for u in 0..8 {
                    for v in 0..8 {
                        s += c(u) * c(v) / 4.0
                            * f.get(u, v)
                            * ((PI * (2 * x + 1) as f64 * u as f64) / 16.0).cos()
                            * ((PI * (2 * y + 1) as f64 * v as f64) / 16.0).cos();
                    }
                }
                out[x * 8 + y] = s;
            }
        }
        PixelBlock(out)
    }

    fn random_int_block(rng: &mut ChaCha8Rng) -> PixelBlock {
        PixelBlock(std::array::from_fn(|_| rng.gen_range(-128..=127) as f64))
    }

    fn max_abs_diff(a: &[f64; 64], b: &[f64; 64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn constant_block_is_dc_only() {
        for c in [-128.0, -3.5, 0.0, 17.0, 127.0] {
            let f = forward_dct(&PixelBlock([c; 64]));
            assert!((f.dc() - 8.0 * c).abs() < 1e-12);
            assert!(f.0[1..].iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn impulse_response() {
        let mut p = PixelBlock::zeros();
        p.0[0] = 1.0;
        let f = forward_dct(&p);
        for u in 0..8 {
            for v in 0..8 {
                let want = c(u) * c(v) / 4.0 * (PI * u as f64 / 16.0).cos() * (PI * v as f64 / 16.0).cos();
                assert!((f.get(u, v) - want).abs() < 1e-14, "({u},{v})");
            }
        }
    }

    #[test]
    fn forward_matches_direct_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let b = random_int_block(&mut rng);
            assert!(max_abs_diff(&forward_dct(&b).0, &oracle_forward(&b).0) < 1e-10);
        }
    }

    #[test]
    fn inverse_matches_direct_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..50 {
            let f = CoeffBlock(std::array::from_fn(|_| rng.gen_range(-1024.0..1024.0)));
            assert!(max_abs_diff(&inverse_dct(&f).0, &oracle_inverse(&f).0) < 1e-10);
        }
    }

    #[test]
    fn inverse_of_dc_only_is_constant() {
        let mut f = CoeffBlock::zeros();
        f.0[0] = 8.0 * 42.0;
        let p = inverse_dct(&f);
        assert!(p.0.iter().all(|v| (v - 42.0).abs() < 1e-12));
    }

    #[test]
    fn ycbcr_known_points() {
        assert_eq!(rgb_to_ycbcr(0.0, 0.0, 0.0), (0.0, 128.0, 128.0));
        let (y, cb, cr) = rgb_to_ycbcr(255.0, 255.0, 255.0);
        assert!((y - 255.0).abs() < 1e-9 && (cb - 128.0).abs() < 1e-9 && (cr - 128.0).abs() < 1e-9);
        // Hand evaluation for pure red: 0.299·255, −0.168736·255+128, 0.5·255+128 (clamped).
        let (y, cb, cr) = rgb_to_ycbcr(255.0, 0.0, 0.0);
        assert!((y - 76.245).abs() < 1e-9);
        assert!((cb - 84.97232).abs() < 1e-9);
        assert!((cr - 255.0).abs() < 1e-9);
    }

    #[test]
    fn ycbcr_round_trip_within_one_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100_000 {
            let rgb: [u8; 3] = rng.gen();
            let (y, cb, cr) = rgb_to_ycbcr(rgb[0] as f64, rgb[1] as f64, rgb[2] as f64);
            let (y, cb, cr) = (y.round(), cb.round(), cr.round());
            let (r, g, b) = ycbcr_to_rgb(y, cb, cr);
            for (got, want) in [r, g, b].iter().zip(rgb) {
                assert!((got.round().clamp(0.0, 255.0) - want as f64).abs() <= 1.0 + 1e-9);
            }
        }
    }

    #[test]
    fn quantize_with_ones_rounds() {
        let f = CoeffBlock(std::array::from_fn(|i| i as f64 * 0.5 - 10.25));
        let q = quantize(&f, &QuantTable::ones());
        for i in 0..64 {
            assert_eq!(q.0[i], f.0[i].round() as i32);
        }
        // half away from zero
        let mut h = CoeffBlock::zeros();
        h.0[0] = 2.5;
        h.0[1] = -2.5;
        let q = quantize(&h, &QuantTable::ones());
        assert_eq!((q.0[0], q.0[1]), (3, -3));
    }

    #[test]
    fn quantize_against_luma_table_by_hand() {
        // coefficient 100 everywhere except a few chosen entries
        let mut f = CoeffBlock([100.0; 64]);
        f.0[0] = -415.37;
        f.0[1] = -30.19;
        f.0[63] = 49.5;
        let q = quantize(&f, &QuantTable(STD_LUMA_QUANT));
        assert_eq!(q.0[0], -26); // -415.37/16 = -25.96
        assert_eq!(q.0[1], -3); // -30.19/11 = -2.74
        assert_eq!(q.0[63], 1); // 49.5/99 = 0.5 → 1
        assert_eq!(q.0[2], 10); // 100/10
        assert_eq!(q.0[5], 3); // 100/40 = 2.5 → 3
        assert_eq!(q.0[6], 2); // 100/51 = 1.96
    }

    #[test]
    fn dequantize_error_bounded_by_half_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let t = QuantTable::luma(50);
        for _ in 0..200 {
            let f = CoeffBlock(std::array::from_fn(|_| rng.gen_range(-1000.0..1000.0)));
            let r = dequantize(&quantize(&f, &t), &t);
            for i in 0..64 {
                assert!((r.0[i] - f.0[i]).abs() <= t.0[i] as f64 / 2.0 + 1e-9);
            }
        }
    }

    #[test]
    fn quality_scaling_rule() {
        assert_eq!(QuantTable::luma(50).0, STD_LUMA_QUANT);
        assert!(QuantTable::luma(100).0.iter().all(|&e| e == 1));
        let t = QuantTable::luma(1);
        assert!(t.0.iter().all(|&e| e <= 255 && e >= 1));
        assert_eq!(QuantTable::luma(75).0[0], 8);
        assert_eq!(QuantTable::luma(25).0[0], 32);
        assert!(QuantTable::new([0; 64]).is_none());
    }

    #[test]
    fn zigzag_order_prefix_and_bijection() {
        let first: Vec<_> = (0..5).map(zigzag_position).collect();
        assert_eq!(first, vec![(0, 0), (0, 1), (1, 0), (2, 0), (1, 1)]);
        let mut seen = [false; 64];
        for &n in &ZIGZAG_TO_NATURAL {
            assert!(!seen[n]);
            seen[n] = true;
        }
        for k in 0..64 {
            assert_eq!(NATURAL_TO_ZIGZAG[ZIGZAG_TO_NATURAL[k]], k);
        }
        // consecutive entries step by one along or between anti-diagonals
        for k in 1..64 {
            let (a, b) = (zigzag_position(k - 1), zigzag_position(k));
            let (da, db) = (a.0 + a.1, b.0 + b.1);
            assert!(db == da || db == da + 1);
        }
    }

    #[test]
    fn highest_frequency_scans_last() {
        let mut b = [0i32; 64];
        b[63] = 5;
        let s = zigzag_scan(&b);
        assert_eq!(s[63], 5);
        assert!(s[..63].iter().all(|&v| v == 0));
    }

    #[test]
    fn chroma_resample_cases() {
        let p = Plane { width: 2, height: 2, data: vec![0.0, 2.0, 4.0, 6.0] };
        let d = chroma_resample(&p, ResampleDirection::Down);
        assert_eq!((d.width, d.height, d.data.clone()), (1, 1, vec![3.0]));

        let k = Plane::filled(7, 5, 9.5);
        let d = chroma_resample(&k, ResampleDirection::Down);
        assert_eq!((d.width, d.height), (4, 3));
        assert!(d.data.iter().all(|&v| v == 9.5));
        let u = chroma_resample(&k, ResampleDirection::Up);
        assert_eq!((u.width, u.height), (14, 10));
        assert!(u.data.iter().all(|&v| (v - 9.5).abs() < 1e-12));
    }

    #[test]
    fn resample_round_trip_on_gradient() {
        // Linear ramp a·r + b·c: box-down then centered-bilinear-up is exact in
        // the interior; only the replicated border rows/cols deviate.
        let (a, b) = (1.5, 0.75);
        let p = Plane::from_fn(32, 24, |r, c| a * r as f64 + b * c as f64);
        let back = chroma_resample(&chroma_resample(&p, ResampleDirection::Down), ResampleDirection::Up);
        let mut interior = 0.0f64;
        let mut border = 0.0f64;
        for r in 0..24 {
            for c in 0..32 {
                let e = (back.at(r, c) - p.at(r, c)).abs();
                if r == 0 || c == 0 || r == 23 || c == 31 {
                    border = border.max(e);
                } else {
                    interior = interior.max(e);
                }
            }
        }
        assert!(interior < 1e-12, "interior {interior}");
        // Border row 0 evaluates to D[0] = a·0.5 instead of 0 (and symmetrically
        // at the far edge), so the error is half a slope per axis.
        let bound = 0.5 * a + 0.5 * b;
        assert!(border <= bound + 1e-12, "border {border} > {bound}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn parseval_round_trip_linearity(
            a in proptest::array::uniform32(-128.0f64..128.0),
            a2 in proptest::array::uniform32(-128.0f64..128.0),
            b in proptest::array::uniform32(-128.0f64..128.0),
            b2 in proptest::array::uniform32(-128.0f64..128.0),
            alpha in -3.0f64..3.0,
            beta in -3.0f64..3.0,
        ) {
            let pa = PixelBlock(std::array::from_fn(|i| if i < 32 { a[i] } else { a2[i - 32] }));
            let pb = PixelBlock(std::array::from_fn(|i| if i < 32 { b[i] } else { b2[i - 32] }));
            let fa = forward_dct(&pa);
            let e_s: f64 = pa.0.iter().map(|v| v * v).sum();
            let e_f: f64 = fa.0.iter().map(|v| v * v).sum();
            prop_assert!((e_s - e_f).abs() <= 1e-9 * e_s.max(1e-300));
            prop_assert!(max_abs_diff(&inverse_dct(&fa).0, &pa.0) < 1e-10);
            prop_assert!((fa.dc() - 8.0 * pa.mean()).abs() < 1e-12);

            let mix = PixelBlock(std::array::from_fn(|i| alpha * pa.0[i] + beta * pb.0[i]));
            let fb = forward_dct(&pb);
            let fm = forward_dct(&mix);
            for i in 0..64 {
                prop_assert!((fm.0[i] - (alpha * fa.0[i] + beta * fb.0[i])).abs() < 1e-9);
            }
        }

        #[test]
        fn zigzag_unscan_inverts_scan(v in proptest::collection::vec(any::<i32>(), 64)) {
            let arr: [i32; 64] = v.try_into().unwrap();
            prop_assert_eq!(zigzag_unscan(&zigzag_scan(&arr)), arr);
        }
    }
}
