use super::huffman::{category, magnitude_bits, BitWriter, HuffmanTable, TableClass};
use super::{component_dims, ComponentKind, ComponentPlane, JpegError, JpegImage};
use crate::dct::{self, Plane, QuantTable, QuantizedBlock, ResampleDirection, ZIGZAG_TO_NATURAL};
use crate::image::RgbImage;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Subsampling {
    /// 4:4:4
    None,
    /// 4:2:0
    Half,
}

/// Encodes RGB pixels as a baseline JFIF stream with Annex-K tables scaled to
/// `quality` (1..=100).
pub fn encode_rgb(image: &RgbImage, quality: u8, subsampling: Subsampling) -> Result<Vec<u8>, JpegError> {
    let coeffs = rgb_to_jpeg_image(image, quality, subsampling)?;
    encode_jpeg(&coeffs)
}

/// Forward path of the codec up to quantization: colour conversion, optional
/// chroma decimation, level shift, block DCT, quantization.
pub fn rgb_to_jpeg_image(image: &RgbImage, quality: u8, subsampling: Subsampling) -> Result<JpegImage, JpegError> {
    let (w, h) = (image.width, image.height);
    if w == 0 || h == 0 || w > 65535 || h > 65535 {
        return Err(JpegError::InvalidDimensions { width: w, height: h });
    }
    if !(1..=100).contains(&quality) {
        return Err(JpegError::CorruptStream(format!("quality {quality} outside 1..=100")));
    }
    let mut y = Plane::new(w, h);
    let mut cb = Plane::new(w, h);
    let mut cr = Plane::new(w, h);
    for i in 0..w * h {
        let p = &image.data[i * 3..i * 3 + 3];
        let (yy, b, r) = dct::rgb_to_ycbcr(p[0] as f64, p[1] as f64, p[2] as f64);
        y.data[i] = yy;
        cb.data[i] = b;
        cr.data[i] = r;
    }
    let (hy, vy) = match subsampling {
        Subsampling::None => (1u8, 1u8),
        Subsampling::Half => {
            cb = dct::chroma_resample(&cb, ResampleDirection::Down);
            cr = dct::chroma_resample(&cr, ResampleDirection::Down);
            (2, 2)
        }
    };
    let luma_q = QuantTable::luma(quality);
    let chroma_q = QuantTable::chroma(quality);
    let specs = [
        (ComponentKind::Y, y, hy, vy, 0u8, &luma_q),
        (ComponentKind::Cb, cb, 1, 1, 1, &chroma_q),
        (ComponentKind::Cr, cr, 1, 1, 1, &chroma_q),
    ];
    let components = specs
        .into_iter()
        .enumerate()
        .map(|(i, (kind, plane, ch, cv, tq, table))| {
            let (cw, chh) = component_dims(w, h, ch, cv, hy, vy);
            debug_assert_eq!((cw, chh), (plane.width, plane.height));
            let (bw, bh) = (cw.div_ceil(8), chh.div_ceil(8));
            let mut blocks = Vec::with_capacity(bw * bh);
            for r in 0..bh {
                for c in 0..bw {
                    let mut px = plane.block(r, c);
                    px.0.iter_mut().for_each(|s| *s -= 128.0);
                    blocks.push(dct::quantize(&dct::forward_dct(&px), table));
                }
            }
            ComponentPlane {
                kind,
                id: i as u8 + 1,
                h: ch,
                v: cv,
                quant_table: tq,
                dc_table: tq,
                ac_table: tq,
                blocks_wide: bw,
                blocks_high: bh,
                blocks,
            }
        })
        .collect();
    Ok(JpegImage {
        width: w,
        height: h,
        components,
        quant_tables: [Some(luma_q), Some(chroma_q), None, None],
        huffman_tables: Vec::new(),
        restart_interval: None,
    })
}

fn validate(image: &JpegImage) -> Result<(), JpegError> {
    let (w, h) = (image.width, image.height);
    if w == 0 || h == 0 || w > 65535 || h > 65535 {
        return Err(JpegError::InvalidDimensions { width: w, height: h });
    }
    if image.components.len() != 1 && image.components.len() != 3 {
        return Err(JpegError::UnsupportedFormat(format!("{} components", image.components.len())));
    }
    let (hmax, vmax) = image.max_sampling();
    for (i, c) in image.components.iter().enumerate() {
        if !(1..=2).contains(&c.h) || !(1..=2).contains(&c.v) {
            return Err(JpegError::UnsupportedFormat(format!("sampling factors {}x{}", c.h, c.v)));
        }
        if c.dc_table > 1 || c.ac_table > 1 {
            return Err(JpegError::UnsupportedFormat("encoder writes huffman tables 0 and 1 only".into()));
        }
        let (cw, ch) = component_dims(w, h, c.h, c.v, hmax, vmax);
        if c.blocks_wide != cw.div_ceil(8) || c.blocks_high != ch.div_ceil(8) || c.blocks.len() != c.blocks_wide * c.blocks_high {
            return Err(JpegError::InvalidDimensions { width: w, height: h });
        }
        image.quant_table_for(i)?;
    }
    Ok(())
}

/// Serializes a coefficient image as baseline JFIF: SOI, APP0, DQT, SOF0, DHT,
/// SOS, entropy data, EOI.
///
/// Huffman tables are always the Annex K defaults (DC/AC ids 0 and 1); the
/// image's quantization tables are written verbatim. Blocks missing from a
/// partial edge MCU are filled by replicating the nearest edge block.
pub fn encode_jpeg(image: &JpegImage) -> Result<Vec<u8>, JpegError> {
    validate(image)?;
    let mut out = Vec::with_capacity(1024);
    out.extend_from_slice(&[0xFF, 0xD8]);
    // APP0 JFIF 1.01, no thumbnail
    out.extend_from_slice(&[0xFF, 0xE0, 0x00, 0x10, b'J', b'F', b'I', b'F', 0x00, 0x01, 0x01, 0x00, 0x00, 0x01, 0x00, 0x01, 0x00, 0x00]);

    let mut used: Vec<u8> = image.components.iter().map(|c| c.quant_table).collect();
    used.sort_unstable();
    used.dedup();
    for id in used {
        let t = image.quant_tables[id as usize].unwrap();
        out.extend_from_slice(&[0xFF, 0xDB, 0x00, 67, id]);
        for &n in &ZIGZAG_TO_NATURAL {
            out.push(t.0[n] as u8);
        }
    }

    let n = image.components.len();
    out.extend_from_slice(&[0xFF, 0xC0]);
    out.extend_from_slice(&((8 + 3 * n) as u16).to_be_bytes());
    out.push(8);
    out.extend_from_slice(&(image.height as u16).to_be_bytes());
    out.extend_from_slice(&(image.width as u16).to_be_bytes());
    out.push(n as u8);
    for c in &image.components {
        out.extend_from_slice(&[c.id, (c.h << 4) | c.v, c.quant_table]);
    }

    let tables = std_tables();
    let dht_ids: &[u8] = if image.components.iter().any(|c| c.dc_table == 1 || c.ac_table == 1) { &[0, 1] } else { &[0] };
    for &id in dht_ids {
        for class in [TableClass::Dc, TableClass::Ac] {
            let t = tables.iter().find(|t| t.class == class && t.id == id).unwrap();
            let len = 2 + 1 + 16 + t.symbols.len();
            out.extend_from_slice(&[0xFF, 0xC4]);
            out.extend_from_slice(&(len as u16).to_be_bytes());
            out.push(((class == TableClass::Ac) as u8) << 4 | id);
            out.extend_from_slice(&t.counts);
            out.extend_from_slice(&t.symbols);
        }
    }

    out.extend_from_slice(&[0xFF, 0xDA]);
    out.extend_from_slice(&((6 + 2 * n) as u16).to_be_bytes());
    out.push(n as u8);
    for c in &image.components {
        out.extend_from_slice(&[c.id, (c.dc_table << 4) | c.ac_table]);
    }
    out.extend_from_slice(&[0, 63, 0]);

    out.extend_from_slice(&entropy_segment(image, &tables)?);
    out.extend_from_slice(&[0xFF, 0xD9]);
    Ok(out)
}

fn std_tables() -> Vec<HuffmanTable> {
    vec![
        HuffmanTable::std_dc_luma(),
        HuffmanTable::std_ac_luma(),
        HuffmanTable::std_dc_chroma(),
        HuffmanTable::std_ac_chroma(),
    ]
}

/// The Huffman-coded scan payload, with byte stuffing, in interleaved MCU order
/// (or block raster order for a single component).
pub fn entropy_segment(image: &JpegImage, tables: &[HuffmanTable]) -> Result<Vec<u8>, JpegError> {
    let find = |class, id| tables.iter().find(|t| t.class == class && t.id == id).unwrap();
    let mut w = BitWriter::new();
    let mut preds = vec![0i32; image.components.len()];
    if image.components.len() == 1 {
        let c = &image.components[0];
        let (dc, ac) = (find(TableClass::Dc, c.dc_table), find(TableClass::Ac, c.ac_table));
        for b in &c.blocks {
            encode_block(&mut w, b, &mut preds[0], dc, ac)?;
        }
        return Ok(w.finish());
    }
    let (hmax, vmax) = image.max_sampling();
    let mcux = image.width.div_ceil(8 * hmax as usize);
    let mcuy = image.height.div_ceil(8 * vmax as usize);
    for my in 0..mcuy {
        for mx in 0..mcux {
            for (slot, c) in image.components.iter().enumerate() {
                let (dc, ac) = (find(TableClass::Dc, c.dc_table), find(TableClass::Ac, c.ac_table));
                for by in 0..c.v as usize {
                    for bx in 0..c.h as usize {
                        let row = (my * c.v as usize + by).min(c.blocks_high - 1);
                        let col = (mx * c.h as usize + bx).min(c.blocks_wide - 1);
                        encode_block(&mut w, c.block(row, col), &mut preds[slot], dc, ac)?;
                    }
                }
            }
        }
    }
    Ok(w.finish())
}

fn emit(w: &mut BitWriter, table: &HuffmanTable, symbol: u8) -> Result<(), JpegError> {
    let (code, len) = table
        .code_for(symbol)
        .ok_or_else(|| JpegError::CoefficientOutOfRange(format!("symbol {symbol:#04x} not in table")))?;
    w.write_bits(code as u32, len as u32);
    Ok(())
}

fn encode_block(
    w: &mut BitWriter,
    block: &QuantizedBlock,
    pred: &mut i32,
    dc: &HuffmanTable,
    ac: &HuffmanTable,
) -> Result<(), JpegError> {
    let diff = block.0[0] - *pred;
    if diff.abs() > 2047 {
        return Err(JpegError::CoefficientOutOfRange(format!("DC difference {diff}")));
    }
    *pred = block.0[0];
    let s = category(diff);
    emit(w, dc, s as u8)?;
    w.write_bits(magnitude_bits(diff, s), s);

    let mut run = 0u32;
    for k in 1..64 {
        let v = block.0[ZIGZAG_TO_NATURAL[k]];
        if v == 0 {
            run += 1;
            continue;
        }
        if v.abs() > 1023 {
            return Err(JpegError::CoefficientOutOfRange(format!("AC coefficient {v}")));
        }
        while run >= 16 {
            emit(w, ac, 0xF0)?;
            run -= 16;
        }
        let s = category(v);
        emit(w, ac, ((run << 4) | s) as u8)?;
        w.write_bits(magnitude_bits(v, s), s);
        run = 0;
    }
    if run > 0 {
        emit(w, ac, 0x00)?;
    }
    Ok(())
}
