use super::huffman::{extend, BitReader, HuffmanTable, TableClass};
use super::{component_dims, ComponentKind, ComponentPlane, JpegError, JpegImage};
use crate::dct::{QuantTable, QuantizedBlock, ZIGZAG_TO_NATURAL};

struct FrameComponent {
    id: u8,
    h: u8,
    v: u8,
    tq: u8,
}

struct Frame {
    width: usize,
    height: usize,
    components: Vec<FrameComponent>,
}

struct State {
    quant: [Option<QuantTable>; 4],
    huffman: Vec<HuffmanTable>,
    restart_interval: Option<u16>,
    frame: Option<Frame>,
    planes: Vec<ComponentPlane>,
    /// Whether each component has been covered by a scan.
    scanned: Vec<bool>,
}

impl State {
    fn table(&self, class: TableClass, id: u8) -> Result<&HuffmanTable, JpegError> {
        self.huffman
            .iter()
            .rev()
            .find(|t| t.class == class && t.id == id)
            .ok_or_else(|| JpegError::CorruptStream(format!("scan references undefined {class:?} table {id}")))
    }
}

fn be16(data: &[u8], pos: usize) -> Result<usize, JpegError> {
    match (data.get(pos), data.get(pos + 1)) {
        (Some(&a), Some(&b)) => Ok(((a as usize) << 8) | b as usize),
        _ => Err(JpegError::TruncatedInput),
    }
}

/// Returns the marker segment payload (after the length field).
fn segment(data: &[u8], pos: usize) -> Result<&[u8], JpegError> {
    let len = be16(data, pos)?;
    if len < 2 {
        return Err(JpegError::CorruptStream(format!("segment length {len}")));
    }
    data.get(pos + 2..pos + len).ok_or(JpegError::TruncatedInput)
}

/// Parses a baseline JPEG into quantized coefficient planes.
///
/// Runs Huffman decoding, run-length expansion, zig-zag unscan and DC
/// prediction only: no dequantization and no inverse transform.
pub fn parse_jpeg(data: &[u8]) -> Result<JpegImage, JpegError> {
    if data.len() < 2 {
        return Err(JpegError::TruncatedInput);
    }
    if data[0] != 0xFF || data[1] != 0xD8 {
        return Err(JpegError::CorruptStream("missing SOI marker".into()));
    }
    let mut st = State {
        quant: [None; 4],
        huffman: Vec::new(),
        restart_interval: None,
        frame: None,
        planes: Vec::new(),
        scanned: Vec::new(),
    };
    let mut pos = 2;
    loop {
        // markers may be preceded by fill bytes
        while data.get(pos) == Some(&0xFF) && data.get(pos + 1) == Some(&0xFF) {
            pos += 1;
        }
        let (Some(&ff), Some(&marker)) = (data.get(pos), data.get(pos + 1)) else {
            return Err(JpegError::TruncatedInput);
        };
        if ff != 0xFF {
            return Err(JpegError::CorruptStream(format!("expected marker at offset {pos}")));
        }
        pos += 2;
        match marker {
            0xD9 => break,
            0xD8 => return Err(JpegError::CorruptStream("unexpected second SOI".into())),
            0x01 | 0xD0..=0xD7 => {
                return Err(JpegError::CorruptStream(format!("stray marker FF{marker:02X}")))
            }
            0xC0 | 0xC1 => {
                if st.frame.is_some() {
                    return Err(JpegError::CorruptStream("multiple SOF markers".into()));
                }
                let seg = segment(data, pos)?;
                parse_sof(&mut st, seg)?;
                pos += 2 + seg.len();
            }
            0xC2 => return Err(JpegError::UnsupportedFormat("progressive DCT (SOF2)".into())),
            0xC3 | 0xC5..=0xC7 | 0xCB | 0xCD..=0xCF => {
                return Err(JpegError::UnsupportedFormat(format!("lossless/hierarchical frame SOF{}", marker - 0xC0)))
            }
            0xC9 | 0xCA => return Err(JpegError::UnsupportedFormat("arithmetic coding".into())),
            0xCC => return Err(JpegError::UnsupportedFormat("arithmetic coding conditioning (DAC)".into())),
            0xC4 => {
                let seg = segment(data, pos)?;
                parse_dht(&mut st, seg)?;
                pos += 2 + seg.len();
            }
            0xDB => {
                let seg = segment(data, pos)?;
                parse_dqt(&mut st, seg)?;
                pos += 2 + seg.len();
            }
            0xDD => {
                let seg = segment(data, pos)?;
                if seg.len() != 2 {
                    return Err(JpegError::CorruptStream("DRI length".into()));
                }
                let ri = be16(seg, 0)? as u16;
                st.restart_interval = (ri > 0).then_some(ri);
                pos += 4;
            }
            0xDC => return Err(JpegError::UnsupportedFormat("DNL marker".into())),
            0xDA => {
                let seg = segment(data, pos)?;
                let header_len = seg.len();
                pos = decode_scan(&mut st, seg, data, pos + 2 + header_len)?;
            }
            0xE0..=0xEF | 0xFE => {
                let seg = segment(data, pos)?;
                pos += 2 + seg.len();
            }
            _ => {
                let seg = segment(data, pos)?;
                pos += 2 + seg.len();
            }
        }
    }

    let frame = st.frame.ok_or_else(|| JpegError::CorruptStream("no frame header".into()))?;
    if st.planes.is_empty() || st.scanned.iter().any(|s| !s) {
        return Err(JpegError::CorruptStream("image data missing for some components".into()));
    }
    for (comp, fc) in st.planes.iter().zip(&frame.components) {
        if st.quant[fc.tq as usize].is_none() {
            return Err(JpegError::CorruptStream(format!("component {} uses undefined quant table {}", comp.id, fc.tq)));
        }
    }
    Ok(JpegImage {
        width: frame.width,
        height: frame.height,
        components: st.planes,
        quant_tables: st.quant,
        huffman_tables: st.huffman,
        restart_interval: st.restart_interval,
    })
}

fn parse_sof(st: &mut State, seg: &[u8]) -> Result<(), JpegError> {
    if seg.len() < 6 {
        return Err(JpegError::TruncatedInput);
    }
    let precision = seg[0];
    if precision != 8 {
        return Err(JpegError::UnsupportedFormat(format!("{precision}-bit sample precision")));
    }
    let height = be16(seg, 1)?;
    let width = be16(seg, 3)?;
    let n = seg[5] as usize;
    if height == 0 {
        return Err(JpegError::UnsupportedFormat("height defined by DNL".into()));
    }
    if width == 0 {
        return Err(JpegError::CorruptStream("zero width".into()));
    }
    if n != 1 && n != 3 {
        return Err(JpegError::UnsupportedFormat(format!("{n} components")));
    }
    if seg.len() != 6 + 3 * n {
        return Err(JpegError::CorruptStream("SOF length".into()));
    }
    let mut components = Vec::with_capacity(n);
    for i in 0..n {
        let b = &seg[6 + 3 * i..9 + 3 * i];
        let (h, v) = (b[1] >> 4, b[1] & 0x0F);
        if !(1..=2).contains(&h) || !(1..=2).contains(&v) {
            return Err(JpegError::UnsupportedFormat(format!("sampling factors {h}x{v}")));
        }
        if b[2] > 3 {
            return Err(JpegError::CorruptStream(format!("quant table id {}", b[2])));
        }
        if components.iter().any(|c: &FrameComponent| c.id == b[0]) {
            return Err(JpegError::CorruptStream(format!("duplicate component id {}", b[0])));
        }
        components.push(FrameComponent { id: b[0], h, v, tq: b[2] });
    }
    let hmax = components.iter().map(|c| c.h).max().unwrap();
    let vmax = components.iter().map(|c| c.v).max().unwrap();
    let kinds = [ComponentKind::Y, ComponentKind::Cb, ComponentKind::Cr];
    st.planes = components
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let (cw, ch) = component_dims(width, height, c.h, c.v, hmax, vmax);
            let (bw, bh) = (cw.div_ceil(8), ch.div_ceil(8));
            ComponentPlane {
                kind: kinds[i],
                id: c.id,
                h: c.h,
                v: c.v,
                quant_table: c.tq,
                dc_table: 0,
                ac_table: 0,
                blocks_wide: bw,
                blocks_high: bh,
                blocks: vec![QuantizedBlock::zeros(); bw * bh],
            }
        })
        .collect();
    if st.planes.len() == 3 && (st.planes[1].h > st.planes[0].h || st.planes[1].v > st.planes[0].v) {
        return Err(JpegError::UnsupportedFormat("chroma sampled above luma".into()));
    }
    st.scanned = vec![false; n];
    st.frame = Some(Frame { width, height, components });
    Ok(())
}

fn parse_dqt(st: &mut State, mut seg: &[u8]) -> Result<(), JpegError> {
    while !seg.is_empty() {
        let pq = seg[0] >> 4;
        let tq = seg[0] & 0x0F;
        if pq != 0 {
            return Err(JpegError::UnsupportedFormat("16-bit quantization table".into()));
        }
        if tq > 3 {
            return Err(JpegError::CorruptStream(format!("quant table id {tq}")));
        }
        let body = seg.get(1..65).ok_or(JpegError::TruncatedInput)?;
        let mut entries = [0u16; 64];
        for (k, &e) in body.iter().enumerate() {
            entries[ZIGZAG_TO_NATURAL[k]] = e as u16;
        }
        let table = QuantTable::new(entries)
            .ok_or_else(|| JpegError::CorruptStream("zero quantization entry".into()))?;
        st.quant[tq as usize] = Some(table);
        seg = &seg[65..];
    }
    Ok(())
}

fn parse_dht(st: &mut State, mut seg: &[u8]) -> Result<(), JpegError> {
    while !seg.is_empty() {
        if seg.len() < 17 {
            return Err(JpegError::TruncatedInput);
        }
        let class = match seg[0] >> 4 {
            0 => TableClass::Dc,
            1 => TableClass::Ac,
            c => return Err(JpegError::CorruptStream(format!("huffman table class {c}"))),
        };
        let id = seg[0] & 0x0F;
        let counts: [u8; 16] = seg[1..17].try_into().unwrap();
        let total: usize = counts.iter().map(|&c| c as usize).sum();
        let symbols = seg.get(17..17 + total).ok_or(JpegError::TruncatedInput)?.to_vec();
        let table = HuffmanTable::new(class, id, counts, symbols)?;
        st.huffman.retain(|t| !(t.class == class && t.id == id));
        st.huffman.push(table);
        seg = &seg[17 + total..];
    }
    Ok(())
}

/// Decodes one scan, returning the byte offset of the following marker.
fn decode_scan(st: &mut State, header: &[u8], data: &[u8], start: usize) -> Result<usize, JpegError> {
    let frame = st.frame.as_ref().ok_or_else(|| JpegError::CorruptStream("SOS before SOF".into()))?;
    let ns = *header.first().ok_or(JpegError::TruncatedInput)? as usize;
    if ns == 0 || ns > frame.components.len() || header.len() != 4 + 2 * ns {
        return Err(JpegError::CorruptStream("SOS header".into()));
    }
    let mut comps = Vec::with_capacity(ns);
    for i in 0..ns {
        let cid = header[1 + 2 * i];
        let td = header[2 + 2 * i] >> 4;
        let ta = header[2 + 2 * i] & 0x0F;
        let idx = frame
            .components
            .iter()
            .position(|c| c.id == cid)
            .ok_or_else(|| JpegError::CorruptStream(format!("scan component {cid} not in frame")))?;
        comps.push((idx, td, ta));
    }
    let (ss, se, ahal) = (header[1 + 2 * ns], header[2 + 2 * ns], header[3 + 2 * ns]);
    if ss != 0 || se != 63 || ahal != 0 {
        return Err(JpegError::UnsupportedFormat("spectral selection / successive approximation".into()));
    }

    let hmax = frame.components.iter().map(|c| c.h).max().unwrap() as usize;
    let vmax = frame.components.iter().map(|c| c.v).max().unwrap() as usize;
    let tables: Vec<(HuffmanTable, HuffmanTable)> = comps
        .iter()
        .map(|&(_, td, ta)| Ok((st.table(TableClass::Dc, td)?.clone(), st.table(TableClass::Ac, ta)?.clone())))
        .collect::<Result<_, JpegError>>()?;
    for &(idx, td, ta) in &comps {
        st.planes[idx].dc_table = td;
        st.planes[idx].ac_table = ta;
    }

    let mut reader = BitReader::new(data, start);
    let mut preds = vec![0i32; ns];
    let restart = st.restart_interval.map(|r| r as usize);

    // (component slot, block row, block col) sequence in coding order
    let units: Vec<(usize, usize, usize)>;
    let mcu_count;
    let blocks_per_mcu;
    if ns == 1 {
        let plane = &st.planes[comps[0].0];
        // non-interleaved: raster over the component's own block grid
        units = (0..plane.blocks_high)
            .flat_map(|r| (0..plane.blocks_wide).map(move |c| (0, r, c)))
            .collect();
        mcu_count = units.len();
        blocks_per_mcu = 1;
    } else {
        let mcux = frame.width.div_ceil(8 * hmax);
        let mcuy = frame.height.div_ceil(8 * vmax);
        let mut u = Vec::new();
        let mut per = 0;
        for my in 0..mcuy {
            for mx in 0..mcux {
                per = 0;
                for (slot, &(idx, _, _)) in comps.iter().enumerate() {
                    let fc = &frame.components[idx];
                    for by in 0..fc.v as usize {
                        for bx in 0..fc.h as usize {
                            u.push((slot, my * fc.v as usize + by, mx * fc.h as usize + bx));
                            per += 1;
                        }
                    }
                }
            }
        }
        units = u;
        mcu_count = mcux * mcuy;
        blocks_per_mcu = per;
    }

    let mut rst_index = 0u8;
    for mcu in 0..mcu_count {
        if let Some(ri) = restart {
            if mcu > 0 && mcu % ri == 0 {
                reader.expect_restart(rst_index)?;
                rst_index = rst_index.wrapping_add(1);
                preds.iter_mut().for_each(|p| *p = 0);
            }
        }
        for &(slot, row, col) in &units[mcu * blocks_per_mcu..(mcu + 1) * blocks_per_mcu] {
            let (dc_t, ac_t) = &tables[slot];
            let block = decode_block(&mut reader, dc_t, ac_t, &mut preds[slot])?;
            let plane = &mut st.planes[comps[slot].0];
            // blocks beyond the component grid are MCU padding
            if row < plane.blocks_high && col < plane.blocks_wide {
                plane.blocks[row * plane.blocks_wide + col] = block;
            }
        }
    }
    for &(idx, _, _) in &comps {
        st.scanned[idx] = true;
    }
    // skip to the next marker (tolerates trailing padding bits)
    let mut pos = reader.position();
    loop {
        match (data.get(pos), data.get(pos + 1)) {
            (Some(0xFF), Some(0x00)) => pos += 2,
            (Some(0xFF), Some(m)) if (0xD0..=0xD7).contains(m) => pos += 2,
            (Some(0xFF), Some(_)) => return Ok(pos),
            (Some(_), _) => pos += 1,
            (None, _) => return Err(JpegError::TruncatedInput),
        }
    }
}

fn decode_block(
    reader: &mut BitReader<'_>,
    dc: &HuffmanTable,
    ac: &HuffmanTable,
    pred: &mut i32,
) -> Result<QuantizedBlock, JpegError> {
    let mut block = [0i32; 64];
    let s = dc.decode(reader)? as u32;
    if s > 11 {
        return Err(JpegError::CorruptStream(format!("DC magnitude category {s}")));
    }
    let diff = extend(reader.read_bits(s)?, s);
    *pred += diff;
    block[0] = *pred;
    let mut k = 1usize;
    while k < 64 {
        let rs = ac.decode(reader)?;
        let (r, s) = ((rs >> 4) as usize, (rs & 0x0F) as u32);
        if s == 0 {
            if r == 15 {
                k += 16;
                continue;
            }
            if r == 0 {
                break;
            }
            return Err(JpegError::CorruptStream(format!("invalid AC symbol {rs:#04x}")));
        }
        k += r;
        if k > 63 {
            return Err(JpegError::CorruptStream("coefficient index beyond 63".into()));
        }
        block[ZIGZAG_TO_NATURAL[k]] = extend(reader.read_bits(s)?, s);
        k += 1;
    }
    if k > 64 {
        return Err(JpegError::CorruptStream("zero run beyond coefficient 63".into()));
    }
    Ok(QuantizedBlock(block))
}
