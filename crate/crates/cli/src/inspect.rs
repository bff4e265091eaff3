//! `dctir inspect`: marker, table and coefficient summary of one JPEG.

use std::fmt::Write as _;

use dctir::jpeg::{self, ComponentKind, JpegError, JpegImage, MarkerInfo, TableClass};
use serde::Serialize;

#[derive(Clone, Debug, Serialize)]
pub struct CoeffStats {
    pub dc_mean: f64,
    pub dc_min: i32,
    pub dc_max: i32,
    /// Mean over blocks of the summed squared dequantized AC coefficients.
    pub ac_energy: f64,
    /// Mean count of nonzero quantized AC coefficients per block.
    pub nonzero_ac: f64,
    pub zero_ac_blocks: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ComponentInfo {
    pub kind: ComponentKind,
    pub id: u8,
    pub sampling: [u8; 2],
    pub quant_table: u8,
    pub dc_table: u8,
    pub ac_table: u8,
    pub blocks_wide: usize,
    pub blocks_high: usize,
    pub stats: CoeffStats,
}

#[derive(Clone, Debug, Serialize)]
pub struct QuantInfo {
    pub id: usize,
    /// Natural (row-major) order.
    pub values: Vec<u16>,
}

#[derive(Clone, Debug, Serialize)]
pub struct HuffmanInfo {
    pub class: TableClass,
    pub id: u8,
    pub symbols: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct BlockDump {
    pub component: usize,
    pub row: usize,
    pub col: usize,
    /// Quantized, natural order.
    pub coefficients: Vec<i32>,
}

#[derive(Clone, Debug, Serialize)]
pub struct InspectReport {
    pub file: String,
    pub bytes: usize,
    pub width: usize,
    pub height: usize,
    pub restart_interval: Option<u16>,
    pub markers: Vec<MarkerInfo>,
    pub quant_tables: Vec<QuantInfo>,
    pub huffman_tables: Vec<HuffmanInfo>,
    pub components: Vec<ComponentInfo>,
    pub block: Option<BlockDump>,
}

#[derive(Debug)]
pub enum InspectError {
    Jpeg(JpegError),
    BlockOutOfRange(String),
}

fn stats(img: &JpegImage, index: usize) -> Result<CoeffStats, JpegError> {
    let comp = &img.components[index];
    let table = img.quant_table_for(index)?;
    let n = comp.blocks.len().max(1) as f64;
    let (mut dc_sum, mut dc_min, mut dc_max) = (0.0, i32::MAX, i32::MIN);
    let (mut energy, mut nonzero, mut zero_blocks) = (0.0, 0usize, 0usize);
    for b in &comp.blocks {
        let dc = b.0[0];
        dc_sum += dc as f64;
        dc_min = dc_min.min(dc);
        dc_max = dc_max.max(dc);
        let nz = b.0[1..].iter().filter(|&&v| v != 0).count();
        nonzero += nz;
        if nz == 0 {
            zero_blocks += 1;
        }
        energy += (1..64).map(|k| (b.0[k] as f64 * table.0[k] as f64).powi(2)).sum::<f64>();
    }
    Ok(CoeffStats {
        dc_mean: dc_sum / n,
        dc_min,
        dc_max,
        ac_energy: energy / n,
        nonzero_ac: nonzero as f64 / n,
        zero_ac_blocks: zero_blocks,
    })
}

/// `block` is `(component, row, col)`.
pub fn inspect(file: &str, data: &[u8], block: Option<(usize, usize, usize)>) -> Result<InspectReport, InspectError> {
    let markers = jpeg::scan_markers(data).map_err(InspectError::Jpeg)?;
    let img = jpeg::parse_jpeg(data).map_err(InspectError::Jpeg)?;
    let components = img
        .components
        .iter()
        .enumerate()
        .map(|(i, c)| {
            Ok(ComponentInfo {
                kind: c.kind,
                id: c.id,
                sampling: [c.h, c.v],
                quant_table: c.quant_table,
                dc_table: c.dc_table,
                ac_table: c.ac_table,
                blocks_wide: c.blocks_wide,
                blocks_high: c.blocks_high,
                stats: stats(&img, i)?,
            })
        })
        .collect::<Result<Vec<_>, JpegError>>()
        .map_err(InspectError::Jpeg)?;
    let block = match block {
        None => None,
        Some((ci, r, c)) => {
            let comp = img
                .components
                .get(ci)
                .ok_or_else(|| InspectError::BlockOutOfRange(format!("component {ci} of {}", img.components.len())))?;
            if r >= comp.blocks_high || c >= comp.blocks_wide {
                return Err(InspectError::BlockOutOfRange(format!(
                    "block ({r}, {c}) outside {}x{} grid",
                    comp.blocks_high, comp.blocks_wide
                )));
            }
            Some(BlockDump { component: ci, row: r, col: c, coefficients: comp.block(r, c).0.to_vec() })
        }
    };
    Ok(InspectReport {
        file: file.to_string(),
        bytes: data.len(),
        width: img.width,
        height: img.height,
        restart_interval: img.restart_interval,
        markers,
        quant_tables: img
            .quant_tables
            .iter()
            .enumerate()
            .filter_map(|(id, t)| t.map(|t| QuantInfo { id, values: t.0.to_vec() }))
            .collect(),
        huffman_tables: img
            .huffman_tables
            .iter()
            .map(|t| HuffmanInfo { class: t.class, id: t.id, symbols: t.symbols.len() })
            .collect(),
        components,
        block,
    })
}

fn grid<T: std::fmt::Display>(out: &mut String, values: &[T], width: usize) {
    for row in values.chunks(8) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:>width$}")).collect();
        let _ = writeln!(out, "    {}", cells.join(" "));
    }
}

/// Fixed-format text rendering; stable across runs.
pub fn render_text(r: &InspectReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "file {} ({} bytes)", r.file, r.bytes);
    let _ = writeln!(out, "frame {}x{}, {} component(s)", r.width, r.height, r.components.len());
    if let Some(ri) = r.restart_interval {
        let _ = writeln!(out, "restart interval {ri} MCUs");
    }
    let _ = writeln!(out, "markers");
    for m in &r.markers {
        let mut line = format!("  {:08x} {:<5}", m.offset, m.name);
        if m.length > 0 {
            let _ = write!(line, " length {}", m.length);
        }
        if m.code == 0xDA {
            let _ = write!(line, " entropy-coded {} bytes, {} restarts", m.entropy_bytes, m.restarts);
        }
        let _ = writeln!(out, "{}", line.trim_end());
    }
    for q in &r.quant_tables {
        let _ = writeln!(out, "quantization table {}", q.id);
        grid(&mut out, &q.values, 3);
    }
    for h in &r.huffman_tables {
        let class = match h.class {
            TableClass::Dc => "DC",
            TableClass::Ac => "AC",
        };
        let _ = writeln!(out, "huffman table {class}{} {} symbols", h.id, h.symbols);
    }
    for (i, c) in r.components.iter().enumerate() {
        let s = &c.stats;
        let _ = writeln!(
            out,
            "component {i} {:?} id {} sampling {}x{} tables q{} dc{} ac{} blocks {}x{}",
            c.kind, c.id, c.sampling[0], c.sampling[1], c.quant_table, c.dc_table, c.ac_table, c.blocks_wide, c.blocks_high
        );
        let _ = writeln!(
            out,
            "  dc mean {:.4} min {} max {}; ac energy {:.4}; nonzero ac {:.4}/block; {} blocks without ac",
            s.dc_mean, s.dc_min, s.dc_max, s.ac_energy, s.nonzero_ac, s.zero_ac_blocks
        );
    }
    if let Some(b) = &r.block {
        let _ = writeln!(out, "block component {} row {} col {} (quantized, natural order)", b.component, b.row, b.col);
        grid(&mut out, &b.coefficients, 5);
    }
    out
}
