//! Canonical Huffman tables (ITU-T T.81 Annex C) and the Annex K defaults.

use super::JpegError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize)]
pub enum TableClass {
    Dc,
    Ac,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HuffmanTable {
    pub class: TableClass,
    pub id: u8,
    /// `counts[i]` is the number of codes of length `i + 1`.
    pub counts: [u8; 16],
    pub symbols: Vec<u8>,
    lookup: DecodeTables,
    /// `(code, length)` per symbol value, for encoding.
    codes: Vec<Option<(u16, u8)>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct DecodeTables {
    mincode: [i32; 17],
    maxcode: [i32; 18],
    valptr: [i32; 17],
}

impl HuffmanTable {
    pub fn new(class: TableClass, id: u8, counts: [u8; 16], symbols: Vec<u8>) -> Result<Self, JpegError> {
        let total: usize = counts.iter().map(|&c| c as usize).sum();
        if total > 256 || total != symbols.len() {
            return Err(JpegError::CorruptStream(format!(
                "huffman table with {} counted codes but {} symbols",
                total,
                symbols.len()
            )));
        }
        if id > 3 {
            return Err(JpegError::CorruptStream(format!("huffman table id {id}")));
        }

        // Annex C.2: code sizes and canonical codes.
        let mut code: u32 = 0;
        let mut k = 0usize;
        let mut mincode = [0i32; 17];
        let mut maxcode = [-1i32; 18];
        let mut valptr = [0i32; 17];
        let mut codes = vec![None; 256];
        for len in 1..=16usize {
            let n = counts[len - 1] as usize;
            if n > 0 {
                valptr[len] = k as i32;
                mincode[len] = code as i32;
                for _ in 0..n {
                    if code >= (1 << len) {
                        return Err(JpegError::CorruptStream("huffman code space overflow".into()));
                    }
                    let sym = symbols[k] as usize;
                    if codes[sym].is_none() {
                        codes[sym] = Some((code as u16, len as u8));
                    }
                    code += 1;
                    k += 1;
                }
                maxcode[len] = code as i32 - 1;
            }
            code <<= 1;
        }
        maxcode[17] = i32::MAX;

        Ok(HuffmanTable {
            class,
            id,
            counts,
            symbols,
            lookup: DecodeTables { mincode, maxcode, valptr },
            codes,
        })
    }

    /// Code and bit length for a symbol, if the table contains it.
    pub fn code_for(&self, symbol: u8) -> Option<(u16, u8)> {
        self.codes[symbol as usize]
    }

    pub fn decode(&self, bits: &mut BitReader<'_>) -> Result<u8, JpegError> {
        let t = &self.lookup;
        let mut code = bits.read_bit()? as i32;
        for len in 1..=16usize {
            if code <= t.maxcode[len] && t.maxcode[len] >= 0 {
                let idx = t.valptr[len] + code - t.mincode[len];
                return Ok(self.symbols[idx as usize]);
            }
            if len < 16 {
                code = (code << 1) | bits.read_bit()? as i32;
            }
        }
        Err(JpegError::CorruptStream("no huffman code matches the bitstream".into()))
    }

    pub fn std_dc_luma() -> Self {
        Self::new(TableClass::Dc, 0, STD_DC_LUMA_COUNTS, STD_DC_LUMA_SYMBOLS.to_vec()).unwrap()
    }

    pub fn std_ac_luma() -> Self {
        Self::new(TableClass::Ac, 0, STD_AC_LUMA_COUNTS, STD_AC_LUMA_SYMBOLS.to_vec()).unwrap()
    }

    pub fn std_dc_chroma() -> Self {
        Self::new(TableClass::Dc, 1, STD_DC_CHROMA_COUNTS, STD_DC_CHROMA_SYMBOLS.to_vec()).unwrap()
    }

    pub fn std_ac_chroma() -> Self {
        Self::new(TableClass::Ac, 1, STD_AC_CHROMA_COUNTS, STD_AC_CHROMA_SYMBOLS.to_vec()).unwrap()
    }
}

/// Reads entropy-coded bits, removing `FF 00` stuffing and stopping at markers.
pub struct BitReader<'a> {
    data: &'a [u8],
    pos: usize,
    acc: u32,
    nbits: u32,
    /// Marker byte encountered while filling, if any.
    marker: Option<u8>,
}

impl<'a> BitReader<'a> {
    pub fn new(data: &'a [u8], pos: usize) -> Self {
        BitReader { data, pos, acc: 0, nbits: 0, marker: None }
    }

    fn fill_byte(&mut self) -> Result<(), JpegError> {
        if self.marker.is_some() {
            return Err(self.stopped_error());
        }
        let Some(&b) = self.data.get(self.pos) else {
            return Err(JpegError::TruncatedInput);
        };
        if b == 0xFF {
            match self.data.get(self.pos + 1) {
                None => return Err(JpegError::TruncatedInput),
                Some(0x00) => self.pos += 2,
                Some(&m) => {
                    self.marker = Some(m);
                    return Err(self.stopped_error());
                }
            }
        } else {
            self.pos += 1;
        }
        self.acc = (self.acc << 8) | b as u32;
        self.nbits += 8;
        Ok(())
    }

    fn stopped_error(&self) -> JpegError {
        match self.marker {
            Some(0xD9) => JpegError::TruncatedInput,
            Some(m) => JpegError::CorruptStream(format!("marker FF{m:02X} inside entropy-coded data")),
            None => JpegError::TruncatedInput,
        }
    }

    pub fn read_bit(&mut self) -> Result<u32, JpegError> {
        if self.nbits == 0 {
            self.fill_byte()?;
        }
        self.nbits -= 1;
        Ok((self.acc >> self.nbits) & 1)
    }

    pub fn read_bits(&mut self, n: u32) -> Result<u32, JpegError> {
        let mut v = 0;
        for _ in 0..n {
            v = (v << 1) | self.read_bit()?;
        }
        Ok(v)
    }

    /// Discards buffered bits (byte alignment before a restart marker).
    pub fn reset(&mut self) {
        self.acc = 0;
        self.nbits = 0;
    }

    /// Consumes an expected `RSTn` marker.
    pub fn expect_restart(&mut self, n: u8) -> Result<(), JpegError> {
        self.reset();
        let want = 0xD0 + (n & 7);
        let found = match self.marker.take() {
            Some(m) => Some(m),
            None => {
                // skip fill bytes
                while self.data.get(self.pos) == Some(&0xFF) && self.data.get(self.pos + 1) == Some(&0xFF) {
                    self.pos += 1;
                }
                match (self.data.get(self.pos), self.data.get(self.pos + 1)) {
                    (Some(0xFF), Some(&m)) => Some(m),
                    (None, _) | (Some(_), None) => return Err(JpegError::TruncatedInput),
                    _ => None,
                }
            }
        };
        match found {
            Some(m) if m == want => {
                self.pos += 2;
                Ok(())
            }
            Some(m) => Err(JpegError::CorruptStream(format!("expected RST{} but found FF{m:02X}", n & 7))),
            None => Err(JpegError::CorruptStream(format!("missing RST{} marker", n & 7))),
        }
    }

    /// Byte offset just past the consumed entropy data (where the next marker begins).
    pub fn position(&self) -> usize {
        self.pos
    }
}

/// Packs bits MSB-first with `FF 00` stuffing.
#[derive(Default)]
pub struct BitWriter {
    pub out: Vec<u8>,
    acc: u32,
    nbits: u32,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn write_bits(&mut self, value: u32, n: u32) {
        debug_assert!(n <= 16);
        if n == 0 {
            return;
        }
        self.acc = (self.acc << n) | (value & ((1 << n) - 1));
        self.nbits += n;
        while self.nbits >= 8 {
            let b = (self.acc >> (self.nbits - 8)) as u8;
            self.out.push(b);
            if b == 0xFF {
                self.out.push(0x00);
            }
            self.nbits -= 8;
        }
        self.acc &= (1 << self.nbits) - 1;
    }

    /// Pads the final partial byte with 1-bits.
    pub fn finish(mut self) -> Vec<u8> {
        if self.nbits > 0 {
            let pad = 8 - self.nbits;
            self.write_bits((1 << pad) - 1, pad);
        }
        self.out
    }
}

/// Magnitude category of a coefficient value.
pub fn category(v: i32) -> u32 {
    32 - v.unsigned_abs().leading_zeros()
}

/// Extra bits for `v` in category `s` (one's-complement for negatives).
pub fn magnitude_bits(v: i32, s: u32) -> u32 {
    if v >= 0 {
        v as u32
    } else {
        (v - 1) as u32 & ((1u32 << s) - 1)
    }
}

/// Inverse of [`magnitude_bits`] (the EXTEND procedure, Annex F.2.2.1).
pub fn extend(bits: u32, s: u32) -> i32 {
    if s == 0 {
        return 0;
    }
    if bits < (1 << (s - 1)) {
        bits as i32 - (1 << s) + 1
    } else {
        bits as i32
    }
}

const STD_DC_LUMA_COUNTS: [u8; 16] = [0, 1, 5, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0];
const STD_DC_LUMA_SYMBOLS: [u8; 12] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11];
const STD_DC_CHROMA_COUNTS: [u8; 16] = [0, 3, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0];
const STD_DC_CHROMA_SYMBOLS: [u8; 12] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11];

const STD_AC_LUMA_COUNTS: [u8; 16] = [0, 2, 1, 3, 3, 2, 4, 3, 5, 5, 4, 4, 0, 0, 1, 0x7d];
const STD_AC_LUMA_SYMBOLS: [u8; 162] = [
    0x01, 0x02, 0x03, 0x00, 0x04, 0x11, 0x05, 0x12, 0x21, 0x31, 0x41, 0x06, 0x13, 0x51, 0x61, 0x07,
    0x22, 0x71, 0x14, 0x32, 0x81, 0x91, 0xa1, 0x08, 0x23, 0x42, 0xb1, 0xc1, 0x15, 0x52, 0xd1, 0xf0,
    0x24, 0x33, 0x62, 0x72, 0x82, 0x09, 0x0a, 0x16, 0x17, 0x18, 0x19, 0x1a, 0x25, 0x26, 0x27, 0x28,
    0x29, 0x2a, 0x34, 0x35, 0x36, 0x37, 0x38, 0x39, 0x3a, 0x43, 0x44, 0x45, 0x46, 0x47, 0x48, 0x49,
    0x4a, 0x53, 0x54, 0x55, 0x56, 0x57, 0x58, 0x59, 0x5a, 0x63, 0x64, 0x65, 0x66, 0x67, 0x68, 0x69,
    0x6a, 0x73, 0x74, 0x75, 0x76, 0x77, 0x78, 0x79, 0x7a, 0x83, 0x84, 0x85, 0x86, 0x87, 0x88, 0x89,
    0x8a, 0x92, 0x93, 0x94, 0x95, 0x96, 0x97, 0x98, 0x99, 0x9a, 0xa2, 0xa3, 0xa4, 0xa5, 0xa6, 0xa7,
    0xa8, 0xa9, 0xaa, 0xb2, 0xb3, 0xb4, 0xb5, 0xb6, 0xb7, 0xb8, 0xb9, 0xba, 0xc2, 0xc3, 0xc4, 0xc5,
    0xc6, 0xc7, 0xc8, 0xc9, 0xca, 0xd2, 0xd3, 0xd4, 0xd5, 0xd6, 0xd7, 0xd8, 0xd9, 0xda, 0xe1, 0xe2,
    0xe3, 0xe4, 0xe5, 0xe6, 0xe7, 0xe8, 0xe9, 0xea, 0xf1, 0xf2, 0xf3, 0xf4, 0xf5, 0xf6, 0xf7, 0xf8,
    0xf9, 0xfa,
];

const STD_AC_CHROMA_COUNTS: [u8; 16] = [0, 2, 1, 2, 4, 4, 3, 4, 7, 5, 4, 4, 0, 1, 2, 0x77];
const STD_AC_CHROMA_SYMBOLS: [u8; 162] = [
    0x00, 0x01, 0x02, 0x03, 0x11, 0x04, 0x05, 0x21, 0x31, 0x06, 0x12, 0x41, 0x51, 0x07, 0x61, 0x71,
    0x13, 0x22, 0x32, 0x81, 0x08, 0x14, 0x42, 0x91, 0xa1, 0xb1, 0xc1, 0x09, 0x23, 0x33, 0x52, 0xf0,
    0x15, 0x62, 0x72, 0xd1, 0x0a, 0x16, 0x24, 0x34, 0xe1, 0x25, 0xf1, 0x17, 0x18, 0x19, 0x1a, 0x26,
    0x27, 0x28, 0x29, 0x2a, 0x35, 0x36, 0x37, 0x38, 0x39, 0x3a, 0x43, 0x44, 0x45, 0x46, 0x47, 0x48,
    0x49, 0x4a, 0x53, 0x54, 0x55, 0x56, 0x57, 0x58, 0x59, 0x5a, 0x63, 0x64, 0x65, 0x66, 0x67, 0x68,
    0x69, 0x6a, 0x73, 0x74, 0x75, 0x76, 0x77, 0x78, 0x79, 0x7a, 0x82, 0x83, 0x84, 0x85, 0x86, 0x87,
    0x88, 0x89, 0x8a, 0x92, 0x93, 0x94, 0x95, 0x96, 0x97, 0x98, 0x99, 0x9a, 0xa2, 0xa3, 0xa4, 0xa5,
    0xa6, 0xa7, 0xa8, 0xa9, 0xaa, 0xb2, 0xb3, 0xb4, 0xb5, 0xb6, 0xb7, 0xb8, 0xb9, 0xba, 0xc2, 0xc3,
    0xc4, 0xc5, 0xc6, 0xc7, 0xc8, 0xc9, 0xca, 0xd2, 0xd3, 0xd4, 0xd5, 0xd6, 0xd7, 0xd8, 0xd9, 0xda,
    0xe2, 0xe3, 0xe4, 0xe5, 0xe6, 0xe7, 0xe8, 0xe9, 0xea, 0xf2, 0xf3, 0xf4, 0xf5, 0xf6, 0xf7, 0xf8,
    0xf9, 0xfa,
];
