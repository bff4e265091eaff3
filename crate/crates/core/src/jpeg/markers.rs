use serde::Serialize;

use super::JpegError;

/// One marker found while walking a JPEG stream.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MarkerInfo {
    /// Byte offset of the `0xFF` that starts the marker.
    pub offset: usize,
    pub code: u8,
    pub name: String,
    /// Segment length field (includes its own two bytes); 0 for standalone markers.
    pub length: usize,
    /// For SOS: bytes of entropy-coded data that follow, restart markers included.
    pub entropy_bytes: usize,
    /// For SOS: restart markers inside the entropy-coded data.
    pub restarts: usize,
}

pub fn marker_name(code: u8) -> String {
    match code {
        0xD8 => "SOI".into(),
        0xD9 => "EOI".into(),
        0xDA => "SOS".into(),
        0xDB => "DQT".into(),
        0xC4 => "DHT".into(),
        0xDD => "DRI".into(),
        0xDC => "DNL".into(),
        0xCC => "DAC".into(),
        0xFE => "COM".into(),
        0x01 => "TEM".into(),
        0xC0..=0xCF => format!("SOF{}", code - 0xC0),
        0xD0..=0xD7 => format!("RST{}", code - 0xD0),
        0xE0..=0xEF => format!("APP{}", code - 0xE0),
        _ => format!("FF{code:02X}"),
    }
}

/// Walks the marker structure without decoding anything. Stops after EOI.
pub fn scan_markers(data: &[u8]) -> Result<Vec<MarkerInfo>, JpegError> {
    if data.len() < 2 || data[0] != 0xFF || data[1] != 0xD8 {
        return Err(if data.len() < 2 { JpegError::TruncatedInput } else { JpegError::CorruptStream("missing SOI marker".into()) });
    }
    let mut out = Vec::new();
    let mut pos = 0;
    loop {
        while data.get(pos) == Some(&0xFF) && data.get(pos + 1) == Some(&0xFF) {
            pos += 1;
        }
        let (Some(&ff), Some(&code)) = (data.get(pos), data.get(pos + 1)) else {
            return Err(JpegError::TruncatedInput);
        };
        if ff != 0xFF {
            return Err(JpegError::CorruptStream(format!("expected marker at offset {pos}")));
        }
        let mut info = MarkerInfo { offset: pos, code, name: marker_name(code), length: 0, entropy_bytes: 0, restarts: 0 };
        pos += 2;
        let standalone = matches!(code, 0xD8 | 0xD9 | 0x01 | 0xD0..=0xD7);
        if !standalone {
            let (Some(&hi), Some(&lo)) = (data.get(pos), data.get(pos + 1)) else {
                return Err(JpegError::TruncatedInput);
            };
            info.length = ((hi as usize) << 8) | lo as usize;
            if info.length < 2 {
                return Err(JpegError::CorruptStream(format!("segment length {}", info.length)));
            }
            pos += info.length;
            if pos > data.len() {
                return Err(JpegError::TruncatedInput);
            }
        }
        if code == 0xDA {
            // entropy-coded data runs to the next marker that is neither
            // a stuffed zero nor a restart
            let start = pos;
            loop {
                match (data.get(pos), data.get(pos + 1)) {
                    (Some(0xFF), Some(0x00)) => pos += 2,
                    (Some(0xFF), Some(0xD0..=0xD7)) => {
                        info.restarts += 1;
                        pos += 2;
                    }
                    (Some(0xFF), Some(0xFF)) => pos += 1,
                    (Some(0xFF), Some(_)) => break,
                    (Some(_), _) => pos += 1,
                    (None, _) => return Err(JpegError::TruncatedInput),
                }
            }
            info.entropy_bytes = pos - start;
        }
        out.push(info);
        if code == 0xD9 {
            return Ok(out);
        }
    }
}
