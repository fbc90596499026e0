//! Intel HEX encoding of device snapshots, plus the decoder that serves
//! as the round-trip oracle in tests and as the loader for the
//! inspection commands.
//!
//! Output contract: uppercase hex, LF line endings, data records of at
//! most 16 payload bytes, erased (0xFF) regions skipped, an extended
//! linear address record whenever the upper 16 address bits change, and
//! a final EOF record.

use std::collections::BTreeMap;

use thiserror::Error;

const RECORD_DATA: u8 = 0x00;
const RECORD_EOF: u8 = 0x01;
const RECORD_EXT_LINEAR: u8 = 0x04;
const MAX_PAYLOAD: usize = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HexError {
    #[error("line {0}: record does not start with ':'")]
    MissingStart(usize),
    #[error("line {0}: malformed record")]
    MalformedRecord(usize),
    #[error("line {0}: checksum mismatch")]
    ChecksumMismatch(usize),
    #[error("line {0}: unsupported record type {1:#04x}")]
    UnsupportedType(usize, u8),
    #[error("missing EOF record")]
    MissingEof,
}

fn checksum(bytes: &[u8]) -> u8 {
    let sum: u32 = bytes.iter().map(|&b| b as u32).sum();
    (!(sum as u8)).wrapping_add(1)
}

fn push_record(out: &mut String, record_type: u8, address: u16, payload: &[u8]) {
    let mut bytes = Vec::with_capacity(4 + payload.len());
    bytes.push(payload.len() as u8);
    bytes.extend_from_slice(&address.to_be_bytes());
    bytes.push(record_type);
    bytes.extend_from_slice(payload);
    let crc = checksum(&bytes);
    out.push(':');
    for b in &bytes {
        out.push_str(&format!("{b:02X}"));
    }
    out.push_str(&format!("{crc:02X}\n"));
}

/// Encodes a snapshot placed at `base_address`. Only non-erased bytes
/// are emitted.
pub fn encode_hex(snapshot: &[u8], base_address: u32) -> String {
    let mut out = String::new();
    let mut current_upper: Option<u16> = None;
    let mut i = 0usize;
    while i < snapshot.len() {
        if snapshot[i] == 0xFF {
            i += 1;
            continue;
        }
        // A run of programmed bytes: capped at 16, not crossing a 64 KiB
        // boundary.
        let absolute = base_address + i as u32;
        let upper = (absolute >> 16) as u16;
        let lower = absolute & 0xFFFF;
        let run_cap = (0x1_0000 - lower) as usize;
        let mut len = 0usize;
        while len < MAX_PAYLOAD.min(run_cap)
            && i + len < snapshot.len()
            && snapshot[i + len] != 0xFF
        {
            len += 1;
        }
        if current_upper != Some(upper) {
            push_record(&mut out, RECORD_EXT_LINEAR, 0, &upper.to_be_bytes());
            current_upper = Some(upper);
        }
        push_record(&mut out, RECORD_DATA, lower as u16, &snapshot[i..i + len]);
        i += len;
    }
    out.push_str(":00000001FF\n");
    out
}

/// Decodes HEX text into an absolute address -> byte map, validating
/// every record checksum.
pub fn decode_hex(text: &str) -> Result<BTreeMap<u32, u8>, HexError> {
    let mut map = BTreeMap::new();
    let mut upper: u32 = 0;
    let mut saw_eof = false;
    for (line_no, line) in text.lines().enumerate() {
        let line_no = line_no + 1;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        if saw_eof {
            return Err(HexError::MalformedRecord(line_no));
        }
        let Some(hex) = line.strip_prefix(':') else {
            return Err(HexError::MissingStart(line_no));
        };
        if hex.len() % 2 != 0 || hex.len() < 10 {
            return Err(HexError::MalformedRecord(line_no));
        }
        let bytes: Vec<u8> = (0..hex.len() / 2)
            .map(|i| u8::from_str_radix(&hex[2 * i..2 * i + 2], 16))
            .collect::<Result<_, _>>()
            .map_err(|_| HexError::MalformedRecord(line_no))?;
        let (fields, crc) = bytes.split_at(bytes.len() - 1);
        if checksum(fields) != crc[0] {
            return Err(HexError::ChecksumMismatch(line_no));
        }
        let count = fields[0] as usize;
        let address = u16::from_be_bytes([fields[1], fields[2]]);
        let record_type = fields[3];
        let payload = &fields[4..];
        if payload.len() != count {
            return Err(HexError::MalformedRecord(line_no));
        }
        match record_type {
            RECORD_DATA => {
                for (k, &b) in payload.iter().enumerate() {
                    map.insert((upper << 16) + address as u32 + k as u32, b);
                }
            }
            RECORD_EOF => {
                if count != 0 {
                    return Err(HexError::MalformedRecord(line_no));
                }
                saw_eof = true;
            }
            RECORD_EXT_LINEAR => {
                if count != 2 {
                    return Err(HexError::MalformedRecord(line_no));
                }
                upper = u16::from_be_bytes([payload[0], payload[1]]) as u32;
            }
            other => return Err(HexError::UnsupportedType(line_no, other)),
        }
    }
    if !saw_eof {
        return Err(HexError::MissingEof);
    }
    Ok(map)
}
