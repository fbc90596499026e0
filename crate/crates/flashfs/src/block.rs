//! On-flash block codec.
//!
//! A written block is laid out as:
//!
//! ```none
//! +--------+-------------+-----------+----------+---------+
//! | header | data length |    tag    |   data   | hashsum |
//! | 1 byte | 1 or 4 B    | 1..30 B   | variable | 1 byte  |
//! +--------+-------------+-----------+----------+---------+
//! ```
//!
//! Header byte, most significant bit first:
//!
//! * bit 7 `unused` is programmed to 1 when the block starts being
//!   written and cleared to 0 once the block is completely on flash
//!   (the commit);
//! * bit 6 `valid` is programmed to 1 at write time and cleared to 0
//!   when a newer block with the same tag supersedes this one;
//! * bits 5..1 hold the tag length, 1..30; 0b11111 is an empty (never
//!   written) byte and 0b00000 an erased filler byte, so both are
//!   forbidden in a real block;
//! * bit 0 `dl` selects the data length width: 0 for 1 byte, 1 for
//!   4 bytes big endian.
//!
//! The hashsum is the CRC-8 of every field except the `unused` and `valid`
//! bits: the header byte is masked to its low six bits before hashing so
//! that commit and invalidation do not disturb the checksum.

use crate::crc8::{crc8_update, crc8};
use thiserror::Error;

pub const TAG_LEN_MIN: usize = 1;
pub const TAG_LEN_MAX: usize = 30;
pub const MAX_DATA_LEN: u64 = u32::MAX as u64;

pub const UNUSED_BIT: u8 = 0b1000_0000;
pub const VALID_BIT: u8 = 0b0100_0000;
pub const TAG_LEN_MASK: u8 = 0b0011_1110;
pub const TAG_LEN_SHIFT: u8 = 1;
pub const DL_BIT: u8 = 0b0000_0001;

/// Header byte content for a real (written) block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockHeader {
    pub unused: bool,
    pub valid: bool,
    pub tag_len: u8,
    pub long_len: bool,
}

impl BlockHeader {
    pub fn to_byte(self) -> u8 {
        let mut b = (self.tag_len << TAG_LEN_SHIFT) & TAG_LEN_MASK;
        if self.unused {
            b |= UNUSED_BIT;
        }
        if self.valid {
            b |= VALID_BIT;
        }
        if self.long_len {
            b |= DL_BIT;
        }
        b
    }

    pub fn committed(&self) -> bool {
        !self.unused && self.valid
    }
}

/// Classification of the first byte at a scan position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeaderByte {
    /// 0xFF: not yet written; marks the end of a sector's written region.
    Empty,
    /// 0x00: erased filler; the scanner skips the whole 0x00 run.
    Erased,
    /// Anything else parses as a block header. Tag lengths 0 and 31 can
    /// only arise from corruption and are rejected by the caller.
    Block(BlockHeader),
}

pub fn classify_header(byte: u8) -> HeaderByte {
    match byte {
        0xFF => HeaderByte::Empty,
        0x00 => HeaderByte::Erased,
        b => HeaderByte::Block(BlockHeader {
            unused: b & UNUSED_BIT != 0,
            valid: b & VALID_BIT != 0,
            tag_len: (b & TAG_LEN_MASK) >> TAG_LEN_SHIFT,
            long_len: b & DL_BIT != 0,
        }),
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BlockError {
    #[error("tag length {0} outside {TAG_LEN_MIN}..={TAG_LEN_MAX}")]
    TagLenInvalid(usize),
    #[error("data length {0} exceeds the 32-bit on-flash limit")]
    DataTooLarge(u64),
}

/// Number of data-length bytes for a payload of `data_len` bytes.
pub fn len_field_width(data_len: usize) -> usize {
    if data_len <= 0xFF {
        1
    } else {
        4
    }
}

/// Total on-flash size of a block holding (`tag_len`, `data_len`).
pub fn block_len(tag_len: usize, data_len: usize) -> usize {
    1 + len_field_width(data_len) + tag_len + data_len + 1
}

fn check_tag_and_data(tag: &[u8], data_len: u64) -> Result<(), BlockError> {
    if tag.len() < TAG_LEN_MIN || tag.len() > TAG_LEN_MAX {
        return Err(BlockError::TagLenInvalid(tag.len()));
    }
    if data_len > MAX_DATA_LEN {
        return Err(BlockError::DataTooLarge(data_len));
    }
    Ok(())
}

/// Encodes a fully committed block (unused=0, valid=1) as raw bytes.
pub fn encode_committed(tag: &[u8], data: &[u8]) -> Result<Vec<u8>, BlockError> {
    check_tag_and_data(tag, data.len() as u64)?;
    let long = data.len() > 0xFF;
    let header = BlockHeader {
        unused: false,
        valid: true,
        tag_len: tag.len() as u8,
        long_len: long,
    };
    let mut out = Vec::with_capacity(block_len(tag.len(), data.len()));
    out.push(header.to_byte());
    if long {
        out.extend_from_slice(&(data.len() as u32).to_be_bytes());
    } else {
        out.push(data.len() as u8);
    }
    out.extend_from_slice(tag);
    out.extend_from_slice(data);
    let crc = hashsum(out[0], &out[1..]);
    out.push(crc);
    Ok(out)
}

/// CRC-8 over the checksummed span: masked header byte, then length
/// field, tag and data.
pub fn hashsum(header_byte: u8, rest: &[u8]) -> u8 {
    crc8_update(crc8(&[header_byte & !(UNUSED_BIT | VALID_BIT)]), rest)
}

/// A block parsed in place from a sector slice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedBlock<'a> {
    pub header: BlockHeader,
    pub tag: &'a [u8],
    pub data: &'a [u8],
    /// Total bytes the block occupies on flash.
    pub total_len: usize,
    pub crc_ok: bool,
}

/// Outcome of looking at one scan position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScanItem<'a> {
    /// 0xFF header: end of the written region.
    Empty,
    /// Run of `0` bytes of the given length.
    ErasedRun(usize),
    Block(ParsedBlock<'a>),
    /// Header read fine but the declared length runs past the slice, or
    /// the tag length is one of the forbidden values. The rest of the
    /// sector cannot be walked.
    Unparseable,
}

/// Parses whatever starts at `bytes[0]`, where `bytes` extends to the end
/// of the sector.
pub fn parse_at(bytes: &[u8]) -> ScanItem<'_> {
    let Some(&first) = bytes.first() else {
        return ScanItem::Empty;
    };
    let header = match classify_header(first) {
        HeaderByte::Empty => return ScanItem::Empty,
        HeaderByte::Erased => {
            let run = bytes.iter().take_while(|&&b| b == 0x00).count();
            return ScanItem::ErasedRun(run);
        }
        HeaderByte::Block(h) => h,
    };
    if header.tag_len == 0 || header.tag_len as usize > TAG_LEN_MAX {
        return ScanItem::Unparseable;
    }
    let len_width = if header.long_len { 4 } else { 1 };
    if 1 + len_width > bytes.len() {
        return ScanItem::Unparseable;
    }
    let data_len = if header.long_len {
        u32::from_be_bytes([bytes[1], bytes[2], bytes[3], bytes[4]]) as usize
    } else {
        bytes[1] as usize
    };
    let tag_len = header.tag_len as usize;
    let total = match 1usize
        .checked_add(len_width)
        .and_then(|n| n.checked_add(tag_len))
        .and_then(|n| n.checked_add(data_len))
        .and_then(|n| n.checked_add(1))
    {
        Some(t) if t <= bytes.len() => t,
        _ => return ScanItem::Unparseable,
    };
    let tag_start = 1 + len_width;
    let data_start = tag_start + tag_len;
    let tag = &bytes[tag_start..data_start];
    let data = &bytes[data_start..data_start + data_len];
    let crc_ok = bytes[total - 1] == hashsum(first, &bytes[1..total - 1]);
    ScanItem::Block(ParsedBlock {
        header,
        tag,
        data,
        total_len: total,
        crc_ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_bit_layout() {
        let h = BlockHeader {
            unused: true,
            valid: true,
            tag_len: 3,
            long_len: false,
        };
        assert_eq!(h.to_byte(), 0b1100_0110);
        let committed = h.to_byte() & !UNUSED_BIT;
        assert_eq!(committed, 0b0100_0110);
        match classify_header(committed) {
            HeaderByte::Block(parsed) => {
                assert!(!parsed.unused);
                assert!(parsed.valid);
                assert_eq!(parsed.tag_len, 3);
                assert!(!parsed.long_len);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn short_block_encoding() {
        // Three-byte tag, five-byte payload: dl=0, one length byte.
        let bytes = encode_committed(&[0x02, 0x03, 0x00], &[0x80, 0x01, 0x02, 0x03, 0x04]).unwrap();
        assert_eq!(bytes[0], 0b0100_0110);
        assert_eq!(bytes[1], 5);
        assert_eq!(&bytes[2..5], &[0x02, 0x03, 0x00]);
        assert_eq!(&bytes[5..10], &[0x80, 0x01, 0x02, 0x03, 0x04]);
        assert_eq!(bytes.len(), block_len(3, 5));
    }

    #[test]
    fn long_length_is_big_endian() {
        let data = vec![0xAB; 300];
        let bytes = encode_committed(&[0x01], &data).unwrap();
        assert_eq!(bytes[0] & DL_BIT, DL_BIT);
        assert_eq!(&bytes[1..5], &[0x00, 0x00, 0x01, 0x2C]);
    }

    #[test]
    fn forbidden_tag_lengths() {
        assert_eq!(
            encode_committed(&[], &[1]).unwrap_err(),
            BlockError::TagLenInvalid(0)
        );
        assert_eq!(
            encode_committed(&[0u8; 31], &[1]).unwrap_err(),
            BlockError::TagLenInvalid(31)
        );
    }

    #[test]
    fn parse_detects_truncation() {
        let mut bytes = encode_committed(&[0x07], &[1, 2, 3]).unwrap();
        bytes.truncate(bytes.len() - 2);
        assert_eq!(parse_at(&bytes), ScanItem::Unparseable);
    }

    proptest! {
        #[test]
        fn encode_parse_round_trip(
            tag in proptest::collection::vec(any::<u8>(), 1..=30),
            data in proptest::collection::vec(any::<u8>(), 0..600),
        ) {
            let bytes = encode_committed(&tag, &data).unwrap();
            match parse_at(&bytes) {
                ScanItem::Block(b) => {
                    prop_assert!(b.crc_ok);
                    prop_assert!(b.header.committed());
                    prop_assert_eq!(b.tag, &tag[..]);
                    prop_assert_eq!(b.data, &data[..]);
                    prop_assert_eq!(b.total_len, bytes.len());
                }
                other => prop_assert!(false, "unexpected {:?}", other),
            }
        }
    }
}
