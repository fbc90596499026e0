//! CRC-8 used as the block hashsum.
//!
//! Parameterization is frozen as part of the on-flash format: polynomial
//! 0x07 (x^8 + x^2 + x + 1), initial value 0x00, no input/output
//! reflection, no final XOR. See `docs/flash-format.md`.

const POLYNOMIAL: u8 = 0x07;

const fn build_table() -> [u8; 256] {
    let mut table = [0u8; 256];
    let mut i = 0;
    while i < 256 {
        let mut crc = i as u8;
        let mut bit = 0;
        while bit < 8 {
            crc = if crc & 0x80 != 0 {
                (crc << 1) ^ POLYNOMIAL
            } else {
                crc << 1
            };
            bit += 1;
        }
        table[i] = crc;
        i += 1;
    }
    table
}

const CRC_TABLE: [u8; 256] = build_table();

/// CRC-8 of a whole message.
pub fn crc8(bytes: &[u8]) -> u8 {
    crc8_update(0x00, bytes)
}

/// Folds more bytes into a running CRC-8 value.
pub fn crc8_update(mut crc: u8, bytes: &[u8]) -> u8 {
    for &b in bytes {
        crc = CRC_TABLE[(crc ^ b) as usize];
    }
    crc
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Bit-serial long division, kept deliberately independent of the
    /// table-driven path above.
    fn crc8_bitwise(bytes: &[u8]) -> u8 {
        let mut crc: u8 = 0x00;
        for &b in bytes {
            crc ^= b;
            for _ in 0..8 {
                crc = if crc & 0x80 != 0 {
                    (crc << 1) ^ POLYNOMIAL
                } else {
                    crc << 1
                };
            }
        }
        crc
    }

    #[test]
    fn empty_message_is_zero() {
        assert_eq!(crc8(&[]), 0x00);
    }

    #[test]
    fn matches_smbus_check_value() {
        // Standard check value for CRC-8/SMBus (poly 0x07, init 0x00).
        assert_eq!(crc8(b"123456789"), 0xF4);
    }

    #[test]
    fn all_single_byte_messages_match_bitwise_oracle() {
        for b in 0..=0xFFu8 {
            assert_eq!(crc8(&[b]), crc8_bitwise(&[b]), "byte {b:#04x}");
        }
    }

    #[test]
    fn multi_byte_messages_match_bitwise_oracle() {
        let mut msg = Vec::new();
        for i in 0..257u16 {
            msg.push((i.wrapping_mul(31) ^ (i >> 3)) as u8);
            assert_eq!(crc8(&msg), crc8_bitwise(&msg), "len {}", msg.len());
        }
    }

    #[test]
    fn single_bit_flips_always_change_the_checksum() {
        // Exhaustive over all messages up to 3 bytes drawn from a varied
        // pattern, and all bit positions.
        for len in 1..=3usize {
            let base: Vec<u8> = (0..len).map(|i| (i as u8).wrapping_mul(0x5D) ^ 0xA7).collect();
            let reference = crc8(&base);
            for byte in 0..len {
                for bit in 0..8 {
                    let mut corrupted = base.clone();
                    corrupted[byte] ^= 1 << bit;
                    assert_ne!(crc8(&corrupted), reference, "flip {byte}:{bit} undetected");
                }
            }
        }
    }
}
