//! Virtual machine instruction table, loaded from `data/opcodes.tsv`.

use std::collections::HashMap;
use std::sync::OnceLock;

pub const IMPDEP1: u8 = 0xFE;
pub const IMPDEP2: u8 = 0xFF;

/// Kind of one fixed-width operand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperandKind {
    /// Signed byte immediate.
    Byte,
    /// Signed short immediate, big endian.
    Short,
    /// Signed int immediate, big endian.
    Int,
    /// Unsigned byte (token, nargs, dup/swap nibbles).
    UByte,
    /// Local variable index.
    Local,
    /// Constant pool index on one byte.
    CpIndex1,
    /// Constant pool index on two bytes.
    CpIndex2,
    /// One-byte branch offset; written as a label.
    Branch1,
    /// Two-byte branch offset; written as a label.
    Branch2,
    /// Array type code (0 for a class reference, 10..14 otherwise).
    ArrayType,
}

/// Operand layout of one instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperandLayout {
    Fixed(&'static [OperandKind]),
    /// default label, short low, short high, (high-low+1) labels
    TableSwitchShort,
    /// default label, int low, int high, (high-low+1) labels
    TableSwitchInt,
    /// default label, pair count, (short match, label) pairs
    LookupSwitchShort,
    /// default label, pair count, (int match, label) pairs
    LookupSwitchInt,
}

#[derive(Debug, Clone)]
pub struct OpSpec {
    pub mnemonic: &'static str,
    pub opcode: u8,
    pub operands: OperandLayout,
}

pub struct OpcodeTable {
    by_mnemonic: HashMap<&'static str, &'static OpSpec>,
    by_opcode: HashMap<u8, &'static OpSpec>,
}

impl OpcodeTable {
    pub fn by_mnemonic(&self, mnemonic: &str) -> Option<&'static OpSpec> {
        self.by_mnemonic.get(mnemonic).copied()
    }

    pub fn by_opcode(&self, opcode: u8) -> Option<&'static OpSpec> {
        self.by_opcode.get(&opcode).copied()
    }

    pub fn len(&self) -> usize {
        self.by_opcode.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_opcode.is_empty()
    }
}

const OPCODES_TSV: &str = include_str!("../data/opcodes.tsv");

fn parse_kinds(spec: &str) -> OperandLayout {
    match spec {
        "sswitch" => return OperandLayout::TableSwitchShort,
        "iswitch" => return OperandLayout::TableSwitchInt,
        "slookup" => return OperandLayout::LookupSwitchShort,
        "ilookup" => return OperandLayout::LookupSwitchInt,
        _ => {}
    }
    let kinds: Vec<OperandKind> = if spec == "-" {
        Vec::new()
    } else {
        spec.split(',')
            .map(|k| match k {
                "b1" => OperandKind::Byte,
                "s2" => OperandKind::Short,
                "i4" => OperandKind::Int,
                "u1" => OperandKind::UByte,
                "loc" => OperandKind::Local,
                "cp1" => OperandKind::CpIndex1,
                "cp2" => OperandKind::CpIndex2,
                "br1" => OperandKind::Branch1,
                "br2" => OperandKind::Branch2,
                "at" => OperandKind::ArrayType,
                other => panic!("unknown operand kind {other:?} in opcodes.tsv"),
            })
            .collect()
    };
    OperandLayout::Fixed(Box::leak(kinds.into_boxed_slice()))
}

fn load() -> OpcodeTable {
    let mut by_mnemonic = HashMap::new();
    let mut by_opcode = HashMap::new();
    for line in OPCODES_TSV.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line.split('\t');
        let mnemonic = cols.next().expect("mnemonic column");
        let opcode_str = cols.next().expect("opcode column");
        let kinds = cols.next().expect("operand column");
        let opcode = u8::from_str_radix(opcode_str.trim_start_matches("0x"), 16)
            .unwrap_or_else(|_| panic!("bad opcode {opcode_str:?}"));
        let spec: &'static OpSpec = Box::leak(Box::new(OpSpec {
            mnemonic: Box::leak(mnemonic.to_owned().into_boxed_str()),
            opcode,
            operands: parse_kinds(kinds),
        }));
        assert!(
            by_mnemonic.insert(spec.mnemonic, spec).is_none(),
            "duplicate mnemonic {mnemonic}"
        );
        assert!(
            by_opcode.insert(opcode, spec).is_none(),
            "duplicate opcode {opcode:#04x}"
        );
    }
    OpcodeTable {
        by_mnemonic,
        by_opcode,
    }
}

/// The instruction table. Loaded once from the embedded data asset.
pub fn table() -> &'static OpcodeTable {
    static TABLE: OnceLock<OpcodeTable> = OnceLock::new();
    TABLE.get_or_init(load)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reserved_trap_opcodes() {
        let t = table();
        assert_eq!(t.by_mnemonic("impdep1").unwrap().opcode, 254);
        assert_eq!(t.by_mnemonic("impdep2").unwrap().opcode, 255);
        assert_eq!(t.by_opcode(0xFE).unwrap().mnemonic, "impdep1");
        assert_eq!(t.by_opcode(0xFF).unwrap().mnemonic, "impdep2");
    }

    #[test]
    fn well_known_encodings() {
        let t = table();
        assert_eq!(t.by_mnemonic("sspush").unwrap().opcode, 0x11);
        assert_eq!(t.by_mnemonic("sreturn").unwrap().opcode, 0x76);
        assert_eq!(t.by_mnemonic("ireturn").unwrap().opcode, 0x77);
        assert_eq!(t.by_mnemonic("areturn").unwrap().opcode, 0x75);
        assert_eq!(t.by_mnemonic("return").unwrap().opcode, 0x78);
        assert_eq!(t.by_mnemonic("invokestatic").unwrap().opcode, 0x8B);
        assert_eq!(
            t.by_mnemonic("sspush").unwrap().operands,
            OperandLayout::Fixed(&[OperandKind::Short])
        );
    }

    #[test]
    fn table_is_complete_and_unambiguous() {
        let t = table();
        // 185 base instructions plus the two reserved traps.
        assert_eq!(t.len(), 187);
        for op in 0x00..=0xB8u8 {
            assert!(t.by_opcode(op).is_some(), "opcode {op:#04x} missing");
        }
    }
}
