//! Bytecode assembly: instruction list -> encoded bytes plus the list of
//! constant-pool operand positions that feeds the reference location
//! component.

use std::collections::HashMap;

use thiserror::Error;

use crate::jca::model::{Instruction, JavaType, JcaMethod, Operand};
use crate::opcodes::{self, OperandKind, OperandLayout, OpSpec};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AssembleError {
    #[error("unresolved label {label} in {context}")]
    UnresolvedLabel { label: String, context: String },
    #[error("duplicate label {label} in {context}")]
    DuplicateLabel { label: String, context: String },
    #[error("operand {value} of {mnemonic} exceeds its encoding width")]
    OperandOverflow { mnemonic: &'static str, value: i64 },
    #[error("branch from {from} to {to} does not fit the offset width of {mnemonic}")]
    BranchOutOfRange {
        mnemonic: &'static str,
        from: u16,
        to: u16,
    },
    #[error("method body exceeds 65535 bytes")]
    BodyTooLarge,
}

/// Width of a constant pool index operand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelocWidth {
    One,
    Two,
}

/// Byte position of a constant pool index inside the assembled body.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Relocation {
    pub offset: u16,
    pub width: RelocWidth,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AssembledMethod {
    pub bytes: Vec<u8>,
    pub relocations: Vec<Relocation>,
    /// Label -> offset of the labelled instruction within `bytes`.
    pub labels: HashMap<String, u16>,
}

fn instruction_size(spec: &OpSpec, instr: &Instruction) -> usize {
    match spec.operands {
        OperandLayout::Fixed(kinds) => {
            1 + kinds
                .iter()
                .map(|k| match k {
                    OperandKind::Byte
                    | OperandKind::UByte
                    | OperandKind::Local
                    | OperandKind::CpIndex1
                    | OperandKind::Branch1
                    | OperandKind::ArrayType => 1,
                    OperandKind::Short | OperandKind::CpIndex2 | OperandKind::Branch2 => 2,
                    OperandKind::Int => 4,
                })
                .sum::<usize>()
        }
        OperandLayout::TableSwitchShort => {
            let targets = instr.operands.len() - 3;
            1 + 2 + 2 + 2 + 2 * targets
        }
        OperandLayout::TableSwitchInt => {
            let targets = instr.operands.len() - 3;
            1 + 2 + 4 + 4 + 2 * targets
        }
        OperandLayout::LookupSwitchShort => {
            let pairs = (instr.operands.len() - 2) / 2;
            1 + 2 + 2 + 4 * pairs
        }
        OperandLayout::LookupSwitchInt => {
            let pairs = (instr.operands.len() - 2) / 2;
            1 + 2 + 2 + 6 * pairs
        }
    }
}

fn number_operand(op: &Operand) -> i64 {
    match op {
        Operand::Number(n) => *n,
        Operand::CpIndex(i) => *i as i64,
        Operand::Label(_) => unreachable!("label operand where a number was typed"),
    }
}

fn label_operand<'a>(op: &'a Operand, context: &str) -> Result<&'a str, AssembleError> {
    match op {
        Operand::Label(l) => Ok(l),
        other => Err(AssembleError::UnresolvedLabel {
            label: format!("{other:?}"),
            context: context.to_owned(),
        }),
    }
}

/// Assembles a method body. `context` only feeds error messages.
pub fn assemble_method_in(
    body: &[Instruction],
    context: &str,
) -> Result<AssembledMethod, AssembleError> {
    // First pass: instruction offsets and label definitions.
    let table = opcodes::table();
    let mut offsets = Vec::with_capacity(body.len());
    let mut labels: HashMap<String, u16> = HashMap::new();
    let mut pc = 0usize;
    for instr in body {
        let spec = table
            .by_opcode(instr.opcode)
            .expect("model opcodes come from the table");
        offsets.push(pc as u16);
        if let Some(label) = &instr.label {
            if labels.insert(label.clone(), pc as u16).is_some() {
                return Err(AssembleError::DuplicateLabel {
                    label: label.clone(),
                    context: context.to_owned(),
                });
            }
        }
        pc += instruction_size(spec, instr);
        if pc > u16::MAX as usize {
            return Err(AssembleError::BodyTooLarge);
        }
    }

    let resolve = |label: &str| -> Result<u16, AssembleError> {
        labels
            .get(label)
            .copied()
            .ok_or_else(|| AssembleError::UnresolvedLabel {
                label: label.to_owned(),
                context: context.to_owned(),
            })
    };

    // Second pass: emit bytes and record constant-pool positions.
    let mut bytes = Vec::with_capacity(pc);
    let mut relocations = Vec::new();
    for (i, instr) in body.iter().enumerate() {
        let spec = table.by_opcode(instr.opcode).unwrap();
        let base = offsets[i];
        bytes.push(instr.opcode);
        match spec.operands {
            OperandLayout::Fixed(kinds) => {
                // checkcast/instanceof: with a primitive array type the
                // two index bytes are not a constant pool reference.
                let atype_nonzero = kinds.first() == Some(&OperandKind::ArrayType)
                    && matches!(instr.operands.first(), Some(Operand::Number(n)) if *n != 0);
                for (kind, op) in kinds.iter().zip(&instr.operands) {
                    emit_fixed(
                        spec,
                        *kind,
                        op,
                        base,
                        atype_nonzero,
                        &mut bytes,
                        &mut relocations,
                        &resolve,
                    )?;
                }
            }
            OperandLayout::TableSwitchShort | OperandLayout::TableSwitchInt => {
                let wide = spec.operands == OperandLayout::TableSwitchInt;
                let default = resolve(label_operand(&instr.operands[0], context)?)?;
                push_branch2(spec, base, default, &mut bytes)?;
                let low = number_operand(&instr.operands[1]);
                let high = number_operand(&instr.operands[2]);
                if wide {
                    push_int(spec, low, &mut bytes)?;
                    push_int(spec, high, &mut bytes)?;
                } else {
                    push_short(spec, low, &mut bytes)?;
                    push_short(spec, high, &mut bytes)?;
                }
                for op in &instr.operands[3..] {
                    let target = resolve(label_operand(op, context)?)?;
                    push_branch2(spec, base, target, &mut bytes)?;
                }
            }
            OperandLayout::LookupSwitchShort | OperandLayout::LookupSwitchInt => {
                let wide = spec.operands == OperandLayout::LookupSwitchInt;
                let default = resolve(label_operand(&instr.operands[0], context)?)?;
                push_branch2(spec, base, default, &mut bytes)?;
                let pairs = number_operand(&instr.operands[1]);
                bytes.extend_from_slice(&(pairs as u16).to_be_bytes());
                let mut rest = instr.operands[2..].iter();
                while let (Some(m), Some(l)) = (rest.next(), rest.next()) {
                    let match_value = number_operand(m);
                    if wide {
                        push_int(spec, match_value, &mut bytes)?;
                    } else {
                        push_short(spec, match_value, &mut bytes)?;
                    }
                    let target = resolve(label_operand(l, context)?)?;
                    push_branch2(spec, base, target, &mut bytes)?;
                }
            }
        }
    }
    Ok(AssembledMethod {
        bytes,
        relocations,
        labels,
    })
}

/// Assembles a standalone body (abstract methods assemble to nothing).
pub fn assemble_method(body: &[Instruction]) -> Result<AssembledMethod, AssembleError> {
    assemble_method_in(body, "method")
}

#[allow(clippy::too_many_arguments)]
fn emit_fixed(
    spec: &OpSpec,
    kind: OperandKind,
    op: &Operand,
    base: u16,
    atype_nonzero: bool,
    bytes: &mut Vec<u8>,
    relocations: &mut Vec<Relocation>,
    resolve: &dyn Fn(&str) -> Result<u16, AssembleError>,
) -> Result<(), AssembleError> {
    match kind {
        OperandKind::Byte => {
            let v = number_operand(op);
            if !(-128..=255).contains(&v) {
                return Err(AssembleError::OperandOverflow {
                    mnemonic: spec.mnemonic,
                    value: v,
                });
            }
            bytes.push(v as u8);
        }
        OperandKind::UByte | OperandKind::Local | OperandKind::ArrayType => {
            let v = number_operand(op);
            if !(0..=255).contains(&v) {
                return Err(AssembleError::OperandOverflow {
                    mnemonic: spec.mnemonic,
                    value: v,
                });
            }
            bytes.push(v as u8);
        }
        OperandKind::Short => push_short(spec, number_operand(op), bytes)?,
        OperandKind::Int => push_int(spec, number_operand(op), bytes)?,
        OperandKind::CpIndex1 => {
            let v = number_operand(op);
            if !(0..=255).contains(&v) {
                return Err(AssembleError::OperandOverflow {
                    mnemonic: spec.mnemonic,
                    value: v,
                });
            }
            if !atype_nonzero {
                relocations.push(Relocation {
                    offset: bytes.len() as u16,
                    width: RelocWidth::One,
                });
            }
            bytes.push(v as u8);
        }
        OperandKind::CpIndex2 => {
            let v = number_operand(op);
            if !(0..=0xFFFF).contains(&v) {
                return Err(AssembleError::OperandOverflow {
                    mnemonic: spec.mnemonic,
                    value: v,
                });
            }
            if !atype_nonzero {
                relocations.push(Relocation {
                    offset: bytes.len() as u16,
                    width: RelocWidth::Two,
                });
            }
            bytes.extend_from_slice(&(v as u16).to_be_bytes());
        }
        OperandKind::Branch1 => {
            let target = resolve(label_operand(op, spec.mnemonic)?)?;
            let rel = target as i32 - base as i32;
            if !(-128..=127).contains(&rel) {
                return Err(AssembleError::BranchOutOfRange {
                    mnemonic: spec.mnemonic,
                    from: base,
                    to: target,
                });
            }
            bytes.push(rel as i8 as u8);
        }
        OperandKind::Branch2 => {
            let target = resolve(label_operand(op, spec.mnemonic)?)?;
            push_branch2(spec, base, target, bytes)?;
        }
    }
    Ok(())
}

fn push_short(spec: &OpSpec, v: i64, bytes: &mut Vec<u8>) -> Result<(), AssembleError> {
    // Signed range plus the raw unsigned range: dispatch indices use the
    // full 0..=65535 space.
    if !(-32768..=65535).contains(&v) {
        return Err(AssembleError::OperandOverflow {
            mnemonic: spec.mnemonic,
            value: v,
        });
    }
    bytes.extend_from_slice(&(v as u16).to_be_bytes());
    Ok(())
}

fn push_int(spec: &OpSpec, v: i64, bytes: &mut Vec<u8>) -> Result<(), AssembleError> {
    if !(i32::MIN as i64..=u32::MAX as i64).contains(&v) {
        return Err(AssembleError::OperandOverflow {
            mnemonic: spec.mnemonic,
            value: v,
        });
    }
    bytes.extend_from_slice(&(v as u32).to_be_bytes());
    Ok(())
}

fn push_branch2(
    spec: &OpSpec,
    base: u16,
    target: u16,
    bytes: &mut Vec<u8>,
) -> Result<(), AssembleError> {
    let rel = target as i32 - base as i32;
    if !(-32768..=32767).contains(&rel) {
        return Err(AssembleError::BranchOutOfRange {
            mnemonic: spec.mnemonic,
            from: base,
            to: target,
        });
    }
    bytes.extend_from_slice(&(rel as i16).to_be_bytes());
    Ok(())
}

/// Builds the trap stub standing in for a native method body: push the
/// dispatch index, trap into the host, return the value the host left on
/// the stack. The return opcode follows the declared return type.
pub fn inject_native_stub(method: &JcaMethod, index: u16) -> Vec<Instruction> {
    let table = opcodes::table();
    let op = |m: &str| table.by_mnemonic(m).unwrap().opcode;
    let return_mnemonic = match &method.sig.ret {
        None => "return",
        Some(JavaType::Int) => "ireturn",
        Some(JavaType::Reference(_)) | Some(JavaType::Array(_)) => "areturn",
        Some(JavaType::Byte) | Some(JavaType::Boolean) | Some(JavaType::Short) => "sreturn",
    };
    vec![
        Instruction {
            opcode: op("sspush"),
            label: None,
            operands: vec![Operand::Number(index as i64)],
        },
        Instruction {
            opcode: op("impdep1"),
            label: None,
            operands: vec![],
        },
        Instruction {
            opcode: op(return_mnemonic),
            label: None,
            operands: vec![],
        },
    ]
}
