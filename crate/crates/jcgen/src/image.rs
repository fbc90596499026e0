//! Initial-state serialization: package table, executable package
//! structures and non-default static field values become committed
//! filesystem blocks inside the target sector of a fresh device image.
//!
//! Tag scheme (first tag byte selects the kind):
//!
//! * `0` is the package table, one bit per package id, LSB first;
//! * `1, pkg` is a package structure: a component offset index followed
//!   by the concatenated component binaries;
//! * `2, pkg, field` is a static field initial value, type code first;
//! * `3, pkg, class, field` is an applet instance field; the codec is
//!   provided for the runtime's use, the image builder never emits one;
//! * `4..` is reserved.

use flashfs::{block, Filesystem, FlashDevice, FsError};
use thiserror::Error;

use crate::cap::CapFile;
use crate::config::MemoryConfig;

/// Field type codes stored as the first data byte of field blocks.
pub mod field_type {
    pub const BYTE: u8 = 0;
    pub const BOOLEAN: u8 = 1;
    pub const SHORT: u8 = 2;
    pub const INT: u8 = 3;
    pub const OBJECT: u8 = 4;

    pub const ARRAY_FLAG: u8 = 1 << 7;
    pub const TRANSIENT_FLAG: u8 = 1 << 6;

    pub const ARRAY_BYTE: u8 = ARRAY_FLAG | BYTE;
    pub const ARRAY_BOOLEAN: u8 = ARRAY_FLAG | BOOLEAN;
    pub const ARRAY_SHORT: u8 = ARRAY_FLAG | SHORT;
    pub const ARRAY_INT: u8 = ARRAY_FLAG | INT;
    pub const ARRAY_OBJECT: u8 = ARRAY_FLAG | OBJECT;

    pub const TRANSIENT_ARRAY_BYTE: u8 = TRANSIENT_FLAG | ARRAY_BYTE;
    pub const TRANSIENT_ARRAY_BOOLEAN: u8 = TRANSIENT_FLAG | ARRAY_BOOLEAN;
    pub const TRANSIENT_ARRAY_SHORT: u8 = TRANSIENT_FLAG | ARRAY_SHORT;
    pub const TRANSIENT_ARRAY_INT: u8 = TRANSIENT_FLAG | ARRAY_INT;
    pub const TRANSIENT_ARRAY_OBJECT: u8 = TRANSIENT_FLAG | ARRAY_OBJECT;
}

/// Tag kind bytes.
pub mod tag_kind {
    pub const PACKAGE_TABLE: u8 = 0;
    pub const CAP_STRUCTURE: u8 = 1;
    pub const STATIC_FIELD: u8 = 2;
    pub const APPLET_FIELD: u8 = 3;
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ImageError {
    #[error("value of {got} bytes does not match type code {type_code:#04x}")]
    TypeWidthMismatch { type_code: u8, got: usize },
    #[error("unknown field type code {0:#04x}")]
    UnknownTypeCode(u8),
    #[error("serialized image needs {required} bytes but the target sector holds {available}")]
    SectorOverflow { required: usize, available: usize },
    #[error("target sector {target} outside geometry of {sectors} sectors")]
    BadTargetSector { target: usize, sectors: usize },
    #[error("more than 256 packages ({0})")]
    TooManyPackages(usize),
    #[error(transparent)]
    Fs(#[from] FsError),
}

/// Bitmap of installed package ids: bit `i % 8` (LSB first) of byte
/// `i / 8`, padded to at least `bitmap_min` bytes.
pub fn encode_package_table(installed: &[u8], bitmap_min: usize) -> (Vec<u8>, Vec<u8>) {
    let needed = installed
        .iter()
        .map(|&id| id as usize / 8 + 1)
        .max()
        .unwrap_or(0);
    let mut data = vec![0u8; needed.max(bitmap_min)];
    for &id in installed {
        data[id as usize / 8] |= 1 << (id % 8);
    }
    (vec![tag_kind::PACKAGE_TABLE], data)
}

/// Package structure block: a component offset index (count, then one
/// `tag, offset` pair per present component; offsets are relative to the
/// end of the index) followed by each component's `tag, size, body`
/// encoding, so the runtime can address components in place.
pub fn encode_cap_block(pkg_id: u8, cap: &CapFile) -> (Vec<u8>, Vec<u8>) {
    let components: Vec<Vec<u8>> = cap.components().map(|c| c.encode()).collect();
    let tags: Vec<u8> = cap.components().map(|c| c.tag()).collect();
    let mut data = Vec::new();
    data.push(components.len() as u8);
    let mut offset = 0u32;
    for (tag, encoded) in tags.iter().zip(&components) {
        data.push(*tag);
        data.extend_from_slice(&offset.to_be_bytes());
        offset += encoded.len() as u32;
    }
    for encoded in &components {
        data.extend_from_slice(encoded);
    }
    (vec![tag_kind::CAP_STRUCTURE, pkg_id], data)
}

fn check_value_width(type_code: u8, value: &[u8]) -> Result<(), ImageError> {
    let mismatch = || ImageError::TypeWidthMismatch {
        type_code,
        got: value.len(),
    };
    let base = type_code & !(field_type::ARRAY_FLAG | field_type::TRANSIENT_FLAG);
    let is_array = type_code & field_type::ARRAY_FLAG != 0;
    if type_code & field_type::TRANSIENT_FLAG != 0 && !is_array {
        return Err(ImageError::UnknownTypeCode(type_code));
    }
    let elem_width = match base {
        field_type::BYTE | field_type::BOOLEAN => 1,
        field_type::SHORT => 2,
        field_type::INT => 4,
        field_type::OBJECT => 0,
        _ => return Err(ImageError::UnknownTypeCode(type_code)),
    };
    if is_array {
        if base == field_type::OBJECT {
            // Arrays of references hold 2-byte entries.
            if !value.len().is_multiple_of(2) {
                return Err(mismatch());
            }
        } else if !value.len().is_multiple_of(elem_width) {
            return Err(mismatch());
        }
        Ok(())
    } else if base == field_type::OBJECT {
        if value.is_empty() {
            Ok(())
        } else {
            Err(mismatch())
        }
    } else if value.len() == elem_width {
        Ok(())
    } else {
        Err(mismatch())
    }
}

/// Static field block: tag `[2, pkg, field]`, data `[type_code] ++ value`.
pub fn encode_static_field(
    pkg_id: u8,
    field_no: u8,
    type_code: u8,
    value: &[u8],
) -> Result<(Vec<u8>, Vec<u8>), ImageError> {
    check_value_width(type_code, value)?;
    let mut data = Vec::with_capacity(1 + value.len());
    data.push(type_code);
    data.extend_from_slice(value);
    Ok((vec![tag_kind::STATIC_FIELD, pkg_id, field_no], data))
}

/// Applet instance field block: tag `[3, pkg, class, field]`. Emitted at
/// runtime by the virtual machine, never by the image builder; the codec
/// lives here so both sides agree on the format.
pub fn encode_applet_field(
    pkg_id: u8,
    class_no: u8,
    field_no: u8,
    type_code: u8,
    value: &[u8],
) -> Result<(Vec<u8>, Vec<u8>), ImageError> {
    check_value_width(type_code, value)?;
    let mut data = Vec::with_capacity(1 + value.len());
    data.push(type_code);
    data.extend_from_slice(value);
    Ok((
        vec![tag_kind::APPLET_FIELD, pkg_id, class_no, field_no],
        data,
    ))
}

/// Serializes the whole initial state into the target sector of a fresh
/// device: package table first, then package structures in id order,
/// then static field values.
pub fn build_initial_image(
    packages: &[CapFile],
    config: &MemoryConfig,
) -> Result<FlashDevice, ImageError> {
    if packages.len() > 256 {
        return Err(ImageError::TooManyPackages(packages.len()));
    }
    let geometry = config.geometry();
    if config.target_sector >= geometry.sector_count() {
        return Err(ImageError::BadTargetSector {
            target: config.target_sector,
            sectors: geometry.sector_count(),
        });
    }

    let ids: Vec<u8> = (0..packages.len() as u8).collect();
    let mut blocks: Vec<(Vec<u8>, Vec<u8>)> = Vec::new();
    blocks.push(encode_package_table(&ids, config.bitmap_min));
    for (id, cap) in packages.iter().enumerate() {
        blocks.push(encode_cap_block(id as u8, cap));
    }
    for (id, cap) in packages.iter().enumerate() {
        for value in &cap.static_values {
            blocks.push(encode_static_field(
                id as u8,
                value.field_no,
                value.type_code,
                &value.value,
            )?);
        }
    }

    let required: usize = blocks
        .iter()
        .map(|(tag, data)| block::block_len(tag.len(), data.len()))
        .sum();
    let available = geometry
        .sector(config.target_sector)
        .map_err(FsError::from)?
        .size;
    if required > available {
        return Err(ImageError::SectorOverflow {
            required,
            available,
        });
    }

    let mut fs = Filesystem::mount(FlashDevice::new(geometry))?;
    for (tag, data) in &blocks {
        fs.write_in_sector(config.target_sector, tag, data)?;
    }
    Ok(fs.into_device())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_type_constant_table() {
        use field_type::*;
        assert_eq!(
            [BYTE, BOOLEAN, SHORT, INT, OBJECT],
            [0, 1, 2, 3, 4]
        );
        assert_eq!(
            [ARRAY_BYTE, ARRAY_BOOLEAN, ARRAY_SHORT, ARRAY_INT, ARRAY_OBJECT],
            [0x80, 0x81, 0x82, 0x83, 0x84]
        );
        assert_eq!(
            [
                TRANSIENT_ARRAY_BYTE,
                TRANSIENT_ARRAY_BOOLEAN,
                TRANSIENT_ARRAY_SHORT,
                TRANSIENT_ARRAY_INT,
                TRANSIENT_ARRAY_OBJECT
            ],
            [0xC0, 0xC1, 0xC2, 0xC3, 0xC4]
        );
    }

    #[test]
    fn package_table_examples() {
        // 23 packages stay within the 8-byte floor.
        let ids: Vec<u8> = (0..23).collect();
        let (tag, data) = encode_package_table(&ids, 8);
        assert_eq!(tag, vec![0x00]);
        assert_eq!(data.len(), 8);
        assert_eq!(&data[..3], &[0xFF, 0xFF, 0x7F]);

        let (_, empty) = encode_package_table(&[], 8);
        assert_eq!(empty, vec![0u8; 8]);

        let (_, one) = encode_package_table(&[0], 8);
        assert_eq!(one[0], 0b0000_0001);

        // Above 64 ids the bitmap grows past the floor.
        let (_, wide) = encode_package_table(&[70], 8);
        assert_eq!(wide.len(), 9);
        assert_eq!(wide[8], 1 << 6);
    }

    #[test]
    fn static_field_worked_examples() {
        let (tag, data) =
            encode_static_field(3, 0, field_type::ARRAY_BYTE, &[0x01, 0x02, 0x03, 0x04]).unwrap();
        assert_eq!(tag, vec![0x02, 0x03, 0x00]);
        assert_eq!(data, vec![0x80, 0x01, 0x02, 0x03, 0x04]);

        let (tag, data) =
            encode_applet_field(3, 0, 0, field_type::SHORT, &[0x45, 0x67]).unwrap();
        assert_eq!(tag, vec![0x03, 0x03, 0x00, 0x00]);
        assert_eq!(data, vec![0x02, 0x45, 0x67]);

        let (tag, data) = encode_applet_field(3, 0, 1, field_type::OBJECT, &[]).unwrap();
        assert_eq!(tag, vec![0x03, 0x03, 0x00, 0x01]);
        assert_eq!(data, vec![0x04]);
    }

    #[test]
    fn initial_image_block_census() {
        use crate::cap::build_cap;
        use crate::jca::{collect_native_methods, parse_package_text};

        let with_static = parse_package_text(
            r#"
.package one {
  .aid 0xF0:0x00:0x00:0x00:0x21;
  .version 1.0;
  .class public A {
    .fields { public static short v = 5; }
  }
}
"#,
        )
        .unwrap();
        let without_static = parse_package_text(
            r#"
.package two {
  .aid 0xF0:0x00:0x00:0x00:0x22;
  .version 1.0;
  .class public B { }
}
"#,
        )
        .unwrap();
        let natives = collect_native_methods(&[]).unwrap();
        let caps = vec![
            build_cap(&with_static, 0, &natives).unwrap(),
            build_cap(&without_static, 1, &natives).unwrap(),
        ];
        let config = MemoryConfig {
            packages: vec!["one".into(), "two".into()],
            ..MemoryConfig::default()
        };
        let device = build_initial_image(&caps, &config).unwrap();
        let fs = Filesystem::mount(device).unwrap();
        // Package table + one structure per package + one static block.
        assert_eq!(fs.table().len(), 1 + 2 + 1);
        for tag in fs.table().tags() {
            assert!(
                matches!(tag[0], tag_kind::PACKAGE_TABLE | tag_kind::CAP_STRUCTURE | tag_kind::STATIC_FIELD),
                "unexpected tag kind {:#04x}",
                tag[0]
            );
        }
        assert_eq!(
            fs.read(&[tag_kind::STATIC_FIELD, 0, 0]).unwrap().unwrap(),
            vec![field_type::SHORT, 0x00, 0x05]
        );

        // A corpus with no initial values emits no static blocks.
        let caps = vec![build_cap(&without_static, 0, &natives).unwrap()];
        let config = MemoryConfig {
            packages: vec!["two".into()],
            ..MemoryConfig::default()
        };
        let device = build_initial_image(&caps, &config).unwrap();
        let fs = Filesystem::mount(device).unwrap();
        assert_eq!(fs.table().len(), 1 + 1);
    }

    #[test]
    fn cap_block_decodes_back_to_components() {
        use crate::cap::build_cap;
        use crate::jca::{collect_native_methods, parse_package_text};

        let pkg = parse_package_text(
            r#"
.package round {
  .aid 0xF0:0x00:0x00:0x00:0x23;
  .version 3.1;
  .class public R {
    .method public static short id(short) {
      .stack 1;
      .nargs 1;
      .locals 0;
      sload_0;
      sreturn;
    }
  }
}
"#,
        )
        .unwrap();
        let natives = collect_native_methods(&[]).unwrap();
        let cap = build_cap(&pkg, 3, &natives).unwrap();
        let (tag, data) = encode_cap_block(3, &cap);
        assert_eq!(tag, vec![0x01, 0x03]);

        // Independent decode of the offset index and component slices.
        let count = data[0] as usize;
        assert_eq!(count, cap.components().count());
        let mut index = Vec::new();
        for i in 0..count {
            let at = 1 + 5 * i;
            let tag = data[at];
            let offset =
                u32::from_be_bytes([data[at + 1], data[at + 2], data[at + 3], data[at + 4]]);
            index.push((tag, offset as usize));
        }
        let blob = &data[1 + 5 * count..];
        let mut offsets_seen = Vec::new();
        for ((tag, offset), component) in index.iter().zip(cap.components()) {
            assert_eq!(*tag, component.tag());
            let encoded = component.encode();
            assert_eq!(&blob[*offset..*offset + encoded.len()], &encoded[..]);
            offsets_seen.push(*offset);
        }
        assert!(offsets_seen.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn width_checks() {
        assert!(matches!(
            encode_static_field(0, 0, field_type::SHORT, &[1]),
            Err(ImageError::TypeWidthMismatch { .. })
        ));
        assert!(matches!(
            encode_static_field(0, 0, field_type::INT, &[1, 2, 3, 4, 5]),
            Err(ImageError::TypeWidthMismatch { .. })
        ));
        assert!(matches!(
            encode_static_field(0, 0, field_type::ARRAY_SHORT, &[1, 2, 3]),
            Err(ImageError::TypeWidthMismatch { .. })
        ));
        assert!(encode_static_field(0, 0, field_type::ARRAY_SHORT, &[1, 2, 3, 4]).is_ok());
        assert!(matches!(
            encode_static_field(0, 0, field_type::TRANSIENT_FLAG | field_type::SHORT, &[1, 2]),
            Err(ImageError::UnknownTypeCode(_))
        ));
        assert!(matches!(
            encode_static_field(0, 0, 0x05, &[]),
            Err(ImageError::UnknownTypeCode(0x05))
        ));
    }
}
