//! On-disk export of a built package: one binary file per component plus
//! a zip archive laid out the way external verification tooling expects
//! (`<package/path>/javacard/<Component>.cap` entries).
//!
//! The archive writer only stores entries (no compression) and pins all
//! volatile zip metadata, so identical inputs produce identical bytes.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::{CapFile, ComponentKind};

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ArtifactError + '_ {
    move |source| ArtifactError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Per-package manifest line material.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArtifactManifest {
    pub package: String,
    pub aid: Vec<u8>,
    pub component_sizes: Vec<(&'static str, u16)>,
    /// False when the package carries trap-based native stubs, which the
    /// external bytecode verifier rejects.
    pub bcv_expected: bool,
    pub files: Vec<PathBuf>,
}

/// Writes `<out_dir>/<package>/<Component>.cap` files and
/// `<out_dir>/<package>.cap` (the archive). Returns what was written.
pub fn export_cap_artifact(cap: &CapFile, out_dir: &Path) -> Result<ArtifactManifest, ArtifactError> {
    let package_dir = out_dir.join(&cap.package_name);
    fs::create_dir_all(&package_dir).map_err(io_err(&package_dir))?;

    let mut files = Vec::new();
    let mut component_sizes = Vec::new();
    let mut entries = Vec::new();
    for component in cap.components() {
        let file = package_dir.join(component.kind.file_name());
        let encoded = component.encode();
        fs::write(&file, &encoded).map_err(io_err(&file))?;
        component_sizes.push((component.kind.name(), component.size()));
        files.push(file);
        entries.push((archive_entry_name(&cap.package_name, component.kind), encoded));
    }

    let archive_path = out_dir.join(format!("{}.cap", cap.package_name));
    let archive = build_zip(&entries);
    fs::write(&archive_path, archive).map_err(io_err(&archive_path))?;
    files.push(archive_path);

    Ok(ArtifactManifest {
        package: cap.package_name.clone(),
        aid: cap.package_aid.clone(),
        component_sizes,
        bcv_expected: !cap.uses_native_traps,
        files,
    })
}

fn archive_entry_name(package: &str, kind: ComponentKind) -> String {
    let path = package.replace('.', "/");
    format!("{path}/javacard/{}", kind.file_name())
}

// Minimal zip writer: local headers + central directory, store method,
// zeroed timestamps.

fn crc32(bytes: &[u8]) -> u32 {
    const fn table() -> [u32; 256] {
        let mut t = [0u32; 256];
        let mut i = 0;
        while i < 256 {
            let mut c = i as u32;
            let mut k = 0;
            while k < 8 {
                c = if c & 1 != 0 { 0xEDB8_8320 ^ (c >> 1) } else { c >> 1 };
                k += 1;
            }
            t[i] = c;
            i += 1;
        }
        t
    }
    const TABLE: [u32; 256] = table();
    let mut c = 0xFFFF_FFFFu32;
    for &b in bytes {
        c = TABLE[((c ^ b as u32) & 0xFF) as usize] ^ (c >> 8);
    }
    !c
}

fn build_zip(entries: &[(String, Vec<u8>)]) -> Vec<u8> {
    let mut out = Vec::new();
    let mut central = Vec::new();
    for (name, data) in entries {
        let offset = out.len() as u32;
        let crc = crc32(data);
        let name_bytes = name.as_bytes();
        let len = data.len() as u32;

        // Local file header.
        out.extend_from_slice(&0x0403_4B50u32.to_le_bytes());
        out.extend_from_slice(&20u16.to_le_bytes()); // version needed
        out.extend_from_slice(&0u16.to_le_bytes()); // flags
        out.extend_from_slice(&0u16.to_le_bytes()); // method: store
        out.extend_from_slice(&0u16.to_le_bytes()); // mod time
        out.extend_from_slice(&0u16.to_le_bytes()); // mod date
        out.extend_from_slice(&crc.to_le_bytes());
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(&(name_bytes.len() as u16).to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes()); // extra length
        out.extend_from_slice(name_bytes);
        out.extend_from_slice(data);

        // Central directory record.
        central.extend_from_slice(&0x0201_4B50u32.to_le_bytes());
        central.extend_from_slice(&20u16.to_le_bytes()); // version made by
        central.extend_from_slice(&20u16.to_le_bytes()); // version needed
        central.extend_from_slice(&0u16.to_le_bytes());
        central.extend_from_slice(&0u16.to_le_bytes());
        central.extend_from_slice(&0u16.to_le_bytes());
        central.extend_from_slice(&0u16.to_le_bytes());
        central.extend_from_slice(&crc.to_le_bytes());
        central.extend_from_slice(&len.to_le_bytes());
        central.extend_from_slice(&len.to_le_bytes());
        central.extend_from_slice(&(name_bytes.len() as u16).to_le_bytes());
        central.extend_from_slice(&0u16.to_le_bytes());
        central.extend_from_slice(&0u16.to_le_bytes());
        central.extend_from_slice(&0u16.to_le_bytes()); // disk number
        central.extend_from_slice(&0u16.to_le_bytes()); // internal attrs
        central.extend_from_slice(&0u32.to_le_bytes()); // external attrs
        central.extend_from_slice(&offset.to_le_bytes());
        central.extend_from_slice(name_bytes);
    }
    let central_offset = out.len() as u32;
    let central_size = central.len() as u32;
    out.extend_from_slice(&central);
    // End of central directory.
    out.extend_from_slice(&0x0605_4B50u32.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&(entries.len() as u16).to_le_bytes());
    out.extend_from_slice(&(entries.len() as u16).to_le_bytes());
    out.extend_from_slice(&central_size.to_le_bytes());
    out.extend_from_slice(&central_offset.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes()); // comment length
    out
}
