//! Pipeline orchestration: read the build configuration and the package
//! sources, run frontend -> package builder -> dispatcher generator ->
//! image serializer -> HEX writer, and expose inspection commands over
//! built images.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use flashfs::{scan_device, BlockState, Filesystem, FlashDevice, Geometry};
use jcgen::cap::{build_cap, export_cap_artifact, CapFile};
use jcgen::config::MemoryConfig;
use jcgen::dispatcher::{generate_header, resolve_entry_point, GeneratorOptions};
use jcgen::hexfile::{decode_hex, encode_hex};
use jcgen::image::build_initial_image;
use jcgen::jca::{collect_native_methods, parse_package_text, JcaPackage};

#[derive(Debug, Error)]
pub enum CliError {
    /// Exit code 2: bad input (config, sources, image files).
    #[error("{0}")]
    Input(String),
    /// Exit code 3: a lookup missed (unknown tag).
    #[error("{0}")]
    Lookup(String),
    /// Exit code 1: everything else.
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Internal(_) => 1,
            CliError::Input(_) => 2,
            CliError::Lookup(_) => 3,
        }
    }
}

fn input<E: std::fmt::Display>(context: &str) -> impl FnOnce(E) -> CliError + '_ {
    move |e| CliError::Input(format!("{context}: {e}"))
}

#[derive(Debug, Serialize)]
pub struct PackageReport {
    pub name: String,
    pub aid: String,
    pub component_sizes: BTreeMap<String, u16>,
    pub bcv_expected: bool,
}

#[derive(Debug, Serialize)]
pub struct BuildReport {
    pub packages: Vec<PackageReport>,
    pub native_method_count: usize,
    pub entry_point: [u8; 3],
    /// Bytes occupied by blocks in the target sector.
    pub image_payload_bytes: usize,
    /// Full device size.
    pub image_total_bytes: usize,
    pub block_count: usize,
    /// Relative output path -> sha256 of the file contents.
    pub outputs: BTreeMap<String, String>,
    pub warnings: Vec<String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        let _ = write!(out, "{b:02x}");
    }
    out
}

fn hex_string(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        let _ = write!(out, "{b:02x}");
    }
    out
}

/// Runs the whole build. Writes `flash.hex`, `flash.bin`, `jni.h`,
/// per-package component artifacts plus `cap/manifest.jsonl`, and
/// `report.json` under `out_dir`.
pub fn cmd_build(
    config_path: &Path,
    jca_dir: &Path,
    out_dir: &Path,
    base_address_override: Option<u32>,
) -> Result<BuildReport, CliError> {
    let mut config =
        MemoryConfig::load(config_path).map_err(|e| CliError::Input(e.to_string()))?;
    if let Some(base) = base_address_override {
        config.base_address = base;
    }
    let config_bytes = fs::read(config_path).map_err(input("config"))?;

    // Frontend, in configured order.
    let mut packages: Vec<JcaPackage> = Vec::new();
    let mut source_bytes: Vec<u8> = Vec::new();
    for name in &config.packages {
        let path = jca_dir.join(format!("{name}.jca"));
        let text = fs::read_to_string(&path).map_err(|e| {
            CliError::Input(format!("package {name}: cannot read {}: {e}", path.display()))
        })?;
        let pkg = parse_package_text(&text)
            .map_err(|e| CliError::Input(format!("package {name}: {e}")))?;
        if &pkg.name != name {
            return Err(CliError::Input(format!(
                "package file {} declares {} but the config names it {name}",
                path.display(),
                pkg.name
            )));
        }
        source_bytes.extend_from_slice(text.as_bytes());
        packages.push(pkg);
    }

    let natives =
        collect_native_methods(&packages).map_err(|e| CliError::Input(e.to_string()))?;

    // Per-package component sets.
    let mut caps: Vec<CapFile> = Vec::new();
    let mut warnings = Vec::new();
    for (id, pkg) in packages.iter().enumerate() {
        let cap = build_cap(pkg, id as u8, &natives)
            .map_err(|e| CliError::Input(format!("package {}: {e}", pkg.name)))?;
        if cap.uses_native_traps && !config.native_only.iter().any(|p| p == &pkg.name) {
            warnings.push(format!(
                "package {} carries native stubs but is not marked native_only; \
                 it cannot pass external verification",
                pkg.name
            ));
        }
        caps.push(cap);
    }

    fs::create_dir_all(out_dir).map_err(input("output directory"))?;
    let cap_dir = out_dir.join("cap");
    fs::create_dir_all(&cap_dir).map_err(input("output directory"))?;

    let mut manifest = String::new();
    let mut package_reports = Vec::new();
    let mut outputs: Vec<PathBuf> = Vec::new();
    for cap in &caps {
        let artifact = export_cap_artifact(cap, &cap_dir)
            .map_err(|e| CliError::Internal(e.to_string()))?;
        let component_sizes: BTreeMap<String, u16> = artifact
            .component_sizes
            .iter()
            .map(|(name, size)| (name.to_string(), *size))
            .collect();
        let line = serde_json::json!({
            "package": artifact.package,
            "aid": hex_string(&artifact.aid),
            "components": component_sizes,
            "bcv_expected": artifact.bcv_expected,
        });
        manifest.push_str(&line.to_string());
        manifest.push('\n');
        package_reports.push(PackageReport {
            name: artifact.package.clone(),
            aid: hex_string(&artifact.aid),
            component_sizes,
            bcv_expected: artifact.bcv_expected,
        });
        outputs.extend(artifact.files);
    }
    let manifest_path = cap_dir.join("manifest.jsonl");
    fs::write(&manifest_path, manifest).map_err(input("manifest"))?;
    outputs.push(manifest_path);

    // Dispatcher header.
    let entry = resolve_entry_point(&packages, &config.entry_point)
        .map_err(|e| CliError::Input(e.to_string()))?;
    let mut digest_input = config_bytes.clone();
    digest_input.extend_from_slice(&source_bytes);
    let options = GeneratorOptions {
        pop_receiver: config.pop_receiver,
        input_digest: sha256_hex(&digest_input),
    };
    let header = generate_header(&natives, entry, &options)
        .map_err(|e| CliError::Input(e.to_string()))?;
    let header_path = out_dir.join("jni.h");
    fs::write(&header_path, &header).map_err(input("jni.h"))?;
    outputs.push(header_path);

    // Initial memory image.
    let device =
        build_initial_image(&caps, &config).map_err(|e| CliError::Input(e.to_string()))?;
    let snapshot = device.snapshot();
    let bin_path = out_dir.join("flash.bin");
    fs::write(&bin_path, &snapshot).map_err(input("flash.bin"))?;
    outputs.push(bin_path);
    let hex_path = out_dir.join("flash.hex");
    fs::write(&hex_path, encode_hex(&snapshot, config.base_address)).map_err(input("flash.hex"))?;
    outputs.push(hex_path);

    // Payload accounting from a scan of the built image.
    let (blocks, corrupt) =
        scan_device(&device).map_err(|e| CliError::Internal(e.to_string()))?;
    if !corrupt.is_empty() {
        return Err(CliError::Internal(format!(
            "freshly built image reports corrupt sectors {corrupt:?}"
        )));
    }
    let image_payload_bytes = blocks.iter().map(|b| b.block_len).sum();

    let mut output_digests = BTreeMap::new();
    for path in &outputs {
        let bytes = fs::read(path).map_err(input("digest"))?;
        let rel = path
            .strip_prefix(out_dir)
            .unwrap_or(path)
            .to_string_lossy()
            .into_owned();
        output_digests.insert(rel, sha256_hex(&bytes));
    }

    let report = BuildReport {
        packages: package_reports,
        native_method_count: natives.len(),
        entry_point: [entry.package_token, entry.class_token, entry.method_token],
        image_payload_bytes,
        image_total_bytes: snapshot.len(),
        block_count: blocks.len(),
        outputs: output_digests,
        warnings,
    };
    let report_path = out_dir.join("report.json");
    let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Internal(e.to_string()))?;
    fs::write(&report_path, json).map_err(input("report.json"))?;
    Ok(report)
}

/// Loads a device image: raw cell dump, or HEX when the file ends in
/// `.hex` (records are placed relative to the configured base address).
pub fn load_image(
    image_path: &Path,
    geometry: &Geometry,
    base_address: u32,
) -> Result<FlashDevice, CliError> {
    let is_hex = image_path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("hex"));
    let cells = if is_hex {
        let text = fs::read_to_string(image_path).map_err(input("image"))?;
        let map = decode_hex(&text).map_err(|e| CliError::Input(e.to_string()))?;
        let mut cells = vec![0xFF; geometry.total_size()];
        for (addr, byte) in map {
            let offset = addr
                .checked_sub(base_address)
                .ok_or_else(|| {
                    CliError::Input(format!(
                        "record address {addr:#x} below base address {base_address:#x}"
                    ))
                })? as usize;
            if offset >= cells.len() {
                return Err(CliError::Input(format!(
                    "record address {addr:#x} outside the {} byte geometry",
                    cells.len()
                )));
            }
            cells[offset] = byte;
        }
        cells
    } else {
        fs::read(image_path).map_err(input("image"))?
    };
    FlashDevice::from_snapshot(geometry.clone(), cells).map_err(|e| CliError::Input(e.to_string()))
}

fn state_name(state: BlockState) -> &'static str {
    match state {
        BlockState::Committed => "committed",
        BlockState::Uncommitted => "uncommitted",
        BlockState::Superseded => "superseded",
    }
}

/// `fs dump`: lists every block as (state, tag, length, crc). The
/// listing is produced even for damaged images, but those exit nonzero.
pub fn cmd_fs_dump(device: &FlashDevice) -> Result<String, CliError> {
    let (blocks, corrupt) = scan_device(device).map_err(|e| CliError::Internal(e.to_string()))?;
    let mut out = String::new();
    let mut bad_crc = false;
    for b in &blocks {
        bad_crc |= !b.crc_ok;
        let _ = writeln!(
            out,
            "sector {} @{:#08x}: {:<11} tag={} len={} crc={}",
            b.sector,
            b.address,
            state_name(b.state),
            hex_string(&b.tag),
            b.data_len,
            if b.crc_ok { "ok" } else { "BAD" },
        );
    }
    for s in &corrupt {
        let _ = writeln!(out, "sector {s}: corrupt tail, needs defragmentation");
    }
    let _ = writeln!(out, "{} blocks", blocks.len());
    if bad_crc || !corrupt.is_empty() {
        return Err(CliError::Input(format!("{out}image is corrupt")));
    }
    Ok(out)
}

/// `fs get`: prints the committed data for a tag as hex.
pub fn cmd_fs_get(device: FlashDevice, tag_hex: &str) -> Result<String, CliError> {
    let tag = parse_hex_string(tag_hex)?;
    let fs = Filesystem::mount(device).map_err(|e| CliError::Input(e.to_string()))?;
    match fs.read(&tag).map_err(|e| CliError::Input(e.to_string()))? {
        Some(data) => Ok(format!("{}\n", hex_string(&data))),
        None => Err(CliError::Lookup(format!("tag {tag_hex} not present"))),
    }
}

/// `fs verify`: re-checks every hashsum and reports garbage ratios.
/// Fails (input error) when corruption is found.
pub fn cmd_fs_verify(device: &FlashDevice) -> Result<String, CliError> {
    let (blocks, corrupt) = scan_device(device).map_err(|e| CliError::Internal(e.to_string()))?;
    let mut out = String::new();
    let mut bad_crc = 0usize;
    let mut garbage_bytes = 0usize;
    let mut live_bytes = 0usize;
    for b in &blocks {
        if !b.crc_ok {
            bad_crc += 1;
            let _ = writeln!(
                out,
                "bad hashsum: sector {} @{:#08x} tag={}",
                b.sector,
                b.address,
                hex_string(&b.tag)
            );
        }
        if b.crc_ok && b.state == BlockState::Committed {
            live_bytes += b.block_len;
        } else {
            garbage_bytes += b.block_len;
        }
    }
    let written = live_bytes + garbage_bytes;
    let ratio = if written == 0 {
        0.0
    } else {
        garbage_bytes as f64 / written as f64
    };
    let _ = writeln!(
        out,
        "{} blocks, {live_bytes} live bytes, {garbage_bytes} garbage bytes (ratio {ratio:.2})",
        blocks.len()
    );
    if !corrupt.is_empty() {
        let _ = writeln!(out, "corrupt sectors: {corrupt:?}");
    }
    if bad_crc > 0 || !corrupt.is_empty() {
        return Err(CliError::Input(format!(
            "{out}image is corrupt: {bad_crc} bad hashsums, {} corrupt sectors",
            corrupt.len()
        )));
    }
    Ok(out)
}

fn parse_hex_string(s: &str) -> Result<Vec<u8>, CliError> {
    let s = s.trim();
    if s.is_empty() || !s.len().is_multiple_of(2) || !s.chars().all(|c| c.is_ascii_hexdigit()) {
        return Err(CliError::Input(format!(
            "tag {s:?} is not an even-length hex string"
        )));
    }
    Ok((0..s.len() / 2)
        .map(|i| u8::from_str_radix(&s[2 * i..2 * i + 2], 16).unwrap())
        .collect())
}

/// Geometry for the fs subcommands: from an optional config file, or the
/// reference target by default.
pub fn fs_geometry(config_path: Option<&Path>) -> Result<(Geometry, u32), CliError> {
    match config_path {
        Some(path) => {
            let config = MemoryConfig::load(path).map_err(|e| CliError::Input(e.to_string()))?;
            Ok((config.geometry(), config.base_address))
        }
        None => Ok((Geometry::stm32f401re(), 0x0800_0000)),
    }
}
