//! Build configuration: flash geometry, target sector, package build
//! order (list position is the package id), entry point names and
//! generator knobs. Loaded from a TOML file; every section except the
//! package list and entry point has defaults matching the reference
//! target (STM32F401RE, image in sector 5, bank at 0x08000000).

use std::fs;
use std::path::Path;

use flashfs::Geometry;
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntryPointNames {
    pub package: String,
    pub class: String,
    pub method: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemoryConfig {
    /// Sector sizes in bytes.
    pub sector_sizes: Vec<usize>,
    pub target_sector: usize,
    pub base_address: u32,
    pub bitmap_min: usize,
    /// Ordered package names; position is the package id and the build
    /// order.
    pub packages: Vec<String>,
    pub entry_point: EntryPointNames,
    /// Packages expected to carry trap-based native stubs; stubs found
    /// elsewhere produce a warning.
    pub native_only: Vec<String>,
    pub pop_receiver: bool,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        const KIB: usize = 1024;
        MemoryConfig {
            sector_sizes: vec![
                16 * KIB,
                16 * KIB,
                16 * KIB,
                16 * KIB,
                64 * KIB,
                128 * KIB,
                128 * KIB,
                128 * KIB,
            ],
            target_sector: 5,
            base_address: 0x0800_0000,
            bitmap_min: 8,
            packages: Vec::new(),
            entry_point: EntryPointNames {
                package: String::new(),
                class: String::new(),
                method: String::new(),
            },
            native_only: Vec::new(),
            pop_receiver: false,
        }
    }
}

impl MemoryConfig {
    pub fn geometry(&self) -> Geometry {
        Geometry::new(&self.sector_sizes).expect("validated at load time")
    }

    pub fn package_id(&self, name: &str) -> Option<u8> {
        self.packages.iter().position(|p| p == name).map(|i| i as u8)
    }

    pub fn from_toml_str(text: &str) -> Result<MemoryConfig, ConfigError> {
        let raw: RawConfig = toml::from_str(text)?;
        let mut config = MemoryConfig {
            packages: raw.packages,
            ..MemoryConfig::default()
        };
        if let Some(flash) = raw.flash {
            if let Some(kib) = flash.sector_sizes_kib {
                config.sector_sizes = kib.into_iter().map(|k| k * 1024).collect();
            }
            if let Some(t) = flash.target_sector {
                config.target_sector = t;
            }
            if let Some(b) = flash.base_address {
                config.base_address = b;
            }
            if let Some(m) = flash.bitmap_min {
                config.bitmap_min = m;
            }
        }
        let entry = raw.entry_point.ok_or_else(|| {
            ConfigError::Invalid("missing [entry_point] section".to_owned())
        })?;
        config.entry_point = EntryPointNames {
            package: entry.package,
            class: entry.class,
            method: entry.method,
        };
        if let Some(natives) = raw.natives {
            config.native_only = natives.native_only.unwrap_or_default();
            config.pop_receiver = natives.pop_receiver.unwrap_or(false);
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<MemoryConfig, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        MemoryConfig::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        Geometry::new(&self.sector_sizes)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.target_sector >= self.sector_sizes.len() {
            return Err(ConfigError::Invalid(format!(
                "target_sector {} outside the {}-sector geometry",
                self.target_sector,
                self.sector_sizes.len()
            )));
        }
        if self.packages.is_empty() {
            return Err(ConfigError::Invalid("packages list is empty".to_owned()));
        }
        if self.packages.len() > 256 {
            return Err(ConfigError::Invalid(format!(
                "{} packages exceed the 256-package limit",
                self.packages.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for p in &self.packages {
            if !seen.insert(p) {
                return Err(ConfigError::Invalid(format!("duplicate package {p}")));
            }
        }
        if self.package_id(&self.entry_point.package).is_none() {
            return Err(ConfigError::Invalid(format!(
                "entry point package {} is not in the packages list",
                self.entry_point.package
            )));
        }
        for p in &self.native_only {
            if self.package_id(p).is_none() {
                return Err(ConfigError::Invalid(format!(
                    "native_only package {p} is not in the packages list"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Deserialize)]
struct RawConfig {
    packages: Vec<String>,
    flash: Option<RawFlash>,
    entry_point: Option<RawEntryPoint>,
    natives: Option<RawNatives>,
}

#[derive(Deserialize)]
struct RawFlash {
    sector_sizes_kib: Option<Vec<usize>>,
    target_sector: Option<usize>,
    base_address: Option<u32>,
    bitmap_min: Option<usize>,
}

#[derive(Deserialize)]
struct RawEntryPoint {
    package: String,
    class: String,
    method: String,
}

#[derive(Deserialize)]
struct RawNatives {
    native_only: Option<Vec<String>>,
    pop_receiver: Option<bool>,
}
