//! Registry of native methods across a package set.
//!
//! Indices are assigned densely from 0 in encounter order: packages in
//! the configured build order, classes and methods in declaration order.
//! The index is what trap-based stubs push on the stack and what the
//! generated dispatcher switches over, so the assignment must be
//! deterministic for a given input ordering.

use thiserror::Error;

use super::model::{JavaType, JcaMethod, JcaPackage};

/// Two-byte dispatch indices: the index space is capped at 65535 entries.
pub const MAX_NATIVE_METHODS: usize = 65535;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{count} native methods exceed the {MAX_NATIVE_METHODS}-entry dispatch index space")]
pub struct TooManyNatives {
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NativeEntry {
    pub index: u16,
    pub package_id: u8,
    pub package_name: String,
    pub class_name: String,
    pub method_name: String,
    pub params: Vec<JavaType>,
    pub ret: Option<JavaType>,
    pub is_static: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NativeMethodTable {
    entries: Vec<NativeEntry>,
}

impl NativeMethodTable {
    pub fn entries(&self) -> &[NativeEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Dispatch index of a native method, keyed by package id, class and
    /// full signature.
    pub fn index_of(&self, package_id: u8, class_name: &str, method: &JcaMethod) -> Option<u16> {
        self.entries
            .iter()
            .find(|e| {
                e.package_id == package_id
                    && e.class_name == class_name
                    && e.method_name == method.name
                    && e.params == method.sig.params
                    && e.ret == method.sig.ret
            })
            .map(|e| e.index)
    }
}

/// Walks `packages` (already in the configured order, positions are the
/// package ids) and registers every native method.
pub fn collect_native_methods(packages: &[JcaPackage]) -> Result<NativeMethodTable, TooManyNatives> {
    let mut entries = Vec::new();
    for (package_id, pkg) in packages.iter().enumerate() {
        for class in &pkg.classes {
            for method in &class.methods {
                if !method.is_native {
                    continue;
                }
                if entries.len() >= MAX_NATIVE_METHODS {
                    return Err(TooManyNatives {
                        count: entries.len() + 1,
                    });
                }
                entries.push(NativeEntry {
                    index: entries.len() as u16,
                    package_id: package_id as u8,
                    package_name: pkg.name.clone(),
                    class_name: class.name.clone(),
                    method_name: method.name.clone(),
                    params: method.sig.params.clone(),
                    ret: method.sig.ret.clone(),
                    is_static: method.is_static,
                });
            }
        }
    }
    Ok(NativeMethodTable { entries })
}
