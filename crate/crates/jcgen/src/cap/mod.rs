//! Executable package builder: turns a parsed package into the eleven
//! binary components, injects trap-based stubs for native methods, and
//! exports the result as per-component files plus an archive the
//! external verifier understands.

pub mod artifact;
pub mod assemble;
pub mod builder;

use std::collections::BTreeMap;

use thiserror::Error;

pub use artifact::{export_cap_artifact, ArtifactManifest};
pub use assemble::{assemble_method, inject_native_stub, AssembleError, AssembledMethod, Relocation, RelocWidth};
pub use builder::build_cap;

/// The component set. `Debug` is deliberately not representable: it is a
/// development-time artifact and never part of a loadable package.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ComponentKind {
    Header,
    Directory,
    Applet,
    Import,
    ConstantPool,
    Class,
    Method,
    StaticField,
    ReferenceLocation,
    Export,
    Descriptor,
}

impl ComponentKind {
    pub const ALL: [ComponentKind; 11] = [
        ComponentKind::Header,
        ComponentKind::Directory,
        ComponentKind::Applet,
        ComponentKind::Import,
        ComponentKind::ConstantPool,
        ComponentKind::Class,
        ComponentKind::Method,
        ComponentKind::StaticField,
        ComponentKind::ReferenceLocation,
        ComponentKind::Export,
        ComponentKind::Descriptor,
    ];

    pub fn tag(self) -> u8 {
        match self {
            ComponentKind::Header => 1,
            ComponentKind::Directory => 2,
            ComponentKind::Applet => 3,
            ComponentKind::Import => 4,
            ComponentKind::ConstantPool => 5,
            ComponentKind::Class => 6,
            ComponentKind::Method => 7,
            ComponentKind::StaticField => 8,
            ComponentKind::ReferenceLocation => 9,
            ComponentKind::Export => 10,
            ComponentKind::Descriptor => 11,
        }
    }

    pub fn from_tag(tag: u8) -> Option<ComponentKind> {
        ComponentKind::ALL.into_iter().find(|k| k.tag() == tag)
    }

    pub fn name(self) -> &'static str {
        match self {
            ComponentKind::Header => "Header",
            ComponentKind::Directory => "Directory",
            ComponentKind::Applet => "Applet",
            ComponentKind::Import => "Import",
            ComponentKind::ConstantPool => "ConstantPool",
            ComponentKind::Class => "Class",
            ComponentKind::Method => "Method",
            ComponentKind::StaticField => "StaticField",
            ComponentKind::ReferenceLocation => "RefLocation",
            ComponentKind::Export => "Export",
            ComponentKind::Descriptor => "Descriptor",
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.cap", self.name())
    }
}

/// One encoded component: `tag (u1), size (u2), body`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentBinary {
    pub kind: ComponentKind,
    pub body: Vec<u8>,
}

impl ComponentBinary {
    pub fn tag(&self) -> u8 {
        self.kind.tag()
    }

    pub fn size(&self) -> u16 {
        self.body.len() as u16
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(3 + self.body.len());
        out.push(self.tag());
        out.extend_from_slice(&self.size().to_be_bytes());
        out.extend_from_slice(&self.body);
        out
    }
}

/// Offsets of emitted methods inside the Method component info, keyed by
/// (class name, method name, signature text).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MethodOffsetMap {
    map: BTreeMap<(String, String, String), u16>,
}

impl MethodOffsetMap {
    pub fn insert(&mut self, class: &str, method: &str, sig: &str, offset: u16) {
        self.map
            .insert((class.to_owned(), method.to_owned(), sig.to_owned()), offset);
    }

    pub fn offset(&self, class: &str, method: &str, sig: &str) -> Option<u16> {
        self.map
            .get(&(class.to_owned(), method.to_owned(), sig.to_owned()))
            .copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(String, String, String), &u16)> {
        self.map.iter()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Static field initial value carried along for the image serializer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StaticValue {
    /// Package-wide static field ordinal (declaration order across
    /// classes).
    pub field_no: u8,
    pub type_code: u8,
    pub value: Vec<u8>,
}

/// The built component set of one package.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CapFile {
    pub package_name: String,
    pub package_aid: Vec<u8>,
    pub package_version: (u8, u8),
    components: BTreeMap<ComponentKind, ComponentBinary>,
    pub method_offsets: MethodOffsetMap,
    /// Non-default static field values, for the initial-state serializer.
    pub static_values: Vec<StaticValue>,
    /// True when any method body carries a trap-based native stub; such
    /// packages cannot pass the external bytecode verifier.
    pub uses_native_traps: bool,
}

impl CapFile {
    pub fn new(
        package_name: String,
        package_aid: Vec<u8>,
        package_version: (u8, u8),
    ) -> CapFile {
        CapFile {
            package_name,
            package_aid,
            package_version,
            components: BTreeMap::new(),
            method_offsets: MethodOffsetMap::default(),
            static_values: Vec::new(),
            uses_native_traps: false,
        }
    }

    pub fn insert(&mut self, kind: ComponentKind, body: Vec<u8>) {
        self.components.insert(kind, ComponentBinary { kind, body });
    }

    pub fn component(&self, kind: ComponentKind) -> Option<&ComponentBinary> {
        self.components.get(&kind)
    }

    pub fn has(&self, kind: ComponentKind) -> bool {
        self.components.contains_key(&kind)
    }

    /// Present components in tag order.
    pub fn components(&self) -> impl Iterator<Item = &ComponentBinary> {
        self.components.values()
    }

    pub fn component_count(&self) -> usize {
        self.components.len()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BuildError {
    #[error("{component} component: {reason}")]
    Dependency {
        component: &'static str,
        reason: String,
    },
    #[error("{component} component body is {size} bytes, above the 65535-byte encoding limit")]
    ComponentTooLarge { component: &'static str, size: usize },
    #[error(transparent)]
    Assemble(#[from] AssembleError),
}
