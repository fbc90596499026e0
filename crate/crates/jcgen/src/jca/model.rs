//! In-memory model of a parsed package.

use std::fmt;

/// Java Card value types as they appear in signatures and fields.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum JavaType {
    Byte,
    Boolean,
    Short,
    Int,
    /// Class or interface, by dotted name (possibly qualified).
    Reference(String),
    /// One-dimensional array of a non-array element type.
    Array(Box<JavaType>),
}

impl JavaType {
    /// Stack words a value of this type occupies (int is two words).
    pub fn word_count(&self) -> u8 {
        match self {
            JavaType::Int => 2,
            _ => 1,
        }
    }

    pub fn is_reference(&self) -> bool {
        matches!(self, JavaType::Reference(_) | JavaType::Array(_))
    }
}

impl fmt::Display for JavaType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            JavaType::Byte => write!(f, "byte"),
            JavaType::Boolean => write!(f, "boolean"),
            JavaType::Short => write!(f, "short"),
            JavaType::Int => write!(f, "int"),
            JavaType::Reference(name) => write!(f, "{name}"),
            JavaType::Array(elem) => write!(f, "{elem}[]"),
        }
    }
}

/// Method signature: parameter types plus return type (`None` = void).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MethodSig {
    pub params: Vec<JavaType>,
    pub ret: Option<JavaType>,
}

impl MethodSig {
    /// Parameter stack words, not counting any receiver.
    pub fn param_words(&self) -> u8 {
        self.params.iter().map(JavaType::word_count).sum()
    }
}

impl fmt::Display for MethodSig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, p) in self.params.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{p}")?;
        }
        write!(f, ")")?;
        match &self.ret {
            None => write!(f, "void"),
            Some(t) => write!(f, "{t}"),
        }
    }
}

/// Imported package: AID, version, and an implicit local token equal to
/// its position in the imports list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImportEntry {
    pub aid: Vec<u8>,
    pub version: (u8, u8),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AppletDecl {
    pub aid: Vec<u8>,
    pub class_name: String,
}

/// Reference to a class: either declared in this package or reached
/// through an import as a (package token, class token) pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClassRef {
    Internal(String),
    External { import: u8, class: u8 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CpKind {
    ClassRef,
    InstanceFieldRef,
    VirtualMethodRef,
    SuperMethodRef,
    StaticFieldRef,
    StaticMethodRef,
}

impl CpKind {
    pub fn keyword(self) -> &'static str {
        match self {
            CpKind::ClassRef => "classRef",
            CpKind::InstanceFieldRef => "instanceFieldRef",
            CpKind::VirtualMethodRef => "virtualMethodRef",
            CpKind::SuperMethodRef => "superMethodRef",
            CpKind::StaticFieldRef => "staticFieldRef",
            CpKind::StaticMethodRef => "staticMethodRef",
        }
    }

    pub fn is_method(self) -> bool {
        matches!(
            self,
            CpKind::VirtualMethodRef | CpKind::SuperMethodRef | CpKind::StaticMethodRef
        )
    }

    pub fn is_field(self) -> bool {
        matches!(self, CpKind::InstanceFieldRef | CpKind::StaticFieldRef)
    }
}

/// What a constant pool entry points at.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CpTarget {
    /// Class in an imported package: `import_token.class_token`.
    ExternalClass { import: u8, class: u8 },
    /// Member in an imported package: `import.class.member` tokens.
    ExternalMember { import: u8, class: u8, token: u8 },
    /// Class declared here, by name.
    InternalClass { class: String },
    /// Field declared here: `Class.field`.
    InternalField { class: String, field: String },
    /// Method declared here: `Class.name(params)ret`.
    InternalMethod {
        class: String,
        name: String,
        sig: MethodSig,
    },
}

impl CpTarget {
    pub fn is_internal(&self) -> bool {
        matches!(
            self,
            CpTarget::InternalClass { .. }
                | CpTarget::InternalField { .. }
                | CpTarget::InternalMethod { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CpEntry {
    pub kind: CpKind,
    pub target: CpTarget,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Visibility {
    Public,
    Protected,
    Package,
    Private,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FieldInit {
    Scalar(i64),
    Array(Vec<i64>),
    Null,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JcaField {
    pub name: String,
    pub visibility: Visibility,
    pub is_static: bool,
    pub is_final: bool,
    pub ty: JavaType,
    pub token: Option<u8>,
    pub init: Option<FieldInit>,
}

/// One bytecode operand, typed by the instruction table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Operand {
    /// Immediate number (byte/short/int widths checked at assembly).
    Number(i64),
    /// Constant pool index.
    CpIndex(u16),
    /// Branch target label.
    Label(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instruction {
    pub opcode: u8,
    /// Label defined at this instruction, if any.
    pub label: Option<String>,
    pub operands: Vec<Operand>,
}

/// Exception table entry; the range and handler are labels into the
/// method body, `catch_type` is a constant pool index of a classRef entry
/// (`None` catches everything).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExceptionHandler {
    pub start: String,
    pub end: String,
    pub handler: String,
    pub catch_type: Option<u16>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JcaMethod {
    pub name: String,
    pub sig: MethodSig,
    pub visibility: Visibility,
    pub is_abstract: bool,
    pub is_static: bool,
    pub is_final: bool,
    pub is_native: bool,
    pub token: Option<u8>,
    pub max_stack: u8,
    /// Parameter words, including the receiver for instance methods.
    pub nargs: u8,
    pub max_locals: u8,
    /// Absent for abstract and native methods.
    pub body: Option<Vec<Instruction>>,
    pub handlers: Vec<ExceptionHandler>,
}

impl JcaMethod {
    pub fn is_init(&self) -> bool {
        self.name == "<init>" || self.name == "<clinit>"
    }

    /// Argument words as mandated by the signature (+1 receiver word for
    /// instance methods).
    pub fn computed_nargs(&self) -> u8 {
        self.sig.param_words() + if self.is_static { 0 } else { 1 }
    }
}

/// Entry of a virtual method table: the named method is looked up among
/// the class's declared methods; an entry that does not resolve denotes
/// an implementation inherited from outside the package.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MethodTableEntry {
    pub name: String,
    pub sig: MethodSig,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MethodTable {
    /// First token covered by this table.
    pub base: u8,
    pub entries: Vec<MethodTableEntry>,
}

/// Mapping from an implemented interface to the methods providing its
/// entries, in interface method token order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InterfaceImpl {
    pub interface: ClassRef,
    pub methods: Vec<MethodTableEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JcaClass {
    pub name: String,
    pub visibility: Visibility,
    pub is_abstract: bool,
    pub is_final: bool,
    pub is_interface: bool,
    pub extends: Option<ClassRef>,
    pub shareable_interfaces: Vec<ClassRef>,
    pub remote_interfaces: Vec<ClassRef>,
    pub fields: Vec<JcaField>,
    pub public_method_table: Option<MethodTable>,
    pub package_method_table: Option<MethodTable>,
    pub interface_impls: Vec<InterfaceImpl>,
    pub methods: Vec<JcaMethod>,
}

impl JcaClass {
    pub fn find_method(&self, name: &str, sig: &MethodSig) -> Option<&JcaMethod> {
        self.methods.iter().find(|m| m.name == name && &m.sig == sig)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JcaPackage {
    pub name: String,
    pub aid: Vec<u8>,
    pub version: (u8, u8),
    pub imports: Vec<ImportEntry>,
    pub applets: Vec<AppletDecl>,
    pub constant_pool: Vec<CpEntry>,
    pub classes: Vec<JcaClass>,
}

impl JcaPackage {
    pub fn find_class(&self, name: &str) -> Option<&JcaClass> {
        self.classes.iter().find(|c| c.name == name)
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c.name == name)
    }

    /// True when any method is native, i.e. the built package will carry
    /// trap-based stubs.
    pub fn has_native_methods(&self) -> bool {
        self.classes
            .iter()
            .flat_map(|c| c.methods.iter())
            .any(|m| m.is_native)
    }
}
