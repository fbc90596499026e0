//! Component construction.
//!
//! Build order follows the information flow between components: the
//! static field image, imports and method bodies come straight from the
//! package model; the constant pool needs method and static offsets; the
//! class component needs method offsets and its own layout; export,
//! descriptor and reference location derive from what precedes them; the
//! applet component joins declared applets with install-method offsets;
//! the header summarizes which optional components exist; the directory
//! records every size and therefore goes last.
//!
//! The pool/method cycle (bytecode holds pool indices, internal method
//! references hold method offsets) resolves without patching because the
//! source text pins pool indices: bodies assemble first against literal
//! indices, then the pool is encoded against the resulting offsets.

use std::collections::HashMap;

use super::assemble::{assemble_method_in, inject_native_stub, RelocWidth};
use super::{BuildError, CapFile, ComponentKind, MethodOffsetMap, StaticValue};
use crate::image::field_type;
use crate::jca::model::*;
use crate::jca::natives::NativeMethodTable;
use crate::opcodes;

const CAP_MAGIC: u32 = 0xDECA_FFED;
const CAP_MINOR: u8 = 1;
const CAP_MAJOR: u8 = 2;

const HEADER_FLAG_INT: u8 = 0x01;
const HEADER_FLAG_EXPORT: u8 = 0x02;
const HEADER_FLAG_APPLET: u8 = 0x04;

const CLASS_ACC_INTERFACE: u8 = 0x8;
const CLASS_ACC_SHAREABLE: u8 = 0x4;
const CLASS_ACC_REMOTE: u8 = 0x2;

const METHOD_ACC_EXTENDED: u8 = 0x8;
const METHOD_ACC_ABSTRACT: u8 = 0x4;

// Descriptor access flags.
const DESC_ACC_PUBLIC: u8 = 0x01;
const DESC_ACC_PRIVATE: u8 = 0x02;
const DESC_ACC_PROTECTED: u8 = 0x04;
const DESC_ACC_STATIC: u8 = 0x08;
const DESC_ACC_FINAL: u8 = 0x10;
/// Not part of the published descriptor flag set; this generator uses the
/// spare bit to keep marking methods whose bodies are trap stubs.
const DESC_ACC_NATIVE: u8 = 0x20;
const DESC_ACC_ABSTRACT: u8 = 0x40;
const DESC_ACC_INIT: u8 = 0x80;

const DESC_CLASS_PUBLIC: u8 = 0x01;
const DESC_CLASS_FINAL: u8 = 0x10;
const DESC_CLASS_INTERFACE: u8 = 0x40;
const DESC_CLASS_ABSTRACT: u8 = 0x80;

/// External class reference that cannot be token-resolved from the
/// assembly text alone (imported types named in signatures).
const UNRESOLVED_CLASS_REF: u16 = 0xFFFF;

/// Method table slot whose implementation lives outside the package.
const INHERITED_METHOD: u16 = 0xFFFF;

fn err(component: &'static str, reason: impl Into<String>) -> BuildError {
    BuildError::Dependency {
        component,
        reason: reason.into(),
    }
}

/// Builds every component of one package. `package_id` is the package's
/// position in the configured build order; `natives` must already hold
/// every native method of the package.
pub fn build_cap(
    pkg: &JcaPackage,
    package_id: u8,
    natives: &NativeMethodTable,
) -> Result<CapFile, BuildError> {
    let mut cap = CapFile::new(pkg.name.clone(), pkg.aid.clone(), pkg.version);

    // Static field image and the values the image serializer will emit.
    let statics = layout_statics(pkg)?;
    cap.insert(ComponentKind::StaticField, encode_static_component(&statics));
    cap.static_values = statics.values.clone();

    cap.insert(ComponentKind::Import, encode_import(pkg));

    // Method bodies, with trap stubs standing in for native code.
    let methods = build_methods(pkg, package_id, natives)?;
    cap.insert(ComponentKind::Method, methods.body.clone());
    cap.method_offsets = methods.offsets.clone();
    cap.uses_native_traps = methods.uses_traps;

    let tables = effective_tables(pkg)?;
    let classes = layout_classes(pkg, &tables)?;

    cap.insert(
        ComponentKind::ConstantPool,
        encode_constant_pool(pkg, &statics, &methods, &classes, &tables)?,
    );
    cap.insert(
        ComponentKind::Class,
        encode_class(pkg, &methods, &classes, &tables)?,
    );

    if let Some(export) = encode_export(pkg, &statics, &methods, &classes)? {
        cap.insert(ComponentKind::Export, export);
    }
    cap.insert(
        ComponentKind::Descriptor,
        encode_descriptor(pkg, &statics, &methods, &classes, &tables)?,
    );
    cap.insert(ComponentKind::ReferenceLocation, encode_ref_location(&methods));

    if !pkg.applets.is_empty() {
        cap.insert(ComponentKind::Applet, encode_applet(pkg, &methods)?);
    }

    let header = encode_header(pkg, &cap, methods.uses_int);
    cap.insert(ComponentKind::Header, header);
    let directory = encode_directory(pkg, &cap, &statics);
    cap.insert(ComponentKind::Directory, directory);

    for component in cap.components() {
        if component.body.len() > u16::MAX as usize {
            return Err(BuildError::ComponentTooLarge {
                component: component.kind.name(),
                size: component.body.len(),
            });
        }
    }
    Ok(cap)
}

// ---------------------------------------------------------------------
// Static fields
// ---------------------------------------------------------------------

struct StaticFieldSlot {
    class: String,
    name: String,
    image_offset: u16,
}

struct StaticLayout {
    image_size: u16,
    reference_count: u16,
    /// (element type code, element count, value bytes) per initialized array.
    array_inits: Vec<(u8, u16, Vec<u8>)>,
    default_value_count: u16,
    non_default_values: Vec<u8>,
    slots: Vec<StaticFieldSlot>,
    values: Vec<StaticValue>,
}

fn primitive_width(ty: &JavaType) -> usize {
    match ty {
        JavaType::Byte | JavaType::Boolean => 1,
        JavaType::Short => 2,
        JavaType::Int => 4,
        _ => 0,
    }
}

fn scalar_bytes(ty: &JavaType, v: i64) -> Vec<u8> {
    match ty {
        JavaType::Byte | JavaType::Boolean => vec![v as u8],
        JavaType::Short => (v as u16).to_be_bytes().to_vec(),
        JavaType::Int => (v as u32).to_be_bytes().to_vec(),
        _ => Vec::new(),
    }
}

/// Element type codes used inside the static field component's array
/// initializers.
fn array_init_type(elem: &JavaType) -> u8 {
    match elem {
        JavaType::Boolean => 2,
        JavaType::Byte => 3,
        JavaType::Short => 4,
        JavaType::Int => 5,
        _ => 0,
    }
}

fn flash_type_code(ty: &JavaType) -> u8 {
    match ty {
        JavaType::Byte => field_type::BYTE,
        JavaType::Boolean => field_type::BOOLEAN,
        JavaType::Short => field_type::SHORT,
        JavaType::Int => field_type::INT,
        JavaType::Reference(_) => field_type::OBJECT,
        JavaType::Array(elem) => field_type::ARRAY_FLAG | flash_type_code(elem),
    }
}

/// Orders the static field image: initialized arrays, then the other
/// reference-typed fields, then primitives with default values, then
/// primitives with explicit values.
fn layout_statics(pkg: &JcaPackage) -> Result<StaticLayout, BuildError> {
    struct Pending<'a> {
        class: &'a str,
        field: &'a JcaField,
        package_no: u8,
    }
    let mut pending = Vec::new();
    let mut package_no = 0usize;
    for class in &pkg.classes {
        for field in class.fields.iter().filter(|f| f.is_static) {
            if package_no > u8::MAX as usize {
                return Err(err("StaticField", "more than 256 static fields in the package"));
            }
            pending.push(Pending {
                class: &class.name,
                field,
                package_no: package_no as u8,
            });
            package_no += 1;
        }
    }

    let is_init_array = |f: &JcaField| {
        matches!(f.ty, JavaType::Array(_)) && matches!(f.init, Some(FieldInit::Array(_)))
    };
    let seg_refs_init: Vec<&Pending> = pending.iter().filter(|p| is_init_array(p.field)).collect();
    let seg_refs_rest: Vec<&Pending> = pending
        .iter()
        .filter(|p| p.field.ty.is_reference() && !is_init_array(p.field))
        .collect();
    let is_default_prim = |f: &JcaField| {
        !f.ty.is_reference()
            && !matches!(f.init, Some(FieldInit::Scalar(v)) if v != 0)
    };
    let seg_prim_default: Vec<&Pending> = pending
        .iter()
        .filter(|p| !p.field.ty.is_reference() && is_default_prim(p.field))
        .collect();
    let seg_prim_value: Vec<&Pending> = pending
        .iter()
        .filter(|p| !p.field.ty.is_reference() && !is_default_prim(p.field))
        .collect();

    let mut layout = StaticLayout {
        image_size: 0,
        reference_count: (seg_refs_init.len() + seg_refs_rest.len()) as u16,
        array_inits: Vec::new(),
        default_value_count: 0,
        non_default_values: Vec::new(),
        slots: Vec::new(),
        values: Vec::new(),
    };

    let mut offset = 0u16;
    let push_slot = |p: &Pending, offset: u16, layout: &mut StaticLayout| {
        layout.slots.push(StaticFieldSlot {
            class: p.class.to_owned(),
            name: p.field.name.clone(),
            image_offset: offset,
        });
    };

    for p in &seg_refs_init {
        let JavaType::Array(elem) = &p.field.ty else { unreachable!() };
        let Some(FieldInit::Array(values)) = &p.field.init else { unreachable!() };
        let width = primitive_width(elem).max(1);
        let mut bytes = Vec::with_capacity(values.len() * width);
        for v in values {
            bytes.extend_from_slice(&scalar_bytes(elem, *v));
        }
        layout
            .array_inits
            .push((array_init_type(elem), values.len() as u16, bytes.clone()));
        layout.values.push(StaticValue {
            field_no: p.package_no,
            type_code: flash_type_code(&p.field.ty),
            value: bytes,
        });
        push_slot(p, offset, &mut layout);
        offset += 2;
    }
    for p in &seg_refs_rest {
        push_slot(p, offset, &mut layout);
        offset += 2;
    }
    for p in &seg_prim_default {
        push_slot(p, offset, &mut layout);
        let w = primitive_width(&p.field.ty) as u16;
        layout.default_value_count += w;
        offset += w;
    }
    for p in &seg_prim_value {
        let Some(FieldInit::Scalar(v)) = p.field.init else { unreachable!() };
        let bytes = scalar_bytes(&p.field.ty, v);
        layout.non_default_values.extend_from_slice(&bytes);
        layout.values.push(StaticValue {
            field_no: p.package_no,
            type_code: flash_type_code(&p.field.ty),
            value: bytes,
        });
        push_slot(p, offset, &mut layout);
        offset += primitive_width(&p.field.ty) as u16;
    }
    layout.image_size = offset;
    // Slot order above is segment order; restore declaration order for
    // exports and the descriptor, keyed lookups do the rest.
    Ok(layout)
}

impl StaticLayout {
    fn offset_of(&self, class: &str, field: &str) -> Option<u16> {
        self.slots
            .iter()
            .find(|s| s.class == class && s.name == field)
            .map(|s| s.image_offset)
    }

    fn array_init_size(&self) -> u16 {
        self.array_inits.iter().map(|(_, _, v)| v.len() as u16).sum()
    }
}

fn encode_static_component(layout: &StaticLayout) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&layout.image_size.to_be_bytes());
    out.extend_from_slice(&layout.reference_count.to_be_bytes());
    out.extend_from_slice(&(layout.array_inits.len() as u16).to_be_bytes());
    for (ty, count, values) in &layout.array_inits {
        out.push(*ty);
        out.extend_from_slice(&count.to_be_bytes());
        out.extend_from_slice(values);
    }
    out.extend_from_slice(&layout.default_value_count.to_be_bytes());
    out.extend_from_slice(&(layout.non_default_values.len() as u16).to_be_bytes());
    out.extend_from_slice(&layout.non_default_values);
    out
}

// ---------------------------------------------------------------------
// Import
// ---------------------------------------------------------------------

fn encode_import(pkg: &JcaPackage) -> Vec<u8> {
    let mut out = vec![pkg.imports.len() as u8];
    for imp in &pkg.imports {
        out.push(imp.version.1);
        out.push(imp.version.0);
        out.push(imp.aid.len() as u8);
        out.extend_from_slice(&imp.aid);
    }
    out
}

// ---------------------------------------------------------------------
// Method component
// ---------------------------------------------------------------------

struct EmittedMethod {
    class: String,
    name: String,
    sig_text: String,
    offset: u16,
    header_len: u16,
    bytecode_len: u16,
    relocations: Vec<(u16, RelocWidth)>,
    handler_index: u16,
    handler_count: u16,
}

struct MethodsOut {
    body: Vec<u8>,
    offsets: MethodOffsetMap,
    emitted: Vec<EmittedMethod>,
    uses_traps: bool,
    uses_int: bool,
}

struct PendingHandler {
    start: u16,
    end: u16,
    handler: u16,
    catch_type: u16,
}

fn method_header(max_stack: u8, nargs: u8, max_locals: u8, abstract_: bool) -> Vec<u8> {
    let mut flags = 0u8;
    if abstract_ {
        flags |= METHOD_ACC_ABSTRACT;
    }
    if max_stack > 15 || nargs > 15 || max_locals > 15 {
        flags |= METHOD_ACC_EXTENDED;
        vec![flags << 4, max_stack, nargs, max_locals]
    } else {
        vec![(flags << 4) | max_stack, (nargs << 4) | max_locals]
    }
}

fn build_methods(
    pkg: &JcaPackage,
    package_id: u8,
    natives: &NativeMethodTable,
) -> Result<MethodsOut, BuildError> {
    let int_ops = int_opcode_set();

    // Two passes: handler table length shifts every method offset, so
    // count handlers first.
    let handler_count: usize = pkg
        .classes
        .iter()
        .filter(|c| !c.is_interface)
        .flat_map(|c| c.methods.iter())
        .map(|m| m.handlers.len())
        .sum();
    if handler_count > 255 {
        return Err(err("Method", "more than 255 exception handlers in the package"));
    }
    let base = 1 + 8 * handler_count;

    let mut body_tail: Vec<u8> = Vec::new();
    let mut offsets = MethodOffsetMap::default();
    let mut emitted = Vec::new();
    let mut handlers: Vec<PendingHandler> = Vec::new();
    let mut uses_traps = false;
    let mut uses_int = false;

    for class in pkg.classes.iter().filter(|c| !c.is_interface) {
        for method in &class.methods {
            let sig_text = method.sig.to_string();
            let context = format!("{}.{}{}", class.name, method.name, sig_text);
            let offset = (base + body_tail.len()) as u16;

            let (header, code, relocations) = if method.is_abstract {
                (
                    method_header(0, method.nargs, 0, true),
                    Vec::new(),
                    Vec::new(),
                )
            } else if method.is_native {
                let index = natives.index_of(package_id, &class.name, method).ok_or_else(|| {
                    err(
                        "Method",
                        format!("native method {context} missing from the dispatch table"),
                    )
                })?;
                uses_traps = true;
                let stub = inject_native_stub(method, index);
                let assembled = assemble_method_in(&stub, &context)?;
                let ret_words = method
                    .sig
                    .ret
                    .as_ref()
                    .map(JavaType::word_count)
                    .unwrap_or(0);
                (
                    method_header(ret_words.max(1), method.nargs, 0, false),
                    assembled.bytes,
                    Vec::new(),
                )
            } else {
                let body = method.body.as_ref().ok_or_else(|| {
                    err("Method", format!("method {context} has no body"))
                })?;
                if !uses_int {
                    uses_int = body.iter().any(|i| {
                        int_ops.contains(&i.opcode)
                            || (i.opcode == NEWARRAY_OPCODE
                                && matches!(i.operands.first(), Some(Operand::Number(13))))
                    });
                }
                let assembled = assemble_method_in(body, &context)?;
                let header = method_header(
                    method.max_stack,
                    method.nargs,
                    method.max_locals,
                    false,
                );
                let code_start = offset as usize + header.len();
                for h in &method.handlers {
                    let resolve = |label: &str| {
                        assembled.labels.get(label).copied().ok_or_else(|| {
                            err(
                                "Method",
                                format!("handler label {label} undefined in {context}"),
                            )
                        })
                    };
                    handlers.push(PendingHandler {
                        start: code_start as u16 + resolve(&h.start)?,
                        end: code_start as u16 + resolve(&h.end)?,
                        handler: code_start as u16 + resolve(&h.handler)?,
                        catch_type: h.catch_type.unwrap_or(0),
                    });
                }
                (header, assembled.bytes, assembled.relocations)
            };

            let header_len = header.len() as u16;
            offsets.insert(&class.name, &method.name, &sig_text, offset);
            emitted.push(EmittedMethod {
                class: class.name.clone(),
                name: method.name.clone(),
                sig_text,
                offset,
                header_len,
                bytecode_len: code.len() as u16,
                relocations: relocations.iter().map(|r| (r.offset, r.width)).collect(),
                handler_index: (handlers.len() - method.handlers.len()) as u16,
                handler_count: method.handlers.len() as u16,
            });
            body_tail.extend_from_slice(&header);
            body_tail.extend_from_slice(&code);
            if base + body_tail.len() > u16::MAX as usize {
                return Err(BuildError::ComponentTooLarge {
                    component: "Method",
                    size: base + body_tail.len(),
                });
            }
        }
    }

    let mut body = Vec::with_capacity(base + body_tail.len());
    body.push(handlers.len() as u8);
    for (i, h) in handlers.iter().enumerate() {
        // Stop bit: no later handler encloses this one's active range.
        let nested_in_later = handlers[i + 1..]
            .iter()
            .any(|other| other.start <= h.start && h.end <= other.end);
        let active_length = h.end - h.start;
        let bitfield = (active_length & 0x7FFF) | if nested_in_later { 0 } else { 0x8000 };
        body.extend_from_slice(&h.start.to_be_bytes());
        body.extend_from_slice(&bitfield.to_be_bytes());
        body.extend_from_slice(&h.handler.to_be_bytes());
        body.extend_from_slice(&h.catch_type.to_be_bytes());
    }
    body.extend_from_slice(&body_tail);

    // Int usage can also come from field or signature types.
    if !uses_int {
        uses_int = pkg.classes.iter().any(|c| {
            c.fields.iter().any(|f| type_uses_int(&f.ty))
                || c.methods.iter().any(|m| {
                    m.sig.params.iter().any(type_uses_int)
                        || m.sig.ret.as_ref().is_some_and(type_uses_int)
                })
        });
    }

    Ok(MethodsOut {
        body,
        offsets,
        emitted,
        uses_traps,
        uses_int,
    })
}

fn type_uses_int(ty: &JavaType) -> bool {
    match ty {
        JavaType::Int => true,
        JavaType::Array(elem) => type_uses_int(elem),
        _ => false,
    }
}

const NEWARRAY_OPCODE: u8 = 0x8E;

fn int_opcode_set() -> Vec<u8> {
    const INT_MNEMONICS: &[&str] = &[
        "iipush", "iload", "iload_0", "iload_1", "iload_2", "iload_3", "istore", "istore_0",
        "istore_1", "istore_2", "istore_3", "iaload", "iastore", "iconst_m1", "iconst_0",
        "iconst_1", "iconst_2", "iconst_3", "iconst_4", "iconst_5", "iadd", "isub", "imul",
        "idiv", "irem", "ineg", "ishl", "ishr", "iushr", "iand", "ior", "ixor", "i2b", "i2s",
        "s2i", "icmp", "iinc", "iinc_w", "itableswitch", "ilookupswitch", "ireturn",
        "getstatic_i", "putstatic_i", "getfield_i", "putfield_i", "getfield_i_w",
        "putfield_i_w", "getfield_i_this", "putfield_i_this",
    ];
    INT_MNEMONICS
        .iter()
        .map(|m| opcodes::table().by_mnemonic(m).unwrap().opcode)
        .collect()
}

// ---------------------------------------------------------------------
// Virtual method tables and class layout
// ---------------------------------------------------------------------

#[derive(Clone, Default)]
struct ClassTables {
    public_base: u8,
    public_entries: Vec<MethodTableEntry>,
    package_base: u8,
    package_entries: Vec<MethodTableEntry>,
}

type TableMap = HashMap<String, ClassTables>;

fn is_virtual(m: &JcaMethod) -> bool {
    !m.is_static && !m.is_init() && m.visibility != Visibility::Private
}

/// Effective virtual method tables per class: explicit tables are taken
/// verbatim; otherwise the table continues the internal superclass's and
/// appends newly introduced virtual methods.
fn effective_tables(pkg: &JcaPackage) -> Result<TableMap, BuildError> {
    let mut map: TableMap = HashMap::new();
    fn compute(
        pkg: &JcaPackage,
        class: &JcaClass,
        map: &mut TableMap,
        depth: usize,
    ) -> Result<ClassTables, BuildError> {
        if let Some(done) = map.get(&class.name) {
            return Ok(done.clone());
        }
        if depth > pkg.classes.len() {
            return Err(err("Class", format!("inheritance cycle through {}", class.name)));
        }
        let mut tables = if let Some(ClassRef::Internal(parent)) = &class.extends {
            match pkg.find_class(parent) {
                Some(parent_class) => compute(pkg, parent_class, map, depth + 1)?,
                None => {
                    return Err(err(
                        "Class",
                        format!("{} extends unknown class {parent}", class.name),
                    ))
                }
            }
        } else {
            ClassTables::default()
        };

        if let Some(explicit) = &class.public_method_table {
            tables.public_base = explicit.base;
            tables.public_entries = explicit.entries.clone();
        } else {
            for m in class.methods.iter().filter(|m| {
                is_virtual(m) && matches!(m.visibility, Visibility::Public | Visibility::Protected)
            }) {
                let present = tables
                    .public_entries
                    .iter()
                    .any(|e| e.name == m.name && e.sig == m.sig);
                if !present {
                    tables.public_entries.push(MethodTableEntry {
                        name: m.name.clone(),
                        sig: m.sig.clone(),
                    });
                }
            }
        }
        if let Some(explicit) = &class.package_method_table {
            tables.package_base = explicit.base;
            tables.package_entries = explicit.entries.clone();
        } else {
            for m in class
                .methods
                .iter()
                .filter(|m| is_virtual(m) && m.visibility == Visibility::Package)
            {
                let present = tables
                    .package_entries
                    .iter()
                    .any(|e| e.name == m.name && e.sig == m.sig);
                if !present {
                    tables.package_entries.push(MethodTableEntry {
                        name: m.name.clone(),
                        sig: m.sig.clone(),
                    });
                }
            }
        }
        map.insert(class.name.clone(), tables.clone());
        Ok(tables)
    }
    for class in pkg.classes.iter().filter(|c| !c.is_interface) {
        compute(pkg, class, &mut map, 0)?;
    }
    Ok(map)
}

/// Virtual method token of `(name, sig)` in `class`: public table index,
/// or package table index with the high bit set.
fn virtual_token(tables: &TableMap, class: &str, name: &str, sig: &MethodSig) -> Option<u8> {
    let t = tables.get(class)?;
    if let Some(pos) = t
        .public_entries
        .iter()
        .position(|e| e.name == name && &e.sig == sig)
    {
        return Some(t.public_base + pos as u8);
    }
    t.package_entries
        .iter()
        .position(|e| e.name == name && &e.sig == sig)
        .map(|pos| (t.package_base + pos as u8) | 0x80)
}

/// Token of a static method or constructor: position among the class's
/// statics and constructors in declaration order, unless one was written
/// in the source.
fn static_token(class: &JcaClass, name: &str, sig: &MethodSig) -> Option<u8> {
    let mut next = 0u8;
    for m in &class.methods {
        if m.is_static || m.is_init() {
            if m.name == name && &m.sig == sig {
                return Some(m.token.unwrap_or(next));
            }
            next += 1;
        }
    }
    None
}

/// Instance field tokens: reference-typed fields first, then primitives,
/// both in declaration order.
fn instance_token(class: &JcaClass, field: &str) -> Option<u8> {
    let mut token = 0u8;
    for f in class.fields.iter().filter(|f| !f.is_static) {
        if f.ty.is_reference() {
            if f.name == field {
                return Some(f.token.unwrap_or(token));
            }
            token += 1;
        }
    }
    for f in class.fields.iter().filter(|f| !f.is_static) {
        if !f.ty.is_reference() {
            if f.name == field {
                return Some(f.token.unwrap_or(token));
            }
            token += 1;
        }
    }
    None
}

struct ClassLayout {
    /// Class name -> offset of its info inside the class component body.
    offsets: HashMap<String, u16>,
    /// Public class/interface tokens, declaration order.
    tokens: HashMap<String, u8>,
}

fn interface_info_size(class: &JcaClass) -> usize {
    let supers = usize::from(class.extends.is_some());
    1 + 2 * supers
}

fn class_info_size(class: &JcaClass, tables: &ClassTables) -> usize {
    10 + 2 * tables.public_entries.len()
        + 2 * tables.package_entries.len()
        + class
            .interface_impls
            .iter()
            .map(|i| 3 + i.methods.len())
            .sum::<usize>()
}

fn layout_classes(pkg: &JcaPackage, tables: &TableMap) -> Result<ClassLayout, BuildError> {
    let mut offsets = HashMap::new();
    let mut tokens = HashMap::new();
    let mut offset = 0usize;
    let mut token = 0u8;
    for class in pkg.classes.iter().filter(|c| c.is_interface) {
        offsets.insert(class.name.clone(), offset as u16);
        offset += interface_info_size(class);
    }
    for class in pkg.classes.iter().filter(|c| !c.is_interface) {
        offsets.insert(class.name.clone(), offset as u16);
        let t = tables
            .get(&class.name)
            .ok_or_else(|| err("Class", format!("missing tables for {}", class.name)))?;
        offset += class_info_size(class, t);
    }
    if offset > u16::MAX as usize {
        return Err(BuildError::ComponentTooLarge {
            component: "Class",
            size: offset,
        });
    }
    for class in &pkg.classes {
        if class.visibility == Visibility::Public {
            tokens.insert(class.name.clone(), token);
            token = token.checked_add(1).ok_or_else(|| {
                err("Class", "more than 256 public classes in the package")
            })?;
        }
    }
    Ok(ClassLayout { offsets, tokens })
}

fn class_ref_bytes(layout: &ClassLayout, r: &ClassRef) -> Result<[u8; 2], BuildError> {
    match r {
        ClassRef::Internal(name) => {
            let offset = layout
                .offsets
                .get(name)
                .ok_or_else(|| err("Class", format!("unknown class {name}")))?;
            Ok(offset.to_be_bytes())
        }
        ClassRef::External { import, class } => Ok([0x80 | import, *class]),
    }
}

// ---------------------------------------------------------------------
// Constant pool
// ---------------------------------------------------------------------

fn encode_constant_pool(
    pkg: &JcaPackage,
    statics: &StaticLayout,
    methods: &MethodsOut,
    classes: &ClassLayout,
    tables: &TableMap,
) -> Result<Vec<u8>, BuildError> {
    let mut out = Vec::with_capacity(2 + 4 * pkg.constant_pool.len());
    out.extend_from_slice(&(pkg.constant_pool.len() as u16).to_be_bytes());
    for (i, entry) in pkg.constant_pool.iter().enumerate() {
        let tag = match entry.kind {
            CpKind::ClassRef => 1u8,
            CpKind::InstanceFieldRef => 2,
            CpKind::VirtualMethodRef => 3,
            CpKind::SuperMethodRef => 4,
            CpKind::StaticFieldRef => 5,
            CpKind::StaticMethodRef => 6,
        };
        out.push(tag);
        let info: [u8; 3] = match (&entry.kind, &entry.target) {
            (CpKind::ClassRef, CpTarget::ExternalClass { import, class }) => {
                [0x80 | import, *class, 0]
            }
            (CpKind::ClassRef, CpTarget::InternalClass { class }) => {
                let r = class_ref_bytes(classes, &ClassRef::Internal(class.clone()))?;
                [r[0], r[1], 0]
            }
            (
                CpKind::InstanceFieldRef | CpKind::VirtualMethodRef | CpKind::SuperMethodRef,
                CpTarget::ExternalMember {
                    import,
                    class,
                    token,
                },
            ) => [0x80 | import, *class, *token],
            (CpKind::InstanceFieldRef, CpTarget::InternalField { class, field }) => {
                let r = class_ref_bytes(classes, &ClassRef::Internal(class.clone()))?;
                let c = pkg.find_class(class).unwrap();
                let token = instance_token(c, field).ok_or_else(|| {
                    err("ConstantPool", format!("entry {i}: unknown field {class}.{field}"))
                })?;
                [r[0], r[1], token]
            }
            (
                CpKind::VirtualMethodRef | CpKind::SuperMethodRef,
                CpTarget::InternalMethod { class, name, sig },
            ) => {
                let r = class_ref_bytes(classes, &ClassRef::Internal(class.clone()))?;
                let token = virtual_token(tables, class, name, sig).ok_or_else(|| {
                    err(
                        "ConstantPool",
                        format!("entry {i}: {class}.{name}{sig} has no virtual token"),
                    )
                })?;
                [r[0], r[1], token]
            }
            (
                CpKind::StaticFieldRef | CpKind::StaticMethodRef,
                CpTarget::ExternalMember {
                    import,
                    class,
                    token,
                },
            ) => [0x80 | import, *class, *token],
            (CpKind::StaticFieldRef, CpTarget::InternalField { class, field }) => {
                let offset = statics.offset_of(class, field).ok_or_else(|| {
                    err(
                        "ConstantPool",
                        format!("entry {i}: {class}.{field} is not a static field"),
                    )
                })?;
                let b = offset.to_be_bytes();
                [0, b[0], b[1]]
            }
            (CpKind::StaticMethodRef, CpTarget::InternalMethod { class, name, sig }) => {
                let offset = methods
                    .offsets
                    .offset(class, name, &sig.to_string())
                    .ok_or_else(|| {
                        err(
                            "ConstantPool",
                            format!("entry {i}: method {class}.{name}{sig} not emitted"),
                        )
                    })?;
                let b = offset.to_be_bytes();
                [0, b[0], b[1]]
            }
            (kind, target) => {
                return Err(err(
                    "ConstantPool",
                    format!("entry {i}: {kind:?} cannot reference {target:?}"),
                ))
            }
        };
        out.extend_from_slice(&info);
    }
    Ok(out)
}

// ---------------------------------------------------------------------
// Class component
// ---------------------------------------------------------------------

/// Method table entry -> method component offset, walking the class and
/// its internal ancestors; implementations from outside the package
/// encode as 0xFFFF.
fn resolve_table_entry(
    pkg: &JcaPackage,
    methods: &MethodOffsetMap,
    class: &JcaClass,
    entry: &MethodTableEntry,
) -> u16 {
    let mut current = Some(class);
    while let Some(c) = current {
        if c.find_method(&entry.name, &entry.sig).is_some() {
            if let Some(offset) = methods.offset(&c.name, &entry.name, &entry.sig.to_string()) {
                return offset;
            }
        }
        current = match &c.extends {
            Some(ClassRef::Internal(parent)) => pkg.find_class(parent),
            _ => None,
        };
    }
    INHERITED_METHOD
}

fn encode_class(
    pkg: &JcaPackage,
    methods: &MethodsOut,
    classes: &ClassLayout,
    tables: &TableMap,
) -> Result<Vec<u8>, BuildError> {
    let mut out = Vec::new();
    for class in pkg.classes.iter().filter(|c| c.is_interface) {
        debug_assert_eq!(classes.offsets[&class.name] as usize, out.len());
        let mut flags = CLASS_ACC_INTERFACE;
        if !class.shareable_interfaces.is_empty() {
            flags |= CLASS_ACC_SHAREABLE;
        }
        if !class.remote_interfaces.is_empty() {
            flags |= CLASS_ACC_REMOTE;
        }
        let supers: Vec<&ClassRef> = class.extends.iter().collect();
        out.push((flags << 4) | supers.len() as u8);
        for sup in supers {
            out.extend_from_slice(&class_ref_bytes(classes, sup)?);
        }
    }
    for class in pkg.classes.iter().filter(|c| !c.is_interface) {
        debug_assert_eq!(classes.offsets[&class.name] as usize, out.len());
        let t = &tables[&class.name];
        let mut flags = 0u8;
        if !class.shareable_interfaces.is_empty() {
            flags |= CLASS_ACC_SHAREABLE;
        }
        if !class.remote_interfaces.is_empty() {
            flags |= CLASS_ACC_REMOTE;
        }
        if class.interface_impls.len() > 15 {
            return Err(err(
                "Class",
                format!("{} implements more than 15 interfaces", class.name),
            ));
        }
        out.push((flags << 4) | class.interface_impls.len() as u8);
        match &class.extends {
            Some(sup) => out.extend_from_slice(&class_ref_bytes(classes, sup)?),
            None => out.extend_from_slice(&0xFFFFu16.to_be_bytes()),
        }
        let instance_cells: u16 = class
            .fields
            .iter()
            .filter(|f| !f.is_static)
            .map(|f| if f.ty == JavaType::Int { 2u16 } else { 1 })
            .sum();
        let reference_count = class
            .fields
            .iter()
            .filter(|f| !f.is_static && f.ty.is_reference())
            .count() as u8;
        out.push(instance_cells.min(255) as u8);
        out.push(if reference_count == 0 { 0xFF } else { 0 });
        out.push(reference_count);
        out.push(t.public_base);
        out.push(t.public_entries.len() as u8);
        out.push(t.package_base);
        out.push(t.package_entries.len() as u8);
        for entry in &t.public_entries {
            let offset = resolve_table_entry(pkg, &methods.offsets, class, entry);
            out.extend_from_slice(&offset.to_be_bytes());
        }
        for entry in &t.package_entries {
            let offset = resolve_table_entry(pkg, &methods.offsets, class, entry);
            out.extend_from_slice(&offset.to_be_bytes());
        }
        for imp in &class.interface_impls {
            out.extend_from_slice(&class_ref_bytes(classes, &imp.interface)?);
            out.push(imp.methods.len() as u8);
            for m in &imp.methods {
                let token = virtual_token(tables, &class.name, &m.name, &m.sig).ok_or_else(|| {
                    err(
                        "Class",
                        format!(
                            "{}: interface method {}{} resolves to no virtual token",
                            class.name, m.name, m.sig
                        ),
                    )
                })?;
                out.push(token);
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------
// Export
// ---------------------------------------------------------------------

fn encode_export(
    pkg: &JcaPackage,
    statics: &StaticLayout,
    methods: &MethodsOut,
    classes: &ClassLayout,
) -> Result<Option<Vec<u8>>, BuildError> {
    let has_applets = !pkg.applets.is_empty();
    let exported: Vec<&JcaClass> = pkg
        .classes
        .iter()
        .filter(|c| c.visibility == Visibility::Public)
        .filter(|c| {
            if has_applets {
                c.is_interface && !c.shareable_interfaces.is_empty()
            } else {
                true
            }
        })
        .collect();
    if exported.is_empty() {
        return Ok(None);
    }
    let mut out = vec![exported.len() as u8];
    for class in exported {
        out.extend_from_slice(&classes.offsets[&class.name].to_be_bytes());
        if class.is_interface {
            out.push(0);
            out.push(0);
            continue;
        }
        let fields: Vec<u16> = class
            .fields
            .iter()
            .filter(|f| f.is_static && f.visibility == Visibility::Public)
            .filter_map(|f| statics.offset_of(&class.name, &f.name))
            .collect();
        let meths: Vec<u16> = class
            .methods
            .iter()
            .filter(|m| {
                (m.is_static || m.is_init()) && m.visibility == Visibility::Public
            })
            .filter_map(|m| methods.offsets.offset(&class.name, &m.name, &m.sig.to_string()))
            .collect();
        out.push(fields.len() as u8);
        out.push(meths.len() as u8);
        for f in fields {
            out.extend_from_slice(&f.to_be_bytes());
        }
        for m in meths {
            out.extend_from_slice(&m.to_be_bytes());
        }
    }
    Ok(Some(out))
}

// ---------------------------------------------------------------------
// Descriptor
// ---------------------------------------------------------------------

struct TypePool {
    /// Rendered type -> offset within the type descriptor block.
    offsets: HashMap<String, u16>,
    bytes: Vec<u8>,
    base: u16,
}

impl TypePool {
    fn new(base: u16) -> TypePool {
        TypePool {
            offsets: HashMap::new(),
            bytes: Vec::new(),
            base,
        }
    }

    fn intern(&mut self, key: String, nibbles: Vec<u8>) -> u16 {
        if let Some(&o) = self.offsets.get(&key) {
            return o;
        }
        let offset = self.base + self.bytes.len() as u16;
        self.bytes.push(nibbles.len() as u8);
        for pair in nibbles.chunks(2) {
            let hi = pair[0] << 4;
            let lo = pair.get(1).copied().unwrap_or(0);
            self.bytes.push(hi | lo);
        }
        self.offsets.insert(key, offset);
        offset
    }
}

fn type_nibbles(ty: &JavaType, classes: &ClassLayout, nibbles: &mut Vec<u8>) {
    match ty {
        JavaType::Boolean => nibbles.push(0x2),
        JavaType::Byte => nibbles.push(0x3),
        JavaType::Short => nibbles.push(0x4),
        JavaType::Int => nibbles.push(0x5),
        JavaType::Reference(name) => {
            nibbles.push(0x6);
            push_class_ref_nibbles(name, classes, nibbles);
        }
        JavaType::Array(elem) => match elem.as_ref() {
            JavaType::Boolean => nibbles.push(0xA),
            JavaType::Byte => nibbles.push(0xB),
            JavaType::Short => nibbles.push(0xC),
            JavaType::Int => nibbles.push(0xD),
            JavaType::Reference(name) => {
                nibbles.push(0xE);
                push_class_ref_nibbles(name, classes, nibbles);
            }
            JavaType::Array(_) => nibbles.push(0xE),
        },
    }
}

fn push_class_ref_nibbles(name: &str, classes: &ClassLayout, nibbles: &mut Vec<u8>) {
    // Imported types named in signatures carry no tokens in the source
    // text, so they encode as the unresolved marker.
    let raw = match classes.offsets.get(name) {
        Some(offset) => *offset,
        None => UNRESOLVED_CLASS_REF,
    };
    nibbles.push(((raw >> 12) & 0xF) as u8);
    nibbles.push(((raw >> 8) & 0xF) as u8);
    nibbles.push(((raw >> 4) & 0xF) as u8);
    nibbles.push((raw & 0xF) as u8);
}

fn sig_type_key(sig: &MethodSig) -> String {
    sig.to_string()
}

fn field_visibility_flags(v: Visibility) -> u8 {
    match v {
        Visibility::Public => DESC_ACC_PUBLIC,
        Visibility::Protected => DESC_ACC_PROTECTED,
        Visibility::Package => 0,
        Visibility::Private => DESC_ACC_PRIVATE,
    }
}

fn encode_descriptor(
    pkg: &JcaPackage,
    statics: &StaticLayout,
    methods: &MethodsOut,
    classes: &ClassLayout,
    tables: &TableMap,
) -> Result<Vec<u8>, BuildError> {
    // The type block sits after the per-entry pool types; descriptors
    // reference offsets relative to the start of type_descriptor_info.
    let type_base = 2 + 2 * pkg.constant_pool.len() as u16;
    let mut pool = TypePool::new(type_base);

    let mut classes_out = Vec::new();
    for class in &pkg.classes {
        let token = classes.tokens.get(&class.name).copied().unwrap_or(0xFF);
        let mut flags = 0u8;
        if class.visibility == Visibility::Public {
            flags |= DESC_CLASS_PUBLIC;
        }
        if class.is_final {
            flags |= DESC_CLASS_FINAL;
        }
        if class.is_interface {
            flags |= DESC_CLASS_INTERFACE;
        }
        if class.is_abstract {
            flags |= DESC_CLASS_ABSTRACT;
        }
        classes_out.push(token);
        classes_out.push(flags);
        classes_out.extend_from_slice(&classes.offsets[&class.name].to_be_bytes());
        let interfaces: Vec<&ClassRef> = class
            .interface_impls
            .iter()
            .map(|i| &i.interface)
            .chain(class.extends.iter().filter(|_| class.is_interface))
            .collect();
        classes_out.push(interfaces.len() as u8);
        classes_out.extend_from_slice(&(class.fields.len() as u16).to_be_bytes());
        classes_out.extend_from_slice(&(class.methods.len() as u16).to_be_bytes());
        for r in interfaces {
            classes_out.extend_from_slice(&class_ref_bytes(classes, r)?);
        }
        for field in &class.fields {
            let mut fflags = field_visibility_flags(field.visibility);
            if field.is_static {
                fflags |= DESC_ACC_STATIC;
            }
            if field.is_final {
                fflags |= DESC_ACC_FINAL;
            }
            let token = if field.is_static {
                static_export_token(class, field)
            } else {
                instance_token(class, &field.name).unwrap_or(0xFF)
            };
            classes_out.push(token);
            classes_out.push(fflags);
            if field.is_static {
                let offset = statics.offset_of(&class.name, &field.name).unwrap_or(0);
                let b = offset.to_be_bytes();
                classes_out.extend_from_slice(&[0, b[0], b[1]]);
            } else {
                let r = class_ref_bytes(classes, &ClassRef::Internal(class.name.clone()))?;
                let token = instance_token(class, &field.name).unwrap_or(0xFF);
                classes_out.extend_from_slice(&[r[0], r[1], token]);
            }
            let type_item = match &field.ty {
                JavaType::Boolean => 0x8002u16,
                JavaType::Byte => 0x8003,
                JavaType::Short => 0x8004,
                JavaType::Int => 0x8005,
                other => {
                    let mut nibbles = Vec::new();
                    type_nibbles(other, classes, &mut nibbles);
                    pool.intern(other.to_string(), nibbles)
                }
            };
            classes_out.extend_from_slice(&type_item.to_be_bytes());
        }
        for method in &class.methods {
            let token = if method.is_static || method.is_init() {
                static_token(class, &method.name, &method.sig).unwrap_or(0xFF)
            } else {
                virtual_token(tables, &class.name, &method.name, &method.sig).unwrap_or(0xFF)
            };
            let mut mflags = field_visibility_flags(method.visibility);
            if method.is_static {
                mflags |= DESC_ACC_STATIC;
            }
            if method.is_final {
                mflags |= DESC_ACC_FINAL;
            }
            if method.is_abstract || class.is_interface {
                mflags |= DESC_ACC_ABSTRACT;
            }
            if method.is_native {
                mflags |= DESC_ACC_NATIVE;
            }
            if method.is_init() {
                mflags |= DESC_ACC_INIT;
            }
            let sig_text = method.sig.to_string();
            let emitted = methods
                .emitted
                .iter()
                .find(|e| e.class == class.name && e.name == method.name && e.sig_text == sig_text);
            let offset = emitted.map(|e| e.offset).unwrap_or(0);
            let bytecode_count = emitted.map(|e| e.bytecode_len).unwrap_or(0);
            let (h_count, h_index) = emitted
                .map(|e| (e.handler_count, e.handler_index))
                .unwrap_or((0, 0));
            let mut nibbles = Vec::new();
            for p in &method.sig.params {
                type_nibbles(p, classes, &mut nibbles);
            }
            match &method.sig.ret {
                None => nibbles.push(0x1),
                Some(t) => type_nibbles(t, classes, &mut nibbles),
            }
            let type_offset = pool.intern(sig_type_key(&method.sig), nibbles);
            classes_out.push(token);
            classes_out.push(mflags);
            classes_out.extend_from_slice(&offset.to_be_bytes());
            classes_out.extend_from_slice(&type_offset.to_be_bytes());
            classes_out.extend_from_slice(&bytecode_count.to_be_bytes());
            classes_out.extend_from_slice(&h_count.to_be_bytes());
            classes_out.extend_from_slice(&h_index.to_be_bytes());
        }
    }

    // Per-pool-entry field types: only field references carry one.
    let mut pool_types = Vec::with_capacity(pkg.constant_pool.len());
    for entry in &pkg.constant_pool {
        let item = match (&entry.kind, &entry.target) {
            (CpKind::InstanceFieldRef | CpKind::StaticFieldRef, CpTarget::InternalField { class, field }) => {
                let c = pkg.find_class(class).unwrap();
                let f = c.fields.iter().find(|f| &f.name == field).unwrap();
                match &f.ty {
                    JavaType::Boolean => 0x8002u16,
                    JavaType::Byte => 0x8003,
                    JavaType::Short => 0x8004,
                    JavaType::Int => 0x8005,
                    other => {
                        let mut nibbles = Vec::new();
                        type_nibbles(other, classes, &mut nibbles);
                        pool.intern(other.to_string(), nibbles)
                    }
                }
            }
            _ => 0xFFFF,
        };
        pool_types.push(item);
    }

    let mut out = Vec::new();
    out.push(pkg.classes.len() as u8);
    out.extend_from_slice(&classes_out);
    out.extend_from_slice(&(pkg.constant_pool.len() as u16).to_be_bytes());
    for item in pool_types {
        out.extend_from_slice(&item.to_be_bytes());
    }
    out.extend_from_slice(&pool.bytes);
    Ok(out)
}

/// Public static fields get dense export tokens per class; everything
/// else stays untokenized.
fn static_export_token(class: &JcaClass, field: &JcaField) -> u8 {
    if field.visibility != Visibility::Public {
        return 0xFF;
    }
    let mut token = 0u8;
    for f in class.fields.iter().filter(|f| f.is_static) {
        if f.name == field.name {
            return f.token.unwrap_or(token);
        }
        if f.visibility == Visibility::Public {
            token += 1;
        }
    }
    0xFF
}

// ---------------------------------------------------------------------
// Reference location
// ---------------------------------------------------------------------

fn encode_jump_list(offsets: &[u16]) -> Vec<u8> {
    let mut out = Vec::new();
    let mut previous = 0u16;
    for &offset in offsets {
        let mut delta = (offset - previous) as u32;
        while delta >= 255 {
            out.push(255);
            delta -= 255;
        }
        out.push(delta as u8);
        previous = offset;
    }
    out
}

fn encode_ref_location(methods: &MethodsOut) -> Vec<u8> {
    let mut one_byte = Vec::new();
    let mut two_byte = Vec::new();
    for m in &methods.emitted {
        for (offset, width) in &m.relocations {
            let absolute = m.offset + m.header_len + offset;
            match width {
                RelocWidth::One => one_byte.push(absolute),
                RelocWidth::Two => two_byte.push(absolute),
            }
        }
    }
    one_byte.sort_unstable();
    two_byte.sort_unstable();
    let one = encode_jump_list(&one_byte);
    let two = encode_jump_list(&two_byte);
    let mut out = Vec::with_capacity(4 + one.len() + two.len());
    out.extend_from_slice(&(one.len() as u16).to_be_bytes());
    out.extend_from_slice(&one);
    out.extend_from_slice(&(two.len() as u16).to_be_bytes());
    out.extend_from_slice(&two);
    out
}

// ---------------------------------------------------------------------
// Applet, header, directory
// ---------------------------------------------------------------------

fn encode_applet(pkg: &JcaPackage, methods: &MethodsOut) -> Result<Vec<u8>, BuildError> {
    let mut out = vec![pkg.applets.len() as u8];
    for applet in &pkg.applets {
        let class = pkg.find_class(&applet.class_name).ok_or_else(|| {
            err("Applet", format!("class {} not declared", applet.class_name))
        })?;
        let installs: Vec<&JcaMethod> = class
            .methods
            .iter()
            .filter(|m| m.is_static && m.name == "install")
            .collect();
        let install = match installs.as_slice() {
            [one] => one,
            [] => {
                return Err(err(
                    "Applet",
                    format!("class {} declares no static install method", class.name),
                ))
            }
            _ => {
                return Err(err(
                    "Applet",
                    format!("class {} declares multiple install methods", class.name),
                ))
            }
        };
        let offset = methods
            .offsets
            .offset(&class.name, &install.name, &install.sig.to_string())
            .ok_or_else(|| {
                err(
                    "Applet",
                    format!("install method of {} was not emitted", class.name),
                )
            })?;
        out.push(applet.aid.len() as u8);
        out.extend_from_slice(&applet.aid);
        out.extend_from_slice(&offset.to_be_bytes());
    }
    Ok(out)
}

fn encode_header(pkg: &JcaPackage, cap: &CapFile, uses_int: bool) -> Vec<u8> {
    let mut flags = 0u8;
    if cap.has(ComponentKind::Export) {
        flags |= HEADER_FLAG_EXPORT;
    }
    if !pkg.applets.is_empty() {
        flags |= HEADER_FLAG_APPLET;
    }
    if uses_int {
        flags |= HEADER_FLAG_INT;
    }
    let mut out = Vec::new();
    out.extend_from_slice(&CAP_MAGIC.to_be_bytes());
    out.push(CAP_MINOR);
    out.push(CAP_MAJOR);
    out.push(flags);
    out.push(pkg.version.1);
    out.push(pkg.version.0);
    out.push(pkg.aid.len() as u8);
    out.extend_from_slice(&pkg.aid);
    out
}


fn encode_directory(pkg: &JcaPackage, cap: &CapFile, statics: &StaticLayout) -> Vec<u8> {
    let mut out = Vec::with_capacity(31);
    for kind in ComponentKind::ALL {
        let size = match kind {
            // The directory's own size is fixed by its layout.
            ComponentKind::Directory => 31,
            _ => cap.component(kind).map(|c| c.size()).unwrap_or(0),
        };
        out.extend_from_slice(&size.to_be_bytes());
    }
    out.extend_from_slice(&statics.image_size.to_be_bytes());
    out.extend_from_slice(&(statics.array_inits.len() as u16).to_be_bytes());
    out.extend_from_slice(&statics.array_init_size().to_be_bytes());
    out.push(pkg.imports.len() as u8);
    out.push(pkg.applets.len() as u8);
    out.push(0); // custom components
    out
}
