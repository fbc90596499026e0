//! Canonical text form of a package model.
//!
//! Printing a parsed package and re-parsing the output yields a
//! structurally identical model; the round trip is part of the frontend
//! test suite.

use std::fmt::Write;

use super::model::*;
use crate::opcodes::{self, OperandLayout};

fn write_aid(out: &mut String, aid: &[u8]) {
    for (i, b) in aid.iter().enumerate() {
        if i > 0 {
            out.push(':');
        }
        let _ = write!(out, "{b:#04x}");
    }
}

fn visibility_word(v: Visibility) -> &'static str {
    match v {
        Visibility::Public => "public",
        Visibility::Protected => "protected",
        Visibility::Package => "package",
        Visibility::Private => "private",
    }
}

fn write_class_ref(out: &mut String, r: &ClassRef) {
    match r {
        ClassRef::Internal(name) => out.push_str(name),
        ClassRef::External { import, class } => {
            let _ = write!(out, "{import}.{class}");
        }
    }
}

fn write_sig(out: &mut String, sig: &MethodSig) {
    out.push('(');
    for (i, p) in sig.params.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        let _ = write!(out, "{p}");
    }
    out.push(')');
    match &sig.ret {
        None => out.push_str("void"),
        Some(t) => {
            let _ = write!(out, "{t}");
        }
    }
}

/// Renders the whole package in the canonical layout.
pub fn print_package(pkg: &JcaPackage) -> String {
    let mut out = String::new();
    let _ = writeln!(out, ".package {} {{", pkg.name);
    out.push_str("  .aid ");
    write_aid(&mut out, &pkg.aid);
    out.push_str(";\n");
    let _ = writeln!(out, "  .version {}.{};", pkg.version.0, pkg.version.1);

    if !pkg.imports.is_empty() {
        out.push_str("\n  .imports {\n");
        for imp in &pkg.imports {
            out.push_str("    ");
            write_aid(&mut out, &imp.aid);
            let _ = writeln!(out, " {}.{};", imp.version.0, imp.version.1);
        }
        out.push_str("  }\n");
    }

    if !pkg.applets.is_empty() {
        out.push_str("\n  .applets {\n");
        for applet in &pkg.applets {
            out.push_str("    ");
            write_aid(&mut out, &applet.aid);
            let _ = writeln!(out, " {};", applet.class_name);
        }
        out.push_str("  }\n");
    }

    if !pkg.constant_pool.is_empty() {
        out.push_str("\n  .constant pool {\n");
        for (i, entry) in pkg.constant_pool.iter().enumerate() {
            let _ = write!(out, "    // {i}\n    {} ", entry.kind.keyword());
            match &entry.target {
                CpTarget::ExternalClass { import, class } => {
                    let _ = write!(out, "{import}.{class}");
                }
                CpTarget::ExternalMember {
                    import,
                    class,
                    token,
                } => {
                    let _ = write!(out, "{import}.{class}.{token}");
                }
                CpTarget::InternalClass { class } => out.push_str(class),
                CpTarget::InternalField { class, field } => {
                    let _ = write!(out, "{class}.{field}");
                }
                CpTarget::InternalMethod { class, name, sig } => {
                    let _ = write!(out, "{class}.{name}");
                    write_sig(&mut out, sig);
                }
            }
            out.push_str(";\n");
        }
        out.push_str("  }\n");
    }

    for class in &pkg.classes {
        print_class(&mut out, class);
    }
    out.push_str("}\n");
    out
}

fn print_class(out: &mut String, class: &JcaClass) {
    out.push_str("\n  .class ");
    out.push_str(visibility_word(class.visibility));
    if class.is_abstract {
        out.push_str(" abstract");
    }
    if class.is_final {
        out.push_str(" final");
    }
    if class.is_interface {
        out.push_str(" interface");
    }
    let _ = write!(out, " {}", class.name);
    if let Some(sup) = &class.extends {
        out.push_str(" extends ");
        write_class_ref(out, sup);
    }
    out.push_str(" {\n");

    if !class.shareable_interfaces.is_empty() {
        out.push_str("    .shareableInterfaces {\n");
        for r in &class.shareable_interfaces {
            out.push_str("      ");
            write_class_ref(out, r);
            out.push_str(";\n");
        }
        out.push_str("    }\n");
    }
    if !class.remote_interfaces.is_empty() {
        out.push_str("    .remoteInterfaces {\n");
        for r in &class.remote_interfaces {
            out.push_str("      ");
            write_class_ref(out, r);
            out.push_str(";\n");
        }
        out.push_str("    }\n");
    }

    if !class.fields.is_empty() {
        out.push_str("    .fields {\n");
        for f in &class.fields {
            out.push_str("      ");
            out.push_str(visibility_word(f.visibility));
            if f.is_static {
                out.push_str(" static");
            }
            if f.is_final {
                out.push_str(" final");
            }
            let _ = write!(out, " {} {}", f.ty, f.name);
            if let Some(tok) = f.token {
                let _ = write!(out, " {tok}");
            }
            if let Some(init) = &f.init {
                out.push_str(" = ");
                match init {
                    FieldInit::Null => out.push_str("null"),
                    FieldInit::Scalar(v) => {
                        let _ = write!(out, "{v}");
                    }
                    FieldInit::Array(values) => {
                        out.push_str("{ ");
                        for (i, v) in values.iter().enumerate() {
                            if i > 0 {
                                out.push_str(", ");
                            }
                            let _ = write!(out, "{v}");
                        }
                        out.push_str(" }");
                    }
                }
            }
            out.push_str(";\n");
        }
        out.push_str("    }\n");
    }

    if let Some(table) = &class.public_method_table {
        print_method_table(out, "publicMethodTable", table);
    }
    if let Some(table) = &class.package_method_table {
        print_method_table(out, "packageMethodTable", table);
    }
    for imp in &class.interface_impls {
        out.push_str("    .implements ");
        write_class_ref(out, &imp.interface);
        out.push_str(" {\n");
        for m in &imp.methods {
            let _ = write!(out, "      {}", m.name);
            write_sig(out, &m.sig);
            out.push_str(";\n");
        }
        out.push_str("    }\n");
    }

    for method in &class.methods {
        print_method(out, method);
    }
    out.push_str("  }\n");
}

fn print_method_table(out: &mut String, keyword: &str, table: &MethodTable) {
    let _ = write!(out, "    .{keyword} {}", table.base);
    out.push_str(" {\n");
    for entry in &table.entries {
        let _ = write!(out, "      {}", entry.name);
        write_sig(out, &entry.sig);
        out.push_str(";\n");
    }
    out.push_str("    }\n");
}

fn print_method(out: &mut String, method: &JcaMethod) {
    out.push_str("    .method ");
    out.push_str(visibility_word(method.visibility));
    if method.is_abstract {
        out.push_str(" abstract");
    }
    if method.is_static {
        out.push_str(" static");
    }
    if method.is_final {
        out.push_str(" final");
    }
    if method.is_native {
        out.push_str(" native");
    }
    match &method.sig.ret {
        None => out.push_str(" void"),
        Some(t) => {
            let _ = write!(out, " {t}");
        }
    }
    let _ = write!(out, " {}(", method.name);
    for (i, p) in method.sig.params.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        let _ = write!(out, "{p}");
    }
    out.push(')');
    if let Some(tok) = method.token {
        let _ = write!(out, " {tok}");
    }
    let Some(body) = &method.body else {
        out.push_str(";\n");
        return;
    };
    out.push_str(" {\n");
    let _ = writeln!(out, "      .stack {};", method.max_stack);
    let _ = writeln!(out, "      .nargs {};", method.nargs);
    let _ = writeln!(out, "      .locals {};", method.max_locals);
    for instr in body {
        print_instruction(out, instr);
    }
    for h in &method.handlers {
        out.push_str("      .catch ");
        match h.catch_type {
            None => out.push_str("any"),
            Some(idx) => {
                let _ = write!(out, "{idx}");
            }
        }
        let _ = writeln!(out, " {} {} {};", h.start, h.end, h.handler);
    }
    out.push_str("    }\n");
}

fn print_instruction(out: &mut String, instr: &Instruction) {
    let spec = opcodes::table()
        .by_opcode(instr.opcode)
        .expect("model opcodes come from the table");
    match &instr.label {
        Some(label) => {
            let _ = write!(out, "      {label}: ");
        }
        None => out.push_str("      "),
    }
    out.push_str(spec.mnemonic);
    let operands: &[Operand] = &instr.operands;
    match spec.operands {
        OperandLayout::Fixed(_) => {
            for op in operands {
                out.push(' ');
                print_operand(out, op);
            }
        }
        _ => {
            // Switch layouts print exactly as parsed: default, bounds or
            // pair count, then targets.
            for op in operands {
                out.push(' ');
                print_operand(out, op);
            }
        }
    }
    out.push_str(";\n");
}

fn print_operand(out: &mut String, op: &Operand) {
    match op {
        Operand::Number(n) => {
            let _ = write!(out, "{n}");
        }
        Operand::CpIndex(idx) => {
            let _ = write!(out, "{idx}");
        }
        Operand::Label(l) => out.push_str(l),
    }
}
