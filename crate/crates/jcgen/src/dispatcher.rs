//! Generates the C-header text that bridges trapped bytecode to host
//! code: the starting-method tuple, one `extern` declaration and one
//! index macro per native method, and the `callJCNativeMethod` switch
//! that pops arguments, calls out, and pushes the result.

use std::fmt::Write;

use thiserror::Error;

use crate::config::EntryPointNames;
use crate::jca::model::{JavaType, JcaPackage, Visibility};
use crate::jca::natives::{NativeEntry, NativeMethodTable};

/// Tokens of the first method the runtime executes at startup.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EntryPoint {
    pub package_token: u8,
    pub class_token: u8,
    pub method_token: u8,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EntryPointError {
    #[error("entry point package {0} is not part of the build")]
    UnknownPackage(String),
    #[error("entry point class {class} is not a public class of {package}")]
    UnknownClass { package: String, class: String },
    #[error("entry point method {method} is not a static method of {class}")]
    UnknownMethod { class: String, method: String },
    #[error("entry point method {method} is overloaded in {class}")]
    AmbiguousMethod { class: String, method: String },
}

/// Resolves configured entry point names against the built corpus:
/// package position, public class token, static method token.
pub fn resolve_entry_point(
    packages: &[JcaPackage],
    names: &EntryPointNames,
) -> Result<EntryPoint, EntryPointError> {
    let package_token = packages
        .iter()
        .position(|p| p.name == names.package)
        .ok_or_else(|| EntryPointError::UnknownPackage(names.package.clone()))?;
    let pkg = &packages[package_token];

    let mut class_token = None;
    let mut next_token = 0u8;
    for class in &pkg.classes {
        if class.visibility == Visibility::Public {
            if class.name == names.class {
                class_token = Some((next_token, class));
                break;
            }
            next_token += 1;
        }
    }
    let (class_token, class) = class_token.ok_or_else(|| EntryPointError::UnknownClass {
        package: names.package.clone(),
        class: names.class.clone(),
    })?;

    let mut found = None;
    let mut statics_seen = 0u8;
    for m in &class.methods {
        if m.is_static || m.is_init() {
            if m.name == names.method {
                if found.is_some() {
                    return Err(EntryPointError::AmbiguousMethod {
                        class: names.class.clone(),
                        method: names.method.clone(),
                    });
                }
                found = Some(m.token.unwrap_or(statics_seen));
            }
            statics_seen += 1;
        }
    }
    let method_token = found.ok_or_else(|| EntryPointError::UnknownMethod {
        class: names.class.clone(),
        method: names.method.clone(),
    })?;

    Ok(EntryPoint {
        package_token: package_token as u8,
        class_token,
        method_token,
    })
}

#[derive(Debug, Clone)]
pub struct GeneratorOptions {
    /// Also pop the receiver for instance methods and pass it as a
    /// leading `jref_t` argument. Off by default: the dispatcher then
    /// pops declared parameters only.
    pub pop_receiver: bool,
    /// Recorded in the file banner.
    pub input_digest: String,
}

impl Default for GeneratorOptions {
    fn default() -> Self {
        GeneratorOptions {
            pop_receiver: false,
            input_digest: "unspecified".to_owned(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("native methods {first} and {second} collide on macro name {macro_name}")]
pub struct NameCollision {
    pub macro_name: String,
    pub first: String,
    pub second: String,
}

/// One argument-popping step, in emission order (reverse declaration
/// order).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PopStep {
    /// Declaration index of the parameter being popped.
    pub param: usize,
    pub op: StackOp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StackOp {
    PopByte,
    PopShort,
    PopInt,
    PopReference,
}

impl StackOp {
    pub fn c_name(self) -> &'static str {
        match self {
            StackOp::PopByte => "pop_Byte",
            StackOp::PopShort => "pop_Short",
            StackOp::PopInt => "pop_Int",
            StackOp::PopReference => "pop_Reference",
        }
    }
}

fn pop_op(ty: &JavaType) -> StackOp {
    match ty {
        JavaType::Byte | JavaType::Boolean => StackOp::PopByte,
        JavaType::Short => StackOp::PopShort,
        JavaType::Int => StackOp::PopInt,
        JavaType::Reference(_) | JavaType::Array(_) => StackOp::PopReference,
    }
}

fn push_name(ty: &JavaType) -> &'static str {
    match ty {
        JavaType::Byte | JavaType::Boolean => "push_Byte",
        JavaType::Short => "push_Short",
        JavaType::Int => "push_Int",
        JavaType::Reference(_) | JavaType::Array(_) => "push_Reference",
    }
}

fn c_type(ty: &JavaType) -> &'static str {
    match ty {
        JavaType::Byte => "jbyte_t",
        JavaType::Boolean => "jbool_t",
        JavaType::Short => "jshort_t",
        JavaType::Int => "jint_t",
        JavaType::Reference(_) | JavaType::Array(_) => "jref_t",
    }
}

/// Parameters are popped in reverse declaration order: the last declared
/// parameter is on top of the stack.
pub fn pop_sequence(params: &[JavaType]) -> Vec<PopStep> {
    params
        .iter()
        .enumerate()
        .rev()
        .map(|(param, ty)| PopStep {
            param,
            op: pop_op(ty),
        })
        .collect()
}

fn macro_name(entry: &NativeEntry) -> String {
    format!(
        "{}_{}",
        entry.class_name.to_uppercase(),
        entry.method_name.to_uppercase()
    )
}

fn extern_name(entry: &NativeEntry) -> String {
    format!("{}_{}", entry.class_name, entry.method_name)
}

/// Renders the whole header text. Deterministic for equal inputs.
pub fn generate_header(
    table: &NativeMethodTable,
    entry: EntryPoint,
    options: &GeneratorOptions,
) -> Result<String, NameCollision> {
    // Macro names must be unique before anything is emitted.
    let mut seen: Vec<(String, &NativeEntry)> = Vec::new();
    for e in table.entries() {
        let name = macro_name(e);
        if let Some((_, first)) = seen.iter().find(|(n, _)| n == &name) {
            return Err(NameCollision {
                macro_name: name,
                first: format!("{}.{}", first.class_name, first.method_name),
                second: format!("{}.{}", e.class_name, e.method_name),
            });
        }
        seen.push((name, e));
    }

    let mut out = String::new();
    let _ = writeln!(
        out,
        "/* Generated by jcgen {} -- do not edit. Inputs sha256:{} */",
        env!("CARGO_PKG_VERSION"),
        options.input_digest
    );
    let _ = writeln!(
        out,
        "/* NATIVE_METHOD_COUNT at the end of this file is a generator extension. */"
    );
    out.push('\n');

    out.push_str("/* STARTING METHOD PARAMETERS */\n");
    let _ = writeln!(
        out,
        "#define STARTING_JAVACARD_PACKAGE 0x{:02X}",
        entry.package_token
    );
    let _ = writeln!(
        out,
        "#define STARTING_JAVACARD_CLASS   0x{:02X}",
        entry.class_token
    );
    let _ = writeln!(
        out,
        "#define STARTING_JAVACARD_METHOD  0x{:02X}",
        entry.method_token
    );
    out.push('\n');

    out.push_str(
        "/**\n\
         \x20* Java types to provide by the JCVM implementation:\n\
         \x20*   - jref_t: for Java Card reference\n\
         \x20*   - jshort_t: for Java Card short value\n\
         \x20*   - jbyte_t: for Java Card byte value\n\
         \x20*   - jbool_t: for Java Card boolean value\n\
         \x20*   - jint_t: for Java Card integer value\n\
         \x20*/\n\n",
    );

    out.push_str("/* METHOD SIGNATURES TO IMPLEMENT */\n");
    for e in table.entries() {
        let ret = e.ret.as_ref().map(c_type).unwrap_or("void");
        let mut args: Vec<&'static str> = Vec::new();
        if options.pop_receiver && !e.is_static {
            args.push("jref_t");
        }
        args.extend(e.params.iter().map(c_type));
        let _ = writeln!(out, "extern {ret} {}({});", extern_name(e), args.join(", "));
    }
    out.push('\n');

    let width = table
        .entries()
        .iter()
        .map(|e| macro_name(e).len())
        .max()
        .unwrap_or(0);
    for e in table.entries() {
        let _ = writeln!(
            out,
            "#define {:width$} 0x{:04X}",
            macro_name(e),
            e.index,
            width = width
        );
    }
    if !table.is_empty() {
        out.push('\n');
    }
    let _ = writeln!(
        out,
        "#define {:width$} 0x{:04X}",
        "NATIVE_METHOD_COUNT",
        table.len(),
        width = width.max("NATIVE_METHOD_COUNT".len())
    );
    out.push('\n');

    out.push_str("void callJCNativeMethod(Context& context, jshort_t index) {\n");
    out.push_str("  Stack& stack = context.getStack();\n");
    out.push_str("  Heap& heap = context.getHeap();\n");
    out.push_str("  switch(index) {\n");
    for e in table.entries() {
        emit_case(&mut out, e, options);
    }
    out.push_str("    default:\n");
    out.push_str(
        "      /* If the native method index is unknown, a Java Security Exception must be thrown! */\n",
    );
    out.push_str("      throw SecurityException();\n");
    out.push_str("  }\n");
    out.push_str("}\n");
    Ok(out)
}

fn emit_case(out: &mut String, e: &NativeEntry, options: &GeneratorOptions) {
    let _ = writeln!(out, "    case {}: {{", macro_name(e));
    let pops = pop_sequence(&e.params);
    let pop_receiver = options.pop_receiver && !e.is_static;
    let type_width = e
        .params
        .iter()
        .map(|t| c_type(t).len())
        .chain(pop_receiver.then_some("jref_t".len()))
        .max()
        .unwrap_or(0);
    for step in &pops {
        let ty = &e.params[step.param];
        let _ = writeln!(
            out,
            "      {:type_width$} param_{:02} = stack.{}();",
            c_type(ty),
            step.param,
            step.op.c_name(),
            type_width = type_width
        );
    }
    if pop_receiver {
        let _ = writeln!(
            out,
            "      {:type_width$} self = stack.pop_Reference();",
            "jref_t",
            type_width = type_width
        );
    }
    let mut args: Vec<String> = Vec::new();
    if pop_receiver {
        args.push("self".to_owned());
    }
    args.extend((0..e.params.len()).map(|i| format!("param_{i:02}")));
    let call = format!("{}({})", extern_name(e), args.join(", "));
    match &e.ret {
        None => {
            let _ = writeln!(out, "      {call};");
        }
        Some(ret) => {
            let _ = writeln!(out, "      {} ret = {call};", c_type(ret));
            let _ = writeln!(out, "      stack.{}(ret);", push_name(ret));
        }
    }
    out.push_str("      break;\n");
    out.push_str("    }\n");
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jca::model::JavaType;
    use crate::jca::natives::collect_native_methods;
    use crate::jca::parser::parse_package_text;

    fn entry() -> EntryPoint {
        EntryPoint {
            package_token: 1,
            class_token: 0,
            method_token: 1,
        }
    }

    #[test]
    fn starting_tuple_lines() {
        let table = NativeMethodTable::default();
        let text = generate_header(&table, entry(), &GeneratorOptions::default()).unwrap();
        assert!(text.contains("#define STARTING_JAVACARD_PACKAGE 0x01"));
        assert!(text.contains("#define STARTING_JAVACARD_CLASS   0x00"));
        assert!(text.contains("#define STARTING_JAVACARD_METHOD  0x01"));
    }

    #[test]
    fn empty_table_keeps_only_the_default_branch() {
        let table = NativeMethodTable::default();
        let text = generate_header(&table, entry(), &GeneratorOptions::default()).unwrap();
        assert_eq!(text.matches("case ").count(), 0);
        assert!(text.contains("default:"));
        assert!(text.contains("throw SecurityException();"));
        assert!(text.contains("#define NATIVE_METHOD_COUNT 0x0000"));
    }

    #[test]
    fn pop_order_is_reverse_declaration_order() {
        let params = vec![JavaType::Byte, JavaType::Byte];
        let seq = pop_sequence(&params);
        assert_eq!(
            seq,
            vec![
                PopStep {
                    param: 1,
                    op: StackOp::PopByte
                },
                PopStep {
                    param: 0,
                    op: StackOp::PopByte
                },
            ]
        );
    }

    #[test]
    fn mixed_types_pop_in_exact_reverse() {
        let params = vec![
            JavaType::Reference("A".into()),
            JavaType::Short,
            JavaType::Short,
            JavaType::Reference("A".into()),
            JavaType::Short,
        ];
        let ops: Vec<StackOp> = pop_sequence(&params).iter().map(|s| s.op).collect();
        assert_eq!(
            ops,
            vec![
                StackOp::PopShort,
                StackOp::PopReference,
                StackOp::PopShort,
                StackOp::PopShort,
                StackOp::PopReference,
            ]
        );
        assert!(pop_sequence(&[]).is_empty());
    }

    #[test]
    fn instance_case_pops_declared_params_then_calls_then_pushes() {
        let text = r#"
.package sample {
  .aid 0xF0:0x00:0x00:0x00:0x10;
  .version 1.0;
  .class public MyClass {
    .method public native short myNativeMethod(byte, byte);
  }
}
"#;
        let pkg = parse_package_text(text).unwrap();
        let table = collect_native_methods(std::slice::from_ref(&pkg)).unwrap();
        let header = generate_header(&table, entry(), &GeneratorOptions::default()).unwrap();
        let case_pos = header.find("case MYCLASS_MYNATIVEMETHOD:").unwrap();
        let p1 = header[case_pos..].find("param_01 = stack.pop_Byte();").unwrap();
        let p0 = header[case_pos..].find("param_00 = stack.pop_Byte();").unwrap();
        let call = header[case_pos..]
            .find("jshort_t ret = MyClass_myNativeMethod(param_00, param_01);")
            .unwrap();
        let push = header[case_pos..].find("stack.push_Short(ret);").unwrap();
        assert!(p1 < p0 && p0 < call && call < push);
        // No receiver pop by default.
        assert!(!header[case_pos..].contains("pop_Reference"));
        assert!(header.contains("#define MYCLASS_MYNATIVEMETHOD 0x0000"));
        assert!(header.contains("extern jshort_t MyClass_myNativeMethod(jbyte_t, jbyte_t);"));
    }

    #[test]
    fn name_collisions_are_rejected() {
        let text = r#"
.package p {
  .aid 0xF0:0x00:0x00:0x00:0x11;
  .version 1.0;
  .class public A {
    .method public native void go();
  }
  .class public a {
    .method public native void GO();
  }
}
"#;
        let pkg = parse_package_text(text).unwrap();
        let table = collect_native_methods(std::slice::from_ref(&pkg)).unwrap();
        let err = generate_header(&table, entry(), &GeneratorOptions::default()).unwrap_err();
        assert_eq!(err.macro_name, "A_GO");
    }

    #[test]
    fn output_is_deterministic() {
        let text = r#"
.package p {
  .aid 0xF0:0x00:0x00:0x00:0x12;
  .version 1.0;
  .class public A {
    .method public static native int f(int, short);
    .method public static native void g(boolean);
  }
}
"#;
        let pkg = parse_package_text(text).unwrap();
        let table = collect_native_methods(std::slice::from_ref(&pkg)).unwrap();
        let opts = GeneratorOptions::default();
        assert_eq!(
            generate_header(&table, entry(), &opts).unwrap(),
            generate_header(&table, entry(), &opts).unwrap()
        );
    }

    #[test]
    fn case_count_matches_table_and_void_methods_push_nothing() {
        let text = r#"
.package p {
  .aid 0xF0:0x00:0x00:0x00:0x13;
  .version 1.0;
  .class public A {
    .method public static native void g(boolean);
    .method public static native int h();
  }
}
"#;
        let pkg = parse_package_text(text).unwrap();
        let table = collect_native_methods(std::slice::from_ref(&pkg)).unwrap();
        let header =
            generate_header(&table, entry(), &GeneratorOptions::default()).unwrap();
        assert_eq!(header.matches("    case ").count(), table.len());
        let g = header.find("case A_G:").unwrap();
        let g_end = header[g..].find("break;").unwrap() + g;
        assert!(!header[g..g_end].contains("push"));
        assert!(header[g..g_end].contains("jbool_t param_00 = stack.pop_Byte();"));
        let h = header.find("case A_H:").unwrap();
        let h_end = header[h..].find("break;").unwrap() + h;
        assert!(header[h..h_end].contains("stack.push_Int(ret);"));
    }

    #[test]
    fn receiver_popping_is_gated_by_option() {
        let text = r#"
.package p {
  .aid 0xF0:0x00:0x00:0x00:0x14;
  .version 1.0;
  .class public A {
    .method public native short m(byte);
  }
}
"#;
        let pkg = parse_package_text(text).unwrap();
        let table = collect_native_methods(std::slice::from_ref(&pkg)).unwrap();
        let opts = GeneratorOptions {
            pop_receiver: true,
            ..GeneratorOptions::default()
        };
        let header = generate_header(&table, entry(), &opts).unwrap();
        let case_pos = header.find("case A_M:").unwrap();
        let pop_self = header[case_pos..].find("self = stack.pop_Reference();").unwrap();
        let pop_param = header[case_pos..].find("param_00 = stack.pop_Byte();").unwrap();
        assert!(pop_param < pop_self, "receiver pops after declared params");
        assert!(header.contains("extern jshort_t A_m(jref_t, jbyte_t);"));
        assert!(header[case_pos..].contains("A_m(self, param_00)"));
    }

}
