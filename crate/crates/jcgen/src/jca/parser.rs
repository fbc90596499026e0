//! Recursive-descent parser producing a validated [`JcaPackage`].
//!
//! The accepted syntax is documented in `docs/jca-grammar.md`. Optional
//! sections default to empty; anything outside the grammar is a hard
//! error rather than being skipped, since silently accepted input would
//! corrupt the binaries built from the model.

use std::collections::HashSet;

use thiserror::Error;

use super::lexer::{tokenize, LexError, Tok, Token};
use super::model::*;
use crate::opcodes::{self, OperandKind, OperandLayout};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("parse error at {line}:{col}: expected {expected}, found {found}")]
pub struct ParseError {
    pub line: u32,
    pub col: u32,
    pub expected: String,
    pub found: String,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("semantic error in package {package}: {message}")]
pub struct SemanticError {
    pub package: String,
    pub message: String,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum JcaError {
    #[error(transparent)]
    Lex(#[from] LexError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Semantic(#[from] SemanticError),
}

/// Parses one `.jca` text into a validated package model.
pub fn parse_package_text(text: &str) -> Result<JcaPackage, JcaError> {
    let tokens = tokenize(text)?;
    let pkg = parse_package(&tokens)?;
    Ok(pkg)
}

/// Parses a token stream into a validated package model.
pub fn parse_package(tokens: &[Token]) -> Result<JcaPackage, JcaError> {
    let mut parser = Parser { tokens, pos: 0 };
    let pkg = parser.package()?;
    validate(&pkg)?;
    Ok(pkg)
}

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
}

type PResult<T> = Result<T, ParseError>;

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|t| &t.tok)
    }

    fn peek_at(&self, ahead: usize) -> Option<&Tok> {
        self.tokens.get(self.pos + ahead).map(|t| &t.tok)
    }

    fn error(&self, expected: &str) -> ParseError {
        match self.tokens.get(self.pos) {
            Some(t) => ParseError {
                line: t.line,
                col: t.col,
                expected: expected.to_owned(),
                found: t.tok.to_string(),
            },
            None => {
                let (line, col) = self
                    .tokens
                    .last()
                    .map(|t| (t.line, t.col))
                    .unwrap_or((1, 1));
                ParseError {
                    line,
                    col,
                    expected: expected.to_owned(),
                    found: "end of input".to_owned(),
                }
            }
        }
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok, expected: &str) -> PResult<()> {
        if self.eat(&tok) {
            Ok(())
        } else {
            Err(self.error(expected))
        }
    }

    fn ident(&mut self, expected: &str) -> PResult<String> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.error(expected)),
        }
    }

    /// Accepts `.keyword` and returns the keyword.
    fn at_directive(&self, keyword: &str) -> bool {
        matches!(self.peek(), Some(Tok::Dot))
            && matches!(self.peek_at(1), Some(Tok::Ident(s)) if s == keyword)
    }

    fn directive(&mut self, keyword: &str) -> PResult<()> {
        if self.at_directive(keyword) {
            self.pos += 2;
            Ok(())
        } else {
            Err(self.error(&format!(".{keyword}")))
        }
    }

    fn number(&mut self, expected: &str) -> PResult<i64> {
        match self.peek() {
            Some(Tok::Int(n)) | Some(Tok::Hex(n)) => {
                let n = *n;
                self.pos += 1;
                Ok(n)
            }
            _ => Err(self.error(expected)),
        }
    }

    fn u8_number(&mut self, expected: &str) -> PResult<u8> {
        let n = self.number(expected)?;
        u8::try_from(n).map_err(|_| {
            self.pos -= 1;
            let e = self.error(&format!("{expected} in 0..=255"));
            self.pos += 1;
            e
        })
    }

    fn qualified_name(&mut self) -> PResult<String> {
        let mut name = self.ident("identifier")?;
        while matches!(self.peek(), Some(Tok::Dot))
            && matches!(self.peek_at(1), Some(Tok::Ident(_)))
        {
            self.pos += 1;
            name.push('.');
            name.push_str(&self.ident("identifier")?);
        }
        Ok(name)
    }

    /// Colon-separated hex bytes: `0xA0:0x00:0x00:0x01:0x01`.
    fn aid(&mut self) -> PResult<Vec<u8>> {
        let mut bytes = vec![self.u8_number("AID byte")?];
        while self.eat(&Tok::Colon) {
            bytes.push(self.u8_number("AID byte")?);
        }
        Ok(bytes)
    }

    fn version_pair(&mut self) -> PResult<(u8, u8)> {
        let major = self.u8_number("major version")?;
        self.expect(Tok::Dot, ".")?;
        let minor = self.u8_number("minor version")?;
        Ok((major, minor))
    }

    fn package(&mut self) -> PResult<JcaPackage> {
        self.directive("package")?;
        let name = self.qualified_name()?;
        self.expect(Tok::LBrace, "{")?;

        self.directive("aid")?;
        let aid = self.aid()?;
        self.expect(Tok::Semi, ";")?;

        self.directive("version")?;
        let version = self.version_pair()?;
        self.expect(Tok::Semi, ";")?;

        let mut imports = Vec::new();
        if self.at_directive("imports") {
            self.pos += 2;
            self.expect(Tok::LBrace, "{")?;
            while !self.eat(&Tok::RBrace) {
                let aid = self.aid()?;
                let version = self.version_pair()?;
                self.expect(Tok::Semi, ";")?;
                imports.push(ImportEntry { aid, version });
            }
        }

        let mut applets = Vec::new();
        if self.at_directive("applets") {
            self.pos += 2;
            self.expect(Tok::LBrace, "{")?;
            while !self.eat(&Tok::RBrace) {
                let aid = self.aid()?;
                let class_name = self.ident("applet class name")?;
                self.expect(Tok::Semi, ";")?;
                applets.push(AppletDecl { aid, class_name });
            }
        }

        let mut constant_pool = Vec::new();
        if self.at_directive("constant") || self.at_directive("constantPool") {
            self.pos += 2;
            // Both `.constant pool` and `.constantPool` are accepted.
            if matches!(self.peek(), Some(Tok::Ident(s)) if s == "pool") {
                self.pos += 1;
            }
            self.expect(Tok::LBrace, "{")?;
            while !self.eat(&Tok::RBrace) {
                constant_pool.push(self.cp_entry()?);
            }
        }

        let mut classes = Vec::new();
        while self.at_directive("class") || self.at_directive("interface") {
            classes.push(self.class_decl()?);
        }
        self.expect(Tok::RBrace, "}")?;
        if self.pos != self.tokens.len() {
            return Err(self.error("end of input"));
        }

        Ok(JcaPackage {
            name,
            aid,
            version,
            imports,
            applets,
            constant_pool,
            classes,
        })
    }

    fn cp_entry(&mut self) -> PResult<CpEntry> {
        let kw = self.ident("constant pool entry kind")?;
        let kind = match kw.as_str() {
            "classRef" => CpKind::ClassRef,
            "instanceFieldRef" => CpKind::InstanceFieldRef,
            "virtualMethodRef" => CpKind::VirtualMethodRef,
            "superMethodRef" => CpKind::SuperMethodRef,
            "staticFieldRef" => CpKind::StaticFieldRef,
            "staticMethodRef" => CpKind::StaticMethodRef,
            _ => {
                self.pos -= 1;
                return Err(self.error("constant pool entry kind"));
            }
        };
        let target = if matches!(self.peek(), Some(Tok::Int(_)) | Some(Tok::Hex(_))) {
            // token path: import.class[.member]
            let import = self.u8_number("import token")?;
            self.expect(Tok::Dot, ".")?;
            let class = self.u8_number("class token")?;
            if kind == CpKind::ClassRef {
                CpTarget::ExternalClass { import, class }
            } else {
                self.expect(Tok::Dot, ".")?;
                let token = self.u8_number("member token")?;
                CpTarget::ExternalMember {
                    import,
                    class,
                    token,
                }
            }
        } else {
            let first = self.ident("class name")?;
            match kind {
                CpKind::ClassRef => CpTarget::InternalClass { class: first },
                CpKind::InstanceFieldRef | CpKind::StaticFieldRef => {
                    self.expect(Tok::Dot, ".")?;
                    let field = self.ident("field name")?;
                    CpTarget::InternalField {
                        class: first,
                        field,
                    }
                }
                _ => {
                    self.expect(Tok::Dot, ".")?;
                    let name = self.ident("method name")?;
                    let sig = self.method_sig()?;
                    CpTarget::InternalMethod {
                        class: first,
                        name,
                        sig,
                    }
                }
            }
        };
        self.expect(Tok::Semi, ";")?;
        Ok(CpEntry { kind, target })
    }

    fn java_type(&mut self) -> PResult<JavaType> {
        let name = self.qualified_name()?;
        let base = match name.as_str() {
            "byte" => JavaType::Byte,
            "boolean" => JavaType::Boolean,
            "short" => JavaType::Short,
            "int" => JavaType::Int,
            "void" => return Err(self.error("value type")),
            _ => JavaType::Reference(name),
        };
        if self.eat(&Tok::LBracket) {
            self.expect(Tok::RBracket, "]")?;
            Ok(JavaType::Array(Box::new(base)))
        } else {
            Ok(base)
        }
    }

    fn return_type(&mut self) -> PResult<Option<JavaType>> {
        if matches!(self.peek(), Some(Tok::Ident(s)) if s == "void") {
            self.pos += 1;
            Ok(None)
        } else {
            Ok(Some(self.java_type()?))
        }
    }

    /// `(type, type, ...) rettype`: used after a method name.
    fn method_sig(&mut self) -> PResult<MethodSig> {
        self.expect(Tok::LParen, "(")?;
        let mut params = Vec::new();
        if !self.eat(&Tok::RParen) {
            loop {
                params.push(self.java_type()?);
                if self.eat(&Tok::RParen) {
                    break;
                }
                self.expect(Tok::Comma, ", or )")?;
            }
        }
        let ret = self.return_type()?;
        Ok(MethodSig { params, ret })
    }

    fn class_ref(&mut self) -> PResult<ClassRef> {
        if matches!(self.peek(), Some(Tok::Int(_)) | Some(Tok::Hex(_))) {
            let import = self.u8_number("import token")?;
            self.expect(Tok::Dot, ".")?;
            let class = self.u8_number("class token")?;
            Ok(ClassRef::External { import, class })
        } else {
            Ok(ClassRef::Internal(self.qualified_name()?))
        }
    }

    fn visibility(kw: &str) -> Option<Visibility> {
        match kw {
            "public" => Some(Visibility::Public),
            "protected" => Some(Visibility::Protected),
            "package" => Some(Visibility::Package),
            "private" => Some(Visibility::Private),
            _ => None,
        }
    }

    fn class_decl(&mut self) -> PResult<JcaClass> {
        let is_interface_directive = self.at_directive("interface");
        if is_interface_directive {
            self.directive("interface")?;
        } else {
            self.directive("class")?;
        }
        let mut visibility = Visibility::Package;
        let mut is_abstract = false;
        let mut is_final = false;
        let mut is_interface = is_interface_directive;
        let name;
        loop {
            let word = self.ident("class modifier or name")?;
            if let Some(v) = Self::visibility(&word) {
                visibility = v;
            } else if word == "abstract" {
                is_abstract = true;
            } else if word == "final" {
                is_final = true;
            } else if word == "interface" {
                is_interface = true;
            } else {
                name = word;
                break;
            }
        }

        let mut extends = None;
        if matches!(self.peek(), Some(Tok::Ident(s)) if s == "extends") {
            self.pos += 1;
            extends = Some(self.class_ref()?);
        }
        self.expect(Tok::LBrace, "{")?;

        let mut shareable_interfaces = Vec::new();
        if self.at_directive("shareableInterfaces") {
            self.pos += 2;
            self.expect(Tok::LBrace, "{")?;
            while !self.eat(&Tok::RBrace) {
                shareable_interfaces.push(self.class_ref()?);
                self.expect(Tok::Semi, ";")?;
            }
        }
        let mut remote_interfaces = Vec::new();
        if self.at_directive("remoteInterfaces") {
            self.pos += 2;
            self.expect(Tok::LBrace, "{")?;
            while !self.eat(&Tok::RBrace) {
                remote_interfaces.push(self.class_ref()?);
                self.expect(Tok::Semi, ";")?;
            }
        }

        let mut fields = Vec::new();
        if self.at_directive("fields") {
            self.pos += 2;
            self.expect(Tok::LBrace, "{")?;
            while !self.eat(&Tok::RBrace) {
                fields.push(self.field_decl()?);
            }
        }

        let public_method_table = if self.at_directive("publicMethodTable") {
            self.pos += 2;
            Some(self.method_table()?)
        } else {
            None
        };
        let package_method_table = if self.at_directive("packageMethodTable") {
            self.pos += 2;
            Some(self.method_table()?)
        } else {
            None
        };

        let mut interface_impls = Vec::new();
        while self.at_directive("implements") {
            self.pos += 2;
            let interface = self.class_ref()?;
            self.expect(Tok::LBrace, "{")?;
            let mut methods = Vec::new();
            while !self.eat(&Tok::RBrace) {
                let name = self.ident("method name")?;
                let sig = self.method_sig()?;
                self.expect(Tok::Semi, ";")?;
                methods.push(MethodTableEntry { name, sig });
            }
            interface_impls.push(InterfaceImpl { interface, methods });
        }

        let mut methods = Vec::new();
        while self.at_directive("method") {
            methods.push(self.method_decl()?);
        }
        self.expect(Tok::RBrace, "}")?;

        Ok(JcaClass {
            name,
            visibility,
            is_abstract,
            is_final,
            is_interface,
            extends,
            shareable_interfaces,
            remote_interfaces,
            fields,
            public_method_table,
            package_method_table,
            interface_impls,
            methods,
        })
    }

    fn method_table(&mut self) -> PResult<MethodTable> {
        let base = if matches!(self.peek(), Some(Tok::Int(_)) | Some(Tok::Hex(_))) {
            self.u8_number("table base")?
        } else {
            0
        };
        self.expect(Tok::LBrace, "{")?;
        let mut entries = Vec::new();
        while !self.eat(&Tok::RBrace) {
            let name = self.ident("method name")?;
            let sig = self.method_sig()?;
            self.expect(Tok::Semi, ";")?;
            entries.push(MethodTableEntry { name, sig });
        }
        Ok(MethodTable { base, entries })
    }

    fn field_decl(&mut self) -> PResult<JcaField> {
        let mut visibility = Visibility::Package;
        let mut is_static = false;
        let mut is_final = false;
        while let Some(Tok::Ident(word)) = self.peek() {
            if let Some(v) = Self::visibility(word) {
                visibility = v;
                self.pos += 1;
            } else if word == "static" {
                is_static = true;
                self.pos += 1;
            } else if word == "final" {
                is_final = true;
                self.pos += 1;
            } else {
                break;
            }
        }
        let ty = self.java_type()?;
        let name = self.ident("field name")?;
        let token = if matches!(self.peek(), Some(Tok::Int(_)) | Some(Tok::Hex(_))) {
            Some(self.u8_number("field token")?)
        } else {
            None
        };
        let init = if self.eat(&Tok::Eq) {
            Some(self.field_init()?)
        } else {
            None
        };
        self.expect(Tok::Semi, ";")?;
        Ok(JcaField {
            name,
            visibility,
            is_static,
            is_final,
            ty,
            token,
            init,
        })
    }

    fn field_init(&mut self) -> PResult<FieldInit> {
        match self.peek() {
            Some(Tok::Ident(s)) if s == "null" => {
                self.pos += 1;
                Ok(FieldInit::Null)
            }
            Some(Tok::LBrace) => {
                self.pos += 1;
                let mut values = Vec::new();
                if !self.eat(&Tok::RBrace) {
                    loop {
                        values.push(self.number("array element")?);
                        if self.eat(&Tok::RBrace) {
                            break;
                        }
                        self.expect(Tok::Comma, ", or }")?;
                    }
                }
                Ok(FieldInit::Array(values))
            }
            _ => Ok(FieldInit::Scalar(self.number("initial value")?)),
        }
    }

    fn method_decl(&mut self) -> PResult<JcaMethod> {
        self.directive("method")?;
        let mut visibility = Visibility::Package;
        let mut is_abstract = false;
        let mut is_static = false;
        let mut is_final = false;
        let mut is_native = false;
        let ret;
        loop {
            // Modifiers keep coming until the return type starts. The
            // return type is a type name, so disambiguate by keyword.
            match self.peek() {
                Some(Tok::Ident(word)) => {
                    if let Some(v) = Self::visibility(word) {
                        visibility = v;
                        self.pos += 1;
                    } else {
                        match word.as_str() {
                            "abstract" => {
                                is_abstract = true;
                                self.pos += 1;
                            }
                            "static" => {
                                is_static = true;
                                self.pos += 1;
                            }
                            "final" => {
                                is_final = true;
                                self.pos += 1;
                            }
                            "native" => {
                                is_native = true;
                                self.pos += 1;
                            }
                            _ => {
                                ret = self.return_type()?;
                                break;
                            }
                        }
                    }
                }
                _ => return Err(self.error("method modifier or return type")),
            }
        }
        let name = self.ident("method name")?;
        self.expect(Tok::LParen, "(")?;
        let mut params = Vec::new();
        if !self.eat(&Tok::RParen) {
            loop {
                params.push(self.java_type()?);
                if self.eat(&Tok::RParen) {
                    break;
                }
                self.expect(Tok::Comma, ", or )")?;
            }
        }
        let sig = MethodSig { params, ret };
        let token = if matches!(self.peek(), Some(Tok::Int(_)) | Some(Tok::Hex(_))) {
            Some(self.u8_number("method token")?)
        } else {
            None
        };

        let mut method = JcaMethod {
            name,
            sig,
            visibility,
            is_abstract,
            is_static,
            is_final,
            is_native,
            token,
            max_stack: 0,
            nargs: 0,
            max_locals: 0,
            body: None,
            handlers: Vec::new(),
        };
        method.nargs = method.computed_nargs();

        if self.eat(&Tok::Semi) {
            return Ok(method);
        }
        self.expect(Tok::LBrace, "{ or ;")?;
        let mut declared_nargs = None;
        while self.at_directive("stack") || self.at_directive("nargs") || self.at_directive("locals")
        {
            if self.at_directive("stack") {
                self.pos += 2;
                method.max_stack = self.u8_number("stack size")?;
            } else if self.at_directive("nargs") {
                self.pos += 2;
                declared_nargs = Some(self.u8_number("argument word count")?);
            } else {
                self.pos += 2;
                method.max_locals = self.u8_number("local count")?;
            }
            self.expect(Tok::Semi, ";")?;
        }
        if let Some(n) = declared_nargs {
            method.nargs = n;
        }

        let mut body = Vec::new();
        loop {
            if self.at_directive("catch") {
                break;
            }
            match self.peek() {
                Some(Tok::RBrace) => break,
                Some(Tok::Ident(_)) => body.push(self.instruction()?),
                _ => return Err(self.error("instruction, .catch or }")),
            }
        }
        let mut handlers = Vec::new();
        while self.at_directive("catch") {
            self.pos += 2;
            let catch_type = if matches!(self.peek(), Some(Tok::Ident(s)) if s == "any") {
                self.pos += 1;
                None
            } else {
                let n = self.number("catch type constant pool index or 'any'")?;
                let idx = u16::try_from(n).map_err(|_| self.error("16-bit constant pool index"))?;
                Some(idx)
            };
            let start = self.ident("start label")?;
            let end = self.ident("end label")?;
            let handler = self.ident("handler label")?;
            self.expect(Tok::Semi, ";")?;
            handlers.push(ExceptionHandler {
                start,
                end,
                handler,
                catch_type,
            });
        }
        self.expect(Tok::RBrace, "}")?;
        method.body = Some(body);
        method.handlers = handlers;
        Ok(method)
    }

    fn instruction(&mut self) -> PResult<Instruction> {
        let mut label = None;
        if matches!(self.peek(), Some(Tok::Ident(_))) && self.peek_at(1) == Some(&Tok::Colon) {
            label = Some(self.ident("label")?);
            self.pos += 1; // colon
        }
        let mnemonic = self.ident("mnemonic")?;
        let Some(spec) = opcodes::table().by_mnemonic(&mnemonic) else {
            self.pos -= 1;
            return Err(self.error("known mnemonic"));
        };
        let operands = match spec.operands {
            OperandLayout::Fixed(kinds) => {
                let mut ops = Vec::with_capacity(kinds.len());
                for kind in kinds {
                    ops.push(self.operand(*kind)?);
                }
                ops
            }
            OperandLayout::TableSwitchShort | OperandLayout::TableSwitchInt => {
                let default = Operand::Label(self.ident("default label")?);
                let low = self.number("low bound")?;
                let high = self.number("high bound")?;
                if high < low {
                    return Err(self.error("high bound >= low bound"));
                }
                let count = high - low + 1;
                if count > 0xFFFF {
                    return Err(self.error("at most 65535 switch targets"));
                }
                let mut ops = vec![default, Operand::Number(low), Operand::Number(high)];
                for _ in 0..count {
                    ops.push(Operand::Label(self.ident("case label")?));
                }
                ops
            }
            OperandLayout::LookupSwitchShort | OperandLayout::LookupSwitchInt => {
                let default = Operand::Label(self.ident("default label")?);
                let pairs = self.number("pair count")?;
                if !(0..=0xFFFF).contains(&pairs) {
                    return Err(self.error("pair count in 0..=65535"));
                }
                let mut ops = vec![default, Operand::Number(pairs)];
                for _ in 0..pairs {
                    ops.push(Operand::Number(self.number("match value")?));
                    ops.push(Operand::Label(self.ident("case label")?));
                }
                ops
            }
        };
        self.expect(Tok::Semi, ";")?;
        Ok(Instruction {
            opcode: spec.opcode,
            label,
            operands,
        })
    }

    fn operand(&mut self, kind: OperandKind) -> PResult<Operand> {
        match kind {
            OperandKind::Branch1 | OperandKind::Branch2 => {
                Ok(Operand::Label(self.ident("branch label")?))
            }
            OperandKind::CpIndex1 | OperandKind::CpIndex2 => {
                let n = self.number("constant pool index")?;
                let idx =
                    u16::try_from(n).map_err(|_| self.error("16-bit constant pool index"))?;
                Ok(Operand::CpIndex(idx))
            }
            _ => Ok(Operand::Number(self.number("numeric operand")?)),
        }
    }
}

fn aid_ok(aid: &[u8]) -> bool {
    (5..=16).contains(&aid.len())
}

fn validate(pkg: &JcaPackage) -> Result<(), SemanticError> {
    let fail = |message: String| {
        Err(SemanticError {
            package: pkg.name.clone(),
            message,
        })
    };

    if !aid_ok(&pkg.aid) {
        return fail(format!("package AID has {} bytes, expected 5..=16", pkg.aid.len()));
    }
    let mut seen_aids = HashSet::new();
    for (i, imp) in pkg.imports.iter().enumerate() {
        if !aid_ok(&imp.aid) {
            return fail(format!("import {i} AID has {} bytes", imp.aid.len()));
        }
        if !seen_aids.insert(imp.aid.clone()) {
            return fail(format!("duplicate import AID at position {i}"));
        }
    }
    for applet in &pkg.applets {
        if !aid_ok(&applet.aid) {
            return fail(format!("applet {} AID has {} bytes", applet.class_name, applet.aid.len()));
        }
        if pkg.find_class(&applet.class_name).is_none() {
            return fail(format!(
                "applet class {} is not declared in the package",
                applet.class_name
            ));
        }
    }

    let mut class_names = HashSet::new();
    for class in &pkg.classes {
        if !class_names.insert(class.name.as_str()) {
            return fail(format!("duplicate class {}", class.name));
        }
    }

    let import_count = pkg.imports.len();
    let check_ext = |import: u8| (import as usize) < import_count;
    for (i, entry) in pkg.constant_pool.iter().enumerate() {
        match &entry.target {
            CpTarget::ExternalClass { import, .. } | CpTarget::ExternalMember { import, .. } => {
                if !check_ext(*import) {
                    return fail(format!(
                        "constant pool entry {i} references import token {import} but only {import_count} imports exist"
                    ));
                }
                if entry.kind == CpKind::ClassRef
                    && matches!(entry.target, CpTarget::ExternalMember { .. })
                {
                    return fail(format!("constant pool entry {i}: classRef cannot carry a member token"));
                }
            }
            CpTarget::InternalClass { class } => {
                if pkg.find_class(class).is_none() {
                    return fail(format!("constant pool entry {i} references unknown class {class}"));
                }
            }
            CpTarget::InternalField { class, field } => {
                let Some(c) = pkg.find_class(class) else {
                    return fail(format!("constant pool entry {i} references unknown class {class}"));
                };
                let Some(f) = c.fields.iter().find(|f| &f.name == field) else {
                    return fail(format!("constant pool entry {i} references unknown field {class}.{field}"));
                };
                match entry.kind {
                    CpKind::StaticFieldRef if !f.is_static => {
                        return fail(format!("constant pool entry {i}: {class}.{field} is not static"));
                    }
                    CpKind::InstanceFieldRef if f.is_static => {
                        return fail(format!("constant pool entry {i}: {class}.{field} is static"));
                    }
                    _ => {}
                }
            }
            CpTarget::InternalMethod { class, name, sig } => {
                let Some(c) = pkg.find_class(class) else {
                    return fail(format!("constant pool entry {i} references unknown class {class}"));
                };
                if c.find_method(name, sig).is_none() {
                    return fail(format!(
                        "constant pool entry {i} references unknown method {class}.{name}{sig}"
                    ));
                }
            }
        }
    }

    let cp_len = pkg.constant_pool.len() as u16;
    for class in &pkg.classes {
        if class.is_final && class.is_abstract {
            return fail(format!("class {} is both final and abstract", class.name));
        }
        for method in &class.methods {
            let where_ = format!("{}.{}{}", class.name, method.name, method.sig);
            if (method.is_native || method.is_abstract) && method.body.is_some() {
                let kind = if method.is_native { "native" } else { "abstract" };
                return fail(format!("{kind} method {where_} must not have a body"));
            }
            if class.is_interface && method.body.is_some() {
                return fail(format!("interface method {where_} must not have a body"));
            }
            if !method.is_native
                && !method.is_abstract
                && !class.is_interface
                && method.body.is_none()
            {
                return fail(format!("method {where_} is missing a body"));
            }
            if method.nargs != method.computed_nargs() {
                return fail(format!(
                    "{where_}: declared nargs {} does not match the signature's {} argument words",
                    method.nargs,
                    method.computed_nargs()
                ));
            }
            if let Some(body) = &method.body {
                for (pc, instr) in body.iter().enumerate() {
                    validate_instruction(pkg, &where_, pc, instr, cp_len)?;
                }
            }
            for h in &method.handlers {
                if let Some(idx) = h.catch_type {
                    if idx >= cp_len {
                        return fail(format!(
                            "{where_}: catch type index {idx} outside constant pool (len {cp_len})"
                        ));
                    }
                    if pkg.constant_pool[idx as usize].kind != CpKind::ClassRef {
                        return fail(format!("{where_}: catch type index {idx} is not a classRef"));
                    }
                }
            }
        }
        // Method table entries must name declared methods or denote
        // inherited implementations; interface impls follow the same rule.
        let tables = class
            .public_method_table
            .iter()
            .chain(class.package_method_table.iter());
        let _ = tables; // entries resolved during component building
    }
    Ok(())
}

fn validate_instruction(
    pkg: &JcaPackage,
    where_: &str,
    pc: usize,
    instr: &Instruction,
    cp_len: u16,
) -> Result<(), SemanticError> {
    let fail = |message: String| {
        Err(SemanticError {
            package: pkg.name.clone(),
            message,
        })
    };
    let spec = opcodes::table()
        .by_opcode(instr.opcode)
        .expect("parser only emits known opcodes");
    if let OperandLayout::Fixed(kinds) = spec.operands {
        // checkcast/instanceof only consult the pool when the array type
        // operand is 0 (class reference); otherwise the index must be 0.
        let atype_nonzero = kinds.first() == Some(&OperandKind::ArrayType)
            && matches!(instr.operands.first(), Some(Operand::Number(n)) if *n != 0);
        for (kind, op) in kinds.iter().zip(&instr.operands) {
            match (kind, op) {
                (OperandKind::CpIndex1 | OperandKind::CpIndex2, Operand::CpIndex(idx)) => {
                    if atype_nonzero {
                        if *idx != 0 {
                            return fail(format!(
                                "{where_}: instruction {pc} ({}) must use index 0 with a primitive array type",
                                spec.mnemonic
                            ));
                        }
                    } else if *idx >= cp_len {
                        return fail(format!(
                            "{where_}: instruction {pc} ({}) references constant pool index {idx} (len {cp_len})",
                            spec.mnemonic
                        ));
                    }
                }
                (OperandKind::ArrayType, Operand::Number(n)) => {
                    let valid = if spec.mnemonic == "newarray" {
                        (10..=13).contains(n)
                    } else {
                        *n == 0 || (10..=14).contains(n)
                    };
                    if !valid {
                        return fail(format!(
                            "{where_}: instruction {pc} ({}) has invalid array type {n}",
                            spec.mnemonic
                        ));
                    }
                }
                _ => {}
            }
        }
    }
    Ok(())
}
