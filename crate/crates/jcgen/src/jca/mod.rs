//! Frontend: tokenize and parse `.jca` text into a validated package
//! model, plus the canonical printer and the native-method registry.

pub mod lexer;
pub mod model;
pub mod natives;
pub mod parser;
pub mod printer;

pub use lexer::{tokenize, LexError, Tok, Token};
pub use model::*;
pub use natives::{collect_native_methods, NativeEntry, NativeMethodTable, TooManyNatives};
pub use parser::{parse_package, parse_package_text, JcaError, ParseError, SemanticError};
pub use printer::print_package;
