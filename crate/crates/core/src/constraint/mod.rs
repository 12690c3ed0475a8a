//! Aggregation functions and aggregate constraints: AST, parser, DNF.

mod ast;
mod dnf;
mod parser;

pub use ast::*;
pub use dnf::{normalize_condition_dnf, Conjunct};
pub(crate) use parser::string_literal;
pub use parser::{parse_constraints, ParseError};
