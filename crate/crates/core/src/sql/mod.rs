//! The SQL subset: typed AST, parser, canonical serializer and an in-memory
//! executor used for execution accuracy.

pub mod ast;
pub mod denotation;
pub mod exec;
pub mod parse;

pub use ast::*;
pub use denotation::{denotation_equal, Datum, Denotation};
pub use exec::{execute, ExecError};
pub use parse::{
    parse_sql, parse_tokens, parse_tokens_with_roles, ClauseKind, ParseError, SqlToken,
    TokenKind, TokenRole,
};

/// Canonical token sequence of a tree (inverse of parsing).
pub fn serialize(tree: &SqlTree) -> Vec<String> {
    tree.to_tokens()
}
