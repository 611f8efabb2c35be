//! Context-free grammar induced from gold SQL trees, plus the derivation
//! machinery shared by the oracle and the decoder.
//!
//! Rules never mention a specific column, value or table: those reach the
//! tree only through `COPY_*` slots filled by copy actions.

mod derivation;
mod rule;

use thiserror::Error;

pub use derivation::{
    extract_rules, induce_grammar, oracle_actions, replay, DecoderAction, PartialTree, Target,
};
pub use rule::{Grammar, MinCosts, NonTerminal, ProductionRule, RuleId, SlotKind, Symbol};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GrammarError {
    #[error("rule not in grammar: {0}")]
    RuleNotInGrammar(String),
    #[error("rule lhs {got} does not match target {expected}")]
    LhsMismatch { expected: String, got: String },
    #[error("copy into {got} while target is {expected}")]
    SlotMismatch { expected: String, got: String },
    #[error("derivation is already complete")]
    Complete,
    #[error("derivation is incomplete")]
    Incomplete,
    #[error("malformed derivation: {0}")]
    Malformed(&'static str),
    #[error("grammar format: {0}")]
    Format(String),
}
