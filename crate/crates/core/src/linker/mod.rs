//! Entity linking: maps typed mentions to column ids or exact cell strings.
//!
//! Candidates are narrowed by the mention's entity type, each
//! (question, mention, candidate) input is scored independently, and the
//! highest-scoring candidate wins.

mod candidates;
mod model;

use thiserror::Error;

pub use candidates::{
    assemble_input, best_cell, generate_candidates, CandidateKind, CandidateSet, LinkCandidate,
    LinkContext, LinkInput, MAX_CANDIDATES, SEP,
};
pub use model::{
    build_groups, link, pair_features, top1_accuracy, train_nel, GroupStats, LinkFeatures, LinkGroup,
    LinkResult, LinkerConfig, LinkerModel, LinkerTrainConfig, LinkerTrainReport, FEATURE_NAMES,
};

use crate::data::{EntityLabel, TableData, TypedSpan};
use crate::text::{normalize, span_surface};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinkError {
    #[error("table {0} has no candidates")]
    EmptyTable(String),
    #[error("{0} mentions are not linked")]
    NotLinkable(EntityLabel),
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("bad model artifact: {0}")]
    Artifact(String),
}

/// Whether a linked mention's surface equals its target's text after
/// normalization (column display name or cell string).
pub fn is_exact_match(tokens: &[String], span: &TypedSpan, table: &TableData) -> Option<bool> {
    let target = span.link_target.as_ref()?;
    let text = if span.label.is_column() {
        let c = table.column_index(target)?;
        table.column_display_names[c].as_str()
    } else if span.label == EntityLabel::LiteralValue {
        target.as_str()
    } else {
        return None;
    };
    Some(span_surface(tokens, span.start, span.end) == normalize(text))
}
