use serde::{Deserialize, Serialize};

use super::LinkError;
use crate::data::{ColumnType, EntityLabel, TableData, TypedSpan};
use crate::text::{fuzzy_score, span_surface, window_fuzzy_score};

/// Most candidates kept per mention; the rest are dropped by fuzzy score.
pub const MAX_CANDIDATES: usize = 500;
pub const SEP: &str = "[SEP]";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CandidateKind {
    Column,
    Cell,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkCandidate {
    /// Column id or exact cell string.
    pub candidate_id: String,
    pub kind: CandidateKind,
    /// Column display name or the cell string itself.
    pub text: String,
    /// Best fuzzy-matching cell of the column against the question.
    pub meta_value: Option<String>,
    pub meta_type: Option<ColumnType>,
}

/// Per-record linking context: question tokens, table and per-column
/// best-matching cells (shared by all mentions of the question).
#[derive(Debug, Clone)]
pub struct LinkContext<'a> {
    pub tokens: &'a [String],
    pub table: &'a TableData,
    meta: Vec<String>,
}

impl<'a> LinkContext<'a> {
    pub fn new(tokens: &'a [String], table: &'a TableData) -> Self {
        let meta = (0..table.n_columns())
            .map(|c| best_cell(tokens, table.column_cells(c)).unwrap_or_default())
            .collect();
        LinkContext { tokens, table, meta }
    }

    pub fn meta_value(&self, col: usize) -> &str {
        &self.meta[col]
    }

    pub fn mention_text(&self, m: &TypedSpan) -> String {
        span_surface(self.tokens, m.start, m.end)
    }
}

/// Cell with the highest windowed fuzzy score against the question; ties go
/// to the earliest row. Empty cells are ignored.
pub fn best_cell<'c>(tokens: &[String], cells: impl Iterator<Item = &'c str>) -> Option<String> {
    let mut best: Option<(&str, f64)> = None;
    for c in cells.filter(|c| !c.trim().is_empty()) {
        let s = window_fuzzy_score(tokens, c);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((c, s));
        }
    }
    best.map(|b| b.0.to_string())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub candidates: Vec<LinkCandidate>,
    /// Candidates dropped by the size cap.
    pub overflow: usize,
}

/// Candidates narrowed by the mention's type: every column for column roles,
/// every distinct cell for literals.
pub fn generate_candidates(ctx: &LinkContext, mention: &TypedSpan) -> Result<CandidateSet, LinkError> {
    let table = ctx.table;
    let mut candidates: Vec<LinkCandidate> = match mention.label {
        l if l.is_column() => (0..table.n_columns())
            .map(|c| LinkCandidate {
                candidate_id: table.column_ids[c].clone(),
                kind: CandidateKind::Column,
                text: table.column_display_names[c].clone(),
                meta_value: Some(ctx.meta_value(c).to_string()),
                meta_type: Some(table.column_types[c]),
            })
            .collect(),
        EntityLabel::LiteralValue => table
            .distinct_cells()
            .into_iter()
            .map(|c| LinkCandidate {
                candidate_id: c.to_string(),
                kind: CandidateKind::Cell,
                text: c.to_string(),
                meta_value: None,
                meta_type: None,
            })
            .collect(),
        l => return Err(LinkError::NotLinkable(l)),
    };
    if candidates.is_empty() {
        return Err(LinkError::EmptyTable(table.table_id.clone()));
    }
    let mut overflow = 0;
    if candidates.len() > MAX_CANDIDATES {
        let m = ctx.mention_text(mention);
        let mut scored: Vec<(f64, usize, LinkCandidate)> = candidates
            .into_iter()
            .enumerate()
            .map(|(i, c)| (fuzzy_score(&m, &c.text), i, c))
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        overflow = scored.len() - MAX_CANDIDATES;
        scored.truncate(MAX_CANDIDATES);
        scored.sort_by_key(|s| s.1);
        candidates = scored.into_iter().map(|s| s.2).collect();
    }
    Ok(CandidateSet { candidates, overflow })
}

/// Separator-delimited model input: `query [SEP] mention [SEP] candidate`,
/// extended with `[SEP] value [SEP] type` for columns.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LinkInput {
    pub segments: Vec<String>,
}

impl LinkInput {
    pub fn query(&self) -> &str {
        &self.segments[0]
    }
    pub fn mention(&self) -> &str {
        &self.segments[1]
    }
    pub fn candidate(&self) -> &str {
        &self.segments[2]
    }
    pub fn meta_value(&self) -> Option<&str> {
        self.segments.get(3).map(String::as_str)
    }
    pub fn meta_type(&self) -> Option<&str> {
        self.segments.get(4).map(String::as_str)
    }

    pub fn to_text(&self) -> String {
        self.segments.join(&format!(" {SEP} "))
    }
}

pub fn assemble_input(query: &[String], mention: &TypedSpan, cand: &LinkCandidate) -> LinkInput {
    let mut segments = vec![
        query.join(" "),
        query[mention.start..mention.end].join(" "),
        cand.text.clone(),
    ];
    if cand.kind == CandidateKind::Column {
        segments.push(cand.meta_value.clone().unwrap_or_default());
        segments.push(cand.meta_type.map(|t| t.name().to_string()).unwrap_or_default());
    }
    LinkInput { segments }
}
