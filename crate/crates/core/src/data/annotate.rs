use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{DataError, DatasetRecord, TableData};
use crate::sql::{parse_tokens, parse_tokens_with_roles, ClauseKind, ParseError, SqlTree, TokenKind};
use crate::text::{canonical_decimal, normalize};

/// SQL-semantic entity type of a query span.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EntityLabel {
    SelectColumn,
    WhereColumn,
    GroupbyColumn,
    OrderbyColumn,
    AggFunction,
    LiteralValue,
    None,
}

impl EntityLabel {
    /// All labels in index order (argmax ties go to the lowest index).
    pub const ALL: [EntityLabel; 7] = [
        EntityLabel::SelectColumn,
        EntityLabel::WhereColumn,
        EntityLabel::GroupbyColumn,
        EntityLabel::OrderbyColumn,
        EntityLabel::AggFunction,
        EntityLabel::LiteralValue,
        EntityLabel::None,
    ];
    pub const COUNT: usize = 7;
    pub const COLUMN_ROLES: [EntityLabel; 4] = [
        EntityLabel::SelectColumn,
        EntityLabel::WhereColumn,
        EntityLabel::GroupbyColumn,
        EntityLabel::OrderbyColumn,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> EntityLabel {
        EntityLabel::ALL[i]
    }

    pub fn name(self) -> &'static str {
        match self {
            EntityLabel::SelectColumn => "SELECT_COLUMN",
            EntityLabel::WhereColumn => "WHERE_COLUMN",
            EntityLabel::GroupbyColumn => "GROUPBY_COLUMN",
            EntityLabel::OrderbyColumn => "ORDERBY_COLUMN",
            EntityLabel::AggFunction => "AGG_FUNCTION",
            EntityLabel::LiteralValue => "LITERAL_VALUE",
            EntityLabel::None => "NONE",
        }
    }

    pub fn is_column(self) -> bool {
        EntityLabel::COLUMN_ROLES.contains(&self)
    }

    fn for_column(clause: ClauseKind) -> EntityLabel {
        match clause {
            ClauseKind::Select => EntityLabel::SelectColumn,
            ClauseKind::Where => EntityLabel::WhereColumn,
            ClauseKind::GroupBy => EntityLabel::GroupbyColumn,
            ClauseKind::OrderBy => EntityLabel::OrderbyColumn,
        }
    }
}

impl fmt::Display for EntityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EntityLabel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EntityLabel::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| format!("unknown entity label {s}"))
    }
}

/// A query span `[start, end)` with its entity type and optional link target
/// (a column id or an exact cell string).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TypedSpan {
    pub start: usize,
    pub end: usize,
    pub label: EntityLabel,
    pub link_target: Option<String>,
}

impl TypedSpan {
    pub fn overlaps(&self, start: usize, end: usize) -> bool {
        self.start < end && start < self.end
    }
}

/// Problems found while converting alignments; the affected tokens get no
/// span.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum AnnotationIssue {
    /// Column, literal or aggregate token outside every clause.
    UnalignableToken { sql_index: usize, token: String },
    /// One query range aligned to SQL tokens implying different labels or
    /// targets.
    ConflictingAlignment { start: usize, end: usize },
    /// Literal whose value does not occur in the table; span kept unlinked.
    LiteralNotInTable { sql_index: usize, value: String },
    /// Column token that is not a column of the table; span kept unlinked.
    ColumnNotInTable { sql_index: usize, column: String },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub spans: Vec<TypedSpan>,
    pub issues: Vec<AnnotationIssue>,
    /// Aligned keyword tokens that carry no entity role (`order`, `desc`, ...).
    pub skipped_keywords: usize,
}

/// Finds the exact cell string a SQL literal refers to: verbatim match first,
/// then normalized text, then numeric equality.
fn canonical_cell(table: &TableData, content: &str) -> Option<String> {
    if table.contains_cell(content) {
        return Some(content.to_string());
    }
    let cells = table.distinct_cells();
    let norm = normalize(content);
    if let Some(c) = cells.iter().find(|c| normalize(c) == norm) {
        return Some(c.to_string());
    }
    let num = canonical_decimal(content)?;
    cells
        .iter()
        .find(|c| canonical_decimal(c.trim()).as_deref() == Some(num.as_str()))
        .map(|c| c.to_string())
}

/// Converts a record's token alignments into typed, linked spans.
///
/// The label of an aligned SQL token comes from its kind and innermost clause
/// in the gold tree; the link target is the column id or exact cell string.
pub fn derive_annotations(
    record: &DatasetRecord,
    table: &TableData,
    gold_tree: &SqlTree,
) -> Result<Annotation, DataError> {
    let (tree, roles) = parse_tokens_with_roles(&record.gold_sql_tokens)?;
    if &tree != gold_tree {
        return Err(DataError::TreeMismatch);
    }
    let mut ann = Annotation::default();
    let mut by_range: BTreeMap<(usize, usize), Vec<(EntityLabel, Option<String>)>> =
        BTreeMap::new();
    for a in &record.alignments {
        let tok = &record.gold_sql_tokens[a.sql_index];
        let role = roles[a.sql_index];
        let entity = role.is_agg || matches!(tok.kind, TokenKind::Column | TokenKind::Literal);
        if !entity {
            ann.skipped_keywords += 1;
            continue;
        }
        let Some(clause) = role.clause else {
            ann.issues.push(AnnotationIssue::UnalignableToken {
                sql_index: a.sql_index,
                token: tok.text.clone(),
            });
            continue;
        };
        let derived = if role.is_agg {
            (EntityLabel::AggFunction, None)
        } else if tok.kind == TokenKind::Column {
            let col = tok.text.trim().to_lowercase();
            if table.column_index(&col).is_some() {
                (EntityLabel::for_column(clause), Some(col))
            } else {
                ann.issues.push(AnnotationIssue::ColumnNotInTable {
                    sql_index: a.sql_index,
                    column: col,
                });
                (EntityLabel::for_column(clause), None)
            }
        } else {
            let text = tok.text.trim();
            let content = if text.len() >= 2 && text.starts_with('\'') && text.ends_with('\'') {
                text[1..text.len() - 1].replace("''", "'")
            } else {
                text.to_string()
            };
            match canonical_cell(table, &content) {
                Some(cell) => (EntityLabel::LiteralValue, Some(cell)),
                None => {
                    ann.issues.push(AnnotationIssue::LiteralNotInTable {
                        sql_index: a.sql_index,
                        value: content,
                    });
                    (EntityLabel::LiteralValue, None)
                }
            }
        };
        by_range.entry((a.start, a.end)).or_default().push(derived);
    }
    for ((start, end), mut derived) in by_range {
        derived.sort();
        derived.dedup();
        if derived.len() == 1 {
            let (label, link_target) = derived.pop().unwrap();
            ann.spans.push(TypedSpan {
                start,
                end,
                label,
                link_target,
            });
        } else {
            ann.issues
                .push(AnnotationIssue::ConflictingAlignment { start, end });
        }
    }
    Ok(ann)
}

/// Records whose gold tree contains a subquery.
pub fn extract_nested_subset(records: &[DatasetRecord]) -> Result<Vec<DatasetRecord>, ParseError> {
    let mut out = Vec::new();
    for r in records {
        if parse_tokens(&r.gold_sql_tokens)?.contains_subquery() {
            out.push(r.clone());
        }
    }
    Ok(out)
}
