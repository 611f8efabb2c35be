use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{EntityLabel, TableData, TypedSpan};
use crate::linker::{CandidateKind, LinkResult};
use crate::ner::PredictedSpan;

/// Role of a column in the query as predicted upstream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ColumnRole {
    Select,
    Where,
    GroupBy,
    OrderBy,
    Absent,
}

impl ColumnRole {
    pub fn from_label(l: EntityLabel) -> Option<ColumnRole> {
        match l {
            EntityLabel::SelectColumn => Some(ColumnRole::Select),
            EntityLabel::WhereColumn => Some(ColumnRole::Where),
            EntityLabel::GroupbyColumn => Some(ColumnRole::GroupBy),
            EntityLabel::OrderbyColumn => Some(ColumnRole::OrderBy),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ColumnRole::Select => "SELECT_COLUMN",
            ColumnRole::Where => "WHERE_COLUMN",
            ColumnRole::GroupBy => "GROUPBY_COLUMN",
            ColumnRole::OrderBy => "ORDERBY_COLUMN",
            ColumnRole::Absent => "ABSENT",
        }
    }
}

/// A column's role with the mention it came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoleEntry {
    pub role: ColumnRole,
    /// NER probability of the mention that set the role.
    pub prob: f64,
    /// First query token of that mention.
    pub position: usize,
}

/// Column id to role; columns without a linked mention are absent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ColumnTypeFeature {
    pub roles: BTreeMap<String, RoleEntry>,
}

impl ColumnTypeFeature {
    pub fn role(&self, column: &str) -> ColumnRole {
        self.roles.get(column).map(|e| e.role).unwrap_or(ColumnRole::Absent)
    }

    pub fn entry(&self, column: &str) -> Option<&RoleEntry> {
        self.roles.get(column)
    }

    pub fn is_empty(&self) -> bool {
        self.roles.is_empty()
    }

    /// Records a role unless the column already has one from a mention at
    /// least as probable.
    fn offer(&mut self, column: &str, entry: RoleEntry) {
        match self.roles.get(column) {
            Some(e) if e.prob >= entry.prob => {}
            _ => {
                self.roles.insert(column.to_string(), entry);
            }
        }
    }

    /// Roles from gold spans (probability 1, first span wins).
    pub fn from_gold(table: &TableData, spans: &[TypedSpan]) -> Self {
        let mut f = ColumnTypeFeature::default();
        for s in spans {
            let (Some(role), Some(col)) = (ColumnRole::from_label(s.label), &s.link_target) else {
                continue;
            };
            if table.column_index(col).is_some() {
                f.offer(col, RoleEntry { role, prob: 1.0, position: s.start });
            }
        }
        f
    }
}

/// Routes column-role NER spans through their links. When several spans link
/// to one column, the most probable span's role is kept.
pub fn build_column_type_features(
    ner_spans: &[PredictedSpan],
    links: &[Option<LinkResult>],
) -> ColumnTypeFeature {
    let mut f = ColumnTypeFeature::default();
    for (s, l) in ner_spans.iter().zip(links) {
        let (Some(role), Some(l)) = (ColumnRole::from_label(s.label), l) else {
            continue;
        };
        if l.chosen.kind != CandidateKind::Column {
            continue;
        }
        f.offer(&l.chosen.candidate_id, RoleEntry { role, prob: s.prob, position: s.start });
    }
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linker::LinkCandidate;

    fn span(s: usize, l: EntityLabel, p: f64) -> PredictedSpan {
        PredictedSpan { start: s, end: s + 1, label: l, prob: p, gazetteer_match: false }
    }

    fn col_link(m: &PredictedSpan, id: &str) -> Option<LinkResult> {
        let c = LinkCandidate {
            candidate_id: id.into(),
            kind: CandidateKind::Column,
            text: id.into(),
            meta_value: None,
            meta_type: None,
        };
        Some(LinkResult { mention: m.typed(), ranked: vec![(c.clone(), 1.0)], chosen: c })
    }

    #[test]
    fn select_column_from_album() {
        let s = span(1, EntityLabel::SelectColumn, 0.8);
        let f = build_column_type_features(std::slice::from_ref(&s), &[col_link(&s, "c2")]);
        assert_eq!(f.role("c2"), ColumnRole::Select);
        assert_eq!(f.role("c1"), ColumnRole::Absent);
    }

    #[test]
    fn no_spans_all_absent() {
        let f = build_column_type_features(&[], &[]);
        assert!(f.is_empty());
        assert_eq!(f.role("c1"), ColumnRole::Absent);
    }

    #[test]
    fn conflict_keeps_most_probable() {
        let a = span(1, EntityLabel::GroupbyColumn, 0.6);
        let b = span(4, EntityLabel::WhereColumn, 0.9);
        let f = build_column_type_features(&[a.clone(), b.clone()], &[col_link(&a, "c3"), col_link(&b, "c3")]);
        assert_eq!(f.role("c3"), ColumnRole::Where);
        let f = build_column_type_features(&[b.clone(), a.clone()], &[col_link(&b, "c3"), col_link(&a, "c3")]);
        assert_eq!(f.role("c3"), ColumnRole::Where);
    }
}
