use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::features::{ColumnRole, ColumnTypeFeature};
use crate::data::{ColumnType, EntityLabel, TableData};
use crate::sql::TABLE_ALIAS;
use crate::text::{normalize, parse_decimal, window_fuzzy_score, words};

/// A literal the decoder may copy: an exact cell string found for a query
/// span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueMention {
    pub text: String,
    pub start: usize,
    pub end: usize,
    /// Linking confidence.
    pub score: f64,
}

/// Everything the encoder needs for one question.
#[derive(Debug, Clone)]
pub struct EncodeInput<'a> {
    pub tokens: &'a [String],
    pub table: &'a TableData,
    /// Entity spans (for query-level features).
    pub entities: Vec<(usize, usize, EntityLabel)>,
    pub values: Vec<ValueMention>,
    pub features: ColumnTypeFeature,
    /// Keep only these columns (the linked-columns-only mode).
    pub column_filter: Option<BTreeSet<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnEnc {
    pub id: String,
    pub index: usize,
    pub display_words: Vec<String>,
    pub ty: ColumnType,
    pub role: ColumnRole,
    /// Query position of the mention that set `role`.
    pub role_position: Option<usize>,
    /// Best windowed fuzzy score of the display name in the question.
    pub query_fuzzy: f64,
    /// Indices into `values` of the literals this column contains.
    pub holds: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueEnc {
    pub text: String,
    pub start: usize,
    pub end: usize,
    pub score: f64,
    pub numeric: bool,
    /// Column ids whose cells contain the value.
    pub columns: Vec<String>,
}

/// Per-question encoding consumed by action scorers: normalized question,
/// one entry per copyable column, literal and table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderOutput {
    pub query: Vec<String>,
    pub entities: Vec<(usize, usize, EntityLabel)>,
    pub columns: Vec<ColumnEnc>,
    pub values: Vec<ValueEnc>,
    pub table: String,
}

impl EncoderOutput {
    pub fn column(&self, id: &str) -> Option<&ColumnEnc> {
        self.columns.iter().find(|c| c.id == id)
    }

    pub fn value(&self, text: &str) -> Option<(usize, &ValueEnc)> {
        self.values.iter().enumerate().find(|(_, v)| v.text == text)
    }
}

/// Builds the encoder output. With `dropout_active` every column's role is
/// replaced by the absent role, as if no features were given.
pub fn encode(input: &EncodeInput, dropout_active: bool) -> EncoderOutput {
    let table = input.table;
    let mut values: Vec<ValueEnc> = Vec::new();
    let mut vals = input.values.clone();
    vals.sort_by(|a, b| (a.start, a.end).cmp(&(b.start, b.end)).then(b.score.total_cmp(&a.score)));
    for v in vals {
        if values.iter().any(|x| x.text == v.text) {
            continue;
        }
        let columns = (0..table.n_columns())
            .filter(|&c| table.column_cells(c).any(|cell| cell == v.text))
            .map(|c| table.column_ids[c].clone())
            .collect();
        values.push(ValueEnc {
            numeric: parse_decimal(v.text.trim()).is_some(),
            text: v.text,
            start: v.start,
            end: v.end,
            score: v.score,
            columns,
        });
    }
    let columns = (0..table.n_columns())
        .filter(|&c| {
            input
                .column_filter
                .as_ref()
                .is_none_or(|keep| keep.contains(&table.column_ids[c]))
        })
        .map(|c| {
            let id = &table.column_ids[c];
            let entry = if dropout_active { None } else { input.features.entry(id) };
            let display = &table.column_display_names[c];
            ColumnEnc {
                id: id.clone(),
                index: c,
                display_words: words(display),
                ty: table.column_types[c],
                role: entry.map(|e| e.role).unwrap_or(ColumnRole::Absent),
                role_position: entry.map(|e| e.position),
                query_fuzzy: window_fuzzy_score(input.tokens, display),
                holds: values
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| v.columns.contains(id))
                    .map(|(i, _)| i)
                    .collect(),
            }
        })
        .collect();
    EncoderOutput {
        query: input.tokens.iter().map(|t| normalize(t)).collect(),
        entities: input.entities.clone(),
        columns,
        values,
        table: TABLE_ALIAS.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ColumnSpec, TypedSpan};

    fn table() -> TableData {
        TableData::new(
            "t",
            "t",
            vec![
                ColumnSpec { id: "c1".into(), display: "year".into(), ty: ColumnType::Number },
                ColumnSpec { id: "c2".into(), display: "album".into(), ty: ColumnType::String },
            ],
            vec![vec!["1982".into(), "Thriller".into()], vec!["1987".into(), "Bad".into()]],
        )
        .unwrap()
    }

    #[test]
    fn dropout_equals_absent_features() {
        let t = table();
        let q: Vec<String> = ["which", "album", "was", "first"].iter().map(|s| s.to_string()).collect();
        let gold = [TypedSpan { start: 1, end: 2, label: EntityLabel::SelectColumn, link_target: Some("c2".into()) }];
        let mut input = EncodeInput {
            tokens: &q,
            table: &t,
            entities: vec![],
            values: vec![],
            features: ColumnTypeFeature::from_gold(&t, &gold),
            column_filter: None,
        };
        let dropped = encode(&input, true);
        assert_eq!(encode(&input, false).columns[1].role, ColumnRole::Select);
        input.features = ColumnTypeFeature::default();
        assert_eq!(dropped, encode(&input, false));
        assert!(dropped.values.is_empty());
    }

    #[test]
    fn values_know_their_columns() {
        let t = table();
        let q: Vec<String> = ["when", "was", "Thriller"].iter().map(|s| s.to_string()).collect();
        let input = EncodeInput {
            tokens: &q,
            table: &t,
            entities: vec![],
            values: vec![ValueMention { text: "Thriller".into(), start: 2, end: 3, score: 0.9 }],
            features: ColumnTypeFeature::default(),
            column_filter: Some(["c2".to_string()].into()),
        };
        let e = encode(&input, false);
        assert_eq!(e.columns.len(), 1);
        assert_eq!(e.columns[0].holds, vec![0]);
        assert_eq!(e.values[0].columns, vec!["c2".to_string()]);
    }
}
