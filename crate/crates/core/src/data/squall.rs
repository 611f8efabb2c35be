//! Conversion from the raw SQUALL release layout (one JSON array of examples
//! plus per-table JSON files) into the JSON-lines dataset and table formats.
//!
//! Raw examples carry `nt`, `tbl`, `nl`, `sql` as `[kind, text, ...]` triples,
//! `align` as `[[nl indices], [sql indices]]` and the answer in `tgt`. Test
//! examples have no `sql`/`align`; they convert with empty token lists.

use serde_json::Value;

use super::{Alignment, ColumnSpec, ColumnType, DataError, DatasetRecord, TableData};
use crate::sql::{ColRef, SqlToken, TokenKind};

fn bad(line: usize, field: &str) -> DataError {
    DataError::SchemaViolation {
        line,
        field: field.to_string(),
    }
}

/// Converts the raw example array. Error line numbers are 1-based example
/// positions within the array.
pub fn convert_examples(json: &str) -> Result<Vec<DatasetRecord>, DataError> {
    let v: Value = serde_json::from_str(json).map_err(|e| bad(e.line(), "<json>"))?;
    let arr = v.as_array().ok_or_else(|| bad(1, "<array>"))?;
    arr.iter()
        .enumerate()
        .map(|(i, ex)| convert_example(ex, i + 1))
        .collect()
}

fn convert_example(ex: &Value, n: usize) -> Result<DatasetRecord, DataError> {
    let s = |k: &str| ex.get(k).and_then(Value::as_str).map(String::from).ok_or_else(|| bad(n, k));
    let record_id = s("nt")?;
    let table_id = s("tbl")?;
    let query_tokens: Vec<String> = ex
        .get("nl")
        .and_then(Value::as_array)
        .ok_or_else(|| bad(n, "nl"))?
        .iter()
        .map(|t| t.as_str().map(String::from).ok_or_else(|| bad(n, "nl")))
        .collect::<Result<_, _>>()?;
    if query_tokens.is_empty() {
        return Err(bad(n, "nl"));
    }

    let mut gold_sql_tokens = Vec::new();
    if let Some(sql) = ex.get("sql").and_then(Value::as_array) {
        for t in sql {
            let t = t.as_array().filter(|t| t.len() >= 2).ok_or_else(|| bad(n, "sql"))?;
            let kind = match t[0].as_str() {
                Some("Keyword") => TokenKind::Keyword,
                Some("Column") => TokenKind::Column,
                Some("Literal") | Some("Literal.String") | Some("Literal.Number") => {
                    TokenKind::Literal
                }
                _ => return Err(bad(n, "sql")),
            };
            let text = t[1].as_str().ok_or_else(|| bad(n, "sql"))?;
            gold_sql_tokens.push(SqlToken::new(kind, text));
        }
    }

    let mut alignments = Vec::new();
    if let Some(align) = ex.get("align").and_then(Value::as_array) {
        for a in align {
            let idx = |v: &Value| -> Option<Vec<usize>> {
                v.as_array()?.iter().map(|x| x.as_u64().map(|u| u as usize)).collect()
            };
            let pair = a.as_array().filter(|p| p.len() == 2).ok_or_else(|| bad(n, "align"))?;
            let nl = idx(&pair[0]).ok_or_else(|| bad(n, "align"))?;
            let sql = idx(&pair[1]).ok_or_else(|| bad(n, "align"))?;
            let (Some(&lo), Some(&hi)) = (nl.iter().min(), nl.iter().max()) else {
                continue;
            };
            for sql_index in sql {
                if hi >= query_tokens.len() || sql_index >= gold_sql_tokens.len() {
                    return Err(bad(n, "align"));
                }
                alignments.push(Alignment {
                    start: lo,
                    end: hi + 1,
                    sql_index,
                });
            }
        }
    }

    let gold_answer = match ex.get("tgt") {
        Some(Value::String(t)) => vec![t.clone()],
        Some(Value::Array(a)) => a
            .iter()
            .map(|x| x.as_str().map(String::from).ok_or_else(|| bad(n, "tgt")))
            .collect::<Result<_, _>>()?,
        _ => Vec::new(),
    };

    Ok(DatasetRecord {
        record_id,
        table_id,
        query_tokens,
        gold_sql_tokens,
        alignments,
        gold_answer,
    })
}

/// Converts one raw table file. Each content group holds a base column and
/// its typed variants (`c1`, `c1_number`, ...); list-valued variants and the
/// bookkeeping `id`/`agg` columns are dropped.
pub fn convert_table(table_id: &str, json: &str) -> Result<TableData, DataError> {
    let v: Value = serde_json::from_str(json).map_err(|e| bad(e.line(), "<json>"))?;
    let headers = v.get("headers").and_then(Value::as_array).ok_or_else(|| bad(1, "headers"))?;
    let contents = v.get("contents").and_then(Value::as_array).ok_or_else(|| bad(1, "contents"))?;
    let mut columns = Vec::new();
    let mut data: Vec<Vec<String>> = Vec::new();
    for (g, group) in contents.iter().enumerate() {
        let header = headers.get(g).and_then(Value::as_str).unwrap_or("");
        for variant in group.as_array().ok_or_else(|| bad(1, "contents"))? {
            let col = variant.get("col").and_then(Value::as_str).unwrap_or("");
            if !ColRef::is_valid_id(col) {
                continue;
            }
            let ty = match variant.get("type").and_then(Value::as_str) {
                Some("INTEGER") | Some("REAL") => ColumnType::Number,
                Some("TEXT") => ColumnType::String,
                _ => continue,
            };
            let Some(values) = variant.get("data").and_then(Value::as_array) else {
                continue;
            };
            let cells: Option<Vec<String>> = values
                .iter()
                .map(|x| match x {
                    Value::Null => Some(String::new()),
                    Value::String(s) => Some(s.clone()),
                    Value::Number(num) => Some(num.to_string()),
                    _ => None,
                })
                .collect();
            let Some(cells) = cells else { continue };
            let display = match col.split_once('_') {
                Some((_, suffix)) => format!("{header} {}", suffix.replace('_', " ")),
                None => header.to_string(),
            };
            columns.push(ColumnSpec {
                id: col.to_string(),
                display,
                ty,
            });
            data.push(cells);
        }
    }
    let n_rows = data.iter().map(Vec::len).max().unwrap_or(0);
    let rows = (0..n_rows)
        .map(|r| data.iter().map(|c| c.get(r).cloned().unwrap_or_default()).collect())
        .collect();
    TableData::new(table_id, table_id, columns, rows)
}
