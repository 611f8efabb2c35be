use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::DataError;
use crate::sql::{SqlToken, TokenKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other}")),
        }
    }
}

/// Query token range `[start, end)` aligned to one SQL token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Alignment {
    pub start: usize,
    pub end: usize,
    pub sql_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub record_id: String,
    pub table_id: String,
    pub query_tokens: Vec<String>,
    pub gold_sql_tokens: Vec<SqlToken>,
    pub alignments: Vec<Alignment>,
    pub gold_answer: Vec<String>,
}

impl DatasetRecord {
    /// Checks the record invariants for records built in memory.
    pub fn validate(&self) -> Result<(), DataError> {
        let oob = |detail: String| DataError::IndexOutOfRange {
            record: self.record_id.clone(),
            detail,
        };
        if self.query_tokens.is_empty() {
            return Err(oob("empty query".into()));
        }
        for a in &self.alignments {
            if a.start >= a.end || a.end > self.query_tokens.len() {
                return Err(oob(format!("query range [{}, {})", a.start, a.end)));
            }
            if a.sql_index >= self.gold_sql_tokens.len() {
                return Err(oob(format!("sql index {}", a.sql_index)));
            }
        }
        Ok(())
    }

    pub fn question(&self) -> String {
        self.query_tokens.join(" ")
    }

    /// Dataset file line for this record.
    pub fn to_json(&self) -> Value {
        let kind = |k: TokenKind| match k {
            TokenKind::Keyword => "Keyword",
            TokenKind::Column => "Column",
            TokenKind::Literal => "Literal",
        };
        json!({
            "id": self.record_id,
            "tbl": self.table_id,
            "question": self.query_tokens,
            "sql": self.gold_sql_tokens.iter().map(|t| json!([kind(t.kind), t.text])).collect::<Vec<_>>(),
            "align": self.alignments.iter().map(|a| json!([[a.start, a.end], a.sql_index])).collect::<Vec<_>>(),
            "answer": self.gold_answer,
        })
    }

    /// Parses one dataset line. `line` is the 1-based line number used in
    /// errors.
    pub fn from_json(v: &Value, line: usize) -> Result<DatasetRecord, DataError> {
        let bad = |field: &str| DataError::SchemaViolation {
            line,
            field: field.to_string(),
        };
        let obj = v.as_object().ok_or_else(|| bad("<object>"))?;
        let string = |key: &str| -> Result<String, DataError> {
            obj.get(key)
                .and_then(Value::as_str)
                .map(String::from)
                .ok_or_else(|| bad(key))
        };
        let strings = |key: &str| -> Result<Vec<String>, DataError> {
            obj.get(key)
                .and_then(Value::as_array)
                .ok_or_else(|| bad(key))?
                .iter()
                .map(|x| x.as_str().map(String::from).ok_or_else(|| bad(key)))
                .collect()
        };
        let record_id = string("id")?;
        let table_id = string("tbl")?;
        let query_tokens = strings("question")?;
        if query_tokens.is_empty() {
            return Err(bad("question"));
        }
        let gold_answer = strings("answer")?;

        let sql = obj.get("sql").and_then(Value::as_array).ok_or_else(|| bad("sql"))?;
        let mut gold_sql_tokens = Vec::with_capacity(sql.len());
        for t in sql {
            let pair = t.as_array().filter(|p| p.len() == 2).ok_or_else(|| bad("sql"))?;
            let kind = match pair[0].as_str() {
                Some("Keyword") => TokenKind::Keyword,
                Some("Column") => TokenKind::Column,
                Some("Literal") => TokenKind::Literal,
                _ => return Err(bad("sql")),
            };
            let text = pair[1].as_str().ok_or_else(|| bad("sql"))?;
            gold_sql_tokens.push(SqlToken::new(kind, text));
        }

        let align = obj.get("align").and_then(Value::as_array).ok_or_else(|| bad("align"))?;
        let mut alignments = Vec::with_capacity(align.len());
        for a in align {
            let parse = || -> Option<Alignment> {
                let pair = a.as_array().filter(|p| p.len() == 2)?;
                let range = pair[0].as_array().filter(|r| r.len() == 2)?;
                Some(Alignment {
                    start: range[0].as_u64()? as usize,
                    end: range[1].as_u64()? as usize,
                    sql_index: pair[1].as_u64()? as usize,
                })
            };
            let al = parse().ok_or_else(|| bad("align"))?;
            if al.start >= al.end
                || al.end > query_tokens.len()
                || al.sql_index >= gold_sql_tokens.len()
            {
                return Err(bad("align"));
            }
            alignments.push(al);
        }

        Ok(DatasetRecord {
            record_id,
            table_id,
            query_tokens,
            gold_sql_tokens,
            alignments,
            gold_answer,
        })
    }
}

/// Loads a JSON-lines dataset. `path` is either the file itself or a
/// directory holding `<split>.jsonl`. Blank lines are ignored; any malformed
/// line fails the whole load.
pub fn load_dataset(path: &Path, split: Split) -> Result<Vec<DatasetRecord>, DataError> {
    let file = if path.is_dir() {
        path.join(format!("{split}.jsonl"))
    } else {
        path.to_path_buf()
    };
    if !file.exists() {
        return Err(DataError::MissingFile(file));
    }
    let reader = BufReader::new(fs::File::open(&file)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(&line).map_err(|_| DataError::SchemaViolation {
            line: i + 1,
            field: "<json>".into(),
        })?;
        out.push(DatasetRecord::from_json(&v, i + 1)?);
    }
    Ok(out)
}

pub fn write_dataset(path: &Path, records: &[DatasetRecord]) -> Result<(), DataError> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    for r in records {
        writeln!(f, "{}", r.to_json())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINE: &str = r#"{"id":"r1","tbl":"t1","question":["what","album","won"],"sql":[["Keyword","select"],["Column","c2"],["Keyword","from"],["Keyword","w"]],"align":[[[1,2],1]],"answer":["Thriller"]}"#;

    #[test]
    fn parses_and_round_trips() {
        let v: Value = serde_json::from_str(LINE).unwrap();
        let r = DatasetRecord::from_json(&v, 1).unwrap();
        assert_eq!(r.alignments, vec![Alignment { start: 1, end: 2, sql_index: 1 }]);
        assert_eq!(DatasetRecord::from_json(&r.to_json(), 1).unwrap(), r);
        r.validate().unwrap();
    }

    #[test]
    fn empty_file_gives_no_records() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("train.jsonl");
        fs::write(&p, "").unwrap();
        assert!(load_dataset(dir.path(), Split::Train).unwrap().is_empty());
    }

    #[test]
    fn alignment_at_query_length_is_schema_violation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        let bad = LINE.replace("[[1,2],1]", "[[3,4],1]");
        fs::write(&p, format!("{LINE}\n{bad}\n")).unwrap();
        assert_eq!(
            load_dataset(&p, Split::Dev).unwrap_err(),
            DataError::SchemaViolation { line: 2, field: "align".into() }
        );
    }

    #[test]
    fn missing_field_and_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        fs::write(&p, LINE.replace("\"tbl\"", "\"table\"")).unwrap();
        assert_eq!(
            load_dataset(&p, Split::Dev).unwrap_err(),
            DataError::SchemaViolation { line: 1, field: "tbl".into() }
        );
        assert!(matches!(
            load_dataset(&dir.path().join("nope.jsonl"), Split::Dev),
            Err(DataError::MissingFile(_))
        ));
    }
}
