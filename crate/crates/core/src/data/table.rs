use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DataError;
use crate::sql::ast::ColRef;
use crate::text::parse_decimal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnType {
    Number,
    String,
    Date,
}

impl ColumnType {
    pub fn name(self) -> &'static str {
        match self {
            ColumnType::Number => "number",
            ColumnType::String => "string",
            ColumnType::Date => "date",
        }
    }
}

/// Typed value of a cell. Empty cells are null.
#[derive(Debug, Clone, PartialEq)]
pub enum CellValue {
    Null,
    Number(f64),
    Text(String),
}

/// A cell keeps its exact source string next to the coerced value.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub raw: String,
    pub value: CellValue,
}

impl Cell {
    pub fn coerce(raw: &str, ty: ColumnType) -> Option<Cell> {
        let value = if raw.trim().is_empty() {
            CellValue::Null
        } else {
            match ty {
                ColumnType::Number => CellValue::Number(parse_decimal(raw.trim())?),
                ColumnType::String | ColumnType::Date => CellValue::Text(raw.to_string()),
            }
        };
        Some(Cell {
            raw: raw.to_string(),
            value,
        })
    }

    pub fn is_null(&self) -> bool {
        matches!(self.value, CellValue::Null)
    }
}

/// A single-table database.
#[derive(Debug, Clone, PartialEq)]
pub struct TableData {
    pub table_id: String,
    pub table_name: String,
    pub column_ids: Vec<String>,
    pub column_display_names: Vec<String>,
    pub column_types: Vec<ColumnType>,
    pub rows: Vec<Vec<Cell>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub id: String,
    pub display: String,
    #[serde(rename = "type")]
    pub ty: ColumnType,
}

/// JSON table file layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableFile {
    pub name: String,
    pub columns: Vec<ColumnSpec>,
    pub rows: Vec<Vec<String>>,
}

impl TableData {
    /// Builds a table, enforcing row arity, id uniqueness and type coercion.
    pub fn new(
        table_id: impl Into<String>,
        table_name: impl Into<String>,
        columns: Vec<ColumnSpec>,
        raw_rows: Vec<Vec<String>>,
    ) -> Result<TableData, DataError> {
        let mut seen = HashSet::new();
        for c in &columns {
            if !ColRef::is_valid_id(&c.id) {
                return Err(DataError::InvalidColumnId(c.id.clone()));
            }
            if !seen.insert(c.id.clone()) {
                return Err(DataError::DuplicateColumn(c.id.clone()));
            }
        }
        let mut rows = Vec::with_capacity(raw_rows.len());
        for (r, raw) in raw_rows.into_iter().enumerate() {
            if raw.len() != columns.len() {
                return Err(DataError::RaggedRow(r));
            }
            let row = raw
                .iter()
                .zip(&columns)
                .enumerate()
                .map(|(c, (cell, spec))| {
                    Cell::coerce(cell, spec.ty)
                        .ok_or(DataError::TypeCoercionFailure { row: r, column: c })
                })
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        Ok(TableData {
            table_id: table_id.into(),
            table_name: table_name.into(),
            column_ids: columns.iter().map(|c| c.id.clone()).collect(),
            column_display_names: columns.iter().map(|c| c.display.clone()).collect(),
            column_types: columns.iter().map(|c| c.ty).collect(),
            rows,
        })
    }

    pub fn column_index(&self, id: &str) -> Option<usize> {
        self.column_ids.iter().position(|c| c == id)
    }

    pub fn n_columns(&self) -> usize {
        self.column_ids.len()
    }

    /// Raw cell strings of one column, in row order.
    pub fn column_cells(&self, col: usize) -> impl Iterator<Item = &str> {
        self.rows.iter().map(move |r| r[col].raw.as_str())
    }

    /// Distinct non-empty cell strings in row-major first-seen order.
    pub fn distinct_cells(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for row in &self.rows {
            for cell in row {
                if !cell.raw.trim().is_empty() && seen.insert(cell.raw.as_str()) {
                    out.push(cell.raw.as_str());
                }
            }
        }
        out
    }

    pub fn contains_cell(&self, s: &str) -> bool {
        self.rows.iter().any(|r| r.iter().any(|c| c.raw == s))
    }

    /// Column ids whose cells contain `s` exactly.
    pub fn columns_containing(&self, s: &str) -> Vec<&str> {
        (0..self.n_columns())
            .filter(|&c| self.rows.iter().any(|r| r[c].raw == s))
            .map(|c| self.column_ids[c].as_str())
            .collect()
    }

    pub fn to_file(&self) -> TableFile {
        TableFile {
            name: self.table_name.clone(),
            columns: self
                .column_ids
                .iter()
                .zip(&self.column_display_names)
                .zip(&self.column_types)
                .map(|((id, display), ty)| ColumnSpec {
                    id: id.clone(),
                    display: display.clone(),
                    ty: *ty,
                })
                .collect(),
            rows: self
                .rows
                .iter()
                .map(|r| r.iter().map(|c| c.raw.clone()).collect())
                .collect(),
        }
    }

    pub fn from_file(table_id: &str, file: TableFile) -> Result<TableData, DataError> {
        TableData::new(table_id, file.name, file.columns, file.rows)
    }
}

/// Loads a table from `<id>.json`, or from `<id>.csv` with a
/// `<id>.types.json` sidecar holding `[{id, display, type}]`.
///
/// For CSV input the header row gives display names; when the sidecar is
/// missing every column is typed `string` and ids are `c1..cn`.
pub fn load_table(path: &Path) -> Result<TableData, DataError> {
    let table_id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or_default()
        .to_string();
    if !path.exists() {
        return Err(DataError::MissingFile(path.to_path_buf()));
    }
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => load_csv(path, &table_id),
        _ => {
            let text = fs::read_to_string(path)?;
            let file: TableFile =
                serde_json::from_str(&text).map_err(|e| DataError::SchemaViolation {
                    line: e.line(),
                    field: e.to_string(),
                })?;
            TableData::from_file(&table_id, file)
        }
    }
}

fn load_csv(path: &Path, table_id: &str) -> Result<TableData, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| DataError::Csv(e.to_string()))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| DataError::Csv(e.to_string()))?
        .iter()
        .map(String::from)
        .collect();
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| DataError::Csv(e.to_string()))?;
        rows.push(rec.iter().map(String::from).collect::<Vec<_>>());
    }
    let sidecar = path.with_extension("types.json");
    let columns: Vec<ColumnSpec> = if sidecar.exists() {
        serde_json::from_str(&fs::read_to_string(&sidecar)?).map_err(|e| {
            DataError::SchemaViolation {
                line: e.line(),
                field: e.to_string(),
            }
        })?
    } else {
        headers
            .iter()
            .enumerate()
            .map(|(i, h)| ColumnSpec {
                id: format!("c{}", i + 1),
                display: h.clone(),
                ty: ColumnType::String,
            })
            .collect()
    };
    TableData::new(table_id, table_id, columns, rows)
}

/// Finds `<dir>/<table_id>.json` or `<dir>/<table_id>.csv`.
pub fn load_table_from_dir(dir: &Path, table_id: &str) -> Result<TableData, DataError> {
    let json = dir.join(format!("{table_id}.json"));
    if json.exists() {
        return load_table(&json);
    }
    load_table(&dir.join(format!("{table_id}.csv")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn spec(id: &str, display: &str, ty: ColumnType) -> ColumnSpec {
        ColumnSpec {
            id: id.into(),
            display: display.into(),
            ty,
        }
    }

    #[test]
    fn csv_with_header_loads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t1.csv");
        let mut f = fs::File::create(&path).unwrap();
        writeln!(f, "name,points\nann,3\nbob,5\ncid,1").unwrap();
        fs::write(
            dir.path().join("t1.types.json"),
            r#"[{"id":"c1","display":"name","type":"string"},{"id":"c2","display":"points","type":"number"}]"#,
        )
        .unwrap();
        let t = load_table(&path).unwrap();
        assert_eq!(t.rows.len(), 3);
        assert_eq!(t.rows[1][1].value, CellValue::Number(5.0));
    }

    #[test]
    fn ragged_row_rejected() {
        let r = TableData::new(
            "t",
            "t",
            vec![spec("c1", "a", ColumnType::String), spec("c2", "b", ColumnType::String)],
            vec![vec!["x".into(), "y".into()], vec!["z".into()]],
        );
        assert_eq!(r.unwrap_err(), DataError::RaggedRow(1));
    }

    #[test]
    fn ragged_csv_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t2.csv");
        fs::write(&path, "a,b\n1,2\n3\n").unwrap();
        assert_eq!(load_table(&path).unwrap_err(), DataError::RaggedRow(1));
    }

    #[test]
    fn number_coercion_failure() {
        let r = TableData::new(
            "t",
            "t",
            vec![spec("c1", "a", ColumnType::String), spec("c2", "n", ColumnType::Number)],
            vec![vec!["x".into(), "1".into()], vec!["y".into(), "abc".into()]],
        );
        assert_eq!(
            r.unwrap_err(),
            DataError::TypeCoercionFailure { row: 1, column: 1 }
        );
    }

    #[test]
    fn duplicate_column_ids_rejected() {
        let r = TableData::new(
            "t",
            "t",
            vec![spec("c1", "a", ColumnType::String), spec("c1", "b", ColumnType::String)],
            vec![],
        );
        assert!(matches!(r, Err(DataError::DuplicateColumn(_))));
    }

    #[test]
    fn json_round_trip() {
        let t = TableData::new(
            "t9",
            "players",
            vec![spec("c1", "name", ColumnType::String), spec("c2", "pts", ColumnType::Number)],
            vec![vec!["LeBron James".into(), "30".into()], vec!["Kevin Love".into(), "".into()]],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t9.json");
        fs::write(&p, serde_json::to_string(&t.to_file()).unwrap()).unwrap();
        assert_eq!(load_table(&p).unwrap(), t);
        assert!(t.rows[1][1].is_null());
    }
}
