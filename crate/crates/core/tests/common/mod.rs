//! Random single-table queries in the supported subset, run both through the
//! in-memory executor and SQLite.
//!
//! Generated queries avoid the spots where the two engines are allowed to
//! differ: bare columns next to aggregates, order ties (SQLite gets an
//! explicit rowid tiebreak that mirrors the stable sort), and text/number
//! comparisons.

#![allow(dead_code)]

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rusqlite::types::Value;
use rusqlite::Connection;

use text2sql::data::{ColumnSpec, ColumnType, TableData};
use text2sql::sql::{execute, parse_sql, Datum};

const WORDS: &[&str] = &["alpha", "beta", "Gamma", "delta", "x y", "it's", "Zulu", "beta "];

#[derive(Debug, Clone)]
pub struct Case {
    pub table: TableData,
    pub sql: String,
    /// Same query with ordering tiebreaks spelled out for SQLite.
    pub reference_sql: String,
    pub ordered: bool,
}

pub fn random_table(rng: &mut ChaCha8Rng) -> TableData {
    let n_cols = rng.random_range(2..=5);
    let mut cols = Vec::new();
    for i in 0..n_cols {
        let ty = if i == 0 || rng.random_bool(0.5) { ColumnType::Number } else { ColumnType::String };
        cols.push(ColumnSpec { id: format!("c{}", i + 1), display: format!("col {}", i + 1), ty });
    }
    if cols.iter().all(|c| c.ty == ColumnType::Number) {
        cols[n_cols - 1].ty = ColumnType::String;
    }
    let n_rows = if rng.random_bool(0.05) { 0 } else { rng.random_range(1..=12) };
    let rows = (0..n_rows)
        .map(|_| {
            cols.iter()
                .map(|c| {
                    if rng.random_bool(0.1) {
                        return String::new();
                    }
                    match c.ty {
                        ColumnType::Number if rng.random_bool(0.2) => format!("{}.5", rng.random_range(-3..10)),
                        ColumnType::Number => rng.random_range(-3..15).to_string(),
                        _ => WORDS.choose(rng).unwrap().to_string(),
                    }
                })
                .collect()
        })
        .collect();
    TableData::new("t", "t", cols, rows).unwrap()
}

fn quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', "''"))
}

struct Gen<'a> {
    table: &'a TableData,
    rng: &'a mut ChaCha8Rng,
}

impl Gen<'_> {
    fn cols(&self, ty: Option<ColumnType>) -> Vec<String> {
        self.table
            .column_ids
            .iter()
            .zip(&self.table.column_types)
            .filter(|(_, t)| ty.is_none_or(|ty| **t == ty))
            .map(|(c, _)| c.clone())
            .collect()
    }

    fn any_col(&mut self) -> String {
        self.cols(None).choose(self.rng).unwrap().clone()
    }

    fn ty(&self, col: &str) -> ColumnType {
        self.table.column_types[self.table.column_index(col).unwrap()]
    }

    fn literal(&mut self, ty: ColumnType) -> String {
        match ty {
            ColumnType::Number if self.rng.random_bool(0.2) => format!("{}.5", self.rng.random_range(-3..10)),
            ColumnType::Number => self.rng.random_range(-3..15).to_string(),
            _ => quote(WORDS.choose(self.rng).unwrap()),
        }
    }

    fn agg_item(&mut self) -> String {
        let nums = self.cols(Some(ColumnType::Number));
        match self.rng.random_range(0..4) {
            0 => "count ( * )".into(),
            1 => format!("count ( {} )", self.any_col()),
            2 => format!("{} ( {} )", ["sum", "avg"].choose(self.rng).unwrap(), nums.choose(self.rng).unwrap()),
            _ => format!("{} ( {} )", ["min", "max"].choose(self.rng).unwrap(), self.any_col()),
        }
    }

    fn cond(&mut self, depth: usize) -> String {
        let col = self.any_col();
        let ty = self.ty(&col);
        let r = self.rng.random_range(0..10);
        if depth == 0 && r >= 8 {
            let sub_where = if self.rng.random_bool(0.5) { format!(" where {}", self.cond(1)) } else { String::new() };
            if ty == ColumnType::Number && self.rng.random_bool(0.6) {
                let op = ["=", "!=", "<", "<=", ">", ">="].choose(self.rng).unwrap();
                let nums = self.cols(Some(ColumnType::Number));
                let agg = if self.rng.random_bool(0.2) {
                    "count ( * )".to_string()
                } else {
                    format!("{} ( {} )", ["max", "min", "avg", "sum"].choose(self.rng).unwrap(), nums.choose(self.rng).unwrap())
                };
                return format!("{col} {op} ( select {agg} from w{sub_where} )");
            }
            let same = self.cols(Some(ty));
            let inner = same.choose(self.rng).unwrap();
            let op = ["in", "not in"].choose(self.rng).unwrap();
            return format!("{col} {op} ( select {inner} from w{sub_where} )");
        }
        if r >= 6 {
            let n = self.rng.random_range(1..=3);
            let vals: Vec<String> = (0..n).map(|_| self.literal(ty)).collect();
            let op = ["in", "not in"].choose(self.rng).unwrap();
            return format!("{col} {op} ( {} )", vals.join(" , "));
        }
        let op = ["=", "!=", "<", "<=", ">", ">="].choose(self.rng).unwrap();
        format!("{col} {op} {}", self.literal(ty))
    }

    fn where_clause(&mut self) -> String {
        match self.rng.random_range(0..4) {
            0 => String::new(),
            3 => format!(" where {} and {}", self.cond(0), self.cond(0)),
            _ => format!(" where {}", self.cond(0)),
        }
    }

    fn case(&mut self) -> (String, String, bool) {
        let dir = *["asc", "desc"].choose(self.rng).unwrap();
        let limit = if self.rng.random_bool(0.5) { format!(" limit {}", self.rng.random_range(1..4)) } else { String::new() };
        match self.rng.random_range(0..3) {
            0 => {
                let items = if self.rng.random_bool(0.15) {
                    "*".to_string()
                } else {
                    let n = self.rng.random_range(1..=2);
                    (0..n).map(|_| self.any_col()).collect::<Vec<_>>().join(" , ")
                };
                let w = self.where_clause();
                if self.rng.random_bool(0.5) {
                    let key = self.any_col();
                    let sql = format!("select {items} from w{w} order by {key} {dir}{limit}");
                    let reference = format!("select {items} from w{w} order by {key} {dir} , rowid asc{limit}");
                    (sql, reference, true)
                } else {
                    let sql = format!("select {items} from w{w}");
                    (sql.clone(), sql, false)
                }
            }
            1 => {
                let n = self.rng.random_range(1..=2);
                let items: Vec<String> = (0..n).map(|_| self.agg_item()).collect();
                let sql = format!("select {} from w{}", items.join(" , "), self.where_clause());
                (sql.clone(), sql, false)
            }
            _ => {
                let g = self.any_col();
                let mut items = vec![g.clone()];
                if self.rng.random_bool(0.7) {
                    items.push(self.agg_item());
                }
                let w = self.where_clause();
                let base = format!("select {} from w{w} group by {g}", items.join(" , "));
                if self.rng.random_bool(0.6) {
                    let key = if self.rng.random_bool(0.7) { self.agg_item() } else { g.clone() };
                    let sql = format!("{base} order by {key} {dir}{limit}");
                    let reference = format!("{base} order by {key} {dir} , min ( rowid ) asc{limit}");
                    (sql, reference, true)
                } else {
                    (base.clone(), base, false)
                }
            }
        }
    }
}

pub fn random_case(rng: &mut ChaCha8Rng) -> Case {
    let table = random_table(rng);
    let (sql, reference_sql, ordered) = Gen { table: &table, rng }.case();
    Case { table, sql, reference_sql, ordered }
}

fn to_datum(v: Value) -> Datum {
    match v {
        Value::Null => Datum::Null,
        Value::Integer(i) => Datum::Number(i as f64),
        Value::Real(f) => Datum::Number(f),
        Value::Text(s) => Datum::Text(s),
        Value::Blob(_) => panic!("blob in result"),
    }
}

pub fn sqlite_rows(table: &TableData, sql: &str) -> rusqlite::Result<Vec<Vec<Datum>>> {
    let conn = Connection::open_in_memory()?;
    let defs: Vec<String> = table
        .column_ids
        .iter()
        .zip(&table.column_types)
        .map(|(c, t)| format!("{c} {}", if *t == ColumnType::Number { "REAL" } else { "TEXT" }))
        .collect();
    conn.execute(&format!("create table w ({})", defs.join(", ")), [])?;
    let marks = vec!["?"; table.n_columns()].join(", ");
    let mut insert = conn.prepare(&format!("insert into w values ({marks})"))?;
    for row in &table.rows {
        let vals: Vec<Value> = row
            .iter()
            .map(|c| match &c.value {
                text2sql::data::CellValue::Null => Value::Null,
                text2sql::data::CellValue::Number(v) => Value::Real(*v),
                text2sql::data::CellValue::Text(s) => Value::Text(s.clone()),
            })
            .collect();
        insert.execute(rusqlite::params_from_iter(vals))?;
    }
    let mut stmt = conn.prepare(sql)?;
    let n = stmt.column_count();
    let rows = stmt.query_map([], |r| (0..n).map(|i| r.get::<_, Value>(i).map(to_datum)).collect())?;
    rows.collect()
}

fn datum_eq(a: &Datum, b: &Datum) -> bool {
    match (a, b) {
        (Datum::Number(x), Datum::Number(y)) => (x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1.0),
        _ => a == b,
    }
}

fn row_key(r: &[Datum]) -> String {
    r.iter()
        .map(|d| match d {
            Datum::Null => "n".to_string(),
            Datum::Number(v) => format!("d{v:.6}"),
            Datum::Text(s) => format!("t{s}"),
        })
        .collect::<Vec<_>>()
        .join("\u{1}")
}

/// Row-by-row comparison; unordered results compare as multisets.
pub fn rows_agree(ours: &[Vec<Datum>], reference: &[Vec<Datum>], ordered: bool) -> bool {
    if ours.len() != reference.len() {
        return false;
    }
    let (mut a, mut b) = (ours.to_vec(), reference.to_vec());
    if !ordered {
        a.sort_by_key(|r| row_key(r));
        b.sort_by_key(|r| row_key(r));
    }
    a.iter().zip(&b).all(|(x, y)| x.len() == y.len() && x.iter().zip(y).all(|(p, q)| datum_eq(p, q)))
}

/// Runs one case through both engines; `Err` describes the disagreement.
pub fn differential(case: &Case) -> Result<(), String> {
    let tree = parse_sql(&case.sql).map_err(|e| format!("parse {}: {e}", case.sql))?;
    let ours = execute(&tree, &case.table).map_err(|e| format!("execute {}: {e}", case.sql))?;
    let reference = sqlite_rows(&case.table, &case.reference_sql).map_err(|e| format!("sqlite {}: {e}", case.reference_sql))?;
    if rows_agree(&ours.rows, &reference, case.ordered) {
        Ok(())
    } else {
        Err(format!("{}\n  ours:   {:?}\n  sqlite: {:?}", case.sql, ours.rows, reference))
    }
}

/// One random where-condition over `table` (may contain a subquery).
pub fn random_cond(rng: &mut ChaCha8Rng, table: &TableData) -> String {
    Gen { table, rng }.cond(0)
}
