use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::data::{
    derive_annotations, load_dataset, load_table_from_dir, squall, write_dataset, AnnotationIssue,
    DataError, DatasetRecord, Split, TableData, TypedSpan,
};
use crate::sql::{execute, parse_tokens, denotation_equal, ParseError, SqlTree};

/// A record with its parsed gold tree and derived spans.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub record: DatasetRecord,
    /// `None` when the record has no SQL or the SQL is outside the subset.
    pub tree: Option<SqlTree>,
    pub spans: Vec<TypedSpan>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PrepareStats {
    pub records: usize,
    pub parsed: usize,
    pub without_sql: usize,
    /// Unsupported construct or syntax error message to count.
    pub unsupported: BTreeMap<String, usize>,
    pub conflicting_alignments: usize,
    pub unlinked_spans: usize,
}

/// Examples of one split plus the tables they use.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub tables: BTreeMap<String, TableData>,
    pub examples: Vec<Example>,
    pub stats: PrepareStats,
}

impl Dataset {
    /// Parses and annotates records against already loaded tables.
    pub fn from_records(records: Vec<DatasetRecord>, tables: &BTreeMap<String, TableData>) -> Result<Dataset, PipelineError> {
        let mut ds = Dataset::default();
        for r in records {
            let table = tables
                .get(&r.table_id)
                .ok_or_else(|| PipelineError::Data(DataError::MissingFile(r.table_id.clone().into())))?;
            ds.tables.entry(r.table_id.clone()).or_insert_with(|| table.clone());
            ds.push(r)?;
        }
        Ok(ds)
    }

    /// Loads a split file and every table it references from `table_dir`.
    pub fn load(path: &Path, split: Split, table_dir: &Path) -> Result<Dataset, PipelineError> {
        let records = load_dataset(path, split)?;
        let mut ds = Dataset::default();
        for r in records {
            if !ds.tables.contains_key(&r.table_id) {
                let t = load_table_from_dir(table_dir, &r.table_id)?;
                ds.tables.insert(r.table_id.clone(), t);
            }
            ds.push(r)?;
        }
        Ok(ds)
    }

    fn push(&mut self, r: DatasetRecord) -> Result<(), PipelineError> {
        r.validate()?;
        self.stats.records += 1;
        let (tree, spans) = if r.gold_sql_tokens.is_empty() {
            self.stats.without_sql += 1;
            (None, Vec::new())
        } else {
            match parse_tokens(&r.gold_sql_tokens) {
                Ok(tree) => {
                    self.stats.parsed += 1;
                    let ann = derive_annotations(&r, &self.tables[&r.table_id], &tree)?;
                    for i in &ann.issues {
                        match i {
                            AnnotationIssue::ConflictingAlignment { .. } => self.stats.conflicting_alignments += 1,
                            AnnotationIssue::LiteralNotInTable { .. } | AnnotationIssue::ColumnNotInTable { .. } => {
                                self.stats.unlinked_spans += 1
                            }
                            AnnotationIssue::UnalignableToken { .. } => {}
                        }
                    }
                    (Some(tree), ann.spans)
                }
                Err(e) => {
                    let key = match e {
                        ParseError::Unsupported(what) => what,
                        ParseError::Syntax { .. } => "syntax error".into(),
                    };
                    *self.stats.unsupported.entry(key).or_default() += 1;
                    (None, Vec::new())
                }
            }
        };
        self.examples.push(Example { record: r, tree, spans });
        Ok(())
    }

    pub fn table(&self, ex: &Example) -> &TableData {
        &self.tables[&ex.record.table_id]
    }

    /// Examples with a parsed gold tree.
    pub fn supervised(&self) -> impl Iterator<Item = &Example> {
        self.examples.iter().filter(|e| e.tree.is_some())
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// First `n` examples, keeping only the tables they use.
    pub fn head(&self, n: usize) -> Dataset {
        let examples: Vec<Example> = self.examples.iter().take(n).cloned().collect();
        let tables = examples
            .iter()
            .map(|e| (e.record.table_id.clone(), self.table(e).clone()))
            .collect();
        Dataset { tables, examples, stats: self.stats.clone() }
    }
}

/// Gold SQL execution against the gold answers.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GoldExecution {
    pub in_subset: usize,
    pub matching: usize,
    /// Record id, gold SQL and what it produced (or the error).
    pub mismatches: Vec<(String, String, String)>,
}

impl GoldExecution {
    pub fn rate(&self) -> f64 {
        if self.in_subset == 0 {
            0.0
        } else {
            self.matching as f64 / self.in_subset as f64
        }
    }
}

pub fn check_gold_execution(ds: &Dataset) -> GoldExecution {
    let mut g = GoldExecution::default();
    for ex in ds.supervised() {
        let tree = ex.tree.as_ref().unwrap();
        g.in_subset += 1;
        match execute(tree, ds.table(ex)) {
            Ok(d) if denotation_equal(&d, &ex.record.gold_answer) => g.matching += 1,
            Ok(d) => g.mismatches.push((ex.record.record_id.clone(), tree.to_sql(), d.flatten().join(" | "))),
            Err(e) => g.mismatches.push((ex.record.record_id.clone(), tree.to_sql(), e.to_string())),
        }
    }
    g
}

/// Counts written by [`ingest_squall`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    /// All annotated training records, before any dev fold is split off.
    pub train_total: usize,
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub tables: usize,
}

fn first_existing(dir: &Path, names: &[&str]) -> Option<std::path::PathBuf> {
    names.iter().map(|n| dir.join(n)).find(|p| p.exists())
}

/// Converts a raw SQUALL checkout into the dataset layout under `out`:
/// `train.jsonl`, `dev.jsonl`, `test.jsonl` and `tables/<id>.json`.
///
/// Expects `squall.json` (annotated training examples), optionally
/// `wtq-test.json` and a `dev-0.ids` fold file, either at the top level or
/// under `data/`, and raw tables under `tables/json/` or `tables/`.
pub fn ingest_squall(dir: &Path, out: &Path) -> Result<IngestReport, PipelineError> {
    let train_file = first_existing(dir, &["squall.json", "data/squall.json"])
        .ok_or_else(|| PipelineError::Data(DataError::MissingFile(dir.join("data/squall.json"))))?;
    let all = squall::convert_examples(&fs::read_to_string(&train_file).map_err(DataError::from)?)?;
    let test = match first_existing(dir, &["wtq-test.json", "data/wtq-test.json"]) {
        Some(p) => squall::convert_examples(&fs::read_to_string(p).map_err(DataError::from)?)?,
        None => Vec::new(),
    };
    let dev_ids: Vec<String> = match first_existing(dir, &["dev-0.ids", "data/dev-0.ids"]) {
        Some(p) => serde_json::from_str(&fs::read_to_string(p).map_err(DataError::from)?)
            .map_err(|e| PipelineError::Data(DataError::SchemaViolation { line: e.line(), field: "dev ids".into() }))?,
        None => Vec::new(),
    };
    let is_dev = |r: &DatasetRecord| dev_ids.iter().any(|d| d == &r.table_id || d == &r.record_id);
    let (dev, train): (Vec<_>, Vec<_>) = all.iter().cloned().partition(|r| is_dev(r));

    let table_src = first_existing(dir, &["tables/json", "tables"])
        .ok_or_else(|| PipelineError::Data(DataError::MissingFile(dir.join("tables/json"))))?;
    let table_out = out.join("tables");
    fs::create_dir_all(&table_out).map_err(DataError::from)?;
    let mut ids: Vec<&str> = all.iter().chain(&test).map(|r| r.table_id.as_str()).collect();
    ids.sort();
    ids.dedup();
    for id in &ids {
        let raw = fs::read_to_string(table_src.join(format!("{id}.json"))).map_err(DataError::from)?;
        let t = squall::convert_table(id, &raw)?;
        let text = serde_json::to_string(&t.to_file()).expect("table serializes");
        fs::write(table_out.join(format!("{id}.json")), text).map_err(DataError::from)?;
    }
    write_dataset(&out.join("train.jsonl"), &train)?;
    write_dataset(&out.join("dev.jsonl"), &dev)?;
    write_dataset(&out.join("test.jsonl"), &test)?;
    Ok(IngestReport {
        train_total: all.len(),
        train: train.len(),
        dev: dev.len(),
        test: test.len(),
        tables: ids.len(),
    })
}
