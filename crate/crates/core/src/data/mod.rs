//! Dataset and table loading, plus derivation of entity and linking
//! supervision from token alignments.

mod annotate;
mod dataset;
pub mod squall;
mod table;

use std::path::PathBuf;

use thiserror::Error;

pub use annotate::{
    derive_annotations, extract_nested_subset, Annotation, AnnotationIssue, EntityLabel,
    TypedSpan,
};
pub use dataset::{load_dataset, write_dataset, Alignment, DatasetRecord, Split};
pub use table::{
    load_table, load_table_from_dir, Cell, CellValue, ColumnSpec, ColumnType, TableData, TableFile,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("schema violation on line {line}: {field}")]
    SchemaViolation { line: usize, field: String },
    #[error("index out of range in record {record}: {detail}")]
    IndexOutOfRange { record: String, detail: String },
    #[error("row {0} has the wrong number of cells")]
    RaggedRow(usize),
    #[error("cell at row {row}, column {column} does not match its declared type")]
    TypeCoercionFailure { row: usize, column: usize },
    #[error("duplicate column id {0}")]
    DuplicateColumn(String),
    #[error("invalid column id {0}")]
    InvalidColumnId(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error("io: {0}")]
    Io(String),
    #[error("gold tree does not match the record's SQL tokens")]
    TreeMismatch,
    #[error(transparent)]
    Parse(#[from] crate::sql::ParseError),
}

impl From<std::io::Error> for DataError {
    fn from(e: std::io::Error) -> Self {
        DataError::Io(e.to_string())
    }
}
