//! A modular text-to-SQL toolkit for question answering over single tables.
//!
//! The pipeline has three learned stages, each behind a small scoring
//! contract so that the feature-based baselines shipped here can be swapped
//! for neural scorers:
//!
//! 1. [`ner`]: span-based entity recognition that is aware of the table
//!    schema and cell values, with gazetteer filtering and constrained
//!    label decoding.
//! 2. [`linker`]: type-narrowed candidate generation and candidate ranking
//!    that maps mentions to column ids and exact cell strings.
//! 3. [`nsp`]: a top-down decoder that builds a SQL tree by applying
//!    production rules induced from training trees ([`grammar`]) and copying
//!    columns, values and the table from the encoded input.
//!
//! Supporting modules cover data loading and supervision derivation
//! ([`data`]), the SQL subset with an execution engine ([`sql`]), end-to-end
//! orchestration and evaluation ([`pipeline`]) and a synthetic corpus for
//! desk-scale runs ([`toy`]).

pub mod data;
pub mod grammar;
pub mod linker;
pub mod ner;
pub mod nsp;
pub mod optim;
pub mod pipeline;
pub mod sql;
pub mod text;
pub mod toy;

pub use data::{DatasetRecord, EntityLabel, TableData, TypedSpan};
pub use grammar::{Grammar, ProductionRule};
pub use sql::{execute, parse_sql, SqlTree};
