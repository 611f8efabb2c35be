use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::data::TableData;
use crate::text::{normalize, span_surface, words};

/// Which gazetteer list an exact span match came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MatchCategory {
    Schema,
    Cell,
    NoneMatch,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Sources {
    schema: bool,
    cell: bool,
}

/// Normalized column display names and cell strings of one table.
#[derive(Debug, Clone, Default)]
pub struct Gazetteer {
    entries: BTreeMap<String, Sources>,
    schema_words: HashSet<String>,
    cell_words: HashSet<String>,
}

impl Gazetteer {
    pub fn from_table(table: &TableData) -> Self {
        let mut g = Gazetteer::default();
        for name in &table.column_display_names {
            let n = normalize(name);
            if n.is_empty() {
                continue;
            }
            g.schema_words.extend(words(&n));
            g.entries.entry(n).or_default().schema = true;
        }
        for cell in table.distinct_cells() {
            let n = normalize(cell);
            if n.is_empty() {
                continue;
            }
            g.cell_words.extend(words(&n));
            g.entries.entry(n).or_default().cell = true;
        }
        g
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Normalized entries with their category, each exactly once.
    pub fn entries(&self) -> impl Iterator<Item = (&str, MatchCategory)> {
        self.entries.iter().map(|(k, s)| (k.as_str(), Self::category_of(*s)))
    }

    fn category_of(s: Sources) -> MatchCategory {
        if s.schema {
            MatchCategory::Schema
        } else if s.cell {
            MatchCategory::Cell
        } else {
            MatchCategory::NoneMatch
        }
    }

    /// Category of an arbitrary string; column names win over cells.
    pub fn lookup(&self, surface: &str) -> MatchCategory {
        self.entries
            .get(&normalize(surface))
            .map(|s| Self::category_of(*s))
            .unwrap_or(MatchCategory::NoneMatch)
    }

    /// Category of a token range. Ranges that begin or end on a
    /// punctuation-only token (`"Thriller ?"`) are not exact matches.
    pub fn match_span(&self, tokens: &[String], start: usize, end: usize) -> MatchCategory {
        let edge_is_punct = |t: &String| normalize(t).is_empty();
        if end <= start || edge_is_punct(&tokens[start]) || edge_is_punct(&tokens[end - 1]) {
            return MatchCategory::NoneMatch;
        }
        self.lookup(&span_surface(tokens, start, end))
    }

    pub(crate) fn sources(&self, surface: &str) -> (bool, bool) {
        self.entries
            .get(&normalize(surface))
            .map(|s| (s.schema, s.cell))
            .unwrap_or((false, false))
    }

    pub(crate) fn word_hits(&self, word: &str) -> (bool, bool) {
        let w = normalize(word);
        (self.schema_words.contains(&w), self.cell_words.contains(&w))
    }
}
