use serde::{Deserialize, Serialize};

use crate::text::{canonical_decimal, format_number};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Datum {
    Null,
    Number(f64),
    Text(String),
}

impl Datum {
    /// Normalized answer string: numbers (and numeric-looking text) as
    /// trailing-zero-free decimals, text verbatim, null as empty.
    pub fn normalized(&self) -> String {
        match self {
            Datum::Null => String::new(),
            Datum::Number(v) => format_number(*v),
            Datum::Text(s) => normalize_answer(s),
        }
    }
}

fn normalize_answer(s: &str) -> String {
    canonical_decimal(s.trim()).unwrap_or_else(|| s.to_string())
}

/// Result of executing a query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Denotation {
    pub rows: Vec<Vec<Datum>>,
    /// True when the outer query has `order by`, making row order part of the
    /// answer.
    pub ordered: bool,
}

impl Denotation {
    pub fn is_scalar(&self) -> bool {
        self.rows.len() == 1 && self.rows[0].len() == 1
    }

    /// Row-major normalized values.
    pub fn flatten(&self) -> Vec<String> {
        self.rows.iter().flatten().map(Datum::normalized).collect()
    }
}

/// Compares a denotation with a gold answer list: as a sequence when the
/// query is ordered, as a multiset otherwise.
pub fn denotation_equal(a: &Denotation, gold: &[String]) -> bool {
    let mut got = a.flatten();
    let mut want: Vec<String> = gold.iter().map(|s| normalize_answer(s)).collect();
    if got.len() != want.len() {
        return false;
    }
    if !a.ordered {
        got.sort();
        want.sort();
    }
    got == want
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn numeric_normalization() {
        let d = Denotation {
            rows: vec![vec![Datum::Number(3.0)]],
            ordered: false,
        };
        assert!(denotation_equal(&d, &s(&["3"])));
        let d = Denotation {
            rows: vec![vec![Datum::Text("1.50".into())]],
            ordered: false,
        };
        assert!(denotation_equal(&d, &s(&["1.5"])));
    }

    #[test]
    fn multiset_unless_ordered() {
        let mut d = Denotation {
            rows: vec![vec![Datum::Text("b".into())], vec![Datum::Text("a".into())]],
            ordered: false,
        };
        assert!(denotation_equal(&d, &s(&["a", "b"])));
        d.ordered = true;
        assert!(!denotation_equal(&d, &s(&["a", "b"])));
        assert!(denotation_equal(&d, &s(&["b", "a"])));
    }

    #[test]
    fn multiplicity_matters() {
        let d = Denotation {
            rows: vec![vec![Datum::Text("a".into())], vec![Datum::Text("a".into())]],
            ordered: false,
        };
        assert!(!denotation_equal(&d, &s(&["a"])));
    }
}
