//! Span-based entity recognition over query tokens, aware of the table's
//! column names and cell values.
//!
//! Every span up to `max_span_len` tokens is classified into an
//! [`EntityLabel`](crate::data::EntityLabel). Exact gazetteer matches then
//! constrain the label, and overlapping spans are resolved.

mod decode;
mod gazetteer;
mod model;

use thiserror::Error;

pub use decode::{
    argmax, constrained_label_decode, gazetteer_filter, predict_spans, span_f1, NerPrediction,
    PredictedSpan, SpanF1,
};
pub use gazetteer::{Gazetteer, MatchCategory};
pub use model::{train_ner, NerConfig, NerModel, NerTrainConfig, NerTrainReport};

use crate::data::{TableData, TypedSpan};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NerError {
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("bad model artifact: {0}")]
    Artifact(String),
}

/// One query with its table and gold spans.
#[derive(Debug, Clone, Copy)]
pub struct NerInstance<'a> {
    pub tokens: &'a [String],
    pub table: &'a TableData,
    pub gold: &'a [TypedSpan],
}

/// Label distributions aligned with `spans`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanScores {
    pub spans: Vec<(usize, usize)>,
    pub probs: Vec<[f64; 7]>,
}

/// All `[start, end)` with `1 <= end - start <= max_span_len`, in
/// lexicographic order.
pub fn enumerate_spans(n_tokens: usize, max_span_len: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for s in 0..n_tokens {
        for e in s + 1..=(s + max_span_len).min(n_tokens) {
            out.push((s, e));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn span_counts() {
        assert_eq!(enumerate_spans(5, 3).len(), 12);
        assert_eq!(enumerate_spans(1, 4).len(), 1);
        assert_eq!(enumerate_spans(8, 8).len(), 36);
    }

    proptest! {
        #[test]
        fn span_count_formula(n in 1usize..40, l in 1usize..12) {
            let spans = enumerate_spans(n, l);
            let expected: usize = (1..=l).map(|k| (n + 1).saturating_sub(k)).sum();
            prop_assert_eq!(spans.len(), expected);
            let mut sorted = spans.clone();
            sorted.sort();
            prop_assert_eq!(sorted, spans);
        }

        #[test]
        fn constrained_decode_is_compatible(raw in prop::collection::vec(0.0f64..1.0, 7), cat in 0usize..3) {
            let s: f64 = raw.iter().sum::<f64>() + 1e-9;
            let p: Vec<f64> = raw.iter().map(|x| x / s).collect();
            let cat = [MatchCategory::Schema, MatchCategory::Cell, MatchCategory::NoneMatch][cat];
            let l = constrained_label_decode(&p, cat);
            match cat {
                MatchCategory::Schema => prop_assert!(l.is_column()),
                MatchCategory::Cell => prop_assert_eq!(l, crate::data::EntityLabel::LiteralValue),
                MatchCategory::NoneMatch => prop_assert_eq!(l, argmax(&p, |_| true)),
            }
        }
    }
}
