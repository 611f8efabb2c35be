use serde::{Deserialize, Serialize};

use super::gazetteer::{Gazetteer, MatchCategory};
use super::model::NerModel;
use super::SpanScores;
use crate::data::{EntityLabel, TableData, TypedSpan};

/// Argmax with ties going to the lowest label index.
pub fn argmax(dist: &[f64], allowed: impl Fn(EntityLabel) -> bool) -> EntityLabel {
    let mut best: Option<(usize, f64)> = None;
    for (i, &p) in dist.iter().enumerate() {
        if !allowed(EntityLabel::from_index(i)) {
            continue;
        }
        if best.is_none_or(|(_, b)| p > b) {
            best = Some((i, p));
        }
    }
    EntityLabel::from_index(best.map(|b| b.0).unwrap_or(EntityLabel::None.index()))
}

/// Label decoding restricted by the gazetteer category of the span.
pub fn constrained_label_decode(dist: &[f64], category: MatchCategory) -> EntityLabel {
    match category {
        MatchCategory::Schema => argmax(dist, EntityLabel::is_column),
        MatchCategory::Cell => EntityLabel::LiteralValue,
        MatchCategory::NoneMatch => argmax(dist, |_| true),
    }
}

/// Per-span labels after gazetteer filtering, aligned with `scores.spans`,
/// plus each span's match category.
///
/// Exactly matched spans always get a label compatible with their category,
/// except that an aggregation argmax is left alone. Unmatched entity spans
/// overlapping a matched span are suppressed, aggregations again excepted.
pub fn gazetteer_filter(
    scores: &SpanScores,
    gazetteer: &Gazetteer,
    tokens: &[String],
) -> (Vec<EntityLabel>, Vec<MatchCategory>) {
    let cats: Vec<MatchCategory> = scores
        .spans
        .iter()
        .map(|&(s, e)| gazetteer.match_span(tokens, s, e))
        .collect();
    let mut labels: Vec<EntityLabel> = scores
        .probs
        .iter()
        .zip(&cats)
        .map(|(p, &c)| {
            let a = argmax(p, |_| true);
            if c == MatchCategory::NoneMatch || a == EntityLabel::AggFunction {
                a
            } else {
                constrained_label_decode(p, c)
            }
        })
        .collect();
    let matched: Vec<(usize, usize)> = scores
        .spans
        .iter()
        .zip(&cats)
        .filter(|(_, &c)| c != MatchCategory::NoneMatch)
        .map(|(&sp, _)| sp)
        .collect();
    for (i, &(s, e)) in scores.spans.iter().enumerate() {
        let l = labels[i];
        if cats[i] == MatchCategory::NoneMatch
            && l != EntityLabel::None
            && l != EntityLabel::AggFunction
            && matched.iter().any(|&(ms, me)| ms < e && s < me)
        {
            labels[i] = EntityLabel::None;
        }
    }
    (labels, cats)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedSpan {
    pub start: usize,
    pub end: usize,
    pub label: EntityLabel,
    /// Model probability of `label`.
    pub prob: f64,
    pub gazetteer_match: bool,
}

impl PredictedSpan {
    pub fn typed(&self) -> TypedSpan {
        TypedSpan {
            start: self.start,
            end: self.end,
            label: self.label,
            link_target: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NerPrediction {
    pub spans: Vec<PredictedSpan>,
}

impl NerPrediction {
    pub fn typed_spans(&self) -> Vec<TypedSpan> {
        self.spans.iter().map(PredictedSpan::typed).collect()
    }
}

/// Scores, filters and resolves spans into a final entity list ordered by
/// position. Gazetteer-matched entities are all kept; other entity spans are
/// taken by descending probability when they overlap nothing already kept.
pub fn predict_spans(
    model: &NerModel,
    tokens: &[String],
    table: &TableData,
    use_gazetteer: bool,
) -> NerPrediction {
    let gaz = Gazetteer::from_table(table);
    let scores = model.score_spans(tokens, &gaz);
    let (labels, cats) = if use_gazetteer {
        gazetteer_filter(&scores, &gaz, tokens)
    } else {
        (
            scores.probs.iter().map(|p| argmax(p, |_| true)).collect(),
            vec![MatchCategory::NoneMatch; scores.spans.len()],
        )
    };
    let mut cands: Vec<PredictedSpan> = scores
        .spans
        .iter()
        .enumerate()
        .filter(|&(i, _)| labels[i] != EntityLabel::None)
        .map(|(i, &(s, e))| PredictedSpan {
            start: s,
            end: e,
            label: labels[i],
            prob: scores.probs[i][labels[i].index()],
            gazetteer_match: cats[i] != MatchCategory::NoneMatch,
        })
        .collect();
    cands.sort_by(|a, b| {
        b.gazetteer_match
            .cmp(&a.gazetteer_match)
            .then(b.prob.total_cmp(&a.prob))
            .then((a.start, a.end).cmp(&(b.start, b.end)))
    });
    let mut kept: Vec<PredictedSpan> = Vec::new();
    for c in cands {
        if c.gazetteer_match || !kept.iter().any(|k| k.start < c.end && c.start < k.end) {
            kept.push(c);
        }
    }
    kept.sort_by_key(|k| (k.start, k.end));
    NerPrediction { spans: kept }
}

/// Micro-averaged exact-span counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SpanF1 {
    pub tp: usize,
    pub predicted: usize,
    pub gold: usize,
}

impl SpanF1 {
    pub fn add(&mut self, o: &SpanF1) {
        self.tp += o.tp;
        self.predicted += o.predicted;
        self.gold += o.gold;
    }

    pub fn precision(&self) -> f64 {
        if self.predicted == 0 {
            0.0
        } else {
            self.tp as f64 / self.predicted as f64
        }
    }

    pub fn recall(&self) -> f64 {
        if self.gold == 0 {
            0.0
        } else {
            self.tp as f64 / self.gold as f64
        }
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

/// Matches on `(start, end, label)`; link targets are ignored.
pub fn span_f1(pred: &[PredictedSpan], gold: &[TypedSpan]) -> SpanF1 {
    let mut g: Vec<(usize, usize, EntityLabel)> = gold
        .iter()
        .filter(|s| s.label != EntityLabel::None)
        .map(|s| (s.start, s.end, s.label))
        .collect();
    g.sort();
    g.dedup();
    let tp = pred
        .iter()
        .filter(|p| g.binary_search(&(p.start, p.end, p.label)).is_ok())
        .count();
    SpanF1 {
        tp,
        predicted: pred.len(),
        gold: g.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ColumnSpec, ColumnType};

    fn d(peak: EntityLabel) -> [f64; 7] {
        let mut p = [0.02; 7];
        p[peak.index()] = 0.88;
        p
    }

    #[test]
    fn constrained_decode_cases() {
        let p = d(EntityLabel::LiteralValue);
        assert_eq!(constrained_label_decode(&p, MatchCategory::Cell), EntityLabel::LiteralValue);
        let mut q = p;
        q[EntityLabel::WhereColumn.index()] = 0.05;
        assert_eq!(constrained_label_decode(&q, MatchCategory::Schema), EntityLabel::WhereColumn);
        assert_eq!(constrained_label_decode(&p, MatchCategory::NoneMatch), EntityLabel::LiteralValue);
        // ties go to the lowest index
        assert_eq!(constrained_label_decode(&[0.02; 7], MatchCategory::Schema), EntityLabel::SelectColumn);
    }

    fn gaz_table() -> TableData {
        TableData::new(
            "t",
            "t",
            vec![ColumnSpec { id: "c1".into(), display: "player".into(), ty: ColumnType::String }],
            vec![vec!["LeBron James".into()], vec!["Kevin Love".into()]],
        )
        .unwrap()
    }

    fn toks(s: &str) -> Vec<String> {
        s.split(' ').map(String::from).collect()
    }

    #[test]
    fn matched_none_is_relabeled() {
        let t = gaz_table();
        let g = Gazetteer::from_table(&t);
        let q = toks("did LeBron James score");
        let scores = SpanScores {
            spans: vec![(1, 3)],
            probs: vec![d(EntityLabel::None)],
        };
        let (labels, _) = gazetteer_filter(&scores, &g, &q);
        assert_eq!(labels, vec![EntityLabel::LiteralValue]);
    }

    #[test]
    fn no_match_is_identity() {
        let t = gaz_table();
        let g = Gazetteer::from_table(&t);
        let q = toks("how many rows are there");
        let scores = SpanScores {
            spans: vec![(0, 1), (1, 3)],
            probs: vec![d(EntityLabel::AggFunction), d(EntityLabel::WhereColumn)],
        };
        let (labels, _) = gazetteer_filter(&scores, &g, &q);
        assert_eq!(labels, vec![EntityLabel::AggFunction, EntityLabel::WhereColumn]);
    }

    #[test]
    fn overlapping_unmatched_span_is_suppressed() {
        let t = TableData::new(
            "t",
            "t",
            vec![ColumnSpec { id: "c1".into(), display: "x".into(), ty: ColumnType::String }],
            vec![vec!["d e f".into()]],
        )
        .unwrap();
        let g = Gazetteer::from_table(&t);
        let q = toks("a b c d e f g");
        let scores = SpanScores {
            spans: vec![(2, 5), (3, 6)],
            probs: vec![d(EntityLabel::LiteralValue), d(EntityLabel::LiteralValue)],
        };
        let (labels, _) = gazetteer_filter(&scores, &g, &q);
        assert_eq!(labels, vec![EntityLabel::None, EntityLabel::LiteralValue]);
    }

    #[test]
    fn f1_counts() {
        let pred = vec![PredictedSpan { start: 0, end: 1, label: EntityLabel::SelectColumn, prob: 0.9, gazetteer_match: false }];
        let gold = vec![
            TypedSpan { start: 0, end: 1, label: EntityLabel::SelectColumn, link_target: None },
            TypedSpan { start: 2, end: 3, label: EntityLabel::LiteralValue, link_target: None },
        ];
        let f = span_f1(&pred, &gold);
        assert_eq!((f.tp, f.predicted, f.gold), (1, 1, 2));
        assert!((f.f1() - 2.0 / 3.0).abs() < 1e-12);
    }
}
