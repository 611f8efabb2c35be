use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::config::{HarnessMode, PipelineConfig};
use super::train::Artifacts;
use crate::data::{derive_annotations, DatasetRecord, EntityLabel, TableData};
use crate::linker::{link, CandidateKind, LinkContext, LinkResult};
use crate::ner::{predict_spans, PredictedSpan};
use crate::nsp::{
    build_column_type_features, decode_beam, encode, ColumnTypeFeature, EncodeInput, ValueMention,
};
use crate::sql::{parse_tokens, SqlTree};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkTrace {
    pub start: usize,
    pub end: usize,
    pub label: EntityLabel,
    pub target: String,
    pub kind: CandidateKind,
    pub confidence: f64,
    pub candidates: usize,
}

/// What each stage produced for one question.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub ner: Vec<PredictedSpan>,
    /// One entry per NER span; `None` for aggregates and failed links.
    pub links: Vec<Option<LinkTrace>>,
    pub features: ColumnTypeFeature,
    pub values: Vec<ValueMention>,
    pub column_filter: Option<Vec<String>>,
    pub actions: Vec<String>,
    pub log_prob: Option<f64>,
    pub prediction: Option<String>,
    /// Degradations and stage errors, prefixed with the stage name.
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub tree: Option<SqlTree>,
    pub trace: Trace,
}

/// NER spans, then links, then column roles and values, then the top beam
/// decode. Stage failures never abort: they are noted in the trace and a
/// failed decode gives no tree.
pub fn run_pipeline(cfg: &PipelineConfig, art: &Artifacts, record: &DatasetRecord, table: &TableData) -> Prediction {
    let tokens = &record.query_tokens;
    let mut trace = Trace::default();

    let ner = predict_spans(&art.ner, tokens, table, cfg.ner.gazetteer);
    if ner.spans.is_empty() {
        trace.notes.push("ner: no spans".into());
    }

    let ctx = LinkContext::new(tokens, table);
    let mut links: Vec<Option<LinkResult>> = Vec::with_capacity(ner.spans.len());
    for s in &ner.spans {
        if s.label == EntityLabel::AggFunction {
            links.push(None);
            continue;
        }
        match link(&ctx, &s.typed(), &art.nel) {
            Ok(l) => links.push(Some(l)),
            Err(e) => {
                trace.notes.push(format!("nel: span [{}, {}): {e}", s.start, s.end));
                links.push(None);
            }
        }
    }

    let mut values = Vec::new();
    let mut linked_columns = BTreeSet::new();
    for (s, l) in ner.spans.iter().zip(&links) {
        let Some(l) = l else { continue };
        match l.chosen.kind {
            CandidateKind::Cell if s.label == EntityLabel::LiteralValue => values.push(ValueMention {
                text: l.chosen.candidate_id.clone(),
                start: s.start,
                end: s.end,
                score: l.confidence(),
            }),
            CandidateKind::Column => {
                linked_columns.insert(l.chosen.candidate_id.clone());
            }
            _ => {}
        }
    }

    let features = match cfg.mode {
        HarnessMode::ColumnTypeFeature => build_column_type_features(&ner.spans, &links),
        HarnessMode::OracleFeature => match parse_tokens(&record.gold_sql_tokens)
            .map_err(|e| e.to_string())
            .and_then(|tree| derive_annotations(record, table, &tree).map_err(|e| e.to_string()))
        {
            Ok(ann) => ColumnTypeFeature::from_gold(table, &ann.spans),
            Err(e) => {
                trace.notes.push(format!("features: no gold roles ({e})"));
                ColumnTypeFeature::default()
            }
        },
        _ => ColumnTypeFeature::default(),
    };
    let column_filter = (cfg.mode == HarnessMode::LinkedColumnsOnly).then_some(linked_columns);

    let input = EncodeInput {
        tokens,
        table,
        entities: ner.spans.iter().map(|s| (s.start, s.end, s.label)).collect(),
        values: values.clone(),
        features: features.clone(),
        column_filter: column_filter.clone(),
    };
    let enc = encode(&input, false);
    if enc.values.is_empty() {
        trace.notes.push("nsp: no values to copy".into());
    }

    let tree = match decode_beam(&enc, &art.grammar, &art.nsp, cfg.beam_size, art.nsp.config.max_steps) {
        Ok(out) => {
            let best = out.into_iter().next().expect("decode_beam returns at least one tree");
            trace.actions = best.actions.iter().map(|a| a.to_string()).collect();
            trace.log_prob = Some(best.log_prob);
            trace.prediction = Some(best.tree.to_sql());
            Some(best.tree)
        }
        Err(e) => {
            trace.notes.push(format!("nsp: {e}"));
            None
        }
    };

    trace.links = ner
        .spans
        .iter()
        .zip(&links)
        .map(|(s, l)| {
            l.as_ref().map(|l| LinkTrace {
                start: s.start,
                end: s.end,
                label: s.label,
                target: l.chosen.candidate_id.clone(),
                kind: l.chosen.kind,
                confidence: l.confidence(),
                candidates: l.ranked.len(),
            })
        })
        .collect();
    trace.ner = ner.spans;
    trace.features = features;
    trace.values = values;
    trace.column_filter = column_filter.map(|c| c.into_iter().collect());
    Prediction { tree, trace }
}
