use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{HarnessMode, NerAblation, PipelineConfig};
use super::corpus::{Dataset, Example};
use super::run::{run_pipeline, Trace};
use super::train::{induce_from, train_ner_stage, train_nel_stage, train_nsp_stage, Artifacts};
use super::PipelineError;
use crate::grammar::oracle_actions;
use crate::linker::{is_exact_match, link, LinkContext};
use crate::ner::{predict_spans, span_f1, SpanF1};
use crate::sql::{denotation_equal, execute, serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub record_id: String,
    pub gold_sql: Option<String>,
    pub predicted_sql: Option<String>,
    pub lf_correct: bool,
    pub exe_correct: bool,
    /// Gold SQL executes to the gold answer.
    pub gold_consistent: bool,
    pub nested: bool,
    pub trace: Trace,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub n: usize,
    pub acc_lf: f64,
    pub acc_exe: f64,
}

impl Accuracy {
    fn of<'a>(verdicts: impl Iterator<Item = &'a Verdict>) -> Accuracy {
        let (mut n, mut lf, mut exe) = (0, 0, 0);
        for v in verdicts {
            n += 1;
            lf += v.lf_correct as usize;
            exe += v.exe_correct as usize;
        }
        let frac = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
        Accuracy { n, acc_lf: frac(lf), acc_exe: frac(exe) }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub ner: SpanF1,
    pub ner_f1: f64,
    /// Gold mentions linked to their gold target by the linker.
    pub linking_top1: f64,
    pub linking_mentions: usize,
    /// Gold trees derivable under the decoder's grammar.
    pub grammar_coverage: f64,
    /// Gold mentions whose surface equals their target's text.
    pub exact_match_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub label: String,
    pub mode: HarnessMode,
    pub ner_ablation: String,
    pub acc_lf: f64,
    pub acc_exe: f64,
    pub n: usize,
    /// Records with gold SQL in the supported subset.
    pub with_gold_sql: usize,
    pub nested: Accuracy,
    /// Fraction of gold trees that execute to the gold answer.
    pub engine_coverage: f64,
    /// Records left out of the metric-containment check because their gold
    /// SQL does not reproduce the gold answer.
    pub containment_excluded: Vec<String>,
    pub diagnostics: Diagnostics,
    pub verdicts: Vec<Verdict>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn summary(&self) -> String {
        format!(
            "{:<22} {:<12} n={:<5} ACC_LF={:.4} ACC_EXE={:.4} nested(n={}) LF={:.4} EXE={:.4} NER_F1={:.4} NEL@1={:.4} grammar={:.4}",
            self.mode.name(),
            self.ner_ablation,
            self.n,
            self.acc_lf,
            self.acc_exe,
            self.nested.n,
            self.nested.acc_lf,
            self.nested.acc_exe,
            self.diagnostics.ner_f1,
            self.diagnostics.linking_top1,
            self.diagnostics.grammar_coverage,
        )
    }
}

fn verdict(cfg: &PipelineConfig, art: &Artifacts, ds: &Dataset, ex: &Example) -> Verdict {
    let table = ds.table(ex);
    let pred = run_pipeline(cfg, art, &ex.record, table);
    let gold = ex.tree.as_ref();
    let lf_correct = matches!((gold, &pred.tree), (Some(g), Some(p)) if serialize(g) == serialize(p));
    let exe_correct = pred
        .tree
        .as_ref()
        .and_then(|p| execute(p, table).ok())
        .is_some_and(|d| denotation_equal(&d, &ex.record.gold_answer));
    let gold_consistent = gold
        .and_then(|g| execute(g, table).ok())
        .is_some_and(|d| denotation_equal(&d, &ex.record.gold_answer));
    Verdict {
        record_id: ex.record.record_id.clone(),
        gold_sql: gold.map(|g| g.to_sql()),
        predicted_sql: pred.tree.as_ref().map(|t| t.to_sql()),
        lf_correct,
        exe_correct,
        gold_consistent,
        nested: gold.is_some_and(|g| g.contains_subquery()),
        trace: pred.trace,
    }
}

fn threads(cfg: &PipelineConfig) -> usize {
    if cfg.threads > 0 {
        cfg.threads
    } else {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    }
}

fn diagnostics(cfg: &PipelineConfig, art: &Artifacts, ds: &Dataset) -> Diagnostics {
    let mut d = Diagnostics::default();
    let (mut linked, mut correct, mut exact, mut derivable, mut trees) = (0, 0, 0, 0, 0);
    for ex in ds.supervised() {
        let table = ds.table(ex);
        let tokens = &ex.record.query_tokens;
        trees += 1;
        if oracle_actions(ex.tree.as_ref().unwrap(), &art.grammar).is_ok() {
            derivable += 1;
        }
        let pred = predict_spans(&art.ner, tokens, table, cfg.ner.gazetteer);
        d.ner.add(&span_f1(&pred.spans, &ex.spans));
        let ctx = LinkContext::new(tokens, table);
        for s in &ex.spans {
            let Some(is_exact) = is_exact_match(tokens, s, table) else { continue };
            linked += 1;
            exact += is_exact as usize;
            if let Ok(l) = link(&ctx, s, &art.nel) {
                correct += (Some(&l.chosen.candidate_id) == s.link_target.as_ref()) as usize;
            }
        }
    }
    let frac = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    d.ner_f1 = d.ner.f1();
    d.linking_mentions = linked;
    d.linking_top1 = frac(correct, linked);
    d.exact_match_fraction = frac(exact, linked);
    d.grammar_coverage = frac(derivable, trees);
    d
}

/// Runs the pipeline on every record (in parallel over records) and scores
/// it. Fails if a record with consistent gold SQL is an exact match but not
/// an execution match.
pub fn evaluate(cfg: &PipelineConfig, art: &Artifacts, ds: &Dataset, label: &str) -> Result<EvalReport, PipelineError> {
    let n_threads = threads(cfg).min(ds.len().max(1));
    let chunk = ds.len().div_ceil(n_threads).max(1);
    let verdicts: Vec<Verdict> = std::thread::scope(|s| {
        let handles: Vec<_> = ds
            .examples
            .chunks(chunk)
            .map(|part| s.spawn(move || part.iter().map(|ex| verdict(cfg, art, ds, ex)).collect::<Vec<_>>()))
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("evaluation worker panicked")).collect()
    });

    let containment_excluded: Vec<String> = verdicts
        .iter()
        .filter(|v| !v.gold_consistent)
        .map(|v| v.record_id.clone())
        .collect();
    let checked = Accuracy::of(verdicts.iter().filter(|v| v.gold_consistent));
    if checked.acc_exe < checked.acc_lf {
        let bad = verdicts
            .iter()
            .find(|v| v.gold_consistent && v.lf_correct && !v.exe_correct)
            .map(|v| v.record_id.clone())
            .unwrap_or_default();
        return Err(PipelineError::Containment { acc_lf: checked.acc_lf, acc_exe: checked.acc_exe, record: bad });
    }

    let all = Accuracy::of(verdicts.iter());
    let with_gold = verdicts.iter().filter(|v| v.gold_sql.is_some()).count();
    let consistent = verdicts.iter().filter(|v| v.gold_consistent).count();
    Ok(EvalReport {
        label: label.to_string(),
        mode: cfg.mode,
        ner_ablation: cfg.ner.name(),
        acc_lf: all.acc_lf,
        acc_exe: all.acc_exe,
        n: all.n,
        with_gold_sql: with_gold,
        nested: Accuracy::of(verdicts.iter().filter(|v| v.nested)),
        engine_coverage: if with_gold == 0 { 0.0 } else { consistent as f64 / with_gold as f64 },
        containment_excluded,
        diagnostics: diagnostics(cfg, art, ds),
        verdicts,
    })
}

/// Which rows a grid produces: every mode with the full NER model, then each
/// NER ablation in the column-type-feature mode.
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub modes: Vec<HarnessMode>,
    pub ablations: Vec<NerAblation>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            modes: HarnessMode::ALL.to_vec(),
            ablations: NerAblation::GRID.iter().map(|(_, a)| *a).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub reports: Vec<EvalReport>,
}

impl GridReport {
    pub fn find(&self, mode: HarnessMode, ablation: &str) -> Option<&EvalReport> {
        self.reports.iter().find(|r| r.mode == mode && r.ner_ablation == ablation)
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<22} {:<12} {:>6} {:>8} {:>8} {:>10} {:>10} {:>8} {:>8}",
            "mode", "ner", "n", "ACC_LF", "ACC_EXE", "nest_LF", "nest_EXE", "NER_F1", "NEL@1"
        );
        for r in &self.reports {
            let _ = writeln!(
                s,
                "{:<22} {:<12} {:>6} {:>8.4} {:>8.4} {:>10.4} {:>10.4} {:>8.4} {:>8.4}",
                r.mode.name(),
                r.ner_ablation,
                r.n,
                r.acc_lf,
                r.acc_exe,
                r.nested.acc_lf,
                r.nested.acc_exe,
                r.diagnostics.ner_f1,
                r.diagnostics.linking_top1
            );
        }
        s
    }

    /// Report JSON without per-record verdicts.
    pub fn to_json(&self) -> String {
        let slim: Vec<EvalReport> = self
            .reports
            .iter()
            .map(|r| EvalReport { verdicts: Vec::new(), ..r.clone() })
            .collect();
        serde_json::to_string_pretty(&slim).expect("report serializes")
    }
}

/// Trains what each row needs and evaluates it on `eval`. Stages shared
/// between rows are trained once; the column-type-feature and oracle modes
/// share one decoder, and turning off gazetteer filtering reuses the full
/// NER model.
pub fn run_experiment_grid(
    cfg: &PipelineConfig,
    spec: &GridSpec,
    train: &Dataset,
    eval: &Dataset,
) -> Result<GridReport, PipelineError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let grammar = induce_from(train);
    let (nel, _) = train_nel_stage(cfg, train, None, &mut rng)?;

    let mut rows: Vec<(HarnessMode, NerAblation)> = spec.modes.iter().map(|&m| (m, NerAblation::default())).collect();
    for a in &spec.ablations {
        if *a != NerAblation::default() {
            rows.push((HarnessMode::ColumnTypeFeature, *a));
        }
    }

    let mut ner_models = BTreeMap::new();
    let mut nsp_models = BTreeMap::new();
    let mut reports = Vec::new();
    for (mode, ablation) in rows {
        let ner_key = (ablation.schema, ablation.cell);
        if let Entry::Vacant(slot) = ner_models.entry(ner_key) {
            slot.insert(train_ner_stage(cfg, NerAblation { gazetteer: true, ..ablation }, train, None, &mut rng)?.0);
        }
        let nsp_key = if mode == HarnessMode::OracleFeature { HarnessMode::ColumnTypeFeature } else { mode };
        if let Entry::Vacant(slot) = nsp_models.entry(nsp_key) {
            slot.insert(train_nsp_stage(cfg, nsp_key, &grammar, train, &mut rng)?.0);
        }
        let art = Artifacts {
            ner: ner_models[&ner_key].clone(),
            nel: nel.clone(),
            nsp: nsp_models[&nsp_key].clone(),
            grammar: grammar.clone(),
        };
        let row_cfg = PipelineConfig { mode, ner: ablation, ..cfg.clone() };
        reports.push(evaluate(&row_cfg, &art, eval, &format!("{} {}", mode.name(), ablation.name()))?);
    }
    Ok(GridReport { reports })
}
