use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{HarnessMode, NerAblation, PipelineConfig};
use super::corpus::{Dataset, Example};
use super::PipelineError;
use crate::data::{EntityLabel, TableData};
use crate::grammar::{induce_grammar, oracle_actions, Grammar};
use crate::linker::{
    build_groups, train_nel, GroupStats, LinkContext, LinkGroup, LinkerConfig, LinkerModel,
    LinkerTrainConfig, LinkerTrainReport,
};
use crate::ner::{train_ner, NerConfig, NerInstance, NerModel, NerTrainConfig, NerTrainReport};
use crate::nsp::{
    align_gold_actions, encode, train_nsp, ColumnTypeFeature, EncodeInput, EncoderOutput,
    NspConfig, NspExample, NspModel, NspTrainConfig, NspTrainReport, ValueMention,
};
use crate::optim::AdamConfig;

/// The three trained stages plus the grammar the decoder was built on.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifacts {
    pub ner: NerModel,
    pub nel: LinkerModel,
    pub nsp: NspModel,
    pub grammar: Grammar,
}

fn write(path: &Path, text: &str) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| PipelineError::io(path, e))
}

fn read(path: &Path) -> Result<String, PipelineError> {
    fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))
}

impl Artifacts {
    pub fn save(&self, cfg: &PipelineConfig) -> Result<(), PipelineError> {
        write(&cfg.ner_model, &self.ner.to_json())?;
        write(&cfg.nel_model, &self.nel.to_json())?;
        write(&cfg.nsp_model, &self.nsp.to_json())?;
        write(&cfg.grammar, &self.grammar.to_text())
    }

    pub fn load(cfg: &PipelineConfig) -> Result<Self, PipelineError> {
        let ner = NerModel::from_json(&read(&cfg.ner_model)?).map_err(|e| PipelineError::stage("ner", e))?;
        let nel = LinkerModel::from_json(&read(&cfg.nel_model)?).map_err(|e| PipelineError::stage("nel", e))?;
        let nsp = NspModel::from_json(&read(&cfg.nsp_model)?).map_err(|e| PipelineError::stage("nsp", e))?;
        let grammar = nsp.grammar().map_err(|e| PipelineError::stage("nsp", e))?;
        Ok(Artifacts { ner, nel, nsp, grammar })
    }
}

pub fn ner_instances(ds: &Dataset) -> Vec<NerInstance<'_>> {
    ds.supervised()
        .map(|e| NerInstance { tokens: &e.record.query_tokens, table: ds.table(e), gold: &e.spans })
        .collect()
}

pub fn train_ner_stage(
    cfg: &PipelineConfig,
    ablation: NerAblation,
    train: &Dataset,
    dev: Option<&Dataset>,
    rng: &mut ChaCha8Rng,
) -> Result<(NerModel, NerTrainReport), PipelineError> {
    let config = NerConfig { use_schema: ablation.schema, use_cell: ablation.cell, ..Default::default() };
    let mut model = NerModel::init(config, rng);
    let tcfg = NerTrainConfig { epochs: cfg.ner_epochs, use_gazetteer: ablation.gazetteer, ..Default::default() };
    let dev_inst = dev.map(ner_instances).unwrap_or_default();
    let report = train_ner(&mut model, &ner_instances(train), &dev_inst, &tcfg, rng)
        .map_err(|e| PipelineError::stage("ner", e))?;
    Ok((model, report))
}

pub fn link_groups(ds: &Dataset, stats: &mut GroupStats) -> Vec<LinkGroup> {
    let mut out = Vec::new();
    for e in ds.supervised() {
        let ctx = LinkContext::new(&e.record.query_tokens, ds.table(e));
        out.extend(build_groups(&ctx, &e.spans, stats));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NelStageReport {
    pub train: LinkerTrainReport,
    pub groups: GroupStats,
}

pub fn train_nel_stage(
    cfg: &PipelineConfig,
    train: &Dataset,
    dev: Option<&Dataset>,
    rng: &mut ChaCha8Rng,
) -> Result<(LinkerModel, NelStageReport), PipelineError> {
    let mut groups = GroupStats::default();
    let train_groups = link_groups(train, &mut groups);
    let dev_groups = dev.map(|d| link_groups(d, &mut GroupStats::default())).unwrap_or_default();
    let mut model = LinkerModel::zeros(LinkerConfig::default());
    let tcfg = LinkerTrainConfig { epochs: cfg.nel_epochs, ..Default::default() };
    let report = train_nel(&mut model, &train_groups, &dev_groups, &tcfg, rng)
        .map_err(|e| PipelineError::stage("nel", e))?;
    Ok((model, NelStageReport { train: report, groups }))
}

/// Encoder input built from the gold annotation, as used for teacher
/// forcing: gold entities, gold literal values and, depending on the mode,
/// gold column roles or a gold linked-column filter.
pub fn gold_encode_input<'a>(ex: &'a Example, table: &'a TableData, mode: HarnessMode) -> EncodeInput<'a> {
    let values = ex
        .spans
        .iter()
        .filter(|s| s.label == EntityLabel::LiteralValue)
        .filter_map(|s| Some(ValueMention { text: s.link_target.clone()?, start: s.start, end: s.end, score: 1.0 }))
        .collect();
    let linked: BTreeSet<String> = ex
        .spans
        .iter()
        .filter(|s| s.label.is_column())
        .filter_map(|s| s.link_target.clone())
        .collect();
    EncodeInput {
        tokens: &ex.record.query_tokens,
        table,
        entities: ex.spans.iter().map(|s| (s.start, s.end, s.label)).collect(),
        values,
        features: if mode.uses_roles() { ColumnTypeFeature::from_gold(table, &ex.spans) } else { ColumnTypeFeature::default() },
        column_filter: (mode == HarnessMode::LinkedColumnsOnly).then_some(linked),
    }
}

/// Teacher-forcing examples; records whose tree the grammar cannot derive
/// are skipped and counted.
pub fn nsp_examples(ds: &Dataset, grammar: &Grammar, mode: HarnessMode) -> (Vec<NspExample>, usize) {
    let mut out = Vec::new();
    let mut underivable = 0;
    for e in ds.supervised() {
        let Ok(actions) = oracle_actions(e.tree.as_ref().unwrap(), grammar) else {
            underivable += 1;
            continue;
        };
        let input = gold_encode_input(e, ds.table(e), mode);
        let enc: EncoderOutput = encode(&input, false);
        let (actions, _) = align_gold_actions(&actions, &enc);
        out.push(NspExample { enc_dropped: encode(&input, true), enc, actions });
    }
    (out, underivable)
}

pub fn induce_from(ds: &Dataset) -> Grammar {
    induce_grammar(ds.supervised().map(|e| e.tree.as_ref().unwrap()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NspStageReport {
    pub train: NspTrainReport,
    pub rules: usize,
    pub underivable: usize,
}

pub fn train_nsp_stage(
    cfg: &PipelineConfig,
    mode: HarnessMode,
    grammar: &Grammar,
    train: &Dataset,
    rng: &mut ChaCha8Rng,
) -> Result<(NspModel, NspStageReport), PipelineError> {
    let (examples, underivable) = nsp_examples(train, grammar, mode);
    let mut model = NspModel::new(NspConfig::default(), grammar);
    let tcfg = NspTrainConfig {
        epochs: cfg.nsp_epochs,
        adam: AdamConfig { lr: 0.05, ..Default::default() },
        feature_dropout: if mode.uses_roles() { cfg.feature_dropout } else { 0.0 },
        beam_size: cfg.beam_size,
    };
    let report = train_nsp(&mut model, &examples, &[], &tcfg, rng).map_err(|e| PipelineError::stage("nsp", e))?;
    Ok((model, NspStageReport { train: report, rules: grammar.len(), underivable }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub ner: NerTrainReport,
    pub nel: NelStageReport,
    pub nsp: NspStageReport,
}

/// Trains all three stages for the configured mode and NER switches, drawing
/// every random choice from one generator seeded by `cfg.seed`.
pub fn train_all(cfg: &PipelineConfig, train: &Dataset, dev: Option<&Dataset>) -> Result<(Artifacts, TrainReport), PipelineError> {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (ner, ner_r) = train_ner_stage(cfg, cfg.ner, train, dev, &mut rng)?;
    let (nel, nel_r) = train_nel_stage(cfg, train, dev, &mut rng)?;
    let grammar = induce_from(train);
    let (nsp, nsp_r) = train_nsp_stage(cfg, cfg.mode, &grammar, train, &mut rng)?;
    Ok((Artifacts { ner, nel, nsp, grammar }, TrainReport { ner: ner_r, nel: nel_r, nsp: nsp_r }))
}
