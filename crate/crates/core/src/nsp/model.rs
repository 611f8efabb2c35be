use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::beam::decode_beam;
use super::encode::EncoderOutput;
use super::features::ColumnRole;
use super::scorer::{legal_actions, log_softmax, slot_availability, ActionScorer, StepInput};
use super::NspError;
use crate::data::TableData;
use crate::grammar::{DecoderAction, Grammar, NonTerminal, PartialTree, SlotKind};
use crate::optim::{Adam, AdamConfig, SparseGrad};
use crate::sql::{denotation_equal, execute, serialize, SqlTree};
use crate::text::{canonical_decimal, hash_parts, normalize};

pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NspConfig {
    pub buckets: usize,
    pub hash_seed: u64,
    pub max_steps: usize,
}

impl Default for NspConfig {
    fn default() -> Self {
        NspConfig {
            buckets: 1 << 18,
            hash_seed: 41,
            max_steps: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NspTrainConfig {
    pub epochs: usize,
    pub adam: AdamConfig,
    /// Per-example probability of training without column roles.
    pub feature_dropout: f64,
    pub beam_size: usize,
}

impl Default for NspTrainConfig {
    fn default() -> Self {
        NspTrainConfig {
            epochs: 12,
            adam: AdamConfig { lr: 0.05, ..Default::default() },
            feature_dropout: 0.2,
            beam_size: 4,
        }
    }
}

/// Log-linear action scorer over hashed conjunctions of decoder context and
/// action or candidate properties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NspModel {
    pub version: u32,
    pub config: NspConfig,
    /// Rules in grammar order; rule ids index this list.
    pub grammar: Vec<String>,
    pub weights: Vec<f64>,
}

#[inline]
fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9e37_79b9_7f4a_7c15).rotate_left(23);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn clause_role(nt: Option<NonTerminal>) -> ColumnRole {
    match nt {
        Some(NonTerminal::SelectClause) => ColumnRole::Select,
        Some(NonTerminal::WhereClause) => ColumnRole::Where,
        Some(NonTerminal::GroupClause) => ColumnRole::GroupBy,
        Some(NonTerminal::OrderClause) => ColumnRole::OrderBy,
        _ => ColumnRole::Absent,
    }
}

fn bin(n: usize, cap: usize) -> usize {
    n.min(cap)
}

/// Hashed features of one step, shared by all candidate actions.
struct StepFeatures {
    /// Context keys conjoined with rule identities.
    rule_ctx: Vec<u64>,
    /// Small context set conjoined with copy-candidate properties.
    copy_ctx: Vec<u64>,
}

impl NspModel {
    pub fn new(config: NspConfig, grammar: &Grammar) -> Self {
        NspModel {
            version: ARTIFACT_VERSION,
            config,
            grammar: grammar.rules().iter().map(|r| r.to_string()).collect(),
            weights: vec![0.0; config.buckets],
        }
    }

    pub fn grammar(&self) -> Result<Grammar, NspError> {
        Grammar::from_text(&self.grammar.join("\n")).map_err(NspError::Grammar)
    }

    fn key(&self, s: &str) -> u64 {
        hash_parts(&[&self.config.hash_seed.to_string(), s])
    }

    fn step_features(&self, step: &StepInput) -> StepFeatures {
        let enc = step.enc;
        let t = step.state.target().expect("incomplete state");
        let mut ctx: Vec<String> = vec!["bias".into(), format!("fr={}", t.symbol)];
        let par = match t.parent {
            Some((r, pos)) => format!("par={}@{pos}", r.0),
            None => "par=root".into(),
        };
        let cl = format!("cl={}", t.clause.map(NonTerminal::name).unwrap_or("none"));
        let prev = match step.history.last() {
            Some(DecoderAction::ApplyRule(r)) => format!("prev=R{}", r.0),
            Some(a) => format!("prev=C{:?}", a.slot().unwrap()),
            None => "prev=start".into(),
        };
        ctx.push(par.clone());
        ctx.push(cl.clone());
        ctx.push(prev);
        ctx.push(format!("depth={}", bin(t.depth, 8)));
        let mut seen = HashSet::new();
        for w in &enc.query {
            if seen.insert(w.as_str()) {
                ctx.push(format!("q={w}"));
            }
        }
        for b in enc.query.windows(2) {
            ctx.push(format!("qb={}_{}", b[0], b[1]));
        }
        let mut label_counts = std::collections::BTreeMap::new();
        for (_, _, l) in &enc.entities {
            *label_counts.entry(l.name()).or_insert(0usize) += 1;
        }
        for (l, c) in label_counts {
            ctx.push(format!("ner={l}"));
            ctx.push(format!("ner={l}:{}", bin(c, 3)));
        }
        let used_cols: HashSet<&str> = step.state.copied(SlotKind::Column).collect();
        let used_vals: HashSet<&str> = step.state.copied(SlotKind::Value).collect();
        let mut role_left = std::collections::BTreeMap::new();
        for c in &enc.columns {
            if c.role != ColumnRole::Absent {
                let e = role_left.entry(c.role.name()).or_insert((0usize, 0usize));
                e.0 += 1;
                if !used_cols.contains(c.id.as_str()) {
                    e.1 += 1;
                }
            }
        }
        for (r, (all, left)) in role_left {
            ctx.push(format!("role={r}:{}", bin(all, 3)));
            ctx.push(format!("left={r}:{}", bin(left, 2)));
        }
        let vleft = enc.values.iter().filter(|v| !used_vals.contains(v.text.as_str())).count();
        ctx.push(format!("nval={}", bin(enc.values.len(), 3)));
        ctx.push(format!("vleft={}", bin(vleft, 3)));
        StepFeatures {
            rule_ctx: ctx.iter().map(|s| self.key(s)).collect(),
            copy_ctx: vec![self.key("bias"), self.key(&cl), self.key(&par)],
        }
    }

    fn push_copy(&self, sf: &StepFeatures, key: &str, val: f64, out: &mut Vec<(usize, f64)>) {
        let k = self.key(key);
        let b = self.config.buckets as u64;
        for &c in &sf.copy_ctx {
            out.push(((mix(c, k) % b) as usize, val));
        }
    }

    fn action_features(&self, step: &StepInput, sf: &StepFeatures, a: &DecoderAction) -> Vec<(usize, f64)> {
        let b = self.config.buckets as u64;
        let mut out = Vec::new();
        let enc = step.enc;
        match a {
            DecoderAction::ApplyRule(r) => {
                let k = self.key(&format!("R{}", r.0));
                for &c in &sf.rule_ctx {
                    out.push(((mix(c, k) % b) as usize, 1.0));
                }
            }
            DecoderAction::CopyTable(_) => self.push_copy(sf, "table", 1.0, &mut out),
            DecoderAction::CopyColumn(id) => {
                let Some(col) = enc.column(id) else { return out };
                let t = step.state.target().expect("incomplete state");
                let want = clause_role(t.clause);
                let used_cols: HashSet<&str> = step.state.copied(SlotKind::Column).collect();
                let used_vals: HashSet<&str> = step.state.copied(SlotKind::Value).collect();
                let used = used_cols.contains(id.as_str());
                let mut keys = vec![
                    format!("cr={}", col.role.name()),
                    format!("rm={}", col.role == want),
                    format!("rm={}|used={used}", col.role == want),
                    format!("ty={}", col.ty.name()),
                    format!("used={used}"),
                    format!("holds={}", !col.holds.is_empty()),
                    format!("fzb={}", (col.query_fuzzy * 5.0).floor() as usize),
                    format!("cidx={}", bin(col.index, 9)),
                ];
                let unused_vals: Vec<usize> = (0..enc.values.len())
                    .filter(|&i| !used_vals.contains(enc.values[i].text.as_str()))
                    .collect();
                let first = unused_vals.iter().position(|i| col.holds.contains(i));
                keys.push(format!("holdsrank={}", first.map(|r| bin(r, 2).to_string()).unwrap_or("na".into())));
                if let Some(p) = col.role_position {
                    let rank = enc
                        .columns
                        .iter()
                        .filter(|o| {
                            o.role == col.role
                                && !used_cols.contains(o.id.as_str())
                                && o.role_position.is_some_and(|q| q < p)
                        })
                        .count();
                    keys.push(format!("rrank={}|used={used}", bin(rank, 2)));
                }
                let mut hit = false;
                for dw in &col.display_words {
                    if enc.query.contains(dw) {
                        hit = true;
                    }
                    for qw in &enc.query {
                        keys.push(format!("dq={dw}|{qw}"));
                    }
                }
                keys.push(format!("dwhit={hit}"));
                for k in &keys {
                    self.push_copy(sf, k, 1.0, &mut out);
                }
                self.push_copy(sf, "fz", col.query_fuzzy, &mut out);
            }
            DecoderAction::CopyValue(text) => {
                let Some((i, v)) = enc.value(text) else { return out };
                let used_vals: HashSet<&str> = step.state.copied(SlotKind::Value).collect();
                let used = used_vals.contains(text.as_str());
                let sib = match step.state.sibling_column() {
                    Some(c) => v.columns.iter().any(|x| x == c).to_string(),
                    None => "na".into(),
                };
                let rank = if used {
                    "used".to_string()
                } else {
                    bin(
                        (0..i).filter(|&j| !used_vals.contains(enc.values[j].text.as_str())).count(),
                        2,
                    )
                    .to_string()
                };
                for k in [
                    format!("sib={sib}"),
                    format!("vused={used}"),
                    format!("vrank={rank}"),
                    format!("vrank={rank}|sib={sib}"),
                    format!("num={}", v.numeric),
                ] {
                    self.push_copy(sf, &k, 1.0, &mut out);
                }
                self.push_copy(sf, "vscore", v.score, &mut out);
            }
        }
        out
    }

    fn logits_with_features(&self, step: &StepInput, actions: &[DecoderAction]) -> (Vec<f64>, Vec<Vec<(usize, f64)>>) {
        let sf = self.step_features(step);
        let feats: Vec<Vec<(usize, f64)>> = actions.iter().map(|a| self.action_features(step, &sf, a)).collect();
        let z = feats
            .iter()
            .map(|f| f.iter().map(|&(i, v)| self.weights[i] * v).sum())
            .collect();
        (z, feats)
    }

    /// Teacher-forced NLL of one action sequence, adding its gradient into
    /// `grad`. Returns the loss and the number of gold actions that were not
    /// legal (skipped, but still applied).
    pub fn sequence_loss(
        &self,
        grammar: &Grammar,
        enc: &EncoderOutput,
        actions: &[DecoderAction],
        mut grad: Option<&mut SparseGrad>,
    ) -> Result<(f64, usize), NspError> {
        let costs = grammar.min_costs(slot_availability(enc));
        let mut state = PartialTree::new(grammar.start_symbol());
        let mut loss = 0.0;
        let mut skipped = 0;
        for (t, gold) in actions.iter().enumerate() {
            let step = StepInput {
                enc,
                grammar,
                state: &state,
                history: &actions[..t],
            };
            let legal = legal_actions(&step, &costs, self.config.max_steps);
            match legal.iter().position(|a| a == gold) {
                Some(y) if legal.len() > 1 => {
                    let (z, feats) = self.logits_with_features(&step, &legal);
                    let lp = log_softmax(&z);
                    loss -= lp[y];
                    if let Some(g) = grad.as_deref_mut() {
                        for (k, f) in feats.iter().enumerate() {
                            let d = lp[k].exp() - if k == y { 1.0 } else { 0.0 };
                            for &(i, v) in f {
                                g.add(i, d * v);
                            }
                        }
                    }
                }
                Some(_) => {}
                None => skipped += 1,
            }
            state.apply(grammar, gold).map_err(NspError::Grammar)?;
        }
        Ok((loss, skipped))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, NspError> {
        let m: NspModel = serde_json::from_str(s).map_err(|e| NspError::Artifact(e.to_string()))?;
        if m.version != ARTIFACT_VERSION {
            return Err(NspError::Artifact(format!("unsupported version {}", m.version)));
        }
        if m.weights.len() != m.config.buckets {
            return Err(NspError::Artifact("weight count does not match config".into()));
        }
        m.grammar()?;
        Ok(m)
    }
}

impl ActionScorer for NspModel {
    fn logits(&self, step: &StepInput, actions: &[DecoderAction]) -> Vec<f64> {
        self.logits_with_features(step, actions).0
    }
}

/// Maps gold copy values onto the encoder's value strings: exact text, then
/// normalized text, then numeric equality. Returns the mapped sequence and
/// how many values had no counterpart.
pub fn align_gold_actions(actions: &[DecoderAction], enc: &EncoderOutput) -> (Vec<DecoderAction>, usize) {
    let mut missing = 0;
    let out = actions
        .iter()
        .map(|a| match a {
            DecoderAction::CopyValue(v) => {
                let hit = enc
                    .values
                    .iter()
                    .find(|x| &x.text == v)
                    .or_else(|| enc.values.iter().find(|x| normalize(&x.text) == normalize(v)))
                    .or_else(|| {
                        let n = canonical_decimal(v)?;
                        enc.values
                            .iter()
                            .find(|x| canonical_decimal(x.text.trim()).as_deref() == Some(n.as_str()))
                    });
                match hit {
                    Some(x) => DecoderAction::CopyValue(x.text.clone()),
                    None => {
                        missing += 1;
                        a.clone()
                    }
                }
            }
            _ => a.clone(),
        })
        .collect();
    (out, missing)
}

/// One teacher-forcing example: the encoding with column roles, the same
/// encoding with roles dropped, and the gold actions.
#[derive(Debug, Clone)]
pub struct NspExample {
    pub enc: EncoderOutput,
    pub enc_dropped: EncoderOutput,
    pub actions: Vec<DecoderAction>,
}

/// A held-out question for dev metrics.
#[derive(Debug, Clone)]
pub struct NspEval<'a> {
    pub enc: EncoderOutput,
    pub gold: &'a SqlTree,
    pub table: &'a TableData,
    pub answer: &'a [String],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NspTrainReport {
    /// Mean per-example NLL after each epoch (features kept, no dropout).
    pub loss_curve: Vec<f64>,
    /// Gold steps that were not legal actions (per epoch-free pass).
    pub skipped_steps: usize,
    pub dev_exact_match: Option<f64>,
    pub dev_execution: Option<f64>,
}

/// Logical-form and execution accuracy of top-1 beam decodes.
pub fn evaluate_decoder(model: &NspModel, grammar: &Grammar, dev: &[NspEval], beam_size: usize) -> (f64, f64) {
    if dev.is_empty() {
        return (0.0, 0.0);
    }
    let (mut lf, mut exe) = (0usize, 0usize);
    for d in dev {
        let Ok(out) = decode_beam(&d.enc, grammar, model, beam_size, model.config.max_steps) else {
            continue;
        };
        let pred = &out[0].tree;
        if serialize(pred) == serialize(d.gold) {
            lf += 1;
        }
        if execute(pred, d.table).is_ok_and(|den| denotation_equal(&den, d.answer)) {
            exe += 1;
        }
    }
    (lf as f64 / dev.len() as f64, exe as f64 / dev.len() as f64)
}

/// Teacher-forced training with per-example feature dropout.
pub fn train_nsp(
    model: &mut NspModel,
    train: &[NspExample],
    dev: &[NspEval],
    cfg: &NspTrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<NspTrainReport, NspError> {
    if train.is_empty() {
        return Err(NspError::EmptyTrainingSet);
    }
    let grammar = model.grammar()?;
    let mut opt = Adam::new(model.weights.len(), cfg.adam);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut grad = SparseGrad::new();
    let mut loss_curve = Vec::new();
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for &i in &order {
            let ex = &train[i];
            let enc = if rng.random_bool(cfg.feature_dropout.clamp(0.0, 1.0)) {
                &ex.enc_dropped
            } else {
                &ex.enc
            };
            grad.clear();
            model.sequence_loss(&grammar, enc, &ex.actions, Some(&mut grad))?;
            if !grad.is_empty() {
                opt.step(&mut model.weights, &grad);
            }
        }
        let mut total = 0.0;
        for ex in train {
            total += model.sequence_loss(&grammar, &ex.enc, &ex.actions, None)?.0;
        }
        loss_curve.push(total / train.len() as f64);
    }
    let mut skipped = 0;
    for ex in train {
        skipped += model.sequence_loss(&grammar, &ex.enc, &ex.actions, None)?.1;
    }
    let (lf, exe) = if dev.is_empty() {
        (None, None)
    } else {
        let (a, b) = evaluate_decoder(model, &grammar, dev, cfg.beam_size);
        (Some(a), Some(b))
    };
    Ok(NspTrainReport {
        loss_curve,
        skipped_steps: skipped,
        dev_exact_match: lf,
        dev_execution: exe,
    })
}
