use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::candidates::{assemble_input, generate_candidates, LinkCandidate, LinkContext, LinkInput};
use super::LinkError;
use crate::data::{ColumnType, TypedSpan};
use crate::optim::{Adam, AdamConfig, SparseGrad};
use crate::text::{acronym, bucket, fuzzy_score, jaccard, normalize, words};

pub const ARTIFACT_VERSION: u32 = 1;

/// Names of the dense pairwise features, in weight order.
pub const FEATURE_NAMES: [&str; 14] = [
    "fuzzy",
    "jaccard",
    "prefix_overlap",
    "suffix_overlap",
    "acronym",
    "length_ratio",
    "exact",
    "containment",
    "in_query",
    "meta_fuzzy",
    "meta_present",
    "type_number",
    "type_string",
    "type_date",
];
const N_DENSE: usize = FEATURE_NAMES.len();
const EXACT: usize = 6;
const FUZZY: usize = 0;

/// Features of one assembled input: dense values plus hashed indicator
/// buckets.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkFeatures {
    pub dense: [f64; N_DENSE],
    pub hashed: Vec<usize>,
}

fn common_prefix(a: &str, b: &str) -> usize {
    a.chars().zip(b.chars()).take_while(|(x, y)| x == y).count()
}

fn common_suffix(a: &str, b: &str) -> usize {
    a.chars().rev().zip(b.chars().rev()).take_while(|(x, y)| x == y).count()
}

/// Dense features of a mention/candidate pair.
pub fn pair_features(input: &LinkInput) -> [f64; N_DENSE] {
    let m = normalize(input.mention());
    let c = normalize(input.candidate());
    let (lm, lc) = (m.chars().count(), c.chars().count());
    let shortest = lm.min(lc).max(1) as f64;
    let compact = |s: &str| s.chars().filter(|ch| ch.is_alphanumeric()).collect::<String>();
    let mw = words(&m);
    let cw = words(&c);
    let mut f = [0.0; N_DENSE];
    f[0] = fuzzy_score(&m, &c);
    f[1] = jaccard(&m, &c);
    f[2] = common_prefix(&m, &c) as f64 / shortest;
    f[3] = common_suffix(&m, &c) as f64 / shortest;
    let ca = acronym(input.candidate());
    let ma = acronym(input.mention());
    f[4] = if (ca.len() >= 2 && compact(&m) == ca) || (ma.len() >= 2 && compact(&c) == ma) {
        1.0
    } else {
        0.0
    };
    f[5] = if lm.max(lc) == 0 { 1.0 } else { lm.min(lc) as f64 / lm.max(lc) as f64 };
    f[6] = if m == c { 1.0 } else { 0.0 };
    f[7] = if mw.is_empty() {
        0.0
    } else {
        mw.iter().filter(|w| cw.contains(w)).count() as f64 / mw.len() as f64
    };
    let q = format!(" {} ", normalize(input.query()));
    f[8] = if !c.is_empty() && q.contains(&format!(" {c} ")) { 1.0 } else { 0.0 };
    if let Some(v) = input.meta_value() {
        if !v.is_empty() {
            f[9] = fuzzy_score(&m, v);
            f[10] = 1.0;
        }
    }
    match input.meta_type() {
        Some(t) if t == ColumnType::Number.name() => f[11] = 1.0,
        Some(t) if t == ColumnType::String.name() => f[12] = 1.0,
        Some(t) if t == ColumnType::Date.name() => f[13] = 1.0,
        _ => {}
    }
    f
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkerConfig {
    pub buckets: usize,
    pub hash_seed: u64,
}

impl Default for LinkerConfig {
    fn default() -> Self {
        LinkerConfig {
            buckets: 1 << 16,
            hash_seed: 29,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkerTrainConfig {
    pub epochs: usize,
    pub adam: AdamConfig,
    /// L2 penalty on hashed weights.
    pub l2: f64,
}

impl Default for LinkerTrainConfig {
    fn default() -> Self {
        LinkerTrainConfig {
            epochs: 15,
            adam: AdamConfig { lr: 0.05, ..Default::default() },
            l2: 0.0,
        }
    }
}

/// Linear ranking model: named dense weights plus hashed cross-feature
/// weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkerModel {
    pub version: u32,
    pub config: LinkerConfig,
    pub feature_names: Vec<String>,
    /// Dense weights followed by hashed weights.
    pub weights: Vec<f64>,
}

impl LinkerModel {
    pub fn zeros(config: LinkerConfig) -> Self {
        LinkerModel {
            version: ARTIFACT_VERSION,
            config,
            feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            weights: vec![0.0; N_DENSE + config.buckets],
        }
    }

    /// Untrained model that scores by exact match only.
    pub fn exact_match_baseline(config: LinkerConfig) -> Self {
        let mut m = Self::zeros(config);
        m.weights[EXACT] = 1.0;
        m
    }

    /// Untrained model that scores by fuzzy similarity only.
    pub fn fuzzy_baseline(config: LinkerConfig) -> Self {
        let mut m = Self::zeros(config);
        m.weights[FUZZY] = 1.0;
        m
    }

    pub fn dense_weight(&self, name: &str) -> Option<f64> {
        FEATURE_NAMES.iter().position(|n| *n == name).map(|i| self.weights[i])
    }

    pub fn features(&self, input: &LinkInput) -> LinkFeatures {
        let seed = self.config.hash_seed.to_string();
        let b = self.config.buckets;
        let m = normalize(input.mention());
        let c = normalize(input.candidate());
        let mut hashed = vec![N_DENSE + bucket(&[&seed, "pair", &m, &c], b)];
        let cw = words(&c);
        for mw in words(&m) {
            for x in &cw {
                hashed.push(N_DENSE + bucket(&[&seed, "ww", &mw, x], b));
            }
        }
        if let Some(t) = input.meta_type() {
            for mw in words(&m) {
                hashed.push(N_DENSE + bucket(&[&seed, "wt", &mw, t], b));
            }
        }
        LinkFeatures {
            dense: pair_features(input),
            hashed,
        }
    }

    pub fn score_features(&self, f: &LinkFeatures) -> f64 {
        let dense: f64 = f.dense.iter().zip(&self.weights).map(|(a, b)| a * b).sum();
        dense + f.hashed.iter().map(|&i| self.weights[i]).sum::<f64>()
    }

    /// One logit per input, each computed independently.
    pub fn score_candidates(&self, inputs: &[LinkInput]) -> Vec<f64> {
        inputs.iter().map(|i| self.score_features(&self.features(i))).collect()
    }

    /// Softmax cross-entropy of one group, adding its gradient into `grad`.
    fn group_loss(&self, feats: &[LinkFeatures], gold: usize, grad: Option<&mut SparseGrad>) -> f64 {
        let z: Vec<f64> = feats.iter().map(|f| self.score_features(f)).collect();
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + z.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
        if let Some(grad) = grad {
            for (k, f) in feats.iter().enumerate() {
                let dz = (z[k] - lse).exp() - if k == gold { 1.0 } else { 0.0 };
                for (j, v) in f.dense.iter().enumerate() {
                    if *v != 0.0 {
                        grad.add(j, dz * v);
                    }
                }
                for &h in &f.hashed {
                    grad.add(h, dz);
                }
            }
        }
        lse - z[gold]
    }

    /// Summed loss and dense gradient over groups.
    pub fn loss_and_gradient(&self, groups: &[LinkGroup]) -> (f64, Vec<f64>) {
        let mut g = SparseGrad::new();
        let mut loss = 0.0;
        for grp in groups {
            let feats: Vec<_> = grp.inputs.iter().map(|i| self.features(i)).collect();
            loss += self.group_loss(&feats, grp.gold, Some(&mut g));
        }
        let mut dense = vec![0.0; self.weights.len()];
        for (i, v) in g.sorted() {
            dense[i] = v;
        }
        (loss, dense)
    }

    pub fn loss(&self, groups: &[LinkGroup]) -> f64 {
        groups
            .iter()
            .map(|grp| {
                let feats: Vec<_> = grp.inputs.iter().map(|i| self.features(i)).collect();
                self.group_loss(&feats, grp.gold, None)
            })
            .sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, LinkError> {
        let m: LinkerModel = serde_json::from_str(s).map_err(|e| LinkError::Artifact(e.to_string()))?;
        if m.version != ARTIFACT_VERSION {
            return Err(LinkError::Artifact(format!("unsupported version {}", m.version)));
        }
        if m.weights.len() != N_DENSE + m.config.buckets || m.feature_names != FEATURE_NAMES {
            return Err(LinkError::Artifact("weights do not match features".into()));
        }
        Ok(m)
    }
}

/// Candidates of one mention with the gold position.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkGroup {
    pub inputs: Vec<LinkInput>,
    pub candidate_ids: Vec<String>,
    pub gold: usize,
}

/// Why a mention yielded no training group.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub groups: usize,
    /// Fewer than two candidates.
    pub degenerate: usize,
    /// Gold target absent from the candidate list.
    pub gold_missing: usize,
    /// Mentions without a link target or with an unlinkable label.
    pub skipped: usize,
}

/// Builds a training group for every linked column or literal span.
pub fn build_groups(ctx: &LinkContext, spans: &[TypedSpan], stats: &mut GroupStats) -> Vec<LinkGroup> {
    let mut out = Vec::new();
    for s in spans {
        let Some(target) = &s.link_target else {
            stats.skipped += 1;
            continue;
        };
        let Ok(set) = generate_candidates(ctx, s) else {
            stats.skipped += 1;
            continue;
        };
        if set.candidates.len() < 2 {
            stats.degenerate += 1;
            continue;
        }
        let Some(gold) = set.candidates.iter().position(|c| &c.candidate_id == target) else {
            stats.gold_missing += 1;
            continue;
        };
        stats.groups += 1;
        out.push(LinkGroup {
            inputs: set.candidates.iter().map(|c| assemble_input(ctx.tokens, s, c)).collect(),
            candidate_ids: set.candidates.into_iter().map(|c| c.candidate_id).collect(),
            gold,
        });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkerTrainReport {
    /// Mean group loss after each epoch.
    pub loss_curve: Vec<f64>,
    pub degenerate_groups: usize,
    pub dev_top1: Option<f64>,
}

/// Top-1 accuracy with ties broken by candidate id.
pub fn top1_accuracy(model: &LinkerModel, groups: &[LinkGroup]) -> f64 {
    if groups.is_empty() {
        return 0.0;
    }
    let correct = groups
        .iter()
        .filter(|g| {
            let scores = model.score_candidates(&g.inputs);
            let best = (0..scores.len())
                .max_by(|&a, &b| {
                    scores[a]
                        .total_cmp(&scores[b])
                        .then(g.candidate_ids[b].cmp(&g.candidate_ids[a]))
                })
                .unwrap();
            best == g.gold
        })
        .count();
    correct as f64 / groups.len() as f64
}

/// Per-group softmax cross-entropy with Adam, one group per update.
/// Groups with fewer than two candidates are skipped and counted.
pub fn train_nel(
    model: &mut LinkerModel,
    train: &[LinkGroup],
    dev: &[LinkGroup],
    cfg: &LinkerTrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<LinkerTrainReport, LinkError> {
    let mut degenerate = 0;
    let prepared: Vec<(Vec<LinkFeatures>, usize)> = train
        .iter()
        .filter(|g| {
            let ok = g.inputs.len() >= 2 && g.gold < g.inputs.len();
            if !ok {
                degenerate += 1;
            }
            ok
        })
        .map(|g| (g.inputs.iter().map(|i| model.features(i)).collect(), g.gold))
        .collect();
    if prepared.is_empty() {
        return Err(LinkError::EmptyTrainingSet);
    }
    let mut opt = Adam::new(model.weights.len(), cfg.adam);
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    let mut loss_curve = Vec::new();
    let mut grad = SparseGrad::new();
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for &i in &order {
            grad.clear();
            let (feats, gold) = &prepared[i];
            model.group_loss(feats, *gold, Some(&mut grad));
            if cfg.l2 > 0.0 {
                for f in feats {
                    for &h in &f.hashed {
                        grad.add(h, cfg.l2 * model.weights[h]);
                    }
                }
            }
            opt.step(&mut model.weights, &grad);
        }
        let total: f64 = prepared.iter().map(|(f, g)| model.group_loss(f, *g, None)).sum();
        loss_curve.push(total / prepared.len() as f64);
    }
    Ok(LinkerTrainReport {
        loss_curve,
        degenerate_groups: degenerate,
        dev_top1: (!dev.is_empty()).then(|| top1_accuracy(model, dev)),
    })
}

/// Ranked candidates of one mention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkResult {
    pub mention: TypedSpan,
    pub ranked: Vec<(LinkCandidate, f64)>,
    pub chosen: LinkCandidate,
}

impl LinkResult {
    pub fn score(&self) -> f64 {
        self.ranked[0].1
    }

    /// Softmax probability of the chosen candidate within the group.
    pub fn confidence(&self) -> f64 {
        let m = self.ranked[0].1;
        1.0 / self.ranked.iter().map(|(_, s)| (s - m).exp()).sum::<f64>()
    }
}

/// Scores every candidate and ranks them; ties go to the smaller id.
pub fn link(ctx: &LinkContext, mention: &TypedSpan, model: &LinkerModel) -> Result<LinkResult, LinkError> {
    let set = generate_candidates(ctx, mention)?;
    let inputs: Vec<LinkInput> = set
        .candidates
        .iter()
        .map(|c| assemble_input(ctx.tokens, mention, c))
        .collect();
    let scores = model.score_candidates(&inputs);
    let mut ranked: Vec<(LinkCandidate, f64)> = set.candidates.into_iter().zip(scores).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.candidate_id.cmp(&b.0.candidate_id)));
    let mut mention = mention.clone();
    mention.link_target = Some(ranked[0].0.candidate_id.clone());
    Ok(LinkResult {
        mention,
        chosen: ranked[0].0.clone(),
        ranked,
    })
}
