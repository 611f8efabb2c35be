use rand::Rng;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::decode::{predict_spans, span_f1, SpanF1};
use super::gazetteer::Gazetteer;
use super::{enumerate_spans, NerError, NerInstance, SpanScores};
use crate::data::EntityLabel;
use crate::optim::{Adam, AdamConfig, SparseGrad};
use crate::text::{bucket, normalize, words};

pub const ARTIFACT_VERSION: u32 = 1;
const L: usize = EntityLabel::COUNT;

/// Shape and input options of a span model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NerConfig {
    /// Token vector size `d`.
    pub dim: usize,
    /// Length embedding size.
    pub len_dim: usize,
    pub max_span_len: usize,
    /// Hashed feature buckets (rows of the projection).
    pub buckets: usize,
    pub hash_seed: u64,
    /// Token features derived from column display names.
    pub use_schema: bool,
    /// Token features derived from cell values.
    pub use_cell: bool,
}

impl Default for NerConfig {
    fn default() -> Self {
        NerConfig {
            dim: 16,
            len_dim: 8,
            max_span_len: 8,
            buckets: 1 << 14,
            hash_seed: 17,
            use_schema: true,
            use_cell: true,
        }
    }
}

impl NerConfig {
    /// Size of the span representation `[e_ctx; e_start; e_end; e_length]`.
    pub fn span_dim(&self) -> usize {
        3 * self.dim + self.len_dim
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NerTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Learning rate at epoch `e` is `lr / (1 + lr_decay * e)`.
    pub lr_decay: f64,
    pub use_gazetteer: bool,
}

impl Default for NerTrainConfig {
    fn default() -> Self {
        NerTrainConfig {
            epochs: 30,
            batch_size: 4,
            adam: AdamConfig { lr: 0.02, ..Default::default() },
            lr_decay: 0.05,
            use_gazetteer: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NerTrainReport {
    /// Mean per-example summed span NLL after each epoch's updates.
    pub loss_curve: Vec<f64>,
    /// Gold spans longer than `max_span_len`.
    pub unreachable_spans: usize,
    pub dev_f1: Option<SpanF1>,
}

/// Span classifier over hashed token features.
///
/// Parameters live in one flat buffer: the feature projection (`buckets x
/// dim`), the classifier `W` (`labels x span_dim`), its bias, and the length
/// embeddings (`max_span_len x len_dim`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NerModel {
    pub version: u32,
    pub config: NerConfig,
    pub params: Vec<f64>,
}

/// Feature buckets of each query token.
pub(crate) struct Encoded {
    feats: Vec<Vec<usize>>,
}

struct Offsets {
    w: usize,
    b: usize,
    len: usize,
    total: usize,
}

impl NerModel {
    fn offsets(c: &NerConfig) -> Offsets {
        let w = c.buckets * c.dim;
        let b = w + L * c.span_dim();
        let len = b + L;
        Offsets {
            w,
            b,
            len,
            total: len + c.max_span_len * c.len_dim,
        }
    }

    /// All-zero parameters: every span gets the uniform distribution.
    pub fn zeros(config: NerConfig) -> Self {
        NerModel {
            version: ARTIFACT_VERSION,
            config,
            params: vec![0.0; Self::offsets(&config).total],
        }
    }

    pub fn init(config: NerConfig, rng: &mut ChaCha8Rng) -> Self {
        let mut m = Self::zeros(config);
        let o = Self::offsets(&config);
        for p in &mut m.params[..o.b] {
            *p = rng.random_range(-0.05..0.05);
        }
        for p in &mut m.params[o.len..] {
            *p = rng.random_range(-0.05..0.05);
        }
        m
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub(crate) fn encode(&self, tokens: &[String], gaz: &Gazetteer) -> Encoded {
        let c = &self.config;
        let n = tokens.len();
        let seed = c.hash_seed.to_string();
        // Exact gazetteer matches as begin/inside/end/single flags per token.
        let mut gz: Vec<Vec<String>> = vec![Vec::new(); n];
        for (s, e) in enumerate_spans(n, c.max_span_len) {
            let (schema, cell) = gaz.sources(&tokens[s..e].join(" "));
            for (hit, name) in [(schema && c.use_schema, "schema"), (cell && c.use_cell, "cell")] {
                if !hit {
                    continue;
                }
                if e - s == 1 {
                    gz[s].push(format!("{name}:S"));
                } else {
                    gz[s].push(format!("{name}:B"));
                    gz[e - 1].push(format!("{name}:E"));
                    for slot in gz.iter_mut().take(e - 1).skip(s + 1) {
                        slot.push(format!("{name}:I"));
                    }
                }
            }
        }
        let norm: Vec<String> = tokens.iter().map(|t| normalize(t)).collect();
        let feats = (0..n)
            .map(|i| {
                let w = &norm[i];
                let mut f: Vec<String> = vec!["bias".into(), format!("w={w}")];
                let padded: Vec<char> = format!("^{w}$").chars().collect();
                for g in padded.windows(3) {
                    f.push(format!("c3={}", g.iter().collect::<String>()));
                }
                let raw = &tokens[i];
                if raw.chars().any(|ch| ch.is_ascii_digit()) {
                    f.push("has_digit".into());
                }
                if raw.chars().all(|ch| ch.is_ascii_digit()) {
                    f.push("all_digit".into());
                }
                if raw.chars().next().is_some_and(char::is_uppercase) {
                    f.push("init_cap".into());
                }
                f.push(format!("prev={}", if i > 0 { norm[i - 1].as_str() } else { "<s>" }));
                f.push(format!("next={}", norm.get(i + 1).map(String::as_str).unwrap_or("</s>")));
                if i == 0 {
                    f.push("first".into());
                }
                if i + 1 == n {
                    f.push("last".into());
                }
                let (sw, cw) = words(w).iter().fold((false, false), |acc, x| {
                    let h = gaz.word_hits(x);
                    (acc.0 || h.0, acc.1 || h.1)
                });
                if sw && c.use_schema {
                    f.push("schema:partial".into());
                }
                if cw && c.use_cell {
                    f.push("cell:partial".into());
                }
                for g in &gz[i] {
                    f.push(format!("gz={g}"));
                    f.push(format!("gz={g}|w={w}"));
                }
                f.iter().map(|s| bucket(&[&seed, s], c.buckets)).collect()
            })
            .collect();
        Encoded { feats }
    }

    fn token_vectors(&self, enc: &Encoded) -> Vec<Vec<f64>> {
        let d = self.config.dim;
        enc.feats
            .iter()
            .map(|fs| {
                let mut h = vec![0.0; d];
                for &f in fs {
                    let row = &self.params[f * d..(f + 1) * d];
                    for (a, b) in h.iter_mut().zip(row) {
                        *a += b;
                    }
                }
                h
            })
            .collect()
    }

    fn context(h: &[Vec<f64>], d: usize) -> Vec<f64> {
        let mut ctx = vec![0.0; d];
        for v in h {
            for (a, b) in ctx.iter_mut().zip(v) {
                *a += b;
            }
        }
        let n = h.len().max(1) as f64;
        ctx.iter_mut().for_each(|x| *x /= n);
        ctx
    }

    /// Span representation `[e_ctx; e_start; e_end; e_length]`.
    fn span_repr(&self, h: &[Vec<f64>], ctx: &[f64], s: usize, e: usize) -> Vec<f64> {
        let c = &self.config;
        let o = Self::offsets(c);
        let mut v = Vec::with_capacity(c.span_dim());
        v.extend_from_slice(ctx);
        v.extend_from_slice(&h[s]);
        v.extend_from_slice(&h[e - 1]);
        let l = o.len + (e - s - 1) * c.len_dim;
        v.extend_from_slice(&self.params[l..l + c.len_dim]);
        v
    }

    fn logits(&self, es: &[f64]) -> [f64; L] {
        let o = Self::offsets(&self.config);
        let sd = self.config.span_dim();
        let mut z = [0.0; L];
        for (k, zk) in z.iter_mut().enumerate() {
            let row = &self.params[o.w + k * sd..o.w + (k + 1) * sd];
            *zk = self.params[o.b + k] + row.iter().zip(es).map(|(a, b)| a * b).sum::<f64>();
        }
        z
    }

    pub(crate) fn score_encoded(&self, enc: &Encoded) -> SpanScores {
        let n = enc.feats.len();
        let h = self.token_vectors(enc);
        let ctx = Self::context(&h, self.config.dim);
        let spans = enumerate_spans(n, self.config.max_span_len);
        let probs = spans
            .iter()
            .map(|&(s, e)| softmax(&self.logits(&self.span_repr(&h, &ctx, s, e))))
            .collect();
        SpanScores { spans, probs }
    }

    /// Distribution over labels for every enumerated span.
    pub fn score_spans(&self, tokens: &[String], gaz: &Gazetteer) -> SpanScores {
        self.score_encoded(&self.encode(tokens, gaz))
    }

    /// Summed span NLL of one instance, adding its gradient into `dense`
    /// (classifier, bias and length embeddings, indexed from the `W` offset)
    /// and `proj` (projection rows).
    fn loss_grad(
        &self,
        enc: &Encoded,
        gold: &[usize],
        dense: &mut [f64],
        proj: &mut SparseGrad,
    ) -> f64 {
        let c = &self.config;
        let (d, sd) = (c.dim, c.span_dim());
        let o = Self::offsets(c);
        let n = enc.feats.len();
        let h = self.token_vectors(enc);
        let ctx = Self::context(&h, d);
        let mut dh = vec![vec![0.0; d]; n];
        let mut dctx = vec![0.0; d];
        let mut loss = 0.0;
        for (idx, (s, e)) in enumerate_spans(n, c.max_span_len).into_iter().enumerate() {
            let es = self.span_repr(&h, &ctx, s, e);
            let p = softmax(&self.logits(&es));
            let y = gold[idx];
            loss -= p[y].max(f64::MIN_POSITIVE).ln();
            let mut des = vec![0.0; sd];
            for k in 0..L {
                let dz = p[k] - if k == y { 1.0 } else { 0.0 };
                if dz == 0.0 {
                    continue;
                }
                let row = o.w + k * sd;
                for j in 0..sd {
                    dense[row - o.w + j] += dz * es[j];
                    des[j] += dz * self.params[row + j];
                }
                dense[o.b - o.w + k] += dz;
            }
            for j in 0..d {
                dctx[j] += des[j];
                dh[s][j] += des[d + j];
                dh[e - 1][j] += des[2 * d + j];
            }
            let l = o.len - o.w + (e - s - 1) * c.len_dim;
            for j in 0..c.len_dim {
                dense[l + j] += des[3 * d + j];
            }
        }
        for dhi in dh.iter_mut() {
            for j in 0..d {
                dhi[j] += dctx[j] / n as f64;
            }
        }
        for (i, fs) in enc.feats.iter().enumerate() {
            for &f in fs {
                for j in 0..d {
                    if dh[i][j] != 0.0 {
                        proj.add(f * d + j, dh[i][j]);
                    }
                }
            }
        }
        loss
    }

    /// Gold label index of every enumerated span and the number of gold
    /// spans that cannot be enumerated.
    pub(crate) fn gold_labels(&self, inst: &NerInstance) -> (Vec<usize>, usize) {
        let spans = enumerate_spans(inst.tokens.len(), self.config.max_span_len);
        let mut gold = vec![EntityLabel::None.index(); spans.len()];
        let mut unreachable = 0;
        for g in inst.gold {
            match spans.binary_search(&(g.start, g.end)) {
                Ok(i) if gold[i] == EntityLabel::None.index() => gold[i] = g.label.index(),
                Ok(_) => {}
                Err(_) => unreachable += 1,
            }
        }
        (gold, unreachable)
    }

    /// Total loss and full dense gradient over `instances` (for checks on
    /// small models).
    pub fn loss_and_gradient(&self, instances: &[NerInstance]) -> (f64, Vec<f64>) {
        let o = Self::offsets(&self.config);
        let mut dense = vec![0.0; o.total - o.w];
        let mut proj = SparseGrad::new();
        let mut loss = 0.0;
        for inst in instances {
            let gaz = Gazetteer::from_table(inst.table);
            let enc = self.encode(inst.tokens, &gaz);
            let (gold, _) = self.gold_labels(inst);
            loss += self.loss_grad(&enc, &gold, &mut dense, &mut proj);
        }
        let mut g = vec![0.0; o.w];
        for (i, v) in proj.sorted() {
            g[i] = v;
        }
        g.extend(dense);
        (loss, g)
    }

    pub fn loss(&self, instances: &[NerInstance]) -> f64 {
        instances
            .iter()
            .map(|inst| {
                let gaz = Gazetteer::from_table(inst.table);
                let sc = self.score_spans(inst.tokens, &gaz);
                let (gold, _) = self.gold_labels(inst);
                sc.probs
                    .iter()
                    .zip(&gold)
                    .map(|(p, &y)| -p[y].max(f64::MIN_POSITIVE).ln())
                    .sum::<f64>()
            })
            .sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, NerError> {
        let m: NerModel = serde_json::from_str(s).map_err(|e| NerError::Artifact(e.to_string()))?;
        if m.version != ARTIFACT_VERSION {
            return Err(NerError::Artifact(format!("unsupported version {}", m.version)));
        }
        if m.params.len() != Self::offsets(&m.config).total {
            return Err(NerError::Artifact("parameter count does not match config".into()));
        }
        Ok(m)
    }
}

pub(crate) fn softmax(z: &[f64; L]) -> [f64; L] {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut p = [0.0; L];
    let mut s = 0.0;
    for k in 0..L {
        p[k] = (z[k] - m).exp();
        s += p[k];
    }
    p.iter_mut().for_each(|x| *x /= s);
    p
}

/// Minimizes summed span NLL with mini-batch Adam.
pub fn train_ner(
    model: &mut NerModel,
    train: &[NerInstance],
    dev: &[NerInstance],
    cfg: &NerTrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<NerTrainReport, NerError> {
    if train.is_empty() {
        return Err(NerError::EmptyTrainingSet);
    }
    let o = NerModel::offsets(&model.config);
    let mut unreachable = 0;
    let prepared: Vec<(Encoded, Vec<usize>)> = train
        .iter()
        .map(|inst| {
            let gaz = Gazetteer::from_table(inst.table);
            let (gold, u) = model.gold_labels(inst);
            unreachable += u;
            (model.encode(inst.tokens, &gaz), gold)
        })
        .collect();
    let mut opt = Adam::new(model.params.len(), cfg.adam);
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    let mut loss_curve = Vec::with_capacity(cfg.epochs);
    let mut dense = vec![0.0; o.total - o.w];
    let mut proj = SparseGrad::new();
    for epoch in 0..cfg.epochs {
        opt.config.lr = cfg.adam.lr / (1.0 + cfg.lr_decay * epoch as f64);
        order.shuffle(rng);
        for batch in order.chunks(cfg.batch_size.max(1)) {
            dense.iter_mut().for_each(|x| *x = 0.0);
            proj.clear();
            for &i in batch {
                let (enc, gold) = &prepared[i];
                model.loss_grad(enc, gold, &mut dense, &mut proj);
            }
            for (j, &g) in dense.iter().enumerate() {
                if g != 0.0 {
                    proj.add(o.w + j, g);
                }
            }
            opt.step(&mut model.params, &proj);
        }
        let mut total = 0.0;
        let mut scratch = SparseGrad::new();
        let mut sd = vec![0.0; o.total - o.w];
        for (enc, gold) in &prepared {
            total += model.loss_grad(enc, gold, &mut sd, &mut scratch);
            scratch.clear();
        }
        loss_curve.push(total / prepared.len() as f64);
    }
    let dev_f1 = if dev.is_empty() {
        None
    } else {
        let mut all = SpanF1::default();
        for inst in dev {
            let pred = predict_spans(model, inst.tokens, inst.table, cfg.use_gazetteer);
            all.add(&span_f1(&pred.spans, inst.gold));
        }
        Some(all)
    };
    Ok(NerTrainReport {
        loss_curve,
        unreachable_spans: unreachable,
        dev_f1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ColumnSpec, ColumnType, TableData, TypedSpan};
    use rand::SeedableRng;

    fn tiny() -> NerConfig {
        NerConfig {
            dim: 3,
            len_dim: 2,
            max_span_len: 3,
            buckets: 64,
            ..Default::default()
        }
    }

    fn table() -> TableData {
        TableData::new(
            "t",
            "t",
            vec![
                ColumnSpec { id: "c1".into(), display: "year".into(), ty: ColumnType::Number },
                ColumnSpec { id: "c2".into(), display: "album".into(), ty: ColumnType::String },
            ],
            vec![vec!["1982".into(), "Thriller".into()], vec!["1987".into(), "Bad".into()]],
        )
        .unwrap()
    }

    fn toks(s: &str) -> Vec<String> {
        s.split(' ').map(String::from).collect()
    }

    #[test]
    fn zero_model_is_uniform() {
        let m = NerModel::zeros(tiny());
        let t = table();
        let sc = m.score_spans(&toks("which album was first"), &Gazetteer::from_table(&t));
        assert_eq!(sc.spans.len(), 4 + 3 + 2);
        for p in &sc.probs {
            for &x in p {
                assert!((x - 1.0 / 7.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = NerModel::init(tiny(), &mut rng);
        let t = table();
        let q = toks("what year was Thriller");
        let gold = vec![
            TypedSpan { start: 1, end: 2, label: EntityLabel::SelectColumn, link_target: Some("c1".into()) },
            TypedSpan { start: 3, end: 4, label: EntityLabel::LiteralValue, link_target: Some("Thriller".into()) },
        ];
        let inst = [NerInstance { tokens: &q, table: &t, gold: &gold }];
        let (_, g) = m.loss_and_gradient(&inst);
        let o = NerModel::offsets(&m.config);
        let mut checked = 0;
        for i in (0..m.n_params()).filter(|&i| g[i] != 0.0 || i >= o.w).step_by(3) {
            let eps = 1e-5;
            let mut p = m.clone();
            p.params[i] += eps;
            let up = p.loss(&inst);
            p.params[i] -= 2.0 * eps;
            let down = p.loss(&inst);
            let fd = (up - down) / (2.0 * eps);
            let rel = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-6);
            assert!(rel < 1e-4, "param {i}: analytic {} vs numeric {fd}", g[i]);
            checked += 1;
        }
        assert!(checked > 50);
    }

    #[test]
    fn overfits_one_record() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut m = NerModel::init(tiny(), &mut rng);
        let t = table();
        let q = toks("what year was Thriller");
        let gold = vec![TypedSpan { start: 3, end: 4, label: EntityLabel::LiteralValue, link_target: None }];
        let inst = [NerInstance { tokens: &q, table: &t, gold: &gold }];
        let cfg = NerTrainConfig {
            epochs: 300,
            batch_size: 1,
            adam: AdamConfig { lr: 0.1, ..Default::default() },
            lr_decay: 0.01,
            ..Default::default()
        };
        let r = train_ner(&mut m, &inst, &[], &cfg, &mut rng).unwrap();
        assert!(*r.loss_curve.last().unwrap() < 0.01, "{:?}", r.loss_curve.last());
    }

    #[test]
    fn artifact_round_trip() {
        let m = NerModel::init(tiny(), &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(NerModel::from_json(&m.to_json()).unwrap(), m);
        assert!(NerModel::from_json("{}").is_err());
    }
}
