//! Grammar-constrained top-down SQL decoder.
//!
//! A derivation starts at the grammar's start symbol and repeatedly either
//! applies a rule to the leftmost pending non-terminal or fills the leftmost
//! copy slot with a column, a linked literal or the table. Scorers only see
//! legal actions; masking and normalization live in [`step_scores`].

mod beam;
mod encode;
mod features;
mod model;
mod scorer;

use thiserror::Error;

pub use beam::{decode_beam, Decoded};
pub use encode::{encode, ColumnEnc, EncodeInput, EncoderOutput, ValueEnc, ValueMention};
pub use features::{build_column_type_features, ColumnRole, ColumnTypeFeature, RoleEntry};
pub use model::{
    align_gold_actions, evaluate_decoder, train_nsp, NspConfig, NspEval, NspExample, NspModel,
    NspTrainConfig, NspTrainReport,
};
pub use scorer::{
    legal_actions, log_softmax, slot_availability, step_scores, ActionScorer, OracleScorer,
    RandomScorer, StepInput,
};

use crate::grammar::GrammarError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NspError {
    #[error("no legal action")]
    DeadEnd,
    #[error("no complete derivation within the step limit")]
    NoCompleteDerivation,
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error(transparent)]
    Grammar(GrammarError),
    #[error("bad model artifact: {0}")]
    Artifact(String),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ColumnSpec, ColumnType, EntityLabel, TableData, TypedSpan};
    use crate::grammar::{induce_grammar, oracle_actions, DecoderAction, NonTerminal, PartialTree};
    use crate::optim::SparseGrad;
    use crate::sql::{parse_sql, serialize};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn table() -> TableData {
        TableData::new(
            "t",
            "t",
            vec![
                ColumnSpec { id: "c1".into(), display: "year".into(), ty: ColumnType::Number },
                ColumnSpec { id: "c2".into(), display: "album".into(), ty: ColumnType::String },
                ColumnSpec { id: "c3".into(), display: "label".into(), ty: ColumnType::String },
                ColumnSpec { id: "c4".into(), display: "sales".into(), ty: ColumnType::Number },
            ],
            vec![
                vec!["1982".into(), "Thriller".into(), "Epic".into(), "66".into()],
                vec!["1987".into(), "Bad".into(), "Epic".into(), "35".into()],
                vec!["1991".into(), "Dangerous".into(), "Sony".into(), "32".into()],
            ],
        )
        .unwrap()
    }

    fn toks(s: &str) -> Vec<String> {
        s.split(' ').map(String::from).collect()
    }

    fn enc_for(q: &[String], t: &TableData, gold: &[TypedSpan]) -> EncoderOutput {
        let values = gold
            .iter()
            .filter(|s| s.label == EntityLabel::LiteralValue)
            .filter_map(|s| {
                Some(ValueMention { text: s.link_target.clone()?, start: s.start, end: s.end, score: 1.0 })
            })
            .collect();
        encode(
            &EncodeInput {
                tokens: q,
                table: t,
                entities: gold.iter().map(|s| (s.start, s.end, s.label)).collect(),
                values,
                features: ColumnTypeFeature::from_gold(t, gold),
                column_filter: None,
            },
            false,
        )
    }

    fn span(s: usize, e: usize, l: EntityLabel, t: &str) -> TypedSpan {
        TypedSpan { start: s, end: e, label: l, link_target: Some(t.into()) }
    }

    fn sample() -> (Vec<String>, Vec<TypedSpan>, crate::sql::SqlTree) {
        let q = toks("which album on Epic sold most");
        let gold = vec![
            span(1, 2, EntityLabel::SelectColumn, "c2"),
            span(3, 4, EntityLabel::LiteralValue, "Epic"),
            span(4, 6, EntityLabel::OrderbyColumn, "c4"),
        ];
        let tree = parse_sql("select c2 from w where c3 = 'Epic' order by c4 desc limit 1").unwrap();
        (q, gold, tree)
    }

    #[test]
    fn support_is_exactly_the_legal_actions() {
        let t = table();
        let (q, gold, tree) = sample();
        let g = induce_grammar([&tree, &parse_sql("select count ( * ) from w").unwrap()]);
        let enc = enc_for(&q, &t, &gold);
        let costs = g.min_costs(slot_availability(&enc));
        let state = PartialTree::new(NonTerminal::Stmt);
        let step = StepInput { enc: &enc, grammar: &g, state: &state, history: &[] };
        let s = step_scores(&step, &RandomScorer { seed: 1 }, &costs, 64).unwrap();
        let ids: Vec<_> = s.iter().map(|(a, _)| a.clone()).collect();
        let want: Vec<_> = g.rules_for(NonTerminal::Stmt).iter().map(|&r| DecoderAction::ApplyRule(r)).collect();
        assert_eq!(ids, want);
        let total: f64 = s.iter().map(|(_, lp)| lp.exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);

        let acts = oracle_actions(&tree, &g).unwrap();
        let mut state = PartialTree::new(NonTerminal::Stmt);
        for a in &acts[..3] {
            state.apply(&g, a).unwrap();
        }
        let step = StepInput { enc: &enc, grammar: &g, state: &state, history: &acts[..3] };
        let s = step_scores(&step, &RandomScorer { seed: 1 }, &costs, 64).unwrap();
        assert_eq!(s.len(), 4);
        assert!(s.iter().all(|(a, _)| matches!(a, DecoderAction::CopyColumn(_))));
    }

    #[test]
    fn oracle_scorer_reproduces_gold() {
        let t = table();
        let (q, gold, tree) = sample();
        let g = induce_grammar([&tree]);
        let enc = enc_for(&q, &t, &gold);
        let (acts, missing) = align_gold_actions(&oracle_actions(&tree, &g).unwrap(), &enc);
        assert_eq!(missing, 0);
        let out = decode_beam(&enc, &g, &OracleScorer { gold: acts }, 3, 64).unwrap();
        assert_eq!(out[0].tree, tree);
        assert!(out[0].log_prob > -1e-9);
    }

    #[test]
    fn no_values_means_no_value_rules() {
        let t = table();
        let (q, _, tree) = sample();
        let g = induce_grammar([&tree, &parse_sql("select c2 from w").unwrap()]);
        let enc = enc_for(&q, &t, &[]);
        assert!(enc.values.is_empty());
        for seed in 0..20 {
            let out = decode_beam(&enc, &g, &RandomScorer { seed }, 2, 64).unwrap();
            assert!(out.iter().all(|d| !d.actions.iter().any(|a| matches!(a, DecoderAction::CopyValue(_)))));
        }
    }

    #[test]
    fn beam_one_is_greedy_and_wider_beams_score_no_lower() {
        let t = table();
        let (q, gold, tree) = sample();
        let g = induce_grammar([
            &tree,
            &parse_sql("select count ( * ) from w where c1 > ( select c1 from w where c2 = 'Bad' )").unwrap(),
            &parse_sql("select c3 from w group by c3 order by count ( * ) desc limit 1").unwrap(),
        ]);
        let enc = enc_for(&q, &t, &gold);
        let costs = g.min_costs(slot_availability(&enc));
        for seed in 0..30 {
            let scorer = RandomScorer { seed };
            let mut state = PartialTree::new(NonTerminal::Stmt);
            let mut hist = Vec::new();
            let mut lp = 0.0;
            while !state.is_complete() {
                let step = StepInput { enc: &enc, grammar: &g, state: &state, history: &hist };
                let s = step_scores(&step, &scorer, &costs, 64).unwrap();
                let best = s
                    .iter()
                    .max_by(|a, b| a.1.total_cmp(&b.1).then_with(|| b.0.to_string().cmp(&a.0.to_string())))
                    .unwrap()
                    .clone();
                lp += best.1;
                state.apply(&g, &best.0).unwrap();
                hist.push(best.0);
            }
            let b1 = decode_beam(&enc, &g, &scorer, 1, 64).unwrap();
            assert_eq!(b1[0].actions, hist);
            assert!((b1[0].log_prob - lp).abs() < 1e-9);
            for k in [2, 5] {
                let bk = decode_beam(&enc, &g, &scorer, k, 64).unwrap();
                assert!(bk[0].log_prob >= b1[0].log_prob - 1e-12);
                for d in &bk {
                    assert_eq!(parse_sql(&d.tree.to_sql()).unwrap(), d.tree);
                }
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let t = table();
        let (q, gold, tree) = sample();
        let g = induce_grammar([&tree, &parse_sql("select c2 , c1 from w").unwrap()]);
        let enc = enc_for(&q, &t, &gold);
        let (acts, _) = align_gold_actions(&oracle_actions(&tree, &g).unwrap(), &enc);
        let mut m = NspModel::new(NspConfig { buckets: 512, ..Default::default() }, &g);
        for (i, w) in m.weights.iter_mut().enumerate() {
            *w = ((i * 7919 % 97) as f64 - 48.0) / 100.0;
        }
        let mut grad = SparseGrad::new();
        m.sequence_loss(&g, &enc, &acts, Some(&mut grad)).unwrap();
        assert!(grad.len() > 10);
        for (i, an) in grad.sorted() {
            let eps = 1e-5;
            let mut p = m.clone();
            p.weights[i] += eps;
            let up = p.sequence_loss(&g, &enc, &acts, None).unwrap().0;
            p.weights[i] -= 2.0 * eps;
            let down = p.sequence_loss(&g, &enc, &acts, None).unwrap().0;
            let fd = (up - down) / (2.0 * eps);
            let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
            assert!(rel < 1e-4 || (fd - an).abs() < 1e-9, "weight {i}: {an} vs {fd}");
        }
    }

    #[test]
    fn overfits_one_record() {
        let t = table();
        let (q, gold, tree) = sample();
        let g = induce_grammar([
            &tree,
            &parse_sql("select c2 , c1 from w").unwrap(),
            &parse_sql("select count ( * ) from w where c3 = 'Sony'").unwrap(),
        ]);
        let enc = enc_for(&q, &t, &gold);
        let (acts, _) = align_gold_actions(&oracle_actions(&tree, &g).unwrap(), &enc);
        let mut m = NspModel::new(NspConfig::default(), &g);
        let ex = NspExample { enc: enc.clone(), enc_dropped: enc.clone(), actions: acts.clone() };
        let cfg = NspTrainConfig { epochs: 200, feature_dropout: 0.0, ..Default::default() };
        let r = train_nsp(&mut m, &[ex], &[], &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(*r.loss_curve.last().unwrap() < 0.01, "{:?}", r.loss_curve.last());
        let out = decode_beam(&enc, &g, &m, 1, 64).unwrap();
        assert_eq!(serialize(&out[0].tree), serialize(&tree));
        let back = NspModel::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
    }
}
