//! Train the span recognizer on generated questions and compare decoding with
//! and without gazetteer filtering.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use text2sql::ner::{predict_spans, span_f1, Gazetteer, SpanF1};
use text2sql::pipeline::{train_ner_stage, Dataset, NerAblation, PipelineConfig};
use text2sql::toy::{ToyConfig, ToyCorpus};

pub fn run_example() -> anyhow::Result<()> {
    let corpus = ToyCorpus::generate(&ToyConfig { n_train: 400, n_dev: 100, n_test: 0, ..Default::default() });
    let train = Dataset::from_records(corpus.train.clone(), &corpus.tables)?;
    let dev = Dataset::from_records(corpus.dev.clone(), &corpus.tables)?;
    let cfg = PipelineConfig::default();
    let (model, report) = train_ner_stage(&cfg, NerAblation::default(), &train, None, &mut ChaCha8Rng::seed_from_u64(1))?;
    println!("training loss {:.4} -> {:.4}", report.loss_curve[0], report.loss_curve.last().unwrap());

    let ex = &dev.examples[0];
    let table = dev.table(ex);
    let gaz = Gazetteer::from_table(table);
    println!("\n{}", ex.record.question());
    println!("gazetteer holds {} entries for table {}", gaz.len(), table.table_id);
    for s in predict_spans(&model, &ex.record.query_tokens, table, true).spans {
        let surface = ex.record.query_tokens[s.start..s.end].join(" ");
        println!("  {:<24} {:<16} p={:.3} matched={}", surface, s.label.name(), s.prob, s.gazetteer_match);
    }

    for filter in [true, false] {
        let mut f = SpanF1::default();
        for ex in dev.supervised() {
            let pred = predict_spans(&model, &ex.record.query_tokens, dev.table(ex), filter);
            f.add(&span_f1(&pred.spans, &ex.spans));
        }
        println!("dev span F1 with filtering={filter}: {:.4} (P {:.4} R {:.4})", f.f1(), f.precision(), f.recall());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
