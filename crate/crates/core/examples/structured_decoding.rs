//! Train the grammar-constrained decoder with gold column roles and decode a
//! held-out question with beam search.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use text2sql::nsp::{decode_beam, encode};
use text2sql::pipeline::{gold_encode_input, induce_from, train_nsp_stage, Dataset, HarnessMode, PipelineConfig};
use text2sql::toy::{ToyConfig, ToyCorpus};

pub fn run_example() -> anyhow::Result<()> {
    let corpus = ToyCorpus::generate(&ToyConfig { n_train: 200, n_dev: 20, n_test: 0, ..Default::default() });
    let train = Dataset::from_records(corpus.train.clone(), &corpus.tables)?;
    let dev = Dataset::from_records(corpus.dev.clone(), &corpus.tables)?;
    let grammar = induce_from(&train);
    let cfg = PipelineConfig { nsp_epochs: 8, ..Default::default() };
    let mode = HarnessMode::OracleFeature;
    let (model, report) = train_nsp_stage(&cfg, mode, &grammar, &train, &mut ChaCha8Rng::seed_from_u64(5))?;
    println!("{} rules; loss per question {:.4} -> {:.4}", report.rules, report.train.loss_curve[0], report.train.loss_curve.last().unwrap());

    let ex = dev.supervised().find(|e| e.tree.as_ref().unwrap().contains_subquery()).unwrap_or(&dev.examples[0]);
    let enc = encode(&gold_encode_input(ex, dev.table(ex), mode), false);
    println!("\n{}", ex.record.question());
    println!("gold: {}", ex.tree.as_ref().unwrap());
    for (i, d) in decode_beam(&enc, &grammar, &model, 4, model.config.max_steps)?.iter().enumerate() {
        println!("  #{i} {:>8.4}  {}", d.log_prob, d.tree);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
