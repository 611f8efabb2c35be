//! Trains every harness mode and NER ablation on a generated corpus and
//! prints the comparison table.
//!
//! ```text
//! cargo run --release --example experiment_grid -- [n_train] [seed]
//! ```

use std::time::Instant;

use text2sql::pipeline::{run_experiment_grid, Dataset, GridSpec, PipelineConfig};
use text2sql::toy::{ToyConfig, ToyCorpus};

pub fn run_example() -> anyhow::Result<()> {
    run(120, 7)
}

pub fn run(n_train: usize, seed: u64) -> anyhow::Result<()> {
    let corpus = ToyCorpus::generate(&ToyConfig { seed, n_train, n_dev: n_train / 4, n_test: 0, ..Default::default() });
    let train = Dataset::from_records(corpus.train.clone(), &corpus.tables)?;
    let dev = Dataset::from_records(corpus.dev.clone(), &corpus.tables)?;
    let cfg = PipelineConfig { seed, ..Default::default() };

    let t = Instant::now();
    let grid = run_experiment_grid(&cfg, &GridSpec::default(), &train, &dev)?;
    print!("{}", grid.table());
    println!("{} train / {} dev questions in {:.1?}", train.len(), dev.len(), t.elapsed());
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n_train = args.first().map(|s| s.parse()).transpose()?.unwrap_or(400);
    let seed = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(7);
    run(n_train, seed)
}
