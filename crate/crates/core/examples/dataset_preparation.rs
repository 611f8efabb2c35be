//! Write a generated corpus to disk, load it back and derive entity and
//! linking supervision from its alignments.

use text2sql::data::{derive_annotations, Split};
use text2sql::linker::is_exact_match;
use text2sql::pipeline::{check_gold_execution, Dataset};
use text2sql::toy::{ToyConfig, ToyCorpus};

pub fn run_example() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let corpus = ToyCorpus::generate(&ToyConfig { n_train: 40, n_dev: 10, n_test: 10, ..Default::default() });
    corpus.write(dir.path())?;

    let dev = Dataset::load(dir.path(), Split::Dev, &dir.path().join("tables"))?;
    println!("{} dev records over {} tables", dev.len(), dev.tables.len());
    println!("gold SQL reproduces the answer on {:.0}% of them", 100.0 * check_gold_execution(&dev).rate());

    let ex = &dev.examples[0];
    let ann = derive_annotations(&ex.record, dev.table(ex), ex.tree.as_ref().unwrap())?;
    println!("\n{}\n{}", ex.record.question(), ex.tree.as_ref().unwrap());
    for s in &ann.spans {
        println!(
            "  [{}, {}) {:<16} {:<20} exact={:?}",
            s.start,
            s.end,
            s.label.name(),
            s.link_target.as_deref().unwrap_or("-"),
            is_exact_match(&ex.record.query_tokens, s, dev.table(ex))
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
