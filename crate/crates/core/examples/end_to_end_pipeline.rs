//! Train all three stages, evaluate on held-out questions and show the trace
//! of one prediction.

use text2sql::pipeline::{evaluate, run_pipeline, train_all, Dataset, PipelineConfig};
use text2sql::toy::{ToyConfig, ToyCorpus};

pub fn run_example() -> anyhow::Result<()> {
    let corpus = ToyCorpus::generate(&ToyConfig { n_train: 240, n_dev: 60, n_test: 0, ..Default::default() });
    let train = Dataset::from_records(corpus.train.clone(), &corpus.tables)?;
    let dev = Dataset::from_records(corpus.dev.clone(), &corpus.tables)?;
    let cfg = PipelineConfig::default();

    let (artifacts, report) = train_all(&cfg, &train, Some(&dev))?;
    println!(
        "NER dev F1 {:.4}, linker dev top-1 {:.4}, {} grammar rules",
        report.ner.dev_f1.map(|f| f.f1()).unwrap_or(0.0),
        report.nel.train.dev_top1.unwrap_or(0.0),
        report.nsp.rules
    );

    let eval = evaluate(&cfg, &artifacts, &dev, "dev")?;
    println!("{}", eval.summary());

    let ex = &dev.examples[1];
    let p = run_pipeline(&cfg, &artifacts, &ex.record, dev.table(ex));
    println!("\n{}", ex.record.question());
    for (s, l) in p.trace.ner.iter().zip(&p.trace.links) {
        let surface = ex.record.query_tokens[s.start..s.end].join(" ");
        let target = l.as_ref().map(|l| l.target.as_str()).unwrap_or("-");
        println!("  {:<22} {:<16} -> {}", surface, s.label.name(), target);
    }
    println!("predicted: {}", p.trace.prediction.as_deref().unwrap_or("<none>"));
    println!("gold:      {}", ex.tree.as_ref().map(|t| t.to_sql()).unwrap_or_default());
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
