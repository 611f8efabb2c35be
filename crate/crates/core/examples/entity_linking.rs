//! Generate link candidates for typed mentions and rank them with the fuzzy
//! baseline and with a trained linker.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use text2sql::data::{ColumnSpec, ColumnType, EntityLabel, TableData, TypedSpan};
use text2sql::linker::{generate_candidates, link, top1_accuracy, LinkContext, LinkerConfig, LinkerModel};
use text2sql::pipeline::{link_groups, train_nel_stage, Dataset, PipelineConfig};
use text2sql::toy::{ToyConfig, ToyCorpus};

pub fn run_example() -> anyhow::Result<()> {
    let col = |id: &str, display: &str, ty| ColumnSpec { id: id.into(), display: display.into(), ty };
    let table = TableData::new(
        "nba",
        "roster",
        vec![col("c1", "player", ColumnType::String), col("c2", "points", ColumnType::Number)],
        vec![
            vec!["LeBron James".into(), "2251".into()],
            vec!["James Harden".into(), "1982".into()],
            vec!["Kevin Durant".into(), "2029".into()],
        ],
    )?;
    let tokens: Vec<String> = "how many pts did LBJ score".split(' ').map(String::from).collect();
    let ctx = LinkContext::new(&tokens, &table);
    let mention = |s, e, label| TypedSpan { start: s, end: e, label, link_target: None };

    let lit = mention(4, 5, EntityLabel::LiteralValue);
    let set = generate_candidates(&ctx, &lit)?;
    println!("{} cell candidates for 'LBJ'", set.candidates.len());
    let fuzzy = LinkerModel::fuzzy_baseline(LinkerConfig::default());
    for (c, score) in link(&ctx, &lit, &fuzzy)?.ranked {
        println!("  {:<14} {:.3}", c.candidate_id, score);
    }
    let col = link(&ctx, &mention(2, 3, EntityLabel::WhereColumn), &fuzzy)?;
    println!("'pts' -> {} (confidence {:.3})", col.chosen.candidate_id, col.confidence());

    // A trained ranker learns aliases such as initials from data.
    let corpus = ToyCorpus::generate(&ToyConfig { n_train: 200, n_dev: 60, n_test: 0, ..Default::default() });
    let train = Dataset::from_records(corpus.train.clone(), &corpus.tables)?;
    let dev = Dataset::from_records(corpus.dev.clone(), &corpus.tables)?;
    let (trained, report) = train_nel_stage(&PipelineConfig::default(), &train, Some(&dev), &mut ChaCha8Rng::seed_from_u64(3))?;
    let groups = link_groups(&dev, &mut Default::default());
    println!("\ndev top-1: fuzzy {:.4}, trained {:.4}", top1_accuracy(&fuzzy, &groups), report.train.dev_top1.unwrap_or(0.0));
    let r = link(&ctx, &lit, &trained)?;
    println!("trained linker: 'LBJ' -> {} ({:.3})", r.chosen.candidate_id, r.confidence());
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
