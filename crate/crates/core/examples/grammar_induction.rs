//! Induce production rules from gold trees, turn a tree into decoder actions
//! and rebuild it from them.

use text2sql::grammar::{extract_rules, induce_grammar, oracle_actions, replay, Grammar};
use text2sql::sql::parse_sql;

pub fn run_example() -> anyhow::Result<()> {
    let trees = [
        "select c2 from w where c3 = 'Epic' order by c4 desc limit 1",
        "select count ( * ) from w",
        "select c2 from w where c1 > ( select c1 from w where c2 = 'Bad' )",
        "select c3 from w group by c3 order by count ( * ) desc limit 1",
    ]
    .iter()
    .map(|s| parse_sql(s))
    .collect::<Result<Vec<_>, _>>()?;

    println!("rules of the first tree, breadth first:");
    for r in extract_rules(&trees[0]) {
        println!("  {r}");
    }

    let grammar = induce_grammar(&trees);
    println!("\n{} rules in the induced grammar", grammar.len());
    let text = grammar.to_text();
    assert_eq!(Grammar::from_text(&text)?, grammar);

    let actions = oracle_actions(&trees[2], &grammar)?;
    println!("\noracle actions for: {}", trees[2]);
    for a in &actions {
        println!("  {a}");
    }
    let rebuilt = replay(&actions, &grammar)?;
    assert_eq!(rebuilt, trees[2]);
    println!("replayed: {rebuilt}");

    // A construct never seen in training has no rule to build it.
    let unseen = parse_sql("select c1 from w where c2 = 'x' and c3 = 'y'")?;
    println!("\nunseen shape: {}", oracle_actions(&unseen, &grammar).unwrap_err());
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
