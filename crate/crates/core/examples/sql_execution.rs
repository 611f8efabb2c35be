//! Parse, print and execute queries from the supported SQL subset against an
//! in-memory table.

use text2sql::data::{ColumnSpec, ColumnType, TableData};
use text2sql::sql::{denotation_equal, execute, parse_sql, serialize};

pub fn run_example() -> anyhow::Result<()> {
    let col = |id: &str, display: &str, ty| ColumnSpec { id: id.into(), display: display.into(), ty };
    let table = TableData::new(
        "albums",
        "discography",
        vec![
            col("c1", "year", ColumnType::Number),
            col("c2", "album", ColumnType::String),
            col("c3", "label", ColumnType::String),
            col("c4", "sales", ColumnType::Number),
        ],
        vec![
            vec!["1982".into(), "Thriller".into(), "Epic".into(), "66".into()],
            vec!["1987".into(), "Bad".into(), "Epic".into(), "35".into()],
            vec!["1991".into(), "Dangerous".into(), "Sony".into(), "32".into()],
            vec!["2001".into(), "Invincible".into(), "Sony".into(), "13".into()],
        ],
    )?;

    let queries = [
        ("select c2 from w order by c4 desc limit 1", vec!["Thriller"]),
        ("select count ( * ) from w where c3 = 'Epic'", vec!["2"]),
        ("select c3 , sum ( c4 ) from w group by c3", vec!["Epic", "101", "Sony", "45"]),
        ("select c2 from w where c1 > ( select c1 from w where c2 = 'Bad' )", vec!["Dangerous", "Invincible"]),
        ("select avg ( c4 ) from w where c3 in ( 'Epic' , 'Sony' )", vec!["36.5"]),
    ];
    for (sql, gold) in queries {
        let tree = parse_sql(sql)?;
        let den = execute(&tree, &table)?;
        let gold: Vec<String> = gold.into_iter().map(String::from).collect();
        println!("{}", serialize(&tree).join(" "));
        println!("  -> {:?} (matches gold: {})", den.flatten(), denotation_equal(&den, &gold));
    }

    // Joins are outside the subset and rejected with a reason.
    if let Err(e) = parse_sql("select c1 from w join t on w.c1 = t.c1") {
        println!("rejected: {e}");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
