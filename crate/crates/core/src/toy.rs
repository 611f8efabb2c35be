//! Synthetic question/SQL corpus over small generated tables.
//!
//! Records come in the on-disk dataset format, with token alignments and
//! answers obtained by executing the gold SQL, so every downstream stage can
//! be trained and evaluated without external data. Questions mention values
//! through aliases (initials, last words, lower case) and columns through
//! synonyms often enough that exact string matching is not sufficient.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{
    write_dataset, Alignment, ColumnSpec, ColumnType, DataError, DatasetRecord, Split, TableData,
};
use crate::sql::{execute, parse_sql, Literal, SqlToken, TokenKind};

#[derive(Debug, Clone)]
pub struct ToyConfig {
    pub seed: u64,
    pub n_train: usize,
    pub n_dev: usize,
    pub n_test: usize,
    pub questions_per_table: usize,
    /// Chance that a literal is mentioned through an alias.
    pub alias_rate: f64,
    /// Chance that a column is mentioned through a synonym.
    pub synonym_rate: f64,
    /// Draw dev and test entity names (people, titles, places) from a
    /// vocabulary never used for training tables.
    pub unseen_names: bool,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            seed: 7,
            n_train: 240,
            n_dev: 60,
            n_test: 60,
            questions_per_table: 4,
            alias_rate: 0.35,
            synonym_rate: 0.25,
            unseen_names: true,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ToyCorpus {
    pub tables: BTreeMap<String, TableData>,
    pub train: Vec<DatasetRecord>,
    pub dev: Vec<DatasetRecord>,
    pub test: Vec<DatasetRecord>,
}

impl ToyCorpus {
    pub fn generate(cfg: &ToyConfig) -> ToyCorpus {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut corpus = ToyCorpus::default();
        for (split, n) in [(Split::Train, cfg.n_train), (Split::Dev, cfg.n_dev), (Split::Test, cfg.n_test)] {
            let mut out = Vec::with_capacity(n);
            let mut k = 0;
            while out.len() < n {
                let held_out = cfg.unseen_names && split != Split::Train;
                let table = random_table(&format!("toy_{split}_{k}"), held_out, &mut rng);
                k += 1;
                for _ in 0..cfg.questions_per_table.max(1) {
                    if out.len() == n {
                        break;
                    }
                    let id = format!("{split}_{}", out.len());
                    if let Some(r) = random_record(&id, &table, cfg, &mut rng) {
                        out.push(r);
                    }
                }
                corpus.tables.insert(table.table_id.clone(), table);
            }
            match split {
                Split::Train => corpus.train = out,
                Split::Dev => corpus.dev = out,
                Split::Test => corpus.test = out,
            }
        }
        corpus
    }

    pub fn split(&self, split: Split) -> &[DatasetRecord] {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }

    /// Writes `<split>.jsonl` files and `tables/<id>.json`.
    pub fn write(&self, dir: &Path) -> Result<(), DataError> {
        let tables = dir.join("tables");
        fs::create_dir_all(&tables)?;
        for split in [Split::Train, Split::Dev, Split::Test] {
            write_dataset(&dir.join(format!("{split}.jsonl")), self.split(split))?;
        }
        for (id, t) in &self.tables {
            let text = serde_json::to_string_pretty(&t.to_file()).expect("table serializes");
            fs::write(tables.join(format!("{id}.json")), text)?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
enum Gen {
    Key(&'static [&'static str], &'static [&'static str]),
    Category(&'static [&'static str]),
    Int(i64, i64),
}

struct ColumnDef {
    display: &'static str,
    synonyms: &'static [&'static str],
    gen: Gen,
}

struct Domain {
    name: &'static str,
    entities: &'static str,
    columns: &'static [ColumnDef],
}

const FIRST: &[&str] = &[
    "Marcus", "Elena", "Tomas", "Priya", "Owen", "Keiko", "Rafael", "Greta", "Dmitri", "Aisha",
    "Lucas", "Ingrid", "Mateo", "Sofia", "Victor", "Hana",
];
const LAST: &[&str] = &[
    "Reed", "Castillo", "Novak", "Larsen", "Okafor", "Brennan", "Ferreira", "Lindqvist", "Moreau",
    "Tanaka", "Whitfield", "Kowalski", "Duarte", "Ashby", "Halvorsen", "Quinlan",
];
const TITLE_A: &[&str] = &[
    "Silver", "Midnight", "Crimson", "Hollow", "Electric", "Golden", "Broken", "Distant", "Velvet",
    "Northern", "Paper", "Burning",
];
const TITLE_B: &[&str] = &[
    "Horizon", "Harbor", "Echoes", "Garden", "Machine", "Frontier", "Lanterns", "Skyline", "River",
    "Mirrors", "Kingdom", "Orchard",
];
const PLACE_A: &[&str] = &[
    "Port", "San", "New", "Lake", "Fort", "Mount", "East", "Saint", "Glen", "North", "Cape", "Bay",
];
const PLACE_B: &[&str] = &[
    "Verona", "Aldric", "Mirela", "Calder", "Oswin", "Tamsin", "Brevik", "Solano", "Karsten",
    "Lucerne", "Marlow", "Delft",
];
const LABELS: &[&str] = &[
    "Blue Note Records", "Harbor Sound", "Atlas Music", "Northern Light Records", "Cobalt",
    "Vantage Music Group",
];
const GENRES: &[&str] = &["Jazz", "Folk", "Electronic", "Hip Hop", "Soul", "Ambient"];
const TEAMS: &[&str] = &[
    "River City Hawks", "Eastport Mariners", "Granite Bears", "Silver Falcons", "Redwood Stags",
    "Lakeshore Lynx",
];
const POSITIONS: &[&str] = &["Guard", "Forward", "Center", "Point Guard", "Small Forward"];
const PARTIES: &[&str] = &[
    "Liberal Democratic Party", "Green Alliance", "Labour", "Conservative Union",
    "Progressive Reform Party", "Centre Party",
];
const DISTRICTS: &[&str] = &["Northgate", "Westfield", "Ashford Central", "Riverside", "Hillcrest East", "Brookmere"];
const COUNTRIES: &[&str] = &["Norland", "Estavia", "Corvania", "Pellaria", "Ostmark", "Valdoria"];
const REGIONS: &[&str] = &["Coastal Region", "Highlands", "Central Valley", "Lake District", "Southern Plains"];
const STUDIOS: &[&str] = &[
    "Paragon Pictures", "Blackbird Films", "Meridian Studios", "Lighthouse Entertainment",
    "Starling",
];
const TRACKS: &[&str] = &["Monza Park", "Silverstone Ring", "Suzuka Hill", "Interlagos Loop", "Spa Valley"];

const DOMAINS: &[Domain] = &[
    Domain {
        name: "discography",
        entities: "albums",
        columns: &[
            ColumnDef { display: "album", synonyms: &["record", "release"], gen: Gen::Key(TITLE_A, TITLE_B) },
            ColumnDef { display: "year", synonyms: &["release year"], gen: Gen::Int(1965, 2020) },
            ColumnDef { display: "label", synonyms: &["record label", "company"], gen: Gen::Category(LABELS) },
            ColumnDef { display: "genre", synonyms: &["style"], gen: Gen::Category(GENRES) },
            ColumnDef { display: "sales", synonyms: &["copies sold", "units"], gen: Gen::Int(5, 400) },
            ColumnDef { display: "peak position", synonyms: &["chart peak", "best rank"], gen: Gen::Int(1, 60) },
        ],
    },
    Domain {
        name: "roster",
        entities: "players",
        columns: &[
            ColumnDef { display: "player", synonyms: &["athlete", "name"], gen: Gen::Key(FIRST, LAST) },
            ColumnDef { display: "team", synonyms: &["club", "franchise"], gen: Gen::Category(TEAMS) },
            ColumnDef { display: "position", synonyms: &["role"], gen: Gen::Category(POSITIONS) },
            ColumnDef { display: "points", synonyms: &["pts", "points scored"], gen: Gen::Int(40, 2400) },
            ColumnDef { display: "games", synonyms: &["matches", "appearances"], gen: Gen::Int(10, 82) },
        ],
    },
    Domain {
        name: "elections",
        entities: "candidates",
        columns: &[
            ColumnDef { display: "candidate", synonyms: &["nominee", "name"], gen: Gen::Key(FIRST, LAST) },
            ColumnDef { display: "party", synonyms: &["affiliation"], gen: Gen::Category(PARTIES) },
            ColumnDef { display: "district", synonyms: &["constituency", "seat"], gen: Gen::Category(DISTRICTS) },
            ColumnDef { display: "votes", synonyms: &["ballots", "vote count"], gen: Gen::Int(900, 60000) },
            ColumnDef { display: "year", synonyms: &["election year"], gen: Gen::Int(1980, 2022) },
        ],
    },
    Domain {
        name: "cities",
        entities: "cities",
        columns: &[
            ColumnDef { display: "city", synonyms: &["town", "municipality"], gen: Gen::Key(PLACE_A, PLACE_B) },
            ColumnDef { display: "country", synonyms: &["nation"], gen: Gen::Category(COUNTRIES) },
            ColumnDef { display: "region", synonyms: &["province"], gen: Gen::Category(REGIONS) },
            ColumnDef { display: "population", synonyms: &["inhabitants", "residents"], gen: Gen::Int(8000, 900000) },
            ColumnDef { display: "founded", synonyms: &["founding year", "established"], gen: Gen::Int(1100, 1950) },
        ],
    },
    Domain {
        name: "films",
        entities: "films",
        columns: &[
            ColumnDef { display: "title", synonyms: &["film", "movie"], gen: Gen::Key(TITLE_A, TITLE_B) },
            ColumnDef { display: "director", synonyms: &["filmmaker", "directed by"], gen: Gen::Key(FIRST, LAST) },
            ColumnDef { display: "studio", synonyms: &["distributor", "production company"], gen: Gen::Category(STUDIOS) },
            ColumnDef { display: "year", synonyms: &["release year"], gen: Gen::Int(1970, 2021) },
            ColumnDef { display: "gross", synonyms: &["box office", "earnings"], gen: Gen::Int(2, 900) },
        ],
    },
    Domain {
        name: "races",
        entities: "races",
        columns: &[
            ColumnDef { display: "circuit", synonyms: &["track", "venue"], gen: Gen::Category(TRACKS) },
            ColumnDef { display: "winner", synonyms: &["winning driver", "victor"], gen: Gen::Key(FIRST, LAST) },
            ColumnDef { display: "season", synonyms: &["year"], gen: Gen::Int(1990, 2023) },
            ColumnDef { display: "laps", synonyms: &["lap count"], gen: Gen::Int(40, 78) },
            ColumnDef { display: "grid", synonyms: &["starting position", "start"], gen: Gen::Int(1, 24) },
        ],
    },
];

/// Every third pool entry is reserved for held-out tables.
fn pool_part(pool: &'static [&'static str], held_out: bool) -> Vec<&'static str> {
    pool.iter()
        .enumerate()
        .filter(|(i, _)| (i % 3 == 2) == held_out)
        .map(|(_, s)| *s)
        .collect()
}

fn random_table(id: &str, held_out: bool, rng: &mut ChaCha8Rng) -> TableData {
    let di = rng.random_range(0..DOMAINS.len());
    let domain = &DOMAINS[di];
    let n_rows = rng.random_range(6..=10);
    let columns: Vec<ColumnSpec> = domain
        .columns
        .iter()
        .enumerate()
        .map(|(i, c)| ColumnSpec {
            id: format!("c{}", i + 1),
            display: c.display.to_string(),
            ty: match c.gen {
                Gen::Int(..) => ColumnType::Number,
                _ => ColumnType::String,
            },
        })
        .collect();
    let mut cols: Vec<Vec<String>> = Vec::new();
    for c in domain.columns {
        let cells = match c.gen {
            Gen::Key(a, b) => {
                let (a, b) = (pool_part(a, held_out), pool_part(b, held_out));
                let mut pairs: Vec<(usize, usize)> = (0..a.len()).flat_map(|i| (0..b.len()).map(move |j| (i, j))).collect();
                pairs.shuffle(rng);
                pairs.truncate(n_rows);
                pairs.into_iter().map(|(i, j)| format!("{} {}", a[i], b[j])).collect()
            }
            Gen::Category(pool) => {
                // A few distinct values so grouping and counting are
                // meaningful.
                let k = rng.random_range(2..=pool.len().min(4));
                let chosen: Vec<&str> = pool.choose_multiple(rng, k).cloned().collect();
                (0..n_rows).map(|_| chosen.choose(rng).unwrap().to_string()).collect()
            }
            Gen::Int(lo, hi) => (0..n_rows).map(|_| rng.random_range(lo..=hi).to_string()).collect(),
        };
        cols.push(cells);
    }
    let rows = (0..n_rows).map(|r| cols.iter().map(|c| c[r].clone()).collect()).collect();
    TableData::new(id, domain.name, columns, rows).expect("generated table is well formed")
}

/// A question fragment, possibly aligned to one SQL token.
enum Piece {
    Words(String),
    /// Column id and which of its occurrences in the SQL to align to.
    Column(String, String, usize),
    /// Literal token text (as in the SQL) and its surface.
    Literal(String, String),
    /// Keyword token aligned to the surface (aggregates and order keywords).
    Keyword(String, String),
}

fn w(s: &str) -> Piece {
    Piece::Words(s.to_string())
}

struct Ctx<'a> {
    table: &'a TableData,
    domain: &'a Domain,
    cfg: &'a ToyConfig,
}

impl Ctx<'_> {
    fn col_surface(&self, c: usize, rng: &mut ChaCha8Rng) -> String {
        let def = &self.domain.columns[c];
        if !def.synonyms.is_empty() && rng.random_bool(self.cfg.synonym_rate) {
            def.synonyms.choose(rng).unwrap().to_string()
        } else {
            def.display.to_string()
        }
    }

    fn col(&self, c: usize, rng: &mut ChaCha8Rng) -> Piece {
        Piece::Column(self.table.column_ids[c].clone(), self.col_surface(c, rng), 0)
    }

    fn lit(&self, cell: &str, rng: &mut ChaCha8Rng) -> Piece {
        let token = Literal::typed(cell).token();
        let words: Vec<&str> = cell.split_whitespace().collect();
        let surface = if matches!(Literal::typed(cell), Literal::Number(_)) || !rng.random_bool(self.cfg.alias_rate) {
            cell.to_string()
        } else if words.len() >= 2 {
            match rng.random_range(0..3) {
                0 => words.iter().filter_map(|w| w.chars().next()).collect::<String>().to_uppercase(),
                1 => words.last().unwrap().to_string(),
                _ => cell.to_lowercase(),
            }
        } else {
            cell.to_lowercase()
        };
        Piece::Literal(token, surface)
    }

    fn cell(&self, row: usize, col: usize) -> &str {
        &self.table.rows[row][col].raw
    }
}

fn columns_of(table: &TableData, ty: ColumnType) -> Vec<usize> {
    (0..table.n_columns()).filter(|&c| table.column_types[c] == ty).collect()
}

fn pick<T: Copy>(v: &[T], rng: &mut ChaCha8Rng) -> T {
    *v.choose(rng).unwrap()
}

/// Builds one question/SQL pair from a random template.
fn template(ctx: &Ctx, rng: &mut ChaCha8Rng) -> Option<(Vec<Piece>, String)> {
    let t = ctx.table;
    let strs = columns_of(t, ColumnType::String);
    let nums = columns_of(t, ColumnType::Number);
    let n_rows = t.rows.len();
    let row = rng.random_range(0..n_rows);
    let id = |c: usize| t.column_ids[c].clone();
    let any_col = rng.random_range(0..t.n_columns());
    let b = pick(&strs, rng);
    let n = pick(&nums, rng);
    let kind = rng.random_range(0..13);
    Some(match kind {
        0 | 1 => {
            let a = if any_col == b { (b + 1) % t.n_columns() } else { any_col };
            let v = ctx.cell(row, b).to_string();
            let sql = format!("select {} from w where {} = {}", id(a), id(b), Literal::typed(&v).token());
            let q = if kind == 0 {
                vec![w("what is the"), ctx.col(a, rng), w("of"), ctx.lit(&v, rng)]
            } else {
                vec![w("what"), ctx.col(a, rng), w("does"), ctx.lit(&v, rng), w("have")]
            };
            (q, sql)
        }
        2 => {
            let a = if any_col == b { (b + 1) % t.n_columns() } else { any_col };
            let v = ctx.cell(row, b).to_string();
            let sql = format!("select {} from w where {} = {}", id(a), id(b), Literal::typed(&v).token());
            (
                vec![w("what is the"), ctx.col(a, rng), w("when the"), ctx.col(b, rng), w("is"), ctx.lit(&v, rng)],
                sql,
            )
        }
        3 => {
            let desc = rng.random_bool(0.5);
            let dir = if desc { "desc" } else { "asc" };
            let word = if desc { pick(&["highest", "most", "largest"], rng) } else { pick(&["lowest", "fewest", "smallest"], rng) };
            let sql = format!("select {} from w order by {} {dir} limit 1", id(b), id(n));
            (
                vec![w("which"), ctx.col(b, rng), w("has the"), Piece::Keyword(dir.into(), word.into()), ctx.col(n, rng)],
                sql,
            )
        }
        4 => {
            let v = ctx.cell(row, b).to_string();
            let sql = format!("select count ( * ) from w where {} = {}", id(b), Literal::typed(&v).token());
            (
                vec![
                    Piece::Keyword("count".into(), "how many".into()),
                    w(ctx.domain.entities),
                    w("have"),
                    ctx.lit(&v, rng),
                    w("as"),
                    ctx.col(b, rng),
                ],
                sql,
            )
        }
        5 => {
            let (agg, word) = if rng.random_bool(0.6) { ("sum", "total") } else { ("avg", "average") };
            let v = ctx.cell(row, b).to_string();
            let sql = format!("select {agg} ( {} ) from w where {} = {}", id(n), id(b), Literal::typed(&v).token());
            (
                vec![w("what is the"), Piece::Keyword(agg.into(), word.into()), ctx.col(n, rng), w("for"), ctx.lit(&v, rng)],
                sql,
            )
        }
        6 => {
            let sql = format!("select {0} from w group by {0} order by count ( * ) desc limit 1", id(b));
            let tail = pick(&["appears the most", "occurs most often", "is listed the most"], rng);
            (vec![w("which"), ctx.col(b, rng), w(tail)], sql)
        }
        7 => {
            let other = (0..n_rows).find(|&r| ctx.cell(r, b) != ctx.cell(row, b))?;
            let a = if any_col == b { (b + 1) % t.n_columns() } else { any_col };
            let (v1, v2) = (ctx.cell(row, b).to_string(), ctx.cell(other, b).to_string());
            let sql = format!(
                "select {} from w where {} in ( {} , {} )",
                id(a),
                id(b),
                Literal::typed(&v1).token(),
                Literal::typed(&v2).token()
            );
            (
                vec![w("list the"), ctx.col(a, rng), w("for"), ctx.lit(&v1, rng), w("or"), ctx.lit(&v2, rng)],
                sql,
            )
        }
        8 => {
            let more = rng.random_bool(0.5);
            let (op, word) = if more { (">", "more") } else { ("<", "fewer") };
            let key = strs[0];
            let v = ctx.cell(row, key).to_string();
            let sql = format!(
                "select {} from w where {} {op} ( select {} from w where {} = {} )",
                id(key),
                id(n),
                id(n),
                id(key),
                Literal::typed(&v).token()
            );
            (
                vec![
                    w("which"),
                    ctx.col(key, rng),
                    w("had"),
                    w(word),
                    Piece::Column(id(n), ctx.col_surface(n, rng), 0),
                    w("than"),
                    ctx.lit(&v, rng),
                ],
                sql,
            )
        }
        9 => {
            let above = rng.random_bool(0.5);
            let (op, word) = if above { (">", pick(&["above", "over", "more than"], rng)) } else { ("<", pick(&["below", "under", "less than"], rng)) };
            let x = ctx.cell(row, n).to_string();
            let sql = format!("select {} from w where {} {op} {}", id(b), id(n), Literal::typed(&x).token());
            (
                vec![w("which"), ctx.col(b, rng), w("had"), ctx.col(n, rng), w(word), ctx.lit(&x, rng)],
                sql,
            )
        }
        10 => {
            let a = if any_col == b { (b + 1) % t.n_columns() } else { any_col };
            if a == n {
                return None;
            }
            let v = ctx.cell(row, b).to_string();
            let x = ctx.cell(row, n).to_string();
            let sql = format!(
                "select {} from w where {} = {} and {} = {}",
                id(a),
                id(b),
                Literal::typed(&v).token(),
                id(n),
                Literal::typed(&x).token()
            );
            (
                vec![
                    w("what is the"),
                    ctx.col(a, rng),
                    w("of"),
                    ctx.lit(&v, rng),
                    w("with"),
                    ctx.col(n, rng),
                    ctx.lit(&x, rng),
                ],
                sql,
            )
        }
        11 => (
            vec![Piece::Keyword("count".into(), "how many".into()), w(ctx.domain.entities), w("are listed")],
            "select count ( * ) from w".to_string(),
        ),
        _ => {
            let (agg, word) = if rng.random_bool(0.5) { ("max", "highest") } else { ("min", "lowest") };
            let sql = format!("select {agg} ( {} ) from w", id(n));
            (vec![w("what is the"), Piece::Keyword(agg.into(), word.into()), ctx.col(n, rng)], sql)
        }
    })
}

/// Index of the `occurrence`-th SQL token with this kind and text.
fn find_token(tokens: &[SqlToken], kind: TokenKind, text: &str, occurrence: usize) -> Option<usize> {
    tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| t.kind == kind && t.text == text)
        .map(|(i, _)| i)
        .nth(occurrence)
}

fn random_record(id: &str, table: &TableData, cfg: &ToyConfig, rng: &mut ChaCha8Rng) -> Option<DatasetRecord> {
    let domain = DOMAINS.iter().find(|d| d.name == table.table_name)?;
    let ctx = Ctx { table, domain, cfg };
    for _ in 0..20 {
        let Some((pieces, sql)) = template(&ctx, rng) else {
            continue;
        };
        let tree = parse_sql(&sql).expect("templates produce valid SQL");
        let answer = match execute(&tree, table) {
            Ok(d) => d.flatten(),
            Err(_) => continue,
        };
        if answer.is_empty() || answer.iter().all(|a| a.is_empty()) {
            continue;
        }
        let sql_tokens = SqlToken::from_tree(&tree);
        let mut query = Vec::new();
        let mut alignments = Vec::new();
        for p in pieces {
            let (surface, target) = match p {
                Piece::Words(s) => (s, None),
                Piece::Column(c, s, k) => (s, find_token(&sql_tokens, TokenKind::Column, &c, k)),
                Piece::Literal(tok, s) => (s, find_token(&sql_tokens, TokenKind::Literal, &tok, 0)),
                Piece::Keyword(kw, s) => (s, find_token(&sql_tokens, TokenKind::Keyword, &kw, 0)),
            };
            let start = query.len();
            query.extend(surface.split_whitespace().map(String::from));
            if let Some(sql_index) = target {
                alignments.push(Alignment { start, end: query.len(), sql_index });
            }
        }
        if rng.random_bool(0.5) {
            query.push("?".into());
        }
        return Some(DatasetRecord {
            record_id: id.to_string(),
            table_id: table.table_id.clone(),
            query_tokens: query,
            gold_sql_tokens: sql_tokens,
            alignments,
            gold_answer: answer,
        });
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{derive_annotations, load_dataset, load_table_from_dir, AnnotationIssue};
    use crate::sql::{denotation_equal, parse_tokens};
    use std::collections::BTreeSet;

    fn small() -> ToyConfig {
        ToyConfig { n_train: 80, n_dev: 20, n_test: 10, ..Default::default() }
    }

    #[test]
    fn records_are_consistent() {
        let c = ToyCorpus::generate(&small());
        assert_eq!((c.train.len(), c.dev.len(), c.test.len()), (80, 20, 10));
        for r in c.train.iter().chain(&c.dev) {
            r.validate().unwrap();
            let t = &c.tables[&r.table_id];
            let tree = parse_tokens(&r.gold_sql_tokens).unwrap();
            assert!(denotation_equal(&execute(&tree, t).unwrap(), &r.gold_answer));
            let ann = derive_annotations(r, t, &tree).unwrap();
            assert!(
                ann.issues.iter().all(|i| !matches!(i, AnnotationIssue::ConflictingAlignment { .. })),
                "{:?}",
                ann.issues
            );
            assert!(ann.spans.iter().all(|s| s.label == crate::data::EntityLabel::AggFunction || s.link_target.is_some()));
        }
    }

    #[test]
    fn held_out_tables_use_unseen_names() {
        let c = ToyCorpus::generate(&small());
        let names = |split: &str| -> BTreeSet<String> {
            c.tables
                .values()
                .filter(|t| t.table_id.starts_with(&format!("toy_{split}_")) && t.table_name != "races")
                .flat_map(|t| t.rows.iter().map(|r| r[0].raw.clone()))
                .filter(|v| v.contains(' '))
                .collect()
        };
        let (train, dev) = (names("train"), names("dev"));
        assert!(!dev.is_empty());
        assert!(train.iter().all(|n| !dev.contains(n)));
    }

    #[test]
    fn generation_is_deterministic_and_varied() {
        let a = ToyCorpus::generate(&small());
        let b = ToyCorpus::generate(&small());
        assert_eq!(a.train, b.train);
        assert!(a.train.iter().any(|r| parse_tokens(&r.gold_sql_tokens).unwrap().contains_subquery()));
        let other = ToyCorpus::generate(&ToyConfig { seed: 8, ..small() });
        assert_ne!(a.train, other.train);
    }

    #[test]
    fn written_corpus_loads_back() {
        let c = ToyCorpus::generate(&ToyConfig { n_train: 6, n_dev: 3, n_test: 2, ..Default::default() });
        let dir = tempfile::tempdir().unwrap();
        c.write(dir.path()).unwrap();
        assert_eq!(load_dataset(dir.path(), Split::Dev).unwrap(), c.dev);
        let r = &c.train[0];
        assert_eq!(load_table_from_dir(&dir.path().join("tables"), &r.table_id).unwrap(), c.tables[&r.table_id]);
    }
}
