//! Acceptance gate. Prints one PASS/FAIL line per criterion.
//!
//! Criteria that need the SQUALL release read it from `SQUALL_DIR` (a raw
//! checkout, as given to `text2sql ingest`). Without it they report FAIL and
//! the run still exits zero; set `ACCEPTANCE_STRICT=1` to make any FAIL exit
//! nonzero. Everything else runs on the generated corpus.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config as PtConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use text2sql::data::{EntityLabel, Split};
use text2sql::grammar::{oracle_actions, replay, Grammar};
use text2sql::linker::{is_exact_match, train_nel, GroupStats, LinkerConfig, LinkerModel, LinkerTrainConfig};
use text2sql::ner::{
    constrained_label_decode, enumerate_spans, gazetteer_filter, train_ner, Gazetteer, MatchCategory, NerConfig,
    NerModel, NerTrainConfig, SpanScores,
};
use text2sql::nsp::{decode_beam, encode, train_nsp, ActionScorer, NspConfig, NspModel, NspTrainConfig, RandomScorer};
use text2sql::optim::SparseGrad;
use text2sql::pipeline::{
    check_gold_execution, gold_encode_input, induce_from, ingest_squall, link_groups, ner_instances, nsp_examples,
    run_experiment_grid, Dataset, GridSpec, HarnessMode, PipelineConfig,
};
use text2sql::sql::{parse_sql, parse_tokens, serialize, ParseError};
use text2sql::toy::{ToyConfig, ToyCorpus};

struct Outcome {
    pass: bool,
    detail: String,
    /// Failed only because the dataset is not available here.
    missing_data: bool,
}

impl Outcome {
    fn check(pass: bool, detail: impl Into<String>) -> Self {
        Outcome { pass, detail: detail.into(), missing_data: false }
    }

    fn missing(detail: impl Into<String>) -> Self {
        Outcome { pass: false, detail: detail.into(), missing_data: true }
    }
}

/// Where the data for the data-bound criteria comes from.
struct Source {
    name: &'static str,
    /// Directory in the dataset layout (`train.jsonl`, `tables/`, ...).
    dir: PathBuf,
    train: Dataset,
    dev: Dataset,
}

struct Squall {
    dir: tempfile::TempDir,
    ingest: Result<(text2sql::pipeline::IngestReport, Duration), String>,
}

fn squall() -> Option<Squall> {
    let raw = PathBuf::from(std::env::var_os("SQUALL_DIR")?);
    let dir = tempfile::tempdir().ok()?;
    let t = Instant::now();
    let ingest = ingest_squall(&raw, dir.path()).map(|r| (r, t.elapsed())).map_err(|e| e.to_string());
    Some(Squall { dir, ingest })
}

fn load(dir: &Path, name: &'static str) -> Result<Source, String> {
    let tables = dir.join("tables");
    let train = Dataset::load(&dir.join("train.jsonl"), Split::Train, &tables).map_err(|e| e.to_string())?;
    let dev = Dataset::load(&dir.join("dev.jsonl"), Split::Dev, &tables).map_err(|e| e.to_string())?;
    Ok(Source { name, dir: dir.to_path_buf(), train, dev })
}

fn toy_corpus(n_train: usize, n_dev: usize) -> ToyCorpus {
    ToyCorpus::generate(&ToyConfig { n_train, n_dev, n_test: n_dev, ..Default::default() })
}

fn c1_dataset_fidelity(sq: Option<&Squall>) -> Outcome {
    let Some(sq) = sq else {
        return Outcome::missing("SQUALL_DIR not set; the SQUALL release is not available in this environment");
    };
    match &sq.ingest {
        Ok((r, took)) => Outcome::check(
            r.train_total == 11276 && r.test == 4344 && *took < Duration::from_secs(60),
            format!("train {} (want 11276), test {} (want 4344), {:.1?}", r.train_total, r.test, took),
        ),
        Err(e) => Outcome::check(false, format!("ingest failed: {e}")),
    }
}

fn c2_round_trip(src: &Source) -> Outcome {
    let t = Instant::now();
    let (mut in_subset, mut identical) = (0, 0);
    let mut unsupported = std::collections::BTreeMap::<String, usize>::new();
    for ex in src.train.examples.iter().chain(&src.dev.examples) {
        if ex.record.gold_sql_tokens.is_empty() {
            continue;
        }
        match parse_tokens(&ex.record.gold_sql_tokens) {
            Ok(tree) => {
                in_subset += 1;
                let text = serialize(&tree).join(" ");
                if parse_sql(&text).is_ok_and(|again| again == tree && serialize(&again) == serialize(&tree)) {
                    identical += 1;
                }
            }
            Err(ParseError::Unsupported(what)) => *unsupported.entry(what).or_default() += 1,
            Err(ParseError::Syntax { .. }) => *unsupported.entry("syntax error".into()).or_default() += 1,
        }
    }
    let took = t.elapsed();
    let excluded: Vec<String> = unsupported.iter().map(|(k, v)| format!("{k}={v}")).collect();
    Outcome::check(
        in_subset > 0 && identical == in_subset && took < Duration::from_secs(120),
        format!(
            "{}: {identical}/{in_subset} identical, excluded [{}], {:.1?}",
            src.name,
            if excluded.is_empty() { "none".to_string() } else { excluded.join(", ") },
            took
        ),
    )
}

fn induce_with_cli(data_dir: &Path, out: &Path) -> Result<Vec<u8>, String> {
    let status = Command::new(env!("CARGO_BIN_EXE_text2sql"))
        .arg("induce-grammar")
        .args(["--set", &format!("data_dir={}", data_dir.display())])
        .args(["--set", &format!("grammar={}", out.display())])
        .output()
        .map_err(|e| e.to_string())?;
    if !status.status.success() {
        return Err(String::from_utf8_lossy(&status.stderr).into_owned());
    }
    std::fs::read(out).map_err(|e| e.to_string())
}

fn c3_grammar(src: &Source) -> Outcome {
    let grammar = induce_from(&src.train);
    let (mut total, mut rebuilt) = (0, 0);
    for ex in src.train.supervised() {
        let tree = ex.tree.as_ref().unwrap();
        total += 1;
        if oracle_actions(tree, &grammar).and_then(|a| replay(&a, &grammar)).is_ok_and(|t| &t == tree) {
            rebuilt += 1;
        }
    }
    let tmp = tempfile::tempdir().unwrap();
    let runs = (induce_with_cli(&src.dir, &tmp.path().join("a.txt")), induce_with_cli(&src.dir, &tmp.path().join("b.txt")));
    let (same, detail) = match runs {
        (Ok(a), Ok(b)) => (a == b && a == grammar.to_text().into_bytes(), format!("{} bytes", a.len())),
        (Err(e), _) | (_, Err(e)) => (false, format!("induce-grammar failed: {e}")),
    };
    Outcome::check(
        total > 0 && rebuilt == total && same,
        format!(
            "{}: {rebuilt}/{total} trees reconstructed, {} rules, two CLI runs byte-identical={same} ({detail})",
            src.name,
            grammar.len()
        ),
    )
}

fn random_nsp(grammar: &Grammar, seed: u64) -> NspModel {
    let mut m = NspModel::new(NspConfig::default(), grammar);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for w in &mut m.weights {
        *w = rng.random_range(-1.0..1.0);
    }
    m
}

fn c4_decoder(src: &Source) -> Outcome {
    let grammar = induce_from(&src.train);
    let encs: Vec<_> = src
        .dev
        .supervised()
        .map(|ex| encode(&gold_encode_input(ex, src.dev.table(ex), HarnessMode::ColumnTypeFeature), false))
        .collect();
    let models: Vec<NspModel> = (0..4).map(|s| random_nsp(&grammar, s)).collect();
    let (mut trees, mut valid, mut exceptions) = (0usize, 0usize, 0usize);
    let mut first_problem = None;
    for i in 0..10_000usize {
        let enc = &encs[i % encs.len()];
        let random = RandomScorer { seed: i as u64 };
        let scorer: &dyn ActionScorer = if i % 2 == 0 { &random } else { &models[(i / 2) % models.len()] };
        let beam = 1 + i % 4;
        let out = catch_unwind(AssertUnwindSafe(|| decode_beam(enc, &grammar, scorer, beam, 64)));
        match out {
            Ok(Ok(decoded)) => {
                for d in decoded {
                    trees += 1;
                    let derivable = oracle_actions(&d.tree, &grammar).is_ok();
                    let replays = replay(&d.actions, &grammar).is_ok_and(|t| t == d.tree);
                    let reparses = parse_sql(&d.tree.to_sql()).is_ok_and(|t| t == d.tree);
                    if derivable && replays && reparses {
                        valid += 1;
                    } else {
                        first_problem.get_or_insert_with(|| d.tree.to_sql());
                    }
                }
            }
            Ok(Err(e)) => {
                exceptions += 1;
                first_problem.get_or_insert_with(|| e.to_string());
            }
            Err(_) => {
                exceptions += 1;
                first_problem.get_or_insert_with(|| "panic".into());
            }
        }
    }
    Outcome::check(
        exceptions == 0 && valid == trees,
        format!(
            "10000 decodes, {valid}/{trees} returned trees grammar-valid and re-parseable, {exceptions} exceptions{}",
            first_problem.map(|p| format!(" (first: {p})")).unwrap_or_default()
        ),
    )
}

fn c5_execution(src: &Source) -> Outcome {
    let gold = check_gold_execution(&src.dev);
    for (id, sql, got) in gold.mismatches.iter().take(5) {
        println!("      mismatch {id}: {sql} -> {got}");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let cases = 2000;
    let disagreements: Vec<String> =
        (0..cases).filter_map(|_| common::differential(&common::random_case(&mut rng)).err()).collect();
    if let Some(d) = disagreements.first() {
        println!("      disagreement: {d}");
    }
    Outcome::check(
        gold.rate() >= 0.9 && disagreements.is_empty(),
        format!(
            "{}: gold execution {}/{} = {:.4} ({} mismatches); SQLite differential {cases} cases, {} disagreements",
            src.name,
            gold.matching,
            gold.in_subset,
            gold.rate(),
            gold.mismatches.len(),
            disagreements.len()
        ),
    )
}

fn compatible(label: EntityLabel, cat: MatchCategory) -> bool {
    match cat {
        MatchCategory::Schema => label.is_column(),
        MatchCategory::Cell => label == EntityLabel::LiteralValue,
        MatchCategory::NoneMatch => true,
    }
}

/// One random query over a random table with random span distributions.
fn gazetteer_case(seed: u64) -> Result<(), TestCaseError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let table = common::random_table(&mut rng);
    let gaz = Gazetteer::from_table(&table);
    let mut vocab: Vec<String> = ["the", "of", "how", "many", "?", "total"].map(String::from).to_vec();
    for e in table.column_display_names.iter().map(String::as_str).chain(table.distinct_cells()) {
        vocab.extend(e.split_whitespace().map(String::from));
    }
    let n = rng.random_range(1..=10);
    let tokens: Vec<String> = (0..n).map(|_| vocab[rng.random_range(0..vocab.len())].clone()).collect();
    let spans = enumerate_spans(n, 8);
    let probs: Vec<[f64; 7]> = spans
        .iter()
        .map(|_| {
            let sharp = rng.random_range(0.2..8.0);
            let mut p = [0.0; 7];
            for x in &mut p {
                *x = rng.random::<f64>().powf(sharp);
            }
            let z: f64 = p.iter().sum::<f64>().max(1e-300);
            p.map(|x| x / z)
        })
        .collect();
    let scores = SpanScores { spans, probs };
    let (labels, cats) = gazetteer_filter(&scores, &gaz, &tokens);
    for ((sp, p), (&label, &cat)) in scores.spans.iter().zip(&scores.probs).zip(labels.iter().zip(&cats)) {
        if cat != MatchCategory::NoneMatch {
            prop_assert_ne!(label, EntityLabel::None, "matched span {:?} of {:?} left NONE", sp, tokens);
        }
        prop_assert!(compatible(constrained_label_decode(p, cat), cat));
    }
    Ok(())
}

fn c6_gazetteer() -> Outcome {
    let cases = 10_000;
    let mut runner = TestRunner::new(PtConfig { cases, failure_persistence: None, ..PtConfig::default() });
    match runner.run(&any::<u64>(), gazetteer_case) {
        Ok(()) => Outcome::check(true, format!("{cases} random tables, queries and distributions")),
        Err(e) => Outcome::check(false, e.to_string()),
    }
}

/// Largest relative error between an analytic gradient and central
/// differences, over parameters where either side exceeds 1e-7, and how many
/// such parameters there were.
fn grad_check(n: usize, analytic: &[f64], mut loss_at: impl FnMut(usize, f64) -> f64) -> (f64, usize) {
    let eps = 1e-5;
    let (mut worst, mut checked): (f64, usize) = (0.0, 0);
    for (i, &an) in analytic.iter().enumerate().take(n) {
        let fd = (loss_at(i, eps) - loss_at(i, -eps)) / (2.0 * eps);
        let scale = fd.abs().max(an.abs());
        if scale < 1e-7 {
            continue;
        }
        checked += 1;
        worst = worst.max((fd - an).abs() / scale);
    }
    (worst, checked)
}

fn c7_learning(src: &Source) -> Outcome {
    let slice = src.train.head(10);
    let k = slice.len() as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut notes = Vec::new();
    let mut ok = true;

    let inst = ner_instances(&slice);
    let mut ner = NerModel::init(NerConfig::default(), &mut rng);
    let cfg = NerTrainConfig { epochs: 300, lr_decay: 0.0, ..Default::default() };
    let ner_ok = train_ner(&mut ner, &inst, &[], &cfg, &mut rng).is_ok();
    let ner_loss = ner.loss(&inst) / k;
    ok &= ner_ok && ner_loss < 0.01;

    let groups = link_groups(&slice, &mut GroupStats::default());
    let mut nel = LinkerModel::zeros(LinkerConfig::default());
    let cfg = LinkerTrainConfig { epochs: 300, ..Default::default() };
    let nel_ok = train_nel(&mut nel, &groups, &[], &cfg, &mut rng).is_ok();
    let nel_loss = nel.loss(&groups) / k;
    ok &= nel_ok && nel_loss < 0.01;

    let grammar = induce_from(&slice);
    let (exs, _) = nsp_examples(&slice, &grammar, HarnessMode::ColumnTypeFeature);
    let mut nsp = NspModel::new(NspConfig::default(), &grammar);
    let cfg = NspTrainConfig { epochs: 300, feature_dropout: 0.0, ..Default::default() };
    let nsp_ok = train_nsp(&mut nsp, &exs, &[], &cfg, &mut rng).is_ok();
    let nsp_loss: f64 = exs.iter().map(|e| nsp.sequence_loss(&grammar, &e.enc, &e.actions, None).unwrap().0).sum::<f64>() / k;
    ok &= nsp_ok && nsp_loss < 0.01;
    notes.push(format!("loss per record NER {ner_loss:.5} NEL {nel_loss:.5} NSP {nsp_loss:.5}"));

    // Gradient checks on small random models over three records.
    let few = src.train.head(3);
    let inst = ner_instances(&few);
    let small = NerConfig { dim: 4, len_dim: 2, max_span_len: 4, buckets: 256, ..Default::default() };
    let ner = NerModel::init(small, &mut rng);
    let (_, g) = ner.loss_and_gradient(&inst);
    let ner_err = grad_check(ner.params.len(), &g, |i, d| {
        let mut m = ner.clone();
        m.params[i] += d;
        m.loss(&inst)
    });

    let groups = link_groups(&few, &mut GroupStats::default());
    let mut nel = LinkerModel::zeros(LinkerConfig { buckets: 512, ..Default::default() });
    for w in &mut nel.weights {
        *w = rng.random_range(-0.5..0.5);
    }
    let (_, g) = nel.loss_and_gradient(&groups);
    let nel_err = grad_check(nel.weights.len(), &g, |i, d| {
        let mut m = nel.clone();
        m.weights[i] += d;
        m.loss(&groups)
    });

    let grammar = induce_from(&few);
    let (exs, _) = nsp_examples(&few, &grammar, HarnessMode::ColumnTypeFeature);
    let mut nsp = NspModel::new(NspConfig { buckets: 512, ..Default::default() }, &grammar);
    for w in &mut nsp.weights {
        *w = rng.random_range(-0.5..0.5);
    }
    let nsp_loss_of = |m: &NspModel| -> f64 { exs.iter().map(|e| m.sequence_loss(&grammar, &e.enc, &e.actions, None).unwrap().0).sum() };
    let mut sg = SparseGrad::new();
    for e in &exs {
        nsp.sequence_loss(&grammar, &e.enc, &e.actions, Some(&mut sg)).unwrap();
    }
    let g: Vec<f64> = (0..nsp.weights.len()).map(|i| sg.get(i)).collect();
    let nsp_err = grad_check(nsp.weights.len(), &g, |i, d| {
        let mut m = nsp.clone();
        m.weights[i] += d;
        nsp_loss_of(&m)
    });
    ok &= [ner_err, nel_err, nsp_err].iter().all(|(e, n)| *e < 1e-4 && *n > 0);
    notes.push(format!(
        "max relative gradient error NER {:.1e} over {} params, NEL {:.1e} over {}, NSP {:.1e} over {}",
        ner_err.0, ner_err.1, nel_err.0, nel_err.1, nsp_err.0, nsp_err.1
    ));
    Outcome::check(ok, format!("{}: {}", src.name, notes.join("; ")))
}

struct GridOutcome {
    c8: Outcome,
    c10: Outcome,
}

fn c8_c10_grid() -> GridOutcome {
    let corpus = toy_corpus(400, 100);
    let train = Dataset::from_records(corpus.train.clone(), &corpus.tables).unwrap();
    let dev = Dataset::from_records(corpus.dev.clone(), &corpus.tables).unwrap();
    let cfg = PipelineConfig::default();
    let t = Instant::now();
    let grid = run_experiment_grid(&cfg, &GridSpec::default(), &train, &dev);
    let took = t.elapsed();
    let grid = match grid {
        Ok(g) => g,
        Err(e) => {
            let c10 = Outcome::check(false, format!("evaluation failed: {e}"));
            return GridOutcome { c8: Outcome::check(false, format!("grid failed: {e}")), c10 };
        }
    };
    print!("{}", grid.table().lines().map(|l| format!("      {l}\n")).collect::<String>());
    let row = |m, a| grid.find(m, a).expect("grid row");
    let oracle = row(HarnessMode::OracleFeature, "full");
    let predicted = row(HarnessMode::ColumnTypeFeature, "full");
    let no_gaz = row(HarnessMode::ColumnTypeFeature, "-gazetteer");
    let a = oracle.acc_lf >= predicted.acc_lf;
    let b = no_gaz.diagnostics.ner_f1 <= predicted.diagnostics.ner_f1;
    let fast = took < Duration::from_secs(600);
    let c8 = Outcome::check(
        a && b && fast,
        format!(
            "(a) oracle ACC_LF {:.4} >= predicted {:.4}: {a}; (b) NER F1 without gazetteer {:.4} <= with {:.4}: {b}; seed {}, {:.1?}",
            oracle.acc_lf, predicted.acc_lf, no_gaz.diagnostics.ner_f1, predicted.diagnostics.ner_f1, cfg.seed, took
        ),
    );
    let holds = grid.reports.iter().all(|r| r.acc_exe >= r.acc_lf);
    let c10 = Outcome::check(
        holds,
        format!("{} evaluation runs passed the built-in assertion; ACC_EXE >= ACC_LF on every run: {holds}", grid.reports.len()),
    );
    GridOutcome { c8, c10 }
}

fn exact_fraction(ds: &Dataset) -> (usize, usize) {
    let (mut exact, mut total) = (0, 0);
    for ex in ds.supervised() {
        for s in &ex.spans {
            if let Some(e) = is_exact_match(&ex.record.query_tokens, s, ds.table(ex)) {
                total += 1;
                exact += e as usize;
            }
        }
    }
    (exact, total)
}

fn c9_motivation(squall_src: Option<&Source>, toy: &Source) -> Outcome {
    let (te, tt) = exact_fraction(&toy.dev);
    let toy_note = format!("generated corpus measures {:.4} ({te}/{tt}), not comparable", te as f64 / tt.max(1) as f64);
    let Some(src) = squall_src else {
        return Outcome::missing(format!("SQUALL dev split not available; {toy_note}"));
    };
    let (e, t) = exact_fraction(&src.dev);
    let f = e as f64 / t.max(1) as f64;
    Outcome::check(t > 0 && f < 0.5, format!("SQUALL dev exact-match fraction {f:.4} ({e}/{t})"))
}

fn main() -> ExitCode {
    let start = Instant::now();
    let sq = squall();
    let squall_src = sq.as_ref().and_then(|s| s.ingest.as_ref().ok().map(|_| s)).map(|s| load(s.dir.path(), "SQUALL"));
    let squall_src = match squall_src {
        Some(Ok(s)) => Some(s),
        Some(Err(e)) => {
            println!("SQUALL load failed: {e}");
            None
        }
        None => None,
    };
    let toy_dir = tempfile::tempdir().unwrap();
    toy_corpus(400, 100).write(toy_dir.path()).unwrap();
    let toy = load(toy_dir.path(), "generated corpus").unwrap();
    let src = squall_src.as_ref().unwrap_or(&toy);

    let mut results: Vec<(&str, Outcome)> = vec![
        ("dataset fidelity", c1_dataset_fidelity(sq.as_ref())),
        ("round-trip parsing", c2_round_trip(src)),
        ("grammar completeness", c3_grammar(src)),
        ("decoder soundness", c4_decoder(src)),
        ("execution oracle", c5_execution(src)),
        ("gazetteer guarantee", c6_gazetteer()),
        ("learning sanity", c7_learning(&toy)),
    ];
    let grid = c8_c10_grid();
    results.push(("directional reproductions", grid.c8));
    results.push(("motivation statistic", c9_motivation(squall_src.as_ref(), &toy)));
    results.push(("metric containment", grid.c10));

    println!();
    for (i, (name, o)) in results.iter().enumerate() {
        println!("{} {:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    let failed = results.iter().filter(|(_, o)| !o.pass).count();
    let blocking = results.iter().filter(|(_, o)| !o.pass && !o.missing_data).count();
    println!("{} of {} criteria pass ({:.1?})", results.len() - failed, results.len(), start.elapsed());
    let strict = std::env::var_os("ACCEPTANCE_STRICT").is_some_and(|v| v != "0");
    if blocking > 0 || (strict && failed > 0) {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
