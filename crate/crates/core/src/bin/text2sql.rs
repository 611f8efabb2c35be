use std::fs;
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use text2sql::data::{derive_annotations, DatasetRecord, Split, TableData};
use text2sql::pipeline::{
    check_gold_execution, evaluate, induce_from, ingest_squall, run_experiment_grid, run_pipeline, train_ner_stage,
    train_nel_stage, train_nsp_stage, Artifacts, Dataset, GridSpec, HarnessMode, NerAblation, PipelineConfig,
    PipelineError,
};
use text2sql::toy::{ToyConfig, ToyCorpus};
use text2sql::Grammar;

#[derive(Parser)]
#[command(name = "text2sql", version, about = "Train, run and evaluate the text-to-SQL pipeline")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Config override, repeatable (`--set mode=oracle_feature`).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Also write the JSON report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

impl Common {
    fn config(&self) -> Result<PipelineConfig, PipelineError> {
        let mut c = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        c.apply_overrides(&self.overrides)?;
        Ok(c)
    }

    fn emit(&self, table: &str, json: &serde_json::Value) -> anyhow::Result<()> {
        let mut out = std::io::stdout().lock();
        out.write_all(table.as_bytes())?;
        let text = serde_json::to_string_pretty(json)?;
        match &self.report {
            Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
            None => writeln!(out, "{text}")?,
        }
        Ok(())
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Convert a raw SQUALL checkout and report split sizes and SQL coverage.
    Ingest {
        #[arg(long)]
        squall: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Write a generated corpus in the dataset layout.
    GenToy {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 400)]
        n_train: usize,
        #[arg(long, default_value_t = 100)]
        n_dev: usize,
        #[arg(long, default_value_t = 100)]
        n_test: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Derive typed, linked spans from the alignments of one split.
    DeriveAnnotations {
        #[arg(long, default_value = "train")]
        split: Split,
        /// JSON-lines output, one record per line.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    TrainNer(#[command(flatten)] Common),
    TrainNel(#[command(flatten)] Common),
    /// Induce the grammar from train and fit the decoder for the configured mode.
    TrainNsp(#[command(flatten)] Common),
    /// Induce the grammar from the training split and write it.
    InduceGrammar(#[command(flatten)] Common),
    /// Run the full pipeline on one record or a free-form question.
    Predict {
        #[arg(long, default_value = "dev")]
        split: Split,
        /// Record id within the split.
        #[arg(long, conflicts_with = "question")]
        record: Option<String>,
        /// Whitespace-tokenized question (needs --table).
        #[arg(long, requires = "table")]
        question: Option<String>,
        #[arg(long)]
        table: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    Evaluate {
        #[arg(long, default_value = "dev")]
        split: Split,
        #[command(flatten)]
        common: Common,
    },
    /// Train and evaluate every harness mode and NER ablation.
    Grid {
        #[arg(long, default_value = "dev")]
        split: Split,
        /// Restrict to these modes (comma separated).
        #[arg(long, value_delimiter = ',')]
        modes: Vec<HarnessMode>,
        /// Skip the NER ablation rows.
        #[arg(long)]
        no_ablations: bool,
        #[command(flatten)]
        common: Common,
    },
}

fn split_path(cfg: &PipelineConfig, split: Split) -> &Path {
    match split {
        Split::Train => &cfg.train,
        Split::Dev => &cfg.dev,
        Split::Test => &cfg.test,
    }
}

fn load(cfg: &PipelineConfig, split: Split) -> Result<Dataset, PipelineError> {
    Dataset::load(split_path(cfg, split), split, &cfg.table_dir)
}

fn save(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(d) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(d)?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.cmd {
        Cmd::Ingest { squall, out, common } => {
            let t = std::time::Instant::now();
            let r = ingest_squall(&squall, &out)?;
            let tables = out.join("tables");
            let train = Dataset::load(&out.join("train.jsonl"), Split::Train, &tables)?;
            let dev = Dataset::load(&out.join("dev.jsonl"), Split::Dev, &tables)?;
            let gold = check_gold_execution(&dev);
            let table = format!(
                "train records   {}\n  train split   {}\n  dev fold      {}\ntest records    {}\ntables          {}\nparsed (train)  {} / {}\ngold exec (dev) {:.4}\nelapsed         {:.1?}\n",
                r.train_total, r.train, r.dev, r.test, r.tables, train.stats.parsed,
                train.stats.records - train.stats.without_sql, gold.rate(), t.elapsed()
            );
            common.emit(&table, &json!({ "ingest": r, "train": train.stats, "dev": dev.stats, "dev_gold_execution": gold }))?;
        }
        Cmd::GenToy { out, n_train, n_dev, n_test, seed } => {
            let c = ToyCorpus::generate(&ToyConfig { seed, n_train, n_dev, n_test, ..Default::default() });
            c.write(&out)?;
            println!("wrote {} / {} / {} records and {} tables to {}", c.train.len(), c.dev.len(), c.test.len(), c.tables.len(), out.display());
        }
        Cmd::DeriveAnnotations { split, out, common } => {
            let cfg = common.config()?;
            let ds = load(&cfg, split)?;
            let mut lines = String::new();
            for ex in ds.supervised() {
                let ann = derive_annotations(&ex.record, ds.table(ex), ex.tree.as_ref().unwrap())?;
                lines.push_str(&serde_json::to_string(&json!({ "id": ex.record.record_id, "spans": ann.spans, "issues": ann.issues }))?);
                lines.push('\n');
            }
            if let Some(p) = out {
                save(&p, &lines)?;
            }
            let s = &ds.stats;
            let table = format!(
                "records {}  parsed {}  no sql {}  conflicting {}  unlinked {}\n",
                s.records, s.parsed, s.without_sql, s.conflicting_alignments, s.unlinked_spans
            );
            common.emit(&table, &json!(s))?;
        }
        Cmd::TrainNer(common) => {
            let cfg = common.config()?;
            let (train, dev) = (load(&cfg, Split::Train)?, load(&cfg, Split::Dev).ok());
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let (m, r) = train_ner_stage(&cfg, cfg.ner, &train, dev.as_ref(), &mut rng)?;
            save(&cfg.ner_model, &m.to_json())?;
            let f1 = r.dev_f1.map(|f| f.f1()).unwrap_or(f64::NAN);
            common.emit(&format!("final loss {:.5}  dev span F1 {:.4}\n", r.loss_curve.last().unwrap_or(&f64::NAN), f1), &json!(r))?;
        }
        Cmd::TrainNel(common) => {
            let cfg = common.config()?;
            let (train, dev) = (load(&cfg, Split::Train)?, load(&cfg, Split::Dev).ok());
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let (m, r) = train_nel_stage(&cfg, &train, dev.as_ref(), &mut rng)?;
            save(&cfg.nel_model, &m.to_json())?;
            let top1 = r.train.dev_top1.unwrap_or(f64::NAN);
            common.emit(&format!("final loss {:.5}  dev top-1 {:.4}\n", r.train.loss_curve.last().unwrap_or(&f64::NAN), top1), &json!(r))?;
        }
        Cmd::TrainNsp(common) => {
            let cfg = common.config()?;
            let train = load(&cfg, Split::Train)?;
            let grammar = induce_from(&train);
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let (m, r) = train_nsp_stage(&cfg, cfg.mode, &grammar, &train, &mut rng)?;
            save(&cfg.grammar, &grammar.to_text())?;
            save(&cfg.nsp_model, &m.to_json())?;
            common.emit(
                &format!("mode {}  rules {}  final loss {:.5}\n", cfg.mode, r.rules, r.train.loss_curve.last().unwrap_or(&f64::NAN)),
                &json!(r),
            )?;
        }
        Cmd::InduceGrammar(common) => {
            let cfg = common.config()?;
            let train = load(&cfg, Split::Train)?;
            let g: Grammar = induce_from(&train);
            save(&cfg.grammar, &g.to_text())?;
            common.emit(&g.to_text(), &json!({ "rules": g.len(), "path": cfg.grammar }))?;
        }
        Cmd::Predict { split, record, question, table, common } => {
            let cfg = common.config()?;
            let art = Artifacts::load(&cfg)?;
            let (rec, tbl): (DatasetRecord, TableData) = match (record, question) {
                (Some(id), _) => {
                    let ds = load(&cfg, split)?;
                    let ex = ds
                        .examples
                        .iter()
                        .find(|e| e.record.record_id == id)
                        .with_context(|| format!("no record {id} in {split}"))?;
                    (ex.record.clone(), ds.table(ex).clone())
                }
                (None, Some(q)) => {
                    let tid = table.expect("clap requires --table");
                    let t = text2sql::data::load_table_from_dir(&cfg.table_dir, &tid)?;
                    let r = DatasetRecord {
                        record_id: "question".into(),
                        table_id: tid,
                        query_tokens: q.split_whitespace().map(String::from).collect(),
                        gold_sql_tokens: Vec::new(),
                        alignments: Vec::new(),
                        gold_answer: Vec::new(),
                    };
                    (r, t)
                }
                (None, None) => anyhow::bail!("give --record or --question"),
            };
            let p = run_pipeline(&cfg, &art, &rec, &tbl);
            let answer = p.tree.as_ref().and_then(|t| text2sql::execute(t, &tbl).ok()).map(|d| d.flatten());
            let line = format!(
                "question  {}\nsql       {}\nanswer    {}\n",
                rec.question(),
                p.trace.prediction.as_deref().unwrap_or("<none>"),
                answer.as_ref().map(|a| a.join(" | ")).unwrap_or_default()
            );
            common.emit(&line, &json!({ "answer": answer, "trace": p.trace }))?;
        }
        Cmd::Evaluate { split, common } => {
            let cfg = common.config()?;
            let art = Artifacts::load(&cfg)?;
            let ds = load(&cfg, split)?;
            let r = evaluate(&cfg, &art, &ds, split.name())?;
            let mut table = format!("{}\n", r.summary());
            if !r.containment_excluded.is_empty() {
                table.push_str(&format!("{} records excluded from the containment check\n", r.containment_excluded.len()));
            }
            table.push_str(&format!("exact-match mention fraction {:.4}\n", r.diagnostics.exact_match_fraction));
            common.emit(&table, &serde_json::to_value(&r)?)?;
        }
        Cmd::Grid { split, modes, no_ablations, common } => {
            let cfg = common.config()?;
            let train = load(&cfg, Split::Train)?;
            let eval = load(&cfg, split)?;
            let mut spec = GridSpec::default();
            if !modes.is_empty() {
                spec.modes = modes;
            }
            if no_ablations {
                spec.ablations = vec![NerAblation::default()];
            }
            let g = run_experiment_grid(&cfg, &spec, &train, &eval)?;
            common.emit(&g.table(), &serde_json::from_str(&g.to_json())?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        // A closed pipe (`| head`) is a normal way to stop reading.
        Err(e) if e.downcast_ref::<std::io::Error>().is_some_and(|io| io.kind() == ErrorKind::BrokenPipe) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let schema = e.downcast_ref::<PipelineError>().is_some_and(PipelineError::is_schema_violation)
                || matches!(e.downcast_ref::<text2sql::data::DataError>(), Some(text2sql::data::DataError::SchemaViolation { .. }));
            ExitCode::from(if schema { 2 } else { 1 })
        }
    }
}
