use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::PipelineError;

/// How column information reaches the decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HarnessMode {
    /// All columns, no roles.
    Baseline,
    /// Only columns some mention links to, no roles.
    LinkedColumnsOnly,
    /// All columns with roles predicted by NER and linking.
    ColumnTypeFeature,
    /// All columns with roles taken from the gold annotation.
    OracleFeature,
}

impl HarnessMode {
    pub const ALL: [HarnessMode; 4] = [
        HarnessMode::Baseline,
        HarnessMode::LinkedColumnsOnly,
        HarnessMode::ColumnTypeFeature,
        HarnessMode::OracleFeature,
    ];

    pub fn name(self) -> &'static str {
        match self {
            HarnessMode::Baseline => "baseline",
            HarnessMode::LinkedColumnsOnly => "linked_columns_only",
            HarnessMode::ColumnTypeFeature => "column_type_feature",
            HarnessMode::OracleFeature => "oracle_feature",
        }
    }

    pub fn uses_roles(self) -> bool {
        matches!(self, HarnessMode::ColumnTypeFeature | HarnessMode::OracleFeature)
    }
}

impl fmt::Display for HarnessMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for HarnessMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        HarnessMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown mode {s}"))
    }
}

/// NER input and decoding switches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NerAblation {
    pub schema: bool,
    pub cell: bool,
    pub gazetteer: bool,
}

impl Default for NerAblation {
    fn default() -> Self {
        NerAblation { schema: true, cell: true, gazetteer: true }
    }
}

impl NerAblation {
    /// The full model and the three single-switch ablations.
    pub const GRID: [(&'static str, NerAblation); 4] = [
        ("full", NerAblation { schema: true, cell: true, gazetteer: true }),
        ("-cell", NerAblation { schema: true, cell: false, gazetteer: true }),
        ("-schema", NerAblation { schema: false, cell: true, gazetteer: true }),
        ("-gazetteer", NerAblation { schema: true, cell: true, gazetteer: false }),
    ];

    pub fn name(&self) -> String {
        let off: Vec<&str> = [(self.schema, "-schema"), (self.cell, "-cell"), (self.gazetteer, "-gazetteer")]
            .into_iter()
            .filter(|(on, _)| !on)
            .map(|(_, n)| n)
            .collect();
        if off.is_empty() {
            "full".into()
        } else {
            off.join(" ")
        }
    }
}

/// Everything a run needs. Read from a flat `key = value` file; `#` starts a
/// comment. Relative paths stay relative to the working directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub train: PathBuf,
    pub dev: PathBuf,
    pub test: PathBuf,
    pub table_dir: PathBuf,
    pub ner_model: PathBuf,
    pub nel_model: PathBuf,
    pub nsp_model: PathBuf,
    pub grammar: PathBuf,
    pub mode: HarnessMode,
    pub ner: NerAblation,
    pub beam_size: usize,
    pub seed: u64,
    pub ner_epochs: usize,
    pub nel_epochs: usize,
    pub nsp_epochs: usize,
    pub feature_dropout: f64,
    /// Worker threads for evaluation; 0 uses the available parallelism.
    pub threads: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let mut c = PipelineConfig {
            train: PathBuf::new(),
            dev: PathBuf::new(),
            test: PathBuf::new(),
            table_dir: PathBuf::new(),
            ner_model: "artifacts/ner.json".into(),
            nel_model: "artifacts/nel.json".into(),
            nsp_model: "artifacts/nsp.json".into(),
            grammar: "artifacts/grammar.txt".into(),
            mode: HarnessMode::ColumnTypeFeature,
            ner: NerAblation::default(),
            beam_size: 4,
            seed: 7,
            ner_epochs: 30,
            nel_epochs: 15,
            nsp_epochs: 12,
            feature_dropout: 0.2,
            threads: 0,
        };
        c.set_data_dir(Path::new("data"));
        c
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, PipelineError> {
    value
        .parse()
        .map_err(|_| PipelineError::Config(format!("bad value for {key}: {value}")))
}

impl PipelineConfig {
    /// Points the three splits at `<dir>/<split>.jsonl` and tables at
    /// `<dir>/tables`.
    pub fn set_data_dir(&mut self, dir: &Path) {
        self.train = dir.join("train.jsonl");
        self.dev = dir.join("dev.jsonl");
        self.test = dir.join("test.jsonl");
        self.table_dir = dir.join("tables");
    }

    /// Points the four artifacts into one directory.
    pub fn set_artifact_dir(&mut self, dir: &Path) {
        self.ner_model = dir.join("ner.json");
        self.nel_model = dir.join("nel.json");
        self.nsp_model = dir.join("nsp.json");
        self.grammar = dir.join("grammar.txt");
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), PipelineError> {
        let value = value.trim();
        match key.trim() {
            "data_dir" => self.set_data_dir(Path::new(value)),
            "artifact_dir" => self.set_artifact_dir(Path::new(value)),
            "train" => self.train = value.into(),
            "dev" => self.dev = value.into(),
            "test" => self.test = value.into(),
            "table_dir" => self.table_dir = value.into(),
            "ner_model" => self.ner_model = value.into(),
            "nel_model" => self.nel_model = value.into(),
            "nsp_model" => self.nsp_model = value.into(),
            "grammar" => self.grammar = value.into(),
            "mode" => self.mode = value.parse().map_err(PipelineError::Config)?,
            "ner_schema" => self.ner.schema = parse(key, value)?,
            "ner_cell" => self.ner.cell = parse(key, value)?,
            "ner_gazetteer" => self.ner.gazetteer = parse(key, value)?,
            "beam_size" => self.beam_size = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "ner_epochs" => self.ner_epochs = parse(key, value)?,
            "nel_epochs" => self.nel_epochs = parse(key, value)?,
            "nsp_epochs" => self.nsp_epochs = parse(key, value)?,
            "feature_dropout" => self.feature_dropout = parse(key, value)?,
            "threads" => self.threads = parse(key, value)?,
            other => return Err(PipelineError::Config(format!("unknown key {other}"))),
        }
        Ok(())
    }

    /// Applies `key=value` overrides in order.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<(), PipelineError> {
        for o in overrides {
            let (k, v) = o
                .as_ref()
                .split_once('=')
                .ok_or_else(|| PipelineError::Config(format!("expected key=value, got {}", o.as_ref())))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self, PipelineError> {
        let mut c = PipelineConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| PipelineError::Config(format!("line {}: expected key = value", i + 1)))?;
            c.set(k, v)?;
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    pub fn to_text(&self) -> String {
        let p = |p: &PathBuf| p.display().to_string();
        [
            ("train", p(&self.train)),
            ("dev", p(&self.dev)),
            ("test", p(&self.test)),
            ("table_dir", p(&self.table_dir)),
            ("ner_model", p(&self.ner_model)),
            ("nel_model", p(&self.nel_model)),
            ("nsp_model", p(&self.nsp_model)),
            ("grammar", p(&self.grammar)),
            ("mode", self.mode.to_string()),
            ("ner_schema", self.ner.schema.to_string()),
            ("ner_cell", self.ner.cell.to_string()),
            ("ner_gazetteer", self.ner.gazetteer.to_string()),
            ("beam_size", self.beam_size.to_string()),
            ("seed", self.seed.to_string()),
            ("ner_epochs", self.ner_epochs.to_string()),
            ("nel_epochs", self.nel_epochs.to_string()),
            ("nsp_epochs", self.nsp_epochs.to_string()),
            ("feature_dropout", self.feature_dropout.to_string()),
            ("threads", self.threads.to_string()),
        ]
        .iter()
        .map(|(k, v)| format!("{k} = {v}\n"))
        .collect()
    }
}
