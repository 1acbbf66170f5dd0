use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::cascade::RunConfig;
use crate::diagnostics::{MatchWindows, SummaryOptions};
use crate::event_stream::{RecordFormat, DEFAULT_TIE_OFFSET_HOURS};
use crate::hawkes::FitConfig;
use crate::memory::PolicyKind;
use crate::text::{EmbeddingOptions, GenerationOptions};

/// Overrides the generation and embedding base URL when set.
pub const BASE_URL_ENV: &str = "HAWKES_CASCADE_BASE_URL";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathsConfig {
    /// CSV or JSONL article records. When absent, `ingest.fetch` is used.
    pub input: Option<PathBuf>,
    /// Inferred from the input extension when absent.
    pub input_format: Option<RecordFormat>,
    pub taxonomy: PathBuf,
    pub work_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            input: None,
            input_format: None,
            taxonomy: PathBuf::from("taxonomy.json"),
            work_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FetchConfig {
    pub query: String,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    #[serde(default = "default_max_records")]
    pub max_records: usize,
    #[serde(default)]
    pub base_url: Option<String>,
    #[serde(default)]
    pub mode: Option<String>,
}

fn default_max_records() -> usize {
    250
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestConfig {
    /// Keep only records in this language (case-insensitive).
    pub language: Option<String>,
    pub train_fraction: f64,
    pub tie_offset_hours: f64,
    pub fetch: Option<FetchConfig>,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            language: None,
            train_fraction: 0.8,
            tie_offset_hours: DEFAULT_TIE_OFFSET_HOURS,
            fetch: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub paths: PathsConfig,
    pub ingest: IngestConfig,
    pub fit: FitConfig,
    pub run: RunConfig,
    pub generation: GenerationOptions,
    pub embedding: EmbeddingOptions,
    pub matching: MatchWindows,
    pub summary: SummaryOptions,
    pub run_count: usize,
    /// Fit on the training prefix, seed from its last event and simulate
    /// over the test window.
    pub post_split: bool,
    pub mock_generator: bool,
    pub mock_embedder: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            paths: PathsConfig::default(),
            ingest: IngestConfig::default(),
            fit: FitConfig::default(),
            run: RunConfig::default(),
            generation: GenerationOptions::default(),
            embedding: EmbeddingOptions::default(),
            matching: MatchWindows::default(),
            summary: SummaryOptions::default(),
            run_count: 3,
            post_split: false,
            mock_generator: false,
            mock_embedder: false,
        }
    }
}

/// Which policies a command acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicySelection {
    One(PolicyKind),
    All,
}

impl PolicySelection {
    pub fn policies(self) -> Vec<PolicyKind> {
        match self {
            PolicySelection::One(p) => vec![p],
            PolicySelection::All => PolicyKind::ALL.to_vec(),
        }
    }
}

impl std::str::FromStr for PolicySelection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "all" {
            Ok(Self::All)
        } else {
            s.parse().map(Self::One)
        }
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub policy: Option<PolicySelection>,
    pub k: Option<usize>,
    pub seed: Option<u64>,
    pub mock_generator: bool,
    pub mock_embedder: bool,
    pub post_split: bool,
}

impl PipelineConfig {
    /// Reads the config, resolves relative paths against its directory and
    /// applies the base URL environment override.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Input(format!("config {}: {e}", path.display())))?;
        let mut config: Self = serde_json::from_str(&text)
            .map_err(|e| PipelineError::Input(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        if let Ok(url) = std::env::var(BASE_URL_ENV) {
            config.apply_base_url(&url);
        }
        config.validate()?;
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(input) = self.paths.input.as_mut() {
            join(input);
        }
        join(&mut self.paths.taxonomy);
        join(&mut self.paths.work_dir);
    }

    pub fn apply_base_url(&mut self, url: &str) {
        self.generation.base_url = url.to_string();
        self.embedding.base_url = url.to_string();
    }

    /// Returns the selection to act on; `policy` defaults to the config's.
    pub fn apply(&mut self, overrides: &Overrides) -> PolicySelection {
        if let Some(k) = overrides.k {
            self.run.k = k;
        }
        if let Some(seed) = overrides.seed {
            self.run.rng_seed = seed;
        }
        self.mock_generator |= overrides.mock_generator;
        self.mock_embedder |= overrides.mock_embedder;
        self.post_split |= overrides.post_split;
        let selection = overrides.policy.unwrap_or(PolicySelection::One(self.run.policy));
        if let PolicySelection::One(p) = selection {
            self.run.policy = p;
        }
        selection
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Input(m));
        if !(self.ingest.train_fraction > 0.0 && self.ingest.train_fraction < 1.0) {
            return bad(format!("train_fraction {} must lie in (0, 1)", self.ingest.train_fraction));
        }
        if !(self.ingest.tie_offset_hours > 0.0) {
            return bad("tie_offset_hours must be positive".into());
        }
        if self.run_count == 0 {
            return bad("run_count must be at least 1".into());
        }
        self.fit.validate().map_err(|e| PipelineError::Input(e.to_string()))?;
        self.run.validate().map_err(|e| PipelineError::Input(e.to_string()))?;
        self.generation.validate().map_err(|e| PipelineError::Input(e.to_string()))?;
        self.matching.validate().map_err(|e| PipelineError::Input(e.to_string()))?;
        Ok(())
    }
}

/// File layout under the work directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn raw_articles(&self) -> PathBuf {
        self.root.join("raw_articles.jsonl")
    }

    pub fn events(&self) -> PathBuf {
        self.root.join("events.jsonl")
    }

    pub fn train(&self) -> PathBuf {
        self.root.join("train.jsonl")
    }

    pub fn test(&self) -> PathBuf {
        self.root.join("test.jsonl")
    }

    pub fn ingest_report(&self) -> PathBuf {
        self.root.join("ingest_report.json")
    }

    pub fn fit(&self) -> PathBuf {
        self.root.join("fit.json")
    }

    pub fn fit_grid(&self) -> PathBuf {
        self.root.join("fit_grid.csv")
    }

    pub fn runs_dir(&self, policy: PolicyKind) -> PathBuf {
        self.root.join("runs").join(policy.as_str())
    }

    pub fn run_file(&self, policy: PolicyKind, index: usize) -> PathBuf {
        self.runs_dir(policy).join(format!("{}.jsonl", run_id(index)))
    }

    pub fn run_manifest(&self, policy: PolicyKind) -> PathBuf {
        self.runs_dir(policy).join("manifest.json")
    }

    pub fn eval_dir(&self, policy: PolicyKind) -> PathBuf {
        self.root.join("eval").join(policy.as_str())
    }

    pub fn diagnostics_csv(&self, policy: PolicyKind) -> PathBuf {
        self.eval_dir(policy).join("diagnostics.csv")
    }

    pub fn moving_average_csv(&self, policy: PolicyKind) -> PathBuf {
        self.eval_dir(policy).join("moving_average.csv")
    }

    pub fn summary_json(&self, policy: PolicyKind) -> PathBuf {
        self.eval_dir(policy).join("summary.json")
    }

    pub fn embeddings_file(&self, policy: PolicyKind, index: usize) -> PathBuf {
        self.eval_dir(policy).join("embeddings").join(format!("{}.jsonl", run_id(index)))
    }

    pub fn report_txt(&self) -> PathBuf {
        self.root.join("report.txt")
    }

    pub fn report_csv(&self) -> PathBuf {
        self.root.join("report.csv")
    }
}

pub fn run_id(index: usize) -> String {
    format!("run_{index:03}")
}
