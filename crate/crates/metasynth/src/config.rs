//! Pipeline configuration.
//!
//! Sources are layered, later ones winning: built-in defaults, environment
//! variables, a TOML file, command-line flags. Credentials are read from the
//! environment only and never stored in the configuration, so run manifests
//! can embed it verbatim.

use std::fs;
use std::path::{Path, PathBuf};

use metasynth_core::generation::{RetryPolicy, SamplingParams, TemplateId, CONTEXT_SLOT, DEFAULT_CONTEXT_BUDGET};
use metasynth_core::index::DEFAULT_TOP_K;
use metasynth_core::{ChunkConfig, HashEmbedder, PromptTemplate, SplitSpec, TieRule};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::corpus_io::{CorpusFormat, DEFAULT_CSV_SEPARATOR};

/// Environment variables mapped onto configuration keys.
pub const ENV_KEYS: &[(&str, &str)] = &[
    ("METASYNTH_OUT_DIR", "out_dir"),
    ("METASYNTH_EMBEDDING_URL", "embedding.url"),
    ("METASYNTH_EMBEDDING_MODEL", "embedding.model"),
    ("METASYNTH_GENERATION_URL", "generation.url"),
    ("METASYNTH_GENERATION_MODEL", "generation.model"),
];

/// Bearer token for both endpoints unless a specific one is set.
pub const ENV_API_KEY: &str = "METASYNTH_API_KEY";
pub const ENV_EMBEDDING_API_KEY: &str = "METASYNTH_EMBEDDING_API_KEY";
pub const ENV_GENERATION_API_KEY: &str = "METASYNTH_GENERATION_API_KEY";
/// Salt for anonymised evaluator ids in exports.
pub const ENV_EXPORT_SALT: &str = "METASYNTH_EXPORT_SALT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    pub format: CorpusFormat,
    /// Separator between support abstracts in CSV input.
    pub separator: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingSection {
    /// Unset means the offline hashing embedder.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    pub model: String,
    /// Dimension of the hashing embedder.
    pub dim: usize,
    pub seed: u64,
    pub batch_size: usize,
    pub timeout_secs: u64,
    pub retry: RetryPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationSection {
    /// Unset means the offline canned generator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    pub model: String,
    pub template: TemplateId,
    /// Template text for `template = "custom"`; must contain `{context}`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub custom_template: Option<String>,
    /// Retrieval query; defaults to the template instruction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<String>,
    pub sampling: SamplingParams,
    pub context_budget: usize,
    pub top_k: usize,
    pub workers: usize,
    pub timeout_secs: u64,
    pub retry: RetryPolicy,
    /// Reply of the offline generator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub canned_text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationSection {
    pub required_ballots: usize,
    pub tie_rule: TieRule,
    /// Allowed evaluator ids; empty means anyone may vote.
    #[serde(default)]
    pub evaluators: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub out_dir: PathBuf,
    pub corpus: CorpusSection,
    pub chunking: ChunkConfig,
    pub embedding: EmbeddingSection,
    pub generation: GenerationSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitSpec>,
    pub evaluation: EvaluationSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            out_dir: PathBuf::from("out"),
            corpus: CorpusSection {
                path: None,
                format: CorpusFormat::Jsonl,
                separator: DEFAULT_CSV_SEPARATOR.into(),
            },
            chunking: ChunkConfig::default(),
            embedding: EmbeddingSection {
                url: None,
                model: "hash".into(),
                dim: HashEmbedder::DEFAULT_DIM,
                seed: 0,
                batch_size: 64,
                timeout_secs: 60,
                retry: RetryPolicy::default(),
            },
            generation: GenerationSection {
                url: None,
                model: "demo".into(),
                template: TemplateId::Prompt1,
                custom_template: None,
                query: None,
                sampling: SamplingParams::default(),
                context_budget: DEFAULT_CONTEXT_BUDGET,
                top_k: DEFAULT_TOP_K,
                workers: 4,
                timeout_secs: 120,
                retry: RetryPolicy::default(),
                canned_text: None,
            },
            split: None,
            evaluation: EvaluationSection {
                required_ballots: 3,
                tie_rule: TieRule::Middle,
                evaluators: Vec::new(),
            },
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{}: {source}", path.display())]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    File { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
}

/// Values set by flags or the environment, as dotted keys.
#[derive(Debug, Clone, Default)]
pub struct Overrides(Vec<(String, Value)>);

impl Overrides {
    pub fn set(&mut self, key: &str, value: impl Into<Value>) -> &mut Self {
        self.0.push((key.to_string(), value.into()));
        self
    }

    pub fn set_opt<V: Into<Value>>(&mut self, key: &str, value: Option<V>) -> &mut Self {
        if let Some(v) = value {
            self.set(key, v);
        }
        self
    }

    pub fn from_env(lookup: impl Fn(&str) -> Option<String>) -> Self {
        let mut o = Overrides::default();
        for (var, key) in ENV_KEYS {
            if let Some(v) = lookup(var).filter(|v| !v.is_empty()) {
                o.set(key, v);
            }
        }
        o
    }

    fn apply(&self, table: &mut Table) {
        for (key, value) in &self.0 {
            let mut parts: Vec<&str> = key.split('.').collect();
            let leaf = parts.pop().expect("non-empty key");
            let mut cur = &mut *table;
            for p in parts {
                cur = cur
                    .entry(p)
                    .or_insert_with(|| Value::Table(Table::new()))
                    .as_table_mut()
                    .expect("configuration sections are tables");
            }
            cur.insert(leaf.to_string(), value.clone());
        }
    }
}

fn merge(base: &mut Table, top: Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

impl PipelineConfig {
    /// Layers defaults, `env`, the optional file and `flags`, then validates.
    pub fn resolve(file: Option<&Path>, env: &Overrides, flags: &Overrides) -> Result<Self, ConfigError> {
        let mut table = Table::try_from(PipelineConfig::default()).expect("defaults serialize");
        env.apply(&mut table);
        if let Some(path) = file {
            let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
                path: path.to_path_buf(),
                source,
            })?;
            let from_file: Table = text.parse().map_err(|e: toml::de::Error| ConfigError::File {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
            merge(&mut table, from_file);
        }
        flags.apply(&mut table);
        let cfg: PipelineConfig = Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Invalid(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        self.chunking.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.generation
            .sampling
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.generation.context_budget == 0 {
            return bad("generation.context_budget must be positive".into());
        }
        if self.generation.top_k == 0 {
            return bad("generation.top_k must be positive".into());
        }
        if self.generation.workers == 0 {
            return bad("generation.workers must be positive".into());
        }
        if self.embedding.dim == 0 || self.embedding.batch_size == 0 {
            return bad("embedding.dim and embedding.batch_size must be positive".into());
        }
        if self.evaluation.required_ballots == 0 {
            return bad("evaluation.required_ballots must be positive".into());
        }
        if self.corpus.separator.is_empty() {
            return bad("corpus.separator must not be empty".into());
        }
        match (self.generation.template, &self.generation.custom_template) {
            (TemplateId::Custom, None) => bad("template \"custom\" needs generation.custom_template".into()),
            (TemplateId::Custom, Some(t)) if !t.contains(CONTEXT_SLOT) => {
                bad(format!("generation.custom_template has no {CONTEXT_SLOT} slot"))
            }
            _ => Ok(()),
        }
    }

    pub fn template(&self) -> PromptTemplate {
        match (self.generation.template, &self.generation.custom_template) {
            (TemplateId::Custom, Some(t)) => PromptTemplate::custom(t.clone()),
            (id, _) => PromptTemplate::builtin(id).unwrap_or_else(PromptTemplate::prompt1),
        }
    }

    pub fn corpus_path(&self) -> PathBuf {
        self.out_dir.join("corpus.jsonl")
    }

    pub fn stats_path(&self) -> PathBuf {
        self.out_dir.join("stats.json")
    }

    pub fn chunks_path(&self) -> PathBuf {
        self.out_dir.join("chunks.jsonl")
    }

    pub fn index_path(&self) -> PathBuf {
        self.out_dir.join("index.jsonl")
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.out_dir.join("manifest.jsonl")
    }

    pub fn store_dir(&self) -> PathBuf {
        self.out_dir.join("evaluation")
    }
}

/// Token for an endpoint: the specific variable, else the shared one.
pub fn api_key(specific: &str, lookup: impl Fn(&str) -> Option<String>) -> Option<String> {
    lookup(specific)
        .or_else(|| lookup(ENV_API_KEY))
        .filter(|k| !k.is_empty())
}
