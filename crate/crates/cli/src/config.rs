//! Pipeline configuration: one TOML file, overridable per key through
//! `LEITSATZ__SECTION__KEY` environment variables and `--set section.key=value`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use leitsatz_core::corpus::{IngestFormat, SplitRatios};
use leitsatz_core::entities::EntityKind;
use leitsatz_core::metrics::Metric;
use leitsatz_core::summarize::{Approach, LexRankParams, TokenBudget};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const ENV_PREFIX: &str = "LEITSATZ__";
pub const DEFAULT_CONFIG: &str = "leitsatz.toml";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: PathsConfig,
    pub tokenizer: TokenizerConfig,
    pub corpus: CorpusConfig,
    pub split: SplitConfig,
    pub entities: EntitiesConfig,
    pub lexrank: LexRankConfig,
    pub summarize: SummarizeConfig,
    pub budget: BudgetConfig,
    pub generation: GenerationConfig,
    pub metrics: MetricsSection,
    pub assign: AssignConfig,
    pub serve: ServeConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub corpus: PathBuf,
    pub corpus_format: IngestFormat,
    /// Externally tagged entity spans (JSONL); pattern detection when absent.
    pub spans: Option<PathBuf>,
    pub output: PathBuf,
    /// Verdict export read by `report`; defaults to the review store.
    pub verdicts: Option<PathBuf>,
    pub abbreviations: Option<PathBuf>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            corpus: PathBuf::from("corpus.jsonl"),
            corpus_format: IngestFormat::Jsonl,
            spans: None,
            output: PathBuf::from("out"),
            verdicts: None,
            abbreviations: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenizerKind {
    #[default]
    Words,
    Service,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TokenizerConfig {
    pub kind: TokenizerKind,
    pub url: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub reasons_heading: String,
    /// Pairs whose gold summary is longer are left out.
    pub max_gold_tokens: Option<usize>,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            reasons_heading: "Entscheidungsgründe".into(),
            max_gold_tokens: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train: 0.7,
            valid: 0.15,
            test: 0.15,
            seed: 42,
        }
    }
}

impl SplitConfig {
    pub fn ratios(&self) -> SplitRatios {
        SplitRatios {
            train: self.train,
            valid: self.valid,
            test: self.test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EntitiesConfig {
    /// Kinds tagged into the enriched input.
    pub kinds: Vec<String>,
    /// Kinds checked by the hallucination audit.
    pub audit_kinds: Vec<String>,
}

impl Default for EntitiesConfig {
    fn default() -> Self {
        EntitiesConfig {
            kinds: vec!["GS".into(), "RS".into()],
            audit_kinds: vec!["GS".into(), "RS".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LexRankConfig {
    pub sentences: usize,
    pub threshold: f64,
    pub damping: f64,
    pub tolerance: f64,
    pub max_iters: usize,
}

impl Default for LexRankConfig {
    fn default() -> Self {
        let p = LexRankParams::default();
        LexRankConfig {
            sentences: p.k,
            threshold: p.threshold,
            damping: p.damping,
            tolerance: p.tolerance,
            max_iters: p.max_iters,
        }
    }
}

impl LexRankConfig {
    pub fn params(&self) -> LexRankParams {
        LexRankParams {
            k: self.sentences,
            threshold: self.threshold,
            damping: self.damping,
            tolerance: self.tolerance,
            max_iters: self.max_iters,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SummarizeConfig {
    /// `all`, `train`, `valid` or `test`.
    pub split: String,
}

impl Default for SummarizeConfig {
    fn default() -> Self {
        SummarizeConfig { split: "all".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetConfig {
    pub context_window: usize,
    pub generation_budget: usize,
    pub prompt_overhead: usize,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        let b = TokenBudget::default();
        BudgetConfig {
            context_window: b.context_window,
            generation_budget: b.generation_budget,
            prompt_overhead: b.prompt_overhead,
        }
    }
}

impl BudgetConfig {
    pub fn budget(&self) -> TokenBudget {
        TokenBudget {
            context_window: self.context_window,
            generation_budget: self.generation_budget,
            prompt_overhead: self.prompt_overhead,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EndpointConfig {
    pub url: String,
    /// Environment variable holding the API key, sent as a bearer token.
    pub api_key_env: Option<String>,
    pub timeout_secs: u64,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            url: String::new(),
            api_key_env: None,
            timeout_secs: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationConfig {
    pub endpoints: BTreeMap<String, EndpointConfig>,
    /// Endpoint name serving plain-input generation.
    pub model_plain: Option<String>,
    /// Endpoint name serving entity-enriched generation.
    pub model_enriched: Option<String>,
    pub connections: usize,
    pub retry_attempts: u32,
    pub retry_base_delay_ms: u64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            endpoints: BTreeMap::new(),
            model_plain: None,
            model_enriched: None,
            connections: 4,
            retry_attempts: 3,
            retry_base_delay_ms: 500,
        }
    }
}

impl GenerationConfig {
    pub fn endpoint_for(&self, approach: Approach) -> Option<&str> {
        match approach {
            Approach::ModelPlain => self.model_plain.as_deref(),
            Approach::ModelEnriched => self.model_enriched.as_deref(),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingSource {
    /// Deterministic offline vectors; not a contextual model.
    #[default]
    Hashed,
    Service,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSection {
    pub list: Vec<String>,
    pub embeddings: EmbeddingSource,
    pub embeddings_url: Option<String>,
    pub embeddings_file: Option<PathBuf>,
    pub idf: bool,
    pub rescale_baseline: Option<f64>,
    /// Vector size of the hashed embeddings.
    pub dim: usize,
}

impl Default for MetricsSection {
    fn default() -> Self {
        MetricsSection {
            list: Metric::ALL.iter().map(|m| m.as_str().to_string()).collect(),
            embeddings: EmbeddingSource::Hashed,
            embeddings_url: None,
            embeddings_file: None,
            idf: false,
            rescale_baseline: None,
            dim: 64,
        }
    }
}

impl MetricsSection {
    pub fn metrics(&self) -> CliResult<Vec<Metric>> {
        self.list
            .iter()
            .map(|m| m.parse().map_err(|e| CliError::config(format!("metrics.list: {e}"))))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssignConfig {
    pub per_item: usize,
    pub seed: u64,
    pub reviewers: Vec<String>,
    /// Approaches put in front of reviewers; every summarized one when unset.
    pub approaches: Option<Vec<String>>,
}

impl Default for AssignConfig {
    fn default() -> Self {
        AssignConfig {
            per_item: 3,
            seed: 7,
            reviewers: Vec::new(),
            approaches: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeConfig {
    pub bind: String,
    pub admin_token: Option<String>,
    pub reviewer_tokens: BTreeMap<String, String>,
    pub item_salt: Option<String>,
    pub show_excerpt: bool,
    /// Characters of the reasons text sent as excerpt.
    pub excerpt_chars: usize,
    /// Verdict store; `<output>/review_store.jsonl` when unset.
    pub store: Option<PathBuf>,
}

impl Default for ServeConfig {
    fn default() -> Self {
        ServeConfig {
            bind: "127.0.0.1:8080".into(),
            admin_token: None,
            reviewer_tokens: BTreeMap::new(),
            item_salt: None,
            show_excerpt: true,
            excerpt_chars: 3000,
            store: None,
        }
    }
}

fn parse_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn set_path(table: &mut toml::Table, path: &[String], value: toml::Value) -> CliResult<()> {
    let (last, parents) = path.split_last().ok_or_else(|| CliError::config("empty override key"))?;
    let mut current = table;
    for key in parents {
        let entry = current
            .entry(key.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        current = entry
            .as_table_mut()
            .ok_or_else(|| CliError::config(format!("override {}: {key} is not a table", path.join("."))))?;
    }
    current.insert(last.clone(), value);
    Ok(())
}

/// Applies `section.key=value` (from `--set`).
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> CliResult<()> {
    let (key, value) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::config(format!("override {assignment:?} is not key=value")))?;
    let path: Vec<String> = key.trim().split('.').map(str::to_string).collect();
    if path.iter().any(String::is_empty) {
        return Err(CliError::config(format!("override key {key:?} is malformed")));
    }
    set_path(table, &path, parse_value(value.trim()))
}

/// Applies `LEITSATZ__SECTION__KEY=value` pairs. Section and field names are
/// lowercased; the segments after them (map keys) keep their case.
pub fn apply_env(table: &mut toml::Table, vars: impl IntoIterator<Item = (String, String)>) -> CliResult<()> {
    let mut sorted: Vec<(String, String)> = vars.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
    sorted.sort();
    for (key, value) in sorted {
        let path: Vec<String> = key[ENV_PREFIX.len()..]
            .split("__")
            .enumerate()
            .map(|(i, s)| if i < 2 { s.to_ascii_lowercase() } else { s.to_string() })
            .collect();
        if path.iter().any(String::is_empty) {
            return Err(CliError::config(format!("environment override {key} is malformed")));
        }
        set_path(table, &path, parse_value(&value))?;
    }
    Ok(())
}

/// Where the configuration came from; relative paths resolve against `base`.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: PipelineConfig,
    pub base: PathBuf,
    pub source: Option<PathBuf>,
}

impl LoadedConfig {
    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base.join(path)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.config.paths.output)
    }

    pub fn store_path(&self) -> PathBuf {
        match &self.config.serve.store {
            Some(p) => self.resolve(p),
            None => self.output_dir().join("review_store.jsonl"),
        }
    }

    pub fn verdicts_path(&self) -> PathBuf {
        match &self.config.paths.verdicts {
            Some(p) => self.resolve(p),
            None => self.store_path(),
        }
    }
}

/// Reads `path` (or `leitsatz.toml` in the working directory when present),
/// layers environment and `--set` overrides on top and validates.
pub fn load(
    path: Option<&Path>,
    env: impl IntoIterator<Item = (String, String)>,
    overrides: &[String],
) -> CliResult<LoadedConfig> {
    let (source, raw) = match path {
        Some(p) => {
            let raw = std::fs::read_to_string(p)
                .map_err(|e| CliError::config(format!("cannot read {}: {e}", p.display())))?;
            (Some(p.to_path_buf()), raw)
        }
        None => {
            let p = PathBuf::from(DEFAULT_CONFIG);
            match std::fs::read_to_string(&p) {
                Ok(raw) => (Some(p), raw),
                Err(_) => (None, String::new()),
            }
        }
    };
    let mut table: toml::Table = raw.parse().map_err(|e: toml::de::Error| {
        CliError::config(format!(
            "{}: {}",
            source.as_deref().unwrap_or(Path::new(DEFAULT_CONFIG)).display(),
            e.message()
        ))
    })?;
    apply_env(&mut table, env)?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let config: PipelineConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::config(e.message().to_string()))?;
    validate(&config)?;
    let base = source
        .as_deref()
        .and_then(Path::parent)
        .map(Path::to_path_buf)
        .unwrap_or_default();
    Ok(LoadedConfig { config, base, source })
}

fn field(name: &str, message: impl std::fmt::Display) -> CliError {
    CliError::config(format!("{name}: {message}"))
}

/// Field-level checks that serde cannot express.
pub fn validate(c: &PipelineConfig) -> CliResult<()> {
    let r = [c.split.train, c.split.valid, c.split.test];
    if r.iter().any(|x| !x.is_finite() || *x <= 0.0) {
        return Err(field("split", "train, valid and test must be positive"));
    }
    if (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(field("split", format!("ratios must sum to 1, got {}", r.iter().sum::<f64>())));
    }
    if c.tokenizer.kind == TokenizerKind::Service && c.tokenizer.url.is_none() {
        return Err(field("tokenizer.url", "required when tokenizer.kind = \"service\""));
    }
    if c.corpus.max_gold_tokens == Some(0) {
        return Err(field("corpus.max_gold_tokens", "must be positive"));
    }
    for (name, kinds) in [("entities.kinds", &c.entities.kinds), ("entities.audit_kinds", &c.entities.audit_kinds)] {
        for k in kinds {
            EntityKind::new(k).map_err(|e| field(name, e))?;
        }
    }
    if c.lexrank.sentences == 0 {
        return Err(field("lexrank.sentences", "must be at least 1"));
    }
    if !(c.lexrank.damping > 0.0 && c.lexrank.damping < 1.0) {
        return Err(field("lexrank.damping", "must lie strictly between 0 and 1"));
    }
    if !(0.0..=1.0).contains(&c.lexrank.threshold) {
        return Err(field("lexrank.threshold", "must lie in [0, 1]"));
    }
    if !c.lexrank.tolerance.is_finite() || c.lexrank.tolerance <= 0.0 {
        return Err(field("lexrank.tolerance", "must be positive"));
    }
    if c.summarize.split != "all" && c.summarize.split.parse::<leitsatz_core::corpus::Split>().is_err() {
        return Err(field("summarize.split", "must be all, train, valid or test"));
    }
    c.budget.budget().input_limit().map_err(|e| field("budget", e))?;
    for (approach, name) in [("generation.model_plain", &c.generation.model_plain), ("generation.model_enriched", &c.generation.model_enriched)] {
        if let Some(name) = name {
            if !c.generation.endpoints.contains_key(name) {
                return Err(field(approach, format!("no endpoint named {name:?} under generation.endpoints")));
            }
        }
    }
    for (name, ep) in &c.generation.endpoints {
        if ep.url.trim().is_empty() {
            return Err(field(&format!("generation.endpoints.{name}.url"), "must not be empty"));
        }
    }
    if c.generation.connections == 0 {
        return Err(field("generation.connections", "must be at least 1"));
    }
    c.metrics.metrics()?;
    match c.metrics.embeddings {
        EmbeddingSource::Service if c.metrics.embeddings_url.is_none() => {
            return Err(field("metrics.embeddings_url", "required when metrics.embeddings = \"service\""))
        }
        EmbeddingSource::File if c.metrics.embeddings_file.is_none() => {
            return Err(field("metrics.embeddings_file", "required when metrics.embeddings = \"file\""))
        }
        _ => {}
    }
    if c.metrics.dim == 0 {
        return Err(field("metrics.dim", "must be positive"));
    }
    if let Some(b) = c.metrics.rescale_baseline {
        if !(b.is_finite() && b < 1.0) {
            return Err(field("metrics.rescale_baseline", "must be finite and below 1"));
        }
    }
    if c.assign.per_item == 0 {
        return Err(field("assign.per_item", "must be at least 1"));
    }
    if let Some(approaches) = &c.assign.approaches {
        for a in approaches {
            let parsed: Approach = a.parse().map_err(|e| field("assign.approaches", e))?;
            if parsed == Approach::Gold {
                return Err(field("assign.approaches", "gold summaries are the reference, not a candidate"));
            }
        }
    }
    Ok(())
}
