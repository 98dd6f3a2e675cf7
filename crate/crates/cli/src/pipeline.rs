//! The pipeline steps behind each subcommand. Every step reads artifacts from
//! the output directory, writes its own, and records itself in the manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use chrono::Utc;
use leitsatz_core::corpus::{
    filter_gold_outliers, ingest, split_corpus, ExclusionReport, IngestFormat, LengthStats,
    ReasonGoldPair, ReasonsExtractor, SkipReport, Split, Splits,
};
use leitsatz_core::entities::{
    audit_hallucinations, detect_entities, enrich, import_spans, strip_tags, tag_vocabulary, EntityKind, EntitySpan,
    SpanImportError,
};
use leitsatz_core::evalframe::{
    build_assignments, fulfillment_report, metric_class_correlations, pairwise_kappa_matrix, per_class_kappa,
    Assignment, SummaryRef, VerdictStore,
};
use leitsatz_core::http::JsonEndpoint;
use leitsatz_core::metrics::{
    score_corpus, BertScoreOptions, EmbeddingProvider, FileEmbeddingProvider, HashedEmbeddingProvider,
    HttpEmbeddingProvider, Metric, MetricReport, MetricsConfig,
};
use leitsatz_core::report::{self, AuditRow, LengthRow, PAIRWISE_UNIT};
use leitsatz_core::summarize::{
    generate_many, lexrank_summary, truncate_to_budget, Approach, Decoding, GenerationParams, HttpGenerationClient,
    LexRank, RetryPolicy, SummaryRecord,
};
use leitsatz_core::textproc::{AbbreviationList, SentenceSplitter, ServiceCounter, TokenCounter, WordCounter};
use leitsatz_service::{AppState, ReviewData, ReviewText, ServiceConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::{EmbeddingSource, LoadedConfig, TokenizerKind};
use crate::error::{CliError, CliResult};
use crate::manifest::{hash_json, hash_path, Manifest, StepRecord};

pub const CORPUS: &str = "corpus.jsonl";
pub const PAIRS: &str = "reasons.jsonl";
pub const EXTRACTION_REPORT: &str = "extraction_report.json";
pub const SPLITS: &str = "splits.json";
pub const LENGTHS_CSV: &str = "tables/lengths.csv";
pub const LENGTHS_JSON: &str = "tables/lengths.json";
pub const ENRICHED: &str = "enriched.jsonl";
pub const TAG_VOCABULARY: &str = "tag_vocabulary.json";
pub const ENTITY_REPORT: &str = "entity_report.json";
pub const PER_SUMMARY_CSV: &str = "scores/per_summary.csv";
pub const METRICS_JSON: &str = "scores/metrics.json";
pub const SCORES_CSV: &str = "tables/scores.csv";
pub const ASSIGNMENTS: &str = "assignments.json";
pub const PAIRWISE_CSV: &str = "tables/pairwise.csv";
pub const PAIRWISE_JSON: &str = "tables/pairwise.json";
pub const PER_CLASS_CSV: &str = "tables/per_class.csv";
pub const PER_CLASS_JSON: &str = "tables/per_class.json";
pub const FULFILLMENT_CSV: &str = "tables/fulfillment.csv";
pub const FULFILLMENT_JSON: &str = "tables/fulfillment.json";
pub const CORRELATIONS_CSV: &str = "tables/correlations.csv";
pub const CORRELATIONS_JSON: &str = "tables/correlations.json";
pub const HALLUCINATIONS_CSV: &str = "tables/hallucinations.csv";
pub const HALLUCINATIONS_JSON: &str = "tables/hallucinations.json";

/// Candidate approaches, in report order.
pub const CANDIDATES: [Approach; 3] = [Approach::Lexrank, Approach::ModelPlain, Approach::ModelEnriched];

pub fn summaries_file(approach: Approach) -> String {
    format!("summaries/{}.jsonl", approach.as_str())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepStatus {
    Ran,
    UpToDate,
}

pub struct Context {
    pub loaded: LoadedConfig,
    pub force: bool,
    pub out: PathBuf,
}

impl Context {
    pub fn new(loaded: LoadedConfig, force: bool) -> Self {
        let out = loaded.output_dir();
        Context { loaded, force, out }
    }

    fn artifact(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// Path of an artifact an earlier step must have produced.
    fn require(&self, name: &str, producer: &str) -> CliResult<PathBuf> {
        let p = self.artifact(name);
        if p.exists() {
            Ok(p)
        } else {
            Err(CliError::data(format!("{} is missing; run `leitsatz {producer}` first", p.display())))
        }
    }

    fn counter(&self) -> Box<dyn TokenCounter> {
        let t = &self.loaded.config.tokenizer;
        match t.kind {
            TokenizerKind::Words => Box::new(WordCounter),
            TokenizerKind::Service => Box::new(ServiceCounter::new(t.url.clone().expect("validated"))),
        }
    }

    fn tokenizer_params(&self) -> serde_json::Value {
        json!(self.loaded.config.tokenizer)
    }

    /// Runs `body` unless the manifest says `step` is current.
    fn step(
        &self,
        step: &str,
        inputs: BTreeMap<String, PathBuf>,
        params: serde_json::Value,
        body: impl FnOnce() -> CliResult<Vec<String>>,
    ) -> CliResult<StepStatus> {
        let mut manifest = Manifest::load(&self.out)?;
        let params_hash = hash_json(&params);
        if !self.force && manifest.is_current(step, &params_hash, &inputs, &self.out) {
            eprintln!("{step}: up to date");
            return Ok(StepStatus::UpToDate);
        }
        let started_at = Utc::now();
        let input_hashes = inputs
            .iter()
            .map(|(name, p)| Ok((name.clone(), hash_path(p)?)))
            .collect::<CliResult<BTreeMap<_, _>>>()?;
        let artifacts = body()?;
        let artifact_hashes = artifacts
            .iter()
            .map(|name| Ok((name.clone(), hash_path(&self.artifact(name))?)))
            .collect::<CliResult<BTreeMap<_, _>>>()?;
        manifest.steps.insert(
            step.to_string(),
            StepRecord {
                params_hash,
                params,
                inputs: input_hashes,
                artifacts: artifact_hashes,
                started_at,
                finished_at: Utc::now(),
            },
        );
        manifest.save(&self.out)?;
        eprintln!("{step}: wrote {}", artifacts.join(", "));
        Ok(StepStatus::Ran)
    }
}

pub fn write_file(path: &Path, contents: &[u8]) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::data(format!("cannot create {}: {e}", parent.display())))?;
    }
    fs::write(path, contents).map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> CliResult<()> {
    let mut s = serde_json::to_string_pretty(value).expect("artifact serializes");
    s.push('\n');
    write_file(path, s.as_bytes())
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    let mut s = String::new();
    for r in rows {
        s.push_str(&serde_json::to_string(r).expect("record serializes"));
        s.push('\n');
    }
    write_file(path, s.as_bytes())
}

type RenderResult = Result<(), Box<dyn std::error::Error>>;

fn write_csv(path: &Path, write: impl FnOnce(&mut Vec<u8>) -> RenderResult) -> CliResult<()> {
    let mut buf = Vec::new();
    write(&mut buf).map_err(|e| CliError::data(format!("cannot render {}: {e}", path.display())))?;
    write_file(path, &buf)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let raw = fs::read_to_string(path).map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&raw).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> CliResult<Vec<T>> {
    let raw = fs::read_to_string(path).map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    raw.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| CliError::data(format!("{}:{}: {e}", path.display(), i + 1))))
        .collect()
}

fn inputs<const N: usize>(entries: [(&str, PathBuf); N]) -> BTreeMap<String, PathBuf> {
    entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn kinds(names: &[String]) -> Vec<EntityKind> {
    names.iter().map(|n| EntityKind::new(n).expect("validated")).collect()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ExtractionReport {
    pub judgments: usize,
    pub extracted: usize,
    pub skipped: SkipReport,
    pub gold_filter: Option<ExclusionReport>,
    /// Judgments without guiding principles; kept, but not scoreable.
    pub missing_gold: Vec<String>,
}

pub fn ingest_step(ctx: &Context) -> CliResult<StepStatus> {
    let c = &ctx.loaded.config;
    let corpus_path = ctx.loaded.resolve(&c.paths.corpus);
    if !corpus_path.exists() {
        return Err(CliError::data(format!("paths.corpus: {} does not exist", corpus_path.display())));
    }
    let params = json!({
        "format": c.paths.corpus_format,
        "corpus": c.corpus,
        "tokenizer": ctx.tokenizer_params(),
    });
    ctx.step("ingest", inputs([("corpus", corpus_path.clone())]), params, || {
        let store = ingest(&corpus_path, c.paths.corpus_format)?;
        write_file(&ctx.artifact(CORPUS), store.to_jsonl().as_bytes())?;
        let (reasons, skipped) = ReasonsExtractor::new(&c.corpus.reasons_heading).extract_all(&store);
        let pairs: Vec<ReasonGoldPair> = store
            .iter()
            .filter_map(|j| {
                reasons.get(&j.id).map(|r| ReasonGoldPair {
                    id: j.id.clone(),
                    reasons: r.clone(),
                    gold: j.guiding_principles.clone(),
                })
            })
            .collect();
        let missing_gold = pairs.iter().filter(|p| p.gold.trim().is_empty()).map(|p| p.id.clone()).collect();
        let (pairs, gold_filter) = match c.corpus.max_gold_tokens {
            Some(max) => {
                let (kept, rep) = filter_gold_outliers(pairs, max, ctx.counter().as_ref())?;
                (kept, Some(rep))
            }
            None => (pairs, None),
        };
        write_jsonl(&ctx.artifact(PAIRS), &pairs)?;
        write_json(
            &ctx.artifact(EXTRACTION_REPORT),
            &ExtractionReport {
                judgments: store.len(),
                extracted: reasons.len(),
                skipped,
                gold_filter,
                missing_gold,
            },
        )?;
        Ok(vec![CORPUS.into(), PAIRS.into(), EXTRACTION_REPORT.into()])
    })
}

pub fn split_step(ctx: &Context) -> CliResult<StepStatus> {
    let corpus = ctx.require(CORPUS, "ingest")?;
    let split = &ctx.loaded.config.split;
    ctx.step("split", inputs([("corpus", corpus.clone())]), json!(split), || {
        let store = ingest(&corpus, IngestFormat::Jsonl)?;
        let splits = split_corpus(&store, split.ratios(), split.seed)?;
        write_json(&ctx.artifact(SPLITS), &splits)?;
        Ok(vec![SPLITS.into()])
    })
}

fn load_pairs(ctx: &Context) -> CliResult<Vec<ReasonGoldPair>> {
    read_jsonl(&ctx.require(PAIRS, "ingest")?)
}

fn load_splits(ctx: &Context) -> CliResult<Splits> {
    read_json(&ctx.require(SPLITS, "split")?)
}

pub fn stats_step(ctx: &Context) -> CliResult<StepStatus> {
    let pairs_path = ctx.require(PAIRS, "ingest")?;
    let splits_path = ctx.require(SPLITS, "split")?;
    let params = json!({ "tokenizer": ctx.tokenizer_params() });
    ctx.step("stats", inputs([("pairs", pairs_path), ("splits", splits_path)]), params, || {
        let pairs = load_pairs(ctx)?;
        let splits = load_splits(ctx)?;
        let counter = ctx.counter();
        let mut rows = Vec::new();
        for (text, pick) in [
            ("reasons", (|p: &ReasonGoldPair| p.reasons.as_str()) as fn(&ReasonGoldPair) -> &str),
            ("guiding_principles", |p: &ReasonGoldPair| p.gold.as_str()),
        ] {
            let all: Vec<&ReasonGoldPair> = pairs.iter().collect();
            let mut groups = vec![("all".to_string(), all)];
            for s in Split::ALL {
                let ids = &splits.get(s).judgment_ids;
                groups.push((s.as_str().to_string(), pairs.iter().filter(|p| ids.contains(&p.id)).collect()));
            }
            for (split, members) in groups {
                let texts: Vec<&str> = members.iter().map(|p| pick(p)).collect();
                let stats = if texts.is_empty() {
                    None
                } else {
                    Some(LengthStats::from_counts(&counter.count_many(&texts)?)?)
                };
                rows.push(LengthRow {
                    text: text.to_string(),
                    split,
                    count: texts.len(),
                    stats,
                });
            }
        }
        write_csv(&ctx.artifact(LENGTHS_CSV), |w| Ok(report::write_length_csv(w, &rows)?))?;
        write_json(&ctx.artifact(LENGTHS_JSON), &rows)?;
        Ok(vec![LENGTHS_CSV.into(), LENGTHS_JSON.into()])
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnrichedRecord {
    pub id: String,
    pub text: String,
    pub spans: Vec<EntitySpan>,
}

#[derive(Debug, Serialize)]
struct EntityReport {
    source: &'static str,
    documents: usize,
    entities_by_kind: BTreeMap<String, usize>,
    errors: Vec<SpanImportError>,
}

pub fn enrich_step(ctx: &Context) -> CliResult<StepStatus> {
    let c = &ctx.loaded.config;
    let pairs_path = ctx.require(PAIRS, "ingest")?;
    let mut ins = inputs([("pairs", pairs_path)]);
    let spans_path = c.paths.spans.as_ref().map(|p| ctx.loaded.resolve(p));
    if let Some(p) = &spans_path {
        if !p.exists() {
            return Err(CliError::data(format!("paths.spans: {} does not exist", p.display())));
        }
        ins.insert("spans".into(), p.clone());
    }
    let params = json!({ "kinds": c.entities.kinds, "imported": spans_path.is_some() });
    ctx.step("enrich", ins, params, || {
        let pairs = load_pairs(ctx)?;
        let vocabulary = kinds(&c.entities.kinds);
        let documents: BTreeMap<String, String> = pairs.iter().map(|p| (p.id.clone(), p.reasons.clone())).collect();
        let (mut spans, errors, source) = match &spans_path {
            Some(p) => {
                let file = File::open(p).map_err(|e| CliError::data(format!("{}: {e}", p.display())))?;
                let imported = import_spans(BufReader::new(file), &documents)
                    .map_err(|e| CliError::data(format!("{}: {e}", p.display())))?;
                (imported.spans, imported.errors, "imported")
            }
            None => (
                documents.iter().map(|(id, text)| (id.clone(), detect_entities(text))).collect(),
                Vec::new(),
                "detected",
            ),
        };
        let mut by_kind: BTreeMap<String, usize> = BTreeMap::new();
        let mut records = Vec::with_capacity(pairs.len());
        for p in &pairs {
            let doc_spans: Vec<EntitySpan> = spans
                .remove(&p.id)
                .unwrap_or_default()
                .into_iter()
                .filter(|s| vocabulary.contains(&s.kind))
                .collect();
            for s in &doc_spans {
                *by_kind.entry(s.kind.to_string()).or_default() += 1;
            }
            let text = enrich(&p.reasons, &doc_spans).map_err(|e| CliError::data(format!("judgment {}: {e}", p.id)))?;
            records.push(EnrichedRecord {
                id: p.id.clone(),
                text,
                spans: doc_spans,
            });
        }
        write_jsonl(&ctx.artifact(ENRICHED), &records)?;
        write_json(&ctx.artifact(TAG_VOCABULARY), &tag_vocabulary(&vocabulary))?;
        write_json(
            &ctx.artifact(ENTITY_REPORT),
            &EntityReport {
                source,
                documents: records.len(),
                entities_by_kind: by_kind,
                errors,
            },
        )?;
        Ok(vec![ENRICHED.into(), TAG_VOCABULARY.into(), ENTITY_REPORT.into()])
    })
}

/// Pairs the configured split selects for summarization.
fn selected_pairs(ctx: &Context) -> CliResult<Vec<ReasonGoldPair>> {
    let pairs = load_pairs(ctx)?;
    let split = &ctx.loaded.config.summarize.split;
    if split == "all" {
        return Ok(pairs);
    }
    let split: Split = split.parse().expect("validated");
    let splits = load_splits(ctx)?;
    let ids = &splits.get(split).judgment_ids;
    Ok(pairs.into_iter().filter(|p| ids.contains(&p.id)).collect())
}

pub fn summarize_step(ctx: &Context, approach: Approach) -> CliResult<StepStatus> {
    let c = &ctx.loaded.config;
    if approach == Approach::Gold {
        return Err(CliError::config("--approach gold: gold summaries are the reference, not generated"));
    }
    if matches!(approach, Approach::ModelPlain | Approach::ModelEnriched) && c.generation.endpoint_for(approach).is_none() {
        let key = if approach == Approach::ModelPlain {
            "generation.model_plain"
        } else {
            "generation.model_enriched"
        };
        return Err(CliError::config(format!("{key}: no endpoint configured for {approach}")));
    }
    let mut ins = inputs([("pairs", ctx.require(PAIRS, "ingest")?)]);
    if c.summarize.split != "all" {
        ins.insert("splits".into(), ctx.require(SPLITS, "split")?);
    }
    let out_name = summaries_file(approach);
    let step = format!("summarize.{approach}");
    match approach {
        Approach::Gold => unreachable!("rejected above"),
        Approach::Lexrank => {
            if let Some(p) = &c.paths.abbreviations {
                ins.insert("abbreviations".into(), ctx.loaded.resolve(p));
            }
            let params = json!({
                "lexrank": c.lexrank,
                "split": c.summarize.split,
                "tokenizer": ctx.tokenizer_params(),
            });
            ctx.step(&step, ins, params, || {
                let splitter = match &c.paths.abbreviations {
                    Some(p) => SentenceSplitter::new(
                        AbbreviationList::from_file(&ctx.loaded.resolve(p))
                            .map_err(|e| CliError::config(format!("paths.abbreviations: {e}")))?,
                    ),
                    None => SentenceSplitter::default(),
                };
                let lexrank = LexRank {
                    params: c.lexrank.params(),
                    splitter,
                };
                let counter = ctx.counter();
                let mut records = Vec::new();
                for p in selected_pairs(ctx)? {
                    let record = match lexrank_summary(&p.id, &p.reasons, &lexrank, counter.as_ref()) {
                        Ok(r) => r,
                        Err(leitsatz_core::summarize::SummarizeError::EmptyDocument) => SummaryRecord {
                            judgment_id: p.id.clone(),
                            approach,
                            text: String::new(),
                            token_count: 0,
                            sentence_count: 0,
                            generation_params: None,
                            empty: true,
                            failure: Some("reasons text has no sentences".into()),
                        },
                        Err(e) => return Err(CliError::from(e)),
                    };
                    records.push(record);
                }
                write_jsonl(&ctx.artifact(&out_name), &records)?;
                Ok(vec![out_name.clone()])
            })
        }
        Approach::ModelPlain | Approach::ModelEnriched => {
            let endpoint_name = c.generation.endpoint_for(approach).expect("checked above");
            let endpoint = &c.generation.endpoints[endpoint_name];
            if approach == Approach::ModelEnriched {
                ins.insert("enriched".into(), ctx.require(ENRICHED, "enrich")?);
                ins.insert("tags".into(), ctx.require(TAG_VOCABULARY, "enrich")?);
            }
            let params = json!({
                "endpoint": endpoint_name,
                "url": endpoint.url,
                "budget": c.budget,
                "split": c.summarize.split,
                "tokenizer": ctx.tokenizer_params(),
            });
            ctx.step(&step, ins, params, || {
                let mut json_endpoint = JsonEndpoint::new(endpoint.url.clone(), Duration::from_secs(endpoint.timeout_secs));
                if let Some(var) = &endpoint.api_key_env {
                    let key = std::env::var(var).map_err(|_| {
                        CliError::config(format!("generation.endpoints.{endpoint_name}.api_key_env: {var} is not set"))
                    })?;
                    json_endpoint = json_endpoint.with_auth("Authorization", format!("Bearer {key}"));
                }
                let client = HttpGenerationClient::new(json_endpoint);
                let pairs = selected_pairs(ctx)?;
                let (texts, special): (BTreeMap<String, String>, Vec<String>) = if approach == Approach::ModelEnriched {
                    let enriched: Vec<EnrichedRecord> = read_jsonl(&ctx.artifact(ENRICHED))?;
                    (
                        enriched.into_iter().map(|r| (r.id, r.text)).collect(),
                        read_json(&ctx.artifact(TAG_VOCABULARY))?,
                    )
                } else {
                    (pairs.iter().map(|p| (p.id.clone(), p.reasons.clone())).collect(), Vec::new())
                };
                let counter = ctx.counter();
                let budget = c.budget.budget();
                let mut batch = Vec::with_capacity(pairs.len());
                for p in &pairs {
                    let text = texts
                        .get(&p.id)
                        .ok_or_else(|| CliError::data(format!("no input text for judgment {}; rerun enrich", p.id)))?;
                    batch.push((p.id.clone(), truncate_to_budget(text, budget, counter.as_ref())?));
                }
                let params = GenerationParams {
                    max_new_tokens: budget.generation_budget,
                    decoding: Decoding::Greedy,
                    endpoint: endpoint_name.to_string(),
                };
                let retry = RetryPolicy {
                    attempts: c.generation.retry_attempts,
                    base_delay: Duration::from_millis(c.generation.retry_base_delay_ms),
                };
                let results = generate_many(
                    &client,
                    &batch,
                    approach,
                    &params,
                    &special,
                    retry,
                    counter.as_ref(),
                    c.generation.connections,
                );
                let vocabulary = kinds(&c.entities.kinds);
                let mut records = Vec::new();
                let mut failures = Vec::new();
                for (r, (id, _)) in results.into_iter().zip(&batch) {
                    match r {
                        Ok(mut rec) => {
                            if approach == Approach::ModelEnriched {
                                if let Ok((plain, _)) = strip_tags(&rec.text, &vocabulary) {
                                    rec.text = plain;
                                }
                            }
                            records.push(rec);
                        }
                        Err(e) => failures.push(format!("{id}: {e}")),
                    }
                }
                write_jsonl(&ctx.artifact(&out_name), &records)?;
                if !failures.is_empty() {
                    return Err(CliError::external(format!(
                        "{} of {} generations failed after retries; first: {}",
                        failures.len(),
                        batch.len(),
                        failures[0]
                    )));
                }
                Ok(vec![out_name.clone()])
            })
        }
    }
}

/// Summary files present in the output directory, in approach order.
fn present_summaries(ctx: &Context) -> Vec<Approach> {
    CANDIDATES
        .into_iter()
        .filter(|a| ctx.artifact(&summaries_file(*a)).exists())
        .collect()
}

fn load_summaries(ctx: &Context, approaches: &[Approach]) -> CliResult<Vec<SummaryRecord>> {
    let mut all = Vec::new();
    for a in approaches {
        let name = summaries_file(*a);
        all.extend(read_jsonl::<SummaryRecord>(&ctx.require(&name, &format!("summarize --approach {a}"))?)?);
    }
    Ok(all)
}

pub fn score_step(ctx: &Context) -> CliResult<StepStatus> {
    let c = &ctx.loaded.config;
    let approaches = present_summaries(ctx);
    if approaches.is_empty() {
        return Err(CliError::data("no summaries to score; run `leitsatz summarize` first"));
    }
    let mut ins = inputs([("pairs", ctx.require(PAIRS, "ingest")?)]);
    for a in &approaches {
        ins.insert(summaries_file(*a), ctx.artifact(&summaries_file(*a)));
    }
    let metrics = c.metrics.metrics()?;
    let wants_bertscore = metrics.contains(&Metric::BertScore);
    if wants_bertscore && c.metrics.embeddings == EmbeddingSource::File {
        let p = ctx.loaded.resolve(c.metrics.embeddings_file.as_ref().expect("validated"));
        ins.insert("embeddings".into(), p);
    }
    ctx.step("score", ins, json!(c.metrics), || {
        let summaries = load_summaries(ctx, &approaches)?;
        let golds: BTreeMap<String, String> = load_pairs(ctx)?.into_iter().map(|p| (p.id, p.gold)).collect();
        let config = MetricsConfig {
            metrics: metrics.clone(),
            bertscore: BertScoreOptions {
                idf: c.metrics.idf,
                rescale_baseline: c.metrics.rescale_baseline,
            },
        };
        let provider: Option<Box<dyn EmbeddingProvider>> = if !wants_bertscore {
            None
        } else {
            Some(match c.metrics.embeddings {
                EmbeddingSource::Hashed => Box::new(HashedEmbeddingProvider { dim: c.metrics.dim }),
                EmbeddingSource::Service => Box::new(HttpEmbeddingProvider::new(
                    c.metrics.embeddings_url.clone().expect("validated"),
                )),
                EmbeddingSource::File => Box::new(FileEmbeddingProvider::load(
                    &ctx.loaded.resolve(c.metrics.embeddings_file.as_ref().expect("validated")),
                )?),
            })
        };
        let report = score_corpus(&summaries, &golds, &config, provider.as_deref())?;
        write_csv(&ctx.artifact(PER_SUMMARY_CSV), |w| Ok(report::write_per_summary_csv(w, &report.per_summary)?))?;
        write_csv(&ctx.artifact(SCORES_CSV), |w| Ok(report::write_scores_csv(w, &report.corpus)?))?;
        write_json(&ctx.artifact(METRICS_JSON), &report)?;
        Ok(vec![PER_SUMMARY_CSV.into(), SCORES_CSV.into(), METRICS_JSON.into()])
    })
}

fn assigned_approaches(ctx: &Context) -> CliResult<Vec<Approach>> {
    match &ctx.loaded.config.assign.approaches {
        Some(list) => Ok(list.iter().map(|a| a.parse().expect("validated")).collect()),
        None => {
            let present = present_summaries(ctx);
            if present.is_empty() {
                return Err(CliError::data("no summaries to assign; run `leitsatz summarize` first"));
            }
            Ok(present)
        }
    }
}

pub fn assign_step(ctx: &Context) -> CliResult<StepStatus> {
    let c = &ctx.loaded.config;
    if c.assign.reviewers.len() < c.assign.per_item {
        return Err(CliError::config(format!(
            "assign.reviewers: {} listed, at least assign.per_item = {} needed",
            c.assign.reviewers.len(),
            c.assign.per_item
        )));
    }
    let approaches = assigned_approaches(ctx)?;
    let mut ins = BTreeMap::new();
    for a in &approaches {
        ins.insert(summaries_file(*a), ctx.require(&summaries_file(*a), &format!("summarize --approach {a}"))?);
    }
    ctx.step("assign", ins, json!(c.assign), || {
        let refs: Vec<SummaryRef> = load_summaries(ctx, &approaches)?
            .iter()
            .map(|s| SummaryRef::new(s.judgment_id.clone(), s.approach))
            .collect();
        let assignments = build_assignments(&refs, &c.assign.reviewers, c.assign.per_item, c.assign.seed)
            .map_err(|e| CliError::config(format!("assign: {e}")))?;
        write_json(&ctx.artifact(ASSIGNMENTS), &assignments)?;
        Ok(vec![ASSIGNMENTS.into()])
    })
}

fn excerpt(text: &str, chars: usize) -> String {
    match text.char_indices().nth(chars) {
        Some((cut, _)) => format!("{} …", &text[..cut]),
        None => text.to_string(),
    }
}

/// Builds the review service state from the assignment and summary artifacts.
pub fn review_state(ctx: &Context) -> CliResult<AppState> {
    let c = &ctx.loaded.config;
    let admin_token = c
        .serve
        .admin_token
        .clone()
        .filter(|t| !t.is_empty())
        .ok_or_else(|| CliError::config("serve.admin_token: required (set LEITSATZ__SERVE__ADMIN_TOKEN)"))?;
    let assignments: Vec<Assignment> = read_json(&ctx.require(ASSIGNMENTS, "assign")?)?;
    let approaches: BTreeSet<Approach> = assignments.iter().map(|a| a.summary.approach).collect();
    let approaches: Vec<Approach> = approaches.into_iter().collect();
    let summaries: BTreeMap<SummaryRef, SummaryRecord> = load_summaries(ctx, &approaches)?
        .into_iter()
        .map(|s| (SummaryRef::new(s.judgment_id.clone(), s.approach), s))
        .collect();
    let pairs: BTreeMap<String, ReasonGoldPair> = load_pairs(ctx)?.into_iter().map(|p| (p.id.clone(), p)).collect();
    let mut texts = BTreeMap::new();
    for a in &assignments {
        let summary = summaries
            .get(&a.summary)
            .ok_or_else(|| CliError::data(format!("assigned summary {}/{} not found", a.summary.judgment_id, a.summary.approach)))?;
        let pair = pairs
            .get(&a.summary.judgment_id)
            .ok_or_else(|| CliError::data(format!("judgment {} not in {PAIRS}", a.summary.judgment_id)))?;
        texts.insert(
            a.summary.clone(),
            ReviewText {
                gold_text: pair.gold.clone(),
                candidate_text: summary.text.clone(),
                judgment_excerpt: Some(excerpt(&pair.reasons, c.serve.excerpt_chars)),
            },
        );
    }
    let item_salt = c
        .serve
        .item_salt
        .clone()
        .unwrap_or_else(|| hex::encode(Sha256::digest(format!("items:{admin_token}").as_bytes())));
    let config = ServiceConfig {
        reviewer_tokens: c.serve.reviewer_tokens.clone(),
        admin_token,
        store_path: ctx.loaded.store_path(),
        item_salt,
        show_excerpt: c.serve.show_excerpt,
    };
    AppState::new(config, ReviewData { assignments, texts }).map_err(|e| CliError::config(format!("serve: {e}")))
}

pub fn serve_step(ctx: &Context, bind: Option<&str>) -> CliResult<()> {
    let state = Arc::new(review_state(ctx)?);
    let bind = bind.unwrap_or(&ctx.loaded.config.serve.bind).to_string();
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::external(e.to_string()))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&bind)
            .await
            .map_err(|e| CliError::config(format!("serve.bind: cannot bind {bind}: {e}")))?;
        eprintln!("review service listening on http://{}", listener.local_addr().map_err(|e| CliError::external(e.to_string()))?);
        leitsatz_service::serve(listener, state)
            .await
            .map_err(|e| CliError::external(format!("review service stopped: {e}")))
    })
}

#[derive(Debug, Serialize)]
struct ApproachAudit {
    approach: Approach,
    summaries: usize,
    generated: usize,
    supported: usize,
    /// Pooled over all generated entities of the approach.
    support_rate: Option<f64>,
}

pub fn report_step(ctx: &Context) -> CliResult<StepStatus> {
    let c = &ctx.loaded.config;
    let verdicts = ctx.loaded.verdicts_path();
    if !verdicts.exists() {
        return Err(CliError::data(format!(
            "no verdict export at {}; set paths.verdicts or save GET /admin/export there",
            verdicts.display()
        )));
    }
    let approaches = present_summaries(ctx);
    let mut ins = inputs([("verdicts", verdicts.clone()), ("pairs", ctx.require(PAIRS, "ingest")?)]);
    for a in &approaches {
        ins.insert(summaries_file(*a), ctx.artifact(&summaries_file(*a)));
    }
    let metrics_path = ctx.artifact(METRICS_JSON);
    if metrics_path.exists() {
        ins.insert("metrics".into(), metrics_path.clone());
    }
    let params = json!({ "per_item": c.assign.per_item, "audit_kinds": c.entities.audit_kinds });
    ctx.step("report", ins, params, || {
        let file = File::open(&verdicts).map_err(|e| CliError::data(format!("{}: {e}", verdicts.display())))?;
        let store = VerdictStore::read_jsonl(BufReader::new(file))
            .map_err(|e| CliError::data(format!("{}: {e}", verdicts.display())))?;
        let per_item = c.assign.per_item;
        let mut written: Vec<String> = Vec::new();

        let pairwise = pairwise_kappa_matrix(&store);
        write_csv(&ctx.artifact(PAIRWISE_CSV), |w| Ok(report::write_pairwise_csv(w, &pairwise)?))?;
        write_json(
            &ctx.artifact(PAIRWISE_JSON),
            &json!({ "unit": PAIRWISE_UNIT, "mean": pairwise.mean(), "matrix": pairwise }),
        )?;
        written.extend([PAIRWISE_CSV.into(), PAIRWISE_JSON.into()]);

        let per_class = per_class_kappa(&store, per_item).map_err(|e| CliError::data(format!("per-class agreement: {e}")))?;
        write_csv(&ctx.artifact(PER_CLASS_CSV), |w| Ok(report::write_per_class_csv(w, &per_class)?))?;
        write_json(&ctx.artifact(PER_CLASS_JSON), &per_class)?;
        written.extend([PER_CLASS_CSV.into(), PER_CLASS_JSON.into()]);

        let fulfillment = fulfillment_report(&store, per_item);
        write_csv(&ctx.artifact(FULFILLMENT_CSV), |w| Ok(report::write_fulfillment_csv(w, &fulfillment)?))?;
        write_json(&ctx.artifact(FULFILLMENT_JSON), &fulfillment)?;
        written.extend([FULFILLMENT_CSV.into(), FULFILLMENT_JSON.into()]);

        if metrics_path.exists() {
            let metrics: MetricReport = read_json(&metrics_path)?;
            let rows = metric_class_correlations(&metrics, &store, per_item);
            write_csv(&ctx.artifact(CORRELATIONS_CSV), |w| Ok(report::write_correlations_csv(w, &rows)?))?;
            write_json(&ctx.artifact(CORRELATIONS_JSON), &rows)?;
            written.extend([CORRELATIONS_CSV.into(), CORRELATIONS_JSON.into()]);
        } else {
            eprintln!("report: {METRICS_JSON} missing, skipping metric correlations");
        }

        let sources: BTreeMap<String, String> = load_pairs(ctx)?.into_iter().map(|p| (p.id, p.reasons)).collect();
        let audit_kinds = kinds(&c.entities.audit_kinds);
        let mut rows = Vec::new();
        let mut by_approach = Vec::new();
        for a in &approaches {
            let summaries = load_summaries(ctx, &[*a])?;
            let mut totals = ApproachAudit {
                approach: *a,
                summaries: 0,
                generated: 0,
                supported: 0,
                support_rate: None,
            };
            for s in summaries {
                let Some(source) = sources.get(&s.judgment_id) else {
                    continue;
                };
                let audit = audit_hallucinations(&s.text, source, &audit_kinds);
                totals.summaries += 1;
                totals.generated += audit.generated_entities.len();
                totals.supported += audit.supported;
                rows.push(AuditRow {
                    judgment_id: s.judgment_id,
                    approach: *a,
                    generated: audit.generated_entities.len(),
                    supported: audit.supported,
                    support_rate: audit.support_rate,
                    unsupported: audit.unsupported,
                });
            }
            if totals.generated > 0 {
                totals.support_rate = Some(totals.supported as f64 / totals.generated as f64);
            }
            by_approach.push(totals);
        }
        write_csv(&ctx.artifact(HALLUCINATIONS_CSV), |w| Ok(report::write_audit_csv(w, &rows)?))?;
        write_json(&ctx.artifact(HALLUCINATIONS_JSON), &json!({ "approaches": by_approach, "summaries": rows }))?;
        written.extend([HALLUCINATIONS_CSV.into(), HALLUCINATIONS_JSON.into()]);
        Ok(written)
    })
}

/// Offline chain: ingest through assign, plus model approaches that have an
/// endpoint and the report when a verdict export exists.
pub fn run_all(ctx: &Context) -> CliResult<()> {
    ingest_step(ctx)?;
    split_step(ctx)?;
    stats_step(ctx)?;
    enrich_step(ctx)?;
    for a in CANDIDATES {
        if a == Approach::Lexrank || ctx.loaded.config.generation.endpoint_for(a).is_some() {
            summarize_step(ctx, a)?;
        }
    }
    score_step(ctx)?;
    if !ctx.loaded.config.assign.reviewers.is_empty() {
        assign_step(ctx)?;
    }
    if ctx.loaded.verdicts_path().exists() {
        report_step(ctx)?;
    }
    Ok(())
}
