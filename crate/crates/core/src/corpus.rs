//! Judgment corpus: ingestion, reasons extraction, splits and length
//! statistics.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::describe;
use crate::textproc::{CountError, TokenCounter};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{} malformed record(s); first: {}", .0.len(), .0[0])]
    Malformed(Vec<RecordError>),
    #[error("duplicate judgment id(s): {}", .0.join(", "))]
    DuplicateIds(Vec<String>),
    #[error("judgment {id}: reasons section missing")]
    ReasonsMissing { id: String },
    #[error("split ratios must be positive and sum to 1, got {0:?}")]
    InvalidRatios([f64; 3]),
    #[error("cannot split an empty corpus")]
    EmptyCorpus,
    #[error("length statistics need at least one text")]
    NoTexts,
    #[error("outlier threshold must be positive")]
    InvalidThreshold,
    #[error(transparent)]
    Count(#[from] CountError),
}

/// A record that failed to parse or validate, with its location.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RecordError {
    /// `file:line` for JSONL, the file path for XML.
    pub location: String,
    pub message: String,
}

impl std::fmt::Display for RecordError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subsection {
    pub label: String,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub heading: String,
    #[serde(default)]
    pub body: String,
    #[serde(default)]
    pub subsections: Vec<Subsection>,
}

/// One court decision. Serialized field order is the canonical JSONL layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgment {
    pub id: String,
    pub date: NaiveDate,
    pub court: String,
    pub sections: Vec<Section>,
    #[serde(default)]
    pub guiding_principles: String,
}

impl Judgment {
    fn validate(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("empty id".into());
        }
        if self.sections.is_empty() {
            return Err(format!("judgment {} has no sections", self.id));
        }
        for section in &self.sections {
            if section.heading.trim().is_empty() {
                return Err(format!("judgment {} has a section with an empty heading", self.id));
            }
            let mut seen = BTreeSet::new();
            for sub in &section.subsections {
                if !seen.insert(sub.label.as_str()) {
                    return Err(format!(
                        "judgment {}: subsection label {:?} repeated in section {:?}",
                        self.id, sub.label, section.heading
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IngestFormat {
    Jsonl,
    XmlDir,
}

/// Judgments in ingestion order, indexed by id.
#[derive(Debug, Clone, Default)]
pub struct CorpusStore {
    judgments: Vec<Judgment>,
    index: HashMap<String, usize>,
}

impl CorpusStore {
    pub fn from_judgments(judgments: Vec<Judgment>) -> Result<Self, CorpusError> {
        let mut index = HashMap::with_capacity(judgments.len());
        let mut duplicates = BTreeSet::new();
        for (pos, j) in judgments.iter().enumerate() {
            if index.insert(j.id.clone(), pos).is_some() {
                duplicates.insert(j.id.clone());
            }
        }
        if !duplicates.is_empty() {
            return Err(CorpusError::DuplicateIds(duplicates.into_iter().collect()));
        }
        Ok(CorpusStore { judgments, index })
    }

    pub fn len(&self) -> usize {
        self.judgments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.judgments.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Judgment> {
        self.index.get(id).map(|&i| &self.judgments[i])
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Judgment> {
        self.judgments.iter()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.judgments.iter().map(|j| j.id.as_str())
    }

    /// Canonical JSONL: one judgment per line, fixed key order, `\n` endings.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for j in &self.judgments {
            serde_json::to_writer(&mut out, j)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Loads a corpus from a JSONL file or a directory of XML judgments.
pub fn ingest(path: &Path, format: IngestFormat) -> Result<CorpusStore, CorpusError> {
    let judgments = match format {
        IngestFormat::Jsonl => read_jsonl(path)?,
        IngestFormat::XmlDir => read_xml_dir(path)?,
    };
    CorpusStore::from_judgments(judgments)
}

fn read_jsonl(path: &Path) -> Result<Vec<Judgment>, CorpusError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut judgments = Vec::new();
    let mut errors = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let location = format!("{}:{}", path.display(), lineno + 1);
        match serde_json::from_str::<Judgment>(&line) {
            Ok(j) => match j.validate() {
                Ok(()) => judgments.push(j),
                Err(message) => errors.push(RecordError { location, message }),
            },
            Err(e) => errors.push(RecordError {
                location,
                message: e.to_string(),
            }),
        }
    }
    if !errors.is_empty() {
        return Err(CorpusError::Malformed(errors));
    }
    Ok(judgments)
}

#[derive(Debug, Deserialize)]
struct XmlJudgment {
    #[serde(rename = "@id")]
    id: String,
    #[serde(rename = "@date")]
    date: String,
    #[serde(rename = "@court", default)]
    court: String,
    #[serde(default)]
    guiding_principles: Option<String>,
    #[serde(rename = "section", default)]
    sections: Vec<XmlSection>,
}

#[derive(Debug, Deserialize)]
struct XmlSection {
    #[serde(rename = "@heading")]
    heading: String,
    #[serde(default)]
    body: Option<String>,
    #[serde(rename = "subsection", default)]
    subsections: Vec<XmlSubsection>,
}

#[derive(Debug, Deserialize)]
struct XmlSubsection {
    #[serde(rename = "@label")]
    label: String,
    #[serde(rename = "$text", default)]
    body: String,
}

impl XmlJudgment {
    fn into_judgment(self) -> Result<Judgment, String> {
        let date = NaiveDate::parse_from_str(self.date.trim(), "%Y-%m-%d")
            .map_err(|e| format!("invalid date {:?}: {e}", self.date))?;
        Ok(Judgment {
            id: self.id,
            date,
            court: self.court,
            sections: self
                .sections
                .into_iter()
                .map(|s| Section {
                    heading: s.heading,
                    body: s.body.unwrap_or_default(),
                    subsections: s
                        .subsections
                        .into_iter()
                        .map(|sub| Subsection {
                            label: sub.label,
                            body: sub.body,
                        })
                        .collect(),
                })
                .collect(),
            guiding_principles: self.guiding_principles.unwrap_or_default(),
        })
    }
}

/// Parses one XML judgment document.
///
/// ```xml
/// <judgment id="…" date="2020-01-31" court="BGH">
///   <guiding_principles>…</guiding_principles>
///   <section heading="Entscheidungsgründe">
///     <subsection label="I">…</subsection>
///   </section>
/// </judgment>
/// ```
pub fn parse_xml_judgment(xml: &str) -> Result<Judgment, String> {
    let raw: XmlJudgment = quick_xml::de::from_str(xml).map_err(|e| e.to_string())?;
    let judgment = raw.into_judgment()?;
    judgment.validate()?;
    Ok(judgment)
}

fn read_xml_dir(dir: &Path) -> Result<Vec<Judgment>, CorpusError> {
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext.eq_ignore_ascii_case("xml")))
        .collect();
    paths.sort();
    let mut judgments = Vec::new();
    let mut errors = Vec::new();
    for path in paths {
        let xml = fs::read_to_string(&path).map_err(io_err(&path))?;
        match parse_xml_judgment(&xml) {
            Ok(j) => judgments.push(j),
            Err(message) => errors.push(RecordError {
                location: path.display().to_string(),
                message,
            }),
        }
    }
    if !errors.is_empty() {
        return Err(CorpusError::Malformed(errors));
    }
    Ok(judgments)
}

fn heading_key(s: &str) -> String {
    s.chars()
        .filter(|c| !c.is_whitespace())
        .flat_map(char::to_lowercase)
        .collect::<String>()
        .trim_end_matches([':', '.'])
        .to_string()
}

/// Is this the recap subsection of the lower instance ("I", "I.", "(I)")?
pub fn is_subsection_one(label: &str) -> bool {
    label.trim_matches(|c: char| !c.is_alphanumeric()) == "I"
}

/// Pulls the evaluable text out of a judgment: the reasons section minus its
/// first subsection.
#[derive(Debug, Clone)]
pub struct ReasonsExtractor {
    heading: String,
}

impl Default for ReasonsExtractor {
    fn default() -> Self {
        Self::new("Entscheidungsgründe")
    }
}

/// Judgments skipped in batch extraction.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipReport {
    pub skipped: Vec<SkippedJudgment>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedJudgment {
    pub id: String,
    pub reason: String,
}

impl ReasonsExtractor {
    /// Headings are compared case-insensitively with all whitespace removed,
    /// so letter-spaced headings (`E n t s c h e i d u n g s g r ü n d e`)
    /// match too.
    pub fn new(heading: &str) -> Self {
        ReasonsExtractor {
            heading: heading_key(heading),
        }
    }

    /// Subsection bodies except subsection I, joined by a blank line; the
    /// section body when there are no subsections.
    pub fn extract(&self, judgment: &Judgment) -> Result<String, CorpusError> {
        let section = judgment
            .sections
            .iter()
            .find(|s| heading_key(&s.heading) == self.heading)
            .ok_or_else(|| CorpusError::ReasonsMissing {
                id: judgment.id.clone(),
            })?;
        if section.subsections.is_empty() {
            return Ok(section.body.clone());
        }
        Ok(section
            .subsections
            .iter()
            .filter(|s| !is_subsection_one(&s.label))
            .map(|s| s.body.as_str())
            .collect::<Vec<_>>()
            .join("\n\n"))
    }

    /// Extracts every judgment, skipping (and reporting) those without reasons.
    pub fn extract_all(&self, store: &CorpusStore) -> (BTreeMap<String, String>, SkipReport) {
        let mut out = BTreeMap::new();
        let mut report = SkipReport::default();
        for j in store.iter() {
            match self.extract(j) {
                Ok(text) => {
                    out.insert(j.id.clone(), text);
                }
                Err(e) => report.skipped.push(SkippedJudgment {
                    id: j.id.clone(),
                    reason: e.to_string(),
                }),
            }
        }
        (out, report)
    }
}

pub fn extract_reasons(judgment: &Judgment) -> Result<String, CorpusError> {
    ReasonsExtractor::default().extract(judgment)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub split: Split,
    pub judgment_ids: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub seed: u64,
    pub train: SplitAssignment,
    pub valid: SplitAssignment,
    pub test: SplitAssignment,
}

impl Splits {
    pub fn get(&self, split: Split) -> &SplitAssignment {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    pub fn split_of(&self, id: &str) -> Option<Split> {
        Split::ALL
            .into_iter()
            .find(|&s| self.get(s).judgment_ids.contains(id))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl SplitRatios {
    fn as_array(self) -> [f64; 3] {
        [self.train, self.valid, self.test]
    }
}

/// Floor each share, then hand out the remainder by largest fractional part
/// (earlier split wins ties).
pub fn split_sizes(total: usize, ratios: SplitRatios) -> Result<[usize; 3], CorpusError> {
    let r = ratios.as_array();
    if r.iter().any(|&x| !x.is_finite() || x <= 0.0) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(CorpusError::InvalidRatios(r));
    }
    let exact: Vec<f64> = r.iter().map(|x| x * total as f64).collect();
    let mut sizes = [0usize; 3];
    for (size, e) in sizes.iter_mut().zip(&exact) {
        *size = (e + 1e-9).floor() as usize;
    }
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let fa = exact[a] - sizes[a] as f64;
        let fb = exact[b] - sizes[b] as f64;
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    let mut remaining = total - sizes.iter().sum::<usize>();
    for idx in order.iter().cycle() {
        if remaining == 0 {
            break;
        }
        sizes[*idx] += 1;
        remaining -= 1;
    }
    Ok(sizes)
}

/// Seeded random partition into train/valid/test.
pub fn split_corpus(store: &CorpusStore, ratios: SplitRatios, seed: u64) -> Result<Splits, CorpusError> {
    let sizes = split_sizes(store.len(), ratios)?;
    if store.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let mut ids: Vec<&str> = store.ids().collect();
    ids.sort_unstable();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut rest = ids.into_iter();
    let mut take = |split: Split, n: usize| SplitAssignment {
        split,
        judgment_ids: rest.by_ref().take(n).map(str::to_string).collect(),
    };
    Ok(Splits {
        seed,
        train: take(Split::Train, sizes[0]),
        valid: take(Split::Valid, sizes[1]),
        test: take(Split::Test, sizes[2]),
    })
}

/// Token-length summary of a set of texts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub min: usize,
    pub mean: f64,
    pub max: usize,
    pub std: f64,
}

impl LengthStats {
    pub fn from_counts(counts: &[usize]) -> Result<Self, CorpusError> {
        let values: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
        let d = describe(&values).ok_or(CorpusError::NoTexts)?;
        Ok(LengthStats {
            min: d.min as usize,
            mean: d.mean,
            max: d.max as usize,
            std: d.std,
        })
    }
}

pub fn length_stats(texts: &[&str], counter: &dyn TokenCounter) -> Result<LengthStats, CorpusError> {
    if texts.is_empty() {
        return Err(CorpusError::NoTexts);
    }
    let counts = counter.count_many(texts)?;
    LengthStats::from_counts(&counts)
}

/// Reasons text and gold guiding principles of one judgment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasonGoldPair {
    pub id: String,
    pub reasons: String,
    pub gold: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExcludedGold {
    pub id: String,
    pub gold_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionReport {
    pub max_gold_tokens: usize,
    pub retained: usize,
    pub excluded: Vec<ExcludedGold>,
}

/// Drops pairs whose gold summary exceeds `max_gold_tokens`.
pub fn filter_gold_outliers(
    pairs: Vec<ReasonGoldPair>,
    max_gold_tokens: usize,
    counter: &dyn TokenCounter,
) -> Result<(Vec<ReasonGoldPair>, ExclusionReport), CorpusError> {
    if max_gold_tokens == 0 {
        return Err(CorpusError::InvalidThreshold);
    }
    let golds: Vec<&str> = pairs.iter().map(|p| p.gold.as_str()).collect();
    let counts = counter.count_many(&golds)?;
    let mut kept = Vec::with_capacity(pairs.len());
    let mut excluded = Vec::new();
    for (pair, gold_tokens) in pairs.into_iter().zip(counts) {
        if gold_tokens <= max_gold_tokens {
            kept.push(pair);
        } else {
            excluded.push(ExcludedGold {
                id: pair.id,
                gold_tokens,
            });
        }
    }
    let report = ExclusionReport {
        max_gold_tokens,
        retained: kept.len(),
        excluded,
    };
    Ok((kept, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textproc::WordCounter;

    fn judgment(id: &str, subs: &[(&str, &str)]) -> Judgment {
        Judgment {
            id: id.into(),
            date: NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(),
            court: "BGH".into(),
            sections: vec![
                Section {
                    heading: "Tenor".into(),
                    body: "Die Revision wird zurückgewiesen.".into(),
                    subsections: vec![],
                },
                Section {
                    heading: "Entscheidungsgründe".into(),
                    body: String::new(),
                    subsections: subs
                        .iter()
                        .map(|(l, b)| Subsection {
                            label: l.to_string(),
                            body: b.to_string(),
                        })
                        .collect(),
                },
            ],
            guiding_principles: "Leitsatz.".into(),
        }
    }

    #[test]
    fn extract_drops_subsection_one() {
        let j = judgment("a", &[("I", "recap"), ("II", "analysis")]);
        assert_eq!(extract_reasons(&j).unwrap(), "analysis");
        let j = judgment("a", &[("I.", "a"), ("II.", "b"), ("III.", "c")]);
        assert_eq!(extract_reasons(&j).unwrap(), "b\n\nc");
    }

    #[test]
    fn extract_unstructured_body() {
        let mut j = judgment("a", &[]);
        j.sections[1].body = "x".into();
        assert_eq!(extract_reasons(&j).unwrap(), "x");
    }

    #[test]
    fn heading_match_is_case_and_space_tolerant() {
        let mut j = judgment("a", &[("II", "b")]);
        j.sections[1].heading = "  E n t s c h e i d u n g s g r ü n d e :".into();
        assert_eq!(extract_reasons(&j).unwrap(), "b");
        j.sections[1].heading = "ENTSCHEIDUNGSGRÜNDE".into();
        assert_eq!(extract_reasons(&j).unwrap(), "b");
    }

    #[test]
    fn missing_reasons_is_reported_in_batch() {
        let mut j = judgment("b", &[]);
        j.sections.truncate(1);
        assert!(matches!(extract_reasons(&j), Err(CorpusError::ReasonsMissing { .. })));
        let store = CorpusStore::from_judgments(vec![judgment("a", &[("II", "x")]), j]).unwrap();
        let (texts, report) = ReasonsExtractor::default().extract_all(&store);
        assert_eq!(texts.len(), 1);
        assert_eq!(report.skipped.len(), 1);
        assert_eq!(report.skipped[0].id, "b");
    }

    #[test]
    fn subsection_one_labels() {
        assert!(is_subsection_one("I"));
        assert!(is_subsection_one(" I. "));
        assert!(is_subsection_one("(I)"));
        assert!(!is_subsection_one("II"));
        assert!(!is_subsection_one("1"));
        assert!(!is_subsection_one("IV"));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let err = CorpusStore::from_judgments(vec![judgment("a", &[]), judgment("a", &[])]).unwrap_err();
        match err {
            CorpusError::DuplicateIds(ids) => assert_eq!(ids, vec!["a".to_string()]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn split_sizes_largest_remainder() {
        let r = SplitRatios {
            train: 0.7,
            valid: 0.15,
            test: 0.15,
        };
        assert_eq!(split_sizes(10, r).unwrap(), [7, 2, 1]);
        let bad = SplitRatios {
            train: 1.0,
            valid: 0.0,
            test: 0.0,
        };
        assert!(matches!(split_sizes(1, bad), Err(CorpusError::InvalidRatios(_))));
        let off = SplitRatios {
            train: 0.5,
            valid: 0.2,
            test: 0.2,
        };
        assert!(split_sizes(10, off).is_err());
    }

    #[test]
    fn split_is_deterministic() {
        let store = CorpusStore::from_judgments((0..10).map(|i| judgment(&format!("j{i}"), &[])).collect()).unwrap();
        let r = SplitRatios {
            train: 0.7,
            valid: 0.15,
            test: 0.15,
        };
        let a = split_corpus(&store, r, 42).unwrap();
        let b = split_corpus(&store, r, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            (a.train.judgment_ids.len(), a.valid.judgment_ids.len(), a.test.judgment_ids.len()),
            (7, 2, 1)
        );
        let empty = CorpusStore::default();
        assert!(matches!(split_corpus(&empty, r, 1), Err(CorpusError::EmptyCorpus)));
    }

    #[test]
    fn length_stats_examples() {
        let s = LengthStats::from_counts(&[2, 4, 6]).unwrap();
        assert_eq!((s.min, s.mean, s.max, s.std), (2, 4.0, 6, 2.0));
        let s = length_stats(&["a b c d e f g"], &WordCounter).unwrap();
        assert_eq!((s.min, s.mean, s.max, s.std), (7, 7.0, 7, 0.0));
        assert!(matches!(length_stats(&[], &WordCounter), Err(CorpusError::NoTexts)));
    }

    #[test]
    fn gold_outlier_filter() {
        let pair = |id: &str, n: usize| ReasonGoldPair {
            id: id.into(),
            reasons: "r".into(),
            gold: vec!["w"; n].join(" "),
        };
        let (kept, report) = filter_gold_outliers(vec![pair("a", 100), pair("b", 5000)], 1500, &WordCounter).unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].id, "a");
        assert_eq!(report.excluded, vec![ExcludedGold { id: "b".into(), gold_tokens: 5000 }]);

        let (kept, report) = filter_gold_outliers(vec![pair("a", 3), pair("b", 4)], 10_000, &WordCounter).unwrap();
        assert_eq!(kept.len(), 2);
        assert!(report.excluded.is_empty());

        assert!(matches!(
            filter_gold_outliers(vec![pair("a", 1)], 0, &WordCounter),
            Err(CorpusError::InvalidThreshold)
        ));
    }

    #[test]
    fn xml_judgment_parses() {
        let xml = r#"<judgment id="x1" date="2021-03-04" court="BGH">
  <guiding_principles>Ein Leitsatz.</guiding_principles>
  <section heading="Tenor"><body>Zurückgewiesen.</body></section>
  <section heading="Entscheidungsgründe">
    <subsection label="I">Vorinstanz.</subsection>
    <subsection label="II">Würdigung.</subsection>
  </section>
</judgment>"#;
        let j = parse_xml_judgment(xml).unwrap();
        assert_eq!(j.id, "x1");
        assert_eq!(j.guiding_principles, "Ein Leitsatz.");
        assert_eq!(j.sections.len(), 2);
        assert_eq!(j.sections[0].body, "Zurückgewiesen.");
        assert_eq!(extract_reasons(&j).unwrap(), "Würdigung.");
    }
}
