//! Legal entity spans: pattern detection for statutes (GS) and court
//! decisions (RS), import of externally tagged spans, tag enrichment and
//! hallucination auditing.

use std::borrow::Cow;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::BufRead;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Entity tag name such as `GS`. Uppercase ASCII letters, digits and `_`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct EntityKind(Cow<'static, str>);

impl EntityKind {
    /// Law / statute citation.
    pub const GS: EntityKind = EntityKind(Cow::Borrowed("GS"));
    /// Court decision.
    pub const RS: EntityKind = EntityKind(Cow::Borrowed("RS"));
    /// Legal literature.
    pub const LIT: EntityKind = EntityKind(Cow::Borrowed("LIT"));
    /// Ordinance / regulation.
    pub const VO: EntityKind = EntityKind(Cow::Borrowed("VO"));
    /// European norm.
    pub const EUN: EntityKind = EntityKind(Cow::Borrowed("EUN"));
    pub const PER: EntityKind = EntityKind(Cow::Borrowed("PER"));
    pub const ORG: EntityKind = EntityKind(Cow::Borrowed("ORG"));
    /// Country.
    pub const LD: EntityKind = EntityKind(Cow::Borrowed("LD"));

    pub const DEFAULT_VOCABULARY: [EntityKind; 8] = [
        Self::GS,
        Self::RS,
        Self::LIT,
        Self::VO,
        Self::EUN,
        Self::PER,
        Self::ORG,
        Self::LD,
    ];

    pub fn new(name: &str) -> Result<Self, EntityError> {
        let valid = !name.is_empty()
            && name
                .chars()
                .all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '_')
            && name.starts_with(|c: char| c.is_ascii_uppercase());
        if !valid {
            return Err(EntityError::InvalidKind(name.to_string()));
        }
        Ok(EntityKind(Cow::Owned(name.to_string())))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn open_tag(&self) -> String {
        format!("<{}>", self.0)
    }

    pub fn close_tag(&self) -> String {
        format!("</{}>", self.0)
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for EntityKind {
    type Error = EntityError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        EntityKind::new(&value)
    }
}

impl From<EntityKind> for String {
    fn from(kind: EntityKind) -> Self {
        kind.0.into_owned()
    }
}

/// Tag strings to declare as special tokens to a generator, in vocabulary
/// order: `<GS>`, `</GS>`, `<RS>`, …
pub fn tag_vocabulary(kinds: &[EntityKind]) -> Vec<String> {
    kinds.iter().flat_map(|k| [k.open_tag(), k.close_tag()]).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    pub kind: EntityKind,
    pub surface: String,
}

impl EntitySpan {
    /// Builds a span over `text` (character offsets), checking bounds.
    pub fn over(text: &str, start: usize, end: usize, kind: EntityKind) -> Result<Self, EntityError> {
        let len = text.chars().count();
        if start >= end || end > len {
            return Err(EntityError::OutOfRange { start, end, len });
        }
        let surface = text.chars().skip(start).take(end - start).collect();
        Ok(EntitySpan {
            start,
            end,
            kind,
            surface,
        })
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EntityError {
    #[error("invalid entity kind {0:?}")]
    InvalidKind(String),
    #[error("span ({start}, {end}) is out of range for a text of {len} characters")]
    OutOfRange { start: usize, end: usize, len: usize },
    #[error("spans ({}, {}) and ({}, {}) overlap", .first.0, .first.1, .second.0, .second.1)]
    Overlap {
        first: (usize, usize),
        second: (usize, usize),
    },
    #[error("span ({start}, {end}) surface {surface:?} does not match the text")]
    SurfaceMismatch {
        start: usize,
        end: usize,
        surface: String,
    },
    #[error("unknown tag {tag:?} at character {position}")]
    UnknownTag { tag: String, position: usize },
    #[error("tag {found:?} at character {position} does not close {expected:?}")]
    MismatchedTag {
        expected: String,
        found: String,
        position: usize,
    },
    #[error("closing tag {tag:?} at character {position} has no opening tag")]
    UnopenedTag { tag: String, position: usize },
    #[error("tag {tag:?} opened at character {position} is never closed")]
    UnclosedTag { tag: String, position: usize },
    #[error("tag {tag:?} at character {position} is nested inside another tag")]
    NestedTag { tag: String, position: usize },
    #[error("tag {tag:?} at character {position} lacks its padding space")]
    MissingPadding { tag: String, position: usize },
}

/// Checks bounds, surfaces and non-overlap; returns the spans sorted by start.
pub fn validate_spans(text: &str, spans: &[EntitySpan]) -> Result<Vec<EntitySpan>, EntityError> {
    let chars: Vec<char> = text.chars().collect();
    let mut sorted = spans.to_vec();
    sorted.sort_by_key(|s| (s.start, s.end));
    for s in &sorted {
        if s.start >= s.end || s.end > chars.len() {
            return Err(EntityError::OutOfRange {
                start: s.start,
                end: s.end,
                len: chars.len(),
            });
        }
        if !chars[s.start..s.end].iter().copied().eq(s.surface.chars()) {
            return Err(EntityError::SurfaceMismatch {
                start: s.start,
                end: s.end,
                surface: s.surface.clone(),
            });
        }
    }
    for pair in sorted.windows(2) {
        if pair[1].start < pair[0].end {
            return Err(EntityError::Overlap {
                first: (pair[0].start, pair[0].end),
                second: (pair[1].start, pair[1].end),
            });
        }
    }
    Ok(sorted)
}

const STATUTE_ABBREVIATION: &str = r"\p{Lu}[\p{L}]*\p{Lu}[\p{L}]*";

static STATUTE_CITATION: LazyLock<Regex> = LazyLock::new(|| {
    let number = r"\d+\s?[a-z]?";
    let pattern = format!(
        r"§§?\s*{number}(?:\s*(?:,|und|bis|-|–)\s*{number})*(?:\s+(?:Abs\.|Satz|S\.|Nr\.|Halbsatz|Hs\.|Alt\.|lit\.|Buchst\.)\s*(?:{number}|[a-z]\b)(?:\s*(?:,|und|bis)\s*{number})*)*\s+{STATUTE_ABBREVIATION}\b"
    );
    Regex::new(&pattern).expect("statute pattern")
});

static DECISION_CITATION: LazyLock<Regex> = LazyLock::new(|| {
    let court = r"(?:BGH|BVerfG|BVerwG|BAG|BSG|BFH|EuGH|BPatG|KG|(?:OLG|LG|AG|LAG|OVG|VGH|VG)\s+\p{Lu}[\p{L}-]+)";
    let kind = r"(?:Urteil|Beschluss|Versäumnisurteil|Teilurteil|Hinweisbeschluss|Vorlagebeschluss)";
    let month = r"(?:Januar|Februar|März|April|Mai|Juni|Juli|August|September|Oktober|November|Dezember)";
    let date = format!(r"vom\s+\d{{1,2}}\.\s*(?:\d{{1,2}}\.\s*\d{{4}}|{month}\s+\d{{4}})");
    let docket = r"(?:[IVX]+[a-z]?|\d+)\s+[A-Z][A-Za-z]*(?:\s+\([A-Za-z]+\))?\s+\d+/\d{2,4}";
    let pattern = format!(
        r"{court},?\s+{kind}\s+(?:{date}(?:\s*[-–,]\s*{docket})?|{docket})|BGHZ\s+\d+,\s*\d+(?:,\s*\d+)?"
    );
    Regex::new(&pattern).expect("decision pattern")
});

fn byte_to_char_offsets(text: &str) -> HashMap<usize, usize> {
    let mut map: HashMap<usize, usize> = text.char_indices().enumerate().map(|(ci, (bi, _))| (bi, ci)).collect();
    map.insert(text.len(), text.chars().count());
    map
}

/// Pattern detector for statute citations (GS) and court-decision
/// citations (RS). Overlaps are resolved leftmost-longest.
pub fn detect_entities(text: &str) -> Vec<EntitySpan> {
    let mut candidates: Vec<(usize, usize, EntityKind)> = Vec::new();
    for (re, kind) in [(&*STATUTE_CITATION, EntityKind::GS), (&*DECISION_CITATION, EntityKind::RS)] {
        for m in re.find_iter(text) {
            candidates.push((m.start(), m.end(), kind.clone()));
        }
    }
    candidates.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
    let offsets = byte_to_char_offsets(text);
    let mut spans = Vec::new();
    let mut last_end = 0;
    for (start, end, kind) in candidates {
        if start < last_end {
            continue;
        }
        last_end = end;
        spans.push(EntitySpan {
            start: offsets[&start],
            end: offsets[&end],
            kind,
            surface: text[start..end].to_string(),
        });
    }
    spans
}

/// Wraps every span as `<KIND> surface </KIND>`. Text outside the spans is
/// copied unchanged.
pub fn enrich(text: &str, spans: &[EntitySpan]) -> Result<String, EntityError> {
    let sorted = validate_spans(text, spans)?;
    let mut byte_of: Vec<usize> = text.char_indices().map(|(b, _)| b).collect();
    byte_of.push(text.len());
    let mut out = text.to_string();
    for span in sorted.iter().rev() {
        out.insert_str(byte_of[span.end], &format!(" {}", span.kind.close_tag()));
        out.insert_str(byte_of[span.start], &format!("{} ", span.kind.open_tag()));
    }
    Ok(out)
}

static TAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^<(/?)([A-Z][A-Z0-9_]*)>").expect("tag pattern"));

/// Inverse of [`enrich`]: removes tags of the given vocabulary and returns the
/// plain text with the spans they delimited.
///
/// `<` not starting an uppercase tag is ordinary text. Tags outside the
/// vocabulary, unbalanced or nested tags are errors carrying the character
/// position in `tagged`.
pub fn strip_tags(tagged: &str, vocabulary: &[EntityKind]) -> Result<(String, Vec<EntitySpan>), EntityError> {
    let mut text = String::with_capacity(tagged.len());
    let mut text_chars = 0usize;
    let mut spans = Vec::new();
    let mut open: Option<(EntityKind, usize, usize, usize)> = None; // kind, char pos in tagged, text start char, text start byte
    let mut rest = tagged;
    let mut position = 0usize;
    while let Some(c) = rest.chars().next() {
        if c == '<' {
            if let Some(caps) = TAG.captures(rest) {
                let whole = caps.get(0).unwrap().as_str();
                let closing = !caps[1].is_empty();
                let name = &caps[2];
                let Some(kind) = vocabulary.iter().find(|k| k.as_str() == name).cloned() else {
                    return Err(EntityError::UnknownTag {
                        tag: whole.to_string(),
                        position,
                    });
                };
                if closing {
                    let Some((open_kind, _, start_char, start_byte)) = open.take() else {
                        return Err(EntityError::UnopenedTag {
                            tag: whole.to_string(),
                            position,
                        });
                    };
                    if open_kind != kind {
                        return Err(EntityError::MismatchedTag {
                            expected: open_kind.close_tag(),
                            found: whole.to_string(),
                            position,
                        });
                    }
                    if !text.ends_with(' ') || text.len() <= start_byte {
                        return Err(EntityError::MissingPadding {
                            tag: whole.to_string(),
                            position,
                        });
                    }
                    text.pop();
                    text_chars -= 1;
                    if text_chars == start_char {
                        return Err(EntityError::MissingPadding {
                            tag: whole.to_string(),
                            position,
                        });
                    }
                    spans.push(EntitySpan {
                        start: start_char,
                        end: text_chars,
                        kind,
                        surface: text[start_byte..].to_string(),
                    });
                } else {
                    if open.is_some() {
                        return Err(EntityError::NestedTag {
                            tag: whole.to_string(),
                            position,
                        });
                    }
                    let after = &rest[whole.len()..];
                    if !after.starts_with(' ') {
                        return Err(EntityError::MissingPadding {
                            tag: whole.to_string(),
                            position,
                        });
                    }
                    open = Some((kind, position, text_chars, text.len()));
                    rest = &after[1..];
                    position += whole.chars().count() + 1;
                    continue;
                }
                rest = &rest[whole.len()..];
                position += whole.chars().count();
                continue;
            }
        }
        text.push(c);
        text_chars += 1;
        rest = &rest[c.len_utf8()..];
        position += 1;
    }
    if let Some((kind, pos, _, _)) = open {
        return Err(EntityError::UnclosedTag {
            tag: kind.open_tag(),
            position: pos,
        });
    }
    Ok((text, spans))
}

#[derive(Debug, Deserialize)]
struct RawSpan {
    start: usize,
    end: usize,
    kind: String,
}

#[derive(Debug, Deserialize)]
struct RawSpanRecord {
    id: String,
    #[serde(default)]
    spans: Vec<RawSpan>,
}

/// Validated spans per document plus per-document failures.
#[derive(Debug, Default)]
pub struct ImportedSpans {
    pub spans: BTreeMap<String, Vec<EntitySpan>>,
    pub errors: Vec<SpanImportError>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SpanImportError {
    /// Document id, or `line N` when the record itself could not be parsed.
    pub document: String,
    pub message: String,
}

/// Reads span JSONL (`{"id", "spans": [{"start", "end", "kind"}]}`) and
/// validates each document's spans against its text.
pub fn import_spans<R: BufRead>(reader: R, documents: &BTreeMap<String, String>) -> std::io::Result<ImportedSpans> {
    let mut imported = ImportedSpans::default();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: RawSpanRecord = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                imported.errors.push(SpanImportError {
                    document: format!("line {}", lineno + 1),
                    message: e.to_string(),
                });
                continue;
            }
        };
        let Some(text) = documents.get(&record.id) else {
            imported.errors.push(SpanImportError {
                document: record.id,
                message: "unknown document".into(),
            });
            continue;
        };
        match build_spans(text, &record.spans) {
            Ok(spans) => {
                imported.spans.insert(record.id, spans);
            }
            Err(e) => imported.errors.push(SpanImportError {
                document: record.id,
                message: e.to_string(),
            }),
        }
    }
    Ok(imported)
}

fn build_spans(text: &str, raw: &[RawSpan]) -> Result<Vec<EntitySpan>, EntityError> {
    let spans = raw
        .iter()
        .map(|r| EntitySpan::over(text, r.start, r.end, EntityKind::new(&r.kind)?))
        .collect::<Result<Vec<_>, _>>()?;
    validate_spans(text, &spans)
}

fn normalize_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityAudit {
    pub generated_entities: Vec<EntitySpan>,
    pub supported: usize,
    pub unsupported: Vec<String>,
    /// `supported / total`, 1.0 when nothing was generated.
    pub support_rate: f64,
}

/// Detects entities of the given kinds in `summary` and checks each against
/// `source`: an entity is supported when its whitespace-normalized surface
/// occurs in the whitespace-normalized source.
pub fn audit_hallucinations(summary: &str, source: &str, kinds: &[EntityKind]) -> EntityAudit {
    let source = normalize_whitespace(source);
    let generated: Vec<EntitySpan> = detect_entities(summary)
        .into_iter()
        .filter(|s| kinds.contains(&s.kind))
        .collect();
    let mut supported = 0;
    let mut unsupported = Vec::new();
    for span in &generated {
        if source.contains(&normalize_whitespace(&span.surface)) {
            supported += 1;
        } else {
            unsupported.push(span.surface.clone());
        }
    }
    let support_rate = if generated.is_empty() {
        1.0
    } else {
        supported as f64 / generated.len() as f64
    };
    EntityAudit {
        generated_entities: generated,
        supported,
        unsupported,
        support_rate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Vec<EntityKind> {
        EntityKind::DEFAULT_VOCABULARY.to_vec()
    }

    #[test]
    fn detects_simple_statute() {
        let spans = detect_entities("Nach § 125 BGB ist der Vertrag nichtig.");
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].surface, "§ 125 BGB");
        assert_eq!(spans[0].kind, EntityKind::GS);
        assert_eq!((spans[0].start, spans[0].end), (5, 14));
        assert!(detect_entities("Guten Morgen").is_empty());
    }

    #[test]
    fn statute_chain_is_one_span() {
        let spans = detect_entities("§ 307 Abs. 1 Satz 2 BGB");
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].surface, "§ 307 Abs. 1 Satz 2 BGB");
        let spans = detect_entities("gemäß §§ 823, 826 BGB sowie § 5a Abs. 2 Nr. 3 UWG");
        let surfaces: Vec<_> = spans.iter().map(|s| s.surface.as_str()).collect();
        assert_eq!(surfaces, ["§§ 823, 826 BGB", "§ 5a Abs. 2 Nr. 3 UWG"]);
    }

    #[test]
    fn detects_court_decisions() {
        let text = "Vgl. BGH, Urteil vom 12. März 2020 - VIII ZR 123/19, und BGHZ 123, 45 sowie OLG Köln, Beschluss vom 1.2.2019.";
        let spans = detect_entities(text);
        let surfaces: Vec<_> = spans.iter().map(|s| s.surface.as_str()).collect();
        assert_eq!(
            surfaces,
            [
                "BGH, Urteil vom 12. März 2020 - VIII ZR 123/19",
                "BGHZ 123, 45",
                "OLG Köln, Beschluss vom 1.2.2019"
            ]
        );
        assert!(spans.iter().all(|s| s.kind == EntityKind::RS));
    }

    #[test]
    fn enrich_example() {
        let text = "§ 125 BGB";
        let spans = vec![EntitySpan::over(text, 0, 9, EntityKind::GS).unwrap()];
        assert_eq!(enrich(text, &spans).unwrap(), "<GS> § 125 BGB </GS>");
        assert_eq!(enrich("plain", &[]).unwrap(), "plain");
    }

    #[test]
    fn enrich_adjacent_spans() {
        let text = "abcd";
        let spans = vec![
            EntitySpan::over(text, 2, 4, EntityKind::RS).unwrap(),
            EntitySpan::over(text, 0, 2, EntityKind::GS).unwrap(),
        ];
        let tagged = enrich(text, &spans).unwrap();
        assert_eq!(tagged, "<GS> ab </GS><RS> cd </RS>");
        let (plain, back) = strip_tags(&tagged, &vocab()).unwrap();
        assert_eq!(plain, text);
        assert_eq!(back.len(), 2);
    }

    #[test]
    fn enrich_rejects_invalid_spans() {
        let bad = EntitySpan {
            start: 0,
            end: 5,
            kind: EntityKind::GS,
            surface: "abcde".into(),
        };
        assert!(matches!(enrich("abcd", &[bad]), Err(EntityError::OutOfRange { .. })));
    }

    #[test]
    fn strip_examples() {
        let (text, spans) = strip_tags("<GS> § 125 BGB </GS>", &vocab()).unwrap();
        assert_eq!(text, "§ 125 BGB");
        assert_eq!(spans, vec![EntitySpan::over("§ 125 BGB", 0, 9, EntityKind::GS).unwrap()]);
        let (text, spans) = strip_tags("kein Tag a < b", &vocab()).unwrap();
        assert_eq!(text, "kein Tag a < b");
        assert!(spans.is_empty());
    }

    #[test]
    fn strip_errors() {
        let v = vocab();
        assert!(matches!(strip_tags("<GS> x </RS>", &v), Err(EntityError::MismatchedTag { position: 7, .. })));
        assert!(matches!(strip_tags("<GS> x", &v), Err(EntityError::UnclosedTag { .. })));
        assert!(matches!(strip_tags("x </GS>", &v), Err(EntityError::UnopenedTag { .. })));
        assert!(matches!(strip_tags("<FOO> x </FOO>", &v), Err(EntityError::UnknownTag { .. })));
        assert!(matches!(strip_tags("<GS> <RS> x </RS> </GS>", &v), Err(EntityError::NestedTag { .. })));
        assert!(matches!(strip_tags("<GS>x </GS>", &v), Err(EntityError::MissingPadding { .. })));
    }

    #[test]
    fn vocabulary_export() {
        let tags = tag_vocabulary(&[EntityKind::GS, EntityKind::RS]);
        assert_eq!(tags, ["<GS>", "</GS>", "<RS>", "</RS>"]);
        assert!(EntityKind::new("gs").is_err());
        assert!(EntityKind::new("").is_err());
        assert_eq!(EntityKind::new("NORM_2").unwrap().as_str(), "NORM_2");
    }

    #[test]
    fn import_validates_per_document() {
        let docs: BTreeMap<String, String> = [("a", "abcd"), ("b", "abcdefgh"), ("c", "xyz")]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        let input = r#"{"id":"a","spans":[{"start":0,"end":5,"kind":"GS"}]}
{"id":"b","spans":[{"start":0,"end":3,"kind":"GS"},{"start":2,"end":6,"kind":"RS"}]}
{"id":"c","spans":[]}
"#;
        let imported = import_spans(input.as_bytes(), &docs).unwrap();
        assert_eq!(imported.spans.len(), 1);
        assert!(imported.spans["c"].is_empty());
        assert_eq!(imported.errors.len(), 2);
        assert_eq!(imported.errors[0].document, "a");
        assert!(imported.errors[0].message.contains("out of range"));
        assert_eq!(imported.errors[1].document, "b");
        assert_eq!(imported.errors[1].message, "spans (0, 3) and (2, 6) overlap");
    }

    #[test]
    fn audit_examples() {
        let kinds = [EntityKind::GS, EntityKind::RS];
        let a = audit_hallucinations("Der Vertrag ist nach § 125 BGB nichtig.", "… wegen  §   125 BGB …", &kinds);
        assert_eq!(a.support_rate, 1.0);
        assert_eq!(a.supported, 1);

        let a = audit_hallucinations("Keine Normen.", "egal", &kinds);
        assert_eq!(a.support_rate, 1.0);
        assert!(a.generated_entities.is_empty() && a.unsupported.is_empty());

        let a = audit_hallucinations("Nach § 999 XYZ gilt das.", "§ 125 BGB", &kinds);
        assert_eq!(a.unsupported, ["§ 999 XYZ"]);
        assert_eq!(a.support_rate, 0.0);
    }
}
