//! Tokenization, sentence segmentation and n-gram counting tuned for German
//! legal prose, plus the token-counting contract used for length budgets.
//!
//! All offsets are character (Unicode scalar) offsets into the source text,
//! end-exclusive.

use std::collections::HashMap;
use std::hash::Hash;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::http::{HttpError, JsonEndpoint};

const DEFAULT_ABBREVIATIONS: &str = include_str!("../data/abbreviations.txt");

const MONTHS: [&str; 12] = [
    "januar",
    "februar",
    "märz",
    "april",
    "mai",
    "juni",
    "juli",
    "august",
    "september",
    "oktober",
    "november",
    "dezember",
];

#[derive(Debug, Error)]
pub enum TextError {
    #[error("n-gram order must be at least 1")]
    ZeroOrder,
    #[error("failed to read abbreviation list {path}: {source}")]
    AbbreviationFile {
        path: String,
        source: std::io::Error,
    },
}

/// Lowercased tokens with the source span each one came from.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenStream {
    pub tokens: Vec<String>,
    pub offsets: Vec<(usize, usize)>,
}

impl TokenStream {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Tokens joined by single spaces.
    pub fn joined(&self) -> String {
        self.tokens.join(" ")
    }

    /// True if at least one token starts with a letter or digit.
    pub fn has_words(&self) -> bool {
        self.tokens
            .iter()
            .any(|t| t.chars().next().is_some_and(char::is_alphanumeric))
    }
}

fn joins_numeral(c: char) -> bool {
    matches!(c, '.' | ',' | '/')
}

/// Splits `text` into lowercased tokens.
///
/// Words are runs of letters and digits; a hyphen between two alphanumerics
/// stays inside the word, and `.`, `,` or `/` between two digits keeps
/// numerals such as `1.000`, `2,5` or docket numbers like `123/20` whole.
/// Runs of `§` form their own token. Every other non-space character is a
/// single punctuation token.
pub fn tokenize(text: &str) -> TokenStream {
    let chars: Vec<char> = text.chars().collect();
    let mut stream = TokenStream::default();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c == '§' {
            while i < chars.len() && chars[i] == '§' {
                i += 1;
            }
        } else if c.is_alphanumeric() {
            i += 1;
            while i < chars.len() {
                let cur = chars[i];
                if cur.is_alphanumeric() {
                    i += 1;
                    continue;
                }
                let next = chars.get(i + 1).copied();
                let prev = chars[i - 1];
                let glue = match next {
                    Some(n) if joins_numeral(cur) => prev.is_ascii_digit() && n.is_ascii_digit(),
                    Some(n) if cur == '-' => prev.is_alphanumeric() && n.is_alphanumeric(),
                    _ => false,
                };
                if glue {
                    i += 2;
                } else {
                    break;
                }
            }
        } else {
            i += 1;
        }
        let token: String = chars[start..i].iter().collect::<String>().to_lowercase();
        stream.tokens.push(token);
        stream.offsets.push((start, i));
    }
    stream
}

/// One sentence with its character span in the source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceList {
    pub sentences: Vec<Sentence>,
}

impl SentenceList {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Sentence> {
        self.sentences.iter()
    }
}

/// Abbreviations after which a period does not end a sentence.
///
/// Entries are matched case-insensitively and with whitespace ignored, so
/// `z. B.` also covers `z.B.`. An entry without a trailing period (such as a
/// reporter name) matches when directly followed by one.
#[derive(Debug, Clone)]
pub struct AbbreviationList {
    entries: Vec<Vec<char>>,
}

impl Default for AbbreviationList {
    fn default() -> Self {
        Self::parse(DEFAULT_ABBREVIATIONS)
    }
}

impl AbbreviationList {
    /// One entry per line; blank lines and lines starting with `#` are ignored.
    pub fn parse(source: &str) -> Self {
        let entries = source
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| {
                let mut key: Vec<char> = l
                    .chars()
                    .filter(|c| !c.is_whitespace())
                    .flat_map(char::to_lowercase)
                    .collect();
                if key.last() != Some(&'.') {
                    key.push('.');
                }
                key
            })
            .collect();
        AbbreviationList { entries }
    }

    pub fn from_file(path: &Path) -> Result<Self, TextError> {
        let source = std::fs::read_to_string(path).map_err(|source| TextError::AbbreviationFile {
            path: path.display().to_string(),
            source,
        })?;
        Ok(Self::parse(&source))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Does the text ending at `period` (inclusive) end with a listed abbreviation?
    fn ends_abbreviation(&self, chars: &[char], period: usize) -> bool {
        'entries: for entry in &self.entries {
            let mut pos = period as isize;
            for &expected in entry.iter().rev() {
                while pos >= 0 && chars[pos as usize].is_whitespace() {
                    pos -= 1;
                }
                if pos < 0 {
                    continue 'entries;
                }
                let actual = chars[pos as usize];
                if !actual.to_lowercase().eq(std::iter::once(expected)) {
                    continue 'entries;
                }
                pos -= 1;
            }
            if pos < 0 || !chars[pos as usize].is_alphanumeric() {
                return true;
            }
        }
        false
    }
}

/// Abbreviation- and citation-aware sentence splitter.
#[derive(Debug, Clone, Default)]
pub struct SentenceSplitter {
    abbreviations: AbbreviationList,
}

fn is_closing_quote(c: char) -> bool {
    matches!(c, '"' | '\'' | '“' | '”' | '»' | '«' | '’')
}

fn opens_sentence(c: char) -> bool {
    c.is_uppercase() || c == '§' || matches!(c, '„' | '"' | '»' | '«')
}

impl SentenceSplitter {
    pub fn new(abbreviations: AbbreviationList) -> Self {
        SentenceSplitter { abbreviations }
    }

    /// Splits at `.`, `!` or `?` followed by whitespace and an uppercase
    /// letter, a `§` or an opening quote. Periods closing a listed
    /// abbreviation, periods inside parentheses or brackets, and ordinal
    /// numbers in dates (`12. März`) never split.
    pub fn split(&self, text: &str) -> SentenceList {
        let chars: Vec<char> = text.chars().collect();
        let mut boundaries: Vec<(usize, usize)> = Vec::new();
        let mut depth: usize = 0;
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            match c {
                '(' | '[' => depth += 1,
                ')' | ']' => depth = depth.saturating_sub(1),
                _ => {}
            }
            if depth > 0 || !matches!(c, '.' | '!' | '?') {
                i += 1;
                continue;
            }
            let mut end = i + 1;
            while end < chars.len() && (matches!(chars[end], '.' | '!' | '?' | '…') || is_closing_quote(chars[end])) {
                end += 1;
            }
            if end >= chars.len() || !chars[end].is_whitespace() {
                i = end;
                continue;
            }
            let mut next = end;
            while next < chars.len() && chars[next].is_whitespace() {
                next += 1;
            }
            if next >= chars.len() || !opens_sentence(chars[next]) {
                i = end;
                continue;
            }
            if c == '.' && (self.abbreviations.ends_abbreviation(&chars, i) || is_date_ordinal(&chars, i, next)) {
                i = end;
                continue;
            }
            boundaries.push((end, next));
            i = next;
        }

        let mut sentences = Vec::new();
        let mut start = 0;
        let mut push = |from: usize, to: usize| {
            let mut s = from;
            while s < to && chars[s].is_whitespace() {
                s += 1;
            }
            let mut e = to;
            while e > s && chars[e - 1].is_whitespace() {
                e -= 1;
            }
            if s < e {
                sentences.push(Sentence {
                    text: chars[s..e].iter().collect(),
                    start: s,
                    end: e,
                });
            }
        };
        for (end, next) in boundaries {
            push(start, end);
            start = next;
        }
        push(start, chars.len());
        SentenceList { sentences }
    }
}

fn is_date_ordinal(chars: &[char], period: usize, next: usize) -> bool {
    if period == 0 || !chars[period - 1].is_ascii_digit() {
        return false;
    }
    let word: String = chars[next..]
        .iter()
        .take_while(|c| c.is_alphabetic())
        .flat_map(|c| c.to_lowercase())
        .collect();
    MONTHS.contains(&word.as_str())
}

/// Splits with the bundled abbreviation list.
pub fn split_sentences(text: &str) -> SentenceList {
    SentenceSplitter::default().split(text)
}

/// Counts every window of `n` consecutive items.
///
/// The total multiplicity is always `max(0, len − n + 1)`.
pub fn ngrams<T: Eq + Hash>(tokens: &[T], n: usize) -> Result<HashMap<&[T], usize>, TextError> {
    if n == 0 {
        return Err(TextError::ZeroOrder);
    }
    let mut counts: HashMap<&[T], usize> = HashMap::new();
    for window in tokens.windows(n) {
        *counts.entry(window).or_default() += 1;
    }
    Ok(counts)
}

#[derive(Debug, Error)]
pub enum CountError {
    #[error(transparent)]
    Http(#[from] HttpError),
    #[error("tokenizer service returned {got} counts for {expected} texts")]
    CountMismatch { expected: usize, got: usize },
}

/// Measures text length in tokens of some tokenizer.
///
/// Counts are non-negative and nearly subadditive:
/// `count(a + b) <= count(a) + count(b) + concat_slack()`.
pub trait TokenCounter: Send + Sync {
    fn count(&self, text: &str) -> Result<usize, CountError>;

    fn count_many(&self, texts: &[&str]) -> Result<Vec<usize>, CountError> {
        texts.iter().map(|t| self.count(t)).collect()
    }

    fn concat_slack(&self) -> usize;
}

/// Counts [`tokenize`] tokens. Concatenation can only merge tokens, so the
/// slack is zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct WordCounter;

impl TokenCounter for WordCounter {
    fn count(&self, text: &str) -> Result<usize, CountError> {
        Ok(tokenize(text).len())
    }

    fn concat_slack(&self) -> usize {
        0
    }
}

#[derive(Serialize)]
struct CountRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct CountResponse {
    counts: Vec<usize>,
}

/// Client for an external tokenizer service (`POST /count`).
///
/// Subword tokenizers may add a boundary token at a join, hence a slack of 1.
#[derive(Debug, Clone)]
pub struct ServiceCounter {
    endpoint: JsonEndpoint,
}

impl ServiceCounter {
    pub fn new(base_url: impl Into<String>) -> Self {
        ServiceCounter {
            endpoint: JsonEndpoint::new(base_url, Duration::from_secs(60)),
        }
    }

    pub fn with_endpoint(endpoint: JsonEndpoint) -> Self {
        ServiceCounter { endpoint }
    }
}

impl TokenCounter for ServiceCounter {
    fn count(&self, text: &str) -> Result<usize, CountError> {
        Ok(self.count_many(&[text])?[0])
    }

    fn count_many(&self, texts: &[&str]) -> Result<Vec<usize>, CountError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let response: CountResponse = self.endpoint.post("/count", &CountRequest { texts })?;
        if response.counts.len() != texts.len() {
            return Err(CountError::CountMismatch {
                expected: texts.len(),
                got: response.counts.len(),
            });
        }
        Ok(response.counts)
    }

    fn concat_slack(&self) -> usize {
        1
    }
}

/// Counts `text` with `counter`; the empty string is 0 under every counter.
pub fn count_tokens(text: &str, counter: &dyn TokenCounter) -> Result<usize, CountError> {
    if text.is_empty() {
        return Ok(0);
    }
    counter.count(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(text: &str) -> Vec<String> {
        tokenize(text).tokens
    }

    #[test]
    fn tokenize_basic_sentence() {
        assert!(toks("").is_empty());
        assert_eq!(toks("Der Kläger klagt."), ["der", "kläger", "klagt", "."]);
    }

    #[test]
    fn tokenize_keeps_paragraph_sign_and_numerals() {
        assert_eq!(toks("§ 125 BGB"), ["§", "125", "bgb"]);
        assert_eq!(toks("§§ 823, 826 BGB"), ["§§", "823", ",", "826", "bgb"]);
        assert_eq!(toks("VIII ZR 123/20"), ["viii", "zr", "123/20"]);
        assert_eq!(toks("1.000,50 Euro"), ["1.000,50", "euro"]);
        assert_eq!(toks("Schadensersatz-Anspruch."), ["schadensersatz-anspruch", "."]);
    }

    #[test]
    fn tokenize_offsets_point_into_source() {
        let text = "Über § 5a (neu)";
        let stream = tokenize(text);
        let chars: Vec<char> = text.chars().collect();
        for (tok, &(s, e)) in stream.tokens.iter().zip(&stream.offsets) {
            let src: String = chars[s..e].iter().collect();
            assert_eq!(&src.to_lowercase(), tok);
        }
        assert_eq!(stream.offsets[0], (0, 4));
    }

    #[test]
    fn plain_split() {
        let s = split_sentences("Das gilt. Das auch.");
        assert_eq!(s.len(), 2);
        assert_eq!(s.sentences[0].text, "Das gilt.");
        assert_eq!(s.sentences[1].text, "Das auch.");
        assert_eq!((s.sentences[1].start, s.sentences[1].end), (10, 19));
    }

    #[test]
    fn no_split_after_abbreviation() {
        assert_eq!(split_sentences("Nach § 125 Abs. 2 BGB gilt dies.").len(), 1);
        assert_eq!(split_sentences("Dies gilt u. a. Für Kaufleute.").len(), 1);
        assert_eq!(split_sentences("So z.B. Der Vermieter.").len(), 1);
        assert_eq!(split_sentences("Vgl. BGHZ 12, 3 ff. Maßgeblich ist das.").len(), 1);
    }

    #[test]
    fn split_after_parenthesized_citation_only() {
        let s = split_sentences("Er zahlt (vgl. BGH, Urteil). Sie nicht.");
        assert_eq!(s.len(), 2);
        assert_eq!(s.sentences[0].text, "Er zahlt (vgl. BGH, Urteil).");
        let s = split_sentences("Er zahlt (so BGH. Der Senat). Sie nicht.");
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn no_split_inside_dates() {
        assert_eq!(split_sentences("Urteil vom 12. März 2020 ist rechtskräftig.").len(), 1);
    }

    #[test]
    fn split_on_lowercase_continuation_is_suppressed() {
        assert_eq!(split_sentences("Es gilt Nr. 3. und mehr.").len(), 1);
    }

    #[test]
    fn abbreviation_list_parse_and_size() {
        let list = AbbreviationList::default();
        assert!(list.len() >= 10);
        let custom = AbbreviationList::parse("# comment\n\nXYZ\n");
        assert_eq!(custom.len(), 1);
        let splitter = SentenceSplitter::new(custom);
        assert_eq!(splitter.split("Siehe XYZ. Das gilt.").len(), 1);
        assert_eq!(splitter.split("Siehe Abs. Das gilt.").len(), 2);
    }

    #[test]
    fn ngram_examples() {
        let a = ["a", "b", "c"];
        let bi = ngrams(&a, 2).unwrap();
        assert_eq!(bi.len(), 2);
        assert_eq!(bi[&a[0..2]], 1);
        assert_eq!(bi[&a[1..3]], 1);
        let aaa = ["a", "a", "a"];
        let bi = ngrams(&aaa, 2).unwrap();
        assert_eq!(bi.len(), 1);
        assert_eq!(bi[&aaa[0..2]], 2);
        assert!(ngrams(&["a", "b", "c", "d"], 5).unwrap().is_empty());
        assert!(matches!(ngrams(&a, 0), Err(TextError::ZeroOrder)));
    }

    #[test]
    fn word_counter_matches_tokenize() {
        assert_eq!(count_tokens("", &WordCounter).unwrap(), 0);
        assert_eq!(count_tokens("der kläger klagt .", &WordCounter).unwrap(), 4);
    }
}
