//! Headline ingestion and text normalization.
//!
//! Raw records arrive as JSON Lines or CSV (`outlet,date,title`). Each title is
//! lowercased and split into tokens, stopwords are removed and the survivors
//! are lemmatized with a small rule-based lemmatizer. The result is a
//! [`Headline`]: outlet, calendar year and the normalized token sequence.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Read};
use std::ops::RangeInclusive;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Stoplist shipped with the crate (one token per line).
pub const DEFAULT_STOPLIST: &str = include_str!("../data/stopwords_en.txt");
/// Lemma exceptions shipped with the crate (`surface<TAB>lemma`).
pub const DEFAULT_LEMMA_EXCEPTIONS: &str = include_str!("../data/lemma_exceptions.tsv");

/// Default skip-fraction limit for malformed rows.
/// The nine national outlets with their leaning group.
pub const DEFAULT_OUTLETS: &str = include_str!("../data/outlets.toml");

pub const DEFAULT_MAX_SKIP_FRACTION: f64 = 0.01;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read input stream: {0}")]
    Io(#[from] std::io::Error),
    #[error("input is not valid CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("{skipped} of {total} rows are malformed ({:.2}% > limit {:.2}%)", 100.0 * *skipped as f64 / *total as f64, 100.0 * limit)]
    TooManyMalformed { skipped: usize, total: usize, limit: f64 },
    #[error("unknown outlet(s): {}", .0.join(", "))]
    UnknownOutlets(Vec<String>),
    #[error("outlet config: {0}")]
    OutletConfig(String),
    #[error("stoplist line {line}: {reason}")]
    Stoplist { line: usize, reason: String },
    #[error("lemma exceptions line {line}: {reason}")]
    LemmaRules { line: usize, reason: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    JsonLines,
    Csv,
}

impl InputFormat {
    /// Guesses the format from a file extension; anything but `.csv` is JSONL.
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => InputFormat::Csv,
            _ => InputFormat::JsonLines,
        }
    }
}

impl FromStr for InputFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "jsonlines" | "json" => Ok(InputFormat::JsonLines),
            "csv" => Ok(InputFormat::Csv),
            other => Err(format!("unknown input format `{other}` (expected jsonl or csv)")),
        }
    }
}

/// One outlet-attributed, dated, unprocessed headline.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawRecord {
    pub outlet: String,
    pub date: NaiveDate,
    pub title: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Leaning {
    Left,
    Central,
    Right,
}

impl Leaning {
    pub fn as_str(self) -> &'static str {
        match self {
            Leaning::Left => "left",
            Leaning::Central => "central",
            Leaning::Right => "right",
        }
    }
}

impl fmt::Display for Leaning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Leaning {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "left" => Ok(Leaning::Left),
            "central" | "center" | "centre" => Ok(Leaning::Central),
            "right" => Ok(Leaning::Right),
            other => Err(format!("unknown leaning `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutletInfo {
    pub name: String,
    pub leaning: Leaning,
}

/// Ordered, name-unique outlet list. Order is the column order of every table.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct OutletSet {
    outlets: Vec<OutletInfo>,
}

#[derive(Deserialize)]
struct OutletFile {
    #[serde(alias = "outlets")]
    outlet: Vec<OutletInfo>,
}

impl OutletSet {
    pub fn new(outlets: Vec<OutletInfo>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::new();
        for o in &outlets {
            if o.name.trim().is_empty() {
                return Err(CorpusError::OutletConfig("empty outlet name".into()));
            }
            if !seen.insert(o.name.as_str()) {
                return Err(CorpusError::OutletConfig(format!("duplicate outlet `{}`", o.name)));
            }
        }
        Ok(Self { outlets })
    }

    /// Parses an outlet file. JSON (a list, or an object with an `outlet`
    /// array) is detected by a leading `[` or `{`; anything else is read as
    /// TOML with `[[outlet]]` tables.
    pub fn parse(text: &str) -> Result<Self, CorpusError> {
        let trimmed = text.trim_start();
        let outlets = if trimmed.starts_with('[') && !trimmed.starts_with("[[") {
            serde_json::from_str::<Vec<OutletInfo>>(text)
                .map_err(|e| CorpusError::OutletConfig(e.to_string()))?
        } else if trimmed.starts_with('{') {
            serde_json::from_str::<OutletFile>(text)
                .map_err(|e| CorpusError::OutletConfig(e.to_string()))?
                .outlet
        } else {
            toml::from_str::<OutletFile>(text)
                .map_err(|e| CorpusError::OutletConfig(e.to_string()))?
                .outlet
        };
        Self::new(outlets)
    }

    pub fn default_nine() -> Self {
        Self::parse(DEFAULT_OUTLETS).expect("bundled outlet list is valid")
    }

    pub fn to_toml(&self) -> String {
        let mut out = String::new();
        for o in &self.outlets {
            out.push_str(&format!("[[outlet]]\nname = \"{}\"\nleaning = \"{}\"\n\n", o.name, o.leaning));
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = &OutletInfo> {
        self.outlets.iter()
    }

    pub fn names(&self) -> Vec<String> {
        self.outlets.iter().map(|o| o.name.clone()).collect()
    }

    pub fn get(&self, name: &str) -> Option<&OutletInfo> {
        self.outlets.iter().find(|o| o.name == name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.get(name).is_some()
    }

    pub fn len(&self) -> usize {
        self.outlets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outlets.is_empty()
    }
}

/// A row that could not be turned into a [`RawRecord`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SkippedRow {
    /// 1-based physical line number (CSV: line where the record starts).
    pub line: u64,
    pub reason: String,
}

#[derive(Clone, Debug)]
pub struct IngestOptions {
    /// Records dated outside this inclusive range are filtered (not malformed).
    pub dates: Option<RangeInclusive<NaiveDate>>,
    pub max_skip_fraction: f64,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self { dates: None, max_skip_fraction: DEFAULT_MAX_SKIP_FRACTION }
    }
}

impl IngestOptions {
    pub fn for_years(years: &RangeInclusive<i32>) -> Self {
        let start = NaiveDate::from_ymd_opt(*years.start(), 1, 1);
        let end = NaiveDate::from_ymd_opt(*years.end(), 12, 31);
        Self {
            dates: start.zip(end).map(|(s, e)| s..=e),
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct IngestOutcome {
    pub records: Vec<RawRecord>,
    pub skipped: Vec<SkippedRow>,
    pub out_of_range: usize,
}

#[derive(Deserialize)]
struct WireRecord {
    outlet: String,
    date: String,
    title: String,
}

fn validate(wire: WireRecord) -> Result<RawRecord, String> {
    let outlet = wire.outlet.trim();
    if outlet.is_empty() {
        return Err("empty outlet".into());
    }
    let date = NaiveDate::parse_from_str(wire.date.trim(), "%Y-%m-%d")
        .map_err(|e| format!("bad date `{}`: {e}", wire.date))?;
    if wire.title.trim().is_empty() {
        return Err("empty title".into());
    }
    Ok(RawRecord { outlet: outlet.to_string(), date, title: wire.title })
}

/// Reads raw records from `source`, skipping (and logging) malformed rows.
pub fn ingest<R: Read>(source: R, format: InputFormat, opts: &IngestOptions) -> Result<IngestOutcome, CorpusError> {
    let mut outcome = IngestOutcome::default();
    let mut total = 0usize;
    let accept = |outcome: &mut IngestOutcome, line: u64, parsed: Result<RawRecord, String>| {
        match parsed {
            Ok(rec) => {
                if opts.dates.as_ref().is_some_and(|r| !r.contains(&rec.date)) {
                    outcome.out_of_range += 1;
                } else {
                    outcome.records.push(rec);
                }
            }
            Err(reason) => {
                log::warn!("skipping malformed row at line {line}: {reason}");
                outcome.skipped.push(SkippedRow { line, reason });
            }
        }
    };

    match format {
        InputFormat::JsonLines => {
            let reader = BufReader::new(source);
            for (idx, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                total += 1;
                let parsed = serde_json::from_str::<WireRecord>(&line)
                    .map_err(|e| e.to_string())
                    .and_then(validate);
                accept(&mut outcome, idx as u64 + 1, parsed);
            }
        }
        InputFormat::Csv => {
            let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(source);
            let headers = reader.headers()?.clone();
            let want = ["outlet", "date", "title"];
            if headers.len() != 3 || headers.iter().zip(want).any(|(h, w)| h.trim() != w) {
                if headers.is_empty() {
                    return Ok(outcome);
                }
                return Err(CorpusError::Io(std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!("CSV header must be `outlet,date,title`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")),
                )));
            }
            for row in reader.records() {
                total += 1;
                match row {
                    Ok(row) => {
                        let line = row.position().map_or(0, |p| p.line());
                        let parsed = if row.len() != 3 {
                            Err(format!("expected 3 fields, found {}", row.len()))
                        } else {
                            validate(WireRecord {
                                outlet: row[0].to_string(),
                                date: row[1].to_string(),
                                title: row[2].to_string(),
                            })
                        };
                        accept(&mut outcome, line, parsed);
                    }
                    Err(e) => {
                        if let csv::ErrorKind::Io(_) = e.kind() {
                            return Err(e.into());
                        }
                        let line = e.position().map_or(0, |p| p.line());
                        accept(&mut outcome, line, Err(e.to_string()));
                    }
                }
            }
        }
    }

    if total > 0 {
        let frac = outcome.skipped.len() as f64 / total as f64;
        if frac > opts.max_skip_fraction {
            return Err(CorpusError::TooManyMalformed {
                skipped: outcome.skipped.len(),
                total,
                limit: opts.max_skip_fraction,
            });
        }
    }
    Ok(outcome)
}

fn is_token_char(c: char) -> bool {
    (c.is_alphanumeric() && !c.is_uppercase()) || c == '\''
}

/// Lowercases `title` and splits it on every character that is not a letter,
/// digit or apostrophe. Apostrophes are trimmed from token edges and empty
/// fragments dropped.
pub fn tokenize(title: &str) -> Vec<String> {
    let lowered = title.replace(['\u{2019}', '\u{2018}'], "'").to_lowercase();
    lowered
        .split(|c: char| !is_token_char(c))
        .map(|frag| frag.trim_matches('\''))
        .filter(|frag| !frag.is_empty())
        .map(str::to_string)
        .collect()
}

/// Set of lowercase tokens to drop.
#[derive(Clone, Debug, Default)]
pub struct Stoplist {
    words: HashSet<String>,
}

impl Stoplist {
    /// One token per line; blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self, CorpusError> {
        let mut words = HashSet::new();
        for (idx, line) in text.lines().enumerate() {
            let word = line.trim();
            if word.is_empty() || word.starts_with('#') {
                continue;
            }
            if word.chars().any(char::is_whitespace) {
                return Err(CorpusError::Stoplist { line: idx + 1, reason: format!("`{word}` contains whitespace") });
            }
            if word.to_lowercase() != word {
                return Err(CorpusError::Stoplist { line: idx + 1, reason: format!("`{word}` is not lowercase") });
            }
            words.insert(word.to_string());
        }
        Ok(Self { words })
    }

    pub fn from_words<I: IntoIterator<Item = S>, S: Into<String>>(words: I) -> Self {
        Self { words: words.into_iter().map(Into::into).collect() }
    }

    pub fn english() -> Self {
        Self::parse(DEFAULT_STOPLIST).expect("bundled stoplist is valid")
    }

    pub fn contains(&self, token: &str) -> bool {
        self.words.contains(token)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

pub fn remove_stopwords(tokens: Vec<String>, stoplist: &Stoplist) -> Vec<String> {
    tokens.into_iter().filter(|t| !stoplist.contains(t)).collect()
}

/// Shortest lemma a suffix rule may produce.
pub const MIN_STEM_LEN: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Undouble {
    No,
    Yes,
}

#[derive(Clone, Debug)]
struct SuffixRule {
    suffix: &'static str,
    replacement: &'static str,
    /// The rule does not fire when the word ends with any of these.
    unless: &'static [&'static str],
    needs_vowel: bool,
    undouble: Undouble,
}

const SUFFIX_RULES: &[SuffixRule] = &[
    SuffixRule { suffix: "'s", replacement: "", unless: &[], needs_vowel: false, undouble: Undouble::No },
    SuffixRule { suffix: "ies", replacement: "y", unless: &[], needs_vowel: false, undouble: Undouble::No },
    SuffixRule { suffix: "sses", replacement: "ss", unless: &[], needs_vowel: false, undouble: Undouble::No },
    SuffixRule { suffix: "ches", replacement: "ch", unless: &[], needs_vowel: false, undouble: Undouble::No },
    SuffixRule { suffix: "shes", replacement: "sh", unless: &[], needs_vowel: false, undouble: Undouble::No },
    SuffixRule { suffix: "xes", replacement: "x", unless: &[], needs_vowel: false, undouble: Undouble::No },
    SuffixRule { suffix: "s", replacement: "", unless: &["ss", "us", "is", "'"], needs_vowel: false, undouble: Undouble::No },
    SuffixRule { suffix: "ing", replacement: "", unless: &[], needs_vowel: true, undouble: Undouble::Yes },
    SuffixRule { suffix: "ed", replacement: "", unless: &["eed"], needs_vowel: true, undouble: Undouble::Yes },
];

fn has_vowel(s: &str) -> bool {
    s.chars().any(|c| matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y'))
}

fn undouble(mut stem: String) -> String {
    let mut rev = stem.chars().rev();
    if let (Some(a), Some(b)) = (rev.next(), rev.next()) {
        if a == b && a.is_alphabetic() && !matches!(a, 'a' | 'e' | 'i' | 'o' | 'u' | 'l' | 's' | 'z') {
            stem.pop();
        }
    }
    stem
}

/// Exception dictionary plus ordered suffix rewrite rules.
///
/// A token found in the dictionary is replaced by its entry and left alone.
/// Otherwise the first applicable suffix rule is applied, and the lookup is
/// repeated on the result until nothing changes, which makes lemmatization
/// idempotent.
#[derive(Clone, Debug, Default)]
pub struct LemmaRules {
    exceptions: HashMap<String, String>,
}

impl LemmaRules {
    /// Parses `surface<TAB>lemma` lines. Every lemma is also registered as
    /// its own exception; a lemma that is itself remapped elsewhere is
    /// rejected.
    pub fn parse(text: &str) -> Result<Self, CorpusError> {
        let mut exceptions = HashMap::new();
        let mut lines_of: HashMap<String, usize> = HashMap::new();
        for (idx, line) in text.lines().enumerate() {
            let lineno = idx + 1;
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let (surface, lemma) = line
                .split_once('\t')
                .ok_or_else(|| CorpusError::LemmaRules { line: lineno, reason: "expected `surface<TAB>lemma`".into() })?;
            let (surface, lemma) = (surface.trim(), lemma.trim());
            for w in [surface, lemma] {
                if w.is_empty() || w.chars().any(char::is_whitespace) || w.to_lowercase() != w {
                    return Err(CorpusError::LemmaRules {
                        line: lineno,
                        reason: format!("`{w}` must be a single non-empty lowercase token"),
                    });
                }
            }
            if let Some(prev) = exceptions.insert(surface.to_string(), lemma.to_string()) {
                if prev != lemma {
                    return Err(CorpusError::LemmaRules {
                        line: lineno,
                        reason: format!("`{surface}` already maps to `{prev}` (line {})", lines_of[surface]),
                    });
                }
            }
            lines_of.insert(surface.to_string(), lineno);
        }
        let targets: BTreeSet<String> = exceptions.values().cloned().collect();
        for lemma in targets {
            match exceptions.get(&lemma) {
                Some(next) if *next != lemma => {
                    return Err(CorpusError::LemmaRules {
                        line: lines_of[&lemma],
                        reason: format!("lemma chain: `{lemma}` is a lemma but maps to `{next}`"),
                    });
                }
                Some(_) => {}
                None => {
                    exceptions.insert(lemma.clone(), lemma);
                }
            }
        }
        Ok(Self { exceptions })
    }

    pub fn english() -> Self {
        Self::parse(DEFAULT_LEMMA_EXCEPTIONS).expect("bundled lemma exceptions are valid")
    }

    /// Rules with no exception dictionary.
    pub fn suffix_only() -> Self {
        Self::default()
    }

    fn apply_suffix_rule(word: &str) -> Option<String> {
        for rule in SUFFIX_RULES {
            let Some(stem) = word.strip_suffix(rule.suffix) else { continue };
            if rule.unless.iter().any(|u| word.ends_with(u)) {
                continue;
            }
            if rule.needs_vowel && !has_vowel(stem) {
                continue;
            }
            let mut out = format!("{stem}{}", rule.replacement);
            if rule.undouble == Undouble::Yes {
                out = undouble(out);
            }
            if out.chars().count() < MIN_STEM_LEN {
                continue;
            }
            return Some(out);
        }
        None
    }

    pub fn lemma(&self, token: &str) -> String {
        let mut word = token.to_string();
        loop {
            if let Some(hit) = self.exceptions.get(&word) {
                return hit.clone();
            }
            match Self::apply_suffix_rule(&word) {
                Some(next) => word = next,
                None => return word,
            }
        }
    }
}

pub fn lemmatize(tokens: Vec<String>, rules: &LemmaRules) -> Vec<String> {
    tokens.into_iter().map(|t| rules.lemma(&t)).collect()
}

/// The immutable normalization pipeline shared by corpus and lexicon.
#[derive(Clone, Debug, Default)]
pub struct Preprocessor {
    pub stoplist: Stoplist,
    pub rules: LemmaRules,
}

impl Preprocessor {
    pub fn new(stoplist: Stoplist, rules: LemmaRules) -> Self {
        Self { stoplist, rules }
    }

    pub fn english() -> Self {
        Self::new(Stoplist::english(), LemmaRules::english())
    }

    /// tokenize → remove stopwords → lemmatize. A lemma that lands on a
    /// stopword (`cans` → `can`) is dropped as well.
    pub fn process(&self, title: &str) -> Vec<String> {
        let lemmas = lemmatize(remove_stopwords(tokenize(title), &self.stoplist), &self.rules);
        remove_stopwords(lemmas, &self.stoplist)
    }
}

/// A preprocessed headline.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Headline {
    pub outlet: String,
    pub year: i32,
    pub tokens: Vec<String>,
}

impl Headline {
    pub fn new<S: Into<String>>(outlet: impl Into<String>, year: i32, tokens: impl IntoIterator<Item = S>) -> Self {
        Self { outlet: outlet.into(), year, tokens: tokens.into_iter().map(Into::into).collect() }
    }
}

pub fn is_valid_token(token: &str) -> bool {
    !token.is_empty() && !token.chars().any(|c| c.is_whitespace() || c.is_uppercase())
}

#[derive(Clone, Debug, Default)]
pub struct HeadlineBuild {
    pub headlines: Vec<Headline>,
    /// Records whose token sequence was empty after preprocessing.
    pub dropped_empty: usize,
}

/// Preprocesses every record. Output keeps input order.
pub fn build_headlines(records: &[RawRecord], outlets: &OutletSet, pre: &Preprocessor) -> Result<HeadlineBuild, CorpusError> {
    let unknown: BTreeSet<&str> = records
        .iter()
        .map(|r| r.outlet.as_str())
        .filter(|o| !outlets.contains(o))
        .collect();
    if !unknown.is_empty() {
        return Err(CorpusError::UnknownOutlets(unknown.into_iter().map(String::from).collect()));
    }
    let processed: Vec<Option<Headline>> = records
        .par_iter()
        .map(|r| {
            let tokens = pre.process(&r.title);
            (!tokens.is_empty()).then(|| Headline { outlet: r.outlet.clone(), year: r.date.year(), tokens })
        })
        .collect();
    let dropped_empty = processed.iter().filter(|h| h.is_none()).count();
    Ok(HeadlineBuild { headlines: processed.into_iter().flatten().collect(), dropped_empty })
}
