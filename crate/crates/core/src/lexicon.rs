//! N-gram extraction, frequent-bigram mining and topic lexicon handling.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{is_valid_token, Headline, Preprocessor};

/// Default per-year occurrence threshold for bigram mining.
pub const DEFAULT_MINING_THRESHOLD: u64 = 100;

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("cannot read lexicon: {0}")]
    Io(#[from] std::io::Error),
    #[error("lexicon line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("lexicon: `{bigram}` labeled `{first}` on line {first_line} and `{second}` on line {second_line}")]
    Conflict { bigram: String, first: Topic, first_line: usize, second: Topic, second_line: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topic {
    #[serde(rename = "foreign")]
    ForeignAffairs,
    #[serde(rename = "domestic")]
    DomesticPolitics,
    #[serde(rename = "economic")]
    EconomicIssue,
    #[serde(rename = "social")]
    SocialIssue,
}

impl Topic {
    pub const ALL: [Topic; 4] = [Topic::ForeignAffairs, Topic::DomesticPolitics, Topic::EconomicIssue, Topic::SocialIssue];

    /// Short name used in files and on the command line.
    pub fn slug(self) -> &'static str {
        match self {
            Topic::ForeignAffairs => "foreign",
            Topic::DomesticPolitics => "domestic",
            Topic::EconomicIssue => "economic",
            Topic::SocialIssue => "social",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Topic::ForeignAffairs => "foreign affairs",
            Topic::DomesticPolitics => "domestic politics",
            Topic::EconomicIssue => "economic issues",
            Topic::SocialIssue => "social issues",
        }
    }
}

impl fmt::Display for Topic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

impl FromStr for Topic {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "foreign" => Ok(Topic::ForeignAffairs),
            "domestic" => Ok(Topic::DomesticPolitics),
            "economic" => Ok(Topic::EconomicIssue),
            "social" => Ok(Topic::SocialIssue),
            other => Err(format!("unknown topic `{other}` (expected foreign, domestic, economic or social)")),
        }
    }
}

/// A bigram or trigram, stored space-joined.
///
/// Tokens never contain whitespace and every token character sorts above the
/// space, so ordering the joined text is the same as ordering token by token.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NGram(String);

impl NGram {
    pub fn new<S: AsRef<str>>(tokens: &[S]) -> Result<Self, String> {
        if !(2..=3).contains(&tokens.len()) {
            return Err(format!("n-gram arity must be 2 or 3, got {}", tokens.len()));
        }
        if let Some(bad) = tokens.iter().find(|t| !is_valid_token(t.as_ref())) {
            return Err(format!("invalid token `{}`", bad.as_ref()));
        }
        Ok(Self::from_window(tokens))
    }

    fn from_window<S: AsRef<str>>(tokens: &[S]) -> Self {
        let mut s = String::with_capacity(tokens.iter().map(|t| t.as_ref().len() + 1).sum());
        for (i, t) in tokens.iter().enumerate() {
            if i > 0 {
                s.push(' ');
            }
            s.push_str(t.as_ref());
        }
        NGram(s)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.0.split(' ')
    }

    pub fn arity(&self) -> usize {
        self.tokens().count()
    }
}

impl fmt::Display for NGram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for NGram {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let toks: Vec<&str> = s.split_whitespace().collect();
        NGram::new(&toks)
    }
}

/// All contiguous windows of `arity` tokens, in order.
pub fn extract_ngrams<S: AsRef<str>>(tokens: &[S], arity: usize) -> Vec<NGram> {
    assert!((2..=3).contains(&arity), "n-gram arity must be 2 or 3");
    tokens.windows(arity).map(NGram::from_window).collect()
}

/// How repeated n-grams inside one headline are counted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CountingMode {
    /// Every occurrence counts.
    #[default]
    Occurrences,
    /// Each headline contributes at most one count per n-gram.
    Headlines,
}

impl FromStr for CountingMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "occurrences" => Ok(CountingMode::Occurrences),
            "headlines" => Ok(CountingMode::Headlines),
            other => Err(format!("unknown counting mode `{other}`")),
        }
    }
}

/// Counts n-grams of the given arities over a set of headlines. This is the
/// single counting path used by tabulation and top-k reporting.
pub fn count_ngrams<'a, I>(headlines: I, arities: &[usize], mode: CountingMode) -> HashMap<NGram, u64>
where
    I: IntoIterator<Item = &'a Headline>,
{
    let mut counts = HashMap::new();
    let mut seen = BTreeSet::new();
    for h in headlines {
        seen.clear();
        for &arity in arities {
            for gram in extract_ngrams(&h.tokens, arity) {
                if mode == CountingMode::Headlines && !seen.insert(gram.clone()) {
                    continue;
                }
                *counts.entry(gram).or_insert(0) += 1;
            }
        }
    }
    counts
}

/// Candidate bigrams with their per-year counts.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct MiningReport {
    pub threshold: u64,
    /// Candidate → (year → count), including years below the threshold.
    pub candidates: BTreeMap<NGram, BTreeMap<i32, u64>>,
}

impl MiningReport {
    pub fn total(&self, gram: &NGram) -> u64 {
        self.candidates.get(gram).map_or(0, |years| years.values().sum())
    }

    /// `bigram,year,count` rows sorted by bigram then year.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["bigram", "year", "count"]).expect("in-memory write");
        for (gram, years) in &self.candidates {
            for (year, count) in years {
                w.write_record([gram.as_str(), &year.to_string(), &count.to_string()]).expect("in-memory write");
            }
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8")
    }

    /// Lexicon skeleton: every candidate followed by a tab and an empty topic.
    pub fn skeleton_tsv(&self) -> String {
        let mut out = String::from("# label each bigram with one of: foreign, domestic, economic, social\n");
        for gram in self.candidates.keys() {
            out.push_str(gram.as_str());
            out.push('\t');
            out.push('\n');
        }
        out
    }
}

type YearCounts = HashMap<(i32, NGram), u64>;

fn merge_counts(mut a: YearCounts, b: YearCounts) -> YearCounts {
    if a.len() < b.len() {
        return merge_counts(b, a);
    }
    for (k, v) in b {
        *a.entry(k).or_insert(0) += v;
    }
    a
}

/// Counts every bigram per year and keeps those reaching `threshold` in at
/// least one year.
pub fn mine_frequent_bigrams(headlines: &[Headline], threshold: u64) -> MiningReport {
    assert!(threshold >= 1, "mining threshold must be at least 1");
    let counts = headlines
        .par_chunks(4096)
        .map(|chunk| {
            let mut local = YearCounts::new();
            for h in chunk {
                for gram in extract_ngrams(&h.tokens, 2) {
                    *local.entry((h.year, gram)).or_insert(0) += 1;
                }
            }
            local
        })
        .reduce(YearCounts::new, merge_counts);

    let mut by_gram: BTreeMap<NGram, BTreeMap<i32, u64>> = BTreeMap::new();
    for ((year, gram), n) in counts {
        by_gram.entry(gram).or_default().insert(year, n);
    }
    by_gram.retain(|_, years| years.values().any(|&n| n >= threshold));
    MiningReport { threshold, candidates: by_gram }
}

/// Bigram → topic mapping, normalized through the corpus pipeline.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TopicLexicon {
    entries: BTreeMap<NGram, Topic>,
}

impl TopicLexicon {
    pub fn from_entries<I: IntoIterator<Item = (NGram, Topic)>>(entries: I) -> Result<Self, LexiconError> {
        let mut map = BTreeMap::new();
        for (idx, (gram, topic)) in entries.into_iter().enumerate() {
            if gram.arity() != 2 {
                return Err(LexiconError::Parse { line: idx + 1, reason: format!("`{gram}` is not a bigram") });
            }
            if let Some(prev) = map.insert(gram.clone(), topic) {
                if prev != topic {
                    return Err(LexiconError::Conflict {
                        bigram: gram.to_string(),
                        first: prev,
                        first_line: 0,
                        second: topic,
                        second_line: idx + 1,
                    });
                }
            }
        }
        Ok(Self { entries: map })
    }

    pub fn get(&self, gram: &NGram) -> Option<Topic> {
        self.entries.get(gram).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&NGram, Topic)> {
        self.entries.iter().map(|(g, t)| (g, *t))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count_for(&self, topic: Topic) -> usize {
        self.entries.values().filter(|t| **t == topic).count()
    }

    pub fn to_tsv(&self) -> String {
        self.entries.iter().map(|(g, t)| format!("{g}\t{t}\n")).collect()
    }
}

/// Parses a `token token<TAB>topic` lexicon. Bigram text goes through the
/// same preprocessing as headlines; it must still be a bigram afterwards.
/// Lines with an empty topic (an unlabeled skeleton row) are skipped.
pub fn load_lexicon<R: Read>(mut source: R, pre: &Preprocessor) -> Result<TopicLexicon, LexiconError> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    let mut entries: BTreeMap<NGram, (Topic, usize)> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() || raw.trim_start().starts_with('#') {
            continue;
        }
        let (phrase, topic) = raw
            .split_once('\t')
            .ok_or_else(|| LexiconError::Parse { line, reason: "expected `bigram<TAB>topic`".into() })?;
        if topic.trim().is_empty() {
            log::warn!("lexicon line {line}: `{}` has no topic, skipped", phrase.trim());
            continue;
        }
        let topic: Topic = topic.parse().map_err(|reason| LexiconError::Parse { line, reason })?;
        let tokens = pre.process(phrase);
        let gram = match tokens.len() {
            2 => NGram::from_window(&tokens),
            n => {
                return Err(LexiconError::Parse {
                    line,
                    reason: format!("`{}` normalizes to {n} token(s) {tokens:?}, expected a bigram", phrase.trim()),
                })
            }
        };
        match entries.get(&gram) {
            Some(&(prev, prev_line)) if prev != topic => {
                return Err(LexiconError::Conflict {
                    bigram: gram.to_string(),
                    first: prev,
                    first_line: prev_line,
                    second: topic,
                    second_line: line,
                });
            }
            Some(&(_, prev_line)) => {
                log::warn!("lexicon line {line}: `{gram}` duplicates line {prev_line}");
            }
            None => {
                entries.insert(gram, (topic, line));
            }
        }
    }
    Ok(TopicLexicon { entries: entries.into_iter().map(|(g, (t, _))| (g, t)).collect() })
}

/// How a headline matching several topics is bucketed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MultiTopic {
    /// Into every matching topic.
    #[default]
    All,
    /// Only into the topic of the first lexicon bigram in token order.
    First,
}

impl FromStr for MultiTopic {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "all" => Ok(MultiTopic::All),
            "first" => Ok(MultiTopic::First),
            other => Err(format!("unknown multi-topic mode `{other}`")),
        }
    }
}

/// Topics of the lexicon bigrams found in `tokens`, in first-appearance order.
pub fn headline_topics(tokens: &[String], lexicon: &TopicLexicon) -> Vec<Topic> {
    let mut found = Vec::new();
    for gram in extract_ngrams(tokens, 2) {
        if let Some(t) = lexicon.get(&gram) {
            if !found.contains(&t) {
                found.push(t);
            }
        }
    }
    found
}

/// Bucket membership as headline indices; each bucket is ascending.
pub fn select_relevant_indices(headlines: &[Headline], lexicon: &TopicLexicon, mode: MultiTopic) -> BTreeMap<Topic, Vec<usize>> {
    let tagged: Vec<Vec<Topic>> = headlines.par_iter().map(|h| headline_topics(&h.tokens, lexicon)).collect();
    let mut buckets: BTreeMap<Topic, Vec<usize>> = BTreeMap::new();
    for (idx, topics) in tagged.into_iter().enumerate() {
        let take = match mode {
            MultiTopic::All => topics.len(),
            MultiTopic::First => topics.len().min(1),
        };
        for t in &topics[..take] {
            buckets.entry(*t).or_default().push(idx);
        }
    }
    buckets
}

/// Assigns headlines to the topics of the lexicon bigrams they contain.
pub fn select_relevant<'a>(headlines: &'a [Headline], lexicon: &TopicLexicon, mode: MultiTopic) -> BTreeMap<Topic, Vec<&'a Headline>> {
    select_relevant_indices(headlines, lexicon, mode)
        .into_iter()
        .map(|(t, idx)| (t, idx.into_iter().map(|i| &headlines[i]).collect()))
        .collect()
}

/// Number of headlines that sit in more than one bucket.
pub fn overlap_count(buckets: &BTreeMap<Topic, Vec<usize>>) -> usize {
    let mut seen: HashMap<usize, usize> = HashMap::new();
    for idx in buckets.values().flatten() {
        *seen.entry(*idx).or_insert(0) += 1;
    }
    seen.values().filter(|&&n| n > 1).count()
}
