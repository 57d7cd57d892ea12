//! Run configuration: one TOML file with sections, plus flag overrides.
//!
//! ```toml
//! [inputs]
//! corpus = "corpus.jsonl"
//! outlets = "outlets.toml"
//! lexicon = "lexicon.tsv"
//!
//! [scope]
//! years = "2014..2022"
//! topics = ["domestic", "social"]
//!
//! [thresholds]
//! mining = 100
//! inclusion = 50
//! top_k = 10
//!
//! [analysis]
//! cluster_threshold = "auto"
//! mad_variant = "all"
//!
//! [output]
//! dir = "out"
//! ```
//!
//! Relative paths in the file resolve against the file's directory.

use std::fmt;
use std::fs;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{InputFormat, DEFAULT_MAX_SKIP_FRACTION};
use crate::lexicon::{CountingMode, MultiTopic, Topic, DEFAULT_MINING_THRESHOLD};
use crate::metrics::{ClusterThreshold, MadCenter, MadOptions, MadVariant};
use crate::report::{Canvas, DEFAULT_HEIGHT, DEFAULT_TOP_K, DEFAULT_WIDTH};
use crate::tabulate::DEFAULT_INCLUSION_THRESHOLD;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
}

/// Inclusive calendar-year range, written `A..B` (or a single year).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct YearRange {
    pub start: i32,
    pub end: i32,
}

impl YearRange {
    pub fn new(start: i32, end: i32) -> Result<Self, String> {
        if start > end {
            return Err(format!("year range {start}..{end} is empty"));
        }
        Ok(Self { start, end })
    }

    pub fn range(&self) -> RangeInclusive<i32> {
        self.start..=self.end
    }

    pub fn len(&self) -> usize {
        (self.end - self.start + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl Default for YearRange {
    fn default() -> Self {
        Self { start: 2014, end: 2022 }
    }
}

impl FromStr for YearRange {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let year = |t: &str| t.trim().parse::<i32>().map_err(|_| format!("bad year `{t}` in `{s}`"));
        match s.split_once("..") {
            Some((a, b)) => Self::new(year(a)?, year(b.trim_start_matches('='))?),
            None => {
                let y = year(s)?;
                Self::new(y, y)
            }
        }
    }
}

impl TryFrom<String> for YearRange {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<YearRange> for String {
    fn from(r: YearRange) -> Self {
        r.to_string()
    }
}

impl fmt::Display for YearRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormatChoice {
    Jsonl,
    Csv,
}

impl From<FormatChoice> for InputFormat {
    fn from(f: FormatChoice) -> Self {
        match f {
            FormatChoice::Jsonl => InputFormat::JsonLines,
            FormatChoice::Csv => InputFormat::Csv,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    pub corpus: Option<PathBuf>,
    /// Guessed from the corpus extension when absent.
    pub format: Option<FormatChoice>,
    /// Bundled nine-outlet list when absent.
    pub outlets: Option<PathBuf>,
    pub stoplist: Option<PathBuf>,
    pub lemma_exceptions: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scope {
    pub years: YearRange,
    pub topics: Vec<Topic>,
}

impl Default for Scope {
    fn default() -> Self {
        Self { years: YearRange::default(), topics: Topic::ALL.to_vec() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub mining: u64,
    pub inclusion: u64,
    pub top_k: usize,
    pub max_skip_fraction: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            mining: DEFAULT_MINING_THRESHOLD,
            inclusion: DEFAULT_INCLUSION_THRESHOLD,
            top_k: DEFAULT_TOP_K,
            max_skip_fraction: DEFAULT_MAX_SKIP_FRACTION,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Analysis {
    pub counting: CountingMode,
    pub multi_topic: MultiTopic,
    pub cluster_threshold: ClusterThreshold,
    pub mad_variant: MadVariant,
    pub mad_center: MadCenter,
    /// Outlets that get a centroid-distance series; every outlet when empty.
    pub centroid_outlets: Vec<String>,
    /// Outlets that get their own top-k column; every outlet when empty.
    pub topk_outlets: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Output {
    pub dir: PathBuf,
    pub width: u32,
    pub height: u32,
    /// Worker threads; 0 means one per available core.
    pub jobs: usize,
}

impl Default for Output {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), width: DEFAULT_WIDTH, height: DEFAULT_HEIGHT, jobs: 0 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub inputs: Inputs,
    pub scope: Scope,
    pub thresholds: Thresholds,
    pub analysis: Analysis,
    pub output: Output,
}

/// Command-line values that replace file values when set.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub corpus: Option<PathBuf>,
    pub outlets: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub stoplist: Option<PathBuf>,
    pub lemma_exceptions: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub years: Option<YearRange>,
    pub topics: Option<Vec<Topic>>,
    pub mining_threshold: Option<u64>,
    pub inclusion_threshold: Option<u64>,
    pub top_k: Option<usize>,
    pub cluster_threshold: Option<ClusterThreshold>,
    pub jobs: Option<usize>,
    pub counting: Option<CountingMode>,
    pub multi_topic: Option<MultiTopic>,
    pub mad_variant: Option<MadVariant>,
    pub mad_center: Option<MadCenter>,
}

/// Which inputs a command needs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Needs {
    pub corpus: bool,
    pub lexicon: bool,
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

/// Parses a comma-separated topic list.
pub fn parse_topics(s: &str) -> Result<Vec<Topic>, String> {
    let mut topics: Vec<Topic> = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let t: Topic = part.parse()?;
        if !topics.contains(&t) {
            topics.push(t);
        }
    }
    if topics.is_empty() {
        return Err("topic list is empty".into());
    }
    Ok(topics)
}

impl RunConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let mut cfg: RunConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse { path: path.to_path_buf(), message: e.to_string() })?;
        let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let i = &mut cfg.inputs;
        for p in [&mut i.corpus, &mut i.outlets, &mut i.stoplist, &mut i.lemma_exceptions, &mut i.lexicon, &mut i.annotations] {
            resolve(base, p);
        }
        if cfg.output.dir.is_relative() {
            cfg.output.dir = base.join(&cfg.output.dir);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        Self::from_toml(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: &Overrides) {
        fn set<T: Clone>(slot: &mut T, v: &Option<T>) {
            if let Some(v) = v {
                *slot = v.clone();
            }
        }
        fn set_opt<T: Clone>(slot: &mut Option<T>, v: &Option<T>) {
            if v.is_some() {
                *slot = v.clone();
            }
        }
        set_opt(&mut self.inputs.corpus, &o.corpus);
        set_opt(&mut self.inputs.outlets, &o.outlets);
        set_opt(&mut self.inputs.lexicon, &o.lexicon);
        set_opt(&mut self.inputs.stoplist, &o.stoplist);
        set_opt(&mut self.inputs.lemma_exceptions, &o.lemma_exceptions);
        set(&mut self.output.dir, &o.out);
        set(&mut self.scope.years, &o.years);
        set(&mut self.scope.topics, &o.topics);
        set(&mut self.thresholds.mining, &o.mining_threshold);
        set(&mut self.thresholds.inclusion, &o.inclusion_threshold);
        set(&mut self.thresholds.top_k, &o.top_k);
        set(&mut self.analysis.cluster_threshold, &o.cluster_threshold);
        set(&mut self.output.jobs, &o.jobs);
        set(&mut self.analysis.counting, &o.counting);
        set(&mut self.analysis.multi_topic, &o.multi_topic);
        set(&mut self.analysis.mad_variant, &o.mad_variant);
        set(&mut self.analysis.mad_center, &o.mad_center);
    }

    pub fn mad_options(&self) -> MadOptions {
        MadOptions { variant: self.analysis.mad_variant, center: self.analysis.mad_center }
    }

    pub fn canvas(&self) -> Canvas {
        Canvas { width: self.output.width, height: self.output.height }
    }

    pub fn corpus_format(&self) -> Option<InputFormat> {
        let corpus = self.inputs.corpus.as_ref()?;
        Some(self.inputs.format.map_or_else(|| InputFormat::from_path(corpus), Into::into))
    }

    /// Checks everything that can be checked without reading data.
    pub fn validate(&self, needs: Needs) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.thresholds.mining < 1 {
            return bad("mining threshold must be at least 1".into());
        }
        if self.thresholds.inclusion < 1 {
            return bad("inclusion threshold must be at least 1".into());
        }
        if self.thresholds.top_k < 1 {
            return bad("top-k must be at least 1".into());
        }
        let f = self.thresholds.max_skip_fraction;
        if !(0.0..=1.0).contains(&f) {
            return bad(format!("max_skip_fraction must lie in [0, 1], got {f}"));
        }
        if self.scope.topics.is_empty() {
            return bad("no topics selected".into());
        }
        if self.output.width == 0 || self.output.height == 0 {
            return bad("plot width and height must be positive".into());
        }
        if let ClusterThreshold::Fixed(x) = self.analysis.cluster_threshold {
            if !x.is_finite() || x < 0.0 {
                return bad(format!("cluster threshold must be finite and non-negative, got {x}"));
            }
        }
        let i = &self.inputs;
        let required = [("corpus", &i.corpus, needs.corpus), ("lexicon", &i.lexicon, needs.lexicon)];
        for (name, path, needed) in required {
            if needed && path.is_none() {
                return bad(format!("no {name} file configured"));
            }
        }
        let files = [
            ("corpus", &i.corpus),
            ("outlets", &i.outlets),
            ("stoplist", &i.stoplist),
            ("lemma exceptions", &i.lemma_exceptions),
            ("lexicon", &i.lexicon),
            ("annotations", &i.annotations),
        ];
        for (name, path) in files {
            if let Some(p) = path {
                if !p.is_file() {
                    return bad(format!("{name} file {} does not exist", p.display()));
                }
            }
        }
        check_writable(&self.output.dir)
    }
}

/// The output directory, or its nearest existing ancestor, must be a
/// writable directory.
fn check_writable(dir: &Path) -> Result<(), ConfigError> {
    let mut probe = Some(dir);
    while let Some(p) = probe {
        if p.exists() {
            let meta = fs::metadata(p).map_err(|e| ConfigError::Invalid(format!("output {}: {e}", p.display())))?;
            if !meta.is_dir() {
                return Err(ConfigError::Invalid(format!("output path {} is not a directory", p.display())));
            }
            if meta.permissions().readonly() {
                return Err(ConfigError::Invalid(format!("output directory {} is read-only", p.display())));
            }
            return Ok(());
        }
        probe = p.parent().filter(|q| !q.as_os_str().is_empty());
    }
    Ok(())
}
