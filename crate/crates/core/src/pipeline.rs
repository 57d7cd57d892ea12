//! End-to-end commands: ingest check, mining, analysis, verification and
//! re-rendering. Each returns a summary; the binary maps errors to exit codes.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ca::{ca_embed, chi_square_stat, column_profile_distance, OutletPoint};
use crate::config::{ConfigError, Needs, RunConfig};
use crate::corpus::{
    build_headlines, ingest, CorpusError, Headline, IngestOptions, Leaning, LemmaRules, OutletSet, Preprocessor, SkippedRow, Stoplist,
    DEFAULT_LEMMA_EXCEPTIONS, DEFAULT_OUTLETS, DEFAULT_STOPLIST,
};
use crate::lexicon::{load_lexicon, mine_frequent_bigrams, overlap_count, select_relevant_indices, LexiconError, Topic, TopicLexicon};
use crate::metrics::{build_series, DiscrepancySeries, SeriesKind, YearLayouts};
use crate::report::{render_markdown_annotated, render_scatter_with, render_series, top_k, Annotations, Canvas, Scope};
use crate::tabulate::{build_table, ContingencyTable, Unit};

pub const MANIFEST: &str = "run_manifest.json";
pub const MINING_REPORT: &str = "mining_report.csv";
pub const LEXICON_SKELETON: &str = "lexicon_skeleton.tsv";
pub const MAD_OVERLAY: &str = "series_mad_all.svg";

pub const INERTIA_TOL: f64 = 1e-10;
pub const CENTERING_TOL: f64 = 1e-9;
pub const DISTANCE_TOL: f64 = 1e-9;
pub const POINT_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("numeric: {0}")]
    Numeric(String),
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Data(_) => 3,
            Error::Numeric(_) => 4,
        }
    }
}

impl From<ConfigError> for Error {
    fn from(e: ConfigError) -> Self {
        Error::Config(e.to_string())
    }
}

impl From<CorpusError> for Error {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Io(_) | CorpusError::Csv(_) | CorpusError::TooManyMalformed { .. } => Error::Data(e.to_string()),
            _ => Error::Config(e.to_string()),
        }
    }
}

impl From<LexiconError> for Error {
    fn from(e: LexiconError) -> Self {
        Error::Config(format!("lexicon: {e}"))
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Data(format!("{}: {e}", path.display()))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn read_input(path: &Path) -> Result<Vec<u8>, Error> {
    fs::read(path).map_err(|e| io_err(path, e))
}

/// Reference inputs: outlets, preprocessing and (optionally) the lexicon,
/// with the hash of the bytes each was built from.
pub struct Loaded {
    pub outlets: OutletSet,
    pub pre: Preprocessor,
    pub lexicon: Option<TopicLexicon>,
    pub annotations: Annotations,
    pub hashes: BTreeMap<String, String>,
}

fn text_input(path: Option<&PathBuf>, bundled: &str, role: &str, hashes: &mut BTreeMap<String, String>) -> Result<String, Error> {
    let bytes = match path {
        Some(p) => read_input(p)?,
        None => bundled.as_bytes().to_vec(),
    };
    hashes.insert(role.to_string(), sha256_hex(&bytes));
    String::from_utf8(bytes).map_err(|_| Error::Config(format!("{role} file is not UTF-8")))
}

pub fn load_reference(cfg: &RunConfig, with_lexicon: bool) -> Result<Loaded, Error> {
    let mut hashes = BTreeMap::new();
    let i = &cfg.inputs;
    let outlets = OutletSet::parse(&text_input(i.outlets.as_ref(), DEFAULT_OUTLETS, "outlets", &mut hashes)?)?;
    if outlets.is_empty() {
        return Err(Error::Config("outlet list is empty".into()));
    }
    for o in outlets.iter() {
        if o.name.chars().any(|c| c.is_whitespace() || matches!(c, '/' | '\\' | ',' | '"')) {
            return Err(Error::Config(format!("outlet name `{}` must not contain whitespace, slashes, commas or quotes", o.name)));
        }
    }
    let stoplist = Stoplist::parse(&text_input(i.stoplist.as_ref(), DEFAULT_STOPLIST, "stoplist", &mut hashes)?)?;
    let rules = LemmaRules::parse(&text_input(i.lemma_exceptions.as_ref(), DEFAULT_LEMMA_EXCEPTIONS, "lemma_exceptions", &mut hashes)?)?;
    let pre = Preprocessor::new(stoplist, rules);
    let lexicon = match (&i.lexicon, with_lexicon) {
        (Some(p), true) => {
            let bytes = read_input(p)?;
            hashes.insert("lexicon".into(), sha256_hex(&bytes));
            Some(load_lexicon(&bytes[..], &pre)?)
        }
        _ => None,
    };
    let annotations = match &i.annotations {
        Some(p) => {
            let bytes = read_input(p)?;
            hashes.insert("annotations".into(), sha256_hex(&bytes));
            let text = String::from_utf8(bytes).map_err(|_| Error::Config("annotation file is not UTF-8".into()))?;
            Annotations::parse(&text).map_err(|e| Error::Config(e.to_string()))?
        }
        None => Annotations::default(),
    };
    for name in cfg.analysis.centroid_outlets.iter().chain(&cfg.analysis.topk_outlets) {
        if !outlets.contains(name) {
            return Err(Error::Config(format!("configured outlet `{name}` is not in the outlet list")));
        }
    }
    Ok(Loaded { outlets, pre, lexicon, annotations, hashes })
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub records: usize,
    pub skipped: usize,
    pub out_of_range: usize,
    pub dropped_empty: usize,
    pub headlines: usize,
}

pub struct Corpus {
    pub headlines: Vec<Headline>,
    pub stats: IngestStats,
    pub skipped: Vec<SkippedRow>,
}

pub fn load_corpus(cfg: &RunConfig, loaded: &mut Loaded) -> Result<Corpus, Error> {
    let path = cfg.inputs.corpus.as_ref().ok_or_else(|| Error::Config("no corpus file configured".into()))?;
    let bytes = read_input(path)?;
    loaded.hashes.insert("corpus".into(), sha256_hex(&bytes));
    let format = cfg.corpus_format().expect("corpus is set");
    let opts = IngestOptions { max_skip_fraction: cfg.thresholds.max_skip_fraction, ..IngestOptions::for_years(&cfg.scope.years.range()) };
    let outcome = ingest(&bytes[..], format, &opts)?;
    for s in outcome.skipped.iter().take(20) {
        log::warn!("{}: line {} skipped: {}", path.display(), s.line, s.reason);
    }
    let built = build_headlines(&outcome.records, &loaded.outlets, &loaded.pre)?;
    let stats = IngestStats {
        records: outcome.records.len(),
        skipped: outcome.skipped.len(),
        out_of_range: outcome.out_of_range,
        dropped_empty: built.dropped_empty,
        headlines: built.headlines.len(),
    };
    Ok(Corpus { headlines: built.headlines, stats, skipped: outcome.skipped })
}

#[derive(Clone, Debug, Serialize)]
pub struct IngestReport {
    pub stats: IngestStats,
    pub skipped: Vec<(u64, String)>,
    pub per_outlet: BTreeMap<String, usize>,
    pub per_year: BTreeMap<i32, usize>,
}

pub fn ingest_check(cfg: &RunConfig) -> Result<IngestReport, Error> {
    cfg.validate(Needs { corpus: true, lexicon: false })?;
    let mut loaded = load_reference(cfg, false)?;
    let corpus = load_corpus(cfg, &mut loaded)?;
    let mut per_outlet: BTreeMap<String, usize> = loaded.outlets.names().into_iter().map(|o| (o, 0)).collect();
    let mut per_year: BTreeMap<i32, usize> = cfg.scope.years.range().map(|y| (y, 0)).collect();
    for h in &corpus.headlines {
        *per_outlet.entry(h.outlet.clone()).or_insert(0) += 1;
        *per_year.entry(h.year).or_insert(0) += 1;
    }
    Ok(IngestReport {
        stats: corpus.stats,
        skipped: corpus.skipped.into_iter().map(|s| (s.line, s.reason)).collect(),
        per_outlet,
        per_year,
    })
}

fn write_file(out: &Path, rel: &str, contents: &[u8]) -> Result<(String, String), Error> {
    let path = out.join(rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    fs::write(&path, contents).map_err(|e| io_err(&path, e))?;
    Ok((rel.to_string(), sha256_hex(contents)))
}

#[derive(Clone, Debug, Serialize)]
pub struct MineSummary {
    pub stats: IngestStats,
    pub candidates: usize,
    pub report: PathBuf,
    pub skeleton: PathBuf,
}

/// Mines frequent bigrams and writes the report and a lexicon skeleton.
/// Nothing is written unless every input loads.
pub fn mine(cfg: &RunConfig) -> Result<MineSummary, Error> {
    cfg.validate(Needs { corpus: true, lexicon: false })?;
    let mut loaded = load_reference(cfg, false)?;
    let corpus = load_corpus(cfg, &mut loaded)?;
    let report = mine_frequent_bigrams(&corpus.headlines, cfg.thresholds.mining);
    let out = &cfg.output.dir;
    write_file(out, MINING_REPORT, report.to_csv().as_bytes())?;
    write_file(out, LEXICON_SKELETON, report.skeleton_tsv().as_bytes())?;
    log::info!("{} candidate bigram(s) at threshold {}", report.candidates.len(), cfg.thresholds.mining);
    Ok(MineSummary { stats: corpus.stats, candidates: report.candidates.len(), report: out.join(MINING_REPORT), skeleton: out.join(LEXICON_SKELETON) })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum UnitStatus {
    Ok,
    Degenerate { reason: String },
    Failed { reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitRecord {
    pub topic: Topic,
    pub year: i32,
    #[serde(flatten)]
    pub status: UnitStatus,
    pub headlines: usize,
    pub rows: usize,
    pub columns: usize,
    pub dropped_columns: Vec<String>,
    pub total_inertia: Option<f64>,
    pub explained_2d: Option<f64>,
}

impl UnitRecord {
    pub fn unit(&self) -> Unit {
        Unit { topic: self.topic, year: self.year }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SelectionStats {
    pub relevant: usize,
    pub overlap: usize,
    pub per_topic: BTreeMap<Topic, usize>,
    pub lexicon_entries: BTreeMap<Topic, usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesRecord {
    pub file: String,
    pub plotted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    /// Effective configuration without the output location and worker count.
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    pub ingest: IngestStats,
    pub selection: SelectionStats,
    pub units: Vec<UnitRecord>,
    pub series: Vec<SeriesRecord>,
    /// Output path (relative, `/`-separated) → sha256.
    pub files: BTreeMap<String, String>,
}

impl Manifest {
    pub fn load(out: &Path) -> Result<Self, Error> {
        let path = out.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
    }

    fn write(&self, out: &Path) -> Result<(), Error> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        write_file(out, MANIFEST, text.as_bytes()).map(|_| ())
    }
}

pub fn config_echo(cfg: &RunConfig) -> serde_json::Value {
    let mut v = serde_json::to_value(cfg).expect("config serializes");
    if let Some(output) = v.get_mut("output").and_then(|o| o.as_object_mut()) {
        output.remove("dir");
        output.remove("jobs");
    }
    v
}

pub fn unit_dir(unit: Unit) -> String {
    format!("{}/{}", unit.topic, unit.year)
}

fn scatter_title(unit: Unit) -> String {
    format!("{} {}", unit.topic.title(), unit.year)
}

fn series_title(s: &DiscrepancySeries) -> String {
    match &s.kind {
        SeriesKind::ClusterMad => format!("{}: cluster MAD", s.topic.title()),
        SeriesKind::CentroidDistance(o) => format!("{}: {o} distance to major cluster", s.topic.title()),
    }
}

fn series_file(s: &DiscrepancySeries) -> String {
    match &s.kind {
        SeriesKind::ClusterMad => format!("{}/series_mad", s.topic),
        SeriesKind::CentroidDistance(o) => format!("{}/series_centroid_{o}", s.topic),
    }
}

fn leaning_label(outlets: &OutletSet, name: &str) -> String {
    outlets.get(name).map_or_else(String::new, |o| o.leaning.to_string())
}

struct UnitOutcome {
    record: UnitRecord,
    points: Option<Vec<OutletPoint>>,
    files: Vec<(String, String)>,
}

struct UnitContext<'a> {
    cfg: &'a RunConfig,
    loaded: &'a Loaded,
    outlet_names: Vec<String>,
    topk_outlets: Vec<String>,
    canvas: Canvas,
}

fn run_unit(ctx: &UnitContext, unit: Unit, bucket: &[&Headline]) -> Result<UnitOutcome, Error> {
    let out = &ctx.cfg.output.dir;
    let mut record = UnitRecord {
        topic: unit.topic,
        year: unit.year,
        status: UnitStatus::Ok,
        headlines: bucket.len(),
        rows: 0,
        columns: 0,
        dropped_columns: Vec::new(),
        total_inertia: None,
        explained_2d: None,
    };
    if bucket.is_empty() {
        record.status = UnitStatus::Degenerate { reason: "no relevant headlines".into() };
        return Ok(UnitOutcome { record, points: None, files: Vec::new() });
    }
    let mut files = Vec::new();
    let dir = unit_dir(unit);

    let mode = ctx.cfg.analysis.counting;
    let k = ctx.cfg.thresholds.top_k;
    let mut tables = vec![top_k(bucket, Scope { topic: unit.topic, year: unit.year, outlet: None }, k, mode)];
    for o in &ctx.topk_outlets {
        tables.push(top_k(bucket, Scope { topic: unit.topic, year: unit.year, outlet: Some(o.clone()) }, k, mode));
    }
    let md = render_markdown_annotated(&tables, &ctx.loaded.annotations);
    files.push(write_file(out, &format!("{}/topk_{}.md", unit.topic, unit.year), md.as_bytes())?);

    let tab = build_table(unit, bucket, &ctx.outlet_names, ctx.cfg.thresholds.inclusion, mode);
    record.rows = tab.table.n_rows();
    record.columns = tab.table.n_cols();
    record.dropped_columns = tab.dropped_columns.clone();
    files.push(write_file(out, &format!("{dir}/table.csv"), tab.table.to_csv().as_bytes())?);
    if let Some(reason) = tab.degeneracy() {
        log::warn!("{unit}: degenerate, {reason}");
        record.status = UnitStatus::Degenerate { reason: reason.to_string() };
        return Ok(UnitOutcome { record, points: None, files });
    }
    let emb = match ca_embed(&tab.table) {
        Ok(e) => e,
        Err(e) => {
            log::error!("{e}");
            record.status = UnitStatus::Failed { reason: e.to_string() };
            return Ok(UnitOutcome { record, points: None, files });
        }
    };
    record.total_inertia = Some(emb.total_inertia);
    record.explained_2d = Some(emb.explained_2d);
    let outlets = &ctx.loaded.outlets;
    files.push(write_file(out, &format!("{dir}/embedding.csv"), emb.to_csv(|o| leaning_label(outlets, o)).as_bytes())?);
    files.push(write_file(out, &format!("{dir}/scree.csv"), emb.scree_csv().as_bytes())?);
    let leanings: Vec<Option<Leaning>> = emb.outlet_points.iter().map(|p| outlets.get(&p.outlet).map(|o| o.leaning)).collect();
    let svg = render_scatter_with(&scatter_title(unit), &emb.outlet_points, &leanings, ctx.canvas).map_err(|e| Error::Numeric(e.to_string()))?;
    files.push(write_file(out, &format!("{dir}/scatter.svg"), svg.as_bytes())?);
    Ok(UnitOutcome { record, points: Some(emb.outlet_points), files })
}

fn write_series(out: &Path, s: &DiscrepancySeries, canvas: Canvas, files: &mut Vec<(String, String)>) -> Result<SeriesRecord, Error> {
    let base = series_file(s);
    files.push(write_file(out, &format!("{base}.csv"), s.to_csv().as_bytes())?);
    let plotted = match render_series(&series_title(s), std::slice::from_ref(s), canvas) {
        Ok(svg) => {
            files.push(write_file(out, &format!("{base}.svg"), svg.as_bytes())?);
            true
        }
        Err(e) => {
            log::warn!("{base}: not plotted, {e}");
            false
        }
    };
    Ok(SeriesRecord { file: format!("{base}.csv"), plotted })
}

fn build_pool(jobs: usize) -> Result<rayon::ThreadPool, Error> {
    rayon::ThreadPoolBuilder::new().num_threads(jobs).build().map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Full analysis over every configured (topic, year) unit.
pub fn analyze(cfg: &RunConfig) -> Result<Manifest, Error> {
    cfg.validate(Needs { corpus: true, lexicon: true })?;
    build_pool(cfg.output.jobs)?.install(|| analyze_in_pool(cfg))
}

fn analyze_in_pool(cfg: &RunConfig) -> Result<Manifest, Error> {
    use rayon::prelude::*;

    let mut loaded = load_reference(cfg, true)?;
    let corpus = load_corpus(cfg, &mut loaded)?;
    let lexicon = loaded.lexicon.as_ref().expect("lexicon requested");
    for t in &cfg.scope.topics {
        if lexicon.count_for(*t) == 0 {
            log::warn!("lexicon has no bigram for topic {t}");
        }
    }
    let buckets = select_relevant_indices(&corpus.headlines, lexicon, cfg.analysis.multi_topic);
    let selection = SelectionStats {
        relevant: buckets.values().flatten().collect::<BTreeSet<_>>().len(),
        overlap: overlap_count(&buckets),
        per_topic: Topic::ALL.iter().map(|t| (*t, buckets.get(t).map_or(0, Vec::len))).collect(),
        lexicon_entries: Topic::ALL.iter().map(|t| (*t, lexicon.count_for(*t))).collect(),
    };

    let mut units: Vec<(Unit, Vec<&Headline>)> = Vec::new();
    for &topic in &cfg.scope.topics {
        let idx = buckets.get(&topic).map_or(&[][..], Vec::as_slice);
        for year in cfg.scope.years.range() {
            let bucket: Vec<&Headline> = idx.iter().map(|&i| &corpus.headlines[i]).filter(|h| h.year == year).collect();
            units.push((Unit { topic, year }, bucket));
        }
    }

    let ctx = UnitContext {
        cfg,
        loaded: &loaded,
        outlet_names: loaded.outlets.names(),
        topk_outlets: if cfg.analysis.topk_outlets.is_empty() { loaded.outlets.names() } else { cfg.analysis.topk_outlets.clone() },
        canvas: cfg.canvas(),
    };
    let outcomes: Vec<UnitOutcome> = units.par_iter().map(|(unit, bucket)| run_unit(&ctx, *unit, bucket)).collect::<Result<_, _>>()?;

    let out = &cfg.output.dir;
    let mut files: Vec<(String, String)> = outcomes.iter().flat_map(|o| o.files.iter().cloned()).collect();
    let mut series_records = Vec::new();
    let mut mad_series = Vec::new();
    let centroid_outlets = if cfg.analysis.centroid_outlets.is_empty() { loaded.outlets.names() } else { cfg.analysis.centroid_outlets.clone() };
    for &topic in &cfg.scope.topics {
        let topic_units: Vec<&UnitOutcome> = outcomes.iter().filter(|o| o.record.topic == topic).collect();
        if topic_units.iter().all(|o| o.record.headlines == 0) {
            continue;
        }
        let layouts: YearLayouts = topic_units.iter().map(|o| (o.record.year, o.points.clone())).collect();
        let thr = cfg.analysis.cluster_threshold;
        let mad = build_series(topic, &layouts, SeriesKind::ClusterMad, thr, cfg.mad_options());
        series_records.push(write_series(out, &mad, ctx.canvas, &mut files)?);
        if mad.has_values() {
            mad_series.push(mad);
        }
        for o in &centroid_outlets {
            let s = build_series(topic, &layouts, SeriesKind::CentroidDistance(o.clone()), thr, cfg.mad_options());
            series_records.push(write_series(out, &s, ctx.canvas, &mut files)?);
        }
    }
    if !mad_series.is_empty() {
        let svg = render_series("cluster MAD by topic", &mad_series, ctx.canvas).map_err(|e| Error::Numeric(e.to_string()))?;
        files.push(write_file(out, MAD_OVERLAY, svg.as_bytes())?);
    }

    let manifest = Manifest {
        tool: "mediagap".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: config_echo(cfg),
        inputs: loaded.hashes.clone(),
        ingest: corpus.stats,
        selection,
        units: outcomes.into_iter().map(|o| o.record).collect(),
        series: series_records,
        files: files.into_iter().collect(),
    };
    manifest.write(out)?;
    Ok(manifest)
}

/// Parses an `outlet,dim1,dim2,leaning` embedding CSV.
pub fn read_embedding_csv(text: &str) -> Result<Vec<(OutletPoint, Option<Leaning>)>, String> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| e.to_string())?.clone();
    if header.iter().collect::<Vec<_>>() != ["outlet", "dim1", "dim2", "leaning"] {
        return Err("expected header `outlet,dim1,dim2,leaning`".into());
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        let num = |i: usize| rec[i].trim().parse::<f64>().map_err(|_| format!("bad coordinate `{}`", &rec[i]));
        let leaning = match rec[3].trim() {
            "" => None,
            l => Some(l.parse::<Leaning>()?),
        };
        out.push((OutletPoint::new(&rec[0], num(1)?, num(2)?), leaning));
    }
    Ok(out)
}

fn read_scree(text: &str) -> Result<Vec<f64>, String> {
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split(',').nth(1).and_then(|v| v.parse::<f64>().ok()).ok_or_else(|| format!("bad scree line `{l}`")))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    fn new(name: &'static str, residual: f64, tolerance: f64) -> Self {
        Self { name, residual, tolerance, pass: residual <= tolerance }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "lowercase")]
pub enum Verdict {
    Pass { checks: Vec<Check> },
    Fail { checks: Vec<Check>, problems: Vec<String> },
    Skipped { reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UnitVerdict {
    pub unit: String,
    #[serde(flatten)]
    pub verdict: Verdict,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct VerifyReport {
    pub units: Vec<UnitVerdict>,
    /// Manifest files that are missing or whose content changed.
    pub tampered: Vec<String>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.tampered.is_empty() && !self.units.iter().any(|u| matches!(u.verdict, Verdict::Fail { .. }))
    }

    pub fn failed_units(&self) -> Vec<&str> {
        self.units.iter().filter(|u| matches!(u.verdict, Verdict::Fail { .. })).map(|u| u.unit.as_str()).collect()
    }
}

fn verify_unit(out: &Path, rec: &UnitRecord) -> Verdict {
    let unit = rec.unit();
    let dir = out.join(unit_dir(unit));
    let mut problems = Vec::new();
    let read = |name: &str, problems: &mut Vec<String>| match fs::read_to_string(dir.join(name)) {
        Ok(t) => Some(t),
        Err(e) => {
            problems.push(format!("{name}: {e}"));
            None
        }
    };
    let (Some(table_csv), Some(emb_csv), Some(scree_csv)) =
        (read("table.csv", &mut problems), read("embedding.csv", &mut problems), read("scree.csv", &mut problems))
    else {
        return Verdict::Fail { checks: Vec::new(), problems };
    };
    let table = match ContingencyTable::from_csv(unit, &table_csv) {
        Ok(t) => t,
        Err(e) => return Verdict::Fail { checks: Vec::new(), problems: vec![format!("table.csv: {e}")] },
    };
    let emitted = match read_embedding_csv(&emb_csv) {
        Ok(p) => p,
        Err(e) => return Verdict::Fail { checks: Vec::new(), problems: vec![format!("embedding.csv: {e}")] },
    };
    let sigma = match read_scree(&scree_csv) {
        Ok(s) => s,
        Err(e) => return Verdict::Fail { checks: Vec::new(), problems: vec![format!("scree.csv: {e}")] },
    };
    let (chi2, fresh) = match (chi_square_stat(&table), ca_embed(&table)) {
        (Ok(c), Ok(e)) => (c, e),
        (Err(e), _) | (_, Err(e)) => return Verdict::Fail { checks: Vec::new(), problems: vec![e.to_string()] },
    };
    let mut checks = Vec::new();

    let n = table.grand_total() as f64;
    let inertia: f64 = sigma.iter().map(|s| s * s).sum();
    checks.push(Check::new("inertia identity", (inertia * n - chi2).abs(), INERTIA_TOL * chi2.max(1.0)));

    if emitted.len() != table.n_cols() || emitted.iter().zip(table.columns()).any(|((p, _), c)| &p.outlet != c) {
        problems.push("embedding outlets do not match table columns".into());
        return Verdict::Fail { checks, problems };
    }
    let mut centre = [0.0f64; 2];
    for (j, (p, _)) in emitted.iter().enumerate() {
        let c = table.column_total(j) as f64 / n;
        centre[0] += c * p.coords[0];
        centre[1] += c * p.coords[1];
    }
    let scale = emitted.iter().flat_map(|(p, _)| p.coords).fold(1.0f64, |m, x| m.max(x.abs()));
    checks.push(Check::new("centering", centre[0].hypot(centre[1]), CENTERING_TOL * scale));

    let mut worst = 0.0f64;
    let g = &fresh.principal;
    for a in 0..table.n_cols() {
        for b in a + 1..table.n_cols() {
            let d: f64 = (0..g.cols()).map(|k| (g[(a, k)] - g[(b, k)]).powi(2)).sum::<f64>().sqrt();
            worst = worst.max((d - column_profile_distance(&table, a, b)).abs());
        }
    }
    checks.push(Check::new("distance preservation", worst, DISTANCE_TOL));

    let drift = emitted
        .iter()
        .zip(&fresh.outlet_points)
        .flat_map(|((e, _), f)| [(e.coords[0] - f.coords[0]).abs(), (e.coords[1] - f.coords[1]).abs()])
        .fold(0.0f64, f64::max);
    checks.push(Check::new("emitted coordinates", if drift.is_nan() { f64::INFINITY } else { drift }, POINT_TOL));

    if checks.iter().all(|c| c.pass) && problems.is_empty() {
        Verdict::Pass { checks }
    } else {
        Verdict::Fail { checks, problems }
    }
}

/// Re-checks every embedded unit of a finished output tree.
pub fn verify(out: &Path) -> Result<VerifyReport, Error> {
    let manifest = Manifest::load(out)?;
    let mut report = VerifyReport::default();
    for (rel, hash) in &manifest.files {
        match fs::read(out.join(rel)) {
            Ok(bytes) if sha256_hex(&bytes) == *hash => {}
            _ => report.tampered.push(rel.clone()),
        }
    }
    for rec in &manifest.units {
        let verdict = match &rec.status {
            UnitStatus::Ok => verify_unit(out, rec),
            UnitStatus::Degenerate { reason } | UnitStatus::Failed { reason } => Verdict::Skipped { reason: reason.clone() },
        };
        report.units.push(UnitVerdict { unit: rec.unit().to_string(), verdict });
    }
    Ok(report)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RenderSummary {
    pub scatters: usize,
    pub series: usize,
}

/// Re-renders every plot from the CSVs of an existing output tree and
/// refreshes their hashes in the manifest.
pub fn rerender(out: &Path, canvas: Canvas) -> Result<RenderSummary, Error> {
    let mut manifest = Manifest::load(out)?;
    let mut summary = RenderSummary::default();
    let mut written = Vec::new();
    for rec in manifest.units.iter().filter(|r| r.status == UnitStatus::Ok) {
        let unit = rec.unit();
        let path = out.join(unit_dir(unit)).join("embedding.csv");
        let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        let parsed = read_embedding_csv(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let (points, leanings): (Vec<OutletPoint>, Vec<Option<Leaning>>) = parsed.into_iter().unzip();
        let svg = render_scatter_with(&scatter_title(unit), &points, &leanings, canvas).map_err(|e| Error::Data(e.to_string()))?;
        written.push(write_file(out, &format!("{}/scatter.svg", unit_dir(unit)), svg.as_bytes())?);
        summary.scatters += 1;
    }
    let mut mad_series = Vec::new();
    for s in &mut manifest.series {
        let path = out.join(&s.file);
        let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        let parsed = DiscrepancySeries::from_csv(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let [series] = parsed.as_slice() else {
            return Err(Error::Data(format!("{}: expected exactly one series", path.display())));
        };
        let svg_rel = s.file.replace(".csv", ".svg");
        s.plotted = match render_series(&series_title(series), std::slice::from_ref(series), canvas) {
            Ok(svg) => {
                written.push(write_file(out, &svg_rel, svg.as_bytes())?);
                summary.series += 1;
                true
            }
            Err(_) => false,
        };
        if series.kind == SeriesKind::ClusterMad && series.has_values() {
            mad_series.push(series.clone());
        }
    }
    if !mad_series.is_empty() {
        let svg = render_series("cluster MAD by topic", &mad_series, canvas).map_err(|e| Error::Numeric(e.to_string()))?;
        written.push(write_file(out, MAD_OVERLAY, svg.as_bytes())?);
    }
    manifest.files.extend(written);
    manifest.write(out)?;
    Ok(summary)
}
