//! Top-k n-gram tables, Markdown rendering and SVG plots.
//!
//! Every renderer is a pure function of its inputs; coordinates are printed
//! with fixed precision so identical inputs give identical bytes.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::ca::OutletPoint;
use crate::corpus::{Leaning, OutletSet};
use crate::lexicon::{count_ngrams, CountingMode, NGram, Topic};
use crate::metrics::DiscrepancySeries;
use crate::tabulate::TABLE_ARITIES;
use crate::corpus::Headline;

pub const DEFAULT_TOP_K: usize = 10;
pub const DEFAULT_WIDTH: u32 = 800;
pub const DEFAULT_HEIGHT: u32 = 600;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RenderError {
    #[error("series has no values to plot (every year is a gap)")]
    AllGaps,
    #[error("nothing to plot: {0}")]
    Empty(String),
    #[error("annotation line {line}: {reason}")]
    Annotation { line: usize, reason: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Scope {
    pub topic: Topic,
    pub year: i32,
    pub outlet: Option<String>,
}

impl Scope {
    pub fn label(&self) -> String {
        match &self.outlet {
            Some(o) => format!("{} {} {}", self.topic, self.year, o),
            None => format!("{} {}", self.topic, self.year),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TopKTable {
    pub scope: Scope,
    pub rows: Vec<(NGram, u64)>,
}

/// The `k` most frequent bigrams and trigrams of the bucket (restricted to
/// the scope's outlet when set). Ties break on the n-gram text.
pub fn top_k(bucket: &[&Headline], scope: Scope, k: usize, mode: CountingMode) -> TopKTable {
    assert!(k >= 1, "k must be at least 1");
    let scoped = bucket.iter().copied().filter(|h| scope.outlet.as_ref().is_none_or(|o| &h.outlet == o));
    let mut rows: Vec<(NGram, u64)> = count_ngrams(scoped, &TABLE_ARITIES, mode).into_iter().collect();
    rows.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    rows.truncate(k);
    TopKTable { scope, rows }
}

/// Optional highlighting: n-gram → (category, color).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Annotations {
    entries: HashMap<NGram, (String, String)>,
}

impl Annotations {
    /// `ngram<TAB>category<TAB>color` lines; `#` comments allowed.
    pub fn parse(text: &str) -> Result<Self, RenderError> {
        let mut entries = HashMap::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            let err = |reason: String| RenderError::Annotation { line: idx + 1, reason };
            if f.len() != 3 {
                return Err(err("expected `ngram<TAB>category<TAB>color`".into()));
            }
            let gram: NGram = f[0].parse().map_err(err)?;
            let color = f[2].trim();
            if color.is_empty() || !color.chars().all(|c| c.is_ascii_alphanumeric() || c == '#') {
                return Err(RenderError::Annotation { line: idx + 1, reason: format!("bad color `{color}`") });
            }
            entries.insert(gram, (f[1].trim().to_string(), color.to_string()));
        }
        Ok(Self { entries })
    }

    pub fn get(&self, gram: &NGram) -> Option<(&str, &str)> {
        self.entries.get(gram).map(|(c, col)| (c.as_str(), col.as_str()))
    }
}

fn md_escape(s: &str) -> String {
    s.replace('|', "\\|")
}

/// Pipe table with one column per scope and one row per rank.
pub fn render_markdown(tables: &[TopKTable]) -> String {
    render_markdown_annotated(tables, &Annotations::default())
}

pub fn render_markdown_annotated(tables: &[TopKTable], notes: &Annotations) -> String {
    if tables.is_empty() {
        return String::new();
    }
    let mut out = String::from("| rank |");
    for t in tables {
        let _ = write!(out, " {} |", md_escape(&t.scope.label()));
    }
    out.push_str("\n|---:|");
    for _ in tables {
        out.push_str("---|");
    }
    out.push('\n');
    let depth = tables.iter().map(|t| t.rows.len()).max().unwrap_or(0);
    for rank in 0..depth {
        let _ = write!(out, "| {} |", rank + 1);
        for t in tables {
            match t.rows.get(rank) {
                Some((gram, n)) => {
                    let cell = match notes.get(gram) {
                        Some((_, color)) => format!("<span style=\"color:{color}\">{gram}</span> ({n})"),
                        None => format!("{gram} ({n})"),
                    };
                    let _ = write!(out, " {} |", md_escape(&cell));
                }
                None => out.push_str("  |"),
            }
        }
        out.push('\n');
    }
    out
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Canvas {
    pub width: u32,
    pub height: u32,
}

impl Default for Canvas {
    fn default() -> Self {
        Self { width: DEFAULT_WIDTH, height: DEFAULT_HEIGHT }
    }
}

const MARGIN: f64 = 60.0;

/// Maps data coordinates into the plot area. Each axis gets a 10% margin of
/// its data span; a zero span is widened to ±1 (or ±10% of the value).
struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    canvas: Canvas,
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    let span = hi - lo;
    if span > 0.0 {
        (lo - 0.1 * span, hi + 0.1 * span)
    } else {
        let pad = if lo == 0.0 { 1.0 } else { 0.1 * lo.abs() };
        (lo - pad, hi + pad)
    }
}

impl Frame {
    fn new(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone, canvas: Canvas) -> Self {
        let (xl, xh) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), x| (l.min(x), h.max(x)));
        let (yl, yh) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), y| (l.min(y), h.max(y)));
        let (x0, x1) = padded(xl, xh);
        let (y0, y1) = padded(yl, yh);
        Self { x0, x1, y0, y1, canvas }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) / (self.x1 - self.x0) * (self.canvas.width as f64 - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        self.canvas.height as f64 - MARGIN - (y - self.y0) / (self.y1 - self.y0) * (self.canvas.height as f64 - 2.0 * MARGIN)
    }

    fn axes(&self, out: &mut String) {
        let (w, h) = (self.canvas.width as f64, self.canvas.height as f64);
        let _ = writeln!(
            out,
            "<line class=\"axis\" x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#444\"/>",
            MARGIN,
            h - MARGIN,
            w - MARGIN,
            h - MARGIN
        );
        let _ = writeln!(
            out,
            "<line class=\"axis\" x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#444\"/>",
            MARGIN,
            MARGIN,
            MARGIN,
            h - MARGIN
        );
        for (x, label) in [(self.x0, self.x0), (self.x1, self.x1)] {
            let _ = writeln!(
                out,
                "<text class=\"tick\" x=\"{:.2}\" y=\"{:.2}\" font-size=\"10\" text-anchor=\"middle\">{:.3}</text>",
                self.px(x),
                h - MARGIN + 16.0,
                label
            );
        }
        for (y, label) in [(self.y0, self.y0), (self.y1, self.y1)] {
            let _ = writeln!(
                out,
                "<text class=\"tick\" x=\"{:.2}\" y=\"{:.2}\" font-size=\"10\" text-anchor=\"end\">{:.3}</text>",
                MARGIN - 6.0,
                self.py(y) + 3.0,
                label
            );
        }
    }
}

fn svg_open(canvas: Canvas, title: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">",
        w = canvas.width,
        h = canvas.height
    );
    let _ = writeln!(
        out,
        "<text class=\"title\" x=\"{:.2}\" y=\"24\" font-size=\"16\" text-anchor=\"middle\">{}</text>",
        canvas.width as f64 / 2.0,
        xml_escape(title)
    );
    out
}

fn marker(leaning: Option<Leaning>, x: f64, y: f64) -> String {
    const R: f64 = 6.0;
    match leaning {
        Some(Leaning::Left) => format!("<circle class=\"marker leaning-left\" cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"{R}\" fill=\"#1f77b4\"/>"),
        Some(Leaning::Central) => format!(
            "<rect class=\"marker leaning-central\" x=\"{:.2}\" y=\"{:.2}\" width=\"{}\" height=\"{}\" fill=\"#7f7f7f\"/>",
            x - R,
            y - R,
            2.0 * R,
            2.0 * R
        ),
        Some(Leaning::Right) => format!(
            "<polygon class=\"marker leaning-right\" points=\"{:.2},{:.2} {:.2},{:.2} {:.2},{:.2}\" fill=\"#d62728\"/>",
            x,
            y - R,
            x - R,
            y + R,
            x + R,
            y + R
        ),
        None => format!(
            "<polygon class=\"marker leaning-unknown\" points=\"{:.2},{:.2} {:.2},{:.2} {:.2},{:.2} {:.2},{:.2}\" fill=\"#2ca02c\"/>",
            x,
            y - R,
            x + R,
            y,
            x,
            y + R,
            x - R,
            y
        ),
    }
}

/// Scatter of the outlet layout; marker shape encodes leaning and every
/// point carries its outlet name.
pub fn render_scatter(title: &str, points: &[OutletPoint], outlets: &OutletSet, canvas: Canvas) -> Result<String, RenderError> {
    let leanings: Vec<Option<Leaning>> = points.iter().map(|p| outlets.get(&p.outlet).map(|o| o.leaning)).collect();
    render_scatter_with(title, points, &leanings, canvas)
}

pub fn render_scatter_with(title: &str, points: &[OutletPoint], leanings: &[Option<Leaning>], canvas: Canvas) -> Result<String, RenderError> {
    if points.is_empty() {
        return Err(RenderError::Empty("no outlet points".into()));
    }
    let frame = Frame::new(points.iter().map(|p| p.coords[0]), points.iter().map(|p| p.coords[1]), canvas);
    let mut out = svg_open(canvas, title);
    frame.axes(&mut out);
    for (p, leaning) in points.iter().zip(leanings) {
        let (x, y) = (frame.px(p.coords[0]), frame.py(p.coords[1]));
        out.push_str(&marker(*leaning, x, y));
        out.push('\n');
        let _ = writeln!(
            out,
            "<text class=\"label\" x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\">{}</text>",
            x + 9.0,
            y - 9.0,
            xml_escape(&p.outlet)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

const PALETTE: [&str; 8] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

fn series_name(s: &DiscrepancySeries) -> String {
    match s.kind.outlet() {
        Some(o) => format!("{} {} {}", s.topic, s.kind.label(), o),
        None => format!("{} {}", s.topic, s.kind.label()),
    }
}

/// Line chart of one or more series over years. Consecutive non-gap years
/// are joined by a polyline; gaps break the line. Every value gets a marker.
pub fn render_series(title: &str, series: &[DiscrepancySeries], canvas: Canvas) -> Result<String, RenderError> {
    if !series.iter().any(DiscrepancySeries::has_values) {
        return Err(RenderError::AllGaps);
    }
    let years = || series.iter().flat_map(|s| s.values.keys().map(|y| *y as f64));
    let values = || series.iter().flat_map(|s| s.values.values().flatten().copied());
    let frame = Frame::new(years(), values().chain(std::iter::once(0.0)), canvas);
    let mut out = svg_open(canvas, title);
    frame.axes(&mut out);
    for (idx, s) in series.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        let mut runs: Vec<Vec<(i32, f64)>> = vec![Vec::new()];
        let mut prev: Option<i32> = None;
        for (&year, v) in &s.values {
            match v {
                Some(v) if prev.is_some_and(|p| p + 1 == year) => runs.last_mut().expect("non-empty").push((year, *v)),
                Some(v) => runs.push(vec![(year, *v)]),
                None => {}
            }
            prev = v.map(|_| year);
        }
        for run in runs.iter().filter(|r| r.len() > 1) {
            let pts: Vec<String> = run.iter().map(|(y, v)| format!("{:.2},{:.2}", frame.px(*y as f64), frame.py(*v))).collect();
            let _ = writeln!(
                out,
                "<polyline class=\"series-line\" data-series=\"{}\" points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>",
                idx,
                pts.join(" ")
            );
        }
        for (y, v) in runs.iter().flatten() {
            let _ = writeln!(
                out,
                "<circle class=\"series-point\" data-series=\"{}\" cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>",
                idx,
                frame.px(*y as f64),
                frame.py(*v)
            );
        }
    }
    if series.len() > 1 {
        for (idx, s) in series.iter().enumerate() {
            let y = MARGIN + 16.0 * idx as f64;
            let x = canvas.width as f64 - MARGIN - 150.0;
            let _ = writeln!(
                out,
                "<g class=\"legend-entry\"><rect x=\"{:.2}\" y=\"{:.2}\" width=\"10\" height=\"10\" fill=\"{}\"/><text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\">{}</text></g>",
                x,
                y - 9.0,
                PALETTE[idx % PALETTE.len()],
                x + 14.0,
                y,
                xml_escape(&series_name(s))
            );
        }
    }
    out.push_str("</svg>\n");
    Ok(out)
}
