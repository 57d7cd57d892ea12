//! Outlet × n-gram contingency tables for one (topic, year) unit.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Headline;
use crate::lexicon::{count_ngrams, CountingMode, NGram, Topic};

/// Default inclusion threshold: a row survives if some outlet uses it more
/// than this many times.
pub const DEFAULT_INCLUSION_THRESHOLD: u64 = 50;
pub const MIN_COLUMNS: usize = 3;
pub const MIN_ROWS: usize = 2;
pub(crate) const TABLE_ARITIES: [usize; 2] = [2, 3];

/// One analysis unit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Unit {
    pub topic: Topic,
    pub year: i32,
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.topic, self.year)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TableError {
    #[error("counts have {got} cells, expected {rows}×{cols}")]
    Shape { rows: usize, cols: usize, got: usize },
    #[error("row `{0}` is all zero")]
    ZeroRow(String),
    #[error("column `{0}` is all zero")]
    ZeroColumn(String),
    #[error("table csv: {0}")]
    Csv(String),
}

/// Why a unit cannot be embedded.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Degeneracy {
    TooFewColumns(usize),
    TooFewRows(usize),
}

impl fmt::Display for Degeneracy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Degeneracy::TooFewColumns(n) => write!(f, "{n} outlet column(s) survive, need at least {MIN_COLUMNS}"),
            Degeneracy::TooFewRows(n) => write!(f, "{n} n-gram row(s) survive, need at least {MIN_ROWS}"),
        }
    }
}

/// Row-major count matrix with labeled rows (n-grams) and columns (outlets).
/// No row or column is all zero.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContingencyTable {
    pub unit: Unit,
    columns: Vec<String>,
    rows: Vec<NGram>,
    counts: Vec<u64>,
}

impl ContingencyTable {
    pub fn from_counts(unit: Unit, columns: Vec<String>, rows: Vec<NGram>, counts: Vec<u64>) -> Result<Self, TableError> {
        let (r, c) = (rows.len(), columns.len());
        if counts.len() != r * c {
            return Err(TableError::Shape { rows: r, cols: c, got: counts.len() });
        }
        let t = Self { unit, columns, rows, counts };
        if let Some(i) = (0..r).find(|&i| t.row_total(i) == 0) {
            return Err(TableError::ZeroRow(t.rows[i].to_string()));
        }
        if let Some(j) = (0..c).find(|&j| t.column_total(j) == 0) {
            return Err(TableError::ZeroColumn(t.columns[j].clone()));
        }
        Ok(t)
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[NGram] {
        &self.rows
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn get(&self, row: usize, col: usize) -> u64 {
        self.counts[row * self.columns.len() + col]
    }

    pub fn row(&self, row: usize) -> &[u64] {
        let c = self.columns.len();
        &self.counts[row * c..(row + 1) * c]
    }

    pub fn row_total(&self, row: usize) -> u64 {
        self.row(row).iter().sum()
    }

    pub fn column_total(&self, col: usize) -> u64 {
        (0..self.rows.len()).map(|i| self.get(i, col)).sum()
    }

    pub fn grand_total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn degeneracy(&self) -> Option<Degeneracy> {
        if self.n_cols() < MIN_COLUMNS {
            Some(Degeneracy::TooFewColumns(self.n_cols()))
        } else if self.n_rows() < MIN_ROWS {
            Some(Degeneracy::TooFewRows(self.n_rows()))
        } else {
            None
        }
    }

    /// Same table with columns reordered: column `j` of the result is
    /// column `perm[j]` of `self`.
    pub fn permute_columns(&self, perm: &[usize]) -> Self {
        let columns = perm.iter().map(|&j| self.columns[j].clone()).collect();
        let counts = (0..self.n_rows())
            .flat_map(|i| perm.iter().map(move |&j| (i, j)))
            .map(|(i, j)| self.get(i, j))
            .collect();
        Self { unit: self.unit, columns, rows: self.rows.clone(), counts }
    }

    /// Every count multiplied by `k`.
    pub fn scaled(&self, k: u64) -> Self {
        Self { counts: self.counts.iter().map(|c| c * k).collect(), ..self.clone() }
    }

    /// `ngram,<outlet>...` CSV dump.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["ngram".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header).expect("in-memory write");
        for (i, gram) in self.rows.iter().enumerate() {
            let mut rec = vec![gram.to_string()];
            rec.extend(self.row(i).iter().map(u64::to_string));
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8")
    }

    pub fn from_csv(unit: Unit, text: &str) -> Result<Self, TableError> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let header = rdr.headers().map_err(|e| TableError::Csv(e.to_string()))?.clone();
        if header.get(0) != Some("ngram") {
            return Err(TableError::Csv("first column must be `ngram`".into()));
        }
        let columns: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut rows = Vec::new();
        let mut counts = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| TableError::Csv(e.to_string()))?;
            rows.push(rec[0].parse::<NGram>().map_err(TableError::Csv)?);
            for cell in rec.iter().skip(1) {
                counts.push(cell.trim().parse::<u64>().map_err(|e| TableError::Csv(format!("`{cell}`: {e}")))?);
            }
        }
        Self::from_counts(unit, columns, rows, counts)
    }
}

/// Tabulation output: the table plus the outlets dropped for having no
/// retained n-gram.
#[derive(Clone, Debug)]
pub struct Tabulation {
    pub table: ContingencyTable,
    pub dropped_columns: Vec<String>,
}

impl Tabulation {
    pub fn degeneracy(&self) -> Option<Degeneracy> {
        self.table.degeneracy()
    }
}

/// Builds the unit's table from its headline bucket.
///
/// Rows are the bigrams and trigrams that some outlet uses strictly more than
/// `threshold` times, ordered by descending total then text. Columns follow
/// `outlets`; all-zero columns are dropped.
pub fn build_table(unit: Unit, bucket: &[&Headline], outlets: &[String], threshold: u64, mode: CountingMode) -> Tabulation {
    assert!(threshold >= 1, "inclusion threshold must be at least 1");
    let per_outlet: Vec<HashMap<NGram, u64>> = outlets
        .iter()
        .map(|o| count_ngrams(bucket.iter().copied().filter(|h| &h.outlet == o), &TABLE_ARITIES, mode))
        .collect();

    let mut retained: Vec<(NGram, u64)> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for counts in &per_outlet {
        for (gram, &n) in counts {
            if n > threshold && seen.insert(gram.clone()) {
                let total = per_outlet.iter().map(|c| c.get(gram).copied().unwrap_or(0)).sum();
                retained.push((gram.clone(), total));
            }
        }
    }
    retained.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

    let cell = |gram: &NGram, j: usize| per_outlet[j].get(gram).copied().unwrap_or(0);
    let keep: Vec<usize> = (0..outlets.len()).filter(|&j| retained.iter().any(|(g, _)| cell(g, j) > 0)).collect();
    let dropped_columns: Vec<String> = (0..outlets.len())
        .filter(|j| !keep.contains(j))
        .map(|j| outlets[j].clone())
        .collect();
    if !dropped_columns.is_empty() {
        log::warn!("{unit}: dropping outlet column(s) with no retained n-gram: {}", dropped_columns.join(", "));
    }
    let counts = retained.iter().flat_map(|(g, _)| keep.iter().map(move |&j| cell(g, j))).collect();
    let table = ContingencyTable::from_counts(
        unit,
        keep.iter().map(|&j| outlets[j].clone()).collect(),
        retained.into_iter().map(|(g, _)| g).collect(),
        counts,
    )
    .expect("retained rows and kept columns are non-zero by construction");
    Tabulation { table, dropped_columns }
}
