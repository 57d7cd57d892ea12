//! Correspondence analysis of an outlet × n-gram contingency table.
//!
//! With `P = N / n`, row masses `r`, column masses `c`, the standardized
//! residuals are `S = D_r^{-1/2} (P − r cᵀ) D_c^{-1/2}`. If `S = U Σ Vᵀ`, the
//! column principal coordinates are `G = D_c^{-1/2} V Σ`; Euclidean distances
//! between rows of `G` are the chi-square distances between outlet profiles
//! and `Σ σ² = χ² / n` is the total inertia.

use serde::Serialize;
use thiserror::Error;

use crate::linalg::{svd, Matrix, SvdError};
use crate::tabulate::{ContingencyTable, Degeneracy, Unit};

/// Singular values of `S` below this are numerical noise: `‖S‖²_F` is the
/// total inertia, which is bounded by `min(rows, cols) − 1`.
pub const ABSOLUTE_ZERO: f64 = 1e-13;

#[derive(Debug, Error, PartialEq)]
pub enum CaError {
    #[error("unit {unit} is degenerate: {reason}")]
    Degenerate { unit: Unit, reason: Degeneracy },
    #[error("unit {unit}: {source}")]
    Numeric { unit: Unit, source: SvdError },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OutletPoint {
    pub outlet: String,
    pub coords: [f64; 2],
}

impl OutletPoint {
    pub fn new(outlet: impl Into<String>, x: f64, y: f64) -> Self {
        Self { outlet: outlet.into(), coords: [x, y] }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CaEmbedding {
    pub unit: Unit,
    /// First two principal coordinates per outlet, in table column order.
    pub outlet_points: Vec<OutletPoint>,
    pub singular_values: Vec<f64>,
    pub total_inertia: f64,
    pub explained_2d: f64,
    /// Full-dimensional column principal coordinates (`cols × dims`).
    pub principal: Matrix,
    pub column_masses: Vec<f64>,
}

impl CaEmbedding {
    pub fn point(&self, outlet: &str) -> Option<[f64; 2]> {
        self.outlet_points.iter().find(|p| p.outlet == outlet).map(|p| p.coords)
    }

    /// Share of total inertia carried by each dimension (all zero when the
    /// total is zero).
    pub fn inertia_fractions(&self) -> Vec<f64> {
        self.singular_values
            .iter()
            .map(|s| if self.total_inertia > 0.0 { s * s / self.total_inertia } else { 0.0 })
            .collect()
    }

    /// `outlet,dim1,dim2,leaning` CSV.
    pub fn to_csv(&self, leaning_of: impl Fn(&str) -> String) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["outlet", "dim1", "dim2", "leaning"]).expect("in-memory write");
        for p in &self.outlet_points {
            w.write_record([
                p.outlet.clone(),
                p.coords[0].to_string(),
                p.coords[1].to_string(),
                leaning_of(&p.outlet),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8")
    }

    /// `dim,singular_value,inertia_fraction` CSV with 1-based dimensions.
    pub fn scree_csv(&self) -> String {
        let mut out = String::from("dim,singular_value,inertia_fraction\n");
        for (d, (s, f)) in self.singular_values.iter().zip(self.inertia_fractions()).enumerate() {
            out.push_str(&format!("{},{},{}\n", d + 1, s, f));
        }
        out
    }
}

/// Correspondence matrix pieces shared by the embedding and its diagnostics.
struct Masses {
    n: f64,
    rows: Vec<f64>,
    cols: Vec<f64>,
}

fn masses(table: &ContingencyTable) -> Masses {
    let n = table.grand_total() as f64;
    Masses {
        n,
        rows: (0..table.n_rows()).map(|i| table.row_total(i) as f64 / n).collect(),
        cols: (0..table.n_cols()).map(|j| table.column_total(j) as f64 / n).collect(),
    }
}

fn check_usable(table: &ContingencyTable) -> Result<(), CaError> {
    match table.degeneracy() {
        Some(reason) => Err(CaError::Degenerate { unit: table.unit, reason }),
        None => Ok(()),
    }
}

/// The standardized residual matrix `S` (rows × outlets).
pub fn standardized_residuals(table: &ContingencyTable) -> Matrix {
    let m = masses(table);
    let mut s = Matrix::zeros(table.n_rows(), table.n_cols());
    for i in 0..table.n_rows() {
        for j in 0..table.n_cols() {
            let p = table.get(i, j) as f64 / m.n;
            let e = m.rows[i] * m.cols[j];
            s[(i, j)] = (p - e) / e.sqrt();
        }
    }
    s
}

fn decompose(table: &ContingencyTable) -> Result<(crate::linalg::Svd, Masses), CaError> {
    check_usable(table)?;
    let mut dec = svd(&standardized_residuals(table)).map_err(|source| CaError::Numeric { unit: table.unit, source })?;
    for s in dec.singular_values.iter_mut() {
        if *s < ABSOLUTE_ZERO {
            *s = 0.0;
        }
    }
    Ok((dec, masses(table)))
}

/// Embeds the table's outlets in principal coordinates.
pub fn ca_embed(table: &ContingencyTable) -> Result<CaEmbedding, CaError> {
    let (dec, m) = decompose(table)?;
    let dims = dec.singular_values.len();
    let mut principal = Matrix::zeros(table.n_cols(), dims);
    for j in 0..table.n_cols() {
        for d in 0..dims {
            principal[(j, d)] = dec.v[(j, d)] * dec.singular_values[d] / m.cols[j].sqrt();
        }
    }
    let total_inertia: f64 = dec.singular_values.iter().map(|s| s * s).sum();
    let top2: f64 = dec.singular_values.iter().take(2).map(|s| s * s).sum();
    let explained_2d = if total_inertia > 0.0 { (top2 / total_inertia).clamp(0.0, 1.0) } else { 1.0 };
    let outlet_points = table
        .columns()
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let y = if dims > 1 { principal[(j, 1)] } else { 0.0 };
            OutletPoint::new(name.clone(), principal[(j, 0)], y)
        })
        .collect();
    Ok(CaEmbedding {
        unit: table.unit,
        outlet_points,
        singular_values: dec.singular_values,
        total_inertia,
        explained_2d,
        principal,
        column_masses: m.cols,
    })
}

/// Row (n-gram) principal coordinates `F = D_r^{-1/2} U Σ`, for diagnostics.
pub fn row_coordinates(table: &ContingencyTable) -> Result<Matrix, CaError> {
    let (dec, m) = decompose(table)?;
    let dims = dec.singular_values.len();
    let mut f = Matrix::zeros(table.n_rows(), dims);
    for i in 0..table.n_rows() {
        for d in 0..dims {
            f[(i, d)] = dec.u[(i, d)] * dec.singular_values[d] / m.rows[i].sqrt();
        }
    }
    Ok(f)
}

/// Pearson's χ² computed straight from the counts.
pub fn chi_square_stat(table: &ContingencyTable) -> Result<f64, CaError> {
    check_usable(table)?;
    let n = table.grand_total() as f64;
    let col_totals: Vec<f64> = (0..table.n_cols()).map(|j| table.column_total(j) as f64).collect();
    let mut chi2 = 0.0;
    for i in 0..table.n_rows() {
        let row_total = table.row_total(i) as f64;
        for (j, ct) in col_totals.iter().enumerate() {
            let expected = row_total * ct / n;
            let dev = table.get(i, j) as f64 - expected;
            chi2 += dev * dev / expected;
        }
    }
    Ok(chi2)
}

/// Chi-square distance between the profiles of columns `a` and `b`.
pub fn column_profile_distance(table: &ContingencyTable, a: usize, b: usize) -> f64 {
    let m = masses(table);
    let mut d2 = 0.0;
    for i in 0..table.n_rows() {
        let pa = table.get(i, a) as f64 / m.n / m.cols[a];
        let pb = table.get(i, b) as f64 / m.n / m.cols[b];
        d2 += (pa - pb).powi(2) / m.rows[i];
    }
    d2.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::{NGram, Topic};

    const UNIT: Unit = Unit { topic: Topic::DomesticPolitics, year: 2018 };

    pub(crate) fn table(rows: &[&[u64]]) -> ContingencyTable {
        let cols = rows[0].len();
        let names = (0..cols).map(|j| format!("o{j}")).collect();
        let grams = (0..rows.len()).map(|i| NGram::new(&["g", &format!("r{i}")]).unwrap()).collect();
        ContingencyTable::from_counts(UNIT, names, grams, rows.concat()).unwrap()
    }

    fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
        (a[0] - b[0]).hypot(a[1] - b[1])
    }

    #[test]
    fn identical_profiles_have_no_inertia() {
        let t = table(&[&[2, 4, 6], &[1, 2, 3], &[5, 10, 15]]);
        let e = ca_embed(&t).unwrap();
        assert!(e.total_inertia <= 1e-12);
        for p in &e.outlet_points {
            assert!(p.coords[0].abs() <= 1e-12 && p.coords[1].abs() <= 1e-12);
        }
        assert_eq!(e.explained_2d, 1.0);
        assert!(chi_square_stat(&t).unwrap().abs() < 1e-9);
    }

    #[test]
    fn diagonal_table_is_equilateral() {
        let t = table(&[&[10, 0, 0], &[0, 10, 0], &[0, 0, 10]]);
        let e = ca_embed(&t).unwrap();
        let p: Vec<[f64; 2]> = e.outlet_points.iter().map(|p| p.coords).collect();
        let d = [dist(p[0], p[1]), dist(p[0], p[2]), dist(p[1], p[2])];
        // profiles are unit vectors e_j, r_i = 1/3: d² = 3 + 3
        let oracle = column_profile_distance(&t, 0, 1);
        assert!((oracle - 6f64.sqrt()).abs() < 1e-12);
        for x in d {
            assert!((x - oracle).abs() < 1e-9, "{d:?}");
        }
        assert!((e.explained_2d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn chi_square_two_by_two() {
        // χ² is defined for any table; the 2-column case is embedded nowhere
        let t = ContingencyTable::from_counts(
            UNIT,
            vec!["a".into(), "b".into()],
            vec!["x y".parse().unwrap(), "y z".parse().unwrap()],
            vec![10, 0, 0, 10],
        )
        .unwrap();
        assert!(matches!(chi_square_stat(&t), Err(CaError::Degenerate { .. })));
        let t3 = table(&[&[10, 0, 0], &[0, 10, 10]]);
        // expected: row totals 10, 20; col totals 10,10,10; n=30
        // e = [[10/3]*3, [20/3]*3]
        let e1: f64 = 10.0 / 3.0;
        let e2: f64 = 20.0 / 3.0;
        let want = (10.0 - e1).powi(2) / e1 + 2.0 * e1 + e2 + 2.0 * (10.0 - e2).powi(2) / e2;
        assert!((chi_square_stat(&t3).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn inertia_matches_chi_square() {
        let t = table(&[&[12, 3, 7, 1], &[0, 9, 2, 4], &[5, 5, 5, 20], &[1, 0, 8, 2]]);
        let e = ca_embed(&t).unwrap();
        let chi2 = chi_square_stat(&t).unwrap();
        assert!((e.total_inertia * t.grand_total() as f64 - chi2).abs() <= 1e-10 * chi2.max(1.0));
        assert!(e.singular_values.iter().filter(|s| **s > 0.0).count() <= 3);
    }

    #[test]
    fn degenerate_refused() {
        let t = table(&[&[1, 2], &[3, 4]]);
        assert!(matches!(ca_embed(&t), Err(CaError::Degenerate { reason: Degeneracy::TooFewColumns(2), .. })));
        let t = table(&[&[1, 2, 3]]);
        assert!(matches!(ca_embed(&t), Err(CaError::Degenerate { reason: Degeneracy::TooFewRows(1), .. })));
    }

    #[test]
    fn row_coordinates_reproduce_row_profiles() {
        let t = table(&[&[12, 3, 7], &[0, 9, 2], &[5, 5, 5], &[1, 0, 8]]);
        let f = row_coordinates(&t).unwrap();
        let tt = ContingencyTable::from_counts(
            UNIT,
            t.rows().iter().map(|g| g.to_string().replace(' ', "_")).collect(),
            (0..3).map(|j| NGram::new(&["c", &format!("{j}")]).unwrap()).collect(),
            (0..3).flat_map(|j| (0..4).map(move |i| (i, j))).map(|(i, j)| t.get(i, j)).collect(),
        )
        .unwrap();
        for a in 0..4 {
            for b in 0..4 {
                let d: f64 = (0..f.cols()).map(|k| (f[(a, k)] - f[(b, k)]).powi(2)).sum::<f64>().sqrt();
                assert!((d - column_profile_distance(&tt, a, b)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn csv_outputs() {
        let t = table(&[&[10, 0, 0], &[0, 10, 0], &[0, 0, 10]]);
        let e = ca_embed(&t).unwrap();
        let csv = e.to_csv(|_| "left".into());
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.starts_with("outlet,dim1,dim2,leaning\n"));
        let scree = e.scree_csv();
        assert_eq!(scree.lines().count(), 4);
        assert!(scree.lines().nth(3).unwrap().starts_with("3,0,0"));
    }
}
