//! Dense matrices and a one-sided Jacobi SVD sized for narrow tables.
//!
//! The column dimension here is the number of outlets (single digits), so the
//! decomposition orthogonalizes the columns of `A` directly with plane
//! rotations (Hestenes' method) instead of going through `AᵀA`, which keeps
//! full relative accuracy in the small singular values.

use std::fmt;

use thiserror::Error;

/// Maximum number of Jacobi sweeps before giving up.
pub const DEFAULT_MAX_SWEEPS: usize = 100;
/// A column pair counts as orthogonal once |cos θ| drops below this.
pub const ORTHOGONALITY_TOL: f64 = 1e-15;
/// Singular values at or below this fraction of the largest are set to zero.
pub const RELATIVE_ZERO: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum SvdError {
    #[error("matrix entry ({row}, {col}) is not finite: {value}")]
    NonFinite { row: usize, col: usize, value: f64 },
    #[error("Jacobi SVD did not converge in {sweeps} sweeps (largest remaining |cos| = {residual:e})")]
    NoConvergence { sweeps: usize, residual: f64 },
}

/// Row-major dense matrix.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{}", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        Ok(())
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length must be rows × cols");
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Self { rows: rows.len(), cols, data: rows.concat() }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, d) in diag.iter().enumerate() {
            m[(i, i)] = *d;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "inner dimensions differ");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    fn first_non_finite(&self) -> Option<(usize, usize, f64)> {
        self.data
            .iter()
            .position(|x| !x.is_finite())
            .map(|p| (p / self.cols, p % self.cols, self.data[p]))
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// Thin SVD `A = U Σ Vᵀ` of an `m × k` matrix, `p = min(m, k)`.
///
/// `u` is `m × p`, `v` is `k × p`, both with orthonormal columns; singular
/// values descend. Each column of `v` has its largest-magnitude entry
/// positive (first index wins ties), which fixes the sign of every pair.
#[derive(Clone, Debug, PartialEq)]
pub struct Svd {
    pub u: Matrix,
    pub singular_values: Vec<f64>,
    pub v: Matrix,
}

impl Svd {
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for i in 0..us.rows {
            for (j, s) in self.singular_values.iter().enumerate() {
                us[(i, j)] *= s;
            }
        }
        us.matmul(&self.v.transpose())
    }

    /// Number of singular values above zero.
    pub fn rank(&self) -> usize {
        self.singular_values.iter().filter(|s| **s > 0.0).count()
    }
}

pub fn svd(a: &Matrix) -> Result<Svd, SvdError> {
    svd_with_budget(a, DEFAULT_MAX_SWEEPS)
}

pub fn svd_with_budget(a: &Matrix, max_sweeps: usize) -> Result<Svd, SvdError> {
    if let Some((row, col, value)) = a.first_non_finite() {
        return Err(SvdError::NonFinite { row, col, value });
    }
    if a.cols > a.rows {
        let t = svd_tall(&a.transpose(), max_sweeps)?;
        let mut out = Svd { u: t.v, singular_values: t.singular_values, v: t.u };
        canonicalize_signs(&mut out);
        return Ok(out);
    }
    let mut out = svd_tall(a, max_sweeps)?;
    canonicalize_signs(&mut out);
    Ok(out)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    for (xp, xq) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
        let (a, b) = (*xp, *xq);
        *xp = c * a - s * b;
        *xq = s * a + c * b;
    }
}

/// One-sided Jacobi on a tall (`m ≥ k`) matrix; signs not yet canonical.
fn svd_tall(a: &Matrix, max_sweeps: usize) -> Result<Svd, SvdError> {
    let (m, k) = (a.rows, a.cols);
    let mut w: Vec<Vec<f64>> = (0..k).map(|j| a.column(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..k)
        .map(|j| {
            let mut e = vec![0.0; k];
            e[j] = 1.0;
            e
        })
        .collect();

    let mut converged = k < 2;
    let mut residual = 0.0f64;
    for _ in 0..max_sweeps {
        if converged {
            break;
        }
        let mut rotated = false;
        residual = 0.0;
        for p in 0..k {
            for q in p + 1..k {
                let alpha = dot(&w[p], &w[p]);
                let beta = dot(&w[q], &w[q]);
                let gamma = dot(&w[p], &w[q]);
                if alpha == 0.0 || beta == 0.0 || gamma == 0.0 {
                    continue;
                }
                let cos = gamma.abs() / (alpha.sqrt() * beta.sqrt());
                residual = residual.max(cos);
                if cos <= ORTHOGONALITY_TOL {
                    continue;
                }
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                rotate(&mut v, p, q, c, s);
                rotated = true;
            }
        }
        converged = !rotated;
    }
    if !converged {
        return Err(SvdError::NoConvergence { sweeps: max_sweeps, residual });
    }

    let mut sigma: Vec<f64> = w.iter().map(|col| dot(col, col).sqrt()).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]));
    let smax = sigma.iter().copied().fold(0.0, f64::max);
    for s in sigma.iter_mut() {
        if *s <= RELATIVE_ZERO * smax {
            *s = 0.0;
        }
    }

    let mut u = Matrix::zeros(m, k);
    let mut vm = Matrix::zeros(k, k);
    let mut singular_values = Vec::with_capacity(k);
    let mut missing = Vec::new();
    for (dst, &src) in order.iter().enumerate() {
        singular_values.push(sigma[src]);
        for i in 0..k {
            vm[(i, dst)] = v[src][i];
        }
        if sigma[src] > 0.0 {
            for i in 0..m {
                u[(i, dst)] = w[src][i] / sigma[src];
            }
        } else {
            missing.push(dst);
        }
    }
    complete_basis(&mut u, &missing);
    Ok(Svd { u, singular_values, v: vm })
}

/// Fills the listed columns of `u` with unit vectors orthogonal to every
/// other column, picking the standard basis vector with the largest
/// orthogonal remainder each time.
fn complete_basis(u: &mut Matrix, missing: &[usize]) {
    let (m, k) = (u.rows, u.cols);
    let mut filled: Vec<usize> = (0..k).filter(|j| !missing.contains(j)).collect();
    for &j in missing {
        let mut best = 0;
        let mut best_rem = f64::NEG_INFINITY;
        for i in 0..m {
            let rem = 1.0 - filled.iter().map(|&c| u[(i, c)] * u[(i, c)]).sum::<f64>();
            if rem > best_rem {
                best_rem = rem;
                best = i;
            }
        }
        let mut x = vec![0.0; m];
        x[best] = 1.0;
        for _ in 0..2 {
            for &c in &filled {
                let proj: f64 = (0..m).map(|i| u[(i, c)] * x[i]).sum();
                for (i, xi) in x.iter_mut().enumerate() {
                    *xi -= proj * u[(i, c)];
                }
            }
        }
        let norm = dot(&x, &x).sqrt();
        for (i, xi) in x.iter().enumerate() {
            u[(i, j)] = xi / norm;
        }
        filled.push(j);
    }
}

fn canonicalize_signs(svd: &mut Svd) {
    for j in 0..svd.v.cols {
        let mut pivot = 0;
        for i in 1..svd.v.rows {
            if svd.v[(i, j)].abs() > svd.v[(pivot, j)].abs() {
                pivot = i;
            }
        }
        if svd.v[(pivot, j)] < 0.0 {
            for i in 0..svd.v.rows {
                svd.v[(i, j)] = -svd.v[(i, j)];
            }
            for i in 0..svd.u.rows {
                svd.u[(i, j)] = -svd.u[(i, j)];
            }
        }
    }
}

/// Largest |(XᵀX − I)_ij|.
pub fn orthonormality_residual(x: &Matrix) -> f64 {
    let g = x.transpose().matmul(x);
    g.sub(&Matrix::identity(x.cols)).max_abs()
}
