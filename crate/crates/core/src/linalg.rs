//! Dense real matrices and the handful of factorizations the estimators need.
//!
//! Everything here targets small dense problems (dimension up to a few
//! hundred). Matrices are stored row-major.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Column vectors are plain `Vec<f64>`.
pub type Vector = Vec<f64>;

/// Dense row-major matrix.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, entries: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self { rows, cols, entries: vec![value; rows * cols] }
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    /// Builds a matrix from row-major entries, rejecting non-finite values.
    pub fn from_vec(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                expected: format!("{} entries", rows * cols),
                got: format!("{} entries", entries.len()),
            });
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(invalid("matrix entries must be finite"));
        }
        Ok(Self { rows, cols, entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(invalid("ragged rows"));
        }
        Self::from_vec(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.entries[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.entries[r * self.cols..(r + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t[(c, r)] = self[(r, c)];
            }
        }
        t
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { rows: self.rows, cols: self.cols, entries: self.entries.iter().map(|v| v * s).collect() }
    }

    /// Matrix product `self * other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::ShapeMismatch {
                expected: format!("{} rows", self.cols),
                got: format!("{} rows", other.rows),
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                for (o, b) in out.row_mut(r).iter_mut().zip(orow) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self * x`. Panics on length mismatch.
    pub fn mul_vec(&self, x: &[f64]) -> Vector {
        assert_eq!(x.len(), self.cols, "mul_vec length mismatch");
        (0..self.rows).map(|r| dot(self.row(r), x)).collect()
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        check_same_shape(self, other)?;
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().zip(&other.entries).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        check_same_shape(self, other)?;
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().zip(&other.entries).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm2(&self.entries)
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.entries[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.entries[r * self.cols + c]
    }
}

fn check_same_shape(a: &Matrix, b: &Matrix) -> Result<()> {
    if a.rows != b.rows || a.cols != b.cols {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{}", a.rows, a.cols),
            got: format!("{}x{}", b.rows, b.cols),
        });
    }
    Ok(())
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Largest singular value of `m`.
///
/// Computed as the square root of the top eigenvalue of the smaller Gram
/// matrix (`MᵀM` or `MMᵀ`) via cyclic Jacobi; `tol` bounds the relative
/// off-diagonal mass left when the sweeps stop.
pub fn spectral_norm(m: &Matrix, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(invalid("tol must be positive"));
    }
    if !m.is_finite() {
        return Err(invalid("non-finite matrix entry"));
    }
    if m.rows == 0 || m.cols == 0 {
        return Ok(0.0);
    }
    let gram = if m.cols <= m.rows { m.transpose().matmul(m)? } else { m.matmul(&m.transpose())? };
    let eig = jacobi_eigenvalues(&gram, tol.min(1e-14));
    Ok(eig.last().copied().unwrap_or(0.0).max(0.0).sqrt())
}

/// Frobenius norm of `a - b`.
pub fn frobenius_distance(a: &Matrix, b: &Matrix) -> Result<f64> {
    check_same_shape(a, b)?;
    Ok(a.entries.iter().zip(&b.entries).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}

/// Lower-triangular Cholesky factor of an SPD matrix.
pub fn cholesky(g: &Matrix) -> Result<Matrix> {
    if !g.is_square() {
        return Err(invalid("Cholesky needs a square matrix"));
    }
    if !g.is_finite() {
        return Err(invalid("non-finite matrix entry"));
    }
    let n = g.rows;
    let scale = (0..n).fold(0.0f64, |m, i| m.max(g[(i, i)].abs()));
    let mut l = Matrix::zeros(n, n);
    let mut min_pivot = f64::INFINITY;
    for j in 0..n {
        let mut s = g[(j, j)];
        for k in 0..j {
            s -= l[(j, k)] * l[(j, k)];
        }
        min_pivot = min_pivot.min(s);
        if !(s > 1e-13 * scale) || scale == 0.0 {
            return Err(Error::DegenerateGram { min_pivot: min_pivot.min(s) });
        }
        let d = s.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = g[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// Solves `G X = C` for symmetric positive definite `G`.
pub fn solve_spd(g: &Matrix, c: &Matrix) -> Result<Matrix> {
    if g.rows != c.rows {
        return Err(Error::ShapeMismatch { expected: format!("{} rows", g.rows), got: format!("{} rows", c.rows) });
    }
    if !c.is_finite() {
        return Err(invalid("non-finite right-hand side"));
    }
    let l = cholesky(g)?;
    let n = g.rows;
    let mut x = c.clone();
    for col in 0..c.cols {
        // forward: L z = c
        for i in 0..n {
            let mut s = x[(i, col)];
            for k in 0..i {
                s -= l[(i, k)] * x[(k, col)];
            }
            x[(i, col)] = s / l[(i, i)];
        }
        // backward: Lᵀ x = z
        for i in (0..n).rev() {
            let mut s = x[(i, col)];
            for k in i + 1..n {
                s -= l[(k, i)] * x[(k, col)];
            }
            x[(i, col)] = s / l[(i, i)];
        }
    }
    Ok(x)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eig_sym(s: &Matrix) -> Result<f64> {
    Ok(eigenvalues_sym(s)?[0])
}

/// All eigenvalues of a symmetric matrix, ascending.
pub fn eigenvalues_sym(s: &Matrix) -> Result<Vec<f64>> {
    if !s.is_square() {
        return Err(invalid("symmetric eigenproblem needs a square matrix"));
    }
    if !s.is_finite() {
        return Err(invalid("non-finite matrix entry"));
    }
    let n = s.rows;
    let scale = s.max_abs().max(1.0);
    for i in 0..n {
        for j in i + 1..n {
            if (s[(i, j)] - s[(j, i)]).abs() > 1e-9 * scale {
                return Err(invalid(format!("matrix not symmetric at ({i},{j}): {} vs {}", s[(i, j)], s[(j, i)])));
            }
        }
    }
    if n == 0 {
        return Err(invalid("empty matrix"));
    }
    Ok(jacobi_eigenvalues(s, 1e-15))
}

/// Cyclic Jacobi eigenvalue iteration on the symmetrized input.
fn jacobi_eigenvalues(s: &Matrix, tol: f64) -> Vec<f64> {
    let n = s.rows;
    let mut a = s.clone();
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    let total = a.frobenius_norm();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= tol * total || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - sn * akq;
                    a[(k, q)] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - sn * aqk;
                    a[(q, k)] = sn * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    eig.sort_by(f64::total_cmp);
    eig
}

/// LU factorization with partial pivoting of a square matrix.
#[derive(Debug, Clone)]
pub struct Lu {
    n: usize,
    lu: Matrix,
    perm: Vec<usize>,
}

impl Lu {
    /// Factorizes `m`; `None` when a pivot falls below `rel_tol · max|m|`.
    pub fn new(m: &Matrix, rel_tol: f64) -> Option<Lu> {
        assert!(m.is_square());
        let n = m.rows;
        let mut lu = m.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = m.max_abs();
        if scale == 0.0 {
            return None;
        }
        for k in 0..n {
            let (piv, pval) = (k..n).map(|i| (i, lu[(i, k)].abs())).max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
            if pval <= rel_tol * scale {
                return None;
            }
            if piv != k {
                for c in 0..n {
                    lu.entries.swap(k * n + c, piv * n + c);
                }
                perm.swap(k, piv);
            }
            let d = lu[(k, k)];
            for i in k + 1..n {
                let f = lu[(i, k)] / d;
                lu[(i, k)] = f;
                if f != 0.0 {
                    for c in k + 1..n {
                        lu[(i, c)] -= f * lu[(k, c)];
                    }
                }
            }
        }
        Some(Lu { n, lu, perm })
    }

    /// Solves `M x = b`.
    pub fn solve(&self, b: &[f64]) -> Vector {
        let n = self.n;
        let mut x: Vector = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= self.lu[(i, k)] * x[k];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s -= self.lu[(i, k)] * x[k];
            }
            x[i] = s / self.lu[(i, i)];
        }
        x
    }

    /// Solves `Mᵀ x = b`.
    pub fn solve_transpose(&self, b: &[f64]) -> Vector {
        let n = self.n;
        // PM = LU  =>  Mᵀ = Uᵀ Lᵀ P
        let mut z = b.to_vec();
        for i in 0..n {
            let mut s = z[i];
            for k in 0..i {
                s -= self.lu[(k, i)] * z[k];
            }
            z[i] = s / self.lu[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in i + 1..n {
                s -= self.lu[(k, i)] * z[k];
            }
            z[i] = s;
        }
        let mut x = vec![0.0; n];
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = z[i];
        }
        x
    }

    /// Inverse matrix, column by column.
    pub fn inverse(&self) -> Matrix {
        let n = self.n;
        let mut inv = Matrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for c in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[c] = 1.0;
            let col = self.solve(&e);
            for r in 0..n {
                inv[(r, c)] = col[r];
            }
        }
        inv
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectral_norm_trivial_cases() {
        assert!((spectral_norm(&Matrix::identity(3), 1e-10).unwrap() - 1.0).abs() < 1e-12);
        assert!((spectral_norm(&Matrix::diag(&[0.6, 0.3]), 1e-10).unwrap() - 0.6).abs() < 1e-12);
        let rect = Matrix::from_rows(&[vec![3.0, 0.0, 0.0], vec![0.0, 4.0, 0.0]]).unwrap();
        assert!((spectral_norm(&rect, 1e-10).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn spectral_norm_rejects_bad_input() {
        assert!(Matrix::from_vec(1, 1, vec![f64::NAN]).is_err());
        assert!(spectral_norm(&Matrix::identity(2), 0.0).is_err());
    }

    #[test]
    fn frobenius_examples() {
        let a = Matrix::diag(&[1.0, 2.0]);
        assert_eq!(frobenius_distance(&a, &a).unwrap(), 0.0);
        let z = Matrix::zeros(2, 2);
        let o = Matrix::filled(2, 2, 1.0);
        assert_eq!(frobenius_distance(&z, &o).unwrap(), 2.0);
        let d = frobenius_distance(&Matrix::diag(&[1.0, 0.0]), &Matrix::diag(&[0.0, 1.0])).unwrap();
        assert!((d - 2f64.sqrt()).abs() < 1e-15);
        assert!(matches!(frobenius_distance(&z, &Matrix::zeros(2, 3)), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn solve_spd_examples() {
        let c = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(solve_spd(&Matrix::identity(2), &c).unwrap(), c);
        let x = solve_spd(&Matrix::identity(3).scaled(2.0), &Matrix::identity(3)).unwrap();
        assert!(frobenius_distance(&x, &Matrix::identity(3).scaled(0.5)).unwrap() < 1e-15);
    }

    #[test]
    fn solve_spd_flags_degenerate() {
        let g = Matrix::filled(2, 2, 1.0);
        match solve_spd(&g, &Matrix::identity(2)) {
            Err(Error::DegenerateGram { min_pivot }) => assert!(min_pivot.abs() < 1e-12),
            other => panic!("expected degenerate gram, got {other:?}"),
        }
        let indefinite = Matrix::diag(&[1.0, -1.0]);
        assert!(matches!(solve_spd(&indefinite, &Matrix::identity(2)), Err(Error::DegenerateGram { .. })));
    }

    #[test]
    fn min_eig_examples() {
        assert!((min_eig_sym(&Matrix::diag(&[4.0, 9.0])).unwrap() - 4.0).abs() < 1e-12);
        let proj = Matrix::identity(2).sub(&Matrix::filled(2, 2, 0.5)).unwrap();
        assert!(min_eig_sym(&proj).unwrap().abs() < 1e-12);
        let asym = Matrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(min_eig_sym(&asym), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn lu_solves_and_transposes() {
        let m = Matrix::from_rows(&[vec![0.0, 2.0, 1.0], vec![1.0, 1.0, 0.0], vec![3.0, 0.0, 1.0]]).unwrap();
        let lu = Lu::new(&m, 1e-14).unwrap();
        let b = [1.0, 2.0, 3.0];
        let x = lu.solve(&b);
        let back = m.mul_vec(&x);
        for (u, v) in back.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
        let y = lu.solve_transpose(&b);
        let back = m.transpose().mul_vec(&y);
        for (u, v) in back.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
        assert!(Lu::new(&Matrix::filled(2, 2, 1.0), 1e-12).is_none());
    }
}
