//! Compressed-sparse-column matrices and the sparse Cholesky factorization used
//! by the Schur operator and the preconditioner.

mod cholesky;
mod ordering;

pub use cholesky::{Ordering, SparseCholesky};
pub use ordering::minimum_degree;

use nalgebra::DMatrix;

use crate::Real;

/// Sparse matrix in compressed-column form. Row indices within a column are
/// strictly increasing and explicit zeros are never stored.
#[derive(Clone, Debug, PartialEq)]
pub struct CscMatrix<T> {
    nrows: usize,
    ncols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> CscMatrix<T> {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            col_ptr: vec![0; ncols + 1],
            row_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            col_ptr: (0..=n).collect(),
            row_idx: (0..n).collect(),
            values: vec![T::one(); n],
        }
    }

    /// Builds a matrix from `(row, col, value)` triplets. Duplicates are summed;
    /// entries that sum to exactly zero are dropped.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, T)]) -> Self {
        let mut counts = vec![0usize; ncols + 1];
        for &(r, c, _) in triplets {
            assert!(
                r < nrows && c < ncols,
                "triplet ({r}, {c}) out of bounds {nrows}x{ncols}"
            );
            counts[c + 1] += 1;
        }
        for c in 0..ncols {
            counts[c + 1] += counts[c];
        }
        let mut next = counts.clone();
        let mut rows = vec![0usize; triplets.len()];
        let mut vals = vec![T::zero(); triplets.len()];
        for &(r, c, v) in triplets {
            let p = next[c];
            rows[p] = r;
            vals[p] = v;
            next[c] += 1;
        }

        let mut col_ptr = Vec::with_capacity(ncols + 1);
        let mut row_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        col_ptr.push(0);
        let mut scratch: Vec<(usize, T)> = Vec::new();
        for c in 0..ncols {
            scratch.clear();
            scratch.extend((counts[c]..counts[c + 1]).map(|p| (rows[p], vals[p])));
            scratch.sort_by_key(|&(r, _)| r);
            let mut k = 0;
            while k < scratch.len() {
                let r = scratch[k].0;
                let mut sum = T::zero();
                while k < scratch.len() && scratch[k].0 == r {
                    sum += scratch[k].1;
                    k += 1;
                }
                if sum != T::zero() {
                    row_idx.push(r);
                    values.push(sum);
                }
            }
            col_ptr.push(row_idx.len());
        }
        Self {
            nrows,
            ncols,
            col_ptr,
            row_idx,
            values,
        }
    }

    pub fn from_dense(m: &DMatrix<T>) -> Self {
        let mut triplets = Vec::new();
        for c in 0..m.ncols() {
            for r in 0..m.nrows() {
                if m[(r, c)] != T::zero() {
                    triplets.push((r, c, m[(r, c)]));
                }
            }
        }
        Self::from_triplets(m.nrows(), m.ncols(), &triplets)
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.ncols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.nrows, self.ncols)
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }

    pub fn row_idx(&self) -> &[usize] {
        &self.row_idx
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Row indices and values of column `c`.
    pub fn col(&self, c: usize) -> (&[usize], &[T]) {
        let (a, b) = (self.col_ptr[c], self.col_ptr[c + 1]);
        (&self.row_idx[a..b], &self.values[a..b])
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        let (rows, vals) = self.col(c);
        match rows.binary_search(&r) {
            Ok(p) => vals[p],
            Err(_) => T::zero(),
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.ncols).flat_map(move |c| {
            let (rows, vals) = self.col(c);
            rows.iter().zip(vals).map(move |(&r, &v)| (r, c, v))
        })
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.nrows + 1];
        for &r in &self.row_idx {
            counts[r + 1] += 1;
        }
        for r in 0..self.nrows {
            counts[r + 1] += counts[r];
        }
        let mut next = counts.clone();
        let mut row_idx = vec![0usize; self.nnz()];
        let mut values = vec![T::zero(); self.nnz()];
        for c in 0..self.ncols {
            let (rows, vals) = self.col(c);
            for (&r, &v) in rows.iter().zip(vals) {
                let p = next[r];
                row_idx[p] = c;
                values[p] = v;
                next[r] += 1;
            }
        }
        Self {
            nrows: self.ncols,
            ncols: self.nrows,
            col_ptr: counts,
            row_idx,
            values,
        }
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.triplets() {
            m[(r, c)] = v;
        }
        m
    }

    /// `self · x` for a dense right-hand side.
    pub fn mul_dense(&self, x: &DMatrix<T>) -> DMatrix<T> {
        assert_eq!(self.ncols, x.nrows(), "sparse-dense product shape mismatch");
        let mut out = DMatrix::zeros(self.nrows, x.ncols());
        for k in 0..x.ncols() {
            let xk = x.column(k);
            let mut ok = out.column_mut(k);
            for c in 0..self.ncols {
                let xc = xk[c];
                if xc == T::zero() {
                    continue;
                }
                let (rows, vals) = self.col(c);
                for (&r, &v) in rows.iter().zip(vals) {
                    ok[r] += v * xc;
                }
            }
        }
        out
    }

    /// `selfᵀ · x` without forming the transpose.
    pub fn tr_mul_dense(&self, x: &DMatrix<T>) -> DMatrix<T> {
        assert_eq!(
            self.nrows,
            x.nrows(),
            "sparse-transpose-dense product shape mismatch"
        );
        let mut out = DMatrix::zeros(self.ncols, x.ncols());
        for k in 0..x.ncols() {
            let xk = x.column(k);
            for c in 0..self.ncols {
                let (rows, vals) = self.col(c);
                let mut acc = T::zero();
                for (&r, &v) in rows.iter().zip(vals) {
                    acc += v * xk[r];
                }
                out[(c, k)] = acc;
            }
        }
        out
    }

    /// Sparse-sparse product `self · rhs` (Gustavson, column by column).
    pub fn mul_sparse(&self, rhs: &CscMatrix<T>) -> CscMatrix<T> {
        assert_eq!(self.ncols, rhs.nrows, "sparse product shape mismatch");
        let mut col_ptr = Vec::with_capacity(rhs.ncols + 1);
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        col_ptr.push(0);
        let mut acc = vec![T::zero(); self.nrows];
        let mut mark = vec![usize::MAX; self.nrows];
        let mut pattern: Vec<usize> = Vec::new();
        for j in 0..rhs.ncols {
            pattern.clear();
            let (krows, kvals) = rhs.col(j);
            for (&k, &bkj) in krows.iter().zip(kvals) {
                let (rows, vals) = self.col(k);
                for (&i, &aik) in rows.iter().zip(vals) {
                    if mark[i] != j {
                        mark[i] = j;
                        acc[i] = T::zero();
                        pattern.push(i);
                    }
                    acc[i] += aik * bkj;
                }
            }
            pattern.sort_unstable();
            for &i in &pattern {
                if acc[i] != T::zero() {
                    row_idx.push(i);
                    values.push(acc[i]);
                }
            }
            col_ptr.push(row_idx.len());
        }
        CscMatrix {
            nrows: self.nrows,
            ncols: rhs.ncols,
            col_ptr,
            row_idx,
            values,
        }
    }

    /// `selfᵀ · rhs`.
    pub fn tr_mul_sparse(&self, rhs: &CscMatrix<T>) -> CscMatrix<T> {
        self.transpose().mul_sparse(rhs)
    }

    /// Keeps the listed columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> CscMatrix<T> {
        let mut col_ptr = Vec::with_capacity(cols.len() + 1);
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        col_ptr.push(0);
        for &c in cols {
            let (rows, vals) = self.col(c);
            row_idx.extend_from_slice(rows);
            values.extend_from_slice(vals);
            col_ptr.push(row_idx.len());
        }
        CscMatrix {
            nrows: self.nrows,
            ncols: cols.len(),
            col_ptr,
            row_idx,
            values,
        }
    }

    /// Horizontal concatenation `[self | rhs]`.
    pub fn hstack(&self, rhs: &CscMatrix<T>) -> CscMatrix<T> {
        assert_eq!(self.nrows, rhs.nrows);
        let mut out = self.clone();
        let base = out.row_idx.len();
        out.row_idx.extend_from_slice(&rhs.row_idx);
        out.values.extend_from_slice(&rhs.values);
        out.col_ptr
            .extend(rhs.col_ptr[1..].iter().map(|p| p + base));
        out.ncols += rhs.ncols;
        out
    }

    /// `self + shift · I` for a square matrix.
    pub fn add_diagonal(&self, shift: T) -> CscMatrix<T> {
        assert_eq!(self.nrows, self.ncols);
        let mut triplets: Vec<_> = self.triplets().collect();
        triplets.extend((0..self.nrows).map(|i| (i, i, shift)));
        Self::from_triplets(self.nrows, self.ncols, &triplets)
    }

    pub fn scale(&self, alpha: T) -> CscMatrix<T> {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= alpha);
        out
    }

    /// Maximum absolute row sum; an upper bound on the spectral radius.
    pub fn max_abs_row_sum(&self) -> T {
        let mut sums = vec![T::zero(); self.nrows];
        for (r, _, v) in self.triplets() {
            sums[r] += v.abs();
        }
        sums.into_iter().fold(T::zero(), T::max)
    }

    /// Largest absolute difference between `self` and its transpose.
    pub fn asymmetry(&self) -> T {
        let t = self.transpose();
        let mut worst = T::zero();
        for (r, c, v) in self.triplets() {
            worst = worst.max((v - t.get(r, c)).abs());
        }
        for (r, c, v) in t.triplets() {
            worst = worst.max((v - self.get(r, c)).abs());
        }
        worst
    }
}
