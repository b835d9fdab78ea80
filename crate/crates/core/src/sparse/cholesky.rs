use nalgebra::DMatrix;

use super::{minimum_degree, CscMatrix};
use crate::{Error, Real, Result};

/// Fill-reducing ordering applied before factorization.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Ordering {
    #[default]
    MinimumDegree,
    Natural,
}

/// Sparse Cholesky factorization `A = P L Lᵀ Pᵀ` of a symmetric positive
/// definite matrix.
///
/// `perm[k]` is the original index placed at position `k`, so the factored
/// matrix is `A[perm, perm]`. `L` is stored column-wise with the diagonal as
/// the first entry of every column.
#[derive(Clone, Debug)]
pub struct SparseCholesky<T> {
    n: usize,
    perm: Vec<usize>,
    l: CscMatrix<T>,
}

impl<T: Real> SparseCholesky<T> {
    /// Up-looking factorization driven by the elimination tree. Only the
    /// upper triangle of the permuted matrix is read, so `a` must be
    /// symmetric.
    pub fn factorize(a: &CscMatrix<T>, ordering: Ordering) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::dims("cholesky", (n, n), a.shape()));
        }
        let perm = match ordering {
            Ordering::MinimumDegree => minimum_degree(a),
            Ordering::Natural => (0..n).collect(),
        };
        let mut inv = vec![0usize; n];
        for (k, &p) in perm.iter().enumerate() {
            inv[p] = k;
        }

        // upper triangle of C = A[perm, perm]
        let triplets: Vec<(usize, usize, T)> = a
            .triplets()
            .filter_map(|(r, c, v)| {
                let (pr, pc) = (inv[r], inv[c]);
                (pr <= pc).then_some((pr, pc, v))
            })
            .collect();
        let c = CscMatrix::from_triplets(n, n, &triplets);

        let parent = etree(&c);

        // column counts of L from the row patterns given by ereach
        let mut counts = vec![1usize; n];
        let mut stack = vec![0usize; n];
        let mut mark = vec![usize::MAX; n];
        for k in 0..n {
            let top = ereach(&c, k, &parent, &mut stack, &mut mark);
            for &j in &stack[top..] {
                counts[j] += 1;
            }
        }
        let mut col_ptr = vec![0usize; n + 1];
        for j in 0..n {
            col_ptr[j + 1] = col_ptr[j] + counts[j];
        }
        let nnz = col_ptr[n];
        let mut row_idx = vec![0usize; nnz];
        let mut values = vec![T::zero(); nnz];
        let mut next: Vec<usize> = col_ptr[..n].to_vec();

        let mut x = vec![T::zero(); n];
        mark.iter_mut().for_each(|m| *m = usize::MAX);
        for k in 0..n {
            let top = ereach(&c, k, &parent, &mut stack, &mut mark);
            let (rows, vals) = c.col(k);
            for (&i, &v) in rows.iter().zip(vals) {
                x[i] = v;
            }
            let mut d = x[k];
            x[k] = T::zero();
            for &j in &stack[top..] {
                let lkj = x[j] / values[col_ptr[j]];
                x[j] = T::zero();
                for p in col_ptr[j] + 1..next[j] {
                    x[row_idx[p]] -= values[p] * lkj;
                }
                d -= lkj * lkj;
                let p = next[j];
                row_idx[p] = k;
                values[p] = lkj;
                next[j] += 1;
            }
            if !(d > T::zero()) || !d.is_finite() {
                return Err(Error::FactorizationFailure {
                    column: perm[k],
                    pivot: d.as_f64(),
                });
            }
            let p = next[k];
            row_idx[p] = k;
            values[p] = d.sqrt();
            next[k] += 1;
        }

        // columns were filled in increasing row order; diagonal first
        let l = CscMatrix {
            nrows: n,
            ncols: n,
            col_ptr,
            row_idx,
            values,
        };
        Ok(Self { n, perm, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    /// The lower-triangular factor of the permuted matrix.
    pub fn factor(&self) -> &CscMatrix<T> {
        &self.l
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.n)
            .map(|j| self.l.values[self.l.col_ptr[j]])
            .collect()
    }

    /// Solves `L y = b` in place (permuted coordinates).
    pub fn forward_substitute(&self, b: &mut [T]) {
        for j in 0..self.n {
            let (rows, vals) = self.l.col(j);
            let yj = b[j] / vals[0];
            b[j] = yj;
            for (&i, &v) in rows[1..].iter().zip(&vals[1..]) {
                b[i] -= v * yj;
            }
        }
    }

    /// Solves `Lᵀ x = y` in place (permuted coordinates).
    pub fn back_substitute(&self, b: &mut [T]) {
        for j in (0..self.n).rev() {
            let (rows, vals) = self.l.col(j);
            let mut acc = b[j];
            for (&i, &v) in rows[1..].iter().zip(&vals[1..]) {
                acc -= v * b[i];
            }
            b[j] = acc / vals[0];
        }
    }

    /// Solves `A x = b` for a single right-hand side, in place.
    pub fn solve_in_place(&self, b: &mut [T], work: &mut Vec<T>) {
        assert_eq!(b.len(), self.n);
        work.clear();
        work.extend(self.perm.iter().map(|&p| b[p]));
        self.forward_substitute(work);
        self.back_substitute(work);
        for (k, &p) in self.perm.iter().enumerate() {
            b[p] = work[k];
        }
    }

    /// Solves `A X = B` column by column.
    pub fn solve(&self, b: &DMatrix<T>) -> DMatrix<T> {
        assert_eq!(b.nrows(), self.n, "cholesky solve shape mismatch");
        let mut out = b.clone();
        let mut work = Vec::with_capacity(self.n);
        let mut col = vec![T::zero(); self.n];
        for k in 0..b.ncols() {
            col.copy_from_slice(b.column(k).as_slice());
            self.solve_in_place(&mut col, &mut work);
            out.column_mut(k).copy_from_slice(&col);
        }
        out
    }
}

/// Elimination tree of a matrix given by its upper triangle.
fn etree<T: Real>(c: &CscMatrix<T>) -> Vec<Option<usize>> {
    let n = c.ncols();
    let mut parent = vec![None; n];
    let mut ancestor: Vec<Option<usize>> = vec![None; n];
    for k in 0..n {
        let (rows, _) = c.col(k);
        for &i0 in rows {
            let mut i = Some(i0);
            while let Some(node) = i {
                if node >= k {
                    break;
                }
                let next = ancestor[node];
                ancestor[node] = Some(k);
                if next.is_none() {
                    parent[node] = Some(k);
                }
                i = next;
            }
        }
    }
    parent
}

/// Nonzero pattern of row `k` of L, written to `stack[top..]` in topological
/// order. `mark` is a per-call scratch array keyed by `k`.
fn ereach<T: Real>(
    c: &CscMatrix<T>,
    k: usize,
    parent: &[Option<usize>],
    stack: &mut [usize],
    mark: &mut [usize],
) -> usize {
    let n = c.ncols();
    let mut top = n;
    mark[k] = k;
    let mut path = Vec::new();
    let (rows, _) = c.col(k);
    for &i0 in rows {
        if i0 > k {
            continue;
        }
        let mut i = i0;
        path.clear();
        while mark[i] != k {
            path.push(i);
            mark[i] = k;
            match parent[i] {
                Some(p) => i = p,
                None => break,
            }
        }
        while let Some(node) = path.pop() {
            top -= 1;
            stack[top] = node;
        }
    }
    top
}
