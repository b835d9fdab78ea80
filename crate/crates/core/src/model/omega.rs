use nalgebra::DMatrix;

use crate::sparse::CscMatrix;
use crate::Real;

/// Block-diagonal precision matrix Ω, one symmetric positive definite block
/// per measurement.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockDiagonal<T: Real> {
    offsets: Vec<usize>,
    blocks: Vec<DMatrix<T>>,
    row_block: Vec<usize>,
}

impl<T: Real> BlockDiagonal<T> {
    pub fn new(blocks: Vec<DMatrix<T>>) -> Self {
        let mut offsets = Vec::with_capacity(blocks.len() + 1);
        let mut row_block = Vec::new();
        offsets.push(0);
        for (b, m) in blocks.iter().enumerate() {
            assert_eq!(m.nrows(), m.ncols(), "precision blocks must be square");
            row_block.extend(std::iter::repeat_n(b, m.nrows()));
            offsets.push(offsets[b] + m.nrows());
        }
        Self {
            offsets,
            blocks,
            row_block,
        }
    }

    /// Isotropic block `w · I_size`.
    pub fn isotropic(weight: T, size: usize) -> DMatrix<T> {
        DMatrix::identity(size, size) * weight
    }

    pub fn dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn blocks(&self) -> impl Iterator<Item = (usize, &DMatrix<T>)> {
        self.offsets.iter().copied().zip(self.blocks.iter())
    }

    /// `Ω · Y` for a dense `Y` with `dim()` rows.
    pub fn mul_dense(&self, y: &DMatrix<T>) -> DMatrix<T> {
        assert_eq!(y.nrows(), self.dim());
        let mut out = DMatrix::zeros(y.nrows(), y.ncols());
        for (start, w) in self.blocks() {
            let len = w.nrows();
            if len == 1 {
                let s = w[(0, 0)];
                for k in 0..y.ncols() {
                    out[(start, k)] = s * y[(start, k)];
                }
            } else {
                let prod = w * y.rows(start, len);
                out.rows_mut(start, len).copy_from(&prod);
            }
        }
        out
    }

    /// `Ω · A` for a sparse `A` with `dim()` rows.
    pub fn mul_sparse(&self, a: &CscMatrix<T>) -> CscMatrix<T> {
        assert_eq!(a.nrows(), self.dim());
        let mut triplets = Vec::with_capacity(a.nnz());
        for (r, c, v) in a.triplets() {
            let b = self.row_block[r];
            let start = self.offsets[b];
            let w = &self.blocks[b];
            for i in 0..w.nrows() {
                let wij = w[(i, r - start)];
                if wij != T::zero() {
                    triplets.push((start + i, c, wij * v));
                }
            }
        }
        CscMatrix::from_triplets(a.nrows(), a.ncols(), &triplets)
    }

    /// `tr(Yᵀ Ω Y)`.
    pub fn weighted_norm_sq(&self, y: &DMatrix<T>) -> T {
        assert_eq!(y.nrows(), self.dim());
        let mut total = T::zero();
        for (start, w) in self.blocks() {
            let len = w.nrows();
            for k in 0..y.ncols() {
                for a in 0..len {
                    let ya = y[(start + a, k)];
                    for b in 0..len {
                        total += ya * w[(a, b)] * y[(start + b, k)];
                    }
                }
            }
        }
        total
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for (start, w) in self.blocks() {
            m.view_mut((start, start), (w.nrows(), w.ncols()))
                .copy_from(w);
        }
        m
    }
}
