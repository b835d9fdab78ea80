//! Dense reference computations for small models.
//!
//! Everything here goes through dense `f64` linear algebra and a spectral
//! pseudoinverse, independently of the sparse factorization path. It exists to
//! check the matrix-free operator and is far too slow for real problems.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::model::QuadraticModel;
use crate::{dense, Error, Real, Result};

pub const DEFAULT_ROW_CAP: usize = 500;

/// Eigenvalues at or below `PINV_REL_TOL · λ_max` are treated as zero.
pub const PINV_REL_TOL: f64 = 1e-10;

/// Dense `Q = AᵀΩA` and its partition.
#[derive(Clone, Debug)]
pub struct DenseReference {
    pub q: DMatrix<f64>,
    pub n_c: usize,
    pub n_f: usize,
}

impl DenseReference {
    pub fn new<T: Real>(model: &QuadraticModel<T>, cap: usize) -> Result<Self> {
        let n = model.layout().n();
        if n > cap {
            return Err(Error::SizeCapExceeded { rows: n, cap });
        }
        let a: DMatrix<f64> = dense::cast(&model.jacobian().to_dense());
        let w: DMatrix<f64> = dense::cast(&model.omega().to_dense());
        let q = a.transpose() * w * &a;
        Ok(Self {
            q,
            n_c: model.layout().n_c(),
            n_f: model.layout().n_f(),
        })
    }

    pub fn q_cc(&self) -> DMatrix<f64> {
        self.q.view((0, 0), (self.n_c, self.n_c)).into_owned()
    }

    pub fn q_cf(&self) -> DMatrix<f64> {
        self.q
            .view((0, self.n_c), (self.n_c, self.n_f))
            .into_owned()
    }

    pub fn q_fc(&self) -> DMatrix<f64> {
        self.q
            .view((self.n_c, 0), (self.n_f, self.n_c))
            .into_owned()
    }

    pub fn q_ff(&self) -> DMatrix<f64> {
        self.q
            .view((self.n_c, self.n_c), (self.n_f, self.n_f))
            .into_owned()
    }

    /// `Q̄ = Q_cc − Q_cf Q_ff^† Q_fc`.
    pub fn schur_complement(&self) -> DMatrix<f64> {
        if self.n_f == 0 {
            return self.q_cc();
        }
        self.q_cc() - self.q_cf() * pinv_sym(&self.q_ff(), PINV_REL_TOL) * self.q_fc()
    }

    /// `−Q_ff^† Q_fc X_c`, the minimum-norm conditional minimizer.
    pub fn conditional_minimizer(&self, xc: &DMatrix<f64>) -> DMatrix<f64> {
        if self.n_f == 0 {
            return DMatrix::zeros(0, xc.ncols());
        }
        -(pinv_sym(&self.q_ff(), PINV_REL_TOL) * (self.q_fc() * xc))
    }

    /// `tr(Xᵀ Q X)` by dense multiplication.
    pub fn cost(&self, x: &DMatrix<f64>) -> f64 {
        dense::inner(x, &(&self.q * x))
    }

    /// `min over X_f` of the full cost with `X_c` fixed.
    pub fn conditional_minimum(&self, xc: &DMatrix<f64>) -> f64 {
        let xf = self.conditional_minimizer(xc);
        self.cost(&dense::vstack(xc, &xf))
    }
}

/// Dense Schur complement of a model, cast back to the model's scalar type.
pub fn dense_oracle<T: Real>(model: &QuadraticModel<T>, cap: usize) -> Result<DMatrix<T>> {
    let reference = DenseReference::new(model, cap)?;
    Ok(dense::cast(&reference.schur_complement()))
}

/// Eigen-decomposition of a symmetric matrix with ascending eigenvalues.
pub fn sym_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..m.nrows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(m.nrows(), m.nrows(), |i, j| eig.eigenvectors[(i, order[j])]);
    (values, vectors)
}

/// Spectral pseudoinverse of a symmetric positive semidefinite matrix.
pub fn pinv_sym(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let n = m.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let eig = SymmetricEigen::new(m.clone());
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let cutoff = rel_tol * lmax;
    let mut out = DMatrix::zeros(n, n);
    for k in 0..n {
        let lambda = eig.eigenvalues[k];
        if lambda > cutoff {
            let v = eig.eigenvectors.column(k);
            out += (v * v.transpose()) / lambda;
        }
    }
    out
}

/// Numerical rank: singular values above `rel_tol · σ_max`.
pub fn rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.iter().fold(0.0f64, |a, &b| a.max(b));
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}
