use std::sync::Arc;

use nalgebra::DMatrix;

use super::UnconstrainedGraph;
use crate::model::QuadraticModel;
use crate::sparse::{CscMatrix, Ordering, SparseCholesky};
use crate::{dense, Error, Real, Result};

/// How eliminated variables are fixed along the gauge directions of `Q_ff`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum RecoverMode {
    /// Dropped nodes are pinned to zero.
    #[default]
    Anchored,
    /// Per-component mean removed: equals `−Q_ff^† Q_fc X_c`.
    MinNorm,
}

impl std::str::FromStr for RecoverMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "anchored" => Ok(RecoverMode::Anchored),
            "min-norm" | "min_norm" => Ok(RecoverMode::MinNorm),
            other => Err(Error::InvalidArgument(format!(
                "unknown recover mode '{other}'"
            ))),
        }
    }
}

/// Matrix-free application of the Schur complement
/// `Q̄ = Q_cc − Q_cf Q_ff^† Q_fc`.
///
/// With `C` the reduced incidence matrix (one column of `A_f` dropped per
/// connected component), `Q̄ = Q_cc − Bᵀ (CᵀΩC)^{-1} B` where `B = CᵀΩA_c`.
/// `CᵀΩC` is a reduced weighted graph Laplacian and is positive definite, so
/// its inverse is applied through a sparse Cholesky factor. `C` itself is
/// never stored; it is `A_f` seen through `retained`.
#[derive(Clone, Debug)]
pub struct SchurOperator<T: Real> {
    n_c: usize,
    n_f: usize,
    dropped: Vec<usize>,
    retained: Vec<usize>,
    components: Vec<Vec<usize>>,
    b: CscMatrix<T>,
    laplacian: CscMatrix<T>,
    factor: SparseCholesky<T>,
    q_cc: Arc<CscMatrix<T>>,
}

impl<T: Real> SchurOperator<T> {
    /// Detects the incidence structure of `A_f` and builds the operator.
    pub fn from_model(model: &QuadraticModel<T>) -> Result<Self> {
        let graph = UnconstrainedGraph::detect(model.a_f())?;
        Self::build(model, &graph)
    }

    pub fn build(model: &QuadraticModel<T>, graph: &UnconstrainedGraph) -> Result<Self> {
        let n_f = model.layout().n_f();
        if graph.node_count() != n_f {
            return Err(Error::dims(
                "unconstrained graph",
                (n_f, 1),
                (graph.node_count(), 1),
            ));
        }
        // drop the highest-index node of every component
        let mut is_dropped = vec![false; n_f];
        let mut dropped = Vec::with_capacity(graph.components().len());
        for comp in graph.components() {
            let last = *comp
                .last()
                .ok_or_else(|| Error::InvalidArgument("empty component".into()))?;
            is_dropped[last] = true;
            dropped.push(last);
        }
        dropped.sort_unstable();
        let retained: Vec<usize> = (0..n_f).filter(|&v| !is_dropped[v]).collect();

        let c = model.a_f().select_columns(&retained);
        let omega_c = model.omega().mul_sparse(&c);
        let laplacian = c.tr_mul_sparse(&omega_c);
        let b = omega_c.tr_mul_sparse(model.a_c());
        let factor = SparseCholesky::factorize(&laplacian, Ordering::MinimumDegree)?;

        Ok(Self {
            n_c: model.layout().n_c(),
            n_f,
            dropped,
            retained,
            components: graph.components().to_vec(),
            b,
            laplacian,
            factor,
            q_cc: model.shared_q_cc(),
        })
    }

    pub fn n_c(&self) -> usize {
        self.n_c
    }

    pub fn n_f(&self) -> usize {
        self.n_f
    }

    /// Number of retained columns, `n_f − #components`.
    pub fn reduced_dim(&self) -> usize {
        self.retained.len()
    }

    pub fn dropped_columns(&self) -> &[usize] {
        &self.dropped
    }

    pub fn retained_columns(&self) -> &[usize] {
        &self.retained
    }

    pub fn components(&self) -> &[Vec<usize>] {
        &self.components
    }

    /// `B = CᵀΩA_c` (r×n_c).
    pub fn b(&self) -> &CscMatrix<T> {
        &self.b
    }

    /// The reduced weighted Laplacian `CᵀΩC`.
    pub fn reduced_laplacian(&self) -> &CscMatrix<T> {
        &self.laplacian
    }

    pub fn factor(&self) -> &SparseCholesky<T> {
        &self.factor
    }

    /// Materializes `C` (test and diagnostics use only).
    pub fn reduced_incidence(&self, model: &QuadraticModel<T>) -> CscMatrix<T> {
        model.a_f().select_columns(&self.retained)
    }

    fn check(&self, xc: &DMatrix<T>) -> Result<()> {
        if xc.nrows() != self.n_c {
            return Err(Error::dims(
                "schur operator",
                (self.n_c, xc.ncols()),
                xc.shape(),
            ));
        }
        Ok(())
    }

    /// `Q̄ X_c = Q_cc X_c − Bᵀ (CᵀΩC)^{-1} B X_c`.
    pub fn apply(&self, xc: &DMatrix<T>) -> Result<DMatrix<T>> {
        self.check(xc)?;
        let y = self.b.mul_dense(xc);
        let z = self.factor.solve(&y);
        let mut out = self.q_cc.mul_dense(xc);
        out -= self.b.tr_mul_dense(&z);
        Ok(out)
    }

    /// `tr(X_cᵀ Q̄ X_c)` and its Euclidean gradient `2 Q̄ X_c` from one operator
    /// application.
    pub fn reduced_cost_grad(&self, xc: &DMatrix<T>) -> Result<(T, DMatrix<T>)> {
        let qx = self.apply(xc)?;
        let cost = dense::inner(xc, &qx);
        Ok((cost, qx * T::lit(2.0)))
    }

    pub fn reduced_cost(&self, xc: &DMatrix<T>) -> Result<T> {
        Ok(self.reduced_cost_grad(xc)?.0)
    }

    pub fn reduced_grad(&self, xc: &DMatrix<T>) -> Result<DMatrix<T>> {
        Ok(self.reduced_cost_grad(xc)?.1)
    }

    /// Minimizer of the full cost over `X_f` with `X_c` held fixed.
    pub fn recover_unconstrained(&self, xc: &DMatrix<T>, mode: RecoverMode) -> Result<DMatrix<T>> {
        self.check(xc)?;
        let rhs = -self.b.mul_dense(xc);
        let z = self.factor.solve(&rhs);
        let d = xc.ncols();
        let mut xf = DMatrix::zeros(self.n_f, d);
        for (k, &node) in self.retained.iter().enumerate() {
            xf.row_mut(node).copy_from(&z.row(k));
        }
        if mode == RecoverMode::MinNorm {
            for comp in &self.components {
                let count = T::from_usize(comp.len()).unwrap();
                for col in 0..d {
                    let mean = comp.iter().map(|&v| xf[(v, col)]).sum::<T>() / count;
                    for &v in comp {
                        xf[(v, col)] -= mean;
                    }
                }
            }
        }
        Ok(xf)
    }

    /// `[X_c; X_f*(X_c)]`.
    pub fn full_point(&self, xc: &DMatrix<T>, mode: RecoverMode) -> Result<DMatrix<T>> {
        let xf = self.recover_unconstrained(xc, mode)?;
        Ok(dense::vstack(xc, &xf))
    }
}
