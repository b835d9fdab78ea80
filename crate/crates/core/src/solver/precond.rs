use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::manifold::ProductManifold;
use crate::sparse::{CscMatrix, Ordering, SparseCholesky};
use crate::{dense, Error, Real, Result};

pub const POWER_ITERATIONS: usize = 30;
pub const MU_FLOOR: f64 = 1e-12;

/// Regularized Cholesky preconditioner `P = (Q + μI)^{-1}` over the full
/// variable set.
///
/// Reduced (constrained-only) inputs are zero-padded to the full size before
/// the solve and truncated afterwards. Inputs and outputs are projected onto
/// the tangent space so that the operator is symmetric there.
#[derive(Clone, Debug)]
pub struct Preconditioner<T: Real> {
    factor: SparseCholesky<T>,
    mu: T,
    lambda_max_estimate: T,
}

impl<T: Real> Preconditioner<T> {
    /// Chooses `μ` so that `(λ_max + μ)/μ ≤ cond_cap`.
    ///
    /// `λ_max` is bounded above by `min(Gershgorin bound, 2·λ̂)` where `λ̂` is
    /// a Rayleigh-quotient estimate from power iteration; the bound rather
    /// than `λ̂` itself enters `μ` so the condition target holds even when
    /// power iteration under-estimates.
    pub fn build(q: &CscMatrix<T>, cond_cap: f64) -> Result<Self> {
        if !(cond_cap > 1.0) {
            return Err(Error::InvalidArgument(format!(
                "condition cap {cond_cap} must exceed 1"
            )));
        }
        let lambda_hat = estimate_lambda_max(q, POWER_ITERATIONS, 0);
        let upper = q.max_abs_row_sum().as_f64().min(2.0 * lambda_hat.as_f64());
        let mut mu = (upper / (cond_cap - 1.0)).max(MU_FLOOR);
        // Low-precision scalars can lose definiteness at the target
        // regularization; back off until the factorization succeeds.
        for _ in 0..8 {
            match SparseCholesky::factorize(&q.add_diagonal(T::lit(mu)), Ordering::MinimumDegree) {
                Ok(factor) => {
                    return Ok(Self {
                        factor,
                        mu: T::lit(mu),
                        lambda_max_estimate: lambda_hat,
                    })
                }
                Err(Error::FactorizationFailure { .. }) => {
                    log::warn!("preconditioner factorization failed at mu = {mu:e}; increasing regularization");
                    mu *= 10.0;
                }
                Err(e) => return Err(e),
            }
        }
        Err(Error::FactorizationFailure {
            column: 0,
            pivot: mu,
        })
    }

    pub fn mu(&self) -> T {
        self.mu
    }

    pub fn lambda_max_estimate(&self) -> T {
        self.lambda_max_estimate
    }

    pub fn dim(&self) -> usize {
        self.factor.dim()
    }

    /// `(Q + μI)^{-1} V` for a full-size `V`.
    pub fn solve(&self, v: &DMatrix<T>) -> DMatrix<T> {
        self.factor.solve(v)
    }

    /// Project–solve–project at `x`. If `v` has fewer rows than the
    /// preconditioner, it is treated as the top block of a zero-padded
    /// full-size matrix and the result is truncated back.
    pub fn apply(
        &self,
        manifold: &ProductManifold,
        x: &DMatrix<T>,
        v: &DMatrix<T>,
    ) -> Result<DMatrix<T>> {
        let n = self.dim();
        let rows = v.nrows();
        if rows > n || x.shape() != v.shape() {
            return Err(Error::dims("preconditioner input", x.shape(), v.shape()));
        }
        let v = manifold.project(x, v);
        let w = if rows == n {
            self.solve(&v)
        } else {
            let padded = dense::vstack(&v, &DMatrix::zeros(n - rows, v.ncols()));
            self.solve(&padded).rows(0, rows).into_owned()
        };
        Ok(manifold.project(x, &w))
    }
}

/// Rayleigh quotient after `iters` power iterations from a seeded random
/// start.
pub fn estimate_lambda_max<T: Real>(q: &CscMatrix<T>, iters: usize, seed: u64) -> T {
    let n = q.nrows();
    if n == 0 {
        return T::zero();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = DMatrix::from_fn(n, 1, |_, _| T::lit(StandardNormal.sample(&mut rng)));
    let mut lambda = T::zero();
    for _ in 0..iters {
        let nrm = dense::norm(&v);
        if !(nrm > T::zero()) {
            return T::zero();
        }
        v /= nrm;
        let w = q.mul_dense(&v);
        lambda = dense::inner(&v, &w);
        v = w;
    }
    lambda.max(T::zero())
}
