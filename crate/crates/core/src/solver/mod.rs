//! Riemannian trust-region solver with preconditioned truncated CG, in three
//! flavours: the eliminated (reduced) problem, the full problem, and the full
//! problem with closed-form updates of the unconstrained block after every
//! accepted step.

mod precond;
pub mod tcg;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use precond::{estimate_lambda_max, Preconditioner, MU_FLOOR, POWER_ITERATIONS};
use tcg::{truncated_cg, TcgParams};

use crate::manifold::ProductManifold;
use crate::model::QuadraticModel;
use crate::schur::{RecoverMode, SchurOperator};
use crate::sparse::CscMatrix;
use crate::{dense, Error, Real, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Trust region on the reduced problem through the Schur operator.
    Ours,
    /// Trust region on the full problem.
    Original,
    /// Full problem, unconstrained block re-solved after every accepted step.
    OriginalVarPro,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Ours, Method::Original, Method::OriginalVarPro];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Ours => "ours",
            Method::Original => "original",
            Method::OriginalVarPro => "original-varpro",
        }
    }

    pub fn needs_elimination(self) -> bool {
        !matches!(self, Method::Original)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ours" => Ok(Method::Ours),
            "original" => Ok(Method::Original),
            "original-varpro" | "original_varpro" | "varpro" => Ok(Method::OriginalVarPro),
            other => Err(Error::InvalidArgument(format!(
                "unknown method '{other}' (expected ours, original or original-varpro)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Stop once `‖grad‖ ≤ grad_tol · max(1, ‖grad(X0)‖)`.
    pub grad_tol: f64,
    pub max_outer_iters: usize,
    /// Wall-clock budget in seconds, checked between outer iterations.
    pub max_time: f64,
    pub tr_radius_init: f64,
    pub tr_radius_max: f64,
    pub rho_accept: f64,
    pub tcg_max_inner: usize,
    pub tcg_theta: f64,
    pub tcg_kappa: f64,
    pub precond_cond_cap: f64,
    pub seed: u64,
    pub recover_mode: RecoverMode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            grad_tol: 1e-6,
            max_outer_iters: 1000,
            max_time: 600.0,
            tr_radius_init: 1.0,
            tr_radius_max: 1e4,
            rho_accept: 0.1,
            tcg_max_inner: 500,
            tcg_theta: 1.0,
            tcg_kappa: 0.1,
            precond_cond_cap: 1e6,
            seed: 0,
            recover_mode: RecoverMode::Anchored,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("grad_tol", self.grad_tol),
            ("max_time", self.max_time),
            ("tr_radius_init", self.tr_radius_init),
            ("tr_radius_max", self.tr_radius_max),
            ("tcg_theta", self.tcg_theta),
            ("tcg_kappa", self.tcg_kappa),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.max_outer_iters == 0 || self.tcg_max_inner == 0 {
            return Err(Error::InvalidArgument(
                "iteration limits must be positive".into(),
            ));
        }
        if !(self.rho_accept > 0.0 && self.rho_accept <= 0.25) {
            return Err(Error::InvalidArgument(format!(
                "rho_accept must lie in (0, 1/4], got {}",
                self.rho_accept
            )));
        }
        if !(self.precond_cond_cap > 1.0) {
            return Err(Error::InvalidArgument(
                "precond_cond_cap must exceed 1".into(),
            ));
        }
        if self.tr_radius_init > self.tr_radius_max {
            return Err(Error::InvalidArgument(
                "tr_radius_init exceeds tr_radius_max".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Gradient,
    MaxIters,
    Timeout,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Gradient => "gradient",
            Termination::MaxIters => "max_iters",
            Termination::Timeout => "timeout",
        }
    }

    pub fn converged(self) -> bool {
        self == Termination::Gradient
    }
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub cost: f64,
    pub grad_norm: f64,
    pub tr_radius: f64,
    pub inner_iters: usize,
    pub accepted: bool,
    pub elapsed_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SolverReport<T: Real> {
    pub method: Method,
    pub config: SolverConfig,
    pub termination: Termination,
    /// Full cost at the final full point.
    pub final_cost: f64,
    pub records: Vec<IterationRecord>,
    /// Final full point `[X_c; X_f]`.
    pub x: DMatrix<T>,
    /// Closed-form `X_f` at the final `X_c`, for methods that eliminate.
    pub recovered_xf: Option<DMatrix<T>>,
}

impl<T: Real> SolverReport<T> {
    /// Number of outer iterations performed.
    pub fn iterations(&self) -> usize {
        self.records.last().map_or(0, |r| r.iter)
    }

    pub fn elapsed_s(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.elapsed_s)
    }

    pub fn n_c(&self) -> usize {
        self.x.nrows() - self.recovered_xf.as_ref().map_or(0, |xf| xf.nrows())
    }
}

/// Everything that can be shared between solves on the same model.
#[derive(Clone, Debug)]
pub struct Problem<T: Real> {
    model: Arc<QuadraticModel<T>>,
    q_full: CscMatrix<T>,
    schur: Option<SchurOperator<T>>,
    preconditioner: Preconditioner<T>,
    full_manifold: ProductManifold,
    reduced_manifold: ProductManifold,
}

impl<T: Real> Problem<T> {
    /// Builds the Schur operator and the preconditioner. Fails with
    /// `NonIncidence` if the unconstrained block cannot be eliminated.
    pub fn new(model: QuadraticModel<T>, precond_cond_cap: f64) -> Result<Self> {
        let schur = SchurOperator::from_model(&model)?;
        Self::with_schur(model, Some(schur), precond_cond_cap)
    }

    /// Like [`Problem::new`] but without elimination; only the full-problem
    /// method can be used.
    pub fn without_elimination(model: QuadraticModel<T>, precond_cond_cap: f64) -> Result<Self> {
        Self::with_schur(model, None, precond_cond_cap)
    }

    /// Builds what `methods` need.
    pub fn for_methods(
        model: QuadraticModel<T>,
        methods: &[Method],
        precond_cond_cap: f64,
    ) -> Result<Self> {
        if methods.iter().any(|m| m.needs_elimination()) {
            Self::new(model, precond_cond_cap)
        } else {
            Self::without_elimination(model, precond_cond_cap)
        }
    }

    fn with_schur(
        model: QuadraticModel<T>,
        schur: Option<SchurOperator<T>>,
        cap: f64,
    ) -> Result<Self> {
        let q_full = model.q_full();
        let preconditioner = Preconditioner::build(&q_full, cap)?;
        let full_manifold = ProductManifold::full(model.layout());
        let reduced_manifold = ProductManifold::constrained(model.layout());
        Ok(Self {
            model: Arc::new(model),
            q_full,
            schur,
            preconditioner,
            full_manifold,
            reduced_manifold,
        })
    }

    pub fn model(&self) -> &QuadraticModel<T> {
        &self.model
    }

    pub fn schur(&self) -> Option<&SchurOperator<T>> {
        self.schur.as_ref()
    }

    pub fn preconditioner(&self) -> &Preconditioner<T> {
        &self.preconditioner
    }

    pub fn q_full(&self) -> &CscMatrix<T> {
        &self.q_full
    }

    pub fn manifold(&self, method: Method) -> &ProductManifold {
        match method {
            Method::Ours => &self.reduced_manifold,
            _ => &self.full_manifold,
        }
    }

    /// Random starting point for `method`. All methods share the constrained
    /// part for a given seed.
    pub fn initial_point(&self, method: Method, seed: u64) -> DMatrix<T> {
        let x = self.full_manifold.random_point(seed);
        match method {
            Method::Ours => dense::rows(&x, 0, self.model.layout().n_c()),
            _ => x,
        }
    }

    fn require_schur(&self) -> Result<&SchurOperator<T>> {
        self.schur
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("problem was built without elimination".into()))
    }

    fn objective(&self, method: Method) -> Result<Objective<'_, T>> {
        Ok(match method {
            Method::Ours => Objective::Reduced(self.require_schur()?),
            Method::Original => Objective::Full(&self.q_full),
            Method::OriginalVarPro => {
                self.require_schur()?;
                Objective::Full(&self.q_full)
            }
        })
    }
}

/// Quadratic objective `tr(Xᵀ M X)` with `M` either `Q̄` or `Q`.
enum Objective<'a, T: Real> {
    Reduced(&'a SchurOperator<T>),
    Full(&'a CscMatrix<T>),
}

impl<T: Real> Objective<'_, T> {
    fn apply(&self, x: &DMatrix<T>) -> Result<DMatrix<T>> {
        match self {
            Objective::Reduced(op) => op.apply(x),
            Objective::Full(q) => {
                if q.ncols() != x.nrows() {
                    return Err(Error::dims(
                        "full objective",
                        (q.ncols(), x.ncols()),
                        x.shape(),
                    ));
                }
                Ok(q.mul_dense(x))
            }
        }
    }

    /// Cost and Euclidean gradient.
    fn cost_grad(&self, x: &DMatrix<T>) -> Result<(T, DMatrix<T>)> {
        let mx = self.apply(x)?;
        let cost = dense::inner(x, &mx);
        if !cost.is_finite() {
            return Err(Error::NonFinite(format!("cost evaluated to {cost}")));
        }
        Ok((cost, mx * T::lit(2.0)))
    }

    /// Euclidean Hessian-vector product `2 M V`.
    fn hess(&self, v: &DMatrix<T>) -> Result<DMatrix<T>> {
        Ok(self.apply(v)? * T::lit(2.0))
    }
}

struct Iterate<T: Real> {
    x: DMatrix<T>,
    cost: T,
    egrad: DMatrix<T>,
    rgrad: DMatrix<T>,
    grad_norm: T,
}

fn evaluate<T: Real>(
    objective: &Objective<'_, T>,
    manifold: &ProductManifold,
    x: DMatrix<T>,
) -> Result<Iterate<T>> {
    let (cost, egrad) = objective.cost_grad(&x)?;
    let rgrad = manifold.riemannian_grad(&x, &egrad);
    let grad_norm = dense::norm(&rgrad);
    Ok(Iterate {
        x,
        cost,
        egrad,
        rgrad,
        grad_norm,
    })
}

/// Runs the trust-region method from `x0` (reduced point for
/// [`Method::Ours`], full point otherwise).
pub fn solve<T: Real>(
    problem: &Problem<T>,
    method: Method,
    x0: &DMatrix<T>,
    config: &SolverConfig,
) -> Result<SolverReport<T>> {
    config.validate()?;
    let start = Instant::now();
    let manifold = problem.manifold(method);
    let objective = problem.objective(method)?;
    if x0.nrows() != manifold.total_rows() || x0.ncols() != manifold.d() {
        return Err(Error::dims(
            "initial point",
            (manifold.total_rows(), manifold.d()),
            x0.shape(),
        ));
    }
    manifold.check_point(x0)?;
    let n_c = problem.model.layout().n_c();
    let mut records: Vec<IterationRecord> = Vec::new();
    let push = |records: &mut Vec<IterationRecord>, mut rec: IterationRecord| {
        if let Some(prev) = records.last() {
            if rec.elapsed_s <= prev.elapsed_s {
                rec.elapsed_s = prev.elapsed_s + 1e-9;
            }
        }
        records.push(rec);
    };

    let mut it = evaluate(&objective, manifold, x0.clone())?;
    let grad_target = T::lit(config.grad_tol) * it.grad_norm.max(T::one());
    let mut radius = config.tr_radius_init;
    push(
        &mut records,
        IterationRecord {
            iter: 0,
            cost: it.cost.as_f64(),
            grad_norm: it.grad_norm.as_f64(),
            tr_radius: radius,
            inner_iters: 0,
            accepted: true,
            elapsed_s: start.elapsed().as_secs_f64(),
        },
    );

    let eps = T::epsilon().as_f64();
    let termination;
    let mut iter = 0;
    loop {
        if it.grad_norm <= grad_target {
            termination = Termination::Gradient;
            break;
        }
        if iter >= config.max_outer_iters {
            termination = Termination::MaxIters;
            break;
        }
        if start.elapsed().as_secs_f64() >= config.max_time {
            termination = Termination::Timeout;
            break;
        }
        iter += 1;

        let params = TcgParams {
            radius,
            kappa: config.tcg_kappa,
            theta: config.tcg_theta,
            max_inner: config.tcg_max_inner,
        };
        let x = &it.x;
        let egrad = &it.egrad;
        let inner = truncated_cg(
            &it.rgrad,
            params,
            |v| {
                let ehess = objective.hess(v)?;
                Ok(manifold.riemannian_hess(x, egrad, &ehess, v))
            },
            |v| problem.preconditioner.apply(manifold, x, v),
        )?;

        let candidate_x = manifold.retract(&it.x, &inner.eta);
        let (candidate_cost, _) = objective.cost_grad(&candidate_x)?;
        let f = it.cost.as_f64();
        let reg = f.abs().max(1.0) * eps * 1e3;
        let actual = f - candidate_cost.as_f64() + reg;
        let predicted = -(tcg::model_value(&it.rgrad, &inner.eta, &inner.heta)).as_f64() + reg;
        let rho = actual / predicted;
        let model_decreased = predicted >= 0.0;

        if !(rho >= 0.25) || !model_decreased {
            radius /= 4.0;
        } else if rho > 0.75 && inner.hit_boundary() {
            radius = (2.0 * radius).min(config.tr_radius_max);
        }

        let accepted = model_decreased && rho > config.rho_accept && candidate_cost.as_f64() <= f;
        if accepted {
            let next = if method == Method::OriginalVarPro {
                let op = problem.require_schur()?;
                let xc = dense::rows(&candidate_x, 0, n_c);
                let xf = op.recover_unconstrained(&xc, RecoverMode::Anchored)?;
                dense::vstack(&xc, &xf)
            } else {
                candidate_x
            };
            it = evaluate(&objective, manifold, next)?;
        }
        log::debug!(
            "{method} iter {iter}: cost {:.6e} |grad| {:.3e} rho {rho:.3} radius {radius:.3e} inner {} ({:?}){}",
            it.cost.as_f64(),
            it.grad_norm.as_f64(),
            inner.inner_iters,
            inner.stop,
            if accepted { "" } else { " rejected" }
        );
        push(
            &mut records,
            IterationRecord {
                iter,
                cost: it.cost.as_f64(),
                grad_norm: it.grad_norm.as_f64(),
                tr_radius: radius,
                inner_iters: inner.inner_iters,
                accepted,
                elapsed_s: start.elapsed().as_secs_f64(),
            },
        );
    }

    let (x, recovered_xf) = match method {
        Method::Ours => {
            let op = problem.require_schur()?;
            let xf = op.recover_unconstrained(&it.x, config.recover_mode)?;
            (dense::vstack(&it.x, &xf), Some(xf))
        }
        Method::Original => (it.x, None),
        Method::OriginalVarPro => {
            let xf = dense::rows(&it.x, n_c, it.x.nrows() - n_c);
            (it.x, Some(xf))
        }
    };
    let final_cost = problem.model.cost(&x)?.as_f64();
    if !final_cost.is_finite() {
        return Err(Error::NonFinite(format!("final cost {final_cost}")));
    }
    Ok(SolverReport {
        method,
        config: config.clone(),
        termination,
        final_cost,
        records,
        x,
        recovered_xf,
    })
}
