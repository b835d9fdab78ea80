//! Randomized self-checks of the elimination machinery against dense
//! references and finite differences.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::io::{random_instance, Dataset, RandomInstanceSpec};
use crate::manifold::{random_rotation, ProductManifold};
use crate::model::QuadraticModel;
use crate::schur::oracle::{DenseReference, DEFAULT_ROW_CAP};
use crate::schur::{RecoverMode, SchurOperator};
use crate::sparse::CscMatrix;
use crate::{dense, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyConfig {
    pub trials: usize,
    pub seed: u64,
    /// Random `X_f` perturbations tried against the recovered minimizer.
    pub perturbations: usize,
    /// Appends a `+1/+1` row to the unconstrained Jacobian of the first
    /// instance, which must be reported as a non-incidence failure.
    pub inject_nonincidence: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            trials: 100,
            seed: 0,
            perturbations: 20,
            inject_nonincidence: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Check {
    Operator,
    Elimination,
    Optimality,
    MinNormRecovery,
    Gauge,
    Gradient,
    Hessian,
    Structure,
}

impl Check {
    pub const ALL: [Check; 8] = [
        Check::Operator,
        Check::Elimination,
        Check::Optimality,
        Check::MinNormRecovery,
        Check::Gauge,
        Check::Gradient,
        Check::Hessian,
        Check::Structure,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Check::Operator => "operator-vs-dense",
            Check::Elimination => "reduced-cost-vs-conditional-minimum",
            Check::Optimality => "recovered-minimizer-optimality",
            Check::MinNormRecovery => "min-norm-recovery-vs-pseudoinverse",
            Check::Gauge => "gauge-invariance",
            Check::Gradient => "gradient-finite-difference",
            Check::Hessian => "hessian-finite-difference",
            Check::Structure => "incidence-structure",
        }
    }

    pub fn tolerance(self) -> f64 {
        match self {
            Check::Operator => 1e-8,
            Check::Elimination => 1e-9,
            Check::Optimality => 1e-12,
            Check::MinNormRecovery => 1e-8,
            Check::Gauge => 1e-10,
            Check::Gradient | Check::Hessian => 1e-5,
            Check::Structure => 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckStat {
    pub check: Check,
    pub tolerance: f64,
    pub max_error: f64,
    pub evaluations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyFailure {
    pub check: Check,
    pub trial: usize,
    pub instance: RandomInstanceSpec,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyReport {
    pub trials: usize,
    pub stats: Vec<CheckStat>,
    pub failures: Vec<VerifyFailure>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

struct Recorder {
    stats: Vec<CheckStat>,
    failures: Vec<VerifyFailure>,
}

impl Recorder {
    fn record(&mut self, check: Check, error: f64, trial: usize, spec: &RandomInstanceSpec) {
        let stat = self.stats.iter_mut().find(|s| s.check == check).unwrap();
        stat.evaluations += 1;
        stat.max_error = stat.max_error.max(error);
        if !(error <= check.tolerance()) {
            self.failures.push(VerifyFailure {
                check,
                trial,
                instance: spec.clone(),
                detail: format!(
                    "error {error:.3e} exceeds tolerance {:.0e}",
                    check.tolerance()
                ),
            });
        }
    }

    fn fail(&mut self, check: Check, trial: usize, spec: &RandomInstanceSpec, err: &Error) {
        let stat = self.stats.iter_mut().find(|s| s.check == check).unwrap();
        stat.evaluations += 1;
        stat.max_error = f64::INFINITY;
        let variant = format!("{err:?}");
        let variant = variant
            .split([' ', '(', '{'])
            .next()
            .unwrap_or_default()
            .to_string();
        self.failures.push(VerifyFailure {
            check,
            trial,
            instance: spec.clone(),
            detail: format!("{variant}: {err}"),
        });
    }
}

/// `|a − b| / max(|b|, floor)`.
pub fn rel(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / b.abs().max(floor)
}

fn with_nonincidence_row(model: &QuadraticModel<f64>) -> Result<QuadraticModel<f64>> {
    let m = model.residual_rows();
    let n_f = model.layout().n_f();
    if n_f < 2 {
        return Err(Error::InvalidArgument(
            "fault injection needs two unconstrained rows".into(),
        ));
    }
    let grow = |a: &CscMatrix<f64>, extra: &[(usize, usize, f64)]| {
        let mut t: Vec<_> = a.triplets().collect();
        t.extend_from_slice(extra);
        CscMatrix::from_triplets(m + 1, a.ncols(), &t)
    };
    let a_c = grow(model.a_c(), &[]);
    let a_f = grow(model.a_f(), &[(m, 0, 1.0), (m, 1, 1.0)]);
    let mut blocks: Vec<DMatrix<f64>> = model.omega().blocks().map(|(_, b)| b.clone()).collect();
    blocks.push(DMatrix::identity(1, 1));
    let mut rows = model.measurement_rows().to_vec();
    rows.push(m..m + 1);
    QuadraticModel::from_parts(
        model.layout().clone(),
        a_c,
        a_f,
        crate::model::BlockDiagonal::new(blocks),
        rows,
    )
}

/// Directional-derivative and Hessian-vector checks of the reduced cost at
/// a random point along a random unit tangent direction. Returns the relative
/// errors `(gradient, hessian)`.
pub fn finite_difference_errors<R: Rng + ?Sized>(
    op: &SchurOperator<f64>,
    manifold: &ProductManifold,
    rng: &mut R,
) -> Result<(f64, f64)> {
    let x: DMatrix<f64> = manifold.random_point_with(rng);
    let mut v = manifold.random_tangent(&x, rng);
    let nv = dense::norm(&v);
    if nv > 0.0 {
        v /= nv;
    }
    let (_, egrad) = op.reduced_cost_grad(&x)?;
    let rgrad = manifold.riemannian_grad(&x, &egrad);
    let ehess = op.apply(&v)? * 2.0;
    let rhess = manifold.riemannian_hess(&x, &egrad, &ehess, &v);

    let h = 1e-6;
    let f_plus = op.reduced_cost(&manifold.retract(&x, &(&v * h)))?;
    let f_minus = op.reduced_cost(&manifold.retract(&x, &(&v * -h)))?;
    let fd = (f_plus - f_minus) / (2.0 * h);
    let analytic = dense::inner(&rgrad, &v);
    let scale = dense::norm(&rgrad).max(1e-12);
    let grad_err = (fd - analytic).abs() / analytic.abs().max(scale);

    let t = 1e-5;
    let grad_at = |y: &DMatrix<f64>| -> Result<DMatrix<f64>> {
        let (_, g) = op.reduced_cost_grad(y)?;
        Ok(manifold.riemannian_grad(y, &g))
    };
    let g_plus = grad_at(&manifold.retract(&x, &(&v * t)))?;
    let g_minus = grad_at(&manifold.retract(&x, &(&v * -t)))?;
    let fd_hess = manifold.project(&x, &((g_plus - g_minus) / (2.0 * t)));
    let hess_err =
        dense::norm(&(&fd_hess - &rhess)) / dense::norm(&rhess).max(1e-12 * scale.max(1.0));
    Ok((grad_err, hess_err))
}

fn check_instance(
    ds: &Dataset<f64>,
    model: &QuadraticModel<f64>,
    trial: usize,
    spec: &RandomInstanceSpec,
    cfg: &VerifyConfig,
    rng: &mut ChaCha8Rng,
    rec: &mut Recorder,
) -> Result<()> {
    let op = match SchurOperator::from_model(model) {
        Ok(op) => op,
        Err(e) => {
            rec.fail(Check::Structure, trial, spec, &e);
            return Ok(());
        }
    };
    rec.record(Check::Structure, 0.0, trial, spec);
    let reference = DenseReference::new(model, DEFAULT_ROW_CAP)?;
    let manifold = ProductManifold::constrained(&ds.layout);
    let xc: DMatrix<f64> = manifold.random_point_with(rng);

    let dense_qbar = reference.schur_complement();
    let expected = &dense_qbar * &xc;
    let got = op.apply(&xc)?;
    rec.record(
        Check::Operator,
        dense::rel_err(&got, &expected, 1e-300),
        trial,
        spec,
    );

    let reduced = op.reduced_cost(&xc)?;
    let cond_min = reference.conditional_minimum(&xc);
    rec.record(
        Check::Elimination,
        rel(reduced, cond_min, 1e-12),
        trial,
        spec,
    );

    let full = op.full_point(&xc, RecoverMode::Anchored)?;
    let c_rec = model.cost(&full)?;
    for _ in 0..cfg.perturbations {
        let mut pert = full.clone();
        for r in ds.layout.n_c()..pert.nrows() {
            for k in 0..pert.ncols() {
                pert[(r, k)] += rng.random_range(-1.0..1.0);
            }
        }
        let c_pert = model.cost(&pert)?;
        rec.record(
            Check::Optimality,
            ((c_rec - c_pert) / c_pert.max(1e-300)).max(0.0),
            trial,
            spec,
        );
    }

    let min_norm = op.recover_unconstrained(&xc, RecoverMode::MinNorm)?;
    let pinv = reference.conditional_minimizer(&xc);
    let floor = dense::norm(&xc) * 1e-12;
    rec.record(
        Check::MinNormRecovery,
        dense::rel_err(&min_norm, &pinv, floor.max(1e-300)),
        trial,
        spec,
    );

    let g: DMatrix<f64> = random_rotation(ds.d(), rng);
    let rotated = op.reduced_cost(&(&xc * g))?;
    rec.record(Check::Gauge, rel(rotated, reduced, 1e-300), trial, spec);

    let (grad_err, hess_err) = finite_difference_errors(&op, &manifold, rng)?;
    rec.record(Check::Gradient, grad_err, trial, spec);
    rec.record(Check::Hessian, hess_err, trial, spec);
    Ok(())
}

/// Runs `cfg.trials` random instances through every check. Configuration
/// problems are errors; failed checks are reported in the result.
pub fn run_verify(cfg: &VerifyConfig) -> Result<VerifyReport> {
    if cfg.trials == 0 {
        return Err(Error::InvalidArgument("--trials must be at least 1".into()));
    }
    let mut rec = Recorder {
        stats: Check::ALL
            .iter()
            .map(|&check| CheckStat {
                check,
                tolerance: check.tolerance(),
                max_error: 0.0,
                evaluations: 0,
            })
            .collect(),
        failures: Vec::new(),
    };
    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    for trial in 0..cfg.trials {
        let instance_seed: u64 = master.random();
        let spec = RandomInstanceSpec::sample(&mut master, instance_seed);
        let ds: Dataset<f64> = random_instance(&spec)?;
        let mut model = ds.assemble()?;
        if cfg.inject_nonincidence && trial == 0 {
            model = with_nonincidence_row(&model)?;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(instance_seed);
        check_instance(&ds, &model, trial, &spec, cfg, &mut rng, &mut rec)?;
    }
    Ok(VerifyReport {
        trials: cfg.trials,
        stats: rec.stats,
        failures: rec.failures,
    })
}
