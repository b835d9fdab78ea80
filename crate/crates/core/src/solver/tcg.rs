//! Preconditioned Steihaug–Toint truncated conjugate gradients for the
//! trust-region subproblem `min ⟨g, η⟩ + ½⟨η, H η⟩` subject to `‖η‖ ≤ Δ`.
//!
//! The trust region is measured in the norm induced by the inverse of the
//! preconditioner, which keeps the boundary test consistent with the
//! preconditioned iteration (`‖η‖²_{P⁻¹}` is updated by recurrences).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::{dense, Real, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TcgStop {
    NegativeCurvature,
    ExceededRadius,
    ModelIncreased,
    ResidualReduced,
    MaxInner,
}

#[derive(Clone, Debug)]
pub struct TcgOutcome<T: Real> {
    pub eta: DMatrix<T>,
    pub heta: DMatrix<T>,
    pub inner_iters: usize,
    pub stop: TcgStop,
}

impl<T: Real> TcgOutcome<T> {
    pub fn hit_boundary(&self) -> bool {
        matches!(
            self.stop,
            TcgStop::NegativeCurvature | TcgStop::ExceededRadius
        )
    }
}

#[derive(Clone, Copy, Debug)]
pub struct TcgParams {
    pub radius: f64,
    pub kappa: f64,
    pub theta: f64,
    pub max_inner: usize,
}

/// Model value `⟨g, η⟩ + ½⟨η, Hη⟩`.
pub fn model_value<T: Real>(grad: &DMatrix<T>, eta: &DMatrix<T>, heta: &DMatrix<T>) -> T {
    dense::inner(grad, eta) + T::lit(0.5) * dense::inner(eta, heta)
}

/// Runs the inner solver. `hess` and `precon` must map tangent vectors to
/// tangent vectors; `precon` must be symmetric positive definite there.
pub fn truncated_cg<T, H, P>(
    grad: &DMatrix<T>,
    params: TcgParams,
    mut hess: H,
    mut precon: P,
) -> Result<TcgOutcome<T>>
where
    T: Real,
    H: FnMut(&DMatrix<T>) -> Result<DMatrix<T>>,
    P: FnMut(&DMatrix<T>) -> Result<DMatrix<T>>,
{
    let radius_sq = T::lit(params.radius * params.radius);
    let zero = || DMatrix::zeros(grad.nrows(), grad.ncols());
    let mut eta = zero();
    let mut heta = zero();
    let mut r = grad.clone();
    let mut e_pe = T::zero();

    let mut z = precon(&r)?;
    let mut z_r = dense::inner(&z, &r);
    let mut d_pd = z_r;
    let mut delta = -&z;
    let mut e_pd = T::zero();

    let norm_r0 = dense::norm(&r);
    let target = norm_r0 * norm_r0.powf(T::lit(params.theta)).min(T::lit(params.kappa));
    let mut model = T::zero();
    let mut stop = TcgStop::MaxInner;
    let mut inner = 0;

    if !(norm_r0 > T::zero()) {
        return Ok(TcgOutcome {
            eta,
            heta,
            inner_iters: 0,
            stop: TcgStop::ResidualReduced,
        });
    }

    while inner < params.max_inner {
        inner += 1;
        let hdelta = hess(&delta)?;
        let d_hd = dense::inner(&delta, &hdelta);
        let alpha = z_r / d_hd;
        let e_pe_new = e_pe + T::lit(2.0) * alpha * e_pd + alpha * alpha * d_pd;

        if !(d_hd > T::zero()) || e_pe_new >= radius_sq {
            // step to the boundary along delta
            let disc = (e_pd * e_pd + d_pd * (radius_sq - e_pe)).max(T::zero());
            let tau = (-e_pd + disc.sqrt()) / d_pd;
            dense::axpy(&mut eta, tau, &delta);
            dense::axpy(&mut heta, tau, &hdelta);
            stop = if d_hd > T::zero() {
                TcgStop::ExceededRadius
            } else {
                TcgStop::NegativeCurvature
            };
            break;
        }
        e_pe = e_pe_new;

        let mut new_eta = eta.clone();
        dense::axpy(&mut new_eta, alpha, &delta);
        let mut new_heta = heta.clone();
        dense::axpy(&mut new_heta, alpha, &hdelta);
        let new_model = model_value(grad, &new_eta, &new_heta);
        if new_model >= model {
            stop = TcgStop::ModelIncreased;
            break;
        }
        eta = new_eta;
        heta = new_heta;
        model = new_model;

        dense::axpy(&mut r, alpha, &hdelta);
        if dense::norm(&r) <= target {
            stop = TcgStop::ResidualReduced;
            break;
        }

        z = precon(&r)?;
        let z_r_old = z_r;
        z_r = dense::inner(&z, &r);
        let beta = z_r / z_r_old;
        delta = &delta * beta - &z;
        e_pd = beta * (e_pd + alpha * d_pd);
        d_pd = z_r + beta * beta * d_pd;
    }

    Ok(TcgOutcome {
        eta,
        heta,
        inner_iters: inner,
        stop,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag_problem() -> (DMatrix<f64>, DMatrix<f64>) {
        let h = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 4.0, 9.0]));
        let g = DMatrix::from_column_slice(3, 1, &[1.0, 1.0, 1.0]);
        (h, g)
    }

    #[test]
    fn interior_solution_is_newton_step() {
        let (h, g) = diag_problem();
        let params = TcgParams {
            radius: 100.0,
            kappa: 1e-12,
            theta: 1.0,
            max_inner: 50,
        };
        let out = truncated_cg(&g, params, |v| Ok(&h * v), |v| Ok(v.clone())).unwrap();
        let newton = DMatrix::from_column_slice(3, 1, &[-1.0, -0.25, -1.0 / 9.0]);
        assert!(dense::rel_err(&out.eta, &newton, 1e-300) < 1e-10);
        assert_eq!(out.stop, TcgStop::ResidualReduced);
    }

    #[test]
    fn boundary_is_respected() {
        let (h, g) = diag_problem();
        let params = TcgParams {
            radius: 0.1,
            kappa: 0.1,
            theta: 1.0,
            max_inner: 50,
        };
        let out = truncated_cg(&g, params, |v| Ok(&h * v), |v| Ok(v.clone())).unwrap();
        assert!((dense::norm(&out.eta) - 0.1).abs() < 1e-12);
        assert!(out.hit_boundary());
    }

    #[test]
    fn negative_curvature_goes_to_boundary() {
        let h = -DMatrix::<f64>::identity(2, 2);
        let g = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let params = TcgParams {
            radius: 2.0,
            kappa: 0.1,
            theta: 1.0,
            max_inner: 10,
        };
        let out = truncated_cg(&g, params, |v| Ok(&h * v), |v| Ok(v.clone())).unwrap();
        assert_eq!(out.stop, TcgStop::NegativeCurvature);
        assert!((out.eta[(0, 0)] + 2.0).abs() < 1e-12);
    }
}
