//! Product manifold of the constrained blocks of X: rotations in SO(d)
//! (stored transposed, `d` rows each), unit vectors (one row each) and, for
//! the full-problem baselines, a Euclidean block for the unconstrained rows.
//!
//! The metric is the Frobenius inner product of the embedding on every block.

use std::ops::Range;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::model::{BlockKind, VariableLayout};
use crate::{dense, Error, Real, Result};

/// Feasibility tolerance for rotation blocks (in `f64`).
pub const ROTATION_TOL: f64 = 1e-10;
/// Feasibility tolerance for unit-vector rows (in `f64`).
pub const SPHERE_TOL: f64 = 1e-12;

/// A tolerance of at least `100·ε` of the scalar type, so that single
/// precision points are not rejected for rounding alone.
fn scaled_tol<T: Real>(tol: f64) -> f64 {
    tol.max(100.0 * T::epsilon().as_f64())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ManifoldKind {
    Rotation,
    UnitVector,
    Euclidean,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifoldBlock {
    pub kind: ManifoldKind,
    pub rows: Range<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProductManifold {
    blocks: Vec<ManifoldBlock>,
    total_rows: usize,
    d: usize,
}

impl ProductManifold {
    pub fn new(d: usize, blocks: Vec<ManifoldBlock>) -> Result<Self> {
        let mut next = 0;
        for b in &blocks {
            if b.rows.start != next {
                return Err(Error::InvalidLayout(
                    "manifold blocks must tile the rows".into(),
                ));
            }
            if b.kind == ManifoldKind::Rotation && b.rows.len() != d {
                return Err(Error::InvalidLayout(format!(
                    "rotation block must span {d} rows"
                )));
            }
            if b.kind == ManifoldKind::UnitVector && b.rows.len() != 1 {
                return Err(Error::InvalidLayout(
                    "unit-vector block must span one row".into(),
                ));
            }
            next = b.rows.end;
        }
        Ok(Self {
            blocks,
            total_rows: next,
            d,
        })
    }

    /// Manifold of the constrained variables `X_c` (rows `0..n_c`).
    pub fn constrained(layout: &VariableLayout) -> Self {
        let blocks = layout
            .constrained_blocks()
            .map(|b| ManifoldBlock {
                kind: match b.kind() {
                    BlockKind::Rotation => ManifoldKind::Rotation,
                    _ => ManifoldKind::UnitVector,
                },
                rows: b.rows.clone(),
            })
            .collect();
        Self::new(layout.d(), blocks).expect("layout blocks tile")
    }

    /// Constrained manifold times a Euclidean factor for the unconstrained rows.
    pub fn full(layout: &VariableLayout) -> Self {
        let mut m = Self::constrained(layout);
        if layout.n_f() > 0 {
            m.blocks.push(ManifoldBlock {
                kind: ManifoldKind::Euclidean,
                rows: layout.n_c()..layout.n(),
            });
            m.total_rows = layout.n();
        }
        m
    }

    pub fn blocks(&self) -> &[ManifoldBlock] {
        &self.blocks
    }

    pub fn total_rows(&self) -> usize {
        self.total_rows
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Dimension of the manifold.
    pub fn dim(&self) -> usize {
        let d = self.d;
        self.blocks
            .iter()
            .map(|b| match b.kind {
                ManifoldKind::Rotation => d * (d - 1) / 2,
                ManifoldKind::UnitVector => d - 1,
                ManifoldKind::Euclidean => b.rows.len() * d,
            })
            .sum()
    }

    fn check_shape<T: Real>(&self, m: &DMatrix<T>, context: &'static str) -> Result<()> {
        if m.shape() != (self.total_rows, self.d) {
            return Err(Error::dims(context, (self.total_rows, self.d), m.shape()));
        }
        Ok(())
    }

    pub fn inner<T: Real>(&self, u: &DMatrix<T>, v: &DMatrix<T>) -> T {
        dense::inner(u, v)
    }

    pub fn norm<T: Real>(&self, v: &DMatrix<T>) -> T {
        dense::norm(v)
    }

    /// Verifies the point constraints at the module tolerances.
    pub fn check_point<T: Real>(&self, x: &DMatrix<T>) -> Result<()> {
        self.check_shape(x, "manifold point")?;
        let d = self.d;
        let (rot_tol, sphere_tol) = (scaled_tol::<T>(ROTATION_TOL), scaled_tol::<T>(SPHERE_TOL));
        for b in &self.blocks {
            match b.kind {
                ManifoldKind::Rotation => {
                    let z = x.rows(b.rows.start, d).into_owned();
                    let gram = &z * z.transpose() - DMatrix::identity(d, d);
                    let err = dense::max_abs(&gram).as_f64();
                    let det = dense::det(&z).as_f64();
                    if err > rot_tol || (det - 1.0).abs() > rot_tol {
                        return Err(Error::OffManifold(format!(
                            "rotation block at row {}: orthogonality error {err:e}, det {det}",
                            b.rows.start
                        )));
                    }
                }
                ManifoldKind::UnitVector => {
                    let r = b.rows.start;
                    let nrm = x.row(r).iter().map(|&v| v * v).sum::<T>().sqrt().as_f64();
                    if (nrm - 1.0).abs() > sphere_tol {
                        return Err(Error::OffManifold(format!(
                            "unit vector at row {r} has norm {nrm}"
                        )));
                    }
                }
                ManifoldKind::Euclidean => {}
            }
        }
        Ok(())
    }

    #[inline]
    fn debug_check<T: Real>(&self, x: &DMatrix<T>) -> Result<()> {
        if cfg!(debug_assertions) {
            self.check_point(x)
        } else {
            Ok(())
        }
    }

    /// Orthogonal projection of an ambient matrix onto the tangent space at `x`.
    pub fn project<T: Real>(&self, x: &DMatrix<T>, v: &DMatrix<T>) -> DMatrix<T> {
        debug_assert_eq!(x.shape(), v.shape());
        let d = self.d;
        let mut out = v.clone();
        for b in &self.blocks {
            match b.kind {
                ManifoldKind::Rotation => {
                    let r0 = b.rows.start;
                    let z = x.rows(r0, d);
                    let vb = v.rows(r0, d);
                    let s = dense::sym(&(z.transpose() * vb));
                    let p = vb - z * s;
                    out.rows_mut(r0, d).copy_from(&p);
                }
                ManifoldKind::UnitVector => {
                    let r = b.rows.start;
                    let dot: T = (0..d).map(|k| v[(r, k)] * x[(r, k)]).sum();
                    for k in 0..d {
                        out[(r, k)] = v[(r, k)] - dot * x[(r, k)];
                    }
                }
                ManifoldKind::Euclidean => {}
            }
        }
        out
    }

    /// Projection after checking the base point (debug builds only).
    pub fn project_tangent<T: Real>(&self, x: &DMatrix<T>, v: &DMatrix<T>) -> Result<DMatrix<T>> {
        self.check_shape(x, "project_tangent point")?;
        self.check_shape(v, "project_tangent vector")?;
        self.debug_check(x)?;
        Ok(self.project(x, v))
    }

    /// QR retraction on rotation blocks, normalization on unit vectors,
    /// addition on the Euclidean block.
    pub fn retract<T: Real>(&self, x: &DMatrix<T>, v: &DMatrix<T>) -> DMatrix<T> {
        debug_assert_eq!(x.shape(), v.shape());
        let d = self.d;
        let mut out = x + v;
        for b in &self.blocks {
            // a zero step leaves the block untouched, bit for bit
            if v.rows(b.rows.start, b.rows.len())
                .iter()
                .all(|&a| a == T::zero())
            {
                continue;
            }
            match b.kind {
                ManifoldKind::Rotation => {
                    let r0 = b.rows.start;
                    let y = out.rows(r0, d).into_owned();
                    let q = match dense::qr_q(&y) {
                        Some(mut q) => {
                            // R has a positive diagonal; keep the det = +1 sheet
                            if dense::det(&q) < T::zero() {
                                for i in 0..d {
                                    q[(i, d - 1)] = -q[(i, d - 1)];
                                }
                            }
                            q
                        }
                        None => x.rows(r0, d).into_owned(),
                    };
                    out.rows_mut(r0, d).copy_from(&q);
                }
                ManifoldKind::UnitVector => {
                    let r = b.rows.start;
                    let nrm = out.row(r).iter().map(|&a| a * a).sum::<T>().sqrt();
                    for k in 0..d {
                        out[(r, k)] /= nrm;
                    }
                }
                ManifoldKind::Euclidean => {}
            }
        }
        out
    }

    /// Riemannian gradient from the Euclidean gradient.
    pub fn riemannian_grad<T: Real>(&self, x: &DMatrix<T>, egrad: &DMatrix<T>) -> DMatrix<T> {
        self.project(x, egrad)
    }

    /// Riemannian Hessian-vector product from Euclidean quantities:
    /// `Proj(ehess[V] − W(x, V, egrad))` with the per-block Weingarten term.
    pub fn riemannian_hess<T: Real>(
        &self,
        x: &DMatrix<T>,
        egrad: &DMatrix<T>,
        ehess: &DMatrix<T>,
        v: &DMatrix<T>,
    ) -> DMatrix<T> {
        let d = self.d;
        let mut corrected = ehess.clone();
        for b in &self.blocks {
            match b.kind {
                ManifoldKind::Rotation => {
                    let r0 = b.rows.start;
                    let z = x.rows(r0, d);
                    let g = egrad.rows(r0, d);
                    let s = dense::sym(&(z.transpose() * g));
                    let w = v.rows(r0, d) * s;
                    let mut block = corrected.rows_mut(r0, d);
                    block -= w;
                }
                ManifoldKind::UnitVector => {
                    let r = b.rows.start;
                    let xg: T = (0..d).map(|k| x[(r, k)] * egrad[(r, k)]).sum();
                    for k in 0..d {
                        corrected[(r, k)] -= xg * v[(r, k)];
                    }
                }
                ManifoldKind::Euclidean => {}
            }
        }
        self.project(x, &corrected)
    }

    /// Random point: Haar rotations, uniform unit vectors, standard-normal
    /// Euclidean entries. Deterministic for a fixed seed.
    pub fn random_point<T: Real>(&self, seed: u64) -> DMatrix<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.random_point_with(&mut rng)
    }

    pub fn random_point_with<T: Real, R: rand::Rng + ?Sized>(&self, rng: &mut R) -> DMatrix<T> {
        let d = self.d;
        let mut x = DMatrix::zeros(self.total_rows, d);
        for b in &self.blocks {
            match b.kind {
                ManifoldKind::Rotation => {
                    let q: DMatrix<T> = random_rotation(d, rng);
                    x.rows_mut(b.rows.start, d).copy_from(&q);
                }
                ManifoldKind::UnitVector => {
                    let u: Vec<T> = random_unit_vector(d, rng);
                    for k in 0..d {
                        x[(b.rows.start, k)] = u[k];
                    }
                }
                ManifoldKind::Euclidean => {
                    for r in b.rows.clone() {
                        for k in 0..d {
                            x[(r, k)] = T::lit(StandardNormal.sample(rng));
                        }
                    }
                }
            }
        }
        x
    }

    /// Random tangent vector at `x` (projected standard normal).
    pub fn random_tangent<T: Real, R: rand::Rng + ?Sized>(
        &self,
        x: &DMatrix<T>,
        rng: &mut R,
    ) -> DMatrix<T> {
        let v = DMatrix::from_fn(x.nrows(), x.ncols(), |_, _| {
            T::lit(StandardNormal.sample(rng))
        });
        self.project(x, &v)
    }
}

/// Haar-distributed rotation in SO(d).
pub fn random_rotation<T: Real, R: rand::Rng + ?Sized>(d: usize, rng: &mut R) -> DMatrix<T> {
    loop {
        let g = DMatrix::from_fn(d, d, |_, _| T::lit(StandardNormal.sample(rng)));
        if let Some(mut q) = dense::qr_q(&g) {
            if dense::det(&q) < T::zero() {
                for i in 0..d {
                    q[(i, 0)] = -q[(i, 0)];
                }
            }
            return q;
        }
    }
}

pub fn random_unit_vector<T: Real, R: rand::Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<T> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let nrm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if nrm > 1e-8 {
            return v.into_iter().map(|a| T::lit(a / nrm)).collect();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::VarKey;

    fn manifold(d: usize) -> ProductManifold {
        let layout = VariableLayout::new(
            d,
            [
                VarKey::Rotation(0),
                VarKey::Bearing(0),
                VarKey::Rotation(1),
                VarKey::Point(0),
                VarKey::Point(1),
            ],
        )
        .unwrap();
        ProductManifold::full(&layout)
    }

    #[test]
    fn random_points_are_feasible_and_deterministic() {
        for d in [2, 3] {
            let m = manifold(d);
            let x: DMatrix<f64> = m.random_point(7);
            m.check_point(&x).unwrap();
            assert_eq!(x, m.random_point::<f64>(7));
            assert_ne!(x, m.random_point::<f64>(8));
        }
    }

    #[test]
    fn tangent_vectors_are_fixed_and_radial_direction_vanishes() {
        let m = manifold(3);
        let x: DMatrix<f64> = m.random_point(1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v = m.random_tangent(&x, &mut rng);
        assert!(dense::max_abs(&(m.project(&x, &v) - &v)) < 1e-14);
        let p = m.project(&x, &x);
        assert!(p.row(3).iter().all(|&a| a.abs() < 1e-15));
    }

    #[test]
    fn projection_is_idempotent_and_self_adjoint() {
        for d in [2, 3] {
            let m = manifold(d);
            let x: DMatrix<f64> = m.random_point(3);
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            let v = DMatrix::from_fn(x.nrows(), d, |_, _| StandardNormal.sample(&mut rng));
            let w = DMatrix::from_fn(x.nrows(), d, |_, _| StandardNormal.sample(&mut rng));
            let pv = m.project(&x, &v);
            assert!(dense::max_abs(&(m.project(&x, &pv) - &pv)) < 1e-13);
            let lhs = dense::inner(&pv, &w);
            let rhs = dense::inner(&v, &m.project(&x, &w));
            assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
            // tangent conditions
            let z = x.rows(0, d);
            let skew = z.transpose() * pv.rows(0, d);
            assert!(dense::max_abs(&(&skew + skew.transpose())) < 1e-12);
            let dot: f64 = (0..d).map(|k| x[(d, k)] * pv[(d, k)]).sum();
            assert!(dot.abs() < 1e-12);
        }
    }

    #[test]
    fn retraction_at_zero_is_identity_and_stays_feasible() {
        for d in [2, 3] {
            let m = manifold(d);
            let x: DMatrix<f64> = m.random_point(5);
            assert_eq!(m.retract(&x, &DMatrix::zeros(x.nrows(), d)), x);
            let mut rng = ChaCha8Rng::seed_from_u64(6);
            let v = m.random_tangent(&x, &mut rng) * 3.0;
            let y = m.retract(&x, &v);
            m.check_point(&y).unwrap();
        }
    }

    #[test]
    fn retraction_is_first_order() {
        let m = manifold(3);
        let x: DMatrix<f64> = m.random_point(9);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let v = m.random_tangent(&x, &mut rng);
        let err = |t: f64| dense::norm(&(m.retract(&x, &(&v * t)) - (&x + &v * t)));
        let ratio = err(1e-3) / err(1e-4);
        assert!((30.0..300.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn haar_rotation_mean_is_left_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g: DMatrix<f64> = random_rotation(3, &mut rng);
        let n = 20_000;
        let mut mean = DMatrix::<f64>::zeros(3, 3);
        let mut mean_g = DMatrix::<f64>::zeros(3, 3);
        for _ in 0..n {
            let r: DMatrix<f64> = random_rotation(3, &mut rng);
            mean += &r / n as f64;
            mean_g += (&g * &r) / n as f64;
        }
        // both means estimate the zero matrix
        assert!(dense::max_abs(&mean) < 0.03);
        assert!(dense::max_abs(&mean_g) < 0.03);
        assert!(dense::max_abs(&(mean - mean_g)) < 0.05);
    }
}
