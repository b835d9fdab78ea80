//! Variables, measurements and the partitioned quadratic model `Q = AᵀΩA`.
//!
//! Every residual is homogeneous and linear in the stacked variable X. Rotation
//! blocks hold `Rᵀ` in `d` consecutive rows, so each residual is a constant row
//! block of A multiplied on the right by X:
//!
//! | residual        | rows | coefficients                                   |
//! |-----------------|------|------------------------------------------------|
//! | relative rotation | d  | `+I` on `R_j`, `−R̃ᵀ` on `R_i`                  |
//! | relative translation | 1 | `+1` on `t_j`, `−1` on `t_i`, `−t̃ᵀ` on `R_i` |
//! | range           | 1    | `+1` on `t_j`, `−1` on `t_i`, `−d̃` on `u_ij`   |

mod layout;
mod measurement;
mod omega;

pub use layout::{Block, BlockKind, VarKey, VariableLayout};
pub use measurement::Measurement;
pub use omega::BlockDiagonal;

use std::ops::Range;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::sparse::CscMatrix;
use crate::{Error, Real, Result};

/// The data of the constrained quadratic problem `min tr(Xᵀ Q X)`.
///
/// Immutable after assembly.
#[derive(Clone, Debug)]
pub struct QuadraticModel<T: Real> {
    layout: VariableLayout,
    a_c: CscMatrix<T>,
    a_f: CscMatrix<T>,
    omega: BlockDiagonal<T>,
    q_cc: Arc<CscMatrix<T>>,
    measurement_rows: Vec<Range<usize>>,
}

impl<T: Real> QuadraticModel<T> {
    /// Stacks the residual Jacobians of `measurements` into `A = [A_c | A_f]`.
    pub fn assemble(measurements: &[Measurement<T>], layout: &VariableLayout) -> Result<Self> {
        if measurements.is_empty() {
            return Err(Error::NoMeasurements);
        }
        let d = layout.d();
        let n_c = layout.n_c();
        let mut tc: Vec<(usize, usize, T)> = Vec::new();
        let mut tf: Vec<(usize, usize, T)> = Vec::new();
        let mut push = |row: usize, col: usize, v: T| {
            if col < n_c {
                tc.push((row, col, v));
            } else {
                tf.push((row, col - n_c, v));
            }
        };
        let mut omega_blocks = Vec::with_capacity(measurements.len());
        let mut measurement_rows = Vec::with_capacity(measurements.len());
        let mut row = 0;

        for (index, m) in measurements.iter().enumerate() {
            validate(index, m, layout)?;
            let rows_of = |key: VarKey| layout.rows(key).expect("validated").start;
            match m {
                Measurement::RelRotation {
                    i,
                    j,
                    rotation,
                    kappa,
                } => {
                    let ri = rows_of(VarKey::Rotation(*i));
                    let rj = rows_of(VarKey::Rotation(*j));
                    for a in 0..d {
                        push(row + a, rj + a, T::one());
                        for b in 0..d {
                            // row a of −R̃ᵀ is −(column a of R̃)ᵀ
                            push(row + a, ri + b, -rotation[(b, a)]);
                        }
                    }
                    omega_blocks.push(BlockDiagonal::isotropic(*kappa, d));
                    measurement_rows.push(row..row + d);
                    row += d;
                }
                Measurement::RelTranslation {
                    i,
                    j,
                    translation,
                    tau,
                } => {
                    push(row, rows_of(VarKey::Point(*j)), T::one());
                    push(row, rows_of(VarKey::Point(*i)), -T::one());
                    let ri = rows_of(VarKey::Rotation(*i));
                    for b in 0..d {
                        push(row, ri + b, -translation[b]);
                    }
                    omega_blocks.push(BlockDiagonal::isotropic(*tau, 1));
                    measurement_rows.push(row..row + 1);
                    row += 1;
                }
                Measurement::Range {
                    i,
                    j,
                    bearing,
                    distance,
                    rho,
                } => {
                    push(row, rows_of(VarKey::Point(*j)), T::one());
                    push(row, rows_of(VarKey::Point(*i)), -T::one());
                    push(row, rows_of(VarKey::Bearing(*bearing)), -*distance);
                    omega_blocks.push(BlockDiagonal::isotropic(*rho, 1));
                    measurement_rows.push(row..row + 1);
                    row += 1;
                }
            }
        }

        let a_c = CscMatrix::from_triplets(row, n_c, &tc);
        let a_f = CscMatrix::from_triplets(row, layout.n_f(), &tf);
        let omega = BlockDiagonal::new(omega_blocks);
        Self::from_parts(layout.clone(), a_c, a_f, omega, measurement_rows)
    }

    /// Builds a model from explicit Jacobian blocks.
    ///
    /// `measurement_rows` groups rows of A by residual; pass one range per row
    /// when there is no residual structure to record.
    pub fn from_parts(
        layout: VariableLayout,
        a_c: CscMatrix<T>,
        a_f: CscMatrix<T>,
        omega: BlockDiagonal<T>,
        measurement_rows: Vec<Range<usize>>,
    ) -> Result<Self> {
        let m = omega.dim();
        if a_c.shape() != (m, layout.n_c()) {
            return Err(Error::dims("A_c", (m, layout.n_c()), a_c.shape()));
        }
        if a_f.shape() != (m, layout.n_f()) {
            return Err(Error::dims("A_f", (m, layout.n_f()), a_f.shape()));
        }
        let q_cc = Arc::new(a_c.tr_mul_sparse(&omega.mul_sparse(&a_c)));
        Ok(Self {
            layout,
            a_c,
            a_f,
            omega,
            q_cc,
            measurement_rows,
        })
    }

    pub fn layout(&self) -> &VariableLayout {
        &self.layout
    }

    pub fn a_c(&self) -> &CscMatrix<T> {
        &self.a_c
    }

    pub fn a_f(&self) -> &CscMatrix<T> {
        &self.a_f
    }

    pub fn omega(&self) -> &BlockDiagonal<T> {
        &self.omega
    }

    pub fn q_cc(&self) -> &CscMatrix<T> {
        &self.q_cc
    }

    pub(crate) fn shared_q_cc(&self) -> Arc<CscMatrix<T>> {
        Arc::clone(&self.q_cc)
    }

    /// Number of residual rows `m`.
    pub fn residual_rows(&self) -> usize {
        self.omega.dim()
    }

    pub fn measurement_rows(&self) -> &[Range<usize>] {
        &self.measurement_rows
    }

    /// `A = [A_c | A_f]`.
    pub fn jacobian(&self) -> CscMatrix<T> {
        self.a_c.hstack(&self.a_f)
    }

    /// The full sparse `Q = AᵀΩA`.
    pub fn q_full(&self) -> CscMatrix<T> {
        let a = self.jacobian();
        a.tr_mul_sparse(&self.omega.mul_sparse(&a))
    }

    fn check_x(&self, x: &DMatrix<T>, context: &'static str) -> Result<()> {
        let expected = (self.layout.n(), self.layout.d());
        if x.shape() != expected {
            return Err(Error::dims(context, expected, x.shape()));
        }
        Ok(())
    }

    /// Residual matrix `A X` (m×d).
    pub fn residuals(&self, x: &DMatrix<T>) -> Result<DMatrix<T>> {
        self.check_x(x, "residuals")?;
        let n_c = self.layout.n_c();
        let mut ax = self.a_c.mul_dense(&x.rows(0, n_c).into_owned());
        ax += self
            .a_f
            .mul_dense(&x.rows(n_c, self.layout.n_f()).into_owned());
        Ok(ax)
    }

    /// `tr(Xᵀ Q X) = ‖Ω^{1/2} A X‖²_F`, evaluated without forming Q.
    pub fn cost(&self, x: &DMatrix<T>) -> Result<T> {
        let ax = self.residuals(x)?;
        Ok(self.omega.weighted_norm_sq(&ax))
    }

    /// `Q X = Aᵀ Ω (A X)` by sparse products.
    pub fn apply_q(&self, x: &DMatrix<T>) -> Result<DMatrix<T>> {
        let w = self.omega.mul_dense(&self.residuals(x)?);
        let top = self.a_c.tr_mul_dense(&w);
        let bottom = self.a_f.tr_mul_dense(&w);
        Ok(crate::dense::vstack(&top, &bottom))
    }
}

fn validate<T: Real>(index: usize, m: &Measurement<T>, layout: &VariableLayout) -> Result<()> {
    let d = layout.d();
    let (i, j) = m.endpoints();
    if i == j {
        return Err(Error::EndpointMismatch {
            index,
            reason: format!("endpoints must differ, both are {i}"),
        });
    }
    let c = m.concentration();
    if !(c > T::zero()) || !c.is_finite() {
        return Err(Error::NonPositiveConcentration {
            index,
            value: c.as_f64(),
        });
    }
    for key in m.keys() {
        if !layout.contains(key) {
            return Err(Error::DanglingBlock { index, key });
        }
    }
    match m {
        Measurement::RelRotation { rotation, .. } if rotation.shape() != (d, d) => {
            Err(Error::EndpointMismatch {
                index,
                reason: format!(
                    "rotation measurement must be {d}x{d}, got {:?}",
                    rotation.shape()
                ),
            })
        }
        Measurement::RelTranslation { translation, .. } if translation.len() != d => {
            Err(Error::EndpointMismatch {
                index,
                reason: format!(
                    "translation measurement must have length {d}, got {}",
                    translation.len()
                ),
            })
        }
        Measurement::Range { distance, .. }
            if !(*distance >= T::zero()) || !distance.is_finite() =>
        {
            Err(Error::EndpointMismatch {
                index,
                reason: format!("range must be finite and nonnegative, got {distance}"),
            })
        }
        _ => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn chain_2d() -> (VariableLayout, Vec<Measurement<f64>>) {
        let layout = VariableLayout::new(
            2,
            (0..3).flat_map(|k| [VarKey::Rotation(k), VarKey::Point(k)]),
        )
        .unwrap();
        let mut ms = Vec::new();
        for k in 0..2 {
            ms.push(Measurement::RelRotation {
                i: k,
                j: k + 1,
                rotation: DMatrix::identity(2, 2),
                kappa: 1.0,
            });
            ms.push(Measurement::RelTranslation {
                i: k,
                j: k + 1,
                translation: DVector::from_vec(vec![1.0, 0.0]),
                tau: 2.0,
            });
        }
        (layout, ms)
    }

    #[test]
    fn range_row_matches_table_entry() {
        let layout =
            VariableLayout::new(2, [VarKey::Point(0), VarKey::Point(1), VarKey::Bearing(0)])
                .unwrap();
        let ms = vec![Measurement::Range {
            i: 0,
            j: 1,
            bearing: 0,
            distance: 2.0,
            rho: 4.0,
        }];
        let model = QuadraticModel::assemble(&ms, &layout).unwrap();
        let a = model.jacobian().to_dense();
        // columns: u (row 0), t0 (row 1), t1 (row 2)
        assert_eq!(
            a.row(0).iter().copied().collect::<Vec<_>>(),
            vec![-2.0, -1.0, 1.0]
        );
        assert_eq!(model.omega().to_dense()[(0, 0)], 4.0);
    }

    #[test]
    fn identity_rotation_row_block() {
        let layout = VariableLayout::new(3, [VarKey::Rotation(0), VarKey::Rotation(1)]).unwrap();
        let ms = vec![Measurement::RelRotation {
            i: 0,
            j: 1,
            rotation: DMatrix::identity(3, 3),
            kappa: 1.0,
        }];
        let model = QuadraticModel::assemble(&ms, &layout).unwrap();
        let a = model.jacobian().to_dense();
        let mut expected = DMatrix::zeros(3, 6);
        expected
            .view_mut((0, 0), (3, 3))
            .copy_from(&(-DMatrix::<f64>::identity(3, 3)));
        expected
            .view_mut((0, 3), (3, 3))
            .copy_from(&DMatrix::<f64>::identity(3, 3));
        assert_eq!(a, expected);
        assert_eq!(model.a_f().ncols(), 0);
    }

    #[test]
    fn chain_q_matches_dense_brute_force() {
        let (layout, ms) = chain_2d();
        let model = QuadraticModel::assemble(&ms, &layout).unwrap();
        let a = model.jacobian().to_dense();
        let w = model.omega().to_dense();
        let n = layout.n();
        // entrywise triple loop, independent of the sparse kernels
        let mut q = DMatrix::<f64>::zeros(n, n);
        for r in 0..n {
            for c in 0..n {
                let mut acc = 0.0;
                for p in 0..a.nrows() {
                    for s in 0..a.nrows() {
                        acc += a[(p, r)] * w[(p, s)] * a[(s, c)];
                    }
                }
                q[(r, c)] = acc;
            }
        }
        assert!((model.q_full().to_dense() - &q).abs().max() < 1e-14);
        let n_c = layout.n_c();
        assert!(
            (model.q_cc().to_dense() - q.view((0, 0), (n_c, n_c)))
                .abs()
                .max()
                < 1e-14
        );
        assert_eq!(model.q_cc().asymmetry(), 0.0);
    }

    #[test]
    fn cost_zero_at_origin_and_dimension_checked() {
        let (layout, ms) = chain_2d();
        let model = QuadraticModel::assemble(&ms, &layout).unwrap();
        assert_eq!(model.cost(&DMatrix::zeros(layout.n(), 2)).unwrap(), 0.0);
        assert!(matches!(
            model.cost(&DMatrix::zeros(layout.n() + 1, 2)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn assembly_errors() {
        let (layout, _) = chain_2d();
        let bad_kappa = vec![Measurement::RelRotation {
            i: 0,
            j: 1,
            rotation: DMatrix::identity(2, 2),
            kappa: 0.0,
        }];
        assert!(matches!(
            QuadraticModel::assemble(&bad_kappa, &layout),
            Err(Error::NonPositiveConcentration { index: 0, .. })
        ));
        let dangling = vec![Measurement::Range {
            i: 0,
            j: 1,
            bearing: 9,
            distance: 1.0,
            rho: 1.0,
        }];
        assert!(matches!(
            QuadraticModel::assemble(&dangling, &layout),
            Err(Error::DanglingBlock {
                key: VarKey::Bearing(9),
                ..
            })
        ));
        let self_loop = vec![Measurement::RelTranslation {
            i: 1,
            j: 1,
            translation: DVector::zeros(2),
            tau: 1.0,
        }];
        assert!(matches!(
            QuadraticModel::assemble(&self_loop, &layout),
            Err(Error::EndpointMismatch { .. })
        ));
        assert!(matches!(
            QuadraticModel::<f64>::assemble(&[], &layout),
            Err(Error::NoMeasurements)
        ));
    }
}
