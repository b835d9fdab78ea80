use nalgebra::{DMatrix, DVector};

use super::{VarKey, VariableLayout};
use crate::Real;

/// A relative measurement between two frames/points.
///
/// Frames are identified by vertex id; the referenced blocks follow from the
/// variant: a rotation residual touches `Rotation(i)` and `Rotation(j)`, a
/// translation residual touches `Point(i)`, `Point(j)` and the frame
/// rotation `Rotation(i)`, and a range residual touches `Point(i)`, `Point(j)`
/// and its own `Bearing(bearing)` block.
#[derive(Clone, Debug, PartialEq)]
pub enum Measurement<T: Real> {
    /// `‖R_j − R_i R̃_ij‖²_F` weighted by `kappa`.
    RelRotation {
        i: u64,
        j: u64,
        rotation: DMatrix<T>,
        kappa: T,
    },
    /// `‖t_j − t_i − R_i t̃_ij‖²` weighted by `tau`.
    RelTranslation {
        i: u64,
        j: u64,
        translation: DVector<T>,
        tau: T,
    },
    /// `‖t_j − t_i − u_ij d̃_ij‖²` weighted by `rho`.
    Range {
        i: u64,
        j: u64,
        bearing: u64,
        distance: T,
        rho: T,
    },
}

impl<T: Real> Measurement<T> {
    pub fn endpoints(&self) -> (u64, u64) {
        match *self {
            Measurement::RelRotation { i, j, .. }
            | Measurement::RelTranslation { i, j, .. }
            | Measurement::Range { i, j, .. } => (i, j),
        }
    }

    pub fn concentration(&self) -> T {
        match *self {
            Measurement::RelRotation { kappa, .. } => kappa,
            Measurement::RelTranslation { tau, .. } => tau,
            Measurement::Range { rho, .. } => rho,
        }
    }

    /// Blocks referenced by this measurement, in a fixed order.
    pub fn keys(&self) -> Vec<VarKey> {
        match *self {
            Measurement::RelRotation { i, j, .. } => vec![VarKey::Rotation(i), VarKey::Rotation(j)],
            Measurement::RelTranslation { i, j, .. } => {
                vec![VarKey::Point(i), VarKey::Point(j), VarKey::Rotation(i)]
            }
            Measurement::Range { i, j, bearing, .. } => {
                vec![VarKey::Point(i), VarKey::Point(j), VarKey::Bearing(bearing)]
            }
        }
    }

    /// Number of residual rows (rows of A) this measurement contributes.
    pub fn residual_rows(&self, d: usize) -> usize {
        match self {
            Measurement::RelRotation { .. } => d,
            Measurement::RelTranslation { .. } | Measurement::Range { .. } => 1,
        }
    }

    /// Residual evaluated directly from the geometric quantities held in X
    /// (rotations are read back as `R = blockᵀ`). Returned as rows×d, the
    /// transpose of the textbook column form.
    pub fn residual(&self, layout: &VariableLayout, x: &DMatrix<T>) -> DMatrix<T> {
        let d = layout.d();
        let rotation = |id: u64| -> DMatrix<T> {
            let r = layout.rows(VarKey::Rotation(id)).expect("rotation block");
            x.rows(r.start, d).transpose()
        };
        let point = |key: VarKey| -> DVector<T> {
            let r = layout.rows(key).expect("point-like block");
            x.row(r.start).transpose()
        };
        match self {
            Measurement::RelRotation {
                i, j, rotation: rm, ..
            } => {
                let e = rotation(*j) - rotation(*i) * rm;
                e.transpose()
            }
            Measurement::RelTranslation {
                i, j, translation, ..
            } => {
                let e = point(VarKey::Point(*j))
                    - point(VarKey::Point(*i))
                    - rotation(*i) * translation;
                DMatrix::from_row_slice(1, d, e.as_slice())
            }
            Measurement::Range {
                i,
                j,
                bearing,
                distance,
                ..
            } => {
                let e = point(VarKey::Point(*j))
                    - point(VarKey::Point(*i))
                    - point(VarKey::Bearing(*bearing)) * *distance;
                DMatrix::from_row_slice(1, d, e.as_slice())
            }
        }
    }

    /// Weighted squared residual `conc · ‖r‖²`.
    pub fn weighted_residual_sq(&self, layout: &VariableLayout, x: &DMatrix<T>) -> T {
        let r = self.residual(layout, x);
        self.concentration() * r.iter().map(|&v| v * v).sum::<T>()
    }
}
