use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::manifold::ProductManifold;
use crate::model::{Measurement, QuadraticModel, VarKey, VariableLayout};
use crate::schur::UnconstrainedGraph;
use crate::{Error, Real, Result};

/// Variables, measurements and (optionally) the true value of X.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T: Real> {
    pub name: String,
    pub layout: VariableLayout,
    pub measurements: Vec<Measurement<T>>,
    pub ground_truth: Option<DMatrix<T>>,
}

impl<T: Real> Dataset<T> {
    pub fn assemble(&self) -> Result<QuadraticModel<T>> {
        QuadraticModel::assemble(&self.measurements, &self.layout)
    }

    pub fn d(&self) -> usize {
        self.layout.d()
    }

    /// Checks that measurements reference existing blocks and that the ground
    /// truth, when present, is feasible.
    pub fn validate(&self) -> Result<()> {
        self.assemble()?;
        if let Some(gt) = &self.ground_truth {
            ProductManifold::full(&self.layout).check_point(gt)?;
        }
        Ok(())
    }

    /// Rotation `R_id` from a full X (rotation blocks store `Rᵀ`).
    pub fn rotation_of(&self, x: &DMatrix<T>, id: u64) -> Option<DMatrix<T>> {
        let r = self.layout.rows(VarKey::Rotation(id))?;
        Some(x.rows(r.start, self.d()).transpose())
    }

    pub fn point_of(&self, x: &DMatrix<T>, key: VarKey) -> Option<DVector<T>> {
        let r = self.layout.rows(key)?;
        Some(x.row(r.start).transpose())
    }

    /// Graph over point blocks induced by translation and range measurements.
    pub fn translation_graph(&self) -> Result<UnconstrainedGraph> {
        UnconstrainedGraph::detect(self.assemble()?.a_f())
    }
}

/// Incremental construction of a full X from poses, points and bearings.
pub(crate) struct StateBuilder<T: Real> {
    d: usize,
    rotations: HashMap<u64, DMatrix<T>>,
    points: HashMap<u64, DVector<T>>,
}

impl<T: Real> StateBuilder<T> {
    pub fn new(d: usize) -> Self {
        Self {
            d,
            rotations: HashMap::new(),
            points: HashMap::new(),
        }
    }

    pub fn set_pose(&mut self, id: u64, rotation: DMatrix<T>, translation: DVector<T>) {
        self.rotations.insert(id, rotation);
        self.points.insert(id, translation);
    }

    pub fn set_point(&mut self, id: u64, p: DVector<T>) {
        self.points.insert(id, p);
    }

    pub fn point(&self, id: u64) -> Option<&DVector<T>> {
        self.points.get(&id)
    }

    pub fn rotation(&self, id: u64) -> Option<&DMatrix<T>> {
        self.rotations.get(&id)
    }

    /// Assembles X; bearings are filled with normalized point differences
    /// from the range measurements that own them. Returns `None` if any
    /// rotation or point is unknown.
    pub fn build(
        &self,
        layout: &VariableLayout,
        measurements: &[Measurement<T>],
    ) -> Option<DMatrix<T>> {
        let d = self.d;
        let mut bearings: HashMap<u64, DVector<T>> = HashMap::new();
        for m in measurements {
            if let Measurement::Range { i, j, bearing, .. } = m {
                let diff = self.points.get(j)? - self.points.get(i)?;
                bearings.insert(*bearing, unit_or_axis(&diff));
            }
        }
        let mut x = DMatrix::zeros(layout.n(), d);
        for b in layout.blocks() {
            match b.key {
                VarKey::Rotation(id) => {
                    let r = self.rotations.get(&id)?;
                    x.rows_mut(b.rows.start, d).copy_from(&r.transpose());
                }
                VarKey::Point(id) => {
                    let p = self.points.get(&id)?;
                    x.row_mut(b.rows.start).copy_from(&p.transpose());
                }
                VarKey::Bearing(id) => {
                    let u = bearings.get(&id)?;
                    x.row_mut(b.rows.start).copy_from(&u.transpose());
                }
            }
        }
        Some(x)
    }
}

/// `v / ‖v‖`, or the first axis for a zero vector.
pub(crate) fn unit_or_axis<T: Real>(v: &DVector<T>) -> DVector<T> {
    let nrm = v.iter().map(|&a| a * a).sum::<T>().sqrt();
    if nrm > T::zero() {
        v / nrm
    } else {
        let mut e = DVector::zeros(v.len());
        e[0] = T::one();
        e
    }
}

pub(crate) fn require_positive(name: &str, value: usize) -> Result<()> {
    if value == 0 {
        return Err(Error::InvalidArgument(format!("{name} must be positive")));
    }
    Ok(())
}
