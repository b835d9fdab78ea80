//! Conversion of a pose dataset into a sensor-network-localization instance:
//! poses become points and every translation becomes a range.

use super::dataset::{Dataset, StateBuilder};
use crate::model::{Measurement, VarKey, VariableLayout};
use crate::{Real, Result};

/// Drops all rotations; each translation measurement becomes a range with
/// distance `‖t̃‖` and the same precision, existing ranges are kept. Every
/// range gets a fresh bearing, numbered in measurement order.
pub fn convert_to_snl<T: Real>(dataset: &Dataset<T>) -> Result<Dataset<T>> {
    let d = dataset.d();
    let mut measurements = Vec::new();
    let mut next_bearing = 0u64;
    for m in &dataset.measurements {
        let (i, j, distance, rho) = match m {
            Measurement::RelRotation { .. } => continue,
            Measurement::RelTranslation {
                i,
                j,
                translation,
                tau,
            } => (
                *i,
                *j,
                translation.iter().map(|&v| v * v).sum::<T>().sqrt(),
                *tau,
            ),
            Measurement::Range {
                i,
                j,
                distance,
                rho,
                ..
            } => (*i, *j, *distance, *rho),
        };
        measurements.push(Measurement::Range {
            i,
            j,
            bearing: next_bearing,
            distance,
            rho,
        });
        next_bearing += 1;
    }

    let points: Vec<VarKey> = dataset
        .layout
        .unconstrained_blocks()
        .map(|b| b.key)
        .collect();
    let layout = VariableLayout::new(
        d,
        (0..next_bearing)
            .map(VarKey::Bearing)
            .chain(points.iter().copied()),
    )?;

    let ground_truth = dataset.ground_truth.as_ref().and_then(|x| {
        let mut truth = StateBuilder::new(d);
        for &key in &points {
            truth.set_point(key.id(), dataset.point_of(x, key)?);
        }
        truth.build(&layout, &measurements)
    });
    Ok(Dataset {
        name: format!("{}-snl", dataset.name),
        layout,
        measurements,
        ground_truth,
    })
}
