//! Synthetic problem instances: grid pose graphs, bipartite SfM-shaped
//! problems, and small random mixed instances for verification.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::dataset::{require_positive, unit_or_axis, Dataset, StateBuilder};
use crate::manifold::random_rotation;
use crate::model::{Measurement, VarKey, VariableLayout};
use crate::{Error, Real, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Noise {
    pub rot_sigma: f64,
    pub trans_sigma: f64,
}

impl Noise {
    pub const NONE: Noise = Noise {
        rot_sigma: 0.0,
        trans_sigma: 0.0,
    };

    /// Precision used for rotation residuals: `1/σ²`, or 1 without noise.
    pub fn kappa(&self) -> f64 {
        precision(self.rot_sigma)
    }

    pub fn tau(&self) -> f64 {
        precision(self.trans_sigma)
    }
}

fn precision(sigma: f64) -> f64 {
    if sigma > 0.0 {
        1.0 / (sigma * sigma)
    } else {
        1.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    /// Number of stacked grid layers; must be 1 in 2D.
    pub layers: usize,
    pub d: usize,
    pub noise: Noise,
    pub loop_prob: f64,
    pub seed: u64,
}

impl GridSpec {
    pub fn planar(rows: usize, cols: usize, noise: Noise, loop_prob: f64, seed: u64) -> Self {
        Self {
            rows,
            cols,
            layers: 1,
            d: 2,
            noise,
            loop_prob,
            seed,
        }
    }

    pub fn volumetric(
        rows: usize,
        cols: usize,
        layers: usize,
        noise: Noise,
        loop_prob: f64,
        seed: u64,
    ) -> Self {
        Self {
            rows,
            cols,
            layers,
            d: 3,
            noise,
            loop_prob,
            seed,
        }
    }
}

/// Rotation `exp(σ·[ξ]_×)` with standard-normal `ξ`.
pub fn noise_rotation<T: Real, R: Rng + ?Sized>(d: usize, sigma: f64, rng: &mut R) -> DMatrix<T> {
    if sigma == 0.0 {
        return DMatrix::identity(d, d);
    }
    match d {
        2 => {
            let theta: f64 = sigma * std_normal(rng);
            rotation_2d(T::lit(theta))
        }
        3 => {
            let w: Vec<f64> = (0..3).map(|_| sigma * std_normal(rng)).collect();
            rotation_3d_exp(&w)
        }
        _ => unreachable!("dimension validated by the layout"),
    }
}

pub fn rotation_2d<T: Real>(theta: T) -> DMatrix<T> {
    let (s, c) = theta.sin_cos();
    DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
}

/// Rodrigues' formula.
pub fn rotation_3d_exp<T: Real>(w: &[f64]) -> DMatrix<T> {
    let theta = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
    let k = DMatrix::from_row_slice(
        3,
        3,
        &[0.0, -w[2], w[1], w[2], 0.0, -w[0], -w[1], w[0], 0.0],
    );
    let (a, b) = if theta < 1e-12 {
        (1.0, 0.5)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / (theta * theta))
    };
    let r = DMatrix::<f64>::identity(3, 3) + &k * a + &k * &k * b;
    r.map(T::lit)
}

fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

fn gaussian_vec<T: Real, R: Rng + ?Sized>(d: usize, sigma: f64, rng: &mut R) -> DVector<T> {
    DVector::from_fn(d, |_, _| T::lit(sigma * std_normal(rng)))
}

/// Noisy relative pose measurement from poses `i` to `j`, as the
/// (rotation, translation) measurement pair.
fn relative_pose<T: Real, R: Rng + ?Sized>(
    truth: &StateBuilder<T>,
    i: u64,
    j: u64,
    noise: Noise,
    rng: &mut R,
) -> [Measurement<T>; 2] {
    let ri = truth.rotation(i).expect("pose i");
    let rj = truth.rotation(j).expect("pose j");
    let d = ri.nrows();
    let rel = ri.transpose() * rj * noise_rotation::<T, _>(d, noise.rot_sigma, rng);
    let t = ri.transpose() * (truth.point(j).unwrap() - truth.point(i).unwrap())
        + gaussian_vec(d, noise.trans_sigma, rng);
    [
        Measurement::RelRotation {
            i,
            j,
            rotation: rel,
            kappa: T::lit(noise.kappa()),
        },
        Measurement::RelTranslation {
            i,
            j,
            translation: t,
            tau: T::lit(noise.tau()),
        },
    ]
}

/// Noisy translation of point `j` seen from frame `i`.
fn relative_translation<T: Real, R: Rng + ?Sized>(
    truth: &StateBuilder<T>,
    i: u64,
    j: u64,
    noise: Noise,
    rng: &mut R,
) -> Measurement<T> {
    let ri = truth.rotation(i).expect("frame i");
    let d = ri.nrows();
    let t = ri.transpose() * (truth.point(j).unwrap() - truth.point(i).unwrap())
        + gaussian_vec(d, noise.trans_sigma, rng);
    Measurement::RelTranslation {
        i,
        j,
        translation: t,
        tau: T::lit(noise.tau()),
    }
}

/// Poses on a regular grid, chained by odometry along a serpentine path,
/// with each remaining pair of cells within one grid step (diagonals included)
/// closed with probability
/// `loop_prob`. True orientations are drawn uniformly.
pub fn generate_grid_pgo<T: Real>(spec: &GridSpec) -> Result<Dataset<T>> {
    require_positive("rows", spec.rows)?;
    require_positive("cols", spec.cols)?;
    require_positive("layers", spec.layers)?;
    if spec.d == 2 && spec.layers != 1 {
        return Err(Error::InvalidArgument(
            "a planar grid has exactly one layer".into(),
        ));
    }
    if !(0.0..=1.0).contains(&spec.loop_prob) {
        return Err(Error::InvalidArgument(format!(
            "loop probability {} outside [0, 1]",
            spec.loop_prob
        )));
    }
    let d = spec.d;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // serpentine order: alternate column direction per row, row direction per layer
    let mut cells = Vec::with_capacity(spec.rows * spec.cols * spec.layers);
    for l in 0..spec.layers {
        for rr in 0..spec.rows {
            let r = if l % 2 == 0 { rr } else { spec.rows - 1 - rr };
            let row_index = l * spec.rows + rr;
            for cc in 0..spec.cols {
                let c = if row_index.is_multiple_of(2) {
                    cc
                } else {
                    spec.cols - 1 - cc
                };
                cells.push((r, c, l));
            }
        }
    }
    let mut truth = StateBuilder::new(d);
    for (k, &(r, c, l)) in cells.iter().enumerate() {
        let mut t = vec![T::lit(c as f64), T::lit(r as f64)];
        if d == 3 {
            t.push(T::lit(l as f64));
        }
        truth.set_pose(k as u64, random_rotation(d, &mut rng), DVector::from_vec(t));
    }

    let mut measurements = Vec::new();
    for k in 1..cells.len() as u64 {
        measurements.extend(relative_pose(&truth, k - 1, k, spec.noise, &mut rng));
    }
    // loop-closure candidates: every pair of cells within Chebyshev distance
    // one (axis neighbours and diagonals) not already joined by odometry
    for a in 0..cells.len() {
        for b in a + 2..cells.len() {
            let (p, q) = (cells[a], cells[b]);
            let near = p.0.abs_diff(q.0) <= 1 && p.1.abs_diff(q.1) <= 1 && p.2.abs_diff(q.2) <= 1;
            if near && rng.random::<f64>() < spec.loop_prob {
                measurements.extend(relative_pose(
                    &truth, a as u64, b as u64, spec.noise, &mut rng,
                ));
            }
        }
    }

    let layout = VariableLayout::new(
        d,
        (0..cells.len() as u64).flat_map(|k| [VarKey::Rotation(k), VarKey::Point(k)]),
    )?;
    let ground_truth = truth.build(&layout, &measurements);
    let name = if d == 2 {
        format!("grid{}x{}", spec.rows, spec.cols)
    } else {
        format!("grid{}x{}x{}", spec.rows, spec.cols, spec.layers)
    };
    Ok(Dataset {
        name,
        layout,
        measurements,
        ground_truth,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SfmSpec {
    pub n_frames: usize,
    pub n_points: usize,
    pub obs_per_point: usize,
    pub d: usize,
    pub noise: Noise,
    pub seed: u64,
}

/// Frames on a circle around a cloud of landmarks. Frames are chained by
/// odometry; every landmark is observed (relative translation) from
/// `obs_per_point` distinct frames. Landmark ids follow the frame ids.
pub fn generate_bipartite_sfm<T: Real>(spec: &SfmSpec) -> Result<Dataset<T>> {
    require_positive("n_frames", spec.n_frames)?;
    require_positive("n_points", spec.n_points)?;
    require_positive("obs_per_point", spec.obs_per_point)?;
    if spec.obs_per_point > spec.n_frames {
        return Err(Error::InvalidArgument(format!(
            "obs_per_point ({}) exceeds n_frames ({})",
            spec.obs_per_point, spec.n_frames
        )));
    }
    let d = spec.d;
    if d != 2 && d != 3 {
        return Err(Error::InvalidArgument(format!(
            "dimension must be 2 or 3, got {d}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut truth = StateBuilder::new(d);
    let radius = 10.0;
    for f in 0..spec.n_frames {
        let angle = 2.0 * std::f64::consts::PI * f as f64 / spec.n_frames as f64;
        let mut t = vec![T::lit(radius * angle.cos()), T::lit(radius * angle.sin())];
        if d == 3 {
            t.push(T::lit(rng.random_range(-1.0..1.0)));
        }
        truth.set_pose(f as u64, random_rotation(d, &mut rng), DVector::from_vec(t));
    }
    let first_landmark = spec.n_frames as u64;
    for p in 0..spec.n_points {
        let t = DVector::from_fn(d, |_, _| T::lit(rng.random_range(-5.0..5.0)));
        truth.set_point(first_landmark + p as u64, t);
    }

    let mut measurements = Vec::new();
    for f in 1..spec.n_frames as u64 {
        measurements.extend(relative_pose(&truth, f - 1, f, spec.noise, &mut rng));
    }
    for p in 0..spec.n_points as u64 {
        let mut frames: Vec<usize> = sample(&mut rng, spec.n_frames, spec.obs_per_point).into_vec();
        frames.sort_unstable();
        for f in frames {
            measurements.push(relative_translation(
                &truth,
                f as u64,
                first_landmark + p,
                spec.noise,
                &mut rng,
            ));
        }
    }

    let keys = (0..spec.n_frames as u64)
        .flat_map(|f| [VarKey::Rotation(f), VarKey::Point(f)])
        .chain((0..spec.n_points as u64).map(|p| VarKey::Point(first_landmark + p)));
    let layout = VariableLayout::new(d, keys)?;
    let ground_truth = truth.build(&layout, &measurements);
    Ok(Dataset {
        name: format!("sfm{}x{}", spec.n_frames, spec.n_points),
        layout,
        measurements,
        ground_truth,
    })
}

/// Small random instance mixing all residual types, used by the
/// verification suites.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomInstanceSpec {
    pub d: usize,
    /// Frames: rotation + point.
    pub poses: usize,
    /// Points without orientation.
    pub landmarks: usize,
    /// Range measurements beyond the spanning structure (each adds a bearing).
    pub extra_ranges: usize,
    /// Relative-translation measurements beyond the spanning structure.
    pub extra_translations: usize,
    /// Relative-rotation measurements between random frame pairs.
    pub rotations: usize,
    /// Connected components of the point graph (1 or 2).
    pub components: usize,
    pub noise: Noise,
    pub seed: u64,
}

impl RandomInstanceSpec {
    /// Draws sizes with `n_c ≤ 20` and `n_f ≤ 40`.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, seed: u64) -> Self {
        let d = if rng.random::<bool>() { 2 } else { 3 };
        let components = if rng.random::<bool>() { 1 } else { 2 };
        let max_poses = if d == 2 { 6 } else { 4 };
        let poses = rng.random_range(components.max(2)..=max_poses);
        let landmarks = rng.random_range(0..=(40 - poses).min(20));
        let max_bearings = 20 - poses * d;
        Self {
            d,
            poses,
            landmarks,
            extra_ranges: rng.random_range(0..=max_bearings.min(4)),
            extra_translations: rng.random_range(0..=4),
            rotations: rng.random_range(1..=poses),
            components,
            noise: Noise {
                rot_sigma: 0.1,
                trans_sigma: 0.1,
            },
            seed,
        }
    }
}

pub fn random_instance<T: Real>(spec: &RandomInstanceSpec) -> Result<Dataset<T>> {
    let d = spec.d;
    if spec.poses < 2 {
        return Err(Error::InvalidArgument("need at least two poses".into()));
    }
    if spec.components == 0 || spec.components > 2 || spec.components > spec.poses {
        return Err(Error::InvalidArgument(format!(
            "unsupported component count {}",
            spec.components
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut truth = StateBuilder::new(d);
    let n_points = spec.poses + spec.landmarks;
    for k in 0..n_points as u64 {
        let t = DVector::from_fn(d, |_, _| T::lit(3.0 * std_normal(&mut rng)));
        if (k as usize) < spec.poses {
            truth.set_pose(k, random_rotation(d, &mut rng), t);
        } else {
            truth.set_point(k, t);
        }
    }
    let is_pose = |k: u64| (k as usize) < spec.poses;

    // each component gets at least one pose; poses alternate, landmarks split at random
    let mut groups: Vec<Vec<u64>> = vec![Vec::new(); spec.components];
    for k in 0..n_points as u64 {
        let g = if is_pose(k) {
            k as usize % spec.components
        } else {
            rng.random_range(0..spec.components)
        };
        groups[g].push(k);
    }

    let mut measurements = Vec::new();
    let mut next_bearing = 0u64;
    let mut range =
        |a: u64, b: u64, rng: &mut ChaCha8Rng, truth: &StateBuilder<T>| -> Measurement<T> {
            let diff = truth.point(b).unwrap() - truth.point(a).unwrap();
            let dist = diff.iter().map(|&v| v * v).sum::<T>().sqrt().as_f64();
            let noisy = (dist + spec.noise.trans_sigma * std_normal(rng)).abs();
            let m = Measurement::Range {
                i: a,
                j: b,
                bearing: next_bearing,
                distance: T::lit(noisy),
                rho: T::lit(spec.noise.tau()),
            };
            next_bearing += 1;
            m
        };

    // spanning tree per component; every point hangs off an earlier pose so
    // the tree itself adds no bearings
    for group in &groups {
        let mut order = group.clone();
        order.sort_by_key(|&k| (!is_pose(k), k));
        let n_poses = order.iter().filter(|&&k| is_pose(k)).count();
        for idx in 1..order.len() {
            let parent = order[rng.random_range(0..idx.min(n_poses))];
            measurements.push(relative_translation(
                &truth, parent, order[idx], spec.noise, &mut rng,
            ));
        }
    }
    let pick_pair = |rng: &mut ChaCha8Rng, group: &[u64]| -> Option<(u64, u64)> {
        if group.len() < 2 {
            return None;
        }
        let a = group[rng.random_range(0..group.len())];
        let mut b = group[rng.random_range(0..group.len())];
        while b == a {
            b = group[rng.random_range(0..group.len())];
        }
        Some((a, b))
    };
    for _ in 0..spec.extra_translations {
        let g = rng.random_range(0..groups.len());
        let poses: Vec<u64> = groups[g].iter().copied().filter(|&k| is_pose(k)).collect();
        if poses.is_empty() {
            continue;
        }
        let a = poses[rng.random_range(0..poses.len())];
        let others: Vec<u64> = groups[g].iter().copied().filter(|&k| k != a).collect();
        if others.is_empty() {
            continue;
        }
        let b = others[rng.random_range(0..others.len())];
        measurements.push(relative_translation(&truth, a, b, spec.noise, &mut rng));
    }
    for _ in 0..spec.extra_ranges {
        let g = rng.random_range(0..groups.len());
        if let Some((a, b)) = pick_pair(&mut rng, &groups[g]) {
            measurements.push(range(a, b, &mut rng, &truth));
        }
    }
    for _ in 0..spec.rotations {
        let a = rng.random_range(0..spec.poses as u64);
        let mut b = rng.random_range(0..spec.poses as u64);
        while b == a {
            b = rng.random_range(0..spec.poses as u64);
        }
        let [rot, _] = relative_pose(&truth, a, b, spec.noise, &mut rng);
        measurements.push(rot);
    }

    let bearings: Vec<u64> = measurements
        .iter()
        .filter_map(|m| match m {
            Measurement::Range { bearing, .. } => Some(*bearing),
            _ => None,
        })
        .collect();
    let keys = (0..spec.poses as u64)
        .map(VarKey::Rotation)
        .chain(bearings.into_iter().map(VarKey::Bearing))
        .chain((0..n_points as u64).map(VarKey::Point));
    let layout = VariableLayout::new(d, keys)?;
    let ground_truth = truth.build(&layout, &measurements);
    Ok(Dataset {
        name: format!("random-{}", spec.seed),
        layout,
        measurements,
        ground_truth,
    })
}

/// Bearing for a point pair: normalized difference.
pub fn bearing_between<T: Real>(from: &DVector<T>, to: &DVector<T>) -> DVector<T> {
    unit_or_axis(&(to - from))
}
