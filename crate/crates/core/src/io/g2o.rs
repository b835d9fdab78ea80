//! g2o text format.
//!
//! Supported records:
//!
//! | record | fields |
//! |---|---|
//! | `VERTEX_SE2` | `id x y theta` |
//! | `VERTEX_SE3:QUAT` | `id x y z qx qy qz qw` |
//! | `VERTEX_XY` | `id x y` |
//! | `VERTEX_TRACKXYZ` | `id x y z` |
//! | `EDGE_SE2` | `i j dx dy dtheta` + 6 upper-triangular information entries |
//! | `EDGE_SE3:QUAT` | `i j dx dy dz qx qy qz qw` + 21 upper-triangular information entries |
//! | `EDGE_SE2_XY` | `i j dx dy` + 3 information entries |
//! | `EDGE_SE3_TRACKXYZ` | `i j param dx dy dz` + 6 information entries |
//! | `EDGE_RANGE` | `i j dist precision` (extension) |
//!
//! Pose edges become one rotation and one translation measurement with
//! isotropic concentrations equal to the means of the rotational and
//! translational information diagonals. Every `EDGE_RANGE` record creates its
//! own bearing variable, numbered sequentially in file order.
//! Unknown records are skipped with a warning.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector, Matrix3, Rotation3, UnitQuaternion};

use super::dataset::{Dataset, StateBuilder};
use crate::model::{Measurement, VarKey, VariableLayout};
use crate::{Error, Real, Result};

const QUAT_NORM_TOL: f64 = 1e-3;

struct Line<'a> {
    number: usize,
    tag: &'a str,
    fields: Vec<&'a str>,
}

impl<'a> Line<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            line: self.number,
            message: format!("{}: {}", self.tag, message.into()),
        }
    }

    fn expect_len(&self, n: usize) -> Result<()> {
        if self.fields.len() < n {
            return Err(self.err(format!("expected {n} fields, found {}", self.fields.len())));
        }
        if self.fields.len() > n {
            log::warn!(
                "line {}: {} has {} trailing fields, ignored",
                self.number,
                self.tag,
                self.fields.len() - n
            );
        }
        Ok(())
    }

    fn id(&self, k: usize) -> Result<u64> {
        self.fields[k]
            .parse()
            .map_err(|_| self.err(format!("invalid id token '{}'", self.fields[k])))
    }

    fn float(&self, k: usize) -> Result<f64> {
        let v: f64 = self.fields[k]
            .parse()
            .map_err(|_| self.err(format!("invalid number token '{}'", self.fields[k])))?;
        if !v.is_finite() {
            return Err(self.err(format!("non-finite number '{}'", self.fields[k])));
        }
        Ok(v)
    }

    fn floats(&self, start: usize, len: usize) -> Result<Vec<f64>> {
        (start..start + len).map(|k| self.float(k)).collect()
    }

    fn quaternion(&self, start: usize) -> Result<UnitQuaternion<f64>> {
        let q = self.floats(start, 4)?;
        let q = nalgebra::Quaternion::new(q[3], q[0], q[1], q[2]);
        if (q.norm() - 1.0).abs() > QUAT_NORM_TOL {
            return Err(self.err(format!("quaternion norm {} is not 1", q.norm())));
        }
        Ok(UnitQuaternion::from_quaternion(q))
    }
}

/// Mean of selected diagonal entries of an upper-triangular packed
/// information matrix; warns when the matrix is not isotropic on that block.
fn isotropic_weight(
    line: &Line<'_>,
    packed: &[f64],
    dim: usize,
    diag: &[usize],
    what: &str,
) -> Result<f64> {
    let values: Vec<f64> = diag.iter().map(|&k| packed[k]).collect();
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if !(mean > 0.0) {
        return Err(line.err(format!("non-positive {what} information {mean}")));
    }
    let spread = values.iter().any(|&v| (v - mean).abs() > 1e-9 * mean);
    let diag_set: HashSet<usize> = (0..dim).map(|r| packed_index(dim, r, r)).collect();
    let off_diag = packed
        .iter()
        .enumerate()
        .any(|(k, &v)| !diag_set.contains(&k) && v != 0.0);
    if spread || off_diag {
        log::warn!(
            "line {}: anisotropic information matrix compressed to isotropic {what} weight {mean}",
            line.number
        );
    }
    Ok(mean)
}

/// Index of entry `(r, c)`, `r ≤ c`, in row-major upper-triangular packing.
fn packed_index(dim: usize, r: usize, c: usize) -> usize {
    r * dim - r * (r + 1) / 2 + c
}

fn diag_indices(dim: usize, rows: std::ops::Range<usize>) -> Vec<usize> {
    rows.map(|r| packed_index(dim, r, r)).collect()
}

#[derive(Default)]
struct Parsed {
    d: Option<usize>,
    keys: Vec<VarKey>,
    vertex_ids: HashSet<u64>,
    bearings: u64,
}

impl Parsed {
    fn set_dim(&mut self, line: &Line<'_>, d: usize) -> Result<()> {
        match self.d {
            Some(prev) if prev != d => Err(line.err(format!("mixes {prev}D and {d}D records"))),
            _ => {
                self.d = Some(d);
                Ok(())
            }
        }
    }

    fn add_vertex(&mut self, line: &Line<'_>, id: u64, pose: bool) -> Result<()> {
        if !self.vertex_ids.insert(id) {
            return Err(line.err(format!("duplicate vertex id {id}")));
        }
        if pose {
            self.keys.push(VarKey::Rotation(id));
        }
        self.keys.push(VarKey::Point(id));
        Ok(())
    }
}

fn rotation_2d(theta: f64) -> DMatrix<f64> {
    let (s, c) = theta.sin_cos();
    DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
}

fn quat_to_matrix(q: &UnitQuaternion<f64>) -> DMatrix<f64> {
    let m = q.to_rotation_matrix();
    DMatrix::from_fn(3, 3, |r, c| m[(r, c)])
}

/// Parses a g2o document. `name` labels the resulting dataset.
pub fn parse_g2o<T: Real, R: BufRead>(reader: R, name: &str) -> Result<Dataset<T>> {
    let mut parsed = Parsed::default();
    let mut poses: Vec<(u64, DMatrix<f64>, Vec<f64>)> = Vec::new();
    let mut points: Vec<(u64, Vec<f64>)> = Vec::new();
    let mut measurements: Vec<Measurement<T>> = Vec::new();
    let lit = |v: f64| T::lit(v);

    let mut text = String::new();
    let mut reader = reader;
    let mut number = 0usize;
    loop {
        text.clear();
        let read = reader.read_line(&mut text)?;
        if read == 0 {
            break;
        }
        number += 1;
        let content = text.split('#').next().unwrap_or("");
        let mut tokens = content.split_whitespace();
        let Some(tag) = tokens.next() else { continue };
        let line = Line {
            number,
            tag,
            fields: tokens.collect(),
        };
        match tag {
            "VERTEX_SE2" => {
                line.expect_len(4)?;
                parsed.set_dim(&line, 2)?;
                let id = line.id(0)?;
                let v = line.floats(1, 3)?;
                parsed.add_vertex(&line, id, true)?;
                poses.push((id, rotation_2d(v[2]), v[..2].to_vec()));
            }
            "VERTEX_SE3:QUAT" => {
                line.expect_len(8)?;
                parsed.set_dim(&line, 3)?;
                let id = line.id(0)?;
                let t = line.floats(1, 3)?;
                let q = line.quaternion(4)?;
                parsed.add_vertex(&line, id, true)?;
                poses.push((id, quat_to_matrix(&q), t));
            }
            "VERTEX_XY" | "VERTEX_TRACKXYZ" => {
                let d = if tag == "VERTEX_XY" { 2 } else { 3 };
                line.expect_len(1 + d)?;
                parsed.set_dim(&line, d)?;
                let id = line.id(0)?;
                parsed.add_vertex(&line, id, false)?;
                points.push((id, line.floats(1, d)?));
            }
            "EDGE_SE2" => {
                line.expect_len(11)?;
                parsed.set_dim(&line, 2)?;
                let (i, j) = (line.id(0)?, line.id(1)?);
                let v = line.floats(2, 3)?;
                let info = line.floats(5, 6)?;
                let tau =
                    isotropic_weight(&line, &info, 3, &diag_indices(3, 0..2), "translational")?;
                let kappa =
                    isotropic_weight(&line, &info, 3, &diag_indices(3, 2..3), "rotational")?;
                measurements.push(Measurement::RelRotation {
                    i,
                    j,
                    rotation: rotation_2d(v[2]).map(lit),
                    kappa: lit(kappa),
                });
                measurements.push(Measurement::RelTranslation {
                    i,
                    j,
                    translation: DVector::from_vec(vec![lit(v[0]), lit(v[1])]),
                    tau: lit(tau),
                });
            }
            "EDGE_SE3:QUAT" => {
                line.expect_len(30)?;
                parsed.set_dim(&line, 3)?;
                let (i, j) = (line.id(0)?, line.id(1)?);
                let t = line.floats(2, 3)?;
                let q = line.quaternion(5)?;
                let info = line.floats(9, 21)?;
                let tau =
                    isotropic_weight(&line, &info, 6, &diag_indices(6, 0..3), "translational")?;
                let kappa =
                    isotropic_weight(&line, &info, 6, &diag_indices(6, 3..6), "rotational")?;
                measurements.push(Measurement::RelRotation {
                    i,
                    j,
                    rotation: quat_to_matrix(&q).map(lit),
                    kappa: lit(kappa),
                });
                measurements.push(Measurement::RelTranslation {
                    i,
                    j,
                    translation: DVector::from_vec(t.into_iter().map(lit).collect()),
                    tau: lit(tau),
                });
            }
            "EDGE_SE2_XY" | "EDGE_SE3_TRACKXYZ" => {
                let d = if tag == "EDGE_SE2_XY" { 2 } else { 3 };
                let skip = if d == 3 { 1 } else { 0 };
                let n_info = d * (d + 1) / 2;
                line.expect_len(2 + skip + d + n_info)?;
                parsed.set_dim(&line, d)?;
                let (i, j) = (line.id(0)?, line.id(1)?);
                let t = line.floats(2 + skip, d)?;
                let info = line.floats(2 + skip + d, n_info)?;
                let tau =
                    isotropic_weight(&line, &info, d, &diag_indices(d, 0..d), "translational")?;
                measurements.push(Measurement::RelTranslation {
                    i,
                    j,
                    translation: DVector::from_vec(t.into_iter().map(lit).collect()),
                    tau: lit(tau),
                });
            }
            "EDGE_RANGE" => {
                line.expect_len(4)?;
                let (i, j) = (line.id(0)?, line.id(1)?);
                let dist = line.float(2)?;
                let rho = line.float(3)?;
                if dist < 0.0 {
                    return Err(line.err(format!("negative distance {dist}")));
                }
                if !(rho > 0.0) {
                    return Err(line.err(format!("non-positive precision {rho}")));
                }
                measurements.push(Measurement::Range {
                    i,
                    j,
                    bearing: parsed.bearings,
                    distance: lit(dist),
                    rho: lit(rho),
                });
                parsed.bearings += 1;
            }
            other => {
                log::warn!("line {number}: skipping unsupported record {other}");
            }
        }
    }

    let d = parsed.d.ok_or_else(|| {
        Error::InvalidArgument("no vertex or dimension-bearing record found".into())
    })?;
    let keys = parsed
        .keys
        .iter()
        .copied()
        .chain((0..parsed.bearings).map(VarKey::Bearing));
    let layout = VariableLayout::new(d, keys)?;

    let mut truth = StateBuilder::new(d);
    for (id, r, t) in poses {
        truth.set_pose(
            id,
            r.map(lit),
            DVector::from_vec(t.into_iter().map(lit).collect()),
        );
    }
    for (id, t) in points {
        truth.set_point(id, DVector::from_vec(t.into_iter().map(lit).collect()));
    }
    let ground_truth = truth.build(&layout, &measurements);
    let dataset = Dataset {
        name: name.to_string(),
        layout,
        measurements,
        ground_truth,
    };
    dataset.validate()?;
    Ok(dataset)
}

pub fn parse_g2o_str<T: Real>(text: &str, name: &str) -> Result<Dataset<T>> {
    parse_g2o(text.as_bytes(), name)
}

pub fn read_g2o<T: Real>(path: &std::path::Path) -> Result<Dataset<T>> {
    let file = std::fs::File::open(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_g2o(std::io::BufReader::new(file), &name)
}

fn fmt_floats(out: &mut String, values: impl IntoIterator<Item = f64>) {
    for v in values {
        write!(out, " {v}").unwrap();
    }
}

/// Packed upper-triangular isotropic information with the given diagonal.
fn packed_diag(diag: &[f64]) -> Vec<f64> {
    let dim = diag.len();
    let mut packed = vec![0.0; dim * (dim + 1) / 2];
    for (r, &v) in diag.iter().enumerate() {
        packed[packed_index(dim, r, r)] = v;
    }
    packed
}

fn quat_of<T: Real>(r: &DMatrix<T>) -> [f64; 4] {
    let m = Matrix3::from_fn(|a, b| r[(a, b)].as_f64());
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(m));
    [q.i, q.j, q.k, q.w]
}

fn angle_of<T: Real>(r: &DMatrix<T>) -> f64 {
    r[(1, 0)].as_f64().atan2(r[(0, 0)].as_f64())
}

/// Serializes a dataset as g2o text.
///
/// Vertices are written in the order of the point blocks; vertices with a
/// rotation block become pose vertices. Vertex values come from the ground
/// truth (identity/zero without one). A rotation measurement must be
/// immediately followed by the translation measurement of the same frame
/// pair; they are written as one pose edge. Lone translation measurements
/// become pose–point edges, ranges become `EDGE_RANGE` records.
pub fn write_g2o<T: Real, W: Write>(dataset: &Dataset<T>, mut w: W) -> Result<()> {
    w.write_all(g2o_string(dataset)?.as_bytes())?;
    Ok(())
}

pub fn g2o_string<T: Real>(dataset: &Dataset<T>) -> Result<String> {
    let layout = &dataset.layout;
    let d = layout.d();
    let mut out = String::new();
    let zero_point = DVector::<T>::zeros(d);
    let eye = DMatrix::<T>::identity(d, d);

    for block in layout.unconstrained_blocks() {
        let VarKey::Point(id) = block.key else {
            continue;
        };
        let p = match &dataset.ground_truth {
            Some(x) => dataset.point_of(x, block.key).unwrap(),
            None => zero_point.clone(),
        };
        let p: Vec<f64> = p.iter().map(|v| v.as_f64()).collect();
        if layout.contains(VarKey::Rotation(id)) {
            let r = match &dataset.ground_truth {
                Some(x) => dataset.rotation_of(x, id).unwrap(),
                None => eye.clone(),
            };
            if d == 2 {
                write!(out, "VERTEX_SE2 {id}").unwrap();
                fmt_floats(&mut out, p.iter().copied().chain([angle_of(&r)]));
            } else {
                write!(out, "VERTEX_SE3:QUAT {id}").unwrap();
                fmt_floats(&mut out, p.iter().copied().chain(quat_of(&r)));
            }
        } else {
            write!(
                out,
                "{} {id}",
                if d == 2 {
                    "VERTEX_XY"
                } else {
                    "VERTEX_TRACKXYZ"
                }
            )
            .unwrap();
            fmt_floats(&mut out, p.iter().copied());
        }
        out.push('\n');
    }
    for block in layout.constrained_blocks() {
        if let VarKey::Rotation(id) = block.key {
            if !layout.contains(VarKey::Point(id)) {
                return Err(Error::InvalidArgument(format!(
                    "rotation {id} has no position; g2o vertices are full poses"
                )));
            }
        }
    }

    let ms = &dataset.measurements;
    let mut k = 0;
    while k < ms.len() {
        match &ms[k] {
            Measurement::RelRotation {
                i,
                j,
                rotation,
                kappa,
            } => {
                let Some(Measurement::RelTranslation {
                    i: ti,
                    j: tj,
                    translation,
                    tau,
                }) = ms.get(k + 1)
                else {
                    return Err(Error::InvalidArgument(format!(
                        "rotation measurement {k} ({i}→{j}) is not paired with a translation"
                    )));
                };
                if (ti, tj) != (i, j) {
                    return Err(Error::InvalidArgument(format!(
                        "rotation measurement {k} ({i}→{j}) followed by translation {ti}→{tj}"
                    )));
                }
                let t: Vec<f64> = translation.iter().map(|v| v.as_f64()).collect();
                let (kappa, tau) = (kappa.as_f64(), tau.as_f64());
                if d == 2 {
                    write!(out, "EDGE_SE2 {i} {j}").unwrap();
                    fmt_floats(&mut out, t.into_iter().chain([angle_of(rotation)]));
                    fmt_floats(&mut out, packed_diag(&[tau, tau, kappa]));
                } else {
                    write!(out, "EDGE_SE3:QUAT {i} {j}").unwrap();
                    fmt_floats(&mut out, t.into_iter().chain(quat_of(rotation)));
                    fmt_floats(&mut out, packed_diag(&[tau, tau, tau, kappa, kappa, kappa]));
                }
                k += 2;
            }
            Measurement::RelTranslation {
                i,
                j,
                translation,
                tau,
            } => {
                let t: Vec<f64> = translation.iter().map(|v| v.as_f64()).collect();
                if d == 2 {
                    write!(out, "EDGE_SE2_XY {i} {j}").unwrap();
                } else {
                    write!(out, "EDGE_SE3_TRACKXYZ {i} {j} 0").unwrap();
                }
                fmt_floats(&mut out, t);
                fmt_floats(&mut out, packed_diag(&vec![tau.as_f64(); d]));
                k += 1;
            }
            Measurement::Range {
                i,
                j,
                distance,
                rho,
                ..
            } => {
                write!(
                    out,
                    "EDGE_RANGE {i} {j} {} {}",
                    distance.as_f64(),
                    rho.as_f64()
                )
                .unwrap();
                k += 1;
            }
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_g2o_file<T: Real>(dataset: &Dataset<T>, path: &std::path::Path) -> Result<()> {
    std::fs::write(path, g2o_string(dataset)?)?;
    Ok(())
}

/// Largest absolute difference between two measurement lists, or `None` if
/// they differ structurally (kinds, endpoints, shapes).
pub fn measurement_distance<T: Real>(a: &[Measurement<T>], b: &[Measurement<T>]) -> Option<f64> {
    if a.len() != b.len() {
        return None;
    }
    let mut worst = 0.0f64;
    let diff = |x: T, y: T| (x.as_f64() - y.as_f64()).abs();
    for (ma, mb) in a.iter().zip(b) {
        if ma.endpoints() != mb.endpoints() {
            return None;
        }
        let local = match (ma, mb) {
            (
                Measurement::RelRotation {
                    rotation: r1,
                    kappa: k1,
                    ..
                },
                Measurement::RelRotation {
                    rotation: r2,
                    kappa: k2,
                    ..
                },
            ) if r1.shape() == r2.shape() => r1
                .iter()
                .zip(r2.iter())
                .fold(diff(*k1, *k2), |m, (&x, &y)| m.max(diff(x, y))),
            (
                Measurement::RelTranslation {
                    translation: t1,
                    tau: w1,
                    ..
                },
                Measurement::RelTranslation {
                    translation: t2,
                    tau: w2,
                    ..
                },
            ) if t1.len() == t2.len() => t1
                .iter()
                .zip(t2.iter())
                .fold(diff(*w1, *w2), |m, (&x, &y)| m.max(diff(x, y))),
            (
                Measurement::Range {
                    bearing: b1,
                    distance: d1,
                    rho: r1,
                    ..
                },
                Measurement::Range {
                    bearing: b2,
                    distance: d2,
                    rho: r2,
                    ..
                },
            ) if b1 == b2 => diff(*d1, *d2).max(diff(*r1, *r2)),
            _ => return None,
        };
        worst = worst.max(local);
    }
    Some(worst)
}
