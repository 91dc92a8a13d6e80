//! Rigid registration of sequential point clouds with point-to-point ICP.
//!
//! Each iteration subsamples the source, matches every selected point to its
//! nearest reference point within a distance gate, keeps only the closest
//! source per reference point, and solves the least-squares rigid motion in
//! closed form. Odometry tags on the clouds seed the first alignment.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Point3, Rotation3, Unit, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = Point3<f64>;

/// Proper rigid motion `p -> R p + t` (metres).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform3 {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for RigidTransform3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform3 {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64, translation: Vector3<f64>) -> Self {
        let rotation = if axis.norm() == 0.0 || angle == 0.0 {
            Matrix3::identity()
        } else {
            Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle).into_inner()
        };
        Self {
            rotation,
            translation,
        }
    }

    /// Yaw about +z followed by a translation.
    pub fn from_yaw(yaw: f64, translation: Vector3<f64>) -> Self {
        Self::from_axis_angle(Vector3::z(), yaw, translation)
    }

    pub fn apply(&self, p: &Point) -> Point {
        Point::from(self.rotation * p.coords + self.translation)
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &RigidTransform3) -> RigidTransform3 {
        RigidTransform3 {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform3 {
        let rt = self.rotation.transpose();
        RigidTransform3 {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Rotation angle in radians, in `[0, pi]`.
    pub fn angle(&self) -> f64 {
        ((self.rotation.trace() - 1.0) / 2.0)
            .clamp(-1.0, 1.0)
            .acos()
    }

    /// Orthonormal with determinant +1, within `tol`.
    pub fn is_proper(&self, tol: f64) -> bool {
        let ortho = (self.rotation.transpose() * self.rotation - Matrix3::identity())
            .abs()
            .max();
        ortho <= tol && (self.rotation.determinant() - 1.0).abs() <= tol
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<Point>,
    /// Frame-to-world odometry pose.
    pub pose: Option<RigidTransform3>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points
            .iter()
            .any(|p| !p.coords.iter().all(|c| c.is_finite()))
        {
            return Err(Error::InvalidInput(
                "point cloud has non-finite coordinates".into(),
            ));
        }
        Ok(Self { points, pose: None })
    }

    pub fn with_pose(mut self, pose: RigidTransform3) -> Self {
        self.pose = Some(pose);
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn transformed(&self, t: &RigidTransform3) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| t.apply(p)).collect(),
            pose: self.pose,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcpParams {
    pub subsample_ratio: f64,
    pub max_correspondence_distance: f64,
    pub max_iterations: usize,
    /// Absolute rmse (m) at or below which the error has converged.
    pub rmse_floor: f64,
    /// Change in rmse (m) between iterations at or below which it has converged.
    pub rmse_delta: f64,
    /// Largest accepted per-iteration rotation (rad).
    pub max_rotation: f64,
    /// Largest accepted per-iteration translation (m).
    pub max_translation: f64,
    /// Per-iteration update below which the transform has stalled.
    pub motion_epsilon: f64,
}

impl Default for IcpParams {
    fn default() -> Self {
        Self {
            subsample_ratio: 0.5,
            max_correspondence_distance: 0.1,
            max_iterations: 50,
            rmse_floor: 1e-3,
            rmse_delta: 1e-6,
            max_rotation: std::f64::consts::FRAC_PI_4,
            max_translation: 0.5,
            motion_epsilon: 1e-8,
        }
    }
}

impl IcpParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.subsample_ratio > 0.0 && self.subsample_ratio <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "subsample ratio must lie in (0, 1], got {}",
                self.subsample_ratio
            )));
        }
        for (name, v) in [
            (
                "max correspondence distance",
                self.max_correspondence_distance,
            ),
            ("rmse floor", self.rmse_floor),
            ("rmse delta", self.rmse_delta),
            ("max rotation", self.max_rotation),
            ("max translation", self.max_translation),
            ("motion epsilon", self.motion_epsilon),
        ] {
            if !(v > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Deterministic uniform-stride selection of `ceil(ratio * n)` points.
pub fn subsample(cloud: &PointCloud, ratio: f64) -> Result<PointCloud> {
    if cloud.is_empty() {
        return Err(Error::InvalidInput(
            "cannot subsample an empty cloud".into(),
        ));
    }
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "subsample ratio must lie in (0, 1], got {ratio}"
        )));
    }
    let n = cloud.len();
    let m = ((ratio * n as f64 - 1e-9).ceil() as usize).clamp(1, n);
    let points = (0..m).map(|i| cloud.points[i * n / m]).collect();
    Ok(PointCloud {
        points,
        pose: cloud.pose,
    })
}

/// Transform taking source-frame points into the reference frame, from the
/// odometry tags: `ref_pose^-1 ∘ src_pose`. The flag is `false` (and the
/// transform the identity) when either tag is missing.
pub fn initial_align(src: &PointCloud, reference: &PointCloud) -> (RigidTransform3, bool) {
    match (src.pose, reference.pose) {
        (Some(s), Some(r)) => (r.inverse().compose(&s), true),
        _ => (RigidTransform3::identity(), false),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pair {
    pub src: usize,
    pub dst: usize,
    pub dist: f64,
}

/// Uniform-grid index over reference points for exact radius-bounded
/// nearest-neighbour queries. Cells are sized from the point density and
/// searched in growing shells until no closer point can remain.
pub struct NeighborIndex<'a> {
    points: &'a [Point],
    cell: f64,
    buckets: HashMap<[i64; 3], Vec<usize>>,
}

impl<'a> NeighborIndex<'a> {
    pub fn new(points: &'a [Point], max_dist: f64) -> Self {
        let cell = Self::cell_size(points, max_dist);
        let mut buckets: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            buckets.entry(Self::key(p, cell)).or_default().push(i);
        }
        Self {
            points,
            cell,
            buckets,
        }
    }

    /// About four points per occupied cell for surface-like clouds, never
    /// wider than the gate.
    fn cell_size(points: &[Point], max_dist: f64) -> f64 {
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for p in points {
            lo = lo.inf(&p.coords);
            hi = hi.sup(&p.coords);
        }
        let mut ext: Vec<f64> = if points.is_empty() {
            vec![0.0; 3]
        } else {
            (hi - lo).iter().copied().collect()
        };
        ext.sort_by(|a, b| b.total_cmp(a));
        let area = (ext[0] * ext[1]).max(ext[0] * ext[0] * 1e-6);
        let mut cell = 2.0 * (area / points.len().max(1) as f64).sqrt();
        if max_dist.is_finite() && max_dist > 0.0 {
            cell = cell.min(max_dist);
        }
        if !(cell.is_finite() && cell > 0.0) {
            cell = if max_dist.is_finite() && max_dist > 0.0 {
                max_dist
            } else {
                1.0
            };
        }
        cell
    }

    fn key(p: &Point, cell: f64) -> [i64; 3] {
        let k = |v: f64| (v / cell).floor().clamp(-1e15, 1e15) as i64;
        [k(p.x), k(p.y), k(p.z)]
    }

    /// Nearest point within `max_dist` (lowest index on ties).
    pub fn nearest(&self, q: &Point, max_dist: f64) -> Option<(usize, f64)> {
        let limit = max_dist * max_dist;
        let mut best: Option<(usize, f64)> = None;
        let consider = |i: usize, best: &mut Option<(usize, f64)>| {
            let d2 = (self.points[i] - q).norm_squared();
            if d2 <= limit && best.is_none_or(|(bi, bd)| d2 < bd || (d2 == bd && i < bi)) {
                *best = Some((i, d2));
            }
        };
        let [kx, ky, kz] = Self::key(q, self.cell);
        // Cells on shell r+1 and beyond lie at least r cells away.
        let max_ring = if max_dist.is_finite() {
            ((max_dist / self.cell).ceil() as i64 + 1).min(1 << 20)
        } else {
            i64::MAX
        };
        let mut visited = 0usize;
        let mut r: i64 = 0;
        while r <= max_ring && visited < self.buckets.len() {
            for dx in -r..=r {
                for dy in -r..=r {
                    let on_face = dx.abs() == r || dy.abs() == r;
                    let dzs: Vec<i64> = if on_face {
                        (-r..=r).collect()
                    } else {
                        vec![-r, r]
                    };
                    for dz in dzs {
                        if let Some(ids) = self.buckets.get(&[kx + dx, ky + dy, kz + dz]) {
                            visited += 1;
                            ids.iter().for_each(|&i| consider(i, &mut best));
                        }
                    }
                }
            }
            let reach = r as f64 * self.cell;
            if best.is_some_and(|(_, d2)| d2 < reach * reach) || reach > max_dist {
                break;
            }
            r += 1;
        }
        best.map(|(i, d2)| (i, d2.sqrt()))
    }
}

/// Nearest reference point within `max_dist` for every source point.
pub fn match_points(src: &[Point], reference: &[Point], max_dist: f64) -> Vec<Pair> {
    let index = NeighborIndex::new(reference, max_dist);
    match_with_index(src, &index, max_dist)
}

fn match_with_index(src: &[Point], index: &NeighborIndex<'_>, max_dist: f64) -> Vec<Pair> {
    src.par_iter()
        .enumerate()
        .filter_map(|(i, p)| {
            index.nearest(p, max_dist).map(|(j, d)| Pair {
                src: i,
                dst: j,
                dist: d,
            })
        })
        .collect()
}

/// Keeps, for every reference point, only its closest source pair (lowest
/// source index on ties). Output is ordered by source index.
pub fn reject(pairs: &[Pair]) -> Vec<Pair> {
    let mut best: HashMap<usize, Pair> = HashMap::new();
    for p in pairs {
        best.entry(p.dst)
            .and_modify(|b| {
                if p.dist < b.dist || (p.dist == b.dist && p.src < b.src) {
                    *b = *p;
                }
            })
            .or_insert(*p);
    }
    let mut out: Vec<Pair> = best.into_values().collect();
    out.sort_by_key(|p| p.src);
    out
}

/// Least-squares rigid motion taking `src[i]` onto `dst[i]`.
pub fn solve_rigid(src: &[Point], dst: &[Point]) -> Result<RigidTransform3> {
    if src.len() != dst.len() {
        return Err(Error::InvalidInput(format!(
            "{} sources but {} targets",
            src.len(),
            dst.len()
        )));
    }
    if src.len() < 3 {
        return Err(Error::Degenerate(format!(
            "need at least 3 pairs, got {}",
            src.len()
        )));
    }
    let n = src.len() as f64;
    let cs = src.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    let cd = dst.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    let mut h = Matrix3::zeros();
    let mut scatter = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        let a = s.coords - cs;
        h += a * (d.coords - cd).transpose();
        scatter += a * a.transpose();
    }
    let spread = scatter.symmetric_eigenvalues();
    let mut ev: Vec<f64> = spread.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    if !(ev[0] > 0.0) || ev[1] <= 1e-12 * ev[0] {
        return Err(Error::Degenerate(
            "source points are collinear or coincident".into(),
        ));
    }
    let svd = h.svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v requested");
    let mut v = v_t.transpose();
    let mut r = v * u.transpose();
    if r.determinant() < 0.0 {
        let mut col = v.column_mut(2);
        col *= -1.0;
        r = v * u.transpose();
    }
    let t = cd - r * cs;
    Ok(RigidTransform3 {
        rotation: r,
        translation: t,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// rmse at the floor, or unchanged within the delta.
    ErrorConverged,
    IterationCap,
    /// Update smaller than the motion epsilon.
    TransformStalled,
    /// Update exceeded the rotation or translation bound and was not applied.
    TransformOutOfBounds,
    /// No correspondences survived after the first iteration.
    CorrespondencesLost,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcpResult {
    pub transform: RigidTransform3,
    /// rmse of the correspondences under the final transform.
    pub rmse: f64,
    /// Number of updates applied.
    pub iterations: usize,
    pub stop_reason: StopReason,
    /// rmse measured at the start of each iteration.
    pub history: Vec<f64>,
    /// The initial alignment came from odometry tags.
    pub used_odometry: bool,
}

fn pair_rmse(pairs: &[Pair]) -> f64 {
    if pairs.is_empty() {
        return f64::INFINITY;
    }
    (pairs.iter().map(|p| p.dist * p.dist).sum::<f64>() / pairs.len() as f64).sqrt()
}

/// Registers `src` onto `reference`; the transform maps source-frame points
/// into the reference frame.
pub fn icp(src: &PointCloud, reference: &PointCloud, params: &IcpParams) -> Result<IcpResult> {
    params.validate()?;
    if reference.is_empty() {
        return Err(Error::InvalidInput("reference cloud is empty".into()));
    }
    let (mut t, used_odometry) = initial_align(src, reference);
    let selected = subsample(src, params.subsample_ratio)?;
    let index = NeighborIndex::new(&reference.points, params.max_correspondence_distance);
    let gate = params.max_correspondence_distance;
    let correspond = |t: &RigidTransform3| -> (Vec<Point>, Vec<Pair>) {
        let moved: Vec<Point> = selected.points.iter().map(|p| t.apply(p)).collect();
        let pairs = reject(&match_with_index(&moved, &index, gate));
        (moved, pairs)
    };

    let mut history = Vec::new();
    let mut iterations = 0;
    let mut stop = StopReason::IterationCap;
    for it in 0..params.max_iterations {
        let (moved, pairs) = correspond(&t);
        if pairs.is_empty() {
            if it == 0 {
                return Err(Error::NoCorrespondences { iteration: 0 });
            }
            stop = StopReason::CorrespondencesLost;
            break;
        }
        let rmse = pair_rmse(&pairs);
        let previous = history.last().copied();
        history.push(rmse);
        if rmse <= params.rmse_floor
            || previous.is_some_and(|p: f64| (p - rmse).abs() <= params.rmse_delta)
        {
            stop = StopReason::ErrorConverged;
            break;
        }
        let s: Vec<Point> = pairs.iter().map(|p| moved[p.src]).collect();
        let d: Vec<Point> = pairs.iter().map(|p| reference.points[p.dst]).collect();
        let delta = solve_rigid(&s, &d)?;
        if delta.angle() > params.max_rotation || delta.translation.norm() > params.max_translation
        {
            stop = StopReason::TransformOutOfBounds;
            break;
        }
        t = delta.compose(&t);
        iterations += 1;
        if delta.angle() < params.motion_epsilon && delta.translation.norm() < params.motion_epsilon
        {
            stop = StopReason::TransformStalled;
            break;
        }
    }
    let (_, pairs) = correspond(&t);
    Ok(IcpResult {
        transform: t,
        rmse: pair_rmse(&pairs),
        iterations,
        stop_reason: stop,
        history,
        used_odometry,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Registration {
    /// Union of all clouds in the frame of cloud 0.
    pub merged: PointCloud,
    /// Frame-i-to-frame-0 transform per cloud.
    pub transforms: Vec<RigidTransform3>,
    pub results: Vec<IcpResult>,
}

/// Chains pairwise ICP (cloud i onto cloud i-1) into the frame of cloud 0.
pub fn register_sequence(clouds: &[PointCloud], params: &IcpParams) -> Result<Registration> {
    let first = clouds
        .first()
        .ok_or_else(|| Error::InvalidInput("no clouds to register".into()))?;
    let mut transforms = vec![RigidTransform3::identity()];
    let mut results = Vec::new();
    let mut merged = first.points.clone();
    for i in 1..clouds.len() {
        let r = icp(&clouds[i], &clouds[i - 1], params).map_err(|e| Error::Frame {
            frame: i,
            source: Box::new(e),
        })?;
        let to_first = transforms[i - 1].compose(&r.transform);
        merged.extend(clouds[i].points.iter().map(|p| to_first.apply(p)));
        transforms.push(to_first);
        results.push(r);
    }
    Ok(Registration {
        merged: PointCloud {
            points: merged,
            pose: first.pose,
        },
        transforms,
        results,
    })
}

/// Reads ASCII XYZ: one `x y z` triple per line; blank lines and `#`
/// comments are skipped, extra columns ignored.
pub fn read_xyz(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut points = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        points.push(parse_triple(line).ok_or_else(|| Error::Decode {
            path: path.into(),
            message: format!("line {}: expected three numbers", n + 1),
        })?);
    }
    PointCloud::new(points)
}

fn parse_triple(line: &str) -> Option<Point> {
    let mut it = line.split_whitespace().map(str::parse::<f64>);
    let x = it.next()?.ok()?;
    let y = it.next()?.ok()?;
    let z = it.next()?.ok()?;
    Some(Point::new(x, y, z))
}

pub fn write_xyz(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::with_capacity(cloud.len() * 32);
    for p in &cloud.points {
        let _ = writeln!(out, "{} {} {}", p.x, p.y, p.z);
    }
    std::fs::write(path.as_ref(), out).map_err(|e| Error::io(path.as_ref(), e))
}

/// Reads an ASCII PLY file's vertex element (x, y, z properties).
pub fn read_ply(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |m: &str| Error::Decode {
        path: path.into(),
        message: m.to_string(),
    };
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(bad("missing ply magic"));
    }
    let mut vertices = None;
    let mut props: Vec<String> = Vec::new();
    let mut in_vertex = false;
    let mut elements_before = 0usize;
    for line in lines.by_ref() {
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["format", fmt, ..] if *fmt != "ascii" => {
                return Err(bad("only ascii ply is supported"))
            }
            ["element", "vertex", n] => {
                vertices = Some(n.parse::<usize>().map_err(|_| bad("bad vertex count"))?);
                in_vertex = true;
            }
            ["element", ..] => {
                if vertices.is_none() {
                    elements_before += 1;
                }
                in_vertex = false;
            }
            ["property", .., name] if in_vertex => props.push(name.to_string()),
            ["end_header"] => break,
            _ => {}
        }
    }
    if elements_before > 0 {
        return Err(bad("vertex element must come first"));
    }
    let n = vertices.ok_or_else(|| bad("no vertex element"))?;
    let col = |name: &str| {
        props
            .iter()
            .position(|p| p == name)
            .ok_or_else(|| bad("missing x/y/z property"))
    };
    let (ix, iy, iz) = (col("x")?, col("y")?, col("z")?);
    let mut points = Vec::with_capacity(n);
    for line in lines.filter(|l| !l.trim().is_empty()).take(n) {
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad("bad vertex row"))?;
        if vals.len() < props.len() {
            return Err(bad("short vertex row"));
        }
        points.push(Point::new(vals[ix], vals[iy], vals[iz]));
    }
    if points.len() != n {
        return Err(bad("fewer vertex rows than declared"));
    }
    PointCloud::new(points)
}

pub fn write_ply(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    let mut out = format!(
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nend_header\n",
        cloud.len()
    );
    for p in &cloud.points {
        let _ = writeln!(out, "{} {} {}", p.x, p.y, p.z);
    }
    std::fs::write(path.as_ref(), out).map_err(|e| Error::io(path.as_ref(), e))
}

/// Reads a cloud by extension (`.ply`, otherwise XYZ).
pub fn read_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("ply") => read_ply(path),
        _ => read_xyz(path),
    }
}

pub fn write_cloud(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("ply") => write_ply(cloud, path),
        _ => write_xyz(cloud, path),
    }
}

/// One entry of a frame list: a cloud path and an optional odometry tag.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameEntry {
    pub path: std::path::PathBuf,
    pub pose: Option<RigidTransform3>,
}

/// Parses a frame list: one `path [x y z yaw]` per line, `#` comments and
/// blank lines skipped. Relative paths resolve against the list's directory.
pub fn read_frame_list(path: impl AsRef<Path>) -> Result<Vec<FrameEntry>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let bad = |what: &str| Error::Decode {
            path: path.to_path_buf(),
            message: format!("line {}: {what}", n + 1),
        };
        let pose = match fields.len() {
            1 => None,
            5 => {
                let v = fields[1..]
                    .iter()
                    .map(|f| f.parse::<f64>().ok().filter(|x| x.is_finite()))
                    .collect::<Option<Vec<f64>>>()
                    .ok_or_else(|| bad("pose fields must be finite numbers"))?;
                Some(RigidTransform3::from_yaw(
                    v[3],
                    Vector3::new(v[0], v[1], v[2]),
                ))
            }
            _ => return Err(bad("expected `path` or `path x y z yaw`")),
        };
        let p = Path::new(fields[0]);
        out.push(FrameEntry {
            path: if p.is_relative() {
                base.join(p)
            } else {
                p.to_path_buf()
            },
            pose,
        });
    }
    Ok(out)
}
