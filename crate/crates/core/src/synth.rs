//! Deterministic synthetic fixtures with known ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use nalgebra::Vector3;

use crate::imaging::{BinaryMask, GrayImage};
use crate::metrics::{scores, ConfusionCounts};
use crate::registration::{Point, PointCloud, RigidTransform3};
use crate::sim::{sensor_positions, Plate, Pose2, RobotSpec, SimWorld};
use crate::stitching::{CapturePose, Mosaic};

/// Square image with a straight band through the centre pixel. `angle_deg`
/// is measured from the x axis (90 is vertical); pixel values are blended by
/// 8x8 supersampled coverage of the band.
pub fn render_line(size: usize, angle_deg: f64, width: f64, fg: u8, bg: u8) -> GrayImage {
    const SS: usize = 8;
    let c = (size / 2) as f64;
    let (s, co) = angle_deg.to_radians().sin_cos();
    GrayImage::from_fn(size, size, |x, y| {
        let mut hit = 0;
        for i in 0..SS {
            for j in 0..SS {
                let px = x as f64 + (i as f64 + 0.5) / SS as f64 - 0.5 - c;
                let py = y as f64 + (j as f64 + 0.5) / SS as f64 - 0.5 - c;
                if (px * s - py * co).abs() <= width / 2.0 {
                    hit += 1;
                }
            }
        }
        let cover = hit as f64 / (SS * SS) as f64;
        (bg as f64 + (fg as f64 - bg as f64) * cover).round() as u8
    })
}

/// Square image with a centred `side x side` block.
pub fn render_square_blob(size: usize, side: usize, fg: u8, bg: u8) -> GrayImage {
    let lo = size / 2 - side / 2;
    GrayImage::from_fn(size, size, |x, y| {
        if (lo..lo + side).contains(&x) && (lo..lo + side).contains(&y) {
            fg
        } else {
            bg
        }
    })
}

/// 64x64 pair: a vertical 1-px line and a 5x5 blob, both at 50 on 200.
pub fn line_blob_pair() -> (GrayImage, GrayImage) {
    (
        render_line(64, 90.0, 1.0, 50, 200),
        render_square_blob(64, 5, 50, 200),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrackSpec {
    pub seed: u64,
    pub blobs: bool,
    /// Replace one column of crack pixels by this intensity.
    pub gap: Option<u8>,
    pub noise_sigma: f64,
}

impl Default for CrackSpec {
    fn default() -> Self {
        Self {
            seed: 1,
            blobs: true,
            gap: None,
            noise_sigma: 3.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CrackFixture {
    pub image: GrayImage,
    pub crack: BinaryMask,
    pub blobs: BinaryMask,
}

pub const CRACK_SIZE: usize = 128;
pub const CRACK_LEVEL: u8 = 60;
pub const BACKGROUND_LEVEL: u8 = 190;
const CRACK_PATH: [(f64, f64); 4] = [(12.0, 22.0), (48.0, 44.0), (92.0, 44.0), (116.0, 108.0)];
const BLOB_CORNERS: [(usize, usize); 3] = [(20, 90), (60, 96), (96, 14)];
const GAP_COLUMN: usize = 70;

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let t = (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
    (p.0 - a.0 - t * dx).hypot(p.1 - a.1 - t * dy)
}

/// 128x128 crack fixture: a 2-px dark polyline (with a horizontal run)
/// and optionally three 6x6 dark blobs, on a light background with
/// Gaussian noise.
pub fn crack_fixture(spec: &CrackSpec) -> CrackFixture {
    let n = CRACK_SIZE;
    // The path runs along pixel corners so that axis-aligned runs are 2 px wide.
    let crack = BinaryMask::from_fn(n, n, |x, y| {
        let p = (x as f64, y as f64);
        CRACK_PATH.windows(2).any(|w| {
            segment_distance(
                p,
                (w[0].0 - 0.5, w[0].1 - 0.5),
                (w[1].0 - 0.5, w[1].1 - 0.5),
            ) <= 1.0
        })
    });
    let blobs = BinaryMask::from_fn(n, n, |x, y| {
        spec.blobs
            && BLOB_CORNERS
                .iter()
                .any(|&(bx, by)| (bx..bx + 6).contains(&x) && (by..by + 6).contains(&y))
    });
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_sigma.max(0.0)).expect("finite sigma");
    let image = GrayImage::from_fn(n, n, |x, y| {
        let base = if crack.get(x, y) {
            match spec.gap {
                Some(g) if x == GAP_COLUMN => g,
                _ => CRACK_LEVEL,
            }
        } else if blobs.get(x, y) {
            CRACK_LEVEL
        } else {
            BACKGROUND_LEVEL
        };
        let v = base as f64 + noise.sample(&mut rng);
        v.round().clamp(0.0, 255.0) as u8
    });
    CrackFixture {
        image,
        crack,
        blobs,
    }
}

/// Integer-valued 256-level histogram drawn from a random mixture of one to
/// four Gaussian modes, with all mass inside `[lo, hi]`.
pub fn random_histogram_counts(rng: &mut impl Rng, lo: usize, hi: usize) -> Vec<f64> {
    let modes = rng.random_range(1..=4);
    let span = (hi - lo) as f64;
    let params: Vec<(f64, f64, f64)> = (0..modes)
        .map(|_| {
            let centre = lo as f64 + rng.random_range(0.1..0.9) * span;
            let width = rng.random_range(2.0..18.0);
            let weight = rng.random_range(0.05..1.0);
            (centre, width, weight)
        })
        .collect();
    let total_weight: f64 = params.iter().map(|p| p.2).sum();
    let samples = rng.random_range(2_000..40_000);
    let mut counts = vec![0.0; 256];
    for _ in 0..samples {
        let mut pick = rng.random_range(0.0..total_weight);
        let mut chosen = params[0];
        for p in &params {
            if pick < p.2 {
                chosen = *p;
                break;
            }
            pick -= p.2;
        }
        let v: f64 = Normal::new(chosen.0, chosen.1).unwrap().sample(rng);
        let level = v.round();
        if level >= lo as f64 && level <= hi as f64 {
            counts[level as usize] += 1.0;
        }
    }
    counts
}

/// Seeded multi-octave value-noise texture in roughly `[50, 200]`.
pub fn texture_strip(width: usize, height: usize, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let octaves: [(f64, f64); 3] = [(16.0, 0.5), (7.0, 0.3), (3.0, 0.2)];
    let grids: Vec<(f64, f64, usize, Vec<f64>)> = octaves
        .iter()
        .map(|&(cell, weight)| {
            let gw = (width as f64 / cell).ceil() as usize + 2;
            let gh = (height as f64 / cell).ceil() as usize + 2;
            let nodes = (0..gw * gh).map(|_| rng.random::<f64>()).collect();
            (cell, weight, gw, nodes)
        })
        .collect();
    GrayImage::from_fn(width, height, |x, y| {
        let v: f64 = grids
            .iter()
            .map(|(cell, weight, gw, nodes)| {
                let fx = x as f64 / cell;
                let fy = y as f64 / cell;
                let (ix, iy) = (fx.floor() as usize, fy.floor() as usize);
                let (tx, ty) = (fx - ix as f64, fy - iy as f64);
                let at = |i: usize, j: usize| nodes[j * gw + i];
                let top = at(ix, iy) * (1.0 - tx) + at(ix + 1, iy) * tx;
                let bottom = at(ix, iy + 1) * (1.0 - tx) + at(ix + 1, iy + 1) * tx;
                weight * (top * (1.0 - ty) + bottom * ty)
            })
            .sum();
        (50.0 + 150.0 * v).round() as u8
    })
}

pub const STRIP_WIDTH: usize = 1800;
pub const STRIP_HEIGHT: usize = 140;
pub const TILE_WIDTH: usize = 180;

/// Tiles cut from a ground-truth strip with odometry-style poses.
#[derive(Debug, Clone)]
pub struct StripFixture {
    pub strip: GrayImage,
    pub tiles: Vec<GrayImage>,
    pub poses: Vec<CapturePose>,
    /// True left column of each tile inside the strip.
    pub true_x: Vec<i64>,
}

/// `count` 180x140 tiles from an 1800x140 strip at 1 mm/px. Consecutive
/// tiles advance 116 to 120 px (at least a third of the tile overlaps),
/// poses carry up to 2 mm of odometry error in each axis, and tiles with an
/// odd index are brightened by `brighten`.
pub fn strip_fixture(seed: u64, count: usize, brighten: u8) -> StripFixture {
    cut_strip(
        texture_strip(STRIP_WIDTH, STRIP_HEIGHT, seed),
        seed,
        count,
        brighten,
    )
}

fn cut_strip(strip: GrayImage, seed: u64, count: usize, brighten: u8) -> StripFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut true_x = Vec::with_capacity(count);
    let mut x = 0i64;
    for i in 0..count {
        if i > 0 {
            x += rng.random_range(116..=120);
        }
        true_x.push(x);
    }
    let tiles = true_x
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let t = strip
                .crop(x as usize, 0, TILE_WIDTH, STRIP_HEIGHT)
                .expect("tile inside strip");
            if i % 2 == 1 {
                GrayImage::from_fn(t.width(), t.height(), |u, v| {
                    t.get(u, v).saturating_add(brighten)
                })
            } else {
                t
            }
        })
        .collect();
    let poses = true_x
        .iter()
        .map(|&x| {
            let ex = rng.random_range(-2.0..=2.0);
            let ey = rng.random_range(-2.0..=2.0);
            CapturePose::from_odometry(x as f64 + ex, ey, 0.0, 1.0)
        })
        .collect();
    StripFixture {
        strip,
        tiles,
        poses,
        true_x,
    }
}

#[derive(Debug, Clone)]
pub struct SurveyFixture {
    pub strip: StripFixture,
    /// Crack pixels in strip coordinates (1 mm/px, world origin at strip (0, 0)).
    pub crack: BinaryMask,
}

const SURVEY_CRACK: [(f64, f64); 4] =
    [(700.0, 30.0), (820.0, 60.0), (900.0, 62.0), (1010.0, 112.0)];

/// Ten-tile strip with a 2-px dark crack crossing several tiles. The
/// background is a faint texture around 175; the first capture sits at the
/// odometry origin, later ones carry the usual pose error.
pub fn survey_fixture(seed: u64) -> SurveyFixture {
    let crack = BinaryMask::from_fn(STRIP_WIDTH, STRIP_HEIGHT, |x, y| {
        let p = (x as f64, y as f64);
        SURVEY_CRACK
            .windows(2)
            .any(|w| segment_distance(p, w[0], w[1]) <= 1.0)
    });
    let texture = texture_strip(STRIP_WIDTH, STRIP_HEIGHT, seed);
    let strip = GrayImage::from_fn(STRIP_WIDTH, STRIP_HEIGHT, |x, y| {
        if crack.get(x, y) {
            CRACK_LEVEL
        } else {
            (175.0 + 0.15 * (texture.get(x, y) as f64 - 125.0)).round() as u8
        }
    });
    let mut strip = cut_strip(strip, seed, 10, 20);
    strip.poses[0] = CapturePose::from_odometry(0.0, 0.0, 0.0, 1.0);
    SurveyFixture { strip, crack }
}

/// Mean absolute error of a mosaic against the fixture strip over covered
/// pixels, skipping columns within `seam` px of any tile edge.
pub fn strip_error(fx: &StripFixture, m: &Mosaic, seam: i64) -> f64 {
    let edges: Vec<i64> = m
        .placements
        .iter()
        .flat_map(|p| [p.0, p.0 + TILE_WIDTH as i64])
        .collect();
    let (mut sum, mut n) = (0.0, 0usize);
    for y in 0..m.canvas.height() {
        for x in 0..m.canvas.width() {
            if !m.covered(x, y) || edges.iter().any(|&e| (x as i64 - e).abs() < seam) {
                continue;
            }
            let sx = x as i64 + fx.true_x[0];
            if sx < 0 || sx as usize >= fx.strip.width() || y >= fx.strip.height() {
                continue;
            }
            sum += (m.canvas.get(x, y) as f64 - fx.strip.get(sx as usize, y) as f64).abs();
            n += 1;
        }
    }
    if n == 0 {
        f64::INFINITY
    } else {
        sum / n as f64
    }
}

/// Height (m) of the synthetic steel surface: a tilted plane carrying
/// periodic ridges along y, shallower diagonal ridges and a gentle ripple.
pub fn surface_height(x: f64, y: f64) -> f64 {
    let ridge = |u: f64, period: f64, width: f64| {
        let d = (u.rem_euclid(period) - period / 2.0).abs();
        (-(d * d) / (2.0 * width * width)).exp()
    };
    0.05 * x
        + 0.02 * y
        + 0.03 * ridge(x, 0.2, 0.02)
        + 0.015 * ridge(0.6 * x + 0.8 * y, 0.25, 0.03)
        + 0.008
            * (std::f64::consts::TAU * x / 0.13).sin()
            * (std::f64::consts::TAU * y / 0.17).cos()
}

/// Grid samples of [`surface_height`] over `[x0, x0+width] x [y0, y0+height]`
/// with isotropic Gaussian noise of `noise` metres.
pub fn surface_cloud(
    width: f64,
    height: f64,
    spacing: f64,
    x0: f64,
    y0: f64,
    noise: f64,
    seed: u64,
) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nx = (width / spacing).round() as usize;
    let ny = (height / spacing).round() as usize;
    let mut out = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let x = x0 + i as f64 * spacing;
            let y = y0 + j as f64 * spacing;
            let p = Point::new(x, y, surface_height(x, y));
            out.push(jitter(p, noise, &mut rng));
        }
    }
    out
}

fn jitter(p: Point, noise: f64, rng: &mut impl Rng) -> Point {
    if noise <= 0.0 {
        return p;
    }
    let n = Normal::new(0.0, noise).unwrap();
    Point::new(
        p.x + n.sample(rng),
        p.y + n.sample(rng),
        p.z + n.sample(rng),
    )
}

fn random_unit(rng: &mut impl Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Rigid motion with a uniformly random axis and direction, rotation angle up
/// to `max_angle` radians and translation length up to `max_shift` metres.
pub fn random_rigid(rng: &mut impl Rng, max_angle: f64, max_shift: f64) -> RigidTransform3 {
    let axis = random_unit(rng);
    let angle = rng.random_range(0.0..=max_angle);
    let shift = random_unit(rng) * rng.random_range(0.0..=max_shift);
    RigidTransform3::from_axis_angle(axis, angle, shift)
}

const ICP_SPACING: f64 = 0.007;

/// Stratified samples of the rectangle `origin + a*u + b*v`, `a` in
/// `[0, lu]`, `b` in `[0, lv]` (`u`, `v` unit vectors): one uniform point per
/// `spacing` cell.
fn sample_rect(
    origin: Point,
    u: Vector3<f64>,
    v: Vector3<f64>,
    lu: f64,
    lv: f64,
    spacing: f64,
    rng: &mut impl Rng,
    out: &mut Vec<Point>,
) {
    let nu = (lu / spacing).round().max(1.0) as usize;
    let nv = (lv / spacing).round().max(1.0) as usize;
    for j in 0..nv {
        for i in 0..nu {
            let a = (i as f64 + rng.random_range(0.0..1.0)) * lu / nu as f64;
            let b = (j as f64 + rng.random_range(0.0..1.0)) * lv / nv as f64;
            out.push(origin + u * a + v * b);
        }
    }
}

/// Surface samples of a steel beam junction seen by a ToF camera: a
/// 0.4 x 0.3 m base plate, a 8 cm web along x and a 8 cm stiffener along y,
/// plus four bolt heads. Repeated calls sample different surface positions.
pub fn junction_scene(spacing: f64, rng: &mut impl Rng) -> Vec<Point> {
    let (x, y, z) = (Vector3::x(), Vector3::y(), Vector3::z());
    let mut out = Vec::new();
    sample_rect(
        Point::new(-0.2, -0.15, 0.0),
        x,
        y,
        0.4,
        0.3,
        spacing,
        rng,
        &mut out,
    );
    sample_rect(
        Point::new(-0.2, 0.05, 0.0),
        x,
        z,
        0.4,
        0.08,
        spacing,
        rng,
        &mut out,
    );
    sample_rect(
        Point::new(0.1, -0.15, 0.0),
        y,
        z,
        0.2,
        0.08,
        spacing,
        rng,
        &mut out,
    );
    // Bolt heads as hemispheres of radius 1.2 cm replacing plate points.
    let bolts = [(-0.12, -0.08), (-0.02, -0.1), (0.04, -0.03), (-0.15, 0.0)];
    let r = 0.012;
    for p in out.iter_mut() {
        if p.z != 0.0 {
            continue;
        }
        for &(bx, by) in &bolts {
            let d2 = (p.x - bx).powi(2) + (p.y - by).powi(2);
            if d2 < r * r {
                p.z = (r * r - d2).sqrt();
            }
        }
    }
    out
}

/// One registration trial with known answer.
pub struct IcpCase {
    pub src: PointCloud,
    pub reference: PointCloud,
    /// Source-to-reference motion.
    pub truth: RigidTransform3,
}

/// [`junction_scene`] as the source; the reference is the same points under
/// a random motion of up to 10 degrees / 5 cm plus Gaussian `noise`. The
/// source carries an odometry tag off the truth by up to 3 degrees / 2 cm.
pub fn icp_case(rng: &mut impl Rng, noise: f64) -> IcpCase {
    let truth = random_rigid(rng, 10f64.to_radians(), 0.05);
    let odometry_error = random_rigid(rng, 3f64.to_radians(), 0.02);
    let src = junction_scene(ICP_SPACING, rng);
    let reference = src
        .iter()
        .map(|p| jitter(truth.apply(p), noise, rng))
        .collect();
    IcpCase {
        src: PointCloud {
            points: src,
            pose: Some(odometry_error.compose(&truth)),
        },
        reference: PointCloud {
            points: reference,
            pose: Some(RigidTransform3::identity()),
        },
        truth,
    }
}

/// `count` overlapping ToF views 12 cm apart along x, each 0.4 x 0.3 m with
/// 1 mm noise, in their own frames. Frame 0 sits at the world origin; later
/// frames carry small true yaw and odometry tags off by up to 1 degree / 1 cm.
pub fn surface_sequence(count: usize, seed: u64) -> Vec<PointCloud> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let (truth, tag) = if i == 0 {
                (RigidTransform3::identity(), RigidTransform3::identity())
            } else {
                let yaw = rng.random_range(-2f64..2.0).to_radians();
                let t = RigidTransform3::from_yaw(
                    yaw,
                    Vector3::new(0.12 * i as f64, rng.random_range(-0.01..0.01), 0.0),
                );
                let err = random_rigid(&mut rng, 1f64.to_radians(), 0.01);
                (t, err.compose(&t))
            };
            let world = surface_cloud(0.4, 0.3, 0.01, 0.12 * i as f64 - 0.2, -0.15, 0.0, 0);
            let to_frame = truth.inverse();
            let points = world
                .iter()
                .map(|p| jitter(to_frame.apply(p), 0.001, &mut rng))
                .collect();
            PointCloud {
                points,
                pose: Some(tag),
            }
        })
        .collect()
}

/// RMS vertical distance (m) from `points` (world frame) to the surface.
pub fn surface_rms(points: &[Point]) -> f64 {
    let sum: f64 = points
        .iter()
        .map(|p| (p.z - surface_height(p.x, p.y)).powi(2))
        .sum();
    (sum / points.len().max(1) as f64).sqrt()
}

/// Single flat plate of random size (0.45-3 m by 0.45-2 m) with a random
/// start pose whose body outline lies on it.
pub fn random_sim_world(rng: &mut impl Rng, spec: &RobotSpec) -> SimWorld {
    loop {
        let w = rng.random_range(0.45..3.0);
        let h = rng.random_range(0.45..2.0);
        let start = Pose2 {
            x: rng.random_range(0.0..w),
            y: rng.random_range(0.0..h),
            heading: rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
        };
        let world = SimWorld {
            plates: vec![Plate::new(0.0, 0.0, w, h, 0.0)],
            start: Some(start),
        };
        if world.rect_on_steel(&sensor_positions(&start, spec)) {
            return world;
        }
    }
}

/// Smallest confusion counts whose scores round (4 decimals) to the given
/// PI, SI and DSC; TN pads the total to a multiple of 200 pixels.
pub fn counts_for_scores(pi: f64, si: f64, dsc: f64) -> ConfusionCounts {
    let round = |v: f64| (v * 1e4).round() / 1e4;
    // Misses for which tp / (tp + miss) rounds to `target`.
    let span = |tp: u64, target: f64| {
        let lo = (tp as f64 * (1.0 - (target + 5e-5)) / (target + 5e-5))
            .floor()
            .max(0.0) as u64;
        let hi = (tp as f64 * (1.0 - (target - 5e-5)) / (target - 5e-5)).ceil() as u64;
        lo..=hi
    };
    for tp in 1..100_000u64 {
        for fp in span(tp, pi) {
            for fn_ in span(tp, si) {
                let s = scores(&ConfusionCounts::new(tp, fp, fn_, 0));
                if round(s.pi) == pi && round(s.si) == si && round(s.dsc) == dsc {
                    let tn = 200 - (tp + fp + fn_) % 200 + 200;
                    return ConfusionCounts::new(tp, fp, fn_, tn);
                }
            }
        }
    }
    panic!("no integer counts reproduce ({pi}, {si}, {dsc})");
}

/// Prediction and ground-truth masks of the given width laid out row-major as
/// TP, FP, FN, then TN pixels. The total must be a multiple of `width`.
pub fn masks_with_counts(c: &ConfusionCounts, width: usize) -> (BinaryMask, BinaryMask) {
    let total = c.total() as usize;
    assert!(
        total % width == 0,
        "{total} pixels do not fill rows of {width}"
    );
    let (tp, fp, fn_) = (c.tp as usize, c.fp as usize, c.fn_ as usize);
    let pred = (0..total).map(|i| i < tp + fp).collect();
    let gt = (0..total)
        .map(|i| i < tp || (i >= tp + fp && i < tp + fp + fn_))
        .collect();
    (
        BinaryMask::new(width, total / width, pred).unwrap(),
        BinaryMask::new(width, total / width, gt).unwrap(),
    )
}
