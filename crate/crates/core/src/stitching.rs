//! Mosaic construction from sequential overlapping captures.
//!
//! Each capture carries a chain of planar rigid transforms
//! (image -> camera -> robot -> world). The chain gives a prior displacement
//! between consecutive images; template matching refines it to an integer
//! offset, and tiles are composited left to right with an additive exposure
//! correction followed by the threshold blend rule.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{median_filter, BinaryMask, GrayImage};

/// Rotation by `theta` followed by translation `(tx, ty)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rigid2 {
    pub theta: f64,
    pub tx: f64,
    pub ty: f64,
}

impl Default for Rigid2 {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Rigid2 {
    pub const IDENTITY: Rigid2 = Rigid2 {
        theta: 0.0,
        tx: 0.0,
        ty: 0.0,
    };

    pub fn new(theta: f64, tx: f64, ty: f64) -> Self {
        Self { theta, tx, ty }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self { theta: 0.0, tx, ty }
    }

    pub fn apply(&self, p: (f64, f64)) -> (f64, f64) {
        let (s, c) = self.theta.sin_cos();
        (c * p.0 - s * p.1 + self.tx, s * p.0 + c * p.1 + self.ty)
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Rigid2) -> Rigid2 {
        let (tx, ty) = self.apply((other.tx, other.ty));
        Rigid2 {
            theta: self.theta + other.theta,
            tx,
            ty,
        }
    }

    pub fn inverse(&self) -> Rigid2 {
        let (s, c) = self.theta.sin_cos();
        Rigid2 {
            theta: -self.theta,
            tx: -(c * self.tx + s * self.ty),
            ty: -(-s * self.tx + c * self.ty),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.theta.is_finite() && self.tx.is_finite() && self.ty.is_finite()
    }
}

/// Frame chain of one capture. Pixels are scaled to millimetres by
/// `mm_per_px`, then mapped by `t_ic`, `t_cr` and `t_rw` in that order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapturePose {
    pub t_ic: Rigid2,
    pub t_cr: Rigid2,
    /// Robot pose in the world, normally from odometry.
    pub t_rw: Rigid2,
    pub mm_per_px: f64,
}

impl Default for CapturePose {
    fn default() -> Self {
        Self {
            t_ic: Rigid2::IDENTITY,
            t_cr: Rigid2::IDENTITY,
            t_rw: Rigid2::IDENTITY,
            mm_per_px: 1.0,
        }
    }
}

impl CapturePose {
    pub fn from_odometry(x_mm: f64, y_mm: f64, heading_rad: f64, mm_per_px: f64) -> Self {
        Self {
            t_rw: Rigid2::new(heading_rad, x_mm, y_mm),
            mm_per_px,
            ..Self::default()
        }
    }

    /// Image (mm) to world.
    fn chain(&self) -> Rigid2 {
        self.t_rw.compose(&self.t_cr).compose(&self.t_ic)
    }

    pub fn world_to_image(&self, w: (f64, f64)) -> (f64, f64) {
        let (x, y) = self.chain().inverse().apply(w);
        (x / self.mm_per_px, y / self.mm_per_px)
    }
}

/// World millimetres of an image pixel.
pub fn image_to_world(pixel: (f64, f64), pose: &CapturePose) -> (f64, f64) {
    let mm = (pixel.0 * pose.mm_per_px, pixel.1 * pose.mm_per_px);
    let cam = pose.t_ic.apply(mm);
    let robot = pose.t_cr.apply(cam);
    pose.t_rw.apply(robot)
}

/// Size of the ground patch seen by one image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Footprint {
    pub width_mm: f64,
    pub height_mm: f64,
}

impl Default for Footprint {
    fn default() -> Self {
        Self {
            width_mm: 180.0,
            height_mm: 140.0,
        }
    }
}

fn footprint_polygon(pose: &CapturePose, fp: &Footprint) -> Vec<(f64, f64)> {
    let chain = pose.chain();
    [
        (0.0, 0.0),
        (fp.width_mm, 0.0),
        (fp.width_mm, fp.height_mm),
        (0.0, fp.height_mm),
    ]
    .iter()
    .map(|&p| chain.apply(p))
    .collect()
}

fn polygon_area(poly: &[(f64, f64)]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let twice: f64 = (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a.0 * b.1 - b.0 * a.1
        })
        .sum();
    twice.abs() / 2.0
}

/// Sutherland-Hodgman clip of `subject` against the convex `clip` polygon.
fn clip_convex(subject: &[(f64, f64)], clip: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let orient = {
        let n = clip.len();
        let s: f64 = (0..n)
            .map(|i| clip[i].0 * clip[(i + 1) % n].1 - clip[(i + 1) % n].0 * clip[i].1)
            .sum();
        s.signum()
    };
    let mut out = subject.to_vec();
    for i in 0..clip.len() {
        if out.is_empty() {
            break;
        }
        let (a, b) = (clip[i], clip[(i + 1) % clip.len()]);
        let side = |p: (f64, f64)| orient * ((b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0));
        let input = std::mem::take(&mut out);
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let (sc, sp) = (side(cur), side(prev));
            if sc >= 0.0 {
                if sp < 0.0 {
                    out.push(intersect(prev, cur, sp, sc));
                }
                out.push(cur);
            } else if sp >= 0.0 {
                out.push(intersect(prev, cur, sp, sc));
            }
        }
    }
    out
}

fn intersect(p: (f64, f64), q: (f64, f64), sp: f64, sq: f64) -> (f64, f64) {
    let t = sp / (sp - sq);
    (p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1))
}

/// Intersection area of the two projected footprints over one footprint area.
pub fn check_overlap(a: &CapturePose, b: &CapturePose, fp: &Footprint) -> f64 {
    let pa = footprint_polygon(a, fp);
    let pb = footprint_polygon(b, fp);
    let inter = clip_convex(&pa, &pb);
    (polygon_area(&inter) / (fp.width_mm * fp.height_mm)).clamp(0.0, 1.0)
}

/// Displacement of `b` inside `a`: `b(x, y)` shows `a(x + dx, y + dy)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Offset {
    pub dx: i64,
    pub dy: i64,
    pub score: f64,
}

/// Zero-mean normalized cross-correlation of `b` against `a` at `(dx, dy)`
/// over their overlap; `None` when the overlap is smaller than `min_area`.
pub fn ncc_at(a: &GrayImage, b: &GrayImage, dx: i64, dy: i64, min_area: usize) -> Option<f64> {
    let (aw, ah) = (a.width() as i64, a.height() as i64);
    let (bw, bh) = (b.width() as i64, b.height() as i64);
    let x0 = 0.max(-dx);
    let x1 = bw.min(aw - dx);
    let y0 = 0.max(-dy);
    let y1 = bh.min(ah - dy);
    if x1 <= x0 || y1 <= y0 {
        return None;
    }
    let n = ((x1 - x0) * (y1 - y0)) as usize;
    if n < min_area.max(2) {
        return None;
    }
    let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for y in y0..y1 {
        for x in x0..x1 {
            let va = a.get((x + dx) as usize, (y + dy) as usize) as f64;
            let vb = b.get(x as usize, y as usize) as f64;
            sa += va;
            sb += vb;
            saa += va * va;
            sbb += vb * vb;
            sab += va * vb;
        }
    }
    let nf = n as f64;
    let cov = sab - sa * sb / nf;
    let va = saa - sa * sa / nf;
    let vb = sbb - sb * sb / nf;
    if va <= 0.0 || vb <= 0.0 {
        return Some(0.0);
    }
    Some((cov / (va * vb).sqrt()).clamp(-1.0, 1.0))
}

/// Minimum NCC accepted by [`estimate_offset`].
pub const MIN_MATCH_SCORE: f64 = 0.5;

/// Searches `prior ± radius` for the displacement with the highest NCC.
/// Candidates whose overlap is below a quarter of the smaller image are
/// skipped; ties keep the first candidate in row-major scan order.
pub fn estimate_offset(
    a: &GrayImage,
    b: &GrayImage,
    prior: (i64, i64),
    radius: i64,
) -> Result<Offset> {
    let min_area = (a.data().len().min(b.data().len())) / 4;
    let mut best: Option<Offset> = None;
    for dy in prior.1 - radius..=prior.1 + radius {
        for dx in prior.0 - radius..=prior.0 + radius {
            if let Some(score) = ncc_at(a, b, dx, dy, min_area) {
                if best.is_none_or(|o| score > o.score) {
                    best = Some(Offset { dx, dy, score });
                }
            }
        }
    }
    match best {
        Some(o) if o.score >= MIN_MATCH_SCORE => Ok(o),
        Some(o) => Err(Error::LowConfidence { score: o.score }),
        None => Err(Error::LowConfidence { score: 0.0 }),
    }
}

/// Threshold blend: the incoming pixel wins when `tau * incoming > current`.
pub fn blend(current: u8, incoming: u8, tau: f64) -> u8 {
    if tau * incoming as f64 > current as f64 {
        incoming
    } else {
        current
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mosaic {
    pub canvas: GrayImage,
    /// Number of tiles covering each pixel.
    pub coverage: Vec<u16>,
    /// Canvas position of each tile's top-left pixel.
    pub placements: Vec<(i64, i64)>,
    /// World millimetres of canvas pixel (0, 0).
    pub origin_mm: (f64, f64),
    /// Tiles placed from the pose prior because matching was not confident.
    pub fallbacks: Vec<usize>,
    /// Pixels filled by the median gap filter.
    pub filled: usize,
}

impl Mosaic {
    pub fn covered(&self, x: usize, y: usize) -> bool {
        self.coverage[y * self.canvas.width() + x] > 0
    }
}

/// Median-fills zero-coverage pixels that are bracketed by covered pixels
/// both horizontally and vertically. Holes touching the footprint border are
/// left alone.
pub fn fill_gaps(mosaic: &Mosaic) -> Result<Mosaic> {
    let (w, h) = mosaic.canvas.dims();
    let cov = |x: usize, y: usize| mosaic.coverage[y * w + x] > 0;
    let holes = BinaryMask::from_fn(w, h, |x, y| {
        !cov(x, y)
            && (0..x).any(|i| cov(i, y))
            && (x + 1..w).any(|i| cov(i, y))
            && (0..y).any(|j| cov(x, j))
            && (y + 1..h).any(|j| cov(x, j))
    });
    let canvas = if holes.is_empty() {
        mosaic.canvas.clone()
    } else {
        median_filter(&mosaic.canvas, &holes, 1)?
    };
    Ok(Mosaic {
        canvas,
        filled: mosaic.filled + holes.count(),
        ..mosaic.clone()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StitchConfig {
    pub tau: f64,
    pub search_radius: i64,
    pub min_overlap: f64,
    pub footprint: Footprint,
}

impl Default for StitchConfig {
    fn default() -> Self {
        Self {
            tau: 1.05,
            search_radius: 8,
            min_overlap: 0.30,
            footprint: Footprint::default(),
        }
    }
}

/// Prior displacement of `b` inside `a` from the two frame chains.
pub fn prior_offset(a: &CapturePose, b: &CapturePose) -> (f64, f64) {
    a.world_to_image(image_to_world((0.0, 0.0), b))
}

/// Moves `b`'s world translation so that its prior displacement inside `a`
/// equals `offset`.
pub fn refine_pose(a: &CapturePose, b: &CapturePose, offset: (i64, i64)) -> CapturePose {
    let target = image_to_world((offset.0 as f64, offset.1 as f64), a);
    let current = image_to_world((0.0, 0.0), b);
    let mut out = *b;
    out.t_rw.tx += target.0 - current.0;
    out.t_rw.ty += target.1 - current.1;
    out
}

/// Stitches captures left to right.
pub fn stitch_sequence(
    images: &[GrayImage],
    poses: &[CapturePose],
    cfg: &StitchConfig,
) -> Result<Mosaic> {
    if images.is_empty() {
        return Err(Error::InvalidInput("no images to stitch".into()));
    }
    if images.len() != poses.len() {
        return Err(Error::InvalidInput(format!(
            "{} images but {} poses",
            images.len(),
            poses.len()
        )));
    }
    if let Some(p) = poses
        .iter()
        .find(|p| !(p.t_ic.is_finite() && p.t_cr.is_finite() && p.t_rw.is_finite()))
    {
        return Err(Error::InvalidInput(format!("non-finite pose {p:?}")));
    }
    for i in 1..poses.len() {
        let fraction = check_overlap(&poses[i - 1], &poses[i], &cfg.footprint);
        if fraction < cfg.min_overlap {
            return Err(Error::InsufficientOverlap {
                first: i - 1,
                second: i,
                fraction,
                required: cfg.min_overlap,
            });
        }
    }

    let mut placements = vec![(0i64, 0i64)];
    let mut fallbacks = Vec::new();
    for i in 1..images.len() {
        let (px, py) = prior_offset(&poses[i - 1], &poses[i]);
        let prior = (px.round() as i64, py.round() as i64);
        let step = match estimate_offset(&images[i - 1], &images[i], prior, cfg.search_radius) {
            Ok(o) => (o.dx, o.dy),
            Err(Error::LowConfidence { .. }) => {
                fallbacks.push(i);
                prior
            }
            Err(e) => return Err(e),
        };
        let last = placements[i - 1];
        placements.push((last.0 + step.0, last.1 + step.1));
    }

    let min_x = placements.iter().map(|p| p.0).min().unwrap_or(0);
    let min_y = placements.iter().map(|p| p.1).min().unwrap_or(0);
    let max_x = placements
        .iter()
        .zip(images)
        .map(|(p, im)| p.0 + im.width() as i64)
        .max()
        .unwrap_or(1);
    let max_y = placements
        .iter()
        .zip(images)
        .map(|(p, im)| p.1 + im.height() as i64)
        .max()
        .unwrap_or(1);
    let (w, h) = ((max_x - min_x) as usize, (max_y - min_y) as usize);
    let placements: Vec<(i64, i64)> = placements
        .iter()
        .map(|p| (p.0 - min_x, p.1 - min_y))
        .collect();

    let mut canvas = vec![0u8; w * h];
    let mut coverage = vec![0u16; w * h];
    for (img, &(ox, oy)) in images.iter().zip(&placements) {
        let (ox, oy) = (ox as usize, oy as usize);
        // Additive exposure correction against what is already on the canvas.
        let (mut diff, mut n) = (0.0, 0usize);
        for y in 0..img.height() {
            for x in 0..img.width() {
                let i = (oy + y) * w + ox + x;
                if coverage[i] > 0 {
                    diff += canvas[i] as f64 - img.get(x, y) as f64;
                    n += 1;
                }
            }
        }
        let shift = if n > 0 {
            (diff / n as f64).round()
        } else {
            0.0
        };
        for y in 0..img.height() {
            for x in 0..img.width() {
                let i = (oy + y) * w + ox + x;
                let v = (img.get(x, y) as f64 + shift).clamp(0.0, 255.0) as u8;
                canvas[i] = if coverage[i] == 0 {
                    v
                } else {
                    blend(canvas[i], v, cfg.tau)
                };
                coverage[i] = coverage[i].saturating_add(1);
            }
        }
    }

    let origin_mm = image_to_world((min_x as f64, min_y as f64), &poses[0]);
    let mosaic = Mosaic {
        canvas: GrayImage::new(w, h, canvas)?,
        coverage,
        placements,
        origin_mm,
        fallbacks,
        filled: 0,
    };
    fill_gaps(&mosaic)
}

/// One entry of a captures list file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptureRecord {
    pub image_path: PathBuf,
    pub odom_x_mm: f64,
    pub odom_y_mm: f64,
    pub heading_rad: f64,
}

impl CaptureRecord {
    pub fn pose(&self, mm_per_px: f64) -> CapturePose {
        CapturePose::from_odometry(self.odom_x_mm, self.odom_y_mm, self.heading_rad, mm_per_px)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn close(a: (f64, f64), b: (f64, f64)) -> bool {
        (a.0 - b.0).abs() < 1e-9 && (a.1 - b.1).abs() < 1e-9
    }

    #[test]
    fn frame_chain_examples() {
        let p = CapturePose::default();
        assert!(close(image_to_world((3.0, 4.0), &p), (3.0, 4.0)));

        let p = CapturePose {
            t_rw: Rigid2::translation(100.0, 0.0),
            ..CapturePose::default()
        };
        assert!(close(image_to_world((3.0, 4.0), &p), (103.0, 4.0)));

        let p = CapturePose {
            t_rw: Rigid2::new(std::f64::consts::FRAC_PI_2, 10.0, 20.0),
            ..CapturePose::default()
        };
        assert!(close(
            image_to_world((3.0, 4.0), &p),
            (-4.0 + 10.0, 3.0 + 20.0)
        ));
        assert!(close(
            p.world_to_image(image_to_world((3.0, 4.0), &p)),
            (3.0, 4.0)
        ));
    }

    #[test]
    fn chain_order_matters() {
        let p = CapturePose {
            t_ic: Rigid2::translation(5.0, 0.0),
            t_cr: Rigid2::new(std::f64::consts::FRAC_PI_2, 0.0, 0.0),
            ..CapturePose::default()
        };
        // Translate first, then rotate: (0,0) -> (5,0) -> (0,5).
        assert!(close(image_to_world((0.0, 0.0), &p), (0.0, 5.0)));
    }

    #[test]
    fn overlap_examples() {
        let fp = Footprint::default();
        let a = CapturePose::default();
        assert!((check_overlap(&a, &a, &fp) - 1.0).abs() < 1e-12);
        let b = CapturePose::from_odometry(120.0, 0.0, 0.0, 1.0);
        assert!((check_overlap(&a, &b, &fp) - 1.0 / 3.0).abs() < 1e-12);
        let c = CapturePose::from_odometry(180.0, 0.0, 0.0, 1.0);
        assert_eq!(check_overlap(&a, &c, &fp), 0.0);
        // Quarter turn about the footprint origin keeps a 140x140 square.
        let d = CapturePose::from_odometry(0.0, 0.0, std::f64::consts::FRAC_PI_2, 1.0);
        let expect = 0.0 / (180.0 * 140.0);
        assert!((check_overlap(&a, &d, &fp) - expect).abs() < 1e-12);
        let e = CapturePose::from_odometry(140.0, 0.0, std::f64::consts::FRAC_PI_2, 1.0);
        assert!((check_overlap(&a, &e, &fp) - 140.0 * 140.0 / (180.0 * 140.0)).abs() < 1e-9);
    }

    fn textured(seed: u64, w: usize, h: usize) -> GrayImage {
        synth::texture_strip(w, h, seed)
    }

    #[test]
    fn offset_examples() {
        let big = textured(4, 200, 120);
        let a = big.crop(0, 0, 128, 96).unwrap();
        let b = big.crop(40, 3, 128, 96).unwrap();
        let o = estimate_offset(&a, &b, (38, 0), 8).unwrap();
        assert_eq!((o.dx, o.dy), (40, 3));
        assert!(o.score > 0.99);

        let o = estimate_offset(&a, &a, (0, 0), 3).unwrap();
        assert_eq!((o.dx, o.dy, o.score), (0, 0, 1.0));

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let na = GrayImage::from_fn(96, 96, |_, _| rng.random());
        let nb = GrayImage::from_fn(96, 96, |_, _| rng.random());
        assert!(matches!(
            estimate_offset(&na, &nb, (10, 0), 6),
            Err(Error::LowConfidence { .. })
        ));
    }

    #[test]
    fn offset_matches_brute_force_under_noise() {
        let big = textured(11, 220, 150);
        let normal = Normal::new(0.0, 5.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for (sx, sy) in [(30, 2), (55, 0), (47, 7)] {
            let noisy = |img: GrayImage, rng: &mut ChaCha8Rng| {
                GrayImage::from_fn(img.width(), img.height(), |x, y| {
                    (img.get(x, y) as f64 + normal.sample(rng))
                        .round()
                        .clamp(0.0, 255.0) as u8
                })
            };
            let a = noisy(big.crop(0, 0, 140, 100).unwrap(), &mut rng);
            let b = noisy(big.crop(sx, sy, 140, 100).unwrap(), &mut rng);
            let prior = (sx as i64 + 3, sy as i64 - 2);
            let o = estimate_offset(&a, &b, prior, 6).unwrap();
            assert_eq!((o.dx, o.dy), (sx as i64, sy as i64));
            // Full-window oracle.
            let mut best = (f64::NEG_INFINITY, 0, 0);
            for dy in prior.1 - 6..=prior.1 + 6 {
                for dx in prior.0 - 6..=prior.0 + 6 {
                    if let Some(s) = ncc_at(&a, &b, dx, dy, a.data().len() / 4) {
                        if s > best.0 {
                            best = (s, dx, dy);
                        }
                    }
                }
            }
            assert_eq!((best.1, best.2), (o.dx, o.dy));
        }
    }

    #[test]
    fn blend_examples() {
        assert_eq!(blend(100, 200, 1.1), 200);
        assert_eq!(blend(200, 100, 1.1), 200);
        assert_eq!(blend(77, 77, 1.1), 77);
        // Equality keeps the current pixel.
        assert_eq!(blend(100, 80, 1.25), 100);
    }

    fn mosaic_of(canvas: GrayImage, coverage: Vec<u16>) -> Mosaic {
        Mosaic {
            canvas,
            coverage,
            placements: vec![(0, 0)],
            origin_mm: (0.0, 0.0),
            fallbacks: vec![],
            filled: 0,
        }
    }

    #[test]
    fn gap_fill_examples() {
        let full = mosaic_of(GrayImage::filled(5, 5, 9), vec![1; 25]);
        assert_eq!(fill_gaps(&full).unwrap().canvas, full.canvas);

        let mut img = GrayImage::filled(5, 5, 90);
        img.set(2, 2, 0);
        let mut cov = vec![1; 25];
        cov[12] = 0;
        let out = fill_gaps(&mosaic_of(img, cov)).unwrap();
        assert_eq!(out.canvas.get(2, 2), 90);
        assert_eq!(out.filled, 1);

        // Border notch stays untouched.
        let mut cov = vec![1; 25];
        cov[2] = 0;
        let img = GrayImage::filled(5, 5, 90);
        let out = fill_gaps(&mosaic_of(img.clone(), cov)).unwrap();
        assert_eq!(out.filled, 0);
    }

    #[test]
    fn checkerboard_holes_take_neighbourhood_median() {
        let img = GrayImage::from_fn(7, 7, |x, y| (10 * x + 3 * y) as u8);
        let hole =
            |x: usize, y: usize| (1..6).contains(&x) && (1..6).contains(&y) && (x + y) % 2 == 0;
        let cov: Vec<u16> = (0..49)
            .map(|i| if hole(i % 7, i / 7) { 0 } else { 1 })
            .collect();
        let mut masked = img.clone();
        for y in 0..7 {
            for x in 0..7 {
                if hole(x, y) {
                    masked.set(x, y, 0);
                }
            }
        }
        let out = fill_gaps(&mosaic_of(masked.clone(), cov)).unwrap();
        for y in 0..7 {
            for x in 0..7 {
                if hole(x, y) {
                    let mut v: Vec<u8> = (y - 1..=y + 1)
                        .flat_map(|j| (x - 1..=x + 1).map(move |i| (i, j)))
                        .map(|(i, j)| masked.get(i, j))
                        .collect();
                    v.sort();
                    assert_eq!(out.canvas.get(x, y), v[4]);
                }
            }
        }
    }

    #[test]
    fn singleton_and_disjoint() {
        let img = textured(2, 60, 40);
        let m = stitch_sequence(
            &[img.clone()],
            &[CapturePose::default()],
            &StitchConfig::default(),
        )
        .unwrap();
        assert_eq!(m.canvas, img);

        let far = CapturePose::from_odometry(500.0, 0.0, 0.0, 1.0);
        let err = stitch_sequence(
            &[img.clone(), img],
            &[CapturePose::default(), far],
            &StitchConfig::default(),
        );
        assert!(matches!(
            err,
            Err(Error::InsufficientOverlap {
                first: 0,
                second: 1,
                ..
            })
        ));
    }

    #[test]
    fn strip_reconstruction() {
        let fx = synth::strip_fixture(21, 10, 20);
        let m = stitch_sequence(&fx.tiles, &fx.poses, &StitchConfig::default()).unwrap();
        assert!(m.fallbacks.is_empty());
        for (i, p) in m.placements.iter().enumerate() {
            assert_eq!(p.0, fx.true_x[i] - fx.true_x[0]);
            assert_eq!(p.1, 0);
        }
        let mae = synth::strip_error(&fx, &m, 2);
        assert!(mae < 3.0, "{mae}");
    }

    #[test]
    fn constant_exposure_commutes() {
        let fx = synth::strip_fixture(5, 4, 0);
        let brighter: Vec<GrayImage> = fx
            .tiles
            .iter()
            .map(|t| GrayImage::from_fn(t.width(), t.height(), |x, y| t.get(x, y) + 15))
            .collect();
        let cfg = StitchConfig::default();
        let a = stitch_sequence(&fx.tiles, &fx.poses, &cfg).unwrap();
        let b = stitch_sequence(&brighter, &fx.poses, &cfg).unwrap();
        assert_eq!(a.placements, b.placements);
        for (pa, pb) in a.canvas.data().iter().zip(b.canvas.data()) {
            assert_eq!(*pa + 15, *pb);
        }
    }

    #[test]
    fn refined_poses_agree_on_world_points() {
        let fx = synth::strip_fixture(9, 3, 0);
        let cfg = StitchConfig::default();
        let (a, b) = (&fx.poses[0], &fx.poses[1]);
        let (px, py) = prior_offset(a, b);
        let o = estimate_offset(
            &fx.tiles[0],
            &fx.tiles[1],
            (px.round() as i64, py.round() as i64),
            cfg.search_radius,
        )
        .unwrap();
        let b2 = refine_pose(a, b, (o.dx, o.dy));
        // Pixel (x, y) of b shows pixel (x + dx, y + dy) of a.
        for (x, y) in [(0.0, 0.0), (10.0, 70.0), (50.0, 130.0)] {
            let wa = image_to_world((x + o.dx as f64, y + o.dy as f64), a);
            let wb = image_to_world((x, y), &b2);
            assert!((wa.0 - wb.0).hypot(wa.1 - wb.1) <= a.mm_per_px);
        }
    }

    proptest! {
        #[test]
        fn rigid_inverse_round_trips(t in -3.0f64..3.0, x in -100.0f64..100.0, y in -100.0f64..100.0,
                                     px in -50.0f64..50.0, py in -50.0f64..50.0) {
            let r = Rigid2::new(t, x, y);
            let q = r.inverse().apply(r.apply((px, py)));
            prop_assert!((q.0 - px).abs() < 1e-9 && (q.1 - py).abs() < 1e-9);
            let c = r.compose(&r.inverse());
            let z = c.apply((px, py));
            prop_assert!((z.0 - px).abs() < 1e-9 && (z.1 - py).abs() < 1e-9);
        }

        #[test]
        fn overlap_is_symmetric_for_translations(dx in -200.0f64..200.0, dy in -150.0f64..150.0) {
            let fp = Footprint::default();
            let a = CapturePose::default();
            let b = CapturePose::from_odometry(dx, dy, 0.0, 1.0);
            let f = check_overlap(&a, &b, &fp);
            let expect = ((180.0 - dx.abs()).max(0.0) * (140.0 - dy.abs()).max(0.0)) / (180.0 * 140.0);
            prop_assert!((f - expect).abs() < 1e-9);
            prop_assert!((f - check_overlap(&b, &a, &fp)).abs() < 1e-9);
        }
    }
}
