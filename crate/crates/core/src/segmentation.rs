//! Crack segmentation: global threshold from dominant peaks, line-response
//! gating, region growing seeded from the gated mask, and cleanup.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::neighbors8;
use crate::imaging::{label_components, morphological_cleanup, BinaryMask, GrayImage, RealImage};
use crate::line_filter::{multiscale_response_with, LineFilterConfig};
use crate::peaks::{
    compute_histogram, detect_dominant_peaks, peaks_to_global_threshold, smooth, Histogram, PeakSet,
};

/// Valley-emphasis Otsu result. Vectors are indexed by level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OtsuResult {
    /// Lowest maximizer of the objective.
    pub threshold: usize,
    /// Last level of the run of levels, starting at `threshold`, whose
    /// objective is bit-identical to the maximum (an empty valley).
    pub plateau_end: usize,
    pub objective: Vec<f64>,
    pub omega1: Vec<f64>,
    pub omega2: Vec<f64>,
    pub mu1: Vec<f64>,
    pub mu2: Vec<f64>,
    /// All mass sits on a single level.
    pub degenerate: bool,
}

impl OtsuResult {
    /// Middle of the maximizing plateau (floor).
    pub fn valley_centre(&self) -> usize {
        (self.threshold + self.plateau_end) / 2
    }
}

/// Maximizes `(1 - p_t) * (w1 mu1^2 + w2 mu2^2)` over levels where both
/// classes are non-empty; class 1 is `0..=t`. Ties go to the lowest level.
pub fn valley_emphasis_otsu(h: &Histogram) -> Result<OtsuResult> {
    let n = h.counts().iter().sum::<f64>();
    if !(n > 0.0) {
        return Err(Error::InvalidInput("histogram is empty".into()));
    }
    let len = h.len();
    let p: Vec<f64> = h.counts().iter().map(|c| c / n).collect();

    let mut omega1 = vec![0.0; len];
    let mut first_moment = vec![0.0; len];
    let (mut w, mut m) = (0.0, 0.0);
    for i in 0..len {
        w += p[i];
        m += i as f64 * p[i];
        omega1[i] = w;
        first_moment[i] = m;
    }
    // Upper class sums accumulate from the top so empty levels add exact zeros.
    let mut omega2 = vec![0.0; len];
    let mut upper_moment = vec![0.0; len];
    let (mut w, mut m) = (0.0, 0.0);
    for i in (0..len).rev() {
        omega2[i] = w;
        upper_moment[i] = m;
        w += p[i];
        m += i as f64 * p[i];
    }

    let mut mu1 = vec![0.0; len];
    let mut mu2 = vec![0.0; len];
    let mut objective = vec![0.0; len];
    let mut best: Option<usize> = None;
    for t in 0..len {
        if omega1[t] > 0.0 {
            mu1[t] = first_moment[t] / omega1[t];
        }
        if omega2[t] > 0.0 {
            mu2[t] = upper_moment[t] / omega2[t];
        }
        if omega1[t] > 0.0 && omega2[t] > 0.0 {
            objective[t] =
                (1.0 - p[t]) * (omega1[t] * mu1[t] * mu1[t] + omega2[t] * mu2[t] * mu2[t]);
            if best.is_none_or(|b| objective[t] > objective[b]) {
                best = Some(t);
            }
        }
    }

    let (threshold, degenerate) = match best {
        Some(t) => (t, false),
        None => (h.counts().iter().position(|&c| c > 0.0).unwrap_or(0), true),
    };
    let mut plateau_end = threshold;
    if !degenerate {
        while plateau_end + 1 < len
            && omega2[plateau_end + 1] > 0.0
            && objective[plateau_end + 1].to_bits() == objective[threshold].to_bits()
        {
            plateau_end += 1;
        }
    }
    Ok(OtsuResult {
        threshold,
        plateau_end,
        objective,
        omega1,
        omega2,
        mu1,
        mu2,
        degenerate,
    })
}

/// Dark-crack threshold: pixels with intensity `<= t`.
pub fn apply_threshold(img: &GrayImage, t: u8) -> BinaryMask {
    BinaryMask::from_fn(img.width(), img.height(), |x, y| img.get(x, y) <= t)
}

/// Foreground pixels with at least one background 4-neighbour (the image
/// border counts as background), in row-major order.
pub fn seed_points(mask: &BinaryMask) -> Vec<(usize, usize)> {
    let (w, h) = mask.dims();
    let off = |x: usize, y: usize, dx: isize, dy: isize| -> bool {
        let nx = x as isize + dx;
        let ny = y as isize + dy;
        nx < 0
            || ny < 0
            || nx >= w as isize
            || ny >= h as isize
            || !mask.get(nx as usize, ny as usize)
    };
    mask.pixels()
        .into_iter()
        .filter(|&(x, y)| {
            off(x, y, 1, 0) || off(x, y, -1, 0) || off(x, y, 0, 1) || off(x, y, 0, -1)
        })
        .collect()
}

/// Grows `seeds ∪ initial` by 8-neighbour admission.
///
/// The union is split into 8-connected regions. Growth runs in wavefronts:
/// every unassigned pixel touching a region is tested against the means the
/// regions had at the start of the wavefront, admitted when
/// `|mean - I| < e_max` for some touching region, and joins the touching
/// region with the closest mean (lowest region id on ties). Results do not
/// depend on seed order.
pub fn region_grow(
    img: &GrayImage,
    seeds: &[(usize, usize)],
    initial: &BinaryMask,
    e_max: f64,
) -> Result<BinaryMask> {
    initial.check_dims(img.dims())?;
    let (w, h) = img.dims();
    let mut start = initial.clone();
    for &(x, y) in seeds {
        if x >= w || y >= h {
            return Err(Error::InvalidInput(format!(
                "seed ({x}, {y}) outside {w}x{h} image"
            )));
        }
        start.set(x, y, true);
    }
    let comps = label_components(&start);
    let mut label: Vec<u32> = comps.labels.clone();
    let regions = comps.areas.len();
    let mut sum = vec![0.0f64; regions];
    let mut count = comps.areas.iter().map(|&a| a as f64).collect::<Vec<_>>();
    for (i, &l) in label.iter().enumerate() {
        if l > 0 {
            sum[l as usize - 1] += img.data()[i] as f64;
        }
    }

    let mut candidates: BTreeSet<usize> = BTreeSet::new();
    let push_neighbours = |i: usize, label: &[u32], cand: &mut BTreeSet<usize>| {
        for (nx, ny) in neighbors8(i % w, i / w, w, h) {
            let j = ny * w + nx;
            if label[j] == 0 {
                cand.insert(j);
            }
        }
    };
    for i in 0..label.len() {
        if label[i] > 0 {
            push_neighbours(i, &label, &mut candidates);
        }
    }

    loop {
        let means: Vec<f64> = sum.iter().zip(&count).map(|(s, c)| s / c).collect();
        let mut admitted: Vec<(usize, u32)> = Vec::new();
        for &j in &candidates {
            let v = img.data()[j] as f64;
            let mut choice: Option<(f64, u32)> = None;
            for (nx, ny) in neighbors8(j % w, j / w, w, h) {
                let r = label[ny * w + nx];
                if r == 0 {
                    continue;
                }
                let diff = (means[r as usize - 1] - v).abs();
                if diff < e_max && choice.is_none_or(|(d, id)| diff < d || (diff == d && r < id)) {
                    choice = Some((diff, r));
                }
            }
            if let Some((_, r)) = choice {
                admitted.push((j, r));
            }
        }
        if admitted.is_empty() {
            break;
        }
        for &(j, r) in &admitted {
            label[j] = r;
            sum[r as usize - 1] += img.data()[j] as f64;
            count[r as usize - 1] += 1.0;
            candidates.remove(&j);
        }
        for &(j, _) in &admitted {
            push_neighbours(j, &label, &mut candidates);
        }
    }
    BinaryMask::new(w, h, label.into_iter().map(|l| l > 0).collect())
}

/// Region-growing tolerance: the distance between a histogram mode and the
/// valley it is grown towards.
///
/// The valley is the centre of the Otsu maximizing plateau. The histogram is
/// bimodal when a mode lies below the valley (see [`lower_mode`]); the
/// tolerance is then the mode-to-valley distance. Otherwise it is unimodal
/// and the tolerance is the distance from the dominant peak nearest the
/// valley to its observing location.
pub fn grow_threshold(h: &Histogram, peaks: &PeakSet, otsu: &OtsuResult) -> Result<f64> {
    if peaks.dominant.is_empty() {
        return Err(Error::NoStructure);
    }
    let v = otsu.valley_centre();
    if let Some(g) = lower_mode(h, peaks, otsu) {
        return Ok(v as f64 - g as f64);
    }
    let g = *peaks
        .dominant
        .iter()
        .min_by_key(|&&g| g.abs_diff(v))
        .expect("non-empty");
    let alpha = peaks.observing_for(g).unwrap_or(g as f64);
    Ok((g as f64 - alpha).abs())
}

/// Mode below the Otsu valley, if the histogram has one: the most populated
/// level strictly below the Otsu threshold when it is more populated than the
/// valley level (lowest level on ties), else the nearest dominant peak at or
/// below the valley.
pub fn lower_mode(h: &Histogram, peaks: &PeakSet, otsu: &OtsuResult) -> Option<usize> {
    let v = otsu.valley_centre();
    let c = h.counts();
    let valley = c.get(v).copied().unwrap_or(0.0);
    let mut best: Option<usize> = None;
    for level in 0..otsu.threshold.min(c.len()) {
        if best.is_none_or(|b| c[level] > c[b]) {
            best = Some(level);
        }
    }
    best.filter(|&b| c[b] > valley)
        .or_else(|| peaks.dominant.iter().rev().find(|&&g| g <= v).copied())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentConfig {
    pub line: LineFilterConfig,
    /// Fraction of thresholded pixels whose line response must be exceeded
    /// or matched to stay in the gated mask.
    pub gating_quantile: f64,
    pub min_area: usize,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self {
            line: LineFilterConfig::default(),
            gating_quantile: 0.80,
            min_area: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentStatus {
    Ok,
    /// The histogram has no dominant peak; nothing to isolate.
    NoStructure,
    /// All stages ran but the final mask is empty.
    Empty,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCounts {
    pub threshold: usize,
    pub gated: usize,
    pub seeds: usize,
    pub grown: usize,
    pub cleaned: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentReport {
    pub status: SegmentStatus,
    pub initial_peaks: Vec<usize>,
    pub dominant_peaks: Vec<usize>,
    pub observing: Vec<f64>,
    pub global_threshold: Option<usize>,
    pub otsu_threshold: Option<usize>,
    pub valley_centre: Option<usize>,
    pub gating_cutoff: Option<f64>,
    pub e_max: Option<f64>,
    pub counts: StageCounts,
}

#[derive(Debug, Clone)]
pub struct Segmentation {
    pub mask: BinaryMask,
    pub report: SegmentReport,
}

/// Full crack pipeline on a grayscale image.
pub fn segment_crack(img: &GrayImage, cfg: &SegmentConfig) -> Result<Segmentation> {
    let hist = smooth(&compute_histogram(img));
    let peaks = detect_dominant_peaks(&hist);
    if peaks.dominant.is_empty() {
        return Ok(no_structure(img, &peaks));
    }
    let response = multiscale_response_with(img, &cfg.line)?;
    run_pipeline(img, &hist, peaks, &response.response, cfg)
}

/// Crack pipeline with an externally supplied line response.
pub fn segment_with_response(
    img: &GrayImage,
    response: &RealImage,
    cfg: &SegmentConfig,
) -> Result<Segmentation> {
    if response.dims() != img.dims() {
        return Err(Error::DimensionMismatch {
            expected: img.dims(),
            found: response.dims(),
        });
    }
    let hist = smooth(&compute_histogram(img));
    let peaks = detect_dominant_peaks(&hist);
    if peaks.dominant.is_empty() {
        return Ok(no_structure(img, &peaks));
    }
    run_pipeline(img, &hist, peaks, response, cfg)
}

fn no_structure(img: &GrayImage, peaks: &PeakSet) -> Segmentation {
    Segmentation {
        mask: BinaryMask::empty(img.width(), img.height()),
        report: SegmentReport {
            status: SegmentStatus::NoStructure,
            initial_peaks: peaks.initial.clone(),
            dominant_peaks: Vec::new(),
            observing: Vec::new(),
            global_threshold: None,
            otsu_threshold: None,
            valley_centre: None,
            gating_cutoff: None,
            e_max: None,
            counts: StageCounts::default(),
        },
    }
}

/// Value at quantile `q` of `values` (nearest rank on the sorted values).
pub fn quantile(values: &mut [f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let idx = (q.clamp(0.0, 1.0) * (values.len() - 1) as f64).round() as usize;
    Some(values[idx])
}

fn run_pipeline(
    img: &GrayImage,
    hist: &Histogram,
    peaks: PeakSet,
    response: &RealImage,
    cfg: &SegmentConfig,
) -> Result<Segmentation> {
    let t = peaks_to_global_threshold(hist, &peaks)?;
    let m0 = apply_threshold(img, t.min(255) as u8);

    let mut inside: Vec<f64> = m0
        .pixels()
        .iter()
        .map(|&(x, y)| response.get(x, y))
        .collect();
    let cutoff = quantile(&mut inside, cfg.gating_quantile);
    let m1 = match cutoff {
        Some(c) => BinaryMask::from_fn(img.width(), img.height(), |x, y| {
            m0.get(x, y) && response.get(x, y) >= c
        }),
        None => m0.clone(),
    };

    let otsu = valley_emphasis_otsu(hist)?;
    let e_max = grow_threshold(hist, &peaks, &otsu)?;
    let seeds = seed_points(&m1);
    let m2 = region_grow(img, &seeds, &m1, e_max)?;
    let mask = morphological_cleanup(&m2, cfg.min_area);

    let status = if mask.is_empty() {
        SegmentStatus::Empty
    } else {
        SegmentStatus::Ok
    };
    let report = SegmentReport {
        status,
        initial_peaks: peaks.initial.clone(),
        dominant_peaks: peaks.dominant.clone(),
        observing: peaks.observing.clone(),
        global_threshold: Some(t),
        otsu_threshold: Some(otsu.threshold),
        valley_centre: Some(otsu.valley_centre()),
        gating_cutoff: cutoff,
        e_max: Some(e_max),
        counts: StageCounts {
            threshold: m0.count(),
            gated: m1.count(),
            seeds: seeds.len(),
            grown: m2.count(),
            cleaned: mask.count(),
        },
    };
    Ok(Segmentation { mask, report })
}
