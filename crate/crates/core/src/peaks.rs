//! Histogram smoothing and dominant-peak search.
//!
//! The search treats the smoothed histogram as terrain. Every strict local
//! maximum is an *initial* peak. For each initial peak `k` an offset distance
//! `L(k)` and a crossover index `theta(k) = d(k) / L(k)` are derived from the
//! peak and its successor; a peak is *dominant* when its crossover index beats
//! both neighbours. Each accepted peak moves the observing location to
//! `g(k) - L(k)`, retires its own index, and restarts the local peak count
//! used by the equal-height offset branch for the peaks that follow.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::GrayImage;

/// Number of intensity levels of an 8-bit image.
pub const LEVELS: usize = 256;

/// Relative tolerance under which two crossover indices count as equal.
const THETA_REL_TOL: f64 = 1e-12;

/// Per-level pixel counts. Level `i` lives at index `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    counts: Vec<f64>,
    total: f64,
}

impl Histogram {
    /// Builds a histogram from raw counts; `total` is their sum.
    pub fn from_counts(counts: Vec<f64>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::InvalidInput(
                "histogram needs at least one level".into(),
            ));
        }
        if let Some(bad) = counts.iter().find(|c| !c.is_finite() || **c < 0.0) {
            return Err(Error::InvalidInput(format!(
                "invalid histogram count {bad}"
            )));
        }
        let total = counts.iter().sum();
        Ok(Self { counts, total })
    }

    /// Parses one count per non-empty line (a 256-line count file).
    pub fn parse_counts(text: &str) -> Result<Self> {
        let counts = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| {
                l.parse::<f64>()
                    .map_err(|e| Error::InvalidInput(format!("bad count {l:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if counts.len() != LEVELS {
            return Err(Error::InvalidInput(format!(
                "count file has {} levels, expected {LEVELS}",
                counts.len()
            )));
        }
        Self::from_counts(counts)
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    /// Pixel count `n` of the source image (unchanged by smoothing).
    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn max_level(&self) -> usize {
        self.counts.len() - 1
    }

    /// Multiplies every count (and the total) by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            counts: self.counts.iter().map(|v| v * c).collect(),
            total: self.total * c,
        }
    }

    /// One past the highest populated level.
    fn support_end(&self) -> usize {
        self.counts
            .iter()
            .rposition(|&c| c > 0.0)
            .map_or(self.counts.len(), |i| i + 1)
    }
}

pub fn compute_histogram(img: &GrayImage) -> Histogram {
    let mut counts = vec![0.0; LEVELS];
    for &v in img.data() {
        counts[v as usize] += 1.0;
    }
    Histogram {
        counts,
        total: img.data().len() as f64,
    }
}

/// Three-tap moving average over the original counts; the end levels
/// replicate themselves as their missing neighbour.
pub fn smooth(h: &Histogram) -> Histogram {
    let c = &h.counts;
    let last = c.len() - 1;
    let counts = (0..c.len())
        .map(|i| {
            let prev = c[i.saturating_sub(1)];
            let next = c[(i + 1).min(last)];
            (prev + c[i] + next) / 3.0
        })
        .collect();
    Histogram {
        counts,
        total: h.total,
    }
}

/// Strict interior local maxima, in increasing level order.
pub fn find_initial_peaks(h: &Histogram) -> Vec<usize> {
    let c = &h.counts;
    if c.len() < 3 {
        return Vec::new();
    }
    (1..c.len() - 1)
        .filter(|&i| c[i] > c[i - 1] && c[i] > c[i + 1])
        .collect()
}

/// Offset distance between a peak (`level`, `height`) and its successor.
/// `rank` is the 1-based position of the peak counted from the current
/// observing location; it only enters the equal-height branch.
pub fn offset_between(
    height: f64,
    level: f64,
    next_height: f64,
    next_level: f64,
    rank: usize,
) -> f64 {
    let rise = height * (next_level - level);
    if rise == 0.0 {
        return 0.0;
    }
    if next_height != height {
        rise / (next_height - height).abs()
    } else {
        let k = rank as f64;
        rise / (((k + 1.0) / k) * next_height - height).abs()
    }
}

/// Crossover index `d / L` with `d = h - min(h, h_next) / 2`; `L = 0` maps
/// to `+inf`.
pub fn crossover_between(height: f64, next_height: f64, offset: f64) -> f64 {
    let d = height - height.min(next_height) / 2.0;
    if offset == 0.0 {
        f64::INFINITY
    } else {
        d / offset
    }
}

/// Height and level of the successor of `peaks[k]`. The last peak is paired
/// with a virtual zero-height successor one level past the populated range.
fn successor(h: &Histogram, peaks: &[usize], k: usize) -> (f64, f64) {
    match peaks.get(k + 1) {
        Some(&next) => (h.counts[next], next as f64),
        None => (0.0, h.support_end() as f64),
    }
}

/// Offset distance of `peaks[k]` (0-based `k`, rank `k + 1`).
pub fn offset_distance(h: &Histogram, peaks: &[usize], k: usize) -> f64 {
    offset_ranked(h, peaks, k, k + 1)
}

fn offset_ranked(h: &Histogram, peaks: &[usize], k: usize, rank: usize) -> f64 {
    let (nh, nl) = successor(h, peaks, k);
    offset_between(h.counts[peaks[k]], peaks[k] as f64, nh, nl, rank)
}

/// Crossover index of `peaks[k]` (0-based `k`, rank `k + 1`).
pub fn crossover_index(h: &Histogram, peaks: &[usize], k: usize) -> f64 {
    let (nh, _) = successor(h, peaks, k);
    crossover_between(h.counts[peaks[k]], nh, offset_distance(h, peaks, k))
}

/// Result of the dominant-peak search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakSet {
    /// Strict local maxima of the smoothed histogram.
    pub initial: Vec<usize>,
    /// Accepted peaks, increasing.
    pub dominant: Vec<usize>,
    /// Observing location produced by each dominant peak, `g - L`.
    pub observing: Vec<f64>,
    /// Crossover index of every initial peak at the moment the scan reached it.
    pub crossover: Vec<f64>,
    /// Offset distance of every initial peak at the moment the scan reached it.
    pub offsets: Vec<f64>,
}

impl PeakSet {
    /// Observing location of the given dominant peak.
    pub fn observing_for(&self, level: usize) -> Option<f64> {
        self.dominant
            .iter()
            .position(|&d| d == level)
            .map(|i| self.observing[i])
    }
}

/// `a` strictly beats `b`. Values within a relative `1e-12` are treated as
/// equal; two infinities tie and `inf_tie_wins` decides.
fn beats(a: f64, b: f64, inf_tie_wins: bool) -> bool {
    if a == f64::INFINITY && b == f64::INFINITY {
        return inf_tie_wins;
    }
    if b == f64::NEG_INFINITY {
        return a != f64::NEG_INFINITY;
    }
    if a == f64::INFINITY {
        return true;
    }
    a - b > THETA_REL_TOL * a.abs().max(b.abs())
}

/// Scans the initial peaks of a smoothed histogram left to right and keeps
/// those whose crossover index beats both neighbours.
///
/// With fewer than three initial peaks every initial peak is dominant.
pub fn detect_dominant_peaks(h: &Histogram) -> PeakSet {
    let initial = find_initial_peaks(h);
    let n = initial.len();
    let mut theta = vec![0.0; n];
    let mut offsets = vec![0.0; n];
    let recompute = |from: usize, theta: &mut [f64], offsets: &mut [f64]| {
        for k in from..n {
            let l = offset_ranked(h, &initial, k, k - from + 1);
            let (nh, _) = successor(h, &initial, k);
            offsets[k] = l;
            theta[k] = crossover_between(h.counts[initial[k]], nh, l);
        }
    };
    recompute(0, &mut theta, &mut offsets);

    if n < 3 {
        let observing = initial
            .iter()
            .zip(&offsets)
            .map(|(&g, &l)| g as f64 - l)
            .collect();
        return PeakSet {
            dominant: initial.clone(),
            observing,
            crossover: theta,
            offsets,
            initial,
        };
    }

    let mut dominant = Vec::new();
    let mut observing = Vec::new();
    let mut seen_theta = vec![0.0; n];
    let mut seen_offsets = vec![0.0; n];
    for j in 0..n {
        seen_theta[j] = theta[j];
        seen_offsets[j] = offsets[j];
        let left = if j == 0 {
            f64::NEG_INFINITY
        } else {
            theta[j - 1]
        };
        let right = theta.get(j + 1).copied().unwrap_or(f64::NEG_INFINITY);
        // On an infinite tie the lower level wins: lose to the left, beat the right.
        if beats(theta[j], left, false) && beats(theta[j], right, true) {
            dominant.push(initial[j]);
            observing.push(initial[j] as f64 - offsets[j]);
            theta[j] = f64::NEG_INFINITY;
            recompute(j + 1, &mut theta, &mut offsets);
        }
    }
    PeakSet {
        initial,
        dominant,
        observing,
        crossover: seen_theta,
        offsets: seen_offsets,
    }
}

/// Global crack-isolation threshold.
///
/// With two or more dominant peaks this is the level of the smallest smoothed
/// count strictly between the darkest dominant peak and the next one (lowest
/// level on ties). With a single dominant peak it is that peak's observing
/// location, rounded and clamped to the histogram range.
pub fn peaks_to_global_threshold(h: &Histogram, peaks: &PeakSet) -> Result<usize> {
    match peaks.dominant.as_slice() {
        [] => Err(Error::NoStructure),
        [single] => {
            let alpha = peaks.observing_for(*single).unwrap_or(*single as f64);
            Ok(alpha.round().clamp(0.0, h.max_level() as f64) as usize)
        }
        [first, second, ..] => {
            let mut best = first + 1;
            for level in first + 1..*second {
                if h.counts[level] < h.counts[best] {
                    best = level;
                }
            }
            Ok(best)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn hist(c: &[f64]) -> Histogram {
        Histogram::from_counts(c.to_vec()).unwrap()
    }

    /// Exhaustive local-maximum oracle.
    fn oracle_peaks(c: &[f64]) -> Vec<usize> {
        let mut out = Vec::new();
        for i in 0..c.len() {
            if i == 0 || i + 1 == c.len() {
                continue;
            }
            if c[i] > c[i - 1] && c[i] > c[i + 1] {
                out.push(i);
            }
        }
        out
    }

    #[test]
    fn histogram_tallies() {
        let img = GrayImage::new(3, 1, vec![5, 5, 9]).unwrap();
        let h = compute_histogram(&img);
        assert_eq!(h.counts()[5], 2.0);
        assert_eq!(h.counts()[9], 1.0);
        assert_eq!(h.total(), 3.0);
        assert_eq!(h.len(), LEVELS);

        let zero = compute_histogram(&GrayImage::filled(4, 4, 0));
        assert_eq!(zero.counts()[0], 16.0);
    }

    #[test]
    fn smoothing_examples() {
        let s = smooth(&hist(&[4.0; 6]));
        assert!(s.counts().iter().all(|&v| (v - 4.0).abs() < 1e-12));

        let s = smooth(&hist(&[0.0, 3.0, 6.0, 3.0, 0.0]));
        assert_eq!(s.counts()[2], 4.0);

        let mut c = vec![0.0; LEVELS];
        c[128] = 90.0;
        let s = smooth(&hist(&c));
        for l in 127..=129 {
            assert_eq!(s.counts()[l], 30.0);
        }
        assert_eq!(s.counts()[126], 0.0);
        assert_eq!(s.total(), 90.0);
    }

    #[test]
    fn initial_peak_examples() {
        assert!(find_initial_peaks(&hist(&[1.0, 2.0, 3.0, 4.0])).is_empty());
        assert_eq!(
            find_initial_peaks(&hist(&[1.0, 5.0, 1.0, 0.0, 7.0, 0.0])),
            vec![1, 4]
        );
        assert!(find_initial_peaks(&hist(&[1.0, 5.0, 5.0, 1.0])).is_empty());
    }

    #[test]
    fn offset_examples() {
        assert_eq!(offset_between(10.0, 40.0, 20.0, 45.0, 1), 5.0);
        // Equal heights at rank 2: |1.5 * 10 - 10| = 5, L = 10 * 6 / 5.
        assert_eq!(offset_between(10.0, 40.0, 10.0, 46.0, 2), 12.0);
        assert_eq!(offset_between(0.0, 40.0, 3.0, 45.0, 1), 0.0);
    }

    #[test]
    fn crossover_examples() {
        assert_eq!(crossover_between(10.0, 20.0, 5.0), 1.0);
        assert_eq!(crossover_between(8.0, 8.0, 2.0), 2.0);
        assert_eq!(crossover_between(8.0, 8.0, 0.0), f64::INFINITY);
    }

    #[test]
    fn public_offset_uses_position_as_rank() {
        let h = hist(&[0.0, 10.0, 0.0, 0.0, 0.0, 0.0, 0.0, 10.0, 0.0, 2.0, 0.0]);
        let p = find_initial_peaks(&h);
        assert_eq!(p, vec![1, 7, 9]);
        // Rank 1, equal heights: |2 * 10 - 10| = 10, L = 10 * 6 / 10.
        assert_eq!(offset_distance(&h, &p, 0), 6.0);
        // Last peak pairs with a zero-height successor at level 10.
        assert_eq!(offset_distance(&h, &p, 2), 1.0);
        assert_eq!(crossover_index(&h, &p, 2), 2.0);
    }

    #[test]
    fn lone_gaussian_has_one_dominant_peak() {
        let c: Vec<f64> = (0..LEVELS)
            .map(|i| 1000.0 * (-((i as f64 - 140.0).powi(2)) / (2.0 * 15.0f64.powi(2))).exp())
            .collect();
        let p = detect_dominant_peaks(&smooth(&hist(&c)));
        assert_eq!(p.dominant, vec![140]);
    }

    #[test]
    fn golden_trace_sixteen_bins() {
        // Modes at 4 and 12 with a ripple on each inner flank.
        let h = hist(&[
            0., 1., 5., 10., 16., 8., 9., 4., 2., 4., 3., 11., 20., 12., 5., 0.,
        ]);
        let p = detect_dominant_peaks(&h);
        assert_eq!(p.initial, vec![4, 6, 9, 12]);
        // Hand execution:
        //  k=0: L = 16*2/7,  d = 16 - 9/2 = 11.5,  theta = 2.515625
        //  k=1: L = 9*3/5,   d = 9 - 4/2 = 7,      theta = 7/5.4
        //  k=2: L = 4*3/16,  d = 4 - 4/2 = 2,      theta = 8/3
        //  k=3: successor (0, 15): L = 3, d = 20,  theta = 20/3
        let expect = [2.515625, 7.0 / 5.4, 8.0 / 3.0, 20.0 / 3.0];
        for (a, b) in p.crossover.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        assert_eq!(p.dominant, vec![4, 12]);
        assert!((p.observing[0] - (4.0 - 32.0 / 7.0)).abs() < 1e-12);
        assert!((p.observing[1] - 9.0).abs() < 1e-12);
        assert_eq!(peaks_to_global_threshold(&h, &p).unwrap(), 8);
    }

    #[test]
    fn accepted_peak_restarts_rank() {
        // Peaks at 2, 5, 8, 11. Peak 2 is accepted; peaks 5 and 8 then share
        // a height and peak 5 is rank 1 of the new segment: the equal-height
        // denominator is |2h - h| instead of |(3/2)h - h|.
        let h = hist(&[0., 0., 30., 1., 1., 6., 1., 1., 6., 1., 1., 2., 0., 0.]);
        let p = detect_dominant_peaks(&h);
        assert_eq!(p.initial, vec![2, 5, 8, 11]);
        assert_eq!(p.dominant[0], 2);
        assert!((p.offsets[1] - 3.0).abs() < 1e-12, "{:?}", p.offsets);
        assert!((offset_distance(&h, &p.initial, 1) - 6.0).abs() < 1e-12);
    }

    #[test]
    fn fewer_than_three_peaks_are_all_dominant() {
        let h = hist(&[0.0, 3.0, 0.0, 0.0, 9.0, 1.0, 0.0]);
        let p = detect_dominant_peaks(&h);
        assert_eq!(p.dominant, vec![1, 4]);
        assert!(detect_dominant_peaks(&hist(&[1.0, 1.0, 1.0]))
            .dominant
            .is_empty());
    }

    #[test]
    fn threshold_rules() {
        let mut c = vec![0.0; LEVELS];
        for (i, v) in c.iter_mut().enumerate() {
            let x = i as f64;
            *v = 500.0 * (-((x - 60.0).powi(2)) / 200.0).exp()
                + 800.0 * (-((x - 180.0).powi(2)) / 300.0).exp()
                + 1.0;
        }
        c[117] = 0.5;
        let h = hist(&c);
        let p = PeakSet {
            initial: vec![60, 180],
            dominant: vec![60, 180],
            observing: vec![0.0, 0.0],
            crossover: vec![0.0; 2],
            offsets: vec![0.0; 2],
        };
        assert_eq!(peaks_to_global_threshold(&h, &p).unwrap(), 117);

        let single = PeakSet {
            initial: vec![200],
            dominant: vec![200],
            observing: vec![170.0],
            crossover: vec![1.0],
            offsets: vec![30.0],
        };
        assert_eq!(peaks_to_global_threshold(&h, &single).unwrap(), 170);

        let mut flat = vec![5.0; 20];
        flat[3] = 9.0;
        flat[14] = 9.0;
        flat[7] = 1.0;
        flat[10] = 1.0;
        let hf = hist(&flat);
        let pf = PeakSet {
            dominant: vec![3, 14],
            ..single.clone()
        };
        assert_eq!(peaks_to_global_threshold(&hf, &pf).unwrap(), 7);

        let none = PeakSet {
            dominant: vec![],
            ..single
        };
        assert!(matches!(
            peaks_to_global_threshold(&h, &none),
            Err(Error::NoStructure)
        ));
    }

    #[test]
    fn count_file_parsing() {
        let text: String = (0..LEVELS).map(|i| format!("{}\n", i % 7)).collect();
        let h = Histogram::parse_counts(&text).unwrap();
        assert_eq!(h.counts()[8], 1.0);
        assert!(Histogram::parse_counts("1\n2\n").is_err());
        assert!(Histogram::parse_counts("x\n").is_err());
    }

    fn random_counts() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0u32..50, LEVELS)
            .prop_map(|v| v.into_iter().map(f64::from).collect())
    }

    proptest! {
        #[test]
        fn initial_peaks_match_oracle(c in random_counts()) {
            let h = smooth(&hist(&c));
            prop_assert_eq!(find_initial_peaks(&h), oracle_peaks(h.counts()));
        }

        #[test]
        fn dominant_subset_of_initial(c in random_counts()) {
            let p = detect_dominant_peaks(&smooth(&hist(&c)));
            prop_assert!(p.dominant.iter().all(|d| p.initial.contains(d)));
            prop_assert!(p.initial.windows(2).all(|w| w[0] < w[1]));
            for (d, a) in p.dominant.iter().zip(&p.observing) {
                let k = p.initial.iter().position(|x| x == d).unwrap();
                prop_assert!((*d as f64 - p.offsets[k] - a).abs() < 1e-9);
            }
        }

        #[test]
        fn smoothing_conserves_interior_mass(mut c in random_counts()) {
            c[0] = 0.0;
            c[LEVELS - 1] = 0.0;
            let h = hist(&c);
            let s = smooth(&h);
            let mass: f64 = s.counts().iter().sum();
            prop_assert!((mass - h.total()).abs() < 1e-6);
        }
    }
}
