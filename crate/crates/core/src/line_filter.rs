//! Hessian-eigenvalue line emphasis.
//!
//! Second partials come from sampled Gaussian-derivative kernels. The two
//! eigenvalues at each pixel feed a line-similarity measure which is large
//! on thin valleys and zero on flat areas, and the measure is integrated
//! over a geometric bank of scales by taking the scale-normalized maximum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{convolve_separable, gaussian_1d, GrayImage, RealImage};

/// Smallest supported Gaussian scale, in pixels.
pub const MIN_SIGMA: f64 = 0.5;

/// Per-pixel symmetric 2x2 Hessians `[[xx, xy], [xy, yy]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HessianField {
    width: usize,
    height: usize,
    pub sigma: f64,
    pub xx: Vec<f64>,
    pub xy: Vec<f64>,
    pub yy: Vec<f64>,
}

impl HessianField {
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn at(&self, x: usize, y: usize) -> [f64; 3] {
        let i = y * self.width + x;
        [self.xx[i], self.xy[i], self.yy[i]]
    }

    /// Eigenvalue pairs `(l1, l2)` with `l1 >= l2`, row-major.
    pub fn eigenvalues(&self) -> Vec<(f64, f64)> {
        (0..self.xx.len())
            .map(|i| eigs2(self.xx[i], self.xy[i], self.yy[i]))
            .collect()
    }
}

/// Geometric bank `sigma_i = sigma1 * factor^(i-1)`, `i = 1..=count`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleBank {
    pub sigma1: f64,
    pub factor: f64,
    pub count: usize,
}

impl Default for ScaleBank {
    fn default() -> Self {
        Self {
            sigma1: 1.0,
            factor: std::f64::consts::SQRT_2,
            count: 4,
        }
    }
}

impl ScaleBank {
    pub fn new(sigma1: f64, factor: f64, count: usize) -> Result<Self> {
        let bank = Self {
            sigma1,
            factor,
            count,
        };
        bank.validate()?;
        Ok(bank)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma1 >= MIN_SIGMA) || !self.sigma1.is_finite() {
            return Err(Error::InvalidInput(format!(
                "sigma1 must be >= {MIN_SIGMA}, got {}",
                self.sigma1
            )));
        }
        if !(self.factor > 1.0) || !self.factor.is_finite() {
            return Err(Error::InvalidInput(format!(
                "scale factor must be > 1, got {}",
                self.factor
            )));
        }
        if self.count == 0 {
            return Err(Error::InvalidInput("scale count must be at least 1".into()));
        }
        Ok(())
    }

    pub fn sigmas(&self) -> Vec<f64> {
        (0..self.count)
            .map(|i| self.sigma1 * self.factor.powi(i as i32))
            .collect()
    }
}

/// Which valleys count as lines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    /// Dark lines on a light background; eigenvalues are taken from `-H`.
    #[default]
    Dark,
    /// Bright lines on a dark background; eigenvalues of `H` as is.
    Bright,
}

/// Factor applied to each single-scale response before the maximum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleNorm {
    /// `sigma_i^2` for scale `i`.
    #[default]
    PerScale,
    /// `sigma_1^2` for every scale.
    FirstScale,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFilterConfig {
    pub mu: f64,
    pub bank: ScaleBank,
    pub polarity: Polarity,
    pub norm: ScaleNorm,
}

impl Default for LineFilterConfig {
    fn default() -> Self {
        Self {
            mu: 1.0,
            bank: ScaleBank::default(),
            polarity: Polarity::Dark,
            norm: ScaleNorm::PerScale,
        }
    }
}

/// Multiscale line response and the 0-based index of the winning scale.
#[derive(Debug, Clone, PartialEq)]
pub struct LineResponse {
    pub response: RealImage,
    pub scale_index: Vec<u8>,
}

impl LineResponse {
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.response.get(x, y)
    }
}

fn derivative_kernels(sigma: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let radius = (4.0 * sigma).ceil() as usize;
    let smooth = gaussian_1d(sigma, radius);
    let r = radius as isize;
    let s2 = sigma * sigma;

    // First derivative, scaled so a unit ramp gives exactly 1.
    let mut d1: Vec<f64> = (-r..=r)
        .map(|k| {
            let x = k as f64;
            x * (-x * x / (2.0 * s2)).exp()
        })
        .collect();
    let m1: f64 = (-r..=r).zip(&d1).map(|(k, w)| k as f64 * w).sum();
    d1.iter_mut().for_each(|w| *w /= m1);

    // Second derivative: zero mean, and x^2 maps to exactly 2.
    let mut d2: Vec<f64> = (-r..=r)
        .map(|k| {
            let x = k as f64;
            (x * x / (s2 * s2) - 1.0 / s2) * (-x * x / (2.0 * s2)).exp()
        })
        .collect();
    let mean = d2.iter().sum::<f64>() / d2.len() as f64;
    d2.iter_mut().for_each(|w| *w -= mean);
    let m2: f64 = (-r..=r).zip(&d2).map(|(k, w)| (k * k) as f64 * w).sum();
    d2.iter_mut().for_each(|w| *w *= 2.0 / m2);

    (smooth, d1, d2)
}

/// Gaussian-derivative Hessian at scale `sigma` (kernel radius `ceil(4 sigma)`).
pub fn hessian(img: &GrayImage, sigma: f64) -> Result<HessianField> {
    hessian_real(&img.to_real(), sigma)
}

pub fn hessian_real(img: &RealImage, sigma: f64) -> Result<HessianField> {
    if !(sigma >= MIN_SIGMA) {
        return Err(Error::InvalidInput(format!(
            "sigma must be >= {MIN_SIGMA}, got {sigma}"
        )));
    }
    let (g, d1, d2) = derivative_kernels(sigma);
    let xx = convolve_separable(img, &d2, &g)?;
    let yy = convolve_separable(img, &g, &d2)?;
    let xy = convolve_separable(img, &d1, &d1)?;
    let (width, height) = img.dims();
    Ok(HessianField {
        width,
        height,
        sigma,
        xx: xx.data().to_vec(),
        xy: xy.data().to_vec(),
        yy: yy.data().to_vec(),
    })
}

/// Eigenvalues of `[[a, b], [b, c]]`, larger first.
pub fn eigs2(a: f64, b: f64, c: f64) -> (f64, f64) {
    let mean = 0.5 * (a + c);
    let radius = (0.5 * (a - c)).hypot(b);
    (mean + radius, mean - radius)
}

/// Line similarity of an ordered eigenvalue pair (`l1 >= l2`), `0 < mu <= 1`.
pub fn line_similarity(l1: f64, l2: f64, mu: f64) -> f64 {
    if l2 <= l1 && l1 <= 0.0 {
        l2.abs() + l1
    } else if l2 < 0.0 && 0.0 < l1 && l1 < l2.abs() / mu {
        l2.abs() - mu * l1
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Structure {
    Line,
    Blob,
    Sheet,
    None,
}

/// Shape class of an eigenvalue pair; `|v| < eps` counts as zero and two
/// magnitudes within `eps` of each other count as equal.
pub fn classify_structure(l1: f64, l2: f64, eps: f64) -> Structure {
    let (big, small) = if l1.abs() >= l2.abs() {
        (l1.abs(), l2.abs())
    } else {
        (l2.abs(), l1.abs())
    };
    if big < eps {
        Structure::Sheet
    } else if small < eps {
        Structure::Line
    } else if big - small <= eps {
        Structure::Blob
    } else {
        Structure::None
    }
}

/// Classifies every pixel of a Hessian field. Without an explicit `eps`
/// the tolerance is 5% of the largest eigenvalue magnitude in the field.
pub fn classify_field(field: &HessianField, eps: Option<f64>) -> Vec<Structure> {
    let eig = field.eigenvalues();
    let eps = eps.unwrap_or_else(|| {
        let peak = eig
            .iter()
            .map(|(a, b)| a.abs().max(b.abs()))
            .fold(0.0, f64::max);
        (0.05 * peak).max(f64::MIN_POSITIVE)
    });
    eig.iter()
        .map(|&(a, b)| classify_structure(a, b, eps))
        .collect()
}

/// Single-scale similarity image (no scale normalization).
pub fn single_scale_response(field: &HessianField, mu: f64, polarity: Polarity) -> Vec<f64> {
    let sign = match polarity {
        Polarity::Dark => -1.0,
        Polarity::Bright => 1.0,
    };
    (0..field.xx.len())
        .map(|i| {
            let (l1, l2) = eigs2(sign * field.xx[i], sign * field.xy[i], sign * field.yy[i]);
            line_similarity(l1, l2, mu)
        })
        .collect()
}

/// Scale-normalized maximum of the line similarity over a scale bank, for
/// dark lines.
pub fn multiscale_response(img: &GrayImage, bank: &ScaleBank, mu: f64) -> Result<LineResponse> {
    multiscale_response_with(
        img,
        &LineFilterConfig {
            mu,
            bank: *bank,
            ..LineFilterConfig::default()
        },
    )
}

pub fn multiscale_response_with(img: &GrayImage, cfg: &LineFilterConfig) -> Result<LineResponse> {
    cfg.bank.validate()?;
    if !(cfg.mu > 0.0 && cfg.mu <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "mu must lie in (0, 1], got {}",
            cfg.mu
        )));
    }
    let real = img.to_real();
    let (w, h) = img.dims();
    let mut best = vec![0.0f64; w * h];
    let mut index = vec![0u8; w * h];
    for (i, sigma) in cfg.bank.sigmas().into_iter().enumerate() {
        let field = hessian_real(&real, sigma)?;
        let weight = match cfg.norm {
            ScaleNorm::PerScale => sigma * sigma,
            ScaleNorm::FirstScale => cfg.bank.sigma1 * cfg.bank.sigma1,
        };
        for (p, v) in single_scale_response(&field, cfg.mu, cfg.polarity)
            .into_iter()
            .enumerate()
        {
            let v = weight * v;
            if v > best[p] {
                best[p] = v;
                index[p] = i as u8;
            }
        }
    }
    Ok(LineResponse {
        response: RealImage::new(w, h, best)?,
        scale_index: index,
    })
}
