use super::{clamp_index, BinaryMask, GrayImage, Kernel2, RealImage};
use crate::error::{Error, Result};

fn check_radius(radius: usize, width: usize, height: usize) -> Result<()> {
    if radius >= width.min(height) {
        return Err(Error::KernelTooLarge {
            radius,
            width,
            height,
        });
    }
    Ok(())
}

/// Correlates `img` with `k` using replicated borders:
/// `out(x, y) = sum k(dx, dy) * img(x + dx, y + dy)`.
pub fn convolve(img: &GrayImage, k: &Kernel2) -> Result<RealImage> {
    convolve_real(&img.to_real(), k)
}

/// [`convolve`] for real-valued input.
pub fn convolve_real(img: &RealImage, k: &Kernel2) -> Result<RealImage> {
    let (w, h) = img.dims();
    check_radius(k.radius(), w, h)?;
    let r = k.radius() as isize;
    let mut out = RealImage::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for dy in -r..=r {
                let sy = clamp_index(y as isize + dy, h);
                for dx in -r..=r {
                    let sx = clamp_index(x as isize + dx, w);
                    acc += k.at(dx, dy) * img.get(sx, sy);
                }
            }
            out.set(x, y, acc);
        }
    }
    Ok(out)
}

/// Separable correlation: `kx` along rows, then `ky` along columns.
/// Both kernels must have odd length; borders are replicated.
pub fn convolve_separable(img: &RealImage, kx: &[f64], ky: &[f64]) -> Result<RealImage> {
    let (w, h) = img.dims();
    let rx = kx.len() / 2;
    let ry = ky.len() / 2;
    check_radius(rx.max(ry), w, h)?;

    let mut tmp = RealImage::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let acc: f64 = kx
                .iter()
                .enumerate()
                .map(|(i, &c)| {
                    c * img.get(clamp_index(x as isize + i as isize - rx as isize, w), y)
                })
                .sum();
            tmp.set(x, y, acc);
        }
    }
    let mut out = RealImage::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let acc: f64 = ky
                .iter()
                .enumerate()
                .map(|(i, &c)| {
                    c * tmp.get(x, clamp_index(y as isize + i as isize - ry as isize, h))
                })
                .sum();
            out.set(x, y, acc);
        }
    }
    Ok(out)
}

/// Replaces every pixel inside `region` by the median of its
/// `(2r+1)^2` neighborhood (borders replicated). Pixels outside the region
/// are copied unchanged.
pub fn median_filter(img: &GrayImage, region: &BinaryMask, radius: usize) -> Result<GrayImage> {
    region.check_dims(img.dims())?;
    let (w, h) = img.dims();
    let r = radius as isize;
    let mut out = img.clone();
    let mut window = Vec::with_capacity((2 * radius + 1).pow(2));
    for y in 0..h {
        for x in 0..w {
            if !region.get(x, y) {
                continue;
            }
            window.clear();
            for dy in -r..=r {
                let sy = clamp_index(y as isize + dy, h);
                for dx in -r..=r {
                    window.push(img.get(clamp_index(x as isize + dx, w), sy));
                }
            }
            let mid = window.len() / 2;
            let (_, median, _) = window.select_nth_unstable(mid);
            out.set(x, y, *median);
        }
    }
    Ok(out)
}
