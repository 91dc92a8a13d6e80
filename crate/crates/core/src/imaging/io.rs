use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use image::codecs::png::PngEncoder;
use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ColorType, DynamicImage, ExtendedColorType, ImageEncoder, ImageReader};

use super::{BinaryMask, GrayImage, RealImage};
use crate::error::{Error, Result};

fn decode_error(path: &Path, e: impl ToString) -> Error {
    Error::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Reads an 8-bit PGM (P2/P5) or PNG. Color inputs are reduced to the
/// unweighted mean of their RGB channels; alpha is ignored.
pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    let img = reader.decode().map_err(|e| decode_error(path, e))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = match img.color() {
        ColorType::L8 => img.into_luma8().into_raw(),
        ColorType::La8 => img.to_luma8().into_raw(),
        ColorType::Rgb8 | ColorType::Rgba8 => {
            let rgb = match img {
                DynamicImage::ImageRgb8(b) => b,
                other => other.into_rgb8(),
            };
            rgb.pixels()
                .map(|p| {
                    let s = u16::from(p[0]) + u16::from(p[1]) + u16::from(p[2]);
                    ((f64::from(s) / 3.0).round()) as u8
                })
                .collect()
        }
        other => {
            return Err(Error::UnsupportedFormat(format!(
                "{}: {other:?} (only 8-bit samples are supported)",
                path.display()
            )))
        }
    };
    GrayImage::new(w, h, data)
}

/// Writes `.pgm` as binary P5 and `.png` as 8-bit gray PNG.
pub fn save_image(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let out = BufWriter::new(file);
    let (w, h) = (img.width() as u32, img.height() as u32);
    let res = match ext.as_str() {
        "pgm" | "pnm" => PnmEncoder::new(out)
            .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
            .write_image(img.data(), w, h, ExtendedColorType::L8),
        "png" => PngEncoder::new(out).write_image(img.data(), w, h, ExtendedColorType::L8),
        _ => {
            return Err(Error::UnsupportedFormat(format!(
                "{}: expected .pgm or .png",
                path.display()
            )))
        }
    };
    res.map_err(|e| decode_error(path, e))
}

/// Masks are stored as 0/255 gray images.
pub fn save_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    let (w, h) = mask.dims();
    let data = mask
        .bits()
        .iter()
        .map(|&b| if b { 255 } else { 0 })
        .collect();
    save_image(&GrayImage::new(w, h, data)?, path)
}

/// Any nonzero sample is foreground.
pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let img = load_image(path)?;
    let (w, h) = img.dims();
    BinaryMask::new(w, h, img.data().iter().map(|&v| v != 0).collect())
}

/// Linearly rescales `[0, max]` to `[0, 255]` for inspection.
pub fn save_real_image(img: &RealImage, path: impl AsRef<Path>) -> Result<()> {
    let max = img.max();
    let scale = if max > 0.0 { 255.0 / max } else { 0.0 };
    let (w, h) = img.dims();
    let scaled = RealImage::new(
        w,
        h,
        img.data().iter().map(|v| v.max(0.0) * scale).collect(),
    )?;
    save_image(&scaled.to_gray(), path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reads_ascii_pgm() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.pgm");
        std::fs::write(&p, "P2\n# two by two\n2 2\n255\n0 85\n170 255\n").unwrap();
        let img = load_image(&p).unwrap();
        assert_eq!(img.dims(), (2, 2));
        assert_eq!(img.data(), &[0, 85, 170, 255]);
    }

    #[test]
    fn reads_binary_pgm() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.pgm");
        let mut bytes = b"P5\n3 1\n255\n".to_vec();
        bytes.extend_from_slice(&[9, 200, 31]);
        std::fs::write(&p, bytes).unwrap();
        assert_eq!(load_image(&p).unwrap().data(), &[9, 200, 31]);
    }

    #[test]
    fn one_pixel_png() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("one.png");
        save_image(&GrayImage::filled(1, 1, 7), &p).unwrap();
        let back = load_image(&p).unwrap();
        assert_eq!(back.data(), &[7]);
    }

    #[test]
    fn color_png_is_averaged() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rgb.png");
        let buf = image::RgbImage::from_raw(2, 1, vec![30, 60, 90, 255, 0, 1]).unwrap();
        buf.save(&p).unwrap();
        assert_eq!(load_image(&p).unwrap().data(), &[60, 85]);
    }

    #[test]
    fn sixteen_bit_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("deep.png");
        let buf: image::ImageBuffer<image::Luma<u16>, Vec<u16>> =
            image::ImageBuffer::from_raw(1, 1, vec![1000]).unwrap();
        buf.save(&p).unwrap();
        assert!(matches!(load_image(&p), Err(Error::UnsupportedFormat(_))));
    }

    #[test]
    fn missing_file_is_io_error() {
        let e = load_image("/nonexistent/x.pgm").unwrap_err();
        assert_eq!(e.kind(), crate::ErrorKind::Io);
    }

    #[test]
    fn mask_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.pgm");
        let m = BinaryMask::from_fn(5, 3, |x, y| (x + y) % 2 == 0);
        save_mask(&m, &p).unwrap();
        assert_eq!(load_mask(&p).unwrap(), m);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn pgm_and_png_round_trip(w in 1usize..9, h in 1usize..9, seed in any::<u64>()) {
            let img = GrayImage::from_fn(w, h, |x, y| {
                (seed.wrapping_mul(6364136223846793005).wrapping_add(((y * w + x) as u64).wrapping_mul(1442695040888963407)) >> 56) as u8
            });
            let dir = tempfile::tempdir().unwrap();
            for name in ["r.pgm", "r.png"] {
                let p = dir.path().join(name);
                save_image(&img, &p).unwrap();
                prop_assert_eq!(&load_image(&p).unwrap(), &img);
            }
        }
    }
}
