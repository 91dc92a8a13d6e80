//! End-to-end survey: stitch the captures, detect cracks on the mosaic,
//! locate them in world millimetres and optionally score them.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::InspectConfig;
use crate::error::{Error, Result};
use crate::imaging::{load_image, load_mask, save_image, save_mask, BinaryMask, GrayImage};
use crate::manifest::RunManifest;
use crate::metrics::{confusion, scores, ConfusionCounts, Scores};
use crate::segmentation::{segment_crack, SegmentReport, Segmentation};
use crate::stitching::{image_to_world, stitch_sequence, CapturePose, CaptureRecord, Mosaic};

fn stage(name: &'static str) -> impl FnOnce(Error) -> Error {
    move |e| Error::Stage {
        stage: name,
        source: Box::new(e),
    }
}

/// Inclusive pixel bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl PixelBox {
    pub fn of_mask(mask: &BinaryMask) -> Option<PixelBox> {
        let mut b: Option<PixelBox> = None;
        for (x, y) in mask.pixels() {
            b = Some(match b {
                None => PixelBox {
                    x0: x,
                    y0: y,
                    x1: x,
                    y1: y,
                },
                Some(b) => PixelBox {
                    x0: b.x0.min(x),
                    y0: b.y0.min(y),
                    x1: b.x1.max(x),
                    y1: b.y1.max(y),
                },
            });
        }
        b
    }
}

/// World-frame box in millimetres, spanning the centres of the extreme pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldBox {
    pub min_mm: (f64, f64),
    pub max_mm: (f64, f64),
}

/// World position of a mosaic pixel. The canvas shares the frame of the
/// first tile, so the first capture's pose carries the whole mosaic.
pub fn canvas_to_world(mosaic: &Mosaic, first: &CapturePose, pixel: (f64, f64)) -> (f64, f64) {
    let (ox, oy) = mosaic.placements[0];
    image_to_world((pixel.0 - ox as f64, pixel.1 - oy as f64), first)
}

pub fn world_box(mosaic: &Mosaic, first: &CapturePose, b: &PixelBox) -> WorldBox {
    let corners = [(b.x0, b.y0), (b.x1, b.y0), (b.x0, b.y1), (b.x1, b.y1)]
        .map(|(x, y)| canvas_to_world(mosaic, first, (x as f64, y as f64)));
    let fold = |f: fn(f64, f64) -> f64, init: f64, pick: fn(&(f64, f64)) -> f64| {
        corners.iter().map(pick).fold(init, f)
    };
    WorldBox {
        min_mm: (
            fold(f64::min, f64::INFINITY, |c| c.0),
            fold(f64::min, f64::INFINITY, |c| c.1),
        ),
        max_mm: (
            fold(f64::max, f64::NEG_INFINITY, |c| c.0),
            fold(f64::max, f64::NEG_INFINITY, |c| c.1),
        ),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyEval {
    pub counts: ConfusionCounts,
    pub scores: Scores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyReport {
    pub tiles: usize,
    pub canvas_width: usize,
    pub canvas_height: usize,
    pub origin_mm: (f64, f64),
    pub fallbacks: Vec<usize>,
    pub filled: usize,
    pub segment: SegmentReport,
    pub crack_pixels: usize,
    pub crack_box_px: Option<PixelBox>,
    pub crack_box_mm: Option<WorldBox>,
    pub eval: Option<SurveyEval>,
}

#[derive(Debug, Clone)]
pub struct Survey {
    pub mosaic: Mosaic,
    pub segmentation: Segmentation,
    pub report: SurveyReport,
}

/// Uncovered canvas pixels take the median covered value so that they
/// neither look like cracks nor skew the histogram.
fn detection_canvas(mosaic: &Mosaic) -> GrayImage {
    let c = &mosaic.canvas;
    let mut hist = [0usize; 256];
    let mut n = 0;
    for (i, &v) in c.data().iter().enumerate() {
        if mosaic.coverage[i] > 0 {
            hist[v as usize] += 1;
            n += 1;
        }
    }
    let mut acc = 0;
    let median = hist
        .iter()
        .position(|&h| {
            acc += h;
            2 * acc >= n
        })
        .unwrap_or(0) as u8;
    GrayImage::from_fn(c.width(), c.height(), |x, y| {
        if mosaic.covered(x, y) {
            c.get(x, y)
        } else {
            median
        }
    })
}

/// Stitch, detect, locate and (with a mosaic-sized ground truth) score.
pub fn full_survey(
    images: &[GrayImage],
    poses: &[CapturePose],
    cfg: &InspectConfig,
    gt: Option<&BinaryMask>,
) -> Result<Survey> {
    cfg.validate().map_err(|e| stage("config")(e.into()))?;
    let mosaic = stitch_sequence(images, poses, &cfg.stitch()).map_err(stage("stitch"))?;
    let mut seg =
        segment_crack(&detection_canvas(&mosaic), &cfg.segment()).map_err(stage("detect"))?;
    seg.mask = BinaryMask::from_fn(seg.mask.width(), seg.mask.height(), |x, y| {
        seg.mask.get(x, y) && mosaic.covered(x, y)
    });
    let crack_box_px = PixelBox::of_mask(&seg.mask);
    let crack_box_mm = crack_box_px.map(|b| world_box(&mosaic, &poses[0], &b));
    let eval = gt
        .map(|gt| {
            let counts = confusion(&seg.mask, gt)?;
            Ok(SurveyEval {
                counts,
                scores: scores(&counts),
            })
        })
        .transpose()
        .map_err(stage("eval"))?;
    let report = SurveyReport {
        tiles: images.len(),
        canvas_width: mosaic.canvas.width(),
        canvas_height: mosaic.canvas.height(),
        origin_mm: mosaic.origin_mm,
        fallbacks: mosaic.fallbacks.clone(),
        filled: mosaic.filled,
        segment: seg.report.clone(),
        crack_pixels: seg.mask.count(),
        crack_box_px,
        crack_box_mm,
        eval,
    };
    Ok(Survey {
        mosaic,
        segmentation: seg,
        report,
    })
}

/// Reads a JSON list of capture records. Relative image paths resolve
/// against the list's directory.
pub fn load_captures(path: impl AsRef<Path>) -> Result<Vec<CaptureRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut records: Vec<CaptureRecord> = serde_json::from_str(&text)?;
    let base = path.parent().unwrap_or(Path::new(""));
    for r in &mut records {
        if r.image_path.is_relative() {
            r.image_path = base.join(&r.image_path);
        }
    }
    Ok(records)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurveyOutputs {
    pub mosaic: PathBuf,
    pub mask: PathBuf,
    pub report: PathBuf,
    pub manifest: PathBuf,
}

/// File-level survey: captures list in, `mosaic.png`, `mask.png`,
/// `report.json` and a manifest out.
pub fn run_survey(
    captures: impl AsRef<Path>,
    cfg: &InspectConfig,
    outdir: impl AsRef<Path>,
    gt: Option<&Path>,
) -> Result<(SurveyReport, SurveyOutputs)> {
    let captures = captures.as_ref();
    let outdir = outdir.as_ref();
    let mut manifest = RunManifest::new("survey", cfg);
    let records = load_captures(captures).map_err(stage("load"))?;
    manifest.add_input(captures)?;
    let mut images = Vec::with_capacity(records.len());
    for r in &records {
        images.push(load_image(&r.image_path).map_err(stage("load"))?);
        manifest.add_input(&r.image_path)?;
    }
    let poses: Vec<CapturePose> = records.iter().map(|r| r.pose(cfg.mm_per_px)).collect();
    let gt = match gt {
        Some(p) => {
            manifest.add_input(p)?;
            Some(load_mask(p).map_err(stage("load"))?)
        }
        None => None,
    };
    let survey = full_survey(&images, &poses, cfg, gt.as_ref())?;

    std::fs::create_dir_all(outdir).map_err(|e| Error::io(outdir, e))?;
    let outputs = SurveyOutputs {
        mosaic: outdir.join("mosaic.png"),
        mask: outdir.join("mask.png"),
        report: outdir.join("report.json"),
        manifest: outdir.join(crate::manifest::MANIFEST_FILE),
    };
    save_image(&survey.mosaic.canvas, &outputs.mosaic)?;
    save_mask(&survey.segmentation.mask, &outputs.mask)?;
    let json = serde_json::to_string_pretty(&survey.report)?;
    std::fs::write(&outputs.report, json).map_err(|e| Error::io(&outputs.report, e))?;
    for p in [&outputs.mosaic, &outputs.mask, &outputs.report] {
        manifest.add_output(p)?;
    }
    manifest.counter("tiles", survey.report.tiles);
    manifest.counter("fallbacks", &survey.report.fallbacks);
    manifest.counter("filled", survey.report.filled);
    manifest.counter("stages", &survey.report.segment.counts);
    manifest.counter("crack_pixels", survey.report.crack_pixels);
    manifest.write(outdir)?;
    Ok((survey.report, outputs))
}
