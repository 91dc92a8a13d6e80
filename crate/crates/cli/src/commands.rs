use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use steel_inspect::config::InspectConfig;
use steel_inspect::imaging::{load_image, load_mask, save_image, save_mask};
use steel_inspect::manifest::RunManifest;
use steel_inspect::metrics::{confusion, scores, ConfusionCounts, Lighting, MethodReport, Scores};
use steel_inspect::peaks::{
    compute_histogram, detect_dominant_peaks, peaks_to_global_threshold, smooth, Histogram,
};
use steel_inspect::registration::{
    read_cloud, read_frame_list, register_sequence, write_cloud, RigidTransform3, StopReason,
};
use steel_inspect::segmentation::{segment_crack, SegmentReport, SegmentStatus};
use steel_inspect::sim::{run_sim, Policy, RobotSpec, SimWorld};
use steel_inspect::stitching::{stitch_sequence, CapturePose};
use steel_inspect::survey::{load_captures, run_survey};
use steel_inspect::{Error, Result};

use crate::{
    DetectArgs, EvalArgs, PeaksArgs, RegisterArgs, SimulateArgs, StitchArgs, SurveyArgs, VerifyArgs,
};

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    let dir = parent_dir(path);
    std::fs::create_dir_all(&dir).map_err(|e| Error::Io {
        path: dir,
        source: e,
    })
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    ensure_parent(path)?;
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Debug, Serialize)]
struct DetectReport<'a> {
    input: &'a Path,
    width: usize,
    height: usize,
    mask_pixels: usize,
    #[serde(flatten)]
    segment: &'a SegmentReport,
}

struct Detected {
    mask: PathBuf,
    report: PathBuf,
    status: SegmentStatus,
}

fn detect_one(
    input: &Path,
    mask_path: &Path,
    report_path: &Path,
    cfg: &InspectConfig,
) -> Result<Detected> {
    let img = load_image(input)?;
    let seg = segment_crack(&img, &cfg.segment())?;
    ensure_parent(mask_path)?;
    save_mask(&seg.mask, mask_path)?;
    let report = DetectReport {
        input,
        width: img.width(),
        height: img.height(),
        mask_pixels: seg.mask.count(),
        segment: &seg.report,
    };
    write_json(report_path, &report)?;
    Ok(Detected {
        mask: mask_path.to_path_buf(),
        report: report_path.to_path_buf(),
        status: seg.report.status,
    })
}

pub fn detect(a: &DetectArgs, cfg: &InspectConfig) -> Result<()> {
    let jobs: Vec<(PathBuf, PathBuf, PathBuf)> = if let [single] = a.input.as_slice() {
        let report = a
            .report
            .clone()
            .unwrap_or_else(|| a.out.with_extension("json"));
        vec![(single.clone(), a.out.clone(), report)]
    } else {
        if a.report.is_some() {
            return Err(Error::InvalidInput(
                "--report applies to a single input; reports go into --out".into(),
            ));
        }
        a.input
            .iter()
            .map(|p| {
                let stem = p
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                (
                    p.clone(),
                    a.out.join(format!("{stem}.mask.pgm")),
                    a.out.join(format!("{stem}.json")),
                )
            })
            .collect()
    };
    let manifest_dir = if a.input.len() == 1 {
        parent_dir(&a.out)
    } else {
        a.out.clone()
    };
    let results: Vec<Result<Detected>> = jobs
        .par_iter()
        .map(|(input, mask, report)| detect_one(input, mask, report, cfg))
        .collect();

    let mut manifest = RunManifest::new("detect", cfg);
    let mut empty = Vec::new();
    for ((input, _, _), r) in jobs.iter().zip(results) {
        let d = r?;
        manifest.add_input(input)?;
        manifest.add_output(&d.mask)?;
        manifest.add_output(&d.report)?;
        if d.status == SegmentStatus::NoStructure {
            empty.push(input.display().to_string());
        }
    }
    manifest.counter("images", jobs.len());
    manifest.counter("no_structure", &empty);
    manifest.write(&manifest_dir)?;
    if empty.is_empty() {
        Ok(())
    } else {
        eprintln!("{}: no structure in histogram", empty.join(", "));
        Err(Error::NoStructure)
    }
}

pub fn stitch(a: &StitchArgs, cfg: &InspectConfig) -> Result<()> {
    let records = load_captures(&a.list)?;
    let images = records
        .par_iter()
        .map(|r| load_image(&r.image_path))
        .collect::<Result<Vec<_>>>()?;
    let poses: Vec<CapturePose> = records.iter().map(|r| r.pose(cfg.mm_per_px)).collect();
    let mosaic = stitch_sequence(&images, &poses, &cfg.stitch())?;
    ensure_parent(&a.out)?;
    save_image(&mosaic.canvas, &a.out)?;

    let mut manifest = RunManifest::new("stitch", cfg);
    manifest.add_input(&a.list)?;
    for r in &records {
        manifest.add_input(&r.image_path)?;
    }
    manifest.add_output(&a.out)?;
    manifest.counter("tiles", images.len());
    manifest.counter("width", mosaic.canvas.width());
    manifest.counter("height", mosaic.canvas.height());
    manifest.counter("origin_mm", mosaic.origin_mm);
    manifest.counter("fallbacks", &mosaic.fallbacks);
    manifest.counter("filled", mosaic.filled);
    manifest.write(parent_dir(&a.out))?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct FramePose<'a> {
    frame: usize,
    path: &'a Path,
    /// Frame-to-first-frame transform.
    transform: &'a RigidTransform3,
    rmse: Option<f64>,
    iterations: Option<usize>,
    stop_reason: Option<StopReason>,
    used_odometry: Option<bool>,
}

pub fn register(a: &RegisterArgs, cfg: &InspectConfig) -> Result<()> {
    let frames = read_frame_list(&a.frames)?;
    let clouds = frames
        .par_iter()
        .map(|f| {
            let c = read_cloud(&f.path)?;
            Ok(match f.pose {
                Some(p) => c.with_pose(p),
                None => c,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let reg = register_sequence(&clouds, &cfg.icp())?;
    ensure_parent(&a.out)?;
    write_cloud(&reg.merged, &a.out)?;

    let mut manifest = RunManifest::new("register", cfg);
    manifest.add_input(&a.frames)?;
    for f in &frames {
        manifest.add_input(&f.path)?;
    }
    manifest.add_output(&a.out)?;
    if let Some(poses_path) = &a.poses {
        let poses: Vec<FramePose> = frames
            .iter()
            .zip(&reg.transforms)
            .enumerate()
            .map(|(i, (f, t))| {
                let r = i.checked_sub(1).map(|k| &reg.results[k]);
                FramePose {
                    frame: i,
                    path: &f.path,
                    transform: t,
                    rmse: r.map(|r| r.rmse),
                    iterations: r.map(|r| r.iterations),
                    stop_reason: r.map(|r| r.stop_reason),
                    used_odometry: r.map(|r| r.used_odometry),
                }
            })
            .collect();
        write_json(poses_path, &poses)?;
        manifest.add_output(poses_path)?;
    }
    manifest.counter("frames", frames.len());
    manifest.counter("points", reg.merged.len());
    manifest.counter(
        "stop_reasons",
        reg.results
            .iter()
            .map(|r| r.stop_reason)
            .collect::<Vec<_>>(),
    );
    manifest.write(parent_dir(&a.out))?;
    Ok(())
}

pub fn simulate(a: &SimulateArgs, cfg: &InspectConfig) -> Result<()> {
    let world: SimWorld = read_json(&a.world)?;
    let spec: RobotSpec = match &a.spec {
        Some(p) => read_json(p)?,
        None => cfg.robot(),
    };
    let traj = run_sim(&world, &spec, Policy::Forward, a.steps, &cfg.sim())?;
    write_json(&a.out, &traj)?;

    let mut manifest = RunManifest::new("simulate", cfg);
    manifest.add_input(&a.world)?;
    if let Some(p) = &a.spec {
        manifest.add_input(p)?;
    }
    manifest.add_output(&a.out)?;
    manifest.counter("steps", traj.steps.len());
    manifest.counter("captures", traj.captures.len());
    manifest.counter("mode_changes", traj.mode_changes.len());
    manifest.counter("violations", traj.violations);
    manifest.write(parent_dir(&a.out))?;
    if traj.violations > 0 {
        eprintln!("warning: {} steps left the steel", traj.violations);
    }
    Ok(())
}

const MASK_EXTENSIONS: [&str; 3] = ["pgm", "png", "pnm"];

/// Mask files of `dir` keyed by file stem.
fn masks_by_stem(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let mut out = BTreeMap::new();
    for entry in entries {
        let path = entry
            .map_err(|e| Error::Io {
                path: dir.to_path_buf(),
                source: e,
            })?
            .path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        if !ext.is_some_and(|e| MASK_EXTENSIONS.contains(&e.as_str())) {
            continue;
        }
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        if let Some(prev) = out.insert(stem.clone(), path.clone()) {
            return Err(Error::InvalidInput(format!(
                "two masks share the stem {stem:?}: {} and {}",
                prev.display(),
                path.display()
            )));
        }
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
struct PairScore {
    stem: String,
    counts: ConfusionCounts,
    scores: Scores,
}

#[derive(Debug, Serialize)]
struct EvalReport {
    pairs: Vec<PairScore>,
    summary: MethodReport,
}

pub fn eval(a: &EvalArgs, cfg: &InspectConfig) -> Result<()> {
    let lighting: Lighting = a.lighting.parse()?;
    let pred = masks_by_stem(&a.pred)?;
    let gt = masks_by_stem(&a.gt)?;
    let unpaired: Vec<&String> = pred.keys().filter(|k| !gt.contains_key(*k)).collect();
    if !unpaired.is_empty() {
        return Err(Error::InvalidInput(format!(
            "predictions without ground truth: {unpaired:?}"
        )));
    }
    if pred.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no masks in {}",
            a.pred.display()
        )));
    }
    let pairs = pred
        .par_iter()
        .map(|(stem, p)| {
            let counts = confusion(&load_mask(p)?, &load_mask(&gt[stem])?)?;
            Ok(PairScore {
                stem: stem.clone(),
                counts,
                scores: scores(&counts),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let pooled = pairs
        .iter()
        .fold(ConfusionCounts::default(), |acc, p| acc.add(&p.counts));
    let summary = MethodReport::from_counts(a.method.clone(), lighting, pooled);
    print!(
        "{}",
        steel_inspect::metrics::render_table(std::slice::from_ref(&summary))
    );
    write_json(&a.out, &EvalReport { pairs, summary })?;

    let mut manifest = RunManifest::new("eval", cfg);
    for (stem, p) in &pred {
        manifest.add_input(p)?;
        manifest.add_input(&gt[stem])?;
    }
    manifest.add_output(&a.out)?;
    manifest.counter("pairs", pred.len());
    manifest.write(parent_dir(&a.out))?;
    Ok(())
}

fn read_counts(path: &Path) -> Result<Histogram> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Histogram::parse_counts(&text)
}

#[derive(Debug, Serialize)]
struct PeaksRecord {
    initial: Vec<usize>,
    dominant: Vec<usize>,
    observing: Vec<f64>,
    threshold: Option<usize>,
}

pub fn peaks(a: &PeaksArgs, cfg: &InspectConfig) -> Result<()> {
    let ext = a
        .input
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    let hist = if ext.is_some_and(|e| MASK_EXTENSIONS.contains(&e.as_str())) {
        compute_histogram(&load_image(&a.input)?)
    } else {
        read_counts(&a.input)?
    };
    let smoothed = smooth(&hist);
    let set = detect_dominant_peaks(&smoothed);
    let threshold = match peaks_to_global_threshold(&smoothed, &set) {
        Ok(t) => Some(t),
        Err(Error::NoStructure) => None,
        Err(e) => return Err(e),
    };
    let record = PeaksRecord {
        initial: set.initial,
        dominant: set.dominant,
        observing: set.observing,
        threshold,
    };
    match &a.out {
        Some(out) => {
            write_json(out, &record)?;
            let mut manifest = RunManifest::new("peaks", cfg);
            manifest.add_input(&a.input)?;
            manifest.add_output(out)?;
            manifest.counter("dominant", record.dominant.len());
            manifest.write(parent_dir(out))?;
        }
        None => println!("{}", serde_json::to_string(&record)?),
    }
    if threshold.is_none() {
        return Err(Error::NoStructure);
    }
    Ok(())
}

pub fn survey(a: &SurveyArgs, cfg: &InspectConfig) -> Result<()> {
    let (report, _) = run_survey(&a.list, cfg, &a.out, a.gt.as_deref())?;
    if let Some(b) = report.crack_box_mm {
        println!(
            "crack box (mm): x {:.1}..{:.1}, y {:.1}..{:.1}",
            b.min_mm.0, b.max_mm.0, b.min_mm.1, b.max_mm.1
        );
    }
    if report.segment.status == SegmentStatus::NoStructure {
        return Err(Error::NoStructure);
    }
    Ok(())
}

pub fn verify_manifest(a: &VerifyArgs) -> Result<()> {
    let m = RunManifest::read(&a.manifest)?;
    let changed = m.verify();
    if changed.is_empty() {
        println!("ok: {} files verified", m.inputs.len() + m.outputs.len());
        Ok(())
    } else {
        let list: Vec<String> = changed.iter().map(|p| p.display().to_string()).collect();
        Err(Error::InvalidInput(format!(
            "files changed since the run: {}",
            list.join(", ")
        )))
    }
}
