//! Run configuration: one flat TOML table of `key = value` pairs.
//!
//! Every key is optional; [`InspectConfig::default`] is the single table of
//! defaults. Unknown keys are rejected. Any key can be overridden from the
//! environment as `STEEL_INSPECT_<KEY>` (upper case), e.g.
//! `STEEL_INSPECT_TAU=1.1`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::line_filter::{LineFilterConfig, Polarity, ScaleBank, ScaleNorm};
use crate::registration::IcpParams;
use crate::segmentation::SegmentConfig;
use crate::sim::{ManeuverParams, RobotSpec, SimParams};
use crate::stitching::StitchConfig;

pub const ENV_PREFIX: &str = "STEEL_INSPECT_";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Read { path: String, message: String },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("config key `{field}` = {value} is out of range: requires {bound}")]
    OutOfRange {
        field: &'static str,
        value: String,
        bound: &'static str,
    },
}

impl ConfigError {
    /// Offending key, when the error is about one.
    pub fn field(&self) -> Option<&str> {
        match self {
            ConfigError::UnknownKey(k) => Some(k),
            ConfigError::OutOfRange { field, .. } => Some(field),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InspectConfig {
    /// Line-similarity weight μ, `0 < mu <= 1`.
    pub mu: f64,
    /// Smallest line-filter scale, `>= 0.5` px.
    pub sigma1: f64,
    /// Ratio between consecutive scales, `> 1`.
    pub scale_factor: f64,
    /// Number of scales, 1 to 16.
    pub num_scales: usize,
    /// `dark` or `bright` lines.
    pub polarity: Polarity,
    /// `per_scale` or `first_scale` normalization.
    pub scale_norm: ScaleNorm,
    /// Line-response quantile kept by the gating stage, in `[0, 1]`.
    pub gating_quantile: f64,
    /// Smallest component kept by the cleanup, pixels.
    pub min_area: usize,
    /// Blend threshold τ, `> 1`.
    pub tau: f64,
    /// Template-search radius around the odometry prior, 0 to 512 px.
    pub search_radius: i64,
    /// Required overlap fraction between consecutive captures, `(0, 1]`.
    pub min_overlap: f64,
    /// Camera footprint (mm).
    pub footprint_width_mm: f64,
    pub footprint_height_mm: f64,
    /// Image scale used to turn odometry into pixels.
    pub mm_per_px: f64,
    pub icp_subsample_ratio: f64,
    /// Correspondence gate (m).
    pub icp_max_distance: f64,
    pub icp_max_iterations: usize,
    /// rmse (m) that counts as converged.
    pub icp_rmse_floor: f64,
    /// rmse change (m) that counts as converged.
    pub icp_rmse_delta: f64,
    /// Per-iteration rotation bound (rad), `(0, pi]`.
    pub icp_max_rotation: f64,
    /// Per-iteration translation bound (m).
    pub icp_max_translation: f64,
    pub icp_motion_epsilon: f64,
    /// Robot weight P (kgf).
    pub robot_weight: f64,
    /// Total magnetic force (kgf).
    pub robot_magnetic_force: f64,
    /// Friction μ, `(0, 2]`.
    pub robot_friction: f64,
    /// Centre-of-mass height d (m).
    pub robot_com_height: f64,
    /// Wheelbase L (m).
    pub robot_wheelbase: f64,
    /// IR band half-width ε (m).
    pub ir_epsilon: f64,
    /// Simulation timestep (s), `(0, 1]`.
    pub sim_dt: f64,
    /// Forward travel between captures (m).
    pub capture_interval: f64,
}

impl Default for InspectConfig {
    fn default() -> Self {
        let line = LineFilterConfig::default();
        let stitch = StitchConfig::default();
        let icp = IcpParams::default();
        let robot = RobotSpec::default();
        let sim = SimParams::default();
        let seg = SegmentConfig::default();
        Self {
            mu: line.mu,
            sigma1: line.bank.sigma1,
            scale_factor: line.bank.factor,
            num_scales: line.bank.count,
            polarity: line.polarity,
            scale_norm: line.norm,
            gating_quantile: seg.gating_quantile,
            min_area: seg.min_area,
            tau: stitch.tau,
            search_radius: stitch.search_radius,
            min_overlap: stitch.min_overlap,
            footprint_width_mm: stitch.footprint.width_mm,
            footprint_height_mm: stitch.footprint.height_mm,
            mm_per_px: 1.0,
            icp_subsample_ratio: icp.subsample_ratio,
            icp_max_distance: icp.max_correspondence_distance,
            icp_max_iterations: icp.max_iterations,
            icp_rmse_floor: icp.rmse_floor,
            icp_rmse_delta: icp.rmse_delta,
            icp_max_rotation: icp.max_rotation,
            icp_max_translation: icp.max_translation,
            icp_motion_epsilon: icp.motion_epsilon,
            robot_weight: robot.weight,
            robot_magnetic_force: robot.magnetic_force,
            robot_friction: robot.friction,
            robot_com_height: robot.com_height,
            robot_wheelbase: robot.wheelbase,
            ir_epsilon: sim.epsilon,
            sim_dt: sim.dt,
            capture_interval: sim.capture_interval,
        }
    }
}

/// Every accepted key.
pub const KEYS: [&str; 30] = [
    "mu",
    "sigma1",
    "scale_factor",
    "num_scales",
    "polarity",
    "scale_norm",
    "gating_quantile",
    "min_area",
    "tau",
    "search_radius",
    "min_overlap",
    "footprint_width_mm",
    "footprint_height_mm",
    "mm_per_px",
    "icp_subsample_ratio",
    "icp_max_distance",
    "icp_max_iterations",
    "icp_rmse_floor",
    "icp_rmse_delta",
    "icp_max_rotation",
    "icp_max_translation",
    "icp_motion_epsilon",
    "robot_weight",
    "robot_magnetic_force",
    "robot_friction",
    "robot_com_height",
    "robot_wheelbase",
    "ir_epsilon",
    "sim_dt",
    "capture_interval",
];

fn check(
    ok: bool,
    field: &'static str,
    value: impl ToString,
    bound: &'static str,
) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::OutOfRange {
            field,
            value: value.to_string(),
            bound,
        })
    }
}

fn positive(field: &'static str, v: f64) -> Result<(), ConfigError> {
    check(v > 0.0 && v.is_finite(), field, v, "a finite value > 0")
}

impl InspectConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        check(
            self.mu > 0.0 && self.mu <= 1.0,
            "mu",
            self.mu,
            "0 < mu <= 1",
        )?;
        check(
            self.sigma1 >= 0.5 && self.sigma1.is_finite(),
            "sigma1",
            self.sigma1,
            "sigma1 >= 0.5",
        )?;
        check(
            self.scale_factor > 1.0 && self.scale_factor.is_finite(),
            "scale_factor",
            self.scale_factor,
            "scale_factor > 1",
        )?;
        check(
            (1..=16).contains(&self.num_scales),
            "num_scales",
            self.num_scales,
            "1 <= num_scales <= 16",
        )?;
        check(
            (0.0..=1.0).contains(&self.gating_quantile),
            "gating_quantile",
            self.gating_quantile,
            "0 <= gating_quantile <= 1",
        )?;
        check(
            self.tau > 1.0 && self.tau.is_finite(),
            "tau",
            self.tau,
            "tau > 1",
        )?;
        check(
            (0..=512).contains(&self.search_radius),
            "search_radius",
            self.search_radius,
            "0 <= search_radius <= 512",
        )?;
        check(
            self.min_overlap > 0.0 && self.min_overlap <= 1.0,
            "min_overlap",
            self.min_overlap,
            "0 < min_overlap <= 1",
        )?;
        positive("footprint_width_mm", self.footprint_width_mm)?;
        positive("footprint_height_mm", self.footprint_height_mm)?;
        positive("mm_per_px", self.mm_per_px)?;
        check(
            self.icp_subsample_ratio > 0.0 && self.icp_subsample_ratio <= 1.0,
            "icp_subsample_ratio",
            self.icp_subsample_ratio,
            "0 < icp_subsample_ratio <= 1",
        )?;
        positive("icp_max_distance", self.icp_max_distance)?;
        positive("icp_rmse_floor", self.icp_rmse_floor)?;
        positive("icp_rmse_delta", self.icp_rmse_delta)?;
        check(
            self.icp_max_rotation > 0.0 && self.icp_max_rotation <= std::f64::consts::PI,
            "icp_max_rotation",
            self.icp_max_rotation,
            "0 < icp_max_rotation <= pi",
        )?;
        positive("icp_max_translation", self.icp_max_translation)?;
        positive("icp_motion_epsilon", self.icp_motion_epsilon)?;
        positive("robot_weight", self.robot_weight)?;
        positive("robot_magnetic_force", self.robot_magnetic_force)?;
        check(
            self.robot_friction > 0.0 && self.robot_friction <= 2.0,
            "robot_friction",
            self.robot_friction,
            "0 < robot_friction <= 2",
        )?;
        positive("robot_com_height", self.robot_com_height)?;
        positive("robot_wheelbase", self.robot_wheelbase)?;
        positive("ir_epsilon", self.ir_epsilon)?;
        check(
            self.sim_dt > 0.0 && self.sim_dt <= 1.0,
            "sim_dt",
            self.sim_dt,
            "0 < sim_dt <= 1",
        )?;
        positive("capture_interval", self.capture_interval)?;
        Ok(())
    }

    pub fn line_filter(&self) -> LineFilterConfig {
        LineFilterConfig {
            mu: self.mu,
            bank: ScaleBank {
                sigma1: self.sigma1,
                factor: self.scale_factor,
                count: self.num_scales,
            },
            polarity: self.polarity,
            norm: self.scale_norm,
        }
    }

    pub fn segment(&self) -> SegmentConfig {
        SegmentConfig {
            line: self.line_filter(),
            gating_quantile: self.gating_quantile,
            min_area: self.min_area,
        }
    }

    pub fn stitch(&self) -> StitchConfig {
        StitchConfig {
            tau: self.tau,
            search_radius: self.search_radius,
            min_overlap: self.min_overlap,
            footprint: crate::stitching::Footprint {
                width_mm: self.footprint_width_mm,
                height_mm: self.footprint_height_mm,
            },
        }
    }

    pub fn icp(&self) -> IcpParams {
        IcpParams {
            subsample_ratio: self.icp_subsample_ratio,
            max_correspondence_distance: self.icp_max_distance,
            max_iterations: self.icp_max_iterations,
            rmse_floor: self.icp_rmse_floor,
            rmse_delta: self.icp_rmse_delta,
            max_rotation: self.icp_max_rotation,
            max_translation: self.icp_max_translation,
            motion_epsilon: self.icp_motion_epsilon,
        }
    }

    /// Default robot geometry with the configured adhesion parameters.
    pub fn robot(&self) -> RobotSpec {
        RobotSpec {
            weight: self.robot_weight,
            magnetic_force: self.robot_magnetic_force,
            friction: self.robot_friction,
            com_height: self.robot_com_height,
            wheelbase: self.robot_wheelbase,
            ..RobotSpec::default()
        }
    }

    pub fn sim(&self) -> SimParams {
        SimParams {
            dt: self.sim_dt,
            epsilon: self.ir_epsilon,
            maneuver: ManeuverParams::default(),
            capture_interval: self.capture_interval,
            camera_footprint: [
                self.footprint_width_mm / 1000.0,
                self.footprint_height_mm / 1000.0,
            ],
        }
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Parses config text, applying `overrides` (key, raw value) on top.
pub fn parse_config(
    text: &str,
    overrides: &[(String, String)],
) -> Result<InspectConfig, ConfigError> {
    let mut table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
    for key in table.keys() {
        if !KEYS.contains(&key.as_str()) {
            return Err(ConfigError::UnknownKey(key.clone()));
        }
    }
    for (key, raw) in overrides {
        if !KEYS.contains(&key.as_str()) {
            return Err(ConfigError::UnknownKey(key.clone()));
        }
        table.insert(key.clone(), override_value(raw));
    }
    let cfg: InspectConfig = table
        .try_into()
        .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Raw override text as a TOML value: numbers and booleans as such, anything
/// else as a string.
fn override_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Overrides from `STEEL_INSPECT_*` variables in `vars`.
pub fn env_overrides(vars: impl IntoIterator<Item = (String, String)>) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = vars
        .into_iter()
        .filter_map(|(k, v)| {
            k.strip_prefix(ENV_PREFIX)
                .map(|key| (key.to_ascii_lowercase(), v))
        })
        .collect();
    out.sort();
    out
}

/// Loads `path` (or only defaults when `None`), with the given environment.
pub fn load_config_with_env(
    path: Option<&Path>,
    vars: impl IntoIterator<Item = (String, String)>,
) -> Result<InspectConfig, ConfigError> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| ConfigError::Read {
            path: p.display().to_string(),
            message: e.to_string(),
        })?,
        None => String::new(),
    };
    parse_config(&text, &env_overrides(vars))
}

/// Loads `path` with overrides from the process environment.
pub fn load_config(path: Option<&Path>) -> Result<InspectConfig, ConfigError> {
    load_config_with_env(path, std::env::vars())
}
