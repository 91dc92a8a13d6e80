//! Steel-surface inspection toolkit.
//!
//! The crate covers the processing chain of a magnetic climbing inspection
//! robot, from raw captures to scored defect masks:
//!
//! 1. **Imaging** ([`imaging`]): gray rasters, PGM/PNG I/O, convolution,
//!    median filtering and binary morphology.
//! 2. **Histogram peaks** ([`peaks`]): moving-average smoothing and the
//!    observer/offset/crossover search for dominant histogram peaks, which
//!    yields the global crack-isolation threshold.
//! 3. **Line filter** ([`line_filter`]): multi-scale Hessian eigenvalue
//!    line emphasis that favours thin dark cracks over blobs.
//! 4. **Segmentation** ([`segmentation`]): threshold, line gating,
//!    valley-emphasis Otsu driven region growing and cleanup.
//! 5. **Stitching** ([`stitching`]): odometry-seeded NCC template matching,
//!    exposure compensated blending and image-to-world mapping.
//! 6. **Registration** ([`registration`]): odometry-seeded point-to-point ICP
//!    for ToF point clouds.
//! 7. **Simulation** ([`sim`]): adhesion check, IR/odometry sensor models and
//!    the edge-avoidance controller on rectangular plates.
//! 8. **Metrics** ([`metrics`]): PI / SI / DSC scoring of predicted masks.
//!
//! [`config`] holds the shared run configuration and [`manifest`] the
//! reproducibility manifests written next to every output. [`synth`] builds
//! the synthetic fixtures used by the tests and the demos.

pub mod config;
pub mod error;
pub mod imaging;
pub mod line_filter;
pub mod manifest;
pub mod metrics;
pub mod peaks;
pub mod registration;
pub mod segmentation;
pub mod sim;
pub mod stitching;
pub mod survey;
pub mod synth;

pub use error::{Error, ErrorKind, Result};
pub use imaging::{BinaryMask, GrayImage, Kernel2, RealImage};
