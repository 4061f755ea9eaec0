//! Nucleus instance segmentation and epithelial layer analysis for H&E
//! histology tiles.
//!
//! The crate covers the full non-network half of a four-branch
//! segmentation pipeline:
//!
//! * [`raster`] — 2-D raster types and the classic image-processing
//!   primitives (connected components, binary morphology, Sobel filtering,
//!   Otsu thresholding) everything else is built on.
//! * [`hover`] — converts ground-truth instance/class/layer maps into the
//!   per-branch training targets, including the signed horizontal/vertical
//!   centroid-distance maps.
//! * [`losses`] — the eight-term multi-task loss with analytic gradients
//!   with respect to the branch outputs.
//! * [`postproc`] — marker-based watershed instance segmentation, majority
//!   nucleus classification, layer-map cleanup and nucleus/layer fusion.
//! * [`metrics`] — panoptic quality, aggregated Jaccard, detection and
//!   classification F-scores, and pixel-level layer metrics.
//! * [`tiling`] — slide-scale tissue masking and patch selection.
//! * [`synth`] — a deterministic synthetic-scene generator used as a
//!   ground-truth oracle by the test suites.
//!
//! All operations are pure functions of their inputs; values can be shared
//! freely across threads.

pub mod bundle;
pub mod error;
pub mod hover;
pub mod losses;
pub mod metrics;
pub mod postproc;
pub mod raster;
pub mod synth;
pub mod tiling;

pub use error::{Error, Result};
