//! # detkit
//!
//! A detection-geometry toolkit for anchor-based face detection pipelines.
//!
//! The crate covers everything in such a pipeline that is *not* the neural
//! network itself:
//!
//! - [`geometry`]: exact box algebra — IoU, enclosing boxes and the
//!   distance-IoU regression loss with its analytic gradient.
//! - [`anchors`]: dense multi-level anchor generation over a feature pyramid.
//! - [`assigner`]: max-IoU label assignment and scale-balance analysis of
//!   positives per ground truth.
//! - [`losses`]: focal classification loss, DIoU regression loss through a
//!   delta decoding chain, and a soft-target cross-entropy IoU-prediction
//!   loss, all with analytic gradients checked against finite differences.
//! - [`postprocess`]: score fusion, greedy NMS, box voting and test-time
//!   augmentation coordinate maps plus merging.
//! - [`dataio`]: WIDER FACE ground-truth and prediction file formats and the
//!   square-crop / photometric / flip / resize training augmentation.
//! - [`eval`]: WIDER-style average-precision evaluation with
//!   Easy/Medium/Hard difficulty masks and PR-curve emission.
//! - [`netops`]: a numeric deformable-convolution forward kernel and the
//!   extractor/head shape ledger.
//! - [`traindemo`]: a desk-scale synthetic training loop (linear heads on
//!   handcrafted features) exercising the full assignment → loss → gradient
//!   → optimizer chain end to end.
//! - [`config`]: the shared plain-text key-value config format.
//!
//! All numeric work is in `f64`, deterministic, and free of global state;
//! every function here is safe to call concurrently.

pub mod anchors;
pub mod assigner;
pub mod config;
pub mod dataio;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod grid;
pub mod losses;
pub mod netops;
pub mod postprocess;
pub mod traindemo;

pub use error::{Error, Result};
pub use geometry::BBox;
