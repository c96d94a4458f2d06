//! Dense multi-level anchor generation over a feature pyramid.
//!
//! Each pyramid level (stride `s`) carries `ceil(W/s) * ceil(H/s)` cells;
//! every cell holds one anchor per (octave scale, aspect ratio) pair,
//! centered at `((i + 0.5) * s, (j + 0.5) * s)`. Anchors are not clipped to
//! the image: assignment and decoding tolerate out-of-bounds coordinates,
//! and clipping would distort IoU near borders.

use crate::geometry::BBox;
use crate::{Error, Result};

/// Mean height/width of face ground-truth boxes in the standard WIDER FACE
/// training annotations, as produced by [`mean_gt_aspect_ratio`] and
/// rounded to one decimal. Shipped as the default so a freshly constructed
/// [`AnchorConfig`] matches the ratio the dataset calls for; override it in
/// config when targeting other data.
pub const DEFAULT_FACE_ASPECT_RATIO: f64 = 1.3;

/// Anchor layout parameters for the whole pyramid.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorConfig {
    /// Pixel stride of each pyramid level, strictly increasing.
    pub strides: Vec<u32>,
    /// Base anchor size as a multiple of the level stride.
    pub base_scale: f64,
    /// Number of octave scales per level.
    pub octave_scales: usize,
    /// Multiplicative step between consecutive octave scales.
    pub octave_step: f64,
    /// Anchor aspect ratios (height/width), all positive.
    pub aspect_ratios: Vec<f64>,
}

impl Default for AnchorConfig {
    /// Six levels at strides 4..128, base scale `2^(4/3)` (lowered to cover
    /// tiny faces), three octave scales at step `2^(1/3)`, single
    /// dataset-derived aspect ratio.
    fn default() -> Self {
        Self {
            strides: vec![4, 8, 16, 32, 64, 128],
            base_scale: 2f64.powf(4.0 / 3.0),
            octave_scales: 3,
            octave_step: 2f64.powf(1.0 / 3.0),
            aspect_ratios: vec![DEFAULT_FACE_ASPECT_RATIO],
        }
    }
}

impl AnchorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.strides.is_empty() {
            return Err(Error::Config("strides: must not be empty".into()));
        }
        if !self.strides.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Config("strides: must be strictly increasing".into()));
        }
        if self.strides.iter().any(|&s| s == 0) {
            return Err(Error::Config("strides: must be positive".into()));
        }
        if self.octave_scales == 0 {
            return Err(Error::Config("octave_scales: must be >= 1".into()));
        }
        if !(self.base_scale > 0.0) {
            return Err(Error::Config("base_scale: must be positive".into()));
        }
        if !(self.octave_step > 0.0) {
            return Err(Error::Config("octave_step: must be positive".into()));
        }
        if self.aspect_ratios.is_empty() || self.aspect_ratios.iter().any(|&r| !(r > 0.0)) {
            return Err(Error::Config("aspect_ratios: must be non-empty and positive".into()));
        }
        Ok(())
    }

    /// Anchors generated at every feature-map cell.
    pub fn anchors_per_cell(&self) -> usize {
        self.octave_scales * self.aspect_ratios.len()
    }
}

/// All anchors of one pyramid level.
///
/// `anchors` is laid out row-major over feature-map cells with the
/// per-cell anchors innermost: index = `(j * width + i) * anchors_per_cell + k`.
#[derive(Debug, Clone)]
pub struct AnchorGrid {
    /// Index of the level within the config's stride list.
    pub level: usize,
    pub stride: u32,
    /// Feature-map cells along x.
    pub width: usize,
    /// Feature-map cells along y.
    pub height: usize,
    pub anchors: Vec<BBox>,
}

/// Anchor side lengths for one level: `base_scale * stride * octave_step^k`
/// for `k` in `0..octave_scales`.
pub fn level_anchor_sizes(cfg: &AnchorConfig, level: usize) -> Result<Vec<f64>> {
    if level >= cfg.strides.len() {
        return Err(Error::Config(format!(
            "level {level} out of range ({} strides)",
            cfg.strides.len()
        )));
    }
    let base = cfg.base_scale * cfg.strides[level] as f64;
    let mut sizes = Vec::with_capacity(cfg.octave_scales);
    let mut s = base;
    for _ in 0..cfg.octave_scales {
        sizes.push(s);
        s *= cfg.octave_step;
    }
    Ok(sizes)
}

fn cells(dim: u32, stride: u32) -> usize {
    dim.div_ceil(stride) as usize
}

/// Generate one [`AnchorGrid`] per configured stride for an image of the
/// given pixel dimensions. Anchor geometry depends only on the dimensions,
/// never on image content.
pub fn generate_anchors(cfg: &AnchorConfig, image_w: u32, image_h: u32) -> Vec<AnchorGrid> {
    assert!(image_w > 0 && image_h > 0, "image dimensions must be positive");
    cfg.strides
        .iter()
        .enumerate()
        .map(|(level, &stride)| {
            let gw = cells(image_w, stride);
            let gh = cells(image_h, stride);
            let sizes = level_anchor_sizes(cfg, level).expect("level index in range");
            let mut anchors = Vec::with_capacity(gw * gh * cfg.anchors_per_cell());
            let s = stride as f64;
            for j in 0..gh {
                let cy = (j as f64 + 0.5) * s;
                for i in 0..gw {
                    let cx = (i as f64 + 0.5) * s;
                    for &size in &sizes {
                        for &ratio in &cfg.aspect_ratios {
                            let sq = ratio.sqrt();
                            let half_w = size / sq / 2.0;
                            let half_h = size * sq / 2.0;
                            anchors.push(BBox {
                                x1: cx - half_w,
                                y1: cy - half_h,
                                x2: cx + half_w,
                                y2: cy + half_h,
                            });
                        }
                    }
                }
            }
            AnchorGrid { level, stride, width: gw, height: gh, anchors }
        })
        .collect()
}

/// Flatten all levels' anchors into one sequence, in level order.
pub fn flatten(grids: &[AnchorGrid]) -> Vec<BBox> {
    grids.iter().flat_map(|g| g.anchors.iter().copied()).collect()
}

/// Arithmetic mean of height/width over ground-truth boxes; the value used
/// as the dataset-derived anchor ratio.
pub fn mean_gt_aspect_ratio(annotations: &[BBox]) -> Result<f64> {
    if annotations.is_empty() {
        return Err(Error::EmptyInput("mean_gt_aspect_ratio needs at least one box"));
    }
    let mut sum = 0.0;
    for b in annotations {
        assert!(b.width() > 0.0 && b.height() > 0.0, "boxes must have positive extent");
        sum += b.height() / b.width();
    }
    Ok(sum / annotations.len() as f64)
}
